"""Frame-by-frame tracking: proposal scoring, the template-update state
machine, and the end-to-end pipeline.
"""
import logging
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from . import tensor as T
from .backbone import Backbone, BackboneConfig, Frame, crop_region
from .fusion import FusionParams, fusion_forward, tokenize
from .losses import HeadParams, head_forward
from .modality import FeatureQuad, ModalityParams, cadm_pair, sspm_fuse, sspm_similarity

log = logging.getLogger(__name__)


# ---------------------------------------------------------------- scoring

def hann2d(n):
    """Outer product of 1-D Hann windows sampled at cell centres.

    Built from one half and mirrored so the window is exactly symmetric;
    for even ``n`` the four central cells tie and the lowest index,
    ``(n//2 - 1, n//2 - 1)``, wins an argmax.
    """
    i = np.arange((n + 1) // 2)
    half = 0.5 - 0.5 * np.cos(2 * np.pi * (i + 0.5) / n)
    w = np.concatenate([half, half[: n // 2][::-1]])
    return np.outer(w, w).ravel()


def score_proposals(p_cls, p_loc, window_weight, grid=None):
    """Blend raw confidence ``p_cls * p_loc`` with a Hann motion prior."""
    if not 0.0 <= window_weight <= 1.0:
        raise ValueError("window_weight must lie in [0, 1]")
    raw = np.asarray(p_cls) * np.asarray(p_loc)
    grid = grid or int(round(np.sqrt(raw.size)))
    if grid * grid != raw.size:
        raise ValueError(f"{raw.size} proposals do not form a square grid")
    return (1.0 - window_weight) * raw + window_weight * hann2d(grid)


def select_best(scores, p_cls, p_loc, boxes):
    """Argmax of ``scores`` (first index on ties).

    Returns ``(index, box, confidence)``; the confidence is the unpenalized
    ``p_cls * p_loc`` of the chosen proposal.
    """
    j = int(np.argmax(scores))
    return j, np.asarray(boxes)[j].copy(), float(p_cls[j] * p_loc[j])


# ---------------------------------------------------------------- state machine

class Mode(str, Enum):
    STEADY = "steady"
    TRANSIENT = "transient_steady"
    UNSTABLE = "unstable"


class Action(str, Enum):
    KEEP = "keep"
    REPLACE = "replace_with_current"
    RESTORE = "restore_initial"


@dataclass(frozen=True)
class UpdateConfig:
    M: int = 70
    N: int = 2
    hi: float = 0.9
    lo: float = 0.7

    def __post_init__(self):
        if not 0.0 <= self.lo <= self.hi <= 1.0:
            raise ValueError(f"need 0 <= lo <= hi <= 1, got lo={self.lo} hi={self.hi}")
        if self.M < 1:
            raise ValueError("M must be >= 1")
        if self.N < 0:
            raise ValueError("N must be >= 0")


GTOT_UPDATE = UpdateConfig(M=50, N=2)
DEFAULT_UPDATE = UpdateConfig(M=70, N=2)


@dataclass(frozen=True)
class UpdateState:
    mode: Mode = None             # label of the last classified frame
    steady_run: int = 0
    unstable_acc: int = 0
    active_template: object = "initial"   # "initial" or the frame index it came from


def update_step(st, conf, cfg, frame=None):
    """Advance the template-update state machine by one confidence value.

    * conf > hi: the high run grows; after M in a row the current frame
      becomes the template.
    * lo <= conf <= hi: transient band; the high run is broken, the template
      stays, the low count is left alone.
    * conf < lo: the low count (since the last template change) grows; at N
      (N = 0 acts like 1) the initial template is restored.
    Counters reset on every template change.
    """
    if not 0.0 <= conf <= 1.0:
        raise ValueError(f"confidence {conf} outside [0, 1]")
    if conf > cfg.hi:
        run = st.steady_run + 1
        if run >= cfg.M:
            return UpdateState(Mode.STEADY, 0, 0, frame), Action.REPLACE
        return replace(st, mode=Mode.STEADY, steady_run=run), Action.KEEP
    if conf >= cfg.lo:
        return replace(st, mode=Mode.TRANSIENT, steady_run=0), Action.KEEP
    acc = st.unstable_acc + 1
    if acc >= max(cfg.N, 1):
        return UpdateState(Mode.UNSTABLE, 0, 0, "initial"), Action.RESTORE
    return replace(st, mode=Mode.UNSTABLE, steady_run=0, unstable_acc=acc), Action.KEEP


def replay(confs, cfg):
    """Action sequence obtained by feeding ``confs`` through ``update_step``."""
    st = UpdateState()
    actions = []
    for i, c in enumerate(confs):
        st, a = update_step(st, c, cfg, frame=i)
        actions.append(a)
    return actions


# ---------------------------------------------------------------- pipeline

@dataclass(frozen=True)
class TrackerConfig:
    template_scale: float = 2.0
    search_scale: float = 4.0
    window_weight: float = 0.45
    size_lr: float = 0.3
    min_size: float = 4.0


@dataclass
class Model:
    """All network parameters, drawn from one seed."""
    backbone: Backbone
    modality: ModalityParams
    fusion: FusionParams
    head: HeadParams

    @classmethod
    def build(cls, backbone_cfg=None, d_model=64, heads=4, num_layers=4, reduction=4, use_pos=True,
              search_scale=4.0):
        bcfg = backbone_cfg or BackboneConfig()
        rng = T.Rng(bcfg.seed).spawn(1)
        return cls(Backbone(bcfg),
                   ModalityParams.init(rng, bcfg.channels, reduction),
                   FusionParams.init(rng, bcfg.channels, d_model, heads, num_layers, use_pos=use_pos),
                   HeadParams.init(rng, d_model, size_prior=1.0 / search_scale))


@dataclass
class FrameRecord:
    box: list          # pixel x, y, w, h
    confidence: float
    state: dict
    action: str
    proposals: int


@dataclass
class TrackResult:
    records: list = field(default_factory=list)

    @property
    def boxes(self):
        return np.array([r.box for r in self.records]).reshape(-1, 4)

    @property
    def confidences(self):
        return [r.confidence for r in self.records]

    @property
    def actions(self):
        return [r.action for r in self.records]

    def side_log(self):
        return [{"frame": i, "confidence": r.confidence, "action": r.action,
                 "proposals": r.proposals, **r.state} for i, r in enumerate(self.records)]


def _state_dict(st):
    return {"mode": st.mode.value if st.mode else None, "steady_run": st.steady_run,
            "unstable_acc": st.unstable_acc, "active_template": st.active_template}


def _clamp_box(box, frame_w, frame_h, min_size):
    x, y, w, h = box
    w = float(np.clip(w, min_size, frame_w))
    h = float(np.clip(h, min_size, frame_h))
    cx = float(np.clip(x + box[2] / 2, 0, frame_w))
    cy = float(np.clip(y + box[3] / 2, 0, frame_h))
    out = [cx - w / 2, cy - h / 2, w, h]
    if not np.allclose(out, box):
        log.warning("box %s clamped to frame %dx%d", np.round(box, 2).tolist(), frame_w, frame_h)
    return out


class Tracker:
    def __init__(self, model, update_cfg=DEFAULT_UPDATE, cfg=TrackerConfig()):
        self.model = model
        self.update_cfg = update_cfg
        self.cfg = cfg
        bc = model.backbone.cfg
        self.tz, self.tx = bc.template_size, bc.search_size

    def _template(self, frame, box):
        rgb = crop_region(frame.rgb, box, self.cfg.template_scale, self.tz).patch
        th = crop_region(frame.thermal, box, self.cfg.template_scale, self.tz).patch
        f_r, f_t = self.model.backbone.extract(rgb, th)
        # template path only depends on the template pair, so it is cached
        rz, tz = cadm_pair(f_r, f_t, self.model.modality.cadm_z)
        return rz, tz

    def init(self, frame, box):
        self.box = [float(v) for v in box]
        self.initial = self._template(frame, self.box)
        self.current = self.initial
        self.state = UpdateState()

    def predict(self, frame):
        """Run the network on ``frame``; returns (box_px, confidence, proposals)."""
        m = self.model
        rgb_c = crop_region(frame.rgb, self.box, self.cfg.search_scale, self.tx)
        th_c = crop_region(frame.thermal, self.box, self.cfg.search_scale, self.tx)
        f_r, f_t = m.backbone.extract(rgb_c.patch, th_c.patch)
        rx, tx = cadm_pair(f_r, f_t, m.modality.cadm_x)
        rz, tz = self.current
        refined = FeatureQuad(rz, tz, rx, tx)
        s_r = sspm_similarity(rz, rx, m.modality.sspm, "R")
        s_t = sspm_similarity(tz, tx, m.modality.sspm, "T")
        fz, fx = sspm_fuse(refined, s_r, s_t)
        fp = m.fusion
        xz = tokenize(fz, *fp.proj_z, use_pos=fp.use_pos)
        xx = tokenize(fx, *fp.proj_x, use_pos=fp.use_pos)
        ps = head_forward(fusion_forward(xz, xx, fp), m.head)
        p_cls, p_loc = ps.p_cls, ps.p_loc
        scores = score_proposals(p_cls, p_loc, self.cfg.window_weight)
        _, nb, conf = select_best(scores, p_cls, p_loc, ps.boxes)

        side = rgb_c.side
        cx = rgb_c.x0 + nb[0] * side
        cy = rgb_c.y0 + nb[1] * side
        lr = self.cfg.size_lr
        w = (1 - lr) * self.box[2] + lr * nb[2] * side
        h = (1 - lr) * self.box[3] + lr * nb[3] * side
        W, H = frame.size
        box = _clamp_box([cx - w / 2, cy - h / 2, w, h], W, H, self.cfg.min_size)
        return box, conf, len(ps)

    def update(self, frame):
        box, conf, n = self.predict(frame)
        self.box = box
        self.state, action = update_step(self.state, conf, self.update_cfg, frame=frame.index)
        if action is Action.REPLACE:
            self.current = self._template(frame, box)
        elif action is Action.RESTORE:
            self.current = self.initial
        return box, conf, action, n


def track_sequence(frames, init_box, model, update_cfg=DEFAULT_UPDATE, cfg=TrackerConfig()):
    """Track through ``frames`` (iterable of :class:`Frame`) from ``init_box``."""
    tracker = Tracker(model, update_cfg, cfg)
    result = TrackResult()
    for i, frame in enumerate(frames):
        if i == 0:
            tracker.init(frame, init_box)
            result.records.append(FrameRecord(list(map(float, init_box)), 1.0,
                                              _state_dict(tracker.state), Action.KEEP.value, 0))
            continue
        box, conf, action, n = tracker.update(frame)
        result.records.append(FrameRecord(box, conf, _state_dict(tracker.state), action.value, n))
    return result
