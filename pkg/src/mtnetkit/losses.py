"""Trident prediction head, box geometry, and the training losses.

Boxes inside the loss math are normalized ``(cx, cy, w, h)`` rows. The
classification IoU weight and the regression confidence weight enter the
losses as constants, so gradients do not flow through them.
"""
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import tensor as T

EPS = 1e-12
_ASPECT = 4.0 / np.pi ** 2


@dataclass(frozen=True)
class LossConfig:
    lambda_l1: float = 5.0
    lambda_ciou: float = 2.0
    n_cls: float = 8.0
    n_reg: float = 5.0
    n_loc: float = 1.0

    def __post_init__(self):
        for name in ("lambda_l1", "lambda_ciou", "n_cls", "n_reg", "n_loc"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")


# ---------------------------------------------------------------- boxes

def xywh_to_cxcywh(b):
    b = np.asarray(b, dtype=np.float64)
    return np.concatenate([b[..., :2] + b[..., 2:] / 2, b[..., 2:]], axis=-1)


def cxcywh_to_xywh(b):
    b = np.asarray(b, dtype=np.float64)
    return np.concatenate([b[..., :2] - b[..., 2:] / 2, b[..., 2:]], axis=-1)


def iou(a, b):
    """IoU of top-left ``(x, y, w, h)`` boxes; broadcasts over leading axes."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if np.any(a[..., 2:] < 0) or np.any(b[..., 2:] < 0):
        raise ValueError("negative box extent")
    ax2, ay2 = a[..., 0] + a[..., 2], a[..., 1] + a[..., 3]
    bx2, by2 = b[..., 0] + b[..., 2], b[..., 1] + b[..., 3]
    iw = np.minimum(ax2, bx2) - np.maximum(a[..., 0], b[..., 0])
    ih = np.minimum(ay2, by2) - np.maximum(a[..., 1], b[..., 1])
    inter = np.clip(iw, 0, None) * np.clip(ih, 0, None)
    # areas from the same corner differences as the overlap, so iou(a, a) == 1
    union = (ax2 - a[..., 0]) * (ay2 - a[..., 1]) + (bx2 - b[..., 0]) * (by2 - b[..., 1]) - inter
    safe = np.where(union > 0, union, 1.0)
    return np.where(union > 0, inter / safe, 0.0)


def iou_cxcywh(a, b):
    return iou(cxcywh_to_xywh(a), cxcywh_to_xywh(b))


class _Ciou(NamedTuple):
    loss: np.ndarray
    grad: np.ndarray


def _ciou(pred, gt, need_grad):
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    pred, gt = np.broadcast_arrays(pred, gt)
    cx, cy, w, h = np.moveaxis(pred, -1, 0)
    gcx, gcy, gw, gh = np.moveaxis(gt, -1, 0)
    x1, x2, y1, y2 = cx - w / 2, cx + w / 2, cy - h / 2, cy + h / 2
    gx1, gx2, gy1, gy2 = gcx - gw / 2, gcx + gw / 2, gcy - gh / 2, gcy + gh / 2

    iw_raw = np.minimum(x2, gx2) - np.maximum(x1, gx1)
    ih_raw = np.minimum(y2, gy2) - np.maximum(y1, gy1)
    iw, ih = np.clip(iw_raw, 0, None), np.clip(ih_raw, 0, None)
    inter = iw * ih
    union = (x2 - x1) * (y2 - y1) + (gx2 - gx1) * (gy2 - gy1) - inter
    pos_u = union > 0
    safe_u = np.where(pos_u, union, 1.0)
    iou_v = np.where(pos_u, inter / safe_u, 0.0)

    cw = np.maximum(x2, gx2) - np.minimum(x1, gx1)
    ch = np.maximum(y2, gy2) - np.minimum(y1, gy1)
    c2 = cw ** 2 + ch ** 2
    safe_c2 = np.where(c2 > 0, c2, 1.0)
    rho2 = (cx - gcx) ** 2 + (cy - gcy) ** 2
    dist = np.where(c2 > 0, rho2 / safe_c2, 0.0)

    # atan2(w, h) == atan(w/h) for h > 0 and is 0 at w = h = 0
    dang = np.arctan2(gw, gh) - np.arctan2(w, h)
    v = _ASPECT * dang ** 2
    den = (1.0 - iou_v) + v
    safe_den = np.where(den > 0, den, 1.0)
    av = np.where(den > 0, v * v / safe_den, 0.0)  # alpha * v

    loss = 1.0 - iou_v + dist + av
    if not need_grad:
        return _Ciou(loss, None)

    # intersection extents w.r.t. pred corners (subgradient 0 at ties)
    on_x = iw_raw > 0
    on_y = ih_raw > 0
    diw_dx2 = np.where(on_x & (x2 < gx2), 1.0, 0.0)
    diw_dx1 = np.where(on_x & (x1 > gx1), -1.0, 0.0)
    dih_dy2 = np.where(on_y & (y2 < gy2), 1.0, 0.0)
    dih_dy1 = np.where(on_y & (y1 > gy1), -1.0, 0.0)
    # d/dcx = d/dx1 + d/dx2 ; d/dw = (d/dx2 - d/dx1) / 2
    d_inter = np.stack([
        ih * (diw_dx1 + diw_dx2),
        iw * (dih_dy1 + dih_dy2),
        ih * (diw_dx2 - diw_dx1) / 2,
        iw * (dih_dy2 - dih_dy1) / 2,
    ])
    d_area = np.stack([np.zeros_like(w), np.zeros_like(w), h, w])
    d_union = d_area - d_inter
    d_iou = np.where(pos_u, (d_inter * safe_u - inter * d_union) / safe_u ** 2, 0.0)

    dcw_dx2 = np.where(x2 > gx2, 1.0, 0.0)
    dcw_dx1 = np.where(x1 < gx1, -1.0, 0.0)
    dch_dy2 = np.where(y2 > gy2, 1.0, 0.0)
    dch_dy1 = np.where(y1 < gy1, -1.0, 0.0)
    d_c2 = np.stack([
        2 * cw * (dcw_dx1 + dcw_dx2),
        2 * ch * (dch_dy1 + dch_dy2),
        cw * (dcw_dx2 - dcw_dx1),
        ch * (dch_dy2 - dch_dy1),
    ])
    d_rho2 = np.stack([2 * (cx - gcx), 2 * (cy - gcy), np.zeros_like(w), np.zeros_like(w)])
    d_dist = np.where(c2 > 0, (d_rho2 * safe_c2 - rho2 * d_c2) / safe_c2 ** 2, 0.0)

    r2 = w ** 2 + h ** 2
    safe_r2 = np.where(r2 > 0, r2, 1.0)
    # d atan2(w, h) / dw = h / r2, / dh = -w / r2
    d_ang = np.stack([np.zeros_like(w), np.zeros_like(w),
                      np.where(r2 > 0, h / safe_r2, 0.0), np.where(r2 > 0, -w / safe_r2, 0.0)])
    d_v = -2.0 * _ASPECT * dang * d_ang
    # alpha*v = v^2 / (1 - IoU + v)
    d_av = np.where(den > 0,
                    (v * (2 * (1.0 - iou_v) + v) * d_v + v * v * d_iou) / safe_den ** 2, 0.0)

    grad = -d_iou + d_dist + d_av
    return _Ciou(loss, np.moveaxis(grad, 0, -1))


def ciou_loss(pred, gt):
    """Complete-IoU loss ``1 - IoU + rho^2/c^2 + alpha*v`` on cxcywh boxes."""
    return _ciou(pred, gt, False).loss


def ciou_loss_grad(pred, gt):
    """Loss and its gradient w.r.t. the predicted ``(cx, cy, w, h)``."""
    r = _ciou(pred, gt, True)
    return r.loss, r.grad


# ---------------------------------------------------------------- losses

def _clamp(p):
    return np.clip(np.asarray(p, dtype=np.float64), EPS, 1.0 - EPS)


def cls_loss(p, y, ious):
    """IoU-weighted binary cross-entropy over foreground probabilities."""
    p = _clamp(p)
    y = np.asarray(y, dtype=np.float64)
    ious = np.asarray(ious, dtype=np.float64)
    return float(-np.sum(y * np.log(p) * ious + (1 - y) * np.log(1 - p)))


def bce(p, y):
    p = _clamp(p)
    y = np.asarray(y, dtype=np.float64)
    return float(-np.sum(y * np.log(p) + (1 - y) * np.log(1 - p)))


def reg_loss(boxes, y, p, gt, cfg=LossConfig()):
    """Regression loss over positives; returns ``(loss, has_positives)``.

    Each positive contributes ``lambda_l1 * |b - gt|_1 + lambda_ciou * CIoU * p``.
    """
    y = np.asarray(y, dtype=bool)
    if not y.any():
        return 0.0, False
    b = np.asarray(boxes, dtype=np.float64)[y]
    gt = np.broadcast_to(np.asarray(gt, dtype=np.float64), b.shape)
    w = np.asarray(p, dtype=np.float64)[y]
    l1 = np.abs(b - gt).sum(axis=1)
    ci = ciou_loss(b, gt)
    return float(np.sum(cfg.lambda_l1 * l1 + cfg.lambda_ciou * ci * w)), True


def loc_loss(p_loc, targets):
    """Soft-target BCE of the localization branch against IoU targets."""
    return bce(p_loc, targets)


def total_loss(cfg, l_cls, l_reg, l_loc):
    return cfg.n_cls * l_cls + cfg.n_reg * l_reg + cfg.n_loc * l_loc


class Gradients(NamedTuple):
    p: np.ndarray      # dL_cls/dp
    p_loc: np.ndarray  # dL_loc/dp_loc
    boxes: np.ndarray  # dL_reg/dboxes


def cls_loss_grad(p, y, ious):
    p = np.asarray(p, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    ious = np.asarray(ious, dtype=np.float64)
    inside = (p > EPS) & (p < 1 - EPS)
    g = -y * ious / p + (1 - y) / (1 - p)
    return np.where(inside, g, 0.0)


def loc_loss_grad(p_loc, targets):
    p = np.asarray(p_loc, dtype=np.float64)
    o = np.asarray(targets, dtype=np.float64)
    inside = (p > EPS) & (p < 1 - EPS)
    return np.where(inside, (p - o) / (p * (1 - p)), 0.0)


def reg_loss_grad(boxes, y, p, gt, cfg=LossConfig()):
    b = np.asarray(boxes, dtype=np.float64)
    yb = np.asarray(y, dtype=bool)
    grad = np.zeros_like(b)
    if not yb.any():
        return grad
    gtb = np.broadcast_to(np.asarray(gt, dtype=np.float64), b[yb].shape)
    _, gci = ciou_loss_grad(b[yb], gtb)
    w = np.asarray(p, dtype=np.float64)[yb]
    grad[yb] = cfg.lambda_l1 * np.sign(b[yb] - gtb) + cfg.lambda_ciou * w[:, None] * gci
    return grad


def loss_gradients(p, y, ious, boxes, gt, p_loc, loc_targets, cfg=LossConfig()):
    return Gradients(cls_loss_grad(p, y, ious),
                     loc_loss_grad(p_loc, loc_targets),
                     reg_loss_grad(boxes, y, p, gt, cfg))


# ---------------------------------------------------------------- targets

class TargetAssignment(NamedTuple):
    labels: np.ndarray  # [grid*grid] of {0, 1}
    gt: np.ndarray      # normalized cxcywh


def cell_centers(grid=32):
    c = (np.arange(grid) + 0.5) / grid
    cy, cx = np.meshgrid(c, c, indexing="ij")
    return cx.ravel(), cy.ravel()


def assign_targets(gt, grid=32):
    """Tokens whose cell centre lies inside ``gt`` are positive.

    If no centre falls inside, the token nearest the gt centre (lowest index
    on ties) is the single positive.
    """
    gt = np.asarray(gt, dtype=np.float64)
    cx, cy, w, h = gt
    if w <= 0 or h <= 0:
        raise ValueError(f"degenerate gt box {gt}")
    if not (0.0 <= cx <= 1.0 and 0.0 <= cy <= 1.0):
        raise ValueError(f"gt centre outside the search window: {gt}")
    px, py = cell_centers(grid)
    inside = (np.abs(px - cx) <= w / 2) & (np.abs(py - cy) <= h / 2)
    labels = inside.astype(np.float64)
    if not inside.any():
        labels[np.argmin((px - cx) ** 2 + (py - cy) ** 2)] = 1.0
    return TargetAssignment(labels, gt)


# ---------------------------------------------------------------- head

class ProposalSet(NamedTuple):
    cls_logits: np.ndarray  # [L,2]; column 1 is foreground
    boxes: np.ndarray       # [L,4] normalized cxcywh
    loc_logits: np.ndarray  # [L,1]

    @property
    def p_cls(self):
        return T.softmax(self.cls_logits)[:, 1]

    @property
    def p_loc(self):
        return T.sigmoid(self.loc_logits[:, 0])

    def __len__(self):
        return self.cls_logits.shape[0]


def _mlp_params(rng, d, out, std):
    return [(rng.normal((d, d), std), np.zeros(d)),
            (rng.normal((d, d), std), np.zeros(d)),
            (rng.normal((d, out), std), np.zeros(out))]


@dataclass
class HeadParams:
    cls: list
    reg: list
    loc: list

    @classmethod
    def init(cls, rng, d=64, std=0.02, size_prior=0.25):
        """Gaussian weights; the box branch's last bias starts at the size
        prior (a target spans ``size_prior`` of the search window) so an
        untrained head predicts a centred box of the previous size."""
        reg = _mlp_params(rng, d, 4, std)
        logit = np.log(size_prior / (1 - size_prior))
        reg[-1] = (reg[-1][0], np.array([0.0, 0.0, logit, logit]))
        return cls(_mlp_params(rng, d, 2, std), reg, _mlp_params(rng, d, 1, std))

    @classmethod
    def zeros(cls, d=64):
        z = lambda out: [(np.zeros((d, d)), np.zeros(d)), (np.zeros((d, d)), np.zeros(d)),
                         (np.zeros((d, out)), np.zeros(out))]
        return cls(z(2), z(4), z(1))


def _mlp(x, layers):
    for i, (w, b) in enumerate(layers):
        x = T.linear(x, w, b)
        if i < len(layers) - 1:
            x = T.relu(x)
    return x


def head_forward(fused, params):
    """Per-token classification, box regression, and localization outputs."""
    return ProposalSet(_mlp(fused, params.cls),
                       T.sigmoid(_mlp(fused, params.reg)),
                       _mlp(fused, params.loc))
