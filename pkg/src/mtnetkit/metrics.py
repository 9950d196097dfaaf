"""Precision / success / normalized-precision evaluation of tracking results."""
from dataclasses import dataclass, field

import numpy as np

from .losses import iou

ATTRIBUTES = ("NO", "PO", "HO", "LI", "LR", "TC", "DEF", "FM", "SV", "MB", "CM", "BC")

PRECISION_THRESHOLDS = np.arange(51, dtype=np.float64)        # 0..50 px
SUCCESS_THRESHOLDS = np.arange(21, dtype=np.float64) / 20      # 0, 0.05, .., 1
NORM_THRESHOLDS = np.arange(101, dtype=np.float64) / 200       # 0, 0.005, .., 0.5


def centers(boxes):
    b = np.asarray(boxes, dtype=np.float64)
    return b[:, :2] + b[:, 2:] / 2


def center_errors(gt, pred):
    return np.linalg.norm(centers(gt) - centers(pred), axis=1)


def normalized_errors(gt, pred):
    gt = np.asarray(gt, dtype=np.float64)
    d = (centers(gt) - centers(pred)) / gt[:, 2:]
    return np.sqrt((d ** 2).sum(axis=1))


def _nonempty(x, what):
    x = np.asarray(x, dtype=np.float64)
    if x.size == 0:
        raise ValueError(f"{what}: empty sequence")
    return x


def precision_rate(errors, tau=20.0):
    """Fraction of frames whose centre error is at most ``tau`` pixels."""
    if tau <= 0:
        raise ValueError("tau must be positive")
    e = _nonempty(errors, "precision_rate")
    return float(np.mean(e <= tau))


def precision_curve(errors, thresholds=PRECISION_THRESHOLDS):
    e = _nonempty(errors, "precision_curve")
    return (e[None, :] <= np.asarray(thresholds)[:, None]).mean(axis=1)


def success_curve(ious, thresholds=SUCCESS_THRESHOLDS):
    o = _nonempty(ious, "success_curve")
    return (o[None, :] > np.asarray(thresholds)[:, None]).mean(axis=1)


def success_rate(ious):
    """Area under the success plot: mean over 21 IoU thresholds of P(IoU > t)."""
    return float(success_curve(ious).mean())


def normalized_precision_curve(norm_errors, thresholds=NORM_THRESHOLDS):
    e = _nonempty(norm_errors, "normalized_precision")
    return (e[None, :] <= np.asarray(thresholds)[:, None]).mean(axis=1)


def normalized_precision(gt_boxes, pred_boxes):
    """Area under the normalized-precision curve over thresholds [0, 0.5].

    Frames whose ground truth has zero width or height are skipped.
    """
    gt = np.asarray(gt_boxes, dtype=np.float64).reshape(-1, 4)
    pred = np.asarray(pred_boxes, dtype=np.float64).reshape(-1, 4)
    keep = (gt[:, 2] > 0) & (gt[:, 3] > 0)
    return float(normalized_precision_curve(normalized_errors(gt[keep], pred[keep])).mean())


@dataclass
class SequenceEval:
    name: str
    errors: np.ndarray
    norm_errors: np.ndarray
    ious: np.ndarray
    attributes: tuple = field(default_factory=tuple)

    @classmethod
    def from_boxes(cls, name, gt, pred, attributes=()):
        gt = np.asarray(gt, dtype=np.float64).reshape(-1, 4)
        pred = np.asarray(pred, dtype=np.float64).reshape(-1, 4)
        if len(gt) != len(pred):
            raise ValueError(f"{name}: {len(gt)} ground-truth rows vs {len(pred)} result rows")
        # all-zero gt rows mark frames without an annotated target
        valid = np.any(gt != 0, axis=1)
        gt, pred = gt[valid], pred[valid]
        norm_ok = (gt[:, 2] > 0) & (gt[:, 3] > 0)
        return cls(name, center_errors(gt, pred), normalized_errors(gt[norm_ok], pred[norm_ok]),
                   iou(gt, pred), tuple(attributes))

    def scores(self, tau=20.0):
        return {"PR": precision_rate(self.errors, tau), "SR": success_rate(self.ious),
                "NPR": float(normalized_precision_curve(self.norm_errors).mean())}

    def curves(self):
        return {"precision": precision_curve(self.errors),
                "success": success_curve(self.ious),
                "norm_precision": normalized_precision_curve(self.norm_errors)}


def attribute_aggregate(evals, attribute, tau=20.0):
    """(PR, SR) over the concatenated frames of every sequence tagged with
    ``attribute``; ``None`` when no sequence carries it."""
    if attribute not in ATTRIBUTES:
        raise ValueError(f"unknown attribute {attribute!r}; expected one of {ATTRIBUTES}")
    chosen = [e for e in evals if attribute in e.attributes]
    if not chosen:
        return None
    errors = np.concatenate([e.errors for e in chosen])
    ious = np.concatenate([e.ious for e in chosen])
    return precision_rate(errors, tau), success_rate(ious)


def read_attributes(path):
    """Sidecar lines ``sequence_name ATTR1,ATTR2,...`` -> {name: (attrs...)}."""
    out = {}
    with open(path) as f:
        for lineno, line in enumerate(f, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split(None, 1)
            attrs = tuple(a.strip() for a in parts[1].split(",") if a.strip()) if len(parts) > 1 else ()
            for a in attrs:
                if a not in ATTRIBUTES:
                    raise ValueError(f"{path}:{lineno}: unknown attribute {a!r}")
            out[parts[0]] = attrs
    return out
