"""Self-verification suites behind ``mtnetkit gradcheck`` and ``statecheck``."""
import itertools
from dataclasses import dataclass, field

import numpy as np

from . import losses as L
from .tracker import Action, UpdateConfig, replay

# ---------------------------------------------------------------- gradients

FD_STEP = 1e-6
GRAD_TOL = 1e-6
_MARGIN = 1e-3  # keeps random instances away from kinks and clamps


def _edges(b):
    cx, cy, w, h = b
    return np.array([cx - w / 2, cx + w / 2, cy - h / 2, cy + h / 2])


def _smooth_box(rng, gt):
    """A predicted box whose every piecewise-linear switch is >= _MARGIN away."""
    ge = _edges(gt)
    while True:
        b = gt + rng.uniform(-0.08, 0.08, 4)
        b[2:] = np.clip(b[2:], 0.05, None)
        e = _edges(b)
        iw = min(e[1], ge[1]) - max(e[0], ge[0])
        ih = min(e[3], ge[3]) - max(e[2], ge[2])
        if (np.all(np.abs(b - gt) > _MARGIN) and np.all(np.abs(e - ge) > _MARGIN)
                and abs(iw) > _MARGIN and abs(ih) > _MARGIN):
            return b


def random_instance(rng, n=16):
    gt = np.r_[rng.uniform(0.3, 0.7, 2), rng.uniform(0.1, 0.4, 2)]
    y = (rng.uniform(size=n) < 0.4).astype(np.float64)
    y[rng.integers(n)] = 1.0
    return {
        "p": rng.uniform(0.05, 0.95, n),
        "y": y,
        "ious": rng.uniform(0.0, 1.0, n),
        "boxes": np.array([_smooth_box(rng, gt) for _ in range(n)]),
        "gt": gt,
        "p_loc": rng.uniform(0.05, 0.95, n),
        "loc_targets": rng.uniform(0.0, 1.0, n),
    }


def central_diff(f, x, h=FD_STEP):
    x = np.array(x, dtype=np.float64)
    g = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        orig = x[idx]
        x[idx] = orig + h
        fp = f(x)
        x[idx] = orig - h
        fm = f(x)
        x[idx] = orig
        g[idx] = (fp - fm) / (2 * h)
    return g


def rel_error(a, b):
    """``||a - b|| / max(||a||, ||b||)`` (0 when both vanish)."""
    den = max(np.linalg.norm(a), np.linalg.norm(b))
    return 0.0 if den == 0 else float(np.linalg.norm(a - b) / den)


def numeric_gradients(inst, cfg=L.LossConfig(), h=FD_STEP):
    return L.Gradients(
        central_diff(lambda p: L.cls_loss(p, inst["y"], inst["ious"]), inst["p"], h),
        central_diff(lambda q: L.loc_loss(q, inst["loc_targets"]), inst["p_loc"], h),
        central_diff(lambda b: L.reg_loss(b, inst["y"], inst["p"], inst["gt"], cfg)[0], inst["boxes"], h),
    )


@dataclass
class GradReport:
    trials: int
    seed: int
    max_rel_err: dict = field(default_factory=dict)
    tol: float = GRAD_TOL

    @property
    def passed(self):
        return all(v < self.tol for v in self.max_rel_err.values())

    def lines(self):
        out = [f"gradcheck seed={self.seed} trials={self.trials} h={FD_STEP:g} tol={self.tol:g}"]
        for name, v in self.max_rel_err.items():
            out.append(f"  {name:<4} max rel err {v:.3e}  {'ok' if v < self.tol else 'FAIL'}")
        out.append("PASS" if self.passed else "FAIL")
        return out


def gradcheck(seed=0, trials=100, grad_fn=L.loss_gradients, cfg=L.LossConfig()):
    """Analytic loss gradients vs central differences on random instances."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = np.random.default_rng(seed)
    worst = {"cls": 0.0, "reg": 0.0, "loc": 0.0}
    for _ in range(trials):
        inst = random_instance(rng)
        an = grad_fn(inst["p"], inst["y"], inst["ious"], inst["boxes"], inst["gt"],
                     inst["p_loc"], inst["loc_targets"], cfg)
        nu = numeric_gradients(inst, cfg)
        worst["cls"] = max(worst["cls"], rel_error(an.p, nu.p))
        worst["reg"] = max(worst["reg"], rel_error(an.boxes, nu.boxes))
        worst["loc"] = max(worst["loc"], rel_error(an.p_loc, nu.p_loc))
    return GradReport(trials, seed, worst)


# ---------------------------------------------------------------- state machine

CONF_ALPHABET = (0.6, 0.8, 0.95)
TRACE_LEN = 8
MN_GRID = tuple(itertools.product((1, 2, 3), (1, 2, 3)))


def reference_actions(confs, M, N, hi=0.9, lo=0.7):
    """Template decisions recomputed from the whole history at every frame.

    At frame t only the frames after the most recent template change count:
    the template is replaced when the last M of them (ending at t) are all
    above ``hi``; it is restored when at least N of them (N = 0 treated as 1)
    are below ``lo`` and frame t is one of them.
    """
    actions = []
    since = 0  # first frame after the last template change
    for t, c in enumerate(confs):
        window = confs[since:t + 1]
        run = 0
        for v in reversed(window):
            if v <= hi:
                break
            run += 1
        lows = sum(1 for v in window if v < lo)
        if c > hi and run == M:
            actions.append(Action.REPLACE)
            since = t + 1
        elif c < lo and lows >= max(N, 1):
            actions.append(Action.RESTORE)
            since = t + 1
        else:
            actions.append(Action.KEEP)
    return actions


@dataclass
class StateReport:
    total: int
    mismatches: int
    counterexample: tuple = None  # (trace, M, N, expected, got)

    @property
    def passed(self):
        return self.mismatches == 0

    def lines(self):
        out = [f"statecheck traces={self.total} mismatches={self.mismatches}"]
        if self.counterexample:
            trace, M, N, exp, got = self.counterexample
            out.append(f"  counterexample M={M} N={N} confs={list(trace)}")
            out.append(f"    reference: {[a.value for a in exp]}")
            out.append(f"    update_step: {[a.value for a in got]}")
        out.append("PASS" if self.passed else "FAIL")
        return out


def statecheck(reference=reference_actions, impl=None, alphabet=CONF_ALPHABET,
               length=TRACE_LEN, grid=MN_GRID):
    """Exhaustive equivalence of ``update_step`` with ``reference`` over all
    traces of ``length`` and every (M, N) in ``grid``.

    The reported counterexample is the shortest failing prefix found.
    """
    impl = impl or (lambda confs, M, N: replay(confs, UpdateConfig(M=M, N=N)))
    total = mismatches = 0
    best = None
    for M, N in grid:
        for trace in itertools.product(alphabet, repeat=length):
            total += 1
            exp = reference(list(trace), M, N)
            got = impl(list(trace), M, N)
            if exp != got:
                mismatches += 1
                k = next(i for i, (a, b) in enumerate(zip(exp, got)) if a != b) + 1
                if best is None or k < len(best[0]):
                    best = (trace[:k], M, N, exp[:k], got[:k])
    return StateReport(total, mismatches, best)
