"""Dense double-precision array operations used throughout the toolkit.

Tensors are plain ``numpy.ndarray`` objects of dtype float64, row-major.
Every operation here returns a fresh array and refuses to produce NaN or
Inf: a non-finite result raises :class:`NonFiniteError`.
"""
import numpy as np

from . import kernels


class ShapeError(ValueError):
    pass


class NonFiniteError(FloatingPointError):
    pass


def _finite(out, op):
    if not np.all(np.isfinite(out)):
        raise NonFiniteError(f"{op} produced non-finite values")
    return out


def as_tensor(x):
    x = np.array(x, dtype=np.float64, order="C")
    return _finite(x, "as_tensor")


def elementwise(a, b, op):
    """``add`` or ``mul`` of two tensors.

    Shapes must match, except that a single-channel map ``[1,H,W]`` may be
    broadcast over a ``[C,H,W]`` map.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        ok = (a.ndim == 3 and b.ndim == 3 and b.shape[0] == 1
              and a.shape[1:] == b.shape[1:])
        if not ok:
            raise ShapeError(f"cannot combine shapes {a.shape} and {b.shape}")
    if op not in ("add", "mul"):
        raise ValueError(f"unknown elementwise op {op!r}")
    with np.errstate(invalid="ignore", over="ignore"):  # _finite reports it
        out = a + b if op == "add" else a * b
    return _finite(out, op)


def add(a, b):
    return elementwise(a, b, "add")


def mul(a, b):
    return elementwise(a, b, "mul")


def matmul(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul dims mismatch: {a.shape} x {b.shape}")
    return _finite(kernels.matmul(a, b), "matmul")


def attention(q, k, v, scale, return_probs=False):
    """Single-head scaled dot-product attention; ``(out, probs-or-None)``."""
    if q.shape[1] != k.shape[1] or k.shape[0] != v.shape[0]:
        raise ShapeError(f"attention shapes q{q.shape} k{k.shape} v{v.shape}")
    out, probs = kernels.attention(q, k, v, scale, return_probs)
    return _finite(out, "attention"), probs


def conv2d(x, k, padding=0, stride=1):
    """Cross-correlation (no kernel flip) of ``x[Ci,H,W]`` with ``k[Co,Ci,kh,kw]``."""
    x = np.asarray(x, dtype=np.float64)
    k = np.asarray(k, dtype=np.float64)
    if x.ndim != 3 or k.ndim != 4 or k.shape[1] != x.shape[0]:
        raise ShapeError(f"conv2d shapes mismatch: x{x.shape} k{k.shape}")
    if stride < 1 or padding < 0:
        raise ValueError("stride must be >= 1 and padding >= 0")
    return _finite(kernels.conv2d(x, k, padding, stride), "conv2d")


def gap(x):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 3 or x.shape[1] < 1 or x.shape[2] < 1:
        raise ShapeError(f"gap expects [C,H,W], got {x.shape}")
    return _finite(x.reshape(x.shape[0], -1).mean(axis=1), "gap")


def bilinear_resize(x, h, w):
    """Align-corners bilinear resampling to ``[C,h,w]`` (up or down)."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 3:
        raise ShapeError(f"bilinear_resize expects [C,H,W], got {x.shape}")
    if h < 1 or w < 1:
        raise ValueError("target size must be positive")
    if (h, w) == x.shape[1:]:
        return x.copy()
    return _finite(kernels.resize_bilinear(x, h, w), "bilinear")


def bilinear_upsample(x, h, w):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 3:
        raise ShapeError(f"bilinear_upsample expects [C,H,W], got {x.shape}")
    if h < x.shape[1] or w < x.shape[2]:
        raise ValueError(f"target {h}x{w} smaller than source {x.shape[1]}x{x.shape[2]}")
    return bilinear_resize(x, h, w)


def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    # split by sign so exp never overflows
    e = np.exp(-np.abs(x))
    out = np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    return _finite(out, "sigmoid")


def relu(x):
    return np.maximum(np.asarray(x, dtype=np.float64), 0.0)


def softmax(x):
    """Softmax over the last axis with max subtraction."""
    x = np.asarray(x, dtype=np.float64)
    z = np.exp(x - x.max(axis=-1, keepdims=True))
    return _finite(z / z.sum(axis=-1, keepdims=True), "softmax")


def activation(x, kind):
    if kind == "sigmoid":
        return sigmoid(x)
    if kind == "relu":
        return relu(x)
    if kind == "softmax_lastdim":
        return softmax(x)
    raise ValueError(f"unknown activation {kind!r}")


def linear(x, w, b):
    """Affine map ``x @ w + b`` along the last axis of ``x``."""
    x = np.asarray(x, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if w.ndim != 2 or x.shape[-1] != w.shape[0] or b.shape != (w.shape[1],):
        raise ShapeError(f"linear: x{x.shape} w{w.shape} b{b.shape}")
    lead = x.shape[:-1]
    out = matmul(x.reshape(-1, w.shape[0]), w) + b
    return _finite(out.reshape(*lead, w.shape[1]), "linear")


def layer_norm(x, gamma, beta, eps=1e-5):
    x = np.asarray(x, dtype=np.float64)
    mu = x.mean(axis=-1, keepdims=True)
    var = ((x - mu) ** 2).mean(axis=-1, keepdims=True)
    return _finite((x - mu) / np.sqrt(var + eps) * gamma + beta, "layer_norm")


_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_MASK = (1 << 64) - 1


class Rng:
    """SplitMix64 stream.

    Output ``n`` (0-based) is ``mix(seed + (n + 1) * 0x9E3779B97F4A7C15)``
    with the standard SplitMix64 finalizer, so the stream is a pure function
    of (seed, position) and can be generated in vectorized blocks. All
    arithmetic is unsigned 64-bit modular, identical on every platform.
    """

    def __init__(self, seed):
        self.seed = int(seed) & _MASK
        self.pos = 0

    def next_u64(self, n):
        idx = np.arange(self.pos + 1, self.pos + 1 + n, dtype=np.uint64)
        self.pos += n
        with np.errstate(over="ignore"):
            z = np.uint64(self.seed) + idx * _GOLDEN
            z = (z ^ (z >> np.uint64(30))) * _M1
            z = (z ^ (z >> np.uint64(27))) * _M2
            z = z ^ (z >> np.uint64(31))
        return z

    def uniform(self, shape):
        """Doubles in [0, 1) built from the top 53 bits."""
        n = int(np.prod(shape, dtype=np.int64))
        u = (self.next_u64(n) >> np.uint64(11)).astype(np.float64) * 2.0 ** -53
        return u.reshape(shape)

    def normal(self, shape, std=1.0):
        """Box-Muller normals; consumes two outputs per sample."""
        n = int(np.prod(shape, dtype=np.int64))
        bits = self.next_u64(2 * n) >> np.uint64(11)
        u1 = (bits[0::2].astype(np.float64) + 1.0) * 2.0 ** -53  # (0, 1]
        u2 = bits[1::2].astype(np.float64) * 2.0 ** -53
        z = np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)
        return (z * std).reshape(shape)

    def spawn(self, tag):
        """Independent child stream keyed by an integer tag."""
        child = Rng(0)
        child.seed = int(Rng(self.seed ^ (int(tag) * 0x2545F4914F6CDD1D & _MASK)).next_u64(1)[0])
        return child
