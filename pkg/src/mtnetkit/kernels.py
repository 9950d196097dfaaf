"""Hot numeric kernels, each with a numba and a pure-numpy implementation.

The module-level names (``conv2d``, ``matmul``, ``resize_bilinear``) are bound
to the numba versions unless numba is missing or ``MTNETKIT_DISABLE_JIT=1``.
Both variants are always importable so they can be compared against each
other (see ``benchmarks/bench_kernels.py``).
"""
import numpy as np

from ._jit import HAVE_NUMBA, USE_NUMBA, njit


# ---------------------------------------------------------------- conv2d

@njit(cache=True)
def _conv2d_nb(xp, k, stride, ho, wo):
    co_n, ci_n, kh, kw = k.shape
    out = np.zeros((co_n, ho, wo))
    # per output element the sum runs over (ci, u, v) in lexicographic order
    for co in range(co_n):
        for ci in range(ci_n):
            for u in range(kh):
                for v in range(kw):
                    w = k[co, ci, u, v]
                    for i in range(ho):
                        src = xp[ci, i * stride + u]
                        dst = out[co, i]
                        for j in range(wo):
                            dst[j] += w * src[j * stride + v]
    return out


def _conv2d_np(xp, k, stride, ho, wo):
    kh, kw = k.shape[2:]
    win = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(1, 2))
    win = win[:, : (ho - 1) * stride + 1 : stride, : (wo - 1) * stride + 1 : stride]
    # win: [Ci, Ho, Wo, kh, kw]
    return np.einsum("chwuv,ocuv->ohw", win, k, optimize=False)


def _pad(x, padding):
    if padding == 0:
        return np.ascontiguousarray(x, dtype=np.float64)
    return np.pad(x, ((0, 0), (padding, padding), (padding, padding))).astype(np.float64)


def _conv_extent(n, kn, padding, stride):
    span = n + 2 * padding - kn
    if span < 0:
        raise ValueError(f"kernel extent {kn} exceeds padded input {n + 2 * padding}")
    if span % stride:
        raise ValueError(f"non-integer output extent: ({n}+2*{padding}-{kn})/{stride}")
    return span // stride + 1


def conv2d_numba(x, k, padding=0, stride=1):
    ho = _conv_extent(x.shape[1], k.shape[2], padding, stride)
    wo = _conv_extent(x.shape[2], k.shape[3], padding, stride)
    return _conv2d_nb(_pad(x, padding), np.ascontiguousarray(k, dtype=np.float64), stride, ho, wo)


def conv2d_numpy(x, k, padding=0, stride=1):
    ho = _conv_extent(x.shape[1], k.shape[2], padding, stride)
    wo = _conv_extent(x.shape[2], k.shape[3], padding, stride)
    return _conv2d_np(_pad(x, padding), np.asarray(k, dtype=np.float64), stride, ho, wo)


# ---------------------------------------------------------------- matmul

@njit(cache=True)
def _matmul_nb(a, b):
    n, kk = a.shape
    m = b.shape[1]
    out = np.zeros((n, m))
    for i in range(n):
        for k in range(kk):
            aik = a[i, k]
            for j in range(m):
                out[i, j] += aik * b[k, j]
    return out


def matmul_numba(a, b):
    return _matmul_nb(np.ascontiguousarray(a, dtype=np.float64),
                      np.ascontiguousarray(b, dtype=np.float64))


def matmul_numpy(a, b):
    return np.asarray(a, dtype=np.float64) @ np.asarray(b, dtype=np.float64)


# ---------------------------------------------------------------- bilinear

@njit(cache=True)
def _resize_nb(x, out_h, out_w):
    c, h, w = x.shape
    out = np.empty((c, out_h, out_w))
    dh = max(out_h - 1, 1)
    dw = max(out_w - 1, 1)
    for i in range(out_h):
        # integer numerator keeps the end points exact
        fy = (i * (h - 1)) / dh
        y0 = min(int(np.floor(fy)), h - 1)
        y1 = min(y0 + 1, h - 1)
        dy = fy - y0
        for j in range(out_w):
            fx = (j * (w - 1)) / dw
            x0 = min(int(np.floor(fx)), w - 1)
            x1 = min(x0 + 1, w - 1)
            dx = fx - x0
            for ch in range(c):
                top = x[ch, y0, x0] * (1.0 - dx) + x[ch, y0, x1] * dx
                bot = x[ch, y1, x0] * (1.0 - dx) + x[ch, y1, x1] * dx
                out[ch, i, j] = top * (1.0 - dy) + bot * dy
    return out


def _axis_weights(n_in, n_out):
    f = (np.arange(n_out) * (n_in - 1)) / max(n_out - 1, 1)
    i0 = np.minimum(np.floor(f).astype(np.int64), n_in - 1)
    i1 = np.minimum(i0 + 1, n_in - 1)
    return i0, i1, f - i0


def _resize_np(x, out_h, out_w):
    y0, y1, dy = _axis_weights(x.shape[1], out_h)
    x0, x1, dx = _axis_weights(x.shape[2], out_w)
    dx = dx[None, None, :]
    dy = dy[None, :, None]
    top = x[:, y0][:, :, x0] * (1.0 - dx) + x[:, y0][:, :, x1] * dx
    bot = x[:, y1][:, :, x0] * (1.0 - dx) + x[:, y1][:, :, x1] * dx
    return top * (1.0 - dy) + bot * dy


def resize_bilinear_numba(x, out_h, out_w):
    return _resize_nb(np.ascontiguousarray(x, dtype=np.float64), int(out_h), int(out_w))


def resize_bilinear_numpy(x, out_h, out_w):
    return _resize_np(np.asarray(x, dtype=np.float64), int(out_h), int(out_w))


# ---------------------------------------------------------------- attention

@njit(cache=True)
def _attention_nb(q, kt, v, scale, probs, keep):
    n, dh = q.shape
    m = kt.shape[1]
    dv = v.shape[1]
    out = np.zeros((n, dv))
    row = np.empty(m)
    for i in range(n):
        for j in range(m):
            row[j] = 0.0
        for d in range(dh):
            qd = q[i, d]
            for j in range(m):
                row[j] += qd * kt[d, j]
        mx = row[0] * scale
        for j in range(m):
            row[j] *= scale
            if row[j] > mx:
                mx = row[j]
        s = 0.0
        for j in range(m):
            row[j] = np.exp(row[j] - mx)
            s += row[j]
        for j in range(m):
            p = row[j] / s
            if keep:
                probs[i, j] = p
            for d in range(dv):
                out[i, d] += p * v[j, d]
    return out


def attention_numba(q, k, v, scale, return_probs=False):
    """Single-head ``softmax(q k^T * scale) v``; optionally also the probabilities."""
    q = np.ascontiguousarray(q, dtype=np.float64)
    kt = np.ascontiguousarray(np.asarray(k, dtype=np.float64).T)
    v = np.ascontiguousarray(v, dtype=np.float64)
    probs = np.empty((q.shape[0], kt.shape[1]) if return_probs else (1, 1))
    out = _attention_nb(q, kt, v, float(scale), probs, return_probs)
    return out, (probs if return_probs else None)


def attention_numpy(q, k, v, scale, return_probs=False):
    p = np.asarray(q) @ np.asarray(k).T
    p *= scale
    p -= p.max(axis=1, keepdims=True)
    np.exp(p, out=p)
    p /= p.sum(axis=1, keepdims=True)
    return p @ np.asarray(v), (p if return_probs else None)


BACKENDS = {"numpy": (conv2d_numpy, resize_bilinear_numpy)}
if HAVE_NUMBA:
    BACKENDS["numba"] = (conv2d_numba, resize_bilinear_numba)

conv2d, resize_bilinear = BACKENDS["numba" if USE_NUMBA else "numpy"]

# Dense matmul goes to BLAS and softmax attention is bound by exp(), where
# numpy's vectorized exp beats numba's scalar libm call by ~6x; both backends
# use the numpy kernels. The numba versions stay for benchmarks/bench_kernels.py.
matmul = matmul_numpy
attention = attention_numpy
