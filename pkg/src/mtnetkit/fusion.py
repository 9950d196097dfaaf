"""Hybrid self/cross-attention fusion of template and search tokens."""
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T


@dataclass
class TokenSeq:
    tokens: np.ndarray  # [L,D]
    pos: np.ndarray     # [L,D]

    def __post_init__(self):
        if self.tokens.shape != self.pos.shape:
            raise T.ShapeError(f"tokens {self.tokens.shape} vs pos {self.pos.shape}")


def sine_positions(s, d, temperature=10000.0):
    """Fixed 2-D sinusoidal encodings for an s x s grid, row-major.

    The first half of the channels encodes the row, the second half the
    column; each half interleaves sin/cos over geometric frequencies.
    """
    if d % 4:
        raise ValueError(f"model dim {d} must be divisible by 4 for 2-D encodings")
    half = d // 2
    freqs = temperature ** (np.arange(half // 2) * 2.0 / half)
    coords = np.arange(s, dtype=np.float64) + 1.0

    def encode(c):
        ang = c[:, None] / freqs[None, :]
        out = np.empty((len(c), half))
        out[:, 0::2] = np.sin(ang)
        out[:, 1::2] = np.cos(ang)
        return out

    rows = np.repeat(encode(coords), s, axis=0)
    cols = np.tile(encode(coords), (s, 1))
    return np.concatenate([rows, cols], axis=1)


def tokenize(f, w, b, use_pos=True):
    """1x1 conv ``C->D`` then flatten to row-major tokens ``[s*s, D]``."""
    f = np.asarray(f, dtype=np.float64)
    c, h, wd = f.shape
    if h != wd:
        raise T.ShapeError(f"expected a square map, got {h}x{wd}")
    cols = f.reshape(c, h * wd).T
    tokens = T.linear(cols, w, b)
    d = tokens.shape[1]
    pos = sine_positions(h, d) if use_pos else np.zeros_like(tokens)
    return TokenSeq(tokens, pos)


# ---------------------------------------------------------------- params

def _attn_params(rng, d, std):
    p = {}
    for name in ("q", "k", "v", "o"):
        p["w" + name] = rng.normal((d, d), std)
        p["b" + name] = np.zeros(d)
    return p


def _ffn_params(rng, d, hidden, std):
    return {"w1": rng.normal((d, hidden), std), "b1": np.zeros(hidden),
            "w2": rng.normal((hidden, d), std), "b2": np.zeros(d)}


def _norm(d):
    return {"g": np.ones(d), "b": np.zeros(d)}


def _block(rng, d, std):
    # one branch of one layer: self-attn, cross-attn, ffn, each pre-normed
    return {"self": _attn_params(rng, d, std), "cross": _attn_params(rng, d, std),
            "ffn": _ffn_params(rng, d, 4 * d, std),
            "n_self": _norm(d), "n_cross_q": _norm(d), "n_cross_kv": _norm(d), "n_ffn": _norm(d)}


@dataclass
class FusionParams:
    layers: list          # [{"z": block, "x": block}, ...]
    final: dict           # cross-attn + ffn producing fused search tokens
    heads: int = 4
    use_pos: bool = True
    proj_z: tuple = field(default=None)  # tokenizer 1x1 conv (w [C,D], b [D])
    proj_x: tuple = field(default=None)

    @classmethod
    def init(cls, rng, channels, d=64, heads=4, num_layers=4, std=0.02, use_pos=True):
        if d % heads:
            raise ValueError(f"model dim {d} not divisible by {heads} heads")
        proj_z = (rng.normal((channels, d), 1.0 / np.sqrt(channels)), np.zeros(d))
        proj_x = (rng.normal((channels, d), 1.0 / np.sqrt(channels)), np.zeros(d))
        layers = [{"z": _block(rng, d, std), "x": _block(rng, d, std)} for _ in range(num_layers)]
        final = {"cross": _attn_params(rng, d, std), "ffn": _ffn_params(rng, d, 4 * d, std),
                 "n_q": _norm(d), "n_kv": _norm(d), "n_ffn": _norm(d)}
        return cls(layers, final, heads, use_pos, proj_z, proj_x)

    @property
    def dim(self):
        return self.final["cross"]["wq"].shape[0]

    def zero_output_projections(self):
        """Zero every sublayer's output map so each residual branch adds 0."""
        for layer in self.layers:
            for blk in layer.values():
                for key in ("self", "cross"):
                    blk[key]["wo"][:] = 0.0
                    blk[key]["bo"][:] = 0.0
                blk["ffn"]["w2"][:] = 0.0
                blk["ffn"]["b2"][:] = 0.0
        self.final["cross"]["wo"][:] = 0.0
        self.final["cross"]["bo"][:] = 0.0
        self.final["ffn"]["w2"][:] = 0.0
        self.final["ffn"]["b2"][:] = 0.0


# ---------------------------------------------------------------- forward

def mha(q, kv, params, heads=4, use_pos=True, hook=None, name="attn"):
    """Multi-head scaled dot-product attention of ``q`` over ``kv``.

    Positional encodings are added to queries and keys only. ``hook`` (if
    given) receives ``(name, probs)`` with probs ``[heads, Lq, Lkv]``.
    """
    d = q.tokens.shape[1]
    if d % heads:
        raise ValueError(f"model dim {d} not divisible by {heads} heads")
    dh = d // heads
    q_in = q.tokens + q.pos if use_pos else q.tokens
    k_in = kv.tokens + kv.pos if use_pos else kv.tokens
    Q = T.linear(q_in, params["wq"], params["bq"])
    K = T.linear(k_in, params["wk"], params["bk"])
    V = T.linear(kv.tokens, params["wv"], params["bv"])
    scale = 1.0 / np.sqrt(dh)
    outs = []
    probs_all = []
    for h in range(heads):
        sl = slice(h * dh, (h + 1) * dh)
        out, probs = T.attention(Q[:, sl], K[:, sl], V[:, sl], scale, return_probs=hook is not None)
        outs.append(out)
        probs_all.append(probs)
    if hook is not None:
        hook(name, np.stack(probs_all))
    return T.linear(np.concatenate(outs, axis=1), params["wo"], params["bo"])


def ffn(x, p):
    return T.linear(T.relu(T.linear(x, p["w1"], p["b1"])), p["w2"], p["b2"])


def _ln(x, n):
    return T.layer_norm(x, n["g"], n["b"])


def fusion_forward(xz, xx, p, hook=None):
    """Fused search tokens ``[Lx, D]``.

    Each layer, on both branches: residual self-attention, then residual
    cross-attention to the other branch (both branches read each other's
    post-self-attention state), then residual FFN. All sublayers are
    pre-normalized. A final cross-attention (search queries, template keys)
    plus FFN produces the output.
    """
    heads, use_pos = p.heads, p.use_pos
    z, x = xz.tokens, xx.tokens
    pz, px = xz.pos, xx.pos
    for li, layer in enumerate(p.layers):
        bz, bx = layer["z"], layer["x"]
        nz = _ln(z, bz["n_self"])
        z = z + mha(TokenSeq(nz, pz), TokenSeq(nz, pz), bz["self"], heads, use_pos, hook, f"L{li}.z.self")
        nx = _ln(x, bx["n_self"])
        x = x + mha(TokenSeq(nx, px), TokenSeq(nx, px), bx["self"], heads, use_pos, hook, f"L{li}.x.self")

        qz, kvz = _ln(z, bz["n_cross_q"]), _ln(x, bz["n_cross_kv"])
        qx, kvx = _ln(x, bx["n_cross_q"]), _ln(z, bx["n_cross_kv"])
        dz = mha(TokenSeq(qz, pz), TokenSeq(kvz, px), bz["cross"], heads, use_pos, hook, f"L{li}.z.cross")
        dx = mha(TokenSeq(qx, px), TokenSeq(kvx, pz), bx["cross"], heads, use_pos, hook, f"L{li}.x.cross")
        z, x = z + dz, x + dx

        z = z + ffn(_ln(z, bz["n_ffn"]), bz["ffn"])
        x = x + ffn(_ln(x, bx["n_ffn"]), bx["ffn"])

    f = p.final
    q = TokenSeq(_ln(x, f["n_q"]), px)
    kv = TokenSeq(_ln(z, f["n_kv"]), pz)
    x = x + mha(q, kv, f["cross"], heads, use_pos, hook, "final.cross")
    return x + ffn(_ln(x, f["n_ffn"]), f["ffn"])
