import numpy as np
import pytest

from mtnetkit import tensor as T
from mtnetkit.fusion import FusionParams, TokenSeq, fusion_forward, mha, sine_positions, tokenize


def small_params(use_pos=True, layers=2, std=0.2):
    return FusionParams.init(T.Rng(11), 8, d=16, heads=4, num_layers=layers, std=std, use_pos=use_pos)


def seqs(p, seed=0):
    rng = np.random.default_rng(seed)
    return (tokenize(rng.standard_normal((8, 4, 4)), *p.proj_z, use_pos=p.use_pos),
            tokenize(rng.standard_normal((8, 6, 6)), *p.proj_x, use_pos=p.use_pos))


def test_sine_positions():
    pe = sine_positions(4, 8)
    assert pe.shape == (16, 8)
    assert np.all(np.abs(pe) <= 1)
    # row half depends only on the row, column half only on the column
    assert np.array_equal(pe[0, :4], pe[3, :4]) and np.array_equal(pe[0, 4:], pe[12, 4:])
    assert len({tuple(r) for r in pe}) == 16
    with pytest.raises(ValueError):
        sine_positions(4, 6)


def test_tokenize_row_major():
    f = np.arange(2 * 3 * 3, dtype=float).reshape(2, 3, 3)
    seq = tokenize(f, np.eye(2), np.zeros(2), use_pos=False)
    np.testing.assert_array_equal(seq.tokens[4], [4, 13])
    assert np.all(seq.pos == 0)
    with pytest.raises(T.ShapeError):
        tokenize(np.zeros((2, 3, 4)), np.eye(2), np.zeros(2))


def test_mha_against_direct_formula():
    p = small_params()
    rng = np.random.default_rng(1)
    q = TokenSeq(rng.standard_normal((5, 16)), rng.standard_normal((5, 16)))
    kv = TokenSeq(rng.standard_normal((7, 16)), rng.standard_normal((7, 16)))
    a = p.layers[0]["x"]["cross"]
    out = mha(q, kv, a, heads=4, use_pos=True)
    Q = (q.tokens + q.pos) @ a["wq"] + a["bq"]
    K = (kv.tokens + kv.pos) @ a["wk"] + a["bk"]
    V = kv.tokens @ a["wv"] + a["bv"]
    heads = []
    for h in range(4):
        s = Q[:, 4 * h:4 * h + 4] @ K[:, 4 * h:4 * h + 4].T / 2.0
        w = np.exp(s - s.max(1, keepdims=True))
        heads.append((w / w.sum(1, keepdims=True)) @ V[:, 4 * h:4 * h + 4])
    np.testing.assert_allclose(out, np.concatenate(heads, 1) @ a["wo"] + a["bo"], atol=1e-12)


def test_hook_sees_every_attention():
    p = small_params(layers=2)
    xz, xx = seqs(p)
    names = []
    fusion_forward(xz, xx, p, hook=lambda n, probs: names.append((n, probs.shape)))
    assert [n for n, _ in names] == ["L0.z.self", "L0.x.self", "L0.z.cross", "L0.x.cross",
                                     "L1.z.self", "L1.x.self", "L1.z.cross", "L1.x.cross", "final.cross"]
    assert dict(names)["final.cross"] == (4, 36, 16)


def test_zero_layers_is_final_block_only():
    p = small_params(layers=0)
    xz, xx = seqs(p)
    assert fusion_forward(xz, xx, p).shape == xx.tokens.shape


def test_output_depends_on_template():
    p = small_params()
    xz, xx = seqs(p)
    xz2, _ = seqs(p, seed=5)
    assert not np.allclose(fusion_forward(xz, xx, p), fusion_forward(xz2, xx, p))


def test_heads_must_divide_dim():
    p = small_params()
    q = TokenSeq(np.zeros((2, 16)), np.zeros((2, 16)))
    with pytest.raises(ValueError):
        mha(q, q, p.layers[0]["z"]["self"], heads=3)
