"""Modality-aware network: channel aggregation/distribution and spatial
similarity perception over an RGB/thermal feature pair.
"""
from dataclasses import dataclass

import numpy as np

from . import tensor as T


@dataclass
class FeatureQuad:
    """Backbone outputs for RGB/thermal x template/search."""
    rgb_z: np.ndarray  # [C,hz,wz]
    th_z: np.ndarray
    rgb_x: np.ndarray  # [C,hx,wx]
    th_x: np.ndarray

    def __post_init__(self):
        if self.rgb_z.shape != self.th_z.shape:
            raise T.ShapeError(f"template pair shapes differ: {self.rgb_z.shape} vs {self.th_z.shape}")
        if self.rgb_x.shape != self.th_x.shape:
            raise T.ShapeError(f"search pair shapes differ: {self.rgb_x.shape} vs {self.th_x.shape}")
        if self.rgb_z.shape[0] != self.rgb_x.shape[0]:
            raise T.ShapeError("template and search channel counts differ")


@dataclass
class CadmParams:
    w_g: np.ndarray  # [C, C/r]
    b_g: np.ndarray
    w_r: np.ndarray  # [C/r, C]
    b_r: np.ndarray
    w_t: np.ndarray
    b_t: np.ndarray

    @classmethod
    def init(cls, rng, channels, reduction=4, min_hidden=8, std=0.02):
        hidden = max(channels // reduction, min_hidden)
        return cls(
            rng.normal((channels, hidden), std), np.zeros(hidden),
            rng.normal((hidden, channels), std), np.zeros(channels),
            rng.normal((hidden, channels), std), np.zeros(channels),
        )

    def distribution(self, modality):
        if modality == "R":
            return self.w_r, self.b_r
        if modality == "T":
            return self.w_t, self.b_t
        raise ValueError(f"modality must be 'R' or 'T', got {modality!r}")


@dataclass
class SspmParams:
    k_r: np.ndarray  # [1,1,3,3]
    b_r: float
    k_t: np.ndarray
    b_t: float

    @classmethod
    def init(cls, rng, std=0.02):
        return cls(rng.normal((1, 1, 3, 3), std), 0.0, rng.normal((1, 1, 3, 3), std), 0.0)

    def conv(self, modality):
        if modality == "R":
            return self.k_r, self.b_r
        if modality == "T":
            return self.k_t, self.b_t
        raise ValueError(f"modality must be 'R' or 'T', got {modality!r}")


@dataclass
class ModalityParams:
    cadm_z: CadmParams
    cadm_x: CadmParams
    sspm: SspmParams

    @classmethod
    def init(cls, rng, channels, reduction=4):
        return cls(CadmParams.init(rng, channels, reduction),
                   CadmParams.init(rng, channels, reduction),
                   SspmParams.init(rng))


def channel_aggregate(f_r, f_t, p):
    """Global descriptor: FC(GAP(f_r + f_t))."""
    pooled = T.gap(T.add(f_r, f_t))
    return T.linear(pooled, p.w_g, p.b_g)


def channel_gate(d_g, p, modality):
    w, b = p.distribution(modality)
    return T.sigmoid(T.linear(d_g, w, b))


def channel_distribute(f_i, d_g, p, modality):
    """Scale each channel of ``f_i`` by its sigmoid gate."""
    gate = channel_gate(d_g, p, modality)
    return np.asarray(f_i, dtype=np.float64) * gate[:, None, None]


def cadm_pair(f_r, f_t, p):
    d_g = channel_aggregate(f_r, f_t, p)
    return channel_distribute(f_r, d_g, p, "R"), channel_distribute(f_t, d_g, p, "T")


def cadm_forward(quad, p_z, p_x):
    """Channel-refine both pairs; template and search use separate params."""
    rz, tz = cadm_pair(quad.rgb_z, quad.th_z, p_z)
    rx, tx = cadm_pair(quad.rgb_x, quad.th_x, p_x)
    return FeatureQuad(rz, tz, rx, tx)


def raw_correlation(f_z, f_x):
    """Template-as-kernel valid correlation summed over channels -> [1,h',w']."""
    f_z = np.asarray(f_z)
    f_x = np.asarray(f_x)
    if f_z.shape[1] > f_x.shape[1] or f_z.shape[2] > f_x.shape[2]:
        raise T.ShapeError(f"template {f_z.shape} larger than search {f_x.shape}")
    return T.conv2d(f_x, f_z[None])


def sspm_similarity(f_z, f_x, p, modality):
    """Similarity map sigmoid(conv3x3(up(corr(f_z, f_x)))) at search resolution."""
    k, b = p.conv(modality)
    corr = raw_correlation(f_z, f_x)
    up = T.bilinear_upsample(corr, f_x.shape[1], f_x.shape[2])
    return T.sigmoid(T.conv2d(up, k, padding=1) + b)


def sspm_fuse(refined, s_r, s_t):
    """Fused template and search maps.

    template: f_R + f_T
    search:   (f_R * S_R + f_R) + (f_T * S_T + f_T), S broadcast over channels
    """
    if s_r.shape[1:] != refined.rgb_x.shape[1:] or s_t.shape[1:] != refined.th_x.shape[1:]:
        raise T.ShapeError("similarity map size differs from search features")
    fz = T.add(refined.rgb_z, refined.th_z)
    xr = T.add(T.mul(refined.rgb_x, s_r), refined.rgb_x)
    xt = T.add(T.mul(refined.th_x, s_t), refined.th_x)
    return fz, T.add(xr, xt)


def modality_forward(quad, params):
    """Full modality-aware pass; returns (fused_z, fused_x, (S_R, S_T))."""
    refined = cadm_forward(quad, params.cadm_z, params.cadm_x)
    s_r = sspm_similarity(refined.rgb_z, refined.rgb_x, params.sspm, "R")
    s_t = sspm_similarity(refined.th_z, refined.th_x, params.sspm, "T")
    fz, fx = sspm_fuse(refined, s_r, s_t)
    return fz, fx, (s_r, s_t)
