"""Seeded convolutional stand-in for the pretrained feature extractor.

Also holds the Siamese-style cropping used to build template and search
patches from a frame.
"""
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import tensor as T
from .fileio import read_pgm, read_ppm


@dataclass(frozen=True)
class Frame:
    rgb: np.ndarray      # [3,H,W] in [0,1]
    thermal: np.ndarray  # [1,H,W] in [0,1]
    index: int = 0

    def __post_init__(self):
        if self.rgb.ndim != 3 or self.rgb.shape[0] != 3:
            raise ValueError(f"rgb must be [3,H,W], got {self.rgb.shape}")
        if self.thermal.ndim != 3 or self.thermal.shape[0] != 1:
            raise ValueError(f"thermal must be [1,H,W], got {self.thermal.shape}")
        if self.rgb.shape[1:] != self.thermal.shape[1:]:
            raise ValueError("rgb and thermal sizes differ")
        if self.rgb.shape[1] == 0 or self.rgb.shape[2] == 0:
            raise ValueError("empty frame")

    @property
    def size(self):
        return self.rgb.shape[2], self.rgb.shape[1]  # (W, H)

    @classmethod
    def load(cls, rgb_path, thermal_path, index=0):
        return cls(read_ppm(rgb_path), read_pgm(thermal_path), index)


@dataclass(frozen=True)
class BackboneConfig:
    channels: int = 64
    template_size: int = 128
    search_size: int = 256
    stride: int = 8
    widths: tuple = (8, 16, 32)
    seed: int = 0

    def __post_init__(self):
        if self.stride != 8:
            raise ValueError("the stub downsamples by exactly 8 (three stride-2 stages)")
        for s in (self.template_size, self.search_size):
            if s % self.stride:
                raise ValueError(f"crop size {s} not divisible by stride {self.stride}")
        if len(self.widths) != 3:
            raise ValueError("widths must list three stage widths")

    @property
    def template_feat(self):
        return self.template_size // self.stride

    @property
    def search_feat(self):
        return self.search_size // self.stride


class Crop(NamedTuple):
    patch: np.ndarray  # [C,out,out]
    x0: float          # window origin in frame pixels
    y0: float
    side: float        # window side in frame pixels
    padded: bool       # any part of the window fell outside the frame


def crop_region(image, box, scale_factor, out_size):
    """Square window of side ``scale_factor * sqrt(w*h)`` centred on ``box``.

    ``box`` is pixel ``(x, y, w, h)``. Out-of-frame pixels are filled with the
    per-channel mean of the image, then the window is resampled to
    ``out_size`` x ``out_size``.
    """
    image = np.asarray(image, dtype=np.float64)
    x, y, w, h = (float(v) for v in box)
    if w <= 0 or h <= 0:
        raise ValueError(f"degenerate box {box}")
    if scale_factor <= 0:
        raise ValueError("scale_factor must be positive")
    c, H, W = image.shape
    side = max(1, int(round(scale_factor * np.sqrt(w * h))))
    x0 = int(round(x + w / 2 - side / 2))
    y0 = int(round(y + h / 2 - side / 2))

    mean = image.reshape(c, -1).mean(axis=1)
    region = np.empty((c, side, side))
    region[:] = mean[:, None, None]
    sx0, sy0 = max(x0, 0), max(y0, 0)
    sx1, sy1 = min(x0 + side, W), min(y0 + side, H)
    padded = not (x0 >= 0 and y0 >= 0 and x0 + side <= W and y0 + side <= H)
    if sx1 > sx0 and sy1 > sy0:
        region[:, sy0 - y0:sy1 - y0, sx0 - x0:sx1 - x0] = image[:, sy0:sy1, sx0:sx1]
    patch = T.bilinear_resize(region, out_size, out_size)
    return Crop(patch, float(x0), float(y0), float(side), padded)


def _branch_weights(rng, in_ch, widths, channels):
    layers = []
    prev = in_ch
    for width in widths:
        fan_in = prev * 16
        layers.append((rng.normal((width, prev, 4, 4), np.sqrt(2.0 / fan_in)), np.zeros(width)))
        prev = width
    proj = (rng.normal((channels, prev, 1, 1), np.sqrt(1.0 / prev)), np.zeros(channels))
    return layers, proj


class Backbone:
    """Three stride-2 conv+ReLU stages and a 1x1 projection, per modality.

    RGB and thermal branches hold separate weights; both are drawn once from
    ``Rng(cfg.seed)``. Template and search crops share the branch of their
    modality.
    """

    def __init__(self, cfg=None):
        self.cfg = cfg or BackboneConfig()
        rng = T.Rng(self.cfg.seed)
        self.weights = {
            "rgb": _branch_weights(rng, 3, self.cfg.widths, self.cfg.channels),
            "thermal": _branch_weights(rng, 1, self.cfg.widths, self.cfg.channels),
        }

    def zero_biases(self):
        for layers, proj in self.weights.values():
            for _, b in layers:
                b[:] = 0.0
            proj[1][:] = 0.0

    def forward(self, patch, modality):
        layers, (pw, pb) = self.weights[modality]
        x = np.asarray(patch, dtype=np.float64)
        for k, b in layers:
            x = T.relu(T.conv2d(x, k, padding=1, stride=2) + b[:, None, None])
        return T.conv2d(x, pw) + pb[:, None, None]

    def extract(self, rgb_crop, thermal_crop):
        """Features ``(f_rgb, f_thermal)`` of shape [C, s/8, s/8]."""
        rgb_crop = np.asarray(rgb_crop)
        thermal_crop = np.asarray(thermal_crop)
        if rgb_crop.shape[1:] != thermal_crop.shape[1:]:
            raise ValueError("rgb and thermal crops differ in size")
        if rgb_crop.shape[1] % 8 or rgb_crop.shape[2] % 8:
            raise ValueError(f"crop size {rgb_crop.shape[1:]} not divisible by 8")
        return self.forward(rgb_crop, "rgb"), self.forward(thermal_crop, "thermal")
