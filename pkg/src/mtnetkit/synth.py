"""Synthetic aligned RGB/thermal sequences with known ground truth."""
import json
import os
from dataclasses import asdict, dataclass, field

import numpy as np

from . import tensor as T
from .fileio import write_boxes, write_pgm, write_ppm


@dataclass(frozen=True)
class SynthConfig:
    frames: int = 60
    width: int = 320
    height: int = 240
    target_w: float = 40.0
    target_h: float = 32.0
    start: tuple = None            # target centre; frame centre when None
    velocity: tuple = (0.0, 0.0)   # px / frame
    amplitude: tuple = (0.0, 0.0)  # sinusoidal displacement, px
    period: float = 30.0
    scale_amplitude: float = 0.0   # relative size oscillation
    scale_period: float = 40.0
    occlusions: tuple = ()         # ((first, last), ...) inclusive frame ranges
    noise_rgb: float = 0.02
    noise_thermal: float = 0.02
    color: tuple = (0.9, 0.2, 0.15)
    seed: int = 0

    @classmethod
    def from_dict(cls, d):
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown synth keys: {sorted(unknown)}")
        d = dict(d)
        for k in ("start", "velocity", "amplitude", "color"):
            if d.get(k) is not None:
                d[k] = tuple(d[k])
        if "occlusions" in d:
            d["occlusions"] = tuple(tuple(r) for r in d["occlusions"])
        return cls(**d)

    def boxes(self):
        """Ground-truth ``(x, y, w, h)`` per frame."""
        t = np.arange(self.frames, dtype=np.float64)
        cx0, cy0 = self.start if self.start is not None else (self.width / 2, self.height / 2)
        ph = 2 * np.pi * t / self.period
        cx = cx0 + self.velocity[0] * t + self.amplitude[0] * np.sin(ph)
        cy = cy0 + self.velocity[1] * t + self.amplitude[1] * np.sin(ph)
        s = 1.0 + self.scale_amplitude * np.sin(2 * np.pi * t / self.scale_period)
        w, h = self.target_w * s, self.target_h * s
        return np.stack([cx - w / 2, cy - h / 2, w, h], axis=1)

    def validate(self):
        if self.frames < 1:
            raise ValueError("frames must be >= 1")
        b = self.boxes()
        if np.any(b[:, 2:] <= 0):
            raise ValueError("target size must stay positive")
        iw = np.clip(np.minimum(b[:, 0] + b[:, 2], self.width) - np.maximum(b[:, 0], 0), 0, None)
        ih = np.clip(np.minimum(b[:, 1] + b[:, 3], self.height) - np.maximum(b[:, 1], 0), 0, None)
        frac = iw * ih / (b[:, 2] * b[:, 3])
        if np.any(frac < 0.5):
            bad = int(np.argmax(frac < 0.5))
            raise ValueError(f"target less than 50% inside the frame at frame {bad}")


def _coverage(n, lo, hi):
    """Fraction of each unit pixel [i, i+1) covered by [lo, hi)."""
    i = np.arange(n, dtype=np.float64)
    return np.clip(np.minimum(i + 1, hi) - np.maximum(i, lo), 0.0, 1.0)


def _box_mask(cfg, box):
    x, y, w, h = box
    return np.outer(_coverage(cfg.height, y, y + h), _coverage(cfg.width, x, x + w))


def render(cfg, index, box, texture):
    """RGB [3,H,W] and thermal [1,H,W] images of frame ``index``."""
    H, W = cfg.height, cfg.width
    mask = _box_mask(cfg, box)
    rgb = texture.copy()
    col = np.asarray(cfg.color, dtype=np.float64)[:, None, None]
    rgb = rgb * (1 - mask) + col * mask

    x, y, w, h = box
    yy, xx = np.mgrid[0:H, 0:W] + 0.5
    blob = np.exp(-0.5 * (((xx - x - w / 2) / (0.35 * w)) ** 2 + ((yy - y - h / 2) / (0.35 * h)) ** 2))
    thermal = 0.1 + 0.1 * texture[:1] + 0.8 * blob[None]

    for first, last in cfg.occlusions:
        if first <= index <= last:
            occ = _box_mask(cfg, (x - 0.1 * w, y - 0.1 * h, 0.7 * w, 1.2 * h))
            rgb = rgb * (1 - occ) + 0.5 * occ
            thermal = thermal * (1 - occ) + 0.15 * occ

    noise_rng = T.Rng(cfg.seed).spawn(1000 + index)
    if cfg.noise_rgb > 0:
        rgb = rgb + noise_rng.normal((3, H, W), cfg.noise_rgb)
    if cfg.noise_thermal > 0:
        thermal = thermal + noise_rng.normal((1, H, W), cfg.noise_thermal)
    return np.clip(rgb, 0, 1), np.clip(thermal, 0, 1)


def background(cfg):
    rng = T.Rng(cfg.seed).spawn(7)
    coarse = rng.uniform((3, max(cfg.height // 16, 2), max(cfg.width // 16, 2)))
    return 0.25 + 0.5 * T.bilinear_resize(coarse, cfg.height, cfg.width)


def generate(cfg):
    """Yield ``(rgb, thermal, box)`` for every frame."""
    cfg.validate()
    tex = background(cfg)
    for i, box in enumerate(cfg.boxes()):
        rgb, th = render(cfg, i, box, tex)
        yield rgb, th, box


def write_sequence(cfg, out_dir):
    os.makedirs(os.path.join(out_dir, "rgb"), exist_ok=True)
    os.makedirs(os.path.join(out_dir, "thermal"), exist_ok=True)
    boxes = []
    for i, (rgb, th, box) in enumerate(generate(cfg), 1):
        write_ppm(os.path.join(out_dir, "rgb", f"{i:06d}.ppm"), rgb)
        write_pgm(os.path.join(out_dir, "thermal", f"{i:06d}.pgm"), th)
        boxes.append(np.round(box, 2))
    write_boxes(os.path.join(out_dir, "groundtruth.txt"), boxes)
    with open(os.path.join(out_dir, "synth.json"), "w") as f:
        json.dump(asdict(cfg), f, indent=2, sort_keys=True)
        f.write("\n")
    return out_dir
