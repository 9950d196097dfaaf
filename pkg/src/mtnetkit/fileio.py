"""Binary PPM/PGM frames and ``x,y,w,h`` box files."""
import os
import re

import numpy as np


class FrameFormatError(ValueError):
    pass


def _write_pnm(path, magic, arr_u8):
    h, w = arr_u8.shape[:2]
    with open(path, "wb") as f:
        f.write(b"%s\n%d %d\n255\n" % (magic, w, h))
        f.write(np.ascontiguousarray(arr_u8, dtype=np.uint8).tobytes())


def to_u8(x):
    return np.clip(np.round(np.asarray(x) * 255.0), 0, 255).astype(np.uint8)


def write_ppm(path, rgb):
    """``rgb``: float array [3,H,W] in [0,1]."""
    _write_pnm(path, b"P6", to_u8(np.transpose(rgb, (1, 2, 0))))


def write_pgm(path, gray):
    """``gray``: float array [1,H,W] or [H,W] in [0,1]."""
    gray = np.asarray(gray)
    if gray.ndim == 3:
        gray = gray[0]
    _write_pnm(path, b"P5", to_u8(gray))


def _read_pnm(path, magic):
    with open(path, "rb") as f:
        data = f.read()
    tokens = []
    pos = 0
    # header: magic, width, height, maxval, with '#' comments allowed
    while len(tokens) < 4:
        m = re.compile(rb"\s*(#[^\n]*\n\s*)*(\S+)").match(data, pos)
        if m is None:
            raise FrameFormatError(f"{path}: truncated header")
        tokens.append(m.group(2))
        pos = m.end()
    if tokens[0] != magic:
        raise FrameFormatError(f"{path}: expected {magic.decode()}, got {tokens[0][:2]!r}")
    try:
        w, h, maxval = (int(t) for t in tokens[1:])
    except ValueError:
        raise FrameFormatError(f"{path}: bad header") from None
    if maxval != 255:
        raise FrameFormatError(f"{path}: only 8-bit files supported")
    pos += 1  # single whitespace byte before raster
    nch = 3 if magic == b"P6" else 1
    raster = data[pos:pos + w * h * nch]
    if len(raster) != w * h * nch:
        raise FrameFormatError(f"{path}: truncated raster")
    arr = np.frombuffer(raster, dtype=np.uint8).reshape(h, w, nch)
    return np.transpose(arr, (2, 0, 1)).astype(np.float64) / 255.0


def read_ppm(path):
    return _read_pnm(path, b"P6")


def read_pgm(path):
    return _read_pnm(path, b"P5")


def read_boxes(path):
    """One ``x,y,w,h`` row per line; commas, tabs or spaces separate fields."""
    rows = []
    with open(path) as f:
        for lineno, line in enumerate(f, 1):
            line = line.strip()
            if not line:
                continue
            parts = [p for p in re.split(r"[,\t ]+", line) if p]
            if len(parts) != 4:
                raise ValueError(f"{path}:{lineno}: expected 4 values, got {len(parts)}")
            rows.append([float(p) for p in parts])
    return np.asarray(rows, dtype=np.float64).reshape(-1, 4)


def _fmt(v):
    v = float(v)
    return str(int(v)) if v.is_integer() else repr(round(v, 4))


def write_boxes(path, boxes):
    with open(path, "w") as f:
        for b in boxes:
            f.write(",".join(_fmt(v) for v in b) + "\n")


def list_frames(seq_dir):
    """Paired (rgb, thermal) frame paths of a sequence directory, in order."""
    rgb_dir = os.path.join(seq_dir, "rgb")
    th_dir = os.path.join(seq_dir, "thermal")
    if not os.path.isdir(rgb_dir) or not os.path.isdir(th_dir):
        raise FileNotFoundError(f"{seq_dir}: missing rgb/ or thermal/ directory")
    rgb = sorted(f for f in os.listdir(rgb_dir) if f.endswith(".ppm"))
    th = sorted(f for f in os.listdir(th_dir) if f.endswith(".pgm"))
    if [os.path.splitext(f)[0] for f in rgb] != [os.path.splitext(f)[0] for f in th]:
        raise FrameFormatError(f"{seq_dir}: rgb and thermal frame lists differ")
    return [(os.path.join(rgb_dir, a), os.path.join(th_dir, b)) for a, b in zip(rgb, th)]
