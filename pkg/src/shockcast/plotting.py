"""Binary PPM (P6) images of fields, predictions and residuals."""

from __future__ import annotations

from pathlib import Path

import numpy as np

GAP = 2          # separator width in pixels
GAP_VALUE = 255


def to_gray(field, lo, hi):
    """Map ``[lo, hi]`` linearly onto 0..255; a degenerate range gives uniform mid-gray."""
    field = np.asarray(field, dtype=np.float64)
    if not hi > lo:
        return np.full(field.shape, 128, dtype=np.uint8)
    scaled = np.clip((field - lo) / (hi - lo), 0.0, 1.0)
    return np.rint(scaled * 255.0).astype(np.uint8)


def upscale(img, factor):
    return np.repeat(np.repeat(img, factor, axis=0), factor, axis=1) if factor > 1 else img


def tile(rows, gap=GAP):
    """Arrange a list of rows of equally sized 2D uint8 images into one image."""
    h, w = rows[0][0].shape
    ncol = max(len(r) for r in rows)
    out = np.full((len(rows) * (h + gap) - gap, ncol * (w + gap) - gap), GAP_VALUE, dtype=np.uint8)
    for i, row in enumerate(rows):
        for j, img in enumerate(row):
            out[i * (h + gap):i * (h + gap) + h, j * (w + gap):j * (w + gap) + w] = img
    return out


def write_ppm(path, image):
    """Write a 2D gray (repeated into RGB) or ``(h, w, 3)`` uint8 array as binary PPM.

    Array rows become image rows; fields indexed ``[i, j]`` with ``i`` along x
    are transposed and flipped by the caller if a y-up view is wanted.
    """
    img = np.asarray(image, dtype=np.uint8)
    if img.ndim == 2:
        img = np.repeat(img[:, :, None], 3, axis=2)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError(f"expected (h, w) or (h, w, 3) image, got {img.shape}")
    h, w, _ = img.shape
    Path(path).write_bytes(f"P6\n{w} {h}\n255\n".encode("ascii") + np.ascontiguousarray(img).tobytes())


def read_ppm(path):
    raw = Path(path).read_bytes()
    parts = raw.split(b"\n", 3)
    if parts[0] != b"P6":
        raise ValueError(f"{path}: not a binary PPM")
    w, h = (int(x) for x in parts[1].split())
    return np.frombuffer(parts[3], dtype=np.uint8).reshape(h, w, 3)


def field_view(field):
    """``[i, j]`` (x, y) cell array -> image with y increasing upwards."""
    return np.asarray(field)[:, ::-1].T


def comparison_image(truth, pred, scale=4):
    """Rows are fields; columns are truth, prediction and absolute residual.

    Truth and prediction share the truth's value range; the residual is
    scaled to the same span so its brightness reads as a fraction of it.
    """
    rows = []
    for f in range(truth.shape[0]):
        lo, hi = float(truth[f].min()), float(truth[f].max())
        res = np.abs(pred[f] - truth[f])
        imgs = [to_gray(truth[f], lo, hi), to_gray(pred[f], lo, hi), to_gray(res, 0.0, hi - lo)]
        rows.append([upscale(field_view(im), scale) for im in imgs])
    return tile(rows)
