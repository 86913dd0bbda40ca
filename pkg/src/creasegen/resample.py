"""Bilinear sampling under affine maps, with clamp-to-edge reads."""

from __future__ import annotations

import numpy as np


def affine_sample(src: np.ndarray, matrix: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Sample `src` at affine-mapped output grid positions.

    `matrix` is 2x3 and maps output pixel indices (i=column, j=row) to
    source pixel coordinates: [sx, sy] = M @ [i, j, 1]. Source reads are
    bilinear with coordinates clamped to the image rectangle, so
    out-of-bounds samples repeat the edge.
    """
    if matrix.shape != (2, 3):
        raise ValueError(f"matrix must be 2x3, got {matrix.shape}")
    h, w = src.shape[:2]
    i = np.arange(out_w, dtype=np.float64)
    j = np.arange(out_h, dtype=np.float64)
    sx = matrix[0, 0] * i[None, :] + matrix[0, 1] * j[:, None] + matrix[0, 2]
    sy = matrix[1, 0] * i[None, :] + matrix[1, 1] * j[:, None] + matrix[1, 2]
    np.clip(sx, 0.0, w - 1.0, out=sx)
    np.clip(sy, 0.0, h - 1.0, out=sy)

    x0 = np.floor(sx).astype(np.intp)
    y0 = np.floor(sy).astype(np.intp)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = sx - x0
    fy = sy - y0
    if src.ndim == 3:
        fx = fx[..., None]
        fy = fy[..., None]

    v = src.astype(np.float64)
    top = v[y0, x0] * (1.0 - fx) + v[y0, x1] * fx
    bot = v[y1, x0] * (1.0 - fx) + v[y1, x1] * fx
    return top * (1.0 - fy) + bot * fy


def resize_bilinear(src: np.ndarray, out_w: int, out_h: int) -> np.ndarray:
    """Resize with the pixel-center convention sx = (i + 0.5)*scale - 0.5."""
    h, w = src.shape[:2]
    scale_x = w / out_w
    scale_y = h / out_h
    matrix = np.array(
        [[scale_x, 0.0, 0.5 * scale_x - 0.5],
         [0.0, scale_y, 0.5 * scale_y - 0.5]],
        dtype=np.float64,
    )
    return affine_sample(src, matrix, out_h, out_w)
