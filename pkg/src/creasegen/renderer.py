"""Rasterization of sample parameters into fixed-size RGB images.

The canvas is a (height, width, 3) uint8 array. Strokes are drawn by
per-pixel coverage computed from the exact distance to the flattened
curve, which keeps output reproducible across platforms and lets tests
check the result against an analytic distance field.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np
from PIL import Image
from scipy.ndimage import convolve1d

from .geometry import BackgroundPool, SampleParams, bezier_flatten
from .resample import resize_bilinear

MIN_CANVAS = 16

_BG_EXTENSIONS = (".png", ".jpg", ".jpeg")
# domain tag for procedural background streams
_BG_STREAM_TAG = 0xB6


def new_canvas(width: int, height: int, fill: int = 255) -> np.ndarray:
    if width < MIN_CANVAS or height < MIN_CANVAS:
        raise ValueError(f"canvas must be at least {MIN_CANVAS}px, got {width}x{height}")
    return np.full((height, width, 3), fill, dtype=np.uint8)


@dataclass(frozen=True)
class Background:
    """A resolved background source: an image file or a procedural fill."""

    kind: str                 # "file" | "solid" | "noise" | "gradient"
    path: str | None = None
    seed: int = 0


def parse_background_ref(ref: str, root_dir: str | None = None) -> Background:
    """Decode a background ref produced by `geometry.BackgroundPool.draw`."""
    if ref.startswith("file:"):
        rel = ref[len("file:"):]
        path = os.path.join(root_dir, rel) if root_dir else rel
        return Background(kind="file", path=path)
    if ref.startswith("proc:"):
        _, kind, seed = ref.split(":", 2)
        if kind not in ("solid", "noise", "gradient"):
            raise ValueError(f"unknown procedural background kind {kind!r}")
        return Background(kind=kind, seed=int(seed))
    raise ValueError(f"unrecognized background ref {ref!r}")


def _procedural_fill(bg: Background, width: int, height: int) -> np.ndarray:
    if bg.kind == "solid":
        return new_canvas(width, height, fill=bg.seed % 256)
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence((_BG_STREAM_TAG, bg.seed))))
    if bg.kind == "noise":
        base = rng.uniform(110.0, 190.0, size=3)
        pix = base.astype(np.float32) + 25.0 * rng.standard_normal((height, width, 3), dtype=np.float32)
        return np.clip(np.rint(pix), 0, 255).astype(np.uint8)
    if bg.kind == "gradient":
        c0 = rng.uniform(90.0, 220.0, size=3)
        c1 = rng.uniform(90.0, 220.0, size=3)
        theta = rng.uniform(0.0, 2.0 * np.pi)
        xs = (np.arange(width, dtype=np.float64) + 0.5) / width
        ys = (np.arange(height, dtype=np.float64) + 0.5) / height
        proj = np.cos(theta) * xs[None, :] + np.sin(theta) * ys[:, None]
        lo, hi = proj.min(), proj.max()
        ramp = (proj - lo) / (hi - lo) if hi > lo else np.zeros_like(proj)
        pix = c0[None, None, :] + ramp[:, :, None] * (c1 - c0)[None, None, :]
        return np.clip(np.rint(pix), 0, 255).astype(np.uint8)
    raise ValueError(f"unknown procedural background kind {bg.kind!r}")


def _load_background_image(path: str) -> np.ndarray:
    try:
        with Image.open(path) as im:
            return np.asarray(im.convert("RGB"))
    except OSError:
        raise
    except Exception as exc:  # Pillow raises assorted types on corrupt data
        raise OSError(f"undecodable background image: {path}") from exc


def composite_background(canvas: np.ndarray, bg: Background, rng=None) -> np.ndarray:
    """Fill the canvas with the background, resizing file images bilinearly."""
    h, w = canvas.shape[:2]
    if bg.kind == "file":
        if not bg.path:
            raise ValueError("file background without a path")
        src = _load_background_image(bg.path)
        if src.shape[0] != h or src.shape[1] != w:
            resized = np.clip(np.rint(resize_bilinear(src, w, h)), 0, 255).astype(np.uint8)
        else:
            resized = src
        canvas[:] = resized
    else:
        canvas[:] = _procedural_fill(bg, w, h)
    return canvas


class BackgroundProvider:
    """Resolves background refs to pixels; file pools are scanned once.

    Directory scans are sorted lexicographically by relative path so the
    pool order (and hence every seeded pick) is platform-independent.
    Decoded-and-resized file backgrounds are cached; the cache is read-only
    after warmup and safe to share across renders in one process.
    """

    def __init__(self, background_dir: str | None = None,
                 procedural_kinds: tuple[str, ...] = ("solid", "noise", "gradient"),
                 enabled: bool = True):
        self.background_dir = background_dir
        refs = []
        if background_dir:
            for dirpath, dirnames, filenames in os.walk(background_dir):
                dirnames.sort()
                for name in filenames:
                    if name.lower().endswith(_BG_EXTENSIONS):
                        full = os.path.join(dirpath, name)
                        refs.append("file:" + os.path.relpath(full, background_dir).replace(os.sep, "/"))
            refs.sort()
            if not refs:
                raise FileNotFoundError(f"no background images under {background_dir}")
        self.pool = BackgroundPool(refs=tuple(refs), procedural_kinds=procedural_kinds, enabled=enabled)
        self._cache: dict[tuple[str, int, int], np.ndarray] = {}

    def fill(self, canvas: np.ndarray, ref: str) -> np.ndarray:
        bg = parse_background_ref(ref, self.background_dir)
        if bg.kind == "file":
            key = (ref, canvas.shape[1], canvas.shape[0])
            cached = self._cache.get(key)
            if cached is None:
                cached = composite_background(canvas.copy(), bg)
                self._cache[key] = cached
            canvas[:] = cached
            return canvas
        return composite_background(canvas, bg)


def stroke_polyline(canvas: np.ndarray, polyline: np.ndarray, width: float,
                    color: tuple[int, int, int]) -> np.ndarray:
    """Draw a round-capped, round-joined stroke with coverage anti-aliasing.

    `polyline` holds unit-square coordinates, scaled here by the canvas
    size. Coverage falls linearly from 1 at distance width/2 - 0.5 to 0 at
    width/2 + 0.5, so pixels beyond width/2 + 1 from the spine are never
    touched, and output = lerp(existing, color, coverage).
    """
    if width <= 0:
        raise ValueError(f"stroke width must be > 0, got {width}")
    pts = np.asarray(polyline, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 1:
        raise ValueError("polyline must be an (n, 2) array with n >= 1")
    h, w = canvas.shape[:2]
    px = pts * np.array([w, h], dtype=np.float64)

    half = width / 2.0
    pad = half + 1.0
    xmin = max(int(np.floor(px[:, 0].min() - pad)), 0)
    xmax = min(int(np.ceil(px[:, 0].max() + pad)) + 1, w)
    ymin = max(int(np.floor(px[:, 1].min() - pad)), 0)
    ymax = min(int(np.ceil(px[:, 1].max() + pad)) + 1, h)
    if xmin >= xmax or ymin >= ymax:
        return canvas

    dist2 = np.full((ymax - ymin, xmax - xmin), np.inf, dtype=np.float64)
    segs = zip(px, px[1:]) if len(px) > 1 else zip(px, px)
    for (ax, ay), (bx, by) in segs:
        sxmin = max(int(np.floor(min(ax, bx) - pad)), xmin)
        sxmax = min(int(np.ceil(max(ax, bx) + pad)) + 1, xmax)
        symin = max(int(np.floor(min(ay, by) - pad)), ymin)
        symax = min(int(np.ceil(max(ay, by) + pad)) + 1, ymax)
        if sxmin >= sxmax or symin >= symax:
            continue
        # pixel centers are at integer + 0.5
        qx = np.arange(sxmin, sxmax, dtype=np.float64)[None, :] + 0.5 - ax
        qy = np.arange(symin, symax, dtype=np.float64)[:, None] + 0.5 - ay
        dx, dy = bx - ax, by - ay
        seg_len2 = dx * dx + dy * dy
        if seg_len2 > 0.0:
            t = (qx * dx + qy * dy) / seg_len2
            np.clip(t, 0.0, 1.0, out=t)
            ex = qx - t * dx
            ey = qy - t * dy
        else:
            ex = qx + 0.0 * qy
            ey = qy + 0.0 * qx
        sub = dist2[symin - ymin:symax - ymin, sxmin - xmin:sxmax - xmin]
        np.minimum(sub, ex * ex + ey * ey, out=sub)

    coverage = np.clip(half + 0.5 - np.sqrt(dist2), 0.0, 1.0)
    if not coverage.any():
        return canvas
    region = canvas[ymin:ymax, xmin:xmax].astype(np.float64)
    region += coverage[:, :, None] * (np.asarray(color, dtype=np.float64) - region)
    canvas[ymin:ymax, xmin:xmax] = np.clip(np.rint(region), 0, 255).astype(np.uint8)
    return canvas


def gaussian_kernel(sigma: float) -> np.ndarray:
    """Normalized 1D Gaussian with kernel radius ceil(3*sigma)."""
    radius = int(np.ceil(3.0 * sigma))
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


def apply_blur(canvas: np.ndarray, sigma: float) -> np.ndarray:
    """Separable Gaussian blur with clamp-to-edge handling; sigma=0 is identity."""
    if sigma < 0:
        raise ValueError(f"sigma must be >= 0, got {sigma}")
    if sigma == 0.0:
        return canvas
    k = gaussian_kernel(sigma)
    f = canvas.astype(np.float32)
    f = convolve1d(f, k.astype(np.float32), axis=0, mode="nearest")
    f = convolve1d(f, k.astype(np.float32), axis=1, mode="nearest")
    return np.clip(np.rint(f), 0, 255).astype(np.uint8)


def render_sample(sample: SampleParams, canvas_size: int = 224, tolerance: float = 1e-3,
                  backgrounds: BackgroundProvider | None = None) -> np.ndarray:
    """Render one sample: background, strokes in list order, then blur.

    `sample.creases` already carries draw order (wrinkles first, principals
    on top). File-backed background refs require a provider.
    """
    canvas = new_canvas(canvas_size, canvas_size)
    if backgrounds is not None:
        backgrounds.fill(canvas, sample.background_ref)
    else:
        if sample.background_ref.startswith("file:"):
            raise ValueError("file background ref requires a BackgroundProvider")
        composite_background(canvas, parse_background_ref(sample.background_ref))
    for crease, width, color in zip(sample.creases, sample.widths, sample.colors):
        poly = bezier_flatten(crease, tolerance)
        stroke_polyline(canvas, poly, width, color)
    return apply_blur(canvas, sample.blur_sigma)


def save_png(canvas: np.ndarray, path: str, compress_level: int = 4) -> None:
    """Write the canvas as 8-bit RGB PNG (lossless; fixed encoder settings)."""
    Image.fromarray(canvas, mode="RGB").save(path, format="PNG", compress_level=compress_level)


def load_png(path: str) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"))
