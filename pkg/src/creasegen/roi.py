"""Landmark-based palm ROI extraction.

Two finger-valley landmarks A and B define a palm coordinate frame: the
AB chord is the x-axis with |AB| as the unit length, and y points into
the palm. The ROI is the square of side 7/6 sitting 1/6 below the chord,
horizontally centered on it. The right-hand construction is the exact
x-mirror of the left-hand one, which works out to applying the left-hand
formula with the two landmarks swapped.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import Hand
from .resample import affine_sample

# ROI frame constants, in units of |AB| (see module docstring)
SIDE = 7.0 / 6.0
X_OFFSET = -1.0 / 12.0
Y_OFFSET = 1.0 / 6.0

MIN_LANDMARK_DISTANCE = 8.0  # source pixels


class DegenerateLandmarksError(ValueError):
    """Landmarks too close together to define a frame."""


@dataclass(frozen=True)
class LandmarkPair:
    """Finger-valley landmarks in source-pixel coordinates."""

    a: tuple[float, float]
    b: tuple[float, float]
    hand: Hand = Hand.LEFT


@dataclass(frozen=True)
class RoiTransform:
    """2x3 affine mapping output pixel indices (i, j) to source coordinates."""

    matrix: np.ndarray

    def apply(self, i, j) -> np.ndarray:
        m = self.matrix
        return np.stack([m[0, 0] * i + m[0, 1] * j + m[0, 2],
                         m[1, 0] * i + m[1, 1] * j + m[1, 2]], axis=-1)

    def inverse(self) -> "RoiTransform":
        lin = self.matrix[:, :2]
        det = lin[0, 0] * lin[1, 1] - lin[0, 1] * lin[1, 0]
        if det == 0:
            raise ValueError("transform is singular")
        inv = np.linalg.inv(lin)
        off = -inv @ self.matrix[:, 2]
        return RoiTransform(np.column_stack([inv, off]))


def roi_transform(lm: LandmarkPair, out_size: int) -> RoiTransform:
    """Affine map from the out_size grid onto the ROI square.

    Output index (0, 0) lands exactly on the square's near corner
    A + X_OFFSET*L*x + Y_OFFSET*L*y and index (out_size-1, out_size-1) on
    the far corner, i.e. the grid spans the square corner to corner.
    """
    if out_size < 2:
        raise ValueError(f"out_size must be >= 2, got {out_size}")
    a = np.asarray(lm.a, dtype=np.float64)
    b = np.asarray(lm.b, dtype=np.float64)
    if lm.hand is Hand.RIGHT:
        a, b = b, a  # mirrored construction
    chord = b - a
    length = float(np.hypot(*chord))
    if length < MIN_LANDMARK_DISTANCE:
        raise DegenerateLandmarksError(
            f"|AB| = {length:.3f}px is below the {MIN_LANDMARK_DISTANCE}px minimum")
    x_hat = chord / length
    y_hat = np.array([-x_hat[1], x_hat[0]])  # +90deg in image coords (y down)
    origin = a + (X_OFFSET * x_hat + Y_OFFSET * y_hat) * length
    step = SIDE * length / (out_size - 1)
    matrix = np.column_stack([x_hat * step, y_hat * step, origin])
    return RoiTransform(matrix)


def extract_roi(image: np.ndarray, lm: LandmarkPair, out_size: int = 224) -> np.ndarray:
    """Crop and resample the ROI square to out_size x out_size.

    Bilinear sampling with clamp-to-edge reads for the parts of the square
    that fall outside the image; errors out only when the whole square
    misses the image.
    """
    tf = roi_transform(lm, out_size)
    h, w = image.shape[:2]
    last = float(out_size - 1)
    corners = tf.apply(np.array([0.0, last, 0.0, last]), np.array([0.0, 0.0, last, last]))
    if (corners[:, 0].max() < 0 or corners[:, 0].min() > w - 1
            or corners[:, 1].max() < 0 or corners[:, 1].min() > h - 1):
        raise ValueError("ROI square lies entirely outside the image")
    out = affine_sample(image, tf.matrix, out_size, out_size)
    if np.issubdtype(image.dtype, np.integer):
        return np.clip(np.rint(out), 0, 255).astype(image.dtype)
    return out
