"""Quadratic-Bezier crease model and all identity/sample randomness.

A palmprint-like identity is a bundle of quadratic Bezier creases: a few
dominant principal lines anchored to opposite corner regions of the unit
square, plus many thin wrinkles placed freely. Per-sample variation comes
from small Gaussian perturbations of the control points together with
randomized stroke widths, colors, background and blur.

All coordinates live in the unit square; the renderer scales them to
pixels. Every sampler takes an explicit `numpy.random.Generator` so that
results are pure functions of the stream (see `streams`).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

# Perturbed coordinates may fall off-canvas, but only this far.
COORD_MIN = -0.25
COORD_MAX = 1.25

_MAX_RESAMPLE_ATTEMPTS = 100


class GenerationError(RuntimeError):
    """Raised when resampling cannot satisfy a structural constraint."""


class DegenerateChordError(ValueError):
    """Raised when a control point is requested for a zero-length chord."""


class Role(enum.Enum):
    PRINCIPAL = "principal"
    WRINKLE = "wrinkle"


class Hand(enum.Enum):
    LEFT = "left"
    RIGHT = "right"


class Point2(NamedTuple):
    x: float
    y: float


@dataclass(frozen=True)
class CreaseSpec:
    """One quadratic Bezier crease, truncated to the window [t0, t1]."""

    start: Point2
    control: Point2
    end: Point2
    t0: float = 0.0
    t1: float = 1.0
    role: Role = Role.WRINKLE

    def __post_init__(self):
        if not (0.0 <= self.t0 < self.t1 <= 1.0):
            raise ValueError(f"need 0 <= t0 < t1 <= 1, got ({self.t0}, {self.t1})")
        if self.t0 >= 0.3 or self.t1 <= 0.7:
            raise ValueError(f"truncation window must satisfy t0 < 0.3 < 0.7 < t1, got ({self.t0}, {self.t1})")

    def points(self) -> np.ndarray:
        """(3, 2) array of start/control/end."""
        return np.array([self.start, self.control, self.end], dtype=np.float64)


@dataclass(frozen=True)
class IdentitySpec:
    """Per-identity crease parameters; the template every sample perturbs."""

    identity_id: int
    principals: tuple[CreaseSpec, ...]
    wrinkles: tuple[CreaseSpec, ...]
    hand: Hand

    @property
    def m(self) -> int:
        return len(self.principals)

    @property
    def n(self) -> int:
        return len(self.wrinkles)


@dataclass(frozen=True)
class SampleParams:
    """One realized sample: perturbed creases plus rendering attributes.

    `creases`, `widths` and `colors` are index-aligned and already in draw
    order (wrinkles first, principals last, so principals render on top).
    Widths are output pixels; colors are 8-bit RGB.
    """

    identity_id: int
    sample_id: int
    creases: tuple[CreaseSpec, ...]
    widths: tuple[float, ...]
    colors: tuple[tuple[int, int, int], ...]
    background_ref: str
    blur_sigma: float


@dataclass(frozen=True)
class NoiseConfig:
    """Gaussian perturbation applied to crease points, unit-square units."""

    std_principal: float = 0.04
    std_wrinkle: float = 0.01
    mean: float = 0.0

    def __post_init__(self):
        if self.std_principal < 0 or self.std_wrinkle < 0:
            raise ValueError("noise stds must be >= 0")


@dataclass(frozen=True)
class SamplerConfig:
    """Bounds and ranges for identity/sample parameter sampling."""

    m_min: int = 3
    m_max: int = 5
    n_min: int = 5
    n_max: int = 15
    edge_margin: float = 0.1          # principal endpoints keep off corners
    t0_max: float = 0.3               # t0 ~ U(0, t0_max)
    t1_min: float = 0.7               # t1 ~ U(t1_min, 1)
    principal_width: tuple[float, float] = (1.5, 3.0)
    wrinkle_width: tuple[float, float] = (0.5, 1.5)
    color_low: float = 10.0           # per-channel stroke color ~ U(low, high)
    color_high: float = 90.0
    blur_prob: float = 0.5
    blur_sigma_max: float = 2.0
    wrinkle_control: str = "rectangle"  # or "uniform" (Algorithm-1 ablation)
    hand_mode: str = "both"             # "both" | "left" | "right"
    enable_principals: bool = True
    enable_wrinkles: bool = True


@dataclass(frozen=True)
class BackgroundPool:
    """The set of backgrounds a sample may draw, as opaque refs.

    File-backed pools carry "file:<relpath>" refs; otherwise refs are
    synthesized as "proc:<kind>:<seed>" from `procedural_kinds`. A disabled
    pool always yields plain white.
    """

    refs: tuple[str, ...] = ()
    procedural_kinds: tuple[str, ...] = ("solid", "noise", "gradient")
    enabled: bool = True

    def draw(self, rng: np.random.Generator) -> str:
        if not self.enabled:
            return "proc:solid:255"
        if self.refs:
            return self.refs[int(rng.integers(len(self.refs)))]
        if not self.procedural_kinds:
            raise GenerationError("background pool is empty and procedural mode is disabled")
        kind = self.procedural_kinds[int(rng.integers(len(self.procedural_kinds)))]
        if kind == "solid":
            # keep solid fills light so dark creases stay visible
            return f"proc:solid:{int(rng.integers(120, 236))}"
        return f"proc:{kind}:{int(rng.integers(0, 2**31))}"


def bezier_point(crease: CreaseSpec, t: float) -> Point2:
    """Evaluate the full (untruncated) curve at parameter t in [0, 1]."""
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"t must be in [0, 1], got {t}")
    u = 1.0 - t
    s, c, e = crease.start, crease.control, crease.end
    w0, w1, w2 = u * u, 2.0 * t * u, t * t
    return Point2(w0 * s.x + w1 * c.x + w2 * e.x,
                  w0 * s.y + w1 * c.y + w2 * e.y)


def bezier_flatten(crease: CreaseSpec, tolerance: float = 1e-3) -> np.ndarray:
    """Polyline approximation of the curve restricted to [t0, t1].

    Vertices lie exactly on the curve; uniform-in-t subdivision with the
    segment count chosen from the exact quadratic chord-deviation bound
    |s - 2c + e| * dt^2 / 4, so no curve point is farther than `tolerance`
    from the polyline. Returns an (k+1, 2) float array; a fully degenerate
    curve (s == c == e) collapses to a single vertex.
    """
    if tolerance <= 0:
        raise ValueError(f"tolerance must be > 0, got {tolerance}")
    s, c, e = crease.start, crease.control, crease.end
    ax = s.x - 2.0 * c.x + e.x
    ay = s.y - 2.0 * c.y + e.y
    accel = np.hypot(ax, ay)
    if accel == 0.0 and s == c == e:
        return np.array([[s.x, s.y]], dtype=np.float64)
    span = crease.t1 - crease.t0
    k = max(1, int(np.ceil(np.sqrt(accel * span * span / (4.0 * tolerance)))))
    t = np.linspace(crease.t0, crease.t1, k + 1)
    u = 1.0 - t
    pts = np.empty((k + 1, 2), dtype=np.float64)
    pts[:, 0] = u * u * s.x + 2.0 * t * u * c.x + t * t * e.x
    pts[:, 1] = u * u * s.y + 2.0 * t * u * c.y + t * t * e.y
    return pts


def _edge_point_topleft(u: float) -> Point2:
    """Arclength point on the corner polyline (1,0) -> (0,0) -> (0,1), u in [0,1]."""
    d = 2.0 * u
    if d <= 1.0:
        return Point2(1.0 - d, 0.0)
    return Point2(0.0, d - 1.0)


def _edge_point_bottomright(u: float) -> Point2:
    """Arclength point on the corner polyline (1,0) -> (1,1) -> (0,1), u in [0,1]."""
    d = 2.0 * u
    if d <= 1.0:
        return Point2(1.0, d)
    return Point2(1.0 - (d - 1.0), 1.0)


def _mirror_x(p: Point2) -> Point2:
    return Point2(1.0 - p.x, p.y)


def sample_control_point(rng: np.random.Generator, s: Point2, e: Point2) -> Point2:
    """Control point from the chord-aligned rectangle (2/3 L by 1/3 L).

    The rectangle is centered on the chord midpoint and parallel to the
    chord: offsets a ~ U(-L/3, L/3) along it, b ~ U(-L/6, L/6) across it.
    """
    dx, dy = e.x - s.x, e.y - s.y
    length = float(np.hypot(dx, dy))
    if length == 0.0:
        raise DegenerateChordError(f"start equals end at {s}")
    ux, uy = dx / length, dy / length
    a = float(rng.uniform(-length / 3.0, length / 3.0))
    b = float(rng.uniform(-length / 6.0, length / 6.0))
    mx, my = (s.x + e.x) / 2.0, (s.y + e.y) / 2.0
    # perpendicular is (-uy, ux); b's symmetric range makes the sign moot
    return Point2(mx + a * ux - b * uy, my + a * uy + b * ux)


def _sample_truncation(rng: np.random.Generator, config: SamplerConfig) -> tuple[float, float]:
    t0 = float(rng.uniform(0.0, config.t0_max))
    t1 = float(rng.uniform(config.t1_min, 1.0))
    return t0, t1


def sample_principal_lines(
    rng: np.random.Generator,
    m: int,
    hand: Hand = Hand.LEFT,
    config: SamplerConfig = SamplerConfig(),
) -> list[CreaseSpec]:
    """Sample m principal lines anchored to the corner edge polylines.

    Start points sit on the top-left corner polyline and end points on the
    bottom-right one, each placed by an arclength fraction drawn uniformly
    from [margin, 1-margin]. Both fraction vectors are sorted and required
    to be strictly increasing (the non-intersection rule); exact ties
    trigger a resample. The right hand is the x-mirror of a left-hand draw.
    """
    if m < 1:
        raise ValueError(f"m must be >= 1, got {m}")
    lo, hi = config.edge_margin, 1.0 - config.edge_margin
    for _ in range(_MAX_RESAMPLE_ATTEMPTS):
        u_start = np.sort(rng.uniform(lo, hi, m))
        u_end = np.sort(rng.uniform(lo, hi, m))
        if np.all(np.diff(u_start) > 0) and np.all(np.diff(u_end) > 0):
            break
    else:
        raise GenerationError(f"could not draw {m} strictly ordered edge points")

    creases = []
    for us, ue in zip(u_start, u_end):
        s = _edge_point_topleft(float(us))
        e = _edge_point_bottomright(float(ue))
        c = sample_control_point(rng, s, e)
        t0, t1 = _sample_truncation(rng, config)
        if hand is Hand.RIGHT:
            s, c, e = _mirror_x(s), _mirror_x(c), _mirror_x(e)
        creases.append(CreaseSpec(s, c, e, t0, t1, Role.PRINCIPAL))
    return creases


def sample_wrinkles(
    rng: np.random.Generator,
    n: int,
    config: SamplerConfig = SamplerConfig(),
) -> list[CreaseSpec]:
    """Sample n wrinkles with endpoints uniform on the whole unit square.

    Control points follow the same chord rectangle as principals by
    default; `wrinkle_control="uniform"` draws them uniformly from the
    square instead.
    """
    if n < 0:
        raise ValueError(f"n must be >= 0, got {n}")
    uniform_control = config.wrinkle_control == "uniform"
    creases = []
    for _ in range(n):
        for _ in range(_MAX_RESAMPLE_ATTEMPTS):
            s = Point2(*rng.random(2))
            e = Point2(*rng.random(2))
            if s != e:
                break
        else:
            raise GenerationError("could not draw distinct wrinkle endpoints")
        if uniform_control:
            c = Point2(*rng.random(2))
        else:
            c = sample_control_point(rng, s, e)
        t0, t1 = _sample_truncation(rng, config)
        creases.append(CreaseSpec(s, c, e, t0, t1, Role.WRINKLE))
    return creases


def sample_identity(
    rng: np.random.Generator,
    config: SamplerConfig = SamplerConfig(),
    identity_id: int = 0,
) -> IdentitySpec:
    """Draw a full identity: counts, hand, principal lines and wrinkles.

    The caller derives `rng` from (master_seed, identity_id) so identities
    are independently reproducible; see `streams.identity_stream`.
    """
    if config.m_min > config.m_max or config.n_min > config.n_max:
        raise ValueError("sampler bounds must be ordered (min <= max)")
    m = int(rng.integers(config.m_min, config.m_max + 1)) if config.enable_principals else 0
    n = int(rng.integers(config.n_min, config.n_max + 1)) if config.enable_wrinkles else 0
    if config.hand_mode == "both":
        hand = Hand.LEFT if int(rng.integers(2)) == 0 else Hand.RIGHT
    else:
        hand = Hand(config.hand_mode)
    principals = tuple(sample_principal_lines(rng, m, hand, config)) if m else ()
    wrinkles = tuple(sample_wrinkles(rng, n, config)) if n else ()
    return IdentitySpec(identity_id, principals, wrinkles, hand)


def _perturb_creases(
    rng: np.random.Generator,
    creases: Sequence[CreaseSpec],
    std: float,
    mean: float,
) -> list[CreaseSpec]:
    if not creases:
        return []
    pts = np.stack([c.points() for c in creases])
    pts = pts + rng.normal(mean, std, size=pts.shape)
    np.clip(pts, COORD_MIN, COORD_MAX, out=pts)
    return [
        CreaseSpec(Point2(*p[0]), Point2(*p[1]), Point2(*p[2]), c.t0, c.t1, c.role)
        for c, p in zip(creases, pts)
    ]


def perturb_identity(
    rng: np.random.Generator,
    identity: IdentitySpec,
    noise: NoiseConfig,
    sample_id: int,
    config: SamplerConfig = SamplerConfig(),
    backgrounds: BackgroundPool = BackgroundPool(),
) -> SampleParams:
    """Realize one sample of an identity.

    Every crease point receives an independent Gaussian delta (per-role
    std); truncation windows stay fixed. Widths, colors, blur and the
    background ref are drawn per sample. The caller derives `rng` from
    (master_seed, identity_id, sample_id); see `streams.sample_stream`.
    """
    principals = _perturb_creases(rng, identity.principals, noise.std_principal, noise.mean)
    wrinkles = _perturb_creases(rng, identity.wrinkles, noise.std_wrinkle, noise.mean)

    m, n = len(principals), len(wrinkles)
    w_p = rng.uniform(*config.principal_width, size=m)
    w_w = rng.uniform(*config.wrinkle_width, size=n)
    rgb = np.rint(rng.uniform(config.color_low, config.color_high, size=(m + n, 3)))
    rgb = np.clip(rgb, 0, 255).astype(int)

    blur_sigma = 0.0
    if rng.random() < config.blur_prob:
        blur_sigma = float(rng.uniform(0.0, config.blur_sigma_max))
    background_ref = backgrounds.draw(rng)

    # draw order: wrinkles below, principals on top
    creases = tuple(wrinkles) + tuple(principals)
    widths = tuple(float(w) for w in w_w) + tuple(float(w) for w in w_p)
    colors_p = [tuple(int(v) for v in row) for row in rgb[:m]]
    colors_w = [tuple(int(v) for v in row) for row in rgb[m:]]
    colors = tuple(colors_w) + tuple(colors_p)
    return SampleParams(
        identity_id=identity.identity_id,
        sample_id=sample_id,
        creases=creases,
        widths=widths,
        colors=colors,  # type: ignore[arg-type]
        background_ref=background_ref,
        blur_sigma=blur_sigma,
    )
