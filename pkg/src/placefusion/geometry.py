"""Depth-image geometry: back-projection, surface normals, gravity
estimation, and the 3-channel disparity/height/angle (HHA) encoding.

Camera frame: x right, y down, z forward. Pixel (u, v) at depth d
back-projects to ((u - cx) * d / fx, (v - cy) * d / fy, d). The gravity
vector points "down" (toward the ground), so a floor seen from above has a
camera-facing normal opposite to gravity. The initial gravity estimate is
the +y axis.

Everything here is a pure function of its inputs; identical inputs produce
bit-identical outputs.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ContractError, EmptyCloudError

__all__ = [
    "DepthConvention",
    "CameraIntrinsics",
    "DepthImage",
    "OrientedPointCloud",
    "GravityConfig",
    "GravityEstimate",
    "GravityUpdate",
    "SplitNormals",
    "NormalField",
    "HhaConfig",
    "HhaImage",
    "HhaResult",
    "backproject_points",
    "estimate_normals",
    "backproject",
    "split_by_gravity",
    "update_gravity",
    "estimate_gravity",
    "encode_hha",
    "normalize_relative_depth",
    "depth_to_hha",
]


class DepthConvention(enum.Enum):
    """Interpretation of the scalar field in a depth image."""

    METRIC = "metric"                      # meters, larger = farther
    RELATIVE_INVERSE = "relative_inverse"  # unitless inverse depth, larger = nearer


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole camera parameters, all in pixels."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self) -> None:
        if self.fx <= 0 or self.fy <= 0:
            raise ContractError(
                f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}"
            )
        if not 0 <= self.cx < self.width:
            raise ContractError(f"cx={self.cx} outside [0, {self.width})")
        if not 0 <= self.cy < self.height:
            raise ContractError(f"cy={self.cy} outside [0, {self.height})")


@dataclass
class DepthImage:
    """H x W scalar depth field plus its convention.

    A pixel is valid when its value is finite and strictly positive; the
    validity mask is derived, not stored. Invalid pixels ride along as 0,
    negative, or non-finite values and are excluded from every computation.
    """

    values: np.ndarray
    convention: DepthConvention = DepthConvention.METRIC

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2:
            raise ContractError(f"depth values must be 2-D, got shape {v.shape}")
        self.values = v

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def valid_mask(self) -> np.ndarray:
        with np.errstate(invalid="ignore"):
            return np.isfinite(self.values) & (self.values > 0.0)


@dataclass
class OrientedPointCloud:
    """Points with unit normals, each tied to its source pixel.

    pixel_index holds row-major flat indices (v * width + u) into the image
    the cloud came from.
    """

    points: np.ndarray        # (N, 3)
    normals: np.ndarray       # (N, 3), unit length
    pixel_index: np.ndarray   # (N,) int

    def __post_init__(self) -> None:
        self.points = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        self.normals = np.asarray(self.normals, dtype=np.float64).reshape(-1, 3)
        self.pixel_index = np.asarray(self.pixel_index, dtype=np.int64).reshape(-1)
        if not (len(self.points) == len(self.normals) == len(self.pixel_index)):
            raise ContractError("points, normals and pixel_index must have equal length")
        if len(self.normals):
            lengths = np.linalg.norm(self.normals, axis=1)
            if np.any(np.abs(lengths - 1.0) > 1e-6):
                raise ContractError("normals must be unit length within 1e-6")

    def __len__(self) -> int:
        return len(self.points)


class NormalField(NamedTuple):
    """Per-pixel normals with a validity mask and a degeneracy tally."""

    normals: np.ndarray      # (H, W, 3); zero rows where invalid
    valid: np.ndarray        # (H, W) bool
    degenerate_count: int    # pixels dropped for rank-deficient neighborhoods


class SplitNormals(NamedTuple):
    """Normals near-parallel / near-perpendicular to a reference direction."""

    parallel: np.ndarray            # (K, 3)
    perpendicular: np.ndarray       # (M, 3)
    parallel_mask: np.ndarray       # (N,) bool
    perpendicular_mask: np.ndarray  # (N,) bool


class GravityUpdate(NamedTuple):
    g: np.ndarray      # unit 3-vector
    empty_sets: bool   # both input sets were empty; g is the previous estimate


@dataclass(frozen=True)
class GravityConfig:
    """Iteration schedule for gravity estimation.

    The angular threshold starts coarse, switches to fine after
    `coarse_iterations` passes, and finishes with a polish band. A change of
    less than `tol` radians between successive estimates counts as phase
    convergence: it advances the schedule to the next (tighter) threshold,
    and in the last phase it stops the iteration. The tightening matters
    because window-based normals blend across plane creases; only a narrow
    final band rejects those blended normals, which otherwise bias the
    solve by over a degree on desk-scale images. Set polish_d to None for
    the plain two-threshold schedule.
    """

    max_iterations: int = 12
    tol: float = 1e-3
    coarse_d: float = math.pi / 4
    fine_d: float = math.pi / 12
    polish_d: float | None = math.pi / 90
    coarse_iterations: int = 5

    def __post_init__(self) -> None:
        if self.max_iterations < 1:
            raise ContractError("max_iterations must be >= 1")
        for name in ("coarse_d", "fine_d", "polish_d"):
            d = getattr(self, name)
            if d is None:
                continue
            if not 0.0 < d < math.pi / 2:
                raise ContractError(f"{name} must lie in (0, pi/2), got {d}")
        if self.tol <= 0:
            raise ContractError("tol must be positive")

    @property
    def thresholds(self) -> tuple[float, ...]:
        if self.polish_d is None:
            return (self.coarse_d, self.fine_d)
        return (self.coarse_d, self.fine_d, self.polish_d)


@dataclass(frozen=True)
class GravityEstimate:
    """Estimated gravity direction in the camera frame."""

    g: np.ndarray
    iterations_run: int
    final_angle_change: float
    empty_split: bool = False

    def __post_init__(self) -> None:
        g = np.asarray(self.g, dtype=np.float64).reshape(3)
        if abs(np.linalg.norm(g) - 1.0) > 1e-9:
            raise ContractError("gravity vector must be unit length within 1e-9")
        if self.iterations_run < 1:
            raise ContractError("iterations_run must be >= 1")
        object.__setattr__(self, "g", g)


@dataclass(frozen=True)
class HhaConfig:
    """Quantization constants for the 3-channel encoding.

    disparity: per-image linear map of the 1st..99th percentile window onto
    [0, 255]. height: gravity-axis elevation above the 1st-percentile floor,
    saturating at h_max. angle: [0, 180] degrees mapped onto [0, 255]. All
    channels round half up. one_channel replicates disparity into all three
    channels (the depth-only ablation switch).
    """

    h_max: float = 10.0
    median_depth: float = 5.0
    disparity_low_pct: float = 1.0
    disparity_high_pct: float = 99.0
    height_floor_pct: float = 1.0
    normal_window: int = 5
    one_channel: bool = False

    def __post_init__(self) -> None:
        if self.h_max <= 0:
            raise ContractError("h_max must be positive")
        if self.median_depth <= 0:
            raise ContractError("median_depth must be positive")
        if not 0 <= self.disparity_low_pct < self.disparity_high_pct <= 100:
            raise ContractError("disparity percentiles must satisfy 0 <= low < high <= 100")


@dataclass
class HhaImage:
    """3 x H x W uint8 image, channels ordered (disparity, height, angle)."""

    channels: np.ndarray

    def __post_init__(self) -> None:
        c = np.asarray(self.channels)
        if c.ndim != 3 or c.shape[0] != 3 or c.dtype != np.uint8:
            raise ContractError(f"channels must be (3, H, W) uint8, got {c.shape} {c.dtype}")
        self.channels = c

    @property
    def height(self) -> int:
        return self.channels.shape[1]

    @property
    def width(self) -> int:
        return self.channels.shape[2]


class HhaResult(NamedTuple):
    """Encoded image plus the robust statistics used to quantize it.

    floor is the 1st-percentile gravity-axis projection; the camera's
    recovered height above ground is -floor.
    """

    image: HhaImage
    floor: float
    disparity_low: float
    disparity_high: float
    constant_disparity: bool


def _unit(v: np.ndarray) -> np.ndarray:
    n = np.linalg.norm(v)
    if n == 0:
        raise ContractError("zero vector has no direction")
    return v / n


def _check_unit(v: np.ndarray, name: str) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64).reshape(3)
    if abs(np.linalg.norm(v) - 1.0) > 1e-6:
        raise ContractError(f"{name} must be a unit vector")
    return v


def backproject_points(depth: DepthImage, intr: CameraIntrinsics) -> tuple[np.ndarray, np.ndarray]:
    """Per-pixel camera-frame positions for a metric depth image.

    Returns an (H, W, 3) position map and the (H, W) validity mask. Invalid
    pixels get position (0, 0, 0).
    """
    if depth.convention is not DepthConvention.METRIC:
        raise ContractError(
            "back-projection needs metric depth; run normalize_relative_depth first"
        )
    if (depth.height, depth.width) != (intr.height, intr.width):
        raise ContractError(
            f"depth size {depth.width}x{depth.height} does not match "
            f"intrinsics {intr.width}x{intr.height}"
        )
    valid = depth.valid_mask
    d = np.where(valid, depth.values, 0.0)
    u = np.arange(intr.width, dtype=np.float64)
    v = np.arange(intr.height, dtype=np.float64)
    x = (u[None, :] - intr.cx) * d / intr.fx
    y = (v[:, None] - intr.cy) * d / intr.fy
    return np.stack([x, y, d], axis=-1), valid


def estimate_normals(points: np.ndarray, valid: np.ndarray, window: int = 5) -> NormalField:
    """Local-plane normals over a square pixel window.

    For each valid pixel, the normal is the smallest-eigenvalue eigenvector
    of the covariance of the valid neighbor positions inside the window,
    flipped to face the camera (normal . (-p) >= 0). Pixels with fewer than
    3 valid neighbors are dropped; rank-deficient (collinear) neighborhoods
    are dropped and counted in degenerate_count.
    """
    if window < 3 or window % 2 == 0:
        raise ContractError(f"window must be odd and >= 3, got {window}")
    points = np.asarray(points, dtype=np.float64)
    valid = np.asarray(valid, dtype=bool)
    h, w = valid.shape
    pad = window // 2

    pts = np.where(valid[..., None], points, 0.0)
    pp = np.pad(pts, ((pad, pad), (pad, pad), (0, 0)))
    mm = np.pad(valid, pad).astype(np.float64)

    win_m = sliding_window_view(mm, (window, window))                 # (H, W, k, k)
    win_p = sliding_window_view(pp, (window, window), axis=(0, 1))    # (H, W, 3, k, k)
    counts = win_m.sum(axis=(-2, -1))

    ok = valid & (counts >= 3)
    normals_map = np.zeros((h, w, 3))
    valid_map = np.zeros((h, w), dtype=bool)
    if not np.any(ok):
        return NormalField(normals_map, valid_map, 0)

    # Center windows on the target pixel so second moments stay well
    # conditioned far from the camera.
    centered = win_p - pts[:, :, :, None, None]
    masked = centered * win_m[:, :, None, :, :]
    s1 = masked.sum(axis=(-2, -1))[ok]                                # (K, 3)
    s2 = np.einsum("hwiab,hwjab->hwij", masked, centered)[ok]         # (K, 3, 3)

    n = counts[ok][:, None]
    mu = s1 / n
    cov = s2 / n[..., None] - mu[:, :, None] * mu[:, None, :]

    evals, evecs = np.linalg.eigh(cov)
    normals = evecs[:, :, 0].copy()
    # rank < 2: the middle eigenvalue carries no real spread
    degenerate = evals[:, 1] <= 1e-9 * np.maximum(evals[:, 2], 0.0)

    centers = pts[ok]
    dots = np.einsum("ij,ij->i", normals, centers)
    normals[dots > 0] *= -1.0
    on_edge = dots == 0.0
    if np.any(on_edge):
        # no camera-facing preference; canonical sign: first nonzero component positive
        sub = normals[on_edge]
        first = np.argmax(sub != 0.0, axis=1)
        signs = np.sign(sub[np.arange(len(sub)), first])
        sub[signs < 0] *= -1.0
        normals[on_edge] = sub

    normals /= np.linalg.norm(normals, axis=1, keepdims=True)

    rows, cols = np.nonzero(ok)
    keep = ~degenerate
    normals_map[rows[keep], cols[keep]] = normals[keep]
    valid_map[rows[keep], cols[keep]] = True
    return NormalField(normals_map, valid_map, int(degenerate.sum()))


def backproject(depth: DepthImage, intr: CameraIntrinsics, window: int = 5) -> OrientedPointCloud:
    """Back-project a metric depth image into an oriented point cloud.

    The cloud holds one point per valid pixel that also received a
    well-defined normal from estimate_normals; the rest are dropped.
    """
    points, valid = backproject_points(depth, intr)
    if not valid.any():
        raise EmptyCloudError("depth image has no valid pixels")
    field = estimate_normals(points, valid, window)
    if not field.valid.any():
        raise EmptyCloudError("no pixel has a well-defined surface normal")
    flat = np.flatnonzero(field.valid.ravel())
    return OrientedPointCloud(
        points.reshape(-1, 3)[flat],
        field.normals.reshape(-1, 3)[flat],
        flat,
    )


def split_by_gravity(normals: np.ndarray, g_prev: np.ndarray, d: float) -> SplitNormals:
    """Partition unit normals by their angle to the reference direction.

    parallel: angle < d or angle > pi - d. perpendicular: within d of 90
    degrees. Normals in neither band are left out. Membership depends only
    on |cos|, so the split is unchanged under negating any normal. For
    d <= pi/4 (all values used by the estimation schedule) the bands cannot
    overlap; for wider d the parallel band takes precedence so the returned
    sets stay disjoint.
    """
    g_prev = _check_unit(g_prev, "g_prev")
    if not 0.0 < d < math.pi / 2:
        raise ContractError(f"d must lie in (0, pi/2), got {d}")
    normals = np.asarray(normals, dtype=np.float64).reshape(-1, 3)
    ang = np.arccos(np.clip(normals @ g_prev, -1.0, 1.0))
    par = (ang < d) | (ang > math.pi - d)
    perp = (math.pi / 2 - d < ang) & (ang < math.pi / 2 + d) & ~par
    return SplitNormals(normals[par], normals[perp], par, perp)


def _lex_smallest_unit(basis: np.ndarray) -> np.ndarray:
    """Lexicographically smallest unit vector in the span of orthonormal columns."""
    for row in range(3):
        r = basis[row, :]
        nr = np.linalg.norm(r)
        if nr > 1e-12:
            g = basis @ (-r / nr)
            return g / np.linalg.norm(g)
    raise ContractError("degenerate eigenbasis")  # orthonormal columns cannot vanish row-wise


def update_gravity(
    parallel: np.ndarray, perpendicular: np.ndarray, g_prev: np.ndarray
) -> GravityUpdate:
    """One gravity refinement step.

    Minimizes the sum of squared cosines to the perpendicular set plus
    squared sines to the parallel set over unit vectors. For unit normals
    that objective is a quadratic form, so the minimizer is the
    smallest-eigenvalue eigenvector of

        M = sum_perp n n^T - sum_parallel n n^T.

    The sign is chosen to keep g . g_prev >= 0. A tie between the two
    smallest eigenvalues (within 1e-9) is broken by taking the
    lexicographically smallest unit eigenvector of the tied eigenspace.
    Empty inputs return g_prev unchanged with the empty_sets flag raised.
    """
    g_prev = _check_unit(g_prev, "g_prev")
    parallel = np.asarray(parallel, dtype=np.float64).reshape(-1, 3)
    perpendicular = np.asarray(perpendicular, dtype=np.float64).reshape(-1, 3)
    if len(parallel) == 0 and len(perpendicular) == 0:
        return GravityUpdate(g_prev.copy(), True)

    m = perpendicular.T @ perpendicular - parallel.T @ parallel
    evals, evecs = np.linalg.eigh(m)
    if evals[1] - evals[0] <= 1e-9:
        dim = 3 if evals[2] - evals[0] <= 1e-9 else 2
        g = _lex_smallest_unit(evecs[:, :dim])
    else:
        g = evecs[:, 0]
    if g @ g_prev < 0:
        g = -g
    return GravityUpdate(g / np.linalg.norm(g), False)


def estimate_gravity(
    cloud: OrientedPointCloud, config: GravityConfig | None = None
) -> GravityEstimate:
    """Iterative split-and-minimize gravity estimation from surface normals.

    Starts at the +y axis and alternates split_by_gravity with
    update_gravity under the coarse-to-fine threshold schedule. Stops once
    the last phase converges below config.tol or max_iterations is reached.
    """
    config = config or GravityConfig()
    if len(cloud) == 0:
        raise EmptyCloudError("cannot estimate gravity from an empty cloud")
    thresholds = config.thresholds
    g = np.array([0.0, 1.0, 0.0])
    warn = False
    change = math.inf
    iterations = 0
    phase = 0
    for t in range(1, config.max_iterations + 1):
        if phase == 0 and t > config.coarse_iterations:
            phase = 1
        parts = split_by_gravity(cloud.normals, g, thresholds[phase])
        step = update_gravity(parts.parallel, parts.perpendicular, g)
        warn = warn or step.empty_sets
        change = float(np.arccos(np.clip(step.g @ g, -1.0, 1.0)))
        g = step.g
        iterations = t
        if change < config.tol:
            if phase == len(thresholds) - 1:
                break
            phase += 1
    return GravityEstimate(g, iterations, change, warn)


def normalize_relative_depth(depth: DepthImage, median_depth: float = 5.0) -> DepthImage:
    """Convert relative inverse depth to pseudo-metric depth.

    Output values are s / (v + 1e-6) with s picked so the median over valid
    pixels equals median_depth exactly; the depth ordering is preserved.
    Invalid pixels become 0.
    """
    if depth.convention is not DepthConvention.RELATIVE_INVERSE:
        raise ContractError("input is not relative inverse depth")
    if median_depth <= 0:
        raise ContractError("median_depth must be positive")
    valid = depth.valid_mask
    if not valid.any():
        raise EmptyCloudError("relative depth image has no valid pixels")
    inv = 1.0 / (depth.values[valid] + 1e-6)
    scale = median_depth / float(np.median(inv))
    out = np.zeros_like(depth.values)
    out[valid] = scale * inv
    return DepthImage(out, DepthConvention.METRIC)


def _round_half_up(x: np.ndarray) -> np.ndarray:
    return np.floor(np.clip(x, 0.0, 255.0) + 0.5).astype(np.uint8)


def encode_hha(
    depth: DepthImage,
    intr: CameraIntrinsics,
    gravity: GravityEstimate,
    config: HhaConfig | None = None,
) -> HhaResult:
    """Encode a depth image into the 3-channel disparity/height/angle image.

    Disparity is 1/depth for metric input and the raw value for relative
    inverse input, mapped linearly from its per-image percentile window onto
    [0, 255]. Height is the gravity-axis elevation above the per-image
    percentile floor, saturating at h_max. Angle is the angle between the
    surface normal and gravity, [0, 180] degrees onto [0, 255]. Pixels
    without valid depth or without a well-defined normal encode as
    (0, 0, 0). A constant disparity field maps to 128 everywhere valid and
    raises the constant_disparity flag.
    """
    config = config or HhaConfig()
    g = _check_unit(gravity.g, "gravity")

    if depth.convention is DepthConvention.RELATIVE_INVERSE:
        metric = normalize_relative_depth(depth, config.median_depth)
        disparity_src = depth.values
    else:
        metric = depth
        disparity_src = np.zeros_like(depth.values)
        mask = depth.valid_mask
        disparity_src[mask] = 1.0 / depth.values[mask]

    points, depth_valid = backproject_points(metric, intr)
    field = estimate_normals(points, depth_valid, config.normal_window)
    valid = field.valid
    if not valid.any():
        raise EmptyCloudError("no valid pixels to encode")

    h, w = valid.shape
    channels = np.zeros((3, h, w), dtype=np.uint8)

    disp = disparity_src[valid]
    lo, hi = np.percentile(disp, [config.disparity_low_pct, config.disparity_high_pct])
    constant = hi - lo == 0.0
    if constant:
        channels[0][valid] = 128
    else:
        channels[0][valid] = _round_half_up((disp - lo) / (hi - lo) * 255.0)

    proj = -(points[valid] @ g)
    floor = float(np.percentile(proj, config.height_floor_pct))
    channels[1][valid] = _round_half_up((proj - floor) / config.h_max * 255.0)

    cos = np.clip(field.normals[valid] @ g, -1.0, 1.0)
    angle_deg = np.degrees(np.arccos(cos))
    channels[2][valid] = _round_half_up(angle_deg / 180.0 * 255.0)

    if config.one_channel:
        channels[1] = channels[0]
        channels[2] = channels[0]

    return HhaResult(HhaImage(channels), floor, float(lo), float(hi), bool(constant))


def depth_to_hha(
    depth: DepthImage,
    intr: CameraIntrinsics,
    gravity_config: GravityConfig | None = None,
    hha_config: HhaConfig | None = None,
) -> tuple[HhaResult, GravityEstimate]:
    """Full per-image pipeline: normalize if needed, estimate gravity, encode."""
    hha_config = hha_config or HhaConfig()
    if depth.convention is DepthConvention.RELATIVE_INVERSE:
        metric = normalize_relative_depth(depth, hha_config.median_depth)
    else:
        metric = depth
    cloud = backproject(metric, intr, hha_config.normal_window)
    gravity = estimate_gravity(cloud, gravity_config)
    return encode_hha(depth, intr, gravity, hha_config), gravity
