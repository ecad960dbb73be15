"""Analytic fixtures: piecewise-planar depth scenes with exact normals and
gravity, and clustered embedding datasets with controllable modality
complementarity and train/test domain shift.

Scenes are the geometry oracle: every rendered pixel is a closed-form
ray-plane intersection, so normals, heights, and gravity all have exact
expected values. Embedding datasets are the classifier oracle: a
nearest-class-mean rule predicts their attainable accuracy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .data_io import EmbeddingSet, Modality
from .errors import ContractError
from .geometry import CameraIntrinsics, DepthConvention, DepthImage

__all__ = [
    "Plane",
    "SceneSpec",
    "RenderedScene",
    "vertical_wall",
    "render_depth",
    "EmbeddingSpec",
    "SynthEmbeddings",
    "generate_embeddings",
]


@dataclass(frozen=True)
class Plane:
    """Plane {p : normal . p = offset} with the normal facing the camera.

    A camera-facing normal satisfies normal . p < 0 for points in front of
    the camera, which forces offset < 0.
    """

    normal: tuple[float, float, float]
    offset: float

    def __post_init__(self) -> None:
        n = np.asarray(self.normal, dtype=np.float64)
        if abs(np.linalg.norm(n) - 1.0) > 1e-9:
            raise ContractError("plane normal must be unit length")
        if self.offset >= 0:
            raise ContractError("camera-facing planes need a negative offset")

    @property
    def n(self) -> np.ndarray:
        return np.asarray(self.normal, dtype=np.float64)


def vertical_wall(gravity: np.ndarray, azimuth: float, distance: float) -> Plane:
    """Wall perpendicular to gravity at the given distance from the camera.

    azimuth is measured within the horizontal plane from the camera's
    forward (+z) direction, so azimuth 0 puts the wall straight ahead. The
    wall normal points back at the camera.
    """
    g = np.asarray(gravity, dtype=np.float64)
    g = g / np.linalg.norm(g)
    forward = np.array([0.0, 0.0, 1.0])
    e1 = forward - (g @ forward) * g
    if np.linalg.norm(e1) < 1e-6:
        # camera looks straight along gravity; fall back to the x axis
        e1 = np.array([1.0, 0.0, 0.0]) - (g @ np.array([1.0, 0.0, 0.0])) * g
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(g, e1)
    direction = math.cos(azimuth) * e1 + math.sin(azimuth) * e2
    if distance <= 0:
        raise ContractError("wall distance must be positive")
    return Plane(tuple(-direction), -float(distance))


@dataclass
class SceneSpec:
    """Camera above an infinite ground plane, plus optional walls.

    gravity is the true "down" direction in the camera frame; the ground
    plane sits camera_height below the camera along gravity. noise_sigma is
    the standard deviation of additive depth noise in depth units.
    """

    intrinsics: CameraIntrinsics
    camera_height: float = 1.5
    gravity: tuple[float, float, float] = (0.0, 1.0, 0.0)
    walls: list[Plane] = field(default_factory=list)
    noise_sigma: float = 0.0
    seed: int = 0
    include_ground: bool = True

    def __post_init__(self) -> None:
        g = np.asarray(self.gravity, dtype=np.float64)
        norm = np.linalg.norm(g)
        if norm == 0:
            raise ContractError("gravity must be a nonzero direction")
        self.gravity = tuple(g / norm)
        if self.include_ground and self.camera_height <= 0:
            raise ContractError("camera_height must be positive")
        if self.noise_sigma < 0:
            raise ContractError("noise_sigma must be >= 0")

    @property
    def g(self) -> np.ndarray:
        return np.asarray(self.gravity, dtype=np.float64)

    def planes(self) -> list[Plane]:
        out = list(self.walls)
        if self.include_ground:
            # ground normal is "up": opposite to gravity, camera-facing from above
            out.insert(0, Plane(tuple(-self.g), -float(self.camera_height)))
        return out


class RenderedScene(NamedTuple):
    depth: DepthImage          # metric convention; invalid pixels are 0
    normals: np.ndarray        # (H, W, 3) exact camera-facing plane normals
    gravity: np.ndarray        # exact unit gravity direction
    plane_index: np.ndarray    # (H, W) index into spec.planes(), -1 where invalid


def render_depth(spec: SceneSpec) -> RenderedScene:
    """Ray-cast the scene: per-pixel nearest positive ray-plane intersection.

    Depth noise perturbs the stored depth values only; the returned normals
    and gravity stay exact. Rays that miss every plane mark their pixel
    invalid.
    """
    planes = spec.planes()
    if not planes:
        raise ContractError("scene needs at least one plane")
    intr = spec.intrinsics
    u = np.arange(intr.width, dtype=np.float64)
    v = np.arange(intr.height, dtype=np.float64)
    dirs = np.empty((intr.height, intr.width, 3))
    dirs[..., 0] = (u[None, :] - intr.cx) / intr.fx
    dirs[..., 1] = (v[:, None] - intr.cy) / intr.fy
    dirs[..., 2] = 1.0

    best_t = np.full((intr.height, intr.width), np.inf)
    best_idx = np.full((intr.height, intr.width), -1, dtype=np.int64)
    for i, plane in enumerate(planes):
        denom = dirs @ plane.n
        with np.errstate(divide="ignore", invalid="ignore"):
            t = plane.offset / denom
        hit = (denom != 0.0) & (t > 0.0) & (t < best_t)
        best_t[hit] = t[hit]
        best_idx[hit] = i

    valid = best_idx >= 0
    depth = np.where(valid, best_t, 0.0)
    if spec.noise_sigma > 0:
        rng = np.random.default_rng(spec.seed)
        depth = depth + np.where(valid, rng.normal(0.0, spec.noise_sigma, depth.shape), 0.0)
        depth[depth <= 0] = 0.0

    normals = np.zeros((intr.height, intr.width, 3))
    for i, plane in enumerate(planes):
        normals[best_idx == i] = plane.n
    return RenderedScene(
        DepthImage(depth, DepthConvention.METRIC), normals, spec.g.copy(), best_idx
    )


# ---------------------------------------------------------------------------
# Synthetic embeddings


@dataclass
class EmbeddingSpec:
    """Clustered two-modality embedding dataset.

    Class means are drawn with pairwise distance >= separation, samples are
    mean plus Gaussian noise. mode "both" keeps both modalities informative
    for every class; mode "split" collapses the RGB means of the second
    half of the classes onto a single point and the HHA means of the first
    half likewise, so each modality can discriminate only its own half.
    domain_shift displaces all test vectors by a fixed seeded offset of that
    norm, per modality.
    """

    classes: int = 100
    samples_per_class: int = 10
    test_samples_per_class: int | None = None
    dim: int = 32
    separation: float = 10.0
    noise_sigma: float = 1.0
    mode: str = "both"            # "both" or "split"
    domain_shift: float = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.classes < 2:
            raise ContractError("classes must be >= 2")
        if self.samples_per_class < 1:
            raise ContractError("samples_per_class must be >= 1")
        if self.dim < 2:
            raise ContractError("dim must be >= 2")
        if self.separation <= 0:
            raise ContractError("separation must be > 0")
        if self.noise_sigma < 0:
            raise ContractError("noise_sigma must be >= 0")
        if self.mode not in ("both", "split"):
            raise ContractError(f"mode must be 'both' or 'split', got {self.mode!r}")
        if self.domain_shift < 0:
            raise ContractError("domain_shift must be >= 0")

    @property
    def test_count(self) -> int:
        return self.test_samples_per_class or self.samples_per_class


class SynthEmbeddings(NamedTuple):
    train_rgb: EmbeddingSet
    train_hha: EmbeddingSet
    test_rgb: EmbeddingSet
    test_hha: EmbeddingSet
    train_labels: np.ndarray
    test_labels: np.ndarray
    rgb_means: np.ndarray      # (classes, dim) the means actually used per class
    hha_means: np.ndarray


def _draw_means(rng: np.random.Generator, classes: int, dim: int, separation: float) -> np.ndarray:
    """Rejection-sample class means with pairwise distance >= separation.

    The per-dimension scale separation/sqrt(dim) keeps the typical pairwise
    distance near sqrt(2)*separation for any dimension, so feature
    magnitudes stay comparable across configurations.
    """
    means = np.empty((classes, dim))
    scale = separation / math.sqrt(dim)
    count = 0
    attempts = 0
    while count < classes:
        candidate = rng.normal(0.0, scale, dim)
        attempts += 1
        if attempts > 1000 * classes:
            raise ContractError("could not place class means at the requested separation")
        if count == 0 or np.linalg.norm(means[:count] - candidate, axis=1).min() >= separation:
            means[count] = candidate
            count += 1
    return means


def generate_embeddings(spec: EmbeddingSpec) -> SynthEmbeddings:
    """Deterministic (seeded) train/test embedding sets with exact labels."""
    rng = np.random.default_rng(spec.seed)
    rgb_means = _draw_means(rng, spec.classes, spec.dim, spec.separation)
    hha_means = _draw_means(rng, spec.classes, spec.dim, spec.separation)
    if spec.mode == "split":
        half = spec.classes // 2
        # the collapsed modality keeps the first mean of its uninformative half
        rgb_means[half:] = rgb_means[half].copy()
        hha_means[:half] = hha_means[0].copy()

    def sample_split(per_class: int, prefix: str, shift_rgb, shift_hha):
        labels = np.repeat(np.arange(spec.classes), per_class)
        ids = [f"{prefix}_{i:05d}" for i in range(len(labels))]
        rgb = rgb_means[labels] + rng.normal(0.0, spec.noise_sigma, (len(labels), spec.dim))
        hha = hha_means[labels] + rng.normal(0.0, spec.noise_sigma, (len(labels), spec.dim))
        if shift_rgb is not None:
            rgb = rgb + shift_rgb
        if shift_hha is not None:
            hha = hha + shift_hha
        return (
            EmbeddingSet(Modality.RGB, ids, rgb),
            EmbeddingSet(Modality.HHA, ids, hha),
            labels,
        )

    train_rgb, train_hha, train_labels = sample_split(
        spec.samples_per_class, "train", None, None
    )
    # draw the shift directions unconditionally so the remaining stream (and
    # hence the test noise) is identical across domain_shift settings
    direction = rng.normal(0.0, 1.0, spec.dim)
    shift_rgb = direction / np.linalg.norm(direction) * spec.domain_shift
    direction = rng.normal(0.0, 1.0, spec.dim)
    shift_hha = direction / np.linalg.norm(direction) * spec.domain_shift
    test_rgb, test_hha, test_labels = sample_split(
        spec.test_count, "test", shift_rgb, shift_hha
    )
    return SynthEmbeddings(
        train_rgb, train_hha, test_rgb, test_hha,
        train_labels, test_labels, rgb_means, hha_means,
    )
