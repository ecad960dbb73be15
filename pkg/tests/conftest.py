import math

import numpy as np
import pytest
from numpy.lib.stride_tricks import sliding_window_view

from placefusion.geometry import CameraIntrinsics
from placefusion.synth import Plane, SceneSpec, vertical_wall


def single_plane_mask(plane_index: np.ndarray, margin: int) -> np.ndarray:
    """Pixels whose (2*margin+1) neighborhood lies entirely in one plane."""
    padded = np.pad(plane_index, margin, mode="edge")
    win = sliding_window_view(padded, (2 * margin + 1, 2 * margin + 1))
    return (win.min(axis=(-2, -1)) == win.max(axis=(-2, -1))) & (plane_index >= 0)


@pytest.fixture
def intrinsics_64x48() -> CameraIntrinsics:
    return CameraIntrinsics(fx=55.0, fy=55.0, cx=31.5, cy=23.5, width=64, height=48)


def ground_scene(intr: CameraIntrinsics, camera_height: float = 1.5,
                 gravity=(0.0, 1.0, 0.0), noise_sigma: float = 0.0,
                 seed: int = 0) -> SceneSpec:
    """Ground plane plus a far back wall so every ray hits something."""
    g = np.asarray(gravity, dtype=np.float64)
    g = g / np.linalg.norm(g)
    back = vertical_wall(g, 0.0, 30.0)
    return SceneSpec(
        intrinsics=intr,
        camera_height=camera_height,
        gravity=tuple(g),
        walls=[back],
        noise_sigma=noise_sigma,
        seed=seed,
    )


def room_scene(intr: CameraIntrinsics, camera_height: float = 1.5,
               gravity=(0.0, 1.0, 0.0), wall_azimuths=(0.0, math.pi / 2),
               wall_distance: float = 8.0, noise_sigma: float = 0.0,
               seed: int = 0) -> SceneSpec:
    g = np.asarray(gravity, dtype=np.float64)
    g = g / np.linalg.norm(g)
    walls = [vertical_wall(g, az, wall_distance) for az in wall_azimuths]
    return SceneSpec(
        intrinsics=intr,
        camera_height=camera_height,
        gravity=tuple(g),
        walls=walls,
        noise_sigma=noise_sigma,
        seed=seed,
    )


def tilted_gravity(tilt_rad: float, azimuth_rad: float) -> tuple[float, float, float]:
    g = np.array(
        [
            math.sin(tilt_rad) * math.cos(azimuth_rad),
            math.cos(tilt_rad),
            math.sin(tilt_rad) * math.sin(azimuth_rad),
        ]
    )
    g /= np.linalg.norm(g)
    return tuple(g)
