"""File-level synthetic fixtures: a complete runnable dataset directory.

A fixture spec (JSON) describes a grid of place classes over a workspace,
clustered embeddings whose class structure matches the grid cells, and a
handful of rendered depth scenes. The writer lays everything out through
the standard formats, so the full pipeline (encode, grid, label, train,
eval) runs from files exactly as it would on real data.

Viewpoints are placed inside their class's grid cell with bounded jitter,
and the first sample of the first and last classes is pinned to the exact
workspace corners. That makes the training bounding box equal the
workspace, so grid labels derived downstream reproduce the generator's
class labels exactly.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import data_io
from .errors import ContractError, DataError
from .geometry import CameraIntrinsics, DepthConvention, DepthImage
from .places import Viewpoint
from .synth import EmbeddingSpec, SceneSpec, generate_embeddings, render_depth, vertical_wall

__all__ = ["FixtureSpec", "load_fixture_spec", "write_fixture"]


@dataclass
class FixtureSpec:
    """Parsed and validated fixture description."""

    seed: int
    rows: int
    cols: int
    workspace: tuple[float, float, float, float]   # min_x, min_y, max_x, max_y
    embeddings: EmbeddingSpec
    scene_count: int
    scene_intrinsics: CameraIntrinsics
    scene_noise_sigma: float
    scene_depth_convention: DepthConvention
    train: dict

    @property
    def n_classes(self) -> int:
        return self.rows * self.cols


def _require(doc: dict, key: str, section: str = ""):
    if key not in doc:
        where = f" in {section}" if section else ""
        raise ContractError(f"fixture spec missing field {key!r}{where}")
    return doc[key]


def load_fixture_spec(path: str | Path) -> FixtureSpec:
    """Parse a fixture spec JSON; errors name the offending field."""
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise DataError(f"fixture spec {path} is not valid JSON: {exc}") from exc
    return parse_fixture_spec(doc)


def parse_fixture_spec(doc: dict) -> FixtureSpec:
    seed = int(doc.get("seed", 0))
    grid = _require(doc, "grid")
    rows = int(_require(grid, "rows", "grid"))
    cols = int(_require(grid, "cols", "grid"))
    if rows < 1 or cols < 1:
        raise ContractError("invalid grid: rows and cols must be >= 1")

    ws = _require(doc, "workspace")
    workspace = (
        float(_require(ws, "min_x", "workspace")),
        float(_require(ws, "min_y", "workspace")),
        float(_require(ws, "max_x", "workspace")),
        float(_require(ws, "max_y", "workspace")),
    )
    if not (workspace[2] > workspace[0] and workspace[3] > workspace[1]):
        raise ContractError("invalid workspace: max must exceed min on both axes")

    emb = _require(doc, "embeddings")
    for fieldname in ("dim", "samples_per_class", "separation", "noise_sigma"):
        _require(emb, fieldname, "embeddings")
    try:
        embeddings = EmbeddingSpec(
            classes=rows * cols,
            samples_per_class=int(emb["samples_per_class"]),
            test_samples_per_class=(
                int(emb["test_samples_per_class"])
                if "test_samples_per_class" in emb
                else None
            ),
            dim=int(emb["dim"]),
            separation=float(emb["separation"]),
            noise_sigma=float(emb["noise_sigma"]),
            mode=emb.get("mode", "both"),
            domain_shift=float(emb.get("domain_shift", 0.0)),
            seed=seed,
        )
    except ContractError as exc:
        raise ContractError(f"invalid embeddings section: {exc}") from exc

    scenes = doc.get("scenes", {})
    scene_count = int(scenes.get("count", 0))
    if scene_count < 0:
        raise ContractError("invalid scenes section: count must be >= 0")
    width = int(scenes.get("width", 64))
    height = int(scenes.get("height", 48))
    intr = CameraIntrinsics(
        fx=float(scenes.get("fx", width * 0.9)),
        fy=float(scenes.get("fy", width * 0.9)),
        cx=float(scenes.get("cx", (width - 1) / 2.0)),
        cy=float(scenes.get("cy", (height - 1) / 2.0)),
        width=width,
        height=height,
    )
    noise = float(scenes.get("noise_sigma", 0.0))
    if noise < 0:
        raise ContractError("invalid scenes section: noise_sigma must be >= 0")
    convention = DepthConvention(scenes.get("depth_convention", "metric"))

    return FixtureSpec(
        seed=seed,
        rows=rows,
        cols=cols,
        workspace=workspace,
        embeddings=embeddings,
        scene_count=scene_count,
        scene_intrinsics=intr,
        scene_noise_sigma=noise,
        scene_depth_convention=convention,
        train=dict(doc.get("train", {})),
    )


def _place_viewpoints(
    spec: FixtureSpec, labels: np.ndarray, prefix: str, rng: np.random.Generator,
    pin_corners: bool,
) -> list[Viewpoint]:
    min_x, min_y, max_x, max_y = spec.workspace
    cell_w = (max_x - min_x) / spec.cols
    cell_h = (max_y - min_y) / spec.rows
    out: list[Viewpoint] = []
    for i, label in enumerate(labels):
        row, col = divmod(int(label), spec.cols)
        cx = min_x + (col + 0.5) * cell_w
        cy = min_y + (row + 0.5) * cell_h
        x = cx + rng.uniform(-0.3, 0.3) * cell_w
        y = cy + rng.uniform(-0.3, 0.3) * cell_h
        out.append(Viewpoint(x, y, f"{prefix}_{i:05d}"))
    if pin_corners:
        first = np.flatnonzero(labels == 0)
        last = np.flatnonzero(labels == spec.n_classes - 1)
        if len(first):
            i = int(first[0])
            out[i] = Viewpoint(min_x, min_y, out[i].sample_id)
        if len(last):
            i = int(last[0])
            out[i] = Viewpoint(max_x, max_y, out[i].sample_id)
    return out


def _random_scene(spec: FixtureSpec, index: int, rng: np.random.Generator) -> SceneSpec:
    tilt = rng.uniform(0.0, math.radians(12.0))
    azim = rng.uniform(0.0, 2 * math.pi)
    g = np.array(
        [
            math.sin(tilt) * math.cos(azim),
            math.cos(tilt),
            math.sin(tilt) * math.sin(azim),
        ]
    )
    g /= np.linalg.norm(g)
    # one wall roughly ahead so most of the image is covered, maybe a side wall
    walls = [vertical_wall(g, rng.uniform(-0.6, 0.6), rng.uniform(5.0, 9.0))]
    if rng.integers(0, 2):
        walls.append(
            vertical_wall(g, rng.choice([-1, 1]) * math.pi / 2, rng.uniform(4.0, 9.0))
        )
    return SceneSpec(
        intrinsics=spec.scene_intrinsics,
        camera_height=float(rng.uniform(1.2, 2.5)),
        gravity=tuple(g),
        walls=walls,
        noise_sigma=spec.scene_noise_sigma,
        seed=spec.seed * 1000 + index,
    )


def write_fixture(spec: FixtureSpec, out_dir: str | Path, config_echo: dict | None = None) -> dict:
    """Write the complete fixture tree; returns a small summary dict.

    Layout per split: viewpoints.csv, manifest.json, emb_rgb/*.ten,
    emb_hha/*.ten, and (train only) depth/*.ten for the first scene_count
    samples.
    """
    out_dir = Path(out_dir)
    data = generate_embeddings(spec.embeddings)
    rng = np.random.default_rng(spec.seed + 1)

    splits = {
        "train": (data.train_rgb, data.train_hha, data.train_labels, True),
        "test": (data.test_rgb, data.test_hha, data.test_labels, False),
    }
    summary = {"splits": {}}
    for split, (rgb, hha, labels, is_train) in splits.items():
        split_dir = out_dir / split
        (split_dir / "emb_rgb").mkdir(parents=True, exist_ok=True)
        (split_dir / "emb_hha").mkdir(parents=True, exist_ok=True)
        viewpoints = _place_viewpoints(spec, labels, split, rng, pin_corners=is_train)
        data_io.save_viewpoints(viewpoints, split_dir / "viewpoints.csv")

        entries = []
        for i, (sid, vp) in enumerate(zip(rgb.ids, viewpoints)):
            artifacts = {
                "rgb_embedding": f"emb_rgb/{sid}.ten",
                "hha_embedding": f"emb_hha/{sid}.ten",
            }
            data_io.write_tensor(split_dir / artifacts["rgb_embedding"], rgb.vectors[i])
            data_io.write_tensor(split_dir / artifacts["hha_embedding"], hha.vectors[i])
            entries.append(
                data_io.ManifestEntry(sid, vp.x, vp.y, artifacts)
            )

        scene_total = spec.scene_count if is_train else 0
        if scene_total:
            (split_dir / "depth").mkdir(exist_ok=True)
            for i in range(min(scene_total, len(entries))):
                scene = _random_scene(spec, i, rng)
                rendered = render_depth(scene)
                rel = f"depth/{entries[i].sample_id}.ten"
                if spec.scene_depth_convention is DepthConvention.RELATIVE_INVERSE:
                    values = np.zeros_like(rendered.depth.values)
                    mask = rendered.depth.valid_mask
                    values[mask] = 1.0 / rendered.depth.values[mask]
                else:
                    values = rendered.depth.values
                data_io.write_tensor(split_dir / rel, values)
                entries[i].artifacts["depth"] = rel

        manifest = data_io.DatasetManifest(
            name=f"fixture-{split}",
            split=split,
            entries=entries,
            depth_convention=spec.scene_depth_convention,
            config=config_echo,
        )
        data_io.save_manifest(manifest, split_dir / "manifest.json")
        summary["splits"][split] = {
            "samples": len(entries),
            "depth_scenes": scene_total,
            "manifest": str(split_dir / "manifest.json"),
        }
    return summary
