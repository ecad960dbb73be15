"""Export jobs: run a backbone over an image folder and emit TEN tensors
plus a manifest the placefusion toolkit loads unchanged."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from PIL import Image, UnidentifiedImageError

from .formats import load_viewpoints_csv, merge_manifest, write_tensor
from .models import EMBED_DIM, DepthEstimator, EmbeddingExtractor

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".ppm", ".bmp")


@dataclass
class ExportJob:
    image_dir: Path
    out_dir: Path
    extractor: str                  # "depth" | "rgb-embedding" | "hha-embedding"
    batch_size: int = 8
    device: str = "cpu"
    resolution: int = 256
    weights: str = "auto"           # "auto" | "pretrained" | "random"
    seed: int = 0
    split: str = "train"
    name: str = "exported"
    viewpoints: Path | None = None

    def __post_init__(self) -> None:
        self.image_dir = Path(self.image_dir)
        self.out_dir = Path(self.out_dir)
        if self.extractor not in ("depth", "rgb-embedding", "hha-embedding"):
            raise ValueError(f"unknown extractor {self.extractor!r}")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.resolution < 32:
            raise ValueError("resolution must be >= 32")
        if not self.image_dir.is_dir() or not any(self._image_paths()):
            raise ValueError(f"image directory {self.image_dir} is empty or missing")

    def _image_paths(self) -> list[Path]:
        return sorted(
            p for p in self.image_dir.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES
        )


def _load_image(path: Path, resolution: int) -> torch.Tensor:
    with Image.open(path) as img:
        # resized to the inference resolution before any model runs
        rgb = img.convert("RGB").resize((resolution, resolution), Image.BILINEAR)
    array = np.asarray(rgb, dtype=np.float32) / 255.0
    return torch.from_numpy(array).permute(2, 0, 1)


def _run(job: ExportJob, backbone, subdir: str, artifact_key: str, emit):
    """Shared batch loop: decode, infer, write tensors, merge the manifest."""
    out_tensors = job.out_dir / subdir
    out_tensors.mkdir(parents=True, exist_ok=True)

    viewpoints = load_viewpoints_csv(job.viewpoints) if job.viewpoints else {}
    paths = job._image_paths()
    entries: dict[str, dict] = {}
    errors: list[str] = []

    batch_paths: list[Path] = []
    batch_imgs: list[torch.Tensor] = []

    def flush():
        if not batch_imgs:
            return
        outputs = backbone(torch.stack(batch_imgs))
        for path, output in zip(batch_paths, outputs):
            sample_id = path.stem
            rel = f"{subdir}/{sample_id}.ten"
            emit(out_tensors / f"{sample_id}.ten", output)
            x, y = viewpoints.get(sample_id, (0.0, 0.0))
            entries[sample_id] = {"x": x, "y": y, "artifacts": {artifact_key: rel}}
        batch_paths.clear()
        batch_imgs.clear()

    for path in paths:
        try:
            tensor = _load_image(path, job.resolution)
        except (UnidentifiedImageError, OSError, ValueError) as exc:
            errors.append(f"{path.name}: {exc}")
            continue
        batch_paths.append(path)
        batch_imgs.append(tensor)
        if len(batch_imgs) >= job.batch_size:
            flush()
    flush()

    if errors:
        (job.out_dir / "errors.txt").write_text("\n".join(errors) + "\n")

    lock = {
        **backbone.lock,
        "resolution": job.resolution,
        "resize": "pre-inference",
        "seed": job.seed,
    }
    (job.out_dir / "models.lock").write_text(json.dumps(lock, indent=2, sort_keys=True) + "\n")

    convention = "relative_inverse" if job.extractor == "depth" else None
    merge_manifest(
        job.out_dir / "manifest.json",
        name=job.name,
        split=job.split,
        depth_convention=convention or _existing_convention(job.out_dir),
        entries=entries,
        config={"exporter": lock},
    )
    return entries, errors


def _existing_convention(out_dir: Path) -> str:
    path = out_dir / "manifest.json"
    if path.is_file():
        return json.loads(path.read_text()).get("depth_convention", "metric")
    return "metric"


def export_depth(job: ExportJob):
    """One relative-inverse-depth tensor per decodable image."""
    if job.extractor != "depth":
        raise ValueError("job extractor must be 'depth'")
    backbone = DepthEstimator(device=job.device, weights=job.weights, seed=job.seed)

    def emit(path, output):
        write_tensor(path, np.asarray(output, dtype=np.float32))

    return _run(job, backbone, "depth", "depth", emit)


def export_embeddings(job: ExportJob):
    """One 4096-d embedding per decodable image (RGB files or HHA PPMs)."""
    if job.extractor not in ("rgb-embedding", "hha-embedding"):
        raise ValueError("job extractor must be 'rgb-embedding' or 'hha-embedding'")
    backbone = EmbeddingExtractor(device=job.device, weights=job.weights, seed=job.seed)
    modality = "rgb" if job.extractor == "rgb-embedding" else "hha"

    def emit(path, output):
        vector = np.asarray(output, dtype=np.float32).reshape(-1)
        if vector.shape[0] != EMBED_DIM:
            raise RuntimeError(f"expected {EMBED_DIM}-d embedding, got {vector.shape}")
        write_tensor(path, vector)

    return _run(job, backbone, f"emb_{modality}", f"{modality}_embedding", emit)
