"""Writers for the placefusion on-disk interchange formats.

These are implemented here, against the published byte layout, rather than
imported from the toolkit: the file formats are the contract between the
two packages, and the toolkit's readers validate everything this module
emits (see the tests).

TEN tensor layout: magic "PFT1", dtype byte (0 = float32), ndim byte
(1..4), ndim little-endian u32 dims, row-major little-endian float32
payload.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

TEN_MAGIC = b"PFT1"
ARTIFACT_KEYS = ("rgb", "depth", "hha", "rgb_embedding", "hha_embedding")


def write_tensor(path: str | Path, tensor: np.ndarray) -> None:
    a = np.asarray(tensor)
    if not 1 <= a.ndim <= 4:
        raise ValueError(f"tensor rank must be in [1, 4], got {a.ndim}")
    a = np.ascontiguousarray(a, dtype="<f4")
    header = TEN_MAGIC + bytes([0, a.ndim])
    header += b"".join(struct.pack("<I", d) for d in a.shape)
    Path(path).write_bytes(header + a.tobytes())


def merge_manifest(
    path: str | Path,
    name: str,
    split: str,
    depth_convention: str,
    entries: dict[str, dict],
    config: dict,
) -> None:
    """Write a manifest, merging artifact paths into an existing one.

    entries maps sample_id -> {"x": float, "y": float, "artifacts": {...}}.
    Sequential export runs (depth, then each embedding modality) accumulate
    their artifacts into one manifest; reruns are idempotent.
    """
    path = Path(path)
    existing: dict[str, dict] = {}
    if path.is_file():
        doc = json.loads(path.read_text())
        for entry in doc.get("entries", []):
            existing[entry["sample_id"]] = entry
    for sample_id, new in entries.items():
        if sample_id in existing:
            existing[sample_id]["artifacts"].update(new["artifacts"])
            existing[sample_id]["x"] = new["x"]
            existing[sample_id]["y"] = new["y"]
        else:
            existing[sample_id] = {
                "sample_id": sample_id,
                "x": new["x"],
                "y": new["y"],
                "artifacts": dict(new["artifacts"]),
            }
    doc = {
        "name": name,
        "split": split,
        "depth_convention": depth_convention,
        "entries": [existing[sid] for sid in sorted(existing)],
        "config": config,
    }
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def load_viewpoints_csv(path: str | Path) -> dict[str, tuple[float, float]]:
    """sample_id,x,y rows into a lookup table."""
    import csv

    out: dict[str, tuple[float, float]] = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["sample_id", "x", "y"]:
            raise ValueError(f"{path}: expected header sample_id,x,y, got {header}")
        for sid, x, y in reader:
            out[sid] = (float(x), float(y))
    return out
