"""Bit-exact on-disk formats and loaders for every pipeline artifact.

Formats:
  TEN   binary tensor: magic "PFT1", dtype byte (0 = float32), ndim byte
        (1..4), ndim little-endian u32 dims, then row-major little-endian
        float32 payload.
  PPM   binary P6, 8-bit, used for encoded HHA images with channels packed
        as R=disparity, G=height, B=angle.
  PGM   binary P5 with maxval 65535 (big-endian samples per Netpbm), used
        for metric depth in millimeters; 0 marks invalid pixels.
  JSON  dataset manifests and place grids; CSV viewpoint and label lists.

Manifest paths are relative to the manifest file's directory.
"""

from __future__ import annotations

import csv
import enum
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

import numpy as np

from .errors import ContractError, DataError, FormatError
from .geometry import DepthConvention, DepthImage, HhaImage
from .places import PlaceGrid, Viewpoint

__all__ = [
    "TEN_MAGIC",
    "Modality",
    "EmbeddingSet",
    "PairedEmbeddings",
    "ManifestEntry",
    "DatasetManifest",
    "ARTIFACT_KEYS",
    "write_tensor",
    "read_tensor",
    "write_ppm",
    "read_ppm",
    "write_pgm16",
    "read_pgm16",
    "write_depth_pgm",
    "read_depth_pgm",
    "save_manifest",
    "load_manifest",
    "load_embeddings",
    "join_pairs",
    "save_viewpoints",
    "load_viewpoints",
    "save_grid",
    "load_grid",
    "save_labels",
    "load_labels",
]

TEN_MAGIC = b"PFT1"
_TEN_DTYPE_F32 = 0
_TEN_MAX_NDIM = 4


# ---------------------------------------------------------------------------
# TEN tensor format


def write_tensor(path: str | Path, tensor: np.ndarray) -> None:
    """Write a float32 tensor; read_tensor(write_tensor(t)) is bit-identical."""
    a = np.asarray(tensor)
    if not 1 <= a.ndim <= _TEN_MAX_NDIM:
        raise ContractError(f"tensor rank must be in [1, {_TEN_MAX_NDIM}], got {a.ndim}")
    a = np.ascontiguousarray(a, dtype="<f4")
    header = TEN_MAGIC + bytes([_TEN_DTYPE_F32, a.ndim])
    header += b"".join(struct.pack("<I", d) for d in a.shape)
    Path(path).write_bytes(header + a.tobytes())


def read_tensor(path: str | Path) -> np.ndarray:
    """Read a TEN file back into a float32 array."""
    data = Path(path).read_bytes()
    if len(data) < 4 or data[:4] != TEN_MAGIC:
        raise FormatError(f"bad magic in {path}", offset=0)
    if len(data) < 5:
        raise FormatError(f"truncated header in {path}: missing dtype", offset=4)
    if data[4] != _TEN_DTYPE_F32:
        raise FormatError(f"unsupported dtype {data[4]} in {path}", offset=4)
    if len(data) < 6:
        raise FormatError(f"truncated header in {path}: missing ndim", offset=5)
    ndim = data[5]
    if not 1 <= ndim <= _TEN_MAX_NDIM:
        raise FormatError(f"ndim {ndim} outside [1, {_TEN_MAX_NDIM}] in {path}", offset=5)
    dims_end = 6 + 4 * ndim
    if len(data) < dims_end:
        raise FormatError(f"truncated dims in {path}", offset=len(data))
    dims = struct.unpack(f"<{ndim}I", data[6:dims_end])
    count = 1
    for d in dims:
        count *= d
    expected = dims_end + 4 * count
    if len(data) != expected:
        raise FormatError(
            f"payload length mismatch in {path}: expected {expected} bytes, got {len(data)}",
            offset=dims_end,
        )
    payload = np.frombuffer(data, dtype="<f4", count=count, offset=dims_end)
    return payload.reshape(dims).copy()


# ---------------------------------------------------------------------------
# Netpbm images


def write_ppm(path: str | Path, image: HhaImage | np.ndarray) -> None:
    """Binary P6 with the (3, H, W) channels interleaved as RGB."""
    channels = image.channels if isinstance(image, HhaImage) else np.asarray(image)
    if channels.ndim != 3 or channels.shape[0] != 3 or channels.dtype != np.uint8:
        raise ContractError(f"expected (3, H, W) uint8 channels, got {channels.shape}")
    _, h, w = channels.shape
    header = f"P6\n{w} {h}\n255\n".encode("ascii")
    Path(path).write_bytes(header + np.transpose(channels, (1, 2, 0)).tobytes())


def _parse_pnm_header(data: bytes, magic: bytes, path: str | Path) -> tuple[int, int, int, int]:
    """Parse 'P5'/'P6' headers; returns (width, height, maxval, body offset)."""
    if data[:2] != magic:
        raise FormatError(f"bad magic in {path}: expected {magic.decode()}", offset=0)
    fields: list[int] = []
    i = 2
    while len(fields) < 3:
        while i < len(data) and data[i : i + 1].isspace():
            i += 1
        if i < len(data) and data[i : i + 1] == b"#":
            while i < len(data) and data[i] != 0x0A:
                i += 1
            continue
        start = i
        while i < len(data) and not data[i : i + 1].isspace():
            i += 1
        token = data[start:i]
        if not token.isdigit():
            raise FormatError(f"bad header token {token!r} in {path}", offset=start)
        fields.append(int(token))
    if i >= len(data) or not data[i : i + 1].isspace():
        raise FormatError(f"missing whitespace after maxval in {path}", offset=i)
    return fields[0], fields[1], fields[2], i + 1


def read_ppm(path: str | Path) -> np.ndarray:
    """Read a binary P6 file into (3, H, W) uint8 channels."""
    data = Path(path).read_bytes()
    w, h, maxval, offset = _parse_pnm_header(data, b"P6", path)
    if maxval != 255:
        raise FormatError(f"unsupported maxval {maxval} in {path}", offset=2)
    need = 3 * w * h
    if len(data) - offset != need:
        raise FormatError(
            f"payload length mismatch in {path}: expected {need} bytes", offset=offset
        )
    body = np.frombuffer(data, dtype=np.uint8, count=need, offset=offset)
    return np.transpose(body.reshape(h, w, 3), (2, 0, 1)).copy()


def write_pgm16(path: str | Path, values: np.ndarray) -> None:
    """Binary P5 with maxval 65535; samples are big-endian u16."""
    a = np.asarray(values)
    if a.ndim != 2 or a.dtype != np.uint16:
        raise ContractError(f"expected (H, W) uint16, got {a.shape} {a.dtype}")
    h, w = a.shape
    header = f"P5\n{w} {h}\n65535\n".encode("ascii")
    Path(path).write_bytes(header + a.astype(">u2").tobytes())


def read_pgm16(path: str | Path) -> np.ndarray:
    """Read a 16-bit binary P5 file into a (H, W) uint16 array."""
    data = Path(path).read_bytes()
    w, h, maxval, offset = _parse_pnm_header(data, b"P5", path)
    if maxval != 65535:
        raise FormatError(f"unsupported maxval {maxval} in {path}", offset=2)
    need = 2 * w * h
    if len(data) - offset != need:
        raise FormatError(
            f"payload length mismatch in {path}: expected {need} bytes", offset=offset
        )
    body = np.frombuffer(data, dtype=">u2", count=w * h, offset=offset)
    return body.reshape(h, w).astype(np.uint16)


def write_depth_pgm(path: str | Path, depth: DepthImage) -> None:
    """Store metric depth as millimeters; invalid pixels become 0."""
    if depth.convention is not DepthConvention.METRIC:
        raise ContractError("PGM depth files are metric only")
    mm = np.zeros(depth.values.shape, dtype=np.uint16)
    valid = depth.valid_mask
    mm[valid] = np.clip(np.rint(depth.values[valid] * 1000.0), 0, 65535).astype(np.uint16)
    write_pgm16(path, mm)


def read_depth_pgm(path: str | Path) -> DepthImage:
    """Load a millimeter PGM as metric depth; 0 stays invalid."""
    mm = read_pgm16(path)
    return DepthImage(mm.astype(np.float64) / 1000.0, DepthConvention.METRIC)


# ---------------------------------------------------------------------------
# Embeddings


class Modality(enum.Enum):
    RGB = "rgb"
    HHA = "hha"


@dataclass
class EmbeddingSet:
    """Fixed-dimension feature vectors keyed by sample id, one modality."""

    modality: Modality
    ids: list[str]
    vectors: np.ndarray   # (N, dim)

    def __post_init__(self) -> None:
        v = np.asarray(self.vectors, dtype=np.float64)
        if v.ndim != 2:
            raise ContractError(f"vectors must be 2-D, got shape {v.shape}")
        if len(self.ids) != v.shape[0]:
            raise ContractError("ids and vectors disagree on record count")
        if len(set(self.ids)) != len(self.ids):
            raise DataError("duplicate sample ids in embedding set")
        if not np.isfinite(v).all():
            raise DataError("embedding vectors must be finite")
        self.vectors = v

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def __len__(self) -> int:
        return len(self.ids)

    def records(self) -> Iterator[tuple[str, np.ndarray]]:
        for i, sid in enumerate(self.ids):
            yield sid, self.vectors[i]


@dataclass
class PairedEmbeddings:
    """Concatenated per-sample vectors from two modalities, RGB half first."""

    ids: list[str]
    vectors: np.ndarray   # (N, rgb_dim + hha_dim)
    rgb_dim: int
    hha_dim: int

    def split(self) -> tuple[np.ndarray, np.ndarray]:
        return self.vectors[:, : self.rgb_dim], self.vectors[:, self.rgb_dim :]

    def __len__(self) -> int:
        return len(self.ids)


def join_pairs(rgb: EmbeddingSet, hha: EmbeddingSet) -> PairedEmbeddings:
    """Concatenate matching records, RGB then HHA, in the RGB set's order."""
    rgb_ids = set(rgb.ids)
    hha_ids = set(hha.ids)
    if rgb_ids != hha_ids:
        missing_hha = sorted(rgb_ids - hha_ids)[:10]
        missing_rgb = sorted(hha_ids - rgb_ids)[:10]
        raise DataError(
            "sample id mismatch between modalities; "
            f"missing from hha: {missing_hha}; missing from rgb: {missing_rgb}"
        )
    index = {sid: i for i, sid in enumerate(hha.ids)}
    order = [index[sid] for sid in rgb.ids]
    vectors = np.concatenate([rgb.vectors, hha.vectors[order]], axis=1)
    return PairedEmbeddings(list(rgb.ids), vectors, rgb.dim, hha.dim)


# ---------------------------------------------------------------------------
# Manifests

ARTIFACT_KEYS = ("rgb", "depth", "hha", "rgb_embedding", "hha_embedding")
_EMBEDDING_KEY = {Modality.RGB: "rgb_embedding", Modality.HHA: "hha_embedding"}


@dataclass
class ManifestEntry:
    sample_id: str
    x: float
    y: float
    artifacts: dict[str, str] = field(default_factory=dict)


@dataclass
class DatasetManifest:
    """Names the samples of one split and where their artifacts live."""

    name: str
    split: str                    # "train" or "test"
    entries: list[ManifestEntry]
    depth_convention: DepthConvention = DepthConvention.METRIC
    config: dict | None = None    # provenance echo, round-tripped verbatim
    root: Path | None = None      # directory paths resolve against; set on load

    def __post_init__(self) -> None:
        if self.split not in ("train", "test"):
            raise DataError(f"split must be 'train' or 'test', got {self.split!r}")
        ids = [e.sample_id for e in self.entries]
        if len(set(ids)) != len(ids):
            raise DataError("duplicate sample ids in manifest")
        for e in self.entries:
            unknown = set(e.artifacts) - set(ARTIFACT_KEYS)
            if unknown:
                raise DataError(f"unknown artifact keys {sorted(unknown)} for {e.sample_id!r}")

    def resolve(self, entry: ManifestEntry, key: str) -> Path:
        if key not in entry.artifacts:
            raise DataError(f"sample {entry.sample_id!r} has no {key!r} artifact")
        base = self.root if self.root is not None else Path(".")
        return base / entry.artifacts[key]


def save_manifest(manifest: DatasetManifest, path: str | Path) -> None:
    doc = {
        "name": manifest.name,
        "split": manifest.split,
        "depth_convention": manifest.depth_convention.value,
        "entries": [
            {"sample_id": e.sample_id, "x": e.x, "y": e.y, "artifacts": e.artifacts}
            for e in manifest.entries
        ],
    }
    if manifest.config is not None:
        doc["config"] = manifest.config
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def load_manifest(path: str | Path, check_files: bool = True) -> DatasetManifest:
    """Load and validate a manifest; referenced files must exist."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise DataError(f"manifest {path} is not valid JSON: {exc}") from exc
    try:
        entries = [
            ManifestEntry(e["sample_id"], float(e["x"]), float(e["y"]), dict(e.get("artifacts", {})))
            for e in doc["entries"]
        ]
        manifest = DatasetManifest(
            name=doc["name"],
            split=doc["split"],
            entries=entries,
            depth_convention=DepthConvention(doc.get("depth_convention", "metric")),
            config=doc.get("config"),
            root=path.parent,
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"manifest {path} is malformed: {exc}") from exc
    if check_files:
        for e in manifest.entries:
            for key, rel in e.artifacts.items():
                target = manifest.root / rel
                if not target.is_file():
                    raise DataError(
                        f"manifest {path}: sample {e.sample_id!r} references "
                        f"missing {key} file {target}"
                    )
    return manifest


def load_embeddings(manifest: DatasetManifest, modality: Modality) -> EmbeddingSet:
    """Load one embedding vector per manifest entry, preserving entry order."""
    key = _EMBEDDING_KEY[modality]
    ids: list[str] = []
    rows: list[np.ndarray] = []
    dim: int | None = None
    for entry in manifest.entries:
        target = manifest.resolve(entry, key)
        try:
            vec = read_tensor(target)
        except (OSError, FormatError) as exc:
            raise DataError(f"sample {entry.sample_id!r}: cannot read {target}: {exc}") from exc
        if vec.ndim != 1:
            raise DataError(f"sample {entry.sample_id!r}: expected 1-D embedding, got {vec.shape}")
        if dim is None:
            dim = vec.shape[0]
        elif vec.shape[0] != dim:
            raise DataError(
                f"sample {entry.sample_id!r}: embedding dim {vec.shape[0]} != {dim}"
            )
        if not np.isfinite(vec).all():
            raise DataError(f"sample {entry.sample_id!r}: embedding has non-finite values")
        ids.append(entry.sample_id)
        rows.append(vec.astype(np.float64))
    if not rows:
        raise DataError("manifest has no entries to load embeddings from")
    return EmbeddingSet(modality, ids, np.stack(rows))


# ---------------------------------------------------------------------------
# Viewpoints, grids, labels


def save_viewpoints(viewpoints: list[Viewpoint], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sample_id", "x", "y"])
        for v in viewpoints:
            writer.writerow([v.sample_id, repr(v.x), repr(v.y)])


def load_viewpoints(path: str | Path) -> list[Viewpoint]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["sample_id", "x", "y"]:
            raise DataError(f"{path}: expected header sample_id,x,y, got {header}")
        out: list[Viewpoint] = []
        seen: set[str] = set()
        for row in reader:
            if len(row) != 3:
                raise DataError(f"{path}: malformed row {row}")
            sid, xs, ys = row
            if sid in seen:
                raise DataError(f"{path}: duplicate sample_id {sid!r}")
            seen.add(sid)
            out.append(Viewpoint(float(xs), float(ys), sid))
    return out


def save_grid(grid: PlaceGrid, path: str | Path, config: dict | None = None) -> None:
    doc = {
        "min_x": grid.min_x,
        "min_y": grid.min_y,
        "max_x": grid.max_x,
        "max_y": grid.max_y,
        "rows": grid.rows,
        "cols": grid.cols,
    }
    if config is not None:
        doc["config"] = config
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def load_grid(path: str | Path) -> PlaceGrid:
    try:
        doc = json.loads(Path(path).read_text())
        return PlaceGrid(
            float(doc["min_x"]),
            float(doc["min_y"]),
            float(doc["max_x"]),
            float(doc["max_y"]),
            int(doc["rows"]),
            int(doc["cols"]),
        )
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise DataError(f"grid file {path} is malformed: {exc}") from exc


def save_labels(labels: list[tuple[str, int]], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sample_id", "label"])
        for sid, label in labels:
            writer.writerow([sid, label])


def load_labels(path: str | Path) -> dict[str, int]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["sample_id", "label"]:
            raise DataError(f"{path}: expected header sample_id,label, got {header}")
        out: dict[str, int] = {}
        for row in reader:
            if len(row) != 2:
                raise DataError(f"{path}: malformed row {row}")
            sid, label = row
            if sid in out:
                raise DataError(f"{path}: duplicate sample_id {sid!r}")
            out[sid] = int(label)
    return out
