import json
import struct

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from placefusion import data_io
from placefusion.errors import ContractError, DataError, FormatError
from placefusion.geometry import DepthConvention, DepthImage
from placefusion.places import Viewpoint


# ---------------------------------------------------------------------------
# TEN tensors


class TestTensorFormat:
    def test_header_arithmetic_for_small_vector(self, tmp_path):
        path = tmp_path / "v.ten"
        data_io.write_tensor(path, np.array([1.0, 2.0, 3.0], dtype=np.float32))
        raw = path.read_bytes()
        assert len(raw) == 4 + 1 + 1 + 4 + 12 == 22
        assert raw[:4] == b"PFT1"
        assert raw[4] == 0 and raw[5] == 1
        assert struct.unpack("<I", raw[6:10]) == (3,)
        assert struct.unpack("<3f", raw[10:]) == (1.0, 2.0, 3.0)

    def test_empty_tensor_round_trips(self, tmp_path):
        path = tmp_path / "e.ten"
        data_io.write_tensor(path, np.zeros(0, dtype=np.float32))
        assert len(path.read_bytes()) == 10
        out = data_io.read_tensor(path)
        assert out.shape == (0,)

    def test_bad_magic_reports_offset_zero(self, tmp_path):
        path = tmp_path / "bad.ten"
        path.write_bytes(b"NOPE" + bytes(10))
        with pytest.raises(FormatError, match="offset 0"):
            data_io.read_tensor(path)

    def test_unsupported_dtype_reports_offset_four(self, tmp_path):
        path = tmp_path / "bad.ten"
        path.write_bytes(b"PFT1" + bytes([7, 1]) + struct.pack("<I", 0))
        with pytest.raises(FormatError, match="offset 4"):
            data_io.read_tensor(path)

    def test_bad_ndim_reports_offset_five(self, tmp_path):
        path = tmp_path / "bad.ten"
        path.write_bytes(b"PFT1" + bytes([0, 5]) + struct.pack("<5I", 1, 1, 1, 1, 1))
        with pytest.raises(FormatError, match="offset 5"):
            data_io.read_tensor(path)

    def test_truncated_payload_is_format_error(self, tmp_path):
        path = tmp_path / "t.ten"
        data_io.write_tensor(path, np.ones((2, 2), dtype=np.float32))
        path.write_bytes(path.read_bytes()[:-3])
        with pytest.raises(FormatError, match="length mismatch"):
            data_io.read_tensor(path)

    def test_trailing_garbage_is_format_error(self, tmp_path):
        path = tmp_path / "t.ten"
        data_io.write_tensor(path, np.ones(4, dtype=np.float32))
        path.write_bytes(path.read_bytes() + b"x")
        with pytest.raises(FormatError):
            data_io.read_tensor(path)

    def test_rank_zero_and_five_rejected_on_write(self, tmp_path):
        with pytest.raises(ContractError):
            data_io.write_tensor(tmp_path / "a.ten", np.float32(3.0))
        with pytest.raises(ContractError):
            data_io.write_tensor(tmp_path / "b.ten", np.zeros((1, 1, 1, 1, 1), np.float32))

    def test_random_4096_vector_round_trip_bit_equal(self, tmp_path):
        rng = np.random.default_rng(12)
        vec = rng.standard_normal(4096).astype(np.float32)
        path = tmp_path / "big.ten"
        data_io.write_tensor(path, vec)
        out = data_io.read_tensor(path)
        assert out.tobytes() == vec.tobytes()

    @settings(max_examples=300, deadline=None, derandomize=True,
              suppress_health_check=[HealthCheck.function_scoped_fixture])
    @given(
        shape=st.lists(st.integers(0, 6), min_size=1, max_size=4),
        seed=st.integers(0, 2**31),
    )
    def test_round_trip_property(self, shape, seed, tmp_path):
        rng = np.random.default_rng(seed)
        tensor = rng.standard_normal(tuple(shape)).astype(np.float32)
        path = tmp_path / "p.ten"
        data_io.write_tensor(path, tensor)
        out = data_io.read_tensor(path)
        assert out.shape == tensor.shape
        assert out.tobytes() == tensor.tobytes()


# ---------------------------------------------------------------------------
# Netpbm


class TestNetpbm:
    @settings(max_examples=200, deadline=None, derandomize=True,
              suppress_health_check=[HealthCheck.function_scoped_fixture])
    @given(
        w=st.integers(1, 9), h=st.integers(1, 9), seed=st.integers(0, 2**31)
    )
    def test_ppm_round_trip(self, w, h, seed, tmp_path):
        rng = np.random.default_rng(seed)
        channels = rng.integers(0, 256, size=(3, h, w), dtype=np.uint8)
        path = tmp_path / "x.ppm"
        data_io.write_ppm(path, channels)
        out = data_io.read_ppm(path)
        assert out.tobytes() == channels.tobytes()

    @settings(max_examples=200, deadline=None, derandomize=True,
              suppress_health_check=[HealthCheck.function_scoped_fixture])
    @given(
        w=st.integers(1, 9), h=st.integers(1, 9), seed=st.integers(0, 2**31)
    )
    def test_pgm16_round_trip(self, w, h, seed, tmp_path):
        rng = np.random.default_rng(seed)
        values = rng.integers(0, 65536, size=(h, w), dtype=np.uint16)
        path = tmp_path / "x.pgm"
        data_io.write_pgm16(path, values)
        out = data_io.read_pgm16(path)
        assert out.tobytes() == values.tobytes()

    def test_pgm_payload_is_big_endian(self, tmp_path):
        path = tmp_path / "b.pgm"
        data_io.write_pgm16(path, np.array([[0x0102]], dtype=np.uint16))
        raw = path.read_bytes()
        assert raw.endswith(b"\x01\x02")

    def test_depth_pgm_millimeter_quantization(self, tmp_path):
        depth = DepthImage(np.array([[1.5, 0.0], [0.0004, 70.0]]))
        path = tmp_path / "d.pgm"
        data_io.write_depth_pgm(path, depth)
        out = data_io.read_depth_pgm(path)
        assert out.values[0, 0] == 1.5
        assert out.values[0, 1] == 0.0 and not out.valid_mask[0, 1]
        assert out.values[1, 0] == 0.0  # rounds to 0 mm, invalid
        assert out.values[1, 1] == 65.535  # clipped to the u16 ceiling

    def test_ppm_header_mismatch_detected(self, tmp_path):
        path = tmp_path / "x.ppm"
        path.write_bytes(b"P6\n2 2\n255\n" + bytes(5))
        with pytest.raises(FormatError, match="length mismatch"):
            data_io.read_ppm(path)


# ---------------------------------------------------------------------------
# embeddings and manifests


def make_manifest(tmp_path, n=3, dim=8, modalities=("rgb_embedding", "hha_embedding")):
    rng = np.random.default_rng(42)
    entries = []
    for i in range(n):
        sid = f"s{i:03d}"
        artifacts = {}
        for key in modalities:
            rel = f"{key}/{sid}.ten"
            (tmp_path / key).mkdir(exist_ok=True)
            data_io.write_tensor(tmp_path / rel, rng.standard_normal(dim).astype(np.float32))
            artifacts[key] = rel
        entries.append(data_io.ManifestEntry(sid, float(i), float(-i), artifacts))
    manifest = data_io.DatasetManifest("unit", "train", entries)
    data_io.save_manifest(manifest, tmp_path / "manifest.json")
    return data_io.load_manifest(tmp_path / "manifest.json")


class TestManifest:
    def test_round_trip(self, tmp_path):
        manifest = make_manifest(tmp_path)
        assert manifest.split == "train"
        assert [e.sample_id for e in manifest.entries] == ["s000", "s001", "s002"]
        assert manifest.root == tmp_path

    def test_missing_file_is_data_error(self, tmp_path):
        manifest = make_manifest(tmp_path)
        (tmp_path / "rgb_embedding" / "s001.ten").unlink()
        with pytest.raises(DataError, match="s001"):
            data_io.load_manifest(tmp_path / "manifest.json")

    def test_duplicate_ids_rejected(self, tmp_path):
        doc = {
            "name": "x",
            "split": "train",
            "entries": [
                {"sample_id": "a", "x": 0, "y": 0, "artifacts": {}},
                {"sample_id": "a", "x": 1, "y": 1, "artifacts": {}},
            ],
        }
        path = tmp_path / "m.json"
        path.write_text(json.dumps(doc))
        with pytest.raises(DataError, match="duplicate"):
            data_io.load_manifest(path)

    def test_bad_split_rejected(self, tmp_path):
        path = tmp_path / "m.json"
        path.write_text(json.dumps({"name": "x", "split": "vali", "entries": []}))
        with pytest.raises(DataError):
            data_io.load_manifest(path)


class TestLoadEmbeddings:
    def test_loads_records_in_manifest_order(self, tmp_path):
        manifest = make_manifest(tmp_path, n=2, dim=4096)
        out = data_io.load_embeddings(manifest, data_io.Modality.RGB)
        assert len(out) == 2 and out.dim == 4096
        assert out.ids == ["s000", "s001"]

    def test_nan_vector_names_sample(self, tmp_path):
        manifest = make_manifest(tmp_path, n=2, dim=4)
        bad = np.array([1.0, np.nan, 0.0, 2.0], dtype=np.float32)
        data_io.write_tensor(tmp_path / "hha_embedding" / "s001.ten", bad)
        with pytest.raises(DataError, match="s001"):
            data_io.load_embeddings(manifest, data_io.Modality.HHA)

    def test_wrong_dim_names_sample(self, tmp_path):
        manifest = make_manifest(tmp_path, n=3, dim=8)
        data_io.write_tensor(
            tmp_path / "rgb_embedding" / "s002.ten", np.zeros(9, dtype=np.float32)
        )
        with pytest.raises(DataError, match="s002"):
            data_io.load_embeddings(manifest, data_io.Modality.RGB)

    def test_large_manifest_preserves_order_exactly(self, tmp_path):
        rng = np.random.default_rng(9)
        ids = [f"id{i:04d}" for i in rng.permutation(1000)]
        (tmp_path / "emb").mkdir()
        entries = []
        for sid in ids:
            rel = f"emb/{sid}.ten"
            data_io.write_tensor(tmp_path / rel, rng.standard_normal(3).astype(np.float32))
            entries.append(data_io.ManifestEntry(sid, 0.0, 0.0, {"rgb_embedding": rel}))
        manifest = data_io.DatasetManifest("big", "test", entries)
        data_io.save_manifest(manifest, tmp_path / "m.json")
        out = data_io.load_embeddings(
            data_io.load_manifest(tmp_path / "m.json"), data_io.Modality.RGB
        )
        assert out.ids == ids


class TestJoinPairs:
    def test_concatenation_order_rgb_then_hha(self):
        rgb = data_io.EmbeddingSet(data_io.Modality.RGB, ["a"], np.array([[1.0, 2.0]]))
        hha = data_io.EmbeddingSet(data_io.Modality.HHA, ["a"], np.array([[3.0, 4.0]]))
        pairs = data_io.join_pairs(rgb, hha)
        np.testing.assert_array_equal(pairs.vectors, [[1.0, 2.0, 3.0, 4.0]])

    def test_disjoint_ids_report_first_missing(self):
        rgb = data_io.EmbeddingSet(data_io.Modality.RGB, ["a", "b"], np.zeros((2, 2)))
        hha = data_io.EmbeddingSet(data_io.Modality.HHA, ["c", "b"], np.zeros((2, 2)))
        with pytest.raises(DataError, match="missing"):
            data_io.join_pairs(rgb, hha)

    def test_4096_pairs_make_8192(self):
        rgb = data_io.EmbeddingSet(data_io.Modality.RGB, ["a"], np.zeros((1, 4096)))
        hha = data_io.EmbeddingSet(data_io.Modality.HHA, ["a"], np.zeros((1, 4096)))
        assert data_io.join_pairs(rgb, hha).vectors.shape == (1, 8192)

    def test_out_of_order_ids_align_and_split_recovers(self):
        rng = np.random.default_rng(4)
        ids = [f"s{i}" for i in range(20)]
        rgb_vec = rng.standard_normal((20, 5))
        hha_vec = rng.standard_normal((20, 7))
        rgb = data_io.EmbeddingSet(data_io.Modality.RGB, ids, rgb_vec)
        perm = rng.permutation(20)
        hha = data_io.EmbeddingSet(
            data_io.Modality.HHA, [ids[i] for i in perm], hha_vec[perm]
        )
        pairs = data_io.join_pairs(rgb, hha)
        left, right = pairs.split()
        np.testing.assert_array_equal(left, rgb_vec)
        np.testing.assert_array_equal(right, hha_vec)


class TestViewpointAndLabelFiles:
    def test_viewpoints_round_trip_exact(self, tmp_path):
        rng = np.random.default_rng(1)
        points = [
            Viewpoint(float(x), float(y), f"v{i}")
            for i, (x, y) in enumerate(zip(rng.normal(size=50), rng.normal(size=50)))
        ]
        path = tmp_path / "v.csv"
        data_io.save_viewpoints(points, path)
        out = data_io.load_viewpoints(path)
        assert out == points

    def test_labels_round_trip(self, tmp_path):
        labels = [("a", 3), ("b", 0), ("c", 99)]
        path = tmp_path / "l.csv"
        data_io.save_labels(labels, path)
        assert data_io.load_labels(path) == {"a": 3, "b": 0, "c": 99}

    def test_grid_round_trip(self, tmp_path):
        from placefusion.places import PlaceGrid

        grid = PlaceGrid(-3.5, 2.25, 10.0, 11.5, 4, 6)
        path = tmp_path / "g.json"
        data_io.save_grid(grid, path, config={"rows": 4})
        assert data_io.load_grid(path) == grid

    def test_bad_header_rejected(self, tmp_path):
        path = tmp_path / "v.csv"
        path.write_text("id,x,y\na,1,2\n")
        with pytest.raises(DataError, match="header"):
            data_io.load_viewpoints(path)
