"""Acceptance suite: every criterion runs at its stated tolerance and prints
one pass/fail line. Run with `pytest tests/test_acceptance.py -v -s`."""

import json
import math
import struct
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from placefusion import data_io
from placefusion.data_io import join_pairs
from placefusion.fusion import (
    TrainConfig,
    forward_batch,
    init_model,
    loss_and_grad,
    mean_loss,
    naive_average_probs,
    train_fusion,
    train_head,
)
from placefusion.geometry import (
    CameraIntrinsics,
    backproject,
    depth_to_hha,
    estimate_gravity,
    update_gravity,
)
from placefusion.places import PlaceGrid, Viewpoint, build_grid, classify_points, classify_viewpoint
from placefusion.synth import EmbeddingSpec, SceneSpec, generate_embeddings, render_depth, vertical_wall

from conftest import tilted_gravity
from oracles import angle_between_axes, finite_difference_grads, gravity_objective


def report(name: str, ok: bool, detail: str = "") -> None:
    status = "PASS" if ok else "FAIL"
    suffix = f" ({detail})" if detail else ""
    print(f"[acceptance] {name}: {status}{suffix}", flush=True)
    assert ok, f"{name}: {detail}"


def observable_scene(rng, intr, seed, rel_noise):
    """Ground + two walls with both the floor and wall area clearly visible."""
    while True:
        tilt = rng.uniform(0.0, math.radians(12.0))
        gravity = tilted_gravity(tilt, rng.uniform(0.0, 2 * math.pi))
        camera_height = rng.uniform(1.0, 1.8)
        azim_a = rng.uniform(-0.4, 0.4)
        azim_b = azim_a + rng.choice([-1.0, 1.0]) * rng.uniform(0.9, 1.6)
        distance = rng.uniform(6.0, 10.0)
        walls = [
            vertical_wall(np.asarray(gravity), azim_a, distance),
            vertical_wall(np.asarray(gravity), azim_b, distance),
        ]
        scene = SceneSpec(
            intrinsics=intr,
            camera_height=camera_height,
            gravity=gravity,
            walls=walls,
            noise_sigma=0.0,
            seed=seed,
        )
        rendered = render_depth(scene)
        counts = np.bincount(
            rendered.plane_index[rendered.plane_index >= 0].ravel(), minlength=3
        )
        total = rendered.plane_index.size
        if counts[0] >= 0.15 * total and counts[1:].sum() >= 0.15 * total:
            if rel_noise:
                median = float(np.median(rendered.depth.values[rendered.depth.valid_mask]))
                scene.noise_sigma = rel_noise * median
                rendered = render_depth(scene)
            return scene, rendered


class TestAcceptance:
    def test_gravity_oracle(self):
        """>= 20 seeded ground+wall scenes: 1 deg with 1% depth noise, 0.1 deg clean."""
        intr = CameraIntrinsics(fx=55.0, fy=55.0, cx=31.5, cy=23.5, width=64, height=48)
        start = time.perf_counter()
        worst = {"clean": 0.0, "noisy": 0.0}
        for label, rel_noise, limit_deg in (("clean", 0.0, 0.1), ("noisy", 0.01, 1.0)):
            rng = np.random.default_rng(42)
            for k in range(20):
                scene, rendered = observable_scene(rng, intr, 100 + k, rel_noise)
                cloud = backproject(rendered.depth, intr)
                estimate = estimate_gravity(cloud)
                err = math.degrees(angle_between_axes(estimate.g, rendered.gravity))
                worst[label] = max(worst[label], err)
            assert worst[label] <= limit_deg, f"{label}: worst {worst[label]:.4f} deg"
        elapsed = time.perf_counter() - start
        report(
            "gravity-oracle",
            worst["clean"] <= 0.1 and worst["noisy"] <= 1.0 and elapsed < 10.0,
            f"clean worst {worst['clean']:.3f} deg, noisy worst {worst['noisy']:.3f} deg, "
            f"{elapsed:.1f}s for 40 scenes",
        )

    def test_eigen_vs_brute_force(self):
        """100 random normal sets: closed-form objective <= sampled minimum + 1e-6."""
        start = time.perf_counter()
        rng = np.random.default_rng(7)
        bank = rng.standard_normal((1_000_000, 3))
        bank /= np.linalg.norm(bank, axis=1, keepdims=True)

        failures = 0
        for _ in range(100):
            n = rng.standard_normal((int(rng.integers(5, 60)), 3))
            n /= np.linalg.norm(n, axis=1, keepdims=True)
            k = int(rng.integers(0, len(n) + 1))
            parallel, perpendicular = n[:k], n[k:]
            g_prev = rng.standard_normal(3)
            g_prev /= np.linalg.norm(g_prev)
            step = update_gravity(parallel, perpendicular, g_prev)

            eigen_obj = gravity_objective(parallel, perpendicular, step.g)
            best = math.inf
            for lo in range(0, len(bank), 200_000):
                chunk = bank[lo : lo + 200_000]
                obj = np.zeros(len(chunk))
                if len(perpendicular):
                    obj += ((chunk @ perpendicular.T) ** 2).sum(axis=1)
                if len(parallel):
                    obj += len(parallel) - ((chunk @ parallel.T) ** 2).sum(axis=1)
                best = min(best, float(obj.min()))
            if eigen_obj > best + 1e-6:
                failures += 1
        elapsed = time.perf_counter() - start
        report(
            "eigen-vs-brute-force",
            failures == 0 and elapsed < 60.0,
            f"{failures}/100 violations, {elapsed:.1f}s",
        )

    def test_hha_analytic_channels(self):
        """Plane scenes: angle within one step for >= 99% of pixels; floor within 2%."""
        intr = CameraIntrinsics(fx=55.0, fy=55.0, cx=31.5, cy=23.5, width=64, height=48)
        angle_fracs = []
        floor_errors = []
        for tilt_deg, azim, height in ((0.0, 0.0, 1.5), (6.0, 0.8, 1.2), (11.0, 2.4, 2.0)):
            gravity = tilted_gravity(math.radians(tilt_deg), azim)
            scene = SceneSpec(intrinsics=intr, camera_height=height, gravity=gravity)
            rendered = render_depth(scene)
            result, _ = depth_to_hha(rendered.depth, intr)

            cos = np.clip(
                rendered.normals.reshape(-1, 3) @ rendered.gravity, -1.0, 1.0
            ).reshape(rendered.plane_index.shape)
            expected = np.floor(np.degrees(np.arccos(cos)) / 180.0 * 255.0 + 0.5)
            valid = rendered.depth.valid_mask
            diff = np.abs(result.image.channels[2].astype(float) - expected)[valid]
            angle_fracs.append(float((diff <= 1).mean()))
            floor_errors.append(abs(-result.floor - height) / height)
        ok = min(angle_fracs) >= 0.99 and max(floor_errors) <= 0.02
        report(
            "hha-analytic-channels",
            ok,
            f"angle within 1 step on >= {min(angle_fracs) * 100:.1f}% of pixels, "
            f"floor error <= {max(floor_errors) * 100:.2f}%",
        )

    def test_gradient_check(self):
        """Backprop vs central differences on [8, 6, 4], 5 seeds, rel err <= 1e-4."""
        start = time.perf_counter()
        worst = 0.0
        for seed in range(5):
            rng = np.random.default_rng(seed)
            model = init_model([8, 6, 4], rng)
            x = rng.standard_normal((5, 8))
            y = rng.integers(0, 4, size=5)
            _, grads = loss_and_grad(model, x, y)
            params = [*model.weights, *model.biases]
            fd = finite_difference_grads(lambda: mean_loss(model, x, y), params, eps=1e-4)
            bp = [g[0] for g in grads] + [g[1] for g in grads]
            for got, want in zip(bp, fd):
                rel = np.abs(got - want) / np.maximum.reduce(
                    [np.abs(got), np.abs(want), np.full_like(got, 1e-8)]
                )
                worst = max(worst, float(rel.max()))
        elapsed = time.perf_counter() - start
        report(
            "gradient-check",
            worst <= 1e-4 and elapsed < 5.0,
            f"worst relative error {worst:.2e}, {elapsed:.1f}s",
        )

    def test_zero_model_loss(self):
        """Zero-initialized model: cross-entropy = ln(classes) within 1e-9."""
        deviations = []
        for classes in (10, 100):
            model_dims = [16, classes]
            model = init_model(model_dims, np.random.default_rng(0))
            for w in model.weights:
                w[:] = 0.0
            x = np.random.default_rng(1).standard_normal((12, 16))
            y = np.arange(12) % classes
            loss, _ = loss_and_grad(model, x, y)
            deviations.append(abs(loss - math.log(classes)))
        report(
            "zero-model-loss",
            max(deviations) <= 1e-9,
            f"max |loss - ln(classes)| = {max(deviations):.2e}",
        )

    def test_fusion_dominance(self):
        """Split dataset, 100 classes, dim 32: fusion beats heads by >= 10 points
        and the naive equal-weight average stays below the trained mixer."""
        start = time.perf_counter()
        spec = EmbeddingSpec(
            classes=100, samples_per_class=10, test_samples_per_class=30,
            dim=32, separation=5.0, noise_sigma=1.0, mode="split",
            domain_shift=0.0, seed=0,
        )
        d = generate_embeddings(spec)
        config = TrainConfig(
            epochs=60, batch_size=32, learning_rate=0.05, seed=1, hidden_dim=512
        )
        rgb = train_head(d.train_rgb, d.train_labels, config, n_classes=100).model
        hha = train_head(d.train_hha, d.train_labels, config, n_classes=100).model
        fusion = train_fusion(
            join_pairs(d.train_rgb, d.train_hha), d.train_labels, config, n_classes=100
        ).model

        pairs = join_pairs(d.test_rgb, d.test_hha)
        y = d.test_labels
        probs_rgb = forward_batch(rgb, d.test_rgb.vectors)
        probs_hha = forward_batch(hha, d.test_hha.vectors)
        probs_fusion = forward_batch(fusion, pairs.vectors)
        probs_naive = naive_average_probs(probs_rgb, probs_hha)

        def accuracy(probs):
            return float((np.argmax(probs, axis=1) == y).mean())

        acc = {
            "rgb": accuracy(probs_rgb),
            "hha": accuracy(probs_hha),
            "fusion": accuracy(probs_fusion),
            "naive": accuracy(probs_naive),
        }
        elapsed = time.perf_counter() - start
        margin = acc["fusion"] - max(acc["rgb"], acc["hha"])
        report(
            "fusion-dominance",
            margin >= 0.10 and acc["naive"] < acc["fusion"] and elapsed < 120.0,
            f"fusion {acc['fusion'] * 100:.1f}%, rgb {acc['rgb'] * 100:.1f}%, "
            f"hha {acc['hha'] * 100:.1f}%, naive {acc['naive'] * 100:.1f}%, "
            f"{elapsed:.0f}s",
        )

    def test_grid_properties(self):
        """Totality, determinism, exact translation equivariance, border clamps."""
        grid = PlaceGrid(0.0, 0.0, 100.0, 100.0, 10, 10)
        rng = np.random.default_rng(17)
        xs = rng.uniform(-200.0, 300.0, 10_000)
        ys = rng.uniform(-200.0, 300.0, 10_000)
        labels = classify_points(grid, xs, ys)
        total = labels.min() >= 0 and labels.max() < 100
        deterministic = np.array_equal(labels, classify_points(grid, xs, ys))

        offset = np.array([1234.5, -987.25])
        base = [Viewpoint(0, 0, "a"), Viewpoint(100, 100, "b"), Viewpoint(33, 67, "c")]
        moved_grid = build_grid(
            [Viewpoint(v.x + offset[0], v.y + offset[1], v.sample_id) for v in base],
            10, 10,
        )
        shifted = classify_points(moved_grid, xs + offset[0], ys + offset[1])
        equivariant = np.array_equal(labels, shifted)

        clamps = (
            classify_viewpoint(grid, Viewpoint(5, 5, "q")) == 0
            and classify_viewpoint(grid, Viewpoint(95, 95, "q")) == 99
            and classify_viewpoint(grid, Viewpoint(100, 100, "q")) == 99
            and classify_viewpoint(grid, Viewpoint(-1e9, 1e9, "q")) == 90
        )
        report(
            "grid-properties",
            total and deterministic and equivariant and clamps,
            f"10k points total/deterministic/equivariant, border cases hold",
        )

    def test_format_round_trips(self, tmp_path):
        """>= 1000 randomized bit-exact round trips across TEN, PPM, PGM, manifests."""
        rng = np.random.default_rng(23)
        cases = 0

        for i in range(250):
            shape = tuple(rng.integers(1, 7, size=rng.integers(1, 5)))
            tensor = rng.standard_normal(shape).astype(np.float32)
            path = tmp_path / "t.ten"
            data_io.write_tensor(path, tensor)
            out = data_io.read_tensor(path)
            assert out.shape == tensor.shape and out.tobytes() == tensor.tobytes()
            cases += 1

        for i in range(250):
            h, w = rng.integers(1, 12, size=2)
            channels = rng.integers(0, 256, size=(3, h, w), dtype=np.uint8)
            path = tmp_path / "x.ppm"
            data_io.write_ppm(path, channels)
            assert data_io.read_ppm(path).tobytes() == channels.tobytes()
            cases += 1

        for i in range(250):
            h, w = rng.integers(1, 12, size=2)
            values = rng.integers(0, 65536, size=(h, w), dtype=np.uint16)
            path = tmp_path / "x.pgm"
            data_io.write_pgm16(path, values)
            assert data_io.read_pgm16(path).tobytes() == values.tobytes()
            cases += 1

        for i in range(250):
            n = int(rng.integers(0, 6))
            entries = []
            for j in range(n):
                artifacts = {}
                if rng.random() < 0.8:
                    rel = f"emb/e{i}_{j}.ten"
                    (tmp_path / "emb").mkdir(exist_ok=True)
                    data_io.write_tensor(
                        tmp_path / rel, rng.standard_normal(3).astype(np.float32)
                    )
                    artifacts["rgb_embedding"] = rel
                entries.append(
                    data_io.ManifestEntry(
                        f"s{j}", float(rng.normal()), float(rng.normal()), artifacts
                    )
                )
            manifest = data_io.DatasetManifest(
                name=f"m{i}", split=("train", "test")[int(rng.integers(2))],
                entries=entries,
            )
            path = tmp_path / "m.json"
            data_io.save_manifest(manifest, path)
            loaded = data_io.load_manifest(path)
            second = tmp_path / "m2.json"
            data_io.save_manifest(loaded, second)
            assert path.read_bytes() == second.read_bytes()
            assert [e.sample_id for e in loaded.entries] == [
                e.sample_id for e in manifest.entries
            ]
            assert all(
                (a.x, a.y, a.artifacts) == (b.x, b.y, b.artifacts)
                for a, b in zip(loaded.entries, manifest.entries)
            )
            cases += 1

        report("format-round-trips", cases >= 1000, f"{cases} randomized cases bit-exact")

    def test_end_to_end_pipeline(self, tmp_path):
        """synth -> encode -> grid -> label -> train x3 -> eval from one command,
        deterministic under a fixed seed, fusion top-1 >= 90%."""
        spec_doc = {
            "seed": 11,
            "grid": {"rows": 10, "cols": 10},
            "workspace": {"min_x": 0.0, "min_y": 0.0, "max_x": 100.0, "max_y": 100.0},
            "embeddings": {
                "dim": 16,
                "samples_per_class": 5,
                "test_samples_per_class": 5,
                "separation": 12.0,
                "noise_sigma": 1.0,
                "mode": "both",
                "domain_shift": 0.5,
            },
            "scenes": {"count": 4, "width": 64, "height": 48},
            "train": {
                "epochs": 25, "batch_size": 32, "learning_rate": 0.05,
                "hidden_dim": 256, "optimizer": "sgd-momentum",
            },
        }
        spec = tmp_path / "spec.json"
        spec.write_text(json.dumps(spec_doc))

        reports = []
        for name in ("run1", "run2"):
            proc = subprocess.run(
                [sys.executable, "-m", "placefusion", "pipeline",
                 "--spec", str(spec), "--out", str(tmp_path / name)],
                capture_output=True, text=True,
            )
            assert proc.returncode == 0, proc.stderr
            doc = json.loads((tmp_path / name / "report.json").read_text())
            doc.pop("config")
            reports.append(doc)

        deterministic = reports[0] == reports[1]
        artifacts_equal = all(
            (tmp_path / "run1" / rel).read_bytes() == (tmp_path / "run2" / rel).read_bytes()
            for rel in (
                "model_fusion/w0.ten", "model_rgb/w0.ten", "train_labels.csv",
                "hha/gravity_log.csv", "confusion.csv",
            )
        )
        fusion_top1 = reports[0]["comparisons"]["fusion"]["top1"]
        report(
            "end-to-end-pipeline",
            deterministic and artifacts_equal and fusion_top1 >= 0.90,
            f"fusion top-1 {fusion_top1 * 100:.1f}%, reruns bit-identical",
        )
