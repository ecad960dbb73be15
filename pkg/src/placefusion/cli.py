"""Command-line entry point wiring the pipeline end to end.

Subcommands: synth, encode, grid, label, train, eval, pipeline. Exit codes:
0 success, 1 usage error, 2 data/contract error; failures print one
machine-readable line to stderr of the form "error: <kind>: <message>".

Flag precedence is CLI flag > config file (key=value lines) > built-in
default; every JSON output carries the resolved configuration under a
"config" key for provenance.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import data_io, fixtures
from .errors import PlaceFusionError
from .evaluate import ablation_report, render_report_text, report_to_dict
from .fusion import TrainConfig, load_model, save_model, train_fusion, train_head
from .geometry import (
    CameraIntrinsics,
    DepthConvention,
    DepthImage,
    GravityConfig,
    HhaConfig,
    depth_to_hha,
)
from .places import build_grid, label_dataset

__all__ = ["main"]


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # noqa: D102 - argparse hook
        raise _UsageError(message)


def _read_kv_config(path: str | Path) -> dict[str, str]:
    """key=value lines; blank lines and #-comments are ignored."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise data_io.DataError(f"{path}:{lineno}: expected key=value, got {line!r}")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def _resolve(flag_value, file_config: dict[str, str], key: str, default, cast):
    """CLI flag > config file > default."""
    if flag_value is not None:
        return flag_value
    if key in file_config:
        return cast(file_config[key])
    return default


def _add_encode_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--manifest", help="dataset manifest listing depth artifacts")
    p.add_argument("--depth-dir", help="directory of .ten / .pgm depth files")
    p.add_argument("--out", required=True, help="output directory for HHA PPMs")
    p.add_argument("--config", help="key=value config file")
    p.add_argument("--fx", type=float)
    p.add_argument("--fy", type=float)
    p.add_argument("--cx", type=float)
    p.add_argument("--cy", type=float)
    p.add_argument("--h-max", type=float, dest="h_max")
    p.add_argument("--median-depth", type=float, dest="median_depth")
    p.add_argument("--normal-window", type=int, dest="normal_window")
    p.add_argument("--max-iterations", type=int, dest="max_iterations")
    p.add_argument("--tol", type=float)
    p.add_argument("--one-channel", action="store_true", default=None, dest="one_channel")
    p.add_argument(
        "--convention",
        choices=["metric", "relative_inverse"],
        help="depth convention for --depth-dir .ten inputs",
    )
    p.add_argument("--gravity-log", dest="gravity_log", help="CSV log path")


def _build_parser() -> _Parser:
    parser = _Parser(prog="placefusion", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic fixture tree")
    p.add_argument("--spec", required=True, help="fixture spec JSON")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, help="override the spec seed")

    p = sub.add_parser("encode", help="encode depth images into HHA PPMs")
    _add_encode_flags(p)

    p = sub.add_parser("grid", help="build a place grid from training viewpoints")
    p.add_argument("--viewpoints", required=True)
    p.add_argument("--rows", type=int, default=10)
    p.add_argument("--cols", type=int, default=10)
    p.add_argument("--out", required=True, help="grid JSON path")

    p = sub.add_parser("label", help="label viewpoints with grid place classes")
    p.add_argument("--viewpoints", required=True)
    p.add_argument("--grid", required=True)
    p.add_argument("--out", required=True, help="labels CSV path")

    p = sub.add_parser("train", help="train a head or the fusion network")
    p.add_argument("--modality", required=True, choices=["rgb", "hha", "fusion"])
    p.add_argument("--manifest", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--grid", help="grid JSON fixing the class count to rows*cols")
    p.add_argument("--classes", type=int, help="class count when no grid is given")
    p.add_argument("--out", required=True, help="model output directory")
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int, dest="batch_size")
    p.add_argument("--learning-rate", type=float, dest="learning_rate")
    p.add_argument("--seed", type=int)
    p.add_argument("--optimizer", choices=["sgd", "sgd-momentum"])
    p.add_argument("--hidden-dim", type=int, dest="hidden_dim")
    p.add_argument("--config", help="key=value config file")
    p.add_argument("--loss-history", dest="loss_history", help="CSV output path")

    p = sub.add_parser("eval", help="score fusion against heads on a test set")
    p.add_argument("--rgb-model", required=True, dest="rgb_model")
    p.add_argument("--hha-model", required=True, dest="hha_model")
    p.add_argument("--fusion-model", required=True, dest="fusion_model")
    p.add_argument("--manifest", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--train-labels", dest="train_labels", help="for the unseen-class line")
    p.add_argument("--grid", help="grid JSON; declares the class count")
    p.add_argument("--out", required=True, help="report JSON path")
    p.add_argument("--text", help="text report path")
    p.add_argument("--confusion", help="confusion matrix CSV path")

    p = sub.add_parser("pipeline", help="synth + encode + grid + label + train + eval")
    p.add_argument("--spec", required=True, help="fixture spec JSON")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, help="override the spec seed")

    return parser


# ---------------------------------------------------------------------------
# subcommands


def _cmd_synth(args) -> int:
    doc = json.loads(Path(args.spec).read_text())
    if args.seed is not None:
        doc["seed"] = args.seed
    spec = fixtures.parse_fixture_spec(doc)
    echo = {"spec": doc, "seed": spec.seed}
    summary = fixtures.write_fixture(spec, args.out, config_echo=echo)
    print(json.dumps(summary, indent=2, sort_keys=True))
    return 0


def _intrinsics_from_args(args, file_config, width: int, height: int) -> CameraIntrinsics:
    fx = _resolve(args.fx, file_config, "fx", None, float)
    fy = _resolve(args.fy, file_config, "fy", None, float)
    cx = _resolve(args.cx, file_config, "cx", None, float)
    cy = _resolve(args.cy, file_config, "cy", None, float)
    if fx is None or fy is None:
        raise _UsageError("encode needs --fx and --fy (or fx/fy in --config)")
    if cx is None:
        cx = (width - 1) / 2.0
    if cy is None:
        cy = (height - 1) / 2.0
    return CameraIntrinsics(fx=fx, fy=fy, cx=cx, cy=cy, width=width, height=height)


def _encode_inputs(args) -> list[tuple[str, Path, DepthConvention]]:
    """(sample_id, path, convention) triples from a manifest or a directory."""
    inputs: list[tuple[str, Path, DepthConvention]] = []
    if args.manifest:
        manifest = data_io.load_manifest(args.manifest)
        for entry in manifest.entries:
            if "depth" in entry.artifacts:
                inputs.append(
                    (entry.sample_id, manifest.resolve(entry, "depth"), manifest.depth_convention)
                )
    elif args.depth_dir:
        convention = DepthConvention(args.convention or "metric")
        root = Path(args.depth_dir)
        if not root.is_dir():
            raise data_io.DataError(f"depth directory {root} does not exist")
        for path in sorted(root.iterdir()):
            if path.suffix == ".ten":
                inputs.append((path.stem, path, convention))
            elif path.suffix == ".pgm":
                inputs.append((path.stem, path, DepthConvention.METRIC))
    else:
        raise _UsageError("encode needs --manifest or --depth-dir")
    return inputs


def _load_depth(path: Path, convention: DepthConvention) -> DepthImage:
    if path.suffix == ".pgm":
        return data_io.read_depth_pgm(path)
    values = data_io.read_tensor(path)
    if values.ndim != 2:
        raise data_io.DataError(f"{path}: depth tensor must be 2-D, got shape {values.shape}")
    return DepthImage(values.astype(np.float64), convention)


def _cmd_encode(args) -> int:
    file_config = _read_kv_config(args.config) if args.config else {}
    inputs = _encode_inputs(args)
    if not inputs:
        raise data_io.DataError("no inputs: nothing to encode")

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    first = _load_depth(inputs[0][1], inputs[0][2])
    intr = _intrinsics_from_args(args, file_config, first.width, first.height)
    hha_config = HhaConfig(
        h_max=_resolve(args.h_max, file_config, "h_max", 10.0, float),
        median_depth=_resolve(args.median_depth, file_config, "median_depth", 5.0, float),
        normal_window=_resolve(args.normal_window, file_config, "normal_window", 5, int),
        one_channel=bool(_resolve(args.one_channel, file_config, "one_channel", False,
                                  lambda s: s.lower() in ("1", "true", "yes"))),
    )
    gravity_config = GravityConfig(
        max_iterations=_resolve(args.max_iterations, file_config, "max_iterations", 10, int),
        tol=_resolve(args.tol, file_config, "tol", 1e-3, float),
    )

    log_path = Path(args.gravity_log) if args.gravity_log else out_dir / "gravity_log.csv"
    with open(log_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["sample_id", "gx", "gy", "gz", "iterations", "final_angle_change", "empty_split"]
        )
        for sample_id, path, convention in inputs:
            depth = _load_depth(path, convention)
            if (depth.height, depth.width) != (intr.height, intr.width):
                raise data_io.DataError(
                    f"{path}: size {depth.width}x{depth.height} differs from "
                    f"first input {intr.width}x{intr.height}"
                )
            result, gravity = depth_to_hha(depth, intr, gravity_config, hha_config)
            data_io.write_ppm(out_dir / f"{sample_id}.ppm", result.image)
            writer.writerow(
                [
                    sample_id,
                    repr(float(gravity.g[0])),
                    repr(float(gravity.g[1])),
                    repr(float(gravity.g[2])),
                    gravity.iterations_run,
                    repr(gravity.final_angle_change),
                    int(gravity.empty_split),
                ]
            )
            if args.verbose:
                print(f"encoded {sample_id} ({gravity.iterations_run} gravity iterations)")
    print(f"encoded {len(inputs)} image(s) into {out_dir}")
    return 0


def _cmd_grid(args) -> int:
    viewpoints = data_io.load_viewpoints(args.viewpoints)
    grid = build_grid(viewpoints, args.rows, args.cols)
    echo = {"viewpoints": str(args.viewpoints), "rows": args.rows, "cols": args.cols}
    data_io.save_grid(grid, args.out, config=echo)
    print(
        f"grid {grid.rows}x{grid.cols} over "
        f"[{grid.min_x}, {grid.max_x}] x [{grid.min_y}, {grid.max_y}]"
    )
    return 0


def _cmd_label(args) -> int:
    viewpoints = data_io.load_viewpoints(args.viewpoints)
    grid = data_io.load_grid(args.grid)
    labeled = label_dataset(grid, viewpoints)
    data_io.save_labels(labeled.labels, args.out)
    hist = labeled.histogram
    print(f"labeled {len(labeled.labels)} viewpoints into {grid.n_classes} classes")
    print(f"histogram (row-major): {hist.tolist()}")
    print(f"empty classes: {int((hist == 0).sum())}")
    return 0


def _train_config_from_args(args, file_config) -> TrainConfig:
    return TrainConfig(
        epochs=_resolve(args.epochs, file_config, "epochs", 30, int),
        batch_size=_resolve(args.batch_size, file_config, "batch_size", 32, int),
        learning_rate=_resolve(args.learning_rate, file_config, "learning_rate", 0.05, float),
        seed=_resolve(args.seed, file_config, "seed", 0, int),
        optimizer=_resolve(args.optimizer, file_config, "optimizer", "sgd", str),
        hidden_dim=_resolve(args.hidden_dim, file_config, "hidden_dim", 1024, int),
    )


def _cmd_train(args) -> int:
    file_config = _read_kv_config(args.config) if args.config else {}
    config = _train_config_from_args(args, file_config)
    manifest = data_io.load_manifest(args.manifest)
    labels = data_io.load_labels(args.labels)
    if args.grid:
        grid = data_io.load_grid(args.grid)
        n_classes = grid.n_classes
    else:
        n_classes = args.classes

    if args.modality == "fusion":
        rgb = data_io.load_embeddings(manifest, data_io.Modality.RGB)
        hha = data_io.load_embeddings(manifest, data_io.Modality.HHA)
        pairs = data_io.join_pairs(rgb, hha)
        result = train_fusion(pairs, labels, config, n_classes)
    else:
        modality = data_io.Modality.RGB if args.modality == "rgb" else data_io.Modality.HHA
        embeddings = data_io.load_embeddings(manifest, modality)
        result = train_head(embeddings, labels, config, n_classes)

    echo = {
        "modality": args.modality,
        "epochs": config.epochs,
        "batch_size": config.batch_size,
        "learning_rate": config.learning_rate,
        "seed": config.seed,
        "optimizer": config.optimizer,
        "hidden_dim": config.hidden_dim,
        "classes": result.model.n_classes,
    }
    save_model(result.model, args.out, config=echo)
    history_path = (
        Path(args.loss_history) if args.loss_history else Path(args.out) / "loss_history.csv"
    )
    with open(history_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "loss"])
        for epoch, loss in enumerate(result.loss_history, start=1):
            writer.writerow([epoch, repr(loss)])
    print(
        f"trained {args.modality} model {result.model.layer_dims}; "
        f"final loss {result.loss_history[-1]:.6f}"
    )
    return 0


def _cmd_eval(args) -> int:
    rgb_model = load_model(args.rgb_model)
    hha_model = load_model(args.hha_model)
    fusion_model = load_model(args.fusion_model)
    manifest = data_io.load_manifest(args.manifest)
    truth = data_io.load_labels(args.labels)
    rgb = data_io.load_embeddings(manifest, data_io.Modality.RGB)
    hha = data_io.load_embeddings(manifest, data_io.Modality.HHA)

    train_histogram = None
    if args.train_labels:
        train_labels = data_io.load_labels(args.train_labels)
        n_classes = fusion_model.n_classes
        train_histogram = np.zeros(n_classes, dtype=np.int64)
        for label in train_labels.values():
            train_histogram[label] += 1

    report = ablation_report(
        rgb_model, hha_model, fusion_model, rgb, hha, truth,
        train_histogram=train_histogram,
    )
    doc = report_to_dict(report)
    doc["config"] = {
        "manifest": str(args.manifest),
        "labels": str(args.labels),
        "rgb_model": str(args.rgb_model),
        "hha_model": str(args.hha_model),
        "fusion_model": str(args.fusion_model),
    }
    Path(args.out).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    text = render_report_text(report)
    if args.text:
        Path(args.text).write_text(text)
    if args.confusion:
        with open(args.confusion, "w", newline="") as fh:
            writer = csv.writer(fh)
            for row in report.confusion:
                writer.writerow([int(c) for c in row])
    print(text, end="")
    return 0


def _cmd_pipeline(args) -> int:
    """Chain synth, encode, grid, label, train x3, eval under one seed."""
    out = Path(args.out)
    doc = json.loads(Path(args.spec).read_text())
    if args.seed is not None:
        doc["seed"] = args.seed
    spec = fixtures.parse_fixture_spec(doc)
    echo = {"spec": doc, "seed": spec.seed}

    fixtures.write_fixture(spec, out / "data", config_echo=echo)
    train_dir = out / "data" / "train"
    test_dir = out / "data" / "test"

    if spec.scene_count:
        intr = spec.scene_intrinsics
        rc = main(
            [
                "encode",
                "--manifest", str(train_dir / "manifest.json"),
                "--out", str(out / "hha"),
                "--fx", str(intr.fx), "--fy", str(intr.fy),
                "--cx", str(intr.cx), "--cy", str(intr.cy),
            ]
        )
        if rc:
            return rc

    rc = main(
        [
            "grid",
            "--viewpoints", str(train_dir / "viewpoints.csv"),
            "--rows", str(spec.rows), "--cols", str(spec.cols),
            "--out", str(out / "grid.json"),
        ]
    )
    if rc:
        return rc

    for split, split_dir in (("train", train_dir), ("test", test_dir)):
        rc = main(
            [
                "label",
                "--viewpoints", str(split_dir / "viewpoints.csv"),
                "--grid", str(out / "grid.json"),
                "--out", str(out / f"{split}_labels.csv"),
            ]
        )
        if rc:
            return rc

    train_cfg = spec.train
    train_flags: list[str] = []
    for key, flag in (
        ("epochs", "--epochs"),
        ("batch_size", "--batch-size"),
        ("learning_rate", "--learning-rate"),
        ("optimizer", "--optimizer"),
        ("hidden_dim", "--hidden-dim"),
    ):
        if key in train_cfg:
            train_flags += [flag, str(train_cfg[key])]
    train_flags += ["--seed", str(spec.seed)]

    for modality in ("rgb", "hha", "fusion"):
        rc = main(
            [
                "train",
                "--modality", modality,
                "--manifest", str(train_dir / "manifest.json"),
                "--labels", str(out / "train_labels.csv"),
                "--grid", str(out / "grid.json"),
                "--out", str(out / f"model_{modality}"),
                *train_flags,
            ]
        )
        if rc:
            return rc

    return main(
        [
            "eval",
            "--rgb-model", str(out / "model_rgb"),
            "--hha-model", str(out / "model_hha"),
            "--fusion-model", str(out / "model_fusion"),
            "--manifest", str(test_dir / "manifest.json"),
            "--labels", str(out / "test_labels.csv"),
            "--train-labels", str(out / "train_labels.csv"),
            "--grid", str(out / "grid.json"),
            "--out", str(out / "report.json"),
            "--text", str(out / "report.txt"),
            "--confusion", str(out / "confusion.csv"),
        ]
    )


_COMMANDS = {
    "synth": _cmd_synth,
    "encode": _cmd_encode,
    "grid": _cmd_grid,
    "label": _cmd_label,
    "train": _cmd_train,
    "eval": _cmd_eval,
    "pipeline": _cmd_pipeline,
}


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"error: usage: {exc}", file=sys.stderr)
        return 1
    try:
        return _COMMANDS[args.command](args)
    except _UsageError as exc:
        print(f"error: usage: {exc}", file=sys.stderr)
        return 1
    except (PlaceFusionError, OSError, json.JSONDecodeError) as exc:
        print(f"error: data: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
