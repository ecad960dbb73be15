"""Command-line entry points mirroring ExportJob."""

from __future__ import annotations

import argparse
import sys

from .jobs import ExportJob, export_depth, export_embeddings


def _base_parser(description: str) -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description=description)
    parser.add_argument("--images", required=True, help="input image directory")
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--batch-size", type=int, default=8)
    parser.add_argument("--device", default="cpu", help="device hint, e.g. cpu or cuda")
    parser.add_argument("--resolution", type=int, default=256,
                        help="inference resolution (resize happens before the model)")
    parser.add_argument("--weights", choices=["auto", "pretrained", "random"],
                        default="auto")
    parser.add_argument("--seed", type=int, default=0,
                        help="seed for the random-init weight fallback")
    parser.add_argument("--split", choices=["train", "test"], default="train")
    parser.add_argument("--name", default="exported")
    parser.add_argument("--viewpoints", help="optional sample_id,x,y CSV")
    return parser


def _job_from_args(args, extractor: str) -> ExportJob:
    return ExportJob(
        image_dir=args.images,
        out_dir=args.out,
        extractor=extractor,
        batch_size=args.batch_size,
        device=args.device,
        resolution=args.resolution,
        weights=args.weights,
        seed=args.seed,
        split=args.split,
        name=args.name,
        viewpoints=args.viewpoints,
    )


def main_depth(argv=None) -> int:
    parser = _base_parser("Export relative-inverse-depth TEN tensors from RGB images.")
    args = parser.parse_args(argv)
    try:
        entries, errors = export_depth(_job_from_args(args, "depth"))
    except (ValueError, RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"exported {len(entries)} depth tensor(s), {len(errors)} skipped")
    return 0


def main_embeddings(argv=None) -> int:
    parser = _base_parser("Export 4096-d embedding TEN tensors from RGB images or HHA PPMs.")
    parser.add_argument("--modality", choices=["rgb", "hha"], default="rgb")
    args = parser.parse_args(argv)
    try:
        entries, errors = export_embeddings(
            _job_from_args(args, f"{args.modality}-embedding")
        )
    except (ValueError, RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"exported {len(entries)} embedding(s), {len(errors)} skipped")
    return 0


if __name__ == "__main__":
    sys.exit(main_depth())
