"""Run the whole pipeline from one command on generated fixtures.

Equivalent to:

    placefusion pipeline --spec <spec.json> --out <dir>

which chains synth, encode, grid, label, the three training runs, and eval.
"""

import json
import subprocess
import sys
import tempfile
from pathlib import Path

spec = {
    "seed": 7,
    "grid": {"rows": 10, "cols": 10},
    "workspace": {"min_x": -50.0, "min_y": -50.0, "max_x": 50.0, "max_y": 50.0},
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
    "train": {"epochs": 25, "batch_size": 32, "learning_rate": 0.05,
              "hidden_dim": 256, "optimizer": "sgd-momentum"},
}

with tempfile.TemporaryDirectory() as td:
    td = Path(td)
    (td / "spec.json").write_text(json.dumps(spec, indent=2))
    cmd = [sys.executable, "-m", "placefusion", "pipeline",
           "--spec", str(td / "spec.json"), "--out", str(td / "out")]
    print("+", " ".join(cmd))
    proc = subprocess.run(cmd, text=True)
    if proc.returncode != 0:
        sys.exit(proc.returncode)

    report = json.loads((td / "out" / "report.json").read_text())
    gravity_log = (td / "out" / "hha" / "gravity_log.csv").read_text().splitlines()
    print(f"\npipeline artifacts under {td / 'out'}:")
    for path in sorted((td / "out").glob("*")):
        print(f"  {path.name}")
    print(f"\nencoded scenes logged: {len(gravity_log) - 1}")
    print(f"fusion test top-1: {report['comparisons']['fusion']['top1'] * 100:.1f}%")
