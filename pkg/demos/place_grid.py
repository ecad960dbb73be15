"""Partition a workspace into place classes and label a trajectory.

Simulates a survey trajectory, builds the grid from its bounding box, and
shows how a shifted test trajectory (including excursions outside the
training area) maps onto the same classes.
"""

from pathlib import Path

import numpy as np

from placefusion import Viewpoint, build_grid, classify_points, label_dataset

OUT = Path(__file__).parent / "output"
OUT.mkdir(exist_ok=True)

rng = np.random.default_rng(5)

# figure-eight survey trajectory
t = np.linspace(0.0, 2 * np.pi, 600)
xs = 120.0 * np.sin(t) + rng.normal(0.0, 2.0, t.size)
ys = 80.0 * np.sin(2 * t) + rng.normal(0.0, 2.0, t.size)
train = [Viewpoint(float(x), float(y), f"tr_{i:04d}") for i, (x, y) in enumerate(zip(xs, ys))]

grid = build_grid(train, rows=10, cols=10)
print(f"workspace bbox: x [{grid.min_x:.1f}, {grid.max_x:.1f}], "
      f"y [{grid.min_y:.1f}, {grid.max_y:.1f}], {grid.n_classes} classes")

labeled = label_dataset(grid, train)
hist = labeled.histogram.reshape(grid.rows, grid.cols)
print(f"training samples per cell (row-major grid, 0 = never visited):")
for row in hist:
    print("  " + " ".join(f"{c:4d}" for c in row))
print(f"unseen cells in training: {int((labeled.histogram == 0).sum())} of {grid.n_classes}")

# a test trajectory on a slightly different route, drifting out of the bbox
xs2 = 130.0 * np.sin(t + 0.15) + rng.normal(0.0, 2.0, t.size)
ys2 = 78.0 * np.sin(2 * t + 0.1) + rng.normal(0.0, 2.0, t.size)
test_labels = classify_points(grid, xs2, ys2)
outside = (
    (xs2 < grid.min_x) | (xs2 > grid.max_x) | (ys2 < grid.min_y) | (ys2 > grid.max_y)
)
print(f"\ntest trajectory: {outside.sum()} of {t.size} points left the training bbox "
      f"(clamped to border cells)")
print(f"test label range: [{test_labels.min()}, {test_labels.max()}]")

try:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(7, 5))
    ax.scatter(xs, ys, s=4, label="train", alpha=0.6)
    ax.scatter(xs2, ys2, s=4, label="test", alpha=0.6)
    for i in range(grid.cols + 1):
        ax.axvline(grid.min_x + i * (grid.max_x - grid.min_x) / grid.cols,
                   color="gray", lw=0.4)
    for i in range(grid.rows + 1):
        ax.axhline(grid.min_y + i * (grid.max_y - grid.min_y) / grid.rows,
                   color="gray", lw=0.4)
    ax.legend()
    ax.set_title("place grid over the survey trajectory")
    fig.tight_layout()
    fig.savefig(OUT / "place_grid.png", dpi=110)
    print(f"wrote {OUT / 'place_grid.png'}")
except ImportError:
    print("matplotlib not available; skipped the plot")
