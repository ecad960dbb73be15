"""Backbone wrappers: a monocular relative-depth estimator and a VGG16
image-embedding extractor.

Both try to fetch pretrained weights and fall back to seeded random
initialization when the environment has no route to the weight hosts; the
outcome is recorded in the lock info that every manifest embeds. Inference
is eval-mode and deterministic on CPU.
"""

from __future__ import annotations

import numpy as np
import torch
import torch.nn as nn
import torchvision

EMBED_DIM = 4096


class _FallbackDepthNet(nn.Module):
    """Small seeded convolutional net emitting positive relative inverse depth.

    Stands in for a pretrained monocular depth model when its weights are
    unreachable; useful for format and pipeline work, not for geometry.
    """

    def __init__(self, seed: int):
        super().__init__()
        generator = torch.Generator().manual_seed(seed)
        self.stack = nn.Sequential(
            nn.Conv2d(3, 16, 5, stride=2, padding=2),
            nn.ReLU(),
            nn.Conv2d(16, 16, 5, stride=2, padding=2),
            nn.ReLU(),
            nn.Conv2d(16, 1, 5, padding=2),
            nn.Softplus(),
        )
        with torch.no_grad():
            for p in self.parameters():
                p.copy_(torch.empty_like(p).uniform_(-0.1, 0.1, generator=generator))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        coarse = self.stack(x)
        return nn.functional.interpolate(
            coarse, size=x.shape[-2:], mode="bilinear", align_corners=False
        )


class DepthEstimator:
    """Relative-inverse-depth maps at the configured inference resolution."""

    def __init__(self, device: str = "cpu", weights: str = "auto", seed: int = 0):
        self.device = torch.device(device)
        self.lock: dict = {"role": "depth", "output": "relative_inverse"}
        model = None
        if weights in ("auto", "pretrained"):
            try:
                model = torch.hub.load("intel-isl/MiDaS", "MiDaS_small", trust_repo=True)
                self.lock.update({"model": "midas-small", "weights": "pretrained-hub"})
            except Exception as exc:
                if weights == "pretrained":
                    raise RuntimeError(f"pretrained depth weights unavailable: {exc}") from exc
        if model is None:
            model = _FallbackDepthNet(seed)
            self.lock.update(
                {"model": "fallback-cnn-v1", "weights": f"random-init(seed={seed})"}
            )
        self.model = model.to(self.device).eval()
        self.lock["deterministic"] = self.device.type == "cpu"

    @torch.no_grad()
    def __call__(self, batch: torch.Tensor) -> np.ndarray:
        out = self.model(batch.to(self.device))
        if out.ndim == 4:
            out = out[:, 0]
        return out.cpu().numpy().astype(np.float32)


class EmbeddingExtractor:
    """4096-d vectors from the second fully connected layer of VGG16."""

    def __init__(self, device: str = "cpu", weights: str = "auto", seed: int = 0):
        self.device = torch.device(device)
        self.lock: dict = {"role": "embedding", "layer": "fc2", "dim": EMBED_DIM}
        model = None
        if weights in ("auto", "pretrained"):
            try:
                model = torchvision.models.vgg16(
                    weights=torchvision.models.VGG16_Weights.IMAGENET1K_V1
                )
                self.lock.update({"model": "vgg16", "weights": "imagenet1k-v1"})
            except Exception as exc:
                if weights == "pretrained":
                    raise RuntimeError(
                        f"pretrained embedding weights unavailable: {exc}"
                    ) from exc
        if model is None:
            torch.manual_seed(seed)
            model = torchvision.models.vgg16(weights=None)
            self.lock.update({"model": "vgg16", "weights": f"random-init(seed={seed})"})
        # keep everything up to and including the second fully connected layer
        self.features = model.features.to(self.device).eval()
        self.avgpool = model.avgpool.to(self.device).eval()
        self.head = nn.Sequential(*list(model.classifier.children())[:4]).to(self.device).eval()
        self.lock["deterministic"] = self.device.type == "cpu"

    @torch.no_grad()
    def __call__(self, batch: torch.Tensor) -> np.ndarray:
        x = self.features(batch.to(self.device))
        x = torch.flatten(self.avgpool(x), 1)
        return self.head(x).cpu().numpy().astype(np.float32)
