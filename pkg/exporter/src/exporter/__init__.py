"""Exporters that run depth and embedding backbones over image folders and
emit placefusion-format tensors and manifests."""

from .jobs import ExportJob, export_depth, export_embeddings
from .models import EMBED_DIM, DepthEstimator, EmbeddingExtractor

__version__ = "0.1.0"
