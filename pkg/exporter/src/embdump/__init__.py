"""Token-embedding exporter for the grounding engine's binary format."""

from .exporter import ExportManifest, export_embeddings

__version__ = "0.1.0"

__all__ = ["ExportManifest", "export_embeddings"]
