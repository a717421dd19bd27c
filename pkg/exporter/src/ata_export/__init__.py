"""PyTorch-to-ATA checkpoint exporter."""

from .export import EmptySelectionError, ExportError, ExportManifest, SourceError, export

__version__ = "0.1.0"

__all__ = [
    "EmptySelectionError",
    "ExportError",
    "ExportManifest",
    "SourceError",
    "export",
]
