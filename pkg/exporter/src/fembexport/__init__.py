"""Embedding-bank exporter: image folders plus a vision-language encoder in,
simulator-ready .femb files out."""

from .encoders import HashProjectionEncoder, get_encoder
from .export import ExportManifest, ExportResult, export, load_manifest, selftest
from .format import Bank, read_bank, write_bank

__version__ = "0.1.0"

__all__ = [
    "Bank",
    "ExportManifest",
    "ExportResult",
    "HashProjectionEncoder",
    "export",
    "get_encoder",
    "load_manifest",
    "read_bank",
    "selftest",
    "write_bank",
    "__version__",
]
