"""reportvec: report texts to engine-readable covariate files."""

from .corpus import ReportRecord, read_corpus
from .emit import emit_covariates
from .errors import ExtractError
from .extract import ExtractionConfig, extract_hidden, load_checkpoint

__all__ = [
    "ExtractError",
    "ExtractionConfig",
    "ReportRecord",
    "emit_covariates",
    "extract_hidden",
    "load_checkpoint",
    "read_corpus",
]
