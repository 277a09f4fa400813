"""Hidden-state extraction from a transformer checkpoint.

Each report text becomes one dense vector: the final hidden layer of the
encoder, pooled either at the first token (default) or as the masked mean
over all tokens. Extraction runs in evaluation mode, so repeated runs over
the same corpus produce identical vectors.
"""

import logging
from dataclasses import dataclass

import numpy as np

from .errors import ExtractError

log = logging.getLogger("reportvec")


@dataclass(frozen=True)
class ExtractionConfig:
    checkpoint: str
    max_length: int = 512
    pooling: str = "cls"
    batch_size: int = 16
    expected_dimension: int | None = None

    def __post_init__(self):
        if self.pooling not in ("cls", "mean"):
            raise ValueError(f"pooling must be cls or mean, got {self.pooling!r}")
        if self.max_length < 2:
            raise ValueError("max_length must be at least 2")
        if self.batch_size < 1:
            raise ValueError("batch_size must be positive")


def load_checkpoint(config: ExtractionConfig):
    """(tokenizer, model) pair in evaluation mode, hidden size checked."""
    from transformers import AutoModel, AutoTokenizer

    try:
        tokenizer = AutoTokenizer.from_pretrained(config.checkpoint)
        model = AutoModel.from_pretrained(config.checkpoint)
    except Exception as exc:
        raise ExtractError("bad_checkpoint", f"cannot load {config.checkpoint!r}: {exc}") from exc
    hidden = int(model.config.hidden_size)
    if config.expected_dimension is not None and hidden != config.expected_dimension:
        raise ExtractError(
            "checkpoint_mismatch",
            f"checkpoint hidden size {hidden} != expected {config.expected_dimension}",
        )
    model.eval()
    return tokenizer, model


def extract_hidden(records, config: ExtractionConfig, bundle=None) -> np.ndarray:
    """(n_reports, hidden) float32 matrix, one row per record, record order.

    Reports longer than max_length tokens are truncated from the tail; the
    count is logged, never silent. A text that tokenizes to nothing is an
    error rather than a zero vector.
    """
    import torch

    tokenizer, model = bundle if bundle is not None else load_checkpoint(config)
    texts = [r.text for r in records]

    raw = tokenizer(texts, add_special_tokens=True)["input_ids"]
    for r, ids in zip(records, raw):
        if len(ids) <= 2:  # nothing between the special tokens
            raise ExtractError(
                "tokenization",
                f"subject {r.subject_id!r} report on {r.report_date} has no tokens",
            )
    n_trunc = sum(len(ids) > config.max_length for ids in raw)
    if n_trunc:
        log.warning("truncated %d of %d reports to %d tokens", n_trunc, len(texts), config.max_length)

    rows = []
    with torch.no_grad():
        for start in range(0, len(texts), config.batch_size):
            chunk = texts[start:start + config.batch_size]
            enc = tokenizer(chunk, padding=True, truncation=True,
                            max_length=config.max_length, return_tensors="pt")
            out = model(**enc).last_hidden_state
            if config.pooling == "cls":
                pooled = out[:, 0, :]
            else:
                mask = enc["attention_mask"].unsqueeze(-1).to(out.dtype)
                pooled = (out * mask).sum(dim=1) / mask.sum(dim=1)
            rows.append(pooled.to(torch.float32).cpu().numpy())
    vectors = np.concatenate(rows, axis=0)
    if not np.all(np.isfinite(vectors)):
        raise ExtractError("bad_checkpoint", "checkpoint produced non-finite activations")
    return vectors
