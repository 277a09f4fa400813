"""Local randomly initialized checkpoints for offline tests.

The contracts under test (loading, pooling, truncation, determinism,
emission) do not depend on trained weights, so a small random BERT with
the standard 768 hidden size stands in for a downloaded model.
"""

import csv

import pytest

SPECIALS = ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"]
LETTERS = list("abcdefghijklmnopqrstuvwxyz")
WORDS = [
    "the", "lung", "mass", "nodule", "stable", "effusion", "no", "evidence",
    "of", "unchanged", "increased", "right", "left", "lower", "upper", "lobe",
]
VOCAB = SPECIALS + LETTERS + ["##" + c for c in LETTERS] + WORDS


def build_checkpoint(path, seed):
    import torch
    from transformers import BertConfig, BertModel, BertTokenizer

    path.mkdir(parents=True, exist_ok=True)
    (path / "vocab.txt").write_text("\n".join(VOCAB) + "\n")
    config = BertConfig(vocab_size=len(VOCAB), hidden_size=768, num_hidden_layers=2,
                        num_attention_heads=4, intermediate_size=512,
                        max_position_embeddings=512)
    torch.manual_seed(seed)
    BertModel(config).save_pretrained(path)
    BertTokenizer(str(path / "vocab.txt")).save_pretrained(path)
    return str(path)


@pytest.fixture(scope="session")
def checkpoint_a(tmp_path_factory):
    return build_checkpoint(tmp_path_factory.mktemp("ckpt") / "a", seed=0)


@pytest.fixture(scope="session")
def checkpoint_b(tmp_path_factory):
    return build_checkpoint(tmp_path_factory.mktemp("ckpt") / "b", seed=1)


def write_corpus(path, rows, fieldnames=("subject_id", "report_date", "text")):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(fieldnames))
        writer.writeheader()
        for row in rows:
            writer.writerow(row)
    return path


OUTCOME_FIELDS = ("subject_id", "report_date", "text", "outcome_date", "event")


def clinical_rows():
    """Three subjects, outcome columns filled, one multi-report subject."""
    return [
        {"subject_id": "p1", "report_date": "2020-01-05", "text": "stable lung nodule",
         "outcome_date": "2020-06-01", "event": "1"},
        {"subject_id": "p1", "report_date": "2020-02-10", "text": "nodule increased, no effusion",
         "outcome_date": "2020-06-01", "event": "1"},
        {"subject_id": "p2", "report_date": "2020-01-20", "text": "no evidence of mass",
         "outcome_date": "2021-01-20", "event": "0"},
        {"subject_id": "p3", "report_date": "2020-03-01", "text": "left lower lobe mass",
         "outcome_date": "2020-04-15", "event": "1"},
        {"subject_id": "p3", "report_date": "2020-03-20", "text": "mass unchanged",
         "outcome_date": "2020-04-15", "event": "1"},
        {"subject_id": "p3", "report_date": "2020-03-25", "text": "right effusion, mass unchanged",
         "outcome_date": "2020-04-15", "event": "1"},
    ]
