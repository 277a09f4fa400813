import argparse
import logging
import sys

from .corpus import read_corpus
from .emit import emit_covariates
from .errors import ExtractError
from .extract import ExtractionConfig, extract_hidden, load_checkpoint


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="extract",
        description="Extract transformer hidden states from a report corpus "
                    "and emit engine-readable covariate files.",
    )
    p.add_argument("--corpus", required=True, help="csv with subject_id, report_date, text")
    p.add_argument("--checkpoint", required=True, help="model name or local checkpoint directory")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--pool", choices=("cls", "mean"), default="cls",
                   help="first-token or masked-mean pooling (default cls)")
    p.add_argument("--max-len", type=int, default=512,
                   help="token truncation length (default 512)")
    p.add_argument("--length", type=int, default=3,
                   help="covariate slots per subject, most recent reports kept (default 3)")
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--expect-dim", type=int, default=None,
                   help="fail unless the checkpoint hidden size matches")
    return p


def main(argv=None) -> int:
    logging.basicConfig(stream=sys.stderr, level=logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        config = ExtractionConfig(checkpoint=args.checkpoint, max_length=args.max_len,
                                  pooling=args.pool, batch_size=args.batch_size,
                                  expected_dimension=args.expect_dim)
        records = read_corpus(args.corpus)
        bundle = load_checkpoint(config)
        vectors = extract_hidden(records, config, bundle=bundle)
        manifest = emit_covariates(records, vectors, args.length, args.out)
    except ExtractError as exc:
        print(f"error[{exc.code}]: {exc.message}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error[io]: {exc}", file=sys.stderr)
        return 2
    subjects = len({r.subject_id for r in records})
    print(f"wrote {manifest}")
    print(f"subjects {subjects}, reports {len(records)}, d {vectors.shape[1]}, L {args.length}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
