"""``link`` command line: run, synth, eval, margins."""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .comparison import ConfigurationError


def cmd_run(args) -> int:
    from .config import load_run_config
    from .pipeline import run_matching

    cfg = load_run_config(args.config)
    if args.workers is not None:
        cfg.workers = args.workers
    out = run_matching(cfg)
    print(json.dumps(out.summary, indent=2, sort_keys=True))
    return 0


def cmd_synth(args) -> int:
    from .config import load_synth_config
    from .io import write_datafile, write_truth
    from .synthetic import generate_synthetic

    job = load_synth_config(args.config)
    data = generate_synthetic(job.config)
    job.output.mkdir(parents=True, exist_ok=True)
    write_datafile(data.a, job.output / "a.csv")
    write_datafile(data.b, job.output / "b.csv")
    write_truth(data.truth, data.a.record_ids, data.b.record_ids, job.output / "truth.csv")
    print(f"wrote {len(data.a)} + {len(data.b)} records and truth to {job.output}")
    return 0


def cmd_eval(args) -> int:
    from .evaluation import actual_tpr_ppv
    from .io import align_pairs, read_pairs

    estimate, _ = read_pairs(args.estimate)
    truth, uncertain = read_pairs(args.truth)
    z_hat, labels = align_pairs(estimate, truth, uncertain)
    sc = actual_tpr_ppv(z_hat, labels)
    print(json.dumps({"tpr": _na(sc.tpr), "ppv": _na(sc.ppv), "true_positives": sc.true_positives,
                      "n_true": sc.n_true, "n_proposed": sc.n_proposed}, indent=2))
    return 0


def _na(v):
    return None if v != v else round(v, 6)


def cmd_margins(args) -> int:
    from .config import load_run_config
    from .pipeline import MARGINS_A, MARGINS_B, compute_margins, read_inputs

    cfg = load_run_config(args.config)
    target = cfg.margins if cfg.margins is not None else cfg.output
    a, b, _ = read_inputs(cfg)
    table_a, table_b = compute_margins(a, b, cfg.fields)
    target.mkdir(parents=True, exist_ok=True)
    table_a.save(target / MARGINS_A)
    table_b.save(target / MARGINS_B)
    for name, vec in table_a.pooled.items():
        print(name, " ".join(f"{p:.6f}" for p in vec))
    print(f"margins written to {target}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="link", description="Bayesian bipartite record linkage")
    parser.add_argument("-v", "--verbose", action="store_true", help="log per-block progress")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run the full linkage pipeline")
    p.add_argument("--config", required=True)
    p.add_argument("--workers", type=int, default=None, help="override the configured worker count")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("synth", help="generate a synthetic benchmark")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("eval", help="score an estimate against truth labels")
    p.add_argument("--estimate", required=True)
    p.add_argument("--truth", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("margins", help="precompute all-pairs disagreement margins")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_margins)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except RuntimeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
