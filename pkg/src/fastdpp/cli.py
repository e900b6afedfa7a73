"""``fastdpp`` command line.

Exit codes: 0 success, 1 validation / I/O error, 2 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from . import bench
from .chol_inc import DEFAULT_EPSILON
from .errors import ContractViolation, DPPError, NumericalFailure
from .greedy import SelectionResult, StoppingCriteria, fast_greedy
from .kernels import SyntheticConfig, read_kernel, synthetic_kernel, write_kernel
from .metrics import write_metric_csv
from .pipeline import (
    ingest,
    prepare_corpus,
    read_tasks,
    synthetic_ratings,
    write_ratings,
    write_tasks,
)
from .windowed import windowed_greedy

log = logging.getLogger("fastdpp")


@contextmanager
def _out(path):
    if path in (None, "-"):
        yield sys.stdout
    else:
        with open(path, "w", newline="") as fh:
            yield fh


def _csv_list(s: str) -> list[str]:
    return [x.strip() for x in s.split(",") if x.strip()]


def _float_list(s: str) -> list[float]:
    try:
        return [float(x) for x in _csv_list(s)]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {s!r}") from None


def selection_json(res: SelectionResult) -> str:
    return json.dumps({"selected": res.chosen, "pivots": res.pivots, "log_det": res.log_det})


def read_recommendations(path) -> dict[str, list[int]]:
    recs = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                d = json.loads(line)
                recs[str(d["user"])] = [int(i) for i in d["recommended"]]
            except (ValueError, KeyError, TypeError) as exc:
                raise ContractViolation(f"{path}:{lineno}: bad recommendation record ({exc})") from None
    return recs


# -- subcommands -------------------------------------------------------------

def cmd_select(args) -> None:
    L = read_kernel(args.kernel)
    stop = StoppingCriteria(args.max_items, args.epsilon)
    if args.window:
        res = windowed_greedy(L, args.window, stop)
    else:
        res = fast_greedy(L, stop)
    with _out(args.output) as fh:
        fh.write(selection_json(res) + "\n")


def cmd_bench(args) -> None:
    rows = bench.run_bench(args.M, args.N, args.seed, _csv_list(args.algos), w=args.window,
                           trials=args.trials, warmup=args.warmup, epsilon=args.epsilon)
    with _out(args.output) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(bench.BenchReportRow.FIELDS)
        for r in rows:
            w.writerow(r.as_row())


def cmd_rerank(args) -> None:
    S = read_kernel(args.similarity)
    tasks = read_tasks(args.tasks)
    recs = bench.rerank_tasks(tasks, S, args.theta, args.max_items, args.window, args.algo)
    with _out(args.output) as fh:
        for user, items in recs.items():
            fh.write(json.dumps({"user": user, "recommended": items}) + "\n")


def cmd_eval(args) -> None:
    S = read_kernel(args.similarity)
    tasks = read_tasks(args.tasks)
    recs = read_recommendations(args.recommendations)
    rows = bench.evaluate(recs, tasks, S, window=args.window, n=args.max_items)
    with _out(args.output) as fh:
        write_metric_csv(rows, fh)


def cmd_sweep(args) -> None:
    S = read_kernel(args.similarity)
    tasks = read_tasks(args.tasks)
    rows = bench.tradeoff_sweep(tasks, S, args.thetas, _csv_list(args.algos), n=args.max_items,
                                window=args.window, eval_window=args.eval_window)
    with _out(args.output) as fh:
        if rows:
            w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
            w.writeheader()
            w.writerows(rows)


def cmd_ingest(args) -> None:
    inter = ingest(args.ratings, args.min_user_items, args.min_item_users, args.rating_threshold)
    sim, tasks, _ = prepare_corpus(inter, args.holdout, args.seed, args.top_k, args.normalize)
    out = Path(args.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_kernel(out / "similarity.dppk", sim.S)
    write_tasks(out / "tasks.jsonl", tasks)
    sizes = [len(t.candidates) for t in tasks]
    print(json.dumps({
        "users": inter.n_users, "items": inter.n_items, "interactions": inter.n_interactions,
        "tasks": len(tasks), "median_candidates": float(np.median(sizes)) if sizes else 0.0,
    }))


def cmd_synth_kernel(args) -> None:
    L, _, _ = synthetic_kernel(SyntheticConfig(args.M, args.D, args.seed))
    write_kernel(args.output, L)


def cmd_synth_ratings(args) -> None:
    write_ratings(args.output, synthetic_ratings(args.users, args.items, args.topics, args.seed))


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fastdpp", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("select", help="greedy MAP selection on a kernel file")
    s.add_argument("--kernel", required=True, help="DPPK or CSV kernel")
    s.add_argument("--max-items", type=int, default=None, help="cardinality limit (default: unconstrained)")
    s.add_argument("--epsilon", type=float, default=DEFAULT_EPSILON)
    s.add_argument("--window", type=int, default=0, help="sliding window size (0 = off)")
    s.add_argument("--output")
    s.set_defaults(func=cmd_select)

    s = sub.add_parser("bench", help="time greedy algorithms on the synthetic kernel")
    s.add_argument("--M", type=int, required=True)
    s.add_argument("--N", type=int, required=True)
    s.add_argument("--window", type=int, default=0)
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--algos", default="fax,lazy", help="subset of fax,lazy,naive,windowed")
    s.add_argument("--trials", type=int, default=3)
    s.add_argument("--warmup", type=int, default=1)
    s.add_argument("--epsilon", type=float, default=DEFAULT_EPSILON)
    s.add_argument("--output")
    s.set_defaults(func=cmd_bench)

    s = sub.add_parser("rerank", help="re-rank per-user candidate sets")
    s.add_argument("--tasks", required=True)
    s.add_argument("--similarity", required=True)
    s.add_argument("--theta", type=float, required=True)
    s.add_argument("--max-items", type=int, default=20)
    s.add_argument("--window", type=int, default=0)
    s.add_argument("--algo", choices=sorted(bench.RERANK_ALGOS), default="dpp")
    s.add_argument("--output")
    s.set_defaults(func=cmd_rerank)

    s = sub.add_parser("eval", help="relevance/diversity metrics for recommendations")
    s.add_argument("--recommendations", required=True)
    s.add_argument("--tasks", required=True)
    s.add_argument("--similarity", required=True)
    s.add_argument("--window", type=int, default=10, help="position window for ILALD/ILMLD")
    s.add_argument("--max-items", type=int, default=None, help="nDCG cutoff (default: list length)")
    s.add_argument("--output")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("sweep", help="trade-off sweep over theta")
    s.add_argument("--tasks", required=True)
    s.add_argument("--similarity", required=True)
    s.add_argument("--thetas", type=_float_list, default=[0.0, 0.2, 0.4, 0.6, 0.8, 1.0])
    s.add_argument("--algos", default="dpp,mmr")
    s.add_argument("--max-items", type=int, default=20)
    s.add_argument("--window", type=int, default=0)
    s.add_argument("--eval-window", type=int, default=None)
    s.add_argument("--output")
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("ingest", help="ratings CSV -> similarity.dppk + tasks.jsonl")
    s.add_argument("--ratings", required=True)
    s.add_argument("--min-user-items", type=int, default=1)
    s.add_argument("--min-item-users", type=int, default=1)
    s.add_argument("--rating-threshold", type=float, default=None)
    s.add_argument("--holdout", type=int, default=1, help="held-out items per user")
    s.add_argument("--top-k", type=int, default=50)
    s.add_argument("--normalize", action="store_true", help="min-max normalise relevance scores per user")
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--output-dir", required=True)
    s.set_defaults(func=cmd_ingest)

    s = sub.add_parser("synth-kernel", help="write the synthetic benchmark kernel")
    s.add_argument("--M", type=int, required=True)
    s.add_argument("--D", type=int, default=None)
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--output", required=True)
    s.set_defaults(func=cmd_synth_kernel)

    s = sub.add_parser("synth-ratings", help="write a topic-structured synthetic ratings CSV")
    s.add_argument("--users", type=int, default=500)
    s.add_argument("--items", type=int, default=300)
    s.add_argument("--topics", type=int, default=10)
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--output", required=True)
    s.set_defaults(func=cmd_synth_ratings)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except NumericalFailure as exc:
        print(f"fastdpp {args.command}: numerical failure: {exc}", file=sys.stderr)
        return 2
    except (DPPError, OSError, ValueError) as exc:
        print(f"fastdpp {args.command}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
