"""Drivers behind the command line: timing benchmarks, batch re-ranking,
evaluation and trade-off sweeps."""
from __future__ import annotations

import math
import statistics
import time
from dataclasses import asdict, dataclass

import numpy as np

from .errors import ContractViolation, NumericalFailure
from .greedy import SelectionResult, StoppingCriteria, fast_greedy, lazy_greedy, naive_greedy
from .kernels import SyntheticConfig, subset_logdet, synthetic_kernel
from .metrics import EvalRecord, PopularityWeights, metric_report
from .rerank import RerankRequest, dpp_rerank, mmr_rerank
from .windowed import windowed_greedy

EXACT_ALGOS = ("lazy", "fax", "naive")
BENCH_ALGOS = ("fax", "lazy", "naive", "windowed")
RERANK_ALGOS = {"dpp": dpp_rerank, "mmr": mmr_rerank}


class ExactnessError(NumericalFailure):
    """Two exact greedy implementations returned different sequences."""


@dataclass(frozen=True)
class BenchReportRow:
    algorithm: str
    M: int
    N: int
    w: int
    seed: int
    wall_ms: float
    log_det: float
    ratio: float

    FIELDS = ("algorithm", "M", "N", "w", "seed", "wall_ms", "log_det", "ratio")

    def as_row(self) -> list:
        d = asdict(self)
        return [d[k] for k in self.FIELDS]


def _runner(algo: str, stop: StoppingCriteria, w: int):
    if algo == "fax":
        return lambda L: fast_greedy(L, stop)
    if algo == "lazy":
        return lambda L: lazy_greedy(L, stop)
    if algo == "naive":
        return lambda L: naive_greedy(L, stop)
    if algo == "windowed":
        if w < 1:
            raise ContractViolation("the windowed algorithm needs --window >= 1")
        return lambda L: windowed_greedy(L, w, stop)
    raise ContractViolation(f"unknown algorithm {algo!r}; choose from {', '.join(BENCH_ALGOS)}")


def time_call(fn, trials: int = 3, warmup: int = 1):
    """Median wall time in ms over ``trials`` runs after ``warmup`` runs."""
    result = None
    for _ in range(warmup):
        result = fn()
    times = []
    for _ in range(max(trials, 1)):
        t0 = time.perf_counter()
        result = fn()
        times.append((time.perf_counter() - t0) * 1e3)
    return result, statistics.median(times)


def first_divergence(a: list[int], b: list[int]) -> int | None:
    for k, (x, y) in enumerate(zip(a, b)):
        if x != y:
            return k
    return None if len(a) == len(b) else min(len(a), len(b))


def check_exact_agreement(results: dict[str, SelectionResult]) -> None:
    """Raise :class:`ExactnessError` describing the first divergent iteration."""
    names = [n for n in EXACT_ALGOS if n in results]
    for other in names[1:]:
        a, b = results[names[0]].chosen, results[other].chosen
        k = first_divergence(a, b)
        if k is not None:
            pa = a[k] if k < len(a) else "<stop>"
            pb = b[k] if k < len(b) else "<stop>"
            raise ExactnessError(
                f"{names[0]} and {other} diverge at iteration {k}: "
                f"{names[0]} picked {pa}, {other} picked {pb}", k)


def run_bench(M: int, N: int, seed: int, algos, w: int = 0, trials: int = 3,
              warmup: int = 1, epsilon: float = 1e-12) -> list[BenchReportRow]:
    """Time each algorithm on the synthetic kernel.

    Exact algorithms must agree before any row is returned.  ``ratio`` is
    ``log det L_Y / log det L_{Y_ref}`` with the lazy result as reference when
    it was run, otherwise the first algorithm.
    """
    algos = list(algos)
    for a in algos:
        _runner(a, StoppingCriteria.cardinality(N), w)
    L, _, _ = synthetic_kernel(SyntheticConfig(M, seed=seed))
    stop = StoppingCriteria.cardinality(N, epsilon)
    results, times = {}, {}
    for a in algos:
        fn = _runner(a, stop, w)
        results[a], times[a] = time_call(lambda: fn(L), trials, warmup)
    check_exact_agreement(results)

    def logdet(a):
        res = results[a]
        return res.log_det if a in EXACT_ALGOS else subset_logdet(L, res.chosen)

    ref = "lazy" if "lazy" in results else algos[0]
    ref_ld = logdet(ref)
    rows = []
    for a in algos:
        ld = logdet(a)
        ratio = ld / ref_ld if ref_ld != 0 else (1.0 if ld == 0 else math.inf)
        rows.append(BenchReportRow(a, M, N, w, seed, times[a], ld, ratio))
    return rows


# -- re-ranking tasks --------------------------------------------------------

def _task_arrays(task, S: np.ndarray):
    cand = np.asarray(task.candidates, dtype=int)
    bad = cand[(cand < 0) | (cand >= S.shape[0])]
    if bad.size:
        raise ContractViolation(
            f"user {task.user}: candidate item {int(bad[0])} has no similarity entry "
            f"(similarity has {S.shape[0]} items)")
    if len(task.scores) != cand.size:
        raise ContractViolation(f"user {task.user}: {len(task.scores)} scores for {cand.size} candidates")
    return cand, np.asarray(task.scores, dtype=float)


def rerank_task(task, S: np.ndarray, theta: float, n: int, window: int = 0,
                algo: str = "dpp") -> list[int]:
    """Re-rank one task; returns global item ids."""
    if algo not in RERANK_ALGOS:
        raise ContractViolation(f"unknown re-ranker {algo!r}; choose from {', '.join(RERANK_ALGOS)}")
    cand, scores = _task_arrays(task, S)
    req = RerankRequest(scores, S[np.ix_(cand, cand)], theta, n, window)
    out = RERANK_ALGOS[algo](req)
    return [int(cand[i]) for i in out.items]


def rerank_tasks(tasks, S, theta, n, window=0, algo="dpp") -> dict[str, list[int]]:
    """``{user: recommended items}`` in sorted-user order."""
    return {t.user: rerank_task(t, S, theta, n, window, algo)
            for t in sorted(tasks, key=lambda t: t.user)}


def popularity_from_tasks(tasks) -> PopularityWeights:
    """Training occurrence counts from the task profiles.

    Held-out items never seen in training are given a count of 1.
    """
    w = PopularityWeights.from_interactions(t.profile for t in tasks)
    counts = dict(w.counts)
    for t in tasks:
        for i in t.heldout:
            counts.setdefault(i, 1)
    return PopularityWeights(counts)


def evaluate(recs: dict, tasks, S: np.ndarray, window: int = 10, n: int | None = None):
    """Metric rows ``(metric, value, n_users, stderr)`` for recommendations vs tasks."""
    by_user = {t.user: t for t in tasks}
    missing = sorted(set(recs) ^ set(by_user))
    if missing:
        raise ContractViolation(f"recommendations and tasks cover different users (e.g. {missing[0]!r})")
    records = [EvalRecord(u, recs[u], by_user[u].heldout, S) for u in sorted(recs)]
    return metric_report(records, window=window, n=n, weights=popularity_from_tasks(tasks))


def tradeoff_sweep(tasks, S, thetas, algos=("dpp", "mmr"), n: int = 20, window: int = 0,
                   eval_window: int | None = None) -> list[dict]:
    """One row of metrics per ``(algo, theta)``."""
    eval_window = eval_window or (window if window else 10)
    rows = []
    for algo in algos:
        for theta in thetas:
            recs = rerank_tasks(tasks, S, theta, n, window, algo)
            row = {"algo": algo, "theta": float(theta)}
            for name, value, _, _ in evaluate(recs, tasks, S, eval_window, n):
                row[name] = value
            rows.append(row)
    return rows
