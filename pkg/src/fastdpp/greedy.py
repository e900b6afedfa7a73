"""Greedy MAP inference for DPPs.

:func:`fast_greedy` keeps the incremental Cholesky state of
:mod:`fastdpp.chol_inc` so that each iteration costs ``O(kM)``; it returns
``N`` items in ``O(N^2 M)``.  :func:`naive_greedy` (fresh factorisations) and
:func:`lazy_greedy` (stale-gain priority queue over Schur complements) are the
exact references it is checked against, and :func:`brute_force_map` solves
tiny instances exhaustively.
"""
from __future__ import annotations

import heapq
import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from .chol_inc import DEFAULT_EPSILON, CandidateBlock
from .errors import ContractViolation, NumericalFailure
from .kernels import as_kernel

BRUTE_FORCE_MAX_M = 20


@dataclass(frozen=True)
class StoppingCriteria:
    """When to stop adding items.

    ``max_items=None`` is the unconstrained mode: stop once the best pivot
    ``d**2`` drops below 1 (the log-probability would decrease).  Otherwise stop
    after ``max_items`` picks.  In both modes a best pivot ``<= epsilon`` stops
    the run.
    """

    max_items: int | None = None
    epsilon: float = DEFAULT_EPSILON

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ContractViolation(f"epsilon must be positive, got {self.epsilon!r}")
        if self.max_items is not None and self.max_items < 1:
            raise ContractViolation(f"max_items must be >= 1, got {self.max_items!r}")

    @classmethod
    def unconstrained(cls, epsilon: float = DEFAULT_EPSILON) -> "StoppingCriteria":
        return cls(None, epsilon)

    @classmethod
    def cardinality(cls, n: int, epsilon: float = DEFAULT_EPSILON) -> "StoppingCriteria":
        return cls(int(n), epsilon)

    @property
    def unconstrained_mode(self) -> bool:
        return self.max_items is None

    def capacity(self, M: int) -> int:
        return M if self.max_items is None else min(M, self.max_items)

    def rejects(self, d2: float) -> bool:
        """True if a best pivot ``d2`` ends the run."""
        if d2 <= self.epsilon:
            return True
        return self.max_items is None and d2 < 1.0


@dataclass(frozen=True)
class SelectionResult:
    chosen: list[int]
    pivots: list[float]
    log_det: float
    stats: dict = field(default_factory=dict, compare=False)

    @classmethod
    def from_pivots(cls, chosen, pivots, **stats) -> "SelectionResult":
        chosen = [int(i) for i in chosen]
        pivots = [float(p) for p in pivots]
        log_det = math.fsum(math.log(p) for p in pivots)
        return cls(chosen, pivots, log_det, dict(stats))

    def __len__(self) -> int:
        return len(self.chosen)


class SelectionEvent(NamedTuple):
    """Snapshot handed to ``on_event`` hooks (copies, safe to keep)."""

    kind: str  # "accept", "update" or "remove"
    iteration: int
    chosen: tuple
    window: tuple
    factor: np.ndarray
    d2: np.ndarray
    alive: np.ndarray


# ``score(d2, alive) -> keys``; the argmax of ``keys`` is picked next and
# ``-inf`` marks ineligible items.
ScoreFn = Callable[[np.ndarray, np.ndarray], np.ndarray]


def pivot_keys(d2: np.ndarray, alive: np.ndarray) -> np.ndarray:
    """Default selection keys: ``d**2`` itself (argmax-equivalent to ``log d**2``)."""
    return np.where(alive, d2, -np.inf)


def _pick(keys: np.ndarray, d2: np.ndarray, iteration: int) -> int:
    j = int(np.argmax(keys))
    if math.isnan(keys[j]) or math.isnan(d2[j]):
        raise NumericalFailure(f"NaN encountered at iteration {iteration}", iteration)
    return j


def fast_greedy(
    L,
    stop: StoppingCriteria | None = None,
    *,
    score: ScoreFn | None = None,
    on_event: Callable[[SelectionEvent], None] | None = None,
) -> SelectionResult:
    """Exact greedy MAP inference with incremental Cholesky updates.

    Each step picks ``argmax_i d_i**2`` (ties go to the smallest index),
    records ``d_j**2`` as the pivot, and updates every remaining candidate with
    ``e_i = (L_ji - <c_j, c_i>) / d_j``.

    Parameters
    ----------
    L : (M, M) array
        Symmetric PSD kernel.
    stop : StoppingCriteria
        Defaults to the unconstrained rule.
    score : callable, optional
        Replaces the selection key ``d**2`` (used by the trade-off re-ranker).
        Items whose key is ``-inf`` are never picked.
    on_event : callable, optional
        Receives a :class:`SelectionEvent` after every acceptance.
    """
    L = as_kernel(L)
    stop = stop or StoppingCriteria()
    M = L.shape[0]
    cap = stop.capacity(M)
    block = CandidateBlock(np.diag(L), max(cap - 1, 0))
    alive = np.ones(M, dtype=bool)
    V = np.zeros((cap, cap))
    keyfn = score or pivot_keys
    chosen: list[int] = []
    pivots: list[float] = []

    while len(chosen) < cap:
        it = len(chosen)
        keys = keyfn(block.d2, alive)
        j = _pick(keys, block.d2, it)
        d2j = float(block.d2[j])
        if keys[j] == -np.inf or not alive[j] or stop.rejects(d2j):
            break
        d_j = math.sqrt(d2j)
        V[it, :it] = block.column(j)
        V[it, it] = d_j
        chosen.append(j)
        pivots.append(d2j)
        alive[j] = False
        if on_event is not None:
            on_event(SelectionEvent("accept", it, tuple(chosen), tuple(chosen),
                                    V[: it + 1, : it + 1].copy(), block.d2.copy(), alive.copy()))
        if len(chosen) == cap:
            break
        block.step(L[j], j, d_j)

    return SelectionResult.from_pivots(chosen, pivots)


def naive_greedy(L, stop: StoppingCriteria | None = None, *, score: ScoreFn | None = None) -> SelectionResult:
    """Greedy MAP inference that refactorises ``L_{Y+i}`` for every candidate.

    The gain ``log det(L_{Y+i}) - log det(L_Y)`` equals twice the log of the last
    diagonal entry of ``chol(L_{Y+i})`` (the leading block is ``chol(L_Y)``), so
    the square of that entry is used as the pivot.  ``O(M^4)``-class; oracle only.
    """
    L = as_kernel(L)
    stop = stop or StoppingCriteria()
    M = L.shape[0]
    cap = stop.capacity(M)
    keyfn = score or pivot_keys
    alive = np.ones(M, dtype=bool)
    chosen: list[int] = []
    pivots: list[float] = []

    while len(chosen) < cap:
        it = len(chosen)
        d2 = np.full(M, -np.inf)
        cand = np.flatnonzero(alive)
        if cand.size == 0:
            break
        d2[cand] = _fresh_pivots(L, chosen, cand)
        keys = keyfn(np.where(alive, d2, 0.0), alive)
        j = _pick(keys, d2, it)
        d2j = float(d2[j])
        if keys[j] == -np.inf or not alive[j] or stop.rejects(d2j):
            break
        chosen.append(j)
        pivots.append(d2j)
        alive[j] = False

    return SelectionResult.from_pivots(chosen, pivots)


def _fresh_pivots(L: np.ndarray, chosen: list[int], cand: np.ndarray) -> np.ndarray:
    k = len(chosen)
    if k == 0:
        return np.maximum(np.diag(L)[cand], 0.0)
    idx = np.empty((cand.size, k + 1), dtype=int)
    idx[:, :k] = chosen
    idx[:, k] = cand
    blocks = L[idx[:, :, None], idx[:, None, :]]
    try:
        last = np.linalg.cholesky(blocks)[:, k, k]
        return last * last
    except np.linalg.LinAlgError:
        pass
    out = np.empty(cand.size)
    for n, B in enumerate(blocks):
        try:
            last = np.linalg.cholesky(B)[k, k]
            out[n] = last * last
        except np.linalg.LinAlgError:
            out[n] = 0.0
    return out


def lazy_greedy(L, stop: StoppingCriteria | None = None) -> SelectionResult:
    """Greedy MAP inference with lazy evaluation of Schur-complement gains.

    A max-queue holds possibly stale pivots ``d_i**2``.  Because pivots can only
    shrink as the selection grows, a popped entry that is current for the
    present selection beats everything left in the queue; stale entries are
    re-evaluated as ``L_ii - L_iY L_Y^{-1} L_Yi`` and pushed back.  ``L_Y^{-1}``
    is maintained by block (Schur complement) updates.

    ``result.stats['evaluations']`` counts gain evaluations.
    """
    L = as_kernel(L)
    stop = stop or StoppingCriteria()
    M = L.shape[0]
    cap = stop.capacity(M)
    inv = np.zeros((cap, cap))
    sel = np.zeros(cap, dtype=np.intp)
    chosen: list[int] = []
    pivots: list[float] = []
    evals = 0

    diag = np.diag(L)
    evals += M
    # (-gain, index, size of the selection the gain was computed for)
    heap = [(-float(diag[i]), i, 0) for i in range(M)]
    heapq.heapify(heap)

    while len(chosen) < cap and heap:
        k = len(chosen)
        neg, i, stamp = heapq.heappop(heap)
        if math.isnan(neg):
            raise NumericalFailure(f"NaN encountered at iteration {k}", k)
        if stamp < k:
            b = L[i, sel[:k]]
            g = float(L[i, i] - b @ (inv[:k, :k] @ b))
            evals += 1
            if math.isnan(g):
                raise NumericalFailure(f"NaN encountered at iteration {k}", k)
            heapq.heappush(heap, (-max(g, 0.0), i, k))
            continue
        d2 = -neg
        if stop.rejects(d2):
            break
        if k:
            b = L[i, sel[:k]]
            u = inv[:k, :k] @ b
            inv[:k, :k] += np.outer(u, u) / d2
            inv[:k, k] = inv[k, :k] = -u / d2
        inv[k, k] = 1.0 / d2
        sel[k] = i
        chosen.append(i)
        pivots.append(d2)

    return SelectionResult.from_pivots(chosen, pivots, evaluations=evals)


def brute_force_map(L, N: int) -> tuple[int, ...]:
    """Exhaustive ``argmax det(L_Y)`` over all ``|Y| = N`` subsets (``M <= 20``).

    Ties go to the lexicographically first subset.
    """
    L = as_kernel(L)
    M = L.shape[0]
    if M > BRUTE_FORCE_MAX_M:
        raise ContractViolation(f"brute force limited to M <= {BRUTE_FORCE_MAX_M}, got {M}")
    if not 0 <= N <= M:
        raise ContractViolation(f"subset size {N} out of range for M={M}")
    best, best_val = (), -math.inf
    for Y in itertools.combinations(range(M), N):
        val = float(np.linalg.det(L[np.ix_(Y, Y)])) if Y else 1.0
        if val > best_val:
            best, best_val = Y, val
    return best
