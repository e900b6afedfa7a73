"""Relevance/diversity re-ranking of a candidate list.

:func:`dpp_rerank` greedily maximises

    theta * r_i + (1 - theta) * (log det(S_{R+i}) - log det(S_R))

on the similarity kernel ``S``, using the incremental machinery of
:mod:`fastdpp.greedy` / :mod:`fastdpp.windowed` with the selection key
replaced.  The determinant ratio is the live pivot ``d_i**2``.  This is the
same argmax sequence as plain greedy on ``Diag(e^{alpha r}) S Diag(e^{alpha r})``.

:func:`mmr_rerank` is the maximal-marginal-relevance baseline with the same
``theta`` convention: ``theta * r_i - (1 - theta) * max_{j in R} S_ij``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .chol_inc import DEFAULT_EPSILON
from .errors import ContractViolation
from .greedy import StoppingCriteria, fast_greedy
from .kernels import TradeoffConfig, as_kernel
from .windowed import windowed_greedy

UNIT_DIAG_ATOL = 1e-10


@dataclass(frozen=True)
class RerankRequest:
    """Inputs for one re-ranking call.

    ``window=0`` disables the sliding window; otherwise diversity is measured
    against the ``window - 1`` most recent picks.
    """

    scores: np.ndarray
    sim: np.ndarray
    theta: TradeoffConfig | float
    n: int
    window: int = 0
    epsilon: float = DEFAULT_EPSILON

    def __post_init__(self):
        r = np.asarray(self.scores, dtype=float).reshape(-1)
        S = as_kernel(self.sim, "similarity")
        cfg = self.theta if isinstance(self.theta, TradeoffConfig) else TradeoffConfig(float(self.theta))
        if r.shape[0] != S.shape[0]:
            raise ContractViolation(f"{r.shape[0]} scores for a {S.shape[0]}x{S.shape[0]} similarity")
        if not np.all(np.isfinite(r)):
            raise ContractViolation("scores must be finite")
        if self.n < 1:
            raise ContractViolation(f"list length must be >= 1, got {self.n}")
        if self.window < 0:
            raise ContractViolation(f"window must be >= 0, got {self.window}")
        if S.size and np.max(np.abs(np.diag(S) - 1.0)) > UNIT_DIAG_ATOL:
            raise ContractViolation("similarity must have a unit diagonal")
        object.__setattr__(self, "scores", r)
        object.__setattr__(self, "sim", S)
        object.__setattr__(self, "theta", cfg)

    @property
    def size(self) -> int:
        return self.scores.shape[0]


@dataclass(frozen=True)
class RerankedList:
    items: list[int]
    gains: list[float]

    def __len__(self) -> int:
        return len(self.items)


def relevance_order(scores, n: int) -> list[int]:
    """Top-``n`` indices by score, ties broken by the smaller index."""
    r = np.asarray(scores, dtype=float)
    return [int(i) for i in np.argsort(-r, kind="stable")[:n]]


def _top_by_relevance(req: RerankRequest) -> RerankedList:
    items = relevance_order(req.scores, req.n)
    return RerankedList(items, [float(req.scores[i]) for i in items])


def tradeoff_score(scores, theta: float, epsilon: float = DEFAULT_EPSILON):
    """Selection key ``theta * r + (1 - theta) * log d**2``; ``d**2 <= eps`` is excluded."""
    r = np.asarray(scores, dtype=float)

    def score(d2, alive):
        ok = alive & (d2 > epsilon)
        logs = np.log(d2, out=np.full(d2.shape, -np.inf), where=ok)
        return np.where(ok, theta * r + (1.0 - theta) * logs, -np.inf)

    return score


def dpp_rerank(req: RerankRequest) -> RerankedList:
    theta = req.theta.theta
    if theta >= 1.0:
        return _top_by_relevance(req)
    stop = StoppingCriteria.cardinality(req.n, req.epsilon)
    score = tradeoff_score(req.scores, theta, req.epsilon)
    if req.window:
        res = windowed_greedy(req.sim, req.window, stop, score=score)
    else:
        res = fast_greedy(req.sim, stop, score=score)
    gains = [theta * float(req.scores[i]) + (1.0 - theta) * float(np.log(p))
             for i, p in zip(res.chosen, res.pivots)]
    return RerankedList(res.chosen, gains)


def mmr_rerank(req: RerankRequest) -> RerankedList:
    theta = req.theta.theta
    if theta >= 1.0:
        return _top_by_relevance(req)
    S, r = req.sim, req.scores
    M = req.size
    alive = np.ones(M, dtype=bool)
    running_max = np.zeros(M)
    items: list[int] = []
    gains: list[float] = []
    while len(items) < min(req.n, M):
        if req.window and items:
            recent = items[max(0, len(items) - (req.window - 1)):] if req.window > 1 else []
            penalty = S[recent].max(axis=0) if recent else np.zeros(M)
        else:
            penalty = running_max
        keys = np.where(alive, theta * r - (1.0 - theta) * penalty, -np.inf)
        j = int(np.argmax(keys))
        items.append(j)
        gains.append(float(keys[j]))
        alive[j] = False
        np.maximum(running_max, S[j], out=running_max)
    return RerankedList(items, gains)
