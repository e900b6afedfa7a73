"""Relevance and diversity metrics for recommendation lists.

Distances are ``1 - S_ij`` for a similarity ``S`` in ``[0, 1]``.  Every
per-user quantity is averaged over users in sorted-user order so results do
not depend on record order.
"""
from __future__ import annotations

import csv
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import ContractViolation


@dataclass(frozen=True)
class EvalRecord:
    """One user's recommended list and held-out items.

    ``recommended`` and ``heldout`` hold item ids that index ``sim`` (the
    similarity used for intra-list distances, optional for relevance-only
    metrics).
    """

    user: object
    recommended: Sequence[int]
    heldout: frozenset = field(default_factory=frozenset)
    sim: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        rec = [int(i) for i in self.recommended]
        if len(set(rec)) != len(rec):
            raise ContractViolation(f"user {self.user!r}: recommended list has duplicates")
        object.__setattr__(self, "recommended", rec)
        object.__setattr__(self, "heldout", frozenset(int(i) for i in self.heldout))

    @property
    def first_hit(self) -> int | None:
        """Smallest 1-based rank of a held-out item, or ``None``."""
        for pos, item in enumerate(self.recommended, start=1):
            if item in self.heldout:
                return pos
        return None


@dataclass(frozen=True)
class PopularityWeights:
    """Item weights ``w_t = C(t) ** -0.5`` from training occurrence counts."""

    counts: dict

    @classmethod
    def from_interactions(cls, item_lists: Iterable[Iterable[int]]) -> "PopularityWeights":
        c: Counter = Counter()
        for items in item_lists:
            c.update(int(i) for i in items)
        return cls(dict(c))

    def weight(self, item: int) -> float:
        n = self.counts.get(item, 0)
        if n <= 0:
            raise ContractViolation(f"no training occurrences (weight) for held-out item {item}")
        return n ** -0.5


def _ordered(records) -> list[EvalRecord]:
    records = list(records)
    if not records:
        raise ContractViolation("metric needs at least one record")
    return sorted(records, key=lambda r: str(r.user))


def _sim_of(rec: EvalRecord, sim) -> np.ndarray:
    S = rec.sim if sim is None else sim
    if S is None:
        raise ContractViolation(f"user {rec.user!r}: no similarity matrix for distance metrics")
    return np.asarray(S)


# -- per-user values ---------------------------------------------------------

def reciprocal_ranks(records) -> np.ndarray:
    return np.array([0.0 if r.first_hit is None else 1.0 / r.first_hit for r in _ordered(records)])


def _pair_distances(rec: EvalRecord, sim, w: int | None) -> np.ndarray:
    items = rec.recommended
    n = len(items)
    S = _sim_of(rec, sim)
    iu, ju = np.triu_indices(n, k=1)
    if w is not None:
        keep = (ju - iu) <= w
        iu, ju = iu[keep], ju[keep]
    idx = np.asarray(items, dtype=int)
    return 1.0 - S[idx[iu], idx[ju]]


def _list_distance(records, sim, w, reducer, name) -> np.ndarray:
    out = []
    for rec in _ordered(records):
        if len(rec.recommended) < 2:
            raise ContractViolation(f"{name} undefined for user {rec.user!r}: fewer than 2 items")
        dist = _pair_distances(rec, sim, w)
        if dist.size == 0:
            raise ContractViolation(f"{name}: no pair within distance {w} for user {rec.user!r}")
        out.append(reducer(dist))
    return np.array(out)


def dcg_values(records, n: int) -> np.ndarray:
    if n < 1:
        raise ContractViolation(f"cutoff must be >= 1, got {n}")
    vals = []
    for rec in _ordered(records):
        if not rec.heldout:
            vals.append(0.0)
            continue
        dcg = sum(1.0 / math.log2(p + 1)
                  for p, item in enumerate(rec.recommended[:n], start=1) if item in rec.heldout)
        idcg = sum(1.0 / math.log2(p + 1) for p in range(1, min(len(rec.heldout), n) + 1))
        vals.append(dcg / idcg)
    return np.array(vals)


# -- aggregates --------------------------------------------------------------

def mrr(records) -> float:
    """Mean reciprocal rank of the first held-out hit (0 for users without one)."""
    return float(np.mean(reciprocal_ranks(records)))


def ilad(records, sim=None) -> float:
    """Mean over users of the average pairwise distance in the list."""
    return float(np.mean(_list_distance(records, sim, None, np.mean, "ILAD")))


def ilmd(records, sim=None) -> float:
    """Mean over users of the minimum pairwise distance in the list."""
    return float(np.mean(_list_distance(records, sim, None, np.min, "ILMD")))


def ilald(records, w: int, sim=None) -> float:
    """ILAD restricted to pairs at most ``w`` positions apart."""
    return float(np.mean(_list_distance(records, sim, int(w), np.mean, "ILALD")))


def ilmld(records, w: int, sim=None) -> float:
    """ILMD restricted to pairs at most ``w`` positions apart."""
    return float(np.mean(_list_distance(records, sim, int(w), np.min, "ILMLD")))


def ndcg(records, n: int) -> float:
    """Binary-gain nDCG@n with ``1/log2(p+1)`` discounts; 0 for users with no held-out items."""
    return float(np.mean(dcg_values(records, n)))


def _pw_parts(records, weights: PopularityWeights):
    num, den = [], []
    for rec in _ordered(records):
        rec_set = set(rec.recommended)
        ws = {t: weights.weight(t) for t in rec.heldout}
        num.append(sum(w for t, w in ws.items() if t in rec_set))
        den.append(sum(ws.values()))
    return np.array(num), np.array(den)


def pw_recall(records, weights: PopularityWeights) -> float:
    """Popularity-weighted recall: held-out hits weighted by ``C(t) ** -0.5``."""
    num, den = _pw_parts(records, weights)
    total = den.sum()
    if total <= 0:
        raise ContractViolation("PW Recall undefined: no held-out items")
    return float(num.sum() / total)


# -- reporting ---------------------------------------------------------------

def _stderr(values: np.ndarray) -> float:
    n = values.size
    return float(np.std(values, ddof=1) / math.sqrt(n)) if n > 1 else 0.0


def _ratio_stderr(num: np.ndarray, den: np.ndarray) -> float:
    # linearised (delta-method) standard error of sum(num) / sum(den)
    n = num.size
    if n < 2 or den.sum() <= 0:
        return 0.0
    R = num.sum() / den.sum()
    resid = num - R * den
    return float(math.sqrt(n / (n - 1) * np.sum(resid**2)) / den.sum())


def metric_report(records, *, sim=None, window: int = 10, n: int | None = None,
                  weights: PopularityWeights | None = None) -> list[tuple[str, float, int, float]]:
    """All metrics as ``(metric, value, n_users, stderr)`` rows.

    ``n`` is the nDCG cutoff (default: longest list).  PW Recall is reported only
    when ``weights`` is given.
    """
    records = _ordered(records)
    if n is None:
        n = max(1, max(len(r.recommended) for r in records))
    U = len(records)
    rows = []
    per_user = {
        "MRR": reciprocal_ranks(records),
        "ILAD": _list_distance(records, sim, None, np.mean, "ILAD"),
        "ILMD": _list_distance(records, sim, None, np.min, "ILMD"),
        "nDCG": dcg_values(records, n),
        "ILALD": _list_distance(records, sim, window, np.mean, "ILALD"),
        "ILMLD": _list_distance(records, sim, window, np.min, "ILMLD"),
    }
    for name, vals in per_user.items():
        rows.append((name, float(np.mean(vals)), U, _stderr(vals)))
    if weights is not None:
        num, den = _pw_parts(records, weights)
        rows.append(("PW Recall", float(num.sum() / den.sum()), U, _ratio_stderr(num, den)))
    return rows


def write_metric_csv(rows, fh) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(["metric", "value", "n_users", "stderr"])
    for name, value, n_users, se in rows:
        writer.writerow([name, repr(float(value)), n_users, repr(float(se))])
