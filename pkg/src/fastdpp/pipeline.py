"""From a ratings file to per-user re-ranking tasks.

ratings CSV -> binarised, degree-filtered :class:`InteractionSet`
-> per-user hold-out split -> item-item cosine similarity on the training part
-> :class:`UserTask` (profile, candidate set, relevance scores, held-out items).
"""
from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass

import numpy as np
from scipy import sparse

from .errors import DataError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class InteractionSet:
    """Binary user-item interactions with dense integer ids.

    ``users[u]`` / ``items[i]`` are the raw ids; ``user_items[u]`` is the sorted
    array of item ids user ``u`` interacted with.
    """

    users: list
    items: list
    user_items: list

    @property
    def n_users(self) -> int:
        return len(self.users)

    @property
    def n_items(self) -> int:
        return len(self.items)

    @property
    def n_interactions(self) -> int:
        return int(sum(len(x) for x in self.user_items))

    def item_counts(self) -> np.ndarray:
        counts = np.zeros(self.n_items, dtype=int)
        for items in self.user_items:
            counts[items] += 1
        return counts

    def matrix(self) -> sparse.csr_matrix:
        """Users x items binary matrix."""
        indptr = np.zeros(self.n_users + 1, dtype=np.int64)
        indptr[1:] = np.cumsum([len(x) for x in self.user_items])
        indices = (np.concatenate(self.user_items) if self.user_items
                   else np.zeros(0, dtype=np.int64))
        data = np.ones(indices.shape[0])
        return sparse.csr_matrix((data, indices, indptr), shape=(self.n_users, self.n_items))


@dataclass(frozen=True)
class SimilarityModel:
    """Item-item cosine similarity (PSD, entries in ``[0, 1]``, unit diagonal)."""

    S: np.ndarray

    @property
    def n_items(self) -> int:
        return self.S.shape[0]

    def neighbors(self, top_k: int) -> np.ndarray:
        """``(n_items, k)`` table of each item's most similar other items.

        Ties go to the smaller index.
        """
        S = self.S.copy()
        np.fill_diagonal(S, -np.inf)
        k = min(int(top_k), max(self.n_items - 1, 0))
        order = np.argsort(-S, axis=1, kind="stable")
        return order[:, :k]


@dataclass(frozen=True)
class UserTask:
    user: str
    profile: list[int]
    candidates: list[int]
    scores: list[float]
    heldout: list[int]

    def to_json(self) -> str:
        return json.dumps({
            "user": self.user,
            "profile": self.profile,
            "candidates": self.candidates,
            "scores": self.scores,
            "heldout": self.heldout,
        })

    @classmethod
    def from_json(cls, line: str) -> "UserTask":
        d = json.loads(line)
        return cls(str(d["user"]), [int(i) for i in d["profile"]],
                   [int(i) for i in d["candidates"]], [float(s) for s in d["scores"]],
                   [int(i) for i in d.get("heldout", [])])


# -- ingestion ---------------------------------------------------------------

def _is_number(s: str) -> bool:
    try:
        float(s)
    except ValueError:
        return False
    return True


def _read_ratings(path):
    """Yield ``(user, item, rating)`` with line numbers checked."""
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            row = [c.strip() for c in row]
            if not row or all(not c for c in row):
                continue
            if lineno == 1 and (row[0].lower() in ("user", "user_id", "userid")
                                or (len(row) >= 3 and not _is_number(row[2]))):
                continue
            if len(row) not in (2, 3) or not row[0] or not row[1]:
                raise DataError(f"{path}:{lineno}: expected user,item[,rating], got {row!r}")
            rating = 1.0
            if len(row) == 3 and row[2]:
                try:
                    rating = float(row[2])
                except ValueError:
                    raise DataError(f"{path}:{lineno}: bad rating {row[2]!r}") from None
            yield row[0], row[1], rating


def filter_degrees(pairs, min_user_items: int, min_item_users: int):
    """Drop users/items below the degree thresholds until both hold."""
    pairs = list(pairs)
    while True:
        ucount, icount = {}, {}
        for u, i in pairs:
            ucount[u] = ucount.get(u, 0) + 1
        kept = [(u, i) for u, i in pairs if ucount[u] >= min_user_items]
        for u, i in kept:
            icount[i] = icount.get(i, 0) + 1
        kept = [(u, i) for u, i in kept if icount[i] >= min_item_users]
        if len(kept) == len(pairs):
            return kept
        pairs = kept


def interactions_from_pairs(pairs) -> InteractionSet:
    """Assign dense ids by first appearance and group by user."""
    uid, iid = {}, {}
    per_user: list[list[int]] = []
    for u, i in pairs:
        if u not in uid:
            uid[u] = len(uid)
            per_user.append([])
        if i not in iid:
            iid[i] = len(iid)
        per_user[uid[u]].append(iid[i])
    user_items = [np.unique(np.array(x, dtype=np.int64)) for x in per_user]
    return InteractionSet(list(uid), list(iid), user_items)


def ingest(path, min_user_items: int = 1, min_item_users: int = 1,
           rating_threshold: float | None = None) -> InteractionSet:
    """Read ``user,item[,rating]`` rows, keep ``rating >= rating_threshold``,
    binarise, and filter degrees to a fixed point."""
    seen = set()
    pairs = []
    for u, i, rating in _read_ratings(path):
        if rating_threshold is not None and rating < rating_threshold:
            continue
        if (u, i) in seen:
            continue
        seen.add((u, i))
        pairs.append((u, i))
    pairs = filter_degrees(pairs, min_user_items, min_item_users)
    if not pairs:
        raise DataError(f"{path}: no interactions left after binarisation and filtering")
    return interactions_from_pairs(pairs)


# -- similarity / split / tasks ----------------------------------------------

def build_similarity(inter: InteractionSet, allow_empty: bool = False) -> SimilarityModel:
    """Cosine similarity between binary item columns.

    An item without interactions raises :class:`DataError` unless
    ``allow_empty``, in which case it is similar only to itself.
    """
    X = inter.matrix()
    counts = np.asarray(X.sum(axis=0)).ravel()
    empty = np.flatnonzero(counts == 0)
    if empty.size and not allow_empty:
        raise DataError(f"item {inter.items[empty[0]]!r} has no interactions")
    if empty.size:
        log.warning("build_similarity: %d items without interactions", empty.size)
    G = (X.T @ X).toarray()
    norms = np.sqrt(np.maximum(counts, 1))
    S = G / np.multiply.outer(norms, norms)
    S = 0.5 * (S + S.T)
    np.clip(S, 0.0, 1.0, out=S)
    np.fill_diagonal(S, 1.0)
    return SimilarityModel(S)


def holdout_split(inter: InteractionSet, per_user: int, seed: int):
    """Hold out ``per_user`` random items of every user.

    Returns ``(train, test)`` where ``test`` maps dense user id to the held-out
    item array.  Users with ``<= per_user`` interactions get no test items (they
    keep all their data in ``train``); their count is logged.
    """
    rng = np.random.default_rng(seed)
    train_items, test = [], {}
    dropped = 0
    for u, items in enumerate(inter.user_items):
        if len(items) <= per_user:
            dropped += 1
            train_items.append(items)
            continue
        pick = np.sort(rng.choice(items, size=per_user, replace=False))
        test[u] = pick
        train_items.append(np.setdiff1d(items, pick))
    if dropped:
        log.warning("holdout_split: %d users with <= %d interactions kept out of the test set",
                    dropped, per_user)
    return InteractionSet(inter.users, inter.items, train_items), test


def build_user_tasks(train: InteractionSet, sim: SimilarityModel, top_k: int,
                     test: dict | None = None, normalize: bool = False) -> list[UserTask]:
    """Candidate sets and relevance scores for each user.

    ``C_u`` is the union of every profile item's ``top_k`` neighbours minus the
    profile; ``r_ui = sum_{p in P_u} S_ip``.  With ``test`` given, only users that
    have held-out items get a task.  Users with an empty candidate set are
    skipped (logged).
    """
    nbrs = sim.neighbors(top_k)
    tasks = []
    skipped = 0
    users = sorted(test) if test is not None else range(train.n_users)
    for u in users:
        profile = train.user_items[u]
        if profile.size == 0:
            skipped += 1
            continue
        cand = np.setdiff1d(np.unique(nbrs[profile].ravel()), profile)
        if cand.size == 0:
            skipped += 1
            continue
        scores = sim.S[np.ix_(cand, profile)].sum(axis=1)
        if normalize:
            lo, hi = scores.min(), scores.max()
            scores = (scores - lo) / (hi - lo) if hi > lo else np.zeros_like(scores)
        held = [] if test is None else [int(i) for i in test[u]]
        tasks.append(UserTask(str(train.users[u]), [int(i) for i in profile],
                              [int(i) for i in cand], [float(s) for s in scores], held))
    if skipped:
        log.warning("build_user_tasks: skipped %d users with empty profile or candidate set", skipped)
    return tasks


def write_tasks(path, tasks) -> None:
    with open(path, "w") as fh:
        for t in tasks:
            fh.write(t.to_json() + "\n")


def read_tasks(path) -> list[UserTask]:
    tasks = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                tasks.append(UserTask.from_json(line))
            except (ValueError, KeyError, TypeError) as exc:
                raise DataError(f"{path}:{lineno}: bad task record ({exc})") from None
    return tasks


# -- synthetic corpus --------------------------------------------------------

def synthetic_ratings(n_users: int = 500, n_items: int = 300, n_topics: int = 10,
                      seed: int = 0, mean_items: float = 25.0):
    """Topic-structured ratings ``[(user, item, rating), ...]``.

    Items belong to one topic and have Zipf-like popularity; each user has a
    Dirichlet topic preference and rates items drawn in proportion to
    ``preference[topic] * popularity``.  About 80% of ratings are 4 or 5.
    """
    rng = np.random.default_rng(seed)
    topic = rng.integers(n_topics, size=n_items)
    pop = 1.0 / np.arange(1, n_items + 1) ** 0.6
    pop = pop[rng.permutation(n_items)]
    rows = []
    for u in range(n_users):
        pref = rng.dirichlet(np.full(n_topics, 0.3))
        p = pref[topic] * pop
        p /= p.sum()
        n = int(min(n_items, 8 + rng.poisson(mean_items - 8)))
        items = rng.choice(n_items, size=n, replace=False, p=p)
        ratings = rng.choice([2, 3, 4, 5], size=n, p=[0.08, 0.12, 0.35, 0.45])
        rows.extend((f"u{u}", f"i{int(i)}", int(r)) for i, r in zip(items, ratings))
    return rows


def write_ratings(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["user", "item", "rating"])
        w.writerows(rows)


def prepare_corpus(inter: InteractionSet, per_user: int, seed: int, top_k: int,
                   normalize: bool = False):
    """Split, build similarity on the training part, build tasks.

    Returns ``(similarity, tasks, train)``.
    """
    train, test = holdout_split(inter, per_user, seed)
    sim = build_similarity(train, allow_empty=True)
    tasks = build_user_tasks(train, sim, top_k, test, normalize=normalize)
    return sim, tasks, train
