"""Incremental Cholesky primitives.

A lower-triangular factor ``V`` of the kernel block ``L_Y`` is grown one row at
a time while every remaining candidate ``i`` carries a row vector ``c_i`` and a
scalar ``d_i**2`` with

    V @ c_i = L[Y, i]        d_i**2 = L[i, i] - ||c_i||**2

so that ``det(L_{Y+i}) = det(L_Y) * d_i**2``.  Removing the oldest row of ``V``
(sliding windows) is a rank-one update carried out as a sweep of plane
rotations; the same rotations are replayed on every candidate vector.

The scalar functions (:func:`extend_factor`, :func:`candidate_step`,
:func:`drop_first`, :func:`drop_first_candidate`) are the reference
primitives.  :class:`CandidateBlock` is the vectorised form used by the greedy
drivers.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractViolation, DegeneratePivotError

#: Relative Frobenius tolerance for ``V @ V.T == L_Y`` checks.
FACTOR_RTOL = 1e-8
#: Absolute floor on pivots ``d**2``; shared with the greedy stopping rule.
DEFAULT_EPSILON = 1e-12


@dataclass(frozen=True)
class TriFactor:
    """Lower-triangular Cholesky factor with a strictly positive diagonal."""

    entries: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))

    def __post_init__(self):
        V = np.asarray(self.entries, dtype=float)
        if V.ndim != 2 or V.shape[0] != V.shape[1]:
            raise ContractViolation(f"factor must be square, got shape {V.shape}")
        object.__setattr__(self, "entries", V)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    def gram(self) -> np.ndarray:
        """Return ``V @ V.T``."""
        V = np.tril(self.entries)
        return V @ V.T


@dataclass(frozen=True)
class CandidateAux:
    """Per-candidate state: ``c`` (one entry per accepted item) and ``d2``."""

    c: np.ndarray
    d2: float
    alive: bool = True


@dataclass(frozen=True)
class RotationTrace:
    """Plane rotations produced by :func:`drop_first`, one per level.

    Level ``l`` mixes the ``l``-th trailing column with the carried vector as
    ``new = cos * col + sin * carry`` and ``carry = cos * carry - sin * col``,
    where ``cos = V_ll / t``, ``sin = v_l / t`` and ``t = hypot(V_ll, v_l)``.
    """

    cos: np.ndarray
    sin: np.ndarray

    @property
    def levels(self) -> int:
        return len(self.cos)


def extend_factor(V: TriFactor, c_j, d_j: float, eps: float = 0.0) -> TriFactor:
    """Append the row ``[c_j, d_j]`` to ``V``.

    The result factors ``[[L_Y, L_Yj], [L_jY, L_jj]]`` because
    ``V @ c_j = L_Yj`` and ``||c_j||**2 + d_j**2 = L_jj``.
    """
    c_j = np.asarray(c_j, dtype=float).reshape(-1)
    k = V.dim
    if c_j.shape[0] != k:
        raise ContractViolation(f"c_j has length {c_j.shape[0]}, factor has dim {k}")
    if not d_j > 0 or d_j * d_j <= eps:
        raise DegeneratePivotError(f"cannot extend factor with pivot d_j={d_j!r}")
    out = np.zeros((k + 1, k + 1))
    out[:k, :k] = V.entries
    out[k, :k] = c_j
    out[k, k] = d_j
    return TriFactor(out)


def candidate_step(aux: CandidateAux, L_ji: float, c_j, d_j: float) -> CandidateAux:
    """Update one candidate after item ``j`` joined the selection.

    ``e = (L_ji - <c_j, c_i>) / d_j`` is appended to ``c_i`` and ``d2`` drops by
    ``e**2`` (clamped at zero, negativity there is rounding noise).
    """
    if not aux.alive:
        raise ContractViolation("candidate_step on a dead candidate")
    c_j = np.asarray(c_j, dtype=float).reshape(-1)
    c = np.asarray(aux.c, dtype=float).reshape(-1)
    if c.shape != c_j.shape:
        raise ContractViolation(f"length mismatch: c_i {c.shape[0]} vs c_j {c_j.shape[0]}")
    if not d_j > 0:
        raise DegeneratePivotError(f"degenerate pivot d_j={d_j!r}")
    e = (L_ji - float(c_j @ c)) / d_j
    d2 = max(aux.d2 - e * e, 0.0)
    return CandidateAux(np.append(c, e), d2, True)


def _rotations(W: np.ndarray, v: np.ndarray) -> RotationTrace:
    """Fold ``v v^T`` into the lower-triangular ``W`` in place."""
    n = W.shape[0]
    cos = np.empty(n)
    sin = np.empty(n)
    for l in range(n):
        diag = W[l, l]
        if not diag > 0:
            raise DegeneratePivotError(f"non-positive diagonal {diag!r} at level {l}")
        t = np.hypot(diag, v[l])
        cs, sn = diag / t, v[l] / t
        col = W[l + 1:, l].copy()
        W[l + 1:, l] = cs * col + sn * v[l + 1:]
        v[l + 1:] = cs * v[l + 1:] - sn * col
        W[l, l] = t
        cos[l], sin[l] = cs, sn
    return RotationTrace(cos, sin)


def drop_first(V: TriFactor) -> tuple[TriFactor, RotationTrace]:
    """Remove the first row/column of the factored block.

    Returns the factor ``V'`` of the trailing block, i.e.
    ``V' V'^T = V[1:,1:] V[1:,1:]^T + v v^T`` with ``v = V[1:, 0]``, together
    with the rotation trace needed by :func:`drop_first_candidate`.
    """
    if V.dim < 1:
        raise ContractViolation("drop_first on an empty factor")
    W = np.tril(V.entries[1:, 1:]).copy()
    v = V.entries[1:, 0].copy()
    trace = _rotations(W, v)
    return TriFactor(W), trace


def drop_first_candidate(aux: CandidateAux, trace: RotationTrace) -> CandidateAux:
    """Replay a :func:`drop_first` sweep on one candidate vector.

    The leading entry ``a = c[0]`` is stripped and carried through the
    rotations; whatever remains of it afterwards is added back to ``d2``.
    """
    c = np.asarray(aux.c, dtype=float).reshape(-1)
    if c.shape[0] == 0:
        raise ContractViolation("drop_first_candidate on an empty vector")
    if c.shape[0] != trace.levels + 1:
        raise ContractViolation(
            f"vector length {c.shape[0]} does not match trace with {trace.levels} levels"
        )
    a = c[0]
    rest = c[1:].copy()
    for l in range(trace.levels):
        cs, sn = trace.cos[l], trace.sin[l]
        cl = rest[l]
        rest[l] = cs * cl + sn * a
        a = cs * a - sn * cl
    return CandidateAux(rest, aux.d2 + a * a, aux.alive)


class CandidateBlock:
    """Vectorised ``c_i`` / ``d_i**2`` storage for all ``M`` items.

    Vectors are kept transposed in a preallocated ``(capacity, M)`` array, so
    appending an entry to every ``c_i`` writes one contiguous row.  Rows of
    items that are no longer candidates keep being updated; callers mask them.
    """

    def __init__(self, diag, capacity: int):
        diag = np.asarray(diag, dtype=float)
        self.M = diag.shape[0]
        self.cT = np.zeros((max(int(capacity), 0), self.M))
        self.d2 = diag.copy()
        self.k = 0

    def column(self, j: int) -> np.ndarray:
        """Current ``c_j`` (length ``k``)."""
        return self.cT[: self.k, j]

    def step(self, L_row: np.ndarray, j: int, d_j: float) -> np.ndarray:
        """Apply :func:`candidate_step` to every item for pivot ``j``."""
        if not d_j > 0:
            raise DegeneratePivotError(f"degenerate pivot d_j={d_j!r} for item {j}")
        k = self.k
        if k >= self.cT.shape[0]:
            raise ContractViolation("candidate block is full")
        C = self.cT[:k]
        e = (L_row - C.T @ C[:, j]) / d_j
        self.cT[k] = e
        self.d2 -= e * e
        np.maximum(self.d2, 0.0, out=self.d2)
        self.k = k + 1
        return e

    def drop_first(self, trace: RotationTrace) -> np.ndarray:
        """Apply :func:`drop_first_candidate` to every item; returns the carried ``a``."""
        k = self.k
        if k == 0:
            raise ContractViolation("drop_first on an empty candidate block")
        if trace.levels != k - 1:
            raise ContractViolation(f"trace has {trace.levels} levels, expected {k - 1}")
        a = self.cT[0].copy()
        self.cT[: k - 1] = self.cT[1:k]
        self.cT[k - 1] = 0.0
        for l in range(k - 1):
            cs, sn = trace.cos[l], trace.sin[l]
            row = self.cT[l]
            cl = row.copy()
            row *= cs
            row += sn * a
            a *= cs
            a -= sn * cl
        self.d2 += a * a
        self.k = k - 1
        return a


def factor_residual(V, K) -> float:
    """Relative Frobenius error of ``V @ V.T`` against ``K``."""
    V = V.entries if isinstance(V, TriFactor) else np.asarray(V, dtype=float)
    K = np.asarray(K, dtype=float)
    if V.shape[0] == 0:
        return 0.0
    V = np.tril(V)
    denom = np.linalg.norm(K)
    err = np.linalg.norm(V @ V.T - K)
    return float(err / denom) if denom > 0 else float(err)
