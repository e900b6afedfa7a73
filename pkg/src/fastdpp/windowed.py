"""Greedy MAP inference with diversity enforced inside a sliding window.

At each step the gain is measured against the ``w - 1`` most recently picked
items only.  :func:`windowed_greedy` keeps the Cholesky factor of that window
and all candidate vectors current; when the window overflows, its oldest item
is removed with a rotation sweep (``O(w^2)`` for the factor, ``O(wM)`` for the
candidates), giving ``O(wNM)`` overall.
"""
from __future__ import annotations

import math
from collections import deque
from typing import Callable

import numpy as np
from scipy.linalg import solve_triangular

from .chol_inc import CandidateBlock, _rotations
from .errors import ContractViolation, DegeneratePivotError
from .greedy import (
    ScoreFn,
    SelectionEvent,
    SelectionResult,
    StoppingCriteria,
    _pick,
    pivot_keys,
)
from .kernels import as_kernel


def _check_window(w) -> int:
    w = int(w)
    if w < 1:
        raise ContractViolation(f"window size must be >= 1, got {w}")
    return w


def windowed_greedy(
    L,
    w: int,
    stop: StoppingCriteria | None = None,
    *,
    score: ScoreFn | None = None,
    on_event: Callable[[SelectionEvent], None] | None = None,
) -> SelectionResult:
    """Sliding-window greedy selection.

    After an item is accepted the factor and candidates are extended with it;
    once ``len(selection) >= w`` the earliest window member is dropped, which
    can only increase the remaining candidates' ``d**2``.

    ``on_event`` sees ``"accept"``, ``"update"`` (after the candidate sweep) and
    ``"remove"`` (after a window removal) snapshots; ``factor`` is the current
    window factor.  ``pivots`` in the result are the windowed gains
    ``det(L_{W+j}) / det(L_W)`` at acceptance time.
    """
    L = as_kernel(L)
    w = _check_window(w)
    stop = stop or StoppingCriteria()
    M = L.shape[0]
    cap = stop.capacity(M)
    block = CandidateBlock(np.diag(L), w)
    alive = np.ones(M, dtype=bool)
    V = np.zeros((w, w))
    window: deque[int] = deque()
    keyfn = score or pivot_keys
    chosen: list[int] = []
    pivots: list[float] = []

    def emit(kind, it):
        k = len(window)
        on_event(SelectionEvent(kind, it, tuple(chosen), tuple(window),
                                V[:k, :k].copy(), block.d2.copy(), alive.copy()))

    while len(chosen) < cap:
        it = len(chosen)
        keys = keyfn(block.d2, alive)
        j = _pick(keys, block.d2, it)
        d2j = float(block.d2[j])
        if keys[j] == -np.inf or not alive[j] or stop.rejects(d2j):
            break
        d_j = math.sqrt(d2j)
        k = block.k
        V[k, :k] = block.column(j)
        V[k, k] = d_j
        window.append(j)
        chosen.append(j)
        pivots.append(d2j)
        alive[j] = False
        if on_event is not None:
            emit("accept", it)
        if len(chosen) == cap:
            break

        block.step(L[j], j, d_j)
        if on_event is not None:
            emit("update", it)

        if len(chosen) >= w:
            k = block.k
            W = V[1:k, 1:k].copy()
            v = V[1:k, 0].copy()
            try:
                trace = _rotations(W, v)
            except DegeneratePivotError as exc:
                raise DegeneratePivotError(f"window removal failed at iteration {it}: {exc}",
                                           it) from None
            V[:] = 0.0
            V[: k - 1, : k - 1] = W
            block.drop_first(trace)
            window.popleft()
            if on_event is not None:
                emit("remove", it)

    return SelectionResult.from_pivots(chosen, pivots)


def windowed_reference(
    L,
    w: int,
    stop: StoppingCriteria | None = None,
    *,
    score: ScoreFn | None = None,
) -> SelectionResult:
    """Oracle for :func:`windowed_greedy`: refactor the window every step.

    ``d_i**2 = L_ii - ||V^{-1} L_{W,i}||**2`` with ``V = chol(L_W)`` computed
    from scratch for the current window ``W`` (last ``w - 1`` picks).
    """
    L = as_kernel(L)
    w = _check_window(w)
    stop = stop or StoppingCriteria()
    M = L.shape[0]
    cap = stop.capacity(M)
    keyfn = score or pivot_keys
    alive = np.ones(M, dtype=bool)
    diag = np.diag(L)
    chosen: list[int] = []
    pivots: list[float] = []

    while len(chosen) < cap:
        it = len(chosen)
        win = chosen[max(0, len(chosen) - (w - 1)):] if w > 1 else []
        if win:
            Vw = np.linalg.cholesky(L[np.ix_(win, win)])
            C = solve_triangular(Vw, L[win, :], lower=True)
            d2 = np.maximum(diag - np.einsum("ij,ij->j", C, C), 0.0)
        else:
            d2 = np.maximum(diag, 0.0)
        keys = keyfn(d2, alive)
        j = _pick(keys, d2, it)
        d2j = float(d2[j])
        if keys[j] == -np.inf or not alive[j] or stop.rejects(d2j):
            break
        chosen.append(j)
        pivots.append(d2j)
        alive[j] = False

    return SelectionResult.from_pivots(chosen, pivots)
