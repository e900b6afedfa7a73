"""Kernel construction, validation and storage.

Kernels are plain ``float64`` numpy arrays.  Helpers here build them from item
scores and unit feature vectors (``L_ij = r_i r_j <f_i, f_j>``), map signed
cosine similarities into ``[0, 1]``, fold a relevance/diversity trade-off into
the kernel, and generate the synthetic benchmark kernel.
"""
from __future__ import annotations

import csv
import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.linalg import lapack

from .errors import ContractViolation, KernelValidationError

SYMMETRY_ATOL = 1e-12
UNIT_NORM_ATOL = 1e-10
PSD_JITTER = 1e-10

KERNEL_MAGIC = b"DPPK"
KERNEL_VERSION = 1
_HEADER = struct.Struct("<4sIQ")


def as_kernel(L, name: str = "kernel") -> np.ndarray:
    """Coerce to a square float64 array and check symmetry.

    The symmetry tolerance is ``1e-12`` absolute, scaled up by the largest
    entry magnitude when that exceeds one.
    """
    L = np.asarray(L, dtype=float)
    if L.ndim != 2 or L.shape[0] != L.shape[1]:
        raise KernelValidationError(f"{name} must be square, got shape {L.shape}")
    if L.size and not np.all(np.isfinite(L)):
        raise KernelValidationError(f"{name} contains non-finite entries")
    scale = max(1.0, float(np.max(np.abs(L)))) if L.size else 1.0
    if L.size and np.max(np.abs(L - L.T)) > SYMMETRY_ATOL * scale:
        raise KernelValidationError(f"{name} is not symmetric")
    return L


def check_psd(L, jitter: float = PSD_JITTER) -> None:
    """Raise :class:`KernelValidationError` unless ``L`` is (numerically) PSD.

    Runs a dense Cholesky of ``L + jitter * trace(L)/M * I``; on failure the
    message names the first leading minor that is not positive.
    """
    L = as_kernel(L)
    M = L.shape[0]
    if M == 0:
        return
    tr = float(np.trace(L))
    if tr < 0:
        raise KernelValidationError("kernel has negative trace")
    shift = jitter * tr / M if tr > 0 else jitter
    _, info = lapack.dpotrf(L + shift * np.eye(M), lower=1, clean=0)
    if info > 0:
        raise KernelValidationError(
            f"kernel is not PSD: leading minor of order {info} is not positive"
        )
    if info < 0:
        raise KernelValidationError(f"dpotrf rejected argument {-info}")


def is_psd(L, jitter: float = PSD_JITTER) -> bool:
    try:
        check_psd(L, jitter)
    except KernelValidationError:
        return False
    return True


def _unit_rows(feats, what="features") -> np.ndarray:
    F = np.asarray(feats, dtype=float)
    if F.ndim != 2:
        raise ContractViolation(f"{what} must be a 2-d array (items x dims)")
    norms = np.linalg.norm(F, axis=1)
    bad = np.flatnonzero(np.abs(norms - 1.0) > UNIT_NORM_ATOL)
    if bad.size:
        raise ContractViolation(f"row {int(bad[0])} of {what} is not unit norm ({norms[bad[0]]:.3g})")
    return F


def normalize_rows(X) -> np.ndarray:
    """Scale every row to unit Euclidean norm."""
    X = np.asarray(X, dtype=float)
    norms = np.linalg.norm(X, axis=1, keepdims=True)
    if np.any(norms == 0):
        raise ContractViolation("cannot normalize an all-zero row")
    return X / norms


def _symmetric_gram(F: np.ndarray) -> np.ndarray:
    G = F @ F.T
    return 0.5 * (G + G.T)


def build_gram_kernel(scores, feats) -> np.ndarray:
    """``L_ij = r_i r_j <f_i, f_j>`` for nonnegative scores and unit features."""
    r = np.asarray(scores, dtype=float).reshape(-1)
    F = _unit_rows(feats)
    if r.shape[0] != F.shape[0]:
        raise ContractViolation(f"{r.shape[0]} scores for {F.shape[0]} feature rows")
    if np.any(r < 0):
        raise ContractViolation("scores must be nonnegative for a Gram kernel")
    return _symmetric_gram(F * r[:, None])


def remap_similarity(feats) -> np.ndarray:
    """Similarity ``S_ij = (1 + <f_i, f_j>) / 2`` of unit feature rows.

    ``S`` is the Gram matrix of the lifted vectors ``(1, f_i) / sqrt(2)``, so it
    stays PSD while its entries land in ``[0, 1]`` with a unit diagonal.
    """
    F = _unit_rows(feats)
    S = 0.5 * (1.0 + _symmetric_gram(F))
    np.clip(S, 0.0, 1.0, out=S)
    np.fill_diagonal(S, 1.0)
    return S


@dataclass(frozen=True)
class TradeoffConfig:
    """Relevance weight ``theta`` in ``[0, 1]``; ``alpha = theta / (2 (1 - theta))``."""

    theta: float

    def __post_init__(self):
        if not 0.0 <= self.theta <= 1.0:
            raise ContractViolation(f"theta must lie in [0, 1], got {self.theta!r}")

    @property
    def alpha(self) -> float:
        if self.theta >= 1.0:
            return math.inf
        return self.theta / (2.0 * (1.0 - self.theta))


def build_theta_kernel(scores, sim, cfg) -> np.ndarray:
    """``L' = Diag(exp(alpha r)) S Diag(exp(alpha r))``.

    ``theta == 1`` has no finite kernel; use pure relevance sorting instead
    (``rerank.dpp_rerank`` does this).
    """
    if not isinstance(cfg, TradeoffConfig):
        cfg = TradeoffConfig(float(cfg))
    if cfg.theta >= 1.0:
        raise ContractViolation(
            "theta=1 has no finite kernel; rank by relevance instead (dpp_rerank handles this)"
        )
    S = as_kernel(sim, "similarity")
    r = np.asarray(scores, dtype=float).reshape(-1)
    if r.shape[0] != S.shape[0]:
        raise ContractViolation(f"{r.shape[0]} scores for a {S.shape[0]}x{S.shape[0]} similarity")
    q = np.exp(cfg.alpha * r)
    return np.multiply.outer(q, q) * S


@dataclass(frozen=True)
class SyntheticConfig:
    """Synthetic benchmark kernel: ``r_i = exp(scale * x_i + shift)``, ``x_i ~ N(0, 1)``,
    features with i.i.d. standard normal entries normalised to unit length."""

    M: int
    D: int | None = None
    seed: int = 0
    score_scale: float = 0.01
    score_shift: float = 0.2

    def __post_init__(self):
        if self.M < 1:
            raise ContractViolation("M must be >= 1")
        if self.D is not None and self.D < 1:
            raise ContractViolation("D must be >= 1")

    @property
    def dim(self) -> int:
        return self.M if self.D is None else self.D


def synthetic_kernel(cfg: SyntheticConfig):
    """Return ``(L, scores, features)`` for the synthetic benchmark.

    Draws come from ``numpy.random.default_rng(seed)``: first the ``M`` score
    variates, then the ``M x D`` feature matrix.
    """
    rng = np.random.default_rng(cfg.seed)
    x = rng.standard_normal(cfg.M)
    scores = np.exp(cfg.score_scale * x + cfg.score_shift)
    feats = normalize_rows(rng.standard_normal((cfg.M, cfg.dim)))
    return build_gram_kernel(scores, feats), scores, feats


def subset_logdet(L, Y) -> float:
    """``log det(L_Y)`` by dense factorisation; ``-inf`` for singular blocks."""
    Y = list(Y)
    if not Y:
        return 0.0
    sign, val = np.linalg.slogdet(np.asarray(L)[np.ix_(Y, Y)])
    return float(val) if sign > 0 else -math.inf


# -- file formats -----------------------------------------------------------

def write_kernel(path, L, fmt: str | None = None) -> None:
    """Write ``L`` as DPPK binary (default) or CSV (``fmt='csv'`` or ``.csv`` suffix)."""
    L = np.asarray(L, dtype=float)
    if L.ndim != 2 or L.shape[0] != L.shape[1]:
        raise ContractViolation(f"kernel must be square, got {L.shape}")
    path = Path(path)
    if fmt is None:
        fmt = "csv" if path.suffix.lower() == ".csv" else "dppk"
    if fmt == "csv":
        np.savetxt(path, L, delimiter=",", fmt="%.17g")
        return
    if fmt != "dppk":
        raise ContractViolation(f"unknown kernel format {fmt!r}")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(KERNEL_MAGIC, KERNEL_VERSION, L.shape[0]))
        fh.write(np.ascontiguousarray(L, dtype="<f8").tobytes())


def read_kernel(path) -> np.ndarray:
    """Read a DPPK or CSV kernel; the format is detected from the magic bytes."""
    path = Path(path)
    with open(path, "rb") as fh:
        head = fh.read(_HEADER.size)
        if head[:4] == KERNEL_MAGIC:
            if len(head) < _HEADER.size:
                raise KernelValidationError(f"{path}: truncated DPPK header")
            _, version, M = _HEADER.unpack(head)
            if version != KERNEL_VERSION:
                raise KernelValidationError(f"{path}: unsupported DPPK version {version}")
            payload = fh.read()
            if len(payload) != 8 * M * M:
                raise KernelValidationError(
                    f"{path}: expected {8 * M * M} payload bytes, found {len(payload)}"
                )
            return np.frombuffer(payload, dtype="<f8").astype(float).reshape(M, M)
    return _read_csv_kernel(path)


def _read_csv_kernel(path: Path) -> np.ndarray:
    rows = []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not cell.strip() for cell in row):
                continue
            try:
                rows.append([float(cell) for cell in row])
            except ValueError as exc:
                raise KernelValidationError(f"{path}:{lineno}: {exc}") from None
    M = len(rows)
    if any(len(r) != M for r in rows):
        raise KernelValidationError(f"{path}: CSV kernel is not square ({M} rows)")
    return np.array(rows, dtype=float).reshape(M, M)
