import numpy as np
import pytest


def random_psd(rng, M, rank=None, scale=True):
    """Gram kernel ``diag(r) F F^T diag(r)`` with unit-norm rows of ``F``."""
    D = M if rank is None else rank
    F = rng.standard_normal((M, D))
    F /= np.linalg.norm(F, axis=1, keepdims=True)
    r = np.exp(rng.normal(0.0, 0.5, size=M)) if scale else np.ones(M)
    L = (r[:, None] * F) @ (r[:, None] * F).T
    return 0.5 * (L + L.T)


def random_full_rank(rng, M):
    A = rng.standard_normal((M, M))
    return A @ A.T / M + 0.1 * np.eye(M)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
