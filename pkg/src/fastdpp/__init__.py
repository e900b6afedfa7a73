"""Fast exact greedy MAP inference for determinantal point processes."""
from .errors import (
    ContractViolation,
    DataError,
    DegeneratePivotError,
    DPPError,
    KernelValidationError,
    NumericalFailure,
)
from .greedy import (
    SelectionResult,
    StoppingCriteria,
    brute_force_map,
    fast_greedy,
    lazy_greedy,
    naive_greedy,
)
from .kernels import (
    SyntheticConfig,
    TradeoffConfig,
    build_gram_kernel,
    build_theta_kernel,
    check_psd,
    read_kernel,
    remap_similarity,
    synthetic_kernel,
    write_kernel,
)
from .rerank import RerankedList, RerankRequest, dpp_rerank, mmr_rerank
from .windowed import windowed_greedy, windowed_reference

__version__ = "0.1.0"
