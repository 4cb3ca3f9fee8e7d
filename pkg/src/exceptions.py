"""
Custom exceptions for the DPPMC library and experiment runner.
"""


class DppmcException(Exception):
    """Base exception for all DPPMC-related errors"""
    pass


class QmcDimensionError(DppmcException):
    """Raised when a low-discrepancy sequence needs more prime bases than shipped"""

    def __init__(self, dim: int, max_dim: int):
        self.dim = dim
        self.max_dim = max_dim
        super().__init__(f"Halton sequence of dimension {dim} exceeds the {max_dim} prime bases available")


class InsufficientRankError(DppmcException):
    """Raised when a k-DPP is asked for more items than the ensemble's numerical rank"""

    def __init__(self, k: int, rank: int):
        self.k = k
        self.rank = rank
        super().__init__(f"Cannot sample {k} items from an L-ensemble of numerical rank {rank}")


class CapExceededError(DppmcException):
    """Raised when an exact enumeration oracle is called beyond its ground-set cap"""

    def __init__(self, n_items: int, cap: int):
        self.n_items = n_items
        self.cap = cap
        super().__init__(f"Enumeration over {n_items} items exceeds the cap of {cap}")


class KernelDomainError(DppmcException):
    """Raised when a kernel conversion is undefined for the given spectrum"""

    def __init__(self, reason: str):
        self.reason = reason
        super().__init__(f"Kernel conversion undefined: {reason}")


class NoPositivePairError(DppmcException):
    """Raised when no pair of estimator terms satisfies the positive-correlation sign condition"""

    def __init__(self, n_terms: int):
        self.n_terms = n_terms
        super().__init__(f"None of the {n_terms} estimator terms has a positively correlated partner")


class CovarianceBlowupError(DppmcException):
    """Raised when the CMA-ES step size diverges"""

    def __init__(self, generation: int, step_size: float):
        self.generation = generation
        self.step_size = step_size
        super().__init__(f"CMA-ES step size {step_size:.3e} exceeded the limit at generation {generation}")


class NonNumericCellError(DppmcException):
    """Raised when a dataset CSV contains a value that is not a number"""

    def __init__(self, row: int, column: int, value: str):
        self.row = row
        self.column = column
        self.value = value
        super().__init__(f"Non-numeric cell {value!r} at row {row}, column {column}")


class RaggedRowsError(DppmcException):
    """Raised when dataset CSV rows have differing lengths"""

    def __init__(self, row: int, expected: int, found: int):
        self.row = row
        self.expected = expected
        self.found = found
        super().__init__(f"Row {row} has {found} columns, expected {expected}")


class ConfigValidationError(DppmcException):
    """Raised when an experiment config fails strict validation"""

    def __init__(self, path: str, errors: list[str]):
        self.path = path
        self.errors = errors
        super().__init__(f"Invalid config '{path}': " + "; ".join(errors))


class OutputPathError(DppmcException):
    """Raised when an experiment tries to write outside its output directory"""

    def __init__(self, path: str, root: str):
        self.path = path
        self.root = root
        super().__init__(f"Path '{path}' resolves outside output directory '{root}'")


class AcceptanceFailure(DppmcException):
    """Raised when a theory verification does not hold"""

    def __init__(self, failed: list[str]):
        self.failed = failed
        super().__init__("Verification failed: " + ", ".join(failed))
