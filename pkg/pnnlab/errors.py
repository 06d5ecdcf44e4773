"""Exception types raised by pnnlab.

Every error carries the process exit code the CLI reports for it:
1 for validation problems, 2 for I/O, 3 for numerical failures.
"""


class PNNLabError(Exception):
    """Base class for all pnnlab errors"""

    exit_code = 1


class ConfigurationError(PNNLabError):
    """Invalid or unknown configuration value"""

    exit_code = 1


class ShapeError(PNNLabError, ValueError):
    """Array dimensions do not conform"""

    exit_code = 1


class DomainError(PNNLabError, ValueError):
    """Input outside the domain of a function (empty data, zero variance, ...)"""

    exit_code = 3


class FactorizationError(PNNLabError):
    """Cholesky factorization hit a non-positive pivot"""

    exit_code = 3

    def __init__(self, pivot: int, message: str = None):
        self.pivot = pivot
        super().__init__(message or f"Matrix is not positive definite: non-positive pivot at index {pivot}")


class TrainingError(PNNLabError):
    """Training diverged (non-finite loss)"""

    exit_code = 3

    def __init__(self, epoch: int, step: int, loss: float):
        self.epoch = epoch
        self.step = step
        self.loss = loss
        super().__init__(f"Training diverged at epoch {epoch}, step {step}: loss={loss}")


class DatasetError(PNNLabError):
    """Malformed dataset file"""

    exit_code = 1

    def __init__(self, message: str, line: int = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class StorageError(PNNLabError, OSError):
    """Missing or unwritable file"""

    exit_code = 2
