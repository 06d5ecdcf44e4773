"""Dense linear algebra and seeded random streams shared by every module.

Matrices and vectors are plain float64 numpy arrays. Random streams use the
counter-based Philox generator so a seed reproduces the same numbers on every
platform; normal draws are produced with Box-Muller from its uniform stream
rather than numpy's ziggurat sampler, which keeps the algorithm fixed.
"""
import logging
import math
from typing import List, Optional, Union

import numpy as np
from scipy.linalg import cho_solve, lapack

from .errors import DomainError, FactorizationError, ShapeError

logger = logging.getLogger(__name__)

SYMMETRY_RTOL = 1e-12


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    """Converts to a 2-D float64 array, checking finiteness"""
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{name} contains non-finite entries")
    return arr


def as_vector(v, name: str = "vector") -> np.ndarray:
    """Converts to a 1-D float64 array, checking finiteness"""
    arr = np.asarray(v, dtype=np.float64)
    if arr.ndim != 1:
        raise ShapeError(f"{name} must be 1-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{name} contains non-finite entries")
    return arr


def matmul(a, b) -> np.ndarray:
    """Matrix product with float64 accumulation"""
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"Cannot multiply {a.shape} by {b.shape}")
    return a @ b


def cholesky(a) -> np.ndarray:
    """
    Lower-triangular Cholesky factor L with L @ L.T == a.

    No pivoting is done. A non-positive pivot raises FactorizationError with
    the zero-based index of the failing column.
    """
    a = as_matrix(a, "a")
    n, m = a.shape
    if n != m:
        raise ShapeError(f"Cholesky needs a square matrix, got {a.shape}")
    scale = max(np.max(np.abs(a)), 1.0)
    if np.max(np.abs(a - a.T)) > SYMMETRY_RTOL * scale:
        raise DomainError("Cholesky needs a symmetric matrix")

    factor, info = lapack.dpotrf(a, lower=1, clean=1)
    if info > 0:
        logger.debug(f"dpotrf failed at leading minor {info} of {n}")
        raise FactorizationError(pivot=info - 1)
    if info < 0:
        raise DomainError(f"dpotrf rejected argument {-info}")
    return factor


def solve_spd(factor, rhs) -> np.ndarray:
    """Solves (L L^T) x = rhs given the lower Cholesky factor L"""
    factor = as_matrix(factor, "factor")
    rhs = np.asarray(rhs, dtype=np.float64)
    if rhs.ndim not in (1, 2) or rhs.shape[0] != factor.shape[0]:
        raise ShapeError(f"Right-hand side of shape {rhs.shape} does not match factor {factor.shape}")
    return cho_solve((factor, True), rhs, check_finite=False)


def gauss_jordan_inverse(a) -> np.ndarray:
    """Dense inverse by Gauss-Jordan elimination with partial pivoting"""
    a = as_matrix(a, "a")
    n = a.shape[0]
    if a.shape[1] != n:
        raise ShapeError(f"Inverse needs a square matrix, got {a.shape}")
    aug = np.hstack([a.copy(), np.eye(n)])
    for col in range(n):
        pivot = col + int(np.argmax(np.abs(aug[col:, col])))
        if aug[pivot, col] == 0.0:
            raise DomainError("Matrix is singular")
        if pivot != col:
            aug[[col, pivot]] = aug[[pivot, col]]
        aug[col] /= aug[col, col]
        for row in range(n):
            if row != col:
                aug[row] -= aug[row, col] * aug[col]
    return aug[:, n:]


class Rng:
    """
    Seeded random stream (Philox counter-based bit generator).

    A stream is owned by one caller. Parallel work obtains independent
    substreams with split().
    """

    algorithm = "philox4x64-boxmuller"

    def __init__(self, seed: Union[int, np.random.SeedSequence]):
        if isinstance(seed, np.random.SeedSequence):
            self._seed_seq = seed
        else:
            self._seed_seq = np.random.SeedSequence(int(seed))
        self._gen = np.random.Generator(np.random.Philox(self._seed_seq))

    @property
    def seed(self) -> Optional[int]:
        entropy = self._seed_seq.entropy
        return int(entropy) if isinstance(entropy, int) else None

    def split(self, n: int) -> List["Rng"]:
        """Spawns n independent child streams"""
        return [Rng(child) for child in self._seed_seq.spawn(n)]

    def uniform(self, low: float = 0.0, high: float = 1.0, size=None) -> np.ndarray:
        return self._gen.uniform(low, high, size)

    def random(self, size=None) -> np.ndarray:
        return self._gen.random(size)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)


def sample_standard_normal(rng: Rng, n: int) -> np.ndarray:
    """n independent N(0, 1) draws via the Box-Muller transform"""
    if n < 1:
        raise DomainError(f"Sample size must be >= 1, got {n}")
    pairs = (n + 1) // 2
    u = rng.random(2 * pairs).reshape(pairs, 2)
    # 1 - u lies in (0, 1], so the log is finite
    radius = np.sqrt(-2.0 * np.log1p(-u[:, 0]))
    angle = 2.0 * math.pi * u[:, 1]
    z = np.empty(2 * pairs)
    z[0::2] = radius * np.cos(angle)
    z[1::2] = radius * np.sin(angle)
    return z[:n]
