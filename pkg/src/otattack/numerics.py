"""Dense matrix helpers, seeded RNG, and finite-difference gradient checking.

All numeric work in this package is 64-bit: the multiplicative Sinkhorn
updates underflow quickly in float32 at small regularization.
"""

import numpy as np


class DimensionMismatchError(ValueError):
    """Operand shapes are incompatible for the requested operation."""


class NonFiniteValueError(FloatingPointError):
    """A NaN or Inf appeared where the contract requires finite values."""


def as_matrix(data) -> np.ndarray:
    """Coerce to a 2-D float64 array (row-major)."""
    a = np.ascontiguousarray(data, dtype=np.float64)
    if a.ndim != 2:
        raise DimensionMismatchError(f"expected 2-D data, got ndim={a.ndim}")
    return a


def require_finite(a: np.ndarray, what: str = "array") -> np.ndarray:
    if not np.all(np.isfinite(a)):
        raise NonFiniteValueError(f"{what} contains NaN or Inf")
    return a


class SeededRng:
    """Deterministic random source backed by the PCG64 bit generator.

    PCG64 is fully specified and platform-independent, so an identical seed
    produces a bit-identical stream everywhere.
    """

    def __init__(self, seed: int):
        self.seed = int(seed)
        self._gen = np.random.Generator(np.random.PCG64(self.seed))

    def uniform(self, lo: float, hi: float, shape) -> np.ndarray:
        if lo > hi:
            raise ValueError(f"uniform bounds inverted: lo={lo} > hi={hi}")
        return self._gen.uniform(lo, hi, size=shape).astype(np.float64)

    def normal(self, mean: float, std: float, shape) -> np.ndarray:
        return self._gen.normal(mean, std, size=shape).astype(np.float64)

    def integers(self, lo: int, hi: int, shape=None) -> np.ndarray:
        return self._gen.integers(lo, hi, size=shape)

    def choice(self, n: int, size: int, replace: bool = True) -> np.ndarray:
        return self._gen.choice(n, size=size, replace=replace)


def matmul(a, b) -> np.ndarray:
    """Matrix product with an explicit shape check."""
    a = as_matrix(a)
    b = as_matrix(b)
    if a.shape[1] != b.shape[0]:
        raise DimensionMismatchError(
            f"matmul shape mismatch: {a.shape} x {b.shape}"
        )
    return a @ b


def uniform_noise(shape, lo: float, hi: float, rng: SeededRng) -> np.ndarray:
    """I.i.d. uniform matrix in [lo, hi]; deterministic for a fixed rng seed."""
    return rng.uniform(lo, hi, shape)


def finite_diff_grad(f, x, h: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of a scalar function of a matrix.

    Returns (f(x + h e_ij) - f(x - h e_ij)) / (2 h) per entry. Used as the
    independent oracle for every analytic gradient in the package.
    """
    if h <= 0:
        raise ValueError("step size h must be positive")
    x = np.asarray(x, dtype=np.float64)
    grad = np.empty_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        xp = x.copy()
        xm = x.copy()
        xp[idx] += h
        xm[idx] -= h
        fp = float(f(xp))
        fm = float(f(xm))
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise NonFiniteValueError("objective returned NaN/Inf during finite differencing")
        grad[idx] = (fp - fm) / (2.0 * h)
    return grad
