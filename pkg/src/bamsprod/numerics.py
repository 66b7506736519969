"""Dense vector helpers, axis-aligned boxes, and projection operators.

All arithmetic is 64-bit floating point. Feasible sets are restricted to
axis-aligned boxes: the projection arg min over the box of a diagonally
weighted distance reduces to coordinate-wise clamping, independent of the
(positive) weighting, so no general convex solver is needed here.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, DomainError

# Absolute tolerance used throughout the test suite when comparing
# trajectories step by step.
TEST_ATOL = 1e-9

_BINARY_OPS = {
    "add": np.add,
    "sub": np.subtract,
    "mul": np.multiply,
    "div": np.divide,
    "max": np.maximum,
    "min": np.minimum,
}


def as_vec(values) -> np.ndarray:
    """Coerce to a 1-D float64 vector, rejecting NaN/Inf entries."""
    v = np.asarray(values, dtype=np.float64)
    if v.ndim == 0:
        v = v.reshape(1)
    if v.ndim != 1:
        raise DimensionError(f"expected a 1-D vector, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise DomainError("vector entries must be finite")
    return v


def _require_same_dim(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise DimensionError(f"dimension mismatch: {a.shape} vs {b.shape}")


def elementwise(op: str, a, b) -> np.ndarray:
    """Element-wise binary operation on two equal-length vectors.

    ``op`` is one of ``add, sub, mul, div, max, min``. Division requires a
    nonzero denominator in every coordinate.
    """
    a = as_vec(a)
    b = as_vec(b)
    _require_same_dim(a, b)
    try:
        func = _BINARY_OPS[op]
    except KeyError:
        raise DomainError(f"unknown elementwise op {op!r}") from None
    if op == "div" and np.any(b == 0.0):
        raise DomainError("division by zero")
    with np.errstate(over="ignore"):
        out = func(a, b)
    if not np.all(np.isfinite(out)):
        raise DomainError(f"elementwise {op!r} produced a non-finite result")
    return out


def l2_norm(a) -> float:
    """Euclidean norm of a vector."""
    return float(np.linalg.norm(as_vec(a)))


@dataclass(frozen=True)
class DiagMat:
    """Positive-definite diagonal matrix, stored as its diagonal vector."""

    diagonal: np.ndarray

    def __post_init__(self):
        d = as_vec(self.diagonal)
        if np.any(d <= 0.0):
            raise DomainError("diagonal entries must be strictly positive")
        object.__setattr__(self, "diagonal", d)

    @property
    def dim(self) -> int:
        return self.diagonal.shape[0]


@dataclass(frozen=True)
class Box:
    """Axis-aligned box [lo, hi] with finite diameter."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = as_vec(self.lo)
        hi = as_vec(self.hi)
        _require_same_dim(lo, hi)
        if np.any(lo > hi):
            raise DomainError("box requires lo[i] <= hi[i] for all i")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @classmethod
    def symmetric(cls, radius: float, dim: int) -> "Box":
        """The box [-radius, radius]^dim."""
        if radius <= 0 or dim < 1:
            raise DomainError("radius must be > 0 and dim >= 1")
        r = float(radius)
        return cls(np.full(dim, -r), np.full(dim, r))

    @property
    def dim(self) -> int:
        return self.lo.shape[0]

    @property
    def diameter(self) -> float:
        """L-infinity diameter: the largest side length."""
        return float(np.max(self.hi - self.lo))

    def contains(self, w, atol: float = 0.0) -> bool:
        w = np.asarray(w, dtype=np.float64)
        return bool(np.all(w >= self.lo - atol) and np.all(w <= self.hi + atol))


def project_box(y, box: Box) -> np.ndarray:
    """Project onto an axis-aligned box by coordinate-wise clamping.

    For any positive diagonal weighting M this equals the arg min over the
    box of the M-weighted distance to ``y``, and it is the identity on
    feasible points.
    """
    y = np.asarray(y, dtype=np.float64)
    if y.shape != box.lo.shape:
        raise DimensionError(f"dimension mismatch: {y.shape} vs {box.lo.shape}")
    return np.minimum(np.maximum(y, box.lo), box.hi)


def weighted_norm(w, m: DiagMat) -> float:
    """sqrt(sum_i m_ii * w_i^2), the diagonally weighted norm."""
    w = as_vec(w)
    _require_same_dim(w, m.diagonal)
    return float(np.sqrt(np.sum(m.diagonal * w * w)))
