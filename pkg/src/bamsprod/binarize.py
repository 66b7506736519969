"""Weight binarization, scale factors, and the straight-through estimator.

Also houses :class:`QuantErrorTrace`, which tracks the per-step drift of the
scaled second moment (sqrt(v_t)/eta_t) for a binary-model run against a
matched full-precision run, the diagnostic that separates the convergence
regimes of the two.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, DomainError
from .numerics import as_vec

# Default mask threshold for the hard-tanh STE variant. BAMSProd runs leave
# the estimator un-clipped; the models module enables it on activations.
DEFAULT_STE_CLIP = 1.0


def sign_binarize(w) -> np.ndarray:
    """Deterministic sign into {-1, +1}; ties at zero resolve to +1."""
    w = as_vec(w)
    return np.where(w >= 0.0, 1.0, -1.0)


def compute_scale(w, mode: str = "mean_abs", c: float | None = None) -> float:
    """Scale factor for quantization.

    ``mean_abs`` returns the mean absolute value of ``w`` (rejecting the
    all-zero vector); ``fixed`` returns the constant ``c > 0``.
    """
    if mode == "mean_abs":
        w = as_vec(w)
        scale = float(np.mean(np.abs(w)))
        if scale == 0.0:
            raise DomainError("mean_abs scale undefined for the all-zero vector")
        return scale
    if mode == "fixed":
        if c is None or c <= 0:
            raise DomainError("fixed scale requires c > 0")
        return float(c)
    raise DomainError(f"unknown scale mode {mode!r}")


@dataclass(frozen=True)
class LatentWeights:
    """A binarized weight vector: ``latent = alpha * binary`` exactly."""

    latent: np.ndarray
    alpha: float
    binary: np.ndarray

    def __post_init__(self):
        if self.alpha <= 0 or not np.isfinite(self.alpha):
            raise DomainError("alpha must be a positive finite real")
        binary = as_vec(self.binary)
        latent = as_vec(self.latent)
        if latent.shape != binary.shape:
            raise DimensionError("latent and binary dimensions differ")
        if not np.all(np.abs(binary) == 1.0):
            raise DomainError("binary entries must be exactly -1 or +1")
        if not np.array_equal(latent, self.alpha * binary):
            raise DomainError("latent must equal alpha * binary exactly")

    @property
    def dim(self) -> int:
        return self.binary.shape[0]


def quantize(w, alpha: float) -> LatentWeights:
    """Binarize ``w`` by sign and scale by ``alpha``."""
    binary = sign_binarize(w)
    return LatentWeights(latent=alpha * binary, alpha=float(alpha), binary=binary)


def ste_backward(upstream, values, clip: float | None = None) -> np.ndarray:
    """Straight-through gradient estimate at a sign node.

    Without ``clip`` the upstream gradient passes through unchanged. With
    ``clip = c`` the pass-through is masked to zero wherever the
    full-precision input ``values`` falls outside [-c, c] (the hard-tanh
    variant); the boundary itself is included.
    """
    upstream = as_vec(upstream)
    values = as_vec(values)
    if upstream.shape != values.shape:
        raise DimensionError("upstream and values dimensions differ")
    if clip is None:
        return upstream.copy()
    if clip <= 0:
        raise DomainError("clip threshold must be positive")
    return np.where(np.abs(values) <= clip, upstream, 0.0)


def quantization_error(w, latent) -> float:
    """Euclidean distance between full-precision weights and their image."""
    w = as_vec(w)
    latent = as_vec(latent)
    if w.shape != latent.shape:
        raise DimensionError("dimension mismatch")
    return float(np.linalg.norm(w - latent))


@dataclass
class QuantErrorTrace:
    """Per-step drift of sqrt(V_t)/eta_t, binary run vs full-precision run.

    Each record appends the full-precision drift vector, the gap norm
    ``gamma = ||drift_binary - drift_full||`` and a flag marking whether the
    binary drift stayed entrywise nonnegative. The previous binary moment is
    remembered internally; the first record treats it as equal to the
    full-precision ``v_prev`` so that identical streams give gamma == 0 from
    step one.
    """

    upsilon_history: list = field(default_factory=list)
    upsilon_tilde_history: list = field(default_factory=list)
    gamma_history: list = field(default_factory=list)
    pd_flags: list = field(default_factory=list)
    _prev_binary_v: np.ndarray | None = field(default=None, repr=False)
    _prev_eta: float | None = field(default=None, repr=False)

    def __len__(self) -> int:
        return len(self.gamma_history)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["step", "gamma", "upsilon_min", "upsilon_max", "pd_flag"])
            for i, (ups, gamma, flag) in enumerate(
                zip(self.upsilon_history, self.gamma_history, self.pd_flags), start=1
            ):
                writer.writerow(
                    [i, repr(gamma), repr(float(np.min(ups))), repr(float(np.max(ups))), int(flag)]
                )


def record_upsilon(
    trace: QuantErrorTrace,
    v_t,
    v_prev,
    eta_t: float,
    eta_prev: float,
    v_t_binary,
) -> QuantErrorTrace:
    """Append one step of the quantization-error drift diagnostic.

    ``v_t`` / ``v_prev`` are the full-precision second moments at the current
    and previous step, ``v_t_binary`` the binary-model second moment at the
    current step. The drift vectors are sqrt(v_t)/eta_t - sqrt(v_prev)/eta_prev
    for each stream.
    """
    if eta_t <= 0 or eta_prev <= 0:
        raise DomainError("step sizes must be positive")
    v_t = as_vec(v_t)
    v_prev = as_vec(v_prev)
    v_t_binary = as_vec(v_t_binary)
    if not (v_t.shape == v_prev.shape == v_t_binary.shape):
        raise DimensionError("moment vectors must share one dimension")
    if np.any(v_t < 0) or np.any(v_prev < 0) or np.any(v_t_binary < 0):
        raise DomainError("second moments must be nonnegative")

    upsilon = np.sqrt(v_t) / eta_t - np.sqrt(v_prev) / eta_prev
    prev_b = trace._prev_binary_v if trace._prev_binary_v is not None else v_prev
    prev_eta = trace._prev_eta if trace._prev_eta is not None else eta_prev
    upsilon_tilde = np.sqrt(v_t_binary) / eta_t - np.sqrt(prev_b) / prev_eta
    gamma = float(np.linalg.norm(upsilon_tilde - upsilon))

    trace.upsilon_history.append(upsilon)
    trace.upsilon_tilde_history.append(upsilon_tilde)
    trace.gamma_history.append(gamma)
    trace.pd_flags.append(bool(np.all(upsilon_tilde >= 0.0)))
    trace._prev_binary_v = v_t_binary
    trace._prev_eta = eta_t
    return trace
