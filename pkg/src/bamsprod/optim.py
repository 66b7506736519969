"""Optimizer step rules and schedules.

The adaptive methods share one kernel. Per step, with gradient g:

    m <- b1(t) * m + (1 - b1(t)) * g
    v <- b2 * v + (1 - b2) * g^2
    vhat <- max(v, vhat)                      (max-tracking methods only)
    eta_t = eta / sqrt(t)
    veff = clamp(vhat, c_l(t), c_u(t))        (bamsprod; adam/amsgrad use v/vhat)
    w <- project(w - eta_t * m / (sqrt(veff) + eps))

bamsprod clamps the second moment into a shrinking interval [c_l(t), c_u(t)]
whose endpoints share one asymptote, so the effective per-coordinate rate
interval collapses and the method interpolates from adaptive to SGD-like
behavior. adabound/amsbound instead clamp the per-coordinate rate
eta_t / sqrt(v); that asymmetry (moment clamp vs rate clamp) is deliberate
and load-bearing for the comparisons in the harness.

All steppers are pure: they return a fresh state and weight vector and never
mutate their inputs, so independent runs can share nothing.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DomainError, NumericError
from .numerics import Box, project_box

BETA1_SCHEDULES = ("constant", "geometric", "harmonic")
ETA_SCHEDULES = ("inv_sqrt_t", "constant")


@dataclass(frozen=True)
class BoundScheduleParams:
    """Asymptote and speed of the second-moment projection interval."""

    c_inf: float
    gamma: float

    def __post_init__(self):
        if not (self.c_inf > 0 and math.isfinite(self.c_inf)):
            raise DomainError("c_inf must be a positive finite real")
        if not (self.gamma > 0 and math.isfinite(self.gamma)):
            raise DomainError("gamma must be a positive finite real")


def degenerate_bounds() -> BoundScheduleParams:
    """Parameters whose schedule evaluates to exactly (0.0, inf) in float64
    at every practical step count, turning the moment clamp into a bitwise
    no-op (gamma*t underflows against 1, the c_u product overflows)."""
    return BoundScheduleParams(c_inf=1e300, gamma=1e-300)


def bound_schedule(t: int, p: BoundScheduleParams) -> tuple[float, float]:
    """Projection interval (c_l(t), c_u(t)) at step t >= 1.

    c_l rises from 0 toward c_inf, c_u falls from +inf toward c_inf, and
    c_l(t) < c_u(t) at every finite t.
    """
    if t < 1:
        raise DomainError("bound schedule is defined for t >= 1")
    c_l = p.c_inf * (1.0 - 1.0 / (p.gamma * t + 1.0))
    c_u = p.c_inf * (1.0 + 1.0 / (p.gamma * t))
    return c_l, c_u


@dataclass
class OptimizerConfig:
    eta: float = 0.1
    beta1: float = 0.9
    beta2: float = 0.999
    beta1_schedule: str = "constant"
    epsilon: float = 1e-8
    eta_schedule: str = "inv_sqrt_t"
    bound_params: BoundScheduleParams | None = None
    bias_correction: bool = False  # honored by adam only
    bop_threshold: float = 1e-2
    bop_adaptivity: float = 0.1

    def validate(self, optimizer: str | None = None) -> None:
        if not (self.eta > 0 and math.isfinite(self.eta)):
            raise ConfigError("eta must be a positive finite real")
        if not (0.0 <= self.beta1 < 1.0):
            raise ConfigError("beta1 must lie in [0, 1)")
        if not (0.0 <= self.beta2 < 1.0):
            raise ConfigError("beta2 must lie in [0, 1)")
        if self.epsilon < 0:
            raise ConfigError("epsilon must be nonnegative")
        if self.beta1_schedule not in BETA1_SCHEDULES:
            raise ConfigError(f"unknown beta1 schedule {self.beta1_schedule!r}")
        if self.eta_schedule not in ETA_SCHEDULES:
            raise ConfigError(f"unknown eta schedule {self.eta_schedule!r}")
        if optimizer == "bamsprod" and self.beta1 / math.sqrt(self.beta2) >= 1.0:
            raise ConfigError("bamsprod requires beta1 / sqrt(beta2) < 1")
        if optimizer in ("bamsprod", "adabound", "amsbound") and self.bound_params is None:
            raise ConfigError(f"{optimizer} requires bound_params")
        if optimizer == "bop":
            if not (self.bop_threshold > 0):
                raise ConfigError("bop threshold must be positive")
            if not (0.0 < self.bop_adaptivity <= 1.0):
                raise ConfigError("bop adaptivity must lie in (0, 1]")


@dataclass(frozen=True)
class OptimizerState:
    """Moment estimates and step counter; treated as immutable."""

    m: np.ndarray
    v: np.ndarray
    v_hat: np.ndarray
    t: int = 0

    @classmethod
    def zeros(cls, dim: int) -> "OptimizerState":
        return cls(m=np.zeros(dim), v=np.zeros(dim), v_hat=np.zeros(dim), t=0)


@dataclass(frozen=True)
class StepInfo:
    """Diagnostics from one adaptive step, for logging."""

    eta_t: float
    v_eff: np.ndarray
    rate: np.ndarray  # effective per-coordinate step multiplier on m


def beta1_at(t: int, cfg: OptimizerConfig) -> float:
    """Momentum decay factor at step t under the configured schedule."""
    if t < 1:
        raise DomainError("beta1 schedule is defined for t >= 1")
    if cfg.beta1_schedule == "constant":
        return cfg.beta1
    if cfg.beta1_schedule == "geometric":
        return cfg.beta1 * (cfg.beta1 / math.sqrt(cfg.beta2)) ** (t - 1)
    return cfg.beta1 / t


def eta_at(t: int, cfg: OptimizerConfig) -> float:
    if cfg.eta_schedule == "inv_sqrt_t":
        return cfg.eta / math.sqrt(t)
    return cfg.eta


def _checked_gradient(g, w: np.ndarray) -> np.ndarray:
    g = np.asarray(g, dtype=np.float64)
    if g.shape != w.shape:
        raise NumericError(f"gradient shape {g.shape} does not match weights {w.shape}")
    if not np.all(np.isfinite(g)):
        raise NumericError("non-finite gradient; step aborted with state unchanged")
    return g


def _adaptive_step(
    state: OptimizerState,
    w: np.ndarray,
    g,
    cfg: OptimizerConfig,
    feasible: Box,
    *,
    use_max: bool,
    clamp_moment: bool = False,
    clamp_rate: bool = False,
    bias_correction: bool = False,
) -> tuple[OptimizerState, np.ndarray, StepInfo]:
    g = _checked_gradient(g, w)
    t = state.t + 1
    b1 = beta1_at(t, cfg)
    m = b1 * state.m + (1.0 - b1) * g
    v = cfg.beta2 * state.v + (1.0 - cfg.beta2) * g * g
    v_hat = np.maximum(v, state.v_hat) if use_max else state.v_hat
    eta_t = eta_at(t, cfg)

    base = v_hat if use_max else v
    if clamp_moment:
        c_l, c_u = bound_schedule(t, cfg.bound_params)
        v_eff = np.clip(base, c_l, c_u)
    else:
        v_eff = base

    m_step = m
    if bias_correction:
        m_step = m / (1.0 - cfg.beta1**t)
        v_eff = v_eff / (1.0 - cfg.beta2**t)

    denom = np.sqrt(v_eff) + cfg.epsilon
    if clamp_rate:
        r_l, r_u = bound_schedule(t, cfg.bound_params)
        rate = np.clip(eta_t / denom, r_l, r_u)
    else:
        rate = eta_t / denom
    new_w = project_box(w - rate * m_step, feasible)
    return OptimizerState(m=m, v=v, v_hat=v_hat, t=t), new_w, StepInfo(eta_t, v_eff, rate)


def adam_step(state, w, g, cfg, feasible):
    """Plain EMA update; second moment used as-is (no max, no clamp).

    The only stepper that honors ``cfg.bias_correction``, for comparison
    with common practice; all others run uncorrected.
    """
    new_state, new_w, _ = _adaptive_step(
        state, w, g, cfg, feasible, use_max=False, bias_correction=cfg.bias_correction
    )
    return new_state, new_w


def amsgrad_step(state, w, g, cfg, feasible):
    """EMA update dividing by the running maximum of the second moment."""
    new_state, new_w, _ = _adaptive_step(state, w, g, cfg, feasible, use_max=True)
    return new_state, new_w


def bamsprod_step(state, w, g, cfg, feasible):
    """Max-tracked second moment clamped into [c_l(t), c_u(t)] before use."""
    if cfg.beta1 / math.sqrt(cfg.beta2) >= 1.0:
        raise ConfigError("bamsprod requires beta1 / sqrt(beta2) < 1")
    if cfg.bound_params is None:
        raise ConfigError("bamsprod requires bound_params")
    new_state, new_w, _ = _adaptive_step(
        state, w, g, cfg, feasible, use_max=True, clamp_moment=True
    )
    return new_state, new_w


def adabound_step(state, w, g, cfg, feasible):
    """EMA update with the per-coordinate rate clamped, not the moment."""
    if cfg.bound_params is None:
        raise ConfigError("adabound requires bound_params")
    new_state, new_w, _ = _adaptive_step(
        state, w, g, cfg, feasible, use_max=False, clamp_rate=True
    )
    return new_state, new_w


def amsbound_step(state, w, g, cfg, feasible):
    """adabound with the running-maximum second moment."""
    if cfg.bound_params is None:
        raise ConfigError("amsbound requires bound_params")
    new_state, new_w, _ = _adaptive_step(
        state, w, g, cfg, feasible, use_max=True, clamp_rate=True
    )
    return new_state, new_w


def sgdm_step(state, w, g, cfg, feasible):
    """Heavy-ball update: m <- beta1 * m + g, step by eta_t * m."""
    g = _checked_gradient(g, np.asarray(w, dtype=np.float64))
    t = state.t + 1
    m = cfg.beta1 * state.m + g
    new_w = project_box(w - eta_at(t, cfg) * m, feasible)
    return OptimizerState(m=m, v=state.v, v_hat=state.v_hat, t=t), new_w


def bop_step(
    state: OptimizerState,
    w_binary: np.ndarray,
    g,
    threshold: float,
    adaptivity: float,
) -> tuple[OptimizerState, np.ndarray]:
    """Flip-based update acting directly on binary weights.

    m <- (1 - adaptivity) * m + adaptivity * g; coordinate i flips when
    |m_i| exceeds the threshold and m_i agrees in sign with w_i. Each
    coordinate flips at most once per step by construction.
    """
    if threshold <= 0:
        raise DomainError("threshold must be positive")
    if not (0.0 < adaptivity <= 1.0):
        raise DomainError("adaptivity must lie in (0, 1]")
    w_binary = np.asarray(w_binary, dtype=np.float64)
    if not np.all(np.abs(w_binary) == 1.0):
        raise DomainError("bop weights must be exactly -1 or +1")
    g = _checked_gradient(g, w_binary)
    t = state.t + 1
    m = (1.0 - adaptivity) * state.m + adaptivity * g
    flip = (np.abs(m) > threshold) & (np.sign(m) == w_binary)
    new_w = np.where(flip, -w_binary, w_binary)
    return OptimizerState(m=m, v=state.v, v_hat=state.v_hat, t=t), new_w


STEPPERS = {
    "sgdm": sgdm_step,
    "adam": adam_step,
    "amsgrad": amsgrad_step,
    "adabound": adabound_step,
    "amsbound": amsbound_step,
    "bamsprod": bamsprod_step,
}

OPTIMIZER_NAMES = tuple(STEPPERS) + ("bop",)


def step_with_info(name, state, w, g, cfg, feasible):
    """Dispatch one step by registry name, returning diagnostics as well."""
    if name == "sgdm":
        new_state, new_w = sgdm_step(state, w, g, cfg, feasible)
        eta_t = eta_at(new_state.t, cfg)
        ones = np.ones_like(new_state.m)
        return new_state, new_w, StepInfo(eta_t, ones, eta_t * ones)
    if name == "bop":
        new_state, new_w = bop_step(state, w, g, cfg.bop_threshold, cfg.bop_adaptivity)
        ones = np.ones_like(new_state.m)
        return new_state, new_w, StepInfo(1.0, ones, ones)
    flags = {
        "adam": dict(use_max=False, bias_correction=cfg.bias_correction),
        "amsgrad": dict(use_max=True),
        "bamsprod": dict(use_max=True, clamp_moment=True),
        "adabound": dict(use_max=False, clamp_rate=True),
        "amsbound": dict(use_max=True, clamp_rate=True),
    }
    if name not in flags:
        raise ConfigError(f"unknown optimizer {name!r}")
    if name == "bamsprod" and cfg.beta1 / math.sqrt(cfg.beta2) >= 1.0:
        raise ConfigError("bamsprod requires beta1 / sqrt(beta2) < 1")
    if name in ("bamsprod", "adabound", "amsbound") and cfg.bound_params is None:
        raise ConfigError(f"{name} requires bound_params")
    return _adaptive_step(state, w, g, cfg, feasible, **flags[name])


@dataclass
class RegretBoundInputs:
    """Run statistics needed to evaluate the four-term regret bound.

    ``grad_history`` is the (T, d) stream of observed gradients (for binary
    runs these carry the quantization scale, so the stream doubles as the
    per-coordinate scale history). ``weighted_norm_sqrt_sum`` is
    sum_t sqrt( || w_t - w_ref ||_{sqrt(veff_{t-1})} ) with veff_0 = 0 and
    w_ref the caller's stand-in for the unobservable optimal scale.
    """

    v_hat_final: np.ndarray
    grad_history: np.ndarray
    weighted_norm_sqrt_sum: float
    d_inf: float
    g_inf: float
    l_inf: float
    eta: float
    beta1: float
    beta2: float
    T: int
    beta1_schedule: str = "constant"


def theorem4_bound(inputs: RegretBoundInputs) -> float:
    """Evaluate the regret upper bound from logged run statistics.

    Terms: the sqrt(T)-scaled second-moment term, the momentum-schedule term,
    the gradient-history term, and the weighted quantization-distance term.
    Requires beta1 < sqrt(beta2); with beta1 = 0 the momentum term vanishes.
    """
    b1, b2 = inputs.beta1, inputs.beta2
    if b1 >= math.sqrt(b2):
        raise DomainError("bound undefined unless beta1 < sqrt(beta2)")
    if inputs.T < 1:
        raise DomainError("T must be >= 1")
    v_hat = np.asarray(inputs.v_hat_final, dtype=np.float64)
    grads = np.asarray(inputs.grad_history, dtype=np.float64)
    if not (
        np.all(np.isfinite(v_hat))
        and np.all(np.isfinite(grads))
        and math.isfinite(inputs.weighted_norm_sqrt_sum)
    ):
        raise DomainError("bound inputs must be finite")

    T = inputs.T
    sum_sqrt_vhat = float(np.sum(np.sqrt(v_hat)))
    term1 = inputs.d_inf**2 * math.sqrt(T) / (inputs.eta * (1.0 - b1)) * sum_sqrt_vhat

    cfg = OptimizerConfig(
        eta=inputs.eta, beta1=b1, beta2=b2, beta1_schedule=inputs.beta1_schedule
    )
    sched_sum = sum(beta1_at(t, cfg) / eta_at(t, cfg) for t in range(1, T + 1))
    term2 = inputs.d_inf**2 / (2.0 * (1.0 - b1)) * sum_sqrt_vhat * sched_sum

    col_norms = float(np.sum(np.sqrt(np.sum(grads * grads, axis=0))))
    term3 = (
        inputs.eta
        * math.sqrt(1.0 + math.log(T))
        / ((1.0 - b1) ** 2 * (1.0 - b1 / math.sqrt(b2)) * math.sqrt(1.0 - b2))
        * col_norms
    )

    term4 = inputs.l_inf * inputs.d_inf * inputs.weighted_norm_sqrt_sum
    total = term1 + term2 + term3 + term4
    if total < 0 or not math.isfinite(total):
        raise DomainError("bound evaluated to an invalid value")
    return total
