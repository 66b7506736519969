"""Online test problems, regret accounting, and the seeded run harness.

Problems implement a small duck-typed protocol:

    dim, feasible, name
    initial(rng) -> w0
    draw(t, rng) -> per-step auxiliary randomness (None for deterministic)
    loss(t, w, aux) -> float
    grad(t, w, aux) -> gradient of the underlying full-precision objective
    ste_grad(t, w_tilde, aux) -> gradient observed through the quantized
        point (defaults to grad evaluated at w_tilde)
    best_fixed_point(T) -> comparator for regret, when known analytically

The adversarial construction plays a two-spike periodic gradient stream on
F = [-1, 1]: after a long quiet gap (during which an EMA second moment
decays) a spike pushing away from the optimum arrives, immediately followed
by a counter-spike of equal scale pushing back. The post-gap spike meets a
deflated second moment and takes the larger step, so a plain EMA method
ratchets toward +1 while max-tracked and bounded variants stay put; the
fixed point w = -1 pays -1 every step and is the regret comparator.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import minimize_scalar

from .binarize import QuantErrorTrace, record_upsilon, ste_backward, sign_binarize
from .errors import ConfigError, DomainError, NumericError
from .numerics import Box, project_box
from .optim import (
    OPTIMIZER_NAMES,
    BoundScheduleParams,
    OptimizerConfig,
    OptimizerState,
    eta_at,
    step_with_info,
)

DEFAULT_WARMUP_STEPS = 100
DEFAULT_BOUND_GAMMA = 1e-3


def _spike_pattern(t: int, period: int) -> float:
    """-1 right after the quiet gap, +1 on the very next step, else 0."""
    r = t % period
    if r == 1:
        return -1.0
    if r == 2:
        return 1.0
    return 0.0


def condition_holds(C: int, beta2: float, alpha_schedule, horizon: int = 1000) -> bool:
    """Check beta2^(C-2) <= 2*(a(t+1) - a(t)*beta2)/(1 - beta2) over the horizon.

    ``alpha_schedule`` is a constant or a callable t -> positive scale. For a
    constant schedule the inequality is t-independent.
    """
    if C < 3:
        raise DomainError("period C must be at least 3")
    if not (0.0 <= beta2 < 1.0):
        raise DomainError("beta2 must lie in [0, 1)")
    if callable(alpha_schedule):
        alpha = alpha_schedule
    else:
        const = float(alpha_schedule)
        alpha = lambda t: const  # noqa: E731
        horizon = 1
    lhs = beta2 ** (C - 2)
    for t in range(1, horizon + 1):
        rhs = 2.0 * (alpha(t + 1) - alpha(t) * beta2) / (1.0 - beta2)
        if lhs > rhs:
            return False
    return True


@dataclass
class AdversarialSequence:
    """Parameters of the periodic adversarial loss family on [-1, 1].

    ``alpha`` is either a positive constant scale or the string ``"latent"``,
    in which case the scale at each step is the magnitude of the current
    quantized point (mean-abs quantization). The construction condition is
    checked at build time with a unit-scale proxy for ``"latent"``.
    """

    period: int = 101
    beta2: float = 0.999
    alpha: float | str = 1.0
    condition_ok: bool = field(init=False)

    def __post_init__(self):
        if self.period < 3:
            raise DomainError("period C must be at least 3")
        if not isinstance(self.alpha, str):
            if not (float(self.alpha) > 0):
                raise DomainError("alpha must be positive")
            if float(self.alpha) > 1.0:
                raise DomainError("alpha above 1 leaves the feasible interval")
        elif self.alpha != "latent":
            raise DomainError(f"unknown alpha mode {self.alpha!r}")
        proxy = 1.0 if isinstance(self.alpha, str) else float(self.alpha)
        self.condition_ok = condition_holds(self.period, self.beta2, proxy)

    def alpha_at(self, t: int, w_latent: float) -> float:
        if self.alpha == "latent":
            return abs(w_latent)
        return float(self.alpha)


def adversarial_loss(t: int, w_latent: float, seq: AdversarialSequence) -> float:
    """Piecewise loss: -1 at the left endpoint, -w then +w on the two spike
    steps of each period, 0 on quiet steps."""
    w = float(w_latent)
    if not -1.0 <= w <= 1.0:
        raise DomainError("w must lie in [-1, 1]")
    if w == -1.0:
        return -1.0
    r = t % seq.period
    if r == 1:
        return -w
    if r == 2:
        return w
    return 0.0


def adversarial_grad(t: int, w_latent: float, seq: AdversarialSequence) -> float:
    """Observed (scale-carrying) gradient: -alpha_t then +alpha_t on the two
    spike steps, 0 otherwise. Constant branches contribute subgradient 0 and
    the kink at -1 uses the interior derivative, so the value depends only on
    the step index and the scale."""
    w = float(w_latent)
    if not -1.0 <= w <= 1.0:
        raise DomainError("w must lie in [-1, 1]")
    return _spike_pattern(t, seq.period) * seq.alpha_at(t, w)


class AdversarialProblem:
    """1-D online problem wrapping :class:`AdversarialSequence`."""

    name = "adversarial"
    dim = 1

    def __init__(self, seq: AdversarialSequence | None = None, w0: float = -1.0):
        self.seq = seq if seq is not None else AdversarialSequence()
        self.feasible = Box.symmetric(1.0, 1)
        if not -1.0 <= w0 <= 1.0:
            raise DomainError("w0 must lie in [-1, 1]")
        self.w0 = float(w0)
        # with a fixed scale the gradient stream does not depend on the
        # iterate, so a matched full-precision twin sees the same stream
        self.gradient_state_free = not isinstance(self.seq.alpha, str)

    @property
    def default_scale(self):
        if isinstance(self.seq.alpha, str):
            return ("mean_abs", None)
        return ("fixed", float(self.seq.alpha))

    def initial(self, rng) -> np.ndarray:
        return np.array([self.w0])

    def draw(self, t, rng):
        return None

    def loss(self, t, w, aux=None) -> float:
        return adversarial_loss(t, float(w[0]), self.seq)

    def grad(self, t, w, aux=None) -> np.ndarray:
        # slope of the active linear branch: the full-precision objective
        return np.array([_spike_pattern(t, self.seq.period)])

    def ste_grad(self, t, w_tilde, aux=None) -> np.ndarray:
        return np.array([adversarial_grad(t, float(w_tilde[0]), self.seq)])

    def best_fixed_point(self, T: int) -> np.ndarray:
        return np.array([-1.0])


class QuadraticProblem:
    """Separable convex quadratic f(w) = sum_i c_i (w_i - o_i)^2 / 2."""

    name = "quadratic"

    def __init__(self, curvature, optimum, feasible: Box, w0=None):
        self.curvature = np.asarray(curvature, dtype=np.float64)
        self.optimum = np.asarray(optimum, dtype=np.float64)
        if self.curvature.shape != self.optimum.shape:
            raise DomainError("curvature and optimum dimensions differ")
        if np.any(self.curvature <= 0):
            raise DomainError("curvatures must be positive")
        if feasible.dim != self.curvature.shape[0]:
            raise DomainError("feasible box dimension mismatch")
        self.feasible = feasible
        self.dim = self.curvature.shape[0]
        self.w0 = None if w0 is None else np.asarray(w0, dtype=np.float64)

    def initial(self, rng) -> np.ndarray:
        if self.w0 is not None:
            return self.w0.copy()
        return rng.uniform(self.feasible.lo, self.feasible.hi)

    def draw(self, t, rng):
        return None

    def loss(self, t, w, aux=None) -> float:
        d = np.asarray(w) - self.optimum
        return float(0.5 * np.sum(self.curvature * d * d))

    def grad(self, t, w, aux=None) -> np.ndarray:
        return self.curvature * (np.asarray(w) - self.optimum)

    def ste_grad(self, t, w_tilde, aux=None) -> np.ndarray:
        return self.grad(t, w_tilde, aux)

    def best_fixed_point(self, T: int) -> np.ndarray:
        return project_box(self.optimum, self.feasible)


def quadratic_problem(dim, curvature, optimum, feasible: Box) -> QuadraticProblem:
    """Factory matching the harness naming; validates the dimension."""
    curvature = np.asarray(curvature, dtype=np.float64)
    optimum = np.asarray(optimum, dtype=np.float64)
    if curvature.shape[0] != dim or optimum.shape[0] != dim:
        raise DomainError("dim does not match curvature/optimum")
    return QuadraticProblem(curvature, optimum, feasible)


class SpikeNoisyQuadratic(QuadraticProblem):
    """Quadratic whose gradient carries rare large positive spikes balanced
    by frequent small negative ones (mean-zero noise).

    Clipping the spikes biases the mean update, which is what makes a
    gradient-clipped adaptive run measurably slower; symmetric noise would
    be invisible to a scale-normalized method.
    """

    name = "spike_quadratic"

    def __init__(self, curvature, optimum, feasible, w0=None, spike=9.0, spike_prob=0.1):
        super().__init__(curvature, optimum, feasible, w0)
        if not (spike > 0 and 0 < spike_prob < 1):
            raise DomainError("spike must be positive and spike_prob in (0, 1)")
        self.spike = float(spike)
        self.spike_prob = float(spike_prob)

    def draw(self, t, rng) -> float:
        if rng.random() < self.spike_prob:
            return self.spike
        return -self.spike * self.spike_prob / (1.0 - self.spike_prob)

    def grad(self, t, w, aux=None) -> np.ndarray:
        noise = 0.0 if aux is None else aux
        return super().grad(t, w) + noise


_SHUBERT_I = np.arange(1.0, 6.0)


def shubert_loss(x) -> float:
    """Product-of-cosine-sums landscape on two variables."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (2,):
        raise DomainError("expects a 2-vector")
    u = float(np.sum(_SHUBERT_I * np.cos((_SHUBERT_I + 1.0) * x[0] + _SHUBERT_I)))
    v = float(np.sum(_SHUBERT_I * np.cos((_SHUBERT_I + 1.0) * x[1] + _SHUBERT_I)))
    return u * v


def shubert_grad(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (2,):
        raise DomainError("expects a 2-vector")
    u = float(np.sum(_SHUBERT_I * np.cos((_SHUBERT_I + 1.0) * x[0] + _SHUBERT_I)))
    v = float(np.sum(_SHUBERT_I * np.cos((_SHUBERT_I + 1.0) * x[1] + _SHUBERT_I)))
    du = -float(np.sum(_SHUBERT_I * (_SHUBERT_I + 1.0) * np.sin((_SHUBERT_I + 1.0) * x[0] + _SHUBERT_I)))
    dv = -float(np.sum(_SHUBERT_I * (_SHUBERT_I + 1.0) * np.sin((_SHUBERT_I + 1.0) * x[1] + _SHUBERT_I)))
    return np.array([du * v, u * dv])


class ShubertProblem:
    """The 2-D multimodal toy landscape, time-invariant."""

    name = "shubert"
    dim = 2

    def __init__(self, domain: Box | None = None):
        self.feasible = domain if domain is not None else Box.symmetric(5.12, 2)
        if self.feasible.dim != 2:
            raise DomainError("domain must be two-dimensional")
        self._best: np.ndarray | None = None

    def initial(self, rng) -> np.ndarray:
        return rng.uniform(self.feasible.lo, self.feasible.hi)

    def draw(self, t, rng):
        return None

    def loss(self, t, w, aux=None) -> float:
        return shubert_loss(w)

    def grad(self, t, w, aux=None) -> np.ndarray:
        return shubert_grad(w)

    def ste_grad(self, t, w_tilde, aux=None) -> np.ndarray:
        return shubert_grad(w_tilde)

    def best_fixed_point(self, T: int) -> np.ndarray:
        if self._best is None:
            xs = np.linspace(self.feasible.lo[0], self.feasible.hi[0], 400)
            ys = np.linspace(self.feasible.lo[1], self.feasible.hi[1], 400)
            u = np.array([np.sum(_SHUBERT_I * np.cos((_SHUBERT_I + 1) * x + _SHUBERT_I)) for x in xs])
            v = np.array([np.sum(_SHUBERT_I * np.cos((_SHUBERT_I + 1) * y + _SHUBERT_I)) for y in ys])
            grid = np.outer(u, v)
            i, j = np.unravel_index(np.argmin(grid), grid.shape)
            self._best = np.array([xs[i], ys[j]])
        return self._best.copy()


def best_fixed_point(problem, T: int) -> np.ndarray:
    """Best fixed feasible point in hindsight over f_1..f_T.

    Problems with an analytic comparator provide it directly; otherwise a
    dense grid over the (1-D) feasible interval is refined by bounded scalar
    minimization of the cumulative loss.
    """
    exact = getattr(problem, "best_fixed_point", None)
    if callable(exact):
        return exact(T)
    if problem.dim != 1:
        raise DomainError("generic comparator search implemented for 1-D problems only")

    lo, hi = float(problem.feasible.lo[0]), float(problem.feasible.hi[0])

    def cum(wval: float) -> float:
        point = np.array([wval])
        return sum(problem.loss(t, point, None) for t in range(1, T + 1))

    grid = np.linspace(lo, hi, 2001)
    values = [cum(w) for w in grid]
    k = int(np.argmin(values))
    a = grid[max(0, k - 1)]
    b = grid[min(len(grid) - 1, k + 1)]
    res = minimize_scalar(cum, bounds=(a, b), method="bounded")
    best_w = res.x if res.fun <= values[k] else grid[k]
    return np.array([float(best_w)])


@dataclass
class RegretTracker:
    """Cumulative loss against the best fixed comparator."""

    best_fixed_point: np.ndarray
    cumulative_loss: float = 0.0
    best_fixed_cumloss: float = 0.0
    per_step_losses: list = field(default_factory=list)
    regret_series: list = field(default_factory=list)
    avg_regret_series: list = field(default_factory=list)

    def record(self, loss_value: float, best_loss_value: float) -> None:
        self.cumulative_loss += loss_value
        self.best_fixed_cumloss += best_loss_value
        self.per_step_losses.append(loss_value)
        regret = self.cumulative_loss - self.best_fixed_cumloss
        self.regret_series.append(regret)
        self.avg_regret_series.append(regret / len(self.per_step_losses))


RUN_CSV_HEADER = ["step", "w", "loss", "regret", "avg_regret", "gamma", "lr_min", "lr_max"]


@dataclass
class RunLog:
    """Full per-step record of one seeded online run."""

    problem: str
    optimizer: str
    seed: int
    binary: bool
    T: int
    dim: int
    cfg: OptimizerConfig
    w: np.ndarray
    w_eval: np.ndarray
    loss: np.ndarray
    regret: np.ndarray
    avg_regret: np.ndarray
    gamma: np.ndarray
    lr_min: np.ndarray
    lr_max: np.ndarray
    grads: np.ndarray
    v_eff: np.ndarray
    alpha: np.ndarray
    final_w: np.ndarray
    final_state: OptimizerState
    best_point: np.ndarray
    diverged: bool = False

    @property
    def steps_completed(self) -> int:
        return self.loss.shape[0]

    def scalar_w(self) -> np.ndarray:
        """One representative value per step: the point itself in 1-D, its
        Euclidean norm otherwise."""
        track = self.w_eval if self.binary else self.w
        if self.dim == 1:
            return track[:, 0]
        return np.sqrt(np.sum(track * track, axis=1))

    def to_csv(self, path, stride: int = 1) -> None:
        if stride < 1:
            raise DomainError("stride must be >= 1")
        wcol = self.scalar_w()
        n = self.steps_completed
        rows = list(range(0, n, stride))
        if n and rows[-1] != n - 1:
            rows.append(n - 1)
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(RUN_CSV_HEADER)
            for i in rows:
                writer.writerow(
                    [
                        i + 1,
                        repr(float(wcol[i])),
                        repr(float(self.loss[i])),
                        repr(float(self.regret[i])),
                        repr(float(self.avg_regret[i])),
                        repr(float(self.gamma[i])),
                        repr(float(self.lr_min[i])),
                        repr(float(self.lr_max[i])),
                    ]
                )


def _resolve_scale(problem, scale_mode, scale_value):
    if scale_mode is None:
        return getattr(problem, "default_scale", ("mean_abs", None))
    if scale_mode == "fixed":
        if scale_value is None or scale_value <= 0:
            raise ConfigError("fixed scale requires a positive value")
        return ("fixed", float(scale_value))
    if scale_mode == "mean_abs":
        return ("mean_abs", None)
    raise ConfigError(f"unknown scale mode {scale_mode!r}")


def _quantize_for_run(w, mode_value):
    # lean equivalent of quantize(w, alpha).latent; invariants hold by
    # construction so the dataclass validation is skipped in the hot loop
    mode, value = mode_value
    if mode == "fixed":
        alpha = value
    else:
        a = float(np.mean(np.abs(w)))
        alpha = a if a > 0.0 else 1.0  # an all-zero latent quantizes at unit scale
    return alpha, alpha * np.where(w >= 0.0, 1.0, -1.0)


def _estimate_bound_params(problem, cfg, seed, binary, grad_clip, ste_clip, mode_value):
    """Default second-moment asymptote: the largest gradient magnitude seen
    over a short max-tracked warm-up from the same initial point."""
    rng = np.random.default_rng(seed)
    w = np.asarray(problem.initial(rng), dtype=np.float64).copy()
    state = OptimizerState.zeros(problem.dim)
    g_max = 0.0
    for t in range(1, DEFAULT_WARMUP_STEPS + 1):
        aux = problem.draw(t, rng)
        if binary:
            _, w_eval = _quantize_for_run(w, mode_value)
            g = problem.ste_grad(t, w_eval, aux)
            if grad_clip is not None:
                g = np.clip(g, -grad_clip, grad_clip)
            g = ste_backward(g, w, ste_clip)
        else:
            g = problem.grad(t, w, aux)
            if grad_clip is not None:
                g = np.clip(g, -grad_clip, grad_clip)
        g_max = max(g_max, float(np.max(np.abs(g))))
        state, w, _ = step_with_info("amsgrad", state, w, g, cfg, problem.feasible)
    return BoundScheduleParams(c_inf=max(g_max, 1e-8), gamma=DEFAULT_BOUND_GAMMA)


def run_online(
    problem,
    optimizer: str,
    cfg: OptimizerConfig,
    T: int,
    seed: int,
    binary: bool = False,
    grad_clip: float | None = None,
    ste_clip: float | None = None,
    scale_mode: str | None = None,
    scale_value: float | None = None,
) -> RunLog:
    """Iterate one optimizer on one problem for T steps, fully logged.

    With ``binary=True`` losses and gradients are evaluated at the quantized
    point and gradients reach the latent weights through the straight-through
    estimator; a matched full-precision twin is stepped alongside to fill the
    second-moment drift diagnostic (skipped, with an exact zero log, when the
    gradient stream provably cannot differ between the two).
    Identical arguments produce bitwise-identical logs.
    """
    if T < 1:
        raise DomainError("T must be >= 1")
    if optimizer not in OPTIMIZER_NAMES:
        raise ConfigError(f"unknown optimizer {optimizer!r}")
    if optimizer == "bop" and not binary:
        raise ConfigError("bop is a binary-only optimizer")

    mode_value = _resolve_scale(problem, scale_mode, scale_value)
    needs_bounds = optimizer in ("bamsprod", "adabound", "amsbound")
    if needs_bounds and cfg.bound_params is None:
        cfg = replace(
            cfg,
            bound_params=_estimate_bound_params(
                problem, cfg, seed, binary and optimizer != "bop", grad_clip, ste_clip, mode_value
            ),
        )
    cfg.validate(optimizer)
    d = problem.dim
    rng = np.random.default_rng(seed)
    w = np.asarray(problem.initial(rng), dtype=np.float64).copy()
    feasible = problem.feasible
    if optimizer == "bop":
        if not (feasible.contains(np.ones(d)) and feasible.contains(-np.ones(d))):
            raise ConfigError("bop requires the feasible box to contain {-1,+1}^d")
        w = sign_binarize(w)

    best_pt = best_fixed_point(problem, T)
    tracker = RegretTracker(best_fixed_point=best_pt.copy())
    state = OptimizerState.zeros(d)

    run_shadow = binary and optimizer != "bop"
    if run_shadow and getattr(problem, "gradient_state_free", False):
        if mode_value[0] == "fixed" and ste_clip is None:
            run_shadow = False
    if run_shadow:
        shadow_w = w.copy()
        shadow_state = OptimizerState.zeros(d)
        trace = QuantErrorTrace()
        prev_shadow_v = np.zeros(d)
        prev_eta = None

    w_hist = np.empty((T, d))
    weval_hist = np.empty((T, d))
    loss_hist = np.empty(T)
    gamma_hist = np.zeros(T)
    lrmin_hist = np.empty(T)
    lrmax_hist = np.empty(T)
    grad_hist = np.empty((T, d))
    veff_hist = np.empty((T, d))
    alpha_hist = np.ones(T)

    diverged = False
    steps_done = 0
    for t in range(1, T + 1):
        aux = problem.draw(t, rng)
        if binary and optimizer != "bop":
            alpha_t, w_eval = _quantize_for_run(w, mode_value)
        else:
            alpha_t = 1.0
            w_eval = w

        loss_t = problem.loss(t, w_eval, aux)
        tracker.record(loss_t, problem.loss(t, best_pt, aux))

        if binary:
            g_obs = problem.ste_grad(t, w_eval, aux)
        else:
            g_obs = problem.grad(t, w, aux)
        if grad_clip is not None:
            g_obs = np.clip(g_obs, -grad_clip, grad_clip)
        if binary and optimizer != "bop" and ste_clip is not None:
            g = np.where(np.abs(w) <= ste_clip, g_obs, 0.0)
        else:
            g = g_obs

        w_hist[t - 1] = w
        weval_hist[t - 1] = w_eval
        loss_hist[t - 1] = loss_t
        grad_hist[t - 1] = g
        alpha_hist[t - 1] = alpha_t

        try:
            state, w, info = step_with_info(optimizer, state, w, g, cfg, feasible)
        except NumericError:
            diverged = True
            lrmin_hist[t - 1] = np.nan
            lrmax_hist[t - 1] = np.nan
            veff_hist[t - 1] = np.nan
            steps_done = t
            break

        lrmin_hist[t - 1] = float(np.min(info.rate))
        lrmax_hist[t - 1] = float(np.max(info.rate))
        veff_hist[t - 1] = info.v_eff

        if run_shadow:
            g_s = problem.grad(t, shadow_w, aux)
            if grad_clip is not None:
                g_s = np.clip(g_s, -grad_clip, grad_clip)
            shadow_state, shadow_w, _ = step_with_info(
                optimizer, shadow_state, shadow_w, g_s, cfg, feasible
            )
            eta_t = eta_at(t, cfg)
            record_upsilon(
                trace,
                shadow_state.v,
                prev_shadow_v,
                eta_t,
                prev_eta if prev_eta is not None else eta_t,
                state.v,
            )
            prev_shadow_v = shadow_state.v
            prev_eta = eta_t
            gamma_hist[t - 1] = trace.gamma_history[-1]
        steps_done = t

    n = steps_done
    return RunLog(
        problem=problem.name,
        optimizer=optimizer,
        seed=seed,
        binary=binary,
        T=T,
        dim=d,
        cfg=cfg,
        w=w_hist[:n],
        w_eval=weval_hist[:n],
        loss=loss_hist[:n],
        regret=np.asarray(tracker.regret_series[:n]),
        avg_regret=np.asarray(tracker.avg_regret_series[:n]),
        gamma=gamma_hist[:n],
        lr_min=lrmin_hist[:n],
        lr_max=lrmax_hist[:n],
        grads=grad_hist[:n],
        v_eff=veff_hist[:n],
        alpha=alpha_hist[:n],
        final_w=w.copy(),
        final_state=state,
        best_point=best_pt,
        diverged=diverged,
    )


def regret_bound_inputs(run: RunLog, box: Box, alpha_star=None):
    """Assemble the regret-bound statistics from a finished run.

    The gradient-history term uses the logged observed gradients; the
    a-priori gradient and smoothness constants are replaced by their largest
    observed values. ``alpha_star`` (the unobservable optimal reference in
    the distance term) defaults to the run's best fixed comparator; binary
    callers may pass a broadcast final scale instead. The step-1 distance
    term uses a zero initial moment, contributing nothing.
    """
    from .optim import RegretBoundInputs

    n = run.steps_completed
    ref = np.asarray(alpha_star, dtype=np.float64) if alpha_star is not None else run.best_point
    if ref.ndim == 0:
        ref = np.full(run.dim, float(ref))
    s = 0.0
    for t in range(1, n):
        diff = run.w[t] - ref
        wn = math.sqrt(float(np.sum(np.sqrt(run.v_eff[t - 1]) * diff * diff)))
        s += math.sqrt(wn)
    g_inf = float(np.max(np.abs(run.grads))) if n else 0.0
    l_inf = float(np.max(np.sqrt(np.sum(run.grads * run.grads, axis=1)))) if n else 0.0
    return RegretBoundInputs(
        v_hat_final=run.final_state.v_hat,
        grad_history=run.grads,
        weighted_norm_sqrt_sum=s,
        d_inf=box.diameter,
        g_inf=g_inf,
        l_inf=l_inf,
        eta=run.cfg.eta,
        beta1=run.cfg.beta1,
        beta2=run.cfg.beta2,
        T=n,
        beta1_schedule=run.cfg.beta1_schedule,
    )


@dataclass
class ClippingResult:
    steps_unclipped: int
    steps_clipped: int
    run_unclipped: RunLog
    run_clipped: RunLog


def steps_to_tolerance(run: RunLog, tol: float) -> int:
    """First step whose clean loss is within tolerance; T+1 if never."""
    hits = np.nonzero(run.loss <= tol)[0]
    return int(hits[0]) + 1 if hits.size else run.T + 1


def clipping_slowdown_experiment(
    g_clip: float,
    cfg: OptimizerConfig | None = None,
    T: int = 40_000,
    seed: int = 0,
    tol: float = 0.005,
    spike: float = 9.0,
    spike_prob: float = 0.1,
    w0: float = 2.0,
) -> ClippingResult:
    """Paired runs on the spike-noise quadratic, with and without clipping.

    Both runs share the seed, hence the identical noise stream; a
    non-binding threshold therefore reproduces the unclipped trajectory
    bitwise. Counts are first-step-to-tolerance of the clean quadratic loss.
    """
    if g_clip <= 0:
        raise DomainError("clip threshold must be positive")
    if cfg is None:
        cfg = OptimizerConfig(eta=0.1, beta1=0.9, beta2=0.999)
    problem = SpikeNoisyQuadratic(
        curvature=[1.0],
        optimum=[0.0],
        feasible=Box.symmetric(5.0, 1),
        w0=[w0],
        spike=spike,
        spike_prob=spike_prob,
    )
    run_plain = run_online(problem, "adam", cfg, T, seed, binary=True)
    run_clip = run_online(problem, "adam", cfg, T, seed, binary=True, grad_clip=g_clip)
    return ClippingResult(
        steps_unclipped=steps_to_tolerance(run_plain, tol),
        steps_clipped=steps_to_tolerance(run_clip, tol),
        run_unclipped=run_plain,
        run_clipped=run_clip,
    )
