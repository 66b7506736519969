import math

import numpy as np
import pytest

from bamsprod.errors import ConfigError, DomainError, NumericError
from bamsprod.numerics import TEST_ATOL, Box
from bamsprod.optim import (
    BoundScheduleParams,
    OptimizerConfig,
    OptimizerState,
    RegretBoundInputs,
    adabound_step,
    adam_step,
    amsgrad_step,
    bamsprod_step,
    beta1_at,
    bop_step,
    bound_schedule,
    degenerate_bounds,
    sgdm_step,
    step_with_info,
    theorem4_bound,
)

BOX1 = Box.symmetric(1.0, 1)


def cfg_for(optimizer=None, **kw):
    defaults = dict(eta=0.1, beta1=0.9, beta2=0.999, epsilon=1e-8)
    defaults.update(kw)
    cfg = OptimizerConfig(**defaults)
    cfg.validate(optimizer)
    return cfg


# --- bound schedule ---------------------------------------------------------


def test_bound_schedule_t1():
    cl, cu = bound_schedule(1, BoundScheduleParams(c_inf=1.0, gamma=1.0))
    assert cl == pytest.approx(0.5, abs=TEST_ATOL)
    assert cu == pytest.approx(2.0, abs=TEST_ATOL)


def test_bound_schedule_limits():
    p = BoundScheduleParams(c_inf=3.0, gamma=1e-2)
    cl, cu = bound_schedule(10**12, p)
    assert cl == pytest.approx(3.0, rel=1e-9)
    assert cu == pytest.approx(3.0, rel=1e-9)


def test_bound_schedule_monotone():
    p = BoundScheduleParams(c_inf=2.0, gamma=0.05)
    ts = [1, 2, 3, 5, 10, 100, 1000, 10**6]
    pairs = [bound_schedule(t, p) for t in ts]
    for (cl0, cu0), (cl1, cu1) in zip(pairs, pairs[1:]):
        assert cl0 <= cl1
        assert cu0 >= cu1
    assert all(cl < cu for cl, cu in pairs)


def test_bound_schedule_rejects_t0():
    with pytest.raises(DomainError):
        bound_schedule(0, BoundScheduleParams(1.0, 1.0))


def test_degenerate_bounds_evaluate_to_zero_inf():
    p = degenerate_bounds()
    for t in (1, 7, 10**4, 10**9):
        cl, cu = bound_schedule(t, p)
        assert cl == 0.0
        assert cu == math.inf


# --- beta1 schedules --------------------------------------------------------


def test_beta1_geometric_first_term():
    cfg = cfg_for(beta1=0.9, beta1_schedule="geometric")
    assert beta1_at(1, cfg) == pytest.approx(0.9)


def test_beta1_harmonic():
    cfg = cfg_for(beta1=0.9, beta1_schedule="harmonic")
    assert beta1_at(9, cfg) == pytest.approx(0.1, abs=TEST_ATOL)


def test_beta1_geometric_second_term():
    cfg = cfg_for(beta1=0.9, beta2=0.999, beta1_schedule="geometric")
    expected = 0.9 * (0.9 / math.sqrt(0.999))
    assert beta1_at(2, cfg) == pytest.approx(expected, abs=TEST_ATOL)
    assert beta1_at(2, cfg) == pytest.approx(0.8104, abs=5e-4)


def test_beta1_stays_in_range():
    for sched in ("constant", "geometric", "harmonic"):
        cfg = cfg_for(beta1=0.9, beta2=0.999, beta1_schedule=sched)
        for t in (1, 2, 5, 50, 1000):
            b = beta1_at(t, cfg)
            assert 0.0 <= b <= 0.9 + TEST_ATOL


# --- single-step traces -----------------------------------------------------


def test_adam_zero_gradient_fixed_point():
    cfg = cfg_for()
    state = OptimizerState.zeros(1)
    w = np.array([0.4])
    for _ in range(5):
        state, w = adam_step(state, w, np.array([0.0]), cfg, BOX1)
    assert w[0] == 0.4
    assert np.all(state.v_hat == 0.0)


def test_adam_scalar_trace():
    cfg = cfg_for(eta=0.1, beta1=0.9, beta2=0.999, epsilon=0.0)
    state = OptimizerState.zeros(1)
    state, w = adam_step(state, np.array([0.5]), np.array([1.0]), cfg, BOX1)
    assert state.m[0] == pytest.approx(0.1, abs=TEST_ATOL)
    assert state.v[0] == pytest.approx(0.001, abs=TEST_ATOL)
    assert w[0] == pytest.approx(0.18377223398316206, abs=TEST_ATOL)


def test_adam_ema_fixed_point_rate():
    # with constant gradients v approaches g^2, so the raw step approaches
    # eta_t * |m| / |g|
    cfg = cfg_for(beta1=0.0, beta2=0.9, epsilon=0.0, eta=0.01)
    state = OptimizerState.zeros(1)
    w = np.array([0.9])
    g = np.array([0.5])
    box = Box.symmetric(10.0, 1)
    for _ in range(400):
        state, w = adam_step(state, w, g, cfg, box)
    assert state.v[0] == pytest.approx(0.25, rel=1e-6)


def test_amsgrad_running_max():
    cfg = cfg_for(beta1=0.0, beta2=0.0, epsilon=0.0, eta=0.01)
    state = OptimizerState.zeros(1)
    w = np.array([0.0])
    box = Box.symmetric(5.0, 1)
    vhat_seq = []
    for g2 in (0.5, 0.3, 0.7):
        state, w = amsgrad_step(state, w, np.array([math.sqrt(g2)]), cfg, box)
        vhat_seq.append(state.v_hat[0])
    assert vhat_seq == pytest.approx([0.5, 0.5, 0.7], abs=TEST_ATOL)


def test_amsgrad_scalar_trace_matches_adam_at_t1():
    # at t=1 the running max equals v, so the two updates coincide
    cfg = cfg_for(eta=0.1, beta1=0.9, beta2=0.999, epsilon=0.0)
    s_adam, w_adam = adam_step(OptimizerState.zeros(1), np.array([0.5]), np.array([1.0]), cfg, BOX1)
    s_ams, w_ams = amsgrad_step(OptimizerState.zeros(1), np.array([0.5]), np.array([1.0]), cfg, BOX1)
    assert w_adam[0] == w_ams[0]


def test_amsgrad_zero_gradient_fixed_point():
    cfg = cfg_for()
    state = OptimizerState.zeros(2)
    w = np.array([0.1, -0.2])
    for _ in range(3):
        state, w = amsgrad_step(state, w, np.zeros(2), cfg, Box.symmetric(1.0, 2))
    assert np.array_equal(w, [0.1, -0.2])


GOLDEN_BAMS = [
    # (g, m, v, vhat, vtilde, w) frozen from an independent straight-line trace
    (1.0, 1.0, 0.0010000000000000009, 0.0010000000000000009, 0.5, 0.3585786437626905),
    (-0.5, -0.5, 0.0012490000000000012, 0.0012490000000000012, 2.0 / 3.0, 0.4018799139519124),
    (2.0, 2.0, 0.0052477510000000045, 0.0052477510000000045, 0.75, 0.26854658061857906),
    (0.0, 0.0, 0.0052425032490000046, 0.0052477510000000045, 0.8, 0.26854658061857906),
    (-1.0, -1.0, 0.006237260745751006, 0.006237260745751006, 5.0 / 6.0, 0.3175363754742426),
]


def test_bamsprod_golden_scalar_trace():
    cfg = cfg_for(
        "bamsprod",
        eta=0.1,
        beta1=0.0,
        beta2=0.999,
        epsilon=0.0,
        bound_params=BoundScheduleParams(c_inf=1.0, gamma=1.0),
    )
    state = OptimizerState.zeros(1)
    w = np.array([0.5])
    for g, m, v, vhat, vtilde, w_exp in GOLDEN_BAMS:
        state, w, info = step_with_info("bamsprod", state, w, np.array([g]), cfg, BOX1)
        assert state.m[0] == pytest.approx(m, abs=TEST_ATOL)
        assert state.v[0] == pytest.approx(v, abs=TEST_ATOL)
        assert state.v_hat[0] == pytest.approx(vhat, abs=TEST_ATOL)
        assert info.v_eff[0] == pytest.approx(vtilde, abs=TEST_ATOL)
        assert w[0] == pytest.approx(w_exp, abs=TEST_ATOL)


def test_bamsprod_zero_gradient_fixed_point():
    cfg = cfg_for("bamsprod", beta1=0.0, bound_params=BoundScheduleParams(1.0, 1e-3))
    state = OptimizerState.zeros(1)
    w = np.array([0.25])
    for _ in range(4):
        state, w = bamsprod_step(state, w, np.zeros(1), cfg, BOX1)
    assert w[0] == 0.25
    assert np.all(state.v_hat == 0.0)


def test_bamsprod_requires_momentum_condition():
    cfg = OptimizerConfig(beta1=0.999, beta2=0.9, bound_params=BoundScheduleParams(1.0, 1.0))
    with pytest.raises(ConfigError):
        bamsprod_step(OptimizerState.zeros(1), np.array([0.0]), np.array([1.0]), cfg, BOX1)


def test_bamsprod_requires_bounds():
    cfg = OptimizerConfig(beta1=0.0)
    with pytest.raises(ConfigError):
        bamsprod_step(OptimizerState.zeros(1), np.array([0.0]), np.array([1.0]), cfg, BOX1)


def test_degenerate_bounds_match_amsgrad_bitwise():
    rng = np.random.default_rng(11)
    cfg_b = cfg_for("bamsprod", beta1=0.9, bound_params=degenerate_bounds())
    cfg_a = cfg_for()
    box = Box.symmetric(2.0, 4)
    s_b = s_a = OptimizerState.zeros(4)
    w_b = w_a = rng.uniform(-1, 1, 4)
    for _ in range(500):
        g = rng.standard_normal(4)
        s_b, w_b = bamsprod_step(s_b, w_b, g, cfg_b, box)
        s_a, w_a = amsgrad_step(s_a, w_a, g, cfg_a, box)
        assert np.array_equal(w_b, w_a)
        assert np.array_equal(s_b.v_hat, s_a.v_hat)


def test_amsgrad_without_max_is_adam():
    # shared kernel: disabling the max line reproduces the plain EMA stepper
    from bamsprod.optim import _adaptive_step

    rng = np.random.default_rng(3)
    cfg = cfg_for()
    box = Box.symmetric(2.0, 3)
    s1 = s2 = OptimizerState.zeros(3)
    w1 = w2 = rng.uniform(-1, 1, 3)
    for _ in range(100):
        g = rng.standard_normal(3)
        s1, w1, _ = _adaptive_step(s1, w1, g, cfg, box, use_max=False)
        s2, w2 = adam_step(s2, w2, g, cfg, box)
        assert np.array_equal(w1, w2)


def test_adabound_zero_gradient_fixed_point():
    cfg = cfg_for("adabound", bound_params=BoundScheduleParams(0.01, 1e-3))
    state = OptimizerState.zeros(1)
    w = np.array([0.3])
    state, w = adabound_step(state, w, np.zeros(1), cfg, BOX1)
    assert w[0] == 0.3


def test_adabound_collapsed_bounds_equal_sgd():
    # a huge gamma pins the rate interval at c_inf exactly, so with beta1=0
    # the update is plain SGD at a constant rate
    rate = 0.05
    cfg_ab = cfg_for(
        "adabound", beta1=0.0, bound_params=BoundScheduleParams(c_inf=rate, gamma=1e300)
    )
    cfg_sgd = cfg_for(beta1=0.0, eta=rate, eta_schedule="constant")
    rng = np.random.default_rng(5)
    box = Box.symmetric(3.0, 2)
    s1 = s2 = OptimizerState.zeros(2)
    w1 = w2 = np.array([1.0, -1.0])
    for _ in range(50):
        g = rng.standard_normal(2)
        s1, w1 = adabound_step(s1, w1, g, cfg_ab, box)
        s2, w2 = sgdm_step(s2, w2, g, cfg_sgd, box)
        assert np.allclose(w1, w2, atol=TEST_ATOL)


def test_adabound_clips_rate_not_moment():
    cfg = cfg_for("adabound", eta=0.1, beta1=0.0, bound_params=BoundScheduleParams(0.01, 1e-3))
    state, w, info = step_with_info(
        "adabound", OptimizerState.zeros(1), np.array([0.5]), np.array([10.0]), cfg, BOX1
    )
    cl, cu = bound_schedule(1, cfg.bound_params)
    assert cl <= info.rate[0] <= cu
    # the moment itself is untouched
    assert info.v_eff[0] == pytest.approx(state.v[0], abs=TEST_ATOL)


def test_sgdm_beta0_is_plain_sgd():
    cfg = cfg_for(beta1=0.0, eta=0.1)
    state, w = sgdm_step(OptimizerState.zeros(1), np.array([0.5]), np.array([1.0]), cfg, BOX1)
    assert w[0] == pytest.approx(0.4, abs=TEST_ATOL)


def test_sgdm_scalar_trace_with_momentum():
    cfg = cfg_for(beta1=0.5, eta=0.1)
    state = OptimizerState.zeros(1)
    w = np.array([0.5])
    state, w = sgdm_step(state, w, np.array([1.0]), cfg, BOX1)  # m=1, step 0.1
    assert w[0] == pytest.approx(0.4, abs=TEST_ATOL)
    state, w = sgdm_step(state, w, np.array([1.0]), cfg, BOX1)  # m=1.5, eta2=0.1/sqrt 2
    assert w[0] == pytest.approx(0.4 - 0.1 / math.sqrt(2) * 1.5, abs=TEST_ATOL)


def test_sgdm_zero_gradient_zero_momentum_fixed_point():
    cfg = cfg_for(beta1=0.9)
    state, w = sgdm_step(OptimizerState.zeros(1), np.array([0.2]), np.zeros(1), cfg, BOX1)
    assert w[0] == 0.2


# --- bop --------------------------------------------------------------------


def test_bop_no_flip_below_threshold():
    state = OptimizerState.zeros(2)
    wb = np.array([1.0, -1.0])
    state, wb2 = bop_step(state, wb, np.array([0.001, -0.001]), threshold=0.1, adaptivity=0.5)
    assert np.array_equal(wb2, wb)


def test_bop_flip_when_aligned_and_above_threshold():
    state = OptimizerState(m=np.array([0.0]), v=np.zeros(1), v_hat=np.zeros(1), t=0)
    tau = 0.1
    # one step with adaptivity 1 puts m at g
    state, wb = bop_step(state, np.array([1.0]), np.array([tau + 0.1]), tau, 1.0)
    assert wb[0] == -1.0


def test_bop_no_flip_when_sign_opposes():
    state, wb = bop_step(OptimizerState.zeros(1), np.array([1.0]), np.array([-5.0]), 0.1, 1.0)
    assert wb[0] == 1.0


def test_bop_alternating_gradients_freeze():
    # EMA of an alternating +/-1 stream stays below a threshold just above
    # the adaptivity, so no coordinate ever flips
    state = OptimizerState.zeros(1)
    wb = np.array([1.0])
    flips = 0
    for t in range(100):
        g = np.array([1.0 if t % 2 == 0 else -1.0])
        state, wb_new = bop_step(state, wb, g, threshold=0.15, adaptivity=0.1)
        flips += int(wb_new[0] != wb[0])
        wb = wb_new
    assert flips == 0


def test_bop_rejects_nonbinary_weights():
    with pytest.raises(DomainError):
        bop_step(OptimizerState.zeros(1), np.array([0.5]), np.array([1.0]), 0.1, 0.5)


def test_bop_output_stays_binary():
    rng = np.random.default_rng(2)
    state = OptimizerState.zeros(8)
    wb = np.where(rng.random(8) < 0.5, 1.0, -1.0)
    for _ in range(200):
        state, wb = bop_step(state, wb, rng.standard_normal(8), 0.05, 0.2)
        assert np.all(np.abs(wb) == 1.0)


# --- numeric guard ----------------------------------------------------------


def test_nan_gradient_aborts_and_preserves_state():
    cfg = cfg_for()
    state = OptimizerState.zeros(1)
    w = np.array([0.5])
    state, w = adam_step(state, w, np.array([1.0]), cfg, BOX1)
    m_before, v_before, t_before = state.m.copy(), state.v.copy(), state.t
    with pytest.raises(NumericError):
        adam_step(state, w, np.array([np.nan]), cfg, BOX1)
    assert np.array_equal(state.m, m_before)
    assert np.array_equal(state.v, v_before)
    assert state.t == t_before


# --- properties over random streams ----------------------------------------


def test_vhat_monotone_on_random_streams():
    rng = np.random.default_rng(42)
    cfg = cfg_for("bamsprod", beta1=0.5, bound_params=BoundScheduleParams(1.0, 1e-3))
    box = Box.symmetric(2.0, 6)
    for _ in range(5):
        state = OptimizerState.zeros(6)
        w = rng.uniform(-1, 1, 6)
        prev = np.zeros(6)
        for _ in range(300):
            state, w = bamsprod_step(state, w, rng.standard_normal(6) * 3, cfg, box)
            assert np.all(state.v_hat >= prev - 0.0)
            prev = state.v_hat


def test_bamsprod_moment_within_bounds_every_step():
    rng = np.random.default_rng(9)
    params = BoundScheduleParams(c_inf=0.5, gamma=0.01)
    cfg = cfg_for("bamsprod", beta1=0.0, bound_params=params)
    box = Box.symmetric(1.0, 4)
    state = OptimizerState.zeros(4)
    w = np.zeros(4)
    for t in range(1, 500):
        state, w, info = step_with_info("bamsprod", state, w, rng.standard_normal(4), cfg, box)
        cl, cu = bound_schedule(t, params)
        assert np.all(info.v_eff >= cl - TEST_ATOL)
        assert np.all(info.v_eff <= cu + TEST_ATOL)


def test_iterates_stay_feasible_all_steppers():
    rng = np.random.default_rng(17)
    box = Box.symmetric(0.7, 3)
    for name in ("adam", "amsgrad", "bamsprod", "adabound", "amsbound", "sgdm"):
        cfg = cfg_for(
            name if name in ("bamsprod",) else None,
            beta1=0.5,
            bound_params=BoundScheduleParams(1.0, 1e-2),
        )
        state = OptimizerState.zeros(3)
        w = rng.uniform(-0.7, 0.7, 3)
        for _ in range(200):
            state, w, _ = step_with_info(name, state, w, 5 * rng.standard_normal(3), cfg, box)
            assert box.contains(w)


def test_effective_rate_never_increases_when_bounds_inactive():
    rng = np.random.default_rng(23)
    cfg = cfg_for("bamsprod", beta1=0.0, bound_params=degenerate_bounds())
    box = Box.symmetric(1.0, 3)
    state = OptimizerState.zeros(3)
    w = np.zeros(3)
    prev_rate = None
    for _ in range(300):
        g = rng.standard_normal(3)
        state, w, info = step_with_info("bamsprod", state, w, g, cfg, box)
        if prev_rate is not None:
            assert np.all(info.rate <= prev_rate + TEST_ATOL)
        prev_rate = info.rate


def test_rate_interval_width_shrinks():
    p = BoundScheduleParams(c_inf=1.0, gamma=1e-3)
    eta = 1.0

    def width(t):
        cl, cu = bound_schedule(t, p)
        eta_t = eta / math.sqrt(t)
        return eta_t / math.sqrt(cl) - eta_t / math.sqrt(cu)

    assert width(10**4) < 0.01 * width(10)


# --- bias correction --------------------------------------------------------


def test_adam_bias_correction_textbook_step():
    cfg = cfg_for(eta=0.1, beta1=0.9, beta2=0.999, epsilon=0.0, bias_correction=True)
    state, w = adam_step(OptimizerState.zeros(1), np.array([0.5]), np.array([1.0]), cfg, BOX1)
    # m-hat = 1, v-hat = 1, so the step is exactly eta
    assert w[0] == pytest.approx(0.4, abs=TEST_ATOL)


def test_amsgrad_ignores_bias_correction_flag():
    cfg_flag = cfg_for(eta=0.1, epsilon=0.0, bias_correction=True)
    cfg_plain = cfg_for(eta=0.1, epsilon=0.0, bias_correction=False)
    s1, w1 = amsgrad_step(OptimizerState.zeros(1), np.array([0.5]), np.array([1.0]), cfg_flag, BOX1)
    s2, w2 = amsgrad_step(OptimizerState.zeros(1), np.array([0.5]), np.array([1.0]), cfg_plain, BOX1)
    assert w1[0] == w2[0]


# --- regret bound evaluator -------------------------------------------------


def test_theorem4_bound_rejects_bad_momentum():
    inputs = RegretBoundInputs(
        v_hat_final=np.array([1.0]),
        grad_history=np.zeros((10, 1)),
        weighted_norm_sqrt_sum=0.0,
        d_inf=2.0,
        g_inf=1.0,
        l_inf=1.0,
        eta=0.1,
        beta1=0.95,
        beta2=0.9,
        T=10,
    )
    with pytest.raises(DomainError):
        theorem4_bound(inputs)


def _isolated_inputs(T, vhat=0.25, d_inf=2.0, eta=0.1):
    return RegretBoundInputs(
        v_hat_final=np.array([vhat]),
        grad_history=np.zeros((T, 1)),
        weighted_norm_sqrt_sum=0.0,
        d_inf=d_inf,
        g_inf=1.0,
        l_inf=0.0,
        eta=eta,
        beta1=0.0,
        beta2=0.999,
        T=T,
    )


def test_theorem4_bound_first_term_isolation():
    T = 100
    bound = theorem4_bound(_isolated_inputs(T))
    expected = 2.0**2 * math.sqrt(T) / 0.1 * math.sqrt(0.25)
    assert bound == pytest.approx(expected, rel=1e-12)


def test_theorem4_bound_sqrt_t_scaling():
    b1 = theorem4_bound(_isolated_inputs(100))
    b2 = theorem4_bound(_isolated_inputs(200))
    assert b2 / b1 == pytest.approx(math.sqrt(2.0), rel=1e-12)


def test_theorem4_bound_nonnegative_with_all_terms():
    rng = np.random.default_rng(0)
    T = 50
    inputs = RegretBoundInputs(
        v_hat_final=rng.random(3),
        grad_history=rng.standard_normal((T, 3)),
        weighted_norm_sqrt_sum=4.2,
        d_inf=2.0,
        g_inf=3.0,
        l_inf=3.0,
        eta=0.1,
        beta1=0.9,
        beta2=0.999,
        T=T,
    )
    assert theorem4_bound(inputs) >= 0.0


# --- config validation ------------------------------------------------------


def test_config_rejects_bad_beta():
    with pytest.raises(ConfigError):
        OptimizerConfig(beta1=1.0).validate()


def test_config_rejects_bamsprod_momentum_violation():
    with pytest.raises(ConfigError):
        OptimizerConfig(beta1=0.99, beta2=0.5, bound_params=BoundScheduleParams(1, 1)).validate(
            "bamsprod"
        )


def test_config_rejects_unknown_schedules():
    with pytest.raises(ConfigError):
        OptimizerConfig(beta1_schedule="linear").validate()
    with pytest.raises(ConfigError):
        OptimizerConfig(eta_schedule="cosine").validate()


def test_step_with_info_unknown_name():
    with pytest.raises(ConfigError):
        step_with_info("adamw", OptimizerState.zeros(1), np.zeros(1), np.zeros(1), cfg_for(), BOX1)
