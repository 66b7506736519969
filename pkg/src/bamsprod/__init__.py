"""Bounded adaptive optimization for binary-weight models, with baselines
and a deterministic online-convex benchmark harness."""

from .binarize import (
    LatentWeights,
    QuantErrorTrace,
    compute_scale,
    quantization_error,
    quantize,
    record_upsilon,
    sign_binarize,
    ste_backward,
)
from .errors import ConfigError, DimensionError, DomainError, NumericError
from .numerics import Box, DiagMat, elementwise, l2_norm, project_box, weighted_norm
from .ocoharness import (
    AdversarialProblem,
    AdversarialSequence,
    QuadraticProblem,
    RegretTracker,
    RunLog,
    ShubertProblem,
    SpikeNoisyQuadratic,
    adversarial_grad,
    adversarial_loss,
    best_fixed_point,
    clipping_slowdown_experiment,
    condition_holds,
    quadratic_problem,
    run_online,
    shubert_grad,
    shubert_loss,
)
from .optim import (
    OPTIMIZER_NAMES,
    STEPPERS,
    BoundScheduleParams,
    OptimizerConfig,
    OptimizerState,
    RegretBoundInputs,
    adabound_step,
    adam_step,
    amsbound_step,
    amsgrad_step,
    bamsprod_step,
    beta1_at,
    bop_step,
    bound_schedule,
    degenerate_bounds,
    sgdm_step,
    theorem4_bound,
)

__version__ = "0.1.0"
