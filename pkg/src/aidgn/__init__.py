"""Angular-invariance domain generalization at desk scale."""

from .distributions import (
    NormLaws,
    VmfMixture,
    VmfParams,
    exponential_kl,
    log_bessel_i,
    mixture_posterior,
    sample_radius,
    vmf_log_density,
    vmf_sample,
)
from .geometry import (
    PolarPoint,
    cartesian_to_polar,
    l2_normalize,
    polar_log_abs_det_jacobian,
    polar_to_cartesian,
)
from .loss import (
    AidgnHyper,
    BatchStats,
    aidgn_batch_objective,
    aidgn_gradients,
    aidgn_sample_loss,
    batch_norm_means,
    perturbed_cosine,
)
from .maxent import (
    MaxEntInstance,
    closed_form_distribution,
    objective_value,
    solve_numeric,
)
from .ratio import RatioInputs, ratio_exact, ratio_linear, target_posterior
from .synth import SyntheticSpec, make_task, oracle_accuracy, sample_domain
from .train import TrainConfig, TrainState, evaluate, train, train_step

__version__ = "0.1.0"
