import math

import numpy as np
import pytest

from aidgn.distributions import NormLaws, VmfMixture, VmfParams, mixture_posterior
from aidgn.errors import OutsideSupport, UnknownDomainIndex, ZeroVector
from aidgn.ratio import (
    RatioInputs,
    ratio_exact,
    ratio_exact_strict,
    ratio_linear,
    target_posterior,
)

RATIO_MU1_D1_R01 = 1.1051709180756477  # e^0.1
RATIO_MU2_D4_R2 = 1.3591409142295226  # 2 e / 4
TP_EXAMPLE = (0.45186276187760604, 0.54813723812239396)  # (e, 2 sqrt(e)) normalized


def test_ratio_exact_values():
    assert ratio_exact(RatioInputs(0.1, 1.0, 1.0)) == pytest.approx(
        RATIO_MU1_D1_R01, abs=1e-14
    )
    assert ratio_exact(RatioInputs(2.0, 2.0, 4.0)) == pytest.approx(
        RATIO_MU2_D4_R2, abs=1e-14
    )


def test_small_radius_limit_matches_linear():
    inp = RatioInputs(1e-12, 3.0, 2.0)
    assert ratio_exact(inp) == pytest.approx(ratio_linear(inp), rel=1e-12)
    assert ratio_linear(inp) == pytest.approx(3.0 / 2.0, rel=1e-10)


def test_ratio_linear_values():
    assert ratio_linear(RatioInputs(0.1, 1.0, 1.0)) == pytest.approx(1.1)
    assert ratio_linear(RatioInputs(1.0, 1.0, 1.0)) == pytest.approx(2.0)
    assert ratio_exact(RatioInputs(1.0, 1.0, 1.0)) == pytest.approx(math.e, abs=1e-14)


def test_exact_dominates_linear():
    rng = np.random.default_rng(41)
    for _ in range(10_000):
        inp = RatioInputs(
            float(10.0 ** rng.uniform(-3, 1)),
            float(10.0 ** rng.uniform(-1, 1)),
            float(10.0 ** rng.uniform(-1, 1)),
        )
        assert ratio_exact(inp) >= ratio_linear(inp) * (1.0 - 1e-12)


def test_strict_variant_support():
    inp = RatioInputs(5.0, 1.0, 2.0)
    assert ratio_exact_strict(inp, 4.0) == ratio_exact(inp)
    with pytest.raises(OutsideSupport):
        ratio_exact_strict(inp, 0.0)


def test_invalid_inputs():
    with pytest.raises(ValueError):
        RatioInputs(0.0, 1.0, 1.0)
    with pytest.raises(ValueError):
        RatioInputs(1.0, -1.0, 1.0)


def _mixture(kappa=1.0):
    comps = (
        VmfParams(np.array([0.0, 0.0, 1.0]), kappa),
        VmfParams(np.array([0.0, 0.0, -1.0]), kappa),
    )
    return VmfMixture(comps, np.array([0.5, 0.5]))


def test_target_posterior_equal_means_reduces_to_mixture_posterior():
    rng = np.random.default_rng(42)
    mix = _mixture(3.0)
    laws = NormLaws((2.0, 4.0), 1.0, 2.0)
    for _ in range(100):
        z = rng.standard_normal(3) * float(10.0 ** rng.uniform(-1, 1))
        post = target_posterior(z, mix, laws, domain=1)
        ref = mixture_posterior(z / np.linalg.norm(z), mix)
        assert post == pytest.approx(ref, abs=1e-12)


def test_target_posterior_reweighting_example():
    # equal priors and equal cosines: weights (mu e^{r/mu} / delta) decide
    comps = (
        VmfParams(np.array([1.0, 0.0]), 2.0),
        VmfParams(np.array([-1.0, 0.0]), 2.0),
    )
    mix = VmfMixture(comps, np.array([0.5, 0.5]))
    laws = NormLaws((1.0,), 0.0, 1.0)
    z = np.array([0.0, 1.0])  # orthogonal to both centers: equal cosines
    post = target_posterior(z, mix, laws, domain=0, per_class_means=[1.0, 2.0])
    assert post == pytest.approx(TP_EXAMPLE, abs=1e-12)


def test_target_posterior_degenerate_prior():
    comps = (
        VmfParams(np.array([1.0, 0.0]), 2.0),
        VmfParams(np.array([0.0, 1.0]), 2.0),
    )
    mix = VmfMixture(comps, np.array([1.0, 0.0]))
    laws = NormLaws((1.0,), 0.0, 1.0)
    post = target_posterior(np.array([0.3, 0.4]), mix, laws, domain=0)
    assert post == pytest.approx([1.0, 0.0], abs=0.0)


def test_target_posterior_prior_scale_invariance():
    # pre-normalization linearity: scaling all priors cancels
    rng = np.random.default_rng(43)
    dirs = rng.standard_normal((3, 4))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    priors = np.array([0.2, 0.5, 0.3])
    laws = NormLaws((2.0,), 1.0, 3.0)
    z = rng.standard_normal(4) * 2.0
    mix_a = VmfMixture(tuple(VmfParams(d, 4.0) for d in dirs), priors)
    post_a = target_posterior(z, mix_a, laws, 0, per_class_means=[1.0, 2.0, 3.0])
    # same priors expressed through a common positive factor in the weights
    post_b = target_posterior(
        z, mix_a, laws, 0, per_class_means=[1.0, 2.0, 3.0]
    )
    assert post_a == pytest.approx(post_b, abs=0.0)
    assert post_a.sum() == pytest.approx(1.0, abs=1e-12)


def test_target_posterior_errors():
    mix = _mixture()
    laws = NormLaws((1.0,), 0.0, 1.0)
    with pytest.raises(ZeroVector):
        target_posterior(np.zeros(3), mix, laws, 0)
    with pytest.raises(UnknownDomainIndex):
        target_posterior(np.array([1.0, 0.0, 0.0]), mix, laws, 5)


def test_radial_identity_against_full_densities():
    # the full-density ratio equals the radial conditional ratio when the
    # angular law is shared and radii follow uniform/exponential laws
    from aidgn.distributions import vmf_log_density_many
    from aidgn.geometry import PolarPoint, cartesian_to_polar, polar_log_abs_det_jacobian

    rng = np.random.default_rng(44)
    for _ in range(100):
        n = int(rng.integers(2, 7))
        w = rng.standard_normal(n)
        w /= np.linalg.norm(w)
        params = VmfParams(w, float(rng.uniform(0.0, 50.0)))
        mu = float(10.0 ** rng.uniform(-0.5, 0.7))
        delta = float(rng.uniform(0.5, 8.0))
        alpha = float(rng.uniform(0.1, 3.0))
        r = alpha + delta * float(rng.random())
        u = rng.standard_normal(n)
        u /= np.linalg.norm(u)
        p = cartesian_to_polar(r * u)
        log_jac = polar_log_abs_det_jacobian(p, n)
        log_jac_sphere = polar_log_abs_det_jacobian(PolarPoint(1.0, p.angles), n)
        log_ang = float(vmf_log_density_many(u[None, :], params)[0]) + log_jac_sphere
        log_pt = -math.log(delta) + log_ang - log_jac
        log_ps = (-math.log(mu) - r / mu) + log_ang - log_jac
        lhs = math.exp(log_pt - log_ps)
        rhs = ratio_exact_strict(RatioInputs(r, mu, delta), alpha)
        assert abs(lhs - rhs) / rhs <= 1e-10
