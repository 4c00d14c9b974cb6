"""Probability laws used throughout: vMF components and mixtures on the
unit sphere, exponential/uniform radius laws, and the exponential KL term
of the norm regularizer.

The modified Bessel function of the first kind is evaluated with a
log-space ascending series (term-ratio cutoff 1e-16, 10^4-term cap); for
half-integer orders up to 7/2 a hyperbolic closed form is used on
0.5 <= x <= 700, where it is both exact and cancellation-safe.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DimensionMismatch,
    NonPositiveRate,
    NotConverged,
    NotUnit,
    UnknownDomainIndex,
)

_SERIES_CUTOFF = 1e-16
_SERIES_CAP = 10_000
_UNIT_TOL = 1e-8


# ---------------------------------------------------------------------------
# Bessel
# ---------------------------------------------------------------------------

def _log_modified_spherical_i(m: int, x: float) -> float:
    """log i_m(x) for the modified spherical Bessel function, m <= 3."""
    sh, ch = math.sinh(x), math.cosh(x)
    if m == 0:
        val = sh / x
    elif m == 1:
        val = (x * ch - sh) / x**2
    elif m == 2:
        val = ((x * x + 3.0) * sh - 3.0 * x * ch) / x**3
    else:
        val = ((x**3 + 15.0 * x) * ch - (6.0 * x * x + 15.0) * sh) / x**4
    return math.log(val)


def _log_bessel_i_series(nu: float, x: float) -> float:
    """Ascending series for log I_nu(x), accumulated in log space."""
    log_half_x = math.log(x / 2.0)
    q = (x / 2.0) ** 2
    total = None
    k = 0
    while k < _SERIES_CAP:
        log_term = (2 * k + nu) * log_half_x - math.lgamma(k + 1) - math.lgamma(k + nu + 1)
        total = log_term if total is None else np.logaddexp(total, log_term)
        ratio = q / ((k + 1) * (k + nu + 1))
        if ratio < 1.0:
            # remaining tail <= term * ratio / (1 - ratio)
            tail = math.exp(log_term - total) * ratio / (1.0 - ratio)
            if tail < _SERIES_CUTOFF:
                return float(total)
        k += 1
    raise NotConverged(f"Bessel series did not converge for nu={nu}, x={x}")


def log_bessel_i(nu: float, x: float) -> float:
    """log I_nu(x) for nu >= 0, x >= 0; returns -inf when I_nu(x) = 0."""
    if nu < 0:
        raise ValueError("order must be nonnegative")
    if x < 0:
        raise ValueError("argument must be nonnegative")
    if x == 0.0:
        return 0.0 if nu == 0.0 else -math.inf
    two_nu = 2.0 * nu
    if two_nu == round(two_nu) and round(two_nu) % 2 == 1 and 0.5 <= x <= 700.0:
        m = int(round(nu - 0.5))
        if m <= 3:
            # I_{m+1/2}(x) = sqrt(2x/pi) * i_m(x)
            return 0.5 * math.log(2.0 * x / math.pi) + _log_modified_spherical_i(m, x)
    return _log_bessel_i_series(nu, x)


# ---------------------------------------------------------------------------
# Parameter containers
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class VmfParams:
    """A single vMF component: unit mean direction and concentration."""

    mean_direction: np.ndarray
    concentration: float

    def __post_init__(self):
        mu = np.asarray(self.mean_direction, dtype=float)
        object.__setattr__(self, "mean_direction", mu)
        if abs(np.linalg.norm(mu) - 1.0) > 1e-10:
            raise NotUnit("mean_direction must have unit norm (tol 1e-10)")
        if self.concentration < 0:
            raise ValueError("concentration must be nonnegative")

    @property
    def dim(self) -> int:
        return self.mean_direction.size


@dataclass(frozen=True)
class VmfMixture:
    """Class-conditional vMF components sharing one concentration, plus priors."""

    components: tuple[VmfParams, ...]
    class_priors: np.ndarray

    def __post_init__(self):
        comps = tuple(self.components)
        object.__setattr__(self, "components", comps)
        priors = np.asarray(self.class_priors, dtype=float)
        object.__setattr__(self, "class_priors", priors)
        if len(comps) != priors.size:
            raise DimensionMismatch("one prior per component required")
        if np.any(priors < 0) or abs(priors.sum() - 1.0) > 1e-12:
            raise ValueError("priors must be nonnegative and sum to 1 (tol 1e-12)")
        kappas = {c.concentration for c in comps}
        dims = {c.dim for c in comps}
        if len(kappas) != 1 or len(dims) != 1:
            raise ValueError("components must share one concentration and dimension")

    @property
    def concentration(self) -> float:
        return self.components[0].concentration

    @property
    def dim(self) -> int:
        return self.components[0].dim

    @property
    def n_classes(self) -> int:
        return len(self.components)

    def directions(self) -> np.ndarray:
        return np.stack([c.mean_direction for c in self.components])


@dataclass(frozen=True)
class NormLaws:
    """Exponential radius means per source domain and the uniform target support."""

    source_means: tuple[float, ...]
    target_lower: float
    target_width: float

    def __post_init__(self):
        means = tuple(float(m) for m in self.source_means)
        object.__setattr__(self, "source_means", means)
        if any(m <= 0 for m in means):
            raise NonPositiveRate("all source means must be > 0")
        if self.target_width <= 0:
            raise ValueError("target_width must be > 0")
        if self.target_lower < 0:
            raise ValueError("target_lower must be >= 0")

    @property
    def n_domains(self) -> int:
        return len(self.source_means)


# ---------------------------------------------------------------------------
# Densities
# ---------------------------------------------------------------------------

def log_sphere_surface(n: int) -> float:
    """log of the surface area of the unit sphere in R^n."""
    return math.log(2.0) + (n / 2.0) * math.log(math.pi) - math.lgamma(n / 2.0)


def vmf_log_normalizer(n: int, kappa: float) -> float:
    """log of the vMF density constant; the uniform sphere law at kappa = 0."""
    if kappa == 0.0:
        return -log_sphere_surface(n)
    return (
        (n / 2.0 - 1.0) * math.log(kappa)
        - (n / 2.0) * math.log(2.0 * math.pi)
        - log_bessel_i(n / 2.0 - 1.0, kappa)
    )


def vmf_log_density(z_star, params: VmfParams) -> float:
    """log density of a vMF law at a unit vector."""
    z_star = np.asarray(z_star, dtype=float)
    if z_star.shape != params.mean_direction.shape:
        raise DimensionMismatch(
            f"point has shape {z_star.shape}, component has {params.mean_direction.shape}"
        )
    if abs(np.linalg.norm(z_star) - 1.0) > _UNIT_TOL:
        raise NotUnit("z_star must be a unit vector (tol 1e-8)")
    n = params.dim
    kappa = params.concentration
    return vmf_log_normalizer(n, kappa) + kappa * float(params.mean_direction @ z_star)


def vmf_log_density_many(points: np.ndarray, params: VmfParams) -> np.ndarray:
    """Row-wise vMF log density; rows must already be unit vectors."""
    points = np.asarray(points, dtype=float)
    if points.shape[1] != params.dim:
        raise DimensionMismatch("column count must match the component dimension")
    return vmf_log_normalizer(params.dim, params.concentration) + params.concentration * (
        points @ params.mean_direction
    )


def mean_resultant_length(n: int, kappa: float) -> float:
    """E[<w, Z*>] for a vMF draw: I_{n/2}(kappa) / I_{n/2-1}(kappa)."""
    if kappa == 0.0:
        return 0.0
    return math.exp(log_bessel_i(n / 2.0, kappa) - log_bessel_i(n / 2.0 - 1.0, kappa))


# ---------------------------------------------------------------------------
# Sampling
# ---------------------------------------------------------------------------

def _sample_uniform_sphere(n: int, count: int, rng: np.random.Generator) -> np.ndarray:
    x = rng.standard_normal((count, n))
    norms = np.linalg.norm(x, axis=1)
    while np.any(norms == 0.0):  # pragma: no cover - probability zero
        bad = norms == 0.0
        x[bad] = rng.standard_normal((int(bad.sum()), n))
        norms = np.linalg.norm(x, axis=1)
    return x / norms[:, None]


def _sample_vmf_cosines(kappa: float, n: int, count: int, rng: np.random.Generator) -> np.ndarray:
    """Rejection sampler for the cosine between draw and mean direction."""
    d = n - 1
    b = d / (math.sqrt(4.0 * kappa**2 + d * d) + 2.0 * kappa)
    x0 = (1.0 - b) / (1.0 + b)
    c = kappa * x0 + d * math.log(1.0 - x0 * x0)
    out = np.empty(count)
    filled = 0
    while filled < count:
        m = (count - filled) + 16
        z = rng.beta(d / 2.0, d / 2.0, size=m)
        t = (1.0 - (1.0 + b) * z) / (1.0 - (1.0 - b) * z)
        u = rng.random(m)
        ok = kappa * t + d * np.log1p(-x0 * t) - c >= np.log(u)
        accepted = t[ok]
        take = min(accepted.size, count - filled)
        out[filled : filled + take] = accepted[:take]
        filled += take
    return out


def vmf_sample_n(params: VmfParams, count: int, rng: np.random.Generator) -> np.ndarray:
    """Draw `count` unit vectors from a vMF law (tangent-normal construction)."""
    n = params.dim
    if params.concentration == 0.0:
        return _sample_uniform_sphere(n, count, rng)
    mu = params.mean_direction
    t = _sample_vmf_cosines(params.concentration, n, count, rng)
    v = rng.standard_normal((count, n))
    v -= np.outer(v @ mu, mu)
    vnorms = np.linalg.norm(v, axis=1)
    while np.any(vnorms == 0.0):  # pragma: no cover - probability zero
        bad = vnorms == 0.0
        v[bad] = rng.standard_normal((int(bad.sum()), n))
        v[bad] -= np.outer(v[bad] @ mu, mu)
        vnorms = np.linalg.norm(v, axis=1)
    v /= vnorms[:, None]
    return t[:, None] * mu + np.sqrt(np.maximum(0.0, 1.0 - t * t))[:, None] * v


def vmf_sample(params: VmfParams, rng: np.random.Generator) -> np.ndarray:
    """Draw one unit vector from a vMF law."""
    return vmf_sample_n(params, 1, rng)[0]


def sample_radius(norms: NormLaws, rng: np.random.Generator, domain: int | None = None) -> float:
    """One radius draw: Exponential(mean mu_d) for a source, Uniform on the
    target support when `domain` is None."""
    return float(sample_radii(norms, 1, rng, domain=domain)[0])


def sample_radii(
    norms: NormLaws, count: int, rng: np.random.Generator, domain: int | None = None
) -> np.ndarray:
    if domain is None:
        return norms.target_lower + norms.target_width * rng.random(count)
    if not 0 <= domain < norms.n_domains:
        raise UnknownDomainIndex(f"domain {domain} not in [0, {norms.n_domains})")
    return rng.exponential(scale=norms.source_means[domain], size=count)


# ---------------------------------------------------------------------------
# KL and posterior
# ---------------------------------------------------------------------------

def exponential_kl(mu_star: float, mu: float) -> float:
    """KL divergence between exponential laws with means mu_star and mu."""
    if mu_star <= 0 or mu <= 0:
        raise NonPositiveRate("exponential means must be > 0")
    return math.log(mu / mu_star) + mu_star / mu - 1.0


def mixture_posterior(z_star, mixture: VmfMixture) -> np.ndarray:
    """Bayes posterior over classes for a unit vector under a vMF mixture."""
    z_star = np.asarray(z_star, dtype=float)
    if z_star.size != mixture.dim:
        raise DimensionMismatch(f"point has dim {z_star.size}, mixture has {mixture.dim}")
    scores = mixture.concentration * (mixture.directions() @ z_star)
    scores -= scores.max()
    weights = mixture.class_priors * np.exp(scores)
    return weights / weights.sum()


def mixture_posterior_many(points: np.ndarray, mixture: VmfMixture) -> np.ndarray:
    """Row-wise mixture posterior for an array of unit vectors."""
    points = np.asarray(points, dtype=float)
    scores = mixture.concentration * (points @ mixture.directions().T)
    scores -= scores.max(axis=1, keepdims=True)
    weights = mixture.class_priors[None, :] * np.exp(scores)
    return weights / weights.sum(axis=1, keepdims=True)
