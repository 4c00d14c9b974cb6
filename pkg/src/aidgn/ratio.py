"""Target/source radius density ratios and the norm-reweighted posterior.

The ratio of a Uniform target radius density to an Exponential source
radius density is mu * exp(r / mu) / delta; its first-order form is
(mu + r) / delta. Training uses the ratio as a monotone weight without a
support check; a strict variant enforces the target support for the
density-identity tests.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .distributions import NormLaws, VmfMixture
from .errors import DimensionMismatch, OutsideSupport, UnknownDomainIndex, ZeroVector


@dataclass(frozen=True)
class RatioInputs:
    """Radius, relevant source mean, and target support width; all > 0."""

    radius: float
    source_mean: float
    target_width: float

    def __post_init__(self):
        if self.radius <= 0 or self.source_mean <= 0 or self.target_width <= 0:
            raise ValueError("all ratio inputs must be > 0")


def ratio_exact(inp: RatioInputs) -> float:
    """mu * exp(r / mu) / delta."""
    return inp.source_mean * math.exp(inp.radius / inp.source_mean) / inp.target_width


def ratio_linear(inp: RatioInputs) -> float:
    """(mu + r) / delta, the first-order form of :func:`ratio_exact`."""
    return (inp.source_mean + inp.radius) / inp.target_width


def ratio_exact_strict(inp: RatioInputs, target_lower: float) -> float:
    """As :func:`ratio_exact` but errors when r is outside the target support."""
    if not target_lower <= inp.radius <= target_lower + inp.target_width:
        raise OutsideSupport(
            f"radius {inp.radius} outside [{target_lower}, {target_lower + inp.target_width}]"
        )
    return ratio_exact(inp)


def target_posterior(
    z,
    mixture: VmfMixture,
    norms: NormLaws,
    domain: int,
    per_class_means=None,
) -> np.ndarray:
    """Posterior over classes for a target point, reweighting each class by
    the radius density ratio of its source law.

    `per_class_means` optionally supplies one source mean per class; by
    default the domain-level mean is shared across classes, in which case
    the weights cancel and the result equals the plain mixture posterior.
    """
    z = np.asarray(z, dtype=float)
    if z.size != mixture.dim:
        raise DimensionMismatch(f"point has dim {z.size}, mixture has {mixture.dim}")
    r = float(np.linalg.norm(z))
    if r == 0.0:
        raise ZeroVector("posterior undefined at the origin")
    if not 0 <= domain < norms.n_domains:
        raise UnknownDomainIndex(f"domain {domain} not in [0, {norms.n_domains})")
    if per_class_means is None:
        per_class_means = [norms.source_means[domain]] * mixture.n_classes
    per_class_means = np.asarray(per_class_means, dtype=float)
    if per_class_means.size != mixture.n_classes:
        raise DimensionMismatch("need one source mean per class")

    u = z / r
    cosines = mixture.directions() @ u
    log_w = np.log(per_class_means) + r / per_class_means - math.log(norms.target_width)
    scores = mixture.concentration * cosines + log_w
    scores -= scores.max()
    weights = mixture.class_priors * np.exp(scores)
    return weights / weights.sum()
