"""The norm-aware angular softmax loss and its regularized batch objective.

Per sample with cosine scores cos_c, label y, latent radius r and in-batch
domain norm mean mu_d, the loss is

    -log softmax_y( kappa * a )          with
    a_y = cos(theta_y + gamma_delta * (r + beta * mu_d))
    a_c = cos(theta_c + gamma_delta * m)   for c != y   (m defaults to 0)

plus, per sample, the hyperbolic norm regularizer
eta * (mu_d / mu_star + mu_star / mu_d), the first-order Maclaurin form of
the exponential KL regularizer (up to an additive constant 2*eta).

Gradient conventions: mu_d inside the angular perturbation is a batch
statistic and carries no gradient, while the regularizer propagates
through mu_d into every latent norm of its domain. The radius inside the
perturbation does carry gradient by default (`stop_radius_grad` turns
that path off).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ClassIndexOutOfRange, EmptyBatch, EmptyDomain, ZeroVector

ANGLE_EPS = 1e-7


@dataclass(frozen=True)
class AidgnHyper:
    """Loss hyperparameters; defaults follow the reference operating point."""

    kappa: float = 110.0
    gamma_delta: float = 0.001
    beta_rw: float = 0.275
    eta: float = 0.04
    mu_star: float = 410.0
    margin: float = 0.0
    stop_radius_grad: bool = False

    def __post_init__(self):
        if self.kappa <= 0 or self.mu_star <= 0:
            raise ValueError("kappa and mu_star must be > 0")
        if min(self.gamma_delta, self.beta_rw, self.eta, self.margin) < 0:
            raise ValueError("gamma_delta, beta_rw, eta, margin must be >= 0")


@dataclass(frozen=True)
class BatchStats:
    """Mean latent norm per source domain present in a batch."""

    mu_d: dict[int, float] = field(default_factory=dict)

    def __post_init__(self):
        if any(v <= 0 for v in self.mu_d.values()):
            raise ZeroVector("domain norm means must be > 0")


def batch_norm_means(samples, required=None) -> BatchStats:
    """Arithmetic mean of latent norms per domain.

    `samples` is a sequence of (domain index, latent vector) pairs;
    `required` optionally lists domains that must be present.
    """
    sums: dict[int, float] = {}
    counts: dict[int, int] = {}
    for domain, latent in samples:
        norm = float(np.linalg.norm(latent))
        if norm == 0.0:
            raise ZeroVector("latent with zero norm in batch")
        sums[domain] = sums.get(domain, 0.0) + norm
        counts[domain] = counts.get(domain, 0) + 1
    if required is not None:
        missing = [d for d in required if d not in counts]
        if missing:
            raise EmptyDomain(f"no samples for domain(s) {missing}")
    return BatchStats(mu_d={d: sums[d] / counts[d] for d in sums})


def perturbed_cosine(cos_theta, perturbation):
    """cos(theta + delta) with the angle clamped to [0, pi] and the input
    cosine clamped to [-1 + eps, 1 - eps]; nonincreasing in the perturbation."""
    c = np.clip(cos_theta, -1.0 + ANGLE_EPS, 1.0 - ANGLE_EPS)
    psi = np.minimum(np.arccos(c) + perturbation, np.pi)
    out = np.cos(np.maximum(psi, 0.0))
    if np.ndim(cos_theta) == 0 and np.ndim(perturbation) == 0:
        return float(out)
    return out


def _perturbed_cosine_with_grads(cos_theta, perturbation):
    """Value of the perturbed cosine plus partials w.r.t. the raw cosine and
    the perturbation; partials vanish where a clamp is active."""
    c = np.clip(cos_theta, -1.0 + ANGLE_EPS, 1.0 - ANGLE_EPS)
    theta = np.arccos(c)
    psi = theta + perturbation
    open_top = psi < np.pi
    psi = np.minimum(psi, np.pi)
    val = np.cos(psi)
    sin_psi = np.sin(psi)
    sin_theta = np.sqrt(1.0 - c * c)
    in_band = (cos_theta > -1.0 + ANGLE_EPS) & (cos_theta < 1.0 - ANGLE_EPS)
    d_dcos = np.where(open_top & in_band, sin_psi / sin_theta, 0.0)
    d_dpert = np.where(open_top, -sin_psi, 0.0)
    return val, d_dcos, d_dpert


def aidgn_sample_loss(cosines, true_class: int, radius: float, mu_d: float, hyper: AidgnHyper) -> float:
    """Single-sample loss value; cosines has one entry per class."""
    cosines = np.asarray(cosines, dtype=float)
    n_classes = cosines.size
    if n_classes < 2:
        raise ClassIndexOutOfRange("need at least two classes")
    if not 0 <= true_class < n_classes:
        raise ClassIndexOutOfRange(f"class {true_class} not in [0, {n_classes})")
    a = perturbed_cosine(cosines, hyper.gamma_delta * hyper.margin)
    a[true_class] = perturbed_cosine(
        cosines[true_class], hyper.gamma_delta * (radius + hyper.beta_rw * mu_d)
    )
    logits = hyper.kappa * a
    return float(_true_class_nll(logits[None, :], np.array([true_class]))[0])


def _true_class_nll(logits: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """-log softmax at the true class, keeping tiny losses above zero via
    log1p when the true class dominates."""
    rows = np.arange(logits.shape[0])
    m = logits.max(axis=1)
    exp_shifted = np.exp(logits - m[:, None])
    t_true = exp_shifted[rows, labels]
    wrong = exp_shifted.copy()
    wrong[rows, labels] = 0.0
    z_wrong = wrong.sum(axis=1)
    dominated = logits[rows, labels] == m
    return np.where(
        dominated,
        np.log1p(z_wrong),
        (m - logits[rows, labels]) + np.log(t_true + z_wrong),
    )


def _as_arrays(batch):
    domains, latents, labels = [], [], []
    for domain, latent, label in batch:
        domains.append(int(domain))
        latents.append(np.asarray(latent, dtype=float))
        labels.append(int(label))
    if not domains:
        raise EmptyBatch("batch must contain at least one sample")
    return np.asarray(domains), np.stack(latents), np.asarray(labels)


def batch_objective(
    domains: np.ndarray,
    latents: np.ndarray,
    labels: np.ndarray,
    head_directions: np.ndarray,
    hyper: AidgnHyper,
    *,
    want_grads: bool = False,
    perturb_mu: dict[int, float] | None = None,
    perturb_r: np.ndarray | None = None,
):
    """Objective value, per-term breakdown and (optionally) analytic gradients
    for a batch given as arrays.

    `perturb_mu` / `perturb_r` override the values entering the angular
    perturbation only, so the stop-gradient surrogate can be evaluated as an
    ordinary function of the parameters; the regularizer always uses the live
    batch statistics.

    Returns (total, breakdown) or (total, breakdown, d_head, d_latents).
    """
    if latents.ndim != 2 or latents.shape[0] == 0:
        raise EmptyBatch("batch must contain at least one sample")
    n_batch = latents.shape[0]
    n_classes = head_directions.shape[0]
    if labels.min() < 0 or labels.max() >= n_classes:
        raise ClassIndexOutOfRange(f"labels must lie in [0, {n_classes})")

    radii = np.linalg.norm(latents, axis=1)
    if np.any(radii == 0.0):
        raise ZeroVector("latent with zero norm in batch")
    unit = latents / radii[:, None]

    stats = batch_norm_means(zip(domains, latents))
    mu_live = np.array([stats.mu_d[d] for d in domains])
    mu_pert = (
        np.array([perturb_mu[d] for d in domains]) if perturb_mu is not None else mu_live
    )
    r_pert = radii if perturb_r is None else np.asarray(perturb_r, dtype=float)

    cos = unit @ head_directions.T
    rows = np.arange(n_batch)

    a, da_dcos, _ = _perturbed_cosine_with_grads(cos, hyper.gamma_delta * hyper.margin)
    delta_true = hyper.gamma_delta * (r_pert + hyper.beta_rw * mu_pert)
    a_true, da_dcos_true, da_dpert_true = _perturbed_cosine_with_grads(
        cos[rows, labels], delta_true
    )
    a[rows, labels] = a_true
    da_dcos[rows, labels] = da_dcos_true

    logits = hyper.kappa * a
    losses = _true_class_nll(logits, labels)
    exp_shifted = np.exp(logits - logits.max(axis=1, keepdims=True))
    probs = exp_shifted / exp_shifted.sum(axis=1, keepdims=True)

    reg_per_sample = hyper.eta * (mu_live / hyper.mu_star + hyper.mu_star / mu_live)
    loss_sum = float(losses.sum())
    reg_sum = float(reg_per_sample.sum())
    breakdown = {
        "loss_sum": loss_sum,
        "reg_sum": reg_sum,
        "mu_d": dict(stats.mu_d),
        "mean_loss": loss_sum / n_batch,
    }
    total = loss_sum + reg_sum
    if not want_grads:
        return total, breakdown

    onehot = np.zeros_like(probs)
    onehot[rows, labels] = 1.0
    g_logit = hyper.kappa * (probs - onehot)
    g_cos = g_logit * da_dcos

    d_head = g_cos.T @ unit

    proj = (g_cos * cos).sum(axis=1)
    d_latents = (g_cos @ head_directions - proj[:, None] * unit) / radii[:, None]
    if not hyper.stop_radius_grad and perturb_r is None:
        d_latents += (g_logit[rows, labels] * da_dpert_true * hyper.gamma_delta)[:, None] * unit

    # regularizer: d/dmu_d sums over the domain's samples, and mu_d spreads
    # its gradient evenly over those samples' norms
    reg_coef = hyper.eta * (1.0 / hyper.mu_star - hyper.mu_star / mu_live**2)
    d_latents += reg_coef[:, None] * unit

    return total, breakdown, d_head, d_latents


def aidgn_batch_objective(batch, head_directions, hyper: AidgnHyper):
    """Total objective and per-term breakdown for a list of
    (domain, latent, label) samples."""
    domains, latents, labels = _as_arrays(batch)
    return batch_objective(domains, latents, labels, np.asarray(head_directions, float), hyper)


def aidgn_gradients(batch, head_directions, hyper: AidgnHyper):
    """Analytic gradients of the batch objective w.r.t. the classifier
    directions and the latent vectors."""
    domains, latents, labels = _as_arrays(batch)
    _, _, d_head, d_latents = batch_objective(
        domains, latents, labels, np.asarray(head_directions, float), hyper, want_grads=True
    )
    return d_head, d_latents
