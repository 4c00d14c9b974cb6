"""Deterministic numeric verification suites behind `aidgn verify`.

Each check reports a measured error against its pinned tolerance. The
suites re-derive expected behavior through independent routes: finite
differences for Jacobians and gradients, quadrature for the KL term,
Monte-Carlo integration for the vMF normalizer, and a projected-gradient
solver for the entropy-regularized simplex program.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .distributions import (
    VmfParams,
    exponential_kl,
    log_sphere_surface,
    mean_resultant_length,
    vmf_log_density_many,
    vmf_sample_n,
)
from .geometry import (
    PolarPoint,
    cartesian_to_polar,
    polar_log_abs_det_jacobian,
    polar_to_cartesian,
)
from .loss import AidgnHyper, aidgn_sample_loss, batch_objective, perturbed_cosine
from .maxent import (
    MaxEntInstance,
    closed_form_distribution,
    objective_value,
    project_simplex,
    solve_batch,
)
from .net import ClassifierHead, FeatureExtractor, backward_batch, forward_batch
from .ratio import RatioInputs, ratio_exact, ratio_exact_strict, ratio_linear

SUITES = ("geometry", "distributions", "maxent", "gradients")


@dataclass
class CheckResult:
    name: str
    measured: float
    tolerance: float
    passed: bool
    detail: str = ""


def _check(name: str, measured: float, tol: float, overrides: dict, detail: str = "") -> CheckResult:
    tol = overrides.get(name, tol)
    return CheckResult(name=name, measured=measured, tolerance=tol,
                       passed=bool(measured <= tol), detail=detail)


# ---------------------------------------------------------------------------
# geometry
# ---------------------------------------------------------------------------

def _fd_jacobian_logdet(p: PolarPoint, n: int) -> float:
    q = np.concatenate(([p.radius], p.angles))
    jac = np.empty((n, n))
    for j in range(n):
        h = 1e-6 * max(1.0, abs(q[j]))
        qp, qm = q.copy(), q.copy()
        qp[j] += h
        qm[j] -= h
        fp = polar_to_cartesian(PolarPoint(radius=qp[0], angles=qp[1:]))
        fm = polar_to_cartesian(PolarPoint(radius=qm[0], angles=qm[1:]))
        jac[:, j] = (fp - fm) / (2.0 * h)
    return math.log(abs(np.linalg.det(jac)))


def suite_geometry(overrides: dict | None = None) -> list[CheckResult]:
    overrides = overrides or {}
    out = []

    rng = np.random.default_rng(1001)
    worst = 0.0
    for _ in range(1000):
        n = int(rng.integers(2, 9))
        direction = rng.standard_normal(n)
        direction /= np.linalg.norm(direction)
        norm = 10.0 ** rng.uniform(-6, 6)
        z = norm * direction
        back = polar_to_cartesian(cartesian_to_polar(z))
        worst = max(worst, np.linalg.norm(back - z) / norm)
    out.append(_check("geometry.roundtrip.max_rel_err", worst, 1e-9, overrides,
                      "1000 points, 2 <= n <= 8, norms 1e-6..1e6"))

    rng = np.random.default_rng(1002)
    worst = 0.0
    for _ in range(200):
        n = int(rng.integers(2, 7))
        angles = np.empty(n - 1)
        if n > 2:
            angles[: n - 2] = rng.uniform(0.2, np.pi - 0.2, size=n - 2)
        angles[n - 2] = rng.uniform(0.0, 2.0 * np.pi)
        p = PolarPoint(radius=float(rng.uniform(0.3, 5.0)), angles=angles)
        closed = polar_log_abs_det_jacobian(p, n)
        fd = _fd_jacobian_logdet(p, n)
        worst = max(worst, abs(closed - fd) / max(abs(fd), 1e-8))
    out.append(_check("geometry.jacobian.max_rel_err", worst, 1e-4, overrides,
                      "closed form vs central-difference determinant, 200 points"))

    rng = np.random.default_rng(1003)
    worst = 0.0
    for _ in range(1000):
        n = int(rng.integers(2, 9))
        z = rng.standard_normal(n) * 10.0 ** rng.uniform(-2, 2)
        if np.linalg.norm(z) == 0.0:
            continue
        c = 10.0 ** rng.uniform(-3, 3)
        a1 = cartesian_to_polar(z).angles
        a2 = cartesian_to_polar(c * z).angles
        worst = max(worst, float(np.max(np.abs(a1 - a2))))
    out.append(_check("geometry.scaling.angle_invariance", worst, 1e-12, overrides,
                      "angles unchanged under positive rescaling"))
    return out


# ---------------------------------------------------------------------------
# distributions (+ density-ratio identities)
# ---------------------------------------------------------------------------

def _kl_quadrature(mu_star: float, mu: float, nodes: int = 400) -> float:
    x, w = np.polynomial.legendre.leggauss(nodes)
    upper = 120.0 * mu_star
    r = 0.5 * upper * (x + 1.0)
    scale = 0.5 * upper
    log_p_star = -np.log(mu_star) - r / mu_star
    log_p = -np.log(mu) - r / mu
    integrand = np.exp(log_p_star) * (log_p_star - log_p)
    return float(np.sum(w * integrand) * scale)


def suite_distributions(overrides: dict | None = None) -> list[CheckResult]:
    overrides = overrides or {}
    out = []

    rng = np.random.default_rng(2001)
    worst = 0.0
    for _ in range(100):
        mu_star = 10.0 ** rng.uniform(-1, 1)
        mu = 10.0 ** rng.uniform(-1, 1)
        worst = max(worst, abs(exponential_kl(mu_star, mu) - _kl_quadrature(mu_star, mu)))
    out.append(_check("distributions.exponential_kl.quadrature", worst, 1e-6, overrides,
                      "closed form vs Gauss-Legendre quadrature, 100 pairs"))

    rng = np.random.default_rng(2002)
    worst_sigma = 0.0
    n_draws = 2_000_000
    for n in (2, 3, 5):
        u = rng.standard_normal((n_draws, n))
        u /= np.linalg.norm(u, axis=1, keepdims=True)
        mean_dir = np.zeros(n)
        mean_dir[0] = 1.0
        surface = math.exp(log_sphere_surface(n))
        for kappa in (0.0, 1.0, 10.0, 110.0):
            params = VmfParams(mean_direction=mean_dir, concentration=kappa)
            vals = np.exp(vmf_log_density_many(u, params))
            estimate = surface * vals.mean()
            se = surface * vals.std() / math.sqrt(n_draws)
            # kappa = 0 gives a constant integrand: difference and SE are
            # both rounding dust, so treat sub-1e-12 misses as exact
            diff = abs(estimate - 1.0)
            sigma_units = diff / se if diff > 1e-12 else 0.0
            worst_sigma = max(worst_sigma, sigma_units)
    out.append(_check("distributions.vmf_density.mc_normalization", worst_sigma, 3.0, overrides,
                      "surface integral of the density = 1, in standard-error units"))

    rng = np.random.default_rng(2003)
    worst_sigma = 0.0
    n_draws = 100_000
    for n, kappa in ((2, 1.0), (3, 10.0), (5, 110.0), (16, 20.0)):
        w = rng.standard_normal(n)
        w /= np.linalg.norm(w)
        params = VmfParams(mean_direction=w, concentration=kappa)
        t = vmf_sample_n(params, n_draws, rng) @ w
        expected = mean_resultant_length(n, kappa)
        se = t.std() / math.sqrt(n_draws)
        worst_sigma = max(worst_sigma, abs(t.mean() - expected) / se)
    out.append(_check("distributions.vmf_sampler.resultant_length", worst_sigma, 3.0, overrides,
                      "mean cosine vs Bessel ratio, in standard-error units"))

    rng = np.random.default_rng(2004)
    worst = 0.0
    for _ in range(100):
        n = int(rng.integers(2, 7))
        kappa_a = float(rng.uniform(0.0, 50.0))
        w = rng.standard_normal(n)
        w /= np.linalg.norm(w)
        params = VmfParams(mean_direction=w, concentration=kappa_a)
        mu = float(10.0 ** rng.uniform(-0.5, 0.7))
        delta = float(rng.uniform(0.5, 8.0))
        alpha = float(rng.uniform(0.1, 3.0))
        r = alpha + delta * float(rng.random())
        u = rng.standard_normal(n)
        u /= np.linalg.norm(u)
        z = r * u
        p = cartesian_to_polar(z)
        log_jac = polar_log_abs_det_jacobian(p, n)
        log_jac_sphere = polar_log_abs_det_jacobian(PolarPoint(radius=1.0, angles=p.angles), n)
        log_angular = float(vmf_log_density_many(u[None, :], params)[0]) + log_jac_sphere
        log_pt = -math.log(delta) + log_angular - log_jac
        log_ps = (-math.log(mu) - r / mu) + log_angular - log_jac
        lhs = math.exp(log_pt - log_ps)
        rhs = ratio_exact_strict(RatioInputs(radius=r, source_mean=mu, target_width=delta), alpha)
        worst = max(worst, abs(lhs - rhs) / rhs)
        # same joint density assembled without the polar chart
        log_pt_direct = -math.log(delta) + float(
            vmf_log_density_many(u[None, :], params)[0]
        ) - (n - 1) * math.log(r)
        worst = max(worst, abs(log_pt - log_pt_direct))
    out.append(_check("ratio.radial_identity.max_rel_err", worst, 1e-10, overrides,
                      "full-density ratio equals the radial conditional ratio, 100 points"))

    rng = np.random.default_rng(2005)
    worst = -np.inf
    for _ in range(10_000):
        inp = RatioInputs(
            radius=float(10.0 ** rng.uniform(-3, 1)),
            source_mean=float(10.0 ** rng.uniform(-1, 1)),
            target_width=float(10.0 ** rng.uniform(-1, 1)),
        )
        ex, lin = ratio_exact(inp), ratio_linear(inp)
        worst = max(worst, (lin - ex) / ex)
    out.append(_check("ratio.exact_dominates_linear", max(worst, 0.0), 1e-12, overrides,
                      "exp(x) >= 1 + x pointwise, 10^4 inputs"))

    rng = np.random.default_rng(2006)
    n_draws = 10_000
    from .distributions import NormLaws, sample_radii

    laws = NormLaws(source_means=(5.0,), target_lower=2.0, target_width=4.0)
    src = sample_radii(laws, n_draws, rng, domain=0)
    tgt = sample_radii(laws, n_draws, rng, domain=None)
    sigma_src = abs(src.mean() - 5.0) / (5.0 / math.sqrt(n_draws))
    sigma_tgt = abs(tgt.mean() - 4.0) / ((4.0 / math.sqrt(12.0)) / math.sqrt(n_draws))
    support_ok = 0.0 if (tgt.min() >= 2.0 and tgt.max() <= 6.0) else 1.0
    out.append(_check("distributions.radius_sampler.means", max(sigma_src, sigma_tgt), 3.0,
                      overrides, "empirical means in standard-error units; support respected"))
    out.append(_check("distributions.radius_sampler.support", support_ok, 0.0, overrides,
                      "target draws inside [alpha, alpha + delta]"))
    return out


# ---------------------------------------------------------------------------
# maxent
# ---------------------------------------------------------------------------

def random_maxent_instances(count: int, seed: int):
    """Instances drawn from the acceptance distribution: 2 <= C <= 10,
    0 < kappa <= 120, scores in [-1, 1], anchor a perturbed true-class score."""
    rng = np.random.default_rng(seed)
    instances = []
    for _ in range(count):
        c = int(rng.integers(2, 11))
        kappa = float(rng.uniform(0.01, 120.0))
        scores = rng.uniform(-1.0, 1.0, size=c)
        y = int(rng.integers(c))
        anchor = float(perturbed_cosine(scores[y], float(rng.uniform(0.0, 0.5))))
        scores[y] = anchor
        instances.append(MaxEntInstance(scores=scores, anchor=anchor, kappa=kappa))
    return instances


def solve_instances(instances, tol: float = 5e-8):
    """Group instances by class count and solve each group as one batch."""
    solutions = [None] * len(instances)
    by_c: dict[int, list[int]] = {}
    for i, inst in enumerate(instances):
        by_c.setdefault(inst.scores.size, []).append(i)
    for c, idx in by_c.items():
        scores = np.stack([instances[i].scores for i in idx])
        anchors = np.array([instances[i].anchor for i in idx])
        kappas = np.array([instances[i].kappa for i in idx])
        sols = solve_batch(scores, anchors, kappas, tol=tol)
        for row, i in enumerate(idx):
            solutions[i] = sols[row]
    return solutions


def suite_maxent(overrides: dict | None = None) -> list[CheckResult]:
    overrides = overrides or {}
    out = []
    instances = random_maxent_instances(1000, seed=3001)
    solutions = solve_instances(instances)

    worst_sup = 0.0
    for inst, sol in zip(instances, solutions):
        worst_sup = max(worst_sup, float(np.max(np.abs(sol - closed_form_distribution(inst)))))
    out.append(_check("maxent.solver_vs_closed_form.sup", worst_sup, 1e-6, overrides,
                      "projected-gradient ascent vs softmax, 1000 instances"))

    rng = np.random.default_rng(3002)
    worst_val = 0.0
    for _ in range(1000):
        c = int(rng.integers(2, 11))
        kappa = float(rng.uniform(0.01, 120.0))
        cosines = rng.uniform(-1.0, 1.0, size=c)
        y = int(rng.integers(c))
        radius = float(rng.uniform(0.05, 30.0))
        mu_d = float(rng.uniform(0.1, 30.0))
        hyper = AidgnHyper(kappa=kappa, gamma_delta=float(rng.uniform(0.0, 0.05)),
                           beta_rw=float(rng.uniform(0.0, 0.5)), eta=0.0, mu_star=1.0,
                           margin=float(rng.choice([0.0, 0.2])))
        loss = aidgn_sample_loss(cosines, y, radius, mu_d, hyper)
        a = perturbed_cosine(cosines, hyper.gamma_delta * hyper.margin)
        b = perturbed_cosine(cosines[y], hyper.gamma_delta * (radius + hyper.beta_rw * mu_d))
        a[y] = b
        inst = MaxEntInstance(scores=a, anchor=float(b), kappa=kappa)
        value = objective_value(closed_form_distribution(inst), inst)
        worst_val = max(worst_val, abs(value - loss))
    out.append(_check("maxent.value_identity.vs_loss", worst_val, 1e-9, overrides,
                      "max of the entropy-regularized program equals the sample loss"))

    rng = np.random.default_rng(3003)
    worst_gap = 0.0
    for inst, sol in zip(instances[:50], solutions[:50]):
        best = objective_value(sol, inst)
        for _ in range(100):
            p = project_simplex(rng.random(inst.scores.size))
            worst_gap = max(worst_gap, objective_value(p, inst) - best)
    out.append(_check("maxent.solver_maximality.spot", max(worst_gap, 0.0), 1e-9, overrides,
                      "solver value beats 100 random simplex points per instance"))
    return out


# ---------------------------------------------------------------------------
# gradients
# ---------------------------------------------------------------------------

def _flatten(arrays):
    return np.concatenate([a.ravel() for a in arrays])


def _grad_check_instance(rng: np.random.Generator) -> float:
    n_in = int(rng.integers(2, 5))
    n_hidden = int(rng.integers(3, 6))
    n_latent = int(rng.integers(2, 5))
    n_classes = int(rng.integers(2, 6))
    n_domains = int(rng.integers(1, 4))
    batch = int(rng.integers(n_domains, 9))

    hyper = AidgnHyper(
        kappa=float(rng.uniform(0.5, 20.0)),
        gamma_delta=float(rng.uniform(0.0, 0.05)),
        beta_rw=float(rng.uniform(0.0, 0.5)),
        eta=float(rng.uniform(0.0, 0.1)),
        mu_star=float(rng.uniform(0.5, 3.0)),
        margin=float(rng.choice([0.0, 0.1])),
    )
    labels = rng.integers(0, n_classes, size=batch)
    domains = np.concatenate([np.arange(n_domains), rng.integers(0, n_domains, batch - n_domains)])

    # central differences need two-sided smoothness: resample any draw that
    # lands within an FD step of the cosine clamps or of a vanishing latent
    while True:
        extractor = FeatureExtractor.random([n_in, n_hidden, n_latent], rng)
        head = ClassifierHead.random(n_classes, n_latent, rng)
        inputs = rng.standard_normal((batch, n_in)) * 2.0
        latents = forward_batch(inputs, extractor)
        radii = np.linalg.norm(latents, axis=1)
        if radii.min() < 0.05:
            continue
        cos = (latents / radii[:, None]) @ head.directions.T
        if np.max(np.abs(cos)) <= 1.0 - 1e-4:
            break

    shapes = [w.shape for w in extractor.weights] + [b.shape for b in extractor.biases]
    shapes.append(head.directions.shape)

    def rebuild(theta: np.ndarray):
        pos = 0
        ws, bs = [], []
        for w in extractor.weights:
            ws.append(theta[pos: pos + w.size].reshape(w.shape))
            pos += w.size
        for b in extractor.biases:
            bs.append(theta[pos: pos + b.size].reshape(b.shape))
            pos += b.size
        hd = theta[pos:].reshape(head.directions.shape)
        return FeatureExtractor(ws, bs, extractor.activation), hd

    theta0 = _flatten(extractor.weights + extractor.biases + [head.directions])

    latents0 = forward_batch(inputs, extractor)
    from .loss import batch_norm_means

    frozen_mu = batch_norm_means(zip(domains, latents0)).mu_d

    def objective(theta: np.ndarray) -> float:
        ext, hd = rebuild(theta)
        latents = forward_batch(inputs, ext)
        total, _ = batch_objective(domains, latents, labels, hd, hyper, perturb_mu=frozen_mu)
        return total

    # analytic gradient
    ext, hd = rebuild(theta0)
    latents, cache = forward_batch(inputs, ext, want_cache=True)
    _, _, d_head, d_latents = batch_objective(
        domains, latents, labels, hd, hyper, want_grads=True
    )
    d_ws, d_bs = backward_batch(d_latents, ext, cache)
    analytic = _flatten(d_ws + d_bs + [d_head])

    h = 1e-6
    fd = np.empty_like(theta0)
    for j in range(theta0.size):
        tp, tm = theta0.copy(), theta0.copy()
        tp[j] += h
        tm[j] -= h
        fd[j] = (objective(tp) - objective(tm)) / (2.0 * h)
    scale = max(np.max(np.abs(fd)), 1e-10)
    return float(np.max(np.abs(analytic - fd)) / scale)


def suite_gradients(overrides: dict | None = None) -> list[CheckResult]:
    overrides = overrides or {}
    out = []
    rng = np.random.default_rng(4001)
    worst = 0.0
    for _ in range(50):
        worst = max(worst, _grad_check_instance(rng))
    out.append(_check("gradients.finite_difference.max_rel_err", worst, 1e-5, overrides,
                      "full objective through head and extractor, 50 tiny instances"))

    rng = np.random.default_rng(4002)
    worst = 0.0
    for _ in range(50):
        n_latent = int(rng.integers(2, 6))
        n_classes = int(rng.integers(2, 6))
        z = rng.standard_normal(n_latent)
        z /= np.linalg.norm(z)
        head = ClassifierHead.random(n_classes, n_latent, rng)
        hyper = AidgnHyper(kappa=float(rng.uniform(0.5, 10.0)), gamma_delta=0.0, eta=0.0,
                           mu_star=1.0)
        y = int(rng.integers(n_classes))
        _, _, d_head, _ = batch_objective(
            np.array([0]), z[None, :], np.array([y]), head.directions, hyper, want_grads=True
        )
        cos = head.directions @ z
        p = np.exp(hyper.kappa * (cos - cos.max()))
        p /= p.sum()
        for c in range(n_classes):
            ref = hyper.kappa * p[c] * z if c != y else -hyper.kappa * (1.0 - p[y]) * z
            sim = np.dot(d_head[c], ref) / (np.linalg.norm(d_head[c]) * np.linalg.norm(ref))
            worst = max(worst, abs(sim - 1.0))
    out.append(_check("gradients.center_collinearity", worst, 1e-10, overrides,
                      "class-center gradients parallel kappa * p(c) * z on unit latents"))
    return out


def run_suites(names, overrides: dict | None = None) -> list[CheckResult]:
    runners = {
        "geometry": suite_geometry,
        "distributions": suite_distributions,
        "maxent": suite_maxent,
        "gradients": suite_gradients,
    }
    results = []
    for name in names:
        results.extend(runners[name](overrides))
    return results
