"""Entropy-regularized linear maximization on the probability simplex.

The program  max_P  kappa * sum_c P_c (a_c - b) + H(P)  over the simplex
has a softmax closed form; `solve_numeric` reaches the same optimum by
projected gradient ascent (Euclidean projection) with Nesterov momentum
and a working-set strategy, staying independent of the closed form it is
used to verify: the iterate only ever moves by additive gradient steps
and projections.

Stationarity gives per-coordinate equilibrium estimates
q_c = P_c * exp(g_c - lambda), with lambda the multiplier estimated from
the iterate. These drive three mechanisms:

- the KKT residual max_c |min(q_c, 1) - P_c|, first-order optimality on
  the probability scale the tolerance refers to;
- a curvature-matched step: near-equilibrium coordinates bound it by
  their current value (the entropy Hessian is -1/P), coordinates rising
  from far below bound it so one step overshoots q_c by at most a factor
  of e, and falling coordinates clip at zero on their own;
- a stateless working set: coordinates already within a quarter of the
  tolerance that are small relative to the row maximum are held at their
  current value for the step (recomputed every iteration), so the step
  size can cascade up through the scales instead of being capped forever
  by the smallest converged coordinate. Zero coordinates whose
  equilibrium sits below half the tolerance are likewise held on the
  face; they satisfy the one-sided KKT condition to within tolerance.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NotConverged, NotSimplex

_P_FLOOR = 1e-15       # entropy floor for objective values (0 log 0 = 0)
_SNAP = 1e-9           # iterate coordinates below this collapse to zero
_GAP_CLIP = 40.0
_BAND = 1.5


@dataclass(frozen=True)
class MaxEntInstance:
    """Per-class scores, the anchor (perturbed true-class score), and kappa."""

    scores: np.ndarray
    anchor: float
    kappa: float

    def __post_init__(self):
        scores = np.asarray(self.scores, dtype=float)
        object.__setattr__(self, "scores", scores)
        if scores.size < 2:
            raise ValueError("need at least two classes")
        if not (np.all(np.isfinite(scores)) and np.isfinite(self.anchor)):
            raise ValueError("scores and anchor must be finite")
        if not self.kappa > 0:
            raise ValueError("kappa must be > 0")


def closed_form_distribution(inst: MaxEntInstance) -> np.ndarray:
    """softmax(kappa * (a - b)), computed with max subtraction."""
    s = inst.kappa * (inst.scores - inst.anchor)
    s -= s.max()
    e = np.exp(s)
    return e / e.sum()


def objective_value(p, inst: MaxEntInstance) -> float:
    """kappa * sum P_c (a_c - b) + Shannon entropy, with 0 log 0 = 0."""
    p = np.asarray(p, dtype=float)
    if p.shape != inst.scores.shape:
        raise NotSimplex("distribution and scores must have matching length")
    if np.any(p < -1e-9) or abs(p.sum() - 1.0) > 1e-9:
        raise NotSimplex("vector is not on the simplex (tol 1e-9)")
    entropy = -np.sum(np.where(p > 0.0, p * np.log(np.maximum(p, _P_FLOOR)), 0.0))
    return float(inst.kappa * np.dot(p, inst.scores - inst.anchor) + entropy)


def _project_mass(v: np.ndarray, z: np.ndarray) -> np.ndarray:
    """Euclidean projection of rows onto the simplex scaled to mass z."""
    n = v.shape[1]
    u = np.sort(v, axis=1)[:, ::-1]
    css = np.cumsum(u, axis=1) - z[:, None]
    idx = np.arange(1, n + 1)
    rho = np.count_nonzero(u - css / idx > 0, axis=1)
    theta = css[np.arange(v.shape[0]), rho - 1] / rho
    return np.maximum(v - theta[:, None], 0.0)


def project_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection of the rows of v onto the unit simplex."""
    squeeze = v.ndim == 1
    if squeeze:
        v = v[None, :]
    out = _project_mass(v, np.ones(v.shape[0]))
    return out[0] if squeeze else out


def _equilibria(p: np.ndarray, ka: np.ndarray):
    """Gradient, multiplier gap, and per-coordinate equilibrium estimates."""
    p_eff = np.maximum(p, _SNAP)
    g = ka - np.log(p_eff) - 1.0
    lam = np.sum(p * g, axis=1) / np.sum(p, axis=1)
    gap = np.clip(g - lam[:, None], -_GAP_CLIP, _GAP_CLIP)
    q = p_eff * np.exp(gap)
    return g, gap, q


def _step_size(p: np.ndarray, gap: np.ndarray, q: np.ndarray, held: np.ndarray) -> np.ndarray:
    in_band = (np.abs(gap) <= _BAND) & (p > 0.0) & ~held
    stab = np.where(in_band, np.maximum(p, _SNAP), np.inf)
    rising = (gap > _BAND) & ~held
    rise = np.where(rising, np.maximum(q - p, 0.0) / np.where(rising, gap, 1.0), np.inf)
    s = np.minimum(stab.min(axis=1), rise.min(axis=1))
    return 0.9 * np.clip(s, _SNAP, 1.0)


def _masked_ascent(base: np.ndarray, move: np.ndarray, held: np.ndarray, p_held: np.ndarray):
    """Project base + move onto the simplex slice with held coordinates fixed.

    The move is halved until the projected displacement stays within an l1
    trust region of the free mass, which stops near-tied coordinates from
    ejecting each other through the projection.
    """
    z = 1.0 - np.sum(np.where(held, p_held, 0.0), axis=1)
    move = np.where(held, 0.0, move)
    scale = np.ones(move.shape[0])
    out = base
    for _ in range(30):
        out = _project_mass(np.where(held, -1e30, base + scale[:, None] * move), z)
        shift = np.abs(np.where(held, 0.0, out - base)).sum(axis=1)
        too_far = shift > np.maximum(0.3 * z, 1e-12)
        if not too_far.any():
            break
        scale = np.where(too_far, 0.5 * scale, scale)
    out[out < _SNAP] = 0.0
    mass = out.sum(axis=1)
    out *= (z / np.maximum(mass, 1e-300))[:, None]
    return np.where(held, p_held, out)


def solve_batch(
    scores: np.ndarray,
    anchors: np.ndarray,
    kappas: np.ndarray,
    tol: float = 5e-8,
    max_iter: int = 100_000,
) -> np.ndarray:
    """Solve a stack of instances sharing one class count; rows are instances."""
    if tol <= 0:
        raise ValueError("tol must be > 0")
    scores = np.asarray(scores, dtype=float)
    m, n = scores.shape
    ka = np.asarray(kappas, dtype=float)[:, None] * (
        scores - np.asarray(anchors, dtype=float)[:, None]
    )

    out = np.full((m, n), 1.0 / n)
    rows = np.arange(m)  # output row of each active instance
    p = out.copy()
    p_prev = p.copy()
    theta = np.ones(m)
    best_res = np.full(m, np.inf)

    for _ in range(max_iter):
        g, gap, q = _equilibria(p, ka)
        coord_res = np.abs(np.minimum(q, 1.0) - p)
        residual = coord_res.max(axis=1)
        finished = residual <= tol
        if finished.any():
            out[rows[finished]] = p[finished]
            keep = ~finished
            if not keep.any():
                return out
            rows, p, p_prev = rows[keep], p[keep], p_prev[keep]
            theta, best_res, ka = theta[keep], best_res[keep], ka[keep]
            g, gap, q, coord_res = g[keep], gap[keep], q[keep], coord_res[keep]
            residual = residual[keep]
        # momentum restart when the residual regresses well past its best
        regressed = residual > 2.0 * best_res
        theta = np.where(regressed, 1.0, theta)
        best_res = np.minimum(best_res, residual)

        # greedy working set: pin small coordinates at their current value,
        # cheapest first, while the pins' combined error stays within a
        # fraction of the tolerance; at least two coordinates remain free
        eligible = p <= 0.05 * p.max(axis=1, keepdims=True)
        cost = np.where(eligible, coord_res, np.inf)
        order = np.argsort(cost, axis=1)
        within = np.cumsum(np.take_along_axis(cost, order, axis=1), axis=1) <= 0.4 * tol
        held = np.zeros_like(eligible)
        np.put_along_axis(held, order, within, axis=1)
        held &= eligible
        crowded = (~held).sum(axis=1) < 2
        if crowded.any():
            worst_held = np.where(held, coord_res, -1.0).argmax(axis=1)
            held[crowded, worst_held[crowded]] = False
        step = _step_size(p, gap, q, held)

        th_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * theta * theta))
        omega = (theta - 1.0) / th_next
        # fraction-to-boundary: extrapolation may at most halve a coordinate,
        # keeping the momentum point away from the entropy singularity
        d = p - p_prev
        shrink = np.where((d < 0.0) & (p >= _SNAP), -d, 0.0)
        with np.errstate(divide="ignore", invalid="ignore"):
            frac = np.where(shrink > 0.0, 0.5 * p / shrink, np.inf)
        omega = np.minimum(omega, frac.min(axis=1))
        y = _masked_ascent(p, omega[:, None] * d, held, p)
        gy, _, _ = _equilibria(y, ka)
        p_next = _masked_ascent(y, step[:, None] * gy, held, p)

        # momentum restart: the extrapolated gradient opposes the move
        restart = np.sum(gy * (p_next - p), axis=1) < 0.0
        theta = np.where(restart, 1.0, th_next)
        if restart.any():
            plain = _masked_ascent(p, step[:, None] * g, held, p)
            p_next = np.where(restart[:, None], plain, p_next)

        p_prev = p
        p = p_next

    raise NotConverged(f"simplex ascent exceeded {max_iter} iterations")


def solve_numeric(inst: MaxEntInstance, tol: float = 5e-8, max_iter: int = 100_000) -> np.ndarray:
    """Projected-gradient solution of one instance to KKT residual <= tol."""
    return solve_batch(
        inst.scores[None, :],
        np.array([inst.anchor]),
        np.array([inst.kappa]),
        tol=tol,
        max_iter=max_iter,
    )[0]
