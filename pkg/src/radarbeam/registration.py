"""Scan-to-scan registration by robust point-to-line distance minimisation."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .geometry import RelativePose
from .radar_pipeline import OdometryConfig, SurfaceRepresentation
from .spatial import SpatialHashGrid


def huber(a, delta: float):
    """Huber loss: quadratic within ``delta``, linear outside."""
    if delta <= 0:
        raise ValueError("delta must be positive")
    a = np.abs(a)
    out = np.where(a <= delta, 0.5 * a * a, delta * (a - 0.5 * delta))
    return float(out) if out.ndim == 0 else out


def huber_derivative(a, delta: float):
    return np.clip(a, -delta, delta)


@dataclass
class RegistrationResult:
    estimated: RelativePose
    final_cost: float
    iterations: int
    correspondences_used: int
    converged: bool
    gradient_norm: float = math.inf
    failed: bool = False


def _rot(theta: float):
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]]), np.array([[-s, -c], [c, -s]])


def find_correspondences(
    cur: SurfaceRepresentation,
    prev: SurfaceRepresentation,
    guess: RelativePose,
    cfg: OdometryConfig,
    prev_grid: SpatialHashGrid | None = None,
) -> np.ndarray:
    """Match each current surface point to its nearest compatible predecessor.

    Current points and normals are mapped into the previous frame by
    ``guess``. A candidate must lie within ``d_D`` and its normal must be
    within ``theta_tol`` of the mapped normal; the closest such candidate is
    taken (lower index on exact ties).

    Returns an (n, 2) integer array of ``(src_index, dst_index)`` rows,
    ``src`` indexing ``cur`` and ``dst`` indexing ``prev``.
    """
    if len(cur) == 0 or len(prev) == 0:
        return np.empty((0, 2), dtype=np.int64)
    R, _ = _rot(guess.dtheta)
    mu = cur.mu @ R.T + guess.dr
    nrm = cur.normals @ R.T
    grid = prev_grid if prev_grid is not None else SpatialHashGrid(prev.mu, cfg.d_D)
    qi, pj, d = grid.pairs_within(mu, cfg.d_D)
    cos_tol = math.cos(cfg.theta_tol)
    dots = np.einsum("ij,ij->i", nrm[qi], prev.normals[pj])
    keep = dots >= cos_tol - 1e-12
    qi, pj, d = qi[keep], pj[keep], d[keep]
    if len(qi) == 0:
        return np.empty((0, 2), dtype=np.int64)
    order = np.lexsort((pj, d, qi))
    qi, pj = qi[order], pj[order]
    first = np.ones(len(qi), dtype=bool)
    first[1:] = qi[1:] != qi[:-1]
    return np.stack([qi[first], pj[first]], axis=1).astype(np.int64)


def _residuals(x, pairs, cur, prev):
    R, dR = _rot(x[2])
    mu_i = cur.mu[pairs[:, 0]]
    mu_j = prev.mu[pairs[:, 1]]
    n_j = prev.normals[pairs[:, 1]]
    r = np.einsum("ij,ij->i", n_j, mu_i @ R.T + x[:2] - mu_j)
    dr_dtheta = np.einsum("ij,ij->i", n_j, mu_i @ dR.T)
    return r, n_j, dr_dtheta


def p2l_cost_and_grad(x, pairs, cur, prev, delta: float):
    """Cost and analytic gradient w.r.t. ``(dx, dy, dtheta)``."""
    if len(pairs) == 0:
        return math.inf, np.zeros(3)
    r, n_j, dr_dtheta = _residuals(x, pairs, cur, prev)
    w = huber_derivative(r, delta)
    grad = np.array([w @ n_j[:, 0], w @ n_j[:, 1], w @ dr_dtheta])
    return float(np.sum(huber(r, delta))), grad


def p2l_cost(
    delta_pose: RelativePose,
    pairs: np.ndarray,
    cur: SurfaceRepresentation,
    prev: SurfaceRepresentation,
    cfg: OdometryConfig,
) -> float:
    """Sum of Huber-robustified point-to-line residuals; ``inf`` with no pairs."""
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    if len(pairs) == 0:
        return math.inf
    return p2l_cost_and_grad(delta_pose.as_vector(), pairs, cur, prev, cfg.huber_delta)[0]


def register(
    prev: SurfaceRepresentation,
    cur: SurfaceRepresentation,
    motion_prior: RelativePose,
    cfg: OdometryConfig,
) -> RegistrationResult:
    """Estimate the motion ``delta`` with ``T_cur = T_prev * delta``.

    Alternates correspondence search at the current iterate with a BFGS
    solve on the fixed association, until the pose moves less than
    ``cfg.pose_tol`` or ``cfg.max_outer_iterations`` is reached. If too few
    correspondences exist the prior is returned with ``failed`` set.
    """
    prior = motion_prior.as_vector()
    if len(prev) == 0 or len(cur) == 0:
        return RegistrationResult(motion_prior, math.inf, 0, 0, False, failed=True)

    grid = SpatialHashGrid(prev.mu, cfg.d_D)
    delta = cfg.huber_delta
    x = prior.copy()
    pairs = find_correspondences(cur, prev, motion_prior, cfg, grid)
    if len(pairs) < cfg.min_correspondences:
        return RegistrationResult(motion_prior, math.inf, 0, len(pairs), False, failed=True)

    stopped = False
    it = 0
    for it in range(1, cfg.max_outer_iterations + 1):
        if it > 1:
            pairs = find_correspondences(cur, prev, RelativePose.from_vector(x), cfg, grid)
            if len(pairs) < cfg.min_correspondences:
                break
        res = minimize(
            p2l_cost_and_grad,
            x,
            args=(pairs, cur, prev, delta),
            jac=True,
            method="BFGS",
            options={"gtol": cfg.grad_tol * 1e-2, "maxiter": 200},
        )
        step = res.x - x
        x = res.x
        if np.hypot(step[0], step[1]) < cfg.pose_tol and abs(step[2]) < cfg.pose_tol:
            stopped = True
            break

    pairs = find_correspondences(cur, prev, RelativePose.from_vector(x), cfg, grid)
    if len(pairs) < cfg.min_correspondences:
        return RegistrationResult(motion_prior, math.inf, it, len(pairs), False, failed=True)
    cost, grad = p2l_cost_and_grad(x, pairs, cur, prev, delta)
    prior_cost, _ = p2l_cost_and_grad(prior, pairs, cur, prev, delta)
    if prior_cost < cost:
        # never hand back something worse than the starting guess
        x, cost = prior, prior_cost
        grad = p2l_cost_and_grad(x, pairs, cur, prev, delta)[1]
        stopped = False
    gnorm = float(np.linalg.norm(grad))
    return RegistrationResult(
        estimated=RelativePose.from_vector(x),
        final_cost=cost,
        iterations=it,
        correspondences_used=len(pairs),
        converged=stopped and gnorm <= cfg.grad_tol,
        gradient_norm=gnorm,
    )
