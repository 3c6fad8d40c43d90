"""Steepest descent on a constraint variety with the Euclidean-distance retraction.

The retraction maps ``x + v`` to its closest point on ``{g = 0}`` by tracking
the critical points of ``|y - (x + t v)|^2`` subject to ``g(y) = 0`` from the
trivial solution ``(y, mu) = (x, 0)`` at ``t = 0`` to ``t = 1``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .homotopy import Homotopy, TrackerSettings, TrackingError, track

log = logging.getLogger(__name__)


class SingularVariety(ValueError):
    """The constraint Jacobian lost rank."""


class MaxIters(RuntimeError):
    def __init__(self, message: str, x: np.ndarray):
        super().__init__(message)
        self.x = x


class DescentFailure(RuntimeError):
    def __init__(self, message: str, x: np.ndarray):
        super().__init__(message)
        self.x = x


@dataclass(frozen=True)
class DescentSettings:
    armijo_factor: float = 1e-4
    backtrack_ratio: float = 0.5
    initial_step: float = 1.0
    grad_tol: float = 1e-8
    max_iters: int = 5000
    retraction_steps: int = 2
    feasibility_tol: float = 1e-10
    min_step: float = 1e-14

    def __post_init__(self):
        if not 0 < self.armijo_factor < 1:
            raise ValueError("armijo_factor must lie in (0, 1)")
        if not 0 < self.backtrack_ratio < 1:
            raise ValueError("backtrack_ratio must lie in (0, 1)")
        if not (self.initial_step > 0 and self.grad_tol > 0 and self.max_iters > 0 and self.retraction_steps > 0):
            raise ValueError("descent settings must be positive")


def tangent_project(jacobian, v, rank_tol: float = 1e-12) -> np.ndarray:
    """Orthogonal projection of ``v`` onto ``ker Dg``."""
    v = np.asarray(v, dtype=float)
    jac = np.atleast_2d(np.asarray(jacobian, dtype=float))
    if jac.size == 0:
        return v.copy()
    q, r = np.linalg.qr(jac.T)
    diag = np.abs(np.diag(r))
    if diag.size < jac.shape[0] or diag.min() <= rank_tol * max(diag.max(), 1.0):
        raise SingularVariety("constraint Jacobian is rank deficient")
    return v - q @ (q.T @ v)


def project_to_variety(system, x, tau=None, tol: float = 1e-12, max_iters: int = 50) -> np.ndarray:
    """Gauss-Newton with minimum-norm steps onto ``{g(., tau) = 0}``.

    Steps are halved until the residual norm decreases (at most ten times).
    """
    x = np.array(x, dtype=float)
    for _ in range(max_iters):
        g = system.residual(x, tau)
        gnorm = np.linalg.norm(g)
        if gnorm <= tol:
            return x
        jac = system.jacobian(x, tau)
        if not (np.all(np.isfinite(g)) and np.all(np.isfinite(jac))):
            raise DescentFailure("non-finite residual or Jacobian during projection", x)
        step, *_ = np.linalg.lstsq(jac, -g, rcond=None)
        for _ in range(10):
            trial = x + step
            gt = system.residual(trial, tau)
            if np.all(np.isfinite(gt)) and np.linalg.norm(gt) < gnorm:
                break
            step = 0.5 * step
        x = trial
    g = np.linalg.norm(system.residual(x, tau))
    if g <= 100 * tol:
        return x
    raise DescentFailure(f"projection onto the variety stalled at |g| = {g:.3e}", x)


def closest_point_homotopy(system, x, v, tau=None) -> Homotopy:
    """``F(y, mu; t) = (y - x - t v + Dg(y)^T mu, g(y))``."""
    n = system.n
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)

    def H(z, t):
        y, mu = z[:n], z[n:]
        jac = system.jacobian(y, tau)
        return np.concatenate([y - x - t * v + jac.T @ mu, system.residual(y, tau)])

    def Hx(z, t):
        y, mu = z[:n], z[n:]
        jac = system.jacobian(y, tau)
        top = np.eye(n) + (system.constraint_hessian(y, mu, tau) if system.m else 0.0)
        return np.block([[top, jac.T], [jac, np.zeros((system.m, system.m))]])

    def Ht(z, t):
        return np.concatenate([-v, np.zeros(system.m)])

    return Homotopy(H, Hx, Ht)


def ed_retract(system, x, step, tau=None, steps: int = 2, settings: TrackerSettings | None = None) -> np.ndarray:
    """Closest point on the variety to ``x + step``, reached by homotopy."""
    x = np.asarray(x, dtype=float)
    step = np.asarray(step, dtype=float)
    if not np.any(step):
        return x.copy()
    if system.m == 0:
        return x + step
    h = closest_point_homotopy(system, x, step, tau)
    z0 = np.concatenate([x, np.zeros(system.m)])
    path = track(h, z0, np.linspace(0.0, 1.0, steps + 1), settings)
    return path[-1][: system.n]


@dataclass
class DescentResult:
    x: np.ndarray
    energy: float
    grad_norm: float
    iterations: int
    energies: list[float] = field(default_factory=list)
    steps: list[float] = field(default_factory=list)
    max_residual: float = 0.0


def projected_gradient(system, x, tau=None) -> np.ndarray:
    return tangent_project(system.jacobian(x, tau), system.energy_gradient(x, tau))


def minimize(system, x0, tau=None, settings: DescentSettings | None = None, tracker: TrackerSettings | None = None) -> DescentResult:
    """Riemannian steepest descent with Armijo backtracking.

    Trial steps whose retraction fails to track are treated as rejected and
    the step is shortened.  Each line search starts from the
    Barzilai-Borwein step (projected gradients differenced between iterates),
    capped by ``initial_step``; without curvature information the last
    accepted step is doubled instead.
    """
    s = settings or DescentSettings()
    x = np.array(x0, dtype=float)
    if np.linalg.norm(system.residual(x, tau)) > s.feasibility_tol:
        x = project_to_variety(system, x, tau)
    q = system.energy(x, tau)
    result = DescentResult(x, q, np.inf, 0, [q])
    alpha_prev = s.initial_step
    x_prev = pg_prev = None
    for k in range(s.max_iters):
        pg = projected_gradient(system, x, tau)
        gnorm = float(np.linalg.norm(pg))
        result.grad_norm = gnorm
        if gnorm <= s.grad_tol:
            result.iterations = k + 1
            break
        alpha = min(s.initial_step, 2.0 * alpha_prev)
        if x_prev is not None:
            ds, dy = x - x_prev, pg - pg_prev
            curv = float(ds @ dy)
            if curv > 0:
                alpha = min(s.initial_step, float(ds @ ds) / curv)
        # roundoff allowance so the Armijo test stays decidable near convergence
        slack = 1e-14 * (1.0 + abs(q))
        while True:
            if alpha < s.min_step:
                raise DescentFailure(f"line search failed at iteration {k} (|grad| = {gnorm:.3e})", x)
            try:
                trial = ed_retract(system, x, -alpha * pg, tau, s.retraction_steps, tracker)
                q_trial = system.energy(trial, tau)
            except TrackingError as exc:
                log.debug("retraction failed for alpha=%g: %s", alpha, exc)
                alpha *= s.backtrack_ratio
                continue
            if q_trial <= q - s.armijo_factor * alpha * gnorm**2 + slack:
                break
            alpha *= s.backtrack_ratio
        x_prev, pg_prev = x, pg
        x, q, alpha_prev = trial, q_trial, alpha
        result.energies.append(q)
        result.steps.append(alpha)
        result.max_residual = max(result.max_residual, float(np.linalg.norm(system.residual(x, tau))))
        log.debug("iter %d: Q=%.12g |grad|=%.3e alpha=%.3e", k, q, gnorm, alpha)
    else:
        raise MaxIters(f"no convergence in {s.max_iters} iterations (|grad| = {result.grad_norm:.3e})", x)
    result.x, result.energy = x, q
    return result
