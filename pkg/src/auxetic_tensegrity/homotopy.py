"""Predictor-corrector path tracking for square parametrized systems.

Follows a solution ``x(t)`` of ``H(x, t) = 0`` across a grid of ``t`` values:
an Euler predictor along ``dx/dt = -H_x^{-1} H_t`` and a Newton corrector at
the next grid point.  A failed corrector bisects the step.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

log = logging.getLogger(__name__)


class TrackingError(RuntimeError):
    """Raised when the tracked path leaves the smooth regime."""

    def __init__(self, message: str, t: float):
        super().__init__(f"{message} (t = {t:.12g})")
        self.t = float(t)


class SingularJacobian(TrackingError):
    pass


class NoConvergence(TrackingError):
    pass


@dataclass(frozen=True)
class Homotopy:
    H: Callable[[np.ndarray, float], np.ndarray]
    Hx: Callable[[np.ndarray, float], np.ndarray]
    Ht: Callable[[np.ndarray, float], np.ndarray]


@dataclass(frozen=True)
class TrackerSettings:
    newton_tol: float = 1e-10
    max_newton_iters: int = 20
    max_subdivisions: int = 12
    condition_limit: float = 1e12

    def __post_init__(self):
        if not (self.newton_tol > 0 and self.max_newton_iters > 0 and self.max_subdivisions >= 0 and self.condition_limit > 0):
            raise ValueError("tracker settings must be positive")


@dataclass
class TrackStats:
    newton_iterations: list[int] = field(default_factory=list)
    subdivisions: int = 0


def _solve(a: np.ndarray, b: np.ndarray, t: float, settings: TrackerSettings) -> np.ndarray:
    cond = np.linalg.cond(a)
    if not np.isfinite(cond) or cond > settings.condition_limit:
        raise SingularJacobian(f"Jacobian condition number {cond:.3e} exceeds {settings.condition_limit:.1e}", t)
    return np.linalg.solve(a, b)


def newton(h: Homotopy, x: np.ndarray, t: float, settings: TrackerSettings) -> tuple[np.ndarray, int]:
    """Newton's method on ``H(., t)``; returns the corrected point and iteration count."""
    x = np.array(x, dtype=float)
    res = np.linalg.norm(h.H(x, t))
    growth = 0
    for it in range(settings.max_newton_iters + 1):
        if res <= settings.newton_tol:
            return x, it
        if it == settings.max_newton_iters:
            break
        dx = np.linalg.solve(h.Hx(x, t), -np.asarray(h.H(x, t)))
        x = x + dx
        new = np.linalg.norm(h.H(x, t))
        if not np.isfinite(new):
            raise NoConvergence("Newton iterate is not finite", t)
        growth = growth + 1 if new > res else 0
        res = new
        if growth >= 3:
            raise NoConvergence("Newton residual grew for 3 consecutive iterations", t)
    raise NoConvergence(f"Newton did not reach {settings.newton_tol:.1e} in {settings.max_newton_iters} iterations (residual {res:.3e})", t)


def _step(h, w, ta, tb, settings, depth, stats):
    try:
        dx = _solve(np.atleast_2d(h.Hx(w, ta)), -np.atleast_1d(h.Ht(w, ta)) * (tb - ta), ta, settings)
        x, its = newton(h, w + dx, tb, settings)
        stats.newton_iterations.append(its)
        return x
    except np.linalg.LinAlgError as exc:
        err: TrackingError = SingularJacobian(str(exc), tb)
    except NoConvergence as exc:
        err = exc
    if depth >= settings.max_subdivisions:
        raise NoConvergence(f"subdivision budget exhausted: {err}", err.t)
    stats.subdivisions += 1
    mid = 0.5 * (ta + tb)
    log.debug("bisecting [%g, %g] at depth %d", ta, tb, depth + 1)
    w_mid = _step(h, w, ta, mid, settings, depth + 1, stats)
    return _step(h, w_mid, mid, tb, settings, depth + 1, stats)


def track(
    h: Homotopy,
    x0,
    grid: Sequence[float],
    settings: TrackerSettings | None = None,
    *,
    callback: Callable[[int, float, np.ndarray], None] | None = None,
    stats: TrackStats | None = None,
) -> list[np.ndarray]:
    """Track the solution ``x0`` of ``H(., grid[0]) = 0`` across ``grid``.

    Returns one solution per grid point (the first is ``x0`` itself).
    ``callback(j, t_j, w_j)`` is invoked as each point is accepted.
    """
    settings = settings or TrackerSettings()
    stats = stats if stats is not None else TrackStats()
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size < 1:
        raise ValueError("grid must be a non-empty 1-d sequence")
    steps = np.diff(grid)
    if steps.size and not (np.all(steps > 0) or np.all(steps < 0)):
        raise ValueError("grid must be strictly monotone")
    w = np.atleast_1d(np.array(x0, dtype=float))
    res0 = np.linalg.norm(h.H(w, grid[0]))
    if res0 > settings.newton_tol:
        raise ValueError(f"start point is not a solution: |H(x0, t0)| = {res0:.3e}")
    out = [w.copy()]
    if callback:
        callback(0, float(grid[0]), w)
    for j in range(1, grid.size):
        w = _step(h, w, grid[j - 1], grid[j], settings, 0, stats)
        out.append(w.copy())
        if callback:
            callback(j, float(grid[j]), w)
    return out
