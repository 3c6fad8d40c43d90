"""Finite-difference audit of the exact derivatives.

Production code never uses finite differences; this module only checks that
the derivatives supplied by :mod:`energy` agree with central differences.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np


@dataclass(frozen=True)
class DifferentiableMap:
    """``eval: R^n -> R^m`` with its Jacobian ``R^n -> R^(m x n)``."""

    eval: Callable[[np.ndarray], np.ndarray]
    jacobian: Callable[[np.ndarray], np.ndarray]
    name: str = "map"

    def __call__(self, x):
        return self.eval(x)


@dataclass(frozen=True)
class GradientReport:
    name: str
    max_error: float
    worst_entry: tuple[int, int]
    analytic: float
    finite_difference: float

    def passed(self, tol: float = 1e-6) -> bool:
        return self.max_error <= tol


class EvaluationFailure(RuntimeError):
    pass


def _as_2d(value, n):
    arr = np.atleast_1d(np.asarray(value, dtype=float))
    return arr.reshape(-1, n) if arr.size else arr.reshape(0, n)


def fd_jacobian(f: Callable, x: np.ndarray, h: float = 1e-6) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    cols = []
    for k in range(x.size):
        e = np.zeros_like(x)
        e[k] = h
        try:
            hi = np.atleast_1d(np.asarray(f(x + e), dtype=float))
            lo = np.atleast_1d(np.asarray(f(x - e), dtype=float))
        except Exception as exc:  # noqa: BLE001 - surfaced with the probe index
            raise EvaluationFailure(f"evaluation failed at probe {k}: {exc}") from exc
        cols.append((hi - lo) / (2 * h))
    return np.stack(cols, axis=-1) if cols else np.zeros((0, 0))


def check_gradient(fmap: DifferentiableMap, point, h: float = 1e-6) -> GradientReport:
    """Compare the analytic Jacobian with central differences.

    Error per entry is ``|J - J_fd| / (1 + |J_fd|)``.
    """
    x = np.atleast_1d(np.asarray(point, dtype=float))
    n = x.size
    jac = _as_2d(fmap.jacobian(x), n)
    fd = _as_2d(fd_jacobian(fmap.eval, x, h), n)
    if jac.shape != fd.shape:
        raise ValueError(f"jacobian shape {jac.shape} does not match map output {fd.shape}")
    if jac.size == 0:
        return GradientReport(fmap.name, 0.0, (0, 0), 0.0, 0.0)
    err = np.abs(jac - fd) / (1.0 + np.abs(fd))
    worst = np.unravel_index(int(np.argmax(err)), err.shape)
    return GradientReport(fmap.name, float(err[worst]), (int(worst[0]), int(worst[1])), float(jac[worst]), float(fd[worst]))


def system_maps(system, tau=None, seed: int = 0, second_order: bool = False) -> list[DifferentiableMap]:
    """Residual and energy maps at fixed ``tau``; with ``second_order`` also
    the energy gradient and the Lagrangian gradient.

    The Lagrangian gradient ``grad Q + Dg^T lam`` uses a fixed random
    multiplier vector, so its Jacobian exercises the constraint Hessians.
    """
    lam = np.random.default_rng(seed).standard_normal(system.m)

    def lag_grad(x):
        return system.energy_gradient(x, tau) + system.jacobian(x, tau).T @ lam

    def lag_hess(x):
        return system.energy_hessian(x, tau) + system.constraint_hessian(x, lam, tau)

    maps = [
        DifferentiableMap(lambda x: system.residual(x, tau), lambda x: system.jacobian(x, tau), "residual"),
        DifferentiableMap(lambda x: system.energy(x, tau), lambda x: system.energy_gradient(x, tau), "energy"),
    ]
    if second_order:
        maps += [
            DifferentiableMap(
                lambda x: system.energy_gradient(x, tau), lambda x: system.energy_hessian(x, tau), "energy_gradient"
            ),
            DifferentiableMap(lag_grad, lag_hess, "lagrangian"),
        ]
    return maps


def _near_kink(system, x, tau, margin) -> bool:
    kinks = getattr(system, "cable_slack", None)
    if kinks is None:
        return False
    return bool(np.any(np.abs(kinks(x, tau)) < margin))


def audit_system(
    system, samples: int = 100, scale: float = 1e-2, h: float = 1e-6, seed: int = 0, tau=None, second_order: bool = False
):
    """Check every map of ``system`` at random points near its initial state.

    Points too close to a cable kink are redrawn.  Returns a list of
    :class:`GradientReport`, one per map, each the worst over all samples.
    """
    rng = np.random.default_rng(seed)
    x0 = np.asarray(system.x0, dtype=float)
    maps = system_maps(system, tau, seed, second_order)
    worst: dict[str, GradientReport] = {}
    drawn = 0
    attempts = 0
    while drawn < samples:
        attempts += 1
        if attempts > 50 * samples:
            raise EvaluationFailure("could not draw audit points away from cable kinks")
        x = x0 + scale * rng.standard_normal(x0.shape)
        if _near_kink(system, x, tau, 10 * h):
            continue
        drawn += 1
        for fmap in maps:
            rep = check_gradient(fmap, x, h)
            if fmap.name not in worst or rep.max_error > worst[fmap.name].max_error:
                worst[fmap.name] = rep
    return list(worst.values())
