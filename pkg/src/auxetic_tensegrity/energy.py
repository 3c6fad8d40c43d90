"""Cable energy, bar constraints and the tetrahedral contact constraints.

Everything that enters a derivative is written against ``jax.numpy`` so the
Jacobians and Hessians used by the solvers are exact.  Public scalar helpers
accept plain numpy input and return floats.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import jax
import jax.numpy as jnp
import numpy as np

from .framework import AXES, Bar, Cable, ControlSplit, Framework, Lattice, Placement, parameter_names

jax.config.update("jax_enable_x64", True)

DEGENERACY_TOL = 1e-10
INCOMING_REST, INCOMING_STIFFNESS = 0.1, 1.0
INTERNAL_STIFFNESS = 30.0

VertexRef = tuple  # (orbit index, lift tuple)


class DegenerateConfiguration(ValueError):
    """A cable or variable bar of a contact tetrahedron has (near) zero length."""


class AssemblyError(ValueError):
    pass


# --------------------------------------------------------------------------
# elementary terms


def bar_residual(pi, pj, length: float) -> float:
    """Squared-distance bar residual ``|pi - pj|^2 - length^2``."""
    d = np.asarray(pi, dtype=float) - np.asarray(pj, dtype=float)
    return float(d @ d - length**2)


def _cable_terms(dist, rest, stiffness):
    stretch = dist - rest
    # taut branch at stretch == 0 so the Hessian is deterministic on the kink
    return jnp.where(stretch >= 0, 0.5 * stiffness * stretch**2, 0.0)


def cable_energy(pi, pj, rest_length: float, stiffness: float) -> float:
    """One-sided Hookean energy ``c/2 * max(0, |pi - pj| - rest)^2``."""
    if not stiffness > 0:
        raise ValueError("cable stiffness must be positive")
    dist = float(np.linalg.norm(np.asarray(pi, dtype=float) - np.asarray(pj, dtype=float)))
    return float(_cable_terms(dist, rest_length, stiffness))


def _dot(a, b):
    return jnp.sum(a * b, axis=-1)


def _norm(a):
    return jnp.sqrt(_dot(a, a))


def tetra_rows(pts, radius):
    """Nine contact residuals for each tetrahedron.

    ``pts`` has shape ``(K, 2, 4, 3)``: for each contact, two filaments with
    the ordered points (incoming end, side start, side end, outgoing end).
    Rows: center bar, orthogonality x2, orientation x2, coplanarity x2,
    variable bar length x2.  Cable vectors point into the tetrahedron.  The
    variable bar uses the bend angle between the filament directions
    ``c_in`` and ``-c_out``, so a straight filament closes the side
    (``d = 0``) and wrapping opens it up to ``d = 2r``.
    """
    radius = jnp.asarray(radius)
    mid = 0.5 * (pts[:, :, 1] + pts[:, :, 2])
    m = mid[:, 0] - mid[:, 1]
    side = pts[:, :, 1] - pts[:, :, 2]
    c_in = pts[:, :, 1] - pts[:, :, 0]
    c_out = pts[:, :, 2] - pts[:, :, 3]
    n_in, n_out = _norm(c_in), _norm(c_out)
    mm = m[:, None, :]

    center = _dot(m, m) - 4.0 * radius**2
    orth = _dot(mm, side)
    orient = _dot(mm, c_in) * n_out - _dot(mm, c_out) * n_in
    coplanar = _dot(jnp.cross(c_in, c_out), -side)
    varbar = -_dot(c_in, c_out) - n_in * n_out * (1.0 - _dot(side, side) / (2.0 * radius[:, None] ** 2))
    return jnp.concatenate(
        [center[:, None], orth, orient, coplanar, varbar], axis=1
    )


def tetra_energy_terms(pts, incoming, internal):
    """Per-tetrahedron cable energy: four incoming and four internal cables.

    ``incoming`` is ``(K, 4, 2)`` (rest, stiffness) per incoming slot in the
    order filament 1 in/out, filament 2 in/out; ``internal`` is ``(K, 2)``.
    """
    inc = jnp.stack(
        [pts[:, 0, 1] - pts[:, 0, 0], pts[:, 0, 3] - pts[:, 0, 2], pts[:, 1, 1] - pts[:, 1, 0], pts[:, 1, 3] - pts[:, 1, 2]],
        axis=1,
    )
    itn = jnp.stack(
        [pts[:, 0, a] - pts[:, 1, b] for a in (1, 2) for b in (1, 2)],
        axis=1,
    )
    e_in = _cable_terms(_norm(inc), incoming[:, :, 0], incoming[:, :, 1])
    e_it = _cable_terms(_norm(itn), internal[:, None, 0], internal[:, None, 1])
    return jnp.sum(e_in, axis=1) + jnp.sum(e_it, axis=1)


def check_tetra_nondegenerate(pts: np.ndarray, tol: float = DEGENERACY_TOL) -> None:
    pts = np.asarray(pts, dtype=float).reshape(-1, 2, 4, 3)
    vectors = {
        "incoming cable": pts[:, :, 1] - pts[:, :, 0],
        "outgoing cable": pts[:, :, 3] - pts[:, :, 2],
        "variable bar": pts[:, :, 2] - pts[:, :, 1],
    }
    for what, vec in vectors.items():
        norms = np.linalg.norm(vec, axis=-1)
        bad = np.argwhere(norms < tol)
        if bad.size:
            k, i = bad[0]
            raise DegenerateConfiguration(f"{what} of filament {i + 1} in contact {k} has length {norms[k, i]:.3e}")


# --------------------------------------------------------------------------
# tetrahedral contact


@dataclass(frozen=True)
class TetraContact:
    """Ordered 2x4 hyperedge replacing one filament contact.

    ``vertices[i][j]`` is an ``(orbit, lift)`` reference; filament ``i`` runs
    incoming end -> side start -> side end -> outgoing end.  ``incoming`` is
    either one (rest, stiffness) pair or four, one per incoming cable slot.
    """

    vertices: tuple
    radius: float
    incoming: tuple = (INCOMING_REST, INCOMING_STIFFNESS)
    internal: tuple[float, float] | None = None

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("contact radius must be positive")
        if len(self.vertices) != 2 or any(len(row) != 4 for row in self.vertices):
            raise ValueError("a contact references exactly 2x4 vertices")
        if self.internal is None:
            object.__setattr__(self, "internal", (2.0 * self.radius, INTERNAL_STIFFNESS))
        inc = np.asarray(self.incoming, dtype=float)
        if inc.shape == (2,):
            inc = np.tile(inc, (4, 1))
        if inc.shape != (4, 2):
            raise ValueError("incoming cable parameters must be one pair or four pairs")
        object.__setattr__(self, "incoming", tuple(tuple(float(v) for v in row) for row in inc))
        object.__setattr__(self, "internal", tuple(float(v) for v in self.internal))
        refs = [self._key(v) for row in self.vertices for v in row]
        if len(set(refs)) != 8:
            raise ValueError("the two 4-tuples of a contact must reference distinct vertices")
        for rest, stiff in (*self.incoming, self.internal):
            if rest < 0 or not stiff > 0:
                raise ValueError("invalid cable parameters for a contact")

    @staticmethod
    def _key(ref):
        v, lift = ref
        return int(v), tuple(int(k) for k in lift)


def tetra_residuals(contact: TetraContact | float, points) -> np.ndarray:
    """The nine residuals of one contact from its realized ``(2, 4, 3)`` points."""
    radius = contact.radius if isinstance(contact, TetraContact) else float(contact)
    pts = np.asarray(points, dtype=float).reshape(1, 2, 4, 3)
    check_tetra_nondegenerate(pts)
    return np.asarray(tetra_rows(jnp.asarray(pts), jnp.asarray([radius])))[0]


# --------------------------------------------------------------------------
# parameter layout


class Layout:
    """Maps the internal variable vector ``x`` and the stretch ``tau`` to the
    full parameter vector (placement coordinates then lattice entries)."""

    def __init__(self, labels: Sequence[str], dim: int, base: np.ndarray, controls: ControlSplit):
        self.labels = tuple(labels)
        self.dim = dim
        self.names = parameter_names(labels, dim)
        self.base = np.asarray(base, dtype=float)
        index = {name: k for k, name in enumerate(self.names)}
        unknown = [c.entry for c in controls.tau if c.entry not in index]
        unknown += [f for f in controls.fixed if f not in index]
        if unknown:
            raise AssemblyError(f"control parameters not in the model: {unknown}")
        self.tau_idx = np.array([index[c.entry] for c in controls.tau], dtype=int)
        self.tau_scale = np.array([c.scale for c in controls.tau], dtype=float)
        self.fixed_idx = np.array([index[f] for f in controls.fixed], dtype=int)
        taken = set(self.tau_idx.tolist()) | set(self.fixed_idx.tolist())
        self.free_idx = np.array([k for k in range(len(self.names)) if k not in taken], dtype=int)
        self.controls = controls

    @property
    def n(self) -> int:
        return len(self.free_idx)

    @property
    def free_names(self) -> list[str]:
        return [self.names[k] for k in self.free_idx]

    def full(self, x, tau):
        theta = jnp.asarray(self.base)
        theta = theta.at[self.free_idx].set(x)
        return theta.at[self.tau_idx].set(self.tau_scale * tau)

    def full_numpy(self, x, tau) -> np.ndarray:
        theta = self.base.copy()
        theta[self.free_idx] = x
        theta[self.tau_idx] = self.tau_scale * tau
        return theta

    def split(self, theta):
        nv = len(self.labels) * self.dim
        return theta[:nv].reshape(len(self.labels), self.dim), theta[nv:].reshape(self.dim, self.dim)

    def x_from_full(self, theta) -> np.ndarray:
        return np.asarray(theta, dtype=float)[self.free_idx].copy()

    def tau_from_full(self, theta) -> float:
        theta = np.asarray(theta, dtype=float)
        return float(theta[self.tau_idx[0]] / self.tau_scale[0])

    def bookkeeping(self) -> dict:
        nv = len(self.labels) * self.dim
        fixed_vertex = int(np.sum(self.fixed_idx < nv))
        free_lattice = int(np.sum(self.free_idx >= nv))
        return {"vertex_coords": nv, "free_lattice_entries": free_lattice, "gauge_fixed_coords": fixed_vertex}


# --------------------------------------------------------------------------
# the constraint system


class ConstraintSystem:
    """Residual map ``g(x; tau)`` and energy ``Q(x; tau)`` with exact derivatives.

    ``residual_fn`` and ``energy_fn`` must be traceable by JAX.
    """

    def __init__(
        self,
        residual_fn: Callable,
        energy_fn: Callable,
        n: int,
        m: int,
        *,
        layout: Layout | None = None,
        model=None,
        x0: np.ndarray | None = None,
        tau0: float = 0.0,
    ):
        if m > n:
            raise AssemblyError(f"more constraints ({m}) than internal variables ({n})")
        self.n, self.m = n, m
        self.layout = layout
        self.model = model
        self.x0 = None if x0 is None else np.asarray(x0, dtype=float)
        self.tau0 = float(tau0)
        self._g = jax.jit(residual_fn)
        self._dg = jax.jit(jax.jacfwd(residual_fn, argnums=0))
        self._dg_tau = jax.jit(jax.jacfwd(residual_fn, argnums=1))
        self._q = jax.jit(energy_fn)
        self._dq = jax.jit(jax.grad(energy_fn, argnums=0))
        self._d2q = jax.jit(jax.hessian(energy_fn, argnums=0))
        self._residual_fn = residual_fn
        self._energy_fn = energy_fn

        def weighted(x, lam, tau):
            return jnp.dot(lam, residual_fn(x, tau))

        self._d2g = jax.jit(jax.hessian(weighted, argnums=0))

    # numpy facing API -------------------------------------------------
    def residual(self, x, tau=None) -> np.ndarray:
        return np.asarray(self._g(np.asarray(x, dtype=float), self._tau(tau)))

    def jacobian(self, x, tau=None) -> np.ndarray:
        return np.asarray(self._dg(np.asarray(x, dtype=float), self._tau(tau))).reshape(self.m, self.n)

    def residual_tau(self, x, tau=None) -> np.ndarray:
        return np.asarray(self._dg_tau(np.asarray(x, dtype=float), self._tau(tau))).reshape(self.m)

    def energy(self, x, tau=None) -> float:
        return float(self._q(np.asarray(x, dtype=float), self._tau(tau)))

    def energy_gradient(self, x, tau=None) -> np.ndarray:
        return np.asarray(self._dq(np.asarray(x, dtype=float), self._tau(tau)))

    def energy_hessian(self, x, tau=None) -> np.ndarray:
        return np.asarray(self._d2q(np.asarray(x, dtype=float), self._tau(tau)))

    def constraint_hessian(self, x, lam, tau=None) -> np.ndarray:
        """``sum_k lam_k * Hess g_k(x)``."""
        return np.asarray(
            self._d2g(np.asarray(x, dtype=float), np.asarray(lam, dtype=float), self._tau(tau))
        ).reshape(self.n, self.n)

    def _tau(self, tau):
        return np.float64(self.tau0 if tau is None else tau)

    def multipliers(self, x, tau=None) -> np.ndarray:
        """Least-squares multipliers solving ``grad Q + Dg^T lam = 0``."""
        if self.m == 0:
            return np.zeros(0)
        jac = self.jacobian(x, tau)
        lam, *_ = np.linalg.lstsq(jac.T, -self.energy_gradient(x, tau), rcond=None)
        return lam

    # framework facing API -----------------------------------------------
    def unpack(self, x, tau=None) -> tuple[np.ndarray, np.ndarray]:
        if self.layout is None:
            raise AttributeError("system was not assembled from a framework")
        theta = self.layout.full_numpy(x, self._tau(tau))
        coords, lat = self.layout.split(theta)
        return coords.copy(), lat.copy()

    def framework_at(self, x, tau=None) -> Framework:
        coords, lat = self.unpack(x, tau)
        fw = self.model.framework
        return Framework(fw.graph, Placement(coords), Lattice(lat), dict(fw.images))

    def contact_points(self, x, tau=None) -> np.ndarray:
        """Realized ``(K, 2, 4, 3)`` points of every contact tetrahedron."""
        theta = self.layout.full_numpy(x, self._tau(tau))
        return np.asarray(self._gather_tetra(theta))

    def tetra_residuals_at(self, x, tau=None) -> np.ndarray:
        k = len(self.model.contacts)
        return self.residual(x, tau)[: 9 * k].reshape(k, 9)

    def lagrangian(self) -> "LagrangianSystem":
        return LagrangianSystem(self)


class LagrangianSystem:
    """``F(x, lam; tau) = (grad Q + Dg^T lam, g)`` and its bordered Jacobian."""

    def __init__(self, system: ConstraintSystem):
        self.system = system
        n, m = system.n, system.m
        self.size = n + m
        g_fn, q_fn = system._residual_fn, system._energy_fn

        def lag(x, lam, tau):
            return q_fn(x, tau) + jnp.dot(lam, g_fn(x, tau))

        grad_x = jax.grad(lag, argnums=0)

        def F(z, tau):
            x, lam = z[:n], z[n:]
            return jnp.concatenate([grad_x(x, lam, tau), g_fn(x, tau)])

        self._F = jax.jit(F)
        self._dF = jax.jit(jax.jacfwd(F, argnums=0))
        self._dF_tau = jax.jit(jax.jacfwd(F, argnums=1))

    def F(self, z, tau) -> np.ndarray:
        return np.asarray(self._F(np.asarray(z, dtype=float), np.float64(tau)))

    def jacobian(self, z, tau) -> np.ndarray:
        out = self._dF(np.asarray(z, dtype=float), np.float64(tau))
        return np.asarray(out).reshape(self.size, self.size)

    def d_tau(self, z, tau) -> np.ndarray:
        return np.asarray(self._dF_tau(np.asarray(z, dtype=float), np.float64(tau))).reshape(self.size)

    def pack(self, x, lam) -> np.ndarray:
        return np.concatenate([np.asarray(x, dtype=float), np.asarray(lam, dtype=float)])

    def unpack(self, z) -> tuple[np.ndarray, np.ndarray]:
        z = np.asarray(z)
        return z[: self.system.n], z[self.system.n :]


def lagrangian(system: ConstraintSystem) -> LagrangianSystem:
    return LagrangianSystem(system)


# --------------------------------------------------------------------------
# assembly from a framework


@dataclass(frozen=True)
class TensegrityModel:
    """A framework after contact replacement, plus its control split.

    ``framework.graph`` holds the bars that were not replaced and every cable;
    cables that act as incoming cables of a contact are listed in
    ``contact_cables`` and are not counted twice by the assembler.
    """

    framework: Framework
    contacts: tuple[TetraContact, ...]
    controls: ControlSplit
    contact_cables: frozenset = frozenset()


def _ref_arrays(refs, dim):
    idx = np.array([r[0] for r in refs], dtype=int)
    lifts = np.array([r[1] for r in refs], dtype=float).reshape(len(refs), dim)
    return idx, lifts


def assemble(model: TensegrityModel) -> ConstraintSystem:
    """Stack the contact and bar constraints and the cable energy of ``model``."""
    fw = model.framework
    dim = fw.dim
    graph = fw.graph
    if model.contacts and dim != 3:
        raise AssemblyError("contact tetrahedra are only defined in three dimensions")

    seen_refs: set = set()
    for k, t in enumerate(model.contacts):
        for row in t.vertices:
            for ref in row[1:3]:
                key = TetraContact._key(ref)
                if key[0] in seen_refs:
                    raise AssemblyError(f"contact {k}: vertex {graph.labels[key[0]]!r} already belongs to another contact")
                seen_refs.add(key[0])

    base = np.concatenate([fw.placement.coords.ravel(), fw.lattice.generators.ravel()])
    layout = Layout(graph.labels, dim, base, model.controls)

    bars = [e for e in graph.edges if e.is_bar]
    cables = [e for k, e in enumerate(graph.edges) if e.is_cable and k not in model.contact_cables]

    bar_i = np.array([e.i for e in bars], dtype=int)
    bar_j = np.array([e.j for e in bars], dtype=int)
    bar_lift = np.array([e.lift for e in bars], dtype=float).reshape(len(bars), dim)
    bar_len2 = np.array([e.kind.length**2 for e in bars], dtype=float)

    cab_i = np.array([e.i for e in cables], dtype=int)
    cab_j = np.array([e.j for e in cables], dtype=int)
    cab_lift = np.array([e.lift for e in cables], dtype=float).reshape(len(cables), dim)
    cab_rest = np.array([e.kind.rest_length for e in cables], dtype=float)
    cab_stiff = np.array([e.kind.stiffness for e in cables], dtype=float)

    K = len(model.contacts)
    refs = [ref for t in model.contacts for row in t.vertices for ref in row]
    tet_idx, tet_lift = _ref_arrays(refs, dim) if refs else (np.zeros(0, int), np.zeros((0, dim)))
    tet_r = np.array([t.radius for t in model.contacts], dtype=float)
    tet_in = np.array([t.incoming for t in model.contacts], dtype=float).reshape(K, 4, 2)
    tet_it = np.array([t.internal for t in model.contacts], dtype=float).reshape(K, 2)

    def gather_tetra(theta):
        coords, lat = layout.split(theta)
        pts = coords[tet_idx] + tet_lift @ lat
        return pts.reshape(K, 2, 4, dim)

    def residual_fn(x, tau):
        theta = layout.full(x, tau)
        coords, lat = layout.split(theta)
        parts = []
        if K:
            parts.append(tetra_rows(gather_tetra(theta), tet_r).reshape(-1))
        if len(bars):
            d = coords[bar_j] + bar_lift @ lat - coords[bar_i]
            parts.append(jnp.sum(d * d, axis=1) - bar_len2)
        if not parts:
            return jnp.zeros(0)
        return jnp.concatenate(parts)

    def energy_fn(x, tau):
        theta = layout.full(x, tau)
        coords, lat = layout.split(theta)
        total = jnp.asarray(0.0)
        if K:
            total = total + jnp.sum(tetra_energy_terms(gather_tetra(theta), tet_in, tet_it))
        if len(cables):
            d = coords[cab_j] + cab_lift @ lat - coords[cab_i]
            total = total + jnp.sum(_cable_terms(_norm(d), cab_rest, cab_stiff))
        return total

    def slack_fn(x, tau):
        theta = layout.full(x, tau)
        coords, lat = layout.split(theta)
        parts = [jnp.zeros(0)]
        if K:
            pts = gather_tetra(theta)
            inc = jnp.stack([pts[:, i, a] - pts[:, i, b] for i in (0, 1) for a, b in ((1, 0), (3, 2))], axis=1)
            itn = jnp.stack([pts[:, 0, a] - pts[:, 1, b] for a in (1, 2) for b in (1, 2)], axis=1)
            parts.append((_norm(inc) - tet_in[:, :, 0]).ravel())
            parts.append((_norm(itn) - tet_it[:, None, 0]).ravel())
        if len(cables):
            d = coords[cab_j] + cab_lift @ lat - coords[cab_i]
            parts.append(_norm(d) - cab_rest)
        return jnp.concatenate(parts)

    m = 9 * K + len(bars)
    n = layout.n
    book = layout.bookkeeping()
    expected_n = book["vertex_coords"] + book["free_lattice_entries"] - book["gauge_fixed_coords"]
    if expected_n != n:
        raise AssemblyError(f"variable bookkeeping mismatch: n={n}, expected {expected_n}")
    x0 = layout.x_from_full(base)
    tau0 = layout.tau_from_full(base)
    system = ConstraintSystem(residual_fn, energy_fn, n, m, layout=layout, model=model, x0=x0, tau0=tau0)
    system._gather_tetra = jax.jit(gather_tetra)
    slack = jax.jit(slack_fn)
    system.cable_slack = lambda x, tau=None: np.asarray(slack(np.asarray(x, dtype=float), system._tau(tau)))
    return system


def describe_parameter(name: str) -> str:
    if name.startswith("L"):
        return f"lattice entry ({name[1]}, {name[2]})"
    label, axis = name.rsplit(".", 1)
    return f"{axis}-coordinate of vertex {label!r} ({'xyz'.index(axis) if axis in AXES else '?'})"


__all__ = [
    "AssemblyError",
    "Bar",
    "Cable",
    "ConstraintSystem",
    "DegenerateConfiguration",
    "LagrangianSystem",
    "Layout",
    "TensegrityModel",
    "TetraContact",
    "assemble",
    "bar_residual",
    "cable_energy",
    "lagrangian",
    "tetra_residuals",
    "tetra_rows",
]
