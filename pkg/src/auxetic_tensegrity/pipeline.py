"""Contact replacement, equilibration and quasistatic deformation along tau."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .energy import ConstraintSystem, TensegrityModel, TetraContact, assemble
from .framework import AXES, Cable, ControlSplit, Edge, Framework, Lattice, PeriodicGraph, Placement
from .homotopy import Homotopy, TrackerSettings, TrackingError, newton, track
from .riemannian import DescentSettings, MaxIters, minimize, project_to_variety, tangent_project

log = logging.getLogger(__name__)

SPLIT_SUFFIX = ("-1", "-2")
SEED_MODES = ("half-radius", "bend")


class ContactGraphError(ValueError):
    pass


class DeformationError(RuntimeError):
    """Tracking along tau failed; ``last_tau`` is the last accepted value."""

    def __init__(self, message: str, last_tau: float | None, trace: "DeformationTrace | None" = None):
        super().__init__(message)
        self.last_tau = last_tau
        self.trace = trace


# --------------------------------------------------------------------------
# contact replacement


def _unit(v):
    n = np.linalg.norm(v)
    if n == 0:
        raise ContactGraphError("cable of zero length at a contact vertex")
    return v / n


def tetrahedralize(
    framework: Framework,
    contact_bars: Sequence[int],
    radius: float,
    controls: ControlSplit,
    internal: tuple[float, float] | None = None,
    seed: str = "half-radius",
    split_coords: Mapping[str, Sequence[float]] | None = None,
) -> TensegrityModel:
    """Replace each contact bar by a tetrahedral contact.

    Every contact vertex ``v`` (two cables, one contact bar) is split into
    ``v-1`` and ``v-2``; its first cable (by edge order) is re-attached to
    ``v-1`` and its second to ``v-2``.  The copies start ``radius / 2`` from
    ``v`` along their cable.  With ``seed="bend"`` the offset is instead
    ``radius * tan(beta / 2)`` for the filament bend ``beta`` at ``v``, which
    already satisfies the side-length coupling for nearly straight
    filaments.  ``split_coords`` overrides the start position of individual
    copies by label (``"v-1"``).  Incoming cable parameters of each contact are the parameters
    of the re-attached cables.
    """
    if seed not in SEED_MODES:
        raise ValueError(f"unknown seed mode {seed!r}; expected one of {SEED_MODES}")
    graph = framework.graph
    d = framework.dim
    contact_bars = [int(k) for k in contact_bars]
    if not contact_bars:
        return TensegrityModel(framework, (), controls)
    if len(set(contact_bars)) != len(contact_bars):
        raise ContactGraphError("a bar is listed as a contact twice")
    for k in contact_bars:
        if not 0 <= k < len(graph.edges) or not graph.edges[k].is_bar:
            raise ContactGraphError(f"contact {k} does not reference a bar")

    contact_of: dict[int, int] = {}
    for k in contact_bars:
        e = graph.edges[k]
        for v in (e.i, e.j):
            if v in contact_of:
                raise ContactGraphError(f"vertex {graph.labels[v]!r} touches more than one contact bar")
            contact_of[v] = k

    incident_cables: dict[int, list[int]] = {v: [] for v in contact_of}
    for idx, e in enumerate(graph.edges):
        for v in (e.i, e.j):
            if v not in contact_of:
                continue
            if e.is_cable:
                incident_cables[v].append(idx)
            elif idx != contact_of[v]:
                raise ContactGraphError(f"contact vertex {graph.labels[v]!r} carries a second bar (edge {idx})")
    for v, cabs in incident_cables.items():
        if len(cabs) != 2 or cabs[0] == cabs[1]:
            raise ContactGraphError(
                f"contact vertex {graph.labels[v]!r} must have exactly two cables, found {len(set(cabs))}"
            )

    # new vertex set: unsplit vertices keep their order, split ones append two copies
    labels: list[str] = []
    new_index: dict[tuple[int, int], int] = {}
    for v, lab in enumerate(graph.labels):
        if v in contact_of:
            for s, suffix in enumerate(SPLIT_SUFFIX):
                new_index[(v, s)] = len(labels)
                labels.append(lab + suffix)
        else:
            new_index[(v, 0)] = len(labels)
            labels.append(lab)

    def copy_for(v: int, cable_idx: int) -> int:
        if v not in contact_of:
            return new_index[(v, 0)]
        return new_index[(v, incident_cables[v].index(cable_idx))]

    coords = framework.placement.coords
    lat = framework.lattice
    new_coords = np.zeros((len(labels), d))
    for (v, s), idx in new_index.items():
        new_coords[idx] = coords[v]
    for v, cabs in incident_cables.items():
        ends = []
        for c in cabs:
            e = graph.edges[c]
            ends.append(coords[e.j] + lat.translation(e.lift) if e.i == v else coords[e.i] - lat.translation(e.lift))
        dirs = [_unit(p - coords[v]) for p in ends]
        eps = 0.5 * radius
        if seed == "bend":
            beta = np.arccos(np.clip(-dirs[0] @ dirs[1], -1.0, 1.0))
            shortest = min(np.linalg.norm(p - coords[v]) for p in ends)
            eps = float(np.clip(radius * np.tan(min(beta, 3.0) / 2), 0.05 * radius, 0.45 * shortest))
        for s, u in enumerate(dirs):
            new_coords[new_index[(v, s)]] = coords[v] + eps * u

    for lab, xyz in (split_coords or {}).items():
        if lab not in labels or lab in graph.labels:
            raise ContactGraphError(f"split_coords names {lab!r}, which is not a split contact vertex")
        xyz = np.asarray(xyz, dtype=float)
        if xyz.shape != (d,):
            raise ContactGraphError(f"split_coords[{lab!r}] must have {d} coordinates")
        new_coords[labels.index(lab)] = xyz

    new_edges: list[Edge] = []
    cable_map: dict[int, int] = {}
    for idx, e in enumerate(graph.edges):
        if idx in contact_bars:
            continue
        if e.is_cable:
            cable_map[idx] = len(new_edges)
        new_edges.append(Edge(copy_for(e.i, idx), copy_for(e.j, idx), e.lift, e.kind))
    new_graph = PeriodicGraph(d, tuple(labels), tuple(new_edges), check_connected=False)

    contacts = []
    used_cables: set[int] = set()
    for k in contact_bars:
        bar = graph.edges[k]
        rows, params = [], []
        for v, base_lift in ((bar.i, np.zeros(d, dtype=int)), (bar.j, np.asarray(bar.lift, dtype=int))):
            row = []
            cabs = incident_cables[v]
            for s, c in enumerate(cabs):
                e = graph.edges[c]
                if e.i == v:
                    other, lift = e.j, np.asarray(e.lift, dtype=int)
                else:
                    other, lift = e.i, -np.asarray(e.lift, dtype=int)
                row.append((copy_for(other, c), tuple(int(t) for t in base_lift + lift)))
                params.append((e.kind.rest_length, e.kind.stiffness))
                used_cables.add(cable_map[c])
            own = tuple(int(t) for t in base_lift)
            rows.append((row[0], (new_index[(v, 0)], own), (new_index[(v, 1)], own), row[1]))
        contacts.append(TetraContact(tuple(rows), radius, tuple(params), internal))

    def rename(name: str) -> str:
        if name.startswith("L"):
            return name
        lab, axis = name.rsplit(".", 1)
        v = graph.index(lab)
        return f"{lab}{SPLIT_SUFFIX[0]}.{axis}" if v in contact_of else name

    new_controls = ControlSplit(controls.tau, tuple(rename(f) for f in controls.fixed))
    images = {}
    for lab, (v, shift) in framework.images.items():
        images[lab] = (new_index[(v, 0)], tuple(shift))
    new_fw = Framework(new_graph, Placement(new_coords), Lattice(lat.generators), images)
    return TensegrityModel(new_fw, tuple(contacts), new_controls, frozenset(used_cables))


# --------------------------------------------------------------------------
# equilibration


@dataclass
class Equilibrium:
    system: ConstraintSystem
    x: np.ndarray
    lam: np.ndarray
    tau: float
    energy: float
    projected_gradient: float
    residual_norm: float
    descent_iterations: int = 0


@dataclass(frozen=True)
class PipelineSettings:
    descent: DescentSettings = DescentSettings()
    tracker: TrackerSettings = TrackerSettings()
    polish: bool = True
    # hand an unconverged descent iterate to the Newton polish instead of failing
    accept_max_iters: bool = False

    @classmethod
    def from_dict(cls, data: dict | None) -> "PipelineSettings":
        data = dict(data or {})
        descent = DescentSettings(**data.pop("descent", {}))
        tracker = TrackerSettings(**data.pop("tracker", {}))
        return cls(descent, tracker, **data)


def lagrange_homotopy(system: ConstraintSystem) -> Homotopy:
    lag = system.lagrangian()
    return Homotopy(lag.F, lag.jacobian, lag.d_tau)


def polish(system: ConstraintSystem, x, tau, tracker: TrackerSettings | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Newton on the Lagrange system from least-squares multipliers."""
    tracker = tracker or TrackerSettings()
    lam = system.multipliers(x, tau)
    h = lagrange_homotopy(system)
    z, _ = newton(h, np.concatenate([x, lam]), tau, tracker)
    return z[: system.n], z[system.n :]


def equilibrate(model_or_system, tau=None, x0=None, settings: PipelineSettings | None = None) -> Equilibrium:
    """Minimize the energy on the constraint variety at fixed ``tau``."""
    settings = settings or PipelineSettings()
    system = model_or_system if isinstance(model_or_system, ConstraintSystem) else assemble(model_or_system)
    tau = system.tau0 if tau is None else float(tau)
    x = system.x0 if x0 is None else np.asarray(x0, dtype=float)
    x = project_to_variety(system, x, tau)
    try:
        result = minimize(system, x, tau, settings.descent, settings.tracker)
        x, iterations = result.x, result.iterations
    except MaxIters as exc:
        if not (settings.accept_max_iters and settings.polish):
            raise
        log.info("descent stopped at the iteration cap; polishing with Newton")
        x, iterations = exc.x, settings.descent.max_iters
    if settings.polish:
        x_new, lam = polish(system, x, tau, settings.tracker)
        if np.linalg.norm(x_new - x) > 1e-4 * (1.0 + np.linalg.norm(x)):
            log.warning("Newton polish moved the descent result by %.3e", np.linalg.norm(x_new - x))
        x = x_new
    else:
        lam = system.multipliers(x, tau)
    pg = np.linalg.norm(tangent_project(system.jacobian(x, tau), system.energy_gradient(x, tau)))
    return Equilibrium(
        system,
        x,
        lam,
        tau,
        system.energy(x, tau),
        float(pg),
        float(np.linalg.norm(system.residual(x, tau))),
        iterations,
    )


# --------------------------------------------------------------------------
# deformation trace


@dataclass(frozen=True)
class TraceStep:
    tau: float
    coords: np.ndarray
    lattice: np.ndarray
    energy: float
    residual_norm: float
    multipliers: np.ndarray | None = None


@dataclass
class DeformationTrace:
    labels: tuple[str, ...]
    dim: int
    steps: list[TraceStep] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    @property
    def taus(self) -> np.ndarray:
        return np.array([s.tau for s in self.steps])

    @property
    def lattices(self) -> np.ndarray:
        return np.array([s.lattice for s in self.steps]).reshape(-1, self.dim, self.dim)

    def diagonal(self) -> np.ndarray:
        return np.diagonal(self.lattices, axis1=1, axis2=2)

    def __len__(self):
        return len(self.steps)


def _grid(tau_start: float, tau_end: float, step: float) -> np.ndarray:
    if not step > 0:
        raise ValueError("step size must be positive")
    span = tau_end - tau_start
    count = int(round(abs(span) / step))
    if count < 1:
        raise ValueError("interval shorter than one step")
    if abs(count * step - abs(span)) > 1e-9 * max(1.0, abs(span)):
        raise ValueError(f"interval length {abs(span)} is not a multiple of the step {step}")
    return tau_start + np.sign(span) * step * np.arange(count + 1)


def deform(
    system_or_model,
    tau_start: float,
    tau_end: float,
    step: float,
    settings: PipelineSettings | None = None,
    *,
    equilibrium: Equilibrium | None = None,
    on_step: Callable[[TraceStep], None] | None = None,
    metadata: dict | None = None,
) -> DeformationTrace:
    """Quasistatic deformation: equilibrate, then continue the Lagrange system in tau.

    The equilibrium is computed at the model's native tau and tracked to
    ``tau_start`` before recording starts; recording follows the grid
    ``tau_start + k * step``.
    """
    settings = settings or PipelineSettings()
    system = system_or_model if isinstance(system_or_model, ConstraintSystem) else assemble(system_or_model)
    grid = _grid(tau_start, tau_end, step)
    eq = equilibrium or equilibrate(system, settings=settings)
    h = lagrange_homotopy(system)
    z = np.concatenate([eq.x, eq.lam])
    if abs(eq.tau - tau_start) > 1e-15:
        n_pre = max(1, int(np.ceil(abs(tau_start - eq.tau) / step)))
        try:
            z = track(h, z, np.linspace(eq.tau, tau_start, n_pre + 1), settings.tracker)[-1]
        except TrackingError as exc:
            raise DeformationError(f"could not reach tau_start: {exc}", None) from exc

    fw = system.model.framework
    trace = DeformationTrace(tuple(fw.graph.labels), fw.dim, metadata=dict(metadata or {}))
    trace.metadata.setdefault("grid", {"tau_start": tau_start, "tau_end": tau_end, "step": step})

    def record(j, t, w):
        x, lam = w[: system.n], w[system.n :]
        coords, lat = system.unpack(x, t)
        st = TraceStep(
            float(t), coords, lat, system.energy(x, t), float(np.linalg.norm(system.residual(x, t))), lam.copy()
        )
        trace.steps.append(st)
        if on_step:
            on_step(st)

    try:
        track(h, z, grid, settings.tracker, callback=record)
    except TrackingError as exc:
        last = trace.steps[-1].tau if trace.steps else None
        raise DeformationError(f"tracking failed: {exc}; last stable tau = {last}", last, trace) from exc
    return trace


def trace_invariants(system: ConstraintSystem, trace: DeformationTrace) -> dict:
    """Worst projected gradient and residual norm over a trace."""
    worst_pg = worst_g = 0.0
    for st in trace.steps:
        x = system.layout.x_from_full(np.concatenate([st.coords.ravel(), st.lattice.ravel()]))
        pg = tangent_project(system.jacobian(x, st.tau), system.energy_gradient(x, st.tau))
        worst_pg = max(worst_pg, float(np.linalg.norm(pg)))
        worst_g = max(worst_g, st.residual_norm)
    return {"projected_gradient": worst_pg, "residual_norm": worst_g}


def default_controls(labels: Sequence[str], dim: int) -> ControlSplit:
    return ControlSplit.default(dim, labels[0])


__all__ = [
    "AXES",
    "Cable",
    "ContactGraphError",
    "DeformationError",
    "DeformationTrace",
    "Equilibrium",
    "PipelineSettings",
    "TraceStep",
    "deform",
    "equilibrate",
    "lagrange_homotopy",
    "polish",
    "tetrahedralize",
    "trace_invariants",
]
