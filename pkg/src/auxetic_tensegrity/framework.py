"""Periodic graphs, placements and lattices.

A d-periodic framework is stored through its quotient graph: one record per
vertex orbit and one per edge orbit, where every edge carries an integer lift
vector saying which translate of its head it reaches.  The lattice is a d x d
matrix whose *rows* are the generator vectors, so the translate of vertex ``j``
by the lift ``k`` sits at ``p(j) + k @ L`` (equivalently ``p(j) + L.T @ k``).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence, Union

import numpy as np

AXES = "xyz"


@dataclass(frozen=True)
class Bar:
    length: float

    def __post_init__(self):
        if not self.length > 0:
            raise ValueError(f"bar length must be positive, got {self.length}")


@dataclass(frozen=True)
class Cable:
    rest_length: float
    stiffness: float

    def __post_init__(self):
        if self.rest_length < 0:
            raise ValueError(f"cable rest length must be non-negative, got {self.rest_length}")
        if not self.stiffness > 0:
            raise ValueError(f"cable stiffness must be positive, got {self.stiffness}")


EdgeKind = Union[Bar, Cable]


@dataclass(frozen=True)
class Edge:
    i: int
    j: int
    lift: tuple[int, ...]
    kind: EdgeKind

    @property
    def is_bar(self) -> bool:
        return isinstance(self.kind, Bar)

    @property
    def is_cable(self) -> bool:
        return isinstance(self.kind, Cable)

    def reversed(self) -> "Edge":
        return Edge(self.j, self.i, tuple(-k for k in self.lift), self.kind)


@dataclass(frozen=True)
class Lattice:
    """Lattice generators as the rows of a d x d matrix."""

    generators: np.ndarray

    def __post_init__(self):
        g = np.array(self.generators, dtype=float)
        if g.ndim != 2 or g.shape[0] != g.shape[1]:
            raise ValueError(f"generator matrix must be square, got shape {g.shape}")
        if g.shape[0] not in (2, 3):
            raise ValueError("only 2- and 3-periodic lattices are supported")
        if np.linalg.matrix_rank(g) < g.shape[0]:
            raise ValueError("generator matrix is rank deficient")
        g.setflags(write=False)
        object.__setattr__(self, "generators", g)

    @property
    def dim(self) -> int:
        return self.generators.shape[0]

    @property
    def gram(self) -> np.ndarray:
        return self.generators @ self.generators.T

    def translation(self, lift: Sequence[int]) -> np.ndarray:
        return np.asarray(lift, dtype=float) @ self.generators

    def is_lower_triangular(self, tol: float = 1e-12) -> bool:
        return bool(np.all(np.abs(np.triu(self.generators, 1)) <= tol))

    def __eq__(self, other):
        return isinstance(other, Lattice) and np.array_equal(self.generators, other.generators)

    def __hash__(self):
        return hash(self.generators.tobytes())


@dataclass(frozen=True)
class PeriodicGraph:
    """Quotient graph of a d-periodic graph.

    ``labels`` names the vertex orbits; every edge joins orbit ``i`` to the
    translate of orbit ``j`` by ``lift``.  ``check_connected=False`` skips the
    connectivity test, for graphs whose remaining links are contact hyperedges.
    """

    dim: int
    labels: tuple[str, ...]
    edges: tuple[Edge, ...]
    check_connected: bool = field(default=True, compare=False, repr=False)

    def __post_init__(self):
        if len(set(self.labels)) != len(self.labels):
            raise ValueError("vertex labels must be unique")
        n = len(self.labels)
        seen = set()
        for idx, e in enumerate(self.edges):
            if not (0 <= e.i < n and 0 <= e.j < n):
                raise ValueError(f"edge {idx} references a vertex out of range")
            if len(e.lift) != self.dim:
                raise ValueError(f"edge {idx} lift has length {len(e.lift)}, expected {self.dim}")
            if e.i == e.j and not any(e.lift):
                raise ValueError(f"edge {idx} is a loop")
            key = (e.i, e.j, tuple(e.lift))
            if key in seen or (e.j, e.i, tuple(-k for k in e.lift)) in seen:
                raise ValueError(f"edge {idx} duplicates an earlier edge orbit")
            seen.add(key)
        if n and self.check_connected and not self._quotient_connected():
            raise ValueError("quotient graph is not connected")

    def _quotient_connected(self) -> bool:
        adj = {v: set() for v in range(len(self.labels))}
        for e in self.edges:
            adj[e.i].add(e.j)
            adj[e.j].add(e.i)
        stack, reached = [0], {0}
        while stack:
            for w in adj[stack.pop()]:
                if w not in reached:
                    reached.add(w)
                    stack.append(w)
        return len(reached) == len(self.labels)

    def index(self, label: str) -> int:
        return self.labels.index(label)

    def incident(self, v: int) -> list[int]:
        return [k for k, e in enumerate(self.edges) if v in (e.i, e.j)]

    def periodicity_rank(self) -> int:
        """Rank of the lattice spanned by the net lifts of the cycles."""
        # spanning tree potentials; cycle lifts are the non-tree edge mismatches
        pot = {0: np.zeros(self.dim, dtype=int)}
        order = [0]
        cycles = []
        adj: dict[int, list[tuple[int, np.ndarray]]] = {v: [] for v in range(len(self.labels))}
        for e in self.edges:
            adj[e.i].append((e.j, np.array(e.lift)))
            adj[e.j].append((e.i, -np.array(e.lift)))
        while order:
            v = order.pop()
            for w, lift in adj[v]:
                if w not in pot:
                    pot[w] = pot[v] + lift
                    order.append(w)
                else:
                    cycles.append(pot[v] + lift - pot[w])
        if not cycles:
            return 0
        return int(np.linalg.matrix_rank(np.array(cycles, dtype=float)))


@dataclass(frozen=True)
class Placement:
    """Coordinates of the orbit representatives, one row per vertex orbit."""

    coords: np.ndarray

    def __post_init__(self):
        c = np.array(self.coords, dtype=float)
        if c.ndim != 2:
            raise ValueError("placement must be a (vertices, dim) array")
        c.setflags(write=False)
        object.__setattr__(self, "coords", c)

    def __getitem__(self, v: int) -> np.ndarray:
        return self.coords[v]

    def __eq__(self, other):
        return isinstance(other, Placement) and np.array_equal(self.coords, other.coords)

    def __hash__(self):
        return hash(self.coords.tobytes())


@dataclass(frozen=True)
class TauControl:
    entry: str
    scale: float = 1.0


@dataclass(frozen=True)
class ControlSplit:
    """Which parameters are driven by the stretch ``tau`` and which are held fixed.

    Parameter names are ``"<label>.x"`` style for vertex coordinates and
    ``"Lij"`` (1-based row, column) for lattice entries.  Every other
    parameter is an internal variable.
    """

    tau: tuple[TauControl, ...]
    fixed: tuple[str, ...]

    def __post_init__(self):
        if not self.tau:
            raise ValueError("exactly one stretch parameter must drive at least one lattice entry")
        driven = [c.entry for c in self.tau]
        if len(set(driven)) != len(driven):
            raise ValueError("a parameter is driven by tau twice")
        if len(set(self.fixed)) != len(self.fixed):
            raise ValueError("duplicate fixed parameter")
        clash = set(driven) & set(self.fixed)
        if clash:
            raise ValueError(f"parameters both driven and fixed: {sorted(clash)}")
        for c in self.tau:
            if not c.entry.startswith("L"):
                raise ValueError(f"tau may only drive lattice entries, got {c.entry!r}")

    @classmethod
    def default(cls, dim: int, first_label: str) -> "ControlSplit":
        """tau = L11, upper lattice entries zero, first vertex pinned."""
        upper = tuple(f"L{i + 1}{j + 1}" for i in range(dim) for j in range(i + 1, dim))
        pins = tuple(f"{first_label}.{AXES[k]}" for k in range(dim))
        return cls(tau=(TauControl("L11"),), fixed=upper + pins)


def parameter_names(labels: Sequence[str], dim: int) -> list[str]:
    names = [f"{lab}.{AXES[k]}" for lab in labels for k in range(dim)]
    names += [f"L{i + 1}{j + 1}" for i in range(dim) for j in range(dim)]
    return names


@dataclass(frozen=True)
class Framework:
    """A periodic framework: quotient graph, placement, lattice and image aliases.

    ``images`` maps display-only vertex labels to ``(orbit index, shift)``; such
    a vertex is the translate of an orbit representative and has no coordinates
    of its own.
    """

    graph: PeriodicGraph
    placement: Placement
    lattice: Lattice
    images: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.placement.coords.shape != (len(self.graph.labels), self.graph.dim):
            raise ValueError("placement shape does not match the graph")
        if self.lattice.dim != self.graph.dim:
            raise ValueError("lattice dimension does not match the graph")

    @property
    def dim(self) -> int:
        return self.graph.dim

    def resolve(self, label: str) -> tuple[int, tuple[int, ...]]:
        """Orbit index and lift of a (possibly image) vertex label."""
        if label in self.images:
            v, shift = self.images[label]
            return v, tuple(shift)
        return self.graph.index(label), (0,) * self.dim

    def point(self, label: str) -> np.ndarray:
        v, shift = self.resolve(label)
        return self.placement[v] + self.lattice.translation(shift)

    def motif_labels(self) -> list[str]:
        return list(self.graph.labels) + list(self.images)


def edge_vector(graph: PeriodicGraph, placement: Placement, lattice: Lattice, index: int) -> np.ndarray:
    """Displacement ``p(j) + L^T lift - p(i)`` of edge ``index``."""
    if not 0 <= index < len(graph.edges):
        raise IndexError(f"edge index {index} out of range for {len(graph.edges)} edges")
    e = graph.edges[index]
    return placement[e.j] + lattice.translation(e.lift) - placement[e.i]


@dataclass(frozen=True)
class Supercell:
    vertices: np.ndarray  # (n, d)
    labels: tuple[str, ...]
    segments: np.ndarray  # (m, 2, d)
    kinds: tuple[str, ...]


def supercell(framework: Framework, reps: Sequence[int]) -> Supercell:
    """Explicit geometry of ``prod(reps)`` translated copies of the motif.

    The motif is every vertex record of the framework (orbit representatives
    and image vertices) together with every edge orbit.
    """
    reps = tuple(int(r) for r in reps)
    d = framework.dim
    if len(reps) != d or any(r < 1 for r in reps):
        raise ValueError(f"reps must be {d} integers >= 1, got {reps}")
    graph, lat = framework.graph, framework.lattice
    motif = framework.motif_labels()
    base = np.array([framework.point(lab) for lab in motif]).reshape(len(motif), d)
    starts = np.array([framework.placement[e.i] for e in graph.edges]).reshape(-1, d)
    ends = np.array(
        [framework.placement[e.j] + lat.translation(e.lift) for e in graph.edges]
    ).reshape(-1, d)
    kinds = tuple("bar" if e.is_bar else "cable" for e in graph.edges)

    verts, labels, segs, seg_kinds = [], [], [], []
    for cell in np.ndindex(*reps):
        shift = lat.translation(cell)
        tag = ",".join(str(c) for c in cell)
        verts.append(base + shift)
        labels.extend(f"{lab}@{tag}" for lab in motif)
        segs.append(np.stack([starts + shift, ends + shift], axis=1))
        seg_kinds.extend(kinds)
    return Supercell(
        vertices=np.concatenate(verts),
        labels=tuple(labels),
        segments=np.concatenate(segs) if segs else np.zeros((0, 2, d)),
        kinds=tuple(seg_kinds),
    )


def gauge_fix(lattice: Lattice) -> tuple[Lattice, np.ndarray]:
    """Rotate the generators into lower-triangular form with positive diagonal.

    Returns ``(L, R)`` with ``L = G @ R.T`` and ``R`` orthogonal.  ``R`` is a
    proper rotation whenever the generators are right-handed (``det G > 0``);
    a left-handed set needs ``det R = -1`` to reach a positive diagonal.
    """
    g = lattice.generators
    # G^T = Q U  =>  G = U^T Q^T with U^T lower-triangular
    q, u = np.linalg.qr(g.T)
    signs = np.sign(np.diag(u))
    signs[signs == 0] = 1.0
    rot = (q * signs).T
    lower = np.tril(g @ rot.T)
    return Lattice(lower), rot


def realized_edges(framework: Framework) -> np.ndarray:
    """All edge vectors of the framework as an (E, d) array."""
    return np.array(
        [edge_vector(framework.graph, framework.placement, framework.lattice, k) for k in range(len(framework.graph.edges))]
    ).reshape(-1, framework.dim)


def rigid_motion(framework: Framework, rotation: np.ndarray, translation: Iterable[float] | None = None) -> Framework:
    """Apply ``x -> R x + t`` to the placement and ``g -> R g`` to the generators."""
    t = np.zeros(framework.dim) if translation is None else np.asarray(translation, dtype=float)
    coords = framework.placement.coords @ rotation.T + t
    gens = framework.lattice.generators @ rotation.T
    return Framework(framework.graph, Placement(coords), Lattice(gens), dict(framework.images))
