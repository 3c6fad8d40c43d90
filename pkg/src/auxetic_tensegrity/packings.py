"""Generators for the bundled scenes.

Each function returns a scene dictionary ready for
:func:`auxetic_tensegrity.scene.scene_from_dict`.  The rod-packing scenes are
built from the rod axes of the cubic cylinder packings: contacts are found
numerically as closest approaches between rods of different directions, each
contact becomes a bar, and the rod between consecutive contacts becomes a
cable.  Contact points are pushed away from their partner by ``offset`` so
the filaments start as polygonal helices.
"""
from __future__ import annotations

import itertools
import json
from pathlib import Path

import numpy as np

from .scene import SCENE_SCHEMA_ID

LOWER_FIXED_3D = ["L12", "L13", "L23"]


def honeycomb_scene() -> dict:
    """Re-entrant honeycomb of unit bars driven along ``(tau, +-sqrt(2 tau - tau^2))``.

    The lattice is stored as rows ``(2 tau, 0)`` and ``(tau, s)`` so that it is
    lower-triangular; the bar-direction generators are ``row 2`` and
    ``row 1 - row 2``.
    """
    return {
        "schema": SCENE_SCHEMA_ID,
        "name": "honeycomb",
        "description": "Four-vertex honeycomb motif with three unit bars; deformation path has a closed form.",
        "dim": 2,
        "vertices": [
            {"label": "v1", "coords": [0.0, 0.0]},
            {"label": "v2", "coords": [1.0, 0.0]},
            {"label": "v3", "image_of": "v1", "shift": [0, 1]},
            {"label": "v4", "image_of": "v1", "shift": [1, -1]},
        ],
        "edges": [
            {"i": "v1", "j": "v2", "kind": "bar", "length": 1.0},
            {"i": "v2", "j": "v3", "kind": "bar", "length": 1.0},
            {"i": "v2", "j": "v4", "kind": "bar", "length": 1.0},
        ],
        "lattice": [[2.0, 0.0], [1.0, 1.0]],
        "controls": {
            "tau": [{"entry": "L11", "scale": 2.0}, {"entry": "L21", "scale": 1.0}],
            "fixed": ["v1.x", "v1.y", "L12"],
        },
        "deformation": {"tau_start": 0.55, "tau_end": 1.45, "step": 0.001, "lag": 0.003},
        "provenance": {
            "source": "analytic",
            "notes": "v3 and v4 are translates of v1; tau drives L11 = 2 tau and L21 = tau.",
            "vertices": 4,
            "bars": 3,
            "contacts": 0,
        },
    }


def single_clasp_scene(radius: float = 0.25, span: float = 1.0) -> dict:
    """Two orthogonal filaments h-i-k and m-j-n touching at i, j.

    The filament ends are pinned, so the incoming cables stay taut and the
    clasp has an isolated energy minimum.
    """
    r = float(radius)
    verts = [
        ("h", [-span, 0.0, 0.0]),
        ("i", [0.0, 0.0, r]),
        ("k", [span, 0.0, 0.0]),
        ("m", [0.0, -span, 0.0]),
        ("j", [0.0, 0.0, -r]),
        ("n", [0.0, span, 0.0]),
    ]
    fixed = [f"L{a}{b}" for a in (1, 2, 3) for b in (1, 2, 3) if (a, b) != (1, 1)]
    fixed += [f"{lab}.{ax}" for lab in "hkmn" for ax in "xyz"]
    return {
        "schema": SCENE_SCHEMA_ID,
        "name": "single_clasp",
        "description": "One orthogonal contact between two filaments with pinned ends.",
        "dim": 3,
        "vertices": [{"label": lab, "coords": c} for lab, c in verts],
        "edges": [
            {"i": "h", "j": "i", "kind": "cable", "rest_length": 0.1, "stiffness": 1.0},
            {"i": "i", "j": "k", "kind": "cable", "rest_length": 0.1, "stiffness": 1.0},
            {"i": "m", "j": "j", "kind": "cable", "rest_length": 0.1, "stiffness": 1.0},
            {"i": "j", "j": "n", "kind": "cable", "rest_length": 0.1, "stiffness": 1.0},
            {"i": "i", "j": "j", "kind": "bar", "length": 2 * r},
        ],
        "lattice": np.eye(3).tolist(),
        "controls": {"tau": [{"entry": "L11"}], "fixed": fixed},
        "contacts": [4],
        "radius": r,
        "solver": {"descent": {"grad_tol": 1e-9}},
        "provenance": {
            "source": "constructed",
            "notes": "Non-periodic: nothing references the lattice, so tau has no effect.",
            "contacts": 1,
        },
    }


# --------------------------------------------------------------------------
# rod packings


def _rod_points(rods, per_period: int):
    """Sample points at equal spacing along each rod (one lattice period)."""
    pts, owner = [], []
    for r_idx, (direction, origin) in enumerate(rods):
        d = np.asarray(direction, dtype=float)
        for s in range(per_period):
            pts.append(np.mod(np.asarray(origin, dtype=float) + d * s / per_period, 1.0))
            owner.append(r_idx)
    return np.array(pts), owner


def _find_contacts(pts, owner, rods, distance, tol=1e-9):
    """Pairs of points on differently directed rods at ``distance`` (periodic)."""
    shifts = np.array(list(itertools.product((-1, 0, 1), repeat=3)))
    pairs = []
    for a in range(len(pts)):
        for b in range(a + 1, len(pts)):
            if owner[a] == owner[b]:
                continue
            da = np.asarray(rods[owner[a]][0], dtype=float)
            db = np.asarray(rods[owner[b]][0], dtype=float)
            if abs(abs(da @ db) - np.linalg.norm(da) * np.linalg.norm(db)) < tol:
                continue
            for n in shifts:
                vec = pts[b] + n - pts[a]
                if abs(np.linalg.norm(vec) - distance) < tol:
                    pairs.append((a, b, tuple(int(k) for k in n), vec / np.linalg.norm(vec)))
    return pairs


def _helix_split_coords(rods, per_period, pts, owner, partner, labels, offset, gap, scale):
    """Start the two copies of each contact point on the rod's helix.

    Applies when the contact offsets of every rod turn at a constant rate
    (a screw); returns ``{}`` otherwise.  The first copy of rod point 0
    faces forward and the first copy of every later point faces backward,
    matching the cable order that :func:`rod_packing_scene` emits.
    """
    if not offset or not gap:
        return {}
    out = {}
    for r_idx, (direction, _) in enumerate(rods):
        d = np.asarray(direction, dtype=float)
        idx = [k for k in range(len(pts)) if owner[k] == r_idx]
        offs = [partner[k] for k in idx]
        e1 = offs[0]
        e2 = offs[1] - (offs[1] @ e1) * e1
        if np.linalg.norm(e2) < 1e-9:
            return {}
        e2 = e2 / np.linalg.norm(e2)
        turn = np.arctan2(offs[1] @ e2, offs[1] @ e1)
        for s, k in enumerate(idx):
            want = e1 * np.cos(s * turn) + e2 * np.sin(s * turn)
            if not np.allclose(want, offs[s], atol=1e-9):
                return {}

        def helix(s, t):
            ang = (s + t) * turn
            return pts[idx[0]] + d * (s + t) / per_period + offset * (e1 * np.cos(ang) + e2 * np.sin(ang))

        for s, k in enumerate(idx):
            base = pts[k] - (pts[idx[0]] + d * s / per_period)
            first, second = (gap, -gap) if s == 0 else (-gap, gap)
            out[labels[k] + "-1"] = ((helix(s, first) + base) * scale).tolist()
            out[labels[k] + "-2"] = ((helix(s, second) + base) * scale).tolist()
    return out


def rod_packing_scene(name, rods, per_period, contact_distance, radius, offset, lattice_scale=1.0, description="",
                      notes="", split_gap=0.12, keep=None, solver=None, deformation=None):
    """Cable-chain filaments along ``rods`` with bars at every contact.

    ``keep`` selects a subset of the contacts (indices into the sorted list
    of closest approaches) when rod points have several partners.
    """
    pts, owner = _rod_points(rods, per_period)
    pairs = _find_contacts(pts, owner, rods, contact_distance)
    if keep is not None:
        pairs = [pairs[k] for k in keep]
    partner = {}
    for a, b, n, u in pairs:
        if a in partner or b in partner:
            raise ValueError("a rod point has more than one contact partner")
        partner[a] = -u
        partner[b] = u
    if len(partner) != len(pts):
        raise ValueError(f"{len(pts) - len(partner)} rod points without a contact partner")
    labels = [f"r{owner[k]}p{k % per_period}" for k in range(len(pts))]
    coords = [(pts[k] + offset * partner[k]) * lattice_scale for k in range(len(pts))]
    edges = []
    for r_idx, (direction, origin) in enumerate(rods):
        d = np.asarray(direction, dtype=int)
        idx = [k for k in range(len(pts)) if owner[k] == r_idx]
        for s in range(per_period):
            a, b = idx[s], idx[(s + 1) % per_period]
            # the next point along the rod, wrapped back into the cell
            target = pts[a] + d / per_period
            lift = np.round(target - pts[b]).astype(int)
            edges.append({"i": labels[a], "j": labels[b], "lift": lift.tolist(), "kind": "cable", "rest_length": 0.1, "stiffness": 1.0})
    contacts = []
    for a, b, n, u in pairs:
        contacts.append(len(edges))
        edges.append({"i": labels[a], "j": labels[b], "lift": list(n), "kind": "bar", "length": 2 * radius})
    fixed = LOWER_FIXED_3D + [f"{labels[0]}.{ax}" for ax in "xyz"]
    tetra = {"seed": "bend"}
    split = _helix_split_coords(rods, per_period, pts, owner, partner, labels, offset, split_gap, lattice_scale)
    if split:
        tetra["split_coords"] = split
    return {
        "schema": SCENE_SCHEMA_ID,
        "name": name,
        "description": description,
        "dim": 3,
        "vertices": [{"label": lab, "coords": [float(c) for c in xyz]} for lab, xyz in zip(labels, coords)],
        "edges": edges,
        "lattice": (np.eye(3) * lattice_scale).tolist(),
        "controls": {"tau": [{"entry": "L11"}], "fixed": fixed},
        "contacts": contacts,
        "radius": radius,
        "tetra": tetra,
        **({"solver": solver} if solver else {}),
        **({"deformation": deformation} if deformation else {}),
        "provenance": {
            "source": "constructed from the rod axes of the cubic cylinder packing",
            "rods": [{"direction": list(d), "origin": list(map(float, o))} for d, o in rods],
            "points_per_rod": per_period,
            "contact_distance_straight": contact_distance,
            "helix_offset": offset,
            "contacts": len(contacts),
            "kept_contacts": None if keep is None else list(keep),
            "notes": notes,
        },
    }


# descent only has to land in the basin; Newton on the Lagrange system finishes
ROD_SOLVER = {"descent": {"grad_tol": 1e-6, "max_iters": 400}, "accept_max_iters": True}

PI_RODS = [
    ((1, 0, 0), (0.0, 0.75, 0.5)),
    ((1, 0, 0), (0.0, 0.25, 0.0)),
    ((0, 1, 0), (0.5, 0.0, 0.75)),
    ((0, 1, 0), (0.0, 0.0, 0.25)),
    ((0, 0, 1), (0.75, 0.5, 0.0)),
    ((0, 0, 1), (0.25, 0.0, 0.0)),
]


def pi_plus_scene(radius: float = 0.165, offset: float | None = None) -> dict:
    """Three directions of rods, two per direction, four contacts per period."""
    offset = radius - 0.125 if offset is None else offset
    return rod_packing_scene(
        "pi_plus",
        PI_RODS,
        4,
        0.25,
        radius,
        offset,
        description="Helical filaments on the axes of the cubic three-direction rod packing.",
        notes="Straight rods touch at distance 1/4; contact points start displaced by the helix offset "
        "away from their partner so the centre bar has length 2r.",
        solver=ROD_SOLVER,
        deformation={"tau_start": 0.93, "tau_end": 1.52, "step": 0.001, "lag": 0.003},
    )


SIGMA_RODS = [
    ((1, 1, 1), (0.125, 0.125, 0.125)),
    ((1, 1, -1), (0.625, 0.125, 0.375)),
    ((1, -1, 1), (0.125, 0.375, 0.625)),
    ((1, -1, -1), (0.625, 0.375, -0.125)),
]

# one partner per rod point; contact normals weighted 2:2:4 towards z
SIGMA_KEEP = (1, 4, 8, 11, 12, 14, 17, 19)


def sigma_plus_scene(radius: float = 0.2, offset: float | None = None, keep=SIGMA_KEEP) -> dict:
    """Four body-diagonal rod directions, one rod each, four points per period."""
    dist = float(np.sqrt(2) / 4)
    offset = radius - dist / 2 if offset is None else offset
    return rod_packing_scene(
        "sigma_plus",
        SIGMA_RODS,
        4,
        dist,
        radius,
        offset,
        description="Helical filaments on the body diagonals of the cubic four-direction rod packing.",
        notes="Straight rods on the body diagonals touch at distance sqrt(2)/4 and every rod point has three "
        "partners; one perfect matching of that contact graph is kept so each point carries a single bar.",
        keep=keep,
        solver=ROD_SOLVER,
        deformation={"tau_start": 0.81, "tau_end": 1.52, "step": 0.001, "lag": 0.003},
    )


def write_bundled(directory) -> list[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    out = []
    for scene in (honeycomb_scene(), single_clasp_scene(), pi_plus_scene(), sigma_plus_scene()):
        path = directory / f"{scene['name']}.json"
        path.write_text(json.dumps(scene, indent=2) + "\n")
        out.append(path)
    return out
