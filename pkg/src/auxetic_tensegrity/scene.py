"""Scene files: parsing, validation and serialization.

A scene is a JSON document (schema ``auxetic-tensegrity/scene/v1``) holding a
periodic framework, its control split and the contacts to be replaced by
tetrahedra.  Schema and semantic errors carry the line of the offending
entry.
"""
from __future__ import annotations

import copy
import hashlib
import json
import json.decoder
import json.scanner
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from .energy import ConstraintSystem, TensegrityModel, assemble
from .framework import Bar, Cable, ControlSplit, Edge, Framework, Lattice, PeriodicGraph, Placement, TauControl
from .pipeline import SEED_MODES, ContactGraphError, PipelineSettings, tetrahedralize

SCENE_SCHEMA_ID = "auxetic-tensegrity/scene/v1"
DEFAULT_CABLE = (0.1, 1.0)

_num = {"type": "number"}
_int_vec = {"type": "array", "items": {"type": "integer"}}
_num_vec = {"type": "array", "items": _num}

SCENE_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["schema", "dim", "vertices", "edges", "lattice", "controls"],
    "properties": {
        "schema": {"const": SCENE_SCHEMA_ID},
        "name": {"type": "string"},
        "description": {"type": "string"},
        "dim": {"enum": [2, 3]},
        "vertices": {
            "type": "array",
            "minItems": 1,
            "items": {
                "oneOf": [
                    {
                        "type": "object",
                        "additionalProperties": False,
                        "required": ["label", "coords"],
                        "properties": {"label": {"type": "string", "minLength": 1}, "coords": _num_vec},
                    },
                    {
                        "type": "object",
                        "additionalProperties": False,
                        "required": ["label", "image_of", "shift"],
                        "properties": {
                            "label": {"type": "string", "minLength": 1},
                            "image_of": {"type": "string"},
                            "shift": _int_vec,
                        },
                    },
                ]
            },
        },
        "edges": {
            "type": "array",
            "items": {
                "type": "object",
                "additionalProperties": False,
                "required": ["i", "j", "kind"],
                "properties": {
                    "i": {"type": "string"},
                    "j": {"type": "string"},
                    "lift": _int_vec,
                    "kind": {"enum": ["bar", "cable"]},
                    "length": _num,
                    "rest_length": _num,
                    "stiffness": _num,
                },
            },
        },
        "lattice": {"type": "array", "items": _num_vec},
        "controls": {
            "type": "object",
            "additionalProperties": False,
            "required": ["tau"],
            "properties": {
                "tau": {
                    "type": "array",
                    "minItems": 1,
                    "items": {
                        "type": "object",
                        "additionalProperties": False,
                        "required": ["entry"],
                        "properties": {"entry": {"type": "string"}, "scale": _num},
                    },
                },
                "fixed": {"type": "array", "items": {"type": "string"}},
            },
        },
        "contacts": {"type": "array", "items": {"type": "integer"}},
        "radius": _num,
        "tetra": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "internal": {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["rest_length", "stiffness"],
                    "properties": {"rest_length": _num, "stiffness": _num},
                },
                "seed": {"enum": list(SEED_MODES)},
                "split_coords": {"type": "object", "additionalProperties": {"type": "array", "items": _num}},
            },
        },
        "solver": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "descent": {"type": "object"},
                "tracker": {"type": "object"},
                "polish": {"type": "boolean"},
                "accept_max_iters": {"type": "boolean"},
            },
        },
        "deformation": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"tau_start": _num, "tau_end": _num, "step": _num, "lag": _num},
        },
        "provenance": {"type": "object"},
    },
}


@dataclass(frozen=True)
class SceneIssue:
    path: str
    line: int | None
    message: str

    def __str__(self):
        where = f"line {self.line}: " if self.line else ""
        return f"{where}{self.path or '<root>'}: {self.message}"


class SceneError(ValueError):
    def __init__(self, issues: list[SceneIssue], source: str | None = None):
        self.issues = list(issues)
        self.source = source
        head = f"{source}: " if source else ""
        super().__init__(head + "; ".join(str(i) for i in self.issues))


@dataclass(frozen=True)
class Scene:
    name: str
    framework: Framework
    controls: ControlSplit
    contacts: tuple[int, ...] = ()
    radius: float | None = None
    internal: tuple[float, float] | None = None
    seed: str = "half-radius"
    split_coords: dict = field(default_factory=dict)
    solver: dict = field(default_factory=dict)
    deformation: dict = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)
    description: str = ""

    @property
    def dim(self) -> int:
        return self.framework.dim

    def model(self) -> TensegrityModel:
        if not self.contacts:
            return TensegrityModel(self.framework, (), self.controls)
        return tetrahedralize(self.framework, self.contacts, self.radius, self.controls, self.internal, self.seed, self.split_coords)

    def system(self) -> ConstraintSystem:
        return assemble(self.model())

    def settings(self) -> PipelineSettings:
        return PipelineSettings.from_dict(self.solver)

    def digest(self) -> str:
        blob = json.dumps(scene_to_dict(self), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


# --------------------------------------------------------------------------
# JSON with source positions


def _loads_with_positions(text: str):
    """``json.loads`` that also returns ``{id(container): offset}``."""
    positions: dict[int, int] = {}
    decoder = json.JSONDecoder()

    def parse_object(s_and_end, strict, scan_once, object_hook, object_pairs_hook, memo=None, *args):
        obj, end = json.decoder.JSONObject(s_and_end, strict, scan_once, object_hook, object_pairs_hook, memo)
        positions[id(obj)] = s_and_end[1] - 1
        return obj, end

    def parse_array(s_and_end, scan_once, *args):
        arr, end = json.decoder.JSONArray(s_and_end, scan_once)
        positions[id(arr)] = s_and_end[1] - 1
        return arr, end

    decoder.parse_object = parse_object
    decoder.parse_array = parse_array
    decoder.scan_once = json.scanner.py_make_scanner(decoder)
    return decoder.decode(text), positions


def _line_of(data, path, positions, text) -> int | None:
    node, best = data, positions.get(id(data))
    for key in path:
        try:
            node = node[key]
        except (KeyError, IndexError, TypeError):
            break
        if id(node) in positions:
            best = positions[id(node)]
    if best is None or text is None:
        return None
    return text.count("\n", 0, best) + 1


def _fmt_path(path) -> str:
    out = ""
    for p in path:
        out += f"[{p}]" if isinstance(p, int) else (f".{p}" if out else str(p))
    return out


# --------------------------------------------------------------------------
# dict <-> Scene


def scene_from_dict(data: dict, *, text: str | None = None, positions: dict | None = None, source: str | None = None) -> Scene:
    positions = positions or {}
    issues: list[SceneIssue] = []

    def issue(path, message):
        issues.append(SceneIssue(_fmt_path(path), _line_of(data, path, positions, text), message))

    validator = jsonschema.Draft202012Validator(SCENE_SCHEMA)
    for err in sorted(validator.iter_errors(data), key=lambda e: list(map(str, e.absolute_path))):
        issue(list(err.absolute_path), err.message)
    if issues:
        raise SceneError(issues, source)

    d = data["dim"]
    labels: list[str] = []
    coords: list = []
    images_raw: dict[str, tuple[str, list[int], int]] = {}
    seen: set[str] = set()
    for k, v in enumerate(data["vertices"]):
        lab = v["label"]
        if lab in seen:
            issue(["vertices", k, "label"], f"duplicate vertex label {lab!r}")
        seen.add(lab)
        if "." in lab or "@" in lab:
            issue(["vertices", k, "label"], "labels may not contain '.' or '@'")
        if "coords" in v:
            if len(v["coords"]) != d:
                issue(["vertices", k, "coords"], f"expected {d} coordinates")
            labels.append(lab)
            coords.append(v["coords"])
        else:
            if len(v["shift"]) != d:
                issue(["vertices", k, "shift"], f"expected {d} shift entries")
            images_raw[lab] = (v["image_of"], v["shift"], k)
    images: dict[str, tuple[int, tuple[int, ...]]] = {}
    for lab, (target, shift, k) in images_raw.items():
        if target not in labels:
            issue(["vertices", k, "image_of"], f"{target!r} is not a vertex with coordinates")
        else:
            images[lab] = (labels.index(target), tuple(shift))

    lat = data["lattice"]
    if len(lat) != d or any(len(row) != d for row in lat):
        issue(["lattice"], f"lattice must be a {d}x{d} matrix")
    if issues:
        raise SceneError(issues, source)
    lattice_arr = np.array(lat, dtype=float)
    if np.linalg.matrix_rank(lattice_arr) < d:
        issue(["lattice"], "lattice is rank deficient")
        raise SceneError(issues, source)
    lattice = Lattice(lattice_arr)
    placement = Placement(np.array(coords, dtype=float).reshape(len(labels), d))

    def resolve(lab, path):
        if lab in images:
            return images[lab]
        if lab in labels:
            return labels.index(lab), (0,) * d
        issue(path, f"unknown vertex {lab!r}")
        return None

    edges: list[Edge] = []
    for k, e in enumerate(data["edges"]):
        a = resolve(e["i"], ["edges", k, "i"])
        b = resolve(e["j"], ["edges", k, "j"])
        lift = e.get("lift", [0] * d)
        if len(lift) != d:
            issue(["edges", k, "lift"], f"expected {d} lift entries")
            continue
        if a is None or b is None:
            continue
        net = tuple(int(x) for x in np.asarray(lift) + np.asarray(b[1]) - np.asarray(a[1]))
        try:
            if e["kind"] == "bar":
                for key in ("rest_length", "stiffness"):
                    if key in e:
                        issue(["edges", k, key], "bars take no cable parameters")
                length = e.get("length")
                if length is None:
                    vec = placement[b[0]] + lattice.translation(net) - placement[a[0]]
                    length = float(np.linalg.norm(vec))
                kind = Bar(float(length))
            else:
                if "length" in e:
                    issue(["edges", k, "length"], "cables take rest_length, not length")
                kind = Cable(float(e.get("rest_length", DEFAULT_CABLE[0])), float(e.get("stiffness", DEFAULT_CABLE[1])))
        except ValueError as exc:
            issue(["edges", k], str(exc))
            continue
        edges.append(Edge(a[0], b[0], net, kind))

    contacts = tuple(int(c) for c in data.get("contacts", []))
    for n, c in enumerate(contacts):
        if not 0 <= c < len(data["edges"]):
            issue(["contacts", n], f"contact {c} is not an edge index")
        elif data["edges"][c]["kind"] != "bar":
            issue(["contacts", n], f"contact {c} references a cable")
    radius = data.get("radius")
    if radius is not None and not radius > 0:
        issue(["radius"], f"radius must be positive, got {radius}")
    if contacts and radius is None:
        issue(["radius"], "a radius is required when contacts are listed")
    if contacts and d != 3:
        issue(["contacts"], "contacts are only supported for dim 3")
    internal = None
    if "tetra" in data and "internal" in data["tetra"]:
        spec = data["tetra"]["internal"]
        internal = (float(spec["rest_length"]), float(spec["stiffness"]))
        if internal[0] < 0 or internal[1] <= 0:
            issue(["tetra", "internal"], "internal cables need rest_length >= 0 and stiffness > 0")

    ctl = data["controls"]
    try:
        controls = ControlSplit(
            tuple(TauControl(t["entry"], float(t.get("scale", 1.0))) for t in ctl["tau"]),
            tuple(ctl.get("fixed", [])),
        )
    except ValueError as exc:
        issue(["controls"], str(exc))
        controls = None
    if issues:
        raise SceneError(issues, source)

    try:
        graph = PeriodicGraph(d, tuple(labels), tuple(edges), check_connected=not contacts)
        framework = Framework(graph, placement, lattice, images)
    except ValueError as exc:
        issue(["edges"], str(exc))
        raise SceneError(issues, source) from None

    try:
        PipelineSettings.from_dict(data.get("solver"))
    except (TypeError, ValueError) as exc:
        issue(["solver"], str(exc))

    scene = Scene(
        name=data.get("name", "scene"),
        framework=framework,
        controls=controls,
        contacts=contacts,
        radius=None if radius is None else float(radius),
        internal=internal,
        seed=data.get("tetra", {}).get("seed", "half-radius"),
        split_coords={k: [float(c) for c in v] for k, v in data.get("tetra", {}).get("split_coords", {}).items()},
        solver=copy.deepcopy(data.get("solver", {})),
        deformation=dict(data.get("deformation", {})),
        provenance=copy.deepcopy(data.get("provenance", {})),
        description=data.get("description", ""),
    )
    try:
        scene.model()
    except (ContactGraphError, ValueError) as exc:
        issue(["contacts"], str(exc))
    if issues:
        raise SceneError(issues, source)
    return scene


def scene_to_dict(scene: Scene) -> dict:
    fw = scene.framework
    graph = fw.graph
    d = fw.dim
    out: dict = {"schema": SCENE_SCHEMA_ID, "name": scene.name}
    if scene.description:
        out["description"] = scene.description
    out["dim"] = d
    verts = [{"label": lab, "coords": fw.placement[k].tolist()} for k, lab in enumerate(graph.labels)]
    for lab, (v, shift) in fw.images.items():
        verts.append({"label": lab, "image_of": graph.labels[v], "shift": list(shift)})
    out["vertices"] = verts
    edges = []
    for e in graph.edges:
        rec = {"i": graph.labels[e.i], "j": graph.labels[e.j], "lift": list(e.lift)}
        if e.is_bar:
            rec.update(kind="bar", length=e.kind.length)
        else:
            rec.update(kind="cable", rest_length=e.kind.rest_length, stiffness=e.kind.stiffness)
        edges.append(rec)
    out["edges"] = edges
    out["lattice"] = fw.lattice.generators.tolist()
    out["controls"] = {
        "tau": [{"entry": c.entry, "scale": c.scale} for c in scene.controls.tau],
        "fixed": list(scene.controls.fixed),
    }
    if scene.contacts:
        out["contacts"] = list(scene.contacts)
    if scene.radius is not None:
        out["radius"] = scene.radius
    tetra = {}
    if scene.internal is not None:
        tetra["internal"] = {"rest_length": scene.internal[0], "stiffness": scene.internal[1]}
    if scene.seed != "half-radius":
        tetra["seed"] = scene.seed
    if scene.split_coords:
        tetra["split_coords"] = {k: list(v) for k, v in scene.split_coords.items()}
    if tetra:
        out["tetra"] = tetra
    if scene.solver:
        out["solver"] = copy.deepcopy(scene.solver)
    if scene.deformation:
        out["deformation"] = dict(scene.deformation)
    if scene.provenance:
        out["provenance"] = copy.deepcopy(scene.provenance)
    return out


def loads_scene(text: str, source: str | None = None) -> Scene:
    try:
        data, positions = _loads_with_positions(text)
    except json.JSONDecodeError as exc:
        raise SceneError([SceneIssue("", exc.lineno, f"invalid JSON: {exc.msg}")], source) from None
    if not isinstance(data, dict):
        raise SceneError([SceneIssue("", 1, "a scene must be a JSON object")], source)
    return scene_from_dict(data, text=text, positions=positions, source=source)


def parse_scene(path) -> Scene:
    """Read and validate a scene file.  Raises :class:`SceneError`."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise SceneError([SceneIssue("", None, f"cannot read scene: {exc.strerror or exc}")], str(path)) from None
    return loads_scene(text, str(path))


def dumps_scene(scene: Scene) -> str:
    return json.dumps(scene_to_dict(scene), indent=2) + "\n"


def bundled_scenes() -> list[str]:
    root = resources.files("auxetic_tensegrity") / "data"
    return sorted(p.name[: -len(".json")] for p in root.iterdir() if p.name.endswith(".json"))


def bundled_scene_path(name: str) -> Path:
    path = Path(str(resources.files("auxetic_tensegrity") / "data" / f"{name}.json"))
    if not path.exists():
        raise FileNotFoundError(f"no bundled scene {name!r}; available: {bundled_scenes()}")
    return path


def load_bundled(name: str) -> Scene:
    return parse_scene(bundled_scene_path(name))


def resolve_scene(spec: str) -> Scene:
    """A scene file path, or the name of a bundled scene."""
    if Path(spec).exists() or spec.endswith(".json"):
        return parse_scene(spec)
    return load_bundled(spec)
