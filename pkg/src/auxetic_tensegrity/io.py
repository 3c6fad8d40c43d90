"""Trace CSV, report JSON, plot-data CSV and equilibrium state files.

All writers go through a temporary file in the target directory followed by
``os.replace`` so readers never observe a half-written artifact.  The trace
writer streams rows into the temporary file and publishes it on close, which
also happens when a deformation aborts part way.
"""
from __future__ import annotations

import contextlib
import csv
import io
import json
import os
import tempfile
from pathlib import Path

import numpy as np

from .framework import AXES
from .pipeline import DeformationTrace, TraceStep

TRACE_SCHEMA_ID = "auxetic-tensegrity/trace/v1"
STATE_SCHEMA_ID = "auxetic-tensegrity/state/v1"
PLOT_HEADER = ("tau", "nu_xy", "nu_xz", "opnorm")


class TraceFormatError(ValueError):
    pass


def lattice_columns(dim: int) -> list[str]:
    """Row-major lower-triangular entries ``c11, c21, c22, ...``."""
    return [f"c{i + 1}{j + 1}" for i in range(dim) for j in range(i + 1)]


def trace_header(labels, dim: int) -> list[str]:
    coords = [f"{lab}.{AXES[k]}" for lab in labels for k in range(dim)]
    return ["tau", *lattice_columns(dim), "energy", "residual_norm", *coords]


def _lower(lattice: np.ndarray) -> list[float]:
    d = lattice.shape[0]
    return [float(lattice[i, j]) for i in range(d) for j in range(i + 1)]


def trace_row(step: TraceStep) -> list[float]:
    lat = np.asarray(step.lattice, dtype=float)
    return [float(step.tau), *_lower(lat), float(step.energy), float(step.residual_norm), *np.ravel(step.coords).tolist()]


@contextlib.contextmanager
def atomic_open(path, mode: str = "w"):
    """Write to a sibling temporary file, then move it over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, mode, newline="" if "b" not in mode else None) as fh:
            yield fh
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        with contextlib.suppress(FileNotFoundError):
            os.unlink(tmp)
        raise


def write_json(path, data) -> None:
    with atomic_open(path) as fh:
        json.dump(data, fh, indent=2, allow_nan=False)
        fh.write("\n")


class TraceWriter:
    """Streams trace rows; the file appears at ``path`` when closed.

    Rows written before an error are kept: closing publishes whatever was
    recorded, so a failed deformation still leaves a valid partial trace.
    """

    def __init__(self, path, labels, dim: int, metadata: dict | None = None):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self.header = trace_header(labels, dim)
        fd, self._tmp = tempfile.mkstemp(prefix=f".{self.path.name}.", dir=self.path.parent)
        self._fh = os.fdopen(fd, "w", newline="")
        self._fh.write(f"# {TRACE_SCHEMA_ID}\n")
        if metadata:
            self._fh.write(f"# meta {json.dumps(metadata, sort_keys=True)}\n")
        self._csv = csv.writer(self._fh)
        self._csv.writerow(self.header)
        self.rows = 0

    def write(self, step: TraceStep) -> None:
        row = trace_row(step)
        if len(row) != len(self.header):
            raise TraceFormatError(f"row has {len(row)} values, header has {len(self.header)}")
        self._csv.writerow([repr(v) for v in row])
        self._fh.flush()
        self.rows += 1

    def close(self) -> None:
        if self._fh.closed:
            return
        self._fh.flush()
        os.fsync(self._fh.fileno())
        self._fh.close()
        os.replace(self._tmp, self.path)

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
        return False


def write_trace(path, trace: DeformationTrace) -> None:
    with TraceWriter(path, trace.labels, trace.dim, trace.metadata) as w:
        for step in trace.steps:
            w.write(step)


def _parse_header(header: list[str]) -> tuple[int, tuple[str, ...]]:
    for dim in (3, 2):
        lead = ["tau", *lattice_columns(dim), "energy", "residual_norm"]
        if header[: len(lead)] == lead:
            break
    else:
        raise TraceFormatError(f"unexpected leading columns {header[:8]}")
    coords = header[len(lead):]
    if len(coords) % dim:
        raise TraceFormatError(f"{len(coords)} coordinate columns are not a multiple of {dim}")
    labels = []
    for k in range(0, len(coords), dim):
        group = coords[k : k + dim]
        label = group[0].rsplit(".", 1)[0]
        if group != [f"{label}.{AXES[a]}" for a in range(dim)]:
            raise TraceFormatError(f"coordinate columns {group} do not follow '<label>.x, <label>.y, ...'")
        labels.append(label)
    if header != trace_header(labels, dim):
        raise TraceFormatError("header does not match the documented trace layout")
    return dim, tuple(labels)


def loads_trace(text: str, source: str = "<string>") -> DeformationTrace:
    lines = text.splitlines()
    if not lines or lines[0].strip() != f"# {TRACE_SCHEMA_ID}":
        raise TraceFormatError(f"{source}: missing schema line '# {TRACE_SCHEMA_ID}'")
    metadata: dict = {}
    body_start = 1
    while body_start < len(lines) and lines[body_start].startswith("#"):
        comment = lines[body_start][1:].strip()
        if comment.startswith("meta "):
            try:
                metadata = json.loads(comment[5:])
            except json.JSONDecodeError as exc:
                raise TraceFormatError(f"{source}: unreadable metadata line: {exc}") from exc
        body_start += 1
    reader = csv.reader(io.StringIO("\n".join(lines[body_start:])))
    try:
        header = next(reader)
    except StopIteration:
        raise TraceFormatError(f"{source}: no header row") from None
    dim, labels = _parse_header(header)
    nlat = len(lattice_columns(dim))
    steps = []
    for lineno, row in enumerate(reader, start=body_start + 2):
        if not row:
            continue
        if len(row) != len(header):
            raise TraceFormatError(f"{source}:{lineno}: expected {len(header)} values, found {len(row)}")
        try:
            vals = np.array([float(v) for v in row])
        except ValueError as exc:
            raise TraceFormatError(f"{source}:{lineno}: {exc}") from exc
        lat = np.zeros((dim, dim))
        lat[np.tril_indices(dim)] = vals[1 : 1 + nlat]
        coords = vals[3 + nlat :].reshape(len(labels), dim)
        steps.append(TraceStep(vals[0], coords, lat, vals[1 + nlat], vals[2 + nlat]))
    if not steps:
        raise TraceFormatError(f"{source}: trace has no rows")
    return DeformationTrace(labels, dim, steps, metadata)


def read_trace(path) -> DeformationTrace:
    path = Path(path)
    return loads_trace(path.read_text(), str(path))


# --------------------------------------------------------------------------
# analysis artifacts


def plot_rows(report) -> list[tuple]:
    """``(tau, nu_xy, nu_xz, opnorm)`` per step; blanks where undefined.

    Poisson ratios are attached to the right end of their step and operator
    norms to the later parameter of their pair.
    """
    taus = np.asarray(report.taus)
    nxy = report.nu.get("xy")
    nxz = report.nu.get("xz")
    norm_at = {round(float(b), 12): n for a, b, n in report.norms.tolist()}
    rows = []
    for k, t in enumerate(taus):
        xy = float(nxy[k - 1]) if nxy is not None and k > 0 else None
        xz = float(nxz[k - 1]) if nxz is not None and k > 0 else None
        rows.append((float(t), xy, xz, norm_at.get(round(float(t), 12))))
    return rows


def write_plot_csv(path, report) -> None:
    with atomic_open(path) as fh:
        w = csv.writer(fh)
        w.writerow(PLOT_HEADER)
        for row in plot_rows(report):
            w.writerow(["" if v is None else repr(v) for v in row])


def write_report(path, report) -> None:
    write_json(path, report.to_dict())


# --------------------------------------------------------------------------
# equilibrium state


def state_dict(system, eq, scene_name: str | None = None) -> dict:
    coords, lattice = system.unpack(eq.x, eq.tau)
    return {
        "schema": STATE_SCHEMA_ID,
        "scene": scene_name,
        "tau": float(eq.tau),
        "x": np.asarray(eq.x, dtype=float).tolist(),
        "multipliers": np.asarray(eq.lam, dtype=float).tolist(),
        "energy": float(eq.energy),
        "projected_gradient": float(eq.projected_gradient),
        "residual_norm": float(eq.residual_norm),
        "labels": list(system.layout.labels),
        "coords": np.asarray(coords).tolist(),
        "lattice": np.asarray(lattice).tolist(),
    }


def read_state(path) -> dict:
    data = json.loads(Path(path).read_text())
    if data.get("schema") != STATE_SCHEMA_ID:
        raise ValueError(f"{path}: not a state file (schema {data.get('schema')!r})")
    return data


__all__ = [
    "PLOT_HEADER",
    "STATE_SCHEMA_ID",
    "TRACE_SCHEMA_ID",
    "TraceFormatError",
    "TraceWriter",
    "atomic_open",
    "lattice_columns",
    "loads_trace",
    "plot_rows",
    "read_state",
    "read_trace",
    "state_dict",
    "trace_header",
    "write_json",
    "write_plot_csv",
    "write_report",
    "write_trace",
]
