"""Poisson ratios, lattice transfer operators and the Gershgorin contraction test."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .framework import Lattice

DEFAULT_LAG = 3e-3


class ZeroStrain(ValueError):
    """The axial lattice length did not change between two steps."""


class CertificateInapplicable(ValueError):
    pass


def _lattice_stack(source) -> np.ndarray:
    """Accept a trace, a list of lattices or a ``(N, d, d)`` array."""
    if hasattr(source, "lattices"):
        return np.asarray(source.lattices, dtype=float)
    items = [s.generators if isinstance(s, Lattice) else s for s in source]
    return np.asarray(items, dtype=float)


def _generators(lat) -> np.ndarray:
    return np.asarray(lat.generators if isinstance(lat, Lattice) else lat, dtype=float)


# --------------------------------------------------------------------------
# Poisson's ratio


def strains(lengths) -> np.ndarray:
    """Relative change ``(L_j - L_{j-1}) / L_{j-1}`` of a length series."""
    lengths = np.asarray(lengths, dtype=float)
    return np.diff(lengths) / lengths[:-1]


def poisson_ratio(source, axis: str = "y") -> np.ndarray:
    """Per-step ``nu_x? = -e_? / e_x`` from the diagonal lattice entries.

    ``source`` is a trace, a stack of lattices or an ``(N, d)`` array of
    diagonal lengths.
    """
    arr = _lattice_stack(source) if hasattr(source, "lattices") else np.asarray(source, dtype=float)
    diag = np.diagonal(arr, axis1=1, axis2=2) if arr.ndim == 3 else arr
    k = "xyz".index(axis)
    if k == 0 or k >= diag.shape[1]:
        raise ValueError(f"axis {axis!r} is not a lateral axis of a {diag.shape[1]}-dimensional lattice")
    if diag.shape[0] < 2:
        raise ValueError("need at least two steps")
    ex = strains(diag[:, 0])
    zero = np.flatnonzero(ex == 0)
    if zero.size:
        raise ZeroStrain(f"no axial strain between steps {zero[0]} and {zero[0] + 1}")
    return -strains(diag[:, k]) / ex


def interval_poisson_ratio(lx: tuple[float, float], lateral: tuple[float, float]) -> float:
    """Whole-interval ratio from the end-point lengths."""
    ex = (lx[1] - lx[0]) / lx[0]
    if ex == 0:
        raise ZeroStrain("no axial strain over the interval")
    return -((lateral[1] - lateral[0]) / lateral[0]) / ex


# --------------------------------------------------------------------------
# transfer operators


@dataclass(frozen=True)
class TransferOperator:
    """``T`` with ``T G(tau2) = G(tau1)``; columns of ``G`` are the generators."""

    matrix: np.ndarray
    source_tau: float | None = None
    target_tau: float | None = None

    @property
    def norm(self) -> float:
        return operator_norm(self)


def transfer_operator(lat1, lat2, tau1: float | None = None, tau2: float | None = None) -> TransferOperator:
    """Linear map carrying the lattice at ``tau2`` onto the lattice at ``tau1``."""
    g1 = _generators(lat1).T
    g2 = _generators(lat2).T
    if np.linalg.matrix_rank(g2) < g2.shape[0]:
        raise np.linalg.LinAlgError("target lattice is singular")
    t = np.linalg.solve(g2.T, g1.T).T
    return TransferOperator(t, tau2, tau1)


def operator_norm(op) -> float:
    """Largest singular value."""
    mat = op.matrix if isinstance(op, TransferOperator) else np.asarray(op, dtype=float)
    return float(np.linalg.svd(mat, compute_uv=False)[0])


def lag_steps(taus, lag: float) -> int:
    taus = np.asarray(taus, dtype=float)
    if taus.size < 2:
        raise ValueError("need at least two steps")
    step = abs(taus[1] - taus[0])
    k = int(round(lag / step))
    if k < 1:
        raise ValueError(f"lag {lag} shorter than the grid step {step}")
    return k


def fixed_lag_norms(taus, lattices, lag: float = DEFAULT_LAG) -> np.ndarray:
    """Rows ``(tau1, tau2, |T_{tau2 tau1}|)`` for all pairs ``lag`` apart."""
    taus = np.asarray(taus, dtype=float)
    lats = _lattice_stack(lattices)
    k = lag_steps(taus, lag)
    rows = []
    for j in range(len(taus) - k):
        a, b = (j, j + k) if taus[j + k] > taus[j] else (j + k, j)
        rows.append((taus[a], taus[b], operator_norm(transfer_operator(lats[a], lats[b]))))
    return np.array(rows).reshape(-1, 3)


# --------------------------------------------------------------------------
# Gershgorin sufficient condition


def certificate_bounds(alpha: float, variant: str = "sound") -> np.ndarray:
    """Upper bounds on the three squared diagonal ratios for a given ``alpha``.

    ``"sound"`` collects every cross term of the Gershgorin row sums of
    ``T^T T`` (leading term ``4 alpha`` in each row).  ``"published"`` is the
    original statement, whose first row omits an ``alpha * a6^2`` term; it
    is kept for comparison and is not a valid certificate on its own.
    """
    a = float(alpha)
    if variant == "sound":
        return np.array(
            [
                1 - 4 * a - 14 * a**2 - 12 * a**3 - 4 * a**4,
                1 - 4 * a - 8 * a**2 - 4 * a**3,
                1 - 4 * a - 2 * a**2,
            ]
        )
    if variant == "published":
        return np.array(
            [
                (1 - 3 * a - 11 * a**2 - 12 * a**3 - 4 * a**4) / (1 + 2 * a**2),
                (1 - 3 * a - 7 * a**2 - 3 * a**3) / (1 + a + a**2 + a**3),
                (1 - 2 * a - a**2) / (1 + 2 * a + a**2),
            ]
        )
    raise ValueError(f"unknown certificate variant {variant!r}")


def alpha_limit(variant: str = "sound") -> float:
    """Smallest ``alpha`` at which some bound stops being positive."""
    from scipy.optimize import brentq

    return float(min(brentq(lambda a, k=k: certificate_bounds(a, variant)[k], 0.0, 1.0) for k in range(3)))


def _certificate_form(lattice: np.ndarray) -> np.ndarray:
    """Reorder a lower-triangular row lattice into the upper-triangular form
    the bounds are stated for (reverse both row and column order)."""
    return lattice[::-1, ::-1]


def offdiagonal_ratio(*lattices) -> float:
    """Smallest ``alpha`` with every off-diagonal entry at most ``alpha`` times every diagonal entry."""
    worst = 0.0
    for lat in lattices:
        g = _generators(lat)
        off = np.abs(g - np.diag(np.diag(g))).max()
        worst = max(worst, off / np.abs(np.diag(g)).min())
    return float(worst)


@dataclass(frozen=True)
class Certificate:
    tau1: float | None
    tau2: float | None
    alpha: float
    ratios_squared: tuple[float, float, float]
    bounds: tuple[float, float, float]
    applicable: bool
    passed: bool
    operator_norm: float

    @property
    def margins(self) -> tuple[float, ...]:
        return tuple(b - r for b, r in zip(self.bounds, self.ratios_squared))

    @property
    def consistent(self) -> bool:
        """A passing certificate must come with a contraction."""
        return not self.passed or self.operator_norm <= 1.0 + 1e-12


def certify_pair(
    lat1, lat2, tau1=None, tau2=None, alpha: float | None = None, strict: bool = False, variant: str = "sound"
) -> Certificate:
    """Evaluate the three diagonal-ratio inequalities for one pair of lattices.

    ``alpha`` defaults to the smallest value consistent with both lattices.
    With ``strict`` an inapplicable ``alpha`` raises instead of failing.
    """
    g1, g2 = _generators(lat1), _generators(lat2)
    if g1.shape != (3, 3) or g2.shape != (3, 3):
        raise ValueError("the certificate is stated for 3-periodic lattices")
    for g in (g1, g2):
        if np.any(np.abs(np.triu(g, 1)) > 1e-12):
            raise ValueError("lattices must be gauge fixed (lower-triangular)")
    a = offdiagonal_ratio(g1, g2) if alpha is None else float(alpha)
    limit = ALPHA_LIMITS[variant]
    applicable = a < limit
    if not applicable and strict:
        raise CertificateInapplicable(f"alpha = {a:.4g} >= {limit:.4g}")
    c1, c2 = np.diag(_certificate_form(g1)), np.diag(_certificate_form(g2))
    ratios = (c1 / c2) ** 2
    bounds = certificate_bounds(a, variant)
    passed = bool(applicable and np.all(ratios <= bounds))
    norm = operator_norm(transfer_operator(g1, g2))
    return Certificate(
        tau1, tau2, a, tuple(float(r) for r in ratios), tuple(float(b) for b in bounds), applicable, passed, norm
    )


def gershgorin_certificate(trace, lag: float = DEFAULT_LAG, variant: str = "sound") -> list[Certificate]:
    """Certificates for all pairs ``lag`` apart, with ``alpha`` taken over the
    whole trace as the hypothesis requires."""
    taus, lats = np.asarray(trace.taus), _lattice_stack(trace)
    k = lag_steps(taus, lag)
    alpha = offdiagonal_ratio(*lats)
    out = []
    for j in range(len(taus) - k):
        a, b = (j, j + k) if taus[j + k] > taus[j] else (j + k, j)
        out.append(certify_pair(lats[a], lats[b], taus[a], taus[b], alpha=alpha, variant=variant))
    return out


ALPHA_LIMITS = {v: alpha_limit(v) for v in ("sound", "published")}


# --------------------------------------------------------------------------
# honeycomb


@dataclass(frozen=True)
class HoneycombOracle:
    tau: float
    generators: np.ndarray

    @property
    def lateral(self) -> float:
        return float(self.generators[0, 1])

    def transfer(self, tau2: float) -> np.ndarray:
        """Closed-form ``T_{tau2 tau}``."""
        other = honeycomb_oracle(tau2)
        return np.diag([self.tau / other.tau, self.lateral / other.lateral])


def honeycomb_oracle(tau: float) -> HoneycombOracle:
    """Generators ``(tau, s)`` and ``(tau, -s)`` with ``s = sqrt(2 tau - tau^2)``."""
    tau = float(tau)
    if not 0.5 < tau < 1.5:
        raise ValueError(f"tau = {tau} outside (0.5, 1.5)")
    s = np.sqrt(2 * tau - tau**2)
    return HoneycombOracle(tau, np.array([[tau, s], [tau, -s]]))


def honeycomb_generators(lattice) -> np.ndarray:
    """The two bar-direction generators of the bundled honeycomb scene's lattice."""
    g = _generators(lattice)
    return np.array([g[1], g[0] - g[1]])


# --------------------------------------------------------------------------
# report


@dataclass
class AuxeticityReport:
    taus: np.ndarray
    nu: dict[str, np.ndarray]
    norms: np.ndarray
    certificates: list[Certificate] = field(default_factory=list)
    lag: float = DEFAULT_LAG
    metadata: dict = field(default_factory=dict)

    @property
    def materials_auxetic(self) -> bool:
        return bool(all(np.all(v <= 0) for v in self.nu.values()))

    @property
    def geometric_contraction(self) -> bool:
        return bool(self.norms.size and np.all(self.norms[:, 2] <= 1.0))

    @property
    def certified(self) -> bool:
        return bool(self.certificates) and all(c.passed for c in self.certificates)

    def verdicts(self) -> dict:
        return {
            "materials_auxetic": self.materials_auxetic,
            "geometric_contraction": self.geometric_contraction,
            "certified": self.certified,
        }

    def summary(self) -> dict:
        out = {"steps": int(len(self.taus)), "lag": self.lag}
        for k, v in self.nu.items():
            out[f"nu_{k}_min"] = float(np.min(v))
            out[f"nu_{k}_max"] = float(np.max(v))
        if self.norms.size:
            out["opnorm_max"] = float(self.norms[:, 2].max())
        if self.certificates:
            out["alpha"] = self.certificates[0].alpha
        return out

    def to_dict(self) -> dict:
        return {
            "schema": "auxetic-tensegrity/report/v1",
            "verdicts": self.verdicts(),
            "summary": self.summary(),
            "lag": self.lag,
            "tau": self.taus.tolist(),
            "nu": {k: v.tolist() for k, v in self.nu.items()},
            "opnorm": [{"tau1": a, "tau2": b, "norm": n} for a, b, n in self.norms.tolist()],
            "certificates": [
                {**asdict(c), "margins": list(c.margins)} for c in self.certificates
            ],
            "metadata": self.metadata,
        }


def analyze(trace, lag: float = DEFAULT_LAG) -> AuxeticityReport:
    taus = np.asarray(trace.taus)
    d = trace.dim
    nu = {"xy": poisson_ratio(trace, "y")}
    if d == 3:
        nu["xz"] = poisson_ratio(trace, "z")
    norms = fixed_lag_norms(taus, trace, lag)
    certs = gershgorin_certificate(trace, lag) if d == 3 else []
    return AuxeticityReport(taus, nu, norms, certs, lag, dict(getattr(trace, "metadata", {})))


__all__ = [
    "AuxeticityReport",
    "Certificate",
    "CertificateInapplicable",
    "HoneycombOracle",
    "TransferOperator",
    "ZeroStrain",
    "analyze",
    "certificate_bounds",
    "certify_pair",
    "fixed_lag_norms",
    "gershgorin_certificate",
    "honeycomb_oracle",
    "interval_poisson_ratio",
    "operator_norm",
    "poisson_ratio",
    "transfer_operator",
]
