"""Slice diagnostics for minimizers with dipole boundary data.

The unit ball is cut by horizontal discs ``z = mu_i`` placed in the gaps
between the dipole tubes. For each disc we record its rotation energy and
the area of its image in the half-turn set; for each slab between two
consecutive discs we record the degree of the rotation field on the slab
boundary and the singular points found inside.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .degree import SingularPoint, adaptive_degree, find_singularities
from .dipole import BoundaryData, BoundaryDataSpec, DipoleConstruction, construction_energy
from .errors import CosseratError, NoAdmissibleDisc
from .grid import CosseratField, energy
from .so3 import UNIT_CONSTANTS, MaterialConstants
from .sources import FieldSource, GridSource, directional_derivatives
from .surface import disc_patch

DISC_BOUND = 4 * np.pi
AREA_BOUND = 2 * np.pi  # measure of the half-turn set, configurable per call


@dataclass(eq=False)
class SliceReport:
    mu_levels: list
    disc_energies: list
    disc_below_bound: list
    jacobian_areas: list
    half_dirichlet: list
    disc_degrees: list
    lift_degrees: list
    singularities_per_slice: list
    singularities: list = field(default_factory=list)
    area_bound: float = AREA_BOUND
    notes: list = field(default_factory=list)

    def __post_init__(self):
        mu = self.mu_levels
        if any(not 0 < m < 1 for m in mu) or any(b <= a for a, b in zip(mu, mu[1:])):
            raise ValueError("slice levels must increase strictly inside (0, 1)")

    def to_dict(self) -> dict:
        out = asdict(self)
        out["singularities"] = [[p.to_dict() for p in s] for s in self.singularities]
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _as_source(obj):
    if isinstance(obj, BoundaryData):
        return obj.construction
    if isinstance(obj, CosseratField):
        return GridSource(obj)
    if isinstance(obj, FieldSource):
        return obj
    raise TypeError(f"cannot take slices of {type(obj).__name__}")


def admissible_bands(spec: BoundaryDataSpec) -> list:
    """Open z-intervals (in (0, 1)) between consecutive tubes."""
    ranges = [spec.tube_z_range(i) for i in range(1, spec.N_target + 1)]
    edges = [0.0] + [z for r in ranges for z in r] + [1.0]
    return [(edges[2 * i], edges[2 * i + 1]) for i in range(spec.N_target + 1)]


def disc_terms(source: FieldSource, z: float, radius: float = 1.0, n_r: int = 32, n_theta: int = 96):
    """``(int |DR_t|^2, int Jac, 1/2 int |DR_t|^2)`` on the disc at height ``z``.

    The image area element of ``R = F(n)`` under the Frobenius metric is
    ``8 |d1 n x d2 n|``, bounded by ``4 (|d1 n|^2 + |d2 n|^2)``.
    """
    rho = np.sqrt(radius**2 - z**2)
    patch = disc_patch([0.0, 0.0, z], [0.0, 0.0, 1.0], rho, n_r=n_r, n_theta=n_theta)
    source.require_inside(patch.points)
    _, dn, _ = directional_derivatives(source, patch.points, patch.tangents, patch.steps)
    dirichlet = 8.0 * np.sum(dn**2, axis=(-2, -1))
    jac = 8.0 * np.linalg.norm(np.cross(dn[:, 0], dn[:, 1]), axis=-1)
    w = patch.weights
    e = float(w @ dirichlet)
    return e, float(w @ jac), 0.5 * e


def slab_map(z0: float, z1: float, radius: float = 1.0):
    """Radial parametrization of the boundary of ``{|x| <= r, z0 <= z <= z1}``
    from the point on the axis halfway between the two levels."""
    c = np.array([0.0, 0.0, 0.5 * (z0 + z1)])

    def smap(u):
        u = np.asarray(u, dtype=float)
        cu = u @ c
        t = -cu + np.sqrt(cu**2 - c @ c + radius**2)
        uz = u[:, 2]
        with np.errstate(divide="ignore"):
            tp = np.where(uz > 0, (z1 - c[2]) / uz, np.where(uz < 0, (z0 - c[2]) / uz, np.inf))
        return c + np.minimum(t, tp)[:, None] * u

    return c, smap


def slab_degree(source: FieldSource, z0: float, z1: float, radius: float = 1.0):
    c, smap = slab_map(z0, z1, radius)
    dirs = []
    for f in source.features():
        d = f - c
        nd = np.linalg.norm(d)
        if nd > 0 and np.linalg.norm(smap((d / nd)[None])[0] - f) < 0.25 * (z1 - z0):
            dirs.append(d)
    res = adaptive_degree(source.axes, smap, source.has_lift, dirs)
    return res.mod2, res.degree


def _singular_points(obj, source) -> list:
    if isinstance(obj, CosseratField):
        return find_singularities(obj)
    if isinstance(source, DipoleConstruction):
        return find_singularities(source)
    return []


def slice_diagnostics(obj, spec: BoundaryDataSpec, radius: float | None = None, n_levels: int | None = None,
                      area_bound: float = AREA_BOUND, strict: bool = False) -> SliceReport:
    """Disc scan, slab degrees and singularity counts.

    ``obj`` is a grid field, a point source or boundary data. Grid fields are
    sliced at grid spacing inside a sphere one and a half cells smaller than
    the unit ball, so every sample has in-domain neighbours. With
    ``strict`` a band whose best disc is not below ``4 pi`` raises
    :class:`NoAdmissibleDisc`; otherwise the failure is only recorded.
    """
    source = _as_source(obj)
    if isinstance(obj, CosseratField):
        h = obj.domain.h
        radius = 1.0 - 1.5 * h if radius is None else radius
        n_r = max(16, int(np.ceil(radius / h)))
        n_theta = max(48, int(np.ceil(2 * np.pi * radius / h)))
    else:
        h = None
        radius = 1.0 if radius is None else radius
        n_r, n_theta = 24, 64
    mus, energies, jacs, halves = [], [], [], []
    for k, (lo, hi) in enumerate(admissible_bands(spec)):
        hi = min(hi, radius)
        if hi <= lo:
            raise NoAdmissibleDisc("band is empty", band=k, lo=lo, hi=hi)
        count = n_levels or (max(3, int(np.floor((hi - lo) / h))) if h else 9)
        levels = lo + (hi - lo) * (np.arange(count) + 0.5) / count
        best = None
        for z in levels:
            ring = np.array([[np.sqrt(max(radius**2 - z**2, 0)) * np.cos(t), np.sqrt(max(radius**2 - z**2, 0)) * np.sin(t), z]
                             for t in np.linspace(0, 2 * np.pi, 64, endpoint=False)])
            if np.any(spec.tube_contains(ring)):
                continue
            terms = disc_terms(source, float(z), radius, n_r, n_theta)
            if best is None or terms[0] < best[1][0]:
                best = (float(z), terms)
        if best is None:
            raise NoAdmissibleDisc("no disc in the band avoids the tubes", band=k)
        if strict and not best[1][0] < DISC_BOUND:
            raise NoAdmissibleDisc("no disc below 4 pi in the band", band=k, best=best[1][0], level=best[0])
        mus.append(best[0])
        energies.append(best[1][0])
        jacs.append(best[1][1])
        halves.append(best[1][2])
    points = _singular_points(obj, source)
    mod2s, lifts, counts, per_slice, notes = [], [], [], [], []
    for z0, z1 in zip(mus, mus[1:]):
        try:
            m2, d = slab_degree(source, z0, z1, radius)
        except CosseratError as exc:
            m2, d = None, None
            notes.append(f"slab ({z0:.4f}, {z1:.4f}): {type(exc).__name__}")
        mod2s.append(m2)
        lifts.append(d)
        inside = [p for p in points
                  if z0 < p.location[2] < z1 and np.linalg.norm(p.location) < radius]
        per_slice.append(inside)
        counts.append(sum(1 for p in inside if p.mod2_degree == 1))
    return SliceReport(
        mu_levels=mus,
        disc_energies=energies,
        disc_below_bound=[e < DISC_BOUND for e in energies],
        jacobian_areas=jacs,
        half_dirichlet=halves,
        disc_degrees=mod2s,
        lift_degrees=lifts,
        singularities_per_slice=counts,
        singularities=per_slice,
        area_bound=area_bound,
        notes=notes,
    )


# --- energy audit ------------------------------------------------------------------


@dataclass(eq=False)
class AuditReport:
    checks: list

    @property
    def passed(self) -> bool:
        return all(c["passed"] for c in self.checks)

    def to_dict(self) -> dict:
        return {"passed": self.passed, "checks": self.checks}


def measured_energy(obj, c: MaterialConstants = UNIT_CONSTANTS) -> float:
    if isinstance(obj, CosseratField):
        return energy(obj, c).total
    if isinstance(obj, BoundaryData):
        return obj.energy_ball.total.total
    if isinstance(obj, DipoleConstruction):
        return construction_energy(obj, c, ball=(np.zeros(3), 1.0)).total.total
    raise TypeError(f"cannot measure the energy of {type(obj).__name__}")


def minimizer_energy_audit(obj, spec: BoundaryDataSpec, c: MaterialConstants = UNIT_CONSTANTS,
                           report: SliceReport | None = None) -> AuditReport:
    """Check ``J < pi / N`` and the existence of ``N + 1`` discs below ``4 pi``.

    Failures are reported, never raised.
    """
    bound = np.pi / spec.N_target
    E = measured_energy(obj, c)
    checks = [{"name": "energy_below_pi_over_N", "measured": E, "threshold": bound, "passed": bool(E < bound)}]
    if report is None:
        try:
            report = slice_diagnostics(obj, spec)
        except CosseratError as exc:
            checks.append({"name": "discs", "passed": False, "error": exc.to_dict()})
            return AuditReport(checks)
    for i, (mu, e) in enumerate(zip(report.mu_levels, report.disc_energies)):
        checks.append({"name": f"disc_{i}_below_4pi", "level": mu, "measured": e,
                       "threshold": DISC_BOUND, "passed": bool(e < DISC_BOUND)})
    return AuditReport(checks)


__all__ = [
    "SliceReport", "AuditReport", "SingularPoint", "admissible_bands", "disc_terms", "slab_map",
    "slab_degree", "slice_diagnostics", "minimizer_energy_audit", "measured_energy",
]
