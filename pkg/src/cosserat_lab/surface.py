"""Quadrature on 2D patches: spheres, flat discs and cube faces.

A patch is a list of points with weights and an orthonormal tangent pair
at each point. Surface energies sample a source at the points and
differentiate it along the tangents; radial node placement can be graded
towards a small core so that bubble-like features far below any volume
grid spacing are still integrated accurately.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegeneratePatch, OutsideDomain
from .grid import EnergyReport
from .so3 import UNIT_CONSTANTS, EYE, MaterialConstants, cover_unchecked, p_operator
from .sources import FieldSource, directional_derivatives, jacobian_phi


@dataclass(eq=False)
class SurfacePatch:
    points: np.ndarray  # (K, 3)
    weights: np.ndarray  # (K,)
    tangents: np.ndarray  # (K, 2, 3)
    steps: np.ndarray  # (K,) differencing step per node
    topology: str = "disc"
    labels: np.ndarray | None = None
    label_names: tuple = ()
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        w = np.asarray(self.weights)
        if w.ndim != 1 or len(w) != len(self.points) or not np.all(np.isfinite(w)) or np.any(w <= 0):
            raise DegeneratePatch("patch weights must be positive and finite")
        if np.any(self.steps <= 0):
            raise DegeneratePatch("differencing steps must be positive")
        cross = np.cross(self.tangents[:, 0], self.tangents[:, 1])
        if np.any(np.abs(np.linalg.norm(cross, axis=-1) - 1.0) > 1e-8):
            raise DegeneratePatch("tangent frames must be orthonormal")

    @property
    def area(self) -> float:
        return float(self.weights.sum())

    @property
    def normals(self) -> np.ndarray:
        return np.cross(self.tangents[:, 0], self.tangents[:, 1])


def gauss_segment(a: float, b: float, n: int):
    x, w = np.polynomial.legendre.leggauss(n)
    half = 0.5 * (b - a)
    return a + half * (x + 1.0), half * w


def radial_rule(breaks, counts, core: float | None = None):
    """Piecewise Gauss-Legendre nodes in ``r`` on consecutive ``breaks``.

    With ``core`` set, each panel is mapped through ``r = core * sinh(u)``,
    which clusters nodes on the scale ``core`` near the origin and behaves
    logarithmically further out. Returns nodes, weights (without the polar
    factor ``r``) and a local node spacing.
    """
    rs, ws, sp = [], [], []
    for (a, b), n in zip(zip(breaks[:-1], breaks[1:]), counts):
        if b <= a:
            continue
        if core:
            ua, ub = np.arcsinh(a / core), np.arcsinh(b / core)
            u, wu = gauss_segment(ua, ub, n)
            r = core * np.sinh(u)
            w = wu * core * np.cosh(u)
            spacing = (ub - ua) / n * core * np.cosh(u)
        else:
            r, w = gauss_segment(a, b, n)
            spacing = np.full(n, (b - a) / n)
        rs.append(r)
        ws.append(w)
        sp.append(spacing)
    return np.concatenate(rs), np.concatenate(ws), np.concatenate(sp)


def _frame(normal):
    normal = np.asarray(normal, dtype=float)
    normal = normal / np.linalg.norm(normal)
    helper = np.array([1.0, 0.0, 0.0]) if abs(normal[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    t1 = np.cross(helper, normal)
    t1 /= np.linalg.norm(t1)
    return t1, np.cross(normal, t1), normal


def polar_patch(center, t1, t2, radial, n_theta: int, theta_wedges=None, r_max=None, labels=None,
                label_names=(), step_fraction: float = 1e-3, topology: str = "disc", meta=None):
    """Polar grid in the plane spanned by ``t1``, ``t2`` around ``center``.

    ``radial(theta) -> (r, w, spacing)`` gives the radial rule, possibly
    depending on the angle (squares need ``r_max(theta)``). Angles are
    Gauss-Legendre within each wedge, or uniform when ``theta_wedges`` is
    ``None``.
    """
    center = np.asarray(center, dtype=float)
    t1 = np.asarray(t1, dtype=float)
    t2 = np.asarray(t2, dtype=float)
    if theta_wedges is None:
        th = 2 * np.pi * (np.arange(n_theta) + 0.5) / n_theta
        wth = np.full(n_theta, 2 * np.pi / n_theta)
    else:
        parts = [gauss_segment(a, b, n_theta) for a, b in zip(theta_wedges[:-1], theta_wedges[1:])]
        th = np.concatenate([p[0] for p in parts])
        wth = np.concatenate([p[1] for p in parts])
    pts, wts, steps, labs, local = [], [], [], [], []
    for theta, wt in zip(th, wth):
        r, w, spacing = radial(theta)
        e = np.cos(theta) * t1 + np.sin(theta) * t2
        pts.append(center + r[:, None] * e)
        wts.append(w * r * wt)
        # the angular spacing matters too; take the finer of the two
        steps.append(step_fraction * np.minimum(spacing, np.maximum(r * wt, 1e-300)))
        local.append(np.stack([r * np.cos(theta), r * np.sin(theta)], axis=1))
        if labels is not None:
            labs.append(labels(r, theta))
    K = sum(len(p) for p in pts)
    tang = np.broadcast_to(np.stack([t1, t2]), (K, 2, 3)).copy()
    return SurfacePatch(
        points=np.concatenate(pts),
        weights=np.concatenate(wts),
        tangents=tang,
        steps=np.concatenate(steps),
        topology=topology,
        labels=np.concatenate(labs) if labels is not None else None,
        label_names=tuple(label_names),
        meta={"local": np.concatenate(local), **(meta or {})},
    )


def disc_patch(center, normal, radius: float, n_r: int = 24, n_theta: int = 64, core=None,
               breaks=None) -> SurfacePatch:
    """Flat disc. With ``core`` the radial rule is graded towards the centre."""
    t1, t2, _ = _frame(normal)
    breaks = [0.0, radius] if breaks is None else list(breaks)
    counts = [n_r] * (len(breaks) - 1)
    rule = radial_rule(breaks, counts, core)
    return polar_patch(center, t1, t2, lambda th: rule, n_theta, meta={"radius": radius})


def bubble_disc_patch(center, t1, t2, alpha: float, n_r: int = 40, n_theta: int = 48) -> SurfacePatch:
    """Disc of radius ``alpha`` graded towards a core of size ``alpha**2``,
    with a panel break at ``alpha / 2``; labels 0 (inner) and 1 (annulus)."""
    rule = radial_rule([0.0, alpha / 2, alpha], [n_r, n_r], core=alpha**2)
    return polar_patch(
        center, t1, t2, lambda th: rule, n_theta,
        labels=lambda r, th: (r >= alpha / 2).astype(int),
        label_names=("inner", "annulus"),
        meta={"alpha": alpha},
    )


def square_face_patch(center, t1, t2, half_width: float, disc_radius: float | None = None,
                      n_r: int = 24, n_theta: int = 12, core=None) -> SurfacePatch:
    """Square ``[-w, w]^2`` in the plane of ``t1``, ``t2`` via polar
    coordinates split at the diagonals. With ``disc_radius`` the radial rule
    breaks at ``disc_radius / 2`` and ``disc_radius`` and nodes are labelled
    0 (inner disc), 1 (annulus) and 2 (rest of the square)."""
    w = half_width
    wedges = np.pi / 4 + np.pi / 2 * np.arange(5) - np.pi / 2

    def r_max(th):
        return w / max(abs(np.cos(th)), abs(np.sin(th)))

    def radial(th):
        rm = r_max(th)
        if disc_radius:
            a = disc_radius
            rin, win, sin_ = radial_rule([0.0, a / 2, a], [n_r, n_r], core=core)
            rout, wout, sout = radial_rule([a, rm], [n_r], core=None)
            return np.concatenate([rin, rout]), np.concatenate([win, wout]), np.concatenate([sin_, sout])
        return radial_rule([0.0, rm], [n_r], core=core)

    def labels(r, th):
        if not disc_radius:
            return np.full(len(r), 2)
        return np.where(r < disc_radius / 2, 0, np.where(r < disc_radius, 1, 2))

    return polar_patch(center, t1, t2, radial, n_theta, theta_wedges=wedges, labels=labels,
                       label_names=("inner", "annulus", "outer"), topology="face",
                       meta={"half_width": w})


def sphere_patch(center, radius: float, n_polar: int = 32, n_azim: int = 64) -> SurfacePatch:
    """Gauss-Legendre in ``cos(theta)`` times a uniform azimuthal rule."""
    center = np.asarray(center, dtype=float)
    ct, wc = np.polynomial.legendre.leggauss(n_polar)
    ph = 2 * np.pi * np.arange(n_azim) / n_azim
    CT, PH = np.meshgrid(ct, ph, indexing="ij")
    ST = np.sqrt(1 - CT**2)
    u = np.stack([ST * np.cos(PH), ST * np.sin(PH), CT], axis=-1).reshape(-1, 3)
    e_th = np.stack([CT * np.cos(PH), CT * np.sin(PH), -ST], axis=-1).reshape(-1, 3)
    e_ph = np.stack([-np.sin(PH), np.cos(PH), np.zeros_like(PH)], axis=-1).reshape(-1, 3)
    w = (np.repeat(wc, n_azim) * (2 * np.pi / n_azim)) * radius**2
    step = 1e-4 * radius * np.ones(len(u))
    return SurfacePatch(
        points=center + radius * u,
        weights=w,
        tangents=np.stack([e_th, e_ph], axis=1),
        steps=step,
        topology="sphere",
        meta={"center": center, "radius": radius},
    )


# --- energies -----------------------------------------------------------------


def surface_densities(source: FieldSource, patch: SurfacePatch, c: MaterialConstants = UNIT_CONSTANTS):
    """Pointwise deformation and tangential curvature densities.

    The curvature uses the two in-surface directional derivatives,
    ``|DR|^2 = 8 (|d_1 n|^2 + |d_2 n|^2)``; the deformation uses the full
    ambient Jacobian of ``phi``.
    """
    pts = patch.points
    source.require_inside(pts)
    n, dn, _ = directional_derivatives(source, pts, patch.tangents, patch.steps)
    Dphi = jacobian_phi(source, pts, patch.steps)
    R = cover_unchecked(n)
    strain = np.swapaxes(R, -1, -2) @ Dphi - EYE
    deformation = np.sum(p_operator(strain, c) ** 2, axis=(-2, -1))
    curvature = c.lam * (8.0 * np.sum(dn**2, axis=(-2, -1))) ** (c.p / 2.0)
    return deformation, curvature


def surface_energy(source: FieldSource, patch: SurfacePatch, c: MaterialConstants = UNIT_CONSTANTS,
                   deformation_factor: float = 1.0) -> EnergyReport:
    dens_d, dens_c = surface_densities(source, patch, c)
    w = patch.weights
    dens_d = deformation_factor * dens_d
    per = []
    if patch.labels is not None:
        for k, name in enumerate(patch.label_names):
            sel = patch.labels == k
            per.append((name, float(w[sel] @ dens_d[sel]), float(w[sel] @ dens_c[sel])))
    d, cv = float(w @ dens_d), float(w @ dens_c)
    return EnergyReport(deformation=d, curvature=cv, total=d + cv, per_region=per)


def disc_energy(source: FieldSource, z_level: float, c: MaterialConstants = UNIT_CONSTANTS,
                radius: float = 1.0, n_r: int = 48, n_theta: int = 96) -> float:
    """Curvature energy on the flat disc ``{z = z_level}`` inside the ball of
    the given radius about the origin."""
    if abs(z_level) >= radius:
        raise OutsideDomain("slice level outside the ball", z=z_level)
    rho = np.sqrt(radius**2 - z_level**2)
    patch = disc_patch([0.0, 0.0, z_level], [0.0, 0.0, 1.0], rho, n_r=n_r, n_theta=n_theta)
    _, dens = surface_densities(source, patch, c)
    return float(patch.weights @ dens)
