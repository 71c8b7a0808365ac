"""Explicit singular constructions.

* ``BubbleFace``: a degree-one bubble glued into a smooth S^2 field on a
  small disc of a planar face.
* ``cube_flip``: the bubble on the top face of a cube, flipping the mod-2
  degree of the rotation field on the cube boundary.
* ``insert_dipole``: a row of ``m`` cubes along a segment ``[P, N]``; every
  internal face carries a bubble and each cube is filled by radial
  projection from its centre, leaving singular points of lift degree
  ``+1`` at ``P``, ``-1`` at ``N`` and ``0`` in between.
* ``thm1_boundary_data``: ``2N`` dipoles straddling the unit sphere whose
  combined energy is below ``pi / N``.

The bubble core has size ``alpha**2``, far below any practical grid spacing,
so the constructions are evaluated analytically at arbitrary points. Their
energies are computed exactly in the radial direction: inside a cube the
field is ``f(pi(x))`` with ``pi`` the projection onto the cube boundary, and
along each ray from the centre the energy density is a polynomial in the
inverse ray parameter. Only the face integrals need quadrature.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .degree import SingularPoint, adaptive_degree, cylinder_contains, probe_degree
from .errors import (
    AlphaTooLarge,
    AntipodalInterpolation,
    EpsilonTooLarge,
    OutsideDomain,
    SegmentTooClose,
    SeparationViolated,
)
from .grid import BOUNDARY, CosseratField, EnergyReport, GridDomain, make_domain
from .so3 import EYE, UNIT_CONSTANTS, MaterialConstants, cover_unchecked, frame_with_axis, p_operator, rotation_between
from .sources import FieldSource, GridSource, aligned, directional_derivatives, jacobian_phi, rigid_source
from .surface import bubble_disc_patch, gauss_segment, square_face_patch, surface_energy

SOUTH = np.array([0.0, 0.0, -1.0])


# --- bubble -------------------------------------------------------------------


def sigma(z: np.ndarray) -> np.ndarray:
    """Degree-one inverse stereographic map: ``0 -> north``, ``inf -> south``."""
    z = np.asarray(z, dtype=float)
    r2 = np.sum(z**2, axis=-1, keepdims=True)
    return np.concatenate([2 * z, 1 - r2], axis=-1) / (1 + r2)


def slerp(u: np.ndarray, v: np.ndarray, t: np.ndarray) -> np.ndarray:
    dot = np.clip(np.sum(u * v, axis=-1), -1.0, 1.0)
    if np.any(dot < -1.0 + 1e-8):
        raise AntipodalInterpolation("geodesic interpolation between antipodal values")
    om = np.arccos(dot)
    so = np.sin(om)
    small = so < 1e-10
    safe = np.where(small, 1.0, so)
    a = np.where(small, 1.0 - t, np.sin((1.0 - t) * om) / safe)
    b = np.where(small, t, np.sin(t * om) / safe)
    out = a[..., None] * u + b[..., None] * v
    return out / np.linalg.norm(out, axis=-1, keepdims=True)


def cutoff(r: np.ndarray, alpha: float) -> np.ndarray:
    """C^1 blend weight: 1 for ``r <= alpha/2``, 0 for ``r >= alpha``."""
    s = np.clip(2.0 * r / alpha - 1.0, 0.0, 1.0)
    return 1.0 - s * s * (3.0 - 2.0 * s)


@dataclass
class BubbleParams:
    alpha: float
    center: np.ndarray  # face coordinates
    orientation: np.ndarray  # rotation applied to the target sphere

    def to_dict(self) -> dict:
        return {"alpha": self.alpha, "center": np.asarray(self.center).tolist(),
                "orientation": np.asarray(self.orientation).tolist()}


def bubble_orientation(n_center) -> np.ndarray:
    """Rotation taking the bubble's far-field value (south) to ``n_center``."""
    return rotation_between(SOUTH, np.asarray(n_center, dtype=float))


def bubble_insert(n_face: np.ndarray, y: np.ndarray, params: BubbleParams) -> np.ndarray:
    """Modify face values ``n_face`` at face coordinates ``y (K, 2)``.

    Inside ``r < alpha/2`` the values are the rotated, rescaled bubble;
    on ``alpha/2 <= r < alpha`` they are interpolated along great circles
    back to ``n_face``; beyond ``alpha`` they are returned untouched.
    """
    n_face = np.asarray(n_face, dtype=float)
    rel = np.asarray(y, dtype=float) - np.asarray(params.center, dtype=float)
    r = np.linalg.norm(rel, axis=-1)
    out = n_face.copy()
    sel = r < params.alpha
    if not np.any(sel):
        return out
    b = sigma(rel[sel] / params.alpha**2) @ np.asarray(params.orientation).T
    t = cutoff(r[sel], params.alpha)
    ring = t < 1.0
    blended = b.copy()
    if np.any(ring):
        blended[ring] = slerp(n_face[sel][ring], b[ring], t[ring])
    out[sel] = blended
    return out


def bubble_density(r, alpha):
    """``|D n|^2`` of the bubble at face radius ``r`` (times 8 for ``|DR|^2``)."""
    return 8.0 * alpha**4 / (alpha**4 + np.asarray(r) ** 2) ** 2


# --- cube flip -------------------------------------------------------------------


class FlippedCube(FieldSource):
    """Surface field on ``C = [-nu, nu]^2 x [-2 nu, 0]`` with a bubble on
    the top face disc of radius ``alpha`` about ``(0, 0, 0)``."""

    def __init__(self, base: FieldSource, nu: float, alpha: float):
        self.base = base
        self.nu = nu
        self.alpha = alpha
        self.has_lift = base.has_lift
        self.params = BubbleParams(alpha, np.zeros(2), bubble_orientation(base.axes(np.zeros((1, 3)))[0]))

    @property
    def center(self) -> np.ndarray:
        return np.array([0.0, 0.0, -self.nu])

    def phi(self, x):
        return self.base.phi(x)

    def contains(self, x):
        return self.base.contains(x)

    def features(self):
        return [np.zeros(3)]

    def axes(self, x):
        x = np.asarray(x, dtype=float)
        flat = x.reshape(-1, 3)
        n = self.base.axes(flat)
        top = (np.abs(flat[:, 2]) <= 1e-9 * self.nu) & (np.max(np.abs(flat[:, :2]), axis=1) <= self.nu)
        if np.any(top):
            n[top] = bubble_insert(n[top], flat[top, :2], self.params)
        return n.reshape(x.shape)

    def surface_map(self, u):
        return cube_surface_map(self.nu)(u)


def cube_surface_map(nu: float):
    """Radial projection of unit directions onto the boundary of the cube
    of half-side ``nu`` centred at ``(0, 0, -nu)``."""
    center = np.array([0.0, 0.0, -nu])

    def smap(u):
        u = np.asarray(u, dtype=float)
        return center + nu * u / np.max(np.abs(u), axis=-1, keepdims=True)

    return smap


@dataclass
class CubeFlipResult:
    source: FlippedCube
    alpha: float
    alpha0: float
    measured: EnergyReport
    budget: float
    degree_before: int
    degree_after: int

    def to_dict(self) -> dict:
        return {
            "nu": self.source.nu,
            "alpha": self.alpha,
            "alpha0": self.alpha0,
            "measured_integral": self.measured.total,
            "measured": self.measured.to_dict(),
            "budget": self.budget,
            "degree_before": self.degree_before,
            "degree_after": self.degree_after,
        }


def flip_disc_integral(base: FieldSource, nu: float, alpha: float, c: MaterialConstants = UNIT_CONSTANTS,
                       n_r: int = 32, n_theta: int = 32) -> EnergyReport:
    src = FlippedCube(base, nu, alpha)
    patch = bubble_disc_patch(np.zeros(3), np.array([1.0, 0, 0]), np.array([0, 1.0, 0]), alpha, n_r, n_theta)
    return surface_energy(src, patch, c, deformation_factor=2.0)


def cube_degree(src: FieldSource, nu: float) -> int:
    """Lift degree of a source on the boundary of the flip cube."""
    feats = [np.array([0.0, 0.0, nu])]  # top face centre seen from the cube centre
    return adaptive_degree(src.axes, cube_surface_map(nu), src.has_lift, feats).degree


def cube_flip(base: FieldSource, nu: float = 1.0, alpha: float | None = None, eps_budget: float = 1.0,
              c: MaterialConstants = UNIT_CONSTANTS, bisect_iters: int = 40) -> CubeFlipResult:
    """Insert a bubble on the top face of the cube of half-side ``nu``.

    The largest admissible disc radius ``alpha0`` (measured integral below
    ``64 pi + eps_budget``) is found by bisection on ``(0, nu)``; ``alpha``
    defaults to it.
    """
    budget = 64 * np.pi + eps_budget

    def ok(a):
        return flip_disc_integral(base, nu, a, c).total < budget

    lo, hi = 1e-3 * nu, nu * (1 - 1e-9)
    if not ok(lo):
        raise AlphaTooLarge("no admissible disc radius found", measured=flip_disc_integral(base, nu, lo, c).total)
    if ok(hi):
        alpha0 = hi
    else:
        for _ in range(bisect_iters):
            mid = 0.5 * (lo + hi)
            lo, hi = (mid, hi) if ok(mid) else (lo, mid)
        alpha0 = lo
    use = alpha0 if alpha is None else float(alpha)
    measured = flip_disc_integral(base, nu, use, c)
    if measured.total >= budget:
        raise AlphaTooLarge("energy budget exceeded at the requested alpha", measured=measured.total,
                            budget=budget, alpha0=alpha0)
    flipped = FlippedCube(base, nu, use)
    before = cube_degree(base, nu)
    after = cube_degree(flipped, nu)
    return CubeFlipResult(flipped, use, alpha0, measured, budget, before, after)


# --- cuboid dipoles ------------------------------------------------------------------


class CuboidDecomposition:
    """``m`` cubes of half-side ``a = d / (2 (m - 1))`` centred on ``[P, N]``.

    Local coordinates ``u = frame^T (x - P)`` put ``P`` at the origin and
    ``N`` at ``(0, 0, d)``; the cubes tile ``[-a, a]^2 x [-a, d + a]``.
    """

    def __init__(self, P, N, m: int):
        self.P = np.asarray(P, dtype=float)
        self.N = np.asarray(N, dtype=float)
        if int(m) < 2:
            raise ValueError("m must be at least 2")
        self.m = int(m)
        self.d = float(np.linalg.norm(self.N - self.P))
        if self.d == 0:
            raise ValueError("P and N coincide")
        self.a = self.d / (2 * (self.m - 1))
        self.frame = frame_with_axis((self.N - self.P) / self.d)

    @property
    def a_m(self) -> float:
        return self.a

    def to_local(self, x):
        return (np.asarray(x, dtype=float) - self.P) @ self.frame

    def to_global(self, u):
        return self.P + np.asarray(u, dtype=float) @ self.frame.T

    @property
    def local_centers(self) -> np.ndarray:
        return np.array([[0.0, 0.0, 2 * j * self.a] for j in range(self.m)])

    @property
    def centers(self) -> np.ndarray:
        return self.to_global(self.local_centers)

    @property
    def internal_face_centers(self) -> np.ndarray:
        return self.to_global(np.array([[0.0, 0.0, (2 * f + 1) * self.a] for f in range(self.m - 1)]))

    @property
    def local_bounds(self):
        a = self.a
        return np.array([-a, -a, -a]), np.array([a, a, self.d + a])

    def contains(self, x, tol: float = 0.0) -> np.ndarray:
        u = self.to_local(x)
        lo, hi = self.local_bounds
        return np.all((u >= lo - tol) & (u <= hi + tol), axis=-1)

    def corners(self) -> np.ndarray:
        lo, hi = self.local_bounds
        pts = [[(lo, hi)[i][0], (lo, hi)[j][1], (lo, hi)[k][2]] for i in (0, 1) for j in (0, 1) for k in (0, 1)]
        return self.to_global(np.array(pts))

    def hausdorff_to_segment(self) -> float:
        """Largest distance from ``K_m`` to the segment (attained at corners)."""
        C = self.corners()
        e = (self.N - self.P) / self.d
        s = np.clip((C - self.P) @ e, 0.0, self.d)
        return float(np.max(np.linalg.norm(C - (self.P + s[:, None] * e), axis=1)))

    def to_dict(self) -> dict:
        return {"P": self.P.tolist(), "N": self.N.tolist(), "m": self.m, "d": self.d, "a_m": self.a,
                "centers": self.centers.tolist(), "frame": self.frame.tolist()}


class DipoleConstruction(FieldSource):
    """A base field with cuboid dipoles inserted.

    ``pieces`` is a list of ``(CuboidDecomposition, alpha)``. The base must
    carry a continuous lift; the result does too.
    """

    has_lift = True

    def __init__(self, base: FieldSource, pieces):
        self.base = base
        self.pieces = [(dec, float(al)) for dec, al in pieces]
        self._orient = []
        for dec, _ in self.pieces:
            nc = base.axes(dec.internal_face_centers) if dec.m > 1 else np.zeros((0, 3))
            # bubble values are in global target coordinates
            self._orient.append([bubble_orientation(v) for v in nc])

    def contains(self, x):
        return self.base.contains(x)

    def features(self):
        out = []
        for dec, _ in self.pieces:
            out.extend(dec.internal_face_centers)
        return out

    # face evaluation ------------------------------------------------------
    def face_values(self, pi: int, y_local: np.ndarray, face_idx: np.ndarray):
        """phi and n at local points on cube faces of piece ``pi``;
        ``face_idx >= 0`` marks points on internal face ``face_idx``."""
        dec, alpha = self.pieces[pi]
        g = dec.to_global(y_local)
        phi = self.base.phi(g)
        n = self.base.axes(g)
        face_idx = np.asarray(face_idx)
        for f in np.unique(face_idx[face_idx >= 0]):
            sel = face_idx == f
            params = BubbleParams(alpha, np.zeros(2), self._orient[pi][int(f)])
            n[sel] = bubble_insert(n[sel], y_local[sel, :2], params)
        return phi, n

    def project(self, pi: int, x: np.ndarray):
        """Radial projection onto the boundary of the containing cube."""
        dec = self.pieces[pi][0]
        a, m = dec.a, dec.m
        u = dec.to_local(x)
        j = np.clip(np.floor((u[:, 2] + a) / (2 * a)).astype(int), 0, m - 1)
        v = u - np.stack([np.zeros_like(j, dtype=float), np.zeros_like(j, dtype=float), 2 * a * j], axis=1)
        rho = np.max(np.abs(v), axis=1)
        centre = rho == 0
        v[centre] = [0.0, 0.0, a]
        rho[centre] = a
        k = np.argmax(np.abs(v), axis=1)
        y = u - v + v * (a / rho)[:, None]
        rows = np.arange(len(y))
        y[rows, k] = u[rows, k] - v[rows, k] + np.sign(v[rows, k]) * a
        f = np.where(v[:, 2] > 0, j, j - 1)
        face = np.where((k == 2) & (f >= 0) & (f <= m - 2), f, -1)
        return y, face

    def _evaluate(self, x):
        x = np.asarray(x, dtype=float)
        flat = x.reshape(-1, 3)
        phi = self.base.phi(flat)
        n = self.base.axes(flat)
        for pi, (dec, _) in enumerate(self.pieces):
            sel = dec.contains(flat)
            if np.any(sel):
                y, face = self.project(pi, flat[sel])
                phi[sel], n[sel] = self.face_values(pi, y, face)
        return phi.reshape(x.shape), n.reshape(x.shape)

    def phi(self, x):
        return self._evaluate(x)[0]

    def axes(self, x):
        return self._evaluate(x)[1]

    def candidate_singularities(self, probe_radius=None):
        """Cube centres with their degrees on probes of radius ``a/2``."""
        out = []
        for dec, _ in self.pieces:
            r = 0.5 * dec.a if probe_radius is None else min(probe_radius, 0.5 * dec.a)
            for cj in dec.centers:
                d = probe_degree(self, cj, r).degree
                out.append(SingularPoint(cj.tolist(), d % 2, d, r, 1, "cube centre"))
        return out

    def sample(self, field: CosseratField) -> CosseratField:
        """Overwrite nodes of ``field`` inside any cuboid with construction
        values; every other node is left bit-identical."""
        out = field.copy()
        X = field.domain.positions
        sel = np.zeros(field.domain.dims, dtype=bool)
        for dec, _ in self.pieces:
            sel |= dec.contains(X)
        sel &= field.domain.inside
        if np.any(sel):
            phi, n = self._evaluate(X[sel])
            out.phi[sel] = phi
            out.n[sel] = n
        return out


# --- exact energy of the cube-filled construction --------------------------------

FACE_REGIONS = {(2, 1): ("D", "F", "G"), (2, -1): ("A", "E", "G")}
REGION_ORDER = ("B", "A", "D", "E", "F", "G")


def _ray_integrals(r0, r1, a, c: MaterialConstants):
    """Integrals over ``rho`` in ``[r0, r1]`` of the three deformation
    monomials and the curvature weight, including the volume Jacobian."""
    r0 = np.asarray(r0, dtype=float)
    r1 = np.maximum(np.asarray(r1, dtype=float), r0)
    i_x = r1 - r0
    i_t = (r1**2 - r0**2) / a
    i_k = (r1**3 - r0**3) / (3 * a**2)
    p = c.p
    if p == 2:
        i_c = i_x
    elif p == 3:
        with np.errstate(divide="ignore"):
            i_c = np.where(r1 > r0, a * (np.log(r1) - np.log(np.maximum(r0, 0.0))), 0.0)
    else:
        with np.errstate(divide="ignore"):
            i_c = a ** (p - 2) * (np.power(r1, 3 - p) - np.power(np.maximum(r0, 0.0), 3 - p)) / (3 - p)
        i_c = np.where(r1 > r0, i_c, 0.0)
    return i_x, i_t, i_k, i_c


def _ball_interval(cg, yg, a, ball):
    """``rho`` range on which the ray ``cg + (rho/a)(yg - cg)`` lies in ``ball``."""
    K = len(yg)
    if ball is None:
        return np.zeros(K), np.full(K, a)
    center, radius = np.asarray(ball[0], dtype=float), float(ball[1])
    v = yg - cg
    d0 = (np.asarray(cg, dtype=float) - center).reshape(3)
    A = np.sum(v * v, axis=1)
    B = v @ d0
    C = d0 @ d0 - radius**2
    disc = B * B - A * C
    ok = disc > 0
    sq = np.sqrt(np.where(ok, disc, 0.0))
    s0 = np.clip((-B - sq) / A, 0.0, 1.0)
    s1 = np.clip((-B + sq) / A, 0.0, 1.0)
    s1 = np.where(ok, s1, s0)
    return a * s0, a * s1


@dataclass
class ConstructionEnergy:
    total: EnergyReport
    per_piece: list  # list of dicts region -> (deformation, curvature)

    def to_dict(self) -> dict:
        return {
            "total": self.total.to_dict(),
            "per_piece": [{k: {"deformation": v[0], "curvature": v[1]} for k, v in t.items()} for t in self.per_piece],
        }


def construction_energy(cons: DipoleConstruction, c: MaterialConstants = UNIT_CONSTANTS, ball=None,
                        n_r: int = 16, n_theta: int = 10) -> ConstructionEnergy:
    """Energy of the construction inside its cuboids (optionally clipped to
    ``ball = (center, radius)``).

    Region labels per cube: ``B`` the inscribed ball; outside it, ``A`` and
    ``E`` lie over the inner disc and annulus of the bottom face, ``D`` and
    ``F`` over those of the top face, ``G`` over the rest of the boundary.
    """
    PI = p_operator(EYE, c)
    K0 = float(np.sum(PI * PI))
    per_piece = []
    for pi, (dec, alpha) in enumerate(cons.pieces):
        a = dec.a
        Q = dec.frame
        acc = {name: np.zeros(2) for name in REGION_ORDER}
        for j in range(dec.m):
            cj = np.array([0.0, 0.0, 2 * a * j])
            for k in range(3):
                for s in (1, -1):
                    nu = np.zeros(3)
                    nu[k] = s
                    t1, t2 = np.roll(np.eye(3), -k - 1, axis=0)[:2]
                    face_center = cj + a * nu
                    f = (j if s > 0 else j - 1) if k == 2 else -1
                    bubble = k == 2 and 0 <= f <= dec.m - 2
                    patch = square_face_patch(face_center, t1, t2, a, disc_radius=alpha if k == 2 else None,
                                              n_r=n_r, n_theta=n_theta, core=alpha**2 if bubble else None)
                    y = patch.points
                    K = len(y)
                    fidx = np.full(K, f if bubble else -1)
                    T = np.stack([t1, t2])
                    steps = patch.steps
                    phi0, n0 = cons.face_values(pi, y, fidx)
                    Gn = np.zeros((K, 3, 2))
                    Gp = np.zeros((K, 3, 2))
                    for q in range(2):
                        sh = steps[:, None] * T[q]
                        pp, npl = cons.face_values(pi, y + sh, fidx)
                        pm, nmi = cons.face_values(pi, y - sh, fidx)
                        npl, nmi = aligned(npl, n0), aligned(nmi, n0)
                        g = (npl - nmi) / (2 * steps[:, None])
                        Gn[:, :, q] = g - np.sum(g * n0, axis=1)[:, None] * n0
                        Gp[:, :, q] = (pp - pm) / (2 * steps[:, None])
                    w = (y - cj) / a
                    M = EYE - w[:, :, None] * nu[None, None, :]
                    TM = np.einsum("qi,kij->kqj", T, M)
                    DnM = np.einsum("kaq,kqj->kaj", Gn, TM)
                    curv_c = c.lam * (8.0 * np.sum(DnM**2, axis=(1, 2))) ** (c.p / 2)
                    R = cover_unchecked(n0)
                    B = np.swapaxes(R, 1, 2) @ np.einsum("kaq,kqj->kaj", Gp, TM) @ Q.T
                    PB = p_operator(B, c)
                    X = np.sum(PB * PB, axis=(1, 2))
                    Tx = np.einsum("kij,ij->k", PB, PI)
                    ell = np.linalg.norm(y - cj, axis=1)
                    rstar = a * a / ell
                    lo_b, hi_b = _ball_interval(dec.to_global(cj)[None, :], dec.to_global(y), a, ball)
                    labels = FACE_REGIONS.get((k, s), ("G", "G", "G"))
                    for part, (r0, r1) in (("ball", (lo_b, np.minimum(hi_b, rstar))),
                                           ("rest", (np.maximum(lo_b, rstar), hi_b))):
                        i_x, i_t, i_k, i_c = _ray_integrals(r0, r1, a, c)
                        # (a/rho)^2 X - 2 (a/rho) T + K, times (rho/a)^2, integrated
                        dens_d = X * i_x - Tx * i_t + K0 * i_k
                        dens_c = np.where(i_c > 0, curv_c * i_c, 0.0)
                        wd = patch.weights * dens_d
                        wc = patch.weights * dens_c
                        if part == "ball":
                            acc["B"] += [wd.sum(), wc.sum()]
                        else:
                            for li, name in enumerate(labels):
                                sel = patch.labels == li
                                acc[name] += [wd[sel].sum(), wc[sel].sum()]
        per_piece.append({k: (float(v[0]), float(v[1])) for k, v in acc.items()})
    d = sum(v[0] for t in per_piece for v in t.values())
    cv = sum(v[1] for t in per_piece for v in t.values())
    per_region = [(f"K{pi}:{name}", t[name][0], t[name][1]) for pi, t in enumerate(per_piece) for name in REGION_ORDER]
    return ConstructionEnergy(EnergyReport(d, cv, d + cv, per_region), per_piece)


def box_energy(source: FieldSource, dec: CuboidDecomposition, c: MaterialConstants = UNIT_CONSTANTS,
               n_gauss: int = 4) -> float:
    """Energy of a smooth source over ``K_m`` by tensor Gauss-Legendre per cube."""
    a = dec.a
    x, w = gauss_segment(-a, a, n_gauss)
    X, Y, Z = np.meshgrid(x, x, x, indexing="ij")
    W = (w[:, None, None] * w[None, :, None] * w[None, None, :]).ravel()
    base = np.stack([X.ravel(), Y.ravel(), Z.ravel()], axis=1)
    pts = np.concatenate([base + [0, 0, 2 * a * j] for j in range(dec.m)])
    wts = np.tile(W, dec.m)
    g = dec.to_global(pts)
    step = 1e-5 * max(a, 1e-300)
    n, dn, _ = directional_derivatives(source, g, np.broadcast_to(EYE, (len(g), 3, 3)), np.full(len(g), step))
    Dphi = jacobian_phi(source, g, step)
    R = cover_unchecked(n)
    dens_d = np.sum(p_operator(np.swapaxes(R, 1, 2) @ Dphi - EYE, c) ** 2, axis=(1, 2))
    dens_c = c.lam * (8.0 * np.sum(dn**2, axis=(1, 2))) ** (c.p / 2)
    return float(wts @ (dens_d + dens_c))


@dataclass
class DipoleInsertion:
    decomposition: CuboidDecomposition
    alpha: float
    construction: DipoleConstruction
    energy: ConstructionEnergy
    base_energy: float
    degree_ledger: list
    field: CosseratField | None = None

    @property
    def singularities(self) -> list:
        return self.degree_ledger

    def manifest(self) -> dict:
        dec = self.decomposition
        return {
            "P": dec.P.tolist(),
            "N": dec.N.tolist(),
            "m": dec.m,
            "alpha": self.alpha,
            "a_m": dec.a,
            "d": dec.d,
            "energy_K": self.energy.total.total,
            "base_energy_K": self.base_energy,
            "excess_energy": self.energy.total.total - self.base_energy,
            "leading_bound": 64 * np.pi * dec.d,
            "measured_energy_breakdown": {
                name: {"deformation": v[0], "curvature": v[1]} for name, v in self.energy.per_piece[0].items()
            },
            "degree_ledger": [p.to_dict() for p in self.degree_ledger],
            "hausdorff_distance": dec.hausdorff_to_segment(),
        }


def insert_dipole(base, P, N, m: int = 4, alpha: float | None = None, domain: GridDomain | None = None,
                  c: MaterialConstants = UNIT_CONSTANTS, n_r: int = 16, n_theta: int = 10,
                  ledger: bool = True) -> DipoleInsertion:
    """Insert a dipole along ``[P, N]`` into ``base``.

    ``base`` is a lifted source or a ``CosseratField`` (whose stored ``n`` is
    taken as the lift); in the latter case the result also carries the
    sampled grid field. ``alpha`` defaults to ``a_m / 8``.
    """
    field0 = base if isinstance(base, CosseratField) else None
    src = GridSource(base, use_lift=True) if field0 is not None else base
    dec = CuboidDecomposition(P, N, m)
    alpha = dec.a / 8 if alpha is None else float(alpha)
    if not 0 < alpha < dec.a / 2:
        raise AlphaTooLarge("alpha must lie in (0, a_m / 2)", alpha=alpha, a_m=dec.a)
    dom = domain if domain is not None else (field0.domain if field0 is not None else None)
    if dom is not None:
        need = dec.a + alpha
        clear = min(dom.distance_to_boundary(dec.P), dom.distance_to_boundary(dec.N))
        if clear < need:
            raise SegmentTooClose("segment too close to the domain boundary", clearance=clear, required=need)
    if not np.all(src.contains(dec.corners())):
        raise OutsideDomain("cuboid leaves the base field's domain")
    cons = DipoleConstruction(src, [(dec, alpha)])
    en = construction_energy(cons, c, n_r=n_r, n_theta=n_theta)
    base_e = box_energy(src, dec, c)
    sing = cons.candidate_singularities() if ledger else []
    sampled = cons.sample(field0) if field0 is not None else None
    return DipoleInsertion(dec, alpha, cons, en, base_e, sing, sampled)


# --- boundary data with forced singularities ---------------------------------------


@dataclass
class BoundaryDataSpec:
    N_target: int
    epsilon: float
    m: int = 4

    def __post_init__(self):
        if int(self.N_target) < 1:
            raise ValueError("N_target must be >= 1")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")

    @property
    def lambdas(self) -> np.ndarray:
        return np.arange(1, self.N_target + 1) / (2 * self.N_target)

    @property
    def xi(self) -> np.ndarray:
        lam = self.lambdas
        return np.stack([np.zeros_like(lam), np.sqrt(1 - lam**2), lam], axis=1)

    @property
    def eta(self) -> np.ndarray:
        return -self.xi

    def pairs(self) -> list:
        e = self.epsilon
        out = []
        for xi, eta in zip(self.xi, self.eta):
            out.append(((1 - e) * xi, (1 + e) * xi))
            out.append(((1 + e) * eta, (1 - e) * eta))
        return out

    def tube_z_range(self, i: int) -> tuple[float, float]:
        """z-extent of the tube around the i-th positive dipole (1-based):
        radius ``eps``, extended by ``eps`` past both endpoints."""
        e = self.epsilon
        lam = self.lambdas[i - 1]
        lat = e * np.sqrt(1 - lam**2)
        return (1 - 2 * e) * lam - lat, (1 + 2 * e) * lam + lat

    def tube_contains(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape[:-1], dtype=bool)
        for P, N in self.pairs():
            out |= cylinder_contains(x, P, N, self.epsilon)
        return out

    def to_dict(self) -> dict:
        return {
            "N_target": int(self.N_target),
            "epsilon": self.epsilon,
            "m": self.m,
            "lambda": self.lambdas.tolist(),
            "xi": self.xi.tolist(),
            "eta": self.eta.tolist(),
            "dipoles": [{"P": P.tolist(), "N": N.tolist()} for P, N in self.pairs()],
        }


def check_separation(spec: BoundaryDataSpec, outer_radius: float = 2.0) -> dict:
    N = spec.N_target
    e = spec.epsilon
    ranges = [spec.tube_z_range(i) for i in range(1, N + 1)]
    gaps = [ranges[i + 1][0] - ranges[i][1] for i in range(N - 1)]
    min_gap = min(gaps) if gaps else float("inf")
    pairs = spec.pairs()
    ext = []
    for P, Nn in pairs:
        u = (Nn - P) / np.linalg.norm(Nn - P)
        ext.append((P - e * u, Nn + e * u))
    min_dist = float("inf")
    for i in range(len(ext)):
        for j in range(i + 1, len(ext)):
            min_dist = min(min_dist, _segment_distance(*ext[i], *ext[j]))
    max_reach = max(max(np.linalg.norm(p), np.linalg.norm(q)) for p, q in ext) + e
    report = {
        "z_ranges": [list(r) for r in ranges],
        "min_z_gap": min_gap,
        "required_z_gap": 1 / (4 * N),
        "min_tube_axis_distance": min_dist,
        "required_axis_distance": 2 * e,
        "max_reach": max_reach,
        "outer_radius": outer_radius,
    }
    report["ok"] = bool(min_gap >= 1 / (4 * N) and min_dist > 2 * e and max_reach < outer_radius
                        and ranges[0][0] > 0)
    return report


def _segment_distance(p1, q1, p2, q2) -> float:
    """Distance between two segments, by dense sampling plus a local solve."""
    from scipy.optimize import minimize

    def dist(st):
        s, t = np.clip(st, 0.0, 1.0)
        return float(np.linalg.norm(p1 + s * (q1 - p1) - p2 - t * (q2 - p2)))

    grid = np.linspace(0, 1, 21)
    best = min(((s, t) for s in grid for t in grid), key=dist)
    res = minimize(dist, best, method="Nelder-Mead", options={"xatol": 1e-12, "fatol": 1e-14})
    return min(dist(best), dist(res.x))


@dataclass
class BoundaryData:
    spec: BoundaryDataSpec
    construction: DipoleConstruction
    energy_ball: ConstructionEnergy
    separation: dict
    boundary_degree: int
    budget: float

    def g0(self, h: float, dirichlet: bool = True) -> CosseratField:
        """The construction sampled on the unit-ball grid; boundary nodes
        carry the trace and are flagged Dirichlet."""
        dom = make_domain("ball", h, center=(0.0, 0.0, 0.0), radius=1.0)
        return sample_source(dom, self.construction, dirichlet)

    def g_tilde(self, h: float, outer_radius: float = 2.0) -> CosseratField:
        dom = make_domain("ball", h, center=(0.0, 0.0, 0.0), radius=outer_radius)
        return sample_source(dom, self.construction, False)

    def manifest(self) -> dict:
        return {
            "spec": self.spec.to_dict(),
            "energy": self.energy_ball.total.total,
            "energy_report": self.energy_ball.to_dict(),
            "energy_per_dipole": self.energy_ball.total.total / (2 * self.spec.N_target),
            "budget": self.budget,
            "separation": self.separation,
            "boundary_degree": {"lift_degree": self.boundary_degree, "mod2_degree": self.boundary_degree % 2},
            "alpha": [al for _, al in self.construction.pieces],
        }


def sample_source(domain: GridDomain, source: FieldSource, dirichlet_boundary: bool = False) -> CosseratField:
    X = domain.positions
    phi = np.zeros(domain.dims + (3,))
    n = np.zeros(domain.dims + (3,))
    n[..., 2] = 1.0
    ins = domain.inside
    phi[ins] = source.phi(X[ins])
    n[ins] = source.axes(X[ins])
    dir_mask = (domain.mask == BOUNDARY) if dirichlet_boundary else np.zeros(domain.dims, dtype=bool)
    return CosseratField(domain, phi, n, dir_mask)


def thm1_boundary_data(N_target: int, epsilon: float, m: int = 4, alpha_fraction: float = 1 / 8,
                       c: MaterialConstants = UNIT_CONSTANTS, enforce_budget: bool = True,
                       outer_radius: float = 2.0, n_r: int = 16, n_theta: int = 10) -> BoundaryData:
    """``2 N`` dipoles inserted into the zero-energy state ``(-x, -y, z), e3``."""
    spec = BoundaryDataSpec(int(N_target), float(epsilon), int(m))
    sep = check_separation(spec, outer_radius)
    if not sep["ok"]:
        raise SeparationViolated("tubes violate the separation requirements", **{
            k: sep[k] for k in ("min_z_gap", "required_z_gap", "min_tube_axis_distance", "max_reach")})
    base = rigid_source()
    pieces = []
    for P, N in spec.pairs():
        dec = CuboidDecomposition(P, N, spec.m)
        pieces.append((dec, alpha_fraction * dec.a))
    cons = DipoleConstruction(base, pieces)
    en = construction_energy(cons, c, ball=((0.0, 0.0, 0.0), 1.0), n_r=n_r, n_theta=n_theta)
    budget = np.pi / spec.N_target
    E = en.total.total
    if enforce_budget and not E < budget:
        raise EpsilonTooLarge("boundary data energy exceeds pi / N", energy=E, budget=budget,
                              epsilon_max=float(spec.epsilon * budget / E))
    deg = probe_degree(cons, np.zeros(3), 1.0).degree
    return BoundaryData(spec, cons, en, sep, deg, budget)


def manifest_json(obj: dict) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=float)
