"""Point-evaluable fields.

Degree probes and surface quadratures need field values at arbitrary
points. A source returns the deformation ``phi`` and a unit axis per
point. When ``has_lift`` is true the axes form a continuous lift of the
rotation field and their signs carry meaning; otherwise only the axis
line (equivalently the rotation ``cover(n)``) is meaningful.
"""

from __future__ import annotations

import numpy as np

from .errors import OutsideDomain
from .grid import CosseratField, rigid_n, rigid_phi
from .so3 import principal_axis


class FieldSource:
    has_lift = False

    def phi(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def axes(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def contains(self, x: np.ndarray) -> np.ndarray:
        return np.ones(np.asarray(x).shape[:-1], dtype=bool)

    def features(self) -> list:
        """Points next to which the field has structure finer than any
        reasonable probe resolution."""
        return []

    def require_inside(self, x: np.ndarray) -> None:
        ok = self.contains(x)
        if not np.all(ok):
            raise OutsideDomain("sample points leave the field's domain", n_outside=int((~ok).sum()))


class AnalyticSource(FieldSource):
    def __init__(self, phi_fn, n_fn, has_lift: bool = True, features=(), contains=None):
        self._phi = phi_fn
        self._n = n_fn
        self.has_lift = has_lift
        self._features = [np.asarray(f, dtype=float) for f in features]
        self._contains = contains

    def phi(self, x):
        return np.asarray(self._phi(np.asarray(x, dtype=float)), dtype=float)

    def axes(self, x):
        v = np.asarray(self._n(np.asarray(x, dtype=float)), dtype=float)
        return v / np.linalg.norm(v, axis=-1, keepdims=True)

    def contains(self, x):
        if self._contains is None:
            return super().contains(x)
        return self._contains(np.asarray(x, dtype=float))

    def features(self):
        return list(self._features)


def rigid_source() -> AnalyticSource:
    """The zero-energy state phi = (-x, -y, z), n = e3, defined everywhere."""
    return AnalyticSource(rigid_phi, rigid_n)


class GridSource(FieldSource):
    """Trilinear interpolation of a nodal field.

    Without ``use_lift`` the rotations ``n n^T`` are interpolated and the
    principal axis is returned, so sign flips in the stored ``n`` are
    harmless. With ``use_lift`` the stored ``n`` is trusted as a continuous
    lift and interpolated directly. Corner nodes outside ``valid`` (default:
    the domain) are dropped and the weights renormalized.
    """

    def __init__(self, field: CosseratField, use_lift: bool = False, valid=None):
        self.field = field
        self.has_lift = use_lift
        self.valid = field.domain.inside if valid is None else np.asarray(valid, dtype=bool)
        dom = field.domain
        self._origin = dom.origin
        self._h = dom.h
        self._dims = np.asarray(dom.dims)
        self._nn = field.n[..., :, None] * field.n[..., None, :]

    def _corners(self, x):
        x = np.asarray(x, dtype=float)
        flat = x.reshape(-1, 3)
        u = (flat - self._origin) / self._h
        i0 = np.clip(np.floor(u).astype(int), 0, self._dims - 2)
        f = u - i0
        inside_box = np.all((u >= -1e-9) & (u <= self._dims - 1 + 1e-9), axis=1)
        idx, wts = [], []
        for corner in range(8):
            off = np.array([(corner >> 2) & 1, (corner >> 1) & 1, corner & 1])
            ii = i0 + off
            w = np.prod(np.where(off == 1, f, 1.0 - f), axis=1)
            ok = self.valid[ii[:, 0], ii[:, 1], ii[:, 2]] & inside_box
            idx.append(ii)
            wts.append(np.where(ok, w, 0.0))
        W = np.stack(wts, axis=1)
        total = W.sum(axis=1)
        return x.shape[:-1], idx, W, total

    def contains(self, x):
        shape, _, _, total = self._corners(x)
        return (total > 1e-9).reshape(shape)

    def _interp(self, arr, idx, W):
        out = 0.0
        for k, ii in enumerate(idx):
            out = out + W[:, k].reshape((-1,) + (1,) * (arr.ndim - 3)) * arr[ii[:, 0], ii[:, 1], ii[:, 2]]
        return out

    def phi(self, x):
        shape, idx, W, total = self._corners(x)
        if np.any(total <= 1e-9):
            raise OutsideDomain("interpolation point outside the grid field")
        out = self._interp(self.field.phi, idx, W) / total[:, None]
        return out.reshape(shape + (3,))

    def axes(self, x):
        shape, idx, W, total = self._corners(x)
        if np.any(total <= 1e-9):
            raise OutsideDomain("interpolation point outside the grid field")
        nbar = self._interp(self.field.n, idx, W)
        if self.has_lift:
            out = nbar / np.linalg.norm(nbar, axis=-1, keepdims=True)
        else:
            out = principal_axis(self._interp(self._nn, idx, W))
            flip = np.sum(out * nbar, axis=-1) < 0
            out[flip] *= -1.0
        return out.reshape(shape + (3,))


# --- differentiation of sources ---------------------------------------------


def aligned(v: np.ndarray, ref: np.ndarray) -> np.ndarray:
    """Flip rows of ``v`` to have non-negative dot product with ``ref``."""
    s = np.where(np.sum(v * ref, axis=-1) < 0, -1.0, 1.0)
    return v * s[..., None]


def directional_derivatives(source: FieldSource, x, dirs, step):
    """Central differences of phi and of the (sign-aligned) axis field.

    ``x`` is ``(K, 3)``, ``dirs`` is ``(K, m, 3)`` and ``step`` is ``(K,)``.
    Returns ``n (K,3)``, ``dn (K,m,3)`` projected to the tangent plane, and
    ``dphi (K,m,3)``.
    """
    x = np.asarray(x, dtype=float)
    dirs = np.asarray(dirs, dtype=float)
    step = np.asarray(step, dtype=float)
    K, m, _ = dirs.shape
    n0 = source.axes(x)
    shifts = step[:, None, None] * dirs
    xp = (x[:, None, :] + shifts).reshape(-1, 3)
    xm = (x[:, None, :] - shifts).reshape(-1, 3)
    ref = np.repeat(n0, m, axis=0)
    npl = aligned(source.axes(xp), ref).reshape(K, m, 3)
    nmi = aligned(source.axes(xm), ref).reshape(K, m, 3)
    g = (npl - nmi) / (2.0 * step[:, None, None])
    dn = g - np.einsum("kij,kj->ki", g, n0)[..., None] * n0[:, None, :]
    dphi = (source.phi(xp).reshape(K, m, 3) - source.phi(xm).reshape(K, m, 3)) / (
        2.0 * step[:, None, None]
    )
    return n0, dn, dphi


def jacobian_phi(source: FieldSource, x, step) -> np.ndarray:
    """``Dphi[k, a, i]`` by central differences along the coordinate axes."""
    x = np.asarray(x, dtype=float)
    K = len(x)
    dirs = np.broadcast_to(np.eye(3), (K, 3, 3))
    step = np.broadcast_to(np.asarray(step, dtype=float), (K,))
    shifts = step[:, None, None] * dirs
    xp = (x[:, None, :] + shifts).reshape(-1, 3)
    xm = (x[:, None, :] - shifts).reshape(-1, 3)
    d = (source.phi(xp) - source.phi(xm)).reshape(K, 3, 3) / (2.0 * step[:, None, None])
    return np.swapaxes(d, 1, 2)
