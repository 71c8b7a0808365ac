"""Rotation algebra: SO(3), the half-turn set, its double cover and the
Cosserat energy density.

All array functions broadcast over leading axes, so ``cover`` accepts a
single vector of shape ``(3,)`` or a stack ``(..., 3)``.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .errors import InvalidConstants, InvalidUnitVector, NotAxisRotation, NotTangent

UNIT_TOL = 1e-12
MEMBER_TOL = 1e-10
EYE = np.eye(3)


@dataclass(frozen=True)
class MaterialConstants:
    mu1: float = 1.0
    muc: float = 1.0
    mu2: float = 1.0
    lam: float = 1.0
    p: float = 2.0

    def __post_init__(self):
        for name in ("mu1", "muc", "mu2", "lam"):
            if not getattr(self, name) > 0:
                raise InvalidConstants(f"{name} must be positive", value=getattr(self, name))
        if not self.p >= 2:
            raise InvalidConstants("p must be >= 2", value=self.p)

    @property
    def is_unit(self) -> bool:
        return self.mu1 == self.muc == self.mu2 == self.lam == 1.0 and self.p == 2.0

    def to_dict(self) -> dict:
        return asdict(self)


UNIT_CONSTANTS = MaterialConstants()


def is_rotation(R, tol: float = MEMBER_TOL) -> bool:
    R = np.asarray(R, dtype=float)
    ortho = np.linalg.norm(np.swapaxes(R, -1, -2) @ R - EYE, axis=(-2, -1))
    det = np.linalg.det(R)
    return bool(np.all(ortho <= tol) and np.all(np.abs(det - 1.0) <= tol))


def is_axis_rotation(R, tol: float = MEMBER_TOL) -> bool:
    """Half-turn test: orthogonal, symmetric and trace -1."""
    R = np.asarray(R, dtype=float)
    if not is_rotation(R, tol):
        return False
    sym = np.linalg.norm(R - np.swapaxes(R, -1, -2), axis=(-2, -1))
    tr = np.trace(R, axis1=-2, axis2=-1)
    return bool(np.all(sym <= tol) and np.all(np.abs(tr + 1.0) <= tol))


def _check_unit(q: np.ndarray) -> None:
    err = np.abs(np.linalg.norm(q, axis=-1) - 1.0)
    if np.any(err > UNIT_TOL):
        raise InvalidUnitVector("axis vector is not of unit length", max_error=float(err.max()))


def cover(q) -> np.ndarray:
    """Map unit vectors to half-turns, ``q -> 2 q q^T - I``."""
    q = np.asarray(q, dtype=float)
    _check_unit(q)
    return 2.0 * q[..., :, None] * q[..., None, :] - EYE


def cover_unchecked(q: np.ndarray) -> np.ndarray:
    return 2.0 * q[..., :, None] * q[..., None, :] - EYE


def canonical_sign(q: np.ndarray, tol: float = 1e-6) -> np.ndarray:
    """Flip each vector so that its first component with magnitude above
    ``tol`` is positive."""
    q = np.array(q, dtype=float)
    flat = q.reshape(-1, 3)
    big = np.abs(flat) > tol
    first = np.argmax(big, axis=1)
    lead = flat[np.arange(len(flat)), first]
    flat[lead < 0] *= -1.0
    return flat.reshape(q.shape)


def axis_of(R) -> np.ndarray:
    """Recover the rotation axis of a half-turn, canonically signed."""
    R = np.asarray(R, dtype=float)
    if not is_axis_rotation(R):
        raise NotAxisRotation("matrix is not a 180-degree rotation")
    Q = 0.5 * (R + EYE)  # = q q^T
    diag = np.diagonal(Q, axis1=-2, axis2=-1)
    k = np.argmax(diag, axis=-1)
    col = np.take_along_axis(Q, k[..., None, None], axis=-1)[..., 0]
    col = col / np.linalg.norm(col, axis=-1, keepdims=True)
    return canonical_sign(col)


def principal_axis(M: np.ndarray) -> np.ndarray:
    """Unit eigenvector of the largest eigenvalue of symmetric ``M``.

    Used on averaged ``q q^T`` tensors, where it is the nearest half-turn
    axis; the sign is arbitrary.
    """
    M = np.asarray(M, dtype=float)
    M = 0.5 * (M + np.swapaxes(M, -1, -2))
    _, vecs = np.linalg.eigh(M)
    return vecs[..., :, -1]


def cover_differential(q, v, tol: float = 1e-10) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    v = np.asarray(v, dtype=float)
    _check_unit(q)
    dot = np.abs(np.sum(q * v, axis=-1))
    if np.any(dot > tol * np.maximum(1.0, np.linalg.norm(v, axis=-1))):
        raise NotTangent("v is not tangent to the sphere at q", dot=float(np.max(dot)))
    return 2.0 * (v[..., :, None] * q[..., None, :] + q[..., :, None] * v[..., None, :])


def p_operator(A, c: MaterialConstants = UNIT_CONSTANTS) -> np.ndarray:
    """sqrt(mu1) dev sym A + sqrt(muc) skew A + sqrt(mu2)/3 tr(A) I."""
    A = np.asarray(A, dtype=float)
    At = np.swapaxes(A, -1, -2)
    sym = 0.5 * (A + At)
    skew = 0.5 * (A - At)
    tr = np.trace(A, axis1=-2, axis2=-1)[..., None, None]
    dev = sym - tr / 3.0 * EYE
    return np.sqrt(c.mu1) * dev + np.sqrt(c.muc) * skew + np.sqrt(c.mu2) / 3.0 * tr * EYE


def p_squared(A: np.ndarray, c: MaterialConstants) -> np.ndarray:
    """P(P(A)); half the gradient of |P(A)|^2 since P is self-adjoint."""
    At = np.swapaxes(A, -1, -2)
    sym = 0.5 * (A + At)
    skew = 0.5 * (A - At)
    tr = np.trace(A, axis1=-2, axis2=-1)[..., None, None]
    dev = sym - tr / 3.0 * EYE
    return c.mu1 * dev + c.muc * skew + c.mu2 / 3.0 * tr * EYE


def cosserat_density(Dphi, R, DR, c: MaterialConstants = UNIT_CONSTANTS):
    """Pointwise (deformation, curvature) energy densities.

    ``Dphi[..., a, i] = d phi_a / d x_i`` and ``DR[..., i, :, :] = d R / d x_i``.
    The curvature norm runs over all 27 entries of ``R^T DR``.
    """
    Dphi = np.asarray(Dphi, dtype=float)
    R = np.asarray(R, dtype=float)
    DR = np.asarray(DR, dtype=float)
    Rt = np.swapaxes(R, -1, -2)
    strain = Rt @ Dphi - EYE
    deformation = np.sum(p_operator(strain, c) ** 2, axis=(-2, -1))
    wryness = Rt[..., None, :, :] @ DR
    norm2 = np.sum(wryness**2, axis=(-3, -2, -1))
    curvature = c.lam * norm2 ** (c.p / 2.0)
    return deformation, curvature


def rotation_between(a, b) -> np.ndarray:
    """Smallest rotation taking unit vector ``a`` to unit vector ``b``."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    v = np.cross(a, b)
    s = np.linalg.norm(v)
    cth = float(np.dot(a, b))
    if s < 1e-14:
        if cth > 0:
            return EYE.copy()
        # half-turn about any axis perpendicular to a
        perp = np.cross(a, [1.0, 0.0, 0.0])
        if np.linalg.norm(perp) < 1e-8:
            perp = np.cross(a, [0.0, 1.0, 0.0])
        perp /= np.linalg.norm(perp)
        return cover_unchecked(perp)
    k = v / s
    K = np.array([[0, -k[2], k[1]], [k[2], 0, -k[0]], [-k[1], k[0], 0]])
    return EYE + s * K + (1 - cth) * (K @ K)


def axis_angle_matrix(axis, angle: float) -> np.ndarray:
    k = np.asarray(axis, dtype=float)
    k = k / np.linalg.norm(k)
    K = np.array([[0, -k[2], k[1]], [k[2], 0, -k[0]], [-k[1], k[0], 0]])
    return EYE + np.sin(angle) * K + (1 - np.cos(angle)) * (K @ K)


def frame_with_axis(axis) -> np.ndarray:
    """Rotation whose third column is the unit vector ``axis``."""
    return rotation_between(np.array([0.0, 0.0, 1.0]), np.asarray(axis, dtype=float))
