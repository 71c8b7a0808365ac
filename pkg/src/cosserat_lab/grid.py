"""Uniform grids, nodal Cosserat fields and volume quadrature.

A field stores the deformation ``phi`` and an S^2-valued lift ``n`` of the
micro-rotation at every node; the rotation itself is ``cover(n)``.
Energies use node-value times ``h**3`` quadrature over every in-domain node.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .errors import FormatError, OutsideDomain, ResolutionTooCoarse
from .so3 import UNIT_CONSTANTS, MaterialConstants, cosserat_density, cover_unchecked

OUTSIDE, INTERIOR, BOUNDARY = 0, 1, 2
DIRICHLET_BIT = 0x10
SHAPES = ("ball", "box", "cuboid")
MAGIC = b"CSRF1"
_HEADER = struct.Struct("<5sB6dd3I")
_CHUNK = 65536


@dataclass(eq=False)
class GridDomain:
    shape: str
    origin: np.ndarray
    h: float
    dims: tuple
    mask: np.ndarray
    params: dict = field(default_factory=dict)

    @property
    def inside(self) -> np.ndarray:
        return self.mask != OUTSIDE

    @property
    def n_inside(self) -> int:
        return int(np.count_nonzero(self.inside))

    @property
    def bbox(self) -> np.ndarray:
        hi = self.origin + self.h * (np.asarray(self.dims) - 1)
        return np.concatenate([self.origin, hi])

    def position(self, idx) -> np.ndarray:
        return self.origin + self.h * np.asarray(idx, dtype=float)

    @cached_property
    def positions(self) -> np.ndarray:
        axes = [self.origin[k] + self.h * np.arange(self.dims[k]) for k in range(3)]
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)

    @cached_property
    def inside_index(self) -> np.ndarray:
        """Flat position of each in-domain node in lexicographic order, -1 outside."""
        idx = np.full(self.dims, -1, dtype=np.int64)
        idx[self.inside] = np.arange(self.n_inside)
        return idx

    @cached_property
    def derivative_ops(self) -> tuple:
        return _derivative_operators(self)

    def contains_point(self, x) -> bool:
        x = np.asarray(x, dtype=float)
        p = self.params
        if self.shape == "ball":
            return float(np.linalg.norm(x - p["center"])) <= p["radius"]
        lo, hi = np.asarray(p["lo"]), np.asarray(p["hi"])
        return bool(np.all(x >= lo) and np.all(x <= hi))

    def distance_to_boundary(self, x) -> float:
        """Signed distance of ``x`` to the continuous shape boundary (positive inside)."""
        x = np.asarray(x, dtype=float)
        p = self.params
        if self.shape == "ball":
            return float(p["radius"] - np.linalg.norm(x - p["center"]))
        lo, hi = np.asarray(p["lo"]), np.asarray(p["hi"])
        return float(np.min(np.concatenate([x - lo, hi - x])))


def make_domain(shape: str, h: float, **geometry) -> GridDomain:
    """Build a masked grid.

    ``ball`` takes ``center`` and ``radius``; ``box`` takes ``lo`` and ``hi``;
    ``cuboid`` takes ``d`` and ``m`` and builds ``[-a,a]^2 x [-a, d+a]`` with
    ``a = d / (2 (m - 1))``, or explicit ``lo``/``hi``.
    """
    if shape not in SHAPES:
        raise ValueError(f"unknown shape {shape!r}")
    if not h > 0:
        raise ValueError("h must be positive")
    params = dict(geometry)
    if shape == "ball":
        center = np.asarray(params.get("center", (0.0, 0.0, 0.0)), dtype=float)
        radius = float(params.get("radius", 1.0))
        if not radius > 0:
            raise ValueError("radius must be positive")
        params = {"center": center, "radius": radius}
        lo, hi = center - radius, center + radius
    else:
        if shape == "cuboid" and "d" in params:
            d, m = float(params["d"]), int(params["m"])
            a = d / (2 * (m - 1))
            lo = np.array([-a, -a, -a])
            hi = np.array([a, a, d + a])
            params = {"d": d, "m": m, "a_m": a, "lo": lo, "hi": hi}
        else:
            lo = np.asarray(params["lo"], dtype=float)
            hi = np.asarray(params["hi"], dtype=float)
            params = {**params, "lo": lo, "hi": hi}
        if np.any(hi <= lo):
            raise ValueError("degenerate box")
    steps = np.floor((hi - lo) / h + 1e-9).astype(int)
    dims = tuple(int(s) + 1 for s in steps)
    origin = lo.copy()
    axes = [origin[k] + h * np.arange(dims[k]) for k in range(3)]
    X = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    if shape == "ball":
        raw = np.linalg.norm(X - params["center"], axis=-1) <= params["radius"] * (1 + 1e-12)
        inside = _prune(raw)
    else:
        raw = inside = np.ones(dims, dtype=bool)
    mask = _classify(inside)
    # resolution of the shape itself, before pruning isolated pole nodes
    across = _nodes_across(raw)
    if across < 4:
        raise ResolutionTooCoarse(
            "fewer than 4 nodes across the smallest dimension", nodes_across=across, h=h
        )
    return GridDomain(shape, origin, float(h), dims, mask, params)


def domain_from_mask(shape: str, origin, h: float, inside: np.ndarray, params=None) -> GridDomain:
    mask = _classify(np.asarray(inside, dtype=bool))
    return GridDomain(shape, np.asarray(origin, dtype=float), float(h), inside.shape, mask, params or {})


def _prune(inside: np.ndarray) -> np.ndarray:
    """Drop nodes with no in-domain neighbour along some axis; their
    derivative along that axis would be undefined."""
    inside = inside.copy()
    while True:
        padded = np.pad(inside, 1, constant_values=False)
        ok = inside.copy()
        for ax in range(3):
            ok &= np.roll(padded, 1, axis=ax)[1:-1, 1:-1, 1:-1] | np.roll(padded, -1, axis=ax)[1:-1, 1:-1, 1:-1]
        if np.array_equal(ok, inside):
            return inside
        inside = ok


def _classify(inside: np.ndarray) -> np.ndarray:
    padded = np.pad(inside, 1, constant_values=False)
    interior = inside.copy()
    for ax in range(3):
        for s in (1, -1):
            interior &= np.roll(padded, s, axis=ax)[1:-1, 1:-1, 1:-1]
    mask = np.zeros(inside.shape, dtype=np.uint8)
    mask[inside] = BOUNDARY
    mask[interior] = INTERIOR
    return mask


def _nodes_across(inside: np.ndarray) -> int:
    if not inside.any():
        return 0
    return int(min(inside.sum(axis=ax).max() for ax in range(3)))


def _derivative_operators(domain: GridDomain):
    """Sparse first-derivative matrices over in-domain nodes.

    Central differences where both axis neighbours are in the domain,
    one-sided where only one is, zero where neither is.
    """
    idx = domain.inside_index
    inside = domain.inside
    h = domain.h
    n = domain.n_inside
    pad = np.pad(idx, 1, constant_values=-1)
    rows_here = idx[inside]
    ops = []
    for ax in range(3):
        plus = np.roll(pad, -1, axis=ax)[1:-1, 1:-1, 1:-1][inside]
        minus = np.roll(pad, 1, axis=ax)[1:-1, 1:-1, 1:-1][inside]
        both = (plus >= 0) & (minus >= 0)
        only_p = (plus >= 0) & (minus < 0)
        only_m = (plus < 0) & (minus >= 0)
        r, c, v = [], [], []
        r += [rows_here[both]] * 2
        c += [plus[both], minus[both]]
        v += [np.full(both.sum(), 0.5 / h), np.full(both.sum(), -0.5 / h)]
        r += [rows_here[only_p]] * 2
        c += [plus[only_p], rows_here[only_p]]
        v += [np.full(only_p.sum(), 1 / h), np.full(only_p.sum(), -1 / h)]
        r += [rows_here[only_m]] * 2
        c += [rows_here[only_m], minus[only_m]]
        v += [np.full(only_m.sum(), 1 / h), np.full(only_m.sum(), -1 / h)]
        D = sp.csr_matrix(
            (np.concatenate(v), (np.concatenate(r), np.concatenate(c))), shape=(n, n)
        )
        ops.append(D)
    return tuple(ops)


@dataclass(eq=False)
class CosseratField:
    domain: GridDomain
    phi: np.ndarray
    n: np.ndarray
    dirichlet: np.ndarray

    def __post_init__(self):
        dims = tuple(self.domain.dims)
        self.phi = np.asarray(self.phi, dtype=float).reshape(dims + (3,))
        self.n = np.asarray(self.n, dtype=float).reshape(dims + (3,))
        self.dirichlet = np.asarray(self.dirichlet, dtype=bool).reshape(dims)
        inside = self.domain.inside
        err = np.abs(np.linalg.norm(self.n[inside], axis=-1) - 1.0)
        if err.size and err.max() > 1e-10:
            raise ValueError(f"n is not unit length (max error {err.max():.2e})")
        if np.any(self.dirichlet & (self.domain.mask != BOUNDARY)):
            raise ValueError("dirichlet nodes must be boundary nodes")

    def copy(self) -> "CosseratField":
        return CosseratField(self.domain, self.phi.copy(), self.n.copy(), self.dirichlet.copy())

    def rotations(self) -> np.ndarray:
        return cover_unchecked(self.n)

    def with_boundary_dirichlet(self) -> "CosseratField":
        return CosseratField(self.domain, self.phi, self.n, self.domain.mask == BOUNDARY)


def field_from_functions(domain: GridDomain, phi_fn, n_fn, dirichlet=None) -> CosseratField:
    X = domain.positions
    phi = np.zeros(X.shape)
    n = np.zeros(X.shape)
    n[..., 2] = 1.0
    inside = domain.inside
    phi[inside] = phi_fn(X[inside])
    vals = np.asarray(n_fn(X[inside]), dtype=float)
    n[inside] = vals / np.linalg.norm(vals, axis=-1, keepdims=True)
    if dirichlet is None:
        dirichlet = np.zeros(domain.dims, dtype=bool)
    return CosseratField(domain, phi, n, dirichlet)


def rigid_phi(x: np.ndarray) -> np.ndarray:
    """(x, y, z) -> (-x, -y, z); its gradient is the half-turn diag(-1, -1, 1)."""
    return np.asarray(x, dtype=float) * np.array([-1.0, -1.0, 1.0])


def rigid_n(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    out[..., 2] = 1.0
    return out


def rigid_base_field(domain: GridDomain, dirichlet_boundary: bool = False) -> CosseratField:
    """The zero-energy state phi(x) = (-x, -y, z), R = diag(-1, -1, 1)."""
    f = field_from_functions(domain, rigid_phi, rigid_n)
    return f.with_boundary_dirichlet() if dirichlet_boundary else f


# --- gradients -------------------------------------------------------------


def field_gradients(field: CosseratField):
    """(Dphi, Dn) at every in-domain node, lexicographic order.

    ``Dphi[k, a, i] = d phi_a / d x_i`` and ``Dn[k, i, :]`` is the derivative
    of ``n`` along axis ``i`` projected onto the tangent plane at ``n``.
    """
    inside = field.domain.inside
    phi = field.phi[inside]
    n = field.n[inside]
    ops = field.domain.derivative_ops
    Dphi = np.stack([D @ phi for D in ops], axis=-1)
    g = np.stack([D @ n for D in ops], axis=1)
    Dn = g - np.einsum("kij,kj->ki", g, n)[..., None] * n[:, None, :]
    return Dphi, Dn


def gradient(field: CosseratField, node) -> tuple:
    """Finite-difference (Dphi, Dn) at a single grid node."""
    node = tuple(int(i) for i in node)
    dom = field.domain
    if any(not (0 <= node[k] < dom.dims[k]) for k in range(3)) or not dom.inside[node]:
        raise OutsideDomain("node is outside the domain", node=node)
    k = int(dom.inside_index[node])
    inside = dom.inside
    Dphi = np.zeros((3, 3))
    g = np.zeros((3, 3))
    phi = field.phi[inside]
    n = field.n[inside]
    for i, D in enumerate(dom.derivative_ops):
        row = D.getrow(k)
        Dphi[:, i] = row @ phi
        g[i] = row @ n
    nk = field.n[node]
    Dn = g - (g @ nk)[:, None] * nk[None, :]
    return Dphi, Dn


# --- energy ----------------------------------------------------------------


@dataclass(eq=False)
class EnergyReport:
    deformation: float
    curvature: float
    total: float
    per_region: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "deformation": self.deformation,
            "curvature": self.curvature,
            "total": self.total,
            "per_region": [
                {"region": r, "deformation": d, "curvature": c} for r, d, c in self.per_region
            ],
        }


def node_densities(field: CosseratField, c: MaterialConstants = UNIT_CONSTANTS):
    """Per-node (deformation, curvature) densities over in-domain nodes."""
    Dphi, Dn = field_gradients(field)
    n = field.n[field.domain.inside]
    dens_d = np.empty(len(n))
    dens_c = np.empty(len(n))
    for s in range(0, len(n), _CHUNK):
        sl = slice(s, s + _CHUNK)
        nk, tk = n[sl], Dn[sl]
        R = cover_unchecked(nk)
        DR = 2.0 * (tk[..., :, None] * nk[:, None, None, :] + nk[:, None, :, None] * tk[..., None, :])
        dens_d[sl], dens_c[sl] = cosserat_density(Dphi[sl], R, DR, c)
    return dens_d, dens_c


def energy(field: CosseratField, c: MaterialConstants = UNIT_CONSTANTS, regions=None) -> EnergyReport:
    """Quadrature of the Cosserat energy; ``regions`` maps labels to node masks."""
    dens_d, dens_c = node_densities(field, c)
    vol = field.domain.h**3
    dd = float(np.sum(dens_d) * vol)
    cc = float(np.sum(dens_c) * vol)
    per_region = []
    if regions:
        inside = field.domain.inside
        for label, m in regions.items():
            sel = np.asarray(m, dtype=bool)[inside]
            per_region.append(
                (label, float(np.sum(dens_d[sel]) * vol), float(np.sum(dens_c[sel]) * vol))
            )
    return EnergyReport(dd, cc, dd + cc, per_region)


# --- file formats ------------------------------------------------------------


def write_field(path, field: CosseratField) -> None:
    dom = field.domain
    mask = dom.mask.astype(np.uint8) | np.where(field.dirichlet, DIRICHLET_BIT, 0).astype(np.uint8)
    header = _HEADER.pack(MAGIC, SHAPES.index(dom.shape), *dom.bbox, dom.h, *dom.dims)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(field.phi, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(field.n, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(mask, dtype=np.uint8).tobytes())


def read_field(path) -> CosseratField:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size:
        raise FormatError("file too short for a CSRF1 header", path=str(path))
    magic, code, *rest = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise FormatError("bad magic", path=str(path))
    if code >= len(SHAPES):
        raise FormatError("unknown shape tag", tag=code)
    bbox, h, dims = np.array(rest[:6]), rest[6], tuple(int(d) for d in rest[7:10])
    nn = dims[0] * dims[1] * dims[2]
    expected = _HEADER.size + 2 * nn * 3 * 8 + nn
    if len(raw) != expected or not h > 0:
        raise FormatError("payload size does not match header", expected=expected, actual=len(raw))
    off = _HEADER.size
    phi = np.frombuffer(raw, "<f8", nn * 3, off).reshape(dims + (3,)).astype(float)
    off += nn * 24
    n = np.frombuffer(raw, "<f8", nn * 3, off).reshape(dims + (3,)).astype(float)
    off += nn * 24
    mask = np.frombuffer(raw, np.uint8, nn, off).reshape(dims)
    dirichlet = (mask & DIRICHLET_BIT) != 0
    mask = (mask & 0x0F).astype(np.uint8)
    if np.any(mask > BOUNDARY):
        raise FormatError("invalid mask value")
    shape = SHAPES[code]
    lo, hi = bbox[:3], bbox[3:]
    if shape == "ball":
        params = {"center": 0.5 * (lo + hi), "radius": float(0.5 * np.min(hi - lo))}
    else:
        params = {"lo": lo, "hi": hi}
    dom = GridDomain(shape, lo.copy(), float(h), dims, mask.copy(), params)
    try:
        return CosseratField(dom, phi, n, dirichlet)
    except ValueError as exc:
        raise FormatError(str(exc)) from exc


def export_vtk(path, field: CosseratField) -> None:
    """Legacy ASCII structured-points file (x varies fastest)."""
    dom = field.domain
    nx, ny, nz = dom.dims
    order = lambda a: np.transpose(a, (2, 1, 0) + tuple(range(3, a.ndim)))  # noqa: E731
    mask = dom.mask.astype(int) | np.where(field.dirichlet, DIRICHLET_BIT, 0)
    lines = [
        "# vtk DataFile Version 3.0",
        f"cosserat field shape={dom.shape}",
        "ASCII",
        "DATASET STRUCTURED_POINTS",
        f"DIMENSIONS {nx} {ny} {nz}",
        "ORIGIN " + " ".join(repr(float(v)) for v in dom.origin),
        f"SPACING {dom.h!r} {dom.h!r} {dom.h!r}",
        f"POINT_DATA {nx * ny * nz}",
        "VECTORS phi double",
    ]
    lines += [" ".join(repr(float(v)) for v in row) for row in order(field.phi).reshape(-1, 3)]
    lines.append("VECTORS n double")
    lines += [" ".join(repr(float(v)) for v in row) for row in order(field.n).reshape(-1, 3)]
    lines += ["SCALARS mask int 1", "LOOKUP_TABLE default"]
    lines += [str(int(v)) for v in order(mask).reshape(-1)]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def import_vtk(path) -> CosseratField:
    try:
        with open(path) as fh:
            lines = fh.read().splitlines()
        shape = lines[1].split("shape=")[1].strip()
        dims = tuple(int(v) for v in lines[4].split()[1:4])
        origin = np.array([float(v) for v in lines[5].split()[1:4]])
        h = float(lines[6].split()[1])
        nn = dims[0] * dims[1] * dims[2]
        body = lines[9:]
        phi = np.array([[float(v) for v in ln.split()] for ln in body[:nn]])
        n = np.array([[float(v) for v in ln.split()] for ln in body[nn + 1 : 2 * nn + 1]])
        mask = np.array([int(v) for v in body[2 * nn + 3 : 3 * nn + 3]])
    except (IndexError, ValueError) as exc:
        raise FormatError(f"cannot parse VTK file: {exc}") from exc
    back = lambda a, k: np.transpose(a.reshape(dims[::-1] + k), (2, 1, 0) + tuple(range(3, 3 + len(k))))  # noqa: E731
    phi, n, mask = back(phi, (3,)), back(n, (3,)), back(mask, ())
    dirichlet = (mask & DIRICHLET_BIT) != 0
    mask = (mask & 0x0F).astype(np.uint8)
    hi = origin + h * (np.asarray(dims) - 1)
    params = (
        {"center": 0.5 * (origin + hi), "radius": float(0.5 * np.min(hi - origin))}
        if shape == "ball"
        else {"lo": origin, "hi": hi}
    )
    dom = GridDomain(shape, origin, h, dims, mask, params)
    return CosseratField(dom, np.ascontiguousarray(phi), np.ascontiguousarray(n), dirichlet)
