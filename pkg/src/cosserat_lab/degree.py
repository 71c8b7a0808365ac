"""Lifts to S^2, mapping degrees, and singularity detection.

The degree of a lift on a closed surface is the total signed spherical
area of its image divided by ``4 pi``. Surfaces are meshed from the unit
sphere via a ``surface_map`` and refined adaptively wherever neighbouring
images are far apart, so structure much smaller than the mesh (a bubble
of size ``alpha**2``) is still resolved once a vertex sits on it.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy import ndimage
from scipy.sparse.csgraph import breadth_first_order

from .errors import (
    AmbiguousLift,
    DegenerateTriangle,
    DegreeUnresolved,
    LiftObstruction,
    NotAxisRotation,
    OutsideDomain,
    ValueNotRegular,
)
from .grid import CosseratField
from .so3 import canonical_sign, cover_unchecked, principal_axis
from .sources import AnalyticSource, FieldSource, GridSource, aligned

AMBIGUOUS_COS = np.cos(np.radians(80.0))
ANTIPODAL_TOL = 1e-8
RESIDUAL_TOL = 0.1


# --- lifting ------------------------------------------------------------------


def lift_axes(axes: np.ndarray, edges: np.ndarray, seed: int = 0, seed_sign: float = 1.0) -> np.ndarray:
    """Choose signs of unit ``axes`` so adjacent nodes agree.

    Signs propagate breadth-first from ``seed``; each node copies the sign
    that best matches its parent. Afterwards every edge must be within 90
    degrees, otherwise the lift does not exist on this graph.
    """
    axes = np.asarray(axes, dtype=float)
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    K = len(axes)
    if len(edges):
        dots = np.sum(axes[edges[:, 0]] * axes[edges[:, 1]], axis=1)
        bad = np.abs(dots) < AMBIGUOUS_COS
        if np.any(bad):
            e = edges[np.argmax(bad)]
            raise AmbiguousLift("neighbouring axes are nearly perpendicular", edge=e.tolist(),
                                n_edges=int(bad.sum()))
    g = sp.coo_matrix((np.ones(len(edges)), (edges[:, 0], edges[:, 1])), shape=(K, K)).tocsr()
    order, pred = breadth_first_order(g, seed, directed=False, return_predecessors=True)
    if len(order) != K:
        raise LiftObstruction("node set is not connected", reached=len(order), total=K)
    # product of parent-relative signs along each tree path, by pointer jumping
    par = pred.copy()
    par[seed] = seed
    rel = np.ones(K)
    rel[order[1:]] = np.where(np.sum(axes[order[1:]] * axes[pred[order[1:]]], axis=1) < 0, -1.0, 1.0)
    while np.any(par != seed):
        rel = rel * np.where(par == seed, 1.0, rel[par])
        par = par[par]
    sign = seed_sign * rel
    n = axes * sign[:, None]
    if len(edges):
        dots = np.sum(n[edges[:, 0]] * n[edges[:, 1]], axis=1)
        if np.any(dots < 0):
            e = edges[np.argmin(dots)]
            raise LiftObstruction("no continuous lift: sign conflict around a cycle", edge=e.tolist())
    return n


@dataclass(frozen=True)
class LiftResult:
    n: np.ndarray
    seed_node: int
    sign_choice: float


def lift(R: np.ndarray, edges: np.ndarray, seed: int = 0) -> LiftResult:
    """Lift half-turns ``R (K,3,3)`` on a graph to unit vectors.

    The seed takes the canonical sign of its axis.
    """
    R = np.asarray(R, dtype=float)
    axes = principal_axis(0.5 * (R + np.eye(3)))
    if np.max(np.abs(cover_unchecked(axes) - R)) > 1e-8:
        raise NotAxisRotation("input is not a field of half-turns")
    sgn = 1.0 if np.allclose(canonical_sign(axes[seed]), axes[seed]) else -1.0
    return LiftResult(lift_axes(axes, edges, seed, sgn), int(seed), sgn)


def grid_edges(node_mask: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Six-neighbour edges between nodes of a boolean mask; returns the
    edge list in flat-mask indexing and the flat index map."""
    idx = np.full(node_mask.shape, -1, dtype=np.int64)
    idx[node_mask] = np.arange(int(node_mask.sum()))
    edges = []
    for ax in range(3):
        a = np.moveaxis(idx, ax, 0)
        e0, e1 = a[:-1], a[1:]
        ok = (e0 >= 0) & (e1 >= 0)
        edges.append(np.stack([e0[ok], e1[ok]], axis=1))
    return np.concatenate(edges), idx


def lift_grid(field: CosseratField, node_mask=None, seed=None) -> CosseratField:
    """Relift a field on a node set (default: the whole domain).

    Returns a copy whose ``n`` on ``node_mask`` is a continuous lift; other
    nodes are left untouched.
    """
    mask = field.domain.inside if node_mask is None else np.asarray(node_mask, dtype=bool) & field.domain.inside
    edges, idx = grid_edges(mask)
    seed_flat = 0 if seed is None else int(idx[tuple(seed)])
    if seed_flat < 0:
        raise OutsideDomain("seed is not in the node set")
    axes = field.n[mask]
    sgn = 1.0 if np.allclose(canonical_sign(axes[seed_flat]), axes[seed_flat]) else -1.0
    out = field.copy()
    out.n[mask] = lift_axes(axes, edges, seed_flat, sgn)
    return out


# --- spherical meshes and degrees ---------------------------------------------


def signed_areas(a, b, c) -> np.ndarray:
    """Signed solid angles of spherical triangles (Van Oosterom-Strackee)."""
    num = np.einsum("ki,ki->k", a, np.cross(b, c))
    den = 1.0 + np.einsum("ki,ki->k", a, b) + np.einsum("ki,ki->k", b, c) + np.einsum("ki,ki->k", c, a)
    return 2.0 * np.arctan2(num, den)


def _check_triangles(a, b, c):
    for u, v in ((a, b), (b, c), (c, a)):
        gap = np.linalg.norm(u + v, axis=1)
        if np.any(gap < ANTIPODAL_TOL):
            raise DegenerateTriangle("triangle has antipodal vertex images", gap=float(gap.min()))


def _round_degree(raw: float) -> int:
    deg = int(np.rint(raw))
    if abs(raw - deg) >= RESIDUAL_TOL:
        raise DegreeUnresolved("degree does not round cleanly", raw=float(raw))
    return deg


def sphere_degree_raw(values: np.ndarray, faces: np.ndarray) -> float:
    values = np.asarray(values, dtype=float)
    faces = np.asarray(faces, dtype=np.int64)
    a, b, c = values[faces[:, 0]], values[faces[:, 1]], values[faces[:, 2]]
    _check_triangles(a, b, c)
    return float(np.sum(signed_areas(a, b, c)) / (4 * np.pi))


def sphere_degree(values: np.ndarray, faces: np.ndarray, min_dot: float = 0.5) -> int:
    """Degree of a vertex map on an outward-oriented closed triangle mesh.

    ``min_dot`` guards resolution: adjacent images further apart than
    ``arccos(min_dot)`` make the sum unreliable.
    """
    values = np.asarray(values, dtype=float)
    faces = np.asarray(faces, dtype=np.int64)
    for i, j in ((0, 1), (1, 2), (2, 0)):
        dots = np.sum(values[faces[:, i]] * values[faces[:, j]], axis=1)
        if np.any(dots < min_dot):
            raise DegreeUnresolved("mesh too coarse for the map", min_dot=float(dots.min()))
    return _round_degree(sphere_degree_raw(values, faces))


def icosphere(level: int = 2):
    """Unit icosphere with outward-oriented faces."""
    t = (1 + 5**0.5) / 2
    v = [(-1, t, 0), (1, t, 0), (-1, -t, 0), (1, -t, 0), (0, -1, t), (0, 1, t),
         (0, -1, -t), (0, 1, -t), (t, 0, -1), (t, 0, 1), (-t, 0, -1), (-t, 0, 1)]
    f = [(0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11), (1, 5, 9), (5, 11, 4),
         (11, 10, 2), (10, 7, 6), (7, 1, 8), (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8),
         (3, 8, 9), (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1)]
    verts = [np.array(p, dtype=float) / np.linalg.norm(p) for p in v]
    faces = [tuple(x) for x in f]
    for _ in range(level):
        cache = {}

        def mid(i, j):
            key = (min(i, j), max(i, j))
            if key not in cache:
                m = verts[i] + verts[j]
                verts.append(m / np.linalg.norm(m))
                cache[key] = len(verts) - 1
            return cache[key]

        new = []
        for a, b, c in faces:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            new += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new
    return np.array(verts), np.array(faces, dtype=np.int64)


def _insert_point(verts: list, faces: list, u: np.ndarray, tol: float = 1e-12) -> None:
    """Add direction ``u`` as a vertex by splitting the face containing it."""
    V = np.array(verts)
    if np.min(np.linalg.norm(V - u, axis=1)) < tol:
        return
    F = np.array(faces)
    a, b, c = V[F[:, 0]], V[F[:, 1]], V[F[:, 2]]
    s1 = np.einsum("ki,ki->k", np.cross(a, b), np.broadcast_to(u, a.shape))
    s2 = np.einsum("ki,ki->k", np.cross(b, c), np.broadcast_to(u, a.shape))
    s3 = np.einsum("ki,ki->k", np.cross(c, a), np.broadcast_to(u, a.shape))
    front = np.einsum("ki,i->k", a + b + c, u) > 0
    score = np.minimum(np.minimum(s1, s2), s3)
    score[~front] = -np.inf
    k = int(np.argmax(score))
    i, j, l = faces[k]
    verts.append(np.asarray(u, dtype=float))
    w = len(verts) - 1
    faces[k] = (i, j, w)
    faces.append((j, l, w))
    faces.append((l, i, w))


@dataclass
class ProbeResult:
    degree: int
    raw: float
    n_vertices: int
    n_triangles: int

    @property
    def mod2(self) -> int:
        return self.degree % 2


def adaptive_degree(
    sample,
    surface_map,
    has_lift: bool,
    feature_dirs=(),
    base_level: int = 2,
    max_arc_deg: float = 15.0,
    min_edge: float = 1e-12,
    max_generations: int = 80,
    max_vertices: int = 400_000,
) -> ProbeResult:
    """Degree of ``sample(surface_map(u))`` over the unit sphere of ``u``.

    ``sample`` maps points ``(K,3)`` to unit vectors. When ``has_lift`` is
    false they are axes with arbitrary sign; signs are then fixed by a lift
    on the base mesh and by alignment for later vertices. Edges whose image
    arc exceeds ``max_arc_deg`` are bisected while their parameter length
    exceeds ``min_edge``. The split decision depends only on the edge, so
    refinement stays conforming.
    """
    cos_arc = np.cos(np.radians(max_arc_deg))
    for extra in range(4):
        V, F = icosphere(base_level + extra)
        verts, faces = list(V), [tuple(f) for f in F]
        kept = []
        for u in feature_dirs:
            u = np.asarray(u, dtype=float)
            nu = np.linalg.norm(u)
            if nu > 0 and all(np.linalg.norm(u / nu - w) > 1e-6 for w in kept):
                kept.append(u / nu)
                _insert_point(verts, faces, u / nu)
        U = np.array(verts)
        N = np.asarray(sample(surface_map(U)), dtype=float)
        if has_lift:
            break
        edges = np.concatenate([np.array(faces)[:, [0, 1]], np.array(faces)[:, [1, 2]], np.array(faces)[:, [2, 0]]])
        try:
            N = lift_axes(N, edges, 0)
            break
        except AmbiguousLift:
            if extra == 3:
                raise
    U = list(U)
    N = list(N)
    memo: dict = {}
    active = [tuple(int(i) for i in f) for f in faces]
    passive: set = set()
    by_edge: dict = {}  # edge -> passive triangles containing it

    def edge_keys(t):
        return [(min(t[k], t[(k + 1) % 3]), max(t[k], t[(k + 1) % 3])) for k in range(3)]

    def longest_of(t):
        P = np.array([U[i] for i in t])
        return int(np.argmax(np.linalg.norm(P - np.roll(P, -1, axis=0), axis=1)))

    for _gen in range(max_generations):
        if not active:
            break
        Ua, Na = np.array(U), np.array(N)
        A = np.array(active)
        pairs = [(A[:, i], A[:, j]) for i, j in ((0, 1), (1, 2), (2, 0))]
        lengths = np.stack([np.linalg.norm(Ua[e0] - Ua[e1], axis=1) for e0, e1 in pairs], axis=1)
        marked = set()
        for e, (e0, e1) in enumerate(pairs):
            split = (np.sum(Na[e0] * Na[e1], axis=1) < cos_arc) & (lengths[:, e] > min_edge)
            marked.update((int(min(p, q)), int(max(p, q))) for p, q in zip(e0[split], e1[split]))
        # longest-edge closure keeps the triangles shape-regular; finished
        # triangles reached by the closure are reactivated
        longest = dict(zip(active, np.argmax(lengths, axis=1).tolist()))
        tri_by_edge: dict = {}
        for t in active:
            for k in edge_keys(t):
                tri_by_edge.setdefault(k, []).append(t)
        queue = list(marked)
        while queue:
            e = queue.pop()
            for t in list(by_edge.get(e, ())):
                passive.discard(t)
                for k in edge_keys(t):
                    by_edge[k].discard(t)
                    tri_by_edge.setdefault(k, []).append(t)
                longest[t] = longest_of(t)
            for t in tri_by_edge.get(e, ()):
                lk = edge_keys(t)[longest[t]]
                if lk not in marked:
                    marked.add(lk)
                    queue.append(lk)
        need = sorted(k for k in marked if k not in memo)
        if need:
            K = np.array(need)
            mids = Ua[K[:, 0]] + Ua[K[:, 1]]
            mids /= np.linalg.norm(mids, axis=1, keepdims=True)
            vals = np.asarray(sample(surface_map(mids)), dtype=float)
            if not has_lift:
                vals = aligned(vals, Na[K[:, 0]] + Na[K[:, 1]])
            for key, m, v in zip(need, mids, vals):
                memo[key] = len(U)
                U.append(m)
                N.append(v)
            if len(U) > max_vertices:
                raise DegreeUnresolved("adaptive refinement exceeded the vertex budget", vertices=len(U))
        nxt = []
        for t, k in longest.items():
            lk = edge_keys(t)[k]
            if lk not in marked:
                passive.add(t)
                for key in edge_keys(t):
                    by_edge.setdefault(key, set()).add(t)
                continue
            # rotate so the longest edge is a-b
            a, b, c = t[k], t[(k + 1) % 3], t[(k + 2) % 3]
            m = memo[lk]
            kbc, kca = (min(b, c), max(b, c)), (min(c, a), max(c, a))
            if kbc in marked:
                nxt += [(m, b, memo[kbc]), (m, memo[kbc], c)]
            else:
                nxt.append((m, b, c))
            if kca in marked:
                nxt += [(a, m, memo[kca]), (memo[kca], m, c)]
            else:
                nxt.append((a, m, c))
        active = nxt
    if active:
        where = surface_map(np.array(U)[list(active[0])])
        raise DegreeUnresolved("adaptive refinement did not terminate", remaining=len(active),
                               near=np.asarray(where).tolist())
    Na = np.array(N)
    D = np.array(sorted(passive))
    a, b, c = Na[D[:, 0]], Na[D[:, 1]], Na[D[:, 2]]
    _check_triangles(a, b, c)
    raw = float(np.sum(signed_areas(a, b, c))) / (4 * np.pi)
    return ProbeResult(_round_degree(raw), raw, len(U), len(D))


def sphere_map(center, radius):
    center = np.asarray(center, dtype=float)
    return lambda u: center + radius * u


def probe_degree(source: FieldSource, center, radius: float, features=None, **kw) -> ProbeResult:
    """Degree of a source on the sphere ``|x - center| = radius``.

    ``features`` default to the source's own feature points; each is
    radially projected onto the probe and inserted as a mesh vertex.
    """
    center = np.asarray(center, dtype=float)
    smap = sphere_map(center, radius)
    feats = source.features() if features is None else features
    dirs = [np.asarray(f, dtype=float) - center for f in feats]
    # distant features are irrelevant and may alias nearby ones in direction
    dirs = [d for d in dirs if 1e-12 * max(radius, 1.0) < np.linalg.norm(d) < 3.0 * radius]
    check = smap(icosphere(2)[0])
    source.require_inside(check)
    return adaptive_degree(source.axes, smap, source.has_lift, dirs, **kw)


def mod2_degree_at(source, a, r: float, **kw) -> tuple[int, int | None]:
    """``(mod-2 degree, lift degree)`` of a source on the sphere ``S_r(a)``.

    A ``CosseratField`` is interpolated; its rotations only define the lift
    up to sign on the probe, which is then re-lifted on the probe mesh.
    """
    if isinstance(source, CosseratField):
        source = GridSource(source)
    res = probe_degree(source, a, r, **kw)
    return res.mod2, res.degree


def map_degree_phi(phi_source, a, r: float, value, min_norm: float = 1e-6, **kw) -> int:
    """Brouwer degree of ``phi`` on ``S_r(a)`` about the value ``value``."""
    value = np.asarray(value, dtype=float)
    if isinstance(phi_source, CosseratField):
        phi_source = GridSource(phi_source)
    center = np.asarray(a, dtype=float)
    smap = sphere_map(center, r)
    dense = phi_source.phi(smap(icosphere(4)[0])) - value
    if np.min(np.linalg.norm(dense, axis=1)) < min_norm:
        raise ValueNotRegular("value is attained (or nearly) on the probe sphere")

    def sample(x):
        v = phi_source.phi(x) - value
        nv = np.linalg.norm(v, axis=1, keepdims=True)
        if np.any(nv < min_norm):
            raise ValueNotRegular("value is attained (or nearly) on the probe sphere")
        return v / nv

    feats = [np.asarray(f, dtype=float) - center for f in phi_source.features()]
    return adaptive_degree(sample, smap, True, feats, **kw).degree


# --- singularities --------------------------------------------------------------


@dataclass
class SingularPoint:
    location: list
    mod2_degree: int | None
    lift_degree: int | None
    probe_radius: float
    cluster_size: int = 1
    note: str = ""

    def to_dict(self) -> dict:
        return asdict(self)


def flagged_cells(field: CosseratField, threshold_deg: float = 90.0) -> np.ndarray:
    """Cells whose corner rotations are more than ``threshold_deg`` apart.

    Half-turns about axes at angle ``t`` differ by a rotation of ``2 t``,
    so the test is on ``|n_a . n_b| < cos(threshold / 2)``.
    """
    n = field.n
    inside = field.domain.inside
    lim = np.cos(np.radians(threshold_deg / 2.0))
    nx, ny, nz = n.shape[:3]
    offs = [np.array([(c >> 2) & 1, (c >> 1) & 1, c & 1]) for c in range(8)]
    corner_n = [n[o[0]:nx - 1 + o[0], o[1]:ny - 1 + o[1], o[2]:nz - 1 + o[2]] for o in offs]
    corner_in = [inside[o[0]:nx - 1 + o[0], o[1]:ny - 1 + o[1], o[2]:nz - 1 + o[2]] for o in offs]
    all_in = np.logical_and.reduce(corner_in)
    worst = np.ones(all_in.shape)
    for i in range(8):
        for j in range(i + 1, 8):
            worst = np.minimum(worst, np.abs(np.sum(corner_n[i] * corner_n[j], axis=-1)))
    return all_in & (worst < lim)


def find_singularities(obj, probe_radius: float | None = None, threshold_deg: float = 90.0):
    """Singular points of a grid field, or of a construction exposing
    ``candidate_singularities()``.

    Grid detection flags cells, groups them with 26-connectivity and probes
    each cluster centroid. Clusters closer than twice the probe radius get
    no degree (``note = "AmbiguousSeparation"``).
    """
    if hasattr(obj, "candidate_singularities"):
        return obj.candidate_singularities(probe_radius)
    if isinstance(obj, FieldSource):
        return _feature_singularities(obj, probe_radius)
    field = obj
    h = field.domain.h
    r = 2.0 * h if probe_radius is None else probe_radius
    cells = flagged_cells(field, threshold_deg)
    labels, count = ndimage.label(cells, structure=np.ones((3, 3, 3)))
    if count == 0:
        return []
    centres, sizes = [], []
    for k in range(1, count + 1):
        idx = np.argwhere(labels == k)
        sizes.append(len(idx))
        centres.append(field.domain.origin + h * (idx.mean(axis=0) + 0.5))
    centres = np.array(centres)
    src = GridSource(field)
    out = []
    for k, cpt in enumerate(centres):
        dist = np.linalg.norm(centres - cpt, axis=1)
        dist[k] = np.inf
        sp_ = SingularPoint(cpt.tolist(), None, None, r, sizes[k])
        if np.min(dist) < 2 * r:
            sp_.note = "AmbiguousSeparation"
        else:
            try:
                sp_.mod2_degree, sp_.lift_degree = mod2_degree_at(src, cpt, r)
            except (OutsideDomain, AmbiguousLift, LiftObstruction, DegreeUnresolved, DegenerateTriangle) as exc:
                sp_.note = type(exc).__name__
        out.append(sp_)
    order = sorted(range(len(out)), key=lambda i: tuple(out[i].location))
    return [out[i] for i in order]


def _feature_singularities(src: FieldSource, probe_radius: float | None):
    """Probe the declared feature points of a point source."""
    feats = np.array([np.asarray(f, dtype=float) for f in src.features()]).reshape(-1, 3)
    if len(feats) == 0:
        return []
    if probe_radius is None:
        gaps = np.linalg.norm(feats[:, None] - feats[None], axis=-1)
        gaps[np.diag_indices(len(feats))] = np.inf
        probe_radius = min(0.1, 0.25 * float(gaps.min())) if len(feats) > 1 else 0.1
    out = []
    for f in feats:
        m2, d = mod2_degree_at(src, f, probe_radius)
        out.append(SingularPoint(f.tolist(), m2, d, probe_radius, 1, "feature"))
    return sorted(out, key=lambda p: tuple(p.location))


def singularities_json(points) -> str:
    return json.dumps([p.to_dict() for p in points], indent=2)


# --- dipoles ----------------------------------------------------------------------


@dataclass
class DipoleRecord:
    P: list
    N: list
    cylinder_radius: float
    verified: bool
    degree: int | None
    checks: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


def cylinder_contains(x, P, N, radius: float) -> np.ndarray:
    """Open cylinder of the given radius around segment PN, extended by
    ``radius`` past both ends."""
    x = np.asarray(x, dtype=float)
    P, N = np.asarray(P, dtype=float), np.asarray(N, dtype=float)
    d = N - P
    L = np.linalg.norm(d)
    e = d / L
    s = (x - P) @ e
    radial = np.linalg.norm((x - P) - s[..., None] * e, axis=-1)
    return (radial < radius) & (s > -radius) & (s < L + radius)


def verify_dipole(source, P, N, cylinder_radius: float, probe_radius: float | None = None,
                  location_tol: float | None = None) -> DipoleRecord:
    """Check the three dipole conditions for the pair (P, N).

    Works on grid fields (with a re-lift of the cylinder minus two small
    balls) and on constructions with a native lift.
    """
    P, N = np.asarray(P, dtype=float), np.asarray(N, dtype=float)
    checks: dict = {}
    if np.allclose(P, N):
        return DipoleRecord(P.tolist(), N.tolist(), cylinder_radius, False, None, {"distinct": False})
    is_grid = isinstance(source, CosseratField)
    h = source.domain.h if is_grid else None
    r = probe_radius if probe_radius is not None else (3.0 * h if is_grid else 0.25 * cylinder_radius)
    tol = location_tol if location_tol is not None else (2.0 * h if is_grid else 1e-9)

    # (i) cylinder inside the domain
    L = np.linalg.norm(N - P)
    e = (N - P) / L
    frame = np.linalg.svd(np.eye(3) - np.outer(e, e))[0][:, :2]
    ts = np.linspace(-cylinder_radius, L + cylinder_radius, 9)
    ang = np.linspace(0, 2 * np.pi, 16, endpoint=False)
    rim = np.array([P + t * e + 0.999 * cylinder_radius * (np.cos(a) * frame[:, 0] + np.sin(a) * frame[:, 1])
                    for t in ts for a in ang])
    if is_grid:
        checks["cylinder_inside"] = bool(all(source.domain.contains_point(x) for x in rim))
    else:
        checks["cylinder_inside"] = bool(np.all(source.contains(rim)))

    # (ii) singular set inside the cylinder
    sing = find_singularities(source, r)
    inside = [s for s in sing if cylinder_contains(np.array(s.location), P, N, cylinder_radius)]
    near_p = [s for s in inside if np.linalg.norm(np.array(s.location) - P) <= tol]
    near_n = [s for s in inside if np.linalg.norm(np.array(s.location) - N) <= tol]
    others = [s for s in inside if s not in near_p and s not in near_n]
    checks["singular_at_P"] = bool(near_p) or is_grid
    checks["singular_at_N"] = bool(near_n) or is_grid
    checks["others_removable"] = all(s.mod2_degree == 0 for s in others)
    checks["n_other_singularities"] = len(others)

    # (iii) degrees at P and N
    if is_grid:
        src = GridSource(source)
        mP, _ = mod2_degree_at(src, P, r)
        mN, _ = mod2_degree_at(src, N, r)
        excl = r / 3.0
        X = source.domain.positions
        node_set = (
            cylinder_contains(X, P, N, cylinder_radius)
            & (np.linalg.norm(X - P, axis=-1) > excl)
            & (np.linalg.norm(X - N, axis=-1) > excl)
            & source.domain.inside
        )
        lifted = lift_grid(source, node_set)
        lsrc = GridSource(lifted, use_lift=True, valid=node_set)
        dP = probe_degree(lsrc, P, r).degree
        dN = probe_degree(lsrc, N, r).degree
    else:
        dP = probe_degree(source, P, r).degree
        dN = probe_degree(source, N, r).degree
        mP, mN = dP % 2, dN % 2
    checks.update(mod2_P=int(mP), mod2_N=int(mN), lift_degree_P=int(dP), lift_degree_N=int(dN))
    ok = (
        checks["cylinder_inside"]
        and checks["singular_at_P"]
        and checks["singular_at_N"]
        and checks["others_removable"]
        and mP == 1
        and mN == 1
        and dP == -dN
        and dP != 0
    )
    return DipoleRecord(P.tolist(), N.tolist(), cylinder_radius, bool(ok), int(dP) if ok else None, checks)


# --- test oracles -----------------------------------------------------------------


def hedgehog_source(center=(0.0, 0.0, 0.0), sign: float = 1.0) -> AnalyticSource:
    """``n = sign (x - center) / |x - center|`` with ``phi = x``."""
    c = np.asarray(center, dtype=float)

    def n_fn(x):
        v = sign * (x - c)
        nv = np.linalg.norm(v, axis=-1, keepdims=True)
        return v / np.where(nv == 0, 1.0, nv)

    return AnalyticSource(lambda x: x, n_fn, has_lift=True, features=[c])
