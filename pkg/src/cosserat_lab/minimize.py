"""Restricted Cosserat minimization on a masked grid.

The rotation field is carried by its axis ``n`` through ``R = 2 n n^T - I``,
so every iterate stays on the half-turn set. The discrete energy is the
nodal quadrature used by :func:`cosserat_lab.grid.energy` (``p = 2``). It is
written for arbitrary ``n`` in R^3 so that its exact gradient can be checked
against finite differences coordinate by coordinate; on unit vectors it
agrees with the grid energy.
"""

from __future__ import annotations

import csv
import io
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np

from .errors import BoundaryMismatch, InvalidConstants, NumericalBlowup
from .grid import CosseratField, GridDomain
from .so3 import EYE, UNIT_CONSTANTS, MaterialConstants, p_operator, p_squared

WINDOW = 50
_CHUNK = 32768


@dataclass(frozen=True)
class SolverConfig:
    max_iters: int = 2000
    step_size: float = 0.1  # in units of h^2 for the L2 gradient
    step_rule: str = "backtracking"
    beta: float = 0.5
    armijo: float = 1e-4
    grad_tol: float = 1e-8
    energy_tol: float = 1e-9
    seed: int = 0
    threads: int = 1

    def __post_init__(self):
        if self.step_rule not in ("fixed", "backtracking"):
            raise ValueError("step_rule must be 'fixed' or 'backtracking'")
        if not (self.step_size > 0 and self.grad_tol > 0 and self.energy_tol > 0):
            raise ValueError("step size and tolerances must be positive")
        if not 0 < self.beta < 1 or not 0 < self.armijo < 1:
            raise ValueError("backtracking parameters must lie in (0, 1)")
        if self.max_iters < 0 or self.threads < 1:
            raise ValueError("max_iters must be >= 0 and threads >= 1")

    def to_dict(self) -> dict:
        return asdict(self)


def default_threads() -> int:
    try:
        return max(1, int(os.environ.get("COSSERAT_THREADS", "1")))
    except ValueError:
        return 1


class DiscreteEnergy:
    """Energy and exact gradient over the in-domain nodes of a grid.

    Arrays are indexed like ``field.phi[domain.inside]``.
    """

    def __init__(self, domain: GridDomain, c: MaterialConstants = UNIT_CONSTANTS, threads: int = 1):
        if c.p != 2:
            raise InvalidConstants("the minimizer supports p = 2 only", p=c.p)
        self.domain = domain
        self.c = c
        self.ops = domain.derivative_ops
        self.opsT = tuple(D.T.tocsr() for D in self.ops)
        self.vol = domain.h**3
        self.threads = threads
        self._pool = ThreadPoolExecutor(threads) if threads > 1 else None

    def close(self):
        if self._pool is not None:
            self._pool.shutdown()

    def _map(self, fn, n):
        chunks = [slice(s, s + _CHUNK) for s in range(0, n, _CHUNK)]
        if self._pool is None:
            return [fn(sl) for sl in chunks]
        return list(self._pool.map(fn, chunks))

    def _parts(self, phi, n, Dphi, g, sl, want_grad):
        c = self.c
        nk = n[sl]
        Dk = Dphi[sl]
        gk = g[sl]
        R = 2.0 * nk[:, :, None] * nk[:, None, :] - EYE
        A = R @ Dk - EYE
        dens_d = np.sum(p_operator(A, c) ** 2, axis=(-2, -1))
        gn = np.einsum("kij,kj->ki", gk, nk)
        t = gk - gn[..., None] * nk[:, None, :]
        dens_c = 8.0 * c.lam * np.sum(t**2, axis=(-2, -1))
        if not want_grad:
            return dens_d, dens_c
        G = 2.0 * p_squared(A, c)
        dDphi = R @ G
        M = G @ np.swapaxes(Dk, -1, -2)
        dn = 2.0 * np.einsum("kab,kb->ka", M + np.swapaxes(M, -1, -2), nk)
        tn = np.einsum("kij,kj->ki", t, nk)
        dg = 16.0 * c.lam * (t - tn[..., None] * nk[:, None, :])
        dn -= 16.0 * c.lam * (np.einsum("ki,kij->kj", tn, gk) + np.einsum("ki,kij->kj", gn, t))
        return dens_d, dens_c, dDphi, dn, dg

    def _derivs(self, phi, n):
        Dphi = np.stack([D @ phi for D in self.ops], axis=-1)
        g = np.stack([D @ n for D in self.ops], axis=1)
        return Dphi, g

    def densities(self, phi, n):
        Dphi, g = self._derivs(phi, n)
        out = self._map(lambda sl: self._parts(phi, n, Dphi, g, sl, False), len(n))
        return np.concatenate([o[0] for o in out]), np.concatenate([o[1] for o in out])

    def value(self, phi, n):
        """``(total, deformation, curvature)``; chunk sums are reduced in order."""
        dd, dc = self.densities(phi, n)
        d = float(np.sum(dd) * self.vol)
        cv = float(np.sum(dc) * self.vol)
        return d + cv, d, cv

    def value_and_grad(self, phi, n):
        Dphi, g = self._derivs(phi, n)
        out = self._map(lambda sl: self._parts(phi, n, Dphi, g, sl, True), len(n))
        dd = np.concatenate([o[0] for o in out])
        dc = np.concatenate([o[1] for o in out])
        dDphi = np.concatenate([o[2] for o in out])
        dn = np.concatenate([o[3] for o in out])
        dg = np.concatenate([o[4] for o in out])
        gphi = sum(self.opsT[i] @ dDphi[:, :, i] for i in range(3))
        gn = dn + sum(self.opsT[i] @ dg[:, i, :] for i in range(3))
        d = float(np.sum(dd) * self.vol)
        cv = float(np.sum(dc) * self.vol)
        return (d + cv, d, cv), gphi * self.vol, gn * self.vol

    def local_value(self, phi, n, rows):
        """Energy carried by the listed nodes only."""
        rows = np.asarray(rows)
        Dphi = np.stack([D[rows] @ phi for D in self.ops], axis=-1)
        g = np.stack([D[rows] @ n for D in self.ops], axis=1)
        dd, dc = self._parts(phi[rows], n[rows], Dphi, g, slice(None), False)
        return float((np.sum(dd) + np.sum(dc)) * self.vol)

    def support(self, k: int) -> np.ndarray:
        """Nodes whose densities depend on node ``k``."""
        rows = {int(k)}
        for DT in self.opsT:
            rows.update(DT.indices[DT.indptr[k]:DT.indptr[k + 1]].tolist())
        return np.array(sorted(rows))


# --- descent -------------------------------------------------------------------


@dataclass(eq=False)
class MinimizeResult:
    field: CosseratField
    trace: list
    initial_energy: float
    final_energy: float
    iterations: int
    reason: str

    def trace_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["iter", "energy", "deformation", "curvature", "grad_norm", "step"])
        for row in self.trace:
            w.writerow([row[0]] + [repr(float(v)) for v in row[1:]])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {
            "initial_energy": self.initial_energy,
            "final_energy": self.final_energy,
            "iterations": self.iterations,
            "stop_reason": self.reason,
        }


def _resolve_dirichlet(init: CosseratField, dirichlet):
    if dirichlet is None:
        return init.dirichlet
    if isinstance(dirichlet, CosseratField):
        mask, phi_d, n_d = dirichlet.dirichlet, dirichlet.phi, dirichlet.n
    else:
        mask, phi_d, n_d = dirichlet
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != init.dirichlet.shape or not np.array_equal(mask, init.dirichlet):
        raise BoundaryMismatch("dirichlet node set differs from the initial field's")
    phi_d = np.asarray(phi_d, dtype=float)[mask]
    n_d = np.asarray(n_d, dtype=float)[mask]
    phi0, n0 = init.phi[mask], init.n[mask]
    same_axis = np.all((n0 == n_d) | (n0 == -n_d), axis=-1)
    if not np.array_equal(phi0, phi_d) or not np.all(same_axis):
        bad = int(np.sum(np.any(phi0 != phi_d, axis=-1) | ~same_axis))
        raise BoundaryMismatch("initial field does not match the dirichlet values", nodes=bad)
    return mask


def minimize_restricted(init: CosseratField, dirichlet=None, cfg: SolverConfig | None = None,
                        c: MaterialConstants = UNIT_CONSTANTS, callback=None) -> MinimizeResult:
    """Alternating projected gradient descent with Dirichlet nodes held fixed.

    ``dirichlet`` is ``None`` (use ``init.dirichlet`` and its values), a field,
    or a ``(mask, phi, n)`` triple. Each sweep takes a gradient step in
    ``phi`` and then a tangential step in ``n`` followed by renormalization,
    each with its own backtracking line search. ``callback(it, field)``, when
    given, is called every 100 iterations.
    """
    cfg = cfg or SolverConfig()
    mask = _resolve_dirichlet(init, dirichlet)
    dom = init.domain
    inside = dom.inside
    free = ~mask[inside]
    phi = init.phi[inside].copy()
    n = init.n[inside].copy()
    eng = DiscreteEnergy(dom, c, cfg.threads)
    h2 = dom.h**2
    vol = eng.vol
    tau = {"phi": cfg.step_size * h2, "n": cfg.step_size * h2}

    def check(E, it):
        if not np.isfinite(E):
            raise NumericalBlowup("energy became non-finite", iteration=it)

    (E, Ed, Ec), gphi, gn = eng.value_and_grad(phi, n)
    check(E, 0)
    E0 = E
    history = [E]
    trace = []
    reason = "max_iters"
    it = 0
    try:
        for it in range(1, cfg.max_iters + 1):
            # phi block
            gp = np.where(free[:, None], gphi, 0.0) / vol
            gnt = gn - np.sum(gn * n, axis=1, keepdims=True) * n
            gnt = np.where(free[:, None], gnt, 0.0) / vol
            gnorm = float(np.sqrt((np.sum(gp**2) + np.sum(gnt**2)) * vol))
            if gnorm < cfg.grad_tol:
                reason = "grad_tol"
                it -= 1
                break
            E, phi, step_p = _line_search(
                eng, E, lambda s: (phi - s * gp, n), np.sum(gp**2) * vol, tau, "phi", cfg, it
            )
            (_, _, _), gphi, gn = eng.value_and_grad(phi, n)
            gnt = gn - np.sum(gn * n, axis=1, keepdims=True) * n
            gnt = np.where(free[:, None], gnt, 0.0) / vol

            def n_trial(s, gnt=gnt):
                m = n - s * gnt
                m /= np.linalg.norm(m, axis=1, keepdims=True)
                m[~free] = n[~free]
                return phi, m

            E, n, step_n = _line_search(eng, E, n_trial, np.sum(gnt**2) * vol, tau, "n", cfg, it)
            (E, Ed, Ec), gphi, gn = eng.value_and_grad(phi, n)
            check(E, it)
            if E > history[-1] * (1 + 1e-12) + 1e-300:
                raise NumericalBlowup("energy increased during descent", iteration=it,
                                      before=history[-1], after=E)
            history.append(E)
            trace.append((it, E, Ed, Ec, gnorm, max(step_p, step_n)))
            if callback is not None and it % 100 == 0:
                callback(it, _assemble(init, phi, n))
            if len(history) > WINDOW and history[-WINDOW - 1] - E < cfg.energy_tol:
                reason = "energy_tol"
                break
    finally:
        eng.close()
    if not trace and reason != "grad_tol":
        reason = "max_iters"
    out = _assemble(init, phi, n)
    return MinimizeResult(out, trace, E0, E, len(trace), reason)


def _line_search(eng, E, trial, slope, tau, key, cfg, it):
    """One step along ``trial(s)``; returns (energy, new block, step used)."""
    s = tau[key]
    which = 0 if key == "phi" else 1
    if slope == 0:
        return E, trial(0.0)[which], 0.0
    if cfg.step_rule == "fixed":
        cand = trial(s)
        E_new = eng.value(*cand)[0]
        if not np.isfinite(E_new):
            raise NumericalBlowup("energy became non-finite", iteration=it)
        return E_new, cand[which], s
    for _ in range(60):
        cand = trial(s)
        E_new = eng.value(*cand)[0]
        if np.isfinite(E_new) and E_new <= E - cfg.armijo * s * slope:
            tau[key] = s / cfg.beta
            return E_new, cand[which], s
        s *= cfg.beta
    tau[key] = s
    return E, trial(0.0)[which], 0.0


def _assemble(init: CosseratField, phi, n) -> CosseratField:
    out = init.copy()
    inside = init.domain.inside
    mask = init.dirichlet[inside]
    new_phi = out.phi[inside]
    new_n = out.n[inside]
    new_phi[~mask] = phi[~mask]
    new_n[~mask] = n[~mask]
    out.phi[inside] = new_phi
    out.n[inside] = new_n
    return out


# --- helpers -------------------------------------------------------------------


def perturb_field(field: CosseratField, amplitude: float = 0.1, seed: int = 0) -> CosseratField:
    """Random perturbation of the non-Dirichlet nodes, reproducible from ``seed``."""
    rng = np.random.default_rng(seed)
    out = field.copy()
    sel = field.domain.inside & ~field.dirichlet
    k = int(sel.sum())
    out.phi[sel] += amplitude * rng.standard_normal((k, 3))
    m = out.n[sel] + amplitude * rng.standard_normal((k, 3))
    out.n[sel] = m / np.linalg.norm(m, axis=1, keepdims=True)
    return out


@dataclass(frozen=True)
class GradientCheck:
    max_rel_error: float
    errors: tuple

    @property
    def passed(self) -> bool:
        return self.max_rel_error < 1e-5


def gradient_check(field: CosseratField, c: MaterialConstants = UNIT_CONSTANTS, n_probes: int = 100,
                   seed: int = 0, eps: float = 1e-4) -> GradientCheck:
    """Compare the analytic gradient with finite differences of the energy.

    At each of ``n_probes`` random nodes all six coordinates (``phi`` and
    ``n``) are perturbed in turn and differentiated with the fourth-order
    central five-point stencil. The error at a node is the norm of the
    difference of the two 6-vectors relative to the larger of their norms.
    Quotients use the energy of the affected nodes only, which is the same
    function up to a constant and avoids cancellation.
    """
    rng = np.random.default_rng(seed)
    dom = field.domain
    eng = DiscreteEnergy(dom, c)
    phi = field.phi[dom.inside].copy()
    n = field.n[dom.inside].copy()
    _, gphi, gn = eng.value_and_grad(phi, n)
    errs = []
    for k in rng.choice(len(n), size=min(n_probes, len(n)), replace=False):
        rows = eng.support(int(k))
        fd = np.empty(6)
        for j, (arr, a) in enumerate([(phi, 0), (phi, 1), (phi, 2), (n, 0), (n, 1), (n, 2)]):
            old = arr[k, a]
            vals = []
            for t in (-2, -1, 1, 2):
                arr[k, a] = old + t * eps
                vals.append(eng.local_value(phi, n, rows))
            arr[k, a] = old
            fd[j] = (vals[0] - 8 * vals[1] + 8 * vals[2] - vals[3]) / (12 * eps)
        an = np.concatenate([gphi[k], gn[k]])
        scale = max(np.linalg.norm(fd), np.linalg.norm(an), 1e-300)
        errs.append(float(np.linalg.norm(fd - an) / scale))
    eng.close()
    return GradientCheck(float(max(errs)), tuple(errs))
