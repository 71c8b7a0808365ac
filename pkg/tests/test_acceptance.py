"""Acceptance criteria. Each test prints one PASS/FAIL line with its measurements.

Run with ``pytest tests/test_acceptance.py -v``; the lines are repeated in a
summary section at the end of the session.
"""

import json
import time


import numpy as np
import pytest

from cosserat_lab import cli
from cosserat_lab.degree import icosphere, sphere_degree, verify_dipole
from cosserat_lab.dipole import FlippedCube, bubble_density, cube_flip, insert_dipole
from cosserat_lab.grid import energy, field_from_functions, make_domain, node_densities, rigid_base_field
from cosserat_lab.minimize import gradient_check
from cosserat_lab.so3 import cover_differential
from cosserat_lab.sources import directional_derivatives, rigid_source
from cosserat_lab.surface import bubble_disc_patch, surface_energy

from conftest import ACCEPTANCE_LINES, random_tangent, random_unit
from oracles import DEGREE_CASES, preimage_count, same_orientation_pair

MANIFESTS = {}


def report(capsys, k, ok, detail):
    line = f"CRITERION {k}: {'PASS' if ok else 'FAIL'} | {detail}"
    ACCEPTANCE_LINES.append(line)
    with capsys.disabled():
        print("\n" + line)
    assert ok, line


def dumps(obj):
    return cli.dumps(obj)


# -- 1 -------------------------------------------------------------------------------


def test_criterion_01_homothety(capsys):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    q = random_unit(rng, 10_000)
    v = random_tangent(rng, q)
    D = cover_differential(q, v)
    v2 = np.sum(v**2, axis=-1)
    rel = np.abs(np.sum(D**2, axis=(-2, -1)) - 8 * v2) / v2
    dt = time.perf_counter() - t0
    report(capsys, 1, rel.max() < 1e-10 and dt < 1.0, f"max relative error {rel.max():.2e} (< 1e-10), {dt:.2f} s (< 1 s)")


# -- 2 -------------------------------------------------------------------------------


def test_criterion_02_zero_energy_base(capsys):
    dom = make_domain("ball", 1 / 32, radius=1.0)
    t0 = time.perf_counter()
    f = rigid_base_field(dom)
    dd, dc = node_densities(f)
    total = energy(f).total
    dt = time.perf_counter() - t0
    exact = bool(np.all(dd == 0) and np.all(dc == 0) and total == 0.0)
    report(capsys, 2, exact and dt < 1.0,
           f"{dom.n_inside} nodes, all densities zero: {exact}, total {total!r}, {dt:.2f} s (< 1 s)")


# -- 3 -------------------------------------------------------------------------------


def test_criterion_03_bubble_law(capsys):
    t0 = time.perf_counter()
    rows, ok = [], True
    for alpha in (0.05, 0.1, 0.2):
        src = FlippedCube(rigid_source(), 1.0, alpha)
        patch = bubble_disc_patch(np.zeros(3), np.array([1.0, 0, 0]), np.array([0, 1.0, 0]), alpha)
        inner = dict((n, c) for n, _, c in surface_energy(src, patch).per_region)["inner"] / 8
        target = 8 * np.pi / (1 + 4 * alpha**2)
        err_e = abs(inner - target) / target
        r = np.linspace(0, 0.49 * alpha, 60)
        pts = np.stack([r, np.zeros_like(r), np.zeros_like(r)], axis=1)
        tang = np.tile(np.array([[1.0, 0, 0], [0, 1.0, 0]]), (len(r), 1, 1))
        _, dn, _ = directional_derivatives(src, pts, tang, np.full(len(r), 1e-3 * alpha**2))
        dens = np.sum(dn**2, axis=(-2, -1))
        err_p = np.max(np.abs(dens - bubble_density(r, alpha)) / bubble_density(r, alpha))
        ok &= err_e < 0.01 and err_p < 0.02
        rows.append(f"alpha={alpha}: energy err {err_e:.1e}, density err {err_p:.1e}")
    dt = time.perf_counter() - t0
    report(capsys, 3, ok and dt < 10, "; ".join(rows) + f"; {dt:.1f} s (< 10 s)")


# -- 4 -------------------------------------------------------------------------------


def run_cube_flip():
    return cube_flip(rigid_source(), nu=1.0, eps_budget=1.0)


def test_criterion_04_cube_flip(capsys):
    t0 = time.perf_counter()
    res = run_cube_flip()
    dt = time.perf_counter() - t0
    MANIFESTS[4] = dumps(res.to_dict())
    measured = res.measured.total
    ok = measured < 64 * np.pi + 1 and res.degree_before == 0 and abs(res.degree_after) == 1 and dt < 30
    report(capsys, 4, ok,
           f"alpha0 {res.alpha0:.5f}, integral {measured:.8f}, {64 * np.pi + 1 - measured:.2e} below 64pi+1, "
           f"degree {res.degree_before} -> {res.degree_after} (mod 2: {res.degree_after % 2}), {dt:.1f} s (< 30 s)")


# -- 5 -------------------------------------------------------------------------------


def run_dipoles():
    h, d = 1 / 64, 0.5
    out = {}
    for m in (4, 8, 16):
        a = d / (2 * (m - 1))
        margin = 2 * a + 2 * h
        dom = make_domain("box", h, lo=(-a - margin,) * 2 + (-a - margin,), hi=(a + margin,) * 2 + (d + a + margin,))
        out[m] = insert_dipole(rigid_base_field(dom), [0, 0, 0], [0, 0, d], m=m, alpha=a / 8)
    return out


def test_criterion_05_dipole_energy(capsys):
    t0 = time.perf_counter()
    ins = run_dipoles()
    dt = time.perf_counter() - t0
    MANIFESTS[5] = dumps({m: i.manifest() for m, i in ins.items()})
    bound = 64 * np.pi * 0.5
    E = {m: ins[m].energy.total.total for m in ins}
    monotone = E[4] > E[8] > E[16] >= bound * 0.999
    under = all(e <= bound * 1.15 for e in E.values())
    ledgers_ok = True
    for m, i in ins.items():
        led = i.degree_ledger
        ledgers_ok &= [p.mod2_degree for p in led] == [1] + [0] * (m - 2) + [1]
        ledgers_ok &= sum(p.lift_degree for p in led) == 0
        dist = np.linalg.norm(np.array([p.location for p in led]) - i.decomposition.centers, axis=1)
        ledgers_ok &= len(led) == m and bool(np.all(dist <= 1 / 64))
    ok = monotone and under and ledgers_ok and dt < 300
    report(capsys, 5, ok,
           "energies " + ", ".join(f"m={m}: {e:.3f}" for m, e in E.items())
           + f" (<= {bound * 1.15:.2f}, limit {bound:.3f}), monotone {monotone}, "
           f"ledgers (1,0,...,0,1) within h: {ledgers_ok}, {dt:.1f} s (< 300 s)")


# -- 6 -------------------------------------------------------------------------------


def test_criterion_06_degree_oracle(capsys):
    t0 = time.perf_counter()
    verts, faces = icosphere(6)
    rng = np.random.default_rng(6)
    agree, total, seen = 0, 0, set()
    for _, f, deg in DEGREE_CASES:
        d = sphere_degree(f(verts), faces)
        seen.add(d)
        for value in random_unit(rng, 3):
            total += 1
            agree += d == preimage_count(f, value) == deg
    dt = time.perf_counter() - t0
    ok = agree == total and seen >= {-2, -1, 0, 1, 2, 3} and dt < 10
    report(capsys, 6, ok, f"{agree}/{total} agreements over degrees {sorted(seen)}, {dt:.1f} s (< 10 s)")


# -- 7 -------------------------------------------------------------------------------


def test_criterion_07_verify_dipole(capsys):
    t0 = time.perf_counter()
    ins = insert_dipole(rigid_source(), [0, 0, 0], [0, 0, 0.5], m=4)
    good = verify_dipole(ins.construction, [0, 0, 0], [0, 0, 0.5], 1.5 * ins.decomposition.a)
    bad = verify_dipole(same_orientation_pair(), (0, 0, -0.3), (0, 0, 0.3), 0.2)
    dt = time.perf_counter() - t0
    ok = good.verified and not bad.verified and dt < 30
    report(capsys, 7, ok,
           f"insert_dipole verified={good.verified} (d={good.degree}); equal-orientation pair "
           f"verified={bad.verified} (degrees {bad.checks['lift_degree_P']}, {bad.checks['lift_degree_N']}), "
           f"{dt:.1f} s (< 30 s)")


# -- 8 -------------------------------------------------------------------------------


def run_pipeline(tmp_path, N, eps, tag):
    h = 1 / 48
    b = tmp_path / f"boundary_{tag}"
    cli.run("build-boundary", {"N_target": N, "epsilon": eps, "h": h}, b)
    out = tmp_path / f"minimize_{tag}"
    cfg = {"field": str(b / "field.csrf"), "N_target": N, "epsilon": eps}
    cli.run("minimize", cfg, out, threads=1)
    manifest = json.loads((out / "manifest.json").read_text())
    slices = json.loads((out / "slice_report.json").read_text())
    return manifest, slices, (b / "manifest.json").read_text(), (out / "manifest.json").read_text()


PIPELINES = {1: 1e-3, 2: 3e-4}


def test_criterion_08_thm1_pipeline(capsys, tmp_path):
    t0 = time.perf_counter()
    rows, ok, texts = [], True, {}
    for N, eps in PIPELINES.items():
        man, sl, btext, mtext = run_pipeline(tmp_path, N, eps, f"N{N}")
        texts[N] = (btext, mtext)
        E = man["result"]["final_energy"]
        discs = sl["disc_below_bound"]
        crit = {
            "energy": E < np.pi / N,
            "discs": len(discs) == N + 1 and all(discs),
            "slice_mod2": sl["disc_degrees"] == [1] * N,
            "singularities": all(k >= 1 for k in sl["singularities_per_slice"]) and len(sl["singularities_per_slice"]) == N,
        }
        ok &= all(crit.values())
        rows.append(
            f"N={N} eps={eps}: energy {E:.3g} (< {np.pi / N:.3f}) {crit['energy']}, "
            f"discs {['%.3g' % e for e in sl['disc_energies']]} {crit['discs']}, "
            f"slice mod2 {sl['disc_degrees']} {crit['slice_mod2']}, "
            f"singularities/slice {sl['singularities_per_slice']} {crit['singularities']}, "
            f"{man['result']['iterations']} iterations"
        )
    MANIFESTS[8] = texts
    dt = time.perf_counter() - t0
    report(capsys, 8, ok and dt < 1800, "; ".join(rows) + f"; {dt:.0f} s (< 1800 s)")


# -- 9 -------------------------------------------------------------------------------


def test_criterion_09_gradient_check(capsys):
    dom = make_domain("ball", 1 / 12, radius=1.0)
    f = field_from_functions(
        dom,
        lambda x: x + 0.2 * np.sin(2 * x[:, ::-1]),
        lambda x: np.stack([np.sin(2 * x[:, 1]) + 0.3, np.cos(3 * x[:, 0]) * x[:, 2], 1 + 0.5 * x[:, 0] * x[:, 1]], axis=-1),
    )
    t0 = time.perf_counter()
    res = gradient_check(f, n_probes=100, seed=9)
    dt = time.perf_counter() - t0
    report(capsys, 9, res.max_rel_error < 1e-5 and len(res.errors) == 100 and dt < 30,
           f"max relative error {res.max_rel_error:.2e} over {len(res.errors)} nodes (< 1e-5), {dt:.1f} s (< 30 s)")


# -- 10 ------------------------------------------------------------------------------


def test_criterion_10_determinism(capsys, tmp_path):
    missing = [k for k in (4, 5, 8) if k not in MANIFESTS]
    if missing:
        pytest.skip(f"criteria {missing} did not produce manifests in this session")
    same = {
        4: dumps(run_cube_flip().to_dict()) == MANIFESTS[4],
        5: dumps({m: i.manifest() for m, i in run_dipoles().items()}) == MANIFESTS[5],
    }
    reruns = {}
    for N, eps in PIPELINES.items():
        *_, btext, mtext = run_pipeline(tmp_path, N, eps, f"N{N}")
        reruns[N] = (btext, mtext)
    # the minimize manifest echoes the input path, which lives in a per-test directory
    same[8] = all(MANIFESTS[8][N][0] == reruns[N][0] and _strip_path(MANIFESTS[8][N][1]) == _strip_path(reruns[N][1])
                  for N in PIPELINES)
    report(capsys, 10, all(same.values()), "byte-identical manifests: " + ", ".join(f"criterion {k}: {v}" for k, v in same.items()))


def _strip_path(text):
    data = json.loads(text)
    data["config"]["field"] = "<field>"
    return json.dumps(data, sort_keys=True)
