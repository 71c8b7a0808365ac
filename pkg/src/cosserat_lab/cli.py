"""Command line front end.

Every subcommand reads an optional JSON config, merges it over its
defaults, and writes its outputs plus a ``manifest.json`` that embeds the
fully resolved config. Fields are stored as CSRF1 binaries.

Exit codes: 0 on success, 2 for invalid input or a violated guard, 1 for
internal errors. Failures print a JSON error object on stdout.
"""

from __future__ import annotations

import argparse
import copy
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import degree, diagnostics, dipole, grid, minimize
from .errors import CosseratError, InvalidConfig
from .so3 import MaterialConstants
from .sources import rigid_source

log = logging.getLogger("cosserat_lab")

CONSTANTS = {"mu1": 1.0, "muc": 1.0, "mu2": 1.0, "lam": 1.0, "p": 2.0}

DEFAULTS = {
    "build-boundary": {
        "N_target": 1,
        "epsilon": 1e-3,
        "m": 4,
        "alpha_fraction": 0.125,
        "h": 1 / 32,
        "outer_radius": 2.0,
        "enforce_budget": True,
        "constants": CONSTANTS,
    },
    "insert-dipole": {
        "P": [0.0, 0.0, 0.0],
        "N": [0.0, 0.0, 0.5],
        "m": 4,
        "alpha": None,
        "h": None,
        "constants": CONSTANTS,
    },
    "energy": {"field": None, "constants": CONSTANTS},
    "minimize": {
        "field": None,
        "N_target": None,
        "epsilon": None,
        "m": 4,
        "audit_every": 100,
        "solver": {k: v for k, v in minimize.SolverConfig().to_dict().items() if k != "threads"},
        "constants": CONSTANTS,
    },
    "analyze": {"field": None, "probe_radius": None, "threshold_deg": 90.0, "dipoles": []},
    "export": {"field": None, "format": "vtk"},
}


# --- config handling ------------------------------------------------------------


def _merge(base: dict, user: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, value in user.items():
        if key not in base:
            raise InvalidConfig(f"unknown config key {path}{key!r}")
        if isinstance(base[key], dict) and key != "constants":
            if not isinstance(value, dict):
                raise InvalidConfig(f"config key {path}{key!r} must be an object")
            out[key] = _merge(base[key], value, f"{path}{key}.")
        elif key == "constants":
            if not isinstance(value, dict) or set(value) - set(CONSTANTS):
                raise InvalidConfig("constants must be an object with keys " + ", ".join(CONSTANTS))
            out[key] = {**base[key], **value}
        else:
            out[key] = value
    return out


def resolve_config(command: str, user: dict | None = None) -> dict:
    if command not in DEFAULTS:
        raise InvalidConfig(f"unknown command {command!r}")
    return _merge(DEFAULTS[command], user or {})


def load_config(path) -> dict:
    if path is None:
        return {}
    try:
        with open(path) as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise InvalidConfig(f"cannot read config: {exc}") from exc
    if not isinstance(data, dict):
        raise InvalidConfig("config must be a JSON object")
    return data


def _constants(cfg) -> MaterialConstants:
    return MaterialConstants(**{k: float(v) for k, v in cfg["constants"].items()})


def _require(cfg, *keys):
    for k in keys:
        if cfg.get(k) is None:
            raise InvalidConfig(f"config key {k!r} is required")


def _json_default(obj):
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not serializable: {type(obj).__name__}")


def dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n"


def _write_json(path: Path, obj) -> Path:
    path.write_text(dumps(obj))
    return path


def _read(path):
    if not Path(path).exists():
        raise InvalidConfig(f"field file not found: {path}")
    return grid.read_field(path)


# --- commands ---------------------------------------------------------------------


def cmd_build_boundary(cfg: dict, out: Path) -> dict:
    c = _constants(cfg)
    bd = dipole.thm1_boundary_data(
        int(cfg["N_target"]), float(cfg["epsilon"]), int(cfg["m"]), float(cfg["alpha_fraction"]), c,
        enforce_budget=bool(cfg["enforce_budget"]), outer_radius=float(cfg["outer_radius"]),
    )
    log.info("construction energy on the unit ball: %.6g", bd.energy_ball.total.total)
    records = [degree.verify_dipole(bd.construction, P, N, bd.spec.epsilon).to_dict() for P, N in bd.spec.pairs()]
    field = bd.g0(float(cfg["h"]))
    grid.write_field(out / "field.csrf", field)
    manifest = {"config": cfg, **bd.manifest(), "dipole_records": records,
                "grid_energy": grid.energy(field, c).to_dict()}
    _write_json(out / "manifest.json", manifest)
    return {"field": out / "field.csrf", "manifest": out / "manifest.json"}


def cmd_insert_dipole(cfg: dict, out: Path) -> dict:
    c = _constants(cfg)
    ins = dipole.insert_dipole(rigid_source(), cfg["P"], cfg["N"], int(cfg["m"]), cfg["alpha"], c=c)
    files = {}
    manifest = {"config": cfg, **ins.manifest(),
                "region_table": ins.energy.to_dict()}
    if cfg["h"] is not None:
        h = float(cfg["h"])
        dec = ins.decomposition
        corners = dec.corners()
        margin = max(2 * h, dec.a)
        dom = grid.make_domain("box", h, lo=corners.min(axis=0) - margin, hi=corners.max(axis=0) + margin)
        field = ins.construction.sample(grid.rigid_base_field(dom))
        grid.write_field(out / "field.csrf", field)
        files["field"] = out / "field.csrf"
        manifest["grid_energy"] = grid.energy(field, c).to_dict()
    _write_json(out / "manifest.json", manifest)
    files["manifest"] = out / "manifest.json"
    return files


def cmd_energy(cfg: dict, out: Path) -> dict:
    _require(cfg, "field")
    field = _read(cfg["field"])
    rep = grid.energy(field, _constants(cfg))
    _write_json(out / "energy.json", {"config": cfg, **rep.to_dict()})
    return {"report": out / "energy.json"}


def _spec(cfg):
    if cfg.get("N_target") is None:
        return None
    _require(cfg, "epsilon")
    return dipole.BoundaryDataSpec(int(cfg["N_target"]), float(cfg["epsilon"]), int(cfg["m"]))


def cmd_minimize(cfg: dict, out: Path, threads: int = 1) -> dict:
    _require(cfg, "field")
    c = _constants(cfg)
    init = _read(cfg["field"])
    try:
        solver = minimize.SolverConfig(**{**cfg["solver"], "threads": threads})
    except (TypeError, ValueError) as exc:
        raise InvalidConfig(f"invalid solver config: {exc}") from exc
    spec = _spec(cfg)
    audit_levels = None
    degree_audit = []
    if spec is not None and cfg["audit_every"]:
        try:
            audit_levels = diagnostics.slice_diagnostics(init, spec).mu_levels
        except CosseratError as exc:
            degree_audit.append({"iteration": 0, "error": exc.to_dict()})

    def audit(it, field):
        if audit_levels is None or it % int(cfg["audit_every"]):
            return
        src = diagnostics.GridSource(field)
        row = {"iteration": it, "slab_mod2": []}
        for z0, z1 in zip(audit_levels, audit_levels[1:]):
            try:
                row["slab_mod2"].append(diagnostics.slab_degree(src, z0, z1, 1.0 - 1.5 * field.domain.h)[0])
            except CosseratError as exc:
                row["slab_mod2"].append(type(exc).__name__)
        degree_audit.append(row)

    res = minimize.minimize_restricted(init, None, solver, c, callback=audit)
    log.info("minimization: %s", res.to_dict())
    grid.write_field(out / "field.csrf", res.field)
    (out / "trace.csv").write_text(res.trace_csv())
    files = {"field": out / "field.csrf", "trace": out / "trace.csv"}
    manifest = {"config": cfg, "result": res.to_dict(), "energy": grid.energy(res.field, c).to_dict(),
                "degree_audit": degree_audit}
    if spec is not None:
        try:
            report = diagnostics.slice_diagnostics(res.field, spec)
            _write_json(out / "slice_report.json", report.to_dict())
            files["slice_report"] = out / "slice_report.json"
            manifest["audit"] = diagnostics.minimizer_energy_audit(res.field, spec, c, report).to_dict()
        except CosseratError as exc:
            manifest["audit"] = {"passed": False, "error": exc.to_dict()}
    else:
        manifest["singularities"] = [p.to_dict() for p in degree.find_singularities(res.field)]
    _write_json(out / "manifest.json", manifest)
    files["manifest"] = out / "manifest.json"
    return files


def cmd_analyze(cfg: dict, out: Path) -> dict:
    _require(cfg, "field")
    field = _read(cfg["field"])
    points = degree.find_singularities(field, cfg["probe_radius"], float(cfg["threshold_deg"]))
    records = []
    for d in cfg["dipoles"]:
        if not isinstance(d, dict) or not {"P", "N", "cylinder_radius"} <= set(d):
            raise InvalidConfig("each dipole needs P, N and cylinder_radius")
        records.append(degree.verify_dipole(field, d["P"], d["N"], float(d["cylinder_radius"])).to_dict())
    report = {"config": cfg, "singularities": [p.to_dict() for p in points], "dipole_records": records}
    _write_json(out / "analysis.json", report)
    return {"report": out / "analysis.json"}


def cmd_export(cfg: dict, out: Path) -> dict:
    _require(cfg, "field")
    if cfg["format"] != "vtk":
        raise InvalidConfig("only the 'vtk' export format is supported")
    field = _read(cfg["field"])
    grid.export_vtk(out / "field.vtk", field)
    _write_json(out / "manifest.json", {"config": cfg})
    return {"vtk": out / "field.vtk", "manifest": out / "manifest.json"}


COMMANDS = {
    "build-boundary": cmd_build_boundary,
    "insert-dipole": cmd_insert_dipole,
    "energy": cmd_energy,
    "minimize": cmd_minimize,
    "analyze": cmd_analyze,
    "export": cmd_export,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cosserat-lab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--threads", type=int, default=None, help="worker threads (default: $COSSERAT_THREADS or 1)")
        p.add_argument("--verbose", action="store_true")
    return parser


def run(command: str, user_cfg: dict | None, out, threads: int | None = None) -> dict:
    """Resolve the config and run one command; returns the written files."""
    cfg = resolve_config(command, user_cfg)
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    if command == "minimize":
        threads = threads if threads is not None else minimize.default_threads()
        if threads < 1:
            raise InvalidConfig("threads must be >= 1")
        return cmd_minimize(cfg, out, threads)
    return COMMANDS[command](cfg, out)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        files = run(args.command, load_config(args.config), args.out, args.threads)
    except CosseratError as exc:
        sys.stdout.write(dumps(exc.to_dict()))
        return exc.exit_code
    except Exception as exc:  # noqa: BLE001 - reported as an internal error
        log.debug("internal error", exc_info=True)
        sys.stdout.write(dumps({"error": "InternalError", "message": f"{type(exc).__name__}: {exc}"}))
        return 1
    sys.stdout.write(dumps({k: str(v) for k, v in files.items()}))
    return 0


if __name__ == "__main__":
    sys.exit(main())
