"""Command-line orchestration: configs, subcommands, reproducible outputs.

Configs are YAML (nested key/value); command-line overrides are dotted-path
assignments (--set evolve.dt=0.1).  Every output file carries the sha256 of
the fully merged config, so identical config + seed reproduce identical
bytes.
"""
from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import math
import sys
import warnings
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np
import yaml

from . import clifford
from .clifford import NullFormCoeffs, null_form_commutator
from .grid import DataSpec, Grid, charge, dump_field, make_field
from .propagate import EvolveConfig, evolve
from .radiation import NullGrid, dump_radiation, extract, isometry_defect
from .diagnostics import (DiagnosticsConfig, charge_balance_defect, collect_log,
                          cone_flux_defect, dump_ray_samples, ghost_weight_check,
                          ks_ratio, peeling_fit)
from .scattering import (LinearMapHandle, ScatterConfig, forward_nonlinear,
                         invert_linear, invert_nonlinear)
from .symmetry import spacetime_family

DEFAULT_CONFIG = {
    "grid": {"n": 64, "length": 22.0},
    "data": {
        "kind": "gaussian",
        "center": [0.0, 0.0, 0.0],
        "width": 1.375,
        "polarization": ["1", "0.4+0.2j", "0.1", "0.3j"],
        "amplitude": 0.5,
        "mode": [0, 0, 1],
    },
    "evolve": {"dt": 0.125, "t_final": 8.0, "snapshot_every": 2,
               "direction": "forward", "nonlinearity": "none"},
    "coeffs": {"e1": ["0.5", "0.15", "0.1j", "0"],
               "e2": ["0", "0.2", "0", "0.1+0.05j"]},
    "null_grid": {"s_min": -4.0, "s_max": 4.0, "ns": 17,
                  "n_theta": 10, "n_phi": 20},
    "radiation": {"radii": [4.0, 8.0], "direction": "future"},
    "diagnostics": {"mu": 0.25, "max_order": 2, "cone_t0": 0.0, "cone_t1": 4.0,
                    "rays": [[1.0, [0.3, -0.5, 0.81]], [2.0, [0.0, 0.6, 0.8]]]},
    "scatter": {"smallness_cap": 10.0, "picard_max_iter": 8, "picard_tol": 0.02,
                "cg_tol": 1e-3, "cg_max_iter": 30, "support_radius": 4.5,
                "run_dt": 0.125, "duhamel_stride": 4},
    "convergence": {"dt_ladder": [0.2, 0.1, 0.05], "m_ladder": [2.0, 4.0, 8.0]},
}


class ConfigError(Exception):
    pass


def _parse_complex_vec(v) -> np.ndarray:
    out = []
    for item in v:
        if isinstance(item, str):
            out.append(complex(item.replace(" ", "")))
        elif isinstance(item, (list, tuple)):
            out.append(complex(item[0], item[1]))
        else:
            out.append(complex(item))
    return np.array(out, dtype=complex)


def load_config(path: str | None, overrides) -> dict:
    cfg = copy.deepcopy(DEFAULT_CONFIG)
    if path:
        with open(path) as fh:
            user = yaml.safe_load(fh) or {}
        _deep_update(cfg, user)
    for item in overrides or []:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value")
        key, val = item.split("=", 1)
        _set_dotted(cfg, key.strip(), yaml.safe_load(val))
    _check_consistency(cfg)
    return cfg


def _deep_update(base: dict, extra: dict):
    for k, v in extra.items():
        if isinstance(v, dict) and isinstance(base.get(k), dict):
            _deep_update(base[k], v)
        else:
            base[k] = v


def _set_dotted(cfg: dict, key: str, value):
    parts = key.split(".")
    node = cfg
    for p in parts[:-1]:
        if p not in node or not isinstance(node[p], dict):
            node[p] = {}
        node = node[p]
    node[parts[-1]] = value


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(
        yaml.safe_dump(cfg, sort_keys=True).encode()).hexdigest()[:16]


def _check_consistency(cfg: dict):
    g = cfg["grid"]
    d = cfg["data"]
    ev = cfg["evolve"]
    if g["n"] < 16 or g["n"] % 2:
        raise ConfigError("grid.n must be an even integer >= 16")
    if d["kind"] in ("gaussian", "bump"):
        h = g["length"] / g["n"]
        if d["width"] < 4 * h:
            raise ConfigError(f"data.width must be >= 4 h = {4 * h}")
        # containment window: the wave must not wrap into the diagnostics
        reach = abs(ev["t_final"]) + 4 * d["width"] + float(np.linalg.norm(d["center"]))
        if 2 * reach > 2 * 0.5 * g["length"] + 4 * d["width"]:
            warnings.warn("containment window is tight: L < 2 (T + R0) + 4 width")


def build_objects(cfg: dict):
    grid = Grid(cfg["grid"]["n"], cfg["grid"]["length"])
    data = cfg["data"]
    spec = DataSpec(kind=data["kind"], center=tuple(data["center"]),
                    width=float(data["width"]),
                    polarization=tuple(_parse_complex_vec(data["polarization"])),
                    amplitude=float(data["amplitude"]),
                    mode=tuple(data["mode"]))
    coeffs = NullFormCoeffs(_parse_complex_vec(cfg["coeffs"]["e1"]),
                            _parse_complex_vec(cfg["coeffs"]["e2"]))
    ngc = cfg["null_grid"]
    ngrid = NullGrid(ngc["s_min"], ngc["s_max"], ngc["ns"],
                     ngc["n_theta"], ngc["n_phi"])
    return grid, spec, coeffs, ngrid


def _evolve_config(cfg: dict, coeffs) -> EvolveConfig:
    ev = cfg["evolve"]
    nl = coeffs if ev.get("nonlinearity") == "coeffs" else None
    return EvolveConfig(dt=float(ev["dt"]), t_final=float(ev["t_final"]),
                        snapshot_every=int(ev["snapshot_every"]),
                        direction=ev["direction"], nonlinearity=nl)


def _write_rows(path: Path, header, rows, chash: str):
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow([f"# config_hash = {chash}"])
        wr.writerow(header)
        for row in rows:
            wr.writerow([f"{v:.17g}" if isinstance(v, float) else v for v in row])


# --------------------------------------------------------------------------


def cmd_verify_algebra(cfg, out, seed, jobs) -> int:
    rng = np.random.default_rng(seed)
    rows = []
    ok = True

    def check(name, passed, detail=""):
        nonlocal ok
        ok = ok and passed
        rows.append((name, "PASS" if passed else "FAIL", detail))

    exact = all(clifford.anticommutator_defect(mu, nu).is_exactly_zero()
                for mu in range(4) for nu in range(4))
    check("anticommutation exact", exact)
    check("hermiticity (g^mu)+ = g0 g^mu g0",
          all(d == 0.0 for _, d in clifford.hermiticity_report()))
    g5 = clifford.gamma5()
    check("gamma5 squared", (g5 @ g5 - clifford.identity4()).is_exactly_zero())
    anti5 = all(((g5 @ clifford.gamma(mu)) + (clifford.gamma(mu) @ g5)).is_exactly_zero()
                for mu in range(4))
    check("gamma5 anticommutes", anti5)

    worst = {"sum": 0.0, "idem": 0.0, "orth": 0.0, "null": 0.0, "disp": 0.0}
    coeffs = NullFormCoeffs(rng.standard_normal(4) + 1j * rng.standard_normal(4),
                            rng.standard_normal(4) + 1j * rng.standard_normal(4))
    for _ in range(1000):
        w = rng.standard_normal(3)
        w /= np.linalg.norm(w)
        P = clifford.projector(tuple(w)).floating
        Q = clifford.projector(tuple(-w)).floating
        worst["sum"] = max(worst["sum"], float(np.abs(P + Q - np.eye(4)).max()))
        worst["idem"] = max(worst["idem"], float(np.abs(P @ P - P).max()))
        worst["orth"] = max(worst["orth"], float(np.abs(P @ Q).max()))
        Zv = rng.standard_normal(4) + 1j * rng.standard_normal(4)
        X = P @ Zv
        worst["null"] = max(worst["null"],
                            float(np.max(np.abs(clifford.null_form(coeffs, X, X))))
                            / float(np.vdot(Zv, Zv).real))
        k = rng.standard_normal(3)
        kk = sum(k[i] * clifford.alpha(i + 1).floating for i in range(3))
        worst["disp"] = max(worst["disp"], float(
            np.abs(kk @ kk - np.dot(k, k) * np.eye(4)).max()) / float(np.dot(k, k)))
    check("projector sum P+ + P- = I", worst["sum"] <= 1e-14, f"{worst['sum']:.2e}")
    check("projector idempotent", worst["idem"] <= 1e-14, f"{worst['idem']:.2e}")
    check("projector orthogonal", worst["orth"] <= 1e-14, f"{worst['orth']:.2e}")
    check("null form vanishes on P range", worst["null"] <= 1e-13, f"{worst['null']:.2e}")
    check("(k.a)^2 = |k|^2", worst["disp"] <= 1e-13, f"{worst['disp']:.2e}")

    res_worst = 0.0
    for vf in spacetime_family():
        _, res = null_form_commutator(coeffs, vf, rng=int(rng.integers(2 ** 31)))
        res_worst = max(res_worst, res)
    check("null form commutators", res_worst <= 1e-12, f"{res_worst:.2e}")

    for name, status, detail in rows:
        print(f"{status:4s}  {name}" + (f"  [{detail}]" if detail else ""))
    _write_rows(out / "verify_algebra.csv", ["check", "status", "detail"],
                rows, config_hash(cfg))
    return 0 if ok else 1


def cmd_evolve(cfg, out, seed, jobs) -> int:
    grid, spec, coeffs, _ = build_objects(cfg)
    phi0 = make_field(grid, spec)
    run = evolve(phi0, _evolve_config(cfg, coeffs))
    chash = config_hash(cfg)
    manifest = [f"# config_hash = {chash}",
                f"n = {grid.n}", f"length = {grid.length}",
                f"snapshots = {len(run.times)}",
                f"containment_time = {run.containment_time}"]
    rows = []
    for j, t in enumerate(run.times):
        name = f"snapshot_{j:04d}"
        dump_field(run.snapshot(j), out / name, {"config_hash": chash})
        rows.append((float(t), name))
        manifest.append(f"snapshot {t:.17g} {name}")
    (out / "run_manifest.txt").write_text("\n".join(manifest) + "\n")
    print(f"wrote {len(run.times)} snapshots, containment_time = {run.containment_time}")
    return 0


def cmd_radiation(cfg, out, seed, jobs) -> int:
    grid, spec, coeffs, ngrid = build_objects(cfg)
    phi0 = make_field(grid, spec)
    run = evolve(phi0, _evolve_config(cfg, coeffs))
    chash = config_hash(cfg)
    direction = cfg["radiation"].get("direction", "future")
    F = extract(run, ngrid, cfg["radiation"]["radii"], direction=direction)
    dump_radiation(F, out / "radiation", {"config_hash": chash})
    defect = isometry_defect(F, phi0)
    print(f"radiation field norm {F.norm():.6g}, isometry defect {defect:.3e}, "
          f"error norm {F.error_norm():.3e}")
    return 0


def cmd_diagnostics(cfg, out, seed, jobs) -> int:
    grid, spec, coeffs, _ = build_objects(cfg)
    phi0 = make_field(grid, spec)
    run = evolve(phi0, _evolve_config(cfg, coeffs))
    dc = cfg["diagnostics"]
    dcfg = DiagnosticsConfig(mu=float(dc["mu"]), max_order=int(dc["max_order"]))
    chash = config_hash(cfg)

    log = collect_log(run, dcfg)
    log.write_csv(out / "diagnostics.csv", chash)

    cb = charge_balance_defect(run)
    lhs, rhs = ghost_weight_check(run, dcfg)
    t_mid = 0.5 * (run.t_min + run.t_max)
    ks = ks_ratio(run, t_mid, dcfg)
    rows = [("charge_balance_defect", cb),
            ("ghost_lhs", lhs), ("ghost_rhs", rhs),
            ("ghost_ok", float(lhs <= rhs)),
            ("ks_ratio_mid", ks)]
    try:
        cd = cone_flux_defect(run, float(dc["cone_t0"]), float(dc["cone_t1"]), cfg=dcfg)
        rows.append(("cone_flux_defect", cd))
    except ValueError as e:
        warnings.warn(f"cone diagnostic skipped: {e}")
    rays = [(float(s), np.asarray(w, dtype=float)) for s, w in dc["rays"]]
    try:
        pf, pm, samples = peeling_fit(run, rays, cfg=dcfg)
        rows += [("peeling_full", pf), ("peeling_pminus", pm)]
        dump_ray_samples(samples, out / "decay")
    except ValueError as e:
        warnings.warn(f"peeling fit skipped: {e}")
    _write_rows(out / "summary.csv", ["quantity", "value"], rows, chash)
    for k, v in rows:
        print(f"{k} = {v:.6g}")
    return 0 if lhs <= rhs else 1


def _scatter_setup(cfg):
    grid, spec, coeffs, ngrid = build_objects(cfg)
    sc = cfg["scatter"]
    handle = LinearMapHandle(grid, ngrid, cfg["radiation"]["radii"],
                             run_dt=float(sc["run_dt"]),
                             support_radius=float(sc["support_radius"]))
    scfg = ScatterConfig(coeffs=coeffs, handle=handle,
                         smallness_cap=float(sc["smallness_cap"]),
                         picard_max_iter=int(sc["picard_max_iter"]),
                         picard_tol=float(sc["picard_tol"]),
                         cg_tol=float(sc["cg_tol"]),
                         cg_max_iter=int(sc["cg_max_iter"]),
                         duhamel_stride=int(sc["duhamel_stride"]))
    return grid, spec, handle, scfg


def cmd_scatter_forward(cfg, out, seed, jobs) -> int:
    grid, spec, handle, scfg = _scatter_setup(cfg)
    phi0 = make_field(grid, spec)
    chash = config_hash(cfg)
    F, rep = forward_nonlinear(scfg, phi0)
    dump_radiation(F, out / "scatter_forward", {"config_hash": chash})
    rows = [("norm", F.norm()), ("initial_norm", rep["initial_norm"]),
            ("discrepancy", rep.get("discrepancy", 0.0)),
            ("combined_error", rep.get("combined_error", 0.0)),
            ("consistent", float(rep.get("consistent", True)))]
    _write_rows(out / "scatter_forward_report.csv", ["quantity", "value"], rows, chash)
    for k, v in rows:
        print(f"{k} = {v:.6g}")
    return 0 if rep.get("consistent", True) else 1


def cmd_scatter_inverse(cfg, out, seed, jobs) -> int:
    grid, spec, handle, scfg = _scatter_setup(cfg)
    phi0 = make_field(grid, spec)
    chash = config_hash(cfg)
    target, _ = forward_nonlinear(replace_consistency(scfg), phi0)
    rec, rep = invert_nonlinear(scfg, target)
    err = (np.linalg.norm(rec.data - phi0.data)
           / max(np.linalg.norm(phi0.data), 1e-300))
    dump_field(rec, out / "recovered", {"config_hash": chash})
    rows = [(it, r) for it, r in enumerate(rep["residuals"])]
    _write_rows(out / "picard_convergence.csv", ["iteration", "residual"], rows, chash)
    print(f"picard iterations = {rep['iterations']}, converged = {rep['converged']}, "
          f"round-trip error = {err:.3e}")
    return 0 if rep["converged"] else 1


def replace_consistency(scfg):
    from dataclasses import replace
    return replace(scfg, check_consistency=False)


def cmd_convergence(cfg, out, seed, jobs) -> int:
    grid, spec, coeffs, ngrid = build_objects(cfg)
    chash = config_hash(cfg)
    phi0 = make_field(grid, spec)
    rows = []

    # Strang order: semilinear runs against the finest dt
    ladder = [float(v) for v in cfg["convergence"]["dt_ladder"]]
    t_end = min(2.0, abs(float(cfg["evolve"]["t_final"])))

    def run_final(dt):
        c = EvolveConfig(dt=dt, t_final=t_end, snapshot_every=10 ** 6,
                         nonlinearity=coeffs)
        return evolve(phi0, c).snaps[-1]

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as ex:
            finals = list(ex.map(run_final, ladder + [ladder[-1] / 2]))
    else:
        finals = [run_final(dt) for dt in ladder + [ladder[-1] / 2]]
    ref = finals[-1]
    errs = [float(np.linalg.norm(f - ref)) for f in finals[:-1]]
    orders = [math.log2(errs[i] / errs[i + 1]) for i in range(len(errs) - 1)]
    for dt, e in zip(ladder, errs):
        rows.append(("strang_error", dt, e))
    for o in orders:
        rows.append(("strang_order", 0.0, o))

    # extraction convergence in M
    m_ladder = [float(v) for v in cfg["convergence"]["m_ladder"]]
    handle = LinearMapHandle(grid, ngrid, m_ladder)
    import scipy.fft as sfft
    from .radiation import RadiationField, project_direction, rf_add
    hat = sfft.fftn(phi0.data, axes=(1, 2, 3), workers=-1)
    Fs = []
    shape = (ngrid.ns, ngrid.n_theta, ngrid.n_phi, 4)
    for M in m_ladder:
        vals = np.empty(shape, dtype=complex)
        for j, s in enumerate(ngrid.svals):
            raw = handle._sample_hat(hat, M + s, M)
            vals[j] = project_direction(raw.reshape(shape[1:]), ngrid.omega, 1)
        Fs.append(RadiationField(ngrid, vals, M))
    diffs = [rf_add(Fs[i], Fs[i + 1], 1, -1).norm() for i in range(len(Fs) - 1)]
    for (M, d) in zip(m_ladder[:-1], diffs):
        rows.append(("extraction_diff", M, d))
    for i in range(len(diffs) - 1):
        expo = math.log(diffs[i] / diffs[i + 1]) / math.log(m_ladder[i + 1] / m_ladder[i])
        rows.append(("extraction_exponent", m_ladder[i], expo))

    _write_rows(out / "convergence.csv", ["quantity", "parameter", "value"], rows, chash)
    for name, p, v in rows:
        print(f"{name}  {p:g}  {v:.6g}")
    strang_orders = [v for name, _, v in rows if name == "strang_order"]
    extr_exps = [v for name, _, v in rows if name == "extraction_exponent"]
    ok = all(v >= 1.9 for v in strang_orders) and all(v >= 0.4 for v in extr_exps)
    return 0 if ok else 1


COMMANDS = {
    "verify-algebra": cmd_verify_algebra,
    "evolve": cmd_evolve,
    "radiation": cmd_radiation,
    "diagnostics": cmd_diagnostics,
    "scatter-forward": cmd_scatter_forward,
    "scatter-inverse": cmd_scatter_inverse,
    "convergence": cmd_convergence,
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="nullform",
        description="Massless Dirac evolution, radiation fields, and scattering maps")
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", default=None, help="YAML config path")
    parser.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="dotted-path config override")
    parser.add_argument("--out", default="out", help="output directory")
    parser.add_argument("--jobs", type=int, default=1)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)

    try:
        cfg = load_config(args.config, args.set)
    except (ConfigError, FileNotFoundError, yaml.YAMLError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        return COMMANDS[args.command](cfg, out, args.seed, args.jobs)
    except (ValueError, RuntimeError) as e:
        print(f"check failure: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
