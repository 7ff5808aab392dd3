"""Scenario runner: config-driven sweeps, figure reproduction, self-test.

Subcommands:

  run <config>     execute a scenario config, emit one CSV per sweep point
                   plus summary.csv
  figure <name>    emit the data grid behind fig2..fig7 with the published
                   parameter values baked in (--override to vary them)
  selftest         run the acceptance criteria and print a pass/fail table

Config files are flat `key = value` lines with dotted section keys and '#'
comments; see README for the grammar.  Exit codes: 0 success, 1 invalid
config, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import itertools
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import __version__, damped, dephasing, engine, frame, qmat
from .damped import ConvergenceError
from .quadrature import QuadratureError
from .tables import TrajectoryTable, format_float, write_rows_csv


class ConfigError(Exception):
    pass


MODEL_METHODS = {
    "dephasing": ("exact", "tcl2", "apo2"),
    "damped": ("tcl2", "apo2"),
    "generic": ("exact", "tcl2", "apo2", "corrproj2"),
}
SWEEPABLE = {
    "dephasing": ("r", "q"),
    "damped": ("gamma", "N"),
    "generic": (),
}
C_HALF = 1.0 / math.sqrt(2.0)


# ---------------------------------------------------------------------------
# config parsing
# ---------------------------------------------------------------------------

def parse_config_text(text: str) -> dict:
    cfg = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split('#', 1)[0].strip()
        if not line:
            continue
        if '=' not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = line.split('=', 1)
        cfg[key.strip()] = value.strip()
    return cfg


def load_config(path: str) -> dict:
    try:
        with open(path) as fh:
            return parse_config_text(fh.read())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc


def _get(cfg, key, default=None, required=False):
    if key in cfg:
        return cfg[key]
    if required:
        raise ConfigError(f"missing required field {key!r}")
    return default


def _get_float(cfg, key, default=None, required=False):
    raw = _get(cfg, key, default=None, required=required)
    if raw is None:
        return default
    try:
        return float(raw)
    except ValueError as exc:
        raise ConfigError(f"field {key!r}: not a number: {raw!r}") from exc


def _get_int(cfg, key, default=None, required=False):
    raw = _get(cfg, key, default=None, required=required)
    if raw is None:
        return default
    try:
        return int(raw)
    except ValueError as exc:
        raise ConfigError(f"field {key!r}: not an integer: {raw!r}") from exc


def _get_matrix(cfg, key):
    """Matrix literal: rows separated by ';', entries by ',' (python complex)."""
    raw = _get(cfg, key, required=True)
    try:
        rows = [[complex(x.strip().replace('i', 'j')) for x in row.split(',')]
                for row in raw.split(';')]
    except ValueError as exc:
        raise ConfigError(f"field {key!r}: bad matrix literal") from exc
    n = len(rows[0])
    if any(len(r) != n for r in rows):
        raise ConfigError(f"field {key!r}: ragged matrix literal")
    return np.array(rows, dtype=complex)


def validate_config(cfg: dict) -> dict:
    model = _get(cfg, "model.kind", required=True)
    if model not in MODEL_METHODS:
        raise ConfigError(f"field 'model.kind': unknown model {model!r}")
    methods_raw = _get(cfg, "methods", required=True)
    methods = [m.strip() for m in methods_raw.split(',') if m.strip()]
    if not methods:
        raise ConfigError("field 'methods': empty method list")
    for m in methods:
        if m not in MODEL_METHODS[model]:
            raise ConfigError(
                f"field 'methods': {m!r} unavailable for model {model!r} "
                f"(allowed: {', '.join(MODEL_METHODS[model])})")
    t_max = _get_float(cfg, "grid.t_max", required=True)
    n_points = _get_int(cfg, "grid.n_points", required=True)
    if t_max <= 0 or n_points < 2:
        raise ConfigError("field 'grid': need t_max > 0 and n_points >= 2")
    sweeps = {}
    for key in sorted(cfg):
        if key.startswith("sweep."):
            axis = key.split('.', 1)[1]
            if axis not in SWEEPABLE[model]:
                raise ConfigError(f"field {key!r}: not sweepable for {model!r}")
            values = [v.strip() for v in cfg[key].split(',') if v.strip()]
            if not values:
                raise ConfigError(f"field {key!r}: empty sweep list")
            sweeps[axis] = values
    if model == "damped":
        omega_c = _get_float(cfg, "damped.omega_c", 1.0)
        if (t_max / (n_points - 1)) > 0.1 / omega_c + 1e-12:
            raise ConfigError("field 'grid.n_points': damped grid must resolve "
                              "the cutoff (dt <= 0.1/omega_c)")
    return {"model": model, "methods": methods, "t_max": t_max,
            "n_points": n_points, "sweeps": sweeps, "cfg": dict(cfg)}


def sweep_points(resolved: dict) -> list:
    sweeps = resolved["sweeps"]
    if not sweeps:
        return [{}]
    axes = sorted(sweeps)
    points = []
    for combo in itertools.product(*(sweeps[a] for a in axes)):
        points.append({f"{resolved['model']}.{a}": v
                       for a, v in zip(axes, combo)})
    return points


# ---------------------------------------------------------------------------
# per-point execution
# ---------------------------------------------------------------------------

def _dephasing_state(cfg) -> tuple:
    params = dephasing.DephasingParams(_get_float(cfg, "dephasing.xi", 1.0),
                                       _get_float(cfg, "dephasing.sigma", 1.0))
    c0 = _get_float(cfg, "dephasing.c0", C_HALF)
    c1 = _get_float(cfg, "dephasing.c1", C_HALF)
    r = _get_float(cfg, "dephasing.r", 0.0)
    kind = _get(cfg, "dephasing.distribution", "gaussian")
    if kind == "gaussian":
        state = dephasing.gaussian_state(c0, c1, r, params)
    elif kind == "double_gaussian":
        q = _get_float(cfg, "dephasing.q", required=True)
        state = dephasing.double_gaussian_state(c0, c1, r, q, params)
    else:
        raise ConfigError(f"field 'dephasing.distribution': unknown kind {kind!r}")
    return state, params


def _run_dephasing_point(cfg, methods, t_max, n_points) -> TrajectoryTable:
    state, params = _dephasing_state(cfg)
    ts = np.linspace(0.0, t_max, n_points)  # in units of xi*sigma*t
    phys_ts = ts / (params.xi * params.sigma)
    cols = {}
    rho11 = np.full(ts.size, state.c1 ** 2)
    for m in methods:
        vals = dephasing.coherence_trajectory(state, params, m, phys_ts)
        cols[f"{m}_re_rho10"] = np.real(vals)
        cols[f"{m}_im_rho10"] = np.imag(vals)
        cols[f"{m}_rho11"] = rho11
    return TrajectoryTable(ts, cols, {})


def _run_damped_point(cfg, methods, t_max, n_points) -> TrajectoryTable:
    bath = damped.BathSpec(_get_float(cfg, "damped.gamma", required=True),
                           _get_float(cfg, "damped.omega_c", 1.0),
                           _get_float(cfg, "damped.N", required=True),
                           _get_float(cfg, "damped.varsigma", 0.0))
    init = damped.DampedInitialState(_get_float(cfg, "damped.c0", C_HALF),
                                     _get_float(cfg, "damped.c1", C_HALF))
    ts = np.linspace(0.0, t_max / bath.omega_c, n_points)
    cols = {}
    solver = {"tcl2": damped.solve_tcl, "apo2": damped.solve_apo}
    for m in methods:
        table = solver[m](bath, init, ts)
        for name in ("re_rho10", "im_rho10", "rho11"):
            cols[f"{m}_{name}"] = table.column(name)
    return TrajectoryTable(ts * bath.omega_c, cols, {})


def _generic_pieces(cfg):
    h_s = _get_matrix(cfg, "generic.h_system")
    h_e = _get_matrix(cfg, "generic.h_env")
    g = _get_float(cfg, "generic.g", required=True)
    couplings = []
    for j in itertools.count(1):
        ka = f"generic.coupling{j}.a"
        kb = f"generic.coupling{j}.b"
        if ka not in cfg and kb not in cfg:
            break
        couplings.append((_get_matrix(cfg, ka), _get_matrix(cfg, kb)))
    if not couplings:
        raise ConfigError("field 'generic.coupling1.a': at least one coupling "
                          "pair is required")
    try:
        spec = engine.InteractionSpec(h_s, h_e, tuple(couplings), g)
    except ValueError as exc:
        raise ConfigError(f"field 'generic.*': {exc}") from exc
    rho_se = _get_matrix(cfg, "generic.initial_state")
    return spec, rho_se


def _run_generic_point(cfg, methods, t_max, n_points) -> TrajectoryTable:
    spec, rho_se = _generic_pieces(cfg)
    if "exact" in methods and spec.shape.total > 64:
        raise ConfigError("field 'methods': exact oracle capped at total "
                          "dimension 64 for this spec")
    ts = np.linspace(0.0, t_max, n_points)
    dec = engine.decompose_initial(rho_se, spec)
    ref = engine.reference_state(dec)
    cols = {}

    def put(m, states):
        cols[f"{m}_re_rho10"] = np.real(states[:, 0, 1])
        cols[f"{m}_im_rho10"] = np.imag(states[:, 0, 1])
        cols[f"{m}_rho11"] = np.real(states[:, 0, 0])

    for m in methods:
        if m == "exact":
            put(m, engine.exact_oracle(rho_se, spec, ts))
        elif m == "tcl2":
            put(m, engine.solve_tcl2(spec, dec, ref, ts))
        elif m == "apo2":
            put(m, engine.solve_apo2(spec, dec, ts)[1])
        elif m == "corrproj2":
            blocks_raw = _get(cfg, "generic.projector_blocks")
            if blocks_raw is None:
                family = engine.ProjectorFamily(
                    ((ref, np.eye(spec.dim_env, dtype=complex)),))
            else:
                pis = []
                for group in blocks_raw.split(';'):
                    idx = [int(x) for x in group.split(',')]
                    p = np.zeros((spec.dim_env, spec.dim_env), dtype=complex)
                    for i in idx:
                        p[i, i] = 1.0
                    pis.append(p)
                family = engine.build_block_projector(pis, ref)
            put(m, engine.solve_corrproj2(spec, family, dec, rho_se, ts)[1])
    return TrajectoryTable(ts, cols, {})


_RUNNERS = {"dephasing": _run_dephasing_point, "damped": _run_damped_point,
            "generic": _run_generic_point}


def _point_label(model: str, point: dict) -> str:
    if not point:
        return model
    parts = [f"{k.split('.', 1)[1]}{float(v):g}" for k, v in sorted(point.items())]
    return model + "_" + "_".join(parts)


def run_point(cfg: dict, point: dict, out_dir: str) -> tuple:
    """Execute one sweep point, write its CSV, return its summary rows."""
    merged = dict(cfg)
    merged.update(point)
    resolved = validate_config(merged)
    model, methods = resolved["model"], resolved["methods"]
    table = _RUNNERS[model](merged, methods, resolved["t_max"],
                            resolved["n_points"])
    meta = {"tool": f"oqs-apo {__version__}", "model": model,
            "methods": ",".join(methods),
            "grid.t_max": f"{resolved['t_max']:g}",
            "grid.n_points": str(resolved["n_points"])}
    for key in sorted(merged):
        if key.split('.', 1)[0] in ("dephasing", "damped", "generic", "seed"):
            meta[key] = merged[key]
    table.metadata = meta
    label = _point_label(model, point)
    path = os.path.join(out_dir, f"{label}.csv")
    table.write_csv(path, time_label="t")

    primary = "rho11" if model in ("damped", "generic") else "re_rho10"
    rows = []
    sweep_vals = [v for _, v in sorted(point.items())]
    for m in methods:
        col = np.asarray(table.columns[f"{m}_{primary}"], dtype=float)
        ipk = int(np.argmax(col))
        if "exact" in methods and m != "exact":
            dev = float(np.max(np.abs(col - table.columns[f"exact_{primary}"])))
            dev_str = format_float(dev)
        else:
            dev_str = ""
        rows.append(sweep_vals + [m, format_float(float(col[-1])),
                                  format_float(float(table.time[ipk])),
                                  format_float(float(col[ipk])), dev_str])
    return label, rows


def _worker(args):
    cfg, point, out_dir = args
    return run_point(cfg, point, out_dir)


def run_scenario(cfg: dict, out_dir: str, jobs: int) -> None:
    resolved = validate_config(cfg)
    points = sweep_points(resolved)
    os.makedirs(out_dir, exist_ok=True)
    tasks = [(cfg, p, out_dir) for p in points]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_worker, tasks))
    else:
        results = [_worker(t) for t in tasks]
    sweep_keys = sorted(resolved["sweeps"])
    header = sweep_keys + ["method", "asymptote", "peak_t", "peak_value",
                           "max_abs_dev_vs_exact"]
    path = os.path.join(out_dir, "summary.csv")
    with open(path, "w", newline="\n") as fh:
        fh.write(f"# tool = oqs-apo {__version__}\n")
        fh.write(f"# model = {resolved['model']}\n")
        fh.write(",".join(header) + "\n")
        for _, rows in results:
            for row in rows:
                fh.write(",".join(str(x) for x in row) + "\n")


# ---------------------------------------------------------------------------
# figures
# ---------------------------------------------------------------------------

def _fig_dephasing_config(extra: dict) -> dict:
    cfg = {"model.kind": "dephasing", "methods": "exact,tcl2,apo2",
           "dephasing.c0": repr(C_HALF), "dephasing.c1": repr(C_HALF),
           "dephasing.xi": "1", "dephasing.sigma": "1",
           "grid.t_max": "10", "grid.n_points": "1000"}
    cfg.update(extra)
    return cfg


def _difference_grid(out_dir, name, q, rs, ts):
    """TCL-exact and APO-exact coherence differences over (t, r)."""
    params = dephasing.DephasingParams(1.0, 1.0)
    rows_tcl, rows_apo, rows_im = [], [], []
    for r in rs:
        if q == 0.0:
            state = dephasing.gaussian_state(C_HALF, C_HALF, float(r), params)
        else:
            state = dephasing.double_gaussian_state(C_HALF, C_HALF, float(r),
                                                    q, params)
        exact = np.real(dephasing.coherence_trajectory(state, params, "exact", ts))
        tcl = np.real(dephasing.coherence_trajectory(state, params, "tcl2", ts))
        apo = dephasing.coherence_trajectory(state, params, "apo2", ts)
        for k, t in enumerate(ts):
            rows_tcl.append((r, t, tcl[k] - exact[k]))
            rows_apo.append((r, t, np.real(apo[k]) - exact[k]))
            rows_im.append((r, t, np.imag(apo[k])))
    meta = {"tool": f"oqs-apo {__version__}", "model": "dephasing",
            "c0 = c1": f"{C_HALF!r}", "q": f"{q:g}"}
    write_rows_csv(os.path.join(out_dir, f"{name}_tcl_minus_exact.csv"),
                   meta, ["r", "t", "re_rho10_diff"], rows_tcl)
    write_rows_csv(os.path.join(out_dir, f"{name}_apo_minus_exact.csv"),
                   meta, ["r", "t", "re_rho10_diff"], rows_apo)
    return rows_im, meta


def _figure_fig2(out_dir, jobs, cfg_extra):
    cfg = _fig_dephasing_config(cfg_extra)
    cfg["sweep.r"] = "-2,-1,1,2"
    run_scenario(cfg, out_dir, jobs)


def _figure_fig3(out_dir, jobs, cfg_extra):
    rs = np.linspace(-3.0, 3.0, 121)
    ts = np.linspace(0.0, 10.0, 401)
    rows_im, meta = _difference_grid(out_dir, "fig3", 0.0, rs, ts)
    write_rows_csv(os.path.join(out_dir, "fig3_apo_im.csv"), meta,
                   ["r", "t", "im_rho10_apo"], rows_im)


def _figure_fig4(out_dir, jobs, cfg_extra):
    base = {"dephasing.distribution": "double_gaussian"}
    base.update(cfg_extra)
    left = dict(base)
    left.update({"dephasing.r": "0.1",
                 "dephasing.q": repr(math.pi / 0.2)})
    cfg = _fig_dephasing_config(left)
    cfg["grid.t_max"] = cfg_extra.get("grid.t_max", "3")
    run_point(cfg, {}, out_dir)
    os.replace(os.path.join(out_dir, "dephasing.csv"),
               os.path.join(out_dir, "fig4_left_r0.1.csv"))
    middle = dict(base)
    middle.update({"dephasing.r": "2", "dephasing.q": "2"})
    cfg = _fig_dephasing_config(middle)
    run_point(cfg, {}, out_dir)
    os.replace(os.path.join(out_dir, "dephasing.csv"),
               os.path.join(out_dir, "fig4_middle_r2_q2.csv"))
    # right panel: imaginary part of the APO solution for the left parameters
    params = dephasing.DephasingParams(1.0, 1.0)
    state = dephasing.double_gaussian_state(C_HALF, C_HALF, 0.1, math.pi / 0.2,
                                            params)
    ts = np.linspace(0.0, 3.0, 1000)
    apo = dephasing.coherence_trajectory(state, params, "apo2", ts)
    write_rows_csv(os.path.join(out_dir, "fig4_right_im.csv"),
                   {"tool": f"oqs-apo {__version__}", "model": "dephasing",
                    "r": "0.1", "q": repr(math.pi / 0.2)},
                   ["t", "im_rho10_apo"], list(zip(ts, np.imag(apo))))


def _figure_fig5(out_dir, jobs, cfg_extra):
    rs = np.linspace(-3.0, 3.0, 121)
    ts = np.linspace(0.0, 10.0, 401)
    for q in (2.0, 15.0):
        _difference_grid(out_dir, f"fig5_q{q:g}", q, rs, ts)


def _figure_fig6(out_dir, jobs, cfg_extra):
    nu_scale = 100.0  # omega_c / nu = 100 relabels the time axis only
    init = damped.DampedInitialState(C_HALF, C_HALF)
    ts = np.linspace(0.0, 400.0, 4001)
    for gamma in (0.05, 0.5):
        for n in (3, 10):
            bath = damped.BathSpec(gamma, 1.0, float(n))
            tcl = damped.solve_tcl(bath, init, ts)
            apo = damped.solve_apo(bath, init, ts)
            diff = apo.column("rho11") - tcl.column("rho11")
            table = TrajectoryTable(ts, {
                "t_nu": ts / nu_scale,
                "rho11_tcl2": tcl.column("rho11"),
                "rho11_apo2": apo.column("rho11"),
                "diff_apo_minus_tcl": diff,
            }, {"tool": f"oqs-apo {__version__}", "model": "damped",
                "gamma": f"{gamma:g}", "N": str(n), "omega_c": "1",
                "varsigma": "0", "omega_c_over_nu": f"{nu_scale:g}",
                "c0 = c1": f"{C_HALF!r}"})
            table.write_csv(os.path.join(out_dir, f"fig6_gamma{gamma:g}_N{n}.csv"),
                            time_label="t_omega_c")


def _figure_fig7(out_dir, jobs, cfg_extra):
    init = damped.DampedInitialState(C_HALF, C_HALF)
    ts = np.linspace(0.0, 400.0, 4001)
    gammas = np.linspace(0.05, 0.5, 46)
    rows = []
    for gamma in gammas:
        bath = damped.BathSpec(float(gamma), 1.0, 3.0)
        tcl = damped.solve_tcl(bath, init, ts)
        apo = damped.solve_apo(bath, init, ts)
        diff = apo.column("rho11") - tcl.column("rho11")
        for k in range(0, ts.size, 5):
            rows.append((gamma, ts[k], diff[k]))
    write_rows_csv(os.path.join(out_dir, "fig7_apo_minus_tcl.csv"),
                   {"tool": f"oqs-apo {__version__}", "model": "damped",
                    "N": "3", "omega_c": "1", "varsigma": "0"},
                   ["gamma", "t_omega_c", "rho11_diff"], rows)


_FIGURES = {"fig2": _figure_fig2, "fig3": _figure_fig3, "fig4": _figure_fig4,
            "fig5": _figure_fig5, "fig6": _figure_fig6, "fig7": _figure_fig7}


def run_figure(name: str, out_dir: str, jobs: int = 1,
               overrides: dict | None = None) -> None:
    if name not in _FIGURES:
        raise ConfigError(f"unknown figure {name!r} "
                          f"(choose from {', '.join(sorted(_FIGURES))})")
    os.makedirs(out_dir, exist_ok=True)
    _FIGURES[name](out_dir, jobs, dict(overrides or {}))


# ---------------------------------------------------------------------------
# self-test and entry point
# ---------------------------------------------------------------------------

def run_selftest(stream=None) -> int:
    from . import acceptance
    stream = stream or sys.stdout
    results = acceptance.run_all()
    width = max(len(r.name) for r in results)
    for r in results:
        status = "PASS" if r.ok else "FAIL"
        stream.write(f"{status}  {r.name:<{width}}  {r.detail}\n")
    failing = [r.name.split()[0] for r in results if not r.ok]
    if failing:
        stream.write(f"FAILED criteria: {', '.join(failing)}\n")
        return 2
    stream.write("all criteria passed\n")
    return 0


def parse_overrides(pairs) -> dict:
    out = {}
    for pair in pairs or ():
        if '=' not in pair:
            raise ConfigError(f"--override needs key=value, got {pair!r}")
        key, value = pair.split('=', 1)
        out[key.strip()] = value.strip()
    return out


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="oqs-apo",
        description="Open-quantum-system dynamics with initial correlations")
    parser.add_argument("--out", default="out", help="output directory")
    parser.add_argument("--jobs", type=int, default=os.cpu_count() or 1,
                        help="sweep-point worker pool size")
    parser.add_argument("--override", action="append", metavar="KEY=VALUE",
                        help="override a config/figure parameter (repeatable)")
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run a scenario config")
    p_run.add_argument("config")
    p_fig = sub.add_parser("figure", help="reproduce a published figure grid")
    p_fig.add_argument("name", choices=sorted(_FIGURES))
    sub.add_parser("selftest", help="run the acceptance criteria")
    args = parser.parse_args(argv)

    try:
        if args.command == "run":
            cfg = load_config(args.config)
            cfg.update(parse_overrides(args.override))
            run_scenario(cfg, args.out, max(1, args.jobs))
        elif args.command == "figure":
            run_figure(args.name, args.out, max(1, args.jobs),
                       parse_overrides(args.override))
        else:
            return run_selftest()
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except (QuadratureError, ConvergenceError, OverflowError) as exc:
        print(f"numerical failure in {type(exc).__name__.lower()}: {exc}",
              file=sys.stderr)
        return 2
    except RuntimeError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
