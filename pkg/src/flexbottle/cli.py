"""Command-line front end.

Every option can also come from a JSON config file (``--config``); keys are
the option names with dashes replaced by underscores. Flags override the file.

Exit status: 0 ok, 1 configuration error, 2 solver did not converge,
3 validation failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from .errors import ConvergenceError, FlexbottleError, ParameterError, SearchError
from .longrun import ScanConfig, benefit_diff, enumerate_equilibria, stability_verdict
from .model import CASES, REFERENCE_SCALE, classify_case, validate
from .optimum import (
    CONVENTIONS,
    benefit_gain,
    maximize_total_benefit,
    minimize_total_cost,
    pigouvian_region,
    total_benefit,
    total_cost,
)
from .oracle import GridConfig, Tolerances, cross_validate
from .productivity import output_pair
from .shortrun import arrival_rates, build_pattern, closed_form_costs, pattern_dict

EXIT_CONFIG, EXIT_CONVERGENCE, EXIT_VALIDATION = 1, 2, 3

SWEEP_COLUMNS = [
    "mu", "theta", "rho", "v_H", "v_I", "case", "P_H_r", "P_H_f", "P_I_r", "P_I_f",
    "F_r", "F_f", "D_H", "D_I", "stable", "TC", "TB_table5", "TB_daily",
]

MODEL_KEYS = ("N", "s", "H", "kappa", "alpha", "beta", "rho", "mu", "theta")

# option name -> (type, default, help); model fields have no default here
OPTIONS = {
    "N": (float, None, "total commuters"),
    "s": (float, None, "bottleneck capacity (vehicles/minute)"),
    "H": (float, None, "work duration (minutes)"),
    "kappa": (float, None, "output-rate coefficient"),
    "alpha": (float, None, "value of time (default (beta + kappa*N)/2)"),
    "beta": (float, None, "earliness penalty (give beta or rho)"),
    "rho": (float, None, "beta/(kappa*N) (give beta or rho)"),
    "mu": (float, None, "household share"),
    "theta": (float, None, "relative flex-interval length"),
    "tables": (str, "corrected", "closed forms: corrected or printed"),
    "out": (str, None, "output file (default stdout)"),
    "workers": (int, 1, "worker processes (FLEXBOTTLE_WORKERS overrides)"),
    "seed": (int, 0, "random seed"),
}

COMMAND_OPTIONS = {
    "shortrun": {"v_H": (float, None, "rigid household share"), "v_I": (float, None, "rigid individual share")},
    "outputs": {"v_H": (float, None, "rigid household share"), "v_I": (float, None, "rigid individual share")},
    "longrun": {"grid": (int, 101, "seeding grid per axis")},
    "sweep": {
        "grid_mu": (int, 11, "mu grid points"),
        "grid_theta": (int, 10, "theta grid points"),
        "grid_rho": (int, 2, "rho grid points (ignored when rho or beta is fixed)"),
        "grid_v": (int, 2, "grid points per schedule share"),
        "mu_min": (float, 0.0, ""), "mu_max": (float, 1.0, ""),
        "theta_min": (float, 0.1, ""), "theta_max": (float, 1.0, ""),
        "rho_min": (float, 0.05, ""), "rho_max": (float, 0.95, ""),
    },
    "optimum": {
        "convention": (str, "table5-morning", "TB bookkeeping: table5-morning or daily"),
        "grid": (int, 201, "brute-force grid per axis"),
    },
    "pigouvian": {
        "target_v_H": (float, None, "target household share"),
        "target_v_I": (float, None, "target individual share"),
        "sigma_min": (float, None, "search box lower end (money/day)"),
        "sigma_max": (float, None, "search box upper end (money/day)"),
        "mode": (str, "equal", "equal or independent"),
    },
    "validate": {
        "samples": (int, 20, "random parameter draws"),
        "K": (int, 4000, "slots per N/s"),
        "cost_tol": (float, 0.01, "relative cost tolerance"),
        "output_tol": (float, 0.005, "relative output tolerance"),
    },
}

class ConfigError(Exception):
    pass


# ---------------------------------------------------------------------------
# formatting


def fmt(x) -> str:
    return format(float(x), ".9g")


def _clean(obj):
    """Round floats to 9 significant digits and make the tree JSON-safe."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if not math.isfinite(x):
            return None
        return float(fmt(x))
    return obj


def dump_json(obj) -> str:
    return json.dumps(_clean(obj), sort_keys=True, indent=2) + "\n"


# ---------------------------------------------------------------------------
# config


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="flexbottle", description="Bottleneck commuting with flextime and household trips.")
    sub = p.add_subparsers(dest="command", required=True)
    for name, extra in COMMAND_OPTIONS.items():
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="JSON config file")
        for key, (typ, _, hlp) in {**OPTIONS, **extra}.items():
            flag = "--" + key.replace("_", "-")
            sp.add_argument(flag, dest=key, type=typ, default=None, help=hlp or None)
    return p


def resolve(args) -> dict:
    """Merge defaults, config file and flags (in that order of precedence)."""
    known = {**OPTIONS, **COMMAND_OPTIONS[args.command]}
    cfg = {k: d for k, (_, d, _) in known.items()}
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                data = json.load(fh)
        except (OSError, ValueError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        unknown = sorted(set(data) - set(known))
        if unknown:
            raise ConfigError(f"unknown config keys for {args.command}: {', '.join(unknown)}")
        for k, v in data.items():
            typ = known[k][0]
            try:
                cfg[k] = None if v is None else typ(v)
            except (TypeError, ValueError):
                raise ConfigError(f"config key {k}: cannot read {v!r} as {typ.__name__}") from None
    for k in known:
        v = getattr(args, k, None)
        if v is not None:
            cfg[k] = v
    env = os.environ.get("FLEXBOTTLE_WORKERS")
    if env:
        try:
            cfg["workers"] = int(env)
        except ValueError:
            raise ConfigError(f"FLEXBOTTLE_WORKERS={env!r} is not an integer") from None
    if cfg["workers"] < 1:
        raise ConfigError("workers must be >= 1")
    if cfg["beta"] is not None and cfg["rho"] is not None:
        raise ConfigError("give exactly one of beta or rho")
    if cfg["tables"] not in ("corrected", "printed"):
        raise ConfigError("tables must be corrected or printed")
    if cfg.get("convention") is not None and cfg["convention"] not in CONVENTIONS:
        raise ConfigError("convention must be " + " or ".join(CONVENTIONS))
    return cfg


def _model_raw(cfg, **override):
    raw = {k: cfg.get(k) for k in MODEL_KEYS}
    raw.update(override)
    return raw


def make_model(cfg, **override):
    return validate(_model_raw(cfg, **override))


def _need(cfg, *keys):
    missing = [k for k in keys if cfg.get(k) is None]
    if missing:
        raise ConfigError("missing required option(s): " + ", ".join("--" + k.replace("_", "-") for k in missing))


def _write(cfg, text):
    if cfg["out"]:
        d = os.path.dirname(os.path.abspath(cfg["out"]))
        if not os.path.isdir(d) or not os.access(d, os.W_OK):
            raise ConfigError(f"output directory not writable: {d}")
        with open(cfg["out"], "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


# ---------------------------------------------------------------------------
# commands


def cmd_shortrun(cfg):
    _need(cfg, "v_H", "v_I")
    m = make_model(cfg)
    split = (cfg["v_H"], cfg["v_I"])
    label = classify_case(m, split)
    costs = closed_form_costs(m, split, cfg["tables"])
    r = arrival_rates(m)
    doc = {
        "model": {**m.as_dict(), "rho": m.rho, "Delta": m.Delta, "t_s": m.t_s, "t_w": m.t_w},
        "split": {"v_H": split[0], "v_I": split[1]},
        "case": label.case, "on_boundary": label.on_boundary, "tables": cfg["tables"],
        "costs": dict(zip(("P_H_r", "P_H_f", "P_I_r", "P_I_f"), costs.as_tuple())),
        "rates": {"r_rigid": r.r_rigid, "r_flex_early": r.r_flex_early,
                  "r_H_flex_peak": r.r_H_flex_peak, "r_I_flex_peak": r.r_I_flex_peak},
        "pattern": pattern_dict(build_pattern(m, split)),
    }
    _write(cfg, dump_json(doc))
    return 0


def cmd_outputs(cfg):
    _need(cfg, "v_H", "v_I")
    m = make_model(cfg)
    op = output_pair(m, (cfg["v_H"], cfg["v_I"]), cfg["tables"])
    doc = {"case": classify_case(m, (cfg["v_H"], cfg["v_I"])).case, "tables": cfg["tables"],
           "F_r": op.F_r, "F_f": op.F_f, "F_f_H": op.F_f_H, "F_f_I": op.F_f_I, "epsilon": op.epsilon}
    _write(cfg, dump_json(doc))
    return 0


def cmd_longrun(cfg):
    m = make_model(cfg)
    if cfg["grid"] < 2:
        raise ConfigError("grid must be >= 2")
    eq = enumerate_equilibria(m, ScanConfig(grid=cfg["grid"]), cfg["tables"])
    _write(cfg, dump_json(eq.as_dict()))
    return 0


def _sweep_axes(cfg):
    for k in ("grid_mu", "grid_theta", "grid_v"):
        if cfg[k] < 2:
            raise ConfigError(f"{k.replace('_', '-')} must be >= 2")
    mus = np.linspace(cfg["mu_min"], cfg["mu_max"], cfg["grid_mu"])
    thetas = np.linspace(cfg["theta_min"], cfg["theta_max"], cfg["grid_theta"])
    if cfg["rho"] is not None:
        rhos = [cfg["rho"]]
    elif cfg["beta"] is not None:
        rhos = [None]
    else:
        if cfg["grid_rho"] < 2:
            raise ConfigError("grid-rho must be >= 2")
        rhos = list(np.linspace(cfg["rho_min"], cfg["rho_max"], cfg["grid_rho"]))
    vs = np.linspace(0.0, 1.0, cfg["grid_v"])
    return mus, thetas, rhos, vs


def _sweep_block(job):
    raw, tables, vs = job
    m = validate(raw)
    rows = []
    for v_H in vs:
        for v_I in vs:
            split = (float(v_H), float(v_I))
            c = closed_form_costs(m, split, tables)
            op = output_pair(m, split, tables)
            d = benefit_diff(m, split, tables)
            st = stability_verdict(m, split, tables)
            rows.append([
                fmt(m.mu), fmt(m.theta), fmt(m.rho), fmt(v_H), fmt(v_I), classify_case(m, split).case,
                *(fmt(x) for x in c.as_tuple()), fmt(op.F_r), fmt(op.F_f), fmt(d.D_H), fmt(d.D_I),
                "true" if st.stable else "false",
                fmt(total_cost(m, split, tables)),
                fmt(total_benefit(m, split, "table5-morning", tables)),
                fmt(total_benefit(m, split, "daily", tables)),
            ])
    return rows


def cmd_sweep(cfg):
    for k in ("N", "s", "H", "kappa"):
        if cfg[k] is None:
            cfg[k] = REFERENCE_SCALE[k]
    mus, thetas, rhos, vs = _sweep_axes(cfg)
    jobs = []
    for mu in mus:
        for th in thetas:
            for rho in rhos:
                over = {"mu": float(mu), "theta": float(th)}
                if rho is not None:
                    over["rho"] = float(rho)
                raw = _model_raw(cfg, **over)
                validate(raw)  # fail fast on a bad cell
                jobs.append((raw, cfg["tables"], vs))
    if cfg["workers"] > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=cfg["workers"]) as ex:
            blocks = list(ex.map(_sweep_block, jobs, chunksize=max(1, len(jobs) // (4 * cfg["workers"]))))
    else:
        blocks = [_sweep_block(j) for j in jobs]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SWEEP_COLUMNS)
    for rows in blocks:
        w.writerows(rows)
    _write(cfg, buf.getvalue())
    return 0


def cmd_optimum(cfg):
    m = make_model(cfg)
    tc = minimize_total_cost(m, cfg["tables"])
    tb = maximize_total_benefit(m, cfg["convention"], cfg["tables"], grid=cfg["grid"])
    doc = {"tables": cfg["tables"], "total_cost": tc.as_dict(), "total_benefit": tb.as_dict()}
    try:
        doc["benefit_gain"] = benefit_gain(m)
    except FlexbottleError as exc:
        doc["benefit_gain"] = None
        doc["benefit_gain_note"] = exc.message
    _write(cfg, dump_json(doc))
    return 0


def cmd_pigouvian(cfg):
    _need(cfg, "target_v_H", "target_v_I")
    m = make_model(cfg)
    box = None
    if cfg["sigma_min"] is not None or cfg["sigma_max"] is not None:
        _need(cfg, "sigma_min", "sigma_max")
        if not cfg["sigma_min"] < cfg["sigma_max"]:
            raise ConfigError("sigma-min must be below sigma-max")
        box = (cfg["sigma_min"], cfg["sigma_max"])
    if cfg["mode"] not in ("equal", "independent"):
        raise ConfigError("mode must be equal or independent")
    target = (cfg["target_v_H"], cfg["target_v_I"])
    try:
        region = pigouvian_region(m, target, box=box, mode=cfg["mode"], tables=cfg["tables"])
        doc = {"feasible": True, **region.as_dict()}
    except SearchError as exc:
        doc = {"feasible": False, "reason": exc.message, "target": {"v_H": target[0], "v_I": target[1]}}
    _write(cfg, dump_json(doc))
    return 0


def draw_samples(n, seed):
    """Seeded parameter draws cycling through cases A, B, C, D."""
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n):
        case = CASES[i % 4]
        rho = float(rng.uniform(0.1, 0.9))
        if case in "AB":
            mu = float(rng.uniform(0.05, 0.6))
            th = float(rng.uniform(0.1, 0.95 * (1 - mu)))
            thr = th / (1 - mu)
            v_I = float(rng.uniform(thr, 1.0)) if case == "A" else float(rng.uniform(0.0, thr))
            v_H = float(rng.uniform(0, 1))
        else:
            mu = float(rng.uniform(0.3, 0.95))
            th = float(rng.uniform(1.05 * (1 - mu), 1.0))
            thr = (th + mu - 1) / mu
            v_H = float(rng.uniform(thr, 1.0)) if case == "C" else float(rng.uniform(0.0, thr))
            v_I = float(rng.uniform(0, 1))
        out.append({"mu": mu, "theta": th, "rho": rho, "v_H": v_H, "v_I": v_I, "intended_case": case})
    return out


def _validate_one(job):
    raw, split, K, tol, tables = job
    m = validate(raw)
    return cross_validate(m, split, Tolerances(*tol), GridConfig(K=K), tables=tables).as_dict()


def cmd_validate(cfg):
    for k in ("N", "s", "H", "kappa"):
        if cfg[k] is None:
            cfg[k] = REFERENCE_SCALE[k]
    if cfg["samples"] < 1:
        raise ConfigError("samples must be >= 1")
    if cfg["K"] < 500:
        raise ConfigError("K must be >= 500")
    draws = draw_samples(cfg["samples"], cfg["seed"])
    jobs = []
    for d in draws:
        raw = _model_raw(cfg, mu=d["mu"], theta=d["theta"], rho=d["rho"], beta=None)
        jobs.append((raw, (d["v_H"], d["v_I"]), cfg["K"], (cfg["cost_tol"], cfg["output_tol"]), cfg["tables"]))
    if cfg["workers"] > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=cfg["workers"]) as ex:
            reports = list(ex.map(_validate_one, jobs))
    else:
        reports = [_validate_one(j) for j in jobs]
    failed = sum(not r["ok"] for r in reports)
    doc = {
        "samples": len(reports), "seed": cfg["seed"], "K": cfg["K"], "tables": cfg["tables"],
        "cases": sorted({r["case"] for r in reports}), "failed": failed, "ok": failed == 0,
        "reports": reports,
    }
    _write(cfg, dump_json(doc))
    return 0 if failed == 0 else EXIT_VALIDATION


COMMANDS = {
    "shortrun": cmd_shortrun, "outputs": cmd_outputs, "longrun": cmd_longrun, "sweep": cmd_sweep,
    "optimum": cmd_optimum, "pigouvian": cmd_pigouvian, "validate": cmd_validate,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else 0
    try:
        cfg = resolve(args)
        return COMMANDS[args.command](cfg)
    except (ConfigError, ParameterError) as exc:
        print(f"flexbottle: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ConvergenceError as exc:
        print(f"flexbottle: solver did not converge: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE
    except SearchError as exc:
        print(f"flexbottle: validation failure: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
