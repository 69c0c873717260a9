"""Command-line front end.

Usage::

    coadnet simulate   --config run.yaml [--seed N] [--out-dir DIR]
    coadnet equilibria --config eq.yaml
    coadnet stability  --config eq.yaml
    coadnet meanfield  --config mf.yaml
    coadnet sweep      --config sweep.yaml [--threads N]
    coadnet detect     --config detect.yaml

Exit codes: 0 success, 2 configuration error, 3 non-finite state,
4 numerical failure (eigensolver). Every run writes ``manifest.json`` in
the output directory next to its data files.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import json
import os
import sys
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .equilibria import EigenSolverError, momentum_equilibria, position_equilibria, stability
from .graph import GraphError, network_from_dict
from .integrate import IntegratorConfig, NonFiniteState, dump_state, run, write_trajectory_csv
from .model import make_model
from .statmech import meanfield_ht, meanfield_rb
from .sweep import SweepConfig, detect_transitions, initial_state, run_sweep

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NONFINITE = 3
EXIT_NUMERIC = 4

THREADS_ENV = "COADNET_THREADS"


class ConfigError(Exception):
    pass


def _fmt(x):
    return format(float(x), ".17g")


def load_config(path) -> dict:
    """Parse a YAML (or JSON) config file into a mapping."""
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    try:
        data = yaml.safe_load(p.read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse {p}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{p}: expected a mapping at top level")
    return data


def _require(cfg, key, where="config"):
    if key not in cfg or cfg[key] is None:
        raise ConfigError(f"{where} is missing required field '{key}'")
    return cfg[key]


def _write_csv(path, header, rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])


def _write_manifest(out_dir, config, seed, started, outputs):
    manifest = {
        "version": __version__,
        "config": config,
        "seed": seed,
        "started": started,
        "finished": _dt.datetime.now(_dt.timezone.utc).isoformat(),
        "outputs": sorted(Path(os.path.relpath(o, out_dir)).as_posix() for o in outputs) + ["manifest.json"],
    }
    (Path(out_dir) / "manifest.json").write_text(json.dumps(manifest, indent=2), encoding="utf-8")


# -- subcommands --------------------------------------------------------------


def cmd_simulate(cfg, out_dir):
    model = make_model(_require(cfg, "model"), network_from_dict(_require(cfg, "network")))
    icfg = IntegratorConfig(**_require(cfg, "integrator"))
    init = dict(cfg.get("initial", {"policy": "random"}))
    s0 = initial_state(model, init, icfg.seed, cfg.get("radius", 1.0), cfg.get("c1", 1.0),
                       cfg.get("c2", 1.0), cfg.get("temperature", 1.0))
    traj = run(model, s0, icfg, store_states=False)
    outputs = [out_dir / "trajectory.csv", out_dir / "final_state.json"]
    write_trajectory_csv(traj, outputs[0])
    dump_state(outputs[1], model.kind, traj.final, icfg.steps * icfg.dt)
    return outputs, icfg.seed


def _equilibria(cfg, with_stability):
    net = network_from_dict(_require(cfg, "network"))
    coupling = _require(cfg, "coupling")
    if coupling == "momentum":
        recs = momentum_equilibria(net, float(cfg.get("casimir", 1.0)))
    elif coupling == "position":
        lambda1 = _require(cfg, "lambda1")
        recs = position_equilibria(net, float(lambda1), float(cfg.get("casimir", 1.0)))
    else:
        raise ConfigError("coupling must be 'momentum' or 'position'")
    if with_stability:
        sel = cfg.get("records", "all")
        if sel == "all":
            chosen = recs
        elif sel == "extremal":
            chosen = [r for r in recs if r.extremal]
        else:
            chosen = [recs[int(k)] for k in sel]
        for r in chosen:
            stability(net, r)
    return coupling, recs


def _records_out(out_dir, coupling, recs):
    outputs = [out_dir / "records.json", out_dir / "records.csv"]
    outputs[0].write_text(json.dumps([r.to_dict() for r in recs]), encoding="utf-8")
    key = "lambda_e" if coupling == "momentum" else "lambda2"
    rows = []
    for r in recs:
        x = r.eigenvalue if coupling == "momentum" else r.lambda2
        ab = "" if r.spectral_abscissa is None else _fmt(r.spectral_abscissa)
        rows.append([_fmt(x), ab, r.multiplicity, r.cls])
    _write_csv(outputs[1], [key, "abscissa", "multiplicity", "class"], rows)
    return outputs


def cmd_equilibria(cfg, out_dir):
    coupling, recs = _equilibria(cfg, False)
    return _records_out(out_dir, coupling, recs), None


def cmd_stability(cfg, out_dir):
    coupling, recs = _equilibria(cfg, True)
    return _records_out(out_dir, coupling, recs), None


def _meanfield_rows(cfg, temps):
    kind = _require(cfg, "model").replace("-", "_")
    common = dict(
        inertia=cfg.get("inertia", 1.0), coupling=cfg.get("coupling", 1.0),
        mc_samples=int(cfg.get("mc_samples", 20000)), damping=float(cfg.get("damping", 0.5)),
        tol=float(cfg.get("tol", 1e-8)), max_iter=int(cfg.get("max_iter", 5000)),
        seed=int(cfg.get("seed", 0)),
    )
    rows = []
    for T in temps:
        if kind == "rigid_body":
            res = meanfield_rb(radius=float(cfg.get("radius", 1.0)), beta=1.0 / T, **common)
        elif kind == "heavy_top":
            res = meanfield_ht(c1=float(cfg.get("c1", 1.0)), c2=float(cfg.get("c2", 1.0)), beta=1.0 / T,
                               fiber_samples=int(cfg.get("fiber_samples", 64)), **common)
        else:
            raise ConfigError(f"unknown model {kind!r}")
        rows.append([float(T), *map(float, res.value), int(res.converged), res.iterations,
                     float(np.linalg.norm(res.stderr))])
    return rows


def _temperature_list(spec):
    if isinstance(spec, dict):
        return SweepConfig.from_dict({"model": "rigid_body", "network": {}, "temperatures": spec}).temperatures
    return [float(t) for t in spec]


MF_HEADER = ["T", "c1", "c2", "c3", "converged", "iterations", "stderr"]


def cmd_meanfield(cfg, out_dir):
    temps = _temperature_list(_require(cfg, "temperatures"))
    path = out_dir / "meanfield.csv"
    _write_csv(path, MF_HEADER, _meanfield_rows(cfg, temps))
    return [path], cfg.get("seed", 0)


def _one_sweep(sweep_cfg, mf_cfg, out_dir, workers):
    out_dir.mkdir(parents=True, exist_ok=True)
    conf = SweepConfig.from_dict(sweep_cfg)
    res = run_sweep(conf, workers=workers)
    outputs = [out_dir / "sweep.csv", out_dir / "sweep.json"]
    res.to_csv(outputs[0])
    res.to_json(outputs[1])
    if mf_cfg is not None:
        mf = dict(mf_cfg)
        for key in ("model", "radius", "c1", "c2"):
            mf.setdefault(key, sweep_cfg.get(key, 1.0 if key != "model" else None))
        net = sweep_cfg.get("network", {})
        mf.setdefault("inertia", net.get("inertia", 1.0))
        mf.setdefault("coupling", net.get("coupling", 1.0))
        path = out_dir / "meanfield.csv"
        _write_csv(path, MF_HEADER, _meanfield_rows(mf, conf.temperatures))
        outputs.append(path)
    return outputs


def cmd_sweep(cfg, out_dir, workers):
    base = dict(_require(cfg, "sweep"))
    mf = cfg.get("meanfield")
    variants = cfg.get("variants")
    outputs = []
    if not variants:
        outputs += _one_sweep(base, mf, out_dir, workers)
    else:
        for var in variants:
            var = dict(var)
            name = str(_require(var, "name", "variant"))
            merged = {**base, **{k: v for k, v in var.items() if k != "name"}}
            outputs += _one_sweep(merged, mf, out_dir / name, workers)
    return outputs, base.get("base_seed", 0)


def cmd_detect(cfg, out_dir):
    src = Path(_require(cfg, "input"))
    if not src.is_file():
        raise ConfigError(f"input file not found: {src}")
    component = cfg.get("component", "magnitude")
    reduce = cfg.get("reduce", "mean")
    data = json.loads(src.read_text(encoding="utf-8"))
    aggs = data["aggregates"]
    t = [a["T"] for a in aggs]
    v = [a[f"{component}_{reduce}"] for a in aggs]
    found = detect_transitions(t, v)
    path = out_dir / "transitions.csv"
    _write_csv(path, ["T", "uncertainty", "slope", "prominence", "strong"],
               [[tr.T, tr.uncertainty, tr.slope, tr.prominence, int(tr.strong)] for tr in found])
    return [path], None


# -- entry point --------------------------------------------------------------


def build_parser():
    parser = argparse.ArgumentParser(prog="coadnet", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("simulate", "equilibria", "stability", "meanfield", "sweep", "detect"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="YAML or JSON config file")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--threads", type=int, default=None,
                       help=f"worker processes (default: ${THREADS_ENV} or CPU count)")
        p.add_argument("--out-dir", default=".", help="directory for output files")
    return parser


def _apply_seed(command, cfg, seed):
    if seed is None:
        return
    if command == "simulate":
        cfg.setdefault("integrator", {})["seed"] = seed
    elif command == "sweep":
        cfg.setdefault("sweep", {})["base_seed"] = seed
    elif command == "meanfield":
        cfg["seed"] = seed


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    started = _dt.datetime.now(_dt.timezone.utc).isoformat()
    try:
        cfg = load_config(args.config)
        _apply_seed(args.command, cfg, args.seed)
        out_dir = Path(args.out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        threads = args.threads
        if threads is None and os.environ.get(THREADS_ENV):
            threads = int(os.environ[THREADS_ENV])
        if args.command == "sweep":
            outputs, seed = cmd_sweep(cfg, out_dir, threads)
        else:
            handler = {
                "simulate": cmd_simulate, "equilibria": cmd_equilibria, "stability": cmd_stability,
                "meanfield": cmd_meanfield, "detect": cmd_detect,
            }[args.command]
            outputs, seed = handler(cfg, out_dir)
        _write_manifest(out_dir, cfg, seed, started, outputs)
    except (ConfigError, GraphError, ValueError, KeyError, TypeError) as exc:
        print(f"coadnet: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NonFiniteState as exc:
        print(f"coadnet: {exc}", file=sys.stderr)
        return EXIT_NONFINITE
    except (EigenSolverError, np.linalg.LinAlgError) as exc:
        print(f"coadnet: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
