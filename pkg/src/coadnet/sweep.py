"""Temperature sweeps of the stochastic network dynamics.

A sweep runs one cell per ``(temperature, replica)``. Each cell has its
own seed derived from the base seed and its grid position, so rows do not
depend on execution order or on how cells are split across workers.
Cells are integrated together in batches; batched integration is bitwise
identical to integrating each cell alone.
"""

from __future__ import annotations

import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.signal import find_peaks

from .graph import network_from_dict
from .integrate import casimir_drift, casimir_scale, integrate_batch, load_state
from .model import make_model
from .statmech import Temperature, observables_from_series, uniform_sphere

DRIFT_FLAG = 1e-2


class TooFewPoints(ValueError):
    pass


@dataclass
class SweepConfig:
    """Everything needed to reproduce a sweep.

    ``temperatures`` is an explicit list; :meth:`geometric_grid` builds one.
    ``init`` is ``{"policy": "random"}``, ``{"policy": "near_ferro",
    "axis": a, "noise": eps}`` or ``{"policy": "file", "path": p}``.
    ``radius`` sets the rigid-body orbit ``|Pi_i|``; ``c1`` and ``c2`` set
    the heavy-top orbit ``Pi_i.Gamma_i = c1``, ``|Gamma_i|^2 = c2``.
    """

    model: str
    network: dict
    temperatures: list
    theta: float = 1.0
    steps: int = 10000
    dt: float = 1e-2
    burn_in: float = 0.5
    record_every: int = 10
    replicas: int = 1
    base_seed: int = 0
    init: dict = field(default_factory=lambda: {"policy": "random"})
    radius: float = 1.0
    c1: float = 1.0
    c2: float = 1.0
    projection: bool = True
    annealed: bool = False
    batch_size: int = 64

    def __post_init__(self):
        self.model = self.model.replace("-", "_").lower()
        if self.model not in ("rigid_body", "heavy_top"):
            raise ValueError(f"unknown model {self.model!r}")
        temps = np.asarray(self.temperatures, dtype=float)
        if temps.ndim != 1 or temps.size == 0:
            raise ValueError("temperature grid must be a non-empty list")
        if np.any(temps <= 0) or np.any(np.diff(temps) <= 0):
            raise ValueError("temperature grid must be strictly positive and increasing")
        self.temperatures = [float(t) for t in temps]
        if self.replicas < 1:
            raise ValueError("replicas must be >= 1")
        if not 0 <= self.burn_in < 1:
            raise ValueError("burn_in must lie in [0, 1)")
        if self.steps < 1 or self.record_every < 1 or self.dt <= 0:
            raise ValueError("steps, record_every and dt must be positive")
        if self.theta <= 0:
            raise ValueError("theta must be positive")
        if self.model == "heavy_top" and self.c2 <= 0:
            raise ValueError("c2 must be positive")

    @staticmethod
    def geometric_grid(start, stop, num):
        return [float(t) for t in np.geomspace(start, stop, int(num))]

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        temps = d.pop("temperatures")
        if isinstance(temps, dict):
            if temps.get("spacing", "geometric") == "geometric":
                temps = cls.geometric_grid(temps["start"], temps["stop"], temps["num"])
            else:
                temps = [float(t) for t in np.linspace(temps["start"], temps["stop"], int(temps["num"]))]
        return cls(temperatures=temps, **d)

    def to_dict(self):
        return asdict(self)


def cell_seed(base_seed, t_index, replica) -> int:
    """Seed of one sweep cell, keyed by its grid position."""
    ss = np.random.SeedSequence(int(base_seed), spawn_key=(int(t_index), int(replica)))
    return int(ss.generate_state(1, np.uint64)[0])


def initial_state(model, init, seed, radius=1.0, c1=1.0, c2=1.0, temperature=1.0):
    """Draw an initial condition on the prescribed orbit.

    ``init["policy"]`` is ``"random"`` (uniform on the sphere),
    ``"near_ferro"`` (all nodes along ``init["axis"]`` plus Gaussian
    noise of size ``init["noise"]``, renormalised), ``"file"`` (a state
    checkpoint at ``init["path"]``) or ``"explicit"`` (``init["state"]``).
    Heavy-top positions lie on ``|Gamma|^2 = c2``; momenta are
    ``(c1/c2) Gamma`` plus a fibre component of size ``sqrt(temperature)``.
    """
    rng = np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(1,)))
    n = model.net.n
    policy = init.get("policy", "random")
    if policy in ("file", "explicit"):
        if policy == "file":
            _, state, _ = load_state(init["path"])
        else:
            state = np.asarray(init["state"], dtype=float)
        if state.shape != model.state_shape():
            raise ValueError(f"initial state has shape {state.shape}, expected {model.state_shape()}")
        return state
    heavy = model.kind == "heavy_top"
    r = np.sqrt(c2) if heavy else radius
    if policy == "random":
        vec = uniform_sphere(rng, n, r)
    elif policy == "near_ferro":
        axis = int(init.get("axis", 2))
        vec = np.zeros((n, 3))
        vec[:, axis] = 1.0
        vec += float(init.get("noise", 0.05)) * rng.standard_normal((n, 3))
        vec = r * vec / np.linalg.norm(vec, axis=1, keepdims=True)
    else:
        raise ValueError(f"unknown initial condition policy {policy!r}")
    if not heavy:
        return vec
    gam = vec
    y = np.sqrt(temperature) * rng.standard_normal((n, 3))
    y -= np.sum(y * gam, axis=1, keepdims=True) * gam / c2
    return np.stack(((c1 / c2) * gam + y, gam))


@dataclass
class SweepResult:
    """Per-cell rows and per-temperature aggregates."""

    config: dict
    rows: list
    aggregates: list
    timing: dict = field(default_factory=dict)

    ROW_FIELDS = (
        "T", "replica", "seed", "sigma", "m1", "m2", "m3", "magnitude", "abs1", "abs2", "abs3",
        "mean_norm", "energy_mean", "energy_var", "samples", "casimir_drift", "flagged", "failed_step",
    )

    def column(self, name, reduce="mean"):
        """Aggregated column over the temperature grid."""
        return np.array([a[f"{name}_{reduce}"] for a in self.aggregates])

    @property
    def temperatures(self):
        return np.array([a["T"] for a in self.aggregates])

    def to_csv(self, path):
        lines = [",".join(self.ROW_FIELDS)]
        for row in self.rows:
            lines.append(",".join(_fmt(row[k]) for k in self.ROW_FIELDS))
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")

    def to_json(self, path):
        data = {"config": self.config, "aggregates": self.aggregates, "timing": self.timing}
        Path(path).write_text(json.dumps(data, indent=2), encoding="utf-8")


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".17g")


def _run_cells(cfg_dict, cells, init_states=None):
    """Integrate a batch of cells; returns (rows, final states)."""
    cfg = SweepConfig(**cfg_dict)
    net = network_from_dict(cfg.network)
    model = make_model(cfg.model, net)
    seeds = [c["seed"] for c in cells]
    temps = [Temperature(c["T"], cfg.theta) for c in cells]
    if init_states is None:
        s0 = np.stack([
            initial_state(model, cfg.init, c["seed"], cfg.radius, cfg.c1, cfg.c2, c["T"]) for c in cells
        ])
    else:
        s0 = np.asarray(init_states)
    out = integrate_batch(
        model, s0, cfg.dt, cfg.steps, cfg.theta, [t.sigma for t in temps], seeds,
        cfg.record_every, cfg.projection, store_states=False, raise_on_nonfinite=False,
    )
    radius = cfg.radius if cfg.model == "rigid_body" else np.sqrt(cfg.c2)
    scale = casimir_scale(model, s0)
    rows = []
    for b, c in enumerate(cells):
        obs = observables_from_series(out["magnetisation"][b], out["energy"][b], cfg.burn_in, radius)
        drift = float(np.max(casimir_drift(out["casimirs"][b], scale[b])))
        failed = int(out["failed_step"][b])
        rows.append({
            "T": c["T"], "replica": c["replica"], "seed": c["seed"], "sigma": temps[b].sigma,
            "m1": obs.magnetisation[0], "m2": obs.magnetisation[1], "m3": obs.magnetisation[2],
            "magnitude": obs.magnitude,
            "abs1": obs.mean_abs[0], "abs2": obs.mean_abs[1], "abs3": obs.mean_abs[2],
            "mean_norm": obs.mean_norm, "energy_mean": obs.mean_energy,
            "energy_var": obs.energy_variance, "samples": obs.sample_count,
            "casimir_drift": drift, "flagged": bool(drift > DRIFT_FLAG or failed > 0),
            "failed_step": failed,
        })
    return rows, out["final"]


def _aggregate(cfg, rows):
    aggs = []
    for T in cfg.temperatures:
        sel = [r for r in rows if r["T"] == T and r["failed_step"] == 0]
        agg = {"T": T, "cells": len(sel)}
        for name in ("m1", "m2", "m3", "magnitude", "abs1", "abs2", "abs3", "mean_norm", "energy_mean"):
            vals = np.array([r[name] for r in sel], dtype=float)
            agg[f"{name}_mean"] = float(vals.mean()) if vals.size else float("nan")
            agg[f"{name}_std"] = float(vals.std()) if vals.size else float("nan")
            agg[f"{name}_median"] = float(np.median(vals)) if vals.size else float("nan")
        agg["max_casimir_drift"] = float(max((r["casimir_drift"] for r in sel), default=float("nan")))
        aggs.append(agg)
    return aggs


def default_workers():
    env = os.environ.get("COADNET_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def _map(jobs, workers):
    if workers <= 1 or len(jobs) <= 1:
        return [_run_cells(*j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_cells, *zip(*jobs)))


def run_sweep(config: SweepConfig, workers: int | None = None) -> SweepResult:
    """Run every ``(T, replica)`` cell and aggregate per temperature.

    Independent mode draws a fresh initial condition per cell. Annealed
    mode cools from the highest temperature down, starting each
    temperature from the final states of the previous one (per replica).
    A cell that becomes non-finite is kept with ``failed_step`` set and
    excluded from the aggregates.
    """
    workers = default_workers() if workers is None else max(1, int(workers))
    cfg_dict = config.to_dict()
    t0 = time.perf_counter()
    cells = [
        {"T": T, "replica": rep, "seed": cell_seed(config.base_seed, k, rep)}
        for k, T in enumerate(config.temperatures)
        for rep in range(config.replicas)
    ]
    rows = []
    if not config.annealed:
        size = max(1, int(config.batch_size))
        if workers > 1:
            size = min(size, max(1, -(-len(cells) // workers)))
        jobs = [(cfg_dict, cells[k:k + size]) for k in range(0, len(cells), size)]
        for part, _ in _map(jobs, workers):
            rows.extend(part)
    else:
        states = None
        for k in reversed(range(len(config.temperatures))):
            batch = cells[k * config.replicas:(k + 1) * config.replicas]
            part, states = _run_cells(cfg_dict, batch, states)
            rows.extend(part)
        rows.sort(key=lambda r: (r["T"], r["replica"]))
    wall = time.perf_counter() - t0
    return SweepResult(cfg_dict, rows, _aggregate(config, rows),
                       {"wall_seconds": wall, "workers": workers, "cells": len(cells)})


# -- transition detection -----------------------------------------------------


@dataclass
class Transition:
    """A maximum of ``|dm/dT|``; ``uncertainty`` is the local grid spacing."""

    T: float
    uncertainty: float
    slope: float
    prominence: float
    strong: bool


def detect_transitions(temperatures, values=None, component="magnitude", reduce="mean"):
    """Locate maxima of ``|dm/dT|`` by central differences on the grid.

    Parameters
    ----------
    temperatures : array_like or SweepResult
        Grid, or a sweep result whose aggregate ``component`` is used.
    values : array_like, optional
        Series on the grid (required unless a SweepResult is given).
    component : str
        ``"magnitude"``, ``"m1".."m3"`` or ``"abs1".."abs3"`` for sweep results.

    Returns
    -------
    list of Transition
        In increasing temperature. A peak is strong when its prominence is at
        least a quarter of the largest slope and its height at least twice the
        median slope. Without any interior peak the interior slope maximum is
        returned, marked weak.

    Raises
    ------
    TooFewPoints
        For fewer than five grid points.
    """
    if isinstance(temperatures, SweepResult):
        res = temperatures
        temperatures = res.temperatures
        values = res.column(component, reduce)
    t = np.asarray(temperatures, dtype=float)
    v = np.asarray(values, dtype=float)
    if t.size < 5:
        raise TooFewPoints("need at least five grid points")
    g = np.abs(np.gradient(v, t))
    spacing = np.gradient(t)
    gmax = float(g.max())
    med = float(np.median(g))
    peaks, props = find_peaks(g, prominence=0.0)
    out = []
    for p, prom in zip(peaks, props["prominences"]):
        if prom <= 1e-9 * gmax:
            continue  # rounding ripple on a flat slope
        strong = bool(gmax > 0 and prom >= 0.25 * gmax and g[p] >= 2.0 * med)
        out.append(Transition(float(t[p]), float(spacing[p]), float(g[p]), float(prom), strong))
    if not out:
        p = 1 + int(np.argmax(g[1:-1]))
        out.append(Transition(float(t[p]), float(spacing[p]), float(g[p]), 0.0, False))
    return out


def strong_transitions(*args, **kwargs):
    return [tr for tr in detect_transitions(*args, **kwargs) if tr.strong]


def dominance_bands(temperatures, components, disorder_threshold):
    """Split the grid into bands by dominant component.

    ``components`` has shape ``(n_T, 3)`` (non-negative, e.g. mean absolute
    magnetisation). A grid point is ``"disordered"`` when its largest
    component is below ``disorder_threshold``; otherwise it is labelled by
    the axis index of that component. Returns ``(label, T_low, T_high,
    count)`` for each maximal run of equal labels, in increasing ``T``.
    """
    t = np.asarray(temperatures, dtype=float)
    c = np.asarray(components, dtype=float)
    labels = ["disordered" if row.max() < disorder_threshold else int(np.argmax(row)) for row in c]
    bands = []
    start = 0
    for k in range(1, len(labels) + 1):
        if k == len(labels) or labels[k] != labels[start]:
            bands.append((labels[start], float(t[start]), float(t[k - 1]), k - start))
            start = k
    return bands
