import json

import numpy as np
import pytest

from coadnet.graph import network_from_dict
from coadnet.integrate import IntegratorConfig, dump_state, run
from coadnet.model import make_model
from coadnet.statmech import Temperature, observables_from_trajectory
from coadnet.sweep import (
    SweepConfig,
    TooFewPoints,
    cell_seed,
    detect_transitions,
    dominance_bands,
    initial_state,
    run_sweep,
    strong_transitions,
)

NET = {"lattice": {"width": 3, "height": 3, "periodic": True}, "inertia": [1, 2, 3], "coupling": [0.9, 1.8, 2.7]}


def _cfg(**kw):
    base = dict(model="rigid_body", network=NET, temperatures=[0.2, 0.5, 1.0], steps=300, dt=1e-2,
                record_every=10, replicas=2, base_seed=5)
    base.update(kw)
    return SweepConfig(**base)


def test_config_validation():
    with pytest.raises(ValueError):
        _cfg(temperatures=[0.5, 0.2])
    with pytest.raises(ValueError):
        _cfg(temperatures=[0.0, 0.2])
    with pytest.raises(ValueError):
        _cfg(model="pendulum")
    with pytest.raises(ValueError):
        _cfg(replicas=0)


def test_config_temperature_ranges():
    c = SweepConfig.from_dict({"model": "heavy-top", "network": NET,
                               "temperatures": {"start": 0.1, "stop": 1.0, "num": 3}})
    np.testing.assert_allclose(c.temperatures, [0.1, np.sqrt(0.1), 1.0])
    assert c.model == "heavy_top"
    lin = SweepConfig.from_dict({"model": "rigid_body", "network": NET,
                                 "temperatures": {"start": 0.1, "stop": 1.0, "num": 4, "spacing": "linear"}})
    np.testing.assert_allclose(lin.temperatures, [0.1, 0.4, 0.7, 1.0])


def test_cell_seeds_are_distinct_and_stable():
    seeds = {cell_seed(0, t, r) for t in range(20) for r in range(4)}
    assert len(seeds) == 80
    assert cell_seed(3, 2, 1) == cell_seed(3, 2, 1)


def test_single_cell_equals_direct_run():
    cfg = _cfg(temperatures=[0.4], replicas=1)
    res = run_sweep(cfg, workers=1)
    assert len(res.rows) == 1
    model = make_model("rigid_body", network_from_dict(NET))
    seed = cell_seed(5, 0, 0)
    s0 = initial_state(model, {"policy": "random"}, seed)
    icfg = IntegratorConfig(dt=1e-2, steps=300, theta=1.0, sigma=Temperature(0.4).sigma, seed=seed,
                            record_every=10, projection=True)
    obs = observables_from_trajectory(run(model, s0, icfg), burn_in=cfg.burn_in)
    row = res.rows[0]
    assert [row["m1"], row["m2"], row["m3"]] == obs.magnetisation.tolist()
    assert row["energy_mean"] == obs.mean_energy


def test_csv_reproducible_and_layout_independent(tmp_path):
    cfg = _cfg()
    a, b = run_sweep(cfg, workers=1), run_sweep(cfg, workers=1)
    a.to_csv(tmp_path / "a.csv")
    b.to_csv(tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    c = run_sweep(_cfg(batch_size=1), workers=1)
    c.to_csv(tmp_path / "c.csv")
    assert (tmp_path / "c.csv").read_bytes() == (tmp_path / "a.csv").read_bytes()


def test_parallel_matches_serial(tmp_path):
    cfg = _cfg()
    run_sweep(cfg, workers=1).to_csv(tmp_path / "serial.csv")
    run_sweep(cfg, workers=3).to_csv(tmp_path / "parallel.csv")
    assert (tmp_path / "serial.csv").read_bytes() == (tmp_path / "parallel.csv").read_bytes()


def test_rows_and_aggregates(tmp_path):
    res = run_sweep(_cfg(), workers=1)
    assert len(res.rows) == 6
    assert [(r["T"], r["replica"]) for r in res.rows] == [(t, k) for t in (0.2, 0.5, 1.0) for k in (0, 1)]
    for agg in res.aggregates:
        vals = [r["magnitude"] for r in res.rows if r["T"] == agg["T"]]
        assert agg["magnitude_mean"] == pytest.approx(np.mean(vals))
        assert agg["magnitude_std"] == pytest.approx(np.std(vals))
        assert agg["magnitude_median"] == pytest.approx(np.median(vals))
    assert all(r["casimir_drift"] < 1e-12 and not r["flagged"] for r in res.rows)
    res.to_json(tmp_path / "s.json")
    data = json.loads((tmp_path / "s.json").read_text())
    assert data["config"]["temperatures"] == [0.2, 0.5, 1.0]
    assert len(data["aggregates"]) == 3
    res.to_csv(tmp_path / "s.csv")
    header = (tmp_path / "s.csv").read_text().splitlines()[0].split(",")
    assert header[:4] == ["T", "replica", "seed", "sigma"]


def test_drift_is_flagged_without_projection():
    res = run_sweep(_cfg(temperatures=[1.0], replicas=1, dt=2e-2, projection=False), workers=1)
    assert res.rows[0]["casimir_drift"] > 1e-2 and res.rows[0]["flagged"]


def test_heavy_top_sweep_keeps_orbit():
    cfg = _cfg(model="heavy_top", network={**NET, "coupling": 1.0}, c1=0.8, c2=2.0, replicas=1)
    res = run_sweep(cfg, workers=1)
    assert all(r["casimir_drift"] < 1e-12 for r in res.rows)
    assert all(0.0 <= r["magnitude"] <= 1.0 for r in res.rows)


def test_annealed_mode_runs_and_is_deterministic():
    cfg = _cfg(annealed=True)
    a, b = run_sweep(cfg, workers=1), run_sweep(cfg, workers=1)
    assert [r["magnitude"] for r in a.rows] == [r["magnitude"] for r in b.rows]
    assert [r["T"] for r in a.rows] == sorted(r["T"] for r in a.rows)


def test_initial_state_policies(tmp_path):
    net = network_from_dict(NET)
    ht = make_model("heavy_top", net)
    s = initial_state(ht, {"policy": "random"}, 1, c1=0.7, c2=2.0, temperature=0.3)
    cas = ht.casimirs(s)
    np.testing.assert_allclose(cas[:, 0], 0.7, rtol=1e-12)
    np.testing.assert_allclose(cas[:, 1], 2.0, rtol=1e-12)
    rb = make_model("rigid_body", net)
    ferro = initial_state(rb, {"policy": "near_ferro", "axis": 1, "noise": 0.01}, 2, radius=1.5)
    np.testing.assert_allclose(np.linalg.norm(ferro, axis=1), 1.5)
    assert np.all(ferro[:, 1] > 1.4)
    dump_state(tmp_path / "s.json", "rigid_body", ferro)
    np.testing.assert_array_equal(initial_state(rb, {"policy": "file", "path": tmp_path / "s.json"}, 0), ferro)
    with pytest.raises(ValueError):
        initial_state(rb, {"policy": "explicit", "state": np.zeros((2, 3))}, 0)
    with pytest.raises(ValueError):
        initial_state(rb, {"policy": "bogus"}, 0)


def test_detect_linear_series_is_weak():
    t = np.linspace(0.1, 1.0, 10)
    found = detect_transitions(t, 1.0 - t)
    assert len(found) == 1 and not found[0].strong
    assert t[0] < found[0].T < t[-1]


def test_detect_tanh_knee():
    t = np.arange(1.0, 3.0 + 1e-9, 0.05)
    found = strong_transitions(t, np.tanh((2.0 - t) / 0.1))
    assert len(found) == 1
    assert abs(found[0].T - 2.0) <= 0.05 and found[0].uncertainty == pytest.approx(0.05)


def test_detect_three_plateau_series():
    t = np.linspace(0.05, 2.0, 60)
    v = sum(0.3 * (1 - np.tanh((t - tc) / 0.04)) for tc in (0.5, 1.0, 1.5))
    found = strong_transitions(t, v)
    assert len(found) == 3
    est = [tr.T for tr in found]
    assert est == sorted(est)
    np.testing.assert_allclose(est, [0.5, 1.0, 1.5], atol=0.04)


def test_detect_needs_five_points():
    with pytest.raises(TooFewPoints):
        detect_transitions([0.1, 0.2, 0.3, 0.4], [1, 1, 0, 0])


def test_detect_on_sweep_result():
    res = run_sweep(_cfg(temperatures=[0.1, 0.3, 0.5, 0.7, 0.9], replicas=1), workers=1)
    found = detect_transitions(res, component="magnitude")
    assert found and all(0.1 <= tr.T <= 0.9 for tr in found)


def test_dominance_bands():
    t = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6]
    comps = [[0, 0, 0.9], [0, 0.1, 0.8], [0.1, 0.6, 0.2], [0.5, 0.2, 0.1], [0.05, 0.04, 0.03], [0.02, 0.01, 0.03]]
    assert dominance_bands(t, comps, 0.1) == [
        (2, 0.1, 0.2, 2), (1, 0.3, 0.3, 1), (0, 0.4, 0.4, 1), ("disordered", 0.5, 0.6, 2)
    ]
