import json

import numpy as np
import pytest

from herdnoise.experiments import (
    DEFAULTS,
    Q_VALUES,
    ConfigError,
    ExperimentConfig,
    derive_seeds,
    run_experiment,
    splitmix64,
    tq_edges,
)
from herdnoise.tables import read_table, sha256_file, write_table


def test_splitmix64_reference_values():
    # reference outputs of splitmix64 seeded with 0 (Vigna's test vector)
    assert splitmix64(0, 0) == 0xE220A8397B1DCDAF
    assert splitmix64(0, 1) == 0x6E789E6AA1B965F4
    assert splitmix64(0, 2) == 0x06C45D188009454F
    seeds = derive_seeds(1234, 50)
    assert len(set(seeds)) == 50 and all(0 <= s < 2**64 for s in seeds)
    assert derive_seeds(1234, 3) == seeds[:3]


def test_tq_edges_are_decade_anchored():
    e = tq_edges(10)
    assert e[0] == 0.5 and np.isclose(e[10], 10.0) and np.isclose(e[20], 100.0)
    assert np.all(np.diff(e) > 0)
    # every integer interval falls strictly inside one bin
    assert np.histogram(np.arange(1, 1000), e)[0].sum() == 999


def test_config_validation():
    with pytest.raises(ConfigError):
        ExperimentConfig("fig99")
    with pytest.raises(ConfigError):
        ExperimentConfig("fig1", n_realizations=0)
    with pytest.raises(ConfigError):
        ExperimentConfig("fig1", {"bogus": 1}).resolved()
    with pytest.raises(ConfigError):
        ExperimentConfig("fig6", {"params": {"Delta_typo": 1}}).resolved()
    with pytest.raises(ConfigError):
        ExperimentConfig("fig6", {"Delta": 1.5 / 390}).resolved()
    with pytest.raises(ConfigError):
        ExperimentConfig("fig6", {"compositions": ["e"]}).resolved()
    with pytest.raises(ConfigError):
        ExperimentConfig("fig8").resolved()


def test_resolved_merges_params():
    s = ExperimentConfig("fig6", {"params": {"H": 300.0}}, n_realizations=2).resolved()
    assert s["params"] == {"H": 300.0} and s["n_realizations"] == 2
    assert DEFAULTS["fig6"]["params"] == {}
    assert s["q_values"] == Q_VALUES


def test_config_from_file(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"experiment_id": "fig1", "overrides": {"n_samples": 10},
                             "base_seed": 5}))
    cfg = ExperimentConfig.from_file(p, output_dir=str(tmp_path))
    assert cfg.base_seed == 5 and cfg.output_dir == str(tmp_path)


def test_table_round_trip(tmp_path):
    x = np.array([1e-300, 0.1, 1 / 3, 12345.678])
    path = write_table(tmp_path / "t.csv", ["x", "density"], [x, x * 2],
                       {"q": 2.0, "seeds": [1, 2], "note": "abc"})
    lines = path.read_text().splitlines()
    assert lines[0].startswith("# ") and "x,density" in lines
    header, cols = read_table(path)
    assert header == {"q": 2.0, "seeds": [1, 2], "note": "abc"}
    assert np.array_equal(cols["x"], x) and np.array_equal(cols["density"], 2 * x)
    empty = write_table(tmp_path / "e.csv", ["a"], [np.array([])])
    assert read_table(empty)[1]["a"].size == 0


SMALL_FIG6 = {"n_days": 30.0, "compositions": ["a", "b"], "q_values": [1.5, 3.0]}


def test_fig6_outputs_and_determinism(tmp_path):
    runs = []
    for k in range(2):
        cfg = ExperimentConfig("fig6", SMALL_FIG6, n_realizations=2, base_seed=7,
                               output_dir=str(tmp_path / f"run{k}"))
        runs.append(run_experiment(cfg))
    a, b = runs
    names = sorted(a.outputs)
    assert names == ["fig6_a_q1.5.csv", "fig6_a_q3.csv", "fig6_b_q1.5.csv", "fig6_b_q3.csv"]
    assert a.outputs == b.outputs
    assert a.seeds == b.seeds == derive_seeds(7, 2)
    root = tmp_path / "run0" / "fig6"
    man = json.loads((root / "manifest.json").read_text())
    assert man["outputs"] == a.outputs and man["config"]["n_days"] == 30.0
    for name, digest in a.outputs.items():
        assert sha256_file(root / name) == digest
    header, cols = read_table(root / "fig6_b_q1.5.csv")
    assert list(cols) == ["Tq_scaled", "density"] and header["q"] == 1.5
    assert header["seeds"] == a.seeds


def test_different_seed_changes_outputs(tmp_path):
    m = [run_experiment(ExperimentConfig("fig6", SMALL_FIG6, n_realizations=1, base_seed=s,
                                         output_dir=str(tmp_path / str(s)))) for s in (1, 2)]
    assert m[0].outputs != m[1].outputs


def test_parallel_matches_serial(tmp_path):
    kw = dict(overrides=SMALL_FIG6, n_realizations=2, base_seed=3)
    a = run_experiment(ExperimentConfig("fig6", output_dir=str(tmp_path / "s"), **kw))
    b = run_experiment(ExperimentConfig("fig6", output_dir=str(tmp_path / "p"), workers=2, **kw))
    assert a.outputs == b.outputs


def test_manifest_reproduces_run(tmp_path):
    a = run_experiment(ExperimentConfig("fig1", {"n_samples": 20000}, base_seed=11,
                                        output_dir=str(tmp_path / "a")))
    man = json.loads((tmp_path / "a" / "fig1" / "manifest.json").read_text())
    cfg = ExperimentConfig("fig1", man["config"], base_seed=man["base_seed"],
                           output_dir=str(tmp_path / "b"))
    assert run_experiment(cfg).outputs == a.outputs
    assert sorted(a.outputs) == ["fig1_pdf.csv", "fig1_psd.csv"]


def test_failure_removes_partial_outputs(tmp_path):
    # the broken power-law fit runs after the per-composition CSVs are written
    cfg = ExperimentConfig("fig3", {"n_days": 20.0, "compositions": ["c"], "H_scan": [],
                                    "psd_segments": 1, "psd_break_fit": [1e8, 1e9]},
                           output_dir=str(tmp_path))
    with pytest.raises(ValueError):
        run_experiment(cfg)
    assert not (tmp_path / "fig3").exists()


def test_failure_keeps_preexisting_directory(tmp_path):
    (tmp_path / "fig3").mkdir()
    (tmp_path / "fig3" / "keep.txt").write_text("x")
    cfg = ExperimentConfig("fig3", {"n_days": 20.0, "compositions": ["c"], "H_scan": [],
                                    "psd_segments": 1, "psd_break_fit": [1e8, 1e9]},
                           output_dir=str(tmp_path))
    with pytest.raises(ValueError):
        run_experiment(cfg)
    assert [p.name for p in (tmp_path / "fig3").iterdir()] == ["keep.txt"]


def test_fig8_with_synthetic_prices(tmp_path):
    rng = np.random.default_rng(0)
    paths = []
    for name in ("S1", "S2"):
        n = 1500
        d = np.datetime64("2001-01-01") + np.arange(n)
        c = 50 * np.exp(np.cumsum(rng.standard_t(3, n) * 0.01))
        lines = ["Date,Close"] + [f"{x},{float(y)!r}" for x, y in zip(d.astype(str), c)]
        p = tmp_path / f"{name}.csv"
        p.write_text("\n".join(lines) + "\n")
        paths.append(str(p))
    cfg = ExperimentConfig("fig8", {"inputs": paths, "n_days": 200.0, "q_values": [1.5, 2.0]},
                           output_dir=str(tmp_path / "out"))
    m = run_experiment(cfg)
    assert "fig8_returns.csv" in m.outputs and "fig8_empirical_q2.csv" in m.outputs
    assert m.metrics["assets"] == 2 and m.metrics["n_returns"] == 2 * 1499


def test_oracles_experiment(tmp_path):
    m = run_experiment(ExperimentConfig("oracles", {"names": ["inverse_cdf_slopes"]},
                                        output_dir=str(tmp_path)))
    report = json.loads((tmp_path / "oracles" / "oracles.json").read_text())
    assert report[0]["name"] == "inverse_cdf_slopes" and report[0]["passed"]
    assert m.metrics["all_passed"]
