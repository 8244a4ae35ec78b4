"""Figure-level reproduction runs driven by small JSON-able configs.

Every experiment id has a table of defaults (``DEFAULTS``); a config
overrides entries of that table. A run simulates ``n_realizations``
independent realizations, reduces them to fixed-bin histograms or averaged
spectra, writes plot-ready CSVs into ``<output_dir>/<experiment_id>/`` and a
``manifest.json`` describing how to regenerate them. Fit ranges used by the
reported metrics are part of the defaults, so they are recorded with every
run instead of being chosen by eye.

Seeds: realization ``k`` uses ``splitmix64(base_seed, k)``.
"""
from __future__ import annotations

import copy
import json
import math
import shutil
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from . import __version__
from ._accel import USING_NUMBA
from .ingest import ingest_files
from .market import CompositionFlags, MarketParams, simulate_market
from .oracles import run_oracles
from .sde import PowerLawSdeSpec, StepControl, one_over_f_spec, predicted_beta, \
    psd_validity_range, simulate_sde
from .stats import estimate_psd, extract_threshold_intervals, fit_broken_power_law, \
    fit_power_law_slope, ks_two_sample
from .tables import sha256_file, write_table

Q_VALUES = [1.5, 2.0, 2.5, 3.0, 5.0, 10.0, 15.0]
MINUTE = 1.0 / 390.0



class ConfigError(ValueError):
    pass


DEFAULTS: Dict[str, dict] = {
    "fig1": {
        "n_realizations": 1,
        "x_bound": 1e5, "n_samples": 10**7, "sample_dt": 2e-3,
        "kappa": 0.05, "max_step": 1e-3,
        "psd_segments": 10, "bins_per_decade": 10,
        "pdf_fit": [10.0, 1000.0], "psd_fit": [0.1, 100.0],
    },
    "sde_grid": {
        "n_realizations": 1,
        "n_samples": 10**7, "kappa": 0.05, "psd_segments": 10, "bins_per_decade": 10,
        "cases": [
            {"eta": 2.5, "lam": 3.0, "x_min": 1.0, "x_max": 100.0, "sample_dt": 1e-4,
             "pdf_fit": [2.0, 30.0], "psd_fit": [3.0, 300.0]},
            {"eta": 2.5, "lam": 4.0, "x_min": 1.0, "x_max": 1000.0, "sample_dt": 1e-4,
             "pdf_fit": [2.0, 200.0], "psd_fit": [3.0, 300.0]},
            {"eta": 1.5, "lam": 3.0, "x_min": 1.0, "x_max": 1e5, "sample_dt": 2e-3,
             "pdf_fit": [10.0, 1000.0], "psd_fit": [1.0, 30.0]},
        ],
    },
    "fig3": {
        "n_realizations": 2, "n_days": 2e5, "Delta": MINUTE, "params": {},
        "compositions": ["a", "b", "c"], "kappa": 0.05,
        "pdf_bins_per_decade": 10, "psd_segments": 16, "psd_bins_per_decade": 5,
        "pdf_compare": ["b", "c"], "pdf_compare_range": [3.0, 50.0],
        "psd_break_composition": "c", "psd_break_fit": [8e-4, 19.5],
        "H_scan": [1000.0, 3000.0],
    },
    "fig4": {
        "n_realizations": 4, "n_days": 2e5, "Delta": 1.0, "params": {},
        "compositions": ["a", "b", "c", "d"], "kappa": 0.05,
        "pdf_bins_per_decade": 10, "psd_segments": 4, "psd_bins_per_decade": 5,
        "tail_composition": "d", "tail_fit": [2.0, 20.0],
    },
    "fig6": {
        "n_realizations": 4, "n_days": 2e5, "Delta": MINUTE, "params": {},
        "compositions": ["a", "b", "c", "d"], "q_values": Q_VALUES, "kappa": 0.05,
        "bins_per_decade": 10,
        "powerlaw_fit_samples": [10.0, 1e4], "tail_decade_scaled": [1.0, 10.0],
    },
    "fig7": {
        "n_realizations": 4, "n_days": 2e5, "Delta": 1.0, "params": {},
        "compositions": ["a", "b", "c", "d"], "q_values": Q_VALUES, "kappa": 0.05,
        "bins_per_decade": 10,
        "powerlaw_fit_samples": [3.0, 300.0], "tail_decade_scaled": [1.0, 10.0],
        "ks_composition": "b", "ks_pair": [2.0, 3.0],
    },
    "fig8": {
        "n_realizations": 1, "n_days": 2e5, "Delta": 1.0, "params": {},
        "inputs": [], "date_col": "Date", "close_col": "Close",
        "composition": "d", "q_values": [1.5, 2.0, 2.5, 3.0], "kappa": 0.05,
        "bins_per_decade": 10,
    },
    "oracles": {"n_realizations": 1, "names": None},
}
EXPERIMENT_IDS = tuple(DEFAULTS)


# --------------------------------------------------------------------------
# seeds
# --------------------------------------------------------------------------

_MASK = (1 << 64) - 1


def splitmix64(base_seed: int, k: int) -> int:
    """Seed of realization ``k``: one splitmix64 output at state base + (k+1)*golden."""
    z = (int(base_seed) + (k + 1) * 0x9E3779B97F4A7C15) & _MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


def derive_seeds(base_seed: int, n: int) -> List[int]:
    return [splitmix64(base_seed, k) for k in range(n)]


# --------------------------------------------------------------------------
# config and manifest
# --------------------------------------------------------------------------


@dataclass
class ExperimentConfig:
    experiment_id: str
    overrides: dict = field(default_factory=dict)
    n_realizations: Optional[int] = None
    base_seed: int = 0
    output_dir: str = "runs"
    workers: int = 1

    def __post_init__(self):
        if self.experiment_id not in DEFAULTS:
            raise ConfigError(f"unknown experiment {self.experiment_id!r}; "
                              f"expected one of {', '.join(EXPERIMENT_IDS)}")
        if self.n_realizations is not None and self.n_realizations < 1:
            raise ConfigError("n_realizations must be >= 1")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")

    def resolved(self) -> dict:
        """Defaults with overrides applied and validated."""
        s = copy.deepcopy(DEFAULTS[self.experiment_id])
        for key, val in self.overrides.items():
            if key not in s:
                raise ConfigError(f"{self.experiment_id} has no setting {key!r}; "
                                  f"known: {sorted(s)}")
            if key == "params":
                s[key] = {**s[key], **val}
            else:
                s[key] = val
        if self.n_realizations is not None:
            s["n_realizations"] = self.n_realizations
        if int(s["n_realizations"]) < 1:
            raise ConfigError("n_realizations must be >= 1")
        if "params" in s:
            try:
                _market_params(s)
            except (TypeError, ValueError) as exc:
                raise ConfigError(str(exc)) from exc
        for key in ("compositions",):
            for c in s.get(key, []):
                if c not in "abcd" or len(c) != 1:
                    raise ConfigError(f"unknown composition {c!r}")
        if self.experiment_id == "fig8" and not s["inputs"]:
            raise ConfigError("fig8 needs at least one input price CSV (setting 'inputs')")
        return s

    @classmethod
    def from_file(cls, path, **kw) -> "ExperimentConfig":
        d = json.loads(Path(path).read_text())
        d.update({k: v for k, v in kw.items() if v is not None})
        return cls(**d)


@dataclass
class RunManifest:
    experiment_id: str
    config: dict
    base_seed: int
    seeds: List[int]
    seed_derivation: str
    wall_time_s: float
    toolkit_version: str
    numba: bool
    outputs: Dict[str, str]
    metrics: dict

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True, default=_json_default)


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o).__name__)


def _market_params(s: dict) -> MarketParams:
    return MarketParams.from_dict({**s["params"], "Delta": s["Delta"]})


# --------------------------------------------------------------------------
# realizations (module level so that they pickle for the process pool)
# --------------------------------------------------------------------------


def tq_edges(bins_per_decade: int) -> np.ndarray:
    """Decade-anchored edges, in samples, on which interval counts are pooled."""
    e = np.logspace(0.0, 9.0, 9 * bins_per_decade + 1)
    e[0] = 0.5
    return e


def abs_edges(bins_per_decade: int) -> np.ndarray:
    """Decade-anchored edges for |r| in units of its standard deviation."""
    return np.logspace(-4.0, 4.0, 8 * bins_per_decade + 1)


def _abs_counts(v, edges):
    return np.histogram(v, edges)[0].astype(np.int64)


def _real_sde(spec, s, sample_dt, max_step, seed):
    n = int(s["n_samples"])
    ser = simulate_sde(spec, StepControl(s["kappa"], max_step), (n - 1) * sample_dt,
                       sample_dt, seed)
    v = ser.values
    psd = estimate_psd(v, s["psd_segments"], s["bins_per_decade"], dt=sample_dt)
    bpd = s["bins_per_decade"]
    edges = np.logspace(-3.0, 6.0, 9 * bpd + 1)
    return {"counts": _abs_counts(np.abs(v), edges), "n": v.size,
            "freq": psd.freq, "power": psd.power}


def _real_fig1(s, seed):
    spec = one_over_f_spec(s["x_bound"])
    return _real_sde(spec, s, s["sample_dt"], s["max_step"], seed)


def _real_grid(s, seed):
    out = {}
    for i, c in enumerate(s["cases"]):
        spec = PowerLawSdeSpec(c["eta"], c["lam"], c["x_min"], c["x_max"])
        dt = c["sample_dt"]
        out[i] = _real_sde(spec, s, dt, min(1e-3, dt), splitmix64(seed, i))
    return out


def _real_market(s, seed, comp, want, H=None):
    p = _market_params(s)
    if H is not None:
        p = p.with_updates(H=float(H))
    r = simulate_market(p, CompositionFlags.composition(comp), s["n_days"], seed,
                        ctl=StepControl(s["kappa"])).r
    a = np.abs(r)
    a /= r.std()
    del r
    out = {"n": a.size}
    if "pdf" in want:
        out["abs_counts"] = _abs_counts(a, abs_edges(s["pdf_bins_per_decade"]))
    if "psd" in want:
        psd = estimate_psd(a, s["psd_segments"], s["psd_bins_per_decade"], dt=p.Delta)
        out["freq"], out["power"] = psd.freq, psd.power
    if "tq" in want:
        edges = tq_edges(s["bins_per_decade"])
        for q in s["q_values"]:
            T = extract_threshold_intervals(a, q).intervals
            out[f"tq_{q}"] = (np.histogram(T, edges)[0].astype(np.int64),
                              T.size, int(T.sum()))
            if "tq_raw" in want:
                out[f"raw_{q}"] = T
    return out


def _task(args):
    fn, a = args
    return fn(*a)


def _map(tasks, workers: int):
    if workers == 1 or len(tasks) == 1:
        return [_task(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=min(workers, len(tasks))) as ex:
        return list(ex.map(_task, tasks))  # ordered; reduction is order-free


# --------------------------------------------------------------------------
# reductions and writers
# --------------------------------------------------------------------------


class _Writer:
    def __init__(self, root: Path, header: dict):
        self.root = root
        self.header = header
        self.files: List[Path] = []

    def table(self, name, columns, data, **extra) -> Path:
        path = write_table(self.root / name, columns, data, {**self.header, **extra})
        self.files.append(path)
        return path

    def json(self, name, obj) -> Path:
        path = self.root / name
        path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n")
        self.files.append(path)
        return path


def _density(counts, n, edges):
    counts = np.asarray(counts, dtype=float)
    c = np.sqrt(edges[1:] * edges[:-1])
    d = counts / (n * np.diff(edges))
    m = counts > 0
    return c[m], d[m]


def _mean_psd(parts):
    f = parts[0]["freq"]
    for q in parts[1:]:
        if q["freq"].shape != f.shape:
            raise RuntimeError("realizations produced different frequency grids")
    return f, np.mean([q["power"] for q in parts], axis=0)


def _pool_tq(parts, q, edges):
    counts = sum(p[f"tq_{q}"][0] for p in parts)
    n = sum(p[f"tq_{q}"][1] for p in parts)
    total = sum(p[f"tq_{q}"][2] for p in parts)
    if n == 0:
        return None
    mean = total / n
    c, d = _density(counts, n, edges / mean)
    return {"scaled": c, "density": d, "n": int(n), "mean": mean}


def _slope(x, y, rng):
    try:
        return fit_power_law_slope(x, y, tuple(rng)).slope
    except ValueError:
        return math.nan


def _exp_sde_outputs(w, tag, parts, bpd):
    edges = np.logspace(-3.0, 6.0, 9 * bpd + 1)
    n = sum(p["n"] for p in parts)
    x, d = _density(sum(p["counts"] for p in parts), n, edges)
    f, pw = _mean_psd(parts)
    w.table(f"{tag}_pdf.csv", ["x", "density"], [x, d], n_samples=n)
    w.table(f"{tag}_psd.csv", ["f", "power"], [f, pw])
    return x, d, f, pw


def _run_fig1(s, seeds, w, workers):
    parts = _map([(_real_fig1, (s, sd)) for sd in seeds], workers)
    x, d, f, pw = _exp_sde_outputs(w, "fig1", parts, s["bins_per_decade"])
    return {"pdf_slope": _slope(x, d, s["pdf_fit"]), "psd_slope": _slope(f, pw, s["psd_fit"]),
            "pdf_fit": s["pdf_fit"], "psd_fit": s["psd_fit"]}


def _run_grid(s, seeds, w, workers):
    parts = _map([(_real_grid, (s, sd)) for sd in seeds], workers)
    metrics = {"cases": []}
    for i, c in enumerate(s["cases"]):
        tag = f"sde_grid_eta{c['eta']:g}_lam{c['lam']:g}"
        x, d, f, pw = _exp_sde_outputs(w, tag, [p[i] for p in parts], s["bins_per_decade"])
        spec = PowerLawSdeSpec(c["eta"], c["lam"], c["x_min"], c["x_max"])
        lo, hi = psd_validity_range(spec)
        metrics["cases"].append({
            **c, "predicted_beta": predicted_beta(spec), "validity_range": [lo, hi],
            "psd_fit_inside_validity": bool(lo <= c["psd_fit"][0] and c["psd_fit"][1] <= hi),
            "pdf_slope": _slope(x, d, c["pdf_fit"]), "psd_slope": _slope(f, pw, c["psd_fit"]),
        })
    return metrics


def _run_fig3(s, seeds, w, workers):
    tasks = [(_real_market, (s, sd, comp, ("pdf", "psd"))) for comp in s["compositions"]
             for sd in seeds]
    extra_H = [h for h in s["H_scan"] if float(h) != float(s["params"].get("H", MarketParams.H))]
    bc = s["psd_break_composition"]
    tasks += [(_real_market, (s, sd, bc, ("psd",), h)) for h in extra_H for sd in seeds]
    res = _map(tasks, workers)
    k = len(seeds)
    by_comp = {comp: res[i * k:(i + 1) * k] for i, comp in enumerate(s["compositions"])}
    pdfs = {}
    metrics = {}
    for comp, parts in by_comp.items():
        n = sum(p["n"] for p in parts)
        x, d = _density(sum(p["abs_counts"] for p in parts), n,
                        abs_edges(s["pdf_bins_per_decade"]))
        f, pw = _mean_psd(parts)
        pdfs[comp] = dict(zip(np.round(np.log10(x), 9), d))
        w.table(f"fig3_{comp}_pdf.csv", ["x", "density"], [x, d], composition=comp, n_returns=n)
        w.table(f"fig3_{comp}_psd.csv", ["f", "power"], [f, pw], composition=comp,
                unit="cycles per trading day")
        if comp == bc:
            metrics["psd_break"] = {"H": float(_market_params(s).H),
                                    **asdict(fit_broken_power_law(f, pw, s["psd_break_fit"]))}
    scans = []
    off = len(s["compositions"]) * k
    for j, h in enumerate(extra_H):
        parts = res[off + j * k: off + (j + 1) * k]
        f, pw = _mean_psd(parts)
        w.table(f"fig3_{bc}_psd_H{float(h):g}.csv", ["f", "power"], [f, pw], composition=bc, H=h)
        scans.append({"H": float(h), **asdict(fit_broken_power_law(f, pw, s["psd_break_fit"]))})
    metrics["psd_break_scan"] = scans
    a, b = s["pdf_compare"]
    if a in pdfs and b in pdfs:
        lo, hi = s["pdf_compare_range"]
        ratios = [pdfs[b][key] / pdfs[a][key] for key in pdfs[a]
                  if key in pdfs[b] and lo <= 10 ** key <= hi]
        metrics["pdf_ratio"] = {"pair": [a, b], "range": [lo, hi],
                                "min": float(min(ratios)), "max": float(max(ratios)),
                                "n_bins": len(ratios)}
    return metrics


def _run_fig4(s, seeds, w, workers):
    tasks = [(_real_market, (s, sd, comp, ("pdf", "psd"))) for comp in s["compositions"]
             for sd in seeds]
    res = _map(tasks, workers)
    k = len(seeds)
    metrics = {}
    for i, comp in enumerate(s["compositions"]):
        parts = res[i * k:(i + 1) * k]
        n = sum(p["n"] for p in parts)
        x, d = _density(sum(p["abs_counts"] for p in parts), n,
                        abs_edges(s["pdf_bins_per_decade"]))
        f, pw = _mean_psd(parts)
        w.table(f"fig4_{comp}_pdf.csv", ["x", "density"], [x, d], composition=comp, n_returns=n)
        w.table(f"fig4_{comp}_psd.csv", ["f", "power"], [f, pw], composition=comp,
                unit="cycles per trading day")
        if comp == s["tail_composition"]:
            metrics["tail_slope"] = _slope(x, d, s["tail_fit"])
            metrics["tail_fit"] = s["tail_fit"]
    return metrics


def _run_tq(s, seeds, w, workers, tag, raw_for=None):
    tasks = []
    for comp in s["compositions"]:
        want = ("tq", "tq_raw") if comp == raw_for else ("tq",)
        tasks += [(_real_market, (s, sd, comp, want)) for sd in seeds]
    res = _map(tasks, workers)
    k = len(seeds)
    lo_s, hi_s = s["powerlaw_fit_samples"]
    metrics = {"powerlaw_fit_samples": [lo_s, hi_s], "tail_decade_scaled": s["tail_decade_scaled"]}
    pooled_raw = {}
    for i, comp in enumerate(s["compositions"]):
        parts = res[i * k:(i + 1) * k]
        cm = {}
        for q in s["q_values"]:
            pool = _pool_tq(parts, q, tq_edges(s["bins_per_decade"]))
            if pool is None:
                cm[str(q)] = {"n": 0}
                continue
            w.table(f"{tag}_{comp}_q{q:g}.csv", ["Tq_scaled", "density"],
                    [pool["scaled"], pool["density"]], composition=comp, q=q,
                    n_intervals=pool["n"], mean_T_samples=pool["mean"])
            c, d, mean = pool["scaled"], pool["density"], pool["mean"]
            cm[str(q)] = {"n": pool["n"], "mean_T": mean,
                          "powerlaw_slope": _slope(c, d, (lo_s / mean, hi_s / mean)),
                          "tail_decade_slope": _slope(c, d, s["tail_decade_scaled"])}
            if comp == raw_for:
                pooled_raw[q] = np.concatenate([p[f"raw_{q}"] for p in parts]) / mean
        metrics[comp] = cm
    if raw_for is not None:
        q1, q2 = s["ks_pair"]
        metrics["ks"] = {"composition": raw_for, "q": [q1, q2],
                         "distance": ks_two_sample(pooled_raw[q1], pooled_raw[q2])}
    return metrics


def _run_fig6(s, seeds, w, workers):
    return _run_tq(s, seeds, w, workers, "fig6")


def _run_fig7(s, seeds, w, workers):
    return _run_tq(s, seeds, w, workers, "fig7", raw_for=s["ks_composition"])


def _run_fig8(s, seeds, w, workers):
    emp = ingest_files(s["inputs"], s["date_col"], s["close_col"])
    w.table("fig8_returns.csv", ["idx", "r"], [np.arange(emp.n), emp.r],
            assets=sorted(set(emp.asset_id.tolist())), boundaries=emp.boundaries)
    a = np.abs(emp.r)
    model = _map([(_real_market, (s, sd, s["composition"], ("tq", "tq_raw"))) for sd in seeds],
                 workers)
    metrics = {"n_returns": emp.n, "assets": len(emp.boundaries) + 1, "q": {}}
    edges = tq_edges(s["bins_per_decade"])
    for q in s["q_values"]:
        ti = extract_threshold_intervals(a, q, boundaries=emp.boundaries)
        entry = {"n_empirical": len(ti)}
        if len(ti) >= 2:
            counts = np.histogram(ti.intervals, edges)[0]
            c, d = _density(counts, len(ti), edges / ti.mean_T)
            w.table(f"fig8_empirical_q{q:g}.csv", ["Tq_scaled", "density"], [c, d], q=q,
                    n_intervals=len(ti), mean_T_samples=ti.mean_T)
        pool = _pool_tq(model, q, edges)
        if pool is not None:
            w.table(f"fig8_model_q{q:g}.csv", ["Tq_scaled", "density"],
                    [pool["scaled"], pool["density"]], q=q, n_intervals=pool["n"],
                    mean_T_samples=pool["mean"], composition=s["composition"])
            entry["n_model"] = pool["n"]
            if len(ti) >= 2:
                raw = np.concatenate([m[f"raw_{q}"] for m in model]) / pool["mean"]
                entry["ks_model_vs_empirical"] = ks_two_sample(ti.scaled(), raw)
        metrics["q"][str(q)] = entry
    return metrics


def _run_oracles_exp(s, seeds, w, workers):
    results = run_oracles(s["names"])
    report = [{k: v for k, v in r.to_dict().items() if k != "seconds"} for r in results]
    w.json("oracles.json", report)
    return {"all_passed": all(r.passed for r in results),
            "seconds": {r.name: r.seconds for r in results}}


_RUNNERS = {
    "fig1": _run_fig1, "sde_grid": _run_grid, "fig3": _run_fig3, "fig4": _run_fig4,
    "fig6": _run_fig6, "fig7": _run_fig7, "fig8": _run_fig8, "oracles": _run_oracles_exp,
}


def run_experiment(cfg: ExperimentConfig) -> RunManifest:
    """Run one experiment; on any failure the files it created are removed."""
    s = cfg.resolved()
    seeds = derive_seeds(cfg.base_seed, int(s["n_realizations"]))
    root = Path(cfg.output_dir) / cfg.experiment_id
    created_root = not root.exists()
    root.mkdir(parents=True, exist_ok=True)
    header = {"experiment": cfg.experiment_id, "base_seed": cfg.base_seed, "seeds": seeds,
              "settings": s}
    w = _Writer(root, header)
    t0 = time.perf_counter()
    try:
        metrics = _RUNNERS[cfg.experiment_id](s, seeds, w, cfg.workers)
        outputs = {p.name: sha256_file(p) for p in w.files}
        manifest = RunManifest(
            experiment_id=cfg.experiment_id, config=s, base_seed=cfg.base_seed, seeds=seeds,
            seed_derivation="splitmix64(base_seed, k), k = 0..n_realizations-1",
            wall_time_s=time.perf_counter() - t0, toolkit_version=__version__,
            numba=USING_NUMBA, outputs=outputs, metrics=metrics)
        (root / "manifest.json").write_text(manifest.to_json() + "\n")
        w.files.append(root / "manifest.json")
    except BaseException:
        for p in w.files:
            if p.exists():
                p.unlink()
        if created_root and root.exists() and not any(root.iterdir()):
            shutil.rmtree(root)
        raise
    return manifest
