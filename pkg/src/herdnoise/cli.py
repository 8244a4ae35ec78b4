"""Command-line entry point: ``herdnoise <verb> ...``.

Successful commands print a JSON summary on stdout and exit 0. Failures
print ``{"error": ..., "message": ...}`` on stderr and exit 2 for invalid
arguments or configuration, 1 for anything else (including failed oracles).
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .experiments import EXPERIMENT_IDS, ConfigError, ExperimentConfig, run_experiment
from .ingest import IngestError, ingest_files
from .market import CompositionFlags, MarketParams, simulate_market
from .oracles import ORACLES, run_oracles
from .sde import PowerLawSdeSpec, SampledSeries, StepControl, one_over_f_spec, simulate_sde
from .stats import estimate_psd, extract_bursts, extract_threshold_intervals, log_binned_pdf
from .tables import write_table


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _load_json(path):
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read {path}: {exc}") from exc


def _parse_set(items):
    """``key=value`` pairs; values are JSON when they parse, else strings.

    Dotted keys (``params.H=300``) build nested dictionaries.
    """
    out = {}
    for item in items or []:
        key, sep, raw = item.partition("=")
        if not sep:
            raise UsageError(f"--set expects key=value, got {item!r}")
        try:
            val = json.loads(raw)
        except json.JSONDecodeError:
            val = raw
        node = out
        *head, last = key.split(".")
        for h in head:
            node = node.setdefault(h, {})
        node[last] = val
    return out


def _emit(obj):
    print(json.dumps(obj, indent=2, sort_keys=True, default=str))


# --------------------------------------------------------------------------
# verbs
# --------------------------------------------------------------------------


def cmd_simulate_sde(a):
    if a.one_over_f:
        spec = one_over_f_spec(a.x_bound)
    else:
        if a.eta is None or a.lam is None:
            raise UsageError("give --eta and --lam, or --one-over-f")
        spec = PowerLawSdeSpec(a.eta, a.lam, a.x_min, a.x_max)
    ctl = StepControl(a.kappa, a.max_step)
    ser = simulate_sde(spec, ctl, (a.n_samples - 1) * a.sample_dt, a.sample_dt, a.seed,
                       x0=a.x0)
    ser.to_csv(a.out)
    _emit({"out": str(a.out), "n": len(ser), "dt": ser.dt, "seed": a.seed})


def cmd_simulate_market(a):
    base = _load_json(a.params) if a.params else {}
    p = MarketParams.from_dict({**base, **_parse_set(a.set)})
    if a.flags:
        flags = CompositionFlags(**_load_json(a.flags))
    else:
        flags = CompositionFlags.composition(a.composition)
    rs = simulate_market(p, flags, a.days, a.seed, ctl=StepControl(a.kappa), latent=a.latent)
    rs.to_csv(a.out)
    _emit({"out": str(a.out), "n": len(rs), "Delta_days": p.Delta, "seed": a.seed,
           "flags": flags.to_dict()})


def _read_values(path, column):
    """Values and sample step from a series, return-series or joined-returns CSV."""
    path = Path(path)
    if not path.is_file():
        raise UsageError(f"no such input file: {path}")
    with open(path) as fh:
        first = fh.readline()
        while first.startswith("#"):
            first = fh.readline()
    cols = first.strip().split(",")
    if cols[:2] == ["t", "value"]:
        ser = SampledSeries.from_csv(path)
        return ser.values, ser.dt, None
    if cols[:2] == ["t_days", "r"]:
        from .market import ReturnSeries
        rs = ReturnSeries.from_csv(path)
        col = column or "r"
        v = rs.r if col == "r" else getattr(rs, col)
        if v is None:
            raise UsageError(f"{path} has no column {col!r}")
        return np.asarray(v), rs.dt, None
    if cols[:3] == ["idx", "r", "asset_id"]:
        from .ingest import NormalizedReturns
        nr = NormalizedReturns.from_csv(path)
        return nr.r, 1.0, nr.boundaries
    raise UsageError(f"{path}: unrecognised columns {cols}")


def cmd_analyze(a):
    v, dt, boundaries = _read_values(a.input, a.column)
    header = {"input": str(a.input), "kind": a.kind}
    if a.kind == "pdf":
        x = np.abs(v) if a.abs else v
        h = log_binned_pdf(x[x > 0], a.bins_per_decade)
        c, d = h.nonempty()
        write_table(a.out, ["x", "density"], [c, d], {**header, "abs": a.abs,
                                                          "bins_per_decade": a.bins_per_decade})
        n = len(c)
    elif a.kind == "psd":
        x = np.abs(v) if a.abs else v
        ps = estimate_psd(x, a.segments, a.bins_per_decade, dt=dt)
        write_table(a.out, ["f", "power"], [ps.freq, ps.power],
                    {**header, "abs": a.abs, "segments": a.segments, "dt": dt})
        n = len(ps.freq)
    elif a.kind == "tq":
        if a.q is None:
            raise UsageError("--q is required for tq")
        ti = extract_threshold_intervals(np.abs(v), a.q, pre_normalized=False,
                                         boundaries=boundaries or ())
        if len(ti) < 2:
            raise UsageError(f"fewer than two intervals at q={a.q}")
        h = log_binned_pdf(ti.scaled(), a.bins_per_decade)
        c, d = h.nonempty()
        write_table(a.out, ["Tq_scaled", "density"], [c, d],
                    {**header, "q": a.q, "n_intervals": len(ti), "mean_T_samples": ti.mean_T})
        n = len(c)
    else:  # bursts
        if a.h_x is None:
            raise UsageError("--h-x is required for bursts")
        bs = extract_bursts(v, a.h_x, dt=dt)
        write_table(a.out, ["tau", "theta", "T"], [bs.tau, bs.theta, bs.T],
                    {**header, "h_x": a.h_x, "dt": dt})
        n = len(bs)
    _emit({"out": str(a.out), "rows": n})


def cmd_ingest(a):
    nr = ingest_files(a.inputs, a.date_col, a.close_col)
    nr.to_csv(a.out)
    _emit({"out": str(a.out), "n": nr.n, "boundaries": nr.boundaries})


def cmd_experiment(a):
    cfg_fields = _load_json(a.config) if a.config else {}
    overrides = {**cfg_fields.pop("overrides", {}), **_parse_set(a.set)}
    cfg = ExperimentConfig(
        experiment_id=a.experiment_id, overrides=overrides,
        n_realizations=a.n_realizations if a.n_realizations is not None
        else cfg_fields.get("n_realizations"),
        base_seed=a.base_seed if a.base_seed is not None else cfg_fields.get("base_seed", 0),
        output_dir=a.out_dir or cfg_fields.get("output_dir", "runs"),
        workers=a.workers or cfg_fields.get("workers", 1))
    m = run_experiment(cfg)
    _emit({"experiment": m.experiment_id, "outputs": sorted(m.outputs),
           "wall_time_s": m.wall_time_s, "metrics": m.metrics,
           "dir": str(Path(cfg.output_dir) / cfg.experiment_id)})


def cmd_oracles(a):
    results = run_oracles(a.only)
    report = [r.to_dict() for r in results]
    if a.out:
        Path(a.out).write_text(json.dumps(report, indent=2, default=str) + "\n")
    _emit(report)
    return 0 if all(r.passed for r in results) else 1


# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="herdnoise", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("simulate-sde", help="integrate a power-law SDE to a t,value CSV")
    p.add_argument("--eta", type=float)
    p.add_argument("--lam", type=float)
    p.add_argument("--x-min", type=float, default=1.0)
    p.add_argument("--x-max", type=float, default=1000.0)
    p.add_argument("--one-over-f", action="store_true", help="dx = (1 + x^2)^(3/4) dW")
    p.add_argument("--x-bound", type=float, default=1e5)
    p.add_argument("--n-samples", type=int, default=10**5)
    p.add_argument("--sample-dt", type=float, default=1e-3)
    p.add_argument("--kappa", type=float, default=0.05)
    p.add_argument("--max-step", type=float, default=1e-3)
    p.add_argument("--x0", type=float)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_simulate_sde)

    p = sub.add_parser("simulate-market", help="simulate the herding market to a returns CSV")
    p.add_argument("--params", help="JSON file with MarketParams fields")
    p.add_argument("--set", action="append", metavar="FIELD=VALUE")
    p.add_argument("--composition", default="d", choices=list("abcd"))
    p.add_argument("--flags", help="JSON file with CompositionFlags fields")
    p.add_argument("--days", type=float, default=100.0)
    p.add_argument("--kappa", type=float, default=0.05)
    p.add_argument("--latent", action="store_true", help="also write n_f, xi, sigma")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_simulate_market)

    p = sub.add_parser("analyze", help="PDF, PSD, T_q or burst statistics of a CSV series")
    p.add_argument("kind", choices=["pdf", "psd", "tq", "bursts"])
    p.add_argument("--input", type=Path, required=True)
    p.add_argument("--column", help="column of a returns CSV (default r)")
    p.add_argument("--abs", action="store_true", help="analyse |values|")
    p.add_argument("--bins-per-decade", type=int, default=10)
    p.add_argument("--segments", type=int, default=1)
    p.add_argument("--q", type=float)
    p.add_argument("--h-x", type=float)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("ingest", help="join daily price CSVs into normalised returns")
    p.add_argument("inputs", nargs="+", type=Path)
    p.add_argument("--date-col", default="Date")
    p.add_argument("--close-col", default="Close")
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("experiment", help="reproduce one figure's data")
    p.add_argument("experiment_id", choices=EXPERIMENT_IDS)
    p.add_argument("--config", help="JSON file with ExperimentConfig fields")
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override a default, e.g. n_days=1e4 or params.H=300")
    p.add_argument("--n-realizations", type=int)
    p.add_argument("--base-seed", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--out-dir")
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("oracles", help="run the analytic cross-checks")
    p.add_argument("--only", nargs="+", choices=list(ORACLES))
    p.add_argument("--out", type=Path)
    p.set_defaults(func=cmd_oracles)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        a = ap.parse_args(argv)
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    except UsageError as exc:
        print(json.dumps({"error": "usage", "message": str(exc)}), file=sys.stderr)
        return 2
    try:
        rc = a.func(a)
        return int(rc or 0)
    except IngestError as exc:
        print(json.dumps(exc.to_dict()), file=sys.stderr)
        return 2
    except UsageError as exc:
        print(json.dumps({"error": "usage", "message": str(exc)}), file=sys.stderr)
        return 2
    except ConfigError as exc:
        print(json.dumps({"error": "config", "message": str(exc)}), file=sys.stderr)
        return 2
    except (ValueError, TypeError, KeyError) as exc:
        print(json.dumps({"error": "invalid", "message": f"{type(exc).__name__}: {exc}"}),
              file=sys.stderr)
        return 2
    except Exception as exc:  # report, never a bare traceback
        print(json.dumps({"error": "runtime", "message": f"{type(exc).__name__}: {exc}"}),
              file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
