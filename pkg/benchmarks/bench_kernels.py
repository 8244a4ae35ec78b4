"""Time the numba kernels against the interpreted fallback.

Each workload runs in a fresh interpreter, once with JIT enabled and once with
HERDNOISE_DISABLE_JIT=1. Compilation is excluded by a warm-up call.

    python3 benchmarks/bench_kernels.py [--repeat 3] [--json out.json]
"""
import argparse
import json
import os
import subprocess
import sys
import textwrap

WORKLOADS = {
    "powerlaw_sde": """
        from herdnoise.sde import PowerLawSdeSpec, StepControl, simulate_sde
        spec = PowerLawSdeSpec(2.5, 4.0, 1.0, 1000.0)
        def work(scale):
            simulate_sde(spec, StepControl(), 50.0 * scale, 1e-4, seed=1)
    """,
    "one_over_f_sde": """
        from herdnoise.sde import StepControl, one_over_f_spec, simulate_sde
        spec = one_over_f_spec()
        def work(scale):
            simulate_sde(spec, StepControl(), 1000.0 * scale, 1e-3, seed=1)
    """,
    "market": """
        from herdnoise.market import CompositionFlags, MarketParams, simulate_market
        p, f = MarketParams(), CompositionFlags.composition("d")
        def work(scale):
            simulate_market(p, f, 400.0 * scale, seed=1)
    """,
    "agent_chain": """
        from herdnoise.agents import simulate_agent_chain, two_state_rates
        sigma, h = two_state_rates(1.1, 3.0)
        def work(scale):
            simulate_agent_chain(100, sigma, h, 200.0 * scale, 0.1, seed=1)
    """,
}

RUNNER = """
import json, sys, time
{body}
work(0.01)
best = float("inf")
for _ in range({repeat}):
    t0 = time.perf_counter()
    work(1.0)
    best = min(best, time.perf_counter() - t0)
from herdnoise import _accel
print(json.dumps({{"seconds": best, "numba": _accel.USING_NUMBA}}))
"""


def time_workload(body, repeat, disable_jit):
    env = dict(os.environ)
    env.pop("HERDNOISE_DISABLE_JIT", None)
    if disable_jit:
        env["HERDNOISE_DISABLE_JIT"] = "1"
    code = RUNNER.format(body=textwrap.dedent(body), repeat=repeat)
    out = subprocess.run([sys.executable, "-c", code], env=env, check=True,
                         capture_output=True, text=True).stdout
    return json.loads(out.strip().splitlines()[-1])


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--only", nargs="+", choices=sorted(WORKLOADS))
    ap.add_argument("--json", help="also write the results to this file")
    a = ap.parse_args(argv)

    rows = []
    print(f"{'workload':<16} {'numba s':>10} {'numpy s':>10} {'speed-up':>9}")
    for name in a.only or WORKLOADS:
        jit = time_workload(WORKLOADS[name], a.repeat, False)
        py = time_workload(WORKLOADS[name], a.repeat, True)
        ratio = py["seconds"] / jit["seconds"]
        rows.append({"workload": name, "jit_s": jit["seconds"], "nojit_s": py["seconds"],
                     "speedup": ratio, "numba_active": jit["numba"]})
        print(f"{name:<16} {jit['seconds']:>10.4f} {py['seconds']:>10.4f} {ratio:>8.1f}x")
    if a.json:
        with open(a.json, "w") as fh:
            json.dump(rows, fh, indent=2)


if __name__ == "__main__":
    main()
