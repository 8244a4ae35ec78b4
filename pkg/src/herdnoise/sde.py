"""Nonlinear power-law SDEs between reflective bounds.

The class integrated here is

    dx = (eta - lambda/2) x^(2 eta - 1) dt + x^eta dW,

whose stationary PDF behaves as x^-lambda and whose PSD behaves as
1/f^beta with beta = 1 + (lambda - 3)/(2 eta - 2) inside a frequency band set
by the diffusion bounds. The special case dx = (1 + x^2)^(3/4) dW is exposed
through :func:`one_over_f_spec`.

Integration is Euler-Maruyama with a state-dependent internal step
``min(max_step, kappa^2 / x^(2 eta - 2))`` so that the relative displacement
per step stays near ``kappa``; samples are taken on a uniform grid.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Iterator, Optional, Union

import numpy as np

from . import kernels
from ._accel import is_compiled, jit, py_impl

NOISE_BLOCK = 1 << 18


@dataclass(frozen=True)
class PowerLawSdeSpec:
    eta: float
    lam: float
    x_min: float = 1.0
    x_max: float = 1000.0

    def __post_init__(self):
        if not self.x_min > 0:
            raise ValueError(f"x_min must be positive, got {self.x_min}")
        if not self.x_max > self.x_min:
            raise ValueError(f"x_max ({self.x_max}) must exceed x_min ({self.x_min})")


@dataclass(frozen=True)
class GenericSdeSpec:
    """dx = drift(x) dt + diffusion(x) dW reflected at ``x_min``/``x_max``.

    ``scale`` is an optional length scale; when given, the internal step is
    ``min(max_step, (kappa * scale(x) / diffusion(x))^2)``, otherwise the step
    is fixed at ``max_step``. Passing numba-compiled callables keeps the
    integration compiled; plain Python callables run interpreted.
    """

    drift: Callable[[float], float]
    diffusion: Callable[[float], float]
    x_min: float
    x_max: float
    scale: Optional[Callable[[float], float]] = None
    name: str = "generic"

    def __post_init__(self):
        if not self.x_max > self.x_min:
            raise ValueError("x_max must exceed x_min")


@dataclass(frozen=True)
class StepControl:
    kappa: float = 0.05
    max_step: float = 1e-3

    def __post_init__(self):
        if not 0.0 < self.kappa < 1.0:
            raise ValueError(f"kappa must lie in (0, 1), got {self.kappa}")
        if not self.max_step > 0:
            raise ValueError(f"max_step must be positive, got {self.max_step}")


@dataclass
class SampledSeries:
    values: np.ndarray
    dt: float
    t0: float = 0.0
    seed: Optional[int] = None
    unit: str = "model time"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")

    def __len__(self):
        return self.values.shape[0]

    @property
    def t(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(len(self))

    def to_csv(self, path, sidecar: bool = True) -> Path:
        """Write ``t,value`` rows; metadata goes to ``<path>.meta.json``."""
        path = Path(path)
        data = np.column_stack([self.t, self.values])
        np.savetxt(path, data, delimiter=",", header="t,value", comments="",
                   fmt="%.17g")
        if sidecar:
            meta = {"t0": self.t0, "dt": self.dt, "unit": self.unit,
                    "seed": self.seed, "n": len(self), **self.meta}
            Path(str(path) + ".meta.json").write_text(
                json.dumps(meta, indent=2, sort_keys=True, default=str))
        return path

    @classmethod
    def from_csv(cls, path) -> "SampledSeries":
        path = Path(path)
        with open(path) as fh:
            n_rows = sum(1 for line in fh if line.strip()) - 1
        if n_rows < 2:
            raise ValueError(f"{path}: a series needs at least two rows")
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        t = data[:, 0]
        steps = np.diff(t)
        if steps.size and not np.allclose(steps, steps[0], rtol=1e-9, atol=0):
            raise ValueError(f"{path}: time column is not uniformly spaced")
        dt = float(steps[0]) if steps.size else 1.0
        meta = {}
        side = Path(str(path) + ".meta.json")
        if side.exists():
            meta = json.loads(side.read_text())
        return cls(values=data[:, 1], dt=dt, t0=float(t[0]), seed=meta.get("seed"),
                   unit=meta.get("unit", "model time"))


# --------------------------------------------------------------------------
# closed forms
# --------------------------------------------------------------------------


def _check_domain(x):
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0):
        raise ValueError("power-law SDE coefficients need x > 0")
    return x


def drift(spec: PowerLawSdeSpec, x):
    x = _check_domain(x)
    out = (spec.eta - spec.lam / 2.0) * x ** (2.0 * spec.eta - 1.0)
    return float(out) if out.ndim == 0 else out


def diffusion(spec: PowerLawSdeSpec, x):
    x = _check_domain(x)
    out = x ** spec.eta
    return float(out) if out.ndim == 0 else out


def _require_eta_not_one(spec):
    if spec.eta == 1.0:
        raise ValueError("eta = 1 is degenerate (division by 2*eta - 2)")


def predicted_beta(spec: PowerLawSdeSpec) -> float:
    """PSD exponent: S(f) ~ 1/f^beta."""
    _require_eta_not_one(spec)
    return 1.0 + (spec.lam - 3.0) / (2.0 * spec.eta - 2.0)


def psd_validity_range(spec: PowerLawSdeSpec) -> tuple[float, float]:
    """Frequency band ``(f_low, f_high)`` where the 1/f^beta law holds.

    For eta > 1 the band is x_min^(2eta-2) << 2 pi f << x_max^(2eta-2); for
    eta < 1 it is x_max^(2-2eta) << 2 pi f << x_min^(2-2eta). When the bounds
    make the band empty, ``(nan, nan)`` is returned.
    """
    _require_eta_not_one(spec)
    two_pi = 2.0 * math.pi
    if spec.eta > 1.0:
        p = 2.0 * spec.eta - 2.0
        lo, hi = spec.x_min ** p / two_pi, spec.x_max ** p / two_pi
    else:
        p = 2.0 - 2.0 * spec.eta
        lo, hi = spec.x_max ** p / two_pi, spec.x_min ** p / two_pi
    if not lo < hi:
        return (math.nan, math.nan)
    return (lo, hi)


def band_is_empty(band) -> bool:
    return not (band[0] < band[1])


def bessel_order(spec: PowerLawSdeSpec) -> float:
    """Order nu = (lambda - 2 eta + 1) / (2 (eta - 1)).

    The published expression writes nu on both sides; this resolution takes
    2*eta in place of the inner nu. Callers can override ``nu`` explicitly.
    """
    if spec.eta <= 1.0:
        raise ValueError("burst asymptotics need eta > 1")
    return (spec.lam - 2.0 * spec.eta + 1.0) / (2.0 * (spec.eta - 1.0))


def bessel_j(nu: float, x: float, terms: int = 200) -> float:
    """J_nu(x) from its power series; cancellation limits accuracy to ~1e-9 near x = 20."""
    half = 0.5 * x
    term = half ** nu / math.gamma(nu + 1.0)
    total = term
    q = -half * half
    for k in range(1, terms):
        term *= q / (k * (k + nu))
        total += term
        if abs(term) < 1e-17 * abs(total):
            break
    return total


def bessel_first_zero(nu: float) -> float:
    """First positive zero j_{nu,1} of J_nu by bracketing and bisection."""
    if nu < 0:
        raise ValueError("only nu >= 0 is supported")
    # j_{nu,1} > nu and lies below nu + 1.86 nu^(1/3) + 2.5 for all nu >= 0
    lo = max(nu, 1e-6)
    hi = nu + 1.8557571 * nu ** (1.0 / 3.0) + 2.5
    step = 0.05
    x = lo
    f_prev = bessel_j(nu, x)
    while x < hi + 1.0:
        x_next = x + step
        f_next = bessel_j(nu, x_next)
        if f_prev == 0.0:
            return x
        if f_prev * f_next < 0:
            a, b = x, x_next
            fa = f_prev
            for _ in range(200):
                m = 0.5 * (a + b)
                fm = bessel_j(nu, m)
                if fa * fm <= 0:
                    b = m
                else:
                    a, fa = m, fm
                if b - a < 1e-15 * max(1.0, b):
                    break
            return 0.5 * (a + b)
        x, f_prev = x_next, f_next
    raise RuntimeError(f"no Bessel zero bracketed for nu={nu}")


def burst_crossover_time(spec: PowerLawSdeSpec, h_x: float,
                         nu: Optional[float] = None) -> float:
    """Crossover tau_c below which burst durations follow tau^(-3/2)."""
    if spec.eta <= 1.0:
        raise ValueError("burst asymptotics need eta > 1")
    if not h_x > 0:
        raise ValueError("threshold h_x must be positive")
    if nu is None:
        nu = bessel_order(spec)
    j = bessel_first_zero(nu)
    e1 = spec.eta - 1.0
    return 2.0 / (e1 * e1 * h_x ** (2.0 * e1) * j * j)


# --------------------------------------------------------------------------
# the 1/f special case
# --------------------------------------------------------------------------


@jit
def _zero_drift(x):
    return 0.0


@jit
def _one_over_f_diffusion(x):
    return (1.0 + x * x) ** 0.75


@jit
def _one_over_f_scale(x):
    return math.sqrt(1.0 + x * x)


@jit
def _unit_scale(x):
    return 1.0


def one_over_f_spec(x_bound: float = 1000.0) -> GenericSdeSpec:
    """dx = (1 + x^2)^(3/4) dW, reflected at |x| = ``x_bound``.

    The step length scale sqrt(1 + x^2) reproduces the power-law class rule
    kappa^2 / x for large |x| and stays regular through x = 0.
    """
    return GenericSdeSpec(drift=_zero_drift, diffusion=_one_over_f_diffusion,
                          x_min=-x_bound, x_max=x_bound, scale=_one_over_f_scale,
                          name="one_over_f")


# --------------------------------------------------------------------------
# integration
# --------------------------------------------------------------------------

SdeSpec = Union[PowerLawSdeSpec, GenericSdeSpec]


def _default_x0(spec: SdeSpec) -> float:
    if isinstance(spec, PowerLawSdeSpec):
        return min(2.0 * spec.x_min, 0.5 * (spec.x_min + spec.x_max))
    if spec.x_min < 0.0 < spec.x_max:
        return 0.0
    return 0.5 * (spec.x_min + spec.x_max)


def _spec_meta(spec: SdeSpec) -> dict:
    if isinstance(spec, PowerLawSdeSpec):
        return {"kind": "power_law", **asdict(spec)}
    return {"kind": spec.name, "x_min": spec.x_min, "x_max": spec.x_max}


def iter_sde(spec: SdeSpec, ctl: StepControl, duration: float, sample_dt: float,
             seed: int, x0: Optional[float] = None, burn_in: float = 0.0,
             chunk: int = 1 << 20) -> Iterator[SampledSeries]:
    """Yield the sampled trajectory in consecutive pieces of ``chunk`` values.

    The first value is the state at ``t0 = 0`` (after any burn-in). Pieces
    concatenate to exactly what :func:`simulate_sde` returns.
    """
    if not sample_dt > 0:
        raise ValueError("sample_dt must be positive")
    if not duration >= sample_dt:
        raise ValueError("duration must cover at least one sampling step")
    if x0 is None:
        x0 = _default_x0(spec)
    if not spec.x_min <= x0 <= spec.x_max:
        raise ValueError(f"x0={x0} outside [{spec.x_min}, {spec.x_max}]")
    n_total = int(math.floor(duration / sample_dt + 1e-9)) + 1
    rng = np.random.default_rng(seed)
    kappa2 = ctl.kappa ** 2

    if isinstance(spec, PowerLawSdeSpec):
        def run(x, since, sdt, z, zpos, out, opos):
            return kernels.powerlaw_run(x, since, spec.eta, spec.lam, spec.x_min,
                                        spec.x_max, kappa2, ctl.max_step, sdt,
                                        z, zpos, out, opos)
    else:
        has_scale = spec.scale is not None
        fns = (spec.drift, spec.diffusion, spec.scale if has_scale else _unit_scale)
        if all(is_compiled(f) for f in fns):
            kern = kernels.generic_run
        else:
            kern = py_impl(kernels.generic_run)
            fns = tuple(py_impl(f) for f in fns)

        def run(x, since, sdt, z, zpos, out, opos):
            return kern(fns[0], fns[1], fns[2], has_scale, x, since, spec.x_min,
                        spec.x_max, kappa2, ctl.max_step, sdt, z, zpos, out, opos)

    z = rng.standard_normal(NOISE_BLOCK)
    zpos = 0
    x = float(x0)
    since = 0.0
    meta = {"spec": _spec_meta(spec), "kappa": ctl.kappa, "max_step": ctl.max_step,
            "x0": x0, "burn_in": burn_in}

    def advance(x, since, z, zpos, sdt, out):
        opos = 0
        while True:
            x, since, zpos, opos, status = run(x, since, sdt, z, zpos, out, opos)
            if status == kernels.OUT_FULL:
                return x, since, z, zpos
            if status == kernels.NON_FINITE:
                raise FloatingPointError(
                    f"non-finite state after {opos} samples (x={x})")
            z = rng.standard_normal(NOISE_BLOCK)
            zpos = 0

    if burn_in > 0:
        x, since, z, zpos = advance(x, since, z, zpos, burn_in, np.empty(1))
        since = 0.0

    first = True
    done = 0
    while done < n_total:
        n = min(chunk, n_total - done)
        out = np.empty(n)
        if first:
            out[0] = x
            if n > 1:
                x, since, z, zpos = advance(x, since, z, zpos, sample_dt, out[1:])
            first = False
        else:
            x, since, z, zpos = advance(x, since, z, zpos, sample_dt, out)
        yield SampledSeries(out, dt=sample_dt, t0=done * sample_dt, seed=seed,
                            meta=meta)
        done += n


def simulate_sde(spec: SdeSpec, ctl: StepControl, duration: float, sample_dt: float,
                 seed: int, x0: Optional[float] = None,
                 burn_in: float = 0.0) -> SampledSeries:
    """Integrate ``spec`` for ``duration`` and sample every ``sample_dt``.

    >>> s = simulate_sde(PowerLawSdeSpec(2.5, 4.0, 1.0, 100.0), StepControl(), 1.0, 0.01, seed=3)
    >>> len(s), bool(s.values.min() >= 1.0)
    (101, True)
    """
    pieces = list(iter_sde(spec, ctl, duration, sample_dt, seed, x0=x0,
                           burn_in=burn_in))
    values = np.concatenate([p.values for p in pieces])
    return SampledSeries(values, dt=sample_dt, t0=0.0, seed=seed,
                         meta=pieces[0].meta)
