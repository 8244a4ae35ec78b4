"""Three-state herding market: fundamentalists, optimists and pessimists.

The endogenous state is the fundamentalist fraction ``n_f`` and the chartist
mood ``xi``; both follow Euler-Maruyama discretisations of

    dn_f = ((1 - n_f) eps_cf - n_f eps_fc) / tau dt + sqrt(2 n_f (1 - n_f) / tau) dW_f
    dxi  = -2 H eps_cc xi / tau dt + sqrt(2 H (1 - xi^2) / tau) dW_xi

with inter-event time 1/tau = (1 + a_tau (1 - n_f)/n_f)^alpha, in scaled time
t_s = h t. Returns over a short window delta are r = sigma * omega, with
sigma = b0(t) (1 + a0 |p|) and log-price p = r0 xi (1 - n_f)/n_f; longer
returns are sums of consecutive short ones.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Optional

import numpy as np

from . import kernels
from .sde import NOISE_BLOCK, StepControl

N_EPS = 1e-6
XI_EPS = 1e-9


@dataclass(frozen=True)
class MarketParams:
    eps_cf: float = 1.1
    eps_fc: float = 3.0
    eps_cc: float = 3.0
    H: float = 1000.0
    a0: float = 1.0
    a_tau: float = 0.7
    alpha: float = 2.0
    r0: float = 1.0
    b0: float = 1.0
    w: float = 0.25
    h_per_sec: float = 0.3e-8
    seconds_per_day: float = 23400.0
    delta: float = 1.0 / 390.0
    Delta: float = 1.0 / 390.0

    def __post_init__(self):
        for name in ("eps_cf", "eps_fc", "eps_cc", "r0", "b0", "w", "h_per_sec",
                     "seconds_per_day", "delta", "Delta"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        for name in ("a0", "a_tau", "alpha"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.H < 1:
            raise ValueError("H must be >= 1")
        self.windows_per_return  # validates Delta / delta

    @property
    def windows_per_return(self) -> int:
        ratio = self.Delta / self.delta
        m = int(round(ratio))
        if m < 1 or abs(ratio - m) > 1e-9 * max(1.0, ratio):
            raise ValueError(f"Delta/delta = {ratio} is not a positive integer")
        return m

    @property
    def model_time_per_day(self) -> float:
        return trading_day_in_model_time(self.h_per_sec, self.seconds_per_day)

    @property
    def window_model_time(self) -> float:
        return self.delta * self.model_time_per_day

    def with_updates(self, **kw) -> "MarketParams":
        return replace(self, **kw)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "MarketParams":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown MarketParams fields: {sorted(unknown)}")
        return cls(**d)


@dataclass(frozen=True)
class CompositionFlags:
    use_xi: bool = True
    use_exogenous: bool = True
    use_seasonality: bool = False

    @classmethod
    def composition(cls, label: str) -> "CompositionFlags":
        """Model ladder: (a) endogenous ratio only, (b) + exogenous noise,
        (c) + mood dynamics, (d) + intraday seasonality."""
        table = {
            "a": cls(use_xi=False, use_exogenous=False, use_seasonality=False),
            "b": cls(use_xi=False, use_exogenous=True, use_seasonality=False),
            "c": cls(use_xi=True, use_exogenous=True, use_seasonality=False),
            "d": cls(use_xi=True, use_exogenous=True, use_seasonality=True),
        }
        try:
            return table[label.lower()]
        except KeyError:
            raise ValueError(f"unknown composition {label!r}; expected a-d") from None

    def to_dict(self) -> dict:
        return asdict(self)


COMPOSITIONS = ("a", "b", "c", "d")


@dataclass(frozen=True)
class MarketState:
    n_f: float
    xi: float = 0.0
    t: float = 0.0

    def __post_init__(self):
        if not 0.0 < self.n_f < 1.0:
            raise ValueError(f"n_f must lie in (0, 1), got {self.n_f}")
        if not -1.0 <= self.xi <= 1.0:
            raise ValueError(f"xi must lie in [-1, 1], got {self.xi}")


@dataclass
class ReturnSeries:
    """Aggregated returns r_Delta; ``latent`` columns are sampled at the start
    of each return window."""

    dt: float
    r: np.ndarray
    n_f: Optional[np.ndarray] = None
    xi: Optional[np.ndarray] = None
    sigma: Optional[np.ndarray] = None
    r_short: Optional[np.ndarray] = None
    seed: Optional[int] = None
    meta: dict = None

    def __len__(self):
        return self.r.shape[0]

    @property
    def t_days(self) -> np.ndarray:
        return self.dt * np.arange(len(self))

    def to_csv(self, path) -> Path:
        path = Path(path)
        cols = [self.t_days, self.r]
        names = ["t_days", "r"]
        for name in ("n_f", "xi", "sigma"):
            col = getattr(self, name)
            if col is not None:
                cols.append(col)
                names.append(name)
        np.savetxt(path, np.column_stack(cols), delimiter=",", header=",".join(names),
                   comments="", fmt="%.17g")
        return path

    @classmethod
    def from_csv(cls, path) -> "ReturnSeries":
        path = Path(path)
        with open(path) as fh:
            names = fh.readline().strip().split(",")
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        cols = dict(zip(names, data.T))
        if "t_days" not in cols or "r" not in cols:
            raise ValueError(f"{path}: expected columns t_days,r")
        t = cols["t_days"]
        dt = float(t[1] - t[0]) if t.size > 1 else 1.0
        return cls(dt=dt, r=cols["r"], n_f=cols.get("n_f"), xi=cols.get("xi"),
                   sigma=cols.get("sigma"))


def trading_day_in_model_time(h_per_sec: float, seconds_per_day: float) -> float:
    """Length of one trading day in scaled time t_s = h t."""
    return h_per_sec * seconds_per_day


# --------------------------------------------------------------------------
# scalar pieces
# --------------------------------------------------------------------------


def inter_event_time(n_f: float, a_tau: float, alpha: float) -> float:
    """tau(n_f) = (1 + a_tau (1 - n_f)/n_f)^(-alpha)."""
    if not 0.0 < n_f < 1.0:
        raise ValueError(f"n_f must lie in (0, 1), got {n_f}")
    return 1.0 / kernels.inv_tau(float(n_f), float(a_tau), float(alpha))


def log_price(n_f: float, xi: float, r0: float) -> float:
    if not 0.0 < n_f < 1.0:
        raise ValueError(f"n_f must lie in (0, 1), got {n_f}")
    return r0 * (1.0 - n_f) / n_f * xi


def seasonal_b0(t, b0: float, w: float):
    """Intraday activity profile b0 exp(-({t mod 1} - 0.5)^2 / w^2) + 0.5, t in days."""
    if not w > 0:
        raise ValueError("w must be positive")
    frac = np.mod(t, 1.0)
    out = b0 * np.exp(-((frac - 0.5) ** 2) / (w * w)) + 0.5
    return float(out) if np.ndim(out) == 0 else out


def volatility(p_abs, a0: float, b0_t):
    return b0_t * (1.0 + a0 * np.asarray(p_abs)) if np.ndim(p_abs) else b0_t * (1.0 + a0 * p_abs)


def step_state(state: MarketState, p: MarketParams, dt: float, noise_f: float,
               noise_xi: float, step_xi: bool = True) -> MarketState:
    """One Euler-Maruyama step of length ``dt`` (model time).

    ``noise_f`` and ``noise_xi`` are standard normal draws; the sqrt(dt)
    scaling is applied here. Both equations share 1/tau evaluated at the
    pre-step ``n_f``; results are reflected into their open domains.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    nf, xi = kernels.euler_step(state.n_f, state.xi, float(dt), float(noise_f),
                                float(noise_xi), p.eps_cf, p.eps_fc, p.eps_cc, p.H,
                                p.a_tau, p.alpha, N_EPS, XI_EPS, step_xi)
    return MarketState(nf, xi, state.t + dt)


def stationary_n_f(p: MarketParams) -> float:
    """Zero of the n_f drift."""
    return p.eps_cf / (p.eps_cf + p.eps_fc)


# --------------------------------------------------------------------------
# simulation
# --------------------------------------------------------------------------


def _streams(seed: int):
    ss = np.random.SeedSequence(seed)
    return [np.random.default_rng(s) for s in ss.spawn(3)]


def _pack(p: MarketParams, window_model: float, delta_days: float, ctl: StepControl,
          rate_scale: float):
    return np.array([p.eps_cf, p.eps_fc, p.eps_cc, p.H, p.a_tau, p.alpha, p.a0, p.r0,
                     p.b0, p.w, delta_days, window_model, ctl.kappa ** 2, rate_scale, N_EPS,
                     XI_EPS], dtype=np.float64)


class _WindowDriver:
    """Feeds the window kernel with three independent noise streams.

    n_f, xi and omega draw from separate generators spawned from one seed,
    so compositions sharing a seed share the same n_f path.
    """

    def __init__(self, p, flags, ctl, seed, window_model, delta_days, n_windows,
                 record, state, rate_scale):
        self.rng_f, self.rng_x, self.rng_w = _streams(seed)
        self.flags = flags
        self.pars = _pack(p, window_model, delta_days, ctl, rate_scale)
        self.kflags = np.array([flags.use_xi, flags.use_exogenous,
                                flags.use_seasonality, record], dtype=np.int64)
        self.n_windows = n_windows
        self.nf = state.n_f
        self.xi = state.xi if flags.use_xi else 1.0
        self.w = 0
        self.zf = self.rng_f.standard_normal(NOISE_BLOCK)
        self.zx = self.rng_x.standard_normal(NOISE_BLOCK) if flags.use_xi else np.zeros(1)
        self.zw = self.rng_w.standard_normal(NOISE_BLOCK) if flags.use_exogenous else np.zeros(1)
        self.pf = self.px = self.pw = 0

    def _refill(self, buf, pos, rng):
        rest = buf[pos:]
        return np.concatenate([rest, rng.standard_normal(NOISE_BLOCK)]), 0

    def fill(self, r, nf_out, xi_out, sig_out):
        opos = 0
        n = r.shape[0]
        while opos < n:
            (self.nf, self.xi, self.w, self.pf, self.px, self.pw, opos,
             status) = kernels.market_run(self.nf, self.xi, self.w, self.n_windows,
                                           self.pars, self.kflags, self.zf, self.pf,
                                           self.zx, self.px, self.zw, self.pw,
                                           r, nf_out, xi_out, sig_out, opos)
            if status == kernels.NON_FINITE:
                raise FloatingPointError(f"non-finite market state at window {self.w}")
            if status == kernels.NEED_NOISE:
                self.zf, self.pf = self._refill(self.zf, self.pf, self.rng_f)
                if self.flags.use_xi:
                    self.zx, self.px = self._refill(self.zx, self.px, self.rng_x)
                if self.flags.use_exogenous:
                    self.zw, self.pw = self._refill(self.zw, self.pw, self.rng_w)
            elif self.w >= self.n_windows and opos < n:
                raise RuntimeError("window budget exhausted before output was filled")


def simulate_market(p: MarketParams, flags: CompositionFlags, n_days: float, seed: int,
                    ctl: StepControl = StepControl(), state: Optional[MarketState] = None,
                    latent: bool = False, keep_short: bool = False,
                    chunk_returns: int = 4096) -> ReturnSeries:
    """Simulate ``n_days`` trading days and return r_Delta.

    Per short window delta: sigma is evaluated from the state at the window
    start, r_delta = sigma * omega (or sigma itself without exogenous noise),
    then the state is advanced by ``ceil(H * delta_model / (kappa^2 tau))``
    Euler substeps. ``Delta/delta`` consecutive r_delta are summed into r_Delta.
    """
    m = p.windows_per_return
    n_returns = int(math.floor(n_days / p.Delta + 1e-9))
    if n_returns < 1:
        raise ValueError("n_days shorter than one return window")
    if state is None:
        state = MarketState(stationary_n_f(p), 0.0)
    n_windows = n_returns * m
    drv = _WindowDriver(p, flags, ctl, seed, p.window_model_time, p.delta, n_windows,
                        latent or keep_short, state, p.H)

    r = np.empty(n_returns)
    nf_col = np.empty(n_returns) if latent else None
    xi_col = np.empty(n_returns) if latent else None
    sig_col = np.empty(n_returns) if latent else None
    short = np.empty(n_windows) if keep_short else None

    per = max(1, chunk_returns * 390 // m)
    buf = np.empty(per * m)
    rec = [np.empty(per * m) for _ in range(3)] if (latent or keep_short) else [np.empty(1)] * 3
    done = 0
    while done < n_returns:
        k = min(per, n_returns - done)
        view = buf[: k * m]
        drv.fill(view, rec[0], rec[1], rec[2])
        r[done:done + k] = view.reshape(k, m).sum(axis=1) if m > 1 else view
        if latent:
            nf_col[done:done + k] = rec[0][: k * m: m]
            xi_col[done:done + k] = rec[1][: k * m: m]
            sig_col[done:done + k] = rec[2][: k * m: m]
        if keep_short:
            short[done * m:(done + k) * m] = view
        done += k
    meta = {"params": p.to_dict(), "flags": flags.to_dict(), "n_days": n_days,
            "kappa": ctl.kappa, "n_f0": state.n_f, "xi0": state.xi}
    return ReturnSeries(dt=p.Delta, r=r, n_f=nf_col, xi=xi_col, sigma=sig_col,
                        r_short=short, seed=seed, meta=meta)


def simulate_state(p: MarketParams, duration: float, sample_dt: float, seed: int,
                   ctl: StepControl = StepControl(), use_xi: bool = True,
                   state: Optional[MarketState] = None):
    """Sample (n_f, xi) every ``sample_dt`` of model time for ``duration``.

    Returns two arrays of length ``floor(duration / sample_dt)``; the first
    entry is the initial state.
    """
    n = int(math.floor(duration / sample_dt + 1e-9))
    if state is None:
        state = MarketState(stationary_n_f(p), 0.0)
    flags = CompositionFlags(use_xi=use_xi, use_exogenous=False, use_seasonality=False)
    drv = _WindowDriver(p, flags, ctl, seed, sample_dt, 1.0, n, True, state,
                        p.H if use_xi else 1.0)
    r = np.empty(n)
    nf = np.empty(n)
    xi = np.empty(n)
    sig = np.empty(n)
    drv.fill(r, nf, xi, sig)
    return nf, xi
