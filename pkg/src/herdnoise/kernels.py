"""Inner loops: SDE integration, herding-market windows, agent chain events.

Every kernel is resumable. It consumes pre-drawn random numbers from the
buffers it is given and returns as soon as either the output buffer is full
or the next step would need more randomness than is left; the caller refills
and calls again with the returned state. Refill boundaries therefore never
change the sequence of draws, which keeps output independent of chunk sizes.

Status codes: 0 = output full, 1 = random buffer exhausted, -1 = non-finite
state.
"""
import math

import numpy as np

from ._accel import jit

OUT_FULL = 0
NEED_NOISE = 1
NON_FINITE = -1


@jit
def reflect(x, lo, hi):
    """Fold ``x`` back into ``[lo, hi]``; NaN passes through unchanged."""
    for _ in range(64):
        if x < lo:
            x = 2.0 * lo - x
        elif x > hi:
            x = 2.0 * hi - x
        else:
            return x
    if x < lo:
        return lo
    if x > hi:
        return hi
    return x


# --------------------------------------------------------------------------
# power-law SDE class  dx = (eta - lam/2) x^(2 eta - 1) dt + x^eta dW
# --------------------------------------------------------------------------


@jit
def powerlaw_run(x, since, eta, lam, x_min, x_max, kappa2, max_step,
                 sample_dt, z, zpos, out, opos):
    c = eta - 0.5 * lam
    nz = z.shape[0]
    nout = out.shape[0]
    while opos < nout:
        if zpos >= nz:
            return x, since, zpos, opos, NEED_NOISE
        xe = x ** eta
        g2 = xe * xe
        # kappa^2 / x^(2 eta - 2) == kappa^2 x^2 / x^(2 eta)
        dt = kappa2 * x * x / g2
        if dt > max_step:
            dt = max_step
        hit = False
        if since + dt >= sample_dt:
            dt = sample_dt - since
            hit = True
        x = x + c * (g2 / x) * dt + xe * math.sqrt(dt) * z[zpos]
        zpos += 1
        x = reflect(x, x_min, x_max)
        if not math.isfinite(x):
            return x, since, zpos, opos, NON_FINITE
        if hit:
            out[opos] = x
            opos += 1
            since = 0.0
        else:
            since += dt
    return x, since, zpos, opos, OUT_FULL


@jit
def generic_run(drift, diffusion, scale, has_scale, x, since, x_min, x_max,
                kappa2, max_step, sample_dt, z, zpos, out, opos):
    nz = z.shape[0]
    nout = out.shape[0]
    while opos < nout:
        if zpos >= nz:
            return x, since, zpos, opos, NEED_NOISE
        g = diffusion(x)
        dt = max_step
        if has_scale and g > 0.0:
            s = kappa2 * (scale(x) / g) ** 2
            if s < dt:
                dt = s
        hit = False
        if since + dt >= sample_dt:
            dt = sample_dt - since
            hit = True
        x = x + drift(x) * dt + g * math.sqrt(dt) * z[zpos]
        zpos += 1
        x = reflect(x, x_min, x_max)
        if not math.isfinite(x):
            return x, since, zpos, opos, NON_FINITE
        if hit:
            out[opos] = x
            opos += 1
            since = 0.0
        else:
            since += dt
    return x, since, zpos, opos, OUT_FULL


# --------------------------------------------------------------------------
# three-state herding model
# --------------------------------------------------------------------------


@jit
def inv_tau(nf, a_tau, alpha):
    return (1.0 + a_tau * (1.0 - nf) / nf) ** alpha


@jit
def euler_step(nf, xi, dt, zf, zx, eps_cf, eps_fc, eps_cc, H, a_tau, alpha,
               n_eps, xi_eps, step_xi):
    """One Euler-Maruyama step of (n_f, xi); ``zf``/``zx`` are N(0, 1)."""
    rate = inv_tau(nf, a_tau, alpha)
    sq = math.sqrt(dt)
    drift = ((1.0 - nf) * eps_cf - nf * eps_fc) * rate
    var = 2.0 * nf * (1.0 - nf) * rate
    if var < 0.0:
        var = 0.0
    nf_new = nf + drift * dt + math.sqrt(var) * sq * zf
    nf_new = reflect(nf_new, n_eps, 1.0 - n_eps)
    xi_new = xi
    if step_xi:
        var = 2.0 * H * (1.0 - xi * xi) * rate
        if var < 0.0:
            var = 0.0
        xi_new = xi - 2.0 * H * eps_cc * xi * rate * dt + math.sqrt(var) * sq * zx
        xi_new = reflect(xi_new, -1.0 + xi_eps, 1.0 - xi_eps)
    return nf_new, xi_new


@jit
def market_run(nf, xi, w_global, n_windows, pars, flags, zf, pf, zx, px, zw, pw,
               r_out, nf_out, xi_out, sig_out, opos):
    """Advance the herding model window by window.

    ``pars`` = [eps_cf, eps_fc, eps_cc, H, a_tau, alpha, a0, r0, b0, w,
    delta_days, window_model, kappa2, rate_scale, n_eps, xi_eps];
    ``flags`` = [use_xi, use_exogenous, use_seasonality, record].
    The state is recorded at the start of each window, then integrated over
    the window with ``n_sub`` substeps.
    """
    eps_cf = pars[0]
    eps_fc = pars[1]
    eps_cc = pars[2]
    H = pars[3]
    a_tau = pars[4]
    alpha = pars[5]
    a0 = pars[6]
    r0 = pars[7]
    b0 = pars[8]
    width = pars[9]
    delta_days = pars[10]
    window_model = pars[11]
    kappa2 = pars[12]
    rate_scale = pars[13]
    n_eps = pars[14]
    xi_eps = pars[15]
    use_xi = flags[0] != 0
    use_exo = flags[1] != 0
    use_season = flags[2] != 0
    record = flags[3] != 0
    nzf = zf.shape[0]
    nzx = zx.shape[0]
    nzw = zw.shape[0]
    nout = r_out.shape[0]
    while opos < nout and w_global < n_windows:
        tau = 1.0 / inv_tau(nf, a_tau, alpha)
        nsub = int(math.ceil(window_model * rate_scale / (kappa2 * tau)))
        if nsub < 1:
            nsub = 1
        if pf + nsub > nzf:
            return nf, xi, w_global, pf, px, pw, opos, NEED_NOISE
        if use_xi and px + nsub > nzx:
            return nf, xi, w_global, pf, px, pw, opos, NEED_NOISE
        if use_exo and pw >= nzw:
            return nf, xi, w_global, pf, px, pw, opos, NEED_NOISE
        mood = xi if use_xi else 1.0
        price = r0 * (1.0 - nf) / nf * mood
        if use_season:
            frac = (w_global * delta_days) % 1.0
            b0t = b0 * math.exp(-((frac - 0.5) ** 2) / (width * width)) + 0.5
        else:
            b0t = b0
        sigma = b0t * (1.0 + a0 * abs(price))
        if use_exo:
            r_out[opos] = sigma * zw[pw]
            pw += 1
        else:
            r_out[opos] = sigma
        if record:
            nf_out[opos] = nf
            xi_out[opos] = mood
            sig_out[opos] = sigma
        opos += 1
        h = window_model / nsub
        for _ in range(nsub):
            zxi = 0.0
            if use_xi:
                zxi = zx[px]
                px += 1
            nf, xi = euler_step(nf, xi, h, zf[pf], zxi, eps_cf, eps_fc, eps_cc,
                                H, a_tau, alpha, n_eps, xi_eps, use_xi)
            pf += 1
        if not (math.isfinite(nf) and math.isfinite(xi)):
            return nf, xi, w_global, pf, px, pw, opos, NON_FINITE
        w_global += 1
    return nf, xi, w_global, pf, px, pw, opos, OUT_FULL


# --------------------------------------------------------------------------
# agent chain (Gillespie)
# --------------------------------------------------------------------------


@jit
def chain_run(counts, t, next_k, sample_dt, sigma, hmat, ebuf, ubuf, pos,
              out, opos):
    """Event-driven simulation of agent counts.

    Per-agent rate i -> j is ``sigma[i, j] + hmat[i, j] * counts[j]``.
    ``out[k]`` receives ``counts[0] / N`` at time ``(next_k + k') * sample_dt``.
    """
    K = counts.shape[0]
    N = 0
    for i in range(K):
        N += counts[i]
    rates = np.zeros(K * K)
    nb = ebuf.shape[0]
    nout = out.shape[0]
    while opos < nout:
        if pos >= nb:
            return t, next_k, pos, opos, NEED_NOISE
        total = 0.0
        for i in range(K):
            for j in range(K):
                r = 0.0
                if i != j and counts[i] > 0:
                    r = counts[i] * (sigma[i, j] + hmat[i, j] * counts[j])
                rates[i * K + j] = r
                total += r
        if total <= 0.0:
            # frozen configuration: fill the remaining grid
            while opos < nout:
                out[opos] = counts[0] / N
                opos += 1
                next_k += 1
            return t, next_k, pos, opos, OUT_FULL
        t_new = t + ebuf[pos] / total
        while next_k * sample_dt <= t_new and opos < nout:
            out[opos] = counts[0] / N
            opos += 1
            next_k += 1
        if opos >= nout:
            # the pending event lies beyond the grid; draw it again next call
            return t, next_k, pos, opos, OUT_FULL
        target = ubuf[pos] * total
        pos += 1
        acc = 0.0
        pick = K * K - 1
        for k in range(K * K):
            acc += rates[k]
            if target < acc:
                pick = k
                break
        while rates[pick] == 0.0:
            pick -= 1
        counts[pick // K] -= 1
        counts[pick % K] += 1
        t = t_new
    return t, next_k, pos, opos, OUT_FULL
