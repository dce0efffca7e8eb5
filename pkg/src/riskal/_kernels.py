"""Compiled log-density and NUTS kernels.

Everything here is numba-jitted and operates on plain arrays; the public
modules wrap these with validation and dataclasses.
"""

import math

import numba as nb
import numpy as np

COMPLETE, NONE, PARTIAL = 0, 1, 2
GAUSSIAN, CAUCHY = 0, 1

_LOG_2PI = math.log(2.0 * math.pi)
_LOG_PI = math.log(math.pi)
_LOG_2 = math.log(2.0)

# Hard cap on tree depth; sized for the per-level checkpoint buffers.
MAX_DEPTH_CAP = 16


@nb.njit(cache=True, nogil=True, error_model="numpy")
def _half_cauchy_logpdf(s, scale):
    return _LOG_2 - _LOG_PI - math.log(scale) - math.log1p((s / scale) ** 2)


@nb.njit(cache=True, nogil=True, error_model="numpy")
def _d_half_cauchy_dlog(s, scale):
    # d/du of log HalfCauchy(exp(u) | scale)
    return -2.0 * s * s / (scale * scale + s * s)


@nb.njit(cache=True, nogil=True, error_model="numpy")
def _normal_logpdf(v, mu, sd):
    z = (v - mu) / sd
    return -0.5 * _LOG_2PI - math.log(sd) - 0.5 * z * z


@nb.njit(cache=True, nogil=True, error_model="numpy")
def model_logp_grad(u, args):
    """Log posterior and gradient of a straight-line population model.

    ``args`` is ``(x, y, grp, n_groups, pooling, likelihood, priors, fixed,
    noncentered)``. Layout of ``u``: slopes block, intercepts block, log
    noise-scale block, then (partial pooling only) ``mu_m, log sigma_m, mu_c,
    log sigma_c`` with ``mu_m`` log-transformed under the Cauchy family.
    Under partial pooling, groups flagged in ``noncentered`` store
    standardized offsets instead of the slope and intercept themselves.
    """
    x, y, grp, G, pooling, lik, pri, fixed, noncentered = args
    n = u.size
    grad = np.zeros(n)
    lp = 0.0
    m = np.empty(G)
    c = np.empty(G)
    s = np.empty(G)
    h = 3 * G
    mu_m = 0.0
    dmu_m = 1.0
    sig_m = 1.0
    mu_c = 0.0
    sig_c = 1.0
    for g in range(G):
        s[g] = math.exp(u[2 * G + g])
    hier = pooling == PARTIAL
    if hier:
        if lik == CAUCHY:
            mu_m = math.exp(u[h])
            dmu_m = mu_m
        else:
            mu_m = u[h]
        sig_m = math.exp(u[h + 1])
        mu_c = u[h + 2]
        sig_c = math.exp(u[h + 3])
        for g in range(G):
            if noncentered[g]:
                m[g] = mu_m + sig_m * u[g]
                c[g] = mu_c + sig_c * u[G + g]
            else:
                m[g] = u[g]
                c[g] = u[G + g]
    else:
        for g in range(G):
            m[g] = u[g]
            c[g] = u[G + g]

    dm = np.zeros(G)
    dc = np.zeros(G)
    for i in range(x.size):
        g = grp[i]
        sg = s[g]
        z = (y[i] - m[g] * x[i] - c[g]) / sg
        if lik == CAUCHY:
            q = 1.0 + z * z
            lp += -_LOG_PI - math.log(sg) - math.log(q)
            w = 2.0 * z / (sg * q)
            grad[2 * G + g] += -1.0 + 2.0 * z * z / q
        else:
            lp += -0.5 * _LOG_2PI - math.log(sg) - 0.5 * z * z
            w = z / sg
            grad[2 * G + g] += -1.0 + z * z
        dm[g] += w * x[i]
        dc[g] += w

    noise_scale = pri[6]
    for g in range(G):
        lp += _half_cauchy_logpdf(s[g], noise_scale) + u[2 * G + g]
        grad[2 * G + g] += _d_half_cauchy_dlog(s[g], noise_scale) + 1.0

    if hier:
        for g in range(G):
            if noncentered[g]:
                continue
            zm = (m[g] - mu_m) / sig_m
            zc = (c[g] - mu_c) / sig_c
            lp += -_LOG_2PI - math.log(sig_m) - math.log(sig_c) - 0.5 * (zm * zm + zc * zc)
            grad[g] += dm[g] - zm / sig_m
            grad[G + g] += dc[g] - zc / sig_c
            grad[h] += zm / sig_m * dmu_m
            grad[h + 1] += -1.0 + zm * zm
            grad[h + 2] += zc / sig_c
            grad[h + 3] += -1.0 + zc * zc
    if hier:
        for g in range(G):
            if not noncentered[g]:
                continue
            rm = u[g]
            rc = u[G + g]
            lp += -_LOG_2PI - 0.5 * (rm * rm + rc * rc)
            grad[g] += dm[g] * sig_m - rm
            grad[G + g] += dc[g] * sig_c - rc
            grad[h] += dm[g] * dmu_m
            grad[h + 1] += dm[g] * rm * sig_m
            grad[h + 2] += dc[g]
            grad[h + 3] += dc[g] * rc * sig_c
    if hier:
        if lik == CAUCHY:
            k, theta = pri[0], pri[1]
            lp += ((k - 1.0) * math.log(mu_m) - mu_m / theta - math.lgamma(k)
                   - k * math.log(theta) + u[h])
            grad[h] += k - mu_m / theta
            lp += _half_cauchy_logpdf(sig_m, pri[2]) + u[h + 1]
            grad[h + 1] += _d_half_cauchy_dlog(sig_m, pri[2]) + 1.0
            lp += _normal_logpdf(mu_c, pri[3], pri[4])
            grad[h + 2] += -(mu_c - pri[3]) / (pri[4] * pri[4])
            lp += _half_cauchy_logpdf(sig_c, pri[5]) + u[h + 3]
            grad[h + 3] += _d_half_cauchy_dlog(sig_c, pri[5]) + 1.0
        else:
            # pri: intercept mean, slope mean, intercept sd, slope sd, a, b
            a, b = pri[4], pri[5]
            lp += _normal_logpdf(mu_m, pri[1], pri[3])
            grad[h] += -(mu_m - pri[1]) / (pri[3] * pri[3])
            lp += _normal_logpdf(mu_c, pri[0], pri[2])
            grad[h + 2] += -(mu_c - pri[0]) / (pri[2] * pri[2])
            for j in (h + 1, h + 3):
                sj = math.exp(u[j])
                lp += (a * math.log(b) - math.lgamma(a) - (a + 1.0) * u[j]
                       - b / sj + u[j])
                grad[j] += -a + b / sj
    else:
        fmu_m, fsig_m, fmu_c, fsig_c = fixed[0], fixed[1], fixed[2], fixed[3]
        for g in range(G):
            lp += _normal_logpdf(m[g], fmu_m, fsig_m)
            lp += _normal_logpdf(c[g], fmu_c, fsig_c)
            grad[g] += dm[g] - (m[g] - fmu_m) / (fsig_m * fsig_m)
            grad[G + g] += dc[g] - (c[g] - fmu_c) / (fsig_c * fsig_c)
    return lp, grad


@nb.njit(cache=True, nogil=True, error_model="numpy")
def diag_gaussian_logp_grad(u, args):
    """Independent Gaussian target with per-coordinate mean and sd."""
    mean, sd = args
    z = (u - mean) / sd
    lp = -0.5 * np.sum(z * z) - np.sum(np.log(sd)) - 0.5 * u.size * _LOG_2PI
    return lp, -z / sd


@nb.njit(cache=True, nogil=True, error_model="numpy")
def gaussian_mean_logp_grad(u, args):
    """Unknown mean, known noise sd, Normal prior on the mean."""
    y, noise_sd, prior_mean, prior_sd = args
    mu = u[0]
    r = (y - mu) / noise_sd
    lp = (-0.5 * np.sum(r * r) - y.size * (math.log(noise_sd) + 0.5 * _LOG_2PI)
          + _normal_logpdf(mu, prior_mean, prior_sd))
    g = np.empty(1)
    g[0] = np.sum(r) / noise_sd - (mu - prior_mean) / (prior_sd * prior_sd)
    return lp, g


# ---------------------------------------------------------------------------
# sampler


@nb.njit(cache=True, nogil=True, error_model="numpy")
def _splitmix64(z):
    z = (z + np.uint64(0x9E3779B97F4A7C15))
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


@nb.njit(cache=True, nogil=True, error_model="numpy")
def _reseed(seed, chain, iteration):
    z = _splitmix64(np.uint64(seed))
    z = _splitmix64(z ^ np.uint64(chain))
    z = _splitmix64(z ^ np.uint64(iteration))
    np.random.seed(np.uint32(z & np.uint64(0xFFFFFFFF)))


@nb.njit(cache=True, nogil=True, error_model="numpy")
def leapfrog_step(f, args, theta, p, grad, eps, inv_metric):
    p_half = p + 0.5 * eps * grad
    theta_new = theta + eps * inv_metric * p_half
    lp_new, grad_new = f(theta_new, args)
    p_new = p_half + 0.5 * eps * grad_new
    return theta_new, p_new, lp_new, grad_new


@nb.njit(cache=True, nogil=True, error_model="numpy")
def _hamiltonian(lp, p, inv_metric):
    h = -lp + 0.5 * np.sum(p * p * inv_metric)
    if not math.isfinite(h):
        return math.inf
    return h


@nb.njit(cache=True, nogil=True, error_model="numpy")
def _logaddexp(a, b):
    if a == -math.inf:
        return b
    if b == -math.inf:
        return a
    mx = max(a, b)
    return mx + math.log(math.exp(a - mx) + math.exp(b - mx))


@nb.njit(cache=True, nogil=True, error_model="numpy")
def dual_average_step(state, accept_stat, target, gamma, t0, kappa):
    """In-place Nesterov dual averaging update.

    ``state`` = [log_eps, log_eps_bar, h_bar, mu, count].
    """
    state[4] += 1.0
    m = state[4]
    eta = 1.0 / (m + t0)
    state[2] = (1.0 - eta) * state[2] + eta * (target - accept_stat)
    state[0] = state[3] - math.sqrt(m) / gamma * state[2]
    w = m ** (-kappa)
    state[1] = w * state[0] + (1.0 - w) * state[1]


@nb.njit(cache=True, nogil=True, error_model="numpy")
def _find_reasonable_eps(f, args, theta, lp, grad, inv_metric):
    eps = 1.0
    d = theta.size
    p = np.random.standard_normal(d) / np.sqrt(inv_metric)
    h0 = _hamiltonian(lp, p, inv_metric)
    _, p1, lp1, _ = leapfrog_step(f, args, theta, p, grad, eps, inv_metric)
    delta = h0 - _hamiltonian(lp1, p1, inv_metric)
    direction = 1.0 if delta > math.log(0.8) else -1.0
    for _ in range(100):
        _, p1, lp1, _ = leapfrog_step(f, args, theta, p, grad, eps, inv_metric)
        delta = h0 - _hamiltonian(lp1, p1, inv_metric)
        if direction == 1.0 and not delta > math.log(0.8):
            break
        if direction == -1.0 and not delta < math.log(0.8):
            break
        eps = eps * 2.0 if direction == 1.0 else eps * 0.5
        if eps < 1e-10 or eps > 1e7:
            break
    return eps


@nb.njit(cache=True, nogil=True, error_model="numpy")
def _nuts_transition(f, args, theta, lp, grad, eps, inv_metric, max_depth):
    """One multinomial NUTS transition with the position-based U-turn rule.

    Returns (theta, lp, grad, accept_stat, diverging, depth, n_leapfrog).
    """
    d = theta.size
    p0 = np.random.standard_normal(d) / np.sqrt(inv_metric)
    h0 = _hamiltonian(lp, p0, inv_metric)

    th_m = theta.copy()
    p_m = p0.copy()
    g_m = grad.copy()
    th_p = theta.copy()
    p_p = p0.copy()
    g_p = grad.copy()

    s_th = theta.copy()
    s_lp = lp
    s_g = grad.copy()
    log_w_tree = 0.0

    ck_th = np.empty((MAX_DEPTH_CAP + 1, d))
    ck_p = np.empty((MAX_DEPTH_CAP + 1, d))

    depth = 0
    diverging = False
    sum_accept = 0.0
    n_leaves = 0
    while depth < max_depth:
        v = 1.0 if np.random.random() < 0.5 else -1.0
        if v > 0:
            th = th_p.copy()
            pp = p_p.copy()
            gg = g_p.copy()
        else:
            th = th_m.copy()
            pp = p_m.copy()
            gg = g_m.copy()
        lpp = 0.0
        log_w_sub = -math.inf
        sub_th = th.copy()
        sub_lp = 0.0
        sub_g = gg.copy()
        turning = False
        n_steps = 1 << depth
        for n in range(n_steps):
            th, pp, lpp, gg = leapfrog_step(f, args, th, pp, gg, v * eps, inv_metric)
            h = _hamiltonian(lpp, pp, inv_metric)
            n_leaves += 1
            if h - h0 > 1000.0:
                diverging = True
                break
            lw = h0 - h
            sum_accept += min(1.0, math.exp(lw))
            log_w_sub = _logaddexp(log_w_sub, lw)
            if math.log(np.random.random()) < lw - log_w_sub:
                sub_th = th.copy()
                sub_lp = lpp
                sub_g = gg.copy()
            for j in range(1, depth + 1):
                if n % (1 << j) == 0:
                    ck_th[j, :] = th
                    ck_p[j, :] = pp
            for j in range(1, depth + 1):
                if (n + 1) % (1 << j) == 0:
                    dth = v * (th - ck_th[j])
                    if (np.sum(dth * ck_p[j] * inv_metric) < 0.0
                            or np.sum(dth * pp * inv_metric) < 0.0):
                        turning = True
                        break
            if turning:
                break
        if diverging or turning:
            break
        if v > 0:
            th_p = th
            p_p = pp
            g_p = gg
        else:
            th_m = th
            p_m = pp
            g_m = gg
        if math.log(np.random.random()) < log_w_sub - log_w_tree:
            s_th = sub_th
            s_lp = sub_lp
            s_g = sub_g
        log_w_tree = _logaddexp(log_w_tree, log_w_sub)
        depth += 1
        dth = th_p - th_m
        if (np.sum(dth * p_m * inv_metric) < 0.0
                or np.sum(dth * p_p * inv_metric) < 0.0):
            break
    accept = sum_accept / max(n_leaves, 1)
    return s_th, s_lp, s_g, accept, diverging, depth, n_leaves


@nb.njit(cache=True, nogil=True, error_model="numpy")
def _hmc_transition(f, args, theta, lp, grad, eps, inv_metric, n_leapfrog):
    d = theta.size
    p = np.random.standard_normal(d) / np.sqrt(inv_metric)
    h0 = _hamiltonian(lp, p, inv_metric)
    th = theta.copy()
    gg = grad.copy()
    lpp = lp
    for _ in range(n_leapfrog):
        th, p, lpp, gg = leapfrog_step(f, args, th, p, gg, eps, inv_metric)
    h = _hamiltonian(lpp, p, inv_metric)
    diverging = h - h0 > 1000.0
    accept = 0.0 if diverging else min(1.0, math.exp(h0 - h))
    if not diverging and np.random.random() < accept:
        return th, lpp, gg, accept, diverging, 0, n_leapfrog
    return theta, lp, grad, accept, diverging, 0, n_leapfrog


@nb.njit(cache=True, nogil=True, error_model="numpy")
def run_chain(f, args, theta0, n_warmup, n_draws, seed, chain, target_accept,
              max_depth, use_nuts, n_leapfrog, adapt_metric):
    """Run one chain: warmup with dual averaging (+ diagonal metric), then draws.

    Returns (draws, accept, diverging, depth, n_steps, step_size, inv_metric),
    where the per-iteration stats cover warmup followed by sampling.
    """
    d = theta0.size
    total = n_warmup + n_draws
    draws = np.empty((n_draws, d))
    accept = np.empty(total)
    diverging = np.zeros(total, dtype=np.bool_)
    depth = np.zeros(total, dtype=np.int64)
    n_steps = np.zeros(total, dtype=np.int64)
    inv_metric = np.ones(d)

    theta = theta0.copy()
    lp, grad = f(theta, args)

    _reseed(seed, chain, total + 1)
    eps = _find_reasonable_eps(f, args, theta, lp, grad, inv_metric)
    gamma, t0, kappa = 0.05, 10.0, 0.75
    da = np.array([math.log(eps), 0.0, 0.0, math.log(10.0 * eps), 0.0])

    win_start = n_warmup // 2
    win_end = int(0.85 * n_warmup)
    do_metric = adapt_metric and (win_end - win_start) >= 10
    w_n = 0
    w_mean = np.zeros(d)
    w_m2 = np.zeros(d)

    for it in range(total):
        _reseed(seed, chain, it)
        if use_nuts:
            theta, lp, grad, a, dv, dp, ns = _nuts_transition(
                f, args, theta, lp, grad, eps, inv_metric, max_depth)
        else:
            theta, lp, grad, a, dv, dp, ns = _hmc_transition(
                f, args, theta, lp, grad, eps, inv_metric, n_leapfrog)
        accept[it] = a
        diverging[it] = dv
        depth[it] = dp
        n_steps[it] = ns
        if it < n_warmup:
            dual_average_step(da, a, target_accept, gamma, t0, kappa)
            eps = math.exp(da[0])
            if do_metric and win_start <= it < win_end:
                w_n += 1
                delta = theta - w_mean
                w_mean += delta / w_n
                w_m2 += delta * (theta - w_mean)
            if do_metric and it == win_end - 1:
                var = w_m2 / (w_n - 1)
                inv_metric = (w_n / (w_n + 5.0)) * var + 1e-3 * (5.0 / (w_n + 5.0))
                _reseed(seed, chain, total + 2)
                eps = _find_reasonable_eps(f, args, theta, lp, grad, inv_metric)
                da[:] = np.array([math.log(eps), 0.0, 0.0, math.log(10.0 * eps), 0.0])
            if it == n_warmup - 1:
                eps = math.exp(da[1])
        else:
            draws[it - n_warmup, :] = theta
    return draws, accept, diverging, depth, n_steps, eps, inv_metric
