"""Closed-form large-sample stand-in for the joint summary distribution.

Builds posterior and predictive summary values directly from a normal
approximation of the M-estimator trajectory: the trajectory is produced by
conditional CDF inversion of a fixed point in the unit cube, and each summary
is a normal-CDF expression in the trajectory, the analysis fractions, and a
handful of limiting scale constants.  Its role is diagnostic: the logits of
these summaries become affine in n (posterior and final-predictive) or n^2
(interim-predictive) as n grows, with limiting slopes available in closed
form, which is what justifies the two-size extrapolation.  The module also
calibrates the scale constants for a concrete scenario by simulation.

All logits here are computed in the log domain (no probability clamping), so
slope measurements stay exact far beyond floating saturation.
"""

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.special import ndtri
from scipy.stats import norm

from ._jit import kernel
from .core import Hypothesis, StreamRole, stream_for
from .errors import ConfigurationError, HessianError
from .predictive import _chol2
from .survival import (
    _breslow_tail_rate,
    _cox_event_table,
    _cox_fit,
    _exp_ph_fit,
    _exp_ph_suffstats,
    _pl_cumhaz,
    _pl_invert,
    breslow_baseline,
    generate_staged_sample,
)

__all__ = [
    "ProxyConfig",
    "sample_m_trajectory",
    "proxy_tau_pp",
    "proxy_tau_ip",
    "proxy_tau_fp",
    "proxy_logit_pp",
    "proxy_logit_ip",
    "proxy_logit_fp",
    "limiting_slope",
    "default_q_l",
    "optimize_q_l",
    "calibrate_proxy_config",
]

_Q_EPS = 1e-12


@dataclass(frozen=True)
class ProxyConfig:
    """Limiting scale constants of one data-generation process.

    ``sigma[t]`` scales the posterior sd at analysis t, ``v`` is the scaled
    covariance of the M-estimator across analyses, ``lam[t]`` scales the
    spread of the censoring-resolved M-estimate around the observed one,
    ``lam_tilde[t]`` the future-stage M-estimate, and ``sigma_tilde[t]`` the
    pooled final posterior sd.  ``c`` are the analysis size multipliers and
    ``q_l`` the fixed lower quantile used by the predictive expressions.
    """

    theta_star: float
    sigma: np.ndarray
    v: np.ndarray
    c: np.ndarray
    lam: np.ndarray = None
    lam_tilde: np.ndarray = None
    sigma_tilde: np.ndarray = None
    q_l: float = 0.0

    def __post_init__(self):
        t_count = self.c.shape[0]
        if self.sigma.shape != (t_count,) or self.v.shape != (t_count, t_count):
            raise ConfigurationError("proxy constants disagree on the analysis count")
        if np.any(self.sigma <= 0):
            raise ConfigurationError("posterior scale constants must be positive")
        eig = np.linalg.eigvalsh(self.v)
        if eig[0] < -1e-10 * max(1.0, eig[-1]):
            raise ConfigurationError("M-estimator covariance must be positive semidefinite")

    @property
    def t_count(self):
        return self.c.shape[0]


def sample_m_trajectory(cfg: ProxyConfig, u, n: int) -> np.ndarray:
    """M-estimate trajectory from a unit-cube point by conditional inversion.

    Component t is the ``u[t]`` quantile of the normal trajectory law given
    the earlier components.
    """
    u = np.asarray(u, dtype=float)
    t_count = cfg.t_count
    if u.shape != (t_count,):
        raise ConfigurationError("need one unit-cube coordinate per analysis")
    cov = cfg.v / n
    out = np.empty(t_count)
    for t in range(t_count):
        if t == 0:
            mean_c = cfg.theta_star
            var_c = cov[0, 0]
        else:
            s11 = cov[:t, :t]
            s12 = cov[:t, t]
            try:
                w = np.linalg.solve(s11, s12)
            except np.linalg.LinAlgError as exc:
                raise HessianError("singular conditional covariance") from exc
            mean_c = cfg.theta_star + w @ (out[:t] - cfg.theta_star)
            var_c = cov[t, t] - s12 @ w
        if var_c <= 0:
            raise HessianError("conditional variance is not positive")
        out[t] = mean_c + math.sqrt(var_c) * ndtri(min(max(u[t], _Q_EPS), 1 - _Q_EPS))
    return out


# ---------------------------------------------------------------------------
# Summary proxies
# ---------------------------------------------------------------------------


def _interval_logit(a_l: float, a_u: float) -> float:
    """Exact logit of ``Phi(a_u) - Phi(a_l)`` in the log domain."""
    if a_u == math.inf:
        return float(norm.logsf(a_l) - norm.logcdf(a_l))
    if a_l == -math.inf:
        return float(norm.logcdf(a_u) - norm.logsf(a_u))
    lcu = norm.logcdf(a_u)
    lcl = norm.logcdf(a_l)
    logp = lcu + math.log1p(-math.exp(min(lcl - lcu, -1e-300)))
    log1mp = np.logaddexp(lcl, norm.logsf(a_u))
    return float(logp - log1mp)


def _pp_args(cfg, theta_hat_t, t, n, hyp):
    s = cfg.sigma[t] / math.sqrt(cfg.c[t] * n)
    a_u = math.inf if math.isinf(hyp.delta_u) else (hyp.delta_u - theta_hat_t) / s
    a_l = -math.inf if math.isinf(hyp.delta_l) else (hyp.delta_l - theta_hat_t) / s
    return a_l, a_u


def proxy_tau_pp(cfg: ProxyConfig, theta_hat_t: float, t: int, n: int, hyp: Hypothesis) -> float:
    a_l, a_u = _pp_args(cfg, theta_hat_t, t, n, hyp)
    return float(norm.cdf(a_u) - norm.cdf(a_l))


def proxy_logit_pp(cfg, theta_hat_t, t, n, hyp) -> float:
    return _interval_logit(*_pp_args(cfg, theta_hat_t, t, n, hyp))


def _q_clamped(q: float) -> float:
    return min(max(q, _Q_EPS), 1.0 - _Q_EPS)


def _ip_args(cfg, theta_hat_t, t, n, hyp, gamma_t):
    lam = cfg.lam[t]
    scale_n = cfg.c[t] / lam
    scale_q = math.sqrt(n) * cfg.sigma[t] * math.sqrt(cfg.c[t]) / lam
    if math.isinf(hyp.delta_u):
        a_u = math.inf
    else:
        a_u = n * (hyp.delta_u - theta_hat_t) * scale_n - ndtri(_q_clamped(cfg.q_l + gamma_t)) * scale_q
    if math.isinf(hyp.delta_l):
        a_l = -math.inf
    else:
        a_l = n * (hyp.delta_l - theta_hat_t) * scale_n - ndtri(_q_clamped(cfg.q_l)) * scale_q
    return a_l, a_u


def proxy_tau_ip(cfg: ProxyConfig, theta_hat_t: float, t: int, n: int, hyp: Hypothesis, gamma_t: float) -> float:
    if cfg.lam is None:
        raise ConfigurationError("interim-predictive proxies need lam constants")
    a_l, a_u = _ip_args(cfg, theta_hat_t, t, n, hyp, gamma_t)
    return float(norm.cdf(a_u) - norm.cdf(a_l))


def proxy_logit_ip(cfg, theta_hat_t, t, n, hyp, gamma_t) -> float:
    if cfg.lam is None:
        raise ConfigurationError("interim-predictive proxies need lam constants")
    return _interval_logit(*_ip_args(cfg, theta_hat_t, t, n, hyp, gamma_t))


def _fp_args(cfg, theta_hat_t, z1, t, n, hyp, gamma_final):
    t_last = cfg.t_count - 1
    c_t = cfg.c[t]
    c_last = cfg.c[t_last]
    if c_last <= c_t:
        raise ConfigurationError("final-predictive proxies need c_T > c_t")
    lam_tilde = cfg.lam_tilde[t]
    gap = c_last - c_t
    main = math.sqrt(n) * c_last / (lam_tilde * math.sqrt(gap))
    quant = cfg.sigma_tilde[t] / (lam_tilde * math.sqrt(gap))
    z_term = z1 * cfg.lam[t] / (math.sqrt(n) * lam_tilde * math.sqrt(c_last * gap))
    if math.isinf(hyp.delta_u):
        a_u = math.inf
    else:
        a_u = (hyp.delta_u - theta_hat_t) * main - ndtri(_q_clamped(cfg.q_l + gamma_final)) * quant - z_term
    if math.isinf(hyp.delta_l):
        a_l = -math.inf
    else:
        a_l = (hyp.delta_l - theta_hat_t) * main - ndtri(_q_clamped(cfg.q_l)) * quant - z_term
    return a_l, a_u


def proxy_tau_fp(cfg: ProxyConfig, theta_hat_t: float, z1: float, t: int, n: int,
                 hyp: Hypothesis, gamma_final: float) -> float:
    if cfg.lam_tilde is None or cfg.sigma_tilde is None or cfg.lam is None:
        raise ConfigurationError("final-predictive proxies need lam, lam_tilde, sigma_tilde")
    a_l, a_u = _fp_args(cfg, theta_hat_t, z1, t, n, hyp, gamma_final)
    return float(norm.cdf(a_u) - norm.cdf(a_l))


def proxy_logit_fp(cfg, theta_hat_t, z1, t, n, hyp, gamma_final) -> float:
    if cfg.lam_tilde is None or cfg.sigma_tilde is None or cfg.lam is None:
        raise ConfigurationError("final-predictive proxies need lam, lam_tilde, sigma_tilde")
    return _interval_logit(*_fp_args(cfg, theta_hat_t, z1, t, n, hyp, gamma_final))


# ---------------------------------------------------------------------------
# Limiting slopes
# ---------------------------------------------------------------------------


def _f_value(kind: str, cfg: ProxyConfig, bound: float, t: int) -> float:
    if math.isinf(bound):
        return math.inf
    diff = bound - cfg.theta_star
    if kind == "pp":
        return math.sqrt(cfg.c[t]) * diff / cfg.sigma[t]
    if kind == "ip":
        return cfg.c[t] * diff / cfg.lam[t]
    if kind == "fp":
        t_last = cfg.t_count - 1
        gap = cfg.c[t_last] - cfg.c[t]
        return cfg.c[t_last] * diff / (cfg.lam_tilde[t] * math.sqrt(gap))
    raise ConfigurationError(f"unknown summary kind {kind!r}")


def limiting_slope(kind: str, cfg: ProxyConfig, hyp: Hypothesis, t: int) -> float:
    """Limiting derivative of the summary logit in its predictor.

    The predictor is n for posterior and final-predictive summaries and n^2
    for interim-predictive ones.  The sign flips when the target value falls
    outside the alternative interval, and the magnitude is half the square of
    the smaller boundary separation, so a boundary-null process has slope 0.
    """
    if kind == "ip" and cfg.lam is None:
        raise ConfigurationError("interim-predictive slopes need lam constants")
    if kind == "fp" and (cfg.lam_tilde is None or cfg.lam is None):
        raise ConfigurationError("final-predictive slopes need lam_tilde constants")
    f_u = _f_value(kind, cfg, hyp.delta_u, t)
    f_l = _f_value(kind, cfg, hyp.delta_l, t)
    outside = 0.0 if hyp.contains(cfg.theta_star) else 1.0
    if cfg.theta_star == hyp.delta_u or cfg.theta_star == hyp.delta_l:
        return 0.0
    return (0.5 - outside) * min(f_u * f_u, f_l * f_l)


def default_q_l(hyp: Hypothesis, gamma: float) -> float:
    """Fixed lower quantile for one-sided hypotheses.

    An upper-bounded alternative compares the gamma-quantile to the upper
    bound (q_l = 0); a lower-bounded one compares the (1-gamma)-quantile to
    the lower bound (q_l = 1 - gamma).  Two-sided alternatives should use
    :func:`optimize_q_l`.
    """
    if math.isinf(hyp.delta_l):
        return 0.0
    if math.isinf(hyp.delta_u):
        return 1.0 - gamma
    raise ConfigurationError("two-sided hypotheses need an optimized q_l")


def optimize_q_l(cfg: ProxyConfig, hyp: Hypothesis, gamma: float, t: int, n: int) -> float:
    """1-D search of the fixed lower quantile maximizing the interim proxy.

    Evaluated once at a calibration size and then frozen.
    """
    if math.isinf(hyp.delta_l) or math.isinf(hyp.delta_u):
        return default_q_l(hyp, gamma)

    def neg(q):
        trial = replace(cfg, q_l=float(q))
        return -proxy_tau_ip(trial, cfg.theta_star, t, n, hyp, gamma)

    res = minimize_scalar(neg, bounds=(0.0, 1.0 - gamma), method="bounded")
    return float(res.x)


# ---------------------------------------------------------------------------
# Scenario calibration (Monte Carlo)
# ---------------------------------------------------------------------------


def calibrate_proxy_config(
    scenario,
    family,
    n_cal: int = 20000,
    reps: int = 400,
    resolution_reps: int = 40,
    m_draws: int = 200,
    base_seed: int = 715,
) -> ProxyConfig:
    """Estimate the limiting scale constants of a degenerate process by simulation.

    Needs a degenerate family (a single process).  Posterior spread and the
    M-estimator covariance always come from ``reps`` full trajectories;
    resolution and future-stage constants are added only when the scenario's
    policy reads the corresponding summaries.
    """
    if not getattr(family, "degenerate", False):
        raise ConfigurationError("proxy calibration needs a degenerate family")
    if scenario.loss_kind not in ("exp_ph", "cox"):
        raise ConfigurationError("proxy calibration covers the survival losses")
    process = family.draw(stream_for(base_seed, 0, 0, StreamRole.THRESHOLD_SEARCH))
    schedule = scenario.schedule
    t_count = schedule.t_count
    c = np.asarray(schedule.c, dtype=float)
    omega = scenario.omega.resolve(None)
    prec_t = scenario.prec_theta()
    prec_u = scenario.prec_logeta()
    max_fu = schedule.max_followup if schedule.max_followup > 0 else math.inf
    hyp = scenario.hypothesis

    theta_hat = np.full((reps, t_count), np.nan)
    post_sd = np.full((reps, t_count), np.nan)
    sizes = schedule.analysis_sizes(n_cal)

    needs_ip = scenario.needs_ip
    needs_fp = scenario.needs_fp
    res_devs = [[] for _ in range(t_count)]
    fut_devs = [[] for _ in range(t_count)]
    pooled_sds = [[] for _ in range(t_count)]

    for rep in range(reps):
        rng = stream_for(base_seed, rep, 0, StreamRole.OUTER_DATA)
        staged = generate_staged_sample(process.baseline, process.log_hr, schedule, n_cal, rng)
        for t in range(t_count):
            view = staged.view(t, scenario.artificial_censoring)
            if scenario.loss_kind == "exp_ph":
                d0, e0, d1, e1 = _exp_ph_suffstats(view.y, view.delta, view.arm)
                th_p, u_p, var_t, cov_tu, var_u, status = _exp_ph_fit(
                    d0, e0, d1, e1, omega, prec_t, prec_u
                )
                if status != 0:
                    continue
                theta_hat[rep, t] = math.log((d1 / e1) / (d0 / e0))
                post_sd[rep, t] = math.sqrt(var_t)
                posterior = (th_p, u_p, var_t, cov_tu, var_u)
            else:
                ev_arm, ev_n0, ev_n1 = _cox_event_table(view.y, view.delta, view.arm)
                ev = (ev_arm.astype(np.float64), ev_n0.astype(np.float64),
                      ev_n1.astype(np.float64))
                th_p, h_total, status = _cox_fit(*ev, omega, prec_t, 0.0)
                if status != 0:
                    continue
                th_mle, _, st_mle = _cox_fit(*ev, 1.0, 0.0, 0.0)
                theta_hat[rep, t] = th_mle if st_mle == 0 else np.nan
                post_sd[rep, t] = 1.0 / math.sqrt(h_total)
                posterior = (th_p, 1.0 / math.sqrt(h_total))

            if rep < resolution_reps and (needs_ip[t] or needs_fp[t]):
                rng_in = stream_for(base_seed, rep, t + 1, StreamRole.INNER_PREDICTIVE)
                ac_idx = np.flatnonzero(view.ac_mask).astype(np.int64)
                n_fut = int(sizes[-1] - sizes[t]) if needs_fp[t] else 0
                if scenario.loss_kind == "exp_ph":
                    th_p, u_p, var_t, cov_tu, var_u = posterior
                    l11, l21, l22 = _chol2(var_t, cov_tu, var_u)
                    if needs_ip[t] and ac_idx.shape[0] > 0:
                        ths = _augmented_thetas_exp(
                            view.y, view.delta, view.arm, view.caps, ac_idx,
                            th_p, u_p, l11, l21, l22, max_fu, m_draws, rng_in,
                        )
                        res_devs[t].extend(ths[np.isfinite(ths)] - theta_hat[rep, t])
                    if needs_fp[t] and n_fut > 0:
                        thf, psd = _future_stats_exp(
                            view.y, view.delta, view.arm, view.caps, ac_idx, n_fut,
                            th_p, u_p, l11, l21, l22, omega, prec_t, prec_u,
                            max_fu, m_draws, rng_in,
                        )
                        keep = np.isfinite(thf)
                        fut_devs[t].extend(thf[keep] - theta_hat[rep, t])
                        pooled_sds[t].extend(psd[keep])
                else:
                    th_p, sd_p = posterior
                    baseline = breslow_baseline(view, th_p)
                    if needs_ip[t] and ac_idx.shape[0] > 0:
                        ths = _augmented_thetas_cox(
                            view.y, view.delta, view.arm, view.caps, ac_idx,
                            baseline.times, baseline.cum, th_p, sd_p, max_fu,
                            m_draws, rng_in,
                        )
                        res_devs[t].extend(ths[np.isfinite(ths)] - theta_hat[rep, t])
                    if needs_fp[t] and n_fut > 0:
                        thf, psd = _future_stats_cox(
                            view.y, view.delta, view.arm, view.caps, ac_idx, n_fut,
                            baseline.times, baseline.cum, th_p, sd_p, omega, prec_t,
                            max_fu, m_draws, rng_in,
                        )
                        keep = np.isfinite(thf)
                        fut_devs[t].extend(thf[keep] - theta_hat[rep, t])
                        pooled_sds[t].extend(psd[keep])

    ok = np.all(np.isfinite(theta_hat), axis=1) & np.all(np.isfinite(post_sd), axis=1)
    if ok.sum() < max(20, reps // 2):
        raise ConfigurationError("too many calibration repetitions failed")
    th = theta_hat[ok]
    sigma = post_sd[ok].mean(axis=0) * np.sqrt(c * n_cal)
    v = n_cal * np.cov(th.T).reshape(t_count, t_count)

    lam = None
    if needs_ip.any():
        lam = np.full(t_count, np.nan)
        for t in range(t_count):
            if res_devs[t]:
                lam[t] = float(np.std(np.asarray(res_devs[t]))) * (c[t] * n_cal)
    lam_tilde = None
    sigma_tilde = None
    if needs_fp.any():
        lam_tilde = np.full(t_count, np.nan)
        sigma_tilde = np.full(t_count, np.nan)
        for t in range(t_count):
            if fut_devs[t]:
                gap = (c[-1] - c[t]) * n_cal
                lam_tilde[t] = float(np.std(np.asarray(fut_devs[t]))) * math.sqrt(gap)
                sigma_tilde[t] = float(np.mean(np.asarray(pooled_sds[t]))) * math.sqrt(
                    c[-1] * n_cal
                )

    gamma = float(scenario.thresholds.gamma[0])
    if math.isinf(hyp.delta_l) or math.isinf(hyp.delta_u):
        q_l = default_q_l(hyp, gamma)
    else:
        base = ProxyConfig(
            theta_star=float(process.theta_star), sigma=sigma, v=v, c=c,
            lam=lam, lam_tilde=lam_tilde, sigma_tilde=sigma_tilde, q_l=0.0,
        )
        q_l = optimize_q_l(base, hyp, gamma, 0, n_cal) if lam is not None else 0.0

    return ProxyConfig(
        theta_star=float(process.theta_star),
        sigma=sigma,
        v=v,
        c=c,
        lam=lam,
        lam_tilde=lam_tilde,
        sigma_tilde=sigma_tilde,
        q_l=q_l,
    )


# ---------------------------------------------------------------------------
# Calibration kernels: resolved and future-stage M-estimates
# ---------------------------------------------------------------------------


@kernel
def _augmented_thetas_exp(y, delta, arm, caps, ac_idx, th0, u0, l11, l21, l22,
                          max_fu, m_draws, gen):
    n = y.shape[0]
    n_ac = ac_idx.shape[0]
    is_ac = np.zeros(n, dtype=np.uint8)
    for k in range(n_ac):
        is_ac[ac_idx[k]] = 1
    b_d0 = 0.0
    b_e0 = 0.0
    b_d1 = 0.0
    b_e1 = 0.0
    for i in range(n):
        if is_ac[i] == 0:
            if arm[i] == 1:
                b_e1 += y[i]
                b_d1 += delta[i]
            else:
                b_e0 += y[i]
                b_d0 += delta[i]
    out = np.full(m_draws, np.nan)
    for m in range(m_draws):
        z1 = gen.standard_normal()
        z2 = gen.standard_normal()
        th_m = th0 + l11 * z1
        eta_m = math.exp(u0 + l21 * z1 + l22 * z2)
        d0 = b_d0
        e0 = b_e0
        d1 = b_d1
        e1 = b_e1
        for k in range(n_ac):
            i = ac_idx[k]
            t = caps[i] + gen.standard_exponential() / (eta_m * math.exp(th_m * arm[i]))
            if t <= max_fu:
                yy = t
                dd = 1.0
            else:
                yy = max_fu
                dd = 0.0
            if arm[i] == 1:
                e1 += yy
                d1 += dd
            else:
                e0 += yy
                d0 += dd
        if d0 > 0.0 and d1 > 0.0:
            out[m] = math.log((d1 / e1) / (d0 / e0))
    return out


@kernel
def _future_stats_exp(y, delta, arm, caps, ac_idx, n_future, th0, u0, l11, l21, l22,
                      omega, prec_t, prec_u, max_fu, m_draws, gen):
    n = y.shape[0]
    n_ac = ac_idx.shape[0]
    is_ac = np.zeros(n, dtype=np.uint8)
    for k in range(n_ac):
        is_ac[ac_idx[k]] = 1
    b_d0 = 0.0
    b_e0 = 0.0
    b_d1 = 0.0
    b_e1 = 0.0
    for i in range(n):
        if is_ac[i] == 0:
            if arm[i] == 1:
                b_e1 += y[i]
                b_d1 += delta[i]
            else:
                b_e0 += y[i]
                b_d0 += delta[i]
    theta_fut = np.full(m_draws, np.nan)
    pooled_sd = np.full(m_draws, np.nan)
    for m in range(m_draws):
        z1 = gen.standard_normal()
        z2 = gen.standard_normal()
        th_m = th0 + l11 * z1
        eta_m = math.exp(u0 + l21 * z1 + l22 * z2)
        d0 = b_d0
        e0 = b_e0
        d1 = b_d1
        e1 = b_e1
        for k in range(n_ac):
            i = ac_idx[k]
            t = caps[i] + gen.standard_exponential() / (eta_m * math.exp(th_m * arm[i]))
            if t <= max_fu:
                yy = t
                dd = 1.0
            else:
                yy = max_fu
                dd = 0.0
            if arm[i] == 1:
                e1 += yy
                d1 += dd
            else:
                e0 += yy
                d0 += dd
        f_d0 = 0.0
        f_e0 = 0.0
        f_d1 = 0.0
        f_e1 = 0.0
        for _ in range(n_future):
            a = gen.integers(0, 2)
            t = gen.standard_exponential() / (eta_m * math.exp(th_m * a))
            if t <= max_fu:
                yy = t
                dd = 1.0
            else:
                yy = max_fu
                dd = 0.0
            if a == 1:
                f_e1 += yy
                f_d1 += dd
            else:
                f_e0 += yy
                f_d0 += dd
        if f_d0 > 0.0 and f_d1 > 0.0:
            theta_fut[m] = math.log((f_d1 / f_e1) / (f_d0 / f_e0))
        th_p, u_p, var_t, cov_tu, var_u, status = _exp_ph_fit(
            d0 + f_d0, e0 + f_e0, d1 + f_d1, e1 + f_e1, omega, prec_t, prec_u
        )
        if status == 0:
            pooled_sd[m] = math.sqrt(var_t)
    return theta_fut, pooled_sd


@kernel
def _augmented_thetas_cox(y, delta, arm, caps, ac_idx, bl_times, bl_cum,
                          th0, sd0, max_fu, m_draws, gen):
    n_ac = ac_idx.shape[0]
    y_aug = y.copy()
    d_aug = delta.copy()
    tail = _breslow_tail_rate(bl_times, bl_cum)
    out = np.full(m_draws, np.nan)
    for m in range(m_draws):
        th_m = th0 + sd0 * gen.standard_normal()
        for k in range(n_ac):
            i = ac_idx[k]
            hr = math.exp(th_m * arm[i])
            target = _pl_cumhaz(bl_times, bl_cum, tail, caps[i]) + (
                gen.standard_exponential() / hr
            )
            t = _pl_invert(bl_times, bl_cum, tail, target)
            if t <= max_fu:
                y_aug[i] = t
                d_aug[i] = 1
            else:
                y_aug[i] = max_fu
                d_aug[i] = 0
        ev_arm, ev_n0, ev_n1 = _cox_event_table(y_aug, d_aug, arm)
        th_f, h_tot, status = _cox_fit(
            ev_arm.astype(np.float64), ev_n0.astype(np.float64),
            ev_n1.astype(np.float64), 1.0, 0.0, th_m,
        )
        if status == 0:
            out[m] = th_f
    return out


@kernel
def _future_stats_cox(y, delta, arm, caps, ac_idx, n_future, bl_times, bl_cum,
                      th0, sd0, omega, prec_t, max_fu, m_draws, gen):
    n = y.shape[0]
    n_ac = ac_idx.shape[0]
    n_all = n + n_future
    y_aug = np.empty(n_all)
    d_aug = np.empty(n_all, dtype=np.uint8)
    a_aug = np.empty(n_all, dtype=np.uint8)
    for i in range(n):
        y_aug[i] = y[i]
        d_aug[i] = delta[i]
        a_aug[i] = arm[i]
    tail = _breslow_tail_rate(bl_times, bl_cum)
    theta_fut = np.full(m_draws, np.nan)
    pooled_sd = np.full(m_draws, np.nan)
    for m in range(m_draws):
        th_m = th0 + sd0 * gen.standard_normal()
        for k in range(n_ac):
            i = ac_idx[k]
            hr = math.exp(th_m * arm[i])
            target = _pl_cumhaz(bl_times, bl_cum, tail, caps[i]) + (
                gen.standard_exponential() / hr
            )
            t = _pl_invert(bl_times, bl_cum, tail, target)
            if t <= max_fu:
                y_aug[i] = t
                d_aug[i] = 1
            else:
                y_aug[i] = max_fu
                d_aug[i] = 0
        for j in range(n_future):
            a = np.uint8(gen.integers(0, 2))
            hr = math.exp(th_m * a)
            t = _pl_invert(bl_times, bl_cum, tail, gen.standard_exponential() / hr)
            idx = n + j
            a_aug[idx] = a
            if t <= max_fu:
                y_aug[idx] = t
                d_aug[idx] = 1
            else:
                y_aug[idx] = max_fu
                d_aug[idx] = 0
        # future-only M-estimate
        ev_arm, ev_n0, ev_n1 = _cox_event_table(
            y_aug[n:], d_aug[n:], a_aug[n:]
        )
        th_f, h_f, status_f = _cox_fit(
            ev_arm.astype(np.float64), ev_n0.astype(np.float64),
            ev_n1.astype(np.float64), 1.0, 0.0, th_m,
        )
        if status_f == 0:
            theta_fut[m] = th_f
        ev_arm2, ev_n02, ev_n12 = _cox_event_table(y_aug, d_aug, a_aug)
        th_p, h_tot, status_p = _cox_fit(
            ev_arm2.astype(np.float64), ev_n02.astype(np.float64),
            ev_n12.astype(np.float64), omega, prec_t, th_m,
        )
        if status_p == 0:
            pooled_sd[m] = 1.0 / math.sqrt(h_tot)
    return theta_fut, pooled_sd
