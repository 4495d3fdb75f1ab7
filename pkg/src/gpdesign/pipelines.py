"""Per-repetition simulation pipelines.

`simulate_row` turns one (scenario, family, n, repetition) tuple into the
row of summaries the engine stores: posterior probabilities at every
analysis, predictive probabilities where the stopping policy reads them, the
process-level target value, and per-analysis M-estimates.  Everything is a
pure function of the repetition's random streams.
"""

import math
from collections import namedtuple

import numpy as np

from ._jit import kernel
from .core import StreamRole, stream_for
from .errors import NumericalFailure
from .inference import calibrate_omega, kde_density_at, silverman_bandwidth
from .predictive import (
    SurvivalPredictiveModel,
    _interval_prob,
    final_pred_prob,
    interim_pred_prob,
)
from .survival import (
    _cox_event_table,
    _cox_fit,
    _exp_ph_fit,
    _exp_ph_suffstats,
    breslow_baseline,
    generate_staged_sample,
)

__all__ = ["RowResult", "simulate_row"]

RowResult = namedtuple("RowResult", "tau_pp tau_ip tau_fp theta_star theta_hat")


def simulate_row(scenario, family, n: int, r: int, settings) -> RowResult:
    rng = stream_for(settings.base_seed, r, 0, StreamRole.OUTER_DATA)
    process = family.draw(rng)
    if scenario.loss_kind == "abs_dev":
        return _scalar_row(scenario, process, n, r, settings, rng)
    return _survival_row(scenario, process, n, r, settings, rng)


# ---------------------------------------------------------------------------
# Survival pipelines (exponential PH and Cox partial likelihood)
# ---------------------------------------------------------------------------


def _survival_row(scenario, process, n, r, settings, rng) -> RowResult:
    schedule = scenario.schedule
    t_count = schedule.t_count
    staged = generate_staged_sample(process.baseline, process.log_hr, schedule, n, rng)
    sizes = staged.analysis_sizes
    hyp = scenario.hypothesis
    max_fu = schedule.max_followup if schedule.max_followup > 0 else math.inf
    omega = scenario.omega.resolve(None)
    model = SurvivalPredictiveModel(
        loss_kind=scenario.loss_kind,
        hyp=hyp,
        omega=omega,
        prec_theta=scenario.prec_theta(),
        prec_logeta=scenario.prec_logeta(),
        max_followup=max_fu,
        perturb_baseline=scenario.perturb_baseline,
    )
    needs_ip = scenario.needs_ip
    needs_fp = scenario.needs_fp
    gamma = scenario.thresholds.gamma

    tau_pp = np.full(t_count, np.nan)
    tau_ip = np.full(t_count, np.nan)
    tau_fp = np.full(t_count, np.nan)
    theta_hat = np.full(t_count, np.nan)

    for t in range(t_count):
        view = staged.view(t, scenario.artificial_censoring)
        if scenario.loss_kind == "exp_ph":
            d0, e0, d1, e1 = _exp_ph_suffstats(view.y, view.delta, view.arm)
            th, u, var_t, cov_tu, var_u, status = _exp_ph_fit(
                d0, e0, d1, e1, omega, model.prec_theta, model.prec_logeta
            )
            if status != 0:
                raise NumericalFailure(f"posterior fit failed at analysis {t + 1}")
            tau_pp[t] = _interval_prob(th, math.sqrt(var_t), hyp.delta_l, hyp.delta_u)
            if d0 > 0 and d1 > 0:
                theta_hat[t] = math.log((d1 / e1) / (d0 / e0))
            posterior = (th, u, var_t, cov_tu, var_u)
            baseline = None
        else:
            ev_arm, ev_n0, ev_n1 = _cox_event_table(view.y, view.delta, view.arm)
            ev = (ev_arm.astype(np.float64), ev_n0.astype(np.float64), ev_n1.astype(np.float64))
            th, h_total, status = _cox_fit(*ev, omega, model.prec_theta, 0.0)
            if status != 0:
                raise NumericalFailure(f"posterior fit failed at analysis {t + 1}")
            sd = 1.0 / math.sqrt(h_total)
            tau_pp[t] = _interval_prob(th, sd, hyp.delta_l, hyp.delta_u)
            th_mle, _, status_mle = _cox_fit(*ev, 1.0, 0.0, 0.0)
            if status_mle == 0:
                theta_hat[t] = th_mle
            posterior = (th, sd)
            baseline = None
            if needs_ip[t] or needs_fp[t]:
                baseline = breslow_baseline(view, th)

        if needs_ip[t] or needs_fp[t]:
            rng_inner = stream_for(settings.base_seed, r, t + 1, StreamRole.INNER_PREDICTIVE)
            if needs_ip[t]:
                est = interim_pred_prob(
                    view, model, float(gamma[t]), scenario.m_inner, rng_inner,
                    posterior=posterior, baseline=baseline,
                )
                tau_ip[t] = est.value
            if needs_fp[t]:
                n_future = int(sizes[-1] - sizes[t])
                est = final_pred_prob(
                    view, n_future, model, float(gamma[-1]), scenario.m_inner, rng_inner,
                    posterior=posterior, baseline=baseline,
                )
                tau_fp[t] = est.value

    return RowResult(tau_pp, tau_ip, tau_fp, process.theta_star, theta_hat)


# ---------------------------------------------------------------------------
# Scalar pipeline (absolute-deviation loss)
# ---------------------------------------------------------------------------


def _scalar_row(scenario, process, n, r, settings, rng) -> RowResult:
    x = _gen_mixture(
        n, process.weight, process.shape1, process.scale1, process.shape2,
        process.scale2, process.scale_factor, rng,
    )
    hyp = scenario.hypothesis
    med = float(np.median(x))
    omega = scenario.omega.resolve(x)
    lo, hi = scenario.prior_theta.support()

    h = silverman_bandwidth(x)
    if h <= 0 or not math.isfinite(h):
        raise NumericalFailure("degenerate sample: zero KDE bandwidth")
    mode = min(max(med, lo), hi)
    curvature = omega * n * 2.0 * kde_density_at(x, mode, h)
    if curvature <= 0:
        raise NumericalFailure("non-positive curvature at the posterior mode")
    lap_sd = 1.0 / math.sqrt(curvature)

    if scenario.posterior_method == "laplace":
        tau = _interval_prob(mode, lap_sd, hyp.delta_l, hyp.delta_u)
    else:
        xs = np.sort(x)
        prefix = np.concatenate(([0.0], np.cumsum(xs)))
        rng_post = stream_for(settings.base_seed, r, 1, StreamRole.POSTERIOR_DRAWS)
        tau, _acc = _mcmc_absdev_prob(
            xs, prefix, omega, lo, hi, hyp.delta_l, hyp.delta_u,
            scenario.mcmc_chains, scenario.mcmc_burn, scenario.mcmc_draws,
            mode, lap_sd, rng_post,
        )

    tau_pp = np.array([tau])
    return RowResult(
        tau_pp,
        np.full(1, np.nan),
        np.full(1, np.nan),
        process.theta_star,
        np.array([med]),
    )


@kernel
def _gen_mixture(n, weight, shape1, scale1, shape2, scale2, scale_factor, gen):
    out = np.empty(n)
    for i in range(n):
        if gen.random() < weight:
            g = gen.standard_gamma(shape1) * scale1
        else:
            g = gen.standard_gamma(shape2) * scale2
        out[i] = g * scale_factor
    return out


@kernel
def _sum_abs_dev(xs, prefix, theta):
    """Sum of |x_i - theta| over a sorted sample with prefix sums."""
    n = xs.shape[0]
    k = np.searchsorted(xs, theta)
    total = prefix[n]
    return theta * (2.0 * k - n) - 2.0 * prefix[k] + total


@kernel
def _mcmc_absdev_prob(xs, prefix, omega, lo, hi, dl, du, chains, burn, keep, start, scale0, gen):
    """Fraction of retained Metropolis draws inside (dl, du).

    Random-walk proposals on theta with the uniform prior enforced by
    rejection outside its support; the proposal scale adapts during burn-in
    only.  One uniform is always consumed per iteration so the stream layout
    does not depend on acceptance.
    """
    inside = 0
    accepted = 0
    for c in range(chains):
        theta = start + 0.5 * c * scale0
        if theta < lo:
            theta = lo
        elif theta > hi:
            theta = hi
        nl = omega * _sum_abs_dev(xs, prefix, theta)
        scale = 2.4 * scale0
        acc_window = 0
        for i in range(burn):
            prop = theta + scale * gen.standard_normal()
            u = gen.random()
            if lo <= prop <= hi:
                nl_prop = omega * _sum_abs_dev(xs, prefix, prop)
                if math.log(u) < nl - nl_prop:
                    theta = prop
                    nl = nl_prop
                    acc_window += 1
            if (i + 1) % 50 == 0:
                rate = acc_window / 50.0
                if rate < 0.2:
                    scale *= 0.7
                elif rate > 0.5:
                    scale *= 1.4
                acc_window = 0
        for _ in range(keep):
            prop = theta + scale * gen.standard_normal()
            u = gen.random()
            if lo <= prop <= hi:
                nl_prop = omega * _sum_abs_dev(xs, prefix, prop)
                if math.log(u) < nl - nl_prop:
                    theta = prop
                    nl = nl_prop
                    accepted += 1
            if dl < theta < du:
                inside += 1
    total = chains * keep
    return inside / total, accepted / total
