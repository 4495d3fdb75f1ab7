"""Nested-simulation predictive probabilities at interim analyses.

The interim predictive probability is the chance, given the data at an
analysis, that the same analysis would declare success once its artificially
censored outcomes are resolved.  The final predictive probability is the
chance that the last analysis declares success once censoring is resolved and
the remaining stages are enrolled.  Both are estimated by an inner Monte
Carlo loop: draw parameters from the current generalized posterior, impute or
extend the data from the predictive model, refit, and count how often the
refit posterior clears the success threshold.

The survival fast paths live in numba kernels; a callback-based generic
version supports any outcome type (no truncation step when nothing is
censored).
"""

import math
from dataclasses import dataclass

import numpy as np

from ._jit import kernel
from .core import Hypothesis
from .errors import ConfigurationError
from .survival import (
    BreslowHazard,
    SurvivalSample,
    _breslow_tail_rate,
    _cox_event_table,
    _cox_fit,
    _exp_ph_fit,
    _exp_ph_suffstats,
    _pl_cumhaz,
    _pl_invert,
    breslow_baseline,
)

__all__ = [
    "PredictiveEstimate",
    "SurvivalPredictiveModel",
    "interim_pred_prob",
    "final_pred_prob",
    "final_pred_prob_generic",
]


@dataclass(frozen=True)
class PredictiveEstimate:
    value: float
    m_used: int
    inner_success_count: int
    inner_failures: int = 0


@dataclass(frozen=True)
class SurvivalPredictiveModel:
    """Everything the inner loop needs besides the data view.

    ``loss_kind`` is ``exp_ph`` (full exponential likelihood, parameters
    drawn jointly) or ``cox`` (partial likelihood; the predictive baseline is
    the Breslow estimate at the outer fit, optionally with log-normal
    resampling of its step heights).  Prior precisions of 0 disable the
    corresponding penalty.
    """

    loss_kind: str
    hyp: Hypothesis
    omega: float = 1.0
    prec_theta: float = 0.0
    prec_logeta: float = 0.0
    max_followup: float = math.inf
    perturb_baseline: bool = False

    def __post_init__(self):
        if self.loss_kind not in ("exp_ph", "cox"):
            raise ConfigurationError(f"unsupported loss kind {self.loss_kind!r}")


def _bounds(hyp: Hypothesis):
    return float(hyp.delta_l), float(hyp.delta_u)


def _exp_posterior(view: SurvivalSample, model):
    d0, e0, d1, e1 = _exp_ph_suffstats(view.y, view.delta, view.arm)
    th, u, var_t, cov_tu, var_u, status = _exp_ph_fit(
        d0, e0, d1, e1, model.omega, model.prec_theta, model.prec_logeta
    )
    if status != 0:
        raise ConfigurationError("posterior fit failed on the analysis view")
    return th, u, var_t, cov_tu, var_u


def _cox_posterior(view: SurvivalSample, model):
    ev_arm, ev_n0, ev_n1 = _cox_event_table(view.y, view.delta, view.arm)
    theta, h_total, status = _cox_fit(
        ev_arm.astype(np.float64), ev_n0.astype(np.float64), ev_n1.astype(np.float64),
        model.omega, model.prec_theta, 0.0,
    )
    if status != 0:
        raise ConfigurationError("posterior fit failed on the analysis view")
    return theta, 1.0 / math.sqrt(h_total)


def _chol2(var_t, cov_tu, var_u):
    l11 = math.sqrt(var_t)
    l21 = cov_tu / l11
    l22 = math.sqrt(max(var_u - l21 * l21, 1e-300))
    return l11, l21, l22


def interim_pred_prob(
    view: SurvivalSample,
    model: SurvivalPredictiveModel,
    gamma_t: float,
    m_inner: int,
    stream,
    posterior=None,
    baseline: BreslowHazard = None,
) -> PredictiveEstimate:
    """Probability that this analysis succeeds once censoring is resolved.

    With no artificially censored outcome the estimate degenerates to the
    indicator of the current posterior clearing ``gamma_t``.
    """
    dl, du = _bounds(model.hyp)
    ac_idx = np.flatnonzero(view.ac_mask).astype(np.int64)
    if model.loss_kind == "exp_ph":
        th, u, var_t, cov_tu, var_u = posterior if posterior is not None else _exp_posterior(view, model)
        if ac_idx.shape[0] == 0:
            p = _phi_interval(th, math.sqrt(var_t), dl, du)
            ind = int(p >= gamma_t)
            return PredictiveEstimate(float(ind), m_inner, ind * m_inner)
        l11, l21, l22 = _chol2(var_t, cov_tu, var_u)
        succ, fails = _ipp_exp(
            view.y, view.delta, view.arm, view.caps, ac_idx,
            th, u, l11, l21, l22,
            model.omega, model.prec_theta, model.prec_logeta,
            gamma_t, dl, du, model.max_followup, m_inner, stream,
        )
    else:
        theta, sd = posterior if posterior is not None else _cox_posterior(view, model)
        if ac_idx.shape[0] == 0:
            p = _phi_interval(theta, sd, dl, du)
            ind = int(p >= gamma_t)
            return PredictiveEstimate(float(ind), m_inner, ind * m_inner)
        if baseline is None:
            baseline = breslow_baseline(view, theta)
        perturb_sd = _perturb_sds(baseline) if model.perturb_baseline else np.zeros(
            baseline.times.shape[0]
        )
        succ, fails = _ipp_cox(
            view.y, view.delta, view.arm, view.caps, ac_idx,
            baseline.times, baseline.cum, perturb_sd, model.perturb_baseline,
            theta, sd, model.omega, model.prec_theta,
            gamma_t, dl, du, model.max_followup, m_inner, stream,
        )
    return PredictiveEstimate(succ / m_inner, m_inner, int(succ), int(fails))


def final_pred_prob(
    view: SurvivalSample,
    n_future: int,
    model: SurvivalPredictiveModel,
    gamma_final: float,
    m_inner: int,
    stream,
    posterior=None,
    baseline: BreslowHazard = None,
) -> PredictiveEstimate:
    """Probability that the final analysis succeeds given the current view.

    Resolves the current artificially censored outcomes by truncated draws
    and generates ``n_future`` fresh subjects from the predictive model, all
    censored only at the follow-up horizon.
    """
    if n_future < 0:
        raise ConfigurationError("future stage size cannot be negative")
    dl, du = _bounds(model.hyp)
    ac_idx = np.flatnonzero(view.ac_mask).astype(np.int64)
    if model.loss_kind == "exp_ph":
        th, u, var_t, cov_tu, var_u = posterior if posterior is not None else _exp_posterior(view, model)
        l11, l21, l22 = _chol2(var_t, cov_tu, var_u)
        succ, fails = _fpp_exp(
            view.y, view.delta, view.arm, view.caps, ac_idx, n_future,
            th, u, l11, l21, l22,
            model.omega, model.prec_theta, model.prec_logeta,
            gamma_final, dl, du, model.max_followup, m_inner, stream,
        )
    else:
        theta, sd = posterior if posterior is not None else _cox_posterior(view, model)
        if baseline is None:
            baseline = breslow_baseline(view, theta)
        perturb_sd = _perturb_sds(baseline) if model.perturb_baseline else np.zeros(
            baseline.times.shape[0]
        )
        succ, fails = _fpp_cox(
            view.y, view.delta, view.arm, view.caps, ac_idx, n_future,
            baseline.times, baseline.cum, perturb_sd, model.perturb_baseline,
            theta, sd, model.omega, model.prec_theta,
            gamma_final, dl, du, model.max_followup, m_inner, stream,
        )
    return PredictiveEstimate(succ / m_inner, m_inner, int(succ), int(fails))


def _perturb_sds(baseline: BreslowHazard) -> np.ndarray:
    if baseline.step_events is None:
        raise ConfigurationError("baseline lacks per-step event counts")
    return 1.0 / np.sqrt(baseline.step_events.astype(np.float64))


def _phi_interval(mode, sd, dl, du):
    hi = 1.0 if math.isinf(du) and du > 0 else 0.5 * (1.0 + math.erf((du - mode) / (sd * math.sqrt(2.0))))
    lo = 0.0 if math.isinf(dl) and dl < 0 else 0.5 * (1.0 + math.erf((dl - mode) / (sd * math.sqrt(2.0))))
    return hi - lo


# ---------------------------------------------------------------------------
# Kernels
# ---------------------------------------------------------------------------


@kernel
def _phi(x):
    return 0.5 * (1.0 + math.erf(x / math.sqrt(2.0)))


@kernel
def _interval_prob(mode, sd, dl, du):
    hi = 1.0 if du == np.inf else _phi((du - mode) / sd)
    lo = 0.0 if dl == -np.inf else _phi((dl - mode) / sd)
    return hi - lo


@kernel
def _ipp_exp(y, delta, arm, caps, ac_idx, th0, u0, l11, l21, l22,
             omega, prec_t, prec_u, gamma_t, dl, du, max_fu, m_inner, gen):
    # sufficient statistics of the resolved (non-censored) part stay fixed
    n = y.shape[0]
    b_d0 = 0.0
    b_e0 = 0.0
    b_d1 = 0.0
    b_e1 = 0.0
    n_ac = ac_idx.shape[0]
    is_ac = np.zeros(n, dtype=np.uint8)
    for k in range(n_ac):
        is_ac[ac_idx[k]] = 1
    for i in range(n):
        if is_ac[i] == 0:
            if arm[i] == 1:
                b_e1 += y[i]
                b_d1 += delta[i]
            else:
                b_e0 += y[i]
                b_d0 += delta[i]
    succ = 0
    fails = 0
    for _ in range(m_inner):
        z1 = gen.standard_normal()
        z2 = gen.standard_normal()
        th_m = th0 + l11 * z1
        u_m = u0 + l21 * z1 + l22 * z2
        eta_m = math.exp(u_m)
        d0 = b_d0
        e0 = b_e0
        d1 = b_d1
        e1 = b_e1
        for k in range(n_ac):
            i = ac_idx[k]
            rate = eta_m * math.exp(th_m * arm[i])
            t = caps[i] + gen.standard_exponential() / rate
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
        th_f, u_f, var_t, cov_tu, var_u, status = _exp_ph_fit(
            d0, e0, d1, e1, omega, prec_t, prec_u
        )
        if status != 0:
            fails += 1
            continue
        p = _interval_prob(th_f, math.sqrt(var_t), dl, du)
        if p >= gamma_t:
            succ += 1
    return succ, fails


@kernel
def _fpp_exp(y, delta, arm, caps, ac_idx, n_future, th0, u0, l11, l21, l22,
             omega, prec_t, prec_u, gamma_f, dl, du, max_fu, m_inner, gen):
    n = y.shape[0]
    b_d0 = 0.0
    b_e0 = 0.0
    b_d1 = 0.0
    b_e1 = 0.0
    n_ac = ac_idx.shape[0]
    is_ac = np.zeros(n, dtype=np.uint8)
    for k in range(n_ac):
        is_ac[ac_idx[k]] = 1
    for i in range(n):
        if is_ac[i] == 0:
            if arm[i] == 1:
                b_e1 += y[i]
                b_d1 += delta[i]
            else:
                b_e0 += y[i]
                b_d0 += delta[i]
    succ = 0
    fails = 0
    for _ in range(m_inner):
        z1 = gen.standard_normal()
        z2 = gen.standard_normal()
        th_m = th0 + l11 * z1
        u_m = u0 + l21 * z1 + l22 * z2
        eta_m = math.exp(u_m)
        d0 = b_d0
        e0 = b_e0
        d1 = b_d1
        e1 = b_e1
        for k in range(n_ac):
            i = ac_idx[k]
            rate = eta_m * math.exp(th_m * arm[i])
            t = caps[i] + gen.standard_exponential() / rate
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
        for _ in range(n_future):
            a = gen.integers(0, 2)
            rate = eta_m * math.exp(th_m * a)
            t = gen.standard_exponential() / rate
            if t <= max_fu:
                yy = t
                dd = 1.0
            else:
                yy = max_fu
                dd = 0.0
            if a == 1:
                e1 += yy
                d1 += dd
            else:
                e0 += yy
                d0 += dd
        th_f, u_f, var_t, cov_tu, var_u, status = _exp_ph_fit(
            d0, e0, d1, e1, omega, prec_t, prec_u
        )
        if status != 0:
            fails += 1
            continue
        p = _interval_prob(th_f, math.sqrt(var_t), dl, du)
        if p >= gamma_f:
            succ += 1
    return succ, fails


@kernel
def _ipp_cox(y, delta, arm, caps, ac_idx, bl_times, bl_cum, perturb_sd, perturb,
             th0, sd0, omega, prec_t, gamma_t, dl, du, max_fu, m_inner, gen):
    n = y.shape[0]
    n_ac = ac_idx.shape[0]
    n_steps = bl_times.shape[0]
    y_aug = y.copy()
    d_aug = delta.copy()
    cum_m = bl_cum.copy()
    incs = np.empty(n_steps)
    incs[0] = bl_cum[0]
    for k in range(1, n_steps):
        incs[k] = bl_cum[k] - bl_cum[k - 1]
    succ = 0
    fails = 0
    for _ in range(m_inner):
        th_m = th0 + sd0 * gen.standard_normal()
        if perturb:
            acc = 0.0
            for k in range(n_steps):
                acc += incs[k] * math.exp(perturb_sd[k] * gen.standard_normal())
                cum_m[k] = acc
            tail_m = _breslow_tail_rate(bl_times, cum_m)
        else:
            tail_m = _breslow_tail_rate(bl_times, bl_cum)
        for k in range(n_ac):
            i = ac_idx[k]
            hr = math.exp(th_m * arm[i])
            target = _pl_cumhaz(bl_times, cum_m, tail_m, caps[i]) + (
                gen.standard_exponential() / hr
            )
            t = _pl_invert(bl_times, cum_m, tail_m, target)
            if t <= max_fu:
                y_aug[i] = t
                d_aug[i] = 1
            else:
                y_aug[i] = max_fu
                d_aug[i] = 0
        ev_arm, ev_n0, ev_n1 = _cox_event_table(y_aug, d_aug, arm)
        th_f, h_total, status = _cox_fit(
            ev_arm.astype(np.float64), ev_n0.astype(np.float64),
            ev_n1.astype(np.float64), omega, prec_t, th_m,
        )
        if status != 0:
            fails += 1
            continue
        p = _interval_prob(th_f, 1.0 / math.sqrt(h_total), dl, du)
        if p >= gamma_t:
            succ += 1
    return succ, fails


@kernel
def _fpp_cox(y, delta, arm, caps, ac_idx, n_future, bl_times, bl_cum, perturb_sd,
             perturb, th0, sd0, omega, prec_t, gamma_f, dl, du, max_fu, m_inner, gen):
    n = y.shape[0]
    n_ac = ac_idx.shape[0]
    n_steps = bl_times.shape[0]
    n_all = n + n_future
    y_aug = np.empty(n_all)
    d_aug = np.empty(n_all, dtype=np.uint8)
    a_aug = np.empty(n_all, dtype=np.uint8)
    for i in range(n):
        y_aug[i] = y[i]
        d_aug[i] = delta[i]
        a_aug[i] = arm[i]
    cum_m = bl_cum.copy()
    incs = np.empty(n_steps)
    incs[0] = bl_cum[0]
    for k in range(1, n_steps):
        incs[k] = bl_cum[k] - bl_cum[k - 1]
    succ = 0
    fails = 0
    for _ in range(m_inner):
        th_m = th0 + sd0 * gen.standard_normal()
        if perturb:
            acc = 0.0
            for k in range(n_steps):
                acc += incs[k] * math.exp(perturb_sd[k] * gen.standard_normal())
                cum_m[k] = acc
            tail_m = _breslow_tail_rate(bl_times, cum_m)
        else:
            tail_m = _breslow_tail_rate(bl_times, bl_cum)
        for k in range(n_ac):
            i = ac_idx[k]
            hr = math.exp(th_m * arm[i])
            target = _pl_cumhaz(bl_times, cum_m, tail_m, caps[i]) + (
                gen.standard_exponential() / hr
            )
            t = _pl_invert(bl_times, cum_m, tail_m, target)
            if t <= max_fu:
                y_aug[i] = t
                d_aug[i] = 1
            else:
                y_aug[i] = max_fu
                d_aug[i] = 0
        for j in range(n_future):
            a = np.uint8(gen.integers(0, 2))
            hr = math.exp(th_m * a)
            t = _pl_invert(bl_times, cum_m, tail_m, gen.standard_exponential() / hr)
            idx = n + j
            a_aug[idx] = a
            if t <= max_fu:
                y_aug[idx] = t
                d_aug[idx] = 1
            else:
                y_aug[idx] = max_fu
                d_aug[idx] = 0
        ev_arm, ev_n0, ev_n1 = _cox_event_table(y_aug, d_aug, a_aug)
        th_f, h_total, status = _cox_fit(
            ev_arm.astype(np.float64), ev_n0.astype(np.float64),
            ev_n1.astype(np.float64), omega, prec_t, th_m,
        )
        if status != 0:
            fails += 1
            continue
        p = _interval_prob(th_f, 1.0 / math.sqrt(h_total), dl, du)
        if p >= gamma_f:
            succ += 1
    return succ, fails


# ---------------------------------------------------------------------------
# Generic path (any outcome type)
# ---------------------------------------------------------------------------


def final_pred_prob_generic(
    sample,
    success_prob,
    draw_parameters,
    generate_future,
    n_future: int,
    gamma_final: float,
    m_inner: int,
    stream,
    resolve_censoring=None,
) -> PredictiveEstimate:
    """Callback-driven final predictive probability for arbitrary outcomes.

    ``success_prob(sample) -> float`` evaluates the posterior probability of
    the alternative; ``draw_parameters(sample, stream)`` draws one parameter
    value from the current posterior; ``generate_future(params, count,
    stream)`` simulates new observations; ``resolve_censoring(sample, params,
    stream)`` (optional) replaces censored outcomes and is skipped when
    absent, which is the whole adaptation needed for outcomes without
    censoring.  Inner failures count as non-success.
    """
    succ = 0
    fails = 0
    for _ in range(m_inner):
        try:
            params = draw_parameters(sample, stream)
            current = sample if resolve_censoring is None else resolve_censoring(
                sample, params, stream
            )
            future = generate_future(params, n_future, stream)
            pooled = np.concatenate([np.asarray(current, dtype=float), np.asarray(future, dtype=float)])
            if success_prob(pooled) >= gamma_final:
                succ += 1
        except Exception:
            fails += 1
    return PredictiveEstimate(succ / m_inner, m_inner, succ, fails)
