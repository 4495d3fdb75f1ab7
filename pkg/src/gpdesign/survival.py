"""Time-to-event data generation and proportional-hazards losses.

Covers staged enrollment with analysis-time ("artificial") censoring, three
baseline-hazard families (exponential, Weibull, five-knot log-linear spline),
the full exponential PH likelihood and the Cox partial likelihood (Breslow
tie handling), Breslow's cumulative baseline-hazard estimator, and truncated
predictive event generation by inverting conditional cumulative hazards.

Hot loops are numba kernels (see ``_jit``); every kernel also runs uncompiled
under the pure-Python fallback.
"""

import math
from dataclasses import dataclass

import numpy as np

from ._jit import kernel
from .core import TrialSchedule
from .errors import ConfigurationError, NumericalFailure
from .inference import LossModel

__all__ = [
    "SurvivalSample",
    "StagedSample",
    "ExponentialHazard",
    "WeibullHazard",
    "SplineHazard",
    "BreslowHazard",
    "simulate_enrollment",
    "generate_ph_event",
    "generate_truncated_event",
    "generate_staged_sample",
    "cox_partial_loss",
    "exponential_ph_loss",
    "breslow_baseline",
]


# ---------------------------------------------------------------------------
# Samples and views
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SurvivalSample:
    """Observed times from enrollment, event flags, and arm labels.

    ``caps`` are per-subject artificial-censoring times (analysis calendar
    time minus enrollment); ``ac_mask`` flags subjects whose outcome is still
    unresolved at the analysis, i.e. censored below both the event time and
    the follow-up horizon.
    """

    y: np.ndarray
    delta: np.ndarray
    arm: np.ndarray
    caps: np.ndarray = None
    ac_mask: np.ndarray = None

    def __post_init__(self):
        if self.ac_mask is None:
            object.__setattr__(self, "ac_mask", np.zeros(self.y.shape[0], dtype=bool))
        if self.caps is None:
            object.__setattr__(self, "caps", np.full(self.y.shape[0], np.inf))

    @property
    def size(self):
        return self.y.shape[0]

    @property
    def n_artificially_censored(self):
        return int(self.ac_mask.sum())


@dataclass(frozen=True)
class StagedSample:
    """Full latent trajectory of one simulated trial, before any analysis cut.

    ``event_time`` holds latent event times measured from each subject's
    enrollment; horizon censoring and analysis-time censoring are applied by
    ``view``.  Analysis ``t`` happens at the calendar time of the ``n_t``-th
    enrollment.
    """

    enroll: np.ndarray
    event_time: np.ndarray
    arm: np.ndarray
    max_followup: float
    analysis_sizes: np.ndarray

    def analysis_time(self, t: int) -> float:
        return float(self.enroll[int(self.analysis_sizes[t]) - 1])

    def view(self, t: int, artificial_censoring: bool = True) -> SurvivalSample:
        """Data available at analysis ``t`` (0-based), censored at the horizon
        and, when requested, at the analysis calendar time."""
        n_t = int(self.analysis_sizes[t])
        ev = self.event_time[:n_t]
        arm = self.arm[:n_t]
        horizon = self.max_followup if self.max_followup > 0 else np.inf
        if artificial_censoring:
            caps = self.analysis_time(t) - self.enroll[:n_t]
        else:
            caps = np.full(n_t, np.inf)
        y = np.minimum(ev, np.minimum(caps, horizon))
        delta = ev <= np.minimum(caps, horizon)
        ac = caps < np.minimum(ev, horizon)
        return SurvivalSample(
            y=np.ascontiguousarray(y, dtype=np.float64),
            delta=np.ascontiguousarray(delta, dtype=np.uint8),
            arm=np.ascontiguousarray(arm, dtype=np.uint8),
            caps=np.ascontiguousarray(caps, dtype=np.float64),
            ac_mask=np.ascontiguousarray(ac, dtype=bool),
        )


# ---------------------------------------------------------------------------
# Baseline hazards
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ExponentialHazard:
    rate: float

    def __post_init__(self):
        if self.rate <= 0:
            raise ConfigurationError("exponential hazard rate must be positive")

    def cumhaz(self, t):
        return self.rate * np.maximum(t, 0.0)

    def invert(self, target):
        return target / self.rate


@dataclass(frozen=True)
class WeibullHazard:
    """Cumulative hazard ``scale * t ** shape``."""

    scale: float
    shape: float

    def __post_init__(self):
        if self.scale <= 0 or self.shape <= 0:
            raise ConfigurationError("Weibull scale and shape must be positive")

    def cumhaz(self, t):
        return self.scale * np.maximum(t, 0.0) ** self.shape

    def invert(self, target):
        return (target / self.scale) ** (1.0 / self.shape)


@dataclass(frozen=True)
class SplineHazard:
    """Piecewise log-linear hazard through knot points, constant outside them."""

    knots: tuple
    log_values: tuple

    def __post_init__(self):
        if len(self.knots) != len(self.log_values) or len(self.knots) < 2:
            raise ConfigurationError("spline hazard needs matching knots and values (>= 2)")
        if any(b <= a for a, b in zip(self.knots, self.knots[1:])):
            raise ConfigurationError("spline knots must be strictly increasing")
        if self.knots[0] <= 0:
            raise ConfigurationError("first spline knot must be positive")

    def segments(self):
        """(start, hazard-at-start, log-hazard slope, cumhaz-at-start) arrays.

        Segment 0 runs from 0 to the first knot at constant hazard; the last
        segment extends past the final knot at constant hazard.
        """
        k = np.asarray(self.knots, dtype=float)
        v = np.asarray(self.log_values, dtype=float)
        starts = np.concatenate(([0.0], k))
        h0 = np.exp(np.concatenate(([v[0]], v)))
        slopes = np.concatenate(([0.0], np.diff(v) / np.diff(k), [0.0]))
        cum = np.zeros(starts.shape[0])
        for i in range(starts.shape[0] - 1):
            width = starts[i + 1] - starts[i]
            cum[i + 1] = cum[i] + _segment_integral(h0[i], slopes[i], width)
        return starts, h0, slopes, cum

    def cumhaz(self, t):
        starts, h0, slopes, cum = self.segments()
        return _spline_cumhaz(starts, h0, slopes, cum, float(t))

    def invert(self, target):
        starts, h0, slopes, cum = self.segments()
        return _spline_invert(starts, h0, slopes, cum, float(target))


def _segment_integral(h_start, slope, width):
    if abs(slope) < 1e-14:
        return h_start * width
    return h_start * (math.exp(slope * width) - 1.0) / slope


@kernel
def _spline_cumhaz(starts, h0, slopes, cum, t):
    if t <= 0.0:
        return 0.0
    i = np.searchsorted(starts, t, side="right") - 1
    if i >= starts.shape[0] - 1:
        i = starts.shape[0] - 1
    dt = t - starts[i]
    if abs(slopes[i]) < 1e-14:
        return cum[i] + h0[i] * dt
    return cum[i] + h0[i] * (math.exp(slopes[i] * dt) - 1.0) / slopes[i]


@kernel
def _spline_invert(starts, h0, slopes, cum, target):
    if target <= 0.0:
        return 0.0
    i = np.searchsorted(cum, target, side="right") - 1
    if i >= starts.shape[0] - 1:
        i = starts.shape[0] - 1
    excess = target - cum[i]
    if abs(slopes[i]) < 1e-14:
        return starts[i] + excess / h0[i]
    return starts[i] + math.log1p(slopes[i] * excess / h0[i]) / slopes[i]


@dataclass(frozen=True)
class BreslowHazard:
    """Nonparametric cumulative baseline hazard with two readings.

    ``cumhaz`` is the right-continuous step function of the estimator itself.
    For event generation the step points are joined linearly (a strictly
    increasing cumulative hazard), with constant-rate extrapolation past the
    last event at the average hazard over the last tenth of the observed
    window.
    """

    times: np.ndarray
    cum: np.ndarray
    tail_rate: float
    step_events: np.ndarray = None

    def cumhaz(self, t):
        return _step_cumhaz(self.times, self.cum, self.tail_rate, float(t))

    def cumhaz_interp(self, t):
        return _pl_cumhaz(self.times, self.cum, self.tail_rate, float(t))

    def invert(self, target):
        return _pl_invert(self.times, self.cum, self.tail_rate, float(target))


@kernel
def _step_cumhaz(times, cum, tail_rate, t):
    if t < times[0]:
        return 0.0
    i = np.searchsorted(times, t, side="right") - 1
    value = cum[i]
    if t > times[-1]:
        value += tail_rate * (t - times[-1])
    return value


@kernel
def _pl_cumhaz(times, cum, tail_rate, t):
    if t <= 0.0:
        return 0.0
    if t <= times[0]:
        return cum[0] * t / times[0]
    if t >= times[-1]:
        return cum[-1] + tail_rate * (t - times[-1])
    i = np.searchsorted(times, t, side="right") - 1
    frac = (t - times[i]) / (times[i + 1] - times[i])
    return cum[i] + frac * (cum[i + 1] - cum[i])


@kernel
def _pl_invert(times, cum, tail_rate, target):
    if target <= 0.0:
        return 0.0
    if target <= cum[0]:
        return times[0] * target / cum[0]
    if target >= cum[-1]:
        return times[-1] + (target - cum[-1]) / tail_rate
    i = np.searchsorted(cum, target, side="right") - 1
    frac = (target - cum[i]) / (cum[i + 1] - cum[i])
    return times[i] + frac * (times[i + 1] - times[i])


# ---------------------------------------------------------------------------
# Enrollment and event generation
# ---------------------------------------------------------------------------


def simulate_enrollment(schedule: TrialSchedule, n: int, stream) -> np.ndarray:
    """Cumulative Poisson-process arrival times for all ``n_T`` subjects."""
    if n < 1:
        raise ConfigurationError("need at least one subject")
    n_total = int(schedule.analysis_sizes(n)[-1])
    return _enrollment_times(n_total, schedule.enrollment_mean_gap, stream)


@kernel
def _enrollment_times(n_total, mean_gap, gen):
    out = np.empty(n_total)
    acc = 0.0
    for i in range(n_total):
        acc += mean_gap * gen.standard_exponential()
        out[i] = acc
    return out


def generate_ph_event(baseline, log_hr: float, arm: int, stream) -> float:
    """One event time with hazard ``h0(t) * exp(log_hr * arm)`` via inverse CDF."""
    e = stream.standard_exponential()
    return float(baseline.invert(e * math.exp(-log_hr * arm)))


def generate_truncated_event(baseline, log_hr: float, arm: int, lower_bound: float, stream) -> float:
    """Event time conditioned on exceeding ``lower_bound``.

    Uses the memoryless construction on the cumulative-hazard scale: the
    conditional draw solves ``H0(t) = H0(L) + E * exp(-log_hr * arm)``.
    Breslow baselines use their interpolated (strictly increasing) reading.
    """
    if lower_bound < 0:
        raise ConfigurationError("lower bound must be nonnegative")
    if isinstance(baseline, BreslowHazard):
        if baseline.tail_rate <= 0:
            raise NumericalFailure(
                "cumulative hazard is not strictly increasing beyond the lower bound"
            )
        h_low = baseline.cumhaz_interp(lower_bound)
    else:
        h_low = float(baseline.cumhaz(lower_bound))
    e = stream.standard_exponential()
    return float(baseline.invert(h_low + e * math.exp(-log_hr * arm)))


def generate_staged_sample(
    baseline, log_hr: float, schedule: TrialSchedule, n: int, stream
) -> StagedSample:
    """Enrollment times, arms, and latent event times for a full trial.

    Per subject the stream is consumed in a fixed order (gap, arm, event), so
    the sample is a pure function of the stream.
    """
    sizes = schedule.analysis_sizes(n)
    n_total = int(sizes[-1])
    if isinstance(baseline, ExponentialHazard):
        enroll, arm, ev = _gen_staged_exp(
            n_total, schedule.enrollment_mean_gap, baseline.rate, log_hr, stream
        )
    elif isinstance(baseline, WeibullHazard):
        enroll, arm, ev = _gen_staged_weibull(
            n_total, schedule.enrollment_mean_gap, baseline.scale, baseline.shape, log_hr, stream
        )
    elif isinstance(baseline, SplineHazard):
        starts, h0, slopes, cum = baseline.segments()
        enroll, arm, ev = _gen_staged_spline(
            n_total, schedule.enrollment_mean_gap, starts, h0, slopes, cum, log_hr, stream
        )
    else:
        raise ConfigurationError(f"unsupported baseline {type(baseline).__name__}")
    return StagedSample(
        enroll=enroll,
        event_time=ev,
        arm=arm,
        max_followup=schedule.max_followup,
        analysis_sizes=sizes,
    )


@kernel
def _gen_staged_exp(n_total, mean_gap, rate, log_hr, gen):
    enroll = np.empty(n_total)
    arm = np.empty(n_total, dtype=np.uint8)
    ev = np.empty(n_total)
    acc = 0.0
    for i in range(n_total):
        acc += mean_gap * gen.standard_exponential()
        enroll[i] = acc
        a = np.uint8(gen.integers(0, 2))
        arm[i] = a
        e = gen.standard_exponential()
        ev[i] = e * math.exp(-log_hr * a) / rate
    return enroll, arm, ev


@kernel
def _gen_staged_weibull(n_total, mean_gap, scale, shape, log_hr, gen):
    enroll = np.empty(n_total)
    arm = np.empty(n_total, dtype=np.uint8)
    ev = np.empty(n_total)
    acc = 0.0
    inv_shape = 1.0 / shape
    for i in range(n_total):
        acc += mean_gap * gen.standard_exponential()
        enroll[i] = acc
        a = np.uint8(gen.integers(0, 2))
        arm[i] = a
        e = gen.standard_exponential()
        ev[i] = (e * math.exp(-log_hr * a) / scale) ** inv_shape
    return enroll, arm, ev


@kernel
def _gen_staged_spline(n_total, mean_gap, starts, h0, slopes, cum, log_hr, gen):
    enroll = np.empty(n_total)
    arm = np.empty(n_total, dtype=np.uint8)
    ev = np.empty(n_total)
    acc = 0.0
    for i in range(n_total):
        acc += mean_gap * gen.standard_exponential()
        enroll[i] = acc
        a = np.uint8(gen.integers(0, 2))
        arm[i] = a
        e = gen.standard_exponential()
        ev[i] = _spline_invert(starts, h0, slopes, cum, e * math.exp(-log_hr * a))
    return enroll, arm, ev


# ---------------------------------------------------------------------------
# Cox partial likelihood
# ---------------------------------------------------------------------------


@kernel
def _cox_event_table(y, delta, arm):
    """Per-event risk-set counts under Breslow tie handling.

    Returns arrays of the event subject's arm and the risk-set counts by arm
    at the event time (ties share the risk set that includes all tied
    subjects), plus the event count.
    """
    n = y.shape[0]
    order = np.argsort(y)
    ev_arm = np.empty(n, dtype=np.uint8)
    ev_n0 = np.empty(n, dtype=np.int64)
    ev_n1 = np.empty(n, dtype=np.int64)
    n_ev = 0
    n0 = 0
    n1 = 0
    i = n - 1
    while i >= 0:
        j = i
        t_block = y[order[i]]
        while j >= 0 and y[order[j]] == t_block:
            if arm[order[j]] == 1:
                n1 += 1
            else:
                n0 += 1
            j -= 1
        for k in range(j + 1, i + 1):
            idx = order[k]
            if delta[idx] == 1:
                ev_arm[n_ev] = arm[idx]
                ev_n0[n_ev] = n0
                ev_n1[n_ev] = n1
                n_ev += 1
        i = j
    return ev_arm[:n_ev], ev_n0[:n_ev], ev_n1[:n_ev]


@kernel
def _cox_loss_terms(theta, ev_arm, ev_n0, ev_n1):
    """Negative log partial likelihood with gradient and Hessian in theta."""
    loss = 0.0
    grad = 0.0
    hess = 0.0
    for i in range(ev_arm.shape[0]):
        n0 = float(ev_n0[i])
        n1 = float(ev_n1[i])
        a = float(ev_arm[i])
        if theta > 0.0:
            lse = theta + math.log(n0 * math.exp(-theta) + n1)
        else:
            lse = math.log(n0 + n1 * math.exp(theta))
        p1 = n1 / (n0 * math.exp(-theta) + n1)
        loss += -theta * a + lse
        grad += p1 - a
        hess += p1 * (1.0 - p1)
    return loss, grad, hess


@kernel
def _cox_fit(ev_arm, ev_n0, ev_n1, omega, prior_prec, theta0):
    """Minimize ``omega * partial-loss + 0.5 * prior_prec * theta^2``.

    Status codes: 0 ok, 1 no events, 2 all events in arm 0, 3 all events in
    arm 1 (the last two only flag failure when the prior precision is zero,
    since the likelihood alone is then monotone).
    """
    n_ev = ev_arm.shape[0]
    if n_ev == 0:
        return 0.0, 0.0, 1
    if prior_prec <= 0.0:
        all0 = True
        all1 = True
        for i in range(n_ev):
            if ev_arm[i] == 1:
                all0 = False
            else:
                all1 = False
        if all0:
            return -np.inf, 0.0, 2
        if all1:
            return np.inf, 0.0, 3
    theta = theta0
    loss, grad, hess = _cox_loss_terms(theta, ev_arm, ev_n0, ev_n1)
    obj = omega * loss + 0.5 * prior_prec * theta * theta
    for _ in range(100):
        g = omega * grad + prior_prec * theta
        h = omega * hess + prior_prec
        if abs(g) <= 1e-9 * (1.0 + abs(obj)):
            return theta, h, 0
        if h <= 1e-300:
            h = 1e-300
        step = g / h
        scale = 1.0
        improved = False
        for _ in range(40):
            cand = theta - scale * step
            loss_c, grad_c, hess_c = _cox_loss_terms(cand, ev_arm, ev_n0, ev_n1)
            obj_c = omega * loss_c + 0.5 * prior_prec * cand * cand
            if obj_c <= obj - 1e-4 * scale * g * step:
                theta = cand
                loss, grad, hess, obj = loss_c, grad_c, hess_c, obj_c
                improved = True
                break
            scale *= 0.5
        if not improved:
            # floating plateau: accept when already near-stationary
            if abs(g) <= 1e-5 * (1.0 + abs(obj)):
                return theta, h, 0
            return theta, h, 4
    g = omega * grad + prior_prec * theta
    h = omega * hess + prior_prec
    if abs(g) <= 1e-5 * (1.0 + abs(obj)):
        return theta, h, 0
    return theta, h, 4


def cox_partial_loss(sample: SurvivalSample) -> LossModel:
    """Negative log Cox partial likelihood of the sample as a LossModel.

    Per-observation terms are indexed by subject position; event terms carry
    the log risk-set sum at their event time (Breslow ties).  Raises when the
    sample has no events or when every event sits in one arm (monotone
    likelihood).
    """
    # One walk from the largest time down builds both the per-event risk
    # counts and the subject-to-event-row map, so tied blocks stay aligned.
    order = np.argsort(sample.y, kind="stable")
    row_of = np.full(sample.size, -1, dtype=np.int64)
    rows = []
    n0 = n1 = 0
    i = sample.size - 1
    while i >= 0:
        j = i
        t_block = sample.y[order[i]]
        while j >= 0 and sample.y[order[j]] == t_block:
            idx = order[j]
            if sample.arm[idx] == 1:
                n1 += 1
            else:
                n0 += 1
            j -= 1
        for k in range(j + 1, i + 1):
            idx = order[k]
            if sample.delta[idx] == 1:
                row_of[idx] = len(rows)
                rows.append((int(sample.arm[idx]), n0, n1))
        i = j
    if not rows:
        raise NumericalFailure("Cox partial likelihood needs at least one event")
    ev_arm = np.array([r[0] for r in rows], dtype=np.float64)
    ev_n0 = np.array([r[1] for r in rows], dtype=np.float64)
    ev_n1 = np.array([r[2] for r in rows], dtype=np.float64)
    if np.all(ev_arm == 1) or np.all(ev_arm == 0):
        only = int(ev_arm[0])
        raise NumericalFailure(
            f"monotone partial likelihood: every event is in arm {only}"
        )

    def _loss(i, th):
        r = row_of[i]
        if r < 0:
            return 0.0
        theta = th[0]
        lse = math.log(ev_n0[r] + ev_n1[r] * math.exp(theta)) if theta <= 0 else (
            theta + math.log(ev_n0[r] * math.exp(-theta) + ev_n1[r])
        )
        return -theta * float(ev_arm[r]) + lse

    def _grad(i, th):
        r = row_of[i]
        if r < 0:
            return np.zeros(1)
        p1 = ev_n1[r] / (ev_n0[r] * math.exp(-th[0]) + ev_n1[r])
        return np.array([p1 - float(ev_arm[r])])

    def _hess(i, th):
        r = row_of[i]
        if r < 0:
            return np.zeros((1, 1))
        p1 = ev_n1[r] / (ev_n0[r] * math.exp(-th[0]) + ev_n1[r])
        return np.array([[p1 * (1.0 - p1)]])

    return LossModel(dim=1, loss=_loss, grad=_grad, hess=_hess, name="cox-partial")


def cox_sample_indices(sample: SurvivalSample):
    """Index iterable for LossModels built by :func:`cox_partial_loss`."""
    return range(sample.size)


def breslow_baseline(sample: SurvivalSample, theta: float) -> BreslowHazard:
    """Breslow estimate of the cumulative baseline hazard at log-hazard ratio theta."""
    times, cum, counts = _breslow_steps(sample.y, sample.delta, sample.arm, float(theta))
    if times.shape[0] == 0:
        raise NumericalFailure("Breslow estimator needs at least one event")
    tail = _breslow_tail_rate(times, cum)
    return BreslowHazard(times=times, cum=cum, tail_rate=tail, step_events=counts)


@kernel
def _breslow_steps(y, delta, arm, theta):
    n = y.shape[0]
    order = np.argsort(y)
    times = np.empty(n)
    incs = np.empty(n)
    counts = np.empty(n, dtype=np.int64)
    n_steps = 0
    risk = 0.0
    e_theta = math.exp(theta)
    i = n - 1
    while i >= 0:
        j = i
        t_block = y[order[i]]
        d_block = 0
        while j >= 0 and y[order[j]] == t_block:
            idx = order[j]
            risk += e_theta if arm[idx] == 1 else 1.0
            if delta[idx] == 1:
                d_block += 1
            j -= 1
        if d_block > 0:
            times[n_steps] = t_block
            incs[n_steps] = d_block / risk
            counts[n_steps] = d_block
            n_steps += 1
        i = j
    # blocks were visited from the largest time down; reverse and accumulate
    out_t = np.empty(n_steps)
    out_c = np.empty(n_steps)
    out_d = np.empty(n_steps, dtype=np.int64)
    acc = 0.0
    for k in range(n_steps):
        out_t[k] = times[n_steps - 1 - k]
        acc += incs[n_steps - 1 - k]
        out_c[k] = acc
        out_d[k] = counts[n_steps - 1 - k]
    return out_t, out_c, out_d


@kernel
def _breslow_tail_rate(times, cum):
    """Average hazard over the last tenth of the observed window, with a
    whole-window fallback when that stretch holds no events."""
    t_last = times[-1]
    t0 = 0.9 * t_last
    h0 = _step_cumhaz(times, cum, 0.0, t0)
    rate = (cum[-1] - h0) / (t_last - t0) if t_last > t0 else 0.0
    if rate <= 0.0:
        rate = cum[-1] / t_last
    return rate


# ---------------------------------------------------------------------------
# Exponential PH likelihood
# ---------------------------------------------------------------------------


@kernel
def _exp_ph_suffstats(y, delta, arm):
    d0 = 0.0
    d1 = 0.0
    e0 = 0.0
    e1 = 0.0
    for i in range(y.shape[0]):
        if arm[i] == 1:
            e1 += y[i]
            d1 += delta[i]
        else:
            e0 += y[i]
            d0 += delta[i]
    return d0, e0, d1, e1


@kernel
def _exp_ph_fit(d0, e0, d1, e1, omega, prec_theta, prec_logeta):
    """Posterior mode and curvature of the exponential PH model.

    Parameters are ``(theta, u = log eta)`` with independent normal priors of
    the given precisions (0 disables the prior).  Returns ``(theta, u,
    var_theta, cov_tu, var_u, status)`` where status 0 is success and 1 means
    no events anywhere (theta unidentified).
    """
    d = d0 + d1
    if d <= 0.0 or e0 <= 0.0 or e1 <= 0.0:
        return 0.0, 0.0, 0.0, 0.0, 0.0, 1
    if d0 > 0.0 and d1 > 0.0:
        theta = math.log((d1 / e1) / (d0 / e0))
        u = math.log(d0 / e0)
    else:
        if prec_theta <= 0.0:
            # without a prior the likelihood is monotone in theta
            return 0.0, 0.0, 0.0, 0.0, 0.0, 3
        theta = 0.0
        u = math.log(d / (e0 + e1))

    def _obj(th, uu):
        return omega * (-d * uu - d1 * th + math.exp(uu) * (e0 + e1 * math.exp(th))) + (
            0.5 * prec_theta * th * th + 0.5 * prec_logeta * uu * uu
        )

    obj = _obj(theta, u)
    htt = 1.0
    hut = 0.0
    huu = 1.0
    gnorm = math.inf
    for _ in range(100):
        eu = math.exp(u)
        eth = math.exp(theta)
        gt = omega * (-d1 + eu * e1 * eth) + prec_theta * theta
        gu = omega * (-d + eu * (e0 + e1 * eth)) + prec_logeta * u
        htt = omega * eu * e1 * eth + prec_theta
        hut = omega * eu * e1 * eth
        huu = omega * eu * (e0 + e1 * eth) + prec_logeta
        gnorm = abs(gt) + abs(gu)
        if gnorm <= 1e-9 * (1.0 + abs(obj)):
            break
        det = htt * huu - hut * hut
        if det <= 0.0:
            return theta, u, 0.0, 0.0, 0.0, 2
        st = (huu * gt - hut * gu) / det
        su = (htt * gu - hut * gt) / det
        scale = 1.0
        descent = gt * st + gu * su
        improved = False
        for _ in range(40):
            cand_t = theta - scale * st
            cand_u = u - scale * su
            obj_c = _obj(cand_t, cand_u)
            if obj_c <= obj - 1e-4 * scale * descent:
                theta = cand_t
                u = cand_u
                obj = obj_c
                improved = True
                break
            scale *= 0.5
        if not improved:
            break
    if gnorm > 1e-5 * (1.0 + abs(obj)):
        return theta, u, 0.0, 0.0, 0.0, 4
    det = htt * huu - hut * hut
    var_theta = huu / det
    var_u = htt / det
    cov_tu = -hut / det
    return theta, u, var_theta, cov_tu, var_u, 0


def exponential_ph_loss(sample: SurvivalSample) -> LossModel:
    """Full exponential-baseline PH negative log-likelihood in (theta, log eta).

    Per-observation loss: ``-delta * (log eta + theta * arm) + eta * y *
    exp(theta * arm)``.
    """
    if float(np.sum(sample.y)) <= 0:
        raise ConfigurationError("total exposure must be positive")

    def _loss(x, th):
        y, a, d = x
        theta, u = th
        return -d * (u + theta * a) + math.exp(u) * y * math.exp(theta * a)

    def _grad(x, th):
        y, a, d = x
        theta, u = th
        lam = math.exp(u) * y * math.exp(theta * a)
        return np.array([-d * a + lam * a, -d + lam])

    def _hess(x, th):
        y, a, d = x
        theta, u = th
        lam = math.exp(u) * y * math.exp(theta * a)
        return np.array([[lam * a * a, lam * a], [lam * a, lam]])

    return LossModel(dim=2, loss=_loss, grad=_grad, hess=_hess, name="exp-ph")


def exp_ph_observations(sample: SurvivalSample):
    """(y, arm, delta) triples for LossModels built by :func:`exponential_ph_loss`."""
    return [
        (float(y), float(a), float(d))
        for y, a, d in zip(sample.y, sample.arm, sample.delta)
    ]
