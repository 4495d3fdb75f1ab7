"""Two-size logit-linear extrapolation of summary sampling distributions.

Simulated summary matrices at two first-analysis sizes are turned into
per-repetition lines: within each subgroup (rows grouped by the order
statistics of their process-level target values), the d-th order statistics
of the clamped summary logits at the two sizes are paired and joined by a
line, affine in n for posterior and final-predictive summaries and affine in
n^2 for interim-predictive ones.  Each line is anchored to the repetition
that held rank d at the first size, so evaluating all lines at a new n and
applying the inverse logit reassembles full joint rows.  Power can then be
scanned over a sample-size range without further simulation.
"""

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .core import Thresholds, clamped_logit
from .engine import SummaryMatrix, operating_characteristic, stopping_table
from .errors import ConfigurationError, TargetUnreachableError

__all__ = [
    "LogitExtrapolator",
    "DesignRecommendation",
    "fit_extrapolator",
    "predict_matrix",
    "find_min_n",
    "choose_second_size",
    "extrapolator_to_json",
    "save_extrapolator",
]

_PREDICTORS = {"pp": "n", "ip": "n2", "fp": "n"}


def _x_of(kind: str, n) -> float:
    return float(n) ** 2 if _PREDICTORS[kind] == "n2" else float(n)


@dataclass(frozen=True)
class LogitExtrapolator:
    """Per-repetition summary-logit lines fitted from two simulated sizes."""

    n_a: int
    n_b: int
    t_count: int
    eps: float
    theta_star: np.ndarray
    ok: np.ndarray
    subgroup_of: np.ndarray
    slopes: dict
    intercepts: dict
    ip_analyses: tuple
    fp_analyses: tuple

    @property
    def r_total(self):
        return self.theta_star.shape[0]

    @property
    def subgroup_count(self):
        return int(self.subgroup_of.max()) + 1

    def keys(self):
        return sorted(self.slopes, key=lambda kt: (kt[0], kt[1]))


@dataclass
class DesignRecommendation:
    """Smallest qualifying first-analysis size with its operating characteristics."""

    n_first: int
    n_per_analysis: tuple
    thresholds: Thresholds
    estimated_power: float
    estimated_type1: float
    curves: dict


def _clamped_logits(values: np.ndarray, eps: float) -> np.ndarray:
    p = np.clip(values, eps, 1.0 - eps)
    return np.log(p) - np.log1p(-p)


def fit_extrapolator(
    matrix_a: SummaryMatrix,
    matrix_b: SummaryMatrix,
    subgroups: int = 1,
    eps: float = 1e-6,
) -> LogitExtrapolator:
    """Fit rank-paired lines between two summary matrices.

    ``subgroups > 1`` partitions repetitions by the order statistics of their
    target values before pairing, which keeps the pairing within slices of
    the process distribution; use 1 when the data-generation family is
    degenerate.
    """
    if matrix_a.r_total != matrix_b.r_total:
        raise ConfigurationError("matrices must hold the same repetition count")
    if matrix_a.t_count != matrix_b.t_count:
        raise ConfigurationError("matrices must share the analysis schedule")
    if matrix_a.n == matrix_b.n:
        raise ConfigurationError("the two simulated sizes must differ")
    if set(matrix_a.ip_analyses) != set(matrix_b.ip_analyses) or set(
        matrix_a.fp_analyses
    ) != set(matrix_b.fp_analyses):
        raise ConfigurationError("matrices computed different summary sets")
    ok = matrix_a.ok_mask & matrix_b.ok_mask
    n_ok = int(ok.sum())
    if subgroups < 1 or subgroups > n_ok:
        raise ConfigurationError("subgroup count must lie in [1, usable rows]")

    # subgroup split by order statistics of the target values
    subgroup_of = np.full(matrix_a.r_total, -1, dtype=np.int64)
    ok_rows = np.flatnonzero(ok)
    order = ok_rows[np.argsort(matrix_a.theta_star[ok_rows], kind="stable")]
    for g, block in enumerate(np.array_split(order, subgroups)):
        subgroup_of[block] = g

    keys = [("pp", t) for t in range(matrix_a.t_count)]
    keys += [("ip", t) for t in matrix_a.ip_analyses]
    keys += [("fp", t) for t in matrix_a.fp_analyses]

    x_a = {k: _x_of(k, matrix_a.n) for k in _PREDICTORS}
    x_b = {k: _x_of(k, matrix_b.n) for k in _PREDICTORS}
    slopes = {}
    intercepts = {}
    for kind, t in keys:
        la = _clamped_logits(matrix_a.summary(kind)[:, t], eps)
        lb = _clamped_logits(matrix_b.summary(kind)[:, t], eps)
        slope = np.full(matrix_a.r_total, np.nan)
        intercept = np.full(matrix_a.r_total, np.nan)
        dx = x_b[kind] - x_a[kind]
        for g in range(subgroups):
            rows = np.flatnonzero(subgroup_of == g)
            anchor = rows[np.argsort(la[rows], kind="stable")]
            partner = np.sort(lb[rows])
            s = (partner - la[anchor]) / dx
            slope[anchor] = s
            intercept[anchor] = la[anchor] - s * x_a[kind]
        slopes[(kind, t)] = slope
        intercepts[(kind, t)] = intercept

    return LogitExtrapolator(
        n_a=matrix_a.n,
        n_b=matrix_b.n,
        t_count=matrix_a.t_count,
        eps=eps,
        theta_star=matrix_a.theta_star.copy(),
        ok=ok,
        subgroup_of=subgroup_of,
        slopes=slopes,
        intercepts=intercepts,
        ip_analyses=tuple(matrix_a.ip_analyses),
        fp_analyses=tuple(matrix_b.fp_analyses),
    )


def predict_matrix(ex: LogitExtrapolator, n: int) -> SummaryMatrix:
    """Evaluate every fitted line at ``n`` and reassemble joint summary rows."""
    r_total = ex.r_total
    t_count = ex.t_count
    tau_pp = np.full((r_total, t_count), np.nan)
    tau_ip = np.full((r_total, t_count), np.nan)
    tau_fp = np.full((r_total, t_count), np.nan)
    store = {"pp": tau_pp, "ip": tau_ip, "fp": tau_fp}
    for (kind, t), slope in ex.slopes.items():
        logits = ex.intercepts[(kind, t)] + slope * _x_of(kind, n)
        with np.errstate(over="ignore"):
            store[kind][:, t] = 1.0 / (1.0 + np.exp(-logits))
    failures = tuple((int(r), "unusable in a fitted matrix") for r in np.flatnonzero(~ex.ok))
    return SummaryMatrix(
        n=int(n),
        tau_pp=tau_pp,
        tau_ip=tau_ip,
        tau_fp=tau_fp,
        theta_star=ex.theta_star.copy(),
        theta_hat=np.full((r_total, t_count), np.nan),
        ip_analyses=ex.ip_analyses,
        fp_analyses=ex.fp_analyses,
        failures=failures,
    )


def find_min_n(
    ex: LogitExtrapolator,
    policy,
    thresholds: Thresholds,
    target_power: float,
    n_range,
    schedule=None,
    estimated_type1: float = math.nan,
) -> DesignRecommendation:
    """Smallest integer n in ``n_range`` whose predicted success probability
    reaches ``target_power``; the full predicted curve is always computed."""
    lo, hi = int(n_range[0]), int(n_range[1])
    if lo > hi or lo < 2:
        raise ConfigurationError("empty or invalid sample-size range")
    grid = np.arange(lo, hi + 1)
    powers = np.empty(grid.shape[0])
    cum_s = np.empty((grid.shape[0], ex.t_count))
    cum_f = np.empty((grid.shape[0], ex.t_count))
    for i, n in enumerate(grid):
        matrix = predict_matrix(ex, int(n))
        prob, curves = operating_characteristic(matrix, policy, thresholds)
        powers[i] = prob
        cum_s[i] = curves["success"]
        cum_f[i] = curves["failure"]
    qualifying = np.flatnonzero(powers >= target_power)
    curves = {"n": grid, "power": powers, "cum_success": cum_s, "cum_failure": cum_f}
    if qualifying.size == 0:
        raise TargetUnreachableError(
            f"no n in [{lo}, {hi}] reaches power {target_power}; "
            f"maximum achieved {powers.max():.4f} at n={int(grid[np.argmax(powers)])}",
            best_value=float(powers.max()),
        )
    first = int(grid[qualifying[0]])
    sizes = tuple(int(v) for v in schedule.analysis_sizes(first)) if schedule is not None else (first,)
    return DesignRecommendation(
        n_first=first,
        n_per_analysis=sizes,
        thresholds=thresholds,
        estimated_power=float(powers[qualifying[0]]),
        estimated_type1=estimated_type1,
        curves=curves,
    )


def choose_second_size(
    matrix_a: SummaryMatrix,
    policy,
    thresholds: Thresholds,
    target_power: float,
    n_a: int,
    limiting_slopes: dict = None,
    n_range=(2, 100000),
    user_n_b: int = None,
    eps: float = 1e-6,
) -> int:
    """Second simulation size on the opposite side of the power target.

    With ``limiting_slopes`` (per summary kind and analysis, as produced by
    the large-sample oracle for a degenerate alternative), rays through the
    first matrix's logits bracket the target; otherwise an explicit
    ``user_n_b`` is required.
    """
    if user_n_b is not None:
        if user_n_b == n_a:
            raise ConfigurationError("the second size must differ from the first")
        return int(user_n_b)
    if limiting_slopes is None:
        raise ConfigurationError(
            "a non-degenerate alternative needs an explicit second size"
        )
    power_a, _ = operating_characteristic(matrix_a, policy, thresholds)
    go_down = power_a >= target_power
    if all(abs(s) < 1e-300 for s in limiting_slopes.values()):
        raise TargetUnreachableError(
            "all limiting slopes are zero; rays never cross the power target"
        )

    keys = [("pp", t) for t in range(matrix_a.t_count)]
    keys += [("ip", t) for t in matrix_a.ip_analyses]
    keys += [("fp", t) for t in matrix_a.fp_analyses]
    logits_a = {kt: _clamped_logits(matrix_a.summary(kt[0])[:, kt[1]], eps) for kt in keys}

    def ray_power(n):
        tau = {
            "pp": np.full_like(matrix_a.tau_pp, np.nan),
            "ip": np.full_like(matrix_a.tau_ip, np.nan),
            "fp": np.full_like(matrix_a.tau_fp, np.nan),
        }
        for kind, t in keys:
            slope = limiting_slopes.get((kind, t), 0.0)
            logit = logits_a[(kind, t)] + slope * (_x_of(kind, n) - _x_of(kind, n_a))
            with np.errstate(over="ignore"):
                tau[kind][:, t] = 1.0 / (1.0 + np.exp(-logit))
        pred = SummaryMatrix(
            n=int(n),
            tau_pp=tau["pp"],
            tau_ip=tau["ip"],
            tau_fp=tau["fp"],
            theta_star=matrix_a.theta_star,
            theta_hat=matrix_a.theta_hat,
            ip_analyses=matrix_a.ip_analyses,
            fp_analyses=matrix_a.fp_analyses,
            failures=matrix_a.failures,
        )
        prob, _ = operating_characteristic(pred, policy, thresholds)
        return prob

    step = -1 if go_down else 1
    n = n_a + step
    lo, hi = int(n_range[0]), int(n_range[1])
    best = power_a
    while lo <= n <= hi:
        p = ray_power(n)
        crossed = (p < target_power) if go_down else (p >= target_power)
        if crossed:
            return int(n)
        best = p
        n += step
    raise TargetUnreachableError(
        f"ray search exhausted [{lo}, {hi}] without bracketing the target "
        f"(last power {best:.4f})",
        best_value=float(best),
    )


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------


def extrapolator_to_json(ex: LogitExtrapolator) -> dict:
    def arr(a):
        return [None if (isinstance(v, float) and math.isnan(v)) else v for v in a.tolist()]

    return {
        "n_a": ex.n_a,
        "n_b": ex.n_b,
        "t_count": ex.t_count,
        "eps": ex.eps,
        "subgroup_count": ex.subgroup_count,
        "subgroup_of": ex.subgroup_of.tolist(),
        "theta_star": arr(ex.theta_star),
        "ip_analyses": list(ex.ip_analyses),
        "fp_analyses": list(ex.fp_analyses),
        "lines": {
            f"{kind}_{t + 1}": {
                "predictor": _PREDICTORS[kind],
                "slope": arr(ex.slopes[(kind, t)]),
                "intercept": arr(ex.intercepts[(kind, t)]),
            }
            for kind, t in ex.keys()
        },
    }


def save_extrapolator(ex: LogitExtrapolator, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(extrapolator_to_json(ex), fh, sort_keys=True)
        fh.write("\n")
