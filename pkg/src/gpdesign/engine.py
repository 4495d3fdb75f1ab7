"""Outer Monte Carlo loop and operating characteristics.

``estimate_summary_distribution`` simulates the full no-early-stopping
trajectory of every repetition and records each posterior and predictive
summary the stopping policy reads, yielding a ``SummaryMatrix``.  Stopping
rules are then evaluated after the fact on stored rows, which lets threshold
tuning and sample-size search reuse one simulation.  Repetitions execute
concurrently; every random stream is keyed by repetition index, so results
are identical for any worker count.
"""

import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .core import StoppingPolicy, Thresholds
from .errors import ConfigurationError, NumericalFailure, TargetUnreachableError

__all__ = [
    "SummaryMatrix",
    "StoppingOutcome",
    "TuningSpec",
    "estimate_summary_distribution",
    "evaluate_stopping",
    "stopping_table",
    "operating_characteristic",
    "tune_thresholds",
    "save_matrix",
    "load_matrix",
]

REASON_NONE = 0
REASON_SUCCESS = 1
REASON_FAILURE = 2
REASON_FINAL = 3

_REASON_NAMES = {REASON_NONE: "none", REASON_SUCCESS: "success",
                 REASON_FAILURE: "failure", REASON_FINAL: "final"}


@dataclass(frozen=True)
class SummaryMatrix:
    """Per-repetition summaries of a hypothetical design without early stopping.

    Arrays are (R, T); entries the scenario never computes are NaN, as are all
    entries of failed repetitions (listed in ``failures`` with reasons).
    """

    n: int
    tau_pp: np.ndarray
    tau_ip: np.ndarray
    tau_fp: np.ndarray
    theta_star: np.ndarray
    theta_hat: np.ndarray
    ip_analyses: tuple = ()
    fp_analyses: tuple = ()
    failures: tuple = ()

    @property
    def r_total(self) -> int:
        return self.tau_pp.shape[0]

    @property
    def t_count(self) -> int:
        return self.tau_pp.shape[1]

    @property
    def ok_mask(self) -> np.ndarray:
        mask = np.ones(self.r_total, dtype=bool)
        for r, _ in self.failures:
            mask[r] = False
        return mask

    def summary(self, kind: str) -> np.ndarray:
        return {"pp": self.tau_pp, "ip": self.tau_ip, "fp": self.tau_fp}[kind]


# ---------------------------------------------------------------------------
# Simulation driver
# ---------------------------------------------------------------------------

_WORKER_PLAN = None


def _init_worker(plan):
    global _WORKER_PLAN
    _WORKER_PLAN = plan


def _run_chunk(indices):
    from . import pipelines

    scenario, family, n, settings = _WORKER_PLAN
    out = []
    for r in indices:
        try:
            out.append((r, pipelines.simulate_row(scenario, family, n, r, settings), None))
        except Exception as exc:  # per-repetition failures are data, not crashes
            out.append((r, None, f"{type(exc).__name__}: {exc}"))
    return out


def estimate_summary_distribution(
    scenario, family, n: int, settings, workers: int = 1, failure_budget: float = 0.01
) -> SummaryMatrix:
    """Estimate the joint sampling distribution of all needed summaries at ``n``.

    Runs ``settings.r_outer`` repetitions (in ``workers`` processes), each a
    pure function of ``(settings.base_seed, repetition)``.  Repetitions that
    fail numerically are excluded and recorded; more than ``failure_budget``
    of them fails the whole run.
    """
    from . import pipelines

    if n < 2:
        raise ConfigurationError("first-analysis sample size must be at least 2")
    r_outer = settings.r_outer
    t_count = scenario.schedule.t_count
    plan = (scenario, family, n, settings)

    results = [None] * r_outer
    if workers <= 1:
        for r in range(r_outer):
            try:
                results[r] = (pipelines.simulate_row(scenario, family, n, r, settings), None)
            except Exception as exc:
                results[r] = (None, f"{type(exc).__name__}: {exc}")
    else:
        chunks = _split_chunks(r_outer, workers)
        ctx = None
        try:
            import multiprocessing as mp

            ctx = mp.get_context("fork")
        except ValueError:  # pragma: no cover - non-fork platforms
            ctx = None
        with ProcessPoolExecutor(
            max_workers=workers, initializer=_init_worker, initargs=(plan,), mp_context=ctx
        ) as pool:
            for chunk_result in pool.map(_run_chunk, chunks):
                for r, row, err in chunk_result:
                    results[r] = (row, err)

    tau_pp = np.full((r_outer, t_count), np.nan)
    tau_ip = np.full((r_outer, t_count), np.nan)
    tau_fp = np.full((r_outer, t_count), np.nan)
    theta_star = np.full(r_outer, np.nan)
    theta_hat = np.full((r_outer, t_count), np.nan)
    failures = []
    for r, (row, err) in enumerate(results):
        if err is not None:
            failures.append((r, err))
            continue
        tau_pp[r] = row.tau_pp
        tau_ip[r] = row.tau_ip
        tau_fp[r] = row.tau_fp
        theta_star[r] = row.theta_star
        theta_hat[r] = row.theta_hat

    if len(failures) > failure_budget * r_outer:
        raise NumericalFailure(
            f"{len(failures)} of {r_outer} repetitions failed "
            f"(budget {failure_budget:.0%}); first: {failures[0][1]}"
        )
    return SummaryMatrix(
        n=n,
        tau_pp=tau_pp,
        tau_ip=tau_ip,
        tau_fp=tau_fp,
        theta_star=theta_star,
        theta_hat=theta_hat,
        ip_analyses=tuple(int(t) for t in np.flatnonzero(scenario.needs_ip)),
        fp_analyses=tuple(int(t) for t in np.flatnonzero(scenario.needs_fp)),
        failures=tuple(failures),
    )


def _split_chunks(total, workers):
    per = max(1, math.ceil(total / (workers * 4)))
    return [list(range(s, min(s + per, total))) for s in range(0, total, per)]


# ---------------------------------------------------------------------------
# Stopping rules
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class StoppingOutcome:
    nu: np.ndarray
    stop_analysis: np.ndarray
    stop_reason: np.ndarray

    def reason_name(self, r):
        return _REASON_NAMES[int(self.stop_reason[r])]


def _threshold_at(thresholds: Thresholds, atom, t: int) -> float:
    vec = getattr(thresholds, atom.threshold)
    if t >= len(vec):
        raise ConfigurationError(
            f"policy reads {atom.threshold}[{t}] but only {len(vec)} entries are configured"
        )
    return float(vec[t])


def stopping_table(matrix: SummaryMatrix, policy: StoppingPolicy, thresholds: Thresholds) -> StoppingOutcome:
    """Vectorized first-triggered stopping outcome for every repetition."""
    if policy.t_count != matrix.t_count:
        raise ConfigurationError("policy and matrix disagree on the analysis count")
    r_total = matrix.r_total
    nu = np.zeros(r_total, dtype=np.int8)
    stop_analysis = np.full(r_total, -1, dtype=np.int64)
    reason = np.full(r_total, REASON_NONE, dtype=np.int8)
    active = matrix.ok_mask.copy()
    for t in range(policy.t_count):
        for atom in policy.atoms[t]:
            if not active.any():
                break
            vals = matrix.summary(atom.kind)[:, t]
            if np.isnan(vals[active]).any():
                raise ConfigurationError(
                    f"policy reads tau_{atom.kind}[{t + 1}] which was not computed"
                )
            thr = _threshold_at(thresholds, atom, t)
            if atom.mode == "success":
                hit = active & (vals >= thr)
                nu[hit] = 1
                reason[hit] = REASON_SUCCESS
            else:
                hit = active & (vals < thr)
                reason[hit] = REASON_FAILURE
            stop_analysis[hit] = t
            active &= ~hit
    # anything still active reached the end without triggering any rule
    reason[active] = REASON_FINAL
    stop_analysis[active] = policy.t_count - 1
    return StoppingOutcome(nu=nu, stop_analysis=stop_analysis, stop_reason=reason)


def evaluate_stopping(row_summaries, policy: StoppingPolicy, thresholds: Thresholds):
    """Scalar stopping outcome for one repetition.

    ``row_summaries`` maps summary kind to a length-T sequence.  Returns
    ``(nu, stop_analysis, reason_name)`` with the first triggered rule in
    declared order, scanning analyses in order.
    """
    for t in range(policy.t_count):
        for atom in policy.atoms[t]:
            val = row_summaries[atom.kind][t]
            if val is None or (isinstance(val, float) and math.isnan(val)):
                raise ConfigurationError(
                    f"policy reads tau_{atom.kind}[{t + 1}] which was not computed"
                )
            thr = _threshold_at(thresholds, atom, t)
            if atom.mode == "success" and val >= thr:
                return 1, t, "success"
            if atom.mode == "failure" and val < thr:
                return 0, t, "failure"
    return 0, policy.t_count - 1, "final"


def operating_characteristic(matrix: SummaryMatrix, policy, thresholds):
    """Success probability plus cumulative per-analysis stop curves.

    Returns ``(prob, curves)`` where ``curves`` has per-analysis cumulative
    probabilities of stopping for success and for failure (failure includes a
    final analysis that triggers nothing).
    """
    ok = matrix.ok_mask
    if not ok.any():
        raise ConfigurationError("matrix has no usable repetitions")
    table = stopping_table(matrix, policy, thresholds)
    denom = ok.sum()
    prob = float(table.nu[ok].sum() / denom)
    t_count = matrix.t_count
    cum_success = np.zeros(t_count)
    cum_failure = np.zeros(t_count)
    for t in range(t_count):
        stopped_here = ok & (table.stop_analysis <= t)
        cum_success[t] = np.sum(stopped_here & (table.nu == 1)) / denom
        cum_failure[t] = np.sum(stopped_here & (table.nu == 0)) / denom
    return prob, {"success": cum_success, "failure": cum_failure}


# ---------------------------------------------------------------------------
# Threshold tuning
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TuningSpec:
    """How thresholds are searched on the null summary matrix.

    ``scalar-gamma`` searches a common posterior-success threshold on a grid;
    ``xi-offset`` keeps gamma and kappa fixed and searches the starting value
    of a linearly decreasing interim-predictive pattern; ``fixed`` validates
    the declared thresholds and fails if they do not bound the error rate.
    """

    kind: str
    grid_step: float = 0.0005
    grid_lo: float = 0.5
    grid_hi: float = 0.9995
    xi_decrement: float = 0.005

    def __post_init__(self):
        if self.kind not in ("scalar-gamma", "xi-offset", "fixed"):
            raise ConfigurationError(f"unknown tuning kind {self.kind!r}")


def tune_thresholds(
    null_matrix: SummaryMatrix,
    policy: StoppingPolicy,
    alpha: float,
    tuning: TuningSpec,
    base: Thresholds,
) -> Thresholds:
    """Smallest thresholds on the tuning grid bounding the type I error by alpha."""
    if not (0.0 < alpha <= 1.0):
        raise ConfigurationError("alpha must lie in (0, 1]")
    t_count = policy.t_count

    if tuning.kind == "fixed":
        err, _ = operating_characteristic(null_matrix, policy, base)
        if err > alpha:
            raise TargetUnreachableError(
                f"declared thresholds give type I error {err:.4f} > alpha {alpha}",
                best_value=err,
            )
        return base

    grid = np.round(
        np.arange(tuning.grid_lo, tuning.grid_hi + tuning.grid_step / 2, tuning.grid_step),
        10,
    )
    best_err = None
    for value in grid:
        if tuning.kind == "scalar-gamma":
            cand = base.replaced(gamma=(float(value),) * t_count)
        else:
            n_xi = len(base.xi) if base.xi else max(t_count - 1, 1)
            pattern = tuple(
                min(max(float(value) - tuning.xi_decrement * t, 0.0), 1.0)
                for t in range(n_xi)
            )
            cand = base.replaced(xi=pattern)
        err, _ = operating_characteristic(null_matrix, policy, cand)
        best_err = err if best_err is None else min(best_err, err)
        if err <= alpha:
            return cand
    raise TargetUnreachableError(
        f"no grid point bounds the type I error by {alpha}; minimum achieved {best_err:.4f}",
        best_value=best_err,
    )


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------


def _fmt(x) -> str:
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return ""
    return repr(float(x))


def save_matrix(matrix: SummaryMatrix, path, sidecar: dict = None):
    """Write the flat CSV (one row per repetition) and an optional JSON sidecar.

    Column layout: ``r, theta_star, tau_pp_1..T, tau_ip_t.., tau_fp_t..,
    theta_hat_1..T`` with absent entries empty.  Formatting is the shortest
    round-trip float representation, so identical matrices produce identical
    bytes.
    """
    t_count = matrix.t_count
    ip_cols = list(matrix.ip_analyses)
    fp_cols = list(matrix.fp_analyses)
    header = (
        ["r", "theta_star"]
        + [f"tau_pp_{t + 1}" for t in range(t_count)]
        + [f"tau_ip_{t + 1}" for t in ip_cols]
        + [f"tau_fp_{t + 1}" for t in fp_cols]
        + [f"theta_hat_{t + 1}" for t in range(t_count)]
    )
    lines = [",".join(header)]
    for r in range(matrix.r_total):
        cells = [str(r), _fmt(matrix.theta_star[r])]
        cells += [_fmt(v) for v in matrix.tau_pp[r]]
        cells += [_fmt(matrix.tau_ip[r, t]) for t in ip_cols]
        cells += [_fmt(matrix.tau_fp[r, t]) for t in fp_cols]
        cells += [_fmt(v) for v in matrix.theta_hat[r]]
        lines.append(",".join(cells))
    path = os.fspath(path)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    if sidecar is not None:
        meta = dict(sidecar)
        meta["n"] = matrix.n
        meta["failures"] = [[int(r), msg] for r, msg in matrix.failures]
        with open(path + ".json", "w", encoding="utf-8") as fh:
            json.dump(meta, fh, indent=2, sort_keys=True)
            fh.write("\n")


def load_matrix(path) -> SummaryMatrix:
    with open(os.fspath(path), encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        rows = [line.rstrip("\n").split(",") for line in fh if line.strip()]
    cols = {name: i for i, name in enumerate(header)}
    t_count = sum(1 for name in header if name.startswith("tau_pp_"))
    ip_cols = [int(name.rsplit("_", 1)[1]) - 1 for name in header if name.startswith("tau_ip_")]
    fp_cols = [int(name.rsplit("_", 1)[1]) - 1 for name in header if name.startswith("tau_fp_")]
    r_total = len(rows)

    def parse(cell):
        return float(cell) if cell else np.nan

    tau_pp = np.full((r_total, t_count), np.nan)
    tau_ip = np.full((r_total, t_count), np.nan)
    tau_fp = np.full((r_total, t_count), np.nan)
    theta_star = np.full(r_total, np.nan)
    theta_hat = np.full((r_total, t_count), np.nan)
    failures = []
    for i, row in enumerate(rows):
        theta_star[i] = parse(row[cols["theta_star"]])
        for t in range(t_count):
            tau_pp[i, t] = parse(row[cols[f"tau_pp_{t + 1}"]])
            theta_hat[i, t] = parse(row[cols[f"theta_hat_{t + 1}"]])
        for t in ip_cols:
            tau_ip[i, t] = parse(row[cols[f"tau_ip_{t + 1}"]])
        for t in fp_cols:
            tau_fp[i, t] = parse(row[cols[f"tau_fp_{t + 1}"]])
        if math.isnan(theta_star[i]) and np.isnan(tau_pp[i]).all():
            failures.append((i, "recorded failure"))
    # n is carried by the sidecar; infer a placeholder when loaded bare
    return SummaryMatrix(
        n=0,
        tau_pp=tau_pp,
        tau_ip=tau_ip,
        tau_fp=tau_fp,
        theta_star=theta_star,
        theta_hat=theta_hat,
        ip_analyses=tuple(ip_cols),
        fp_analyses=tuple(fp_cols),
        failures=tuple(failures),
    )
