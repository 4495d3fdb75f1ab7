"""Shared domain types, logit utilities, and reproducible random streams.

The types here are immutable after construction and safe to share across
worker processes.  Random streams are counter-based (Philox) and derived as a
pure function of ``(base_seed, repetition, analysis, role)``, so any quantity
computed from a stream is independent of execution order and worker count.
"""

import math
from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

from .errors import ConfigurationError

__all__ = [
    "Hypothesis",
    "TrialSchedule",
    "Thresholds",
    "RuleAtom",
    "StoppingPolicy",
    "SimulationSettings",
    "StreamRole",
    "clamped_logit",
    "expit",
    "stream_for",
]


@dataclass(frozen=True)
class Hypothesis:
    """Interval alternative ``delta_L < theta < delta_U``; the null is its complement.

    At least one bound must be finite; either may be infinite for one-sided
    hypotheses.
    """

    delta_l: float
    delta_u: float

    def __post_init__(self):
        if not self.delta_l < self.delta_u:
            raise ConfigurationError(
                f"hypothesis bounds must satisfy delta_l < delta_u, "
                f"got ({self.delta_l}, {self.delta_u})"
            )
        if math.isinf(self.delta_l) and math.isinf(self.delta_u):
            raise ConfigurationError("at least one hypothesis bound must be finite")

    def contains(self, theta: float) -> bool:
        return self.delta_l < theta < self.delta_u


@dataclass(frozen=True)
class TrialSchedule:
    """Analysis count, per-analysis sample-size multipliers, and timing constants.

    ``c`` must start at 1 and be strictly increasing; the sample size for
    analysis ``t`` at index ``n`` is ``round(c[t] * n)`` with ties to even.
    ``max_followup == 0`` means no censoring horizon.
    """

    t_count: int
    c: tuple
    enrollment_mean_gap: float = 1.0
    max_followup: float = 0.0

    def __post_init__(self):
        if self.t_count < 1 or len(self.c) != self.t_count:
            raise ConfigurationError("schedule needs one multiplier per analysis")
        if abs(self.c[0] - 1.0) > 1e-12:
            raise ConfigurationError("first sample-size multiplier must be 1")
        if any(b <= a for a, b in zip(self.c, self.c[1:])):
            raise ConfigurationError("sample-size multipliers must be strictly increasing")
        if any(ct <= 0 for ct in self.c):
            raise ConfigurationError("sample-size multipliers must be positive")
        if self.enrollment_mean_gap <= 0:
            raise ConfigurationError("enrollment mean gap must be positive")
        if self.max_followup < 0:
            raise ConfigurationError("max followup must be nonnegative")

    def analysis_sizes(self, n: int) -> np.ndarray:
        """Per-analysis cumulative sample sizes for first-analysis size ``n``."""
        if n < 1:
            raise ConfigurationError("first-analysis sample size must be >= 1")
        sizes = np.array([int(round(ct * n)) for ct in self.c], dtype=np.int64)
        return np.maximum.accumulate(sizes)

    @property
    def is_adaptive(self) -> bool:
        return self.t_count > 1


@dataclass(frozen=True)
class Thresholds:
    """Decision thresholds: posterior success (gamma), interim-predictive
    success (xi), and final-predictive failure (kappa)."""

    gamma: tuple
    xi: tuple = ()
    kappa: tuple = ()

    def __post_init__(self):
        for name, vec in (("gamma", self.gamma), ("xi", self.xi), ("kappa", self.kappa)):
            if any(not (0.0 <= v <= 1.0) for v in vec):
                raise ConfigurationError(f"{name} thresholds must lie in [0, 1]")

    def replaced(self, **kwargs) -> "Thresholds":
        vals = {"gamma": self.gamma, "xi": self.xi, "kappa": self.kappa}
        vals.update({k: tuple(v) for k, v in kwargs.items()})
        return Thresholds(**vals)


@dataclass(frozen=True)
class RuleAtom:
    """One stopping-rule clause: compare a summary against a threshold vector entry.

    ``kind`` selects the summary (``pp``, ``ip``, ``fp``); ``mode`` is
    ``success`` (trigger when summary >= threshold) or ``failure`` (trigger
    when summary < threshold); ``threshold`` names the vector the per-analysis
    value is read from (``gamma``, ``xi``, or ``kappa``).
    """

    kind: str
    mode: str
    threshold: str

    def __post_init__(self):
        if self.kind not in ("pp", "ip", "fp"):
            raise ConfigurationError(f"unknown summary kind {self.kind!r}")
        if self.mode not in ("success", "failure"):
            raise ConfigurationError(f"unknown rule mode {self.mode!r}")
        if self.threshold not in ("gamma", "xi", "kappa"):
            raise ConfigurationError(f"unknown threshold vector {self.threshold!r}")


@dataclass(frozen=True)
class StoppingPolicy:
    """Ordered rule atoms per analysis, evaluated in declared order.

    Final-predictive atoms are only allowed before the last analysis (they
    require future stages).  Interim-predictive atoms are allowed at the last
    analysis as well: a single-analysis design with artificial censoring makes
    its one decision by resolving the censored outcomes predictively.
    """

    atoms: tuple  # tuple of per-analysis tuples of RuleAtom

    def __post_init__(self):
        t_count = len(self.atoms)
        if t_count < 1:
            raise ConfigurationError("policy must cover at least one analysis")
        for t, per_analysis in enumerate(self.atoms):
            for atom in per_analysis:
                if atom.kind == "fp" and t == t_count - 1:
                    raise ConfigurationError(
                        "final-predictive summaries are undefined at the last analysis"
                    )

    @property
    def t_count(self) -> int:
        return len(self.atoms)

    def needs(self, kind: str) -> np.ndarray:
        """Boolean per-analysis mask of analyses whose rules read ``kind``."""
        return np.array(
            [any(a.kind == kind for a in per) for per in self.atoms], dtype=bool
        )


@dataclass(frozen=True)
class SimulationSettings:
    """Repetition counts, base seed, and the probability clamp used before logits."""

    r_outer: int
    m_inner: int = 1
    base_seed: int = 20260809
    logit_clamp_eps: float = 1e-6

    def __post_init__(self):
        if self.r_outer < 1 or self.m_inner < 1:
            raise ConfigurationError("repetition counts must be positive")
        if not (0.0 < self.logit_clamp_eps < 0.5):
            raise ConfigurationError("logit clamp eps must lie in (0, 0.5)")


def clamped_logit(p: float, eps: float = 1e-6) -> float:
    """log-odds of ``p`` after clamping into [eps, 1 - eps]; finite for all p in [0, 1]."""
    p = min(max(p, eps), 1.0 - eps)
    return math.log(p) - math.log1p(-p)


def expit(l: float) -> float:
    """Inverse logit, saturating cleanly for large |l|."""
    if l >= 0.0:
        return 1.0 / (1.0 + math.exp(-l))
    e = math.exp(l)
    return e / (1.0 + e)


class StreamRole(IntEnum):
    """Independent random-stream families within one repetition."""

    OUTER_DATA = 0
    INNER_PREDICTIVE = 1
    POSTERIOR_DRAWS = 2
    THRESHOLD_SEARCH = 3


_MASK64 = (1 << 64) - 1


def stream_for(base_seed: int, repetition: int, analysis: int, role: StreamRole):
    """Counter-based random stream keyed by its arguments.

    Returns a ``numpy.random.Generator`` over a Philox bit generator whose key
    is a pure function of the arguments: identical arguments yield identical
    streams regardless of execution order, process, or thread count.
    """
    if repetition < 0 or analysis < 0:
        raise ConfigurationError("repetition and analysis indices must be nonnegative")
    if repetition >= (1 << 40) or analysis >= (1 << 16):
        raise ConfigurationError("stream index out of the supported range")
    context = (int(role) << 56) | (analysis << 40) | repetition
    key = np.array([base_seed & _MASK64, context & _MASK64], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))
