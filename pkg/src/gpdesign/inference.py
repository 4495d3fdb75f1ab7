"""Loss-based posterior inference.

A loss function plus a learning rate defines a generalized posterior:
``exp(-omega * sum_i loss(x_i, theta)) * prior(theta)``.  This module provides
M-estimation (the minimizer of the summed loss), a Laplace approximation to
the generalized posterior, an adaptive random-walk Metropolis sampler for it,
posterior probabilities of an interval hypothesis, and the kernel-density
calibration of the learning rate that matches posterior spread to the
sampling variability of the sample median.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from ._jit import kernel
from .core import Hypothesis, clamped_logit, expit
from .errors import ConfigurationError, ConvergenceError, HessianError, NumericalFailure

__all__ = [
    "NormalPrior",
    "UniformPrior",
    "PriorSpec",
    "FixedOmega",
    "CalibratedMedianOmega",
    "LossModel",
    "PosteriorApprox",
    "m_estimate",
    "laplace_posterior",
    "mcmc_posterior",
    "posterior_prob",
    "calibrate_omega",
    "gaussian_loss_model",
    "absolute_loss_model",
    "silverman_bandwidth",
    "normal_cdf",
]

SQRT2 = math.sqrt(2.0)


def normal_cdf(x: float) -> float:
    return 0.5 * (1.0 + math.erf(x / SQRT2))


# ---------------------------------------------------------------------------
# Priors
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class NormalPrior:
    mean: float
    sd: float

    def __post_init__(self):
        if self.sd <= 0:
            raise ConfigurationError("normal prior sd must be positive")

    def neg_log_pdf(self, x):
        return 0.5 * ((x - self.mean) / self.sd) ** 2

    def neg_log_grad(self, x):
        return (x - self.mean) / self.sd**2

    def neg_log_hess(self, x):
        return 1.0 / self.sd**2

    def support(self):
        return (-math.inf, math.inf)


@dataclass(frozen=True)
class UniformPrior:
    lo: float
    hi: float

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ConfigurationError("uniform prior needs lo < hi")

    def neg_log_pdf(self, x):
        return 0.0 if self.lo <= x <= self.hi else math.inf

    def neg_log_grad(self, x):
        return 0.0

    def neg_log_hess(self, x):
        return 0.0

    def support(self):
        return (self.lo, self.hi)


@dataclass(frozen=True)
class PriorSpec:
    """Independent per-coordinate priors."""

    coords: tuple

    def __post_init__(self):
        if len(self.coords) < 1:
            raise ConfigurationError("prior needs at least one coordinate")

    @property
    def dim(self):
        return len(self.coords)

    def neg_log_pdf(self, theta):
        return sum(c.neg_log_pdf(x) for c, x in zip(self.coords, theta))

    def neg_log_grad(self, theta):
        return np.array([c.neg_log_grad(x) for c, x in zip(self.coords, theta)])

    def neg_log_hess(self, theta):
        return np.diag([c.neg_log_hess(x) for c, x in zip(self.coords, theta)])

    def box(self):
        los, his = zip(*(c.support() for c in self.coords))
        return np.array(los), np.array(his)


# ---------------------------------------------------------------------------
# Loss models
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FixedOmega:
    value: float

    def __post_init__(self):
        if self.value <= 0:
            raise ConfigurationError("fixed learning rate must be positive")

    def resolve(self, data):
        return self.value


@dataclass(frozen=True)
class CalibratedMedianOmega:
    """Learning rate 2 * f_hat(median) estimated from the analyzed sample."""

    def resolve(self, data):
        return calibrate_omega(np.asarray(data, dtype=float))


@dataclass(frozen=True)
class LossModel:
    """A per-observation loss with derivatives in theta.

    ``loss``/``grad``/``hess`` map ``(x, theta) -> float / (dim,) / (dim, dim)``
    for one observation ``x``.  ``hess`` may be None (finite-differenced).
    Non-smooth losses set ``smooth=False`` and may supply ``exact_minimizer``
    (e.g. the sample median for absolute deviation).  ``target_index`` is the
    coordinate the hypothesis is about.
    """

    dim: int
    loss: object
    grad: object = None
    hess: object = None
    omega_policy: object = field(default_factory=lambda: FixedOmega(1.0))
    smooth: bool = True
    exact_minimizer: object = None
    target_index: int = 0
    name: str = "loss"

    def total_loss(self, data, theta):
        theta = np.asarray(theta, dtype=float)
        return float(sum(self.loss(x, theta) for x in data))

    def total_grad(self, data, theta):
        theta = np.asarray(theta, dtype=float)
        if self.grad is not None:
            g = np.zeros(self.dim)
            for x in data:
                g += self.grad(x, theta)
            return g
        return _fd_grad(lambda th: self.total_loss(data, th), theta)

    def total_hess(self, data, theta):
        theta = np.asarray(theta, dtype=float)
        if self.hess is not None:
            h = np.zeros((self.dim, self.dim))
            for x in data:
                h += self.hess(x, theta)
            return h
        if self.grad is not None:
            return _fd_jacobian(lambda th: self.total_grad(data, th), theta)
        return _fd_hess(lambda th: self.total_loss(data, th), theta)


def _fd_grad(f, theta, step=1e-6):
    g = np.zeros(len(theta))
    for i in range(len(theta)):
        e = np.zeros(len(theta))
        e[i] = step
        g[i] = (f(theta + e) - f(theta - e)) / (2 * step)
    return g


def _fd_jacobian(f, theta, step=1e-5):
    d = len(theta)
    jac = np.zeros((d, d))
    for i in range(d):
        e = np.zeros(d)
        e[i] = step
        jac[:, i] = (f(theta + e) - f(theta - e)) / (2 * step)
    return 0.5 * (jac + jac.T)


def _fd_hess(f, theta, step=1e-4):
    return _fd_jacobian(lambda th: _fd_grad(f, th, step), theta, step)


# ---------------------------------------------------------------------------
# M-estimation
# ---------------------------------------------------------------------------


def m_estimate(loss: LossModel, data, x0=None, bounds=None, tol=1e-8, max_iter=200):
    """Minimizer of the summed loss over theta.

    Smooth losses use damped Newton with backtracking and stop when the mean
    gradient norm falls below ``tol``.  Non-smooth losses use the model's
    exact minimizer when available, else a 64-iteration golden-section search
    on the target coordinate within ``bounds``.
    """
    data = list(data)
    if len(data) == 0:
        raise ConfigurationError("m_estimate needs a nonempty sample")
    if loss.exact_minimizer is not None:
        return np.atleast_1d(np.asarray(loss.exact_minimizer(data), dtype=float))
    if not loss.smooth:
        if loss.dim != 1:
            raise ConfigurationError("golden-section fallback is one-dimensional")
        lo, hi = bounds if bounds is not None else (min(data) - 1.0, max(data) + 1.0)
        x = _golden_section(lambda th: loss.total_loss(data, [th]), lo, hi)
        return np.array([x])

    theta = np.zeros(loss.dim) if x0 is None else np.asarray(x0, dtype=float).copy()
    n = len(data)
    last_gnorm = math.inf
    for _ in range(max_iter):
        g = loss.total_grad(data, theta)
        last_gnorm = float(np.linalg.norm(g)) / n
        if last_gnorm <= tol:
            return theta
        h = loss.total_hess(data, theta)
        step = _newton_step(h, g)
        theta = _backtrack(lambda th: loss.total_loss(data, th), theta, g, step)
    raise ConvergenceError(
        f"M-estimation did not reach mean-gradient tolerance {tol:g} "
        f"after {max_iter} iterations (last norm {last_gnorm:.3e})",
        last_iterate=theta,
        grad_norm=last_gnorm,
    )


def _newton_step(h, g):
    d = len(g)
    bump = 0.0
    for _ in range(40):
        try:
            step = np.linalg.solve(h + bump * np.eye(d), g)
        except np.linalg.LinAlgError:
            step = None
        if step is not None and np.dot(step, g) > 0:
            return step
        bump = max(2.0 * bump, 1e-8 * (1.0 + abs(np.trace(h))))
    return g  # gradient descent as a last resort


def _backtrack(f, theta, g, step, shrink=0.5, max_halvings=40):
    f0 = f(theta)
    slope = float(np.dot(g, step))
    scale = 1.0
    for _ in range(max_halvings):
        cand = theta - scale * step
        fc = f(cand)
        if math.isfinite(fc) and fc <= f0 - 1e-4 * scale * slope:
            return cand
        scale *= shrink
    return theta - scale * step


def _golden_section(f, lo, hi, iters=64):
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(iters):
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    return 0.5 * (a + b)


# ---------------------------------------------------------------------------
# Posterior approximations
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PosteriorApprox:
    """Normal or sampled approximation of a generalized posterior.

    ``scaled_covariance`` is ``n_effective`` times the posterior covariance so
    it stays comparable across sample sizes.
    """

    mode: np.ndarray
    scaled_covariance: np.ndarray
    n_effective: int
    method: str
    target_index: int = 0
    draws: np.ndarray = None
    warnings: tuple = ()

    @property
    def target_sd(self) -> float:
        var = self.scaled_covariance[self.target_index, self.target_index]
        return math.sqrt(var / self.n_effective)


def laplace_posterior(loss: LossModel, prior: PriorSpec, data, omega: float) -> PosteriorApprox:
    """Normal approximation at the mode of the generalized posterior.

    The mode minimizes ``omega * total_loss - log prior``; the covariance is
    the inverse Hessian of that objective at the mode.
    """
    data = list(data)
    n = len(data)
    if prior.dim != loss.dim:
        raise ConfigurationError("prior and loss dimensions differ")

    def objective(th):
        return omega * loss.total_loss(data, th) + prior.neg_log_pdf(th)

    lo, hi = prior.box()
    if loss.smooth:
        start = m_estimate(loss, data)
        theta = np.clip(start, lo + 1e-12, hi - 1e-12)
        for _ in range(100):
            g = omega * loss.total_grad(data, theta) + prior.neg_log_grad(theta)
            if np.linalg.norm(g) / n <= 1e-9 * max(1.0, omega):
                break
            h = omega * loss.total_hess(data, theta) + prior.neg_log_hess(theta)
            theta = np.clip(_backtrack(objective, theta, g, _newton_step(h, g)), lo, hi)
        hess = omega * loss.total_hess(data, theta) + prior.neg_log_hess(theta)
    else:
        if loss.exact_minimizer is not None:
            theta = np.clip(np.atleast_1d(loss.exact_minimizer(data)), lo, hi)
        else:
            theta = np.clip(m_estimate(loss, data, bounds=(lo[0], hi[0])), lo, hi)
        if loss.hess is None:
            raise HessianError("non-smooth loss needs a smoothed curvature hook")
        hess = omega * loss.total_hess(data, theta) + prior.neg_log_hess(theta)

    eigvals = np.linalg.eigvalsh(hess)
    if eigvals[0] <= 0:
        raise HessianError(
            f"posterior Hessian is not positive definite (min eigenvalue {eigvals[0]:.3e})"
        )
    cond = float(eigvals[-1] / eigvals[0])
    if cond > 1e14:
        raise HessianError(
            f"posterior Hessian is numerically singular (condition number {cond:.3e})",
            condition_number=cond,
        )
    cov = np.linalg.inv(hess)
    return PosteriorApprox(
        mode=theta,
        scaled_covariance=n * cov,
        n_effective=n,
        method="laplace",
        target_index=loss.target_index,
    )


def mcmc_posterior(
    loss: LossModel,
    prior: PriorSpec,
    data,
    omega: float,
    chains: int = 2,
    burn_in: int = 1000,
    draws: int = 10000,
    stream=None,
) -> PosteriorApprox:
    """Adaptive random-walk Metropolis draws from the generalized posterior.

    The proposal scale is tuned toward an acceptance rate in [0.2, 0.5] during
    burn-in only and frozen afterwards.  Retained draws from all chains are
    pooled.  An acceptance rate outside [0.05, 0.95] after burn-in attaches a
    warning to the result rather than failing.
    """
    if draws < 1000:
        raise ConfigurationError("mcmc_posterior needs at least 1000 retained draws per chain")
    if stream is None:
        raise ConfigurationError("mcmc_posterior needs an explicit random stream")
    data = list(data)
    n = len(data)
    lo, hi = prior.box()

    def neg_log_post(th):
        return omega * loss.total_loss(data, th) + prior.neg_log_pdf(th)

    try:
        lap = laplace_posterior(loss, prior, data, omega)
        center = lap.mode
        base_scale = np.sqrt(np.diag(lap.scaled_covariance) / n)
    except Exception:
        center = np.clip(np.zeros(loss.dim), lo, hi)
        base_scale = np.ones(loss.dim)

    all_draws = np.empty((chains * draws, loss.dim))
    acc_rates = []
    for c in range(chains):
        theta = np.clip(center + 0.5 * c * base_scale, lo + 1e-12, hi - 1e-12)
        logp = -neg_log_post(theta)
        scale = 2.4 * base_scale / math.sqrt(loss.dim)
        accepted_window = 0
        for i in range(burn_in):
            theta, logp, acc = _rw_step(theta, logp, scale, neg_log_post, stream)
            accepted_window += acc
            if (i + 1) % 50 == 0:
                rate = accepted_window / 50.0
                if rate < 0.2:
                    scale *= 0.7
                elif rate > 0.5:
                    scale *= 1.4
                accepted_window = 0
        accepted = 0
        for i in range(draws):
            theta, logp, acc = _rw_step(theta, logp, scale, neg_log_post, stream)
            accepted += acc
            all_draws[c * draws + i] = theta
        acc_rates.append(accepted / draws)

    warnings = ()
    if any(r < 0.05 or r > 0.95 for r in acc_rates):
        warnings = (
            f"post-burn-in acceptance rates {['%.3f' % r for r in acc_rates]} "
            "outside [0.05, 0.95]",
        )
    mean = all_draws.mean(axis=0)
    cov = np.atleast_2d(np.cov(all_draws.T))
    return PosteriorApprox(
        mode=mean,
        scaled_covariance=n * cov,
        n_effective=n,
        method="mcmc",
        target_index=loss.target_index,
        draws=all_draws,
        warnings=warnings,
    )


def _rw_step(theta, logp, scale, neg_log_post, stream):
    prop = theta + scale * stream.standard_normal(len(theta))
    logp_prop = -neg_log_post(prop)
    if math.isfinite(logp_prop) and math.log(stream.random()) < logp_prop - logp:
        return prop, logp_prop, 1
    return theta, logp, 0


def posterior_prob(post: PosteriorApprox, hyp: Hypothesis, use_kde: bool = False) -> float:
    """Posterior probability that the target coordinate lies in (delta_l, delta_u)."""
    if post.method == "mcmc" and post.draws is not None:
        x = post.draws[:, post.target_index]
        if use_kde:
            h = silverman_bandwidth(x)
            upper = _phi_mean(x, hyp.delta_u, h)
            lower = _phi_mean(x, hyp.delta_l, h)
            return float(upper - lower)
        return float(np.mean((x > hyp.delta_l) & (x < hyp.delta_u)))
    mode = float(post.mode[post.target_index])
    sd = post.target_sd
    upper = 1.0 if math.isinf(hyp.delta_u) else normal_cdf((hyp.delta_u - mode) / sd)
    lower = 0.0 if math.isinf(hyp.delta_l) else normal_cdf((hyp.delta_l - mode) / sd)
    return float(upper - lower)


def _phi_mean(x, bound, h):
    if math.isinf(bound):
        return 1.0 if bound > 0 else 0.0
    from scipy.stats import norm

    return float(np.mean(norm.cdf((bound - x) / h)))


# ---------------------------------------------------------------------------
# Learning-rate calibration and KDE kernels
# ---------------------------------------------------------------------------


def kde_density_at(x, point, bandwidth):
    """Gaussian kernel density estimate of the sample ``x`` at ``point``."""
    return _kde_at(np.ascontiguousarray(x, dtype=np.float64), float(point), float(bandwidth))


@kernel
def _kde_at(x, point, h):
    acc = 0.0
    for i in range(x.shape[0]):
        z = (point - x[i]) / h
        acc += math.exp(-0.5 * z * z)
    return acc / (x.shape[0] * h * math.sqrt(2.0 * math.pi))


def silverman_bandwidth(x) -> float:
    """0.9 * min(sd, IQR / 1.34) * n^(-1/5); zero for degenerate samples."""
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    sd = float(np.std(x, ddof=1)) if n > 1 else 0.0
    q75, q25 = np.percentile(x, [75.0, 25.0])
    iqr = float(q75 - q25)
    spread = min(sd, iqr / 1.34) if iqr > 0 else sd
    return 0.9 * spread * n ** (-0.2)


def calibrate_omega(data) -> float:
    """Learning rate ``2 * f_hat(median)`` with a Silverman-bandwidth Gaussian KDE."""
    x = np.asarray(data, dtype=float)
    if x.shape[0] < 10:
        raise ConfigurationError("learning-rate calibration needs at least 10 observations")
    h = silverman_bandwidth(x)
    if h <= 0 or not math.isfinite(h):
        raise NumericalFailure("degenerate sample: KDE bandwidth is zero")
    med = float(np.median(x))
    return 2.0 * kde_density_at(x, med, h)


# ---------------------------------------------------------------------------
# Stock loss models
# ---------------------------------------------------------------------------


def gaussian_loss_model(sd: float = 1.0) -> LossModel:
    """Negative log-likelihood of N(theta, sd^2) up to a constant."""
    inv_var = 1.0 / sd**2

    return LossModel(
        dim=1,
        loss=lambda x, th: 0.5 * inv_var * (x - th[0]) ** 2,
        grad=lambda x, th: np.array([inv_var * (th[0] - x)]),
        hess=lambda x, th: np.array([[inv_var]]),
        name="gaussian",
    )


def absolute_loss_model(data) -> LossModel:
    """Absolute deviation |x - theta| with a KDE-smoothed curvature hook.

    The exact minimizer is the sample median.  The per-observation curvature
    is twice a Gaussian kernel at ``x - theta`` (bandwidth from ``data``), so
    the summed Hessian at the mode approximates ``2 n f(theta)``.
    """
    x = np.asarray(data, dtype=float)
    h = silverman_bandwidth(x)
    if h <= 0 or not math.isfinite(h):
        raise NumericalFailure("degenerate sample: KDE bandwidth is zero")
    norm_const = 1.0 / (h * math.sqrt(2.0 * math.pi))

    def _hess(xi, th):
        z = (xi - th[0]) / h
        return np.array([[2.0 * norm_const * math.exp(-0.5 * z * z)]])

    return LossModel(
        dim=1,
        loss=lambda xi, th: abs(xi - th[0]),
        grad=lambda xi, th: np.array([math.copysign(1.0, th[0] - xi)]),
        hess=_hess,
        smooth=False,
        exact_minimizer=lambda d: np.array([float(np.median(np.asarray(d, dtype=float)))]),
        omega_policy=CalibratedMedianOmega(),
        name="absolute-deviation",
    )
