"""Moment-matched Gaussian approximations to the max/min of Gaussian variables.

The pairwise rule computes the exact first two moments of

    p(m) ∝ N(m; mu0, s0^2) * [ p(x1 = m, x2 < m) + p(x2 = m, x1 < m) ]

for a bivariate Gaussian (x1, x2) and an optional Gaussian prior on the
maximum m, and returns the Gaussian with those moments.  Larger sets are
handled by folding the pairwise rule left to right.

The arithmetic is written against numpy arrays so that many independent
pairs (e.g. every interior node on one DAG level) can be processed at once.
The scalar API wraps the array kernel.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.special import log_ndtr, ndtr

__all__ = [
    "GaussianBelief",
    "BivariatePair",
    "ExtremalPrior",
    "NO_PRIOR",
    "STANDARD_PRIOR",
    "max_moments_pair",
    "min_moments_pair",
    "extremum_of_set",
    "max_moments_arrays",
    "fold_extremum_arrays",
    "max_independent_arrays",
]

Z_FLOOR = 1e-300
_LOG_Z_FLOOR = math.log(Z_FLOOR)
_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)
# Below this the difference x1 - x2 is treated as deterministic.
_DEGENERATE_SCALE = 1e-14


@dataclass(frozen=True)
class GaussianBelief:
    mean: float
    variance: float

    def __post_init__(self):
        if not (math.isfinite(self.mean) and math.isfinite(self.variance)):
            raise ValueError(f"non-finite belief ({self.mean!r}, {self.variance!r})")
        if self.variance < 0.0:
            raise ValueError(f"negative variance {self.variance!r}")

    @property
    def std(self) -> float:
        return math.sqrt(self.variance)

    def __add__(self, other: "GaussianBelief") -> "GaussianBelief":
        # sum of independent Gaussians
        return GaussianBelief(self.mean + other.mean, self.variance + other.variance)

    def __neg__(self) -> "GaussianBelief":
        return GaussianBelief(-self.mean, self.variance)


@dataclass(frozen=True)
class BivariatePair:
    a: GaussianBelief
    b: GaussianBelief
    correlation: float = 0.0

    def __post_init__(self):
        if math.isnan(self.correlation) or not -1.0 <= self.correlation <= 1.0:
            raise ValueError(f"correlation {self.correlation!r} outside [-1, 1]")


@dataclass(frozen=True)
class ExtremalPrior:
    """Gaussian prior on the extremum; ``belief=None`` is the flat limit."""

    belief: Optional[GaussianBelief] = None

    def __post_init__(self):
        if self.belief is not None and self.belief.variance <= 0.0:
            raise ValueError("prior variance must be positive")

    @property
    def kind(self) -> str:
        return "none" if self.belief is None else "gaussian"

    @property
    def params(self) -> Optional[tuple]:
        if self.belief is None:
            return None
        return (self.belief.mean, self.belief.variance)

    def negated(self) -> "ExtremalPrior":
        return self if self.belief is None else ExtremalPrior(-self.belief)

    @classmethod
    def gaussian(cls, mean: float, variance: float) -> "ExtremalPrior":
        return cls(GaussianBelief(mean, variance))


NO_PRIOR = ExtremalPrior()
STANDARD_PRIOR = ExtremalPrior.gaussian(0.0, 1.0)


def _branch(mu_i, var_i, mu_j, var_j, rho, prior):
    """Moments of the branch "x_i is the maximum".

    Returns ``(log_evidence, log_cdf, mean, variance, scale)``.  ``scale``
    is the denominator of the CDF argument; zero flags a deterministic
    ``x_i - x_j``.
    """
    s_i = np.sqrt(var_i)
    s_j = np.sqrt(var_j)
    if prior is None:
        r = 1.0
        mu_c = mu_i
        shift = 0.0
        log_evidence = np.zeros_like(mu_i)
    else:
        mu0, var0 = prior
        tot = var_i + var0
        r = var0 / tot
        mu_c = (mu_i * var0 + mu0 * var_i) / tot
        shift = rho * s_j * s_i * (mu0 - mu_i) / tot
        log_evidence = -0.5 * (mu0 - mu_i) ** 2 / tot - 0.5 * np.log(tot) - _LOG_SQRT_2PI
    var_c = var_i * r
    slope = s_i - rho * s_j
    scale = np.sqrt(np.maximum(var_j * (1.0 - rho * rho) + slope * slope * r, 0.0))
    safe = np.where(scale > _DEGENERATE_SCALE, scale, 1.0)
    k = ((mu_c - mu_j) - shift) / safe
    delta = np.sqrt(r) * slope / safe
    log_cdf = log_ndtr(k)
    mills = np.exp(-0.5 * k * k - _LOG_SQRT_2PI - log_cdf)
    mean = mu_c + np.sqrt(var_c) * delta * mills
    var = var_c * (1.0 - delta * delta * mills * (k + mills))
    return log_evidence, log_cdf, mean, np.maximum(var, 0.0), scale


def _prior_fuse(mu, var, prior):
    if prior is None:
        return mu, var
    mu0, var0 = prior
    tot = var + var0
    return (mu * var0 + mu0 * var) / tot, var * var0 / tot


def max_moments_arrays(mu1, var1, mu2, var2, rho=0.0, prior=None):
    """Vectorised pairwise max moment matching.

    ``prior`` is ``None`` (flat) or a ``(mean, variance)`` tuple.  Returns
    ``(mean, variance)`` arrays broadcast from the inputs.  The result is
    bit-for-bit symmetric under swapping the two inputs.
    """
    mu1, var1, mu2, var2, rho = np.broadcast_arrays(
        *(np.asarray(x, dtype=float) for x in (mu1, var1, mu2, var2, rho))
    )
    with np.errstate(divide="ignore", invalid="ignore", over="ignore", under="ignore"):
        e1, c1, m1, v1, d1 = _branch(mu1, var1, mu2, var2, rho, prior)
        e2, c2, m2, v2, d2 = _branch(mu2, var2, mu1, var1, rho, prior)
        l1 = e1 + c1
        l2 = e2 + c2
        top = np.maximum(l1, l2)
        log_z = top + np.log(np.exp(l1 - top) + np.exp(l2 - top))
        w1 = np.exp(l1 - log_z)
        w2 = np.exp(l2 - log_z)
        diff = m1 - m2
        mean = w1 * m1 + w2 * m2
        var = w1 * v1 + w2 * v2 + w1 * w2 * diff * diff

    first = mu1 >= mu2
    # ties resolved symmetrically so swapping inputs cannot change the answer
    dom_mu = np.where(first, mu1, mu2)
    dom_var = np.where(mu1 == mu2, np.maximum(var1, var2), np.where(first, var1, var2))
    degenerate = (d1 <= _DEGENERATE_SCALE) & (d2 <= _DEGENERATE_SCALE)
    underflow = np.maximum(c1, c2) < _LOG_Z_FLOOR
    if degenerate.any():
        fm, fv = _prior_fuse(dom_mu, dom_var, prior)
        mean = np.where(degenerate, fm, mean)
        var = np.where(degenerate, fv, var)
    if underflow.any():
        mean = np.where(underflow & ~degenerate, dom_mu, mean)
        var = np.where(underflow & ~degenerate, dom_var, var)
    return mean, np.maximum(var, 0.0)


def max_independent_arrays(mu1, var1, mu2, var2):
    """Flat-prior max of independent Gaussians (Clark's closed form).

    Equal to ``max_moments_arrays`` with ``rho = 0`` and no prior, but with
    a fraction of the array passes; the variance is taken about the new
    mean to avoid cancellation.
    """
    s2 = var1 + var2
    scale = np.sqrt(s2)
    with np.errstate(divide="ignore", invalid="ignore"):
        k = (mu1 - mu2) / scale
        p = ndtr(k)
        q = ndtr(-k)
        dens = scale * np.exp(-0.5 * k * k - _LOG_SQRT_2PI)
        mean = mu1 * p + mu2 * q + dens
        a = mu1 - mean
        b = mu2 - mean
        var = (a * a + var1) * p + (b * b + var2) * q + (a + b) * dens
    degenerate = scale <= _DEGENERATE_SCALE
    if degenerate.any():
        first = mu1 >= mu2
        mean = np.where(degenerate, np.where(first, mu1, mu2), mean)
        tie = np.where(mu1 == mu2, np.maximum(var1, var2), np.where(first, var1, var2))
        var = np.where(degenerate, tie, var)
    return mean, np.maximum(var, 0.0)


def max_moments_pair(pair: BivariatePair, prior: ExtremalPrior = NO_PRIOR) -> GaussianBelief:
    """Moment-matched Gaussian of ``max(a, b)`` fused with ``prior``.

    >>> b = max_moments_pair(BivariatePair(GaussianBelief(0, 1), GaussianBelief(0, 1)))
    >>> round(b.mean, 4), round(b.variance, 4)
    (0.5642, 0.6817)
    """
    mean, var = max_moments_arrays(
        pair.a.mean, pair.a.variance, pair.b.mean, pair.b.variance,
        pair.correlation, prior.params,
    )
    return GaussianBelief(float(mean), float(var))


def min_moments_pair(pair: BivariatePair, prior: ExtremalPrior = NO_PRIOR) -> GaussianBelief:
    """``min(a, b) = -max(-a, -b)``; the prior on the minimum is negated too."""
    flipped = BivariatePair(-pair.a, -pair.b, pair.correlation)
    return -max_moments_pair(flipped, prior.negated())


def fold_extremum_arrays(means, variances, mask=None, prior=None, kind="max",
                         prior_each_step=False):
    """Fold the pairwise rule over the columns of ``(rows, b)`` arrays.

    Each row is an independent set; ``mask`` marks valid columns (padding
    is skipped).  Every row must have at least one valid column.  The prior
    enters the last fold step of each row (or every step when
    ``prior_each_step``).  Rows with a single valid entry get the prior
    fused directly.
    """
    means = np.asarray(means, dtype=float)
    variances = np.asarray(variances, dtype=float)
    if means.ndim != 2:
        raise ValueError("expected 2-d arrays")
    sign = 1.0
    if kind == "min":
        sign = -1.0
        means = -means
        if prior is not None:
            prior = (-prior[0], prior[1])
    elif kind != "max":
        raise ValueError(f"unknown extremum kind {kind!r}")
    rows, width = means.shape
    if mask is None:
        mask = np.ones((rows, width), dtype=bool)
    counts = mask.sum(axis=1)
    if rows and counts.min() < 1:
        raise ValueError("every row needs at least one entry")
    # compact valid entries to the left so column k is the k-th valid entry
    if rows and counts.min() < width:
        order = np.argsort(~mask, axis=1, kind="stable")
        means = np.take_along_axis(means, order, axis=1)
        variances = np.take_along_axis(variances, order, axis=1)

    run_m = means[:, 0].copy()
    run_v = variances[:, 0].copy()
    uniform = bool(rows) and counts.min() == counts.max()
    for col in range(1, width):
        if uniform:
            if col >= counts[0]:
                break
            # every row is active; prior only on the final column
            use_prior = prior is not None and (prior_each_step or col == counts[0] - 1)
            if use_prior:
                run_m, run_v = max_moments_arrays(run_m, run_v, means[:, col], variances[:, col],
                                                  prior=prior)
            else:
                run_m, run_v = max_independent_arrays(run_m, run_v, means[:, col], variances[:, col])
            continue
        active = counts > col
        if not active.any():
            break
        if prior is not None and not prior_each_step:
            fin = counts == col + 1
            mid = active & ~fin
        else:
            fin = active
            mid = np.zeros_like(active)
        if mid.any():
            run_m[mid], run_v[mid] = max_independent_arrays(
                run_m[mid], run_v[mid], means[mid, col], variances[mid, col])
        if fin.any():
            if prior is None:
                run_m[fin], run_v[fin] = max_independent_arrays(
                    run_m[fin], run_v[fin], means[fin, col], variances[fin, col])
            else:
                run_m[fin], run_v[fin] = max_moments_arrays(
                    run_m[fin], run_v[fin], means[fin, col], variances[fin, col], prior=prior)
    if prior is not None:
        single = counts == 1
        if single.any():
            fm, fv = _prior_fuse(run_m[single], run_v[single], prior)
            run_m[single] = fm
            run_v[single] = fv
    return sign * run_m, run_v


def extremum_of_set(
    beliefs: Sequence[GaussianBelief],
    correlations=None,
    prior: ExtremalPrior = NO_PRIOR,
    kind: str = "max",
    prior_each_step: bool = False,
) -> GaussianBelief:
    """Approximate the max (or min) of a list of Gaussians by folding pairs.

    The fold runs in input order: ``m = beliefs[0]``, then
    ``m = max(m, beliefs[k])`` for k = 1, 2, ...  With a correlation matrix
    the covariance between the running maximum and each remaining variable
    is tracked as ``cov(m, x_j) = w1 cov(m_prev, x_j) + w2 cov(x_k, x_j)``
    using the branch probabilities of the pairwise step, which costs O(b^2).
    """
    if len(beliefs) == 0:
        raise ValueError("extremum of an empty set")
    if kind not in ("max", "min"):
        raise ValueError(f"unknown extremum kind {kind!r}")
    if kind == "min":
        flipped = [-b for b in beliefs]
        return -extremum_of_set(flipped, correlations, prior.negated(), "max", prior_each_step)

    if correlations is None:
        means = np.array([[b.mean for b in beliefs]])
        variances = np.array([[b.variance for b in beliefs]])
        m, v = fold_extremum_arrays(means, variances, prior=prior.params,
                                    prior_each_step=prior_each_step)
        return GaussianBelief(float(m[0]), float(v[0]))
    return _extremum_correlated(beliefs, np.asarray(correlations, dtype=float), prior,
                                prior_each_step)


def _extremum_correlated(beliefs, corr, prior, prior_each_step):
    n = len(beliefs)
    if corr.shape != (n, n):
        raise ValueError("correlation matrix shape mismatch")
    if not np.allclose(corr, corr.T) or not np.allclose(np.diag(corr), 1.0):
        raise ValueError("correlation matrix must be symmetric with unit diagonal")
    sd = np.array([b.std for b in beliefs])
    cov = corr * np.outer(sd, sd)
    run = beliefs[0]
    if n == 1:
        if prior.belief is None:
            return run
        m, v = _prior_fuse(run.mean, run.variance, prior.params)
        return GaussianBelief(float(m), float(v))
    run_cov = cov[0].copy()  # cov(running max, x_j)
    for k in range(1, n):
        nxt = beliefs[k]
        denom = run.std * nxt.std
        rho = 0.0 if denom == 0.0 else float(np.clip(run_cov[k] / denom, -1.0, 1.0))
        use_prior = prior.params if (prior_each_step or k == n - 1) else None
        m, v = max_moments_arrays(run.mean, run.variance, nxt.mean, nxt.variance, rho, use_prior)
        w1 = _first_branch_weight(run, nxt, rho, use_prior)
        run_cov = w1 * run_cov + (1.0 - w1) * cov[k]
        run = GaussianBelief(float(m), float(v))
    return run


def _first_branch_weight(a: GaussianBelief, b: GaussianBelief, rho: float, prior) -> float:
    with np.errstate(all="ignore"):
        e1, c1, _, _, d1 = _branch(np.float64(a.mean), np.float64(a.variance),
                                   np.float64(b.mean), np.float64(b.variance), rho, prior)
        e2, c2, _, _, d2 = _branch(np.float64(b.mean), np.float64(b.variance),
                                   np.float64(a.mean), np.float64(a.variance), rho, prior)
    if d1 <= _DEGENERATE_SCALE and d2 <= _DEGENERATE_SCALE:
        return 1.0 if a.mean >= b.mean else 0.0
    l1, l2 = float(e1 + c1), float(e2 + c2)
    top = max(l1, l2)
    return math.exp(l1 - top) / (math.exp(l1 - top) + math.exp(l2 - top))
