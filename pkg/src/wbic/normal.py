"""The tractable normal model: y_i ~ N(theta, 1), theta ~ N(m, v).

Everything about its power posteriors is available in closed form, which
makes it the reference problem for checking the estimators.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import (
    BracketingError,
    ChainConfig,
    DevianceTrace,
    DomainError,
    check_temperature,
)
from .mcmc import random_walk_metropolis

LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class NormalModelSpec:
    y: np.ndarray
    m: float = 0.0
    v: float = 1.0

    def __post_init__(self):
        y = np.atleast_1d(np.array(self.y, dtype=float))
        if y.ndim != 1 or y.size < 1:
            raise DomainError("need at least one observation")
        if not self.v > 0:
            raise DomainError(f"prior variance must be positive, got {self.v!r}")
        y.setflags(write=False)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "m", float(self.m))
        object.__setattr__(self, "v", float(self.v))
        # sufficient statistics, computed once
        object.__setattr__(self, "_ybar", float(y.mean()))
        object.__setattr__(self, "_css", float(np.sum((y - y.mean()) ** 2)))

    @classmethod
    def mean_corrected(cls, y, v: float = 1.0) -> "NormalModelSpec":
        """Centre the data at zero and use the prior N(0, v)."""
        y = np.asarray(y, dtype=float)
        return cls(y - y.mean(), 0.0, v)

    @property
    def n(self) -> int:
        return self.y.size

    @property
    def ybar(self) -> float:
        return self._ybar

    @property
    def centered_ss(self) -> float:
        return self._css


@dataclass(frozen=True)
class ConjugateNormalState:
    """theta | y, t ~ N(mean, var)."""

    t: float
    mean: float
    var: float

    def __post_init__(self):
        if not self.var > 0:
            raise DomainError("power posterior variance must be positive")


def power_posterior_params(spec: NormalModelSpec, t: float) -> ConjugateNormalState:
    t = check_temperature(t)
    n = spec.n
    prec = n * t + 1.0 / spec.v
    mean = (n * t * spec.ybar + spec.m / spec.v) / prec
    return ConjugateNormalState(t, mean, 1.0 / prec)


def _shift_and_var(spec, t):
    # (m_t - ybar, v_t), vectorised over t
    t = np.asarray(t, dtype=float)
    n, v = spec.n, spec.v
    shift = (spec.m - spec.ybar) / (v * n * t + 1.0)
    return shift, 1.0 / (n * t + 1.0 / v)


def expected_log_deviance_normal(spec: NormalModelSpec, t):
    """E_{theta|y,t} log f(y|theta). Accepts scalar or array ``t``."""
    n = spec.n
    shift, var = _shift_and_var(spec, t)
    out = -0.5 * n * LOG_2PI - 0.5 * spec.centered_ss - 0.5 * n * shift**2 - 0.5 * n * var
    return float(out) if np.ndim(out) == 0 else out


def variance_log_deviance_normal(spec: NormalModelSpec, t):
    """V_{theta|y,t} log f(y|theta).

    log f = const - (n/2) u**2 with u = theta - ybar ~ N(shift, v_t), and
    Var(u**2) = 2 v_t**2 + 4 shift**2 v_t.
    """
    n = spec.n
    shift, var = _shift_and_var(spec, t)
    out = 0.5 * n**2 * (var**2 + 2.0 * shift**2 * var)
    return float(out) if np.ndim(out) == 0 else out


def log_evidence_normal(spec: NormalModelSpec) -> float:
    n, m, v, y = spec.n, spec.m, spec.v, spec.y
    v_post = 1.0 / (n + 1.0 / v)
    quad = np.sum(y**2) + m**2 / v - (n * spec.ybar + m / v) ** 2 / (n + 1.0 / v)
    return float(-0.5 * n * LOG_2PI - 0.5 * math.log(v / v_post) - 0.5 * quad)


def log_normalizer_normal(spec: NormalModelSpec, t):
    """log z_t(y) = log of the integral of f(y|theta)**t p(theta)."""
    t = np.asarray(t, dtype=float)
    n, v = spec.n, spec.v
    base = -0.5 * n * LOG_2PI - 0.5 * spec.centered_ss
    ntv = n * t * v
    out = t * base - 0.5 * np.log1p(ntv) - 0.5 * n * t * (spec.ybar - spec.m) ** 2 / (1.0 + ntv)
    return float(out) if np.ndim(out) == 0 else out


def evidence_gap_normal(spec: NormalModelSpec, t):
    """E_{theta|y,t} log f(y|theta) - log p(y) with the data constants cancelled.

    Depends on the data only through (n, ybar), so it is exactly reproducible
    across datasets that share them.
    """
    n, v = spec.n, spec.v
    shift, var = _shift_and_var(spec, t)
    d2 = (spec.ybar - spec.m) ** 2
    out = -0.5 * n * shift**2 - 0.5 * n * var + 0.5 * math.log1p(n * v) + 0.5 * n * d2 / (1.0 + n * v)
    return float(out) if np.ndim(out) == 0 else out


def kl_gaussian(p: ConjugateNormalState, q: ConjugateNormalState) -> float:
    """KL(p || q) between two univariate normals."""
    return 0.5 * (math.log(q.var / p.var) + (p.var + (p.mean - q.mean) ** 2) / q.var - 1.0)


def optimal_temperature_normal(spec: NormalModelSpec, tol: float = 1e-10) -> float:
    """The unique t* with E_{theta|y,t*} log f(y|theta) = log p(y), by bisection."""
    if not tol > 0:
        raise DomainError("tol must be positive")
    lo, hi = 0.0, 1.0
    g_lo, g_hi = evidence_gap_normal(spec, lo), evidence_gap_normal(spec, hi)
    if not (g_lo < 0 < g_hi):
        raise BracketingError(
            f"gap does not change sign on [0, 1]: g(0)={g_lo!r}, g(1)={g_hi!r}"
        )
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if evidence_gap_normal(spec, mid) < 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


class NormalModel:
    """The tractable normal model as a samplable tempered model.

    Power posteriors are explored with random-walk Metropolis (proposal sd
    ``proposal_scale * sqrt(v_t)``) so that MCMC runs can be checked against
    the closed forms above.
    """

    dimension = 1

    def __init__(self, spec: NormalModelSpec):
        self.spec = spec
        self.n = spec.n
        self._base = -0.5 * spec.n * LOG_2PI - 0.5 * spec.centered_ss

    def log_likelihood(self, theta) -> float:
        theta = float(np.asarray(theta).reshape(-1)[0])
        return self._base - 0.5 * self.n * (theta - self.spec.ybar) ** 2

    def log_prior(self, theta) -> float:
        theta = float(np.asarray(theta).reshape(-1)[0])
        v = self.spec.v
        return -0.5 * (LOG_2PI + math.log(v)) - 0.5 * (theta - self.spec.m) ** 2 / v

    def sample_tempered(self, t: float, chain: ChainConfig, seed) -> DevianceTrace:
        t = check_temperature(t)
        rng = np.random.default_rng(seed)
        scale = chain.proposal_scale or 2.4
        sd = scale * math.sqrt(power_posterior_params(self.spec, t).var)
        _, lls, acc = random_walk_metropolis(
            self.log_likelihood, self.log_prior, t, [self.spec.m], [[sd]], chain.n_iter, rng
        )
        return DevianceTrace(t, lls, chain.burn_in, {"acceptance_rate": acc})
