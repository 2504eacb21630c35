"""Shared types, temperature schedules and trace statistics."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Protocol, runtime_checkable

import numpy as np

METHODS = ("wbic", "pp_standard", "pp_corrected", "exact", "oracle_t")


class DomainError(ValueError):
    """An argument lies outside the domain where the operation is defined."""


class BracketingError(RuntimeError):
    """A root finder was given an interval that does not bracket a sign change."""


def check_temperature(t: float) -> float:
    t = float(t)
    if not 0.0 <= t <= 1.0:
        raise DomainError(f"temperature must lie in [0, 1], got {t!r}")
    return t


@dataclass(frozen=True)
class TemperatureSchedule:
    """Ordered grid 0 = t_0 < t_1 < ... < t_m = 1."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.array(self.points, dtype=float)
        if pts.ndim != 1 or pts.size < 2:
            raise DomainError("a schedule needs at least two points")
        if pts[0] != 0.0 or pts[-1] != 1.0:
            raise DomainError("schedule must start at exactly 0 and end at exactly 1")
        if np.any(np.diff(pts) <= 0):
            raise DomainError("schedule must be strictly increasing")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def m(self) -> int:
        return self.points.size - 1

    def __len__(self) -> int:
        return self.points.size

    def __iter__(self):
        return iter(self.points.tolist())


def power_schedule(m: int, c: float) -> TemperatureSchedule:
    """Power-law schedule ``t_j = (j/m)**c`` for ``j = 0..m``.

    The endpoints are stored as exact 0 and 1.
    """
    if int(m) != m or m < 1:
        raise DomainError(f"m must be a positive integer, got {m!r}")
    if not c > 0:
        raise DomainError(f"exponent must be positive, got {c!r}")
    m = int(m)
    pts = (np.arange(m + 1) / m) ** float(c)
    pts[0], pts[-1] = 0.0, 1.0
    return TemperatureSchedule(pts)


def uniform_schedule(m: int) -> TemperatureSchedule:
    return power_schedule(m, 1.0)


def wbic_temperature(n: int) -> float:
    """The WBIC inverse temperature 1/log(n); defined for n >= 3."""
    if int(n) != n or n < 3:
        raise DomainError(f"WBIC temperature needs n >= 3, got {n!r}")
    return 1.0 / math.log(n)


@dataclass(frozen=True)
class ChainConfig:
    """Length and burn-in of a single MCMC chain.

    ``proposal_scale`` only matters for random-walk samplers; ``None`` means
    the sampler's default.
    """

    n_iter: int = 20_000
    burn_in: int = 2_000
    proposal_scale: float | None = None
    n_batches: int = 50

    def __post_init__(self):
        if self.n_iter < 2 or self.burn_in < 0 or self.burn_in >= self.n_iter:
            raise DomainError(
                f"invalid chain: need 0 <= burn_in < n_iter, got "
                f"n_iter={self.n_iter}, burn_in={self.burn_in}"
            )
        if self.n_batches < 2:
            raise DomainError("need at least two batches for batch means")
        if self.proposal_scale is not None and not self.proposal_scale > 0:
            raise DomainError("proposal_scale must be positive")


@dataclass(frozen=True)
class DevianceTrace:
    """Log-likelihood values ``log f(y|theta_i)`` of the draws of one chain.

    ``burn_in`` counts leading draws that are discarded by every statistic.
    """

    temperature: float
    log_lik: np.ndarray
    burn_in: int = 0
    diagnostics: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        check_temperature(self.temperature)
        values = np.array(self.log_lik, dtype=float)
        if values.ndim != 1:
            raise DomainError("log_lik must be one-dimensional")
        if not 0 <= self.burn_in < max(values.size, 1):
            raise DomainError(
                f"burn_in must satisfy 0 <= K < N (K={self.burn_in}, N={values.size})"
            )
        if not np.all(np.isfinite(values)):
            raise DomainError("log-likelihood trace contains non-finite values")
        values.setflags(write=False)
        object.__setattr__(self, "log_lik", values)

    @property
    def kept(self) -> np.ndarray:
        return self.log_lik[self.burn_in:]


def expected_log_deviance(trace: DevianceTrace) -> float:
    kept = trace.kept
    if kept.size == 0:
        raise DomainError("no draws left after burn-in")
    return float(np.mean(kept))


def variance_log_deviance(trace: DevianceTrace) -> float:
    """Sample variance (divisor N-K-1) of the post burn-in log-likelihoods."""
    kept = trace.kept
    if kept.size < 2:
        raise DomainError("variance needs at least two draws after burn-in")
    return float(np.var(kept, ddof=1))


def batch_means_se(values: np.ndarray, n_batches: int = 50) -> float:
    """Standard error of the mean of an autocorrelated series by batch means.

    Trailing draws that do not fill a whole batch are dropped from the batch
    computation only.
    """
    values = np.asarray(values, dtype=float)
    n_batches = min(n_batches, values.size)
    if n_batches < 2:
        raise DomainError("batch means needs at least two values")
    size = values.size // n_batches
    means = values[: size * n_batches].reshape(n_batches, size).mean(axis=1)
    return float(np.std(means, ddof=1) / math.sqrt(n_batches))


def trace_summary(trace: DevianceTrace, n_batches: int = 50) -> tuple[float, float, float, float]:
    """Mean, variance and batch-means standard errors of both for one trace."""
    kept = trace.kept
    mean = expected_log_deviance(trace)
    var = variance_log_deviance(trace)
    se_mean = batch_means_se(kept, n_batches)
    se_var = batch_means_se((kept - mean) ** 2, n_batches)
    return mean, var, se_mean, se_var


@dataclass(frozen=True)
class EvidenceEstimate:
    log_evidence: float
    method: str
    std_error: float | None = None
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.method not in METHODS:
            raise DomainError(f"unknown method tag {self.method!r}")
        if self.std_error is not None and not self.std_error >= 0:
            raise DomainError("std_error must be non-negative")


@runtime_checkable
class TemperedModel(Protocol):
    """A likelihood/prior pair for a fixed dataset that can sample power posteriors."""

    dimension: int
    n: int

    def log_likelihood(self, theta) -> float: ...

    def log_prior(self, theta) -> float: ...

    def sample_tempered(self, t: float, chain: ChainConfig, seed) -> DevianceTrace: ...


def chain_seed(base_seed, *key: int) -> np.random.SeedSequence:
    """Independent seed for the chain addressed by ``key`` under ``base_seed``.

    ``base_seed`` is an integer or a SeedSequence; keys are appended to its
    spawn key, so adding replicates or temperatures never changes the streams
    of existing ones and repeated calls give the same result.
    """
    key = tuple(int(k) for k in key)
    if isinstance(base_seed, np.random.SeedSequence):
        return np.random.SeedSequence(entropy=base_seed.entropy, spawn_key=base_seed.spawn_key + key)
    return np.random.SeedSequence(entropy=int(base_seed), spawn_key=key)
