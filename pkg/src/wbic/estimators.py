"""Evidence estimators: WBIC, power posteriors and optimal temperatures."""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import trapezoid
from scipy.optimize import bisect, isotonic_regression

from .core import (
    BracketingError,
    ChainConfig,
    DomainError,
    EvidenceEstimate,
    TemperatureSchedule,
    chain_seed,
    trace_summary,
    wbic_temperature,
)
from .normal import (
    NormalModelSpec,
    expected_log_deviance_normal,
    log_evidence_normal,
    optimal_temperature_normal,
    variance_log_deviance_normal,
)


class SamplerError(RuntimeError):
    """A tempered chain failed; the message names the temperature."""


@dataclass(frozen=True)
class PPRunResult:
    """Per-temperature expectation and variance of the log-likelihood."""

    schedule: TemperatureSchedule
    expectations: np.ndarray
    variances: np.ndarray
    std_errors: np.ndarray
    variance_std_errors: np.ndarray | None = None
    diagnostics: list = field(default_factory=list, compare=False)

    def __post_init__(self):
        m = len(self.schedule)
        for name in ("expectations", "variances", "std_errors", "variance_std_errors"):
            arr = getattr(self, name)
            if arr is None:
                continue
            arr = np.array(arr, dtype=float)
            if arr.shape != (m,):
                raise DomainError(f"{name} has shape {arr.shape}, schedule has {m} points")
            object.__setattr__(self, name, arr)

    @classmethod
    def from_functions(cls, schedule: TemperatureSchedule, expectation, variance) -> "PPRunResult":
        """Noise-free run filled from exact per-temperature functions."""
        ts = schedule.points
        E = np.array([expectation(t) for t in ts])
        V = np.array([variance(t) for t in ts])
        zero = np.zeros(ts.size)
        return cls(schedule, E, V, zero, zero)


def wbic_estimate(model, chain: ChainConfig, seed) -> EvidenceEstimate:
    """Mean log-likelihood of one chain at t_w = 1/log(n).

    The standard error uses batch means over the post burn-in draws.
    """
    t_w = wbic_temperature(model.n)
    try:
        trace = model.sample_tempered(t_w, chain, seed)
    except Exception as exc:
        raise SamplerError(f"WBIC chain failed at t={t_w:.6g}: {exc}") from exc
    mean, var, se, _ = trace_summary(trace, chain.n_batches)
    diagnostics = {"t_w": t_w, "n": model.n, "variance": var}
    diagnostics.update({k: v for k, v in trace.diagnostics.items() if np.isscalar(v)})
    return EvidenceEstimate(mean, "wbic", se, diagnostics)


def _run_one(args):
    model, t, chain, seed = args
    try:
        trace = model.sample_tempered(t, chain, seed)
    except Exception as exc:
        raise SamplerError(f"power-posterior chain failed at t={t:.6g}: {exc}") from exc
    return trace_summary(trace, chain.n_batches), trace.diagnostics


def run_power_posterior(
    model,
    schedule: TemperatureSchedule,
    chain: ChainConfig,
    seed,
    max_workers: int = 1,
) -> PPRunResult:
    """One independent chain per schedule point; chain ``j`` is seeded by ``(seed, j)``."""
    jobs = [(model, t, chain, chain_seed(seed, j)) for j, t in enumerate(schedule)]
    if max_workers > 1:
        with ProcessPoolExecutor(max_workers=max_workers) as pool:
            results = list(pool.map(_run_one, jobs))
    else:
        results = [_run_one(job) for job in jobs]
    stats = np.array([r[0] for r in results])
    return PPRunResult(
        schedule,
        stats[:, 0],
        stats[:, 1],
        stats[:, 2],
        stats[:, 3],
        [r[1] for r in results],
    )


def _trapezoid_weights(ts):
    dt = np.diff(ts)
    w = np.zeros(ts.size)
    w[:-1] += dt / 2
    w[1:] += dt / 2
    return w


def pp_standard(run: PPRunResult) -> EvidenceEstimate:
    """Trapezoidal rule over the schedule.

    The standard error treats temperatures as independent.
    """
    ts = run.schedule.points
    w = _trapezoid_weights(ts)
    est = float(w @ run.expectations)
    se = float(math.sqrt(np.sum((w * run.std_errors) ** 2)))
    return EvidenceEstimate(est, "pp_standard", se, {"m": run.schedule.m})


def pp_corrected(run: PPRunResult) -> EvidenceEstimate:
    """Trapezoidal rule minus sum_j (dt_j**2 / 12) (V_j - V_{j-1})."""
    ts = run.schedule.points
    dt2 = np.diff(ts) ** 2 / 12.0
    correction = float(np.sum(dt2 * np.diff(run.variances)))
    w = _trapezoid_weights(ts)
    est = float(w @ run.expectations) - correction
    # coefficient of V_j in the correction: dt_j^2/12 - dt_{j+1}^2/12
    cv = np.zeros(ts.size)
    cv[1:] += dt2
    cv[:-1] -= dt2
    var = np.sum((w * run.std_errors) ** 2)
    if run.variance_std_errors is not None:
        var += np.sum((cv * run.variance_std_errors) ** 2)
    return EvidenceEstimate(est, "pp_corrected", float(math.sqrt(var)), {"m": run.schedule.m, "correction": correction})


def optimal_temperature_search(expectation, log_evidence: float, tol: float = 1e-10, lo: float = 0.0, hi: float = 1.0) -> float:
    """Root of E(t) - log p(y) on [lo, hi] by bisection.

    ``expectation`` must be increasing in t.
    """
    g_lo = expectation(lo) - log_evidence
    g_hi = expectation(hi) - log_evidence
    if not (g_lo < 0 < g_hi):
        raise BracketingError(f"E(t) - log p(y) does not change sign on [{lo}, {hi}]: {g_lo!r}, {g_hi!r}")
    return float(bisect(lambda t: expectation(t) - log_evidence, lo, hi, xtol=tol, rtol=4 * np.finfo(float).eps, maxiter=500))


def monotone_fit(ts, means, std_errors=None) -> np.ndarray:
    """Increasing least-squares fit to noisy E(t) values (weights 1/se^2).

    Equal weights are used when any standard error is zero (exact values).
    """
    means = np.asarray(means, dtype=float)
    weights = None
    if std_errors is not None:
        se = np.asarray(std_errors, dtype=float)
        if np.all(se > 0):
            weights = se**-2.0
    return isotonic_regression(means, weights=weights, increasing=True).x


def optimal_temperature_from_run(run: PPRunResult, log_evidence: float) -> tuple[float, float]:
    """t* from Monte Carlo E(t) values after isotonic smoothing.

    Linear interpolation of the smoothed curve is inverted; the returned
    resolution is the width of the schedule interval containing the root,
    which bounds the error from the grid alone (not the Monte Carlo error).
    """
    ts = run.schedule.points
    fit = monotone_fit(ts, run.expectations, run.std_errors)
    g = fit - log_evidence
    if not (g[0] < 0 < g[-1]):
        raise BracketingError("smoothed E(t) does not cross log p(y) on the schedule")
    j = int(np.argmax(g >= 0))
    t0, t1, g0, g1 = ts[j - 1], ts[j], g[j - 1], g[j]
    t_star = t0 if g1 == g0 else t0 + (t1 - t0) * (-g0) / (g1 - g0)
    return float(t_star), float(t1 - t0)


@dataclass(frozen=True)
class IdealizedComparison:
    grid: np.ndarray
    density: np.ndarray
    t_star: float
    log_evidence: float
    wbic_variance: float
    pp_variance: float

    @property
    def ratio(self) -> float:
        return self.pp_variance / self.wbic_variance


def idealized_grid(size: int) -> np.ndarray:
    """Union of a uniform grid and a (j/m)^5 grid that resolves t near 0."""
    if size < 100:
        raise DomainError("grid size must be at least 100")
    u = np.linspace(0.0, 1.0, size)
    p = u**5
    return np.unique(np.concatenate([u, p]))


def idealized_comparison_normal(spec: NormalModelSpec, grid_size: int = 2000) -> IdealizedComparison:
    """Monte Carlo variances of idealised WBIC (at t*) and thermodynamic integration.

    The PP side samples t from the optimal density p*(t) proportional to
    sqrt(E_t[(log f)^2]); its variance is int E_t[(log f)^2] / p*(t) dt - (log p(y))^2.
    """
    ts = idealized_grid(grid_size)
    E = expected_log_deviance_normal(spec, ts)
    V = variance_log_deviance_normal(spec, ts)
    second = V + E**2
    q = np.sqrt(second)
    Z = trapezoid(q, ts)
    density = q / Z
    L = log_evidence_normal(spec)
    # Z^2 - L^2 = (Z - |L|)(Z + |L|); with E < 0, Z - |L| = int V / (q + |E|) dt
    excess = trapezoid(V / (q + np.abs(E)), ts)
    pp_var = excess * (2.0 * abs(L) + excess)
    t_star = optimal_temperature_normal(spec, tol=1e-14)
    return IdealizedComparison(ts, density, t_star, L, variance_log_deviance_normal(spec, t_star), float(pp_var))
