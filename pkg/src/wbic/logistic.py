"""Bayesian logistic regression with Gaussian priors."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .core import ChainConfig, DevianceTrace, DomainError, check_temperature
from .mcmc import random_walk_metropolis

LOG_2PI = math.log(2.0 * math.pi)

# Covariate subsets of the two Pima models (an intercept is always added).
PIMA_COLUMNS = ("NP", "PGC", "BP", "TST", "BMI", "DP", "AGE")
PIMA_MODELS = {
    1: ("NP", "PGC", "BMI", "DP"),
    2: ("NP", "PGC", "BMI", "DP", "AGE"),
}


class ConvergenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class LogisticModelSpec:
    """Design with a leading column of ones, binary response and a Gaussian prior.

    Either ``tau`` (isotropic prior N(0, I/tau)) or both ``prior_mean`` and
    ``prior_cov`` must be given.
    """

    X: np.ndarray
    y: np.ndarray
    tau: float | None = None
    prior_mean: np.ndarray | None = None
    prior_cov: np.ndarray | None = None

    def __post_init__(self):
        X = np.atleast_2d(np.array(self.X, dtype=float))
        y = np.array(self.y, dtype=float).reshape(-1)
        if y.size != X.shape[0]:
            raise DomainError("X and y disagree on n")
        if not np.all((y == 0) | (y == 1)):
            raise DomainError("responses must be 0 or 1")
        k = X.shape[1]
        if self.tau is not None:
            if not self.tau > 0:
                raise DomainError("tau must be positive")
            mean, cov = np.zeros(k), np.eye(k) / self.tau
        else:
            if self.prior_mean is None or self.prior_cov is None:
                raise DomainError("give either tau or prior_mean and prior_cov")
            mean = np.array(self.prior_mean, dtype=float).reshape(-1)
            cov = np.atleast_2d(np.array(self.prior_cov, dtype=float))
            if mean.size != k or cov.shape != (k, k):
                raise DomainError("prior does not match the design")
        try:
            chol = linalg.cholesky(cov, lower=True)
        except np.linalg.LinAlgError as exc:
            raise DomainError("prior covariance is not positive definite") from exc
        for name, arr in (("X", X), ("y", y)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "_mean", mean)
        object.__setattr__(self, "_chol", chol)
        chol_inv = linalg.solve_triangular(chol, np.eye(k), lower=True)
        object.__setattr__(self, "_chol_inv", chol_inv)
        object.__setattr__(self, "_prior_prec", chol_inv.T @ chol_inv)
        object.__setattr__(
            self, "_prior_const", -0.5 * (k * LOG_2PI + 2.0 * np.sum(np.log(np.diag(chol))))
        )

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def dimension(self) -> int:
        return self.X.shape[1]


def log_likelihood_logistic(spec: LogisticModelSpec, theta):
    """sum_i y_i eta_i - log(1 + exp(eta_i)); vectorised over leading axes of theta."""
    eta = np.asarray(theta, dtype=float) @ spec.X.T
    return np.sum(spec.y * eta - np.logaddexp(0.0, eta), axis=-1)


def _expit(eta):
    return 0.5 * (1.0 + np.tanh(0.5 * eta))


def grad_log_likelihood_logistic(spec, theta):
    eta = spec.X @ np.asarray(theta, dtype=float)
    return spec.X.T @ (spec.y - _expit(eta))


def hessian_log_likelihood_logistic(spec, theta):
    eta = spec.X @ np.asarray(theta, dtype=float)
    p = _expit(eta)
    return -(spec.X.T * (p * (1.0 - p))) @ spec.X


def log_prior_logistic(spec: LogisticModelSpec, theta):
    """Gaussian log density, normalised over all d+1 coefficients."""
    # whitened by the inverse Cholesky factor of the prior covariance
    white = (np.asarray(theta, dtype=float) - spec._mean) @ spec._chol_inv.T
    out = spec._prior_const - 0.5 * np.sum(white * white, axis=-1)
    return float(out) if np.ndim(out) == 0 else out


def _newton(grad, hess, x0, max_iter, tol, guard):
    # Converged only when both the gradient and the Newton step are small: on
    # separable data the gradient vanishes while the iterates keep growing.
    x = np.array(x0, dtype=float)
    for _ in range(max_iter):
        g = grad(x)
        try:
            step = np.linalg.solve(hess(x), g)
        except np.linalg.LinAlgError:
            raise ConvergenceError("singular Hessian; the data are probably separable") from None
        if np.linalg.norm(g) < tol and np.linalg.norm(step) < 1e-6 * (1.0 + np.linalg.norm(x)):
            return x
        x = x - step
        if not np.all(np.isfinite(x)) or np.linalg.norm(x) > guard:
            raise ConvergenceError(
                "Newton iterates diverged; the data are probably separable"
            )
    raise ConvergenceError(f"no convergence after {max_iter} Newton iterations")


def fit_mle_logistic(spec: LogisticModelSpec, max_iter: int = 100, tol: float = 1e-10) -> np.ndarray:
    """Maximum-likelihood estimate by Newton-Raphson (IRLS)."""
    return _newton(
        lambda th: grad_log_likelihood_logistic(spec, th),
        lambda th: hessian_log_likelihood_logistic(spec, th),
        np.zeros(spec.dimension),
        max_iter,
        tol,
        1e4,
    )


def tempered_mode_logistic(spec: LogisticModelSpec, t: float):
    """Mode of f(y|theta)**t p(theta) and the negative Hessian there."""
    t = check_temperature(t)
    P = spec._prior_prec

    def grad(th):
        return t * grad_log_likelihood_logistic(spec, th) - P @ (th - spec._mean)

    def hess(th):
        return t * hessian_log_likelihood_logistic(spec, th) - P

    mode = _newton(grad, hess, spec._mean, 200, 1e-9, 1e6)
    return mode, -hess(mode)


def tempered_rwm_logistic(spec: LogisticModelSpec, t: float, chain: ChainConfig, seed) -> DevianceTrace:
    """Random-walk Metropolis on the power posterior at ``t``.

    The proposal covariance is scale**2 times the inverse negative Hessian of
    the tempered log target at its mode, computed once per chain; the chain
    starts at that mode.
    """
    t = check_temperature(t)
    rng = np.random.default_rng(seed)
    k = spec.dimension
    scale = chain.proposal_scale or 2.38 / math.sqrt(k)
    mode, info = tempered_mode_logistic(spec, t)
    # chol of info^-1: if info = L L', then cov = L^-T L^-1
    L = linalg.cholesky(info, lower=True)
    prop_chol = scale * linalg.solve_triangular(L, np.eye(k), lower=True, trans="T")
    draws, lls, acc = random_walk_metropolis(
        lambda th: float(log_likelihood_logistic(spec, th)),
        lambda th: log_prior_logistic(spec, th),
        t,
        mode,
        prop_chol,
        chain.n_iter,
        rng,
    )
    diagnostics = {
        "acceptance_rate": acc,
        "theta_mean": draws[chain.burn_in:].mean(axis=0).tolist(),
    }
    if not 0.05 <= acc <= 0.8:
        diagnostics["acceptance_warning"] = True
        warnings.warn(f"RWM acceptance rate {acc:.3f} at t={t:.4g} is outside [0.05, 0.8]")
    return DevianceTrace(t, lls, chain.burn_in, diagnostics)


UNIT_INFO_FORMS = ("printed", "unit_information")


def unit_information_prior_logistic(X, y, form: str = "printed"):
    """Prior mean (the MLE) and covariance for a unit-information prior.

    ``"printed"`` uses (X'X)^-1 / n; ``"unit_information"`` uses n (X'X)^-1.
    """
    X = np.asarray(X, dtype=float)
    n = X.shape[0]
    mle = fit_mle_logistic(LogisticModelSpec(X, y, tau=1.0))
    G_inv = linalg.inv(X.T @ X)
    if form == "printed":
        cov = G_inv / n
    elif form == "unit_information":
        cov = n * G_inv
    else:
        raise DomainError(f"unknown form {form!r}; expected one of {UNIT_INFO_FORMS}")
    return mle, 0.5 * (cov + cov.T)


def standardize(columns) -> np.ndarray:
    """Centre each column and divide by its population (divisor n) sd."""
    A = np.asarray(columns, dtype=float)
    return (A - A.mean(axis=0)) / A.std(axis=0)


def pima_design(data: dict, model: int) -> tuple[np.ndarray, np.ndarray]:
    """Intercept plus standardised covariates of Pima model 1 or 2."""
    try:
        cols = PIMA_MODELS[model]
    except KeyError:
        raise DomainError(f"Pima model must be 1 or 2, got {model!r}") from None
    Z = standardize(np.column_stack([data[c] for c in cols]))
    X = np.column_stack([np.ones(Z.shape[0]), Z])
    return X, np.asarray(data["diabetes"], dtype=float)


class LogisticModel:
    def __init__(self, spec: LogisticModelSpec, name: str = "logistic"):
        self.spec = spec
        self.name = name
        self.n = spec.n
        self.dimension = spec.dimension

    def log_likelihood(self, theta) -> float:
        return float(log_likelihood_logistic(self.spec, theta))

    def log_prior(self, theta) -> float:
        return log_prior_logistic(self.spec, theta)

    def sample_tempered(self, t: float, chain: ChainConfig, seed) -> DevianceTrace:
        return tempered_rwm_logistic(self.spec, t, chain, seed)
