"""Gaussian linear regression with a conjugate normal-gamma prior.

Model: y = X beta + eps, eps ~ N(0, 1/tau), beta | tau ~ N(mu0, (tau Q0)^-1),
tau ~ Gamma(shape a0/2, rate b0/2).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg
from scipy.special import digamma, gammaln, polygamma

from .core import ChainConfig, DevianceTrace, DomainError, check_temperature

LOG_2PI = math.log(2.0 * math.pi)


class RankError(np.linalg.LinAlgError):
    """A design or precision matrix is numerically rank deficient."""


def _cholesky(a, what):
    try:
        return linalg.cholesky(a, lower=True)
    except np.linalg.LinAlgError as exc:
        raise RankError(f"{what} is not positive definite") from exc


def _logdet_chol(chol):
    return 2.0 * float(np.sum(np.log(np.diag(chol))))


@dataclass(frozen=True)
class LinRegModelSpec:
    X: np.ndarray
    y: np.ndarray
    mu0: np.ndarray
    Q0: np.ndarray
    a0: float
    b0: float

    def __post_init__(self):
        X = np.atleast_2d(np.array(self.X, dtype=float))
        y = np.array(self.y, dtype=float).reshape(-1)
        mu0 = np.array(self.mu0, dtype=float).reshape(-1)
        Q0 = np.atleast_2d(np.array(self.Q0, dtype=float))
        n, p = X.shape
        if y.size != n:
            raise DomainError(f"y has {y.size} entries but X has {n} rows")
        if mu0.size != p or Q0.shape != (p, p):
            raise DomainError("prior mean / precision do not match the design")
        if not np.allclose(Q0, Q0.T):
            raise DomainError("Q0 must be symmetric")
        _cholesky(Q0, "Q0")
        if np.linalg.matrix_rank(X) < p:
            raise RankError("design matrix does not have full column rank")
        if not (self.a0 > 0 and self.b0 > 0):
            raise DomainError("a0 and b0 must be positive")
        for name, arr in (("X", X), ("y", y), ("mu0", mu0), ("Q0", Q0)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "a0", float(self.a0))
        object.__setattr__(self, "b0", float(self.b0))

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]


@dataclass(frozen=True)
class LinRegState:
    coefficients: np.ndarray
    precision: float

    def __post_init__(self):
        if not self.precision > 0:
            raise DomainError("precision must be positive")


@dataclass(frozen=True)
class _Tempered:
    t: float
    M: np.ndarray      # t X'X + Q0
    chol: np.ndarray   # lower Cholesky factor of M
    mean: np.ndarray   # M^-1 (t X'y + Q0 mu0)
    b: float           # b0 + t y'y + mu0'Q0 mu0 - mean' M mean
    shape: float       # (t n + a0) / 2, marginal gamma shape of tau


def _tempered(spec: LinRegModelSpec, t: float) -> _Tempered:
    X, y, Q0, mu0 = spec.X, spec.y, spec.Q0, spec.mu0
    M = t * (X.T @ X) + Q0
    chol = _cholesky(M, "t X'X + Q0")
    rhs = t * (X.T @ y) + Q0 @ mu0
    mean = linalg.cho_solve((chol, True), rhs)
    # b_t written as a sum of non-negative terms to avoid cancellation
    resid = y - X @ mean
    dev = mean - mu0
    b = spec.b0 + t * float(resid @ resid) + float(dev @ Q0 @ dev)
    return _Tempered(t, M, chol, mean, b, 0.5 * (t * spec.n + spec.a0))


def exact_log_evidence_linreg(spec: LinRegModelSpec) -> float:
    """Exact log marginal likelihood.

    With mu0 = 0 the quadratic term is y'Ry with R = I - X M^-1 X', M = X'X + Q0.
    """
    n, a0, b0 = spec.n, spec.a0, spec.b0
    tp = _tempered(spec, 1.0)
    logdet_q0 = _logdet_chol(_cholesky(spec.Q0, "Q0"))
    return (
        -0.5 * n * math.log(math.pi)
        + 0.5 * a0 * math.log(b0)
        + gammaln(0.5 * (n + a0))
        - gammaln(0.5 * a0)
        + 0.5 * logdet_q0
        - 0.5 * _logdet_chol(tp.chol)
        - 0.5 * (n + a0) * math.log(tp.b)
    )


def log_normalizer_linreg(spec: LinRegModelSpec, t: float) -> float:
    """log z_t, the normalising constant of f(y|beta,tau)**t p(beta,tau)."""
    t = check_temperature(t)
    tp = _tempered(spec, t)
    a0, b0 = spec.a0, spec.b0
    return (
        -0.5 * t * spec.n * LOG_2PI
        + 0.5 * a0 * math.log(0.5 * b0)
        - gammaln(0.5 * a0)
        + 0.5 * _logdet_chol(_cholesky(spec.Q0, "Q0"))
        - 0.5 * _logdet_chol(tp.chol)
        + gammaln(tp.shape)
        - tp.shape * math.log(0.5 * tp.b)
    )


def _deviance_moments(spec, t):
    tp = _tempered(spec, check_temperature(t))
    X, y, n = spec.X, spec.y, spec.n
    G = X.T @ X
    r0 = y - X @ tp.mean
    A = float(r0 @ r0)
    rate = 0.5 * tp.b
    e_tau = tp.shape / rate
    GMinv = linalg.cho_solve((tp.chol, True), G)  # M^-1 G, same trace as G M^-1
    mean = -0.5 * n * LOG_2PI + 0.5 * n * (digamma(tp.shape) - math.log(rate)) - 0.5 * (
        e_tau * A + np.trace(GMinv)
    )
    bvec = X.T @ r0
    var = (
        0.25 * n**2 * polygamma(1, tp.shape)
        + 0.25 * A**2 * tp.shape / rate**2
        - 0.5 * n * A / rate
        + e_tau * float(bvec @ linalg.cho_solve((tp.chol, True), bvec))
        + 0.5 * np.trace(GMinv @ GMinv)
    )
    return float(mean), float(var)


def expected_log_deviance_linreg(spec: LinRegModelSpec, t: float) -> float:
    """Closed-form E_{theta|y,t} log f(y|theta) for the conjugate model."""
    return _deviance_moments(spec, t)[0]


def variance_log_deviance_linreg(spec: LinRegModelSpec, t: float) -> float:
    """Closed-form V_{theta|y,t} log f(y|theta) for the conjugate model."""
    return _deviance_moments(spec, t)[1]


def tempered_posterior_mean_linreg(spec: LinRegModelSpec, t: float) -> np.ndarray:
    return _tempered(spec, check_temperature(t)).mean.copy()


def log_likelihood_linreg(spec: LinRegModelSpec, coefficients, precision):
    """log f(y|beta, tau); vectorised over leading axes of ``coefficients``."""
    beta = np.asarray(coefficients, dtype=float)
    tau = np.asarray(precision, dtype=float)
    resid = spec.y - beta @ spec.X.T
    rss = np.sum(resid * resid, axis=-1)
    return 0.5 * spec.n * (np.log(tau) - LOG_2PI) - 0.5 * tau * rss


def gibbs_draws_linreg(spec: LinRegModelSpec, t: float, n_iter: int, rng):
    """Two-block Gibbs sampler for the power posterior at ``t``.

    beta | tau ~ N(mu_t, (tau M_t)^-1) and
    tau | beta ~ Gamma(a0/2 + (t n + p)/2, rate (b0 + t RSS + (beta-mu0)'Q0(beta-mu0))/2).

    Writing beta = mu_t + L^-T z / sqrt(tau_prev) with M_t = L L' the gamma
    rate collapses to (b_t + |z|^2 / tau_prev) / 2, so the chain reduces to a
    scalar recursion in tau; the beta draws are then recovered in bulk.
    """
    t = check_temperature(t)
    tp = _tempered(spec, t)
    p = spec.p
    z = rng.standard_normal((n_iter, p))
    g = rng.standard_gamma(0.5 * spec.a0 + 0.5 * (t * spec.n + p), size=n_iter)
    chi = np.einsum("ij,ij->i", z, z)

    tau = np.empty(n_iter)
    prev = tp.shape / (0.5 * tp.b)
    b_t = tp.b
    for i in range(n_iter):
        prev_new = 2.0 * g[i] / (b_t + chi[i] / prev)
        tau[i] = prev_new
        prev = prev_new
    prev_tau = np.concatenate(([tp.shape / (0.5 * tp.b)], tau[:-1]))
    # L^-T z for every row: solve L' x = z
    offsets = linalg.solve_triangular(tp.chol, z.T, lower=True, trans="T").T
    beta = tp.mean + offsets / np.sqrt(prev_tau)[:, None]
    return beta, tau


def tempered_gibbs_linreg(spec: LinRegModelSpec, t: float, chain: ChainConfig, seed) -> DevianceTrace:
    rng = np.random.default_rng(seed)
    beta, tau = gibbs_draws_linreg(spec, t, chain.n_iter, rng)
    kept = slice(chain.burn_in, None)
    return DevianceTrace(
        t,
        log_likelihood_linreg(spec, beta, tau),
        chain.burn_in,
        {
            "coefficient_mean": beta[kept].mean(axis=0).tolist(),
            "precision_mean": float(tau[kept].mean()),
        },
    )


class LinRegModel:
    """Conjugate linear regression as a samplable tempered model.

    ``theta`` is the concatenation (beta_0, ..., beta_{p-1}, tau).
    """

    def __init__(self, spec: LinRegModelSpec, name: str = "linreg"):
        self.spec = spec
        self.name = name
        self.n = spec.n
        self.dimension = spec.p + 1

    def log_likelihood(self, theta) -> float:
        theta = np.asarray(theta, dtype=float)
        return float(log_likelihood_linreg(self.spec, theta[:-1], theta[-1]))

    def log_prior(self, theta) -> float:
        theta = np.asarray(theta, dtype=float)
        beta, tau = theta[:-1], theta[-1]
        if tau <= 0:
            return -math.inf
        s = self.spec
        p = s.p
        a, rate = 0.5 * s.a0, 0.5 * s.b0
        dev = beta - s.mu0
        log_gamma = a * math.log(rate) - gammaln(a) + (a - 1) * math.log(tau) - rate * tau
        log_normal = (
            -0.5 * p * LOG_2PI
            + 0.5 * p * math.log(tau)
            + 0.5 * _logdet_chol(_cholesky(s.Q0, "Q0"))
            - 0.5 * tau * float(dev @ s.Q0 @ dev)
        )
        return log_gamma + log_normal

    def sample_tempered(self, t: float, chain: ChainConfig, seed) -> DevianceTrace:
        return tempered_gibbs_linreg(self.spec, t, chain, seed)

    def log_evidence(self) -> float:
        return exact_log_evidence_linreg(self.spec)

    def expected_log_deviance(self, t: float) -> float:
        return expected_log_deviance_linreg(self.spec, t)

    def variance_log_deviance(self, t: float) -> float:
        return variance_log_deviance_linreg(self.spec, t)


def centered_design(*covariates) -> np.ndarray:
    """Intercept column followed by mean-centred covariate columns."""
    cols = [np.asarray(c, dtype=float) for c in covariates]
    n = cols[0].size
    return np.column_stack([np.ones(n)] + [c - c.mean() for c in cols])


# Informative prior for the two pine regressions.
PINE_PRIOR = {
    "mu0": np.array([3000.0, 185.0]),
    "Q0": np.diag([0.06, 6.0]),
    "a0": 6.0,
    "b0": 4.0 * 300.0**2,
}

Q0_FORMS = ("printed", "summed")


def unit_information_prior_linreg(X1, X2, y, q0_form: str = "printed"):
    """Shared unit-information hyperparameters (mu0, Q0, a0, b0) for two designs.

    mu0 averages the two least-squares fits. ``q0_form`` selects the prior
    precision scale:

    ``"printed"``
        Q0 = n [(X1'X1)^-1 + (X2'X2)^-1] / 2
    ``"summed"``
        Q0 = n (X1'X1 + X2'X2), the form whose magnitudes match the published
        pine hyperparameters (about diag(3528, 72945.73)).

    Q0 is computed first; then a0 = 1 and b0 = y' Rbar y / n with
    Rbar = (R1 + R2)/2, R_i = I - X_i M_i^-1 X_i', M_i = X_i'X_i + Q0.
    """
    X1 = np.asarray(X1, dtype=float)
    X2 = np.asarray(X2, dtype=float)
    y = np.asarray(y, dtype=float)
    n = y.size
    if X1.shape[0] != n or X2.shape[0] != n:
        raise DomainError("designs and response must share n")
    if X1.shape[1] != X2.shape[1]:
        raise DomainError("both designs must have the same number of columns")
    grams, fits = [], []
    for X in (X1, X2):
        if np.linalg.matrix_rank(X) < X.shape[1]:
            raise RankError("design matrix does not have full column rank")
        G = X.T @ X
        chol = _cholesky(G, "X'X")
        grams.append((G, chol))
        fits.append(linalg.cho_solve((chol, True), X.T @ y))
    mu0 = 0.5 * (fits[0] + fits[1])
    if q0_form == "printed":
        inv = [linalg.cho_solve((c, True), np.eye(G.shape[0])) for G, c in grams]
        Q0 = 0.5 * n * (inv[0] + inv[1])
    elif q0_form == "summed":
        Q0 = n * (grams[0][0] + grams[1][0])
    else:
        raise DomainError(f"unknown q0_form {q0_form!r}; expected one of {Q0_FORMS}")
    Q0 = 0.5 * (Q0 + Q0.T)

    quad = 0.0
    for X in (X1, X2):
        M = X.T @ X + Q0
        chol = _cholesky(M, "X'X + Q0")
        Xty = X.T @ y
        quad += float(y @ y - Xty @ linalg.cho_solve((chol, True), Xty))
    b0 = 0.5 * quad / n
    return mu0, Q0, 1.0, b0
