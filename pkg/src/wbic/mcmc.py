"""Random-walk Metropolis on tempered targets."""
from __future__ import annotations

import numpy as np


def random_walk_metropolis(log_lik, log_prior, t, x0, chol, n_iter, rng):
    """Run RWM on ``t * log_lik(x) + log_prior(x)``.

    Proposals are ``x + chol @ z`` with standard normal ``z``; ``chol`` already
    carries the proposal scale.

    Returns
    -------
    draws : ndarray, shape (n_iter, d)
    log_lik_values : ndarray, shape (n_iter,)
        ``log_lik`` at each retained state (not multiplied by ``t``).
    acceptance_rate : float
    """
    x = np.array(x0, dtype=float)
    d = x.size
    chol = np.atleast_2d(np.asarray(chol, dtype=float))
    steps = rng.standard_normal((n_iter, d)) @ chol.T
    log_u = np.log(rng.random(n_iter))

    ll = log_lik(x)
    lp = log_prior(x)
    draws = np.empty((n_iter, d))
    lls = np.empty(n_iter)
    accepted = 0
    for i in range(n_iter):
        prop = x + steps[i]
        lp_prop = log_prior(prop)
        if np.isfinite(lp_prop):
            ll_prop = log_lik(prop)
            if log_u[i] < t * (ll_prop - ll) + lp_prop - lp:
                x, ll, lp = prop, ll_prop, lp_prop
                accepted += 1
        draws[i] = x
        lls[i] = ll
    return draws, lls, accepted / n_iter
