"""Independent reference computations used by several test modules."""

import itertools
import math

import numpy as np
from scipy import stats
from scipy.special import expit


def brute_force_loglik(match, params, c0, cm, m):
    """Sum over every state path of the midpoint-rule integrand, from first principles."""
    h = (cm - c0) / m
    c = c0 + (np.arange(m) + 0.5) * h
    T = match.T
    tt = np.arange(1, T + 1)
    eta = params.alpha0 + params.alpha_t(tt) * match.prewindiff + params.zeta1 * match.scorediff \
        + params.zeta2 * match.winprobteam
    k = 1.0 / params.sigma**2 - 1.0

    def obs(t, i):
        y = match.y[t]
        if np.isnan(y):
            return 1.0
        if y == 0:
            return params.p
        if y == 1:
            return params.q
        mu = expit(eta[t] + c[i])
        return (1 - params.p - params.q) * stats.beta.pdf(y, mu * k, (1 - mu) * k)

    sd0 = params.omega / math.sqrt(1 - params.phi**2)
    beta = params.beta_t(tt)
    total = 0.0
    for path in itertools.product(range(m), repeat=T):
        term = h * stats.norm.pdf(c[path[0]], 0.0, sd0) * obs(0, path[0])
        for t in range(1, T):
            mean = params.phi * c[path[t - 1]] + beta[t] * match.vaepdiff[t - 1]
            term *= h * stats.norm.pdf(c[path[t]], mean, params.omega) * obs(t, path[t])
        total += term
    return math.log(total)
