"""Discretised state-space likelihood via the HMM forward algorithm.

The latent state range is cut into ``m`` intervals; with midpoint quadrature
the likelihood of one match becomes

    L = delta P(y_1) Gamma(2) P(y_2) ... Gamma(T) P(y_T) 1

where ``delta_i = h f(c_i)``, ``Gamma(t)_ij = h f(c_j | c_i)`` and ``P(y_t)`` is
diagonal with the BEINF densities at each midpoint.  Missing minutes use the
identity for ``P``.  Forward vectors are renormalised at every step and the
log scale factors accumulated.

For fitting, matches are stacked into padded batches (:class:`MatchBatch`) and
the transition is factorised as

    Gamma(s) = diag(u(s)) Gamma0 diag(v(s)) k(s)

where ``s = beta_t * vaepdiff_{t-1}`` is the covariate shift, so a whole batch
advances with one dense product against the shift-free ``Gamma0``.  Rows whose
shift would push the factors out of floating-point range fall back to explicit
per-match matrices.  The same machinery runs the backward pass, which yields
the exact gradient of the discretised log-likelihood through the smoothed
state probabilities.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.special import digamma, expit

from .beinf import beinf_logpdf, beta_logpdf_interior
from .exceptions import ConfigurationError
from .model import (
    VARYING,
    MatchSeries,
    ModelParams,
    StateGrid,
    initial_distribution,
    linear_predictor,
    minute_basis,
    state_shift,
    transition_matrix,
)
from .splines import T_MAX, penalty

CHUNK_SIZE = 64
# Largest tolerated log-magnitude of the factorised transition terms.
_TILT_LIMIT = 600.0
_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


@dataclass
class ForwardResult:
    log_likelihood: float
    filtered_state: np.ndarray
    log_scaling: np.ndarray


def hmm_forward(delta, tpms, obs_probs) -> ForwardResult:
    """Scaled forward algorithm for an explicit HMM.

    Parameters
    ----------
    delta : (m,) initial weights (need not sum to one)
    tpms : (T-1, m, m) transition matrices; ``tpms[t-1]`` leads into step ``t``
    obs_probs : (T, m) diagonals of the observation matrices
    """
    delta = np.asarray(delta, dtype=float)
    obs_probs = np.asarray(obs_probs, dtype=float)
    T, m = obs_probs.shape
    filtered = np.zeros((T, m))
    log_scaling = np.full(T, -np.inf)
    with np.errstate(divide="ignore", invalid="ignore"):
        f = delta * obs_probs[0]
        for t in range(T):
            if t > 0:
                f = (filtered[t - 1] @ tpms[t - 1]) * obs_probs[t]
            total = f.sum()
            if not (np.isfinite(total) and total > 0):
                return ForwardResult(-np.inf, filtered, log_scaling)
            filtered[t] = f / total
            log_scaling[t] = np.log(total)
    return ForwardResult(float(np.sum(log_scaling)), filtered, log_scaling)


def forward_dense(match: MatchSeries, params: ModelParams, grid: StateGrid) -> ForwardResult:
    """Reference forward pass building every matrix explicitly (slow, simple)."""
    c = grid.midpoints
    eta = linear_predictor(params, match)
    probs = np.ones((match.T, grid.m))
    for t in range(match.T):
        if not np.isnan(match.y[t]):
            mu = expit(eta[t] + c)
            probs[t] = np.exp(beinf_logpdf(match.y[t], mu, params.sigma, params.p, params.q))
    tpms = np.array([
        transition_matrix(params, grid, match.vaepdiff[t - 2], t) for t in range(2, match.T + 1)
    ]).reshape(match.T - 1, grid.m, grid.m)
    return hmm_forward(initial_distribution(params, grid), tpms, probs)


class MatchBatch:
    """Matches stacked into padded ``(N, T)`` arrays for vectorised passes."""

    def __init__(self, matches):
        matches = list(matches)
        if not matches:
            raise ConfigurationError("need at least one match")
        self.matches = matches
        N = len(matches)
        self.lengths = np.array([mt.T for mt in matches])
        T = int(self.lengths.max())
        self.T = T
        self.y = np.full((N, T), np.nan)
        self.vaep = np.zeros((N, T))
        self.score = np.zeros((N, T))
        self.winprob = np.zeros((N, T))
        self.prewin = np.array([mt.prewindiff for mt in matches])
        for n, mt in enumerate(matches):
            self.y[n, : mt.T] = mt.y
            self.vaep[n, : mt.T] = mt.vaepdiff
            self.score[n, : mt.T] = mt.scorediff
            self.winprob[n, : mt.T] = mt.winprobteam
        self.zero = self.y == 0.0
        self.one = self.y == 1.0
        self.interior = (self.y > 0.0) & (self.y < 1.0)
        yi = self.y[self.interior]
        self.log_y = np.log(yi)
        self.log1m_y = np.log1p(-yi)
        self.n_zero = int(self.zero.sum(axis=1).sum())
        self.n_one = int(self.one.sum(axis=1).sum())
        self.n_interior = int(self.interior.sum())
        self.n_obs = self.n_zero + self.n_one + self.n_interior
        self.t_index = np.arange(1, T + 1)

    def __len__(self):
        return len(self.matches)

    def eta(self, params: ModelParams) -> np.ndarray:
        a_t = params.alpha_t(self.t_index)
        return (
            params.alpha0
            + a_t[None, :] * self.prewin[:, None]
            + params.zeta1 * self.score
            + params.zeta2 * self.winprob
        )

    def shift(self, params: ModelParams) -> np.ndarray:
        s = np.zeros_like(self.vaep)
        if self.T > 1:
            s[:, 1:] = params.beta_t(self.t_index[1:])[None, :] * self.vaep[:, :-1]
        return s


def split_batches(matches, chunk_size: int = CHUNK_SIZE) -> list[MatchBatch]:
    """Fixed-size chunks; the split never depends on the thread count."""
    matches = list(matches)
    return [MatchBatch(matches[i : i + chunk_size]) for i in range(0, len(matches), chunk_size)]


class _Transitions:
    """Shift-free kernel ``Gamma0`` plus per-step factor construction."""

    def __init__(self, params: ModelParams, grid: StateGrid):
        self.c = grid.midpoints
        self.phi = params.phi
        self.omega = params.omega
        self.log_norm = math.log(grid.h / params.omega) - _LOG_SQRT_2PI
        self.radius = float(np.max(np.abs(self.c)))
        x = (self.c[None, :] - self.phi * self.c[:, None]) / self.omega
        self.G0 = np.exp(self.log_norm - 0.5 * x * x)
        self.G0T = np.ascontiguousarray(self.G0.T)

    def step(self, s: np.ndarray) -> "_Step":
        return _Step(self, s)


class _Step:
    """Transition for one minute across a batch; ``s`` holds the per-row shifts."""

    def __init__(self, tr: _Transitions, s: np.ndarray):
        self.tr = tr
        w2 = tr.omega**2
        tilt = (2.0 * tr.radius * np.abs(s) + 0.5 * s * s) / w2
        self.dense_rows = np.flatnonzero(tilt > _TILT_LIMIT)
        self.offset = np.zeros(s.shape)
        c = tr.c
        logu = -tr.phi * s[:, None] * c[None, :] / w2
        logv = s[:, None] * c[None, :] / w2
        mu = logu.max(axis=1)
        mv = logv.max(axis=1)
        self.u = np.exp(logu - mu[:, None])
        self.v = np.exp(logv - mv[:, None])
        self.offset = mu + mv - 0.5 * s * s / w2
        if self.dense_rows.size:
            sd = s[self.dense_rows]
            x = (c[None, None, :] - tr.phi * c[None, :, None] - sd[:, None, None]) / tr.omega
            self.dense = np.exp(tr.log_norm - 0.5 * x * x)
            self.offset[self.dense_rows] = 0.0

    def right(self, a: np.ndarray) -> np.ndarray:
        """``a Gamma`` per row, scaled by ``exp(-offset)``."""
        out = ((a * self.u) @ self.tr.G0) * self.v
        if self.dense_rows.size:
            out[self.dense_rows] = np.einsum("ni,nij->nj", a[self.dense_rows], self.dense)
        return out

    def left(self, b: np.ndarray) -> np.ndarray:
        """``Gamma b`` for ``b`` of shape (N, k, m), scaled by ``exp(-offset)``."""
        out = ((b * self.v[:, None, :]) @ self.tr.G0T) * self.u[:, None, :]
        if self.dense_rows.size:
            out[self.dense_rows] = np.einsum("nij,nkj->nki", self.dense, b[self.dense_rows])
        return out


def _emissions(batch: MatchBatch, params: ModelParams, c: np.ndarray):
    """Max-normalised observation weights, their log offsets and linear predictors."""
    N, T, m = len(batch), batch.T, c.size
    eta = batch.eta(params)
    logP = np.zeros((N, T, m))
    precision = (1.0 - params.sigma**2) / params.sigma**2
    with np.errstate(divide="ignore"):
        log_p = math.log(params.p) if params.p > 0 else -np.inf
        log_q = math.log(params.q) if params.q > 0 else -np.inf
        log_rest = math.log1p(-(params.p + params.q))
    U = eta[batch.interior][:, None] + c[None, :]
    mu = expit(U)
    a = mu * precision
    b = precision - a
    yi = np.exp(batch.log_y)[:, None]
    logP[batch.interior] = log_rest + beta_logpdf_interior(yi, mu, precision)
    log_max = logP.max(axis=2)
    log_max[batch.zero] = log_p
    log_max[batch.one] = log_q
    with np.errstate(invalid="ignore"):
        P = np.exp(logP - logP.max(axis=2, keepdims=True))
    P[~np.isfinite(P)] = 0.0
    return P, log_max, mu, a, b, precision


@dataclass
class _BatchPass:
    loglik: np.ndarray          # (N,) per-match log-likelihoods
    filtered: np.ndarray        # (N, T, m)
    log_scaling: np.ndarray     # (N, T)
    grad: dict | None = None


def batch_pass(batch: MatchBatch, params: ModelParams, grid: StateGrid, *, gradient: bool = False) -> _BatchPass:
    """Forward (and optionally backward) pass over a batch.

    With ``gradient=True`` the grid must be the symmetric grid built for
    ``params``: the derivatives account for the grid moving with ``phi`` and
    ``omega``.  Gradient entries are with respect to ``phi``, ``log(omega)``,
    ``sigma``, ``p``, ``q`` and the regression coefficients.
    """
    N, T, m = len(batch), batch.T, grid.m
    c = grid.midpoints
    P, log_max, mu, a_sh, b_sh, precision = _emissions(batch, params, c)
    s = batch.shift(params)
    trans = _Transitions(params, grid)
    delta = initial_distribution(params, grid)

    filtered = np.zeros((N, T, m))
    log_scaling = np.zeros((N, T))
    dead = np.zeros(N, dtype=bool)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        f = delta[None, :] * P[:, 0, :]
        for j in range(T):
            active = batch.lengths > j
            if j > 0:
                step = trans.step(s[:, j])
                f = step.right(filtered[:, j - 1]) * P[:, j, :]
                off = step.offset
            else:
                off = 0.0
            total = f.sum(axis=1)
            bad = ~(np.isfinite(total) & (total > 0)) | ~np.isfinite(log_max[:, j])
            dead |= bad & active
            total = np.where(bad, 1.0, total)
            new = f / total[:, None]
            new[bad] = 1.0 / m
            filtered[:, j] = np.where(active[:, None], new, filtered[:, j - 1] if j else new)
            log_scaling[:, j] = np.where(active, np.log(total) + off + log_max[:, j], 0.0)
    loglik = log_scaling.sum(axis=1)
    loglik[dead] = -np.inf
    log_scaling[dead] = -np.inf
    result = _BatchPass(loglik, filtered, log_scaling)
    if gradient:
        if dead.any() or not np.all(np.isfinite(filtered)):
            result.grad = None
        else:
            result.grad = _gradient(batch, params, grid, trans, P, s, filtered, mu, a_sh, b_sh, precision)
    return result


def _gradient(batch, params, grid, trans, P, s, filtered, mu, a_sh, b_sh, precision) -> dict:
    N, T, m = len(batch), batch.T, grid.m
    c = grid.midpoints
    radius = grid.cm
    z = c / radius
    phi, omega = params.phi, params.omega
    one_m_phi2 = 1.0 - phi * phi
    A = radius / omega

    # backward pass: smoothed marginals and E[z_{t-1} z_t]
    smoothed = filtered.copy()
    cross = np.zeros((N, T))
    btil = np.ones((N, m))
    for j in range(T - 1, 0, -1):
        active = batch.lengths > j
        if not active.any():
            continue
        step = trans.step(s[:, j])
        w = P[:, j, :] * btil
        G = step.left(np.stack([w, w * z[None, :]], axis=1))
        Gw, Gzw = G[:, 0, :], G[:, 1, :]
        prev = filtered[:, j - 1]
        den = np.einsum("ni,ni->n", prev, Gw)
        num = np.einsum("ni,ni->n", prev * z[None, :], Gzw)
        scale = Gw.max(axis=1)
        new_b = Gw / scale[:, None]
        sm = prev * new_b
        sm /= sm.sum(axis=1, keepdims=True)
        with np.errstate(invalid="ignore", divide="ignore"):
            cross[:, j] = np.where(active, num / den, 0.0)
        btil = np.where(active[:, None], new_b, btil)
        smoothed[:, j - 1] = np.where(active[:, None], sm, smoothed[:, j - 1])

    m1 = smoothed @ z
    m2 = smoothed @ (z * z)

    # emission part
    ly = batch.log_y[:, None]
    l1y = batch.log1m_y[:, None]
    psi_a = digamma(a_sh)
    psi_b = digamma(b_sh)
    with np.errstate(invalid="ignore", over="ignore"):
        e_u = mu * (1.0 - mu) * precision * (ly - l1y - psi_a + psi_b)
        e_k = mu * (ly - psi_a) + (1.0 - mu) * (l1y - psi_b) + digamma(precision)
    g_int = smoothed[batch.interior]
    G_u = np.zeros((N, T))
    G_u[batch.interior] = np.einsum("ki,ki->k", g_int, e_u)
    d_radius = float(np.einsum("ki,ki,i->", g_int, e_u, z))
    d_precision = float(np.einsum("ki,ki->", g_int, e_k))

    # transition part, steps j >= 1 into minute j + 1
    act = batch.lengths[:, None] > np.arange(T)[None, :]
    act[:, 0] = False
    s_over = s / omega
    Ex = A * (m1[:, 1:] - phi * m1[:, :-1]) - s_over[:, 1:]
    Exdx = (A / one_m_phi2) * (
        A * phi * (m2[:, 1:] + m2[:, :-1])
        - A * (1.0 + phi * phi) * cross[:, 1:]
        - s_over[:, 1:] * (phi * m1[:, 1:] - m1[:, :-1])
    )
    a1 = act[:, 1:]
    n_trans = a1.sum()
    d_phi = n_trans * phi / one_m_phi2 - float(np.sum(Exdx, where=a1))
    d_logw = -float(np.sum(s_over[:, 1:] * Ex, where=a1))
    d_shift = np.zeros((N, T))
    d_shift[:, 1:] = np.where(a1, Ex / omega, 0.0)

    d_phi += d_radius * radius * phi / one_m_phi2
    d_logw += d_radius * radius

    p, q = params.p, params.q
    rest = 1.0 - p - q
    n0, n1, ni = batch.n_zero, batch.n_one, batch.n_interior
    with np.errstate(divide="ignore", invalid="ignore"):
        d_p = (n0 / p if n0 else 0.0) - ni / rest
        d_q = (n1 / q if n1 else 0.0) - ni / rest
    d_sigma = d_precision * (-2.0 / params.sigma**3)

    vaep_lag = np.zeros((N, T))
    vaep_lag[:, 1:] = batch.vaep[:, :-1]
    grad = {
        "phi": d_phi,
        "log_omega": d_logw,
        "sigma": d_sigma,
        "p": d_p,
        "q": d_q,
        "alpha0": float(G_u.sum()),
        "zeta1": float(np.sum(G_u * batch.score)),
        "zeta2": float(np.sum(G_u * batch.winprob)),
    }
    Gu_pw = G_u * batch.prewin[:, None]
    ds_v = d_shift * vaep_lag
    if params.variant == VARYING:
        B = minute_basis(params.K)[:T]
        grad["nu_alpha"] = Gu_pw.sum(axis=0) @ B
        grad["nu_beta"] = ds_v.sum(axis=0) @ B
    else:
        grad["alpha"] = float(Gu_pw.sum())
        grad["beta"] = float(ds_v.sum())
    return grad


def forward(match: MatchSeries, params: ModelParams, grid: StateGrid) -> ForwardResult:
    """Scaled forward pass for one match.

    Returns ``-inf`` log-likelihood (never raises) when a density is not finite
    or the forward vector vanishes.
    """
    res = batch_pass(MatchBatch([match]), params, grid)
    T = match.T
    return ForwardResult(float(res.loglik[0]), res.filtered[0, :T].copy(), res.log_scaling[0, :T].copy())


def _map_batches(fn, batches, threads):
    if threads is None or threads <= 1 or len(batches) == 1:
        return [fn(b) for b in batches]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, batches))


def per_match_log_likelihood(batches, params, grid, threads=None) -> np.ndarray:
    if isinstance(batches, MatchBatch):
        batches = [batches]
    out = _map_batches(lambda b: batch_pass(b, params, grid).loglik, batches, threads)
    return np.concatenate(out)


def joint_log_likelihood(matches, params: ModelParams, grid: StateGrid, threads=None) -> float:
    """Sum of per-match log-likelihoods (matches are independent).

    Uses exact summation, so the value does not depend on match order or on
    the number of threads.
    """
    batches = matches if _is_batch_list(matches) else split_batches(matches)
    values = per_match_log_likelihood(batches, params, grid, threads)
    if np.any(np.isneginf(values)) or np.any(np.isnan(values)):
        return -np.inf
    return math.fsum(values)


def _is_batch_list(obj) -> bool:
    return isinstance(obj, list) and bool(obj) and all(isinstance(b, MatchBatch) for b in obj)


def spline_penalty(params: ModelParams, lambda_alpha: float, lambda_beta: float) -> float:
    if params.variant != VARYING:
        raise ConfigurationError("the roughness penalty needs the varying-coefficient variant")
    return penalty(params.nu_alpha, lambda_alpha) + penalty(params.nu_beta, lambda_beta)


def penalized_objective(matches, params: ModelParams, grid: StateGrid, lambda_alpha: float,
                        lambda_beta: float, threads=None) -> float:
    """Joint log-likelihood minus the second-difference penalties on both splines."""
    pen = spline_penalty(params, lambda_alpha, lambda_beta)
    return joint_log_likelihood(matches, params, grid, threads) - pen


def loglik_and_gradient(batches, params: ModelParams, grid: StateGrid, threads=None):
    """Joint log-likelihood and its gradient (see :func:`batch_pass`)."""
    results = _map_batches(lambda b: batch_pass(b, params, grid, gradient=True), batches, threads)
    values = np.concatenate([r.loglik for r in results])
    if not np.all(np.isfinite(values)) or any(r.grad is None for r in results):
        return -np.inf, None
    grad = {}
    for r in results:
        for key, val in r.grad.items():
            grad[key] = grad.get(key, 0.0) + np.asarray(val, dtype=float)
    return math.fsum(values), grad
