"""Penalised maximum likelihood: transforms, fitting, information and tuning.

All optimisation happens on an unconstrained working scale:

=========  ===============================================
phi        ``logit((1 + phi) / 2)``
omega      ``log(omega)``
sigma      ``logit(sigma)``
(p, q)     ``(log(p / r), log(q / r))`` with ``r = 1 - p - q``
others     identity
=========  ===============================================

Observed information is the negative Hessian of the log-likelihood on the
working scale, obtained by central differences of the exact gradient.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize
from scipy.special import expit, logit, logsumexp

from .exceptions import ConfigurationError, InvalidParameterError, NumericalError
from .likelihood import MatchBatch, loglik_and_gradient, split_batches
from .model import BASELINE, VARYING, ModelParams, build_grid
from .splines import penalty_matrix

logger = logging.getLogger(__name__)

DEFAULT_LAMBDAS = (0.05, 0.25, 1.0, 5.0, 25.0, 100.0, 500.0)
Z95 = 1.959963984540054

_BASE_SCALARS = ["phi", "omega", "sigma", "p", "q", "alpha0"]


@dataclass(frozen=True)
class GridConfig:
    """State grid used while fitting.

    ``max_step_ratio`` bounds the interval width relative to ``omega``.  Wider
    intervals no longer resolve the transition density, the unnormalised rows
    of the transition matrix stop summing to about one, and the approximate
    likelihood can grow without bound as ``phi`` approaches 1.  Such points are
    treated as outside the parameter space.
    """

    m: int = 100
    span_sds: float = 5.0
    max_step_ratio: float = 1.0

    def phi_limit(self) -> float:
        """Largest ``|phi|`` the grid resolves."""
        ratio = 2.0 * self.span_sds / (self.m * self.max_step_ratio)
        return math.sqrt(max(0.0, 1.0 - ratio * ratio))


def scalar_names(variant: str) -> list[str]:
    """Non-spline parameters of a model variant, in working-vector order."""
    if variant == BASELINE:
        return _BASE_SCALARS + ["alpha", "beta"]
    if variant == VARYING:
        return _BASE_SCALARS + ["zeta1", "zeta2"]
    raise ConfigurationError(f"unknown variant {variant!r}")


def default_init(variant: str, K: int = 10) -> ModelParams:
    common = dict(phi=0.9, omega=0.2, sigma=0.3, p=0.01, q=0.01, alpha0=0.0)
    if variant == BASELINE:
        return ModelParams(**common)
    if variant == VARYING:
        return ModelParams(**common, nu_alpha=np.zeros(K), nu_beta=np.zeros(K))
    raise ConfigurationError(f"unknown variant {variant!r}")


class ParameterLayout:
    """Maps between :class:`ModelParams` and the free working vector.

    ``fixed`` holds scalar parameters kept at given natural values (used for
    restricted models, or for a point mass with no boundary observations).
    """

    def __init__(self, variant: str, K: int | None = None, fixed: dict | None = None):
        self.variant = variant
        self.K = K if variant == VARYING else None
        if variant == VARYING and (K is None or K < 4):
            raise ConfigurationError("varying-coefficient variant needs K >= 4")
        self.fixed = dict(fixed or {})
        scalars = scalar_names(variant)
        unknown = set(self.fixed) - set(scalars)
        if unknown:
            raise ConfigurationError(f"cannot fix {sorted(unknown)} in the {variant} variant")
        self.free_scalars = [n for n in scalars if n not in self.fixed]
        self.labels = []
        for name in scalars:
            if name in self.fixed:
                continue
            if name == "zeta1" and variant == VARYING:
                self._add_splines()
            self.labels.append(name)
        if variant == VARYING and "zeta1" in self.fixed:
            self._add_splines()
        self.index = {lab: i for i, lab in enumerate(self.labels)}

    def _add_splines(self):
        self.labels += [f"nu_alpha[{k}]" for k in range(1, self.K + 1)]
        self.labels += [f"nu_beta[{k}]" for k in range(1, self.K + 1)]

    @property
    def size(self) -> int:
        return len(self.labels)

    def spline_slices(self) -> tuple[slice, slice] | None:
        if self.variant != VARYING:
            return None
        a0 = self.index["nu_alpha[1]"]
        b0 = self.index["nu_beta[1]"]
        return slice(a0, a0 + self.K), slice(b0, b0 + self.K)

    # -- transforms -------------------------------------------------------
    def to_working(self, params: ModelParams) -> np.ndarray:
        if params.variant != self.variant:
            raise ConfigurationError(f"expected {self.variant} parameters, got {params.variant}")
        x = np.zeros(self.size)
        p, q = params.p, params.q
        fp, fq = "p" in self.fixed, "q" in self.fixed
        rest = 1.0 - p - q
        for name in self.free_scalars:
            i = self.index[name]
            v = getattr(params, name)
            if name == "phi":
                x[i] = logit((1.0 + v) / 2.0)
            elif name == "omega":
                x[i] = math.log(v)
            elif name == "sigma":
                x[i] = logit(v)
            elif name in ("p", "q"):
                if v <= 0:
                    raise InvalidParameterError(f"{name} = 0 lies on the boundary of the working scale")
                other_fixed = fq if name == "p" else fp
                if other_fixed:
                    other = q if name == "p" else p
                    x[i] = logit(v / (1.0 - other))
                else:
                    x[i] = math.log(v / rest)
            else:
                x[i] = v
        if self.variant == VARYING:
            sa, sb = self.spline_slices()
            x[sa] = params.nu_alpha
            x[sb] = params.nu_beta
        if not np.all(np.isfinite(x)):
            raise InvalidParameterError("parameters on the boundary of their domain")
        return x

    def to_natural(self, x) -> ModelParams:
        x = np.asarray(x, dtype=float)
        vals = dict(self.fixed)
        get = lambda n: x[self.index[n]]  # noqa: E731
        for name in self.free_scalars:
            if name == "phi":
                vals[name] = 2.0 * expit(get(name)) - 1.0
            elif name == "omega":
                vals[name] = math.exp(get(name))
            elif name == "sigma":
                vals[name] = expit(get(name))
            elif name in ("p", "q"):
                continue
            else:
                vals[name] = get(name)
        fp, fq = "p" in self.fixed, "q" in self.fixed
        if not fp and not fq:
            lse = logsumexp([0.0, get("p"), get("q")])
            vals["p"] = math.exp(get("p") - lse)
            vals["q"] = math.exp(get("q") - lse)
        elif not fp:
            vals["p"] = (1.0 - vals["q"]) * expit(get("p"))
        elif not fq:
            vals["q"] = (1.0 - vals["p"]) * expit(get("q"))
        if self.variant == VARYING:
            sa, sb = self.spline_slices()
            vals["nu_alpha"] = x[sa].copy()
            vals["nu_beta"] = x[sb].copy()
        return ModelParams(**vals)

    def chain(self, grad: dict, params: ModelParams) -> np.ndarray:
        """Gradient on the working scale from the natural-scale gradient."""
        gx = np.zeros(self.size)
        fp, fq = "p" in self.fixed, "q" in self.fixed
        p, q = params.p, params.q
        for name in self.free_scalars:
            i = self.index[name]
            if name == "phi":
                gx[i] = grad["phi"] * 0.5 * (1.0 - params.phi**2)
            elif name == "omega":
                gx[i] = grad["log_omega"]
            elif name == "sigma":
                gx[i] = grad["sigma"] * params.sigma * (1.0 - params.sigma)
            elif name == "p":
                if fq:
                    gx[i] = grad["p"] * p * (1.0 - p / (1.0 - q))
                else:
                    gx[i] = grad["p"] * p * (1.0 - p) - grad["q"] * p * q
            elif name == "q":
                if fp:
                    gx[i] = grad["q"] * q * (1.0 - q / (1.0 - p))
                else:
                    gx[i] = grad["q"] * q * (1.0 - q) - grad["p"] * p * q
            else:
                gx[i] = grad[name]
        if self.variant == VARYING:
            sa, sb = self.spline_slices()
            gx[sa] = grad["nu_alpha"]
            gx[sb] = grad["nu_beta"]
        return gx

    def penalty_hessian(self, lambda_alpha: float, lambda_beta: float) -> np.ndarray:
        S = np.zeros((self.size, self.size))
        if self.variant == VARYING:
            sa, sb = self.spline_slices()
            S[sa, sa] = penalty_matrix(self.K, lambda_alpha)
            S[sb, sb] = penalty_matrix(self.K, lambda_beta)
        return S


def transform_to_unconstrained(params: ModelParams, fixed: dict | None = None) -> np.ndarray:
    return ParameterLayout(params.variant, params.K, fixed).to_working(params)


def transform_to_natural(x, variant: str = BASELINE, K: int | None = None, fixed: dict | None = None) -> ModelParams:
    return ParameterLayout(variant, K, fixed).to_natural(x)


# link functions used for confidence intervals (monotone, domain preserving)
_LINKS = {
    "phi": (lambda v: logit((1.0 + v) / 2.0), lambda u: 2.0 * expit(u) - 1.0),
    "omega": (np.log, np.exp),
    "sigma": (logit, expit),
    "p": (logit, expit),
    "q": (logit, expit),
}
_IDENTITY = (lambda v: v, lambda u: u)


class Objective:
    """Penalised log-likelihood on the working scale, with exact gradient."""

    def __init__(self, batches, layout: ParameterLayout, grid_config: GridConfig,
                 lambda_alpha: float = 0.0, lambda_beta: float = 0.0, threads=None):
        self.batches = batches
        self.layout = layout
        self.grid_config = grid_config
        if lambda_alpha < 0 or lambda_beta < 0:
            raise ConfigurationError("smoothing parameters must be >= 0")
        self.S = layout.penalty_hessian(lambda_alpha, lambda_beta)
        self.threads = threads
        self.n_evals = 0

    def loglik(self, x):
        """Unpenalised log-likelihood and gradient; ``(-inf, None)`` if invalid."""
        self.n_evals += 1
        try:
            params = self.layout.to_natural(x)
            grid = build_grid(params, self.grid_config.m, self.grid_config.span_sds)
        except (InvalidParameterError, OverflowError, ValueError):
            return -np.inf, None
        if grid.h > self.grid_config.max_step_ratio * params.omega:
            return -np.inf, None
        ll, grad = loglik_and_gradient(self.batches, params, grid, self.threads)
        if grad is None or not np.isfinite(ll):
            return -np.inf, None
        gx = self.layout.chain(grad, params)
        if not np.all(np.isfinite(gx)):
            return -np.inf, None
        return ll, gx

    def penalty(self, x):
        return 0.5 * float(x @ self.S @ x), self.S @ x

    def penalized(self, x):
        ll, g = self.loglik(x)
        pen, pg = self.penalty(x)
        if g is None:
            return -np.inf, None
        return ll - pen, g - pg

    def information(self, x, step: float = 1e-4) -> np.ndarray:
        """Observed information of the unpenalised log-likelihood at ``x``."""
        n = x.size
        H = np.empty((n, n))
        for k in range(n):
            e = np.zeros(n)
            e[k] = step
            _, gp = self.loglik(x + e)
            _, gm = self.loglik(x - e)
            if gp is None or gm is None:
                raise NumericalError(f"gradient undefined near the optimum along {self.layout.labels[k]}")
            H[:, k] = (gp - gm) / (2.0 * step)
        return -0.5 * (H + H.T)


@dataclass
class FitResult:
    params_hat: ModelParams
    variant: str
    labels: list[str]
    working_estimate: np.ndarray
    working_covariance: np.ndarray | None
    ci_95: dict
    std_errors: dict
    loglik: float
    penalized_loglik: float
    df_hat: float
    aic: float
    bic: float
    hq: float
    n_obs: int
    lambda_alpha: float
    lambda_beta: float
    grid_config: GridConfig
    status: str
    iterations: int
    grad_norm: float
    message: str = ""
    n_evals: int = 0
    info_unpenalized: np.ndarray | None = field(default=None, repr=False)
    info_penalized: np.ndarray | None = field(default=None, repr=False)
    fixed: dict = field(default_factory=dict)

    @property
    def converged(self) -> bool:
        return self.status == "converged"

    def estimates_table(self) -> list[dict]:
        """Rows of (parameter, estimate, lower, upper) for the scalar parameters."""
        est = self.params_hat.to_dict()
        rows = []
        for name in scalar_names(self.variant):
            lo, hi = self.ci_95.get(name, (float("nan"), float("nan")))
            rows.append({"parameter": name, "estimate": est[name], "ci_lower": lo, "ci_upper": hi,
                         "std_error": self.std_errors.get(name, float("nan")),
                         "fixed": name in self.fixed})
        return rows

    def to_dict(self) -> dict:
        return {
            "variant": self.variant,
            "params": self.params_hat.to_dict(),
            "fixed": self.fixed,
            "estimates": self.estimates_table(),
            "loglik": self.loglik,
            "penalized_loglik": self.penalized_loglik,
            "df_hat": self.df_hat,
            "aic": self.aic,
            "bic": self.bic,
            "hq": self.hq,
            "n_obs": self.n_obs,
            "lambda_alpha": self.lambda_alpha,
            "lambda_beta": self.lambda_beta,
            "grid": {"m": self.grid_config.m, "span_sds": self.grid_config.span_sds},
            "convergence": {
                "status": self.status,
                "iterations": self.iterations,
                "relative_gradient_norm": self.grad_norm,
                "message": self.message,
                "n_evaluations": self.n_evals,
            },
            "working_labels": self.labels,
            "working_covariance": None if self.working_covariance is None
            else self.working_covariance.tolist(),
        }


def _relative_gradient(value: float, grad: np.ndarray) -> float:
    return float(np.max(np.abs(grad)) / max(1.0, abs(value)))


def _as_batches(matches):
    if isinstance(matches, list) and matches and all(isinstance(b, MatchBatch) for b in matches):
        return matches
    return split_batches(matches)


def _newton_polish(obj: Objective, x, value, grad, tol, max_steps=5):
    """Damped Newton steps with the finite-difference information."""
    steps = 0
    for _ in range(max_steps):
        if _relative_gradient(value, grad) <= tol:
            break
        try:
            info = obj.information(x) + obj.S
            direction = np.linalg.solve(info, grad)
        except (np.linalg.LinAlgError, NumericalError):
            break
        t = 1.0
        improved = False
        while t > 1e-6:
            xn = x + t * direction
            vn, gn = obj.penalized(xn)
            if gn is not None and vn >= value - 1e-12 * abs(value):
                x, value, grad = xn, vn, gn
                improved = True
                break
            t *= 0.5
        steps += 1
        if not improved:
            break
    return x, value, grad, steps


def fit(matches, variant: str = BASELINE, grid_config: GridConfig | None = None,
        lambda_alpha: float = 0.0, lambda_beta: float = 0.0, init: ModelParams | None = None,
        K: int = 10, fixed: dict | None = None, tol: float = 1e-5, max_iter: int = 500,
        threads=None, compute_information: bool = True, information: np.ndarray | None = None,
        precondition: bool = True) -> FitResult:
    """Maximise the (penalised) log-likelihood with BFGS on the working scale.

    The search runs in linearly rescaled coordinates whose metric is the
    observed information plus the penalty Hessian (``information`` may be
    supplied, e.g. from a neighbouring fit; otherwise it is computed at the
    start when ``precondition`` is set).

    Convergence means ``max|grad| / max(1, |objective|) <= tol``.  When BFGS
    stops short of that, a few Newton steps with the observed information are
    tried.  Failure to converge is reported through ``status``, never raised.
    """
    grid_config = grid_config or GridConfig()
    batches = _as_batches(matches)
    if init is None:
        init = default_init(variant, K)
    K = init.K
    if init.variant != variant:
        raise ConfigurationError(f"initial values are for the {init.variant} variant")
    if variant == BASELINE and (lambda_alpha or lambda_beta):
        raise ConfigurationError("smoothing parameters need the varying-coefficient variant")
    fixed = dict(fixed or {})
    n_zero = sum(b.n_zero for b in batches)
    n_one = sum(b.n_one for b in batches)
    # no boundary observations: the mass estimate sits on the boundary at 0
    if n_zero == 0 and "p" not in fixed:
        fixed["p"] = 0.0
    if n_one == 0 and "q" not in fixed:
        fixed["q"] = 0.0
    init = init.replace(**fixed) if fixed else init
    if "p" in fixed and "q" not in fixed and init.q <= 0:
        init = init.replace(q=0.01)
    if "q" in fixed and "p" not in fixed and init.p <= 0:
        init = init.replace(p=0.01)
    layout = ParameterLayout(variant, K, fixed)
    obj = Objective(batches, layout, grid_config, lambda_alpha, lambda_beta, threads)
    n_obs = sum(b.n_obs for b in batches)

    x0 = layout.to_working(init)
    v0, g0 = obj.penalized(x0)
    if g0 is None:
        raise NumericalError("log-likelihood is not finite at the initial values")
    scale = max(1.0, abs(v0))
    if information is not None and np.shape(information) != (layout.size, layout.size):
        information = None
    if information is None and precondition:
        try:
            information = obj.information(x0)
        except NumericalError:
            information = None
    R_inv = _preconditioner(information, obj.S, scale, layout.size)

    def fun(z):
        x = x0 + R_inv @ z
        v, g = obj.penalized(x)
        if g is None:
            return np.inf, np.zeros_like(z)
        return -v / scale, -(R_inv.T @ g) / scale

    res = minimize(fun, np.zeros(layout.size), jac=True, method="BFGS",
                   options={"gtol": 0.5 * tol, "maxiter": max_iter, "norm": np.inf})
    x = x0 + R_inv @ res.x
    value, grad = obj.penalized(x)
    if grad is None:
        x, (value, grad) = x0, (v0, g0)
    iterations = int(res.nit)
    x, value, grad, polish = _newton_polish(obj, x, value, grad, tol, min(5, max_iter - iterations))
    iterations += polish
    rel = _relative_gradient(value, grad)
    if rel <= tol:
        status = "converged"
    elif iterations >= max_iter:
        status = "max_iterations"
    else:
        status = "failed"
    params_hat = layout.to_natural(x)
    message = str(res.message)
    if status != "converged" and abs(params_hat.phi) > 0.999 * grid_config.phi_limit():
        message += (f"; |phi| at the grid resolution limit {grid_config.phi_limit():.4f},"
                    " increase m")
    pen, _ = obj.penalty(x)
    loglik = value + pen

    result = FitResult(
        params_hat=params_hat, variant=variant, labels=list(layout.labels), working_estimate=x,
        working_covariance=None, ci_95={}, std_errors={}, loglik=loglik, penalized_loglik=value,
        df_hat=float(layout.size), aic=float("nan"), bic=float("nan"), hq=float("nan"), n_obs=n_obs,
        lambda_alpha=lambda_alpha, lambda_beta=lambda_beta, grid_config=grid_config, status=status,
        iterations=iterations, grad_norm=rel, message=message, fixed=fixed,
    )
    if compute_information:
        _attach_information(result, obj, layout, x)
    _set_criteria(result)
    result.n_evals = obj.n_evals
    return result


def _preconditioner(info, S, scale, n):
    """``R_inv`` with ``R_inv.T @ M @ R_inv = I`` for the floored metric ``M``."""
    M = np.eye(n) if info is None else np.array(info, dtype=float)
    M = 0.5 * (M + M.T) + S
    M = M / scale
    vals, vecs = np.linalg.eigh(M)
    floor = max(1e-8 * vals.max(), 1e-6) if vals.max() > 0 else 1.0
    vals = np.maximum(np.abs(vals), floor)
    return vecs / np.sqrt(vals)


def _set_criteria(result: FitResult):
    n, df, ll = result.n_obs, result.df_hat, result.loglik
    result.aic = -2.0 * ll + 2.0 * df
    result.bic = -2.0 * ll + math.log(n) * df
    result.hq = -2.0 * ll + 2.0 * math.log(math.log(n)) * df


def _attach_information(result: FitResult, obj: Objective, layout: ParameterLayout, x):
    try:
        info = obj.information(x)
    except NumericalError as exc:
        result.message += f"; information unavailable: {exc}"
        return
    info_pen = info + obj.S
    result.info_unpenalized = info
    result.info_penalized = info_pen
    penalised = bool(np.any(obj.S))
    if penalised:
        try:
            result.df_hat = _trace_df(info, info_pen)
        except NumericalError as exc:
            result.message += f"; {exc}"
    try:
        cov = np.linalg.inv(info_pen)
        if not np.all(np.isfinite(cov)) or np.any(np.diag(cov) <= 0):
            raise np.linalg.LinAlgError("information not positive definite")
    except np.linalg.LinAlgError as exc:
        result.message += f"; confidence intervals unavailable ({exc})"
        return
    result.working_covariance = cov
    result.std_errors, result.ci_95 = _intervals(layout, x, cov)


def _trace_df(info: np.ndarray, info_pen: np.ndarray) -> float:
    try:
        return float(np.trace(np.linalg.solve(info_pen, info)))
    except np.linalg.LinAlgError as exc:
        cond = np.linalg.cond(info_pen)
        raise NumericalError(f"penalised information is singular (condition number {cond:.3g})") from exc


def _intervals(layout: ParameterLayout, x, cov, step: float = 1e-6):
    """Natural-scale standard errors (delta method) and link-scale 95% intervals."""
    std_errors, cis = {}, {}
    base = layout.to_natural(x).to_dict()
    n = x.size
    jac_nat = {name: np.zeros(n) for name in layout.free_scalars}
    jac_link = {name: np.zeros(n) for name in layout.free_scalars}
    for k in range(n):
        e = np.zeros(n)
        e[k] = step
        up = layout.to_natural(x + e).to_dict()
        dn = layout.to_natural(x - e).to_dict()
        for name in layout.free_scalars:
            link = _LINKS.get(name, _IDENTITY)[0]
            jac_nat[name][k] = (up[name] - dn[name]) / (2 * step)
            jac_link[name][k] = (link(up[name]) - link(dn[name])) / (2 * step)
    for name in layout.free_scalars:
        link, inv = _LINKS.get(name, _IDENTITY)
        std_errors[name] = float(np.sqrt(max(jac_nat[name] @ cov @ jac_nat[name], 0.0)))
        se_link = float(np.sqrt(max(jac_link[name] @ cov @ jac_link[name], 0.0)))
        centre = link(base[name])
        cis[name] = (float(inv(centre - Z95 * se_link)), float(inv(centre + Z95 * se_link)))
    return std_errors, cis


def effective_df(matches, fit_result: FitResult, threads=None) -> float:
    """``trace(I_unpen @ inv(I_pen))`` at the penalised estimate (working scale)."""
    if fit_result.info_unpenalized is not None:
        return _trace_df(fit_result.info_unpenalized, fit_result.info_penalized)
    layout = ParameterLayout(fit_result.variant, fit_result.params_hat.K, fit_result.fixed)
    obj = Objective(_as_batches(matches), layout, fit_result.grid_config,
                    fit_result.lambda_alpha, fit_result.lambda_beta, threads)
    info = obj.information(fit_result.working_estimate)
    return _trace_df(info, info + obj.S)


@dataclass
class TuneResult:
    best: FitResult
    lambda_alpha: tuple
    lambda_beta: tuple
    aic: np.ndarray
    bic: np.ndarray
    hq: np.ndarray
    df: np.ndarray
    loglik: np.ndarray
    status: np.ndarray
    fits: dict
    selected: dict

    def to_dict(self) -> dict:
        def arr(a):
            return [[None if (isinstance(v, float) and not math.isfinite(v)) else v for v in row]
                    for row in a.tolist()]
        return {
            "lambda_alpha": list(self.lambda_alpha),
            "lambda_beta": list(self.lambda_beta),
            "aic": arr(self.aic), "bic": arr(self.bic), "hq": arr(self.hq),
            "df": arr(self.df), "loglik": arr(self.loglik),
            "status": self.status.tolist(),
            "selected": self.selected,
            "best_fit": self.best.to_dict(),
        }


def _serpentine(na: int, nb: int):
    for i in range(na):
        cols = range(nb) if i % 2 == 0 else range(nb - 1, -1, -1)
        for j in cols:
            yield i, j


def select_cell(table: np.ndarray, lambda_alpha, lambda_beta, tie_tol: float = 1e-9):
    """Argmin of a criterion table; near-ties go to the larger (lambda_alpha, lambda_beta)."""
    finite = np.isfinite(table)
    if not finite.any():
        raise NumericalError("no grid cell produced a usable fit")
    best = np.min(table[finite])
    cands = [(lambda_alpha[i], lambda_beta[j], i, j)
             for i, j in zip(*np.nonzero(finite & (table <= best + tie_tol)))]
    _, _, i, j = max(cands)
    return int(i), int(j)


def tune(matches, grid_config: GridConfig | None = None, lambda_alpha=DEFAULT_LAMBDAS,
         lambda_beta=DEFAULT_LAMBDAS, K: int = 10, init: ModelParams | None = None,
         criterion: str = "aic", threads=None, **fit_kwargs) -> TuneResult:
    """Fit every (lambda_alpha, lambda_beta) cell and select by information criterion.

    Cells are visited in serpentine order; each fit starts from the estimate of
    the nearest already-fitted cell.  Failed cells are recorded and skipped.
    """
    lambda_alpha, lambda_beta = tuple(lambda_alpha), tuple(lambda_beta)
    if not lambda_alpha or not lambda_beta:
        raise ConfigurationError("smoothing-parameter grids must be non-empty")
    batches = _as_batches(matches)
    na, nb = len(lambda_alpha), len(lambda_beta)
    shape = (na, nb)
    tables = {k: np.full(shape, np.nan) for k in ("aic", "bic", "hq", "df", "loglik")}
    status = np.full(shape, "not_run", dtype=object)
    fits = {}
    start = init or default_init(VARYING, K)
    for i, j in _serpentine(na, nb):
        if fits:
            ni, nj = min(fits, key=lambda c: (abs(c[0] - i) + abs(c[1] - j), c))
            warm = fits[(ni, nj)].params_hat
            info = fits[(ni, nj)].info_unpenalized
        else:
            warm, info = start, None
        try:
            res = fit(batches, VARYING, grid_config, lambda_alpha[i], lambda_beta[j], init=warm,
                      K=start.K, threads=threads, information=info, **fit_kwargs)
        except Exception as exc:
            logger.warning("cell (%s, %s) failed: %s", lambda_alpha[i], lambda_beta[j], exc)
            status[i, j] = f"error: {exc}"
            continue
        status[i, j] = res.status
        fits[(i, j)] = res
        if res.converged:
            for key in ("aic", "bic", "hq"):
                tables[key][i, j] = getattr(res, key)
        tables["df"][i, j] = res.df_hat
        tables["loglik"][i, j] = res.loglik
    selected = {}
    for key in ("aic", "bic", "hq"):
        try:
            si, sj = select_cell(tables[key], lambda_alpha, lambda_beta)
            selected[key] = {"lambda_alpha": lambda_alpha[si], "lambda_beta": lambda_beta[sj]}
        except NumericalError:
            selected[key] = None
    bi, bj = select_cell(tables[criterion], lambda_alpha, lambda_beta)
    return TuneResult(fits[(bi, bj)], lambda_alpha, lambda_beta, tables["aic"], tables["bic"],
                      tables["hq"], tables["df"], tables["loglik"], status, fits, selected)
