"""Alternating-scaling solver for the capacity-constrained rate problem.

Each iteration refreshes the Gibbs kernel exp(-lam*d) at the current
multiplier, rescales rows then columns to match the target marginals (the
column update already sees the new row scaling), and finally advances the
multiplier, either by a projected gradient step

    lam <- max(0, lam + tau * excess)        excess = sum d q - t

(the excess is exactly minus the multiplier-gradient of the dual, so this
is projected gradient descent on the dual) or by solving excess(lam) = 0
directly; the excess is strictly decreasing in lam, so the root is unique
whenever excess(0) > 0.

Residuals after a full iteration are the L1 marginal gaps plus the
multiplier residual |excess|, with the complementary-slackness convention
that the multiplier residual is zero at lam = 0 with negative excess
(the constraint is simply inactive there).
"""

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from . import _kernels
from .channel import DiscreteProblem
from .errors import NumericalFailureError
from .problem import Coupling, shannon_entropy

# switch the marginal updates to shifted log-sum-exp reductions once the
# smallest kernel exponent -lam*max(d) drops below this
_LSE_EXPONENT = -700.0

# relative tolerance of the multiplier root solve: |excess| <= ROOT_RTOL * t
ROOT_RTOL = 1e-13

_ROOT_LAMBDA_CAP = 1e6


class LambdaStrategy(str, Enum):
    PROJECT = "project"
    ROOT = "root"
    AUTO = "auto"


class SolveStatus(str, Enum):
    CONVERGED = "converged"
    MAX_ITERS = "max_iters"
    NUMERICAL_FAILURE = "numerical_failure"


@dataclass
class SolverConfig:
    max_iters: int = 500
    tol: float = 1e-10
    lambda_strategy: LambdaStrategy = LambdaStrategy.AUTO
    tau: float | None = None          # None -> 1 / max(d)^2
    lambda_init: float = 1.0
    log_domain: bool = True           # allow the LSE fallback path

    def __post_init__(self):
        self.lambda_strategy = LambdaStrategy(self.lambda_strategy)
        if self.max_iters < 1:
            raise ValueError("max_iters must be positive")
        if not (self.tol > 0):
            raise ValueError("tol must be positive")
        if self.tau is not None and not (self.tau > 0):
            raise ValueError("tau must be positive when given")
        if not (self.lambda_init >= 0):
            raise ValueError("lambda_init must be nonnegative")


@dataclass
class SinkhornState:
    """Iterate of the alternating-scaling loop (plain-domain view)."""

    phi: np.ndarray
    psi: np.ndarray
    lam: float
    iter: int = 0
    residuals: tuple | None = None


@dataclass
class TraceRow:
    iter: int
    r_phi: float
    r_psi: float
    r_lambda: float
    dual_objective: float
    lm_rate_nats: float
    lam: float


@dataclass
class SolveReport:
    solution: Coupling
    lm_rate_nats: float
    lambda_final: float
    iterations: int
    residual_trace: list
    status: SolveStatus
    dual_objective: float
    dual_objective_init: float
    tau: float | None
    strategy: str
    lambda_init: float = 1.0
    failed_iteration: int | None = None
    failure_reason: str | None = None

    @property
    def converged(self) -> bool:
        return self.status is SolveStatus.CONVERGED


def _resolve_strategy(cfg: SolverConfig, p: DiscreteProblem) -> LambdaStrategy:
    if cfg.lambda_strategy is not LambdaStrategy.AUTO:
        return cfg.lambda_strategy
    return LambdaStrategy.ROOT if p.rootfind_safe else LambdaStrategy.PROJECT


def _update_rows(lpsi, lam, d, log_px, log_domain):
    # jump straight to the shifted reduction once the kernel exponents can
    # underflow; otherwise try the plain sum and fall back on failure
    prefer_lse = log_domain and lam * _max_metric(d) >= -_LSE_EXPONENT
    if not prefer_lse:
        lphi, ok = _kernels.scale_rows(lpsi, lam, d, log_px)
        if ok:
            return lphi
        if not log_domain:
            raise NumericalFailureError("row scaling denominator underflowed")
    return _kernels.scale_rows_lse(lpsi, lam, d, log_px)


def _update_cols(lphi, lam, d, log_py, log_domain):
    prefer_lse = log_domain and lam * _max_metric(d) >= -_LSE_EXPONENT
    if not prefer_lse:
        lpsi, ok = _kernels.scale_cols(lphi, lam, d, log_py)
        if ok:
            return lpsi
        if not log_domain:
            raise NumericalFailureError("column scaling denominator underflowed")
    return _kernels.scale_cols_lse(lphi, lam, d, log_py)


_METRIC_MAX_CACHE: dict = {}


def _max_metric(d: np.ndarray) -> float:
    key = id(d)
    hit = _METRIC_MAX_CACHE.get(key)
    if hit is not None and hit[0] is d:
        return hit[1]
    value = float(d.max()) if d.size else 0.0
    if len(_METRIC_MAX_CACHE) > 64:
        _METRIC_MAX_CACHE.clear()
    _METRIC_MAX_CACHE[key] = (d, value)
    return value


def multiplier_excess(lphi, lpsi, lam, d, t) -> float:
    """excess(lam) = sum_ij d_ij q_ij(lam) - t at fixed scalings."""
    s1, _ = _kernels.metric_moments(lphi, lpsi, lam, d)
    return s1 - t


def solve_multiplier_root(lphi, lpsi, d, t, lam_hint: float = 1.0) -> float:
    """Unique nonnegative root of the excess, or 0 when excess(0) <= 0.

    Bracketing by doubling from lam_hint, then bisection with guarded
    Newton steps (the excess derivative is -sum d^2 q, available in the
    same sweep).  Tolerance |excess| <= ROOT_RTOL * t.
    """
    s1, _ = _kernels.metric_moments(lphi, lpsi, 0.0, d)
    f_lo = s1 - t
    if f_lo <= 0.0:
        return 0.0
    f_tol = ROOT_RTOL * abs(t)
    lo = 0.0
    hi = max(1.0, 2.0 * lam_hint)
    while True:
        s1, _ = _kernels.metric_moments(lphi, lpsi, hi, d)
        f_hi = s1 - t
        if f_hi <= 0.0:
            break
        lo, f_lo = hi, f_hi
        hi *= 2.0
        if hi > _ROOT_LAMBDA_CAP:
            raise NumericalFailureError(
                f"no multiplier bracket below {_ROOT_LAMBDA_CAP:g}; "
                "threshold t may be inconsistent with the metric")
    x = 0.5 * (lo + hi)
    for _ in range(200):
        s1, s2 = _kernels.metric_moments(lphi, lpsi, x, d)
        fx = s1 - t
        if abs(fx) <= f_tol:
            return x
        if fx > 0.0:
            lo = x
        else:
            hi = x
        if s2 > 0.0:
            x_newton = x + fx / s2   # Newton step, derivative is -s2
            if lo < x_newton < hi:
                x = x_newton
                continue
        x = 0.5 * (lo + hi)
        if hi - lo <= 1e-18 * max(1.0, hi):
            break
    s1, _ = _kernels.metric_moments(lphi, lpsi, x, d)
    if abs(s1 - t) <= f_tol:
        return x
    raise NumericalFailureError("multiplier root solve stalled before tolerance")


def _dual_value(lphi, lpsi, lam, p, mass) -> float:
    # g = mass + <alpha, p_x> + <beta, p_y> + lam*t with alpha = -lphi - 1/2
    return mass - float(np.dot(p.p_x, lphi)) - float(np.dot(p.p_y, lpsi)) - 1.0 + lam * p.t


def _log_state(state: SinkhornState):
    phi = np.asarray(state.phi, dtype=np.float64)
    psi = np.asarray(state.psi, dtype=np.float64)
    if np.any(phi <= 0) or np.any(psi <= 0):
        raise ValueError("state scalings must be strictly positive")
    return np.log(phi), np.log(psi)


def sinkhorn_step(state: SinkhornState, p: DiscreteProblem,
                  log_domain: bool = True) -> SinkhornState:
    """One full row-then-column rescale at fixed multiplier."""
    lphi, lpsi = _log_state(state)
    log_px = np.log(p.p_x)
    log_py = np.log(p.p_y)
    lphi = _update_rows(lpsi, state.lam, p.d, log_px, log_domain)
    lpsi = _update_cols(lphi, state.lam, p.d, log_py, log_domain)
    return SinkhornState(phi=np.exp(lphi), psi=np.exp(lpsi), lam=state.lam,
                         iter=state.iter + 1)


def update_lambda_projection(state: SinkhornState, p: DiscreteProblem,
                             tau: float) -> SinkhornState:
    """Projected multiplier step lam <- max(0, lam + tau * excess)."""
    lphi, lpsi = _log_state(state)
    excess = multiplier_excess(lphi, lpsi, state.lam, p.d, p.t)
    lam = max(0.0, state.lam + tau * excess)
    return SinkhornState(phi=state.phi, psi=state.psi, lam=lam, iter=state.iter)


def update_lambda_rootfind(state: SinkhornState, p: DiscreteProblem) -> SinkhornState:
    """Multiplier jump to the root of the excess at the current scalings."""
    lphi, lpsi = _log_state(state)
    lam = solve_multiplier_root(lphi, lpsi, p.d, p.t, lam_hint=max(state.lam, 1.0))
    return SinkhornState(phi=state.phi, psi=state.psi, lam=lam, iter=state.iter)


def residuals(state: SinkhornState, p: DiscreteProblem) -> tuple:
    """(r_phi, r_psi, r_lambda) at the current state."""
    lphi, lpsi = _log_state(state)
    row, col, _, metric_mass, _ = _kernels.coupling_stats(lphi, lpsi, state.lam, p.d)
    r_phi = float(np.abs(row - p.p_x).sum())
    r_psi = float(np.abs(col - p.p_y).sum())
    excess = metric_mass - p.t
    r_lambda = 0.0 if (state.lam == 0.0 and excess < 0.0) else abs(excess)
    return r_phi, r_psi, r_lambda


def _balance_gauge(lphi, lpsi):
    # shift along the scaling gauge so the dual shifts alpha/beta balance:
    # sum(alpha) == sum(beta) with alpha = -lphi - 1/2, beta = -lpsi - 1/2
    m = lphi.shape[0]
    n = lpsi.shape[0]
    s = (lpsi.sum() - lphi.sum() + 0.5 * (n - m)) / (m + n)
    return lphi + s, lpsi - s


def solve(p: DiscreteProblem, cfg: SolverConfig | None = None) -> SolveReport:
    """Run the alternating-scaling loop until all residuals fall below tol.

    Returns a SolveReport whose residual_trace has exactly one row per
    completed iteration; the trace carries the dual objective and the
    multiplier so convergence certificates can be built from it.
    """
    cfg = cfg if cfg is not None else SolverConfig()
    strategy = _resolve_strategy(cfg, p)
    m_d = _max_metric(p.d)
    tau = cfg.tau if cfg.tau is not None else (1.0 / (m_d * m_d) if m_d > 0 else 1.0)

    log_px = np.log(p.p_x)
    log_py = np.log(p.p_y)
    h_x = shannon_entropy(p.p_x)
    h_y = shannon_entropy(p.p_y)
    lphi = np.zeros(p.m)
    lpsi = np.zeros(p.n)
    lam = float(cfg.lambda_init)

    _, _, mass, _, _ = _kernels.coupling_stats(lphi, lpsi, lam, p.d)
    g_init = _dual_value(lphi, lpsi, lam, p, mass)

    trace: list = []
    status = SolveStatus.MAX_ITERS
    failed_iteration = None
    failure_reason = None

    for it in range(1, cfg.max_iters + 1):
        try:
            lphi = _update_rows(lpsi, lam, p.d, log_px, cfg.log_domain)
            lpsi = _update_cols(lphi, lam, p.d, log_py, cfg.log_domain)
            if strategy is LambdaStrategy.ROOT:
                lam = solve_multiplier_root(lphi, lpsi, p.d, p.t,
                                            lam_hint=max(lam, 1.0))
            else:
                excess_now = multiplier_excess(lphi, lpsi, lam, p.d, p.t)
                lam = max(0.0, lam + tau * excess_now)
        except NumericalFailureError as err:
            status = SolveStatus.NUMERICAL_FAILURE
            failed_iteration = it
            failure_reason = str(err)
            break

        row, col, mass, metric_mass, neg_entropy = _kernels.coupling_stats(
            lphi, lpsi, lam, p.d)
        if not (math.isfinite(mass) and math.isfinite(neg_entropy)):
            status = SolveStatus.NUMERICAL_FAILURE
            failed_iteration = it
            failure_reason = "coupling evaluation became non-finite"
            break
        r_phi = float(np.abs(row - p.p_x).sum())
        r_psi = float(np.abs(col - p.p_y).sum())
        excess = metric_mass - p.t
        r_lambda = 0.0 if (lam == 0.0 and excess < 0.0) else abs(excess)
        g = _dual_value(lphi, lpsi, lam, p, mass)
        lm = neg_entropy + h_x + h_y
        trace.append(TraceRow(iter=it, r_phi=r_phi, r_psi=r_psi, r_lambda=r_lambda,
                              dual_objective=g, lm_rate_nats=lm, lam=lam))
        if max(r_phi, r_psi, r_lambda) <= cfg.tol:
            status = SolveStatus.CONVERGED
            break

    lphi_b, lpsi_b = _balance_gauge(lphi, lpsi)
    solution = Coupling(lphi_b, lpsi_b, lam, p.d)
    if trace:
        lm_final = trace[-1].lm_rate_nats
        g_final = trace[-1].dual_objective
    else:
        _, _, mass, _, neg_entropy = _kernels.coupling_stats(lphi, lpsi, lam, p.d)
        lm_final = neg_entropy + h_x + h_y
        g_final = _dual_value(lphi, lpsi, lam, p, mass)
    return SolveReport(
        solution=solution,
        lm_rate_nats=lm_final,
        lambda_final=lam,
        iterations=len(trace),
        residual_trace=trace,
        status=status,
        dual_objective=g_final,
        dual_objective_init=g_init,
        tau=tau if strategy is LambdaStrategy.PROJECT else cfg.tau,
        strategy=strategy.value,
        lambda_init=float(cfg.lambda_init),
        failed_iteration=failed_iteration,
        failure_reason=failure_reason,
    )
