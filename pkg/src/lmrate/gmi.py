"""Generalized mutual information baseline.

Restricting the per-input shifts of the mismatched-decoding dual to zero
leaves a concave scalar function of the tilt s,

    gmi(s) = sum_ij p_x_i w_ij log( exp(-s*d_ij) / sum_k p_x_k exp(-s*d_kj) ),

whose maximum is the GMI.  It never exceeds the full rate, with equality
exactly when the shifts are redundant, so it doubles as a cheap sanity
bound on the solver output.
"""

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .channel import DiscreteProblem
from .errors import BracketError

_INV_PHI = (np.sqrt(5.0) - 1.0) / 2.0


@dataclass
class GmiResult:
    value_nats: float
    s_star: float
    evaluations: int


def gmi(p: DiscreteProblem, s_max: float = 50.0, interval_tol: float = 1e-10,
        max_growth: int = 6) -> GmiResult:
    """Maximize the tilt by golden-section search on [0, s_max].

    The search interval doubles (up to max_growth times) whenever the
    maximizer is pinned at the right edge; BracketError if it stays
    pinned, since the returned value would then undershoot the true GMI.
    """
    if s_max <= 0.0 or interval_tol <= 0.0:
        raise ValueError("s_max and interval_tol must be positive")
    w_t = np.ascontiguousarray((p.p_x[:, None] * p.w).T)
    d_t = np.ascontiguousarray(p.d.T)
    log_px = np.log(p.p_x)
    shifts = np.zeros(p.m)
    evaluations = 0

    def f(s):
        nonlocal evaluations
        evaluations += 1
        return _kernels.mismatch_dual_value(w_t, shifts, log_px, s, d_t)

    lo, cap = 0.0, float(s_max)
    for _ in range(max_growth + 1):
        hi = cap
        x1 = hi - _INV_PHI * (hi - lo)
        x2 = lo + _INV_PHI * (hi - lo)
        f1 = f(x1)
        f2 = f(x2)
        while hi - lo > interval_tol:
            if f1 < f2:
                lo, x1, f1 = x1, x2, f2
                x2 = lo + _INV_PHI * (hi - lo)
                f2 = f(x2)
            else:
                hi, x2, f2 = x2, x1, f1
                x1 = hi - _INV_PHI * (hi - lo)
                f1 = f(x1)
        if hi < cap:  # right edge moved, so the maximizer is interior
            if f1 >= f2:
                return GmiResult(value_nats=f1, s_star=x1, evaluations=evaluations)
            return GmiResult(value_nats=f2, s_star=x2, evaluations=evaluations)
        cap *= 2.0
    raise BracketError(
        f"tilt maximizer still pinned at {cap / 2.0:g} after {max_growth} doublings")
