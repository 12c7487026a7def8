"""Factored couplings and the rate objective.

A coupling is kept in scaled-exponential form

    q_ij = exp(log_phi_i + log_psi_j - lam * d_ij)

and is never materialized by the evaluation routines; reductions stream
over the metric via the kernels module.  The rate objective in nats is

    lm_rate = sum_ij q_ij log q_ij + H(p_x) + H(p_y)

which equals the KL divergence of the coupling from the product of its
target marginals when the coupling is feasible.
"""

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import EvaluationError, UnsupportedConfigurationError

# largest coupling that dense() will expand
DENSE_CAP = 10**7


@dataclass
class Coupling:
    """Scaled-exponential coupling over an M x N metric.

    log_phi / log_psi are the logs of the positive row/column scalings;
    lam is the nonnegative capacity multiplier; d is a reference to the
    metric matrix (not copied).
    """

    log_phi: np.ndarray
    log_psi: np.ndarray
    lam: float
    d: np.ndarray

    def __post_init__(self):
        self.log_phi = np.ascontiguousarray(self.log_phi, dtype=np.float64)
        self.log_psi = np.ascontiguousarray(self.log_psi, dtype=np.float64)
        if self.log_phi.shape != (self.d.shape[0],) or self.log_psi.shape != (self.d.shape[1],):
            raise ValueError("scaling lengths must match the metric shape")
        if not (np.all(np.isfinite(self.log_phi)) and np.all(np.isfinite(self.log_psi))):
            raise EvaluationError("scaling factors must be finite and positive")
        if not (self.lam >= 0.0 and np.isfinite(self.lam)):
            raise ValueError(f"lam must be finite and nonnegative, got {self.lam!r}")

    @classmethod
    def from_scaling(cls, phi, psi, lam, d) -> "Coupling":
        phi = np.asarray(phi, dtype=np.float64)
        psi = np.asarray(psi, dtype=np.float64)
        if np.any(phi <= 0) or np.any(psi <= 0):
            raise EvaluationError("scaling factors must be strictly positive")
        return cls(np.log(phi), np.log(psi), float(lam), d)

    @property
    def phi(self) -> np.ndarray:
        return np.exp(self.log_phi)

    @property
    def psi(self) -> np.ndarray:
        return np.exp(self.log_psi)

    def stats(self):
        """(row_marginal, col_marginal, mass, metric_mass, neg_entropy)."""
        return _kernels.coupling_stats(self.log_phi, self.log_psi, self.lam, self.d)

    def marginals(self):
        row, col, _, _, _ = self.stats()
        return row, col

    def dense(self, max_entries: int = DENSE_CAP) -> np.ndarray:
        """Materialize q as an (M, N) array; refuses above max_entries."""
        if self.d.size > max_entries:
            raise UnsupportedConfigurationError(
                f"coupling has {self.d.size} entries, above the dense cap {max_entries}")
        return np.exp(self.log_phi[:, None] + self.log_psi[None, :] - self.lam * self.d)


def shannon_entropy(p: np.ndarray) -> float:
    """H(p) = -sum p log p in nats; requires strictly positive entries."""
    p = np.asarray(p, dtype=np.float64)
    if np.any(p <= 0):
        raise EvaluationError("entropy requires strictly positive probabilities")
    return float(-np.dot(p, np.log(p)))


def primal_entropy(q: Coupling) -> float:
    """sum_ij q_ij log q_ij, streamed; underflowed entries contribute 0."""
    _, _, _, _, neg_entropy = q.stats()
    if not np.isfinite(neg_entropy):
        raise EvaluationError("coupling evaluation overflowed")
    return neg_entropy


def lm_rate(q: Coupling, p, feasibility_tol: float | None = None) -> float:
    """Rate value (nats) of a coupling against problem p.

    With feasibility_tol set, first verifies that both L1 marginal gaps
    are below it and raises EvaluationError otherwise.
    """
    row, col, _, _, neg_entropy = q.stats()
    if feasibility_tol is not None:
        gap_row = float(np.abs(row - p.p_x).sum())
        gap_col = float(np.abs(col - p.p_y).sum())
        if max(gap_row, gap_col) > feasibility_tol:
            raise EvaluationError(
                f"coupling infeasible: marginal gaps ({gap_row:.3e}, {gap_col:.3e}) "
                f"exceed {feasibility_tol:.3e}")
    if not np.isfinite(neg_entropy):
        raise EvaluationError("coupling evaluation overflowed")
    return neg_entropy + shannon_entropy(p.p_x) + shannon_entropy(p.p_y)


def constraint_gap(q: Coupling, p) -> float:
    """Slack t - sum_ij d_ij q_ij; nonnegative iff the constraint holds."""
    _, _, _, metric_mass, _ = q.stats()
    if not np.isfinite(metric_mass):
        raise EvaluationError("coupling evaluation overflowed")
    return p.t - metric_mass


def product_coupling(p) -> Coupling:
    """The independent coupling p_x (x) p_y, the lam = 0 entropy minimizer."""
    return Coupling(np.log(p.p_x), np.log(p.p_y), 0.0, p.d)
