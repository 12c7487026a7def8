"""Two-dimensional Gaussian channel with linear distortion, and its discretization.

The channel is Y = H X + Z with H = diag(eta1, eta2) @ R(theta) (R a
rotation) and Z isotropic Gaussian noise of per-component variance
sigma2.  The decoder scores candidates with the quadratic metric
d(x, y) = ||y - h_hat x||^2; h_hat defaults to the identity (a decoder
that ignores the distortion).

Discretization evaluates the transition density on a uniform square grid
over [-half_width, half_width]^2 and renormalizes each row, giving a
finite-alphabet problem whose couplings are directly comparable with the
analytic threshold.  Grid nodes and all derived tables are kept exactly
centrally symmetric (bit-for-bit) whenever the constellation is, because
the symmetry arguments used by the solver's multiplier root-finding and
by the scaling-kernel rank checks hold exactly, not approximately.
"""

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateGridError, UnsupportedConfigurationError

_IDENTITY = np.eye(2)


@dataclass(frozen=True)
class ChannelSpec:
    """Channel parameters.  eta1/eta2 are the axis gains, theta the rotation
    angle in radians, sigma2 the per-component noise variance."""

    eta1: float
    eta2: float
    theta: float
    sigma2: float
    h_hat: np.ndarray = field(default_factory=lambda: _IDENTITY.copy())

    def __post_init__(self):
        object.__setattr__(self, "h_hat", np.ascontiguousarray(self.h_hat, dtype=np.float64))
        if self.h_hat.shape != (2, 2):
            raise ValueError("h_hat must be a 2x2 matrix")
        for name in ("eta1", "eta2", "sigma2"):
            v = getattr(self, name)
            if not (v > 0.0) or not math.isfinite(v):
                raise ValueError(f"{name} must be a positive finite number, got {v!r}")

    @property
    def h(self) -> np.ndarray:
        """Distortion matrix diag(eta1, eta2) @ [[cos, sin], [-sin, cos]]."""
        c, s = math.cos(self.theta), math.sin(self.theta)
        return np.array([[self.eta1 * c, self.eta1 * s], [-self.eta2 * s, self.eta2 * c]])

    def matched_decoder(self) -> bool:
        return bool(np.array_equal(self.h_hat, _IDENTITY))


def build_channel(eta1: float, eta2: float, theta: float, snr_db: float,
                  h_hat=None) -> ChannelSpec:
    """Assemble a ChannelSpec from the SNR convention snr = 1 / (2*sigma2).

    sigma2 = 10**(-snr_db/10) / 2, so snr_db = 0 gives sigma2 = 1/2.
    """
    sigma2 = 10.0 ** (-snr_db / 10.0) / 2.0
    kwargs = {} if h_hat is None else {"h_hat": np.asarray(h_hat, dtype=np.float64)}
    return ChannelSpec(eta1=eta1, eta2=eta2, theta=theta, sigma2=sigma2, **kwargs)


@dataclass(frozen=True)
class OutputGrid:
    """Uniform square grid of channel-output nodes (after optional pruning).

    points: (N, 2) node coordinates.
    delta: node spacing 2*half_width / (n_side - 1).
    pruned: original node indexes removed by the probability floor.
    """

    points: np.ndarray
    delta: float
    half_width: float
    n_side: int
    pruned: np.ndarray


@dataclass
class DiscreteProblem:
    """Finite-alphabet instance consumed by the solvers.

    d: (M, N) decoding metric, d[i][j] = ||y_j - h_hat x_i||^2 for
       channel-built instances; any nonnegative matrix for custom ones.
    p_x: input prior (M,).
    p_y: output marginal (N,), strictly positive.
    w: row-stochastic transition matrix (M, N).
    t: capacity-constraint threshold, sum_ij p_x[i] w[i][j] d[i][j] for
       channel-built instances.
    neg_x / neg_y: index involutions realizing point negation, or None
       when the instance carries no symmetry.
    rootfind_safe: True when the multiplier equation is guaranteed to have
       a unique nonnegative root (symmetric constellation, matched decoder,
       positive-definite quadratic form of H), enabling the root-find
       multiplier update as the default.
    """

    d: np.ndarray
    p_x: np.ndarray
    p_y: np.ndarray
    w: np.ndarray
    t: float
    neg_x: np.ndarray | None = None
    neg_y: np.ndarray | None = None
    rootfind_safe: bool = False

    def __post_init__(self):
        self.d = np.ascontiguousarray(self.d, dtype=np.float64)
        self.p_x = np.ascontiguousarray(self.p_x, dtype=np.float64)
        self.p_y = np.ascontiguousarray(self.p_y, dtype=np.float64)
        self.w = np.ascontiguousarray(self.w, dtype=np.float64)
        if self.d.shape != self.w.shape:
            raise ValueError("d and w must have the same shape")
        if self.p_x.shape != (self.d.shape[0],) or self.p_y.shape != (self.d.shape[1],):
            raise ValueError("marginal lengths must match the metric shape")

    @property
    def m(self) -> int:
        return self.d.shape[0]

    @property
    def n(self) -> int:
        return self.d.shape[1]

    def with_threshold(self, t: float) -> "DiscreteProblem":
        """Copy with an overridden constraint threshold.

        The copy intentionally drops the t-consistency tie to (p_x, w, d);
        it exists for constraint-slackness experiments (e.g. inflating t
        above max(d) to force the zero-multiplier optimum).
        """
        return DiscreteProblem(self.d, self.p_x, self.p_y, self.w, float(t),
                               self.neg_x, self.neg_y, self.rootfind_safe)

    def validate(self) -> list:
        """Contract check mirroring validate_constellation: returns violations."""
        issues = []
        if np.any(self.d < 0):
            issues.append("metric has negative entries")
        row_sums = self.w.sum(axis=1)
        worst = float(np.abs(row_sums - 1.0).max()) if row_sums.size else 0.0
        if worst > 1e-12:
            issues.append(f"w rows deviate from stochasticity by {worst:.3e} (> 1e-12)")
        if np.any(self.p_y <= 0):
            issues.append("p_y has non-positive entries (pruning incomplete)")
        if np.any(self.p_x <= 0):
            issues.append("p_x has non-positive entries")
        marg = self.p_x @ self.w
        gap = float(np.abs(marg - self.p_y).max())
        if gap > 1e-12:
            issues.append(f"p_y deviates from the marginalization of p_x @ w by {gap:.3e}")
        t_ref = float(np.sum(self.p_x[:, None] * self.w * self.d))
        if t_ref != self.t:
            issues.append(f"t = {self.t!r} differs from the recomputed value {t_ref!r}")
        if self.neg_x is not None and self.neg_y is not None:
            sym = self.d[np.ix_(self.neg_x, self.neg_y)]
            if not np.array_equal(sym, self.d):
                issues.append("metric is not exactly centrally symmetric")
            sym_w = self.w[np.ix_(self.neg_x, self.neg_y)]
            if not np.array_equal(sym_w, self.w):
                issues.append("transition matrix is not exactly centrally symmetric")
        return issues

    def to_json(self) -> str:
        payload = {
            "d": self.d.tolist(),
            "p_x": self.p_x.tolist(),
            "p_y": self.p_y.tolist(),
            "w": self.w.tolist(),
            "t": self.t,
            "neg_x": None if self.neg_x is None else self.neg_x.tolist(),
            "neg_y": None if self.neg_y is None else self.neg_y.tolist(),
            "rootfind_safe": self.rootfind_safe,
        }
        return json.dumps(payload)

    @classmethod
    def from_json(cls, text: str) -> "DiscreteProblem":
        data = json.loads(text)
        neg_x = None if data["neg_x"] is None else np.asarray(data["neg_x"], dtype=np.int64)
        neg_y = None if data["neg_y"] is None else np.asarray(data["neg_y"], dtype=np.int64)
        return cls(np.asarray(data["d"]), np.asarray(data["p_x"]), np.asarray(data["p_y"]),
                   np.asarray(data["w"]), float(data["t"]), neg_x, neg_y,
                   bool(data.get("rootfind_safe", False)))


def _symmetric_axis(n_side: int, half_width: float) -> np.ndarray:
    """Uniform coordinates on [-hw, hw] with coords[n-1-k] == -coords[k] exactly."""
    delta = 2.0 * half_width / (n_side - 1)
    coords = np.empty(n_side)
    for k in range(n_side // 2):
        v = -half_width + k * delta
        coords[k] = v
        coords[n_side - 1 - k] = -v
    if n_side % 2:
        coords[n_side // 2] = 0.0
    return coords


def quadratic_form_positive(channel: ChannelSpec) -> bool:
    """True when x . (H x) > 0 for all x != 0 (symmetric part of H is PD)."""
    h = channel.h
    sym = 0.5 * (h + h.T)
    return bool(np.linalg.eigvalsh(sym).min() > 0.0)


def discretize(channel: ChannelSpec, c, n_side: int, prob_floor: float = 1e-100,
               half_width: float = 8.0, allow_asymmetric: bool = False):
    """Discretize the channel output onto an n_side x n_side grid.

    Rows of the transition matrix are the Gaussian density evaluated at the
    nodes and renormalized to sum to one.  Nodes whose output marginal
    falls below prob_floor are pruned (always in negation-closed pairs for
    symmetric constellations) and the remaining tables renormalized.

    Args:
        channel: ChannelSpec.
        c: Constellation.
        n_side: nodes per axis, >= 2.
        prob_floor: pruning threshold on the output marginal, >= 0.
        half_width: grid extent.
        allow_asymmetric: permit constellations that are not closed under
            negation.  Such instances lose the exact-symmetry guarantees
            and the root-find default (rootfind_safe is forced False).

    Returns:
        (OutputGrid, DiscreteProblem)
    """
    if n_side < 2:
        raise ValueError("n_side must be at least 2")
    if not (prob_floor >= 0.0):
        raise ValueError("prob_floor must be nonnegative")
    neg_x = c.negation_index()
    symmetric = neg_x is not None and bool(np.all(c.probs[neg_x] == c.probs))
    if not symmetric and not allow_asymmetric:
        raise UnsupportedConfigurationError(
            "constellation is not centrally symmetric; pass allow_asymmetric=True "
            "to discretize anyway (disables the symmetry-based guarantees)")

    coords = _symmetric_axis(n_side, float(half_width))
    delta = 2.0 * float(half_width) / (n_side - 1)
    n_full = n_side * n_side
    points = np.column_stack([np.repeat(coords, n_side), np.tile(coords, n_side)])

    x = c.points
    images = x @ channel.h.T          # H x_i, exact negation pairs when x has them
    scores = x @ channel.h_hat.T      # h_hat x_i for the decoding metric

    diff = points[None, :, :] - images[:, None, :]
    dens = np.exp(-(diff * diff).sum(axis=2) / (2.0 * channel.sigma2))
    diff = points[None, :, :] - scores[:, None, :]
    d = (diff * diff).sum(axis=2)

    def _mirror_rows(vec):
        # copy the representative value onto its negation partner so that
        # row scalings are bitwise symmetric, not merely equal to rounding
        if not symmetric:
            return vec
        out = vec.copy()
        for i in range(out.shape[0]):
            ni = int(neg_x[i])
            if ni < i:
                out[i] = out[ni]
        return out

    def _mirror_cols(vec):
        if not symmetric:
            return vec
        out = vec.copy()
        k = out.shape[0]
        half = k // 2
        out[k - half:] = out[:half][::-1]
        return out

    row_mass = _mirror_rows(dens.sum(axis=1))
    if np.any(row_mass <= 0.0):
        raise DegenerateGridError(
            "transition density underflows on an entire grid row; "
            "refine the grid or lower the SNR")
    w = dens / row_mass[:, None]
    p_y = _mirror_cols(c.probs @ w)

    keep = p_y >= prob_floor
    if not keep.any():
        raise DegenerateGridError(
            f"all {n_full} grid nodes fall below prob_floor={prob_floor!r}")
    pruned = np.nonzero(~keep)[0]
    if symmetric and not np.array_equal(keep, keep[::-1]):
        raise RuntimeError("internal error: pruning set is not negation-closed")
    if pruned.size:
        w = np.ascontiguousarray(w[:, keep])
        d = np.ascontiguousarray(d[:, keep])
        points = points[keep]
        row_mass = _mirror_rows(w.sum(axis=1))
        w = w / row_mass[:, None]
        p_y = _mirror_cols(c.probs @ w)

    t = float(np.sum(c.probs[:, None] * w * d))
    n_kept = points.shape[0]
    neg_y = np.arange(n_kept - 1, -1, -1, dtype=np.int64) if symmetric else None
    safe = symmetric and channel.matched_decoder() and quadratic_form_positive(channel)
    grid = OutputGrid(points=points, delta=delta, half_width=float(half_width),
                      n_side=n_side, pruned=pruned)
    problem = DiscreteProblem(d=d, p_x=c.probs.copy(), p_y=p_y, w=w, t=t,
                              neg_x=neg_x if symmetric else None, neg_y=neg_y,
                              rootfind_safe=safe)
    return grid, problem


def analytic_threshold(channel: ChannelSpec, c) -> float:
    """Closed-form constraint threshold for the matched decoder.

    E||Y - X||^2 = E||Z||^2 + sum_i p_i ||H x_i - x_i||^2 with
    E||Z||^2 = 2*sigma2.  Only valid when h_hat is the identity.
    """
    if not channel.matched_decoder():
        raise UnsupportedConfigurationError(
            "analytic threshold requires the matched decoder (h_hat = identity)")
    shift = c.points @ channel.h.T - c.points
    return 2.0 * channel.sigma2 + float(np.dot(c.probs, (shift * shift).sum(axis=1)))
