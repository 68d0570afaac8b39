"""
States of the product space H x R in dual form.

A non-empty state S stands for

    (h_S, d_S) = sum_i w_i * y_i * (mu_i * phi(s_i), 1)

a convex combination (w_i >= 0, sum w_i = 1) of augmented labeled support
points. Everything the LP and search algorithms need reduces to Gram
lookups: margins, the inner product with a point, the projection of the
origin onto a segment and the squared norm, which is cached and updated in
closed form.

The halfspace of a state is H_S = {z : <z, h_S> + d_S >= 0}.
"""

from __future__ import annotations

import logging
import math
import os
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from errors import ContractViolation, InputError
from kernel_core import GramMatrix

log = logging.getLogger(__name__)

PRUNE_BELOW = 1e-15
DEGENERATE_SEGMENT = 1e-18
NORM_RTOL = 1e-7
NORM_ATOL = 1e-12
VERIFY_NORMS = os.environ.get('POLYSEP_VERIFY_NORMS') == '1'


@dataclass(frozen=True)
class LabeledPoint:
    encoding: np.ndarray
    label: int
    index: int

    def __post_init__(self):
        if self.label not in (-1, 1):
            raise InputError(f"Label of point {self.index} must be -1 or +1, got {self.label}")


@dataclass(frozen=True)
class SampleGeometry:
    """
    Gram data a state is evaluated against.

    support_gram[i, j] = K(s_i, s_j) between the points states are built from,
    query_gram[p, i]   = K(q_p, s_i) between constraint points and support points,
    scales[i]          = mu_i, the ball-projection factor of support point i.

    In the exact variant support and query points coincide and mu = 1.
    """

    labels: np.ndarray
    support_gram: np.ndarray
    query_gram: np.ndarray
    scales: np.ndarray
    support_points: np.ndarray

    @classmethod
    def exact(cls, gram_matrix: GramMatrix, labels, points) -> SampleGeometry:
        labels = np.asarray(labels, dtype=float)
        entries = gram_matrix.entries
        return cls(labels=labels, support_gram=entries, query_gram=entries,
                   scales=np.ones(len(labels)), support_points=np.asarray(points, dtype=float))

    @property
    def size(self) -> int:
        return len(self.labels)

    def augmented_sq_norm(self, p: int) -> float:
        """||y_p (mu_p s_p, 1)||^2 = mu_p^2 K(s_p, s_p) + 1."""
        return float(self.scales[p] ** 2 * self.support_gram[p, p] + 1.0)


@dataclass(frozen=True)
class DualState:
    """
    Convex weights over support indices; an empty mapping is the empty state.
    Instances are never mutated, every operation returns a new state.
    """

    weights: dict = field(default_factory=dict)
    scales: dict = field(default_factory=dict)
    norm_sq: float = 0.0

    @classmethod
    def empty(cls) -> DualState:
        return cls()

    @classmethod
    def point(cls, geometry: SampleGeometry, p: int) -> DualState:
        """The state y_p (mu_p s_p, 1), used to initialize the LP from the empty state."""
        p = int(p)
        return cls({p: 1.0}, {p: float(geometry.scales[p])}, geometry.augmented_sq_norm(p))

    @property
    def is_empty(self) -> bool:
        return not self.weights

    @cached_property
    def arrays(self):
        idx = np.array(sorted(self.weights), dtype=int)
        w = np.array([self.weights[i] for i in idx], dtype=float)
        mu = np.array([self.scales.get(i, 1.0) for i in idx], dtype=float)
        return idx, w, mu

    def coefficients(self, geometry: SampleGeometry):
        """(support indices, w_i y_i mu_i, sum_i w_i y_i) -- the dual form of (h, d)."""
        idx, w, mu = self.arrays
        wy = w * geometry.labels[idx]
        return idx, wy * mu, float(wy.sum())

    def to_json(self) -> dict:
        return {
            'weights': [[int(i), float(self.weights[i])] for i in sorted(self.weights)],
            'scales': [[int(i), float(self.scales.get(i, 1.0))] for i in sorted(self.weights)],
            'norm_sq': float(self.norm_sq),
        }

    @classmethod
    def from_json(cls, data: dict) -> DualState:
        try:
            weights = {int(i): float(w) for i, w in data['weights']}
            scales = {int(i): float(m) for i, m in data.get('scales', [])}
            return cls(weights, scales, float(data['norm_sq']))
        except (KeyError, TypeError, ValueError) as e:
            raise InputError(f"Malformed state record: {e}") from None


def _require_nonempty(state: DualState, what: str):
    if state.is_empty:
        raise ContractViolation(f"{what} is undefined for the empty state")


def margin_values(state: DualState, geometry: SampleGeometry, indices) -> np.ndarray:
    """y_p (<q_p, h_S> + d_S) for every constraint point p in `indices`."""
    _require_nonempty(state, "margin_value")
    indices = np.asarray(indices, dtype=int)
    idx, coef, offset = state.coefficients(geometry)
    raw = geometry.query_gram[np.ix_(indices, idx)] @ coef + offset
    return geometry.labels[indices] * raw


def margin_value(state: DualState, geometry: SampleGeometry, p: int) -> float:
    """Positive iff the constraint of P(X) for point p holds strictly."""
    return float(margin_values(state, geometry, [p])[0])


def state_inner(state: DualState, geometry: SampleGeometry, p: int) -> float:
    """<(h_S, d_S), y_p (mu_p s_p, 1)>; equals margin_value when mu = 1 and support = query."""
    _require_nonempty(state, "state_inner")
    idx, coef, offset = state.coefficients(geometry)
    raw = geometry.scales[p] * float(geometry.support_gram[p, idx] @ coef) + offset
    return float(geometry.labels[p] * raw)


def augmented_inner(a: DualState, b: DualState, geometry: SampleGeometry) -> float:
    """<(h_a, d_a), (h_b, d_b)> = <h_a, h_b> + d_a d_b."""
    _require_nonempty(a, "augmented_inner")
    _require_nonempty(b, "augmented_inner")
    ia, ca, da = a.coefficients(geometry)
    ib, cb, db = b.coefficients(geometry)
    return float(ca @ geometry.support_gram[np.ix_(ia, ib)] @ cb + da * db)


def recompute_norm_sq(state: DualState, geometry: SampleGeometry) -> float:
    """Full Gram re-sum of ||(h_S, d_S)||^2."""
    if state.is_empty:
        return 0.0
    idx, coef, offset = state.coefficients(geometry)
    return float(coef @ geometry.support_gram[np.ix_(idx, idx)] @ coef + offset * offset)


def potential(state: DualState) -> float:
    """pi = ||(h, d)||^-2, 0 for the empty state."""
    if state.is_empty:
        return 0.0
    if state.norm_sq <= 0.0:
        return math.inf
    return 1.0 / state.norm_sq


def segment_coefficient(norm_sq: float, inner: float, end_sq: float):
    """
    alpha with alpha*a + (1-alpha)*b closest to the origin on [a, b], clamped to [0, 1],
    given ||a||^2, <a, b> and ||b||^2. None if the segment is degenerate.
    """
    length_sq = norm_sq - 2.0 * inner + end_sq
    if length_sq <= DEGENERATE_SEGMENT:
        return None
    alpha = (end_sq - inner) / length_sq
    return min(1.0, max(0.0, alpha))


def combine(state: DualState, geometry: SampleGeometry, p: int, alpha: float,
            inner: float | None = None, verify: bool = False) -> DualState:
    """alpha * state + (1 - alpha) * y_p (mu_p s_p, 1), norm updated in closed form."""
    p = int(p)
    if inner is None:
        inner = state_inner(state, geometry, p)
    end_sq = geometry.augmented_sq_norm(p)
    norm_sq = (alpha * alpha * state.norm_sq
               + 2.0 * alpha * (1.0 - alpha) * inner
               + (1.0 - alpha) ** 2 * end_sq)

    weights = {i: alpha * w for i, w in state.weights.items()}
    weights[p] = weights.get(p, 0.0) + (1.0 - alpha)
    weights = {i: w for i, w in weights.items() if w >= PRUNE_BELOW}
    total = sum(weights.values())
    weights = {i: w / total for i, w in weights.items()}
    scales = {i: state.scales.get(i, float(geometry.scales[i])) for i in weights}
    scales[p] = float(geometry.scales[p])

    new = DualState(weights, scales, max(norm_sq, 0.0))
    if verify or VERIFY_NORMS:
        _verify_norm(new, geometry)
    return new


def _verify_norm(state: DualState, geometry: SampleGeometry):
    exact = recompute_norm_sq(state, geometry)
    drift = abs(state.norm_sq - exact)
    if drift > NORM_RTOL * max(exact, state.norm_sq) + NORM_ATOL:
        raise ContractViolation(
            f"Cached squared norm {state.norm_sq!r} drifted from Gram re-sum {exact!r}")


def project_origin_to_segment(state: DualState, geometry: SampleGeometry, p: int,
                              verify: bool = False) -> tuple[DualState, float]:
    """
    Orthogonal projection of the origin onto [(h, d), y_p (x_p, 1)].

    Returns the new state and alpha, the weight kept on the old state. A
    degenerate segment returns the endpoint with the smaller norm (the old
    state on ties).
    """
    _require_nonempty(state, "project_origin_to_segment")
    inner = state_inner(state, geometry, p)
    end_sq = geometry.augmented_sq_norm(p)
    alpha = segment_coefficient(state.norm_sq, inner, end_sq)
    if alpha is None:
        alpha = 0.0 if end_sq < state.norm_sq else 1.0
        log.debug(f"Degenerate segment at point {p}, keeping endpoint alpha={alpha}")
    if alpha == 1.0:
        return state, 1.0
    return combine(state, geometry, p, alpha, inner=inner, verify=verify), alpha
