"""
Projection-based solver for the strict system

    P(X):  y(x) (<x, h> + d) > 0   for all x in X

in dual form, plus the lattice-rounded variant whose halfspaces come from
a finite class.

Exact solver: start from the given state (or the first point of X when
the state is empty), then repeatedly take the most violated constraint and
replace (h, d) by the point of [(h, d), y(x)(x, 1)] closest to the origin.
Stop with a feasible state, or report that X is not linearly
gamma-separable once ||(h, d)|| < gamma/2.

Rounded solver: every selected point w is replaced by the lattice point
w# = beta * round(w / beta) projected onto the unit ball, the projection
coefficient is rounded down to the beta grid, feasibility is still checked
against the original points, and the abort threshold is gamma/4.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from dual_geometry import (DualState, SampleGeometry, combine, margin_values,
                           potential, project_origin_to_segment, segment_coefficient,
                           state_inner)
from errors import InputError
from kernel_core import KernelSpec, cross_gram, gram, self_kernel

log = logging.getLogger(__name__)

ROUNDED_PROGRESS = 1.0 / 8.0


class LpStatus(Enum):
    FEASIBLE = 'feasible'
    NOT_GAMMA_SEPARABLE = 'not_gamma_separable'
    INTERNAL_OVERFLOW = 'internal_overflow'


@dataclass
class LpTelemetry:
    iterations: int = 0
    progress_steps: int = 0
    final_norm: float = 0.0
    outcome: str = ''
    fallback_steps: int = 0
    norms: list = field(default_factory=list)
    increments: list = field(default_factory=list)
    fallback_increments: list = field(default_factory=list)
    initialized: bool = False

    def to_json(self) -> dict:
        record = {
            'iterations': self.iterations,
            'progress_steps': self.progress_steps,
            'final_norm': self.final_norm,
            'outcome': self.outcome,
        }
        if self.fallback_steps:
            record['fallback_steps'] = self.fallback_steps
        return record


@dataclass
class LpOutcome:
    status: LpStatus
    state: DualState
    telemetry: LpTelemetry

    @property
    def feasible(self) -> bool:
        return self.status is LpStatus.FEASIBLE


@dataclass(frozen=True)
class DiscretizationConfig:
    gamma: float
    s: int
    lipschitz: float
    domain_scale: float = 1.0

    def __post_init__(self):
        _check_gamma(self.gamma)
        if self.s < 1:
            raise InputError(f"Dimension s must be >= 1, got {self.s}")
        if not self.lipschitz > 0:
            raise InputError(f"Lipschitz bound must be > 0, got {self.lipschitz}")
        if not self.domain_scale > 0:
            raise InputError(f"Domain scale must be > 0, got {self.domain_scale}")

    @property
    def beta(self) -> float:
        return discretization_step(self.gamma, self.s, self.lipschitz)


def discretization_step(gamma: float, s: int, lipschitz: float) -> float:
    """beta = min(gamma^2 / sqrt(4*8*17), gamma / (2 sqrt(s) L))."""
    return min(gamma * gamma / math.sqrt(4 * 8 * 17), gamma / (2.0 * math.sqrt(s) * lipschitz))


def progress_cap(gamma: float) -> int:
    """ceil(8 / gamma^2): pi <= 4/gamma^2 and each step adds >= 1/2."""
    return math.ceil(8.0 / (gamma * gamma))


def _check_gamma(gamma: float):
    if not 0.0 < gamma < 1.0:
        raise InputError(f"gamma must lie in (0, 1), got {gamma}")


def _finish(status: LpStatus, state: DualState, telemetry: LpTelemetry) -> LpOutcome:
    telemetry.outcome = status.value
    telemetry.final_norm = math.sqrt(state.norm_sq)
    log.debug(f"LP finished: {status.value} after {telemetry.iterations} iterations "
              f"({telemetry.progress_steps} progress steps), norm {telemetry.final_norm:.6g}")
    return LpOutcome(status, state, telemetry)


def _first_violated(margins: np.ndarray) -> int:
    # argmin returns the first minimum, i.e. the lowest index on ties
    return int(np.argmin(margins))


def lp_solve(geometry: SampleGeometry, members, start: DualState, gamma: float,
             verify_norms: bool = False) -> LpOutcome:
    """
    Solve P(X) for X = sorted `members` (indices into the geometry), starting from `start`.

    Args:
        geometry: Gram data of the sample
        members: indices of the constraint points
        start: empty state or a state compatible with `members`
        gamma: margin parameter in (0, 1)
        verify_norms: re-sum the cached norm after every step

    Returns:
        LpOutcome with status FEASIBLE, NOT_GAMMA_SEPARABLE or INTERNAL_OVERFLOW
    """
    _check_gamma(gamma)
    members = np.array(sorted(members), dtype=int)
    if members.size == 0:
        raise InputError("lp_solve needs at least one point")
    floor = gamma / 2.0
    cap = progress_cap(gamma)
    telemetry = LpTelemetry()

    state = start
    if state.is_empty:
        state = DualState.point(geometry, members[0])
        telemetry.iterations += 1
        telemetry.initialized = True
        telemetry.norms.append(math.sqrt(state.norm_sq))

    while True:
        margins = margin_values(state, geometry, members)
        j = _first_violated(margins)
        if margins[j] > 0.0:
            return _finish(LpStatus.FEASIBLE, state, telemetry)
        if telemetry.progress_steps >= cap:
            log.error(f"LP exceeded its {cap}-step cap; numerical breakdown suspected")
            return _finish(LpStatus.INTERNAL_OVERFLOW, state, telemetry)

        before = potential(state)
        state, _ = project_origin_to_segment(state, geometry, members[j], verify=verify_norms)
        telemetry.iterations += 1
        telemetry.progress_steps += 1
        telemetry.increments.append(potential(state) - before)
        norm = math.sqrt(state.norm_sq)
        telemetry.norms.append(norm)
        if norm < floor:
            return _finish(LpStatus.NOT_GAMMA_SEPARABLE, state, telemetry)


def lattice_points(encodings, beta: float) -> np.ndarray:
    """Nearest points of the lattice beta * Z^s."""
    return beta * np.rint(np.asarray(encodings, dtype=float) / beta)


def rounded_geometry(encodings, labels, kernel: KernelSpec, beta: float) -> SampleGeometry:
    """
    Geometry whose support points are the lattice points w#, scaled onto the
    unit ball by mu = min(1, K(w#, w#)^(-1/2)), and whose constraint points
    are the original encodings.
    """
    encodings = np.asarray(encodings, dtype=float)
    lattice = lattice_points(encodings, beta)
    self_k = self_kernel(kernel, lattice)
    with np.errstate(divide='ignore'):
        scales = np.minimum(1.0, 1.0 / np.sqrt(self_k))
    return SampleGeometry(
        labels=np.asarray(labels, dtype=float),
        support_gram=gram(kernel, lattice).entries,
        query_gram=cross_gram(kernel, encodings, lattice),
        scales=scales,
        support_points=lattice,
    )


def lp_solve_discretized(encodings, labels, start: DualState, cfg: DiscretizationConfig,
                         kernel: KernelSpec, members=None, geometry: SampleGeometry | None = None,
                         verify_norms: bool = False) -> LpOutcome:
    """
    Lattice-rounded solver. Feasibility is judged on the original points;
    progress is made with the rounded points and rounded coefficients
    beta * floor(alpha / beta). Reports NOT_GAMMA_SEPARABLE once the
    unrounded projection has norm <= gamma/4.

    Among the violated original constraints the one whose rounded point has
    the smallest inner product with the state is used. When that product is
    <= 0 the step is a progress step (pi grows by >= 1/8); otherwise it is a
    fallback step, counted in `fallback_steps` with its increment kept in
    `fallback_increments`.

    The Lipschitz bound in `cfg` holds over the box [-a, a]^s with
    a = cfg.domain_scale, which contains both the cube [0, a]^s and the
    origin-centred unit ball for a = 1.
    """
    encodings = np.asarray(encodings, dtype=float)
    if encodings.ndim != 2 or encodings.shape[0] == 0:
        raise InputError("lp_solve_discretized needs a nonempty (m, s) encoding array")
    if encodings.shape[1] != cfg.s:
        raise InputError(f"Encodings have dimension {encodings.shape[1]}, config says s={cfg.s}")
    if np.abs(encodings).max() > cfg.domain_scale:
        log.warning(f"Encodings leave the box [-{cfg.domain_scale:g}, {cfg.domain_scale:g}]^s "
                    f"the Lipschitz bound was computed for")
    beta = cfg.beta
    if geometry is None:
        geometry = rounded_geometry(encodings, labels, kernel, beta)
    members = np.arange(len(encodings)) if members is None else np.array(sorted(members), dtype=int)
    abort = cfg.gamma / 4.0
    cap = math.ceil(16.0 / cfg.gamma ** 2 / ROUNDED_PROGRESS)
    telemetry = LpTelemetry()
    log.info(f"Rounded LP: beta={beta:.6g}, {len(members)} points, abort below {abort:.6g}")

    state = start
    if state.is_empty:
        state = DualState.point(geometry, members[0])
        telemetry.iterations += 1
        telemetry.initialized = True
        telemetry.norms.append(math.sqrt(state.norm_sq))

    while True:
        margins = margin_values(state, geometry, members)
        violated = members[margins <= 0.0]
        if violated.size == 0:
            return _finish(LpStatus.FEASIBLE, state, telemetry)
        if telemetry.iterations >= cap:
            log.error(f"Rounded LP exceeded its {cap}-iteration cap")
            return _finish(LpStatus.INTERNAL_OVERFLOW, state, telemetry)

        inners = np.array([state_inner(state, geometry, p) for p in violated])
        k = int(np.argmin(inners))
        p, inner = int(violated[k]), float(inners[k])
        guaranteed = inner <= 0.0

        end_sq = geometry.augmented_sq_norm(p)
        alpha = segment_coefficient(state.norm_sq, inner, end_sq)
        if alpha is None:
            alpha = 0.0 if end_sq < state.norm_sq else 1.0
        hat_sq = (alpha * alpha * state.norm_sq + 2.0 * alpha * (1.0 - alpha) * inner
                  + (1.0 - alpha) ** 2 * end_sq)
        if math.sqrt(max(hat_sq, 0.0)) <= abort:
            telemetry.norms.append(math.sqrt(max(hat_sq, 0.0)))
            return _finish(LpStatus.NOT_GAMMA_SEPARABLE, state, telemetry)

        rounded = beta * math.floor(alpha / beta)
        before = potential(state)
        state = combine(state, geometry, p, rounded, inner=inner, verify=verify_norms)
        telemetry.iterations += 1
        if guaranteed:
            telemetry.progress_steps += 1
            telemetry.increments.append(potential(state) - before)
        else:
            telemetry.fallback_steps += 1
            telemetry.fallback_increments.append(potential(state) - before)
        telemetry.norms.append(math.sqrt(state.norm_sq))
