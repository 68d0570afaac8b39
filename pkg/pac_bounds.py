"""
VC-dimension and sample-size calculators for learned polyhedra.

All big-O constants are pinned to 1; VC combination counts use log2 and
confidence terms use the natural log. Outputs are order-of-magnitude
planning values, not tight bounds. Bounds too large for a float come back
as math.inf together with a RuntimeWarning.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass

from errors import InputError
from lp_feasibility import discretization_step

LOG_FLOAT_MAX = math.log(1.7976931348623157e308)


def _overflow(what: str) -> float:
    warnings.warn(f"{what} exceeds the float range; returning inf", RuntimeWarning, stacklevel=3)
    return math.inf


def _check_positive_int(name, value):
    if int(value) != value or value < 1:
        raise InputError(f"{name} must be an integer >= 1, got {value}")


def _check_gamma(gamma):
    if not 0.0 < gamma <= 1.0:
        raise InputError(f"gamma must lie in (0, 1], got {gamma}")


def _check_slack(name, value):
    if not 0.0 < value < 0.5:
        raise InputError(f"{name} must lie in (0, 1/2), got {value}")


def vc_proper_euclidean(d: int, t: int) -> int:
    """D = d * t * ceil(log2(max(t, 2)))."""
    _check_positive_int('d', d)
    _check_positive_int('t', t)
    return d * t * math.ceil(math.log2(max(t, 2)))


def improper_halfspace_bound_log(t: int, gamma: float) -> float:
    """Natural log of (8 t / gamma^2)^(4 / gamma^2), the improper halfspace-count bound."""
    _check_positive_int('t', t)
    _check_gamma(gamma)
    g2 = gamma * gamma
    return (4.0 / g2) * math.log(8.0 * t / g2)


def vc_improper_euclidean(d: int, t: int, gamma: float) -> float:
    """D = d * t_eff * ceil(log2(max(t_eff, 2))) with t_eff = ceil((8 t / gamma^2)^(4 / gamma^2))."""
    _check_positive_int('d', d)
    log_t_eff = improper_halfspace_bound_log(t, gamma)
    if log_t_eff > LOG_FLOAT_MAX:
        return _overflow("Improper halfspace count")
    g2 = gamma * gamma
    try:
        t_eff = math.ceil((8.0 * t / g2) ** (4.0 / g2))
    except OverflowError:
        return _overflow("Improper halfspace count")
    D = d * t_eff * math.ceil(math.log2(max(t_eff, 2)))
    try:
        return float(D)
    except OverflowError:
        return _overflow("Improper VC dimension")


def vc_rkhs(s: int, gamma: float, t: int, lipschitz: float, improper: bool = False) -> float:
    """
    D = gamma^-2 * s * ln(1/beta)^2 * t_factor, with beta the lattice step and
    t_factor = t (proper) or t^ceil(gamma^-2) (improper).
    """
    _check_positive_int('s', s)
    _check_positive_int('t', t)
    _check_gamma(gamma)
    if not lipschitz > 0:
        raise InputError(f"Lipschitz bound must be > 0, got {lipschitz}")
    beta = discretization_step(gamma, s, lipschitz)
    base = s * math.log(1.0 / beta) ** 2 / (gamma * gamma)
    exponent = math.ceil(1.0 / (gamma * gamma)) if improper else 1
    log_D = math.log(base) + exponent * math.log(t)
    if log_D > LOG_FLOAT_MAX:
        return _overflow("RKHS VC dimension")
    return base * float(t) ** exponent


def sample_size(D: float, eps: float, delta: float) -> float:
    """m = ceil((D + ln(1/delta)) / eps); inf when D is inf."""
    if not D > 0:
        raise InputError(f"D must be > 0, got {D}")
    _check_slack('eps', eps)
    _check_slack('delta', delta)
    if math.isinf(D):
        return math.inf
    return math.ceil((D + math.log(1.0 / delta)) / eps)


@dataclass(frozen=True)
class PacQuery:
    eps: float
    delta: float
    t: int
    d: int | None = None
    s: int | None = None
    gamma: float | None = None
    lipschitz: float | None = None
    improper: bool = False

    def __post_init__(self):
        _check_slack('eps', self.eps)
        _check_slack('delta', self.delta)
        _check_positive_int('t', self.t)
        if self.d is not None:
            if self.s is not None or self.lipschitz is not None:
                raise InputError("Give either d (Euclidean) or s, gamma, L (RKHS), not both")
            if self.improper and self.gamma is None:
                raise InputError("The improper Euclidean bound needs gamma")
        elif any(v is None for v in (self.s, self.gamma, self.lipschitz)):
            raise InputError("Give d (Euclidean) or all of s, gamma and L (RKHS)")


def plan(query: PacQuery) -> dict:
    """Report {inputs, beta, D, m} for a PAC query."""
    if query.d is not None:
        beta = None
        if query.improper:
            D = vc_improper_euclidean(query.d, query.t, query.gamma)
        else:
            D = vc_proper_euclidean(query.d, query.t)
    else:
        beta = discretization_step(query.gamma, query.s, query.lipschitz)
        D = vc_rkhs(query.s, query.gamma, query.t, query.lipschitz, query.improper)
    m = sample_size(D, query.eps, query.delta)
    return {
        'inputs': {k: v for k, v in asdict(query).items() if v is not None},
        'beta': beta,
        'D': D,
        'm': m,
        'note': 'order-of-magnitude planning values, constants pinned to 1',
    }
