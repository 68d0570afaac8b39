"""
Search-tree separation: learn a polyhedron consistent with a labeled sample.

Both searches grow a tree whose nodes (A, k) are index sets A (all the
positives plus some negatives) that the LP solver found linearly
gamma-separable, each with the state it reached. Only the current level is
kept; unbranched nodes carry their state forward unchanged.

proper_separate    assemble <= t node halfspaces that together exclude every
                   negative (exact set cover over exclusion bitmasks), else
                   branch every node on every negative its halfspace still contains.
improper_separate  intersect all node halfspaces; if a negative survives,
                   branch every node on the lowest-index survivor.

Both give up after ceil(4 t / gamma^2) levels: past that point no
consistent gamma-separating t-polyhedron exists.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from dual_geometry import DualState, SampleGeometry, margin_values, potential
from errors import InputError, InternalFault
from kernel_core import KernelSpec, cross_gram, format_kernel, gram, parse_kernel
from lp_feasibility import LpStatus, lp_solve
from pac_bounds import improper_halfspace_bound_log

log = logging.getLogger(__name__)

PROGRESS_ARC = 0.25
ARC_TOLERANCE = 1e-12


@dataclass
class Polyhedron:
    """Intersection of dual-form halfspaces; +1 inside every halfspace, -1 otherwise."""

    halfspaces: list
    kernel: KernelSpec
    support: dict
    labels: dict
    gamma: float | None = None
    t: int | None = None
    mode: str = 'proper'

    @classmethod
    def from_states(cls, states, kernel: KernelSpec, geometry: SampleGeometry,
                    gamma=None, t=None, mode='proper') -> Polyhedron:
        states = [s for s in states if not s.is_empty]
        if not states:
            raise InternalFault("A polyhedron needs at least one non-empty halfspace")
        used = sorted({int(i) for s in states for i in s.weights})
        support = {i: np.array(geometry.support_points[i], dtype=float) for i in used}
        labels = {i: int(geometry.labels[i]) for i in used}
        return cls(list(states), kernel, support, labels, gamma, t, mode)

    @property
    def dimension(self) -> int:
        return len(next(iter(self.support.values())))

    def _support_matrix(self):
        used = sorted(self.support)
        return used, np.array([self.support[i] for i in used])

    def _coefficients(self, used):
        position = {i: k for k, i in enumerate(used)}
        label = np.array([self.labels[i] for i in used], dtype=float)
        coefs = np.zeros((len(used), len(self.halfspaces)))
        offsets = np.zeros(len(self.halfspaces))
        for j, state in enumerate(self.halfspaces):
            idx, w, mu = state.arrays
            rows = [position[int(i)] for i in idx]
            wy = w * label[rows]
            coefs[rows, j] = wy * mu
            offsets[j] = wy.sum()
        return coefs, offsets

    def decision_values(self, points) -> np.ndarray:
        """<phi(w), h_j> + d_j for every point (rows) and halfspace (columns)."""
        used, S = self._support_matrix()
        coefs, offsets = self._coefficients(used)
        return cross_gram(self.kernel, points, S) @ coefs + offsets

    def to_json(self) -> dict:
        used = sorted(self.support)
        return {
            'kernel': format_kernel(self.kernel),
            'support': [[i, [float(v) for v in self.support[i]]] for i in used],
            'labels': [[i, self.labels[i]] for i in used],
            'halfspaces': [s.to_json() for s in self.halfspaces],
            'gamma': self.gamma,
            't': self.t,
            'mode': self.mode,
        }

    @classmethod
    def from_json(cls, data: dict) -> Polyhedron:
        try:
            support = {int(i): np.array(enc, dtype=float) for i, enc in data['support']}
            labels = {int(i): int(y) for i, y in data['labels']}
            halfspaces = [DualState.from_json(h) for h in data['halfspaces']]
            kernel = parse_kernel(data['kernel'])
        except (KeyError, TypeError, ValueError) as e:
            raise InputError(f"Malformed model file: {e}") from None
        if not halfspaces:
            raise InputError("Model file has no halfspaces")
        return cls(halfspaces, kernel, support, labels, data.get('gamma'), data.get('t'),
                   data.get('mode', 'proper'))


def classify_many(F: Polyhedron, points) -> np.ndarray:
    values = F.decision_values(points)
    return np.where(np.all(values >= 0.0, axis=1), 1, -1)


def classify(F: Polyhedron, omega) -> int:
    """+1 iff <phi(omega), h> + d >= 0 for every halfspace of F."""
    point = np.asarray(omega, dtype=float)
    if point.ndim != 1:
        raise InputError(f"classify takes a single vector, got shape {point.shape}")
    return int(classify_many(F, point.reshape(1, -1))[0])


def geometric_margin(F: Polyhedron, encodings, labels) -> float:
    """
    Smallest signed feature-space distance of a sample to the boundary of F:
    positives count their distance inside the nearest face, negatives their
    distance outside the farthest excluding halfspace. Negative when some
    point is misclassified.
    """
    values = F.decision_values(encodings)
    used, S = F._support_matrix()
    coefs, _ = F._coefficients(used)
    K = gram(F.kernel, S).entries
    h_norm = np.sqrt(np.maximum(np.einsum('ij,ik,kj->j', coefs, K, coefs), 0.0))
    with np.errstate(divide='ignore', invalid='ignore'):
        dist = np.where(h_norm > 0, values / h_norm, np.sign(values) * np.inf)
    labels = np.asarray(labels)
    per_point = np.where(labels == 1, dist.min(axis=1), (-dist).max(axis=1))
    return float(per_point.min())


@dataclass
class SearchNode:
    members: tuple
    level: int
    state: DualState
    progress_arcs: int = 0

    @property
    def potential(self) -> float:
        return potential(self.state)


@dataclass
class SearchTelemetry:
    outcome: str = ''
    levels: int = 0
    widths: list = field(default_factory=list)
    lp_calls: int = 0
    lp_progress_steps: int = 0
    progress_arcs: int = 0
    max_path_progress_arcs: int = 0
    cover_expansions: int = 0
    halfspaces: int = 0
    halfspace_bound_log: float | None = None
    arcs: list | None = None

    def to_json(self) -> dict:
        record = {
            'outcome': self.outcome,
            'levels': self.levels,
            'widths': self.widths,
            'lp_calls': self.lp_calls,
            'lp_progress_steps': self.lp_progress_steps,
            'progress_arcs': self.progress_arcs,
            'max_path_progress_arcs': self.max_path_progress_arcs,
            'cover_expansions': self.cover_expansions,
            'halfspaces': self.halfspaces,
        }
        if self.halfspace_bound_log is not None:
            record['halfspace_bound_log'] = self.halfspace_bound_log
        if self.arcs is not None:
            record['arcs'] = self.arcs
        return record


@dataclass
class SearchResult:
    polyhedron: Polyhedron | None
    telemetry: SearchTelemetry
    nodes: list

    @property
    def found(self) -> bool:
        return self.polyhedron is not None


def level_cap(t: int, gamma: float) -> int:
    return math.ceil(4.0 * t / (gamma * gamma))


def assemble_cover(masks, t: int, n_neg: int, stats: dict | None = None):
    """
    Pick <= t of the masks whose OR sets all n_neg bits; None if impossible.

    Exact: identical masks are merged, masks strictly contained in another
    are dropped, then a depth-first search branches on the masks covering
    the lowest uncovered bit (largest first) and prunes when the remaining
    slots cannot reach the uncovered count. Returns sorted indices into `masks`.
    """
    full = (1 << n_neg) - 1
    if full == 0:
        return []
    first = {}
    for i, m in enumerate(masks):
        m &= full
        if m and m not in first:
            first[m] = i
    distinct = list(first)
    kept = [m for m in distinct if not any(o != m and o & m == m for o in distinct)]
    kept.sort(key=lambda m: (-m.bit_count(), first[m]))

    union = 0
    for m in kept:
        union |= m
    if union != full:
        return None
    widest = kept[0].bit_count()
    expansions = 0

    def dfs(uncovered, slots, chosen):
        nonlocal expansions
        expansions += 1
        if uncovered == 0:
            return chosen
        if slots == 0 or uncovered.bit_count() > slots * widest:
            return None
        bit = uncovered & -uncovered
        for m in kept:
            if m & bit:
                found = dfs(uncovered & ~m, slots - 1, chosen + [m])
                if found is not None:
                    return found
        return None

    chosen = dfs(full, t, [])
    if stats is not None:
        stats['expansions'] = stats.get('expansions', 0) + expansions
    if chosen is None:
        return None
    return sorted(first[m] for m in chosen)


def exclusion_mask(state: DualState, geometry: SampleGeometry, negatives) -> int:
    """Bit i set iff negatives[i] lies strictly outside the halfspace of `state`."""
    if state.is_empty:
        return 0
    outside = margin_values(state, geometry, negatives) > 0.0
    mask = 0
    for bit in np.flatnonzero(outside):
        mask |= 1 << int(bit)
    return mask


def build_geometry(encodings, labels, kernel: KernelSpec) -> SampleGeometry:
    return SampleGeometry.exact(gram(kernel, encodings), labels, encodings)


def _split(labels, t: int, gamma: float):
    labels = np.asarray(labels)
    if t < 1:
        raise InputError(f"t must be >= 1, got {t}")
    if not 0.0 < gamma < 1.0:
        raise InputError(f"gamma must lie in (0, 1), got {gamma}")
    positives = np.flatnonzero(labels == 1)
    negatives = np.flatnonzero(labels == -1)
    if positives.size == 0 or negatives.size == 0:
        raise InputError("Polyhedral separation needs at least one positive and one negative point")
    return positives, negatives


class _Search:
    """Shared level bookkeeping of the proper and improper searches."""

    def __init__(self, encodings, labels, kernel, t, gamma, verify_norms, record_tree):
        self.positives, self.negatives = _split(labels, t, gamma)
        self.kernel = kernel
        self.t = t
        self.gamma = gamma
        self.verify_norms = verify_norms
        self.geometry = build_geometry(encodings, labels, kernel)
        self.telemetry = SearchTelemetry(arcs=[] if record_tree else None)
        self.nodes = [SearchNode(tuple(int(i) for i in self.positives), 0, DualState.empty())]
        self.cap = level_cap(t, gamma)

    def masks(self):
        return [exclusion_mask(n.state, self.geometry, self.negatives) for n in self.nodes]

    def branch(self, node: SearchNode, x: int, level: int):
        members = tuple(sorted(node.members + (int(x),)))
        outcome = lp_solve(self.geometry, members, node.state, self.gamma,
                           verify_norms=self.verify_norms)
        self.telemetry.lp_calls += 1
        self.telemetry.lp_progress_steps += outcome.telemetry.progress_steps
        if outcome.status is LpStatus.INTERNAL_OVERFLOW:
            raise InternalFault(f"LP overflow while branching {node.members} on point {x}")
        if outcome.status is LpStatus.NOT_GAMMA_SEPARABLE:
            return None
        child = SearchNode(members, level, outcome.state, node.progress_arcs)
        if child.potential >= node.potential + PROGRESS_ARC - ARC_TOLERANCE:
            child.progress_arcs += 1
            self.telemetry.progress_arcs += 1
        if self.telemetry.arcs is not None:
            self.telemetry.arcs.append({
                'level': level,
                'parent': list(node.members),
                'child': list(members),
                'parent_potential': node.potential,
                'child_potential': child.potential,
            })
        return child

    def advance(self, level: int, branches):
        """Carry every node to `level`, add the feasible children, keep max-potential duplicates."""
        current = {n.members: SearchNode(n.members, level, n.state, n.progress_arcs)
                   for n in self.nodes}
        for node, x in branches:
            child = self.branch(node, x, level)
            if child is None:
                continue
            held = current.get(child.members)
            if held is None or child.potential > held.potential:
                current[child.members] = child
        self.nodes = [current[key] for key in sorted(current)]
        self.telemetry.widths.append(len(self.nodes))
        self.telemetry.max_path_progress_arcs = max(n.progress_arcs for n in self.nodes)
        log.info(f"Level {level}: {len(self.nodes)} nodes, "
                 f"{self.telemetry.lp_calls} LP calls so far")

    def finish(self, states, level, mode):
        self.telemetry.levels = level
        if states is None:
            self.telemetry.outcome = 'no_separating_polyhedron'
            log.info(f"No consistent {self.gamma}-separating {self.t}-polyhedron "
                     f"(level cap {self.cap} exceeded)")
            return SearchResult(None, self.telemetry, self.nodes)
        F = Polyhedron.from_states(states, self.kernel, self.geometry, self.gamma, self.t, mode)
        self.telemetry.outcome = 'polyhedron'
        self.telemetry.halfspaces = len(F.halfspaces)
        log.info(f"Found a consistent polyhedron with {len(F.halfspaces)} halfspaces at level {level}")
        return SearchResult(F, self.telemetry, self.nodes)


def proper_separate(encodings, labels, kernel: KernelSpec, t: int, gamma: float,
                    verify_norms: bool = False, record_tree: bool = False) -> SearchResult:
    """
    Learn a consistent polyhedron of at most t halfspaces.

    Args:
        encodings: (m, s) points, inside the unit ball under `kernel`
        labels: -1/+1 per point, both classes present
        kernel: inner product
        t: largest number of halfspaces allowed
        gamma: margin parameter in (0, 1)
        verify_norms: re-sum cached state norms after every LP step
        record_tree: keep every branch arc in the telemetry

    Returns:
        SearchResult; `polyhedron` is None when no consistent gamma-separating
        t-polyhedron exists
    """
    search = _Search(encodings, labels, kernel, t, gamma, verify_norms, record_tree)
    n_neg = len(search.negatives)
    stats = {}
    level = 0
    while True:
        level += 1
        if level > search.cap:
            return search.finish(None, level - 1, 'proper')
        masks = search.masks()
        selection = assemble_cover(masks, t, n_neg, stats)
        search.telemetry.cover_expansions = stats.get('expansions', 0)
        if selection is not None:
            return search.finish([search.nodes[i].state for i in selection], level, 'proper')
        branches = [(node, x)
                    for node, mask in zip(search.nodes, masks)
                    for bit, x in enumerate(search.negatives)
                    if not mask >> bit & 1]
        search.advance(level, branches)


def improper_separate(encodings, labels, kernel: KernelSpec, t_hint: int, gamma: float,
                      verify_norms: bool = False, record_tree: bool = False) -> SearchResult:
    """
    Learn a consistent polyhedron from the intersection of every node halfspace.

    `t_hint` only sets the level cap ceil(4 t_hint / gamma^2) and the reported
    halfspace bound (8 t_hint / gamma^2)^(4 / gamma^2), kept in log space.
    """
    search = _Search(encodings, labels, kernel, t_hint, gamma, verify_norms, record_tree)
    search.telemetry.halfspace_bound_log = improper_halfspace_bound_log(t_hint, gamma)
    full = (1 << len(search.negatives)) - 1
    level = 0
    while True:
        level += 1
        if level > search.cap:
            return search.finish(None, level - 1, 'improper')
        covered = 0
        for mask in search.masks():
            covered |= mask
        survivors = full & ~covered
        if survivors == 0:
            return search.finish([n.state for n in search.nodes], level, 'improper')
        bit = (survivors & -survivors).bit_length() - 1
        x = search.negatives[bit]
        log.debug(f"Level {level}: negative {x} lies inside every halfspace")
        search.advance(level, [(node, x) for node in search.nodes])
