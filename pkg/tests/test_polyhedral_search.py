"""
Search-tree separation tests.

Core claims:
    - exact cover assembly picks <= t masks whose union is every negative
    - proper search returns <= t halfspaces with zero training error
    - improper search intersects every node halfspace, zero training error
    - potentials never decrease along a search-tree arc
    - models survive a JSON round trip
"""

import math
from pathlib import Path

import numpy as np
import pytest

from dual_geometry import DualState, margin_values
from errors import InputError
from experiment_data import PlantedInstanceConfig, ingest_csv, plant_polyhedron
from kernel_core import KernelSpec
from polyhedral_search import (Polyhedron, assemble_cover, build_geometry, classify,
                               classify_many, exclusion_mask, geometric_margin,
                               improper_separate, level_cap, proper_separate)


# -- Helpers -----------------------------------------------------------------

SAMPLE_FILE = Path(__file__).resolve().parent.parent / "raw_data" / "wedge_sample.csv"

WEDGE = [
    ([0.1, 0.1], 1), ([0.3, 0.2], 1), ([0.2, 0.4], 1), ([0.0, 0.3], 1),
    ([-0.7, 0.1], -1), ([-0.6, 0.4], -1), ([0.1, -0.7], -1), ([0.4, -0.6], -1),
]


def _wedge():
    X = np.array([p for p, _ in WEDGE])
    y = np.array([lab for _, lab in WEDGE])
    return X, y


def _planted(seed, t=2, m=20, d=2):
    dataset, _ = plant_polyhedron(PlantedInstanceConfig(t=t, gamma=0.2, rho=0.05, m=m, d=d, seed=seed))
    return dataset.encodings, dataset.labels


FAMILIES = [(2, 3), (3, 2), (3, 3)]


def _training_error(F, X, y):
    return float(np.mean(classify_many(F, X) != y))


def _check_tree(result, X, y, gamma):
    g = build_geometry(X, y, KernelSpec.linear())
    positives = np.flatnonzero(y == 1)
    ceiling = 4.0 / gamma ** 2 + 1e-9
    for node in result.nodes:
        assert set(positives.tolist()) <= set(node.members)
        assert node.potential <= ceiling
        if not node.state.is_empty:
            assert np.all(margin_values(node.state, g, positives) > 0.0)
    tel = result.telemetry
    assert tel.max_path_progress_arcs <= math.ceil(4.0 / gamma ** 2)
    assert tel.max_path_progress_arcs == max(n.progress_arcs for n in result.nodes)
    for arc in tel.arcs:
        parent, child = set(arc['parent']), set(arc['child'])
        assert parent < child and len(child) == len(parent) + 1
        assert arc['child_potential'] <= ceiling
        assert arc['child_potential'] >= arc['parent_potential'] - 1e-9


class TestAssembleCover:
    def test_picks_two_of_three(self):
        assert assemble_cover([14, 1, 7], 2, 4) == [0, 2]

    def test_single_mask(self):
        assert assemble_cover([0, 15, 3], 1, 4) == [1]

    def test_union_short(self):
        assert assemble_cover([1, 2], 3, 3) is None

    def test_too_few_slots(self):
        assert assemble_cover([1, 2, 4], 2, 3) is None
        assert assemble_cover([1, 2, 4], 3, 3) == [0, 1, 2]

    def test_duplicates_keep_first_index(self):
        assert assemble_cover([3, 3, 4], 2, 3) == [0, 2]

    def test_no_negatives(self):
        assert assemble_cover([], 1, 0) == []

    def test_expansion_count(self):
        stats = {}
        assemble_cover([1, 2, 4, 8], 4, 4, stats)
        assert stats['expansions'] >= 5


class TestExclusionMask:
    def test_empty_state_excludes_nothing(self):
        X, y = _wedge()
        g = build_geometry(X, y, KernelSpec.linear())
        assert exclusion_mask(DualState.empty(), g, np.flatnonzero(y == -1)) == 0

    def test_point_state(self):
        X, y = _wedge()
        g = build_geometry(X, y, KernelSpec.linear())
        # the halfspace of y_4 (x_4, 1) holds x_4 strictly outside
        mask = exclusion_mask(DualState.point(g, 4), g, np.flatnonzero(y == -1))
        assert mask & 1


class TestProperSeparate:
    def test_wedge(self):
        X, y = _wedge()
        result = proper_separate(X, y, KernelSpec.linear(), 2, 0.2)
        assert result.found
        assert len(result.polyhedron.halfspaces) <= 2
        assert _training_error(result.polyhedron, X, y) == 0.0
        assert geometric_margin(result.polyhedron, X, y) > 0.0
        assert result.telemetry.outcome == 'polyhedron'

    def test_negatives_on_both_sides_need_two_halfspaces(self):
        X = np.array([[0.0, 0.0], [0.8, 0.0], [-0.8, 0.0]])
        y = np.array([1, -1, -1])
        F = proper_separate(X, y, KernelSpec.linear(), 2, 0.2).polyhedron
        assert len(F.halfspaces) == 2
        assert classify(F, [0.0, 0.0]) == 1
        assert classify(F, [0.8, 0.0]) == -1
        assert classify(F, [-0.8, 0.0]) == -1

    def test_separable_pair_needs_one(self):
        X = np.array([[0.0, 0.0], [0.8, 0.0]])
        F = proper_separate(X, np.array([1, -1]), KernelSpec.linear(), 1, 0.2).polyhedron
        assert len(F.halfspaces) == 1

    def test_coincident_labels_hit_the_cap(self):
        X = np.array([[0.3, 0.0], [0.3, 0.0]])
        result = proper_separate(X, np.array([1, -1]), KernelSpec.linear(), 2, 0.1)
        assert not result.found
        assert result.telemetry.levels == level_cap(2, 0.1) == 800

    def test_planted_instances(self):
        for seed in range(3):
            X, y = _planted(seed)
            result = proper_separate(X, y, KernelSpec.linear(), 2, 0.2)
            assert result.found
            assert len(result.polyhedron.halfspaces) <= 2
            assert _training_error(result.polyhedron, X, y) == 0.0
            assert result.telemetry.levels <= level_cap(2, 0.2)
            assert len(result.telemetry.widths) == result.telemetry.levels - 1

    @pytest.mark.parametrize('t,d', FAMILIES)
    def test_larger_families_keep_tree_invariants(self, t, d):
        for seed in range(2):
            X, y = _planted(seed, t=t, m=16, d=d)
            result = proper_separate(X, y, KernelSpec.linear(), t, 0.2, record_tree=True)
            assert result.found
            assert len(result.polyhedron.halfspaces) <= t
            assert _training_error(result.polyhedron, X, y) == 0.0
            _check_tree(result, X, y, 0.2)

    def test_one_class_rejected(self):
        X, _ = _wedge()
        with pytest.raises(InputError):
            proper_separate(X, np.ones(len(X), dtype=int), KernelSpec.linear(), 2, 0.2)

    def test_contradictory_sample_has_no_polyhedron(self):
        X = np.array([[0.2, 0.2], [0.2, 0.2], [-0.5, 0.1]])
        y = np.array([1, -1, -1])
        result = proper_separate(X, y, KernelSpec.linear(), 1, 0.5)
        assert not result.found
        assert result.telemetry.outcome == 'no_separating_polyhedron'
        assert result.telemetry.levels == level_cap(1, 0.5)

    def test_kernelized(self):
        X, y = _wedge()
        kernel = KernelSpec.normalized(KernelSpec.rbf(0.5))
        result = proper_separate(X, y, kernel, 2, 0.1)
        assert result.found
        assert _training_error(result.polyhedron, X, y) == 0.0


class TestImproperSeparate:
    def test_wedge_with_tree(self):
        X, y = _wedge()
        result = improper_separate(X, y, KernelSpec.linear(), 2, 0.2, record_tree=True)
        assert result.found
        F = result.polyhedron
        assert F.mode == 'improper'
        assert len(F.halfspaces) <= len(result.nodes)
        assert math.log(len(F.halfspaces)) <= result.telemetry.halfspace_bound_log
        assert _training_error(F, X, y) == 0.0
        _check_tree(result, X, y, 0.2)

    def test_planted_instances(self):
        for seed in range(3):
            X, y = _planted(seed)
            result = improper_separate(X, y, KernelSpec.linear(), 2, 0.2)
            assert result.found
            assert _training_error(result.polyhedron, X, y) == 0.0
            assert result.telemetry.levels <= level_cap(2, 0.2)

    @pytest.mark.parametrize('t,d', FAMILIES)
    def test_larger_families_keep_tree_invariants(self, t, d):
        for seed in range(2):
            X, y = _planted(seed, t=t, m=16, d=d)
            result = improper_separate(X, y, KernelSpec.linear(), t, 0.2, record_tree=True)
            assert result.found
            assert len(result.polyhedron.halfspaces) <= len(result.nodes)
            assert _training_error(result.polyhedron, X, y) == 0.0
            _check_tree(result, X, y, 0.2)


class TestPolyhedron:
    def test_json_round_trip(self):
        X, y = _wedge()
        F = proper_separate(X, y, KernelSpec.linear(), 2, 0.2).polyhedron
        back = Polyhedron.from_json(F.to_json())
        assert back.kernel == F.kernel
        grid = np.random.default_rng(0).uniform(-1.0, 1.0, size=(200, 2))
        assert np.array_equal(classify_many(back, grid), classify_many(F, grid))
        assert classify(back, [0.2, 0.2]) == 1

    def test_classify_rejects_matrix(self):
        X, y = _wedge()
        F = proper_separate(X, y, KernelSpec.linear(), 2, 0.2).polyhedron
        with pytest.raises(InputError):
            classify(F, X)

    def test_support_points_keep_their_labels(self):
        X, y = _wedge()
        F = proper_separate(X, y, KernelSpec.linear(), 2, 0.2).polyhedron
        for i, point in F.support.items():
            assert classify(F, point) == F.labels[i]

    def test_malformed_model(self):
        with pytest.raises(InputError):
            Polyhedron.from_json({'kernel': 'linear', 'support': [], 'labels': [], 'halfspaces': []})

    def test_sample_file(self):
        dataset = ingest_csv(SAMPLE_FILE, KernelSpec.linear())
        result = proper_separate(dataset.encodings, dataset.labels, KernelSpec.linear(), 2, 0.2)
        assert result.found
        assert _training_error(result.polyhedron, dataset.encodings, dataset.labels) == 0.0
