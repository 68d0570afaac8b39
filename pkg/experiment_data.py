"""
Datasets for polyhedral separation experiments.

- ingest_csv / write_dataset_csv: `f1..fs,label` CSV files (header optional)
- plant_polyhedron: seeded instances with a known gamma-separating t-polyhedron
- oracle_separable_2d: brute-force grid check of linear gamma-separability in the plane
- class_separation: smallest feature-space distance between opposite labels
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np
import pandas as pd

from dual_geometry import LabeledPoint
from errors import ConfigInfeasibleError, InputError
from kernel_core import KernelSpec, cross_gram, lift_to_sphere, self_kernel, unit_ball_excess

log = logging.getLogger(__name__)

UNIT_BALL_TOLERANCE = 1e-12
DRAW_BUDGET = 1_000_000
DRAW_BATCH = 4096
OFFSET_LOW, OFFSET_HIGH = 0.35, 0.65

ORACLE_ANGLES = 10_000
ORACLE_OFFSETS = 2_000
ORACLE_SLACK = 1e-6
ORACLE_MAX_POINTS = 500
ORACLE_ANGLE_CHUNK = 1_000


@dataclass(eq=False)
class Dataset:
    encodings: np.ndarray
    labels: np.ndarray
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.encodings = np.asarray(self.encodings, dtype=float)
        self.labels = np.asarray(self.labels, dtype=int)
        if self.encodings.ndim != 2 or len(self.encodings) != len(self.labels):
            raise InputError(f"Encodings {self.encodings.shape} do not match {len(self.labels)} labels")
        bad = np.flatnonzero((self.labels != 1) & (self.labels != -1))
        if bad.size:
            raise InputError(f"Label of row {bad[0] + 1} must be -1 or +1, got {self.labels[bad[0]]}")

    def __len__(self):
        return len(self.labels)

    @property
    def s(self) -> int:
        return self.encodings.shape[1]

    @classmethod
    def from_points(cls, points: list[LabeledPoint], provenance: dict | None = None) -> Dataset:
        encodings = np.array([p.encoding for p in points], dtype=float)
        labels = np.array([p.label for p in points], dtype=int)
        return cls(encodings, labels, provenance or {})

    @property
    def points(self) -> list[LabeledPoint]:
        return [LabeledPoint(self.encodings[i], int(self.labels[i]), i) for i in range(len(self))]

    def same_as(self, other: Dataset) -> bool:
        return (np.array_equal(self.encodings, other.encodings)
                and np.array_equal(self.labels, other.labels))


def _header_row(row) -> bool:
    return str(row[0]).strip().lower() == 'f1'


def _check_header(row):
    names = [str(v).strip().lower() for v in row]
    expected = [f"f{i}" for i in range(1, len(names))] + ['label']
    if names != expected:
        raise InputError(f"Header must be {','.join(expected)}, got {','.join(names)}")


def _parse_rows(frame: pd.DataFrame) -> list[LabeledPoint]:
    points = []
    for number, row in enumerate(frame.itertuples(index=False), start=1):
        fields = [str(v).strip() for v in row]
        if any(v in ('', 'nan', 'None') for v in fields):
            raise InputError(f"Row {number}: expected {len(fields)} fields, found missing values")
        try:
            values = [float(v) for v in fields]
        except ValueError as e:
            raise InputError(f"Row {number}: {e}") from None
        if not all(math.isfinite(v) for v in values):
            raise InputError(f"Row {number}: non-finite value")
        if values[-1] not in (-1.0, 1.0):
            raise InputError(f"Row {number}: label must be -1 or +1, got {fields[-1]}")
        points.append(LabeledPoint(np.array(values[:-1]), int(values[-1]), number - 1))
    return points


def ingest_csv(path, kernel: KernelSpec, autoscale: bool = False, lift: bool = False,
               scale: float | None = None) -> Dataset:
    """
    Read a dataset and enforce the unit-ball constraint under `kernel`.

    Args:
        path: CSV with s feature columns then a -1/+1 label column
        kernel: kernel the data will be used with
        autoscale: divide linear-kernel data by its largest norm when it exceeds 1
        lift: map every encoding onto the unit sphere one dimension up
        scale: divide by this fixed factor first (replays the scaling of a training set)

    Raises:
        InputError naming the first offending row, or on a unit-ball violation
    """
    try:
        frame = pd.read_csv(path, header=None, dtype=str, keep_default_na=False,
                            skip_blank_lines=True)
    except FileNotFoundError:
        raise InputError(f"No such dataset file: {path}") from None
    except pd.errors.EmptyDataError:
        raise InputError(f"Dataset file {path} is empty") from None
    except pd.errors.ParserError as e:
        raise InputError(f"Malformed dataset file {path}: {e}") from None

    if len(frame) and _header_row(frame.iloc[0]):
        _check_header(frame.iloc[0])
        frame = frame.iloc[1:]
    if frame.shape[1] < 2:
        raise InputError(f"Dataset file {path} needs at least one feature column and a label column")
    if len(frame) == 0:
        raise InputError(f"Dataset file {path} has no data rows")
    parsed = Dataset.from_points(_parse_rows(frame))
    encodings, labels = parsed.encodings, parsed.labels

    if scale is not None:
        encodings = encodings / scale
    excess = unit_ball_excess(kernel, encodings)
    scale = 1.0 if scale is None else scale
    if excess > 1.0 + UNIT_BALL_TOLERANCE:
        if not (autoscale and kernel.kind == 'linear'):
            raise InputError(
                f"Largest squared feature norm is {excess:.6g} > 1 under {kernel}; "
                f"use --autoscale with the linear kernel or a normalized kernel")
        scale = math.sqrt(excess)
        encodings = encodings / scale
        log.info(f"Scaled encodings by 1/{scale:.6g} into the unit ball")
    if lift:
        encodings = np.array([lift_to_sphere(w) for w in encodings])

    provenance = {'path': str(path), 'kernel': str(kernel), 'scale': scale, 'lifted': lift}
    log.info(f"Loaded {len(labels)} points of dimension {encodings.shape[1]} from {path}")
    return Dataset(encodings, labels, provenance)


def write_dataset_csv(dataset: Dataset, path):
    """Write `f1..fs,label` with shortest round-trip floats."""
    columns = [f"f{i}" for i in range(1, dataset.s + 1)] + ['label']
    rows = [[repr(float(v)) for v in p.encoding] + [p.label] for p in dataset.points]
    frame = pd.DataFrame(rows, columns=columns)
    frame.to_csv(path, index=False)
    log.info(f"Wrote {len(dataset)} points to {path}")


@dataclass(frozen=True)
class PlantedInstanceConfig:
    t: int
    gamma: float
    rho: float
    m: int
    d: int
    seed: int = 0

    def __post_init__(self):
        if self.t < 1:
            raise InputError(f"t must be >= 1, got {self.t}")
        if not 0.0 < self.gamma < 1.0:
            raise InputError(f"gamma must lie in (0, 1), got {self.gamma}")
        if not self.rho > 0:
            raise InputError(f"rho must be > 0, got {self.rho}")
        if self.m < 2:
            raise InputError(f"m must be >= 2 to hold both classes, got {self.m}")
        if self.d < 1:
            raise InputError(f"d must be >= 1, got {self.d}")


def ball_draws(rng, n: int, d: int) -> np.ndarray:
    """n points uniform in the unit ball of R^d."""
    directions = rng.normal(size=(n, d))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    radii = rng.random(n) ** (1.0 / d)
    return directions * radii[:, None]


def _planted_label(values: np.ndarray, gamma: float) -> int:
    """+1 deep inside, -1 clearly outside, 0 inside some gamma-margin."""
    if np.all(values >= gamma):
        return 1
    if np.any(values <= -gamma) and np.all((values >= gamma) | (values <= -gamma)):
        return -1
    return 0


def plant_polyhedron(cfg: PlantedInstanceConfig):
    """
    Sample a dataset with a known gamma-separating t-polyhedron.

    The polyhedron is {x : <a_j, x> + b_j >= 0 for all j} with unit normals
    a_j and offsets b_j in gamma + [0.35, 0.65] * (1 - 2 gamma), so the
    origin is an interior point. Points are drawn uniformly from the unit
    ball; positives keep distance >= gamma from every bounding hyperplane,
    negatives are >= gamma outside at least one and never inside any
    margin band. Opposite labels stay >= rho apart. Classes are balanced.

    Returns:
        (Dataset, [(normal, offset), ...])
    """
    rng = np.random.default_rng(cfg.seed)
    normals = rng.normal(size=(cfg.t, cfg.d))
    normals /= np.linalg.norm(normals, axis=1, keepdims=True)
    offsets = cfg.gamma + rng.uniform(OFFSET_LOW, OFFSET_HIGH, size=cfg.t) * (1.0 - 2.0 * cfg.gamma)

    quota = {1: (cfg.m + 1) // 2, -1: cfg.m // 2}
    accepted = {1: [], -1: []}
    order = []
    draws = 0
    while len(order) < cfg.m:
        if draws >= DRAW_BUDGET:
            raise ConfigInfeasibleError(
                f"Sampling budget of {DRAW_BUDGET} draws exhausted with "
                f"{len(accepted[1])} positives and {len(accepted[-1])} negatives; "
                f"lower gamma or rho")
        batch = ball_draws(rng, min(DRAW_BATCH, DRAW_BUDGET - draws), cfg.d)
        draws += len(batch)
        values = batch @ normals.T + offsets
        for x, v in zip(batch, values):
            y = _planted_label(v, cfg.gamma)
            if y == 0 or len(accepted[y]) >= quota[y]:
                continue
            others = accepted[-y]
            if others and np.min(np.linalg.norm(np.array(others) - x, axis=1)) < cfg.rho:
                continue
            accepted[y].append(x)
            order.append((x, y))
            if len(order) == cfg.m:
                break

    encodings = np.array([x for x, _ in order])
    labels = np.array([y for _, y in order])
    log.info(f"Planted {cfg.t}-polyhedron instance: {cfg.m} points after {draws} draws")
    provenance = {'generator': 'plant_polyhedron', **asdict(cfg)}
    truth = [(normals[j].copy(), float(offsets[j])) for j in range(cfg.t)]
    return Dataset(encodings, labels, provenance), truth


def truth_to_json(truth) -> list:
    return [{'normal': [float(v) for v in a], 'offset': b} for a, b in truth]


def planted_margin(dataset: Dataset, truth) -> float:
    """
    Smallest margin of the sample against the planted polyhedron: positives
    use their nearest hyperplane, negatives their farthest violated one.
    """
    normals = np.array([a for a, _ in truth])
    offsets = np.array([b for _, b in truth])
    values = dataset.encodings @ normals.T + offsets
    per_point = np.where(dataset.labels == 1, values.min(axis=1), (-values).max(axis=1))
    return float(per_point.min())


def class_separation(dataset: Dataset, kernel: KernelSpec) -> float:
    """min ||phi(x) - phi(x')|| over opposite-label pairs; inf with a single class."""
    pos = dataset.encodings[dataset.labels == 1]
    neg = dataset.encodings[dataset.labels == -1]
    if len(pos) == 0 or len(neg) == 0:
        return math.inf
    sq = (self_kernel(kernel, pos)[:, None] - 2.0 * cross_gram(kernel, pos, neg)
          + self_kernel(kernel, neg)[None, :])
    return float(math.sqrt(max(float(sq.min()), 0.0)))


def oracle_separable_2d(encodings, labels, gamma: float) -> bool:
    """
    Is there a unit h = (cos theta, sin theta) and |d| <= 1 with
    y (<x, h> + d) >= gamma * (1 + 1e-6) for every point?

    Searches a fixed grid of 10^4 angles by 2 * 10^3 offsets, so a True is
    exact for the grid point found and a False is sound up to grid
    resolution. Meant for desk-scale samples only.
    """
    X = np.asarray(encodings, dtype=float)
    y = np.asarray(labels)
    if X.ndim != 2 or X.shape[1] != 2:
        raise InputError(f"The 2D oracle needs two-dimensional points, got shape {X.shape}")
    if len(X) > ORACLE_MAX_POINTS:
        raise InputError(f"The 2D oracle handles at most {ORACLE_MAX_POINTS} points, got {len(X)}")
    target = gamma * (1.0 + ORACLE_SLACK)
    grid = np.linspace(-1.0, 1.0, ORACLE_OFFSETS)
    thetas = 2.0 * np.pi * np.arange(ORACLE_ANGLES) / ORACLE_ANGLES
    pos, neg = X[y == 1], X[y == -1]

    for start in range(0, ORACLE_ANGLES, ORACLE_ANGLE_CHUNK):
        theta = thetas[start:start + ORACLE_ANGLE_CHUNK]
        H = np.stack([np.cos(theta), np.sin(theta)], axis=1)
        # positives need d >= target - <x, h>, negatives d <= -target - <x, h>
        low = np.max(target - pos @ H.T, axis=0, initial=-np.inf)
        high = np.min(-target - neg @ H.T, axis=0, initial=np.inf)
        k = np.searchsorted(grid, low, side='left')
        inside = k < len(grid)
        if np.any(grid[np.minimum(k, len(grid) - 1)][inside] <= high[inside]):
            return True
    return False
