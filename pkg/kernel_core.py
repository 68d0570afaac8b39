#!/usr/bin/env python3
"""
Kernel evaluation for polyhedral separation.

- KernelSpec: linear, RBF, polynomial, and the sphere-normalizing wrapper
  K(a,b) = (K~(a,b) + 1) / (sqrt(K~(a,a) + 1) * sqrt(K~(b,b) + 1))
- Gram and cross-Gram matrices (numpy, vectorized)
- Lifting of the unit ball onto the unit sphere one dimension up
- Feature-map Lipschitz constants over the box [-a, a]^s (which holds the cube [0, a]^s)

Kernel specs round-trip through the strings used by the CLI:
`linear`, `rbf:sigma=<float>`, `poly:degree=<int>,c=<float>`, `normalized:<inner>`.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from errors import InputError

log = logging.getLogger(__name__)

KINDS = ('linear', 'rbf', 'poly', 'normalized')
SPHERE_TOLERANCE = 1e-12


@dataclass(frozen=True)
class KernelSpec:
    """Declarative description of an inner product on R^s."""

    kind: str
    sigma: float | None = None
    degree: int | None = None
    c: float | None = None
    inner: KernelSpec | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InputError(f"Unknown kernel kind '{self.kind}', expected one of {KINDS}")
        if self.kind == 'rbf' and not (self.sigma is not None and self.sigma > 0):
            raise InputError(f"rbf kernel needs sigma > 0, got {self.sigma}")
        if self.kind == 'poly':
            if self.degree is None or int(self.degree) != self.degree or self.degree < 1:
                raise InputError(f"poly kernel needs an integer degree >= 1, got {self.degree}")
            if self.c is None or self.c < 0:
                raise InputError(f"poly kernel needs c >= 0, got {self.c}")
        if self.kind == 'normalized':
            if self.inner is None:
                raise InputError("normalized kernel needs an inner kernel")
            if self.inner.kind == 'normalized':
                raise InputError("normalized(normalized(...)) is not allowed")

    @classmethod
    def linear(cls) -> KernelSpec:
        return cls('linear')

    @classmethod
    def rbf(cls, sigma: float) -> KernelSpec:
        return cls('rbf', sigma=float(sigma))

    @classmethod
    def polynomial(cls, degree: int, c: float = 1.0) -> KernelSpec:
        return cls('poly', degree=degree, c=float(c))

    @classmethod
    def normalized(cls, inner: KernelSpec) -> KernelSpec:
        return cls('normalized', inner=inner)

    def __str__(self):
        return format_kernel(self)


@dataclass(frozen=True)
class GramMatrix:
    """Symmetric matrix of K(w_i, w_j) over a point sequence."""

    entries: np.ndarray

    @property
    def n(self) -> int:
        return self.entries.shape[0]


def format_kernel(spec: KernelSpec) -> str:
    if spec.kind == 'linear':
        return 'linear'
    if spec.kind == 'rbf':
        return f"rbf:sigma={spec.sigma!r}"
    if spec.kind == 'poly':
        return f"poly:degree={spec.degree},c={spec.c!r}"
    return f"normalized:{format_kernel(spec.inner)}"


def parse_kernel(text: str) -> KernelSpec:
    """Parse the CLI/config kernel grammar into a KernelSpec."""
    text = text.strip()
    kind, _, rest = text.partition(':')
    kind = kind.strip().lower()
    if kind == 'normalized':
        if not rest:
            raise InputError("normalized kernel needs an inner kernel, e.g. 'normalized:linear'")
        return KernelSpec.normalized(parse_kernel(rest))
    if kind == 'linear':
        if rest:
            raise InputError(f"linear kernel takes no parameters: '{text}'")
        return KernelSpec.linear()

    params = {}
    for item in filter(None, (p.strip() for p in rest.split(','))):
        key, eq, value = item.partition('=')
        if not eq:
            raise InputError(f"Malformed kernel parameter '{item}' in '{text}'")
        params[key.strip()] = value.strip()
    try:
        if kind == 'rbf':
            return KernelSpec.rbf(float(params['sigma']))
        if kind in ('poly', 'polynomial'):
            return KernelSpec.polynomial(int(params['degree']), float(params.get('c', 1.0)))
    except KeyError as e:
        raise InputError(f"Kernel '{text}' is missing parameter {e}") from None
    except ValueError as e:
        raise InputError(f"Kernel '{text}': {e}") from None
    raise InputError(f"Unknown kernel '{text}'")


def _as_vector(a) -> np.ndarray:
    v = np.asarray(a, dtype=float)
    if v.ndim != 1 or v.size == 0:
        raise InputError(f"Expected a nonempty vector, got shape {v.shape}")
    return v


def _as_points(points) -> np.ndarray:
    try:
        arr = np.asarray(points, dtype=float)
    except ValueError:
        raise InputError("Points have mixed dimensions") from None
    if arr.ndim == 1:
        raise InputError(f"Expected an (m, s) point array, got a flat vector of length {arr.size}; "
                         f"use reshape(-1, 1) for one-dimensional points or reshape(1, -1) for one point")
    if arr.ndim != 2 or arr.shape[0] == 0 or arr.shape[1] == 0:
        raise InputError(f"Expected a nonempty (m, s) point array, got shape {arr.shape}")
    return arr


def eval_kernel(spec: KernelSpec, a, b) -> float:
    """K(a, b) for a single pair."""
    a, b = _as_vector(a), _as_vector(b)
    if a.shape != b.shape:
        raise InputError(f"Dimension mismatch: {a.size} vs {b.size}")
    if spec.kind == 'linear':
        return float(a @ b)
    if spec.kind == 'rbf':
        diff = a - b
        return float(math.exp(-(diff @ diff) / (2.0 * spec.sigma ** 2)))
    if spec.kind == 'poly':
        return float((a @ b + spec.c) ** spec.degree)
    inner = spec.inner
    kab = eval_kernel(inner, a, b)
    kaa = eval_kernel(inner, a, a)
    kbb = eval_kernel(inner, b, b)
    return (kab + 1.0) / (math.sqrt(kaa + 1.0) * math.sqrt(kbb + 1.0))


def self_kernel(spec: KernelSpec, points: np.ndarray) -> np.ndarray:
    """Diagonal K(w, w) for every row."""
    if spec.kind == 'linear':
        return np.einsum('ij,ij->i', points, points)
    if spec.kind == 'poly':
        return (np.einsum('ij,ij->i', points, points) + spec.c) ** spec.degree
    return np.ones(points.shape[0])


def _kernel_matrix(spec: KernelSpec, A: np.ndarray, B: np.ndarray) -> np.ndarray:
    if spec.kind == 'linear':
        return A @ B.T
    if spec.kind == 'rbf':
        sq = (np.einsum('ij,ij->i', A, A)[:, None]
              + np.einsum('ij,ij->i', B, B)[None, :]
              - 2.0 * (A @ B.T))
        np.maximum(sq, 0.0, out=sq)
        return np.exp(-sq / (2.0 * spec.sigma ** 2))
    if spec.kind == 'poly':
        return (A @ B.T + spec.c) ** spec.degree
    inner = _kernel_matrix(spec.inner, A, B)
    row = np.sqrt(self_kernel(spec.inner, A) + 1.0)
    col = np.sqrt(self_kernel(spec.inner, B) + 1.0)
    return (inner + 1.0) / (row[:, None] * col[None, :])


def cross_gram(spec: KernelSpec, A, B) -> np.ndarray:
    """Matrix of K(a_i, b_j), shape (len(A), len(B))."""
    A, B = _as_points(A), _as_points(B)
    if A.shape[1] != B.shape[1]:
        raise InputError(f"Dimension mismatch: {A.shape[1]} vs {B.shape[1]}")
    return _kernel_matrix(spec, A, B)


def gram(spec: KernelSpec, points) -> GramMatrix:
    """Gram matrix; the upper triangle is mirrored so symmetry is exact."""
    P = _as_points(points)
    full = _kernel_matrix(spec, P, P)
    upper = np.triu(full)
    entries = upper + np.triu(full, 1).T
    log.debug(f"Built {P.shape[0]}x{P.shape[0]} Gram matrix for {spec}")
    return GramMatrix(entries)


def feature_distance(spec: KernelSpec, a, b) -> float:
    """||phi(a) - phi(b)|| computed from kernel values only."""
    sq = eval_kernel(spec, a, a) - 2.0 * eval_kernel(spec, a, b) + eval_kernel(spec, b, b)
    return math.sqrt(max(sq, 0.0))


def unit_ball_excess(spec: KernelSpec, points) -> float:
    """Largest squared feature norm K(w, w) over the points."""
    return float(np.max(self_kernel(spec, _as_points(points))))


def lift_to_sphere(omega) -> np.ndarray:
    """Map w in the unit ball to (w, sqrt(1 - ||w||^2)) on the unit sphere."""
    w = _as_vector(omega)
    sq = float(w @ w)
    if math.sqrt(sq) > 1.0 + SPHERE_TOLERANCE:
        raise InputError(f"Cannot lift a point of norm {math.sqrt(sq):.6g} > 1; scale the data first")
    return np.append(w, math.sqrt(max(0.0, 1.0 - sq)))


def _min_self_kernel_on_box(spec: KernelSpec) -> float:
    # minimum of K(z, z) over [-a, a]^s; the origin belongs to the box
    if spec.kind == 'linear':
        return 0.0
    if spec.kind == 'poly':
        return spec.c ** spec.degree
    return 1.0


def lipschitz_constant(spec: KernelSpec, domain_scale: float = 1.0, s: int = 1) -> float:
    """
    Upper bound L on ||phi(x) - phi(y)|| / ||x - y|| over the box [-a, a]^s, a = domain_scale.

    Args:
        spec: kernel
        domain_scale: half-width a of the box holding the encodings
        s: encoding dimension (only the polynomial bound depends on it)

    Closed forms:
        linear        1
        rbf(sigma)    1 / sigma
        poly(p, c)    sqrt(p (R+c)^(p-1) + p (p-1) (R+c)^(p-2) R),  R = s * domain_scale^2
        normalized    L_inner / sqrt(min_box K~(z,z) + 1)
    """
    if spec.kind == 'linear':
        return 1.0
    if spec.kind == 'rbf':
        return 1.0 / spec.sigma
    if spec.kind == 'poly':
        p, c = spec.degree, spec.c
        R = s * float(domain_scale) ** 2
        base = R + c
        sq = p * base ** (p - 1)
        if p >= 2:
            sq += p * (p - 1) * base ** (p - 2) * R
        return math.sqrt(sq)
    inner_L = lipschitz_constant(spec.inner, domain_scale, s)
    return inner_L / math.sqrt(_min_self_kernel_on_box(spec.inner) + 1.0)
