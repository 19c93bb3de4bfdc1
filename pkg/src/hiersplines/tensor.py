"""Tensor-product levels: multivariate B-splines, cell meshes, two-scale.

Multi-indices run over d >= 1 directions. The canonical linearization is
lexicographic with the first direction varying fastest, i.e. the linear
index of (i_0, ..., i_{d-1}) over dims (n_0, ..., n_{d-1}) is
i_0 + n_0*(i_1 + n_1*(...)). All sorted listings and dense coefficient
layouts follow this order.
"""

from __future__ import annotations

import bisect
import itertools
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterator, Mapping, Sequence

import numpy as np

from . import kernels
from .errors import HierSplineError, NestingError
from .univariate import (
    KnotVector,
    LocalKnotVector,
    children_table,
    dyadic_refine,
    pair_cache,
    parent_table,
)

Index = tuple[int, ...]


def id_sort_key(indices: Index) -> Index:
    """Sort key realizing the first-direction-fastest canonical order."""
    return tuple(reversed(indices))


def iter_box(ranges: Sequence[range]) -> Iterator[Index]:
    """Multi-indices of a box in canonical order."""
    for combo in itertools.product(*reversed(ranges)):
        yield combo[::-1]


@dataclass(frozen=True)
class TensorFunctionId:
    """A basis function: level plus per-direction univariate indices."""

    level: int
    indices: Index


@dataclass(frozen=True)
class CellId:
    """A mesh cell: level plus per-direction interval indices."""

    level: int
    indices: Index


@dataclass(frozen=True)
class CellSet:
    """A set of cells, all of one level."""

    level: int
    cells: frozenset[Index]

    def __contains__(self, indices: Index) -> bool:
        return indices in self.cells

    def __len__(self) -> int:
        return len(self.cells)

    def sorted(self) -> list[Index]:
        return sorted(self.cells, key=id_sort_key)

    def union(self, other: "CellSet") -> "CellSet":
        if other.level != self.level:
            raise HierSplineError("cannot union cell sets of different levels")
        return CellSet(self.level, self.cells | other.cells)

    def bounding_ranges(self) -> list[range] | None:
        if not self.cells:
            return None
        d = len(next(iter(self.cells)))
        lo = [min(c[i] for c in self.cells) for i in range(d)]
        hi = [max(c[i] for c in self.cells) for i in range(d)]
        return [range(a, b + 1) for a, b in zip(lo, hi)]


@dataclass(frozen=True)
class TensorLevel:
    """One level of the nested sequence: d knot vectors plus derived mesh."""

    index: int
    kvs: tuple[KnotVector, ...]

    @property
    def dim(self) -> int:
        return len(self.kvs)

    @property
    def degrees(self) -> tuple[int, ...]:
        return tuple(kv.degree for kv in self.kvs)

    @property
    def num_basis(self) -> tuple[int, ...]:
        return tuple(kv.num_basis for kv in self.kvs)

    @property
    def num_cells(self) -> tuple[int, ...]:
        return tuple(kv.num_intervals for kv in self.kvs)

    @property
    def max_interval_lengths(self) -> tuple[Fraction, ...]:
        return tuple(kv.max_interval_length for kv in self.kvs)

    def function_ids(self) -> Iterator[Index]:
        return iter_box([range(n) for n in self.num_basis])

    def cell_ids(self) -> Iterator[Index]:
        return iter_box([range(n) for n in self.num_cells])

    def local(self, indices: Index) -> tuple[LocalKnotVector, ...]:
        return tuple(kv.local(j) for kv, j in zip(self.kvs, indices))

    def support_box(self, indices: Index) -> tuple[tuple[Fraction, Fraction], ...]:
        return tuple(kv.support(j) for kv, j in zip(self.kvs, indices))

    def function_cell_ranges(self, indices: Index) -> list[range]:
        """Per-direction interval index ranges covered by the support."""
        out = []
        for kv, j in zip(self.kvs, indices):
            a, b = kv.function_interval_range(j)
            out.append(range(a, b + 1))
        return out

    def cell_box(self, indices: Index) -> tuple[tuple[Fraction, Fraction], ...]:
        out = []
        for kv, j in zip(self.kvs, indices):
            c = kv.intervals[j]
            out.append((c.left, c.right))
        return tuple(out)

    def cell_volume(self, indices: Index) -> Fraction:
        vol = Fraction(1)
        for kv, j in zip(self.kvs, indices):
            vol *= kv.intervals[j].length
        return vol

    def support_extension_box(self, indices: Index) -> tuple[tuple[Fraction, Fraction], ...]:
        return tuple(kv.intervals[j].extension for kv, j in zip(self.kvs, indices))

    def support_extension_cell_ranges(self, indices: Index) -> list[range]:
        """The support extension of a cell, as per-direction interval ranges."""
        out = []
        for kv, j in zip(self.kvs, indices):
            lo, hi = kv.intervals[j].extension
            lefts = kv._interval_lefts()
            first = bisect.bisect_left(lefts, lo)
            last = bisect.bisect_left(lefts, hi) - 1
            out.append(range(first, last + 1))
        return out

    def functions_on_cell(self, indices: Index) -> list[range]:
        return [kv.functions_on_interval(j) for kv, j in zip(self.kvs, indices)]

    def functions_supported_in_box(self, box) -> list[range]:
        return [kv.functions_supported_in(lo, hi)
                for kv, (lo, hi) in zip(self.kvs, box)]

    def locate(self, point: Sequence[float]) -> Index | None:
        """Cell whose closure contains the point, by right-continuous lookup."""
        idx = []
        for kv, x in zip(self.kvs, point):
            bps = kv.breakpoint_floats()
            x = float(x)
            if x < bps[0] or x > bps[-1]:
                return None
            j = int(np.searchsorted(bps, x, side="right")) - 1
            j = max(0, min(j, bps.size - 2))
            idx.append(j)
        return tuple(idx)


# ---------------------------------------------------------------------------
# level sequences

def build_level_sequence(initial: Sequence[KnotVector], depth: int,
                         rule="dyadic") -> list[TensorLevel]:
    """Levels 0..depth-1 from initial knot vectors plus a refinement rule.

    ``rule`` is "dyadic" or an explicit list of per-direction knot vectors
    for levels 1..depth-1. Explicit levels are checked for nestedness and
    a violation names the level and direction.
    """
    if depth < 1:
        raise HierSplineError("depth must be at least 1")
    kvs = tuple(initial)
    levels = [TensorLevel(0, kvs)]
    if rule == "dyadic":
        for ell in range(1, depth):
            kvs = tuple(dyadic_refine(kv) for kv in kvs)
            levels.append(TensorLevel(ell, kvs))
        return levels
    explicit = list(rule)
    if len(explicit) != depth - 1:
        raise NestingError(
            f"explicit rule must supply {depth - 1} levels, got {len(explicit)}")
    for ell in range(1, depth):
        fine = tuple(explicit[ell - 1])
        if len(fine) != len(kvs):
            raise NestingError(f"level {ell}: expected {len(kvs)} directions")
        for i, (coarse_kv, fine_kv) in enumerate(zip(kvs, fine)):
            if fine_kv.degree != coarse_kv.degree:
                raise NestingError(
                    f"level {ell}, direction {i}: degree changed")
            if not fine_kv.contains_as_subsequence(coarse_kv):
                raise NestingError(
                    f"level {ell}, direction {i}: knot vector does not refine "
                    "the previous level")
        kvs = fine
        levels.append(TensorLevel(ell, kvs))
    return levels


def extend_level_sequence(levels: Sequence[TensorLevel], depth: int) -> list[TensorLevel]:
    """Extend by dyadic refinement until ``depth`` levels exist."""
    out = list(levels)
    while len(out) < depth:
        kvs = tuple(dyadic_refine(kv) for kv in out[-1].kvs)
        out.append(TensorLevel(len(out), kvs))
    return out


# ---------------------------------------------------------------------------
# parent/child across levels

def tensor_children(indices: Index, coarse: TensorLevel, fine: TensorLevel
                    ) -> list[tuple[Index, Fraction]]:
    """Children of a coarse function with two-scale coefficients.

    Per-direction children combine as products; the coefficient of a
    combination is the product of the univariate coefficients.
    """
    if fine.index != coarse.index + 1:
        raise HierSplineError(
            f"levels {coarse.index} and {fine.index} are not consecutive")
    per_dir = [children_table(ckv, fkv)[j]
               for ckv, fkv, j in zip(coarse.kvs, fine.kvs, indices)]
    out = []
    for combo in itertools.product(*[range(len(row)) for row in reversed(per_dir)]):
        combo = combo[::-1]
        idx = tuple(per_dir[i][c][0] for i, c in enumerate(combo))
        coef = Fraction(1)
        for i, c in enumerate(combo):
            coef *= per_dir[i][c][1]
        out.append((idx, coef))
    return out


def tensor_parents(indices: Index, coarse: TensorLevel, fine: TensorLevel) -> list[Index]:
    """Parents of a fine function, from the univariate endpoint tests."""
    per_dir = [parent_table(ckv, fkv)[j]
               for ckv, fkv, j in zip(coarse.kvs, fine.kvs, indices)]
    return [tuple(per_dir[i][c] for i, c in enumerate(combo))
            for combo in iter_box([range(len(r)) for r in per_dir])]


def support_extension_cell(level: TensorLevel, indices: Index):
    """Closed region covered by supports of all functions acting on the cell."""
    return level.support_extension_box(indices)


# ---------------------------------------------------------------------------
# interval ancestor maps between nested knot vectors

def interval_ancestors(fine_kv: KnotVector, coarse_kv: KnotVector) -> tuple[int, ...]:
    """For each fine interval, the coarse interval containing it."""
    cache = pair_cache(fine_kv, "_interval_ancestors")
    hit = cache.get(coarse_kv)
    if hit is not None:
        return hit
    coarse_cells = coarse_kv.intervals
    lefts = [c.left for c in coarse_cells]
    out = []
    for cell in fine_kv.intervals:
        j = bisect.bisect_right(lefts, cell.left) - 1
        cc = coarse_cells[j]
        if not (cc.left <= cell.left and cell.right <= cc.right):
            raise NestingError(
                f"interval [{cell.left}, {cell.right}] not nested in the "
                "coarser mesh")
        out.append(j)
    table = tuple(out)
    cache[coarse_kv] = table
    return table


def interval_children(coarse_kv: KnotVector, fine_kv: KnotVector) -> tuple[range, ...]:
    """For each coarse interval, the contiguous range of fine intervals in it."""
    cache = pair_cache(coarse_kv, "_interval_children")
    hit = cache.get(fine_kv)
    if hit is not None:
        return hit
    anc = interval_ancestors(fine_kv, coarse_kv)
    n = coarse_kv.num_intervals
    first = [None] * n
    last = [None] * n
    for fine_j, coarse_j in enumerate(anc):
        if first[coarse_j] is None:
            first[coarse_j] = fine_j
        last[coarse_j] = fine_j
    table = tuple(range(a, b + 1) for a, b in zip(first, last))
    cache[fine_kv] = table
    return table


def cell_ancestor(levels: Sequence[TensorLevel], from_level: int, to_level: int,
                  indices: Index) -> Index:
    """Map a cell of ``from_level`` to the cell of ``to_level`` containing it."""
    if to_level > from_level:
        raise HierSplineError("ancestor level must not be finer")
    idx = indices
    for ell in range(from_level, to_level, -1):
        idx = tuple(
            interval_ancestors(levels[ell].kvs[i], levels[ell - 1].kvs[i])[j]
            for i, j in enumerate(idx))
    return idx


def cell_descendant_ranges(levels: Sequence[TensorLevel], from_level: int,
                           to_level: int, indices: Index) -> list[range]:
    """Per-direction fine interval ranges of a coarse cell's descendants."""
    if to_level < from_level:
        raise HierSplineError("descendant level must not be coarser")
    ranges = [range(j, j + 1) for j in indices]
    for ell in range(from_level, to_level):
        new = []
        for i, r in enumerate(ranges):
            table = interval_children(levels[ell].kvs[i], levels[ell + 1].kvs[i])
            new.append(range(table[r.start].start, table[r.stop - 1].stop))
        ranges = new
    return ranges


# ---------------------------------------------------------------------------
# spline evaluation over a level

class TensorSplineEvaluator:
    """Packed per-level arrays feeding the tensor evaluation kernel."""

    def __init__(self, level: TensorLevel):
        self.level = level
        knots = [kv.floats() for kv in level.kvs]
        self.knots_flat = np.concatenate(knots)
        offs = np.zeros(level.dim + 1, dtype=np.int64)
        offs[1:] = np.cumsum([k.size for k in knots])
        self.knot_offsets = offs
        self.degrees = np.array(level.degrees, dtype=np.int64)
        dims = level.num_basis
        strides = [1]
        for n in dims[:-1]:
            strides.append(strides[-1] * n)
        self.strides = np.array(strides, dtype=np.int64)
        self.size = int(np.prod(dims))
        table = list(iter_box([range(p + 1) for p in level.degrees]))
        self.offsets_table = np.array(table, dtype=np.int64).reshape(len(table), level.dim)

    def linear_index(self, indices: Index) -> int:
        return int(sum(i * s for i, s in zip(indices, self.strides)))

    def dense(self, coefficients: Mapping[Index, float]) -> np.ndarray:
        arr = np.zeros(self.size)
        for idx, c in coefficients.items():
            arr[self.linear_index(idx)] = float(c)
        return arr

    def evaluate_dense(self, dense: np.ndarray, points: np.ndarray) -> np.ndarray:
        pts = as_points(points, self.level.dim)
        return kernels.tensor_spline_values(
            dense, self.knots_flat, self.knot_offsets, self.degrees,
            self.strides, self.offsets_table, pts)

    def evaluate(self, coefficients: Mapping[Index, float], points) -> np.ndarray:
        return self.evaluate_dense(self.dense(coefficients), points)


def level_evaluator(level: TensorLevel) -> TensorSplineEvaluator:
    ev = level.__dict__.get("_evaluator")
    if ev is None:
        ev = TensorSplineEvaluator(level)
        level.__dict__["_evaluator"] = ev
    return ev


def as_points(points, dim: int) -> np.ndarray:
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim == 1:
        pts = pts.reshape(-1, 1) if dim == 1 else pts.reshape(1, -1)
    if pts.ndim != 2 or pts.shape[1] != dim:
        raise HierSplineError(f"points must have shape (m, {dim})")
    return np.ascontiguousarray(pts)


def eval_function(level: TensorLevel, indices: Index, points) -> np.ndarray:
    """Evaluate one tensor-product basis function at a batch of points."""
    pts = as_points(points, level.dim)
    out = np.ones(pts.shape[0])
    for i, (kv, j) in enumerate(zip(level.kvs, indices)):
        tau = kv.floats()[j:j + kv.degree + 2]
        out *= kernels.local_values(tau, kv.degree, np.ascontiguousarray(pts[:, i]), 1.0)
    return out


@dataclass(eq=False)
class LevelSpline:
    """A spline of one level given by coefficients over a subset of its basis."""

    level: TensorLevel
    coefficients: dict[Index, float]

    def evaluate(self, points) -> np.ndarray:
        ev = level_evaluator(self.level)
        dense = self.__dict__.get("_dense")
        if dense is None:
            dense = ev.dense(self.coefficients)
            self.__dict__["_dense"] = dense
        return ev.evaluate_dense(dense, points)

    def __call__(self, points) -> np.ndarray:
        return self.evaluate(points)


def sample_points(rng: np.random.Generator, count: int, dim: int) -> np.ndarray:
    """Uniform sample of the unit cube."""
    return rng.random((count, dim))


def random_level_spline(level: TensorLevel, rng: np.random.Generator,
                        support: Sequence[Index] | None = None) -> LevelSpline:
    """Random coefficients over the whole level basis or a given subset."""
    ids = list(support) if support is not None else list(level.function_ids())
    coeffs = {idx: float(rng.uniform(-1.0, 1.0)) for idx in ids}
    return LevelSpline(level, coeffs)
