"""Local projectors, per-level quasi-interpolants and the multiscale operator.

Per level, the core domain collects the cells whose support extension
stays inside the level's subdomain; on it the full tensor-product space of
that level is exactly representable in the hierarchical space. Each basis
function acting there gets a dual functional, realized as one row of the
inverse local mass matrix on an anchor cell, reduced to quadrature-ready
coefficients. The per-level operators combine into the multiscale operator
through residual correction; when the core domains are nested its output
lies in the span of the refinable basis and is returned expressed over it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.special import roots_legendre

from .errors import AdmissibilityError, EvaluationError, HierSplineError
from .hierarchy import (
    HierBasis,
    HierSplineFunction,
    HierarchicalMesh,
    SubdomainHierarchy,
    active_mesh,
    build_refinable_basis,
    cell_in_subdomain,
    expand_deactivated,
    validate_hierarchy,
)
from .tensor import (
    CellSet,
    Index,
    LevelSpline,
    TensorFunctionId as Fid,
    TensorLevel,
    cell_ancestor,
    cell_descendant_ranges,
    id_sort_key,
    iter_box,
)
from . import kernels

PointFunction = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class OperatorConfig:
    """Quadrature and sampling knobs.

    quad_increment: extra Gauss points per direction for the dual
        functionals (the default already integrates local mass matrices
        exactly).
    error_quad_increment: extra Gauss points per direction for error
        integrals.
    sup_samples_per_cell: point budget per cell for sup-norm sampling,
        split evenly across directions.
    """

    quad_increment: int = 0
    error_quad_increment: int = 2
    sup_samples_per_cell: int = 1000


DEFAULT_CONFIG = OperatorConfig()


def checked_callable(f: PointFunction) -> PointFunction:
    """Wrap a callback so non-finite outputs raise with the location."""

    def wrapped(pts: np.ndarray) -> np.ndarray:
        vals = np.asarray(f(pts), dtype=np.float64)
        if vals.shape != (pts.shape[0],):
            vals = vals.reshape(pts.shape[0])
        bad = ~np.isfinite(vals)
        if bad.any():
            where = pts[int(np.argmax(bad))]
            raise EvaluationError(
                f"callback returned a non-finite value at {tuple(where)}")
        return vals

    return wrapped


# ---------------------------------------------------------------------------
# core domains and admissibility

@dataclass(frozen=True)
class CoreDomains:
    """Per level, the cells whose support extension stays inside the
    level's subdomain, plus whether the chain is nested top-down."""

    cellsets: tuple[CellSet, ...]
    nested: bool

    def cells(self, ell: int) -> frozenset[Index]:
        return self.cellsets[ell].cells


def compute_core_domains(h: SubdomainHierarchy,
                         levels: Sequence[TensorLevel]) -> CoreDomains:
    validate_hierarchy(h, levels)
    sets: list[CellSet] = []
    for ell in range(h.depth):
        lv = levels[ell]
        if ell == 0:
            sets.append(CellSet(0, frozenset(lv.cell_ids())))
            continue
        pool: set[Index] = set()
        for c in h.subdomain_cells(ell):
            pool.update(iter_box(cell_descendant_ranges(levels, ell - 1, ell, c)))
        keep = set()
        for c in pool:
            ext = lv.support_extension_cell_ranges(c)
            inside = True
            for cc in iter_box(ext):
                if not cell_in_subdomain(h, levels, ell, cc, ell):
                    inside = False
                    break
            if inside:
                keep.add(c)
        sets.append(CellSet(ell, frozenset(keep)))
    nested = True
    for ell in range(h.depth - 1):
        fine = sets[ell + 1].cells
        coarse = sets[ell].cells
        for c in fine:
            if cell_ancestor(levels, ell + 1, ell, c) not in coarse:
                nested = False
                break
        if not nested:
            break
    return CoreDomains(tuple(sets), nested)


@dataclass(frozen=True)
class AdmissibilityReport:
    strictly_admissible: bool
    omega_nested: bool


def check_admissibility(h: SubdomainHierarchy, levels: Sequence[TensorLevel],
                        core: CoreDomains | None = None) -> AdmissibilityReport:
    """Strict admissibility (each subdomain inside the previous core) and
    core nesting; strictness implies nesting, which is asserted."""
    if core is None:
        core = compute_core_domains(h, levels)
    strict = True
    for ell in range(1, h.depth):
        cells = h.subdomain_cells(ell)
        if not cells <= core.cells(ell - 1):
            strict = False
            break
    if strict and not core.nested:
        raise HierSplineError(
            "strictly admissible mesh with non-nested core domains; "
            "this should be impossible")
    return AdmissibilityReport(strict, core.nested)


# ---------------------------------------------------------------------------
# local projection workspaces

@lru_cache(maxsize=None)
def _gauss_base(count: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre rule mapped to [0, 1]."""
    t, w = roots_legendre(count)
    return 0.5 * (t + 1.0), 0.5 * w


def _gauss_rule(lo: Fraction, hi: Fraction, count: int) -> tuple[np.ndarray, np.ndarray]:
    t, w = _gauss_base(count)
    a, b = float(lo), float(hi)
    return a + (b - a) * t, (b - a) * w


class LocalProjectionWorkspace:
    """L2 projection onto the local polynomial space of one cell.

    The local basis consists of the level functions not vanishing on the
    cell; its mass matrix is symmetric positive definite and the chosen
    Gauss rule integrates products of two local functions exactly.
    """

    def __init__(self, level: TensorLevel, cell: Index, config: OperatorConfig):
        self.level = level
        self.cell = cell
        d = level.dim
        func_ranges = level.functions_on_cell(cell)
        self.local_functions: list[Index] = list(iter_box(func_ranges))
        counts = [kv.degree + 1 + config.quad_increment for kv in level.kvs]
        pts_1d, wts_1d, bas_1d = [], [], []
        for i, kv in enumerate(level.kvs):
            c = kv.intervals[cell[i]]
            x, w = _gauss_rule(c.left, c.right, counts[i])
            pts_1d.append(x)
            wts_1d.append(w)
            spans = np.full(x.shape, c.flat_index, dtype=np.int64)
            bas_1d.append(kernels.basis_columns(kv.floats(), kv.degree, x, spans))
        node_combos = np.array(list(iter_box([range(len(p)) for p in pts_1d])), dtype=np.int64)
        func_combos = np.array(list(iter_box([range(len(r)) for r in func_ranges])), dtype=np.int64)
        m = node_combos.shape[0]
        n = func_combos.shape[0]
        nodes = np.empty((m, d))
        weights = np.ones(m)
        for i in range(d):
            nodes[:, i] = pts_1d[i][node_combos[:, i]]
            weights *= wts_1d[i][node_combos[:, i]]
        bas = np.ones((m, n))
        for i in range(d):
            bas *= bas_1d[i][node_combos[:, i]][:, func_combos[:, i]]
        self.nodes = nodes
        self.weights = weights
        self.basis_values = bas
        self.mass = bas.T @ (bas * weights[:, None])
        self.mass = 0.5 * (self.mass + self.mass.T)
        # Jacobi equilibration keeps the factorization well conditioned for
        # higher degrees, where near-vanishing local functions skew the mass
        self._scale = 1.0 / np.sqrt(np.diag(self.mass))
        scaled = self.mass * np.outer(self._scale, self._scale)
        self._factor = cho_factor(0.5 * (scaled + scaled.T))
        self._rows: dict[int, np.ndarray] = {}

    def _solve(self, rhs: np.ndarray) -> np.ndarray:
        d = self._scale
        x = d * cho_solve(self._factor, d * rhs)
        resid = rhs - self.mass @ x
        x += d * cho_solve(self._factor, d * resid)
        return x

    def local_index(self, indices: Index) -> int:
        return self.local_functions.index(indices)

    def moments(self, values_at_nodes: np.ndarray) -> np.ndarray:
        return self.basis_values.T @ (self.weights * values_at_nodes)

    def projection_coefficients(self, f: PointFunction) -> np.ndarray:
        vals = f(self.nodes)
        return self._solve(self.moments(vals))

    def dual_row(self, i0: int) -> np.ndarray:
        """Quadrature-ready coefficients of the i0-th dual functional."""
        row = self._rows.get(i0)
        if row is None:
            e = np.zeros(len(self.local_functions))
            e[i0] = 1.0
            w = self._solve(e)
            row = self.weights * (self.basis_values @ w)
            self._rows[i0] = row
        return row


# ---------------------------------------------------------------------------
# per-level operators

class LevelQuasiInterpolant:
    """The quasi-interpolant of one level: dual functionals on anchor cells
    for every basis function that owns a full cell inside the core domain.

    Among a function's candidate cells the anchor is the one whose center
    is closest to the support center (ties broken by the canonical cell
    order). Anchoring each function where it is substantial keeps the dual
    rows small; anchoring by position alone drags boundary-heavy cells in
    and costs several digits for higher degrees.
    """

    def __init__(self, h: SubdomainHierarchy, levels: Sequence[TensorLevel],
                 ell: int, core: CoreDomains,
                 config: OperatorConfig = DEFAULT_CONFIG):
        self.level = levels[ell]
        self.level_index = ell
        self.config = config
        candidates: dict[Index, list[Index]] = {}
        for cell in sorted(core.cells(ell), key=id_sort_key):
            for fidx in iter_box(self.level.functions_on_cell(cell)):
                candidates.setdefault(fidx, []).append(cell)
        anchor: dict[Index, Index] = {}
        for fidx, cells in candidates.items():
            ranges = self.level.function_cell_ranges(fidx)
            center = [r.start + r.stop - 1 for r in ranges]  # doubled index

            def badness(cell: Index):
                dist = 0
                for i, j in enumerate(cell):
                    delta = 2 * j - center[i]
                    dist += delta * delta
                return (dist, id_sort_key(cell))

            anchor[fidx] = min(cells, key=badness)
        self.members: tuple[Index, ...] = tuple(sorted(anchor, key=id_sort_key))
        self.anchor_cells = anchor
        self._workspaces: dict[Index, LocalProjectionWorkspace] = {}

    def __len__(self) -> int:
        return len(self.members)

    def workspace(self, cell: Index) -> LocalProjectionWorkspace:
        ws = self._workspaces.get(cell)
        if ws is None:
            ws = LocalProjectionWorkspace(self.level, cell, self.config)
            self._workspaces[cell] = ws
        return ws

    def dual_functional(self, indices: Index) -> Callable[[PointFunction], float]:
        """The functional dual to the given member on its anchor cell."""
        if indices not in self.anchor_cells:
            raise HierSplineError(
                f"function {indices} has no full cell inside the core domain "
                f"of level {self.level_index}")
        ws = self.workspace(self.anchor_cells[indices])
        row = ws.dual_row(ws.local_index(indices))
        nodes = ws.nodes

        def functional(f: PointFunction) -> float:
            return float(row @ checked_callable(f)(nodes))

        return functional

    def apply(self, f: PointFunction) -> LevelSpline:
        """Coefficient-wise application; the zero spline when no member.

        The callback is evaluated once over the concatenated anchor nodes.
        """
        g = checked_callable(f)
        cells = sorted(set(self.anchor_cells.values()), key=id_sort_key)
        if not cells:
            return LevelSpline(self.level, {})
        node_blocks = [self.workspace(c).nodes for c in cells]
        stops = np.cumsum([b.shape[0] for b in node_blocks])
        all_vals = g(np.vstack(node_blocks))
        values: dict[Index, np.ndarray] = {}
        start = 0
        for cell, stop in zip(cells, stops):
            values[cell] = all_vals[start:stop]
            start = stop
        coeffs: dict[Index, float] = {}
        for m in self.members:
            cell = self.anchor_cells[m]
            ws = self.workspace(cell)
            row = ws.dual_row(ws.local_index(m))
            coeffs[m] = float(row @ values[cell])
        return LevelSpline(self.level, coeffs)


# ---------------------------------------------------------------------------
# the multiscale operator

class MultiscaleQuasiInterpolant:
    """Residual-corrected composition of the per-level operators.

    Refuses to run when the core domains are not nested, because both the
    restricted decomposition and the output's membership in the refinable
    space hinge on that chain.
    """

    def __init__(self, h: SubdomainHierarchy, levels: Sequence[TensorLevel],
                 refinable: HierBasis | None = None,
                 config: OperatorConfig = DEFAULT_CONFIG):
        validate_hierarchy(h, levels)
        self.hierarchy = h
        self.levels = tuple(levels[:h.depth])
        self.config = config
        self.core = compute_core_domains(h, levels)
        self.report = check_admissibility(h, levels, self.core)
        self.refinable = refinable if refinable is not None else build_refinable_basis(h, levels)
        self.stages = [LevelQuasiInterpolant(h, levels, ell, self.core, config)
                       for ell in range(h.depth)]

    def _require_nested(self):
        if not self.report.omega_nested:
            raise AdmissibilityError(
                "core domains are not nested; the multiscale operator is "
                "not defined on this hierarchy")

    def apply_parts(self, f: PointFunction) -> list[LevelSpline]:
        """One residual-corrected spline per level."""
        self._require_nested()
        g = checked_callable(f)
        parts: list[LevelSpline] = []

        def residual(pts: np.ndarray) -> np.ndarray:
            vals = g(pts)
            for part in parts:
                vals = vals - part.evaluate(pts)
            return vals

        for stage in self.stages:
            parts.append(stage.apply(residual))
        return parts

    def apply(self, f: PointFunction) -> HierSplineFunction:
        """The interpolant expressed over the refinable basis."""
        parts = self.apply_parts(f)
        return self.express_over_refinable(parts)

    def express_over_refinable(self, parts: Sequence[LevelSpline]) -> HierSplineFunction:
        basis = self.refinable
        coeffs: dict[Fid, float] = {}

        def add(fid: Fid, value: float):
            coeffs[fid] = coeffs.get(fid, 0.0) + value

        for part in parts:
            ell = part.level.index
            for idx, c in part.coefficients.items():
                fid = Fid(ell, idx)
                if fid in basis:
                    add(fid, c)
                else:
                    for g, cg in expand_deactivated(fid, basis).items():
                        add(g, c * float(cg))
        return HierSplineFunction(basis, coeffs)

    def stage_value(self, f: PointFunction, ell: int) -> LevelSpline:
        """Direct application of the level operator, outside the recursion."""
        return self.stages[ell].apply(f)

    def decomposition_parts(self, f: PointFunction, ell: int) -> list[LevelSpline]:
        """The restricted form valid on the level's core domain: the level
        operator plus one correction per deeper level, each built from
        direct applications only."""
        self._require_nested()
        g = checked_callable(f)
        parts = [self.stages[ell].apply(g)]
        for k in range(ell + 1, self.hierarchy.depth):
            prev = self.stages[k - 1].apply(g)

            def corrected(pts: np.ndarray, _prev=prev) -> np.ndarray:
                return g(pts) - _prev.evaluate(pts)

            parts.append(self.stages[k].apply(corrected))
        return parts


# ---------------------------------------------------------------------------
# norms

def _as_q(q) -> float:
    if q in (1, 2):
        return float(q)
    if q in ("inf", "Inf", "INF", np.inf, math.inf, float("inf")):
        return math.inf
    raise HierSplineError(f"only q in {{1, 2, inf}} supported, got {q!r}")


def integration_cells(mesh: HierarchicalMesh, region: CellSet | None
                      ) -> list[tuple[int, Index]]:
    """Cells covering the region on each of which every hierarchical spline
    of this mesh is a single polynomial.

    A region cell sitting inside an active cell is used as is; otherwise it
    splits into its children until the pieces align with the active mesh.
    """
    if region is None:
        return list(mesh.cells())
    levels = mesh.levels
    active_sets = [set(a) for a in mesh.active]
    out: list[tuple[int, Index]] = []

    def resolve(level: int, idx: Index):
        for k in range(level, -1, -1):
            if cell_ancestor(levels, level, k, idx) in active_sets[k]:
                out.append((level, idx))
                return
        if level + 1 >= len(levels):
            raise HierSplineError(
                f"cell {idx} of level {level} is not covered by the active mesh")
        for child in iter_box(cell_descendant_ranges(levels, level, level + 1, idx)):
            resolve(level + 1, child)

    for idx in region.sorted():
        resolve(region.level, idx)
    return out


def _cells_geometry(level: TensorLevel, idxs: np.ndarray
                    ) -> tuple[np.ndarray, np.ndarray]:
    """Lower corners and edge lengths for an (n, d) array of cell indices."""
    n = idxs.shape[0]
    lows = np.empty((n, level.dim))
    spans = np.empty((n, level.dim))
    for i, kv in enumerate(level.kvs):
        bp = kv.breakpoint_floats()
        lows[:, i] = bp[idxs[:, i]]
        spans[:, i] = bp[idxs[:, i] + 1] - bp[idxs[:, i]]
    return lows, spans


def _unit_rule(level: TensorLevel, counts: Sequence[int]
               ) -> tuple[np.ndarray, np.ndarray]:
    """Tensor Gauss rule on the unit cube, nodes (m, d) and weights (m,)."""
    per = [_gauss_base(c) for c in counts]
    combos = np.array(list(iter_box([range(c) for c in counts])), dtype=np.int64)
    nodes = np.empty((combos.shape[0], level.dim))
    weights = np.ones(combos.shape[0])
    for i in range(level.dim):
        nodes[:, i] = per[i][0][combos[:, i]]
        weights *= per[i][1][combos[:, i]]
    return nodes, weights


def _unit_grid(dim: int, per_direction: int) -> np.ndarray:
    axis = np.linspace(0.0, 1.0, per_direction)
    combos = np.array(list(iter_box([range(per_direction)] * dim)), dtype=np.int64)
    nodes = np.empty((combos.shape[0], dim))
    for i in range(dim):
        nodes[:, i] = axis[combos[:, i]]
    return nodes


_BATCH_POINTS = 1 << 20


def _grouped_cells(cells):
    groups: dict[int, list] = {}
    for ell, idx in cells:
        groups.setdefault(ell, []).append(idx)
    return groups


def lq_norm(f: PointFunction, q, mesh: HierarchicalMesh,
            region: CellSet | None = None,
            config: OperatorConfig = DEFAULT_CONFIG) -> float:
    """L^q norm over a region by per-cell Gauss quadrature, or the maximum
    over a dense sample for q = inf. Cells are batched level by level."""
    qv = _as_q(q)
    g = checked_callable(f)
    cells = integration_cells(mesh, region)
    if not cells:
        return 0.0
    groups = _grouped_cells(cells)
    if math.isinf(qv):
        d = mesh.levels[0].dim
        per_dir = max(2, math.ceil(config.sup_samples_per_cell ** (1.0 / d)))
        base = _unit_grid(d, per_dir)
        worst = 0.0
        for ell, idxs in groups.items():
            lv = mesh.levels[ell]
            lows, spans = _cells_geometry(lv, np.array(idxs, dtype=np.int64))
            chunk = max(1, _BATCH_POINTS // base.shape[0])
            for k in range(0, lows.shape[0], chunk):
                nodes = lows[k:k + chunk, None, :] \
                    + spans[k:k + chunk, None, :] * base[None, :, :]
                vals = g(nodes.reshape(-1, d))
                worst = max(worst, float(np.abs(vals).max()))
        return worst
    total = 0.0
    for ell, idxs in groups.items():
        lv = mesh.levels[ell]
        counts = [kv.degree + 1 + config.error_quad_increment for kv in lv.kvs]
        base, base_w = _unit_rule(lv, counts)
        lows, spans = _cells_geometry(lv, np.array(idxs, dtype=np.int64))
        vols = spans.prod(axis=1)
        chunk = max(1, _BATCH_POINTS // base.shape[0])
        for k in range(0, lows.shape[0], chunk):
            nodes = lows[k:k + chunk, None, :] \
                + spans[k:k + chunk, None, :] * base[None, :, :]
            vals = g(nodes.reshape(-1, lv.dim)).reshape(-1, base.shape[0])
            total += float(vols[k:k + chunk] @ (np.abs(vals) ** qv @ base_w))
    return total ** (1.0 / qv)


def error_norms(f: PointFunction, s: HierSplineFunction | None, q,
                mesh: HierarchicalMesh | None = None,
                region: CellSet | None = None,
                config: OperatorConfig = DEFAULT_CONFIG) -> float:
    """``||f - s||`` in L^q over the region (the whole domain by default)."""
    if mesh is None:
        if s is None:
            raise HierSplineError("need either a spline or a mesh")
        mesh = active_mesh(s.basis.hierarchy, s.basis.levels)
    g = checked_callable(f)
    if s is None:
        diff = g
    else:
        def diff(pts: np.ndarray) -> np.ndarray:
            return g(pts) - s.evaluate(pts)
    return lq_norm(diff, q, mesh, region, config)
