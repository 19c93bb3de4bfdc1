"""Tensor-product levels, nesting, children products and cell geometry."""

from fractions import Fraction as F

import numpy as np
import pytest

from hiersplines.errors import NestingError
from hiersplines.tensor import (
    build_level_sequence,
    cell_ancestor,
    cell_descendant_ranges,
    eval_function,
    extend_level_sequence,
    id_sort_key,
    iter_box,
    level_evaluator,
    support_extension_cell,
    tensor_children,
    tensor_parents,
)
from hiersplines.univariate import (
    children_with_coefficients,
    make_open_knot_vector,
    uniform_open_knot_vector,
)

from .conftest import make_levels


class TestLevelSequence:
    def test_dyadic_counts(self):
        levels = make_levels(2, 2, 4, 3)
        assert [lv.num_cells for lv in levels] == [(4, 4), (8, 8), (16, 16)]

    def test_single_level(self):
        levels = make_levels(2, 2, 4, 1)
        assert len(levels) == 1

    def test_explicit_nested_ok(self):
        kv0 = uniform_open_knot_vector(2, 2)
        kv1 = make_open_knot_vector(2, ["0", "1/4", "1/2", "1"])
        levels = build_level_sequence([kv0], 2, [(kv1,)])
        assert levels[1].kvs[0] is kv1

    def test_explicit_dropped_knot_rejected(self):
        kv0 = uniform_open_knot_vector(2, 2)
        bad = make_open_knot_vector(2, ["0", "1/4", "3/4", "1"])
        with pytest.raises(NestingError, match="level 1, direction 0"):
            build_level_sequence([kv0], 2, [(bad,)])

    def test_extend_by_dyadic(self):
        levels = make_levels(1, 1, 2, 1)
        out = extend_level_sequence(levels, 3)
        assert [lv.num_cells[0] for lv in out] == [2, 4, 8]


class TestTensorChildren:
    def test_interior_outer_product(self):
        levels = make_levels(2, 2, 8, 2)
        kids = tensor_children((4, 4), levels[0], levels[1])
        assert len(kids) == 16
        products = sorted({c for _, c in kids})
        assert products == [F(1, 16), F(3, 16), F(9, 16)]
        # for a fixed child the coefficients over its parents sum to one,
        # which is what preserves the partition of unity
        child = (9, 9)
        total = F(0)
        for p in tensor_parents(child, levels[0], levels[1]):
            row = dict(tensor_children(p, levels[0], levels[1]))
            total += row[child]
        assert total == 1

    def test_reduces_to_univariate_in_1d(self):
        levels = make_levels(1, 2, 5, 2)
        kids = tensor_children((2,), levels[0], levels[1])
        uni = children_with_coefficients(levels[0].kvs[0].local(2),
                                         levels[1].kvs[0])
        assert [(i[0], c) for i, c in kids] == [(k.index, c) for k, c in uni]

    def test_support_containment_and_pointwise(self):
        levels = make_levels(2, (2, 1), (4, 5), 2)
        rng = np.random.default_rng(0)
        pts = rng.random((300, 2))
        for idx in [(0, 0), (2, 3), (5, 4)]:
            kids = tensor_children(idx, levels[0], levels[1])
            pbox = levels[0].support_box(idx)
            acc = np.zeros(300)
            for cidx, c in kids:
                cbox = levels[1].support_box(cidx)
                for (plo, phi), (clo, chi) in zip(pbox, cbox):
                    assert plo <= clo and chi <= phi
                acc += float(c) * eval_function(levels[1], cidx, pts)
            want = eval_function(levels[0], idx, pts)
            assert np.abs(acc - want).max() < 1e-12

    def test_parents_and_children_consistent(self):
        levels = make_levels(2, (1, 2), 3, 2)
        for idx in iter_box([range(n) for n in levels[1].num_basis]):
            for p in tensor_parents(idx, levels[0], levels[1]):
                kids = {i for i, _ in tensor_children(p, levels[0], levels[1])}
                assert idx in kids


class TestCells:
    def test_support_extension_interior(self):
        levels = make_levels(1, 2, 8, 1)
        box = support_extension_cell(levels[0], (4,))
        assert box == ((F(2, 8), F(7, 8)),)

    def test_support_extension_boundary_clipped(self):
        levels = make_levels(1, 2, 8, 1)
        box = support_extension_cell(levels[0], (0,))
        assert box == ((F(0), F(3, 8)),)

    def test_support_extension_is_tensor_product(self):
        levels = make_levels(2, (2, 1), 6, 1)
        box = support_extension_cell(levels[0], (3, 2))
        bx = support_extension_cell(make_levels(1, 2, 6, 1)[0], (3,))
        by = support_extension_cell(make_levels(1, 1, 6, 1)[0], (2,))
        assert box == (bx[0], by[0])

    def test_ancestors_and_descendants(self):
        levels = make_levels(2, 1, 3, 3)
        assert cell_ancestor(levels, 2, 0, (11, 2)) == (2, 0)
        ranges = cell_descendant_ranges(levels, 0, 2, (2, 0))
        assert [tuple(r) for r in ranges] == [(8, 9, 10, 11), (0, 1, 2, 3)]

    def test_cell_volume(self):
        levels = make_levels(2, 1, (2, 4), 1)
        assert levels[0].cell_volume((0, 0)) == F(1, 8)


class TestEvaluator:
    def test_partition_of_unity_multivariate(self):
        rng = np.random.default_rng(4)
        for dim, degrees in [(1, 2), (2, (2, 3)), (3, (1, 2, 1))]:
            levels = make_levels(dim, degrees, 2, 2)
            pts = rng.random((500, dim))
            for lv in levels:
                ev = level_evaluator(lv)
                vals = ev.evaluate_dense(np.ones(ev.size), pts)
                assert np.abs(vals - 1.0).max() < 1e-12

    def test_canonical_order_first_direction_fastest(self):
        levels = make_levels(2, 1, 2, 1)
        ids = list(levels[0].function_ids())
        assert ids[0] == (0, 0) and ids[1] == (1, 0)
        assert ids == sorted(ids, key=id_sort_key)

    def test_local_linear_independence_on_cell(self):
        rng = np.random.default_rng(8)
        levels = make_levels(2, 2, 4, 1)
        lv = levels[0]
        cell = (1, 2)
        funcs = list(iter_box(lv.functions_on_cell(cell)))
        box = lv.cell_box(cell)
        pts = np.column_stack([
            rng.uniform(float(lo), float(hi), len(funcs)) for lo, hi in box])
        mat = np.column_stack([eval_function(lv, f, pts) for f in funcs])
        assert np.linalg.matrix_rank(mat) == len(funcs)
