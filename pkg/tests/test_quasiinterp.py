"""Core domains, dual functionals, level operators and the multiscale one."""

import numpy as np
import pytest

from hiersplines.errors import AdmissibilityError, EvaluationError, HierSplineError
from hiersplines.hierarchy import (
    SubdomainHierarchy,
    active_mesh,
    build_refinable_basis,
)
from hiersplines.quasiinterp import (
    LevelQuasiInterpolant,
    MultiscaleQuasiInterpolant,
    check_admissibility,
    compute_core_domains,
    error_norms,
    lq_norm,
)
from hiersplines.tensor import CellSet, LevelSpline, eval_function, iter_box

from .conftest import corner_hierarchy, make_levels, random_hierarchy


def _sin2(pts):
    out = np.ones(pts.shape[0])
    for i in range(pts.shape[1]):
        out *= np.sin(2 * np.pi * pts[:, i])
    return out


class TestCoreDomains:
    def test_level0_is_whole_domain(self, rng):
        levels, h = random_hierarchy(rng, dim=2)
        core = compute_core_domains(h, levels)
        assert len(core.cells(0)) == len(list(levels[0].cell_ids()))

    def test_single_cell_core_empty(self):
        levels = make_levels(2, 2, 4, 2)
        h = SubdomainHierarchy.from_cells([[(1, 1)]])
        core = compute_core_domains(h, levels)
        assert len(core.cells(1)) == 0
        rep = check_admissibility(h, levels, core)
        assert rep.strictly_admissible and rep.omega_nested

    def test_corner_widths(self):
        levels = make_levels(2, 2, 8, 3)
        h = corner_hierarchy(levels, [4, 4])
        core = compute_core_domains(h, levels)
        # extensions reach two cells beyond, leaving a 6x6 block at level 1
        assert core.cells(1) == frozenset(
            tuple(c) for c in iter_box([range(6)] * 2))

    def test_nested_but_not_admissible(self):
        levels = make_levels(2, 2, 8, 4)
        h = SubdomainHierarchy.from_cells([
            [tuple(c) for c in iter_box([range(6)] * 2)],
            [tuple(c) for c in iter_box([range(11)] * 2)],
            [tuple(c) for c in iter_box([range(21)] * 2)],
        ])
        core = compute_core_domains(h, levels)
        rep = check_admissibility(h, levels, core)
        assert core.nested and not rep.strictly_admissible

    def test_uniform_refinement_strictly_admissible(self):
        levels = make_levels(2, 2, 4, 3)
        h = SubdomainHierarchy.from_cells([
            [tuple(c) for c in levels[0].cell_ids()],
            [tuple(c) for c in levels[1].cell_ids()],
        ])
        rep = check_admissibility(h, levels)
        assert rep.strictly_admissible and rep.omega_nested


class TestDualFunctionals:
    def test_kronecker_pairs(self):
        levels = make_levels(2, 2, 8, 3)
        h = corner_hierarchy(levels, [4, 4])
        core = compute_core_domains(h, levels)
        op = LevelQuasiInterpolant(h, levels, 1, core)
        members = op.members
        worst = 0.0
        for mi in members:
            lam = op.dual_functional(mi)
            for mj in members:
                val = lam(lambda p, mj=mj: eval_function(op.level, mj, p))
                worst = max(worst, abs(val - (1.0 if mi == mj else 0.0)))
        assert worst < 1e-10

    def test_local_support(self):
        levels = make_levels(2, 2, 8, 3)
        h = corner_hierarchy(levels, [4, 4])
        core = compute_core_domains(h, levels)
        op = LevelQuasiInterpolant(h, levels, 1, core)
        m = op.members[0]
        cell = op.anchor_cells[m]
        box = op.level.cell_box(cell)

        def away(p):
            inside = np.ones(p.shape[0], dtype=bool)
            for i, (lo, hi) in enumerate(box):
                inside &= (p[:, i] >= float(lo)) & (p[:, i] <= float(hi))
            return np.where(inside, 0.0, 1.0)

        assert op.dual_functional(m)(away) == 0.0

    def test_constant_one_coefficients(self):
        levels = make_levels(2, 2, 6, 2)
        h = corner_hierarchy(levels, [4])
        core = compute_core_domains(h, levels)
        for ell in range(2):
            op = LevelQuasiInterpolant(h, levels, ell, core)
            out = op.apply(lambda p: np.ones(p.shape[0]))
            for idx, c in out.coefficients.items():
                assert c == pytest.approx(1.0, abs=1e-11)

    def test_nonfinite_callback_raises_with_location(self):
        levels = make_levels(1, 2, 4, 1)
        h = SubdomainHierarchy.from_cells([])
        core = compute_core_domains(h, levels)
        op = LevelQuasiInterpolant(h, levels, 0, core)

        def bad(p):
            out = np.ones(p.shape[0])
            out[p[:, 0] > 0.5] = np.nan
            return out

        with pytest.raises(EvaluationError, match="non-finite"):
            op.apply(bad)


class TestLevelOperator:
    def test_preserves_member_span(self, rng):
        levels = make_levels(2, 2, 8, 2)
        h = corner_hierarchy(levels, [5])
        core = compute_core_domains(h, levels)
        op = LevelQuasiInterpolant(h, levels, 1, core)
        s = LevelSpline(levels[1], {m: float(rng.uniform(-1, 1))
                                    for m in op.members})
        out = op.apply(s.evaluate)
        pts = rng.random((300, 2))
        assert np.abs(out.evaluate(pts) - s.evaluate(pts)).max() < 1e-10

    def test_annihilates_outside_support(self):
        levels = make_levels(2, 2, 8, 2)
        h = corner_hierarchy(levels, [5])
        core = compute_core_domains(h, levels)
        op = LevelQuasiInterpolant(h, levels, 1, core)
        core_cells = core.cells(1)

        def f(p):
            out = np.ones(p.shape[0])
            for i in range(p.shape[0]):
                loc = levels[1].locate(p[i])
                if loc is not None and loc in core_cells:
                    out[i] = 0.0
            return out

        out = op.apply(f)
        assert all(abs(c) == 0.0 for c in out.coefficients.values())

    def test_full_space_reproduced_on_core_only(self, rng):
        levels = make_levels(1, 2, 8, 2)
        h = SubdomainHierarchy.from_cells([[(i,) for i in range(5)]])
        core = compute_core_domains(h, levels)
        op = LevelQuasiInterpolant(h, levels, 1, core)
        s = LevelSpline(levels[1], {i: float(rng.uniform(-1, 1))
                                    for i in levels[1].function_ids()})
        out = op.apply(s.evaluate)
        inside = []
        for c in sorted(core.cells(1)):
            lo, hi = levels[1].cell_box(c)[0]
            inside.extend(np.linspace(float(lo) + 1e-6, float(hi) - 1e-6, 10))
        inside = np.array(inside).reshape(-1, 1)
        assert np.abs(out.evaluate(inside) - s.evaluate(inside)).max() < 1e-10
        # away from the core region the reproduction generally fails
        outside = np.array([[0.95]])
        assert np.abs(out.evaluate(outside) - s.evaluate(outside)).max() > 1e-6


class TestMultiscale:
    def test_reproduces_initial_space_and_polynomials(self, rng):
        levels = make_levels(2, 2, 8, 3)
        h = corner_hierarchy(levels, [4, 4])
        op = MultiscaleQuasiInterpolant(h, levels)
        pts = rng.random((400, 2))
        s0 = LevelSpline(levels[0], {i: float(rng.uniform(-1, 1))
                                     for i in levels[0].function_ids()})
        out = op.apply(s0.evaluate)
        assert np.abs(out.evaluate(pts) - s0.evaluate(pts)).max() < 1e-10
        from hiersplines.functions import get_function
        poly = get_function("poly", 2, degrees=(2, 2))
        out_p = op.apply(poly)
        assert np.abs(out_p.evaluate(pts) - poly(pts)).max() < 1e-10

    def test_output_lies_in_refinable_basis(self):
        levels = make_levels(2, 2, 8, 3)
        h = corner_hierarchy(levels, [4, 4])
        refinable = build_refinable_basis(h, levels)
        op = MultiscaleQuasiInterpolant(h, levels, refinable)
        out = op.apply(_sin2)
        assert out.basis is refinable
        assert set(out.coefficients) <= refinable.member_set

    def test_decomposition_matches_recursion_on_core(self, rng):
        levels = make_levels(2, 2, 8, 3)
        h = corner_hierarchy(levels, [4, 4])
        op = MultiscaleQuasiInterpolant(h, levels)
        parts = op.apply_parts(_sin2)
        for ell in range(h.depth):
            cells = sorted(op.core.cells(ell))
            if not cells:
                continue
            pts = []
            for k in range(0, len(cells), max(1, len(cells) // 20)):
                box = levels[ell].cell_box(cells[k])
                pts.append([rng.uniform(float(lo) + 1e-9, float(hi) - 1e-9)
                            for lo, hi in box])
            pts = np.array(pts)
            dec = op.decomposition_parts(_sin2, ell)
            v_dec = sum(p.evaluate(pts) for p in dec)
            v_rec = sum(p.evaluate(pts) for p in parts)
            assert np.abs(v_dec - v_rec).max() < 1e-10

    def test_refuses_non_nested(self):
        # the second subdomain sticks past the core of the first one, so the
        # chain of core domains breaks
        levels = make_levels(1, 2, 16, 3)
        h = SubdomainHierarchy.from_cells(
            [[(i,) for i in range(10)], [(i,) for i in range(8, 20)]])
        core = compute_core_domains(h, levels)
        assert not core.nested
        with pytest.raises(AdmissibilityError):
            MultiscaleQuasiInterpolant(h, levels).apply_parts(_sin2)


class TestNorms:
    def test_unit_constant(self):
        levels = make_levels(2, 2, 4, 1)
        h = SubdomainHierarchy.from_cells([])
        mesh = active_mesh(h, levels)
        one = lambda p: np.ones(p.shape[0])
        assert error_norms(one, None, 2, mesh=mesh) == pytest.approx(1.0, abs=1e-13)
        assert error_norms(one, None, 1, mesh=mesh) == pytest.approx(1.0, abs=1e-13)
        assert error_norms(one, None, "inf", mesh=mesh) == pytest.approx(1.0)

    def test_zero_for_reproduced_spline(self, rng):
        levels = make_levels(1, 2, 4, 1)
        h = SubdomainHierarchy.from_cells([])
        op = MultiscaleQuasiInterpolant(h, levels)
        s = LevelSpline(levels[0], {i: float(rng.uniform(-1, 1))
                                    for i in levels[0].function_ids()})
        out = op.apply(s.evaluate)
        mesh = active_mesh(h, levels)
        assert error_norms(s.evaluate, out, 2, mesh=mesh) < 1e-12

    def test_sup_norm_of_hat_difference(self):
        # |hat| on a single cell: the maximum sits at the peak
        levels = make_levels(1, 1, 2, 1)
        h = SubdomainHierarchy.from_cells([])
        mesh = active_mesh(h, levels)
        hat = levels[0].kvs[0].local(1)
        f = lambda p: hat.evaluate(p[:, 0])
        region = CellSet(0, frozenset({(0,)}))
        got = lq_norm(f, "inf", mesh, region)
        assert got == pytest.approx(1.0, abs=1e-12)

    def test_region_restriction(self):
        levels = make_levels(1, 1, 4, 1)
        h = SubdomainHierarchy.from_cells([])
        mesh = active_mesh(h, levels)
        f = lambda p: np.where(p[:, 0] < 0.25, 1.0, 0.0)
        region = CellSet(0, frozenset({(0,)}))
        assert lq_norm(f, 2, mesh, region) == pytest.approx(0.5, abs=1e-12)

    def test_rejects_unknown_q(self):
        levels = make_levels(1, 1, 2, 1)
        mesh = active_mesh(SubdomainHierarchy.from_cells([]), levels)
        with pytest.raises(HierSplineError):
            lq_norm(lambda p: np.ones(p.shape[0]), 3, mesh)
