from pathlib import Path

import numpy as np
import pytest

from hiersplines import kernels
from hiersplines.fixtures import Fixture, load_fixture
from hiersplines.hierarchy import SubdomainHierarchy
from hiersplines.tensor import build_level_sequence, cell_descendant_ranges, iter_box
from hiersplines.univariate import uniform_open_knot_vector

FIXTURE_DIR = Path(__file__).resolve().parent.parent / "fixtures"


@pytest.fixture(scope="session", autouse=True)
def warm_kernels():
    """Trigger JIT compilation once so timed tests measure steady state."""
    knots = np.array([0.0, 0.0, 0.0, 0.5, 1.0, 1.0, 1.0])
    xs = np.linspace(0.0, 1.0, 7)
    spans = kernels.find_spans(knots, 2, xs)
    kernels.basis_columns(knots, 2, xs, spans)
    kernels.local_values(knots[:4], 2, xs, 1.0)
    levels = build_level_sequence([uniform_open_knot_vector(2, 2)] * 2, 1)
    from hiersplines.tensor import level_evaluator
    ev = level_evaluator(levels[0])
    ev.evaluate_dense(np.ones(ev.size), np.column_stack([xs, xs]))
    ev1 = level_evaluator(build_level_sequence([uniform_open_knot_vector(1, 2)], 1)[0])
    ev1.evaluate_dense(np.ones(ev1.size), xs.reshape(-1, 1))
    yield


def repo_fixture(name: str) -> Fixture:
    return load_fixture(FIXTURE_DIR / f"{name}.json")


@pytest.fixture
def rng():
    return np.random.default_rng(20240831)


def make_levels(dim, degrees, intervals, depth):
    if isinstance(degrees, int):
        degrees = [degrees] * dim
    if isinstance(intervals, int):
        intervals = [intervals] * dim
    initial = [uniform_open_knot_vector(p, m) for p, m in zip(degrees, intervals)]
    return build_level_sequence(initial, depth)


def corner_hierarchy(levels, widths):
    """Nested corner blocks; widths[ell-1] counts cells per direction of
    subdomain ell at its own granularity."""
    dim = levels[0].dim
    subs = []
    for w in widths:
        subs.append([tuple(c) for c in iter_box([range(w)] * dim)])
    return SubdomainHierarchy.from_cells(subs)


def random_hierarchy(rng, dim=None, depth=None, degrees=None):
    """A valid random hierarchy over a dyadic level sequence."""
    dim = dim if dim is not None else int(rng.integers(1, 3))
    depth = depth if depth is not None else int(rng.integers(2, 5))
    if degrees is None:
        degrees = [int(rng.integers(1, 4)) for _ in range(dim)]
    intervals = [int(rng.integers(2, 5)) for _ in range(dim)]
    initial = [uniform_open_knot_vector(p, m) for p, m in zip(degrees, intervals)]
    levels = build_level_sequence(initial, depth)
    subs = []
    pool = [tuple(c) for c in levels[0].cell_ids()]
    for ell in range(1, depth):
        if not pool:
            break
        take = rng.random(len(pool)) < 0.6
        picked = [c for c, t in zip(pool, take) if t]
        if not picked and len(pool) > 0:
            picked = [pool[int(rng.integers(0, len(pool)))]]
        subs.append(picked)
        nxt = []
        for c in picked:
            nxt.extend(iter_box(cell_descendant_ranges(levels, ell - 1, ell, c)))
        pool = nxt
    h = SubdomainHierarchy.from_cells(subs)
    return levels, h


def random_enlargement(rng, levels, h):
    """Random additions keeping all constraints, sometimes a deeper level."""
    additions = {}
    enlarged = [set(s) for s in h.subdomains]
    for ell in range(1, h.depth):
        if ell == 1:
            pool = [tuple(c) for c in levels[0].cell_ids()]
        else:
            pool = []
            for c in enlarged[ell - 2]:
                pool.extend(iter_box(cell_descendant_ranges(levels, ell - 2, ell - 1, c)))
        fresh = [c for c in pool if c not in enlarged[ell - 1]]
        if fresh:
            take = rng.random(len(fresh)) < 0.25
            picked = [c for c, t in zip(fresh, take) if t]
            if picked:
                additions[ell] = picked
                enlarged[ell - 1].update(picked)
    new_deepest = None
    if rng.random() < 0.5:
        grain = h.depth - 1  # the new deepest subdomain lives on this level
        if h.depth == 1:
            pool = [tuple(c) for c in levels[0].cell_ids()]
        else:
            pool = []
            for c in enlarged[h.depth - 2]:
                pool.extend(iter_box(
                    cell_descendant_ranges(levels, grain - 1, grain, c)))
        if pool:
            take = rng.random(len(pool)) < 0.3
            picked = [c for c, t in zip(pool, take) if t]
            if picked:
                new_deepest = picked
    return additions, new_deepest
