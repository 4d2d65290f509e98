import math

import numpy as np
import pytest
import scipy.ndimage
from hypothesis import given, strategies as st

from lyapta.partition import (CORE, EXTERIOR, PartitionError, SliceFamily, adjacency, build_partition,
                              check_bisimilarity_condition, check_determinism, check_refinable_precondition,
                              dump_partition, initial_locations, locate, locate_many, refine)
from lyapta.system import QuadraticLyapunov


def test_1d_slice_splits_into_two_cells(oned):
    _, _, part = oned
    cells = part.cells[(2,)]
    assert len(cells) == 2
    xs = [part.points[c.grid_mask, 0] for c in cells]
    lo, hi = sorted(xs, key=lambda x: x.mean())
    assert lo.min() == pytest.approx(-2.0) and lo.max() == pytest.approx(-1.42)
    assert hi.min() == pytest.approx(1.42) and hi.max() == pytest.approx(2.0)
    assert len(part.location_ids) == 6


def test_quadrant_extended_cell_has_four_components(quadrant):
    _, _, part = quadrant
    assert len(part.cells[(1, 1)]) == 4
    reps = np.array([c.representative for c in part.cells[(1, 1)]])
    assert sorted(map(tuple, np.sign(reps))) == [(-1, -1), (-1, 1), (1, -1), (1, 1)]


def test_annulus_is_one_cell():
    fam = SliceFamily(QuadraticLyapunov(np.eye(2), 1), (0.5, 2))
    part = build_partition([fam], [(-2, 2), (-2, 2)], 0.05)
    assert len(part.cells[(1,)]) == 1


def test_cells_match_flood_fill_oracle(quadrant):
    _, _, part = quadrant
    for g, cells in part.cells.items():
        ext = np.all(part.bands == np.array(g), axis=1).reshape(part.shape)
        _, k = scipy.ndimage.label(ext)
        assert k == len(cells)
        union = np.zeros(len(part.points), dtype=bool)
        for c in cells:
            assert not union[c.grid_mask].any()
            union[c.grid_mask] = True
        assert np.array_equal(union, ext.ravel())


def test_every_grid_point_has_one_region(quadrant):
    _, _, part = quadrant
    assert np.all(part.location >= 0)
    counts = np.bincount(part.location, minlength=len(part.location_ids))
    assert counts.sum() == len(part.points)


def test_locate_examples(oned):
    _, _, part = oned
    right = [c.id for c in part.cells[(2,)] if c.representative[0] > 0][0]
    assert locate(part, [1.7]) == right
    assert locate(part, [0.0]) == CORE
    assert locate(part, [2.4]) == EXTERIOR
    with pytest.raises(ValueError):
        locate(part, [3.0])
    assert locate_many(part, [[3.0]], outside="exterior")[0] == part.location_index(EXTERIOR)


@given(st.floats(-2.5, 2.5))
def test_locate_agrees_with_bands(x):
    fam = SliceFamily(QuadraticLyapunov([[1.0]], 1), (1, 2, 4))
    part = _oned_part()
    loc = locate(part, [x])
    psi = x * x
    if psi < 1:
        assert loc == CORE
    elif psi > 4:
        assert loc == EXTERIOR
    else:
        g = part.cell_by_id(loc).extended_index[0]
        assert fam.levels[g - 1] <= psi <= fam.levels[g] + 1e-12
        assert np.sign(part.cell_by_id(loc).representative[0]) == np.sign(x)


_CACHE = {}


def _oned_part():
    if "p" not in _CACHE:
        fam = SliceFamily(QuadraticLyapunov([[1.0]], 1), (1, 2, 4))
        _CACHE["p"] = build_partition([fam], [(-2.5, 2.5)], 0.01)
    return _CACHE["p"]


def test_determinism_examples(oned, quadrant):
    assert check_determinism(oned[2])
    merged = oned[2].merged([(2,)])
    res = check_determinism(merged)
    assert not res and res.witness_cell == "e2h0" and res.components == 2
    assert check_determinism(quadrant[2])


def test_bisimilarity_examples(oned, quadrant):
    assert check_bisimilarity_condition(oned[2])
    assert check_bisimilarity_condition(quadrant[2])


def test_bisimilarity_fixture_fails():
    # psi = x^2, slice [1, 4]: the right component is cut off from its exit
    # level by replacing it with a piece that stays away from x = 1
    fam = SliceFamily(QuadraticLyapunov([[1.0]], 1), (1, 4))
    part = build_partition([fam], [(-2.5, 2.5)], 0.01)
    left, right = sorted(part.cells[(1,)], key=lambda c: c.representative[0])
    far = right.grid_mask[part.points[right.grid_mask, 0] > 1.5]
    near = right.grid_mask[part.points[right.grid_mask, 0] <= 1.5]
    from lyapta.partition import Cell
    cells = dict(part.cells)
    cells[(1,)] = [left, Cell((1,), 1, far, part.points[far[0]]), Cell((1,), 2, near, part.points[near[0]])]
    assert not check_bisimilarity_condition(part.with_cells(cells))


def test_refinable_precondition(oned, quadrant):
    assert check_refinable_precondition(oned[2])
    assert check_refinable_precondition(quadrant[2])
    one = SliceFamily(QuadraticLyapunov(np.eye(2), 1), (0.5, 2))
    assert not check_refinable_precondition(build_partition([one], [(-2, 2)] * 2, 0.05))


def test_refine_examples():
    fam = SliceFamily(QuadraticLyapunov([[1.0]], 1), (1, 2, 4))
    assert np.allclose(refine(fam).levels, [1, math.sqrt(2), 2, 2 * math.sqrt(2), 4])
    assert refine(fam, [3]).levels == (1, 2, 3, 4)
    with pytest.raises(PartitionError):
        refine(fam, [2])


@given(st.lists(st.floats(1.01, 50), min_size=2, max_size=6, unique=True))
def test_refinement_keeps_old_levels(levels):
    levels = sorted(levels)
    if any(b / a < 1.001 for a, b in zip(levels, levels[1:])):
        return
    fam = SliceFamily(QuadraticLyapunov([[1.0]], 1), tuple(levels))
    r = refine(fam)
    assert set(fam.levels) <= set(r.levels) and len(r.levels) == 2 * len(levels) - 1


def test_build_errors():
    fam = SliceFamily(QuadraticLyapunov([[1.0]], 1), (1.001, 1.002, 4))
    with pytest.raises(PartitionError, match="no grid point"):
        build_partition([fam], [(-2.5, 2.5)], 0.01)
    with pytest.raises(PartitionError):
        SliceFamily(QuadraticLyapunov([[1.0]], 1), (2, 1))
    with pytest.raises(PartitionError):
        build_partition([fam], [(-2.5, 2.5), (0, 1)], 0.01)


def test_initial_locations(oned):
    _, _, part = oned
    assert initial_locations(part, [(1.414, 2.0)]) == ["e2h1"]
    with pytest.raises(PartitionError, match="not a union"):
        initial_locations(part, [(1.5, 2.0)])


def test_adjacency_is_symmetric_and_local(oned):
    _, _, part = oned
    adj = adjacency(part)
    assert all((b, a) in adj for a, b in adj)
    i = part.location_index
    assert (i("e2h1"), i("e1h1")) in adj
    assert (i("e2h1"), i("e1h0")) not in adj


def test_fingerprint_depends_on_grid_step():
    fam = SliceFamily(QuadraticLyapunov([[1.0]], 1), (1, 2, 4))
    a = build_partition([fam], [(-2.5, 2.5)], 0.01)
    b = build_partition([fam], [(-2.5, 2.5)], 0.02)
    c = build_partition([fam], [(-2.5, 2.5)], 0.01)
    assert a.fingerprint != b.fingerprint and a.fingerprint == c.fingerprint


def test_dump_is_run_length_encoded(oned):
    text = dump_partition(oned[2])
    assert text.startswith("# lyapta partition")
    rle = [l for l in text.splitlines() if l.startswith("rle ")][0].split()[1:]
    runs = [tuple(map(int, tok.split("x"))) for tok in rle]
    assert sum(n for _, n in runs) == len(oned[2].points)
    expanded = np.concatenate([np.full(n, v) for v, n in runs])
    assert np.array_equal(expanded, oned[2].location)
