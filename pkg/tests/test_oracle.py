import math

import numpy as np
import pytest

from lyapta.oracle import (completeness_check, flow, flow_many, mc_soundness_check, query_times,
                           refinement_experiment, sample_level_set, sample_regions, simulate, transit_time,
                           transit_times)
from lyapta.partition import PartitionError, adjacency, locate_many
from lyapta.problem import load_problem
from lyapta.system import QuadraticLyapunov, VectorField, eval_psi
from oracles import mutate_upper


def test_flow_examples():
    assert flow(VectorField.linear([[-1.0]]), [2.0], math.log(2)) == pytest.approx([1.0], abs=1e-12)
    saddle = VectorField.linear(np.diag([-1.0, 2.0]))
    assert flow(saddle, [1.0, 1.0], 0.5 * math.log(2)) == pytest.approx([0.70711, 2.0], abs=1e-5)
    with pytest.raises(ValueError):
        flow(saddle, [1.0, 1.0], -1.0)


def test_rk4_agrees_with_matrix_exponential():
    field = VectorField.linear([[0.0, 1.0], [-2.0, -3.0]])
    X0 = np.random.default_rng(0).normal(size=(20, 2))
    times = [0.0, 0.3, 1.0, 2.5]
    a = flow_many(field, X0, times, method="expm")
    b = flow_many(field, X0, times, dt=1e-3, method="rk4")
    assert np.abs(a - b).max() < 1e-10


def test_cubic_flow_closed_form():
    # x' = -x^3 has x(t) = x0 / sqrt(1 + 2 x0^2 t)
    cubic = VectorField.polynomial([[(-1.0, [3])]])
    x0 = np.array([[0.5], [1.0], [2.0]])
    got = flow(cubic, x0, 0.7, dt=1e-4)
    assert got == pytest.approx(x0 / np.sqrt(1 + 2 * x0 ** 2 * 0.7), abs=1e-10)


def test_transit_time():
    field = VectorField.linear([[-1.0]])
    lyap = QuadraticLyapunov([[1.0]], 1)
    assert transit_time(field, lyap, [2.0], 1.0) == pytest.approx(math.log(2), abs=1e-10)
    assert transit_time(field, lyap, [1.0], 1.0) == 0.0
    with pytest.raises(ValueError, match="not reached"):
        transit_time(field, lyap, [2.0], 0.01, t_max=1.0)


def test_simulate_flags_skipped_regions(oned):
    field, fam, part = oned
    adj = adjacency(part)
    fine = simulate(field, [1.9], 1.0, 0.01, part, adj)
    assert not fine.skipped
    assert [r for i, r in enumerate(fine.regions) if i == 0 or r != fine.regions[i - 1]] == ["e2h1", "e1h1", "core"]
    assert simulate(field, [1.9], 1.4, 0.7, part, adj).skipped


def test_samplers(oned, quadrant):
    rng = np.random.default_rng(3)
    _, _, part = quadrant
    X = sample_regions(part, ["e1_1h0", "e1_1h3"], 500, rng)
    assert len(X) == 500
    ids = {part.location_ids[i] for i in locate_many(part, X)}
    assert ids == {"e1_1h0", "e1_1h3"}
    assert sample_regions(part, ["core"], 0, rng).shape == (0, 2)
    lyap = QuadraticLyapunov([[5.0, 3.0], [3.0, 2.0]], 1)
    Y = sample_level_set(lyap, 2.0, 100, rng)
    assert eval_psi(lyap, Y) == pytest.approx(np.full(100, 2.0), rel=1e-12)


def test_query_times_straddle_breakpoints():
    t = query_times(1.0, 5, [0.5, 2.0], eps=1e-3)
    assert list(t) == pytest.approx([0.0, 0.25, 0.499, 0.5, 0.501, 0.75, 1.0])
    assert len(query_times(1.0, 0)) == 0


def test_zero_samples_is_trivially_sound(abstractions):
    ab = abstractions("oned_stable")
    r = mc_soundness_check(ab.problem.field, ab.partition, ab.automaton, sorted(ab.automaton.initial), 1.0, N=0)
    assert r.passed and r.checks == 0


@pytest.mark.parametrize("name", ["oned_stable", "twod_quadrant", "twod_saddle", "twod_coupled", "oned_cubic"])
def test_soundness_on_bundled_examples(abstractions, name):
    ab = abstractions(name)
    p = ab.problem
    r = mc_soundness_check(p.field, ab.partition, ab.automaton, sorted(ab.automaton.initial), p.horizon,
                           N=300, times_per_traj=10, seed=1)
    assert r.passed, r.witnesses[:3]
    assert r.checks > 0


def test_halved_upper_bound_is_detected(abstractions):
    ab = abstractions("oned_stable")
    bad = mutate_upper(ab, 1, 2)
    r = mc_soundness_check(ab.problem.field, ab.partition, bad, sorted(bad.initial), ab.problem.horizon, N=500, seed=42)
    assert not r.passed
    w = r.witnesses[0]
    assert w.actual not in w.allowed


def test_soundness_report_is_reproducible(abstractions):
    ab = abstractions("twod_saddle")
    args = (ab.problem.field, ab.partition, ab.automaton, sorted(ab.automaton.initial), 1.0)
    a = mc_soundness_check(*args, N=100, seed=5).to_dict()
    b = mc_soundness_check(*args, N=100, seed=5).to_dict()
    assert a == b


def test_completeness_examples():
    field = VectorField.linear([[-1.0]])
    rep = completeness_check(field, QuadraticLyapunov([[1.0]], 1), [1, 2, 4], seed=0)
    assert rep.ran and rep.passed and rep.alpha == pytest.approx(-0.5)
    assert rep.max_rel_deviation < 1e-9
    coupled = VectorField.linear([[0.0, 1.0], [-2.0, -3.0]])
    rep = completeness_check(coupled, QuadraticLyapunov(np.eye(2), 1), [1, 2])
    assert not rep.ran and rep.reason == "not complete-form"
    cubic = VectorField.polynomial([[(-1.0, [1]), (-1.0, [3])]])
    assert "nonlinear" in completeness_check(cubic, QuadraticLyapunov([[1.0]], 1), [1, 2]).reason


def test_refinement_at_zero_horizon_is_initial_volume():
    p = load_problem("bundled:oned_stable")
    res = refinement_experiment(p.field, p.families, p.domain_box, p.initial_box, 0.0, (0, 1, 2), p.grid_step,
                                mc_samples=200, seed=0)
    assert res.volumes == pytest.approx([res.volumes[0]] * 3)
    assert res.volumes[0] == pytest.approx(2 - 1.414, abs=0.02)
    assert res.level_counts == [3, 5, 9]


def test_refinement_shrinks_reach_volume():
    p = load_problem("bundled:oned_stable")
    res = refinement_experiment(p.field, p.families, p.domain_box, p.initial_box, p.refinement_horizon,
                                (0, 1, 2), p.grid_step, mc_samples=500, seed=p.seed)
    assert res.non_increasing and res.above_floor
    assert res.volumes[2] < res.volumes[0]
    assert "mc-floor" in res.table()


def test_refinement_needs_one_family_per_dimension():
    p = load_problem("bundled:twod_single_family")
    with pytest.raises(PartitionError, match="refinable-pre = no"):
        refinement_experiment(p.field, p.families, p.domain_box, [(0.5, 1.0), (0.5, 1.0)], 0.1)


def test_transit_times_batch_and_unstable_flow():
    saddle = VectorField.linear(np.diag([-1.0, 2.0]))
    lyap = QuadraticLyapunov(np.diag([0.0, 1.0]), 2, [1])
    X0 = np.array([[0.3, 0.5], [1.0, -0.5], [0.0, 0.9]])
    t = transit_times(saddle, lyap, X0, 1.0)
    # |x2| = x2(0) e^{2t} reaches 1 at t = -ln|x2(0)| / 2
    assert t == pytest.approx(-np.log(np.abs(X0[:, 1])) / 2, abs=1e-10)
    with pytest.raises(ValueError, match="not reached"):
        transit_times(saddle, lyap, [[1.0, 0.5]], 0.01, t_max=3.0)


def test_refinement_past_grid_resolution_fails():
    p = load_problem("bundled:oned_stable")
    with pytest.raises(PartitionError):
        refinement_experiment(p.field, p.families, p.domain_box, p.initial_box, 0.05, (8,), p.grid_step,
                              mc_samples=10)
