from __future__ import annotations

import itertools

import numpy as np
import pytest
from conftest import diving_weapon, make_init
from hypothesis import given, settings
from hypothesis import strategies as st

from strike_wta.bench import random_instance
from strike_wta.scenario import NOMINAL, sample_episode
from strike_wta.solvers import (
    INFEASIBLE_F,
    InstanceTooLarge,
    WtaInstance,
    bnb_root_bound,
    build_instance,
    intercept_cdf,
    intercept_cdf_exact,
    load_instance,
    local_search,
    lowest_heading_error,
    objective,
    save_instance,
    solve_bnb,
    solve_enumeration,
    solve_greedy_local,
    solve_heuristic,
    time_of_flight,
)


def inst_from(values, F, feasible=None, he=None):
    F = np.asarray(F, float)
    feasible = np.ones_like(F, bool) if feasible is None else feasible
    he = np.zeros_like(F) if he is None else he
    return WtaInstance(values, F, feasible, he)


@pytest.fixture(scope="module")
def oracle_instances():
    g = np.random.default_rng(2024)
    return [random_instance(g) for _ in range(200)]


def test_time_of_flight():
    assert time_of_flight([30000.0, 0, 0], [3000.0, 0, 0]) == pytest.approx(10.0)
    assert time_of_flight([0, 0, -25000.0], [0, 0, -2500.0]) == pytest.approx(10.0)
    with pytest.raises(ValueError):
        time_of_flight([30000.0, 0, 0], [0, 3000.0, 0])


@pytest.mark.parametrize("t, expected", [(0.0, 0.0), (10.0, 0.64724), (4.0, 0.27266)])
def test_intercept_cdf(t, expected):
    assert float(intercept_cdf(t, 0.25, 0.2)) == pytest.approx(expected, abs=1e-5)


def test_exact_cdf_equal_rates_limit():
    a = float(intercept_cdf_exact(7.0, 0.2, 0.2))
    b = float(intercept_cdf_exact(7.0, 0.2, 0.2 + 1e-7))
    assert a == pytest.approx(b, abs=1e-6)


def test_build_instance_masks_infeasible():
    t = [[0.0, 0, 0], [0.0, 30000.0, 0]]  # second target far off the nose
    init = make_init([diving_weapon(t[0])], t, [5, 9])
    inst = build_instance(init)
    assert inst.feasible[0, 0] and not inst.feasible[0, 1]
    assert inst.F[0, 1] == INFEASIBLE_F
    assert build_instance(init, destroyed=[True, False]).F[0, 0] == INFEASIBLE_F


def test_ten_second_flights_give_printed_cdf():
    # weapons 30 km from their target at 3000 m/s, flying straight at it
    t = [[0.0, 0, 0]]
    w = [(np.array([0, 0, 30000.0]), np.array([0, 0, -3000.0]))]
    inst = build_instance(make_init(w, t, [3]))
    assert inst.F[0, 0] == pytest.approx(0.64724, abs=1e-5)


def test_objective_examples():
    assert objective(inst_from([10], [[0.3]]), [0]) == pytest.approx(7.0)
    assert objective(inst_from([10], [[0.3], [0.4]]), [0, 0]) == pytest.approx(8.8)
    ones = inst_from([4, 5], np.ones((3, 2)))
    assert objective(ones, [0, 1, 0]) == 0.0


def test_enumeration_examples():
    inst = inst_from([10, 8], [[0.5, 0.5], [0.5, 0.5]])
    a, v = solve_enumeration(inst)
    assert sorted(a.tolist()) == [0, 1] and v == pytest.approx(9.0)
    assert objective(inst, [0, 0]) == pytest.approx(7.5)
    single = inst_from([3, 9, 4], [[0.2, 0.6, 0.5]])
    assert solve_enumeration(single)[0].tolist() == [1]  # argmax c(1-F): 2.4, 3.6, 2.0


def test_enumeration_dominates_random(oracle_instances, rng):
    for inst in oracle_instances[:20]:
        _, v = solve_enumeration(inst)
        for _ in range(50):
            assert objective(inst, rng.integers(0, inst.n, inst.m)) <= v + 1e-12


def test_enumeration_refuses_huge():
    with pytest.raises(InstanceTooLarge):
        solve_enumeration(inst_from(np.ones(12), np.full((20, 12), 0.5)))


def test_bnb_equals_enumeration(oracle_instances):
    for inst in oracle_instances:
        assert abs(solve_bnb(inst)[1] - solve_enumeration(inst)[1]) <= 1e-9


def test_root_bound_valid(oracle_instances):
    for inst in oracle_instances:
        assert bnb_root_bound(inst) >= solve_enumeration(inst)[1] - 1e-12


def test_bnb_weapon_permutation_invariant(rng):
    F = np.tile(rng.uniform(0.1, 0.9, 4), (5, 1))
    inst = inst_from(rng.integers(1, 10, 4), F)
    perm = rng.permutation(5)
    assert solve_bnb(inst)[1] == pytest.approx(solve_bnb(inst_from(inst.values, F[perm]))[1], abs=1e-12)


def test_bnb_budget_flag():
    g = np.random.default_rng(0)
    inst = inst_from(g.integers(1, 15, 12), g.uniform(0.3, 0.9, (20, 12)))
    a, v, stats = solve_bnb(inst, node_budget=50, return_stats=True)
    assert not stats.exact and a.shape == (20,)
    assert v >= solve_greedy_local(inst)[1] - 1e-12


def test_greedy_within_one_percent(oracle_instances):
    ok = sum(solve_greedy_local(i)[1] >= 0.99 * solve_enumeration(i)[1] for i in oracle_instances)
    assert ok >= 0.95 * len(oracle_instances)


def test_greedy_single_weapon_exact(rng):
    for _ in range(50):
        inst = inst_from(rng.integers(1, 15, 4), rng.uniform(0, 1, (1, 4)))
        assert solve_greedy_local(inst)[1] == pytest.approx(solve_enumeration(inst)[1])


def test_local_search_monotone(oracle_instances, rng):
    for inst in oracle_instances:
        start = rng.integers(0, inst.n, inst.m)
        assert local_search(inst, start)[1] >= objective(inst, start) - 1e-12


def test_heuristic_examples():
    assert solve_heuristic(inst_from([10, 1], np.full((3, 2), 0.5))).tolist() == [0, 0, 0]
    assert solve_heuristic(inst_from([10, 6], np.full((3, 2), 0.5))).tolist() == [0, 1, 0]
    feas = np.array([[False, True, False]] * 4)
    assert solve_heuristic(inst_from([9, 2, 7], np.full((4, 3), 0.5), feas)).tolist() == [1, 1, 1, 1]


def test_heuristic_ignores_F(rng):
    inst = random_instance(rng)
    other = WtaInstance(inst.values, rng.uniform(0, 1, inst.F.shape), inst.feasible, inst.heading_errors)
    assert np.array_equal(solve_heuristic(inst), solve_heuristic(other))


def test_heuristic_skips_destroyed():
    inst = inst_from([10, 6], np.full((2, 2), 0.5))
    assert solve_heuristic(inst, destroyed=[True, False]).tolist() == [1, 1]


def test_lowest_heading_error():
    he = np.array([[30.0, 12.0, 40.0, 1.0], [5.0, 5.0, 9.0, 20.0]])
    inst = inst_from([1, 1, 1, 1], np.full((2, 4), 0.5), he < 15, he)
    assert lowest_heading_error(inst).tolist() == [3, 0]


def test_lowest_heading_error_prefers_feasible():
    for s in range(200):
        inst = build_instance(sample_episode(NOMINAL, s))
        a = lowest_heading_error(inst)
        has = inst.feasible.any(axis=1)
        assert np.all(inst.feasible[np.arange(inst.m), a][has])


def test_instance_round_trip(tmp_path, rng):
    inst = random_instance(rng)
    save_instance(inst, tmp_path / "i.json")
    back = load_instance(tmp_path / "i.json")
    assert np.array_equal(back.F, inst.F) and np.array_equal(back.feasible, inst.feasible)


def test_invalid_instance():
    with pytest.raises(ValueError):
        inst_from([1, 2], [[0.5, 1.5]])
    with pytest.raises(ValueError):
        inst_from([1], [[0.5, 0.5]])


def test_every_solver_returns_one_target_per_weapon():
    g = np.random.default_rng(9)
    solvers = [lambda i: solve_bnb(i)[0], lambda i: solve_greedy_local(i)[0], solve_heuristic,
               lowest_heading_error, lambda i: solve_enumeration(i)[0]]
    for _ in range(10_000 // len(solvers)):
        inst = random_instance(g)
        for solve in solvers:
            a = np.asarray(solve(inst))
            assert a.shape == (inst.m,) and np.issubdtype(a.dtype, np.integer)
            assert np.all((a >= 0) & (a < inst.n))


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_objective_permutation_equivariant(seed):
    g = np.random.default_rng(seed)
    inst = random_instance(g)
    a = g.integers(0, inst.n, inst.m)
    p = g.permutation(inst.m)
    permuted = WtaInstance(inst.values, inst.F[p], inst.feasible[p], inst.heading_errors[p])
    assert objective(permuted, a[p]) == pytest.approx(objective(inst, a), abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_objective_monotone_in_F(seed):
    g = np.random.default_rng(seed)
    inst = random_instance(g)
    a = g.integers(0, inst.n, inst.m)
    i = int(g.integers(inst.m))
    F2 = inst.F.copy()
    F2[i, a[i]] *= g.uniform(0, 1)
    lower = WtaInstance(inst.values, F2, inst.feasible, inst.heading_errors)
    assert objective(lower, a) >= objective(inst, a) - 1e-12


def test_tiny_instances_exhaustive():
    # enumeration against a literal itertools product on a fixed 3x3 case
    inst = inst_from([4, 7, 2], [[0.2, 0.5, 0.9], [0.6, 0.3, 0.1], [0.4, 0.4, 0.4]])
    best = max(objective(inst, a) for a in itertools.product(range(3), repeat=3))
    assert solve_enumeration(inst)[1] == pytest.approx(best)
