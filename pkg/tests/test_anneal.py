import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from mapp.anneal import (AnnealConfig, custom_sa_run, delta_cost_onsite, delta_cost_swap, delta_flip,
                         restart_seed, sa_run)
from mapp.exact import FeasibleBasis, solve_brute_force
from mapp.instance import cost, generate_instance, is_feasible
from mapp.qubo import all_qubo_values, qubo_value, to_qubo


def test_config_validation():
    with pytest.raises(ValueError):
        AnnealConfig(t_initial=-1.0)
    with pytest.raises(ValueError):
        AnnealConfig(t_initial=0.1, t_final=1.0)
    with pytest.raises(ValueError):
        AnnealConfig(sweeps=0)
    temps = AnnealConfig(sweeps=5).temperatures(8.0, 0.5)
    np.testing.assert_allclose(temps, [8, 4, 2, 1, 0.5])
    assert np.all(np.diff(temps) < 0)


def test_restart_seeds_distinct_and_stable():
    seeds = [restart_seed(3, r) for r in range(50)]
    assert len(set(seeds)) == 50 and seeds == [restart_seed(3, r) for r in range(50)]


@given(st.integers(0, 10**6), st.integers(0, 10**6))
def test_delta_flip_matches_reevaluation(seed, draw):
    model = to_qubo(generate_instance(4, 3, 2, seed=seed))
    rng = np.random.default_rng(draw)
    x = rng.integers(0, 2, size=model.dim)
    for i in rng.integers(0, model.dim, size=20):
        y = x.copy()
        y[i] ^= 1
        assert delta_flip(model, x, int(i)) == pytest.approx(qubo_value(model, y) - qubo_value(model, x), abs=1e-9)


def test_move_deltas_match_full_evaluation():
    rng = np.random.default_rng(0)
    for seed in range(10):
        inst = generate_instance(9, 3, 5, seed=seed)
        basis = FeasibleBasis.for_instance(inst)
        for _ in range(1000):
            f = basis.unrank(int(rng.integers(basis.size)))
            v, u = (int(x) for x in rng.integers(0, 9, size=2))
            p = int(rng.integers(0, 4))
            g = f.copy()
            g[v] = p
            assert delta_cost_onsite(inst, f, v, p) == pytest.approx(oracles.cost(inst, g) - oracles.cost(inst, f),
                                                                     abs=1e-9)
            g = f.copy()
            g[v], g[u] = f[u], f[v]
            assert delta_cost_swap(inst, f, v, u) == pytest.approx(oracles.cost(inst, g) - oracles.cost(inst, f),
                                                                   abs=1e-9)


def test_trivial_deltas():
    inst = generate_instance(5, 3, 2, seed=1)
    f = np.array([0, 2, 0, 0, 3])
    assert delta_cost_onsite(inst, f, 1, 2) == 0.0
    assert delta_cost_swap(inst, f, 0, 2) == 0.0
    assert delta_cost_swap(inst, f, 1, 1) == 0.0
    with pytest.raises(IndexError):
        delta_cost_swap(inst, f, 0, 5)
    with pytest.raises(IndexError):
        delta_cost_onsite(inst, f, 0, 4)


def test_sa_finds_small_qubo_optimum():
    inst = generate_instance(2, 2, 1, seed=3)
    model = to_qubo(inst)
    res = sa_run(model, AnnealConfig(restarts=1000, sweeps=50, seed=0), instance=inst)
    assert res.best_value == pytest.approx(all_qubo_values(model).min(), abs=1e-12)
    assert res.feasible_cost == pytest.approx(solve_brute_force(inst).cost, abs=1e-12)
    assert is_feasible(inst, res.feasible_assignment)


def test_sa_greedy_is_monotone():
    inst = generate_instance(5, 2, 2, seed=2)
    res = sa_run(to_qubo(inst), AnnealConfig(restarts=3, sweeps=20, greedy=True, trace=True, seed=1),
                 instance=inst)
    for tr in res.traces:
        assert np.all(np.diff(tr) <= 1e-9)


def test_sa_without_instance_reports_no_feasible_point():
    model = to_qubo(generate_instance(3, 2, 1, seed=0))
    res = sa_run(model, AnnealConfig(restarts=5, sweeps=20))
    assert res.feasible_assignment is None
    with pytest.raises(ValueError):
        res.to_solve_result()


def test_sa_seeded():
    inst = generate_instance(6, 3, 3, seed=4)
    cfg = AnnealConfig(restarts=20, sweeps=50, seed=9)
    a = sa_run(to_qubo(inst), cfg, instance=inst)
    b = sa_run(to_qubo(inst), cfg, instance=inst)
    assert a.best_value == b.best_value and np.array_equal(a.best_bits, b.best_bits)


def test_custom_sa_stays_feasible_and_matches_optimum():
    inst = generate_instance(7, 3, 4, seed=5)
    res = custom_sa_run(inst, AnnealConfig(restarts=20, check_feasible=True, seed=2))
    assert is_feasible(inst, res.feasible_assignment)
    assert res.feasible_cost == pytest.approx(oracles.optimum(inst)[0], abs=1e-9)
    assert res.feasible_cost == cost(inst, res.feasible_assignment)
    assert res.to_solve_result().cost == res.feasible_cost


def test_custom_sa_greedy_is_monotone():
    inst = generate_instance(8, 3, 4, seed=6)
    res = custom_sa_run(inst, AnnealConfig(restarts=4, sweeps=30, greedy=True, trace=True, seed=3))
    for tr in res.traces:
        assert np.all(np.diff(tr) <= 1e-9)


@pytest.mark.parametrize("k", [0, 1, 6])
def test_custom_sa_edge_budgets(k):
    inst = generate_instance(6, 2, k, seed=1)
    res = custom_sa_run(inst, AnnealConfig(restarts=5, sweeps=20, check_feasible=True))
    assert is_feasible(inst, res.feasible_assignment)
    assert res.feasible_cost == pytest.approx(oracles.optimum(inst)[0], abs=1e-9)


def test_custom_sa_seeded():
    inst = generate_instance(9, 3, 5, seed=8)
    cfg = AnnealConfig(restarts=10, sweeps=40, seed=4)
    a, b = custom_sa_run(inst, cfg), custom_sa_run(inst, cfg)
    assert np.array_equal(a.feasible_assignment, b.feasible_assignment) and a.feasible_cost == b.feasible_cost
