import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from mapp.instance import (Instance, QubitLayout, assignment_to_bits, bits_to_assignment, cost, cost_many,
                           diagonal_overlap, disc_overlaps, feasible_space_size, generate_instance,
                           is_feasible, is_feasible_bits, lens_area, load_instance, optimal_k, save_instance)


def hand_instance(areas, om, n_freq, k, alpha=0.0):
    n = len(areas)
    om = np.asarray(om, dtype=float)
    return Instance(n, n_freq, k, alpha, np.zeros((n, 2)), np.ones(n), np.asarray(areas, float),
                    diagonal_overlap(om, n_freq))


def two_site():
    return hand_instance([1.0, 2.0], [[0, 0.5], [0.5, 0]], 2, 1, alpha=0.1)


sizes = st.tuples(st.integers(1, 7), st.integers(1, 3)).flatmap(
    lambda nf: st.tuples(st.just(nf[0]), st.just(nf[1]), st.integers(0, nf[0])))


def test_lens_disjoint_and_coincident():
    assert lens_area(1.0, 1.2, 2.2) == 0.0
    assert lens_area(1.0, 1.2, 5.0) == 0.0
    assert lens_area(0.7, 0.7, 0.0) == pytest.approx(math.pi * 0.49, abs=1e-15)


def test_lens_unit_discs_at_unit_distance():
    assert lens_area(1.0, 1.0, 1.0) == pytest.approx(2 * (math.pi / 3 - math.sqrt(3) / 4), abs=1e-12)
    assert lens_area(1.0, 1.0, 1.0) == pytest.approx(1.2284, abs=1e-4)


# frozen from the quadrature oracle
@pytest.mark.parametrize("r1,r2,d,expected", [
    (1.0, 1.2, 0.7, 2.252696613133813),
    (0.8, 1.6, 1.5, 1.0548242532382572),
    (1.0, 0.5, 0.2, 0.7853981633974478),
])
def test_lens_matches_quadrature(r1, r2, d, expected):
    assert lens_area(r1, r2, d) == pytest.approx(expected, rel=1e-12)


@given(st.floats(0.1, 3.0), st.floats(0.1, 3.0), st.floats(0.0, 7.0))
def test_lens_symmetric_and_bounded(r1, r2, d):
    a = lens_area(r1, r2, d)
    assert a == pytest.approx(lens_area(r2, r1, d), abs=1e-12)
    assert -1e-12 <= a <= math.pi * min(r1, r2) ** 2 + 1e-12


def test_disc_overlaps_matrix():
    xy = np.array([[0.0, 0.0], [1.0, 0.0], [10.0, 0.0]])
    om = disc_overlaps(xy, np.ones(3))
    assert om[0, 1] == pytest.approx(lens_area(1, 1, 1))
    assert om[0, 2] == 0.0 and np.all(np.diag(om) == 0)
    assert np.array_equal(om, om.T)


@given(sizes, st.integers(0, 2**31))
def test_generated_instance_invariants(size, seed):
    n, f, k = size
    inst = generate_instance(n, f, k, seed=seed)
    assert inst.overlap.shape == (n, n, f + 1, f + 1)
    assert np.all(inst.areas >= 0) and np.all(inst.overlap >= 0)
    assert np.array_equal(inst.overlap, inst.overlap.transpose(1, 0, 3, 2))
    off = ~np.eye(f + 1, dtype=bool)
    assert not np.any(inst.overlap[:, :, off])
    assert inst.is_diagonal


def test_generator_seeded():
    a = generate_instance(6, 3, 3, seed=5)
    b = generate_instance(6, 3, 3, seed=5)
    assert np.array_equal(a.overlap, b.overlap) and np.array_equal(a.sites, b.sites)
    assert not np.array_equal(a.sites, generate_instance(6, 3, 3, seed=6).sites)


@pytest.mark.parametrize("args", [(3, 2, 4), (3, 0, 1), (0, 2, 0)])
def test_generator_rejects_bad_sizes(args):
    with pytest.raises(ValueError):
        generate_instance(*args)


def test_instance_validation():
    good = two_site()
    with pytest.raises(ValueError):
        Instance(2, 2, 1, 0.0, good.sites, good.radii, good.areas, good.overlap[:, :, :2, :2])
    bad = good.overlap.copy()
    bad[0, 1, 1, 2] = 1.0
    with pytest.raises(ValueError):
        Instance(2, 2, 1, 0.0, good.sites, good.radii, good.areas, bad)
    with pytest.raises(ValueError):
        Instance(2, 2, 3, 0.0, good.sites, good.radii, good.areas, good.overlap)
    with pytest.raises(ValueError):
        Instance(2, 2, 1, -1.0, good.sites, good.radii, good.areas, good.overlap)


def test_cost_hand_cases():
    inst = two_site()
    assert cost(inst, (0, 0)) == 0.0
    assert cost(inst, (1, 1)) == pytest.approx(-2.5, abs=1e-15)
    assert cost(inst, (1, 2)) == pytest.approx(-2.8, abs=1e-15)


def test_cost_rejects_bad_labels():
    inst = two_site()
    with pytest.raises(ValueError):
        cost(inst, (0, 3))
    with pytest.raises(ValueError):
        cost(inst, (0, 1, 1))


@given(st.integers(0, 10**6), st.integers(0, 10**6))
def test_cost_matches_oracle(seed, draw):
    inst = generate_instance(6, 3, 3, seed=seed)
    f = np.random.default_rng(draw).integers(0, 4, size=6)
    assert cost(inst, f) == pytest.approx(oracles.cost(inst, f), rel=1e-12, abs=1e-12)


def test_cost_many_matches_scalar():
    inst = generate_instance(8, 3, 4, seed=2)
    labels = np.random.default_rng(0).integers(0, 4, size=(200, 8))
    np.testing.assert_allclose(cost_many(inst, labels), [cost(inst, f) for f in labels], rtol=1e-12, atol=1e-12)


def test_feasibility():
    inst = generate_instance(4, 2, 2, seed=0)
    assert is_feasible(inst, (1, 0, 2, 0))
    assert not is_feasible(inst, (1, 1, 2, 0))


def test_layout_index_formula():
    lay = QubitLayout(3, 2)
    assert [lay.index(v, 0) for v in range(3)] == [0, 1, 2]
    assert lay.index(0, 1) == 3 and lay.index(1, 2) == 6 and lay.index(2, 2) == 8
    pos = sorted(lay.index(v, p) for v in range(3) for p in range(3))
    assert pos == list(range(lay.n_qubits))
    with pytest.raises(IndexError):
        lay.index(3, 0)


def test_assignment_bits_example():
    lay = QubitLayout(2, 3)
    bits = assignment_to_bits(lay, (0, 2))
    assert set(np.flatnonzero(bits)) == {lay.index(0, 0), lay.index(1, 2)}


@given(st.integers(1, 6), st.integers(1, 3), st.integers(0, 2**31))
def test_bits_round_trip(n, f, seed):
    lay = QubitLayout(n, f)
    a = np.random.default_rng(seed).integers(0, f + 1, size=(20, n))
    np.testing.assert_array_equal(bits_to_assignment(lay, assignment_to_bits(lay, a)), a)


def test_bits_to_assignment_rejects_broken_one_hot():
    lay = QubitLayout(2, 2)
    bits = assignment_to_bits(lay, (1, 0))
    bits[lay.table[1]] = 0
    with pytest.raises(ValueError):
        bits_to_assignment(lay, bits)


def test_is_feasible_bits():
    inst = hand_instance([1.0, 1.0], np.zeros((2, 2)), 3, 1)
    assert is_feasible_bits(inst, assignment_to_bits(inst.layout, (2, 0)))
    assert not is_feasible_bits(inst, np.zeros(8, dtype=np.uint8))
    bits = assignment_to_bits(inst.layout, (2, 0))
    bits[inst.layout.index(0, 1)] = 1
    assert not is_feasible_bits(inst, bits)
    with pytest.raises(ValueError):
        is_feasible_bits(inst, np.zeros(7, dtype=np.uint8))


def test_feasible_space_size():
    assert feasible_space_size(2, 3, 1) == 6
    assert feasible_space_size(5, 3, 0) == 1
    assert feasible_space_size(7, 3, 3) == 945
    assert feasible_space_size(60, 3, 45) == math.comb(60, 45) * 3**45
    with pytest.raises(OverflowError):
        feasible_space_size(60, 3, 45, bound=2**63 - 1)


def test_optimal_k():
    assert optimal_k(7, 3) == 6
    assert optimal_k(20, 3) == 15
    for n in range(1, 13):
        for f in range(1, 5):
            sizes_k = [feasible_space_size(n, f, k) for k in range(n + 1)]
            assert sizes_k[optimal_k(n, f)] == max(sizes_k)


def test_json_round_trip(tmp_path):
    inst = generate_instance(5, 2, 2, seed=9)
    path = tmp_path / "inst.json"
    save_instance(inst, path)
    back = load_instance(path)
    assert np.array_equal(back.overlap, inst.overlap) and back.alpha == inst.alpha
    assert cost(back, (1, 0, 2, 0, 0)) == cost(inst, (1, 0, 2, 0, 0))


def test_subinstance_drops_cross_terms():
    inst = generate_instance(6, 2, 3, seed=1)
    sub = inst.subinstance([0, 2, 5], 2)
    assert sub.n_sites == 3 and sub.n_antennas == 2
    assert np.array_equal(sub.overlap[0, 1], inst.overlap[0, 2])
    assert np.array_equal(sub.areas, inst.areas[[0, 2, 5]])
