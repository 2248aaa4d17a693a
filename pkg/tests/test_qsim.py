import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from mapp.exact import FeasibleBasis
from mapp.instance import QubitLayout, assignment_to_bits, generate_instance
from mapp.qsim import (FeasibleStateVector, MemoryCapError, QaaSchedule, SampleCounts, StateVector,
                       app_mixer_terms, apply_app_mixer, apply_diagonal_phase, apply_pmpm_rotation,
                       apply_x_mixer_layer, apply_xy_pair_rotation, basic_energies, calibrate_qaa_app,
                       embed_feasible, exact_metrics, full_space_indices, load_state, mixer_hamiltonian,
                       prepare_feasible_superposition, prepare_plus_state, run_metrics, run_qaa_app,
                       run_qaa_basic, sample_counts, save_state)


def random_state(q, seed, layout=None):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=2**q) + 1j * rng.normal(size=2**q)
    return StateVector(a / np.linalg.norm(a), layout)


def random_fsv(basis, seed):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=basis.size) + 1j * rng.normal(size=basis.size)
    return FeasibleStateVector(a / np.linalg.norm(a), basis)


# -- preparation ---------------------------------------------------------------

def test_plus_state():
    np.testing.assert_allclose(prepare_plus_state(1).amplitudes, [2**-0.5] * 2)
    s = prepare_plus_state(4)
    np.testing.assert_allclose(s.amplitudes, 0.25)
    assert s.norm() == pytest.approx(1.0, abs=1e-15)


def test_memory_cap():
    with pytest.raises(MemoryCapError):
        prepare_plus_state(30, max_bytes=1 << 20)
    with pytest.raises(MemoryCapError):
        prepare_feasible_superposition(FeasibleBasis(10, 3, 5), max_states=1000)


def test_feasible_superposition_examples():
    s = prepare_feasible_superposition(FeasibleBasis(2, 3, 1))
    np.testing.assert_allclose(s.amplitudes, 6**-0.5)
    assert prepare_feasible_superposition(FeasibleBasis(3, 2, 0)).amplitudes.tolist() == [1.0]
    s = prepare_feasible_superposition(FeasibleBasis(4, 2, 4))
    assert s.dim == 16
    np.testing.assert_allclose(s.amplitudes, 2**-2)


def test_embedding_support():
    basis = FeasibleBasis(2, 2, 1)
    full = embed_feasible(prepare_feasible_superposition(basis))
    nz = np.flatnonzero(full.amplitudes)
    assert nz.size == 4 and full.amplitudes.size == 64
    assert full.norm() == pytest.approx(1.0)
    expected = {oracles.labels_to_index(lab, 2, 2) for lab in oracles.feasible_labels(2, 2, 1)}
    assert set(nz) == expected


def test_full_space_indices_follow_rank_order():
    basis = FeasibleBasis(3, 2, 2)
    idx = full_space_indices(basis)
    assert list(idx) == [oracles.labels_to_index(tuple(basis.unrank(i)), 3, 2) for i in range(basis.size)]


# -- gates ---------------------------------------------------------------------

def test_diagonal_phase():
    s = random_state(3, 0)
    before = s.amplitudes.copy()
    apply_diagonal_phase(s, np.arange(8.0), 0.0)
    np.testing.assert_array_equal(s.amplitudes, before)
    apply_diagonal_phase(s, np.full(8, 2.0), 0.3)
    np.testing.assert_allclose(s.amplitudes, before * np.exp(-0.6j), atol=1e-15)
    apply_diagonal_phase(s, np.random.default_rng(1).normal(size=8), 1.7)
    np.testing.assert_allclose(np.abs(s.amplitudes), np.abs(before), atol=1e-15)
    with pytest.raises(ValueError):
        apply_diagonal_phase(s, np.zeros(4), 1.0)


def test_x_mixer_identity_and_inverse():
    s = random_state(7, 2)
    before = s.amplitudes.copy()
    apply_x_mixer_layer(s, 0.0)
    np.testing.assert_array_equal(s.amplitudes, before)
    apply_x_mixer_layer(s, 0.81)
    apply_x_mixer_layer(s, -0.81)
    np.testing.assert_allclose(s.amplitudes, before, atol=1e-12)


def test_x_mixer_half_pi_flips_everything():
    q = 5
    a = np.zeros(2**q, dtype=complex)
    a[0] = 1
    s = apply_x_mixer_layer(StateVector(a), math.pi / 2)
    assert s.amplitudes[-1] == pytest.approx(1j**q, abs=1e-12)
    assert abs(s.amplitudes[-1]) ** 2 == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("q", [1, 2, 3, 6, 7, 8, 16, 17])
def test_x_mixer_matches_dense_product(q):
    s = random_state(q, q)
    psi = s.amplitudes.copy()
    rot = np.array([[math.cos(0.4), 1j * math.sin(0.4)], [1j * math.sin(0.4), math.cos(0.4)]])
    t = psi.reshape((2,) * q)
    for ax in range(q):
        t = np.moveaxis(np.tensordot(rot, t, axes=([1], [ax])), 0, ax)
    apply_x_mixer_layer(s, 0.4)
    np.testing.assert_allclose(s.amplitudes, t.reshape(-1), atol=1e-12)


def test_x_mixer_rejects_subspace_state():
    with pytest.raises(TypeError):
        apply_x_mixer_layer(prepare_feasible_superposition(FeasibleBasis(2, 2, 1)), 0.1)


def test_xy_rotation_two_qubits():
    a = np.array([0, 1, 0, 0], dtype=complex)  # qubit 0 set
    s = apply_xy_pair_rotation(StateVector(a), 0, 1, math.pi / 2)
    np.testing.assert_allclose(s.amplitudes, [0, 0, 1j, 0], atol=1e-15)
    b = np.array([0.6, 0, 0, 0.8], dtype=complex)
    s = apply_xy_pair_rotation(StateVector(b.copy()), 0, 1, 1.1)
    np.testing.assert_allclose(s.amplitudes, b, atol=1e-15)
    with pytest.raises(ValueError):
        apply_xy_pair_rotation(StateVector(b.copy()), 1, 1, 0.1)


def test_xy_rotation_matches_pauli_exponential():
    from scipy.linalg import expm
    s = random_state(4, 3)
    psi = s.amplitudes.copy()
    h = oracles.op(4, {1: oracles.X, 3: oracles.X}) + oracles.op(4, {1: oracles.Y, 3: oracles.Y})
    apply_xy_pair_rotation(s, 1, 3, 0.7)
    np.testing.assert_allclose(s.amplitudes, expm(1j * 0.35 * h) @ psi, atol=1e-12)


def test_xy_rotation_subspace_rules():
    basis = FeasibleBasis(2, 3, 1)
    lay = QubitLayout(2, 3)
    s = prepare_feasible_superposition(basis)
    apply_xy_pair_rotation(s, lay.index(0, 1), lay.index(0, 3), 0.3)
    assert s.norm() == pytest.approx(1.0)
    with pytest.raises(ValueError):
        apply_xy_pair_rotation(s, lay.index(0, 1), lay.index(1, 1), 0.3)
    with pytest.raises(ValueError):
        apply_xy_pair_rotation(s, lay.index(0, 0), lay.index(0, 1), 0.3)


def test_pmpm_moves_antenna():
    basis = FeasibleBasis(2, 1, 1)
    s = FeasibleStateVector(np.array([1, 0], dtype=complex), basis)  # antenna at site 0
    apply_pmpm_rotation(s, 0, 1, 1, 1, math.pi / 2)
    np.testing.assert_allclose(s.amplitudes, [0, 1j], atol=1e-15)
    s = FeasibleStateVector(np.array([0.6, 0.8j], dtype=complex), basis)
    apply_pmpm_rotation(s, 0, 1, 1, 1, 0.0)
    np.testing.assert_allclose(s.amplitudes, [0.6, 0.8j])


def test_pmpm_errors():
    s = prepare_feasible_superposition(FeasibleBasis(3, 2, 1))
    with pytest.raises(ValueError):
        apply_pmpm_rotation(s, 1, 1, 1, 1, 0.1)
    with pytest.raises((ValueError, IndexError)):
        apply_pmpm_rotation(s, 0, 1, 3, 1, 0.1)
    with pytest.raises((ValueError, IndexError)):
        apply_pmpm_rotation(s, 0, 5, 1, 1, 0.1)


@pytest.mark.parametrize("v,u,p,pp", [(0, 1, 1, 2), (1, 2, 2, 1), (0, 2, 2, 2)])
def test_pmpm_matches_full_space_term(v, u, p, pp):
    from scipy.linalg import expm
    n, f = 3, 2
    s = random_state(9, 7, QubitLayout(n, f))
    psi = s.amplitudes.copy()
    apply_pmpm_rotation(s, v, u, p, pp, 0.45)
    h = oracles.pmpm_term(n, f, v, u, p, pp, 1.0)
    np.testing.assert_allclose(s.amplitudes, expm(-0.45j * h) @ psi, atol=1e-12)


def test_mixer_term_table():
    rows = app_mixer_terms(3, 2)
    hops = [tuple(r) for r in rows if r[1] >= 0]
    ring = [tuple(r) for r in rows if r[1] < 0]
    assert len(hops) == 3 * 4 and len(ring) == 3 * 2
    assert rows[0][1] >= 0 and rows[-1][1] < 0
    assert hops == sorted(hops)
    assert len(app_mixer_terms(3, 1)) == 3


def test_app_mixer_zero_and_errors():
    s = random_fsv(FeasibleBasis(4, 2, 2), 1)
    before = s.amplitudes.copy()
    apply_app_mixer(s, 0.0, 3, 1.0)
    np.testing.assert_allclose(s.amplitudes, before, atol=1e-15)
    with pytest.raises(ValueError):
        apply_app_mixer(s, 0.1, 0, 1.0)


@pytest.mark.parametrize("n,f,k", [(3, 2, 1), (3, 2, 2), (2, 3, 1), (3, 1, 1)])
def test_app_mixer_engines_agree(n, f, k):
    basis = FeasibleBasis(n, f, k)
    sub = random_fsv(basis, 4)
    full = embed_feasible(sub)
    apply_app_mixer(sub, 0.37, 2, 1.3)
    apply_app_mixer(full, 0.37, 2, 1.3)
    np.testing.assert_allclose(embed_feasible(sub).amplitudes, full.amplitudes, atol=1e-8)


@given(st.floats(-3, 3), st.sampled_from([1, 2, 5]), st.floats(0.1, 3))
def test_full_space_mixer_keeps_feasible_support(tau, m, beta):
    basis = FeasibleBasis(3, 2, 1)
    full = embed_feasible(random_fsv(basis, 0))
    apply_app_mixer(full, tau, m, beta)
    mask = np.ones(full.dim, dtype=bool)
    mask[full_space_indices(basis)] = False
    assert np.abs(full.amplitudes[mask]).max() == 0.0
    assert full.norm() == pytest.approx(1.0, abs=1e-12)


def test_mixer_hamiltonian_matches_label_oracle():
    basis = FeasibleBasis(3, 3, 2)
    h = mixer_hamiltonian(basis, beta=0.7)
    labs, terms = oracles.subspace_terms(3, 3, 2, 0.7)
    perm = [basis.rank(lab) for lab in labs]
    total = sum(terms)
    np.testing.assert_allclose(h[np.ix_(perm, perm)], total, atol=1e-14)


# -- schedules and runs --------------------------------------------------------

def test_schedule_defaults_and_angles():
    s = QaaSchedule.app()
    assert (s.total_time, s.layers, s.mixer_steps, s.beta) == (10.0, 15, 1, 1.0)
    b = QaaSchedule.basic()
    assert (b.total_time, b.layers) == (20.0, 100)
    angles = list(QaaSchedule(total_time=4.0, layers=4).angles())
    assert angles[0] == pytest.approx((0.25, 0.75)) and angles[-1] == pytest.approx((1.0, 0.0))
    with pytest.raises(ValueError):
        QaaSchedule(layers=0)
    with pytest.raises(ValueError):
        QaaSchedule(ordering="sideways")


def test_basic_single_layer_is_uniform():
    inst = generate_instance(2, 2, 1, seed=1)
    s = run_qaa_basic(inst, QaaSchedule.basic(layers=1))
    np.testing.assert_allclose(s.probabilities(), 1 / 64, atol=1e-14)


# frozen from the dense full-space oracle
def test_basic_matches_dense_oracle():
    inst = generate_instance(2, 2, 1, seed=4)
    sched = QaaSchedule.basic(total_time=3.0, layers=5)
    psi = oracles.qaa_basic_dense(basic_energies(inst, sched), 6, 3.0, 5)
    fast = run_qaa_basic(inst, sched)
    ref = run_qaa_basic(inst, sched, reference=True)
    np.testing.assert_allclose(fast.amplitudes, psi, atol=1e-12)
    np.testing.assert_allclose(ref.amplitudes, psi, atol=1e-12)
    assert exact_metrics(fast, inst).p_feasible == pytest.approx(0.15055064347631636, abs=1e-12)


def test_basic_long_run_concentrates_on_qubo_optimum():
    inst = generate_instance(2, 2, 1, seed=4)
    sched = QaaSchedule.basic(total_time=50.0, layers=100)
    e = basic_energies(inst, sched)
    p = run_qaa_basic(inst, sched).probabilities()[int(np.argmin(e))]
    assert p == pytest.approx(0.1351978230394717, abs=1e-10)
    assert p > 1 / 64


@pytest.mark.parametrize("q_bits", [(3, 2, 1), (5, 3, 2), (6, 3, 3)])
def test_basic_fast_path_matches_reference(q_bits):
    inst = generate_instance(*q_bits, seed=3)
    sched = QaaSchedule.basic(total_time=7.0, layers=9)
    a = run_qaa_basic(inst, sched)
    b = run_qaa_basic(inst, sched, reference=True)
    np.testing.assert_allclose(a.amplitudes, b.amplitudes, atol=1e-11)
    assert a.norm() == pytest.approx(1.0, abs=1e-9)


@pytest.mark.parametrize("args,expected", [
    ((3, 2, 1, 5), 0.12042751062496801),
    ((3, 2, 2, 7), 0.12222270470428408),
    ((2, 3, 1, 2), 0.18313845689378933),
])
def test_app_matches_dense_oracle(args, expected):
    n, f, k, seed = args
    inst = generate_instance(n, f, k, seed=seed)
    _, opt = oracles.optimum(inst)
    state = run_qaa_app(inst, QaaSchedule.app(total_time=5.0, layers=6, mixer_steps=2, beta=1.0))
    assert exact_metrics(state, inst, opt).p_success == pytest.approx(expected, abs=1e-12)
    psi = oracles.qaa_app_dense(inst, 5.0, 6, 2, 1.0)
    np.testing.assert_allclose(embed_feasible(state).amplitudes, psi, atol=1e-12)


def test_app_zero_time_is_initial_state():
    inst = generate_instance(4, 2, 2, seed=1)
    _, opt = oracles.optimum(inst)
    state = run_qaa_app(inst, QaaSchedule.app(total_time=0.0))
    assert exact_metrics(state, inst, opt).p_success == pytest.approx(len(opt) / 24, abs=1e-12)


def test_app_three_sites_beats_uniform_after_scan():
    inst = generate_instance(3, 3, 1, seed=0)
    _, opt = oracles.optimum(inst)
    sched, scores = calibrate_qaa_app([inst], [opt])
    assert (sched.total_time, sched.beta) == (10.0, 0.5)
    assert scores[(10.0, 0.5)] == pytest.approx(0.20305291772142783, abs=1e-12)
    assert scores[(10.0, 0.5)] > 3 / 27


def test_app_ordering_variants_keep_norm():
    inst = generate_instance(4, 3, 2, seed=6)
    for order in ("phase-first", "mixer-first"):
        state = run_qaa_app(inst, QaaSchedule.app(ordering=order, mixer_steps=2))
        assert state.norm() == pytest.approx(1.0, abs=1e-9)


# -- sampling ------------------------------------------------------------------

def test_sampling_basis_state():
    basis = FeasibleBasis(3, 2, 1)
    a = np.zeros(basis.size, dtype=complex)
    a[4] = 1
    counts = sample_counts(FeasibleStateVector(a, basis), 300, seed=0)
    key = "".join(map(str, assignment_to_bits(QubitLayout(3, 2), basis.unrank(4))))
    assert counts.counts == {key: 300}


def test_sampling_uniform_binomial_window():
    s = prepare_feasible_superposition(FeasibleBasis(2, 3, 1))
    counts = sample_counts(s, 5000, seed=11)
    assert len(counts.counts) == 6
    assert all(700 <= c <= 980 for c in counts.counts.values())


def test_sampling_deterministic_and_full_space_keys():
    s = random_state(4, 9)
    assert sample_counts(s, 1000, seed=3).counts == sample_counts(s, 1000, seed=3).counts
    counts = sample_counts(s, 1000, seed=3)
    bits, cnt = counts.bit_array()
    assert bits.shape[1] == 4 and cnt.sum() == 1000
    with pytest.raises(ValueError):
        sample_counts(s, 0, seed=0)


def test_counts_json_round_trip(tmp_path):
    counts = sample_counts(random_state(3, 2), 200, seed=1)
    counts.save(tmp_path / "c.json")
    back = SampleCounts.load(tmp_path / "c.json")
    assert back.counts == counts.counts and back.shots == 200


def test_run_metrics_cases():
    inst = generate_instance(2, 2, 1, seed=0)
    _, opt = oracles.optimum(inst)
    best = next(iter(opt))
    key = "".join(map(str, assignment_to_bits(inst.layout, best)))
    m = run_metrics(SampleCounts({key: 10}, 10, 6), inst, opt)
    assert m.p_feasible == 1.0 and m.p_success == 1.0
    m = run_metrics(SampleCounts({key: 5, "000000": 5}, 10, 6), inst, opt)
    assert m.p_feasible == 0.5 and m.p_success == 0.5
    m = run_metrics(SampleCounts({"000000": 4}, 4, 6), inst, opt)
    assert m.p_feasible == 0.0 and m.best_cost is None
    assert run_metrics(SampleCounts({key: 1}, 1, 6), inst).p_success is None


def test_state_dump_round_trip(tmp_path):
    basis = FeasibleBasis(3, 2, 2)
    s = random_fsv(basis, 5)
    save_state(tmp_path / "s.bin", s)
    back = load_state(tmp_path / "s.bin")
    np.testing.assert_array_equal(back.amplitudes, s.amplitudes)
    full = random_state(5, 1, QubitLayout(1, 4))
    save_state(tmp_path / "f.bin", full)
    np.testing.assert_array_equal(load_state(tmp_path / "f.bin").amplitudes, full.amplitudes)
    (tmp_path / "bad.bin").write_bytes(b"garbage" * 10)
    with pytest.raises(ValueError):
        load_state(tmp_path / "bad.bin")
