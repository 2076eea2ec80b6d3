import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import (
    all_sequences,
    hmm_prob_forward,
    hmm_prob_naive,
    hqmm_prob_naive,
    noom_prob_naive,
)
from hqmm.core import random_density, random_unit_vector
from hqmm.errors import (
    InputError,
    NegativeProbabilityError,
    ResourceError,
    ValidityError,
    ZeroProbabilityError,
)
from hqmm.models import (
    GeneralOom,
    Hmm,
    KHqmm,
    LHqmm,
    Noom,
    StandardOom,
    hmm_sequence_log_prob,
    hmm_step,
    khqmm_log_likelihoods,
    khqmm_sequence_log_likelihood,
    khqmm_step,
    lhqmm_step_and_prob,
    log_likelihoods,
    noom_step_and_prob,
    oom_step_and_prob,
    random_hmm,
    random_khqmm,
    random_noom,
    sample_sequence,
    sequence_log_likelihood,
    validate_oom_depth,
)
from hqmm.representations import (
    hmm_to_khqmm,
    hmm_to_oom,
    khqmm_to_lhqmm,
    kraus_to_liouville,
    noom_to_oom,
)


def _random_models(seed):
    return [
        random_hmm(3, 3, seed),
        hmm_to_oom(random_hmm(3, 2, seed)),
        random_noom(3, 2, seed),
        random_khqmm(3, 3, 2, seed),
        khqmm_to_lhqmm(random_khqmm(2, 3, 2, seed)),
    ]


# ---------------------------------------------------------------- HMM


def test_hmm_single_state_emits_column():
    c = np.array([0.2, 0.5, 0.3])
    h = Hmm(np.ones((1, 1)), c[:, None], np.ones(1))
    for y in range(3):
        x, p = hmm_step(h, h.x0, y)
        np.testing.assert_allclose(x, [1.0])
        assert p == pytest.approx(c[y], abs=1e-15)


def test_hmm_deterministic_cycle():
    A = np.array([[0, 0, 1], [1, 0, 0], [0, 1, 0]], dtype=float)
    h = Hmm(A, np.eye(3), np.array([1.0, 0, 0]))
    # from state 0 the chain moves to state 1 and must emit 1
    x, p = hmm_step(h, h.x0, 1)
    assert p == 1.0
    np.testing.assert_array_equal(x, [0, 1, 0])
    with pytest.raises(ZeroProbabilityError) as info:
        hmm_step(h, h.x0, 0, position=7)
    assert info.value.symbol == 0
    assert info.value.position == 7


def test_hmm_symbol_probabilities_sum_to_one():
    h = random_hmm(3, 3, seed=1)
    total = sum(hmm_step(h, h.x0, y)[1] for y in range(3))
    assert abs(total - 1) < 1e-12


def test_hmm_length_one_log_prob_matches_step():
    h = random_hmm(3, 3, seed=2)
    assert np.exp(hmm_sequence_log_prob(h, [2])) == pytest.approx(hmm_step(h, h.x0, 2)[1], rel=1e-14)


def test_hmm_uniform_log_prob():
    s = 4
    u = np.full((s, s), 1 / s)
    h = Hmm(u, u, np.full(s, 1 / s))
    seq = [0, 3, 1, 1, 2, 0, 3]
    assert hmm_sequence_log_prob(h, seq) == pytest.approx(-len(seq) * np.log(s), abs=1e-12)


def test_hmm_log_prob_matches_naive_product():
    h = random_hmm(3, 3, seed=3)
    seq = [0, 2, 1, 1]
    naive = hmm_prob_naive(h.A, h.C, h.x0, seq)
    assert abs(np.exp(hmm_sequence_log_prob(h, seq)) - naive) < 1e-10
    assert abs(naive - hmm_prob_forward(h.A.tolist(), h.C.tolist(), h.x0.tolist(), seq)) < 1e-14


def test_hmm_rejects_out_of_range_symbols():
    h = random_hmm(2, 2, seed=0)
    with pytest.raises(InputError):
        hmm_sequence_log_prob(h, [0, 2])
    with pytest.raises(InputError):
        hmm_sequence_log_prob(h, [0, 1], burn_in=2)


def test_burn_in_conditions_without_counting():
    h = random_hmm(3, 3, seed=4)
    seq = [1, 0, 2, 2, 1]
    full = hmm_prob_naive(h.A, h.C, h.x0, seq)
    prefix = hmm_prob_naive(h.A, h.C, h.x0, seq[:2])
    assert hmm_sequence_log_prob(h, seq, burn_in=2) == pytest.approx(np.log(full / prefix), abs=1e-12)


def test_long_sequence_does_not_underflow():
    h = random_hmm(3, 3, seed=5)
    seq = sample_sequence(h, 5000, seed=5)
    ll = hmm_sequence_log_prob(h, seq)
    assert np.isfinite(ll) and ll < -1000


# ---------------------------------------------------------------- OOMs


def test_oom_from_hmm_matches_hmm_step():
    h = random_hmm(3, 4, seed=6)
    g = hmm_to_oom(h)
    x, xo = h.x0, g.x0
    for t, y in enumerate([0, 3, 3, 1, 2]):
        x, p = hmm_step(h, x, y)
        xo, po = oom_step_and_prob(g, xo, y)
        assert abs(p - po) < 1e-12, t


def test_identity_oom_probability_one():
    g = GeneralOom(np.eye(3)[None], np.array([1.0, 0, 0]), np.ones(3))
    x = g.x0
    for _ in range(5):
        x, p = oom_step_and_prob(g, x, 0)
        assert p == pytest.approx(1.0, abs=1e-15)


def test_noom_lift_matches_direct_evaluation():
    for seed in range(5):
        m = random_noom(3, 2, seed)
        g = noom_to_oom(m)
        seq = list(np.random.default_rng(seed).integers(0, 2, 6))
        direct = noom_prob_naive(m.phi, m.v0, seq)
        assert abs(np.exp(sequence_log_likelihood(g, seq)) - direct) < 1e-10


def test_oom_complex_probability_is_a_validity_error():
    tau = np.zeros((2, 1, 1), dtype=complex)
    tau[0, 0, 0] = 0.5 + 0.1j
    tau[1, 0, 0] = 0.5 - 0.1j
    g = GeneralOom(tau, np.ones(1), np.ones(1))
    with pytest.raises(ValidityError):
        oom_step_and_prob(g, g.x0, 0)


def test_oom_negative_probability_is_reported():
    T = np.array([[[-0.5]], [[1.5]]])
    g = StandardOom(T, np.ones(1))
    with pytest.raises(NegativeProbabilityError):
        oom_step_and_prob(g, g.x0, 0)


def test_standard_oom_validate_checks_column_sums():
    with pytest.raises(ValidityError):
        StandardOom(np.array([[[0.3]], [[0.3]]]), np.ones(1)).validate()


# ---------------------------------------------------------------- NOOM


def test_noom_single_state():
    c = np.array([0.1, 0.6, 0.3])
    m = Noom(np.sqrt(c)[:, None, None], np.ones(1))
    for y in range(3):
        assert noom_step_and_prob(m, m.v0, y)[1] == pytest.approx(c[y], abs=1e-15)


def test_noom_orthogonal_operator_is_zero_probability():
    phi = np.stack([np.diag([1.0, 0.0]), np.diag([0.0, 1.0])])
    m = Noom(phi, np.array([1.0, 0.0]))
    assert m.symbol_probabilities(m.v0)[1] == 0
    with pytest.raises(ZeroProbabilityError):
        noom_step_and_prob(m, m.v0, 1)


def test_noom_completeness():
    m = random_noom(3, 2, seed=8)
    assert abs(sum(noom_step_and_prob(m, m.v0, y)[1] for y in range(2)) - 1) < 1e-12


def test_noom_validate_rejects_incomplete():
    with pytest.raises(ValidityError):
        Noom(np.eye(2)[None] * 0.5, np.array([1.0, 0.0])).validate()


# ---------------------------------------------------------------- K-HQMM


def test_khqmm_embedding_matches_hmm_per_step():
    h = random_hmm(2, 2, seed=9)
    k = hmm_to_khqmm(h)
    x, rho = h.x0, k.rho0
    for y in [0, 1, 1, 0, 1]:
        expected = [hmm_prob_forward(h.A.tolist(), h.C.tolist(), x.tolist(), [z]) for z in range(2)]
        got = [khqmm_step(k, rho, z)[1] for z in range(2)]
        np.testing.assert_allclose(got, expected, atol=1e-10)
        x, _ = hmm_step(h, x, y)
        rho, _ = khqmm_step(k, rho, y)


def test_khqmm_unitary_single_output():
    u = np.linalg.qr(np.random.default_rng(0).standard_normal((3, 3)) + 0j)[0]
    rho = random_density(3, seed=1)
    k = KHqmm(u[None, None], rho)
    new, p = khqmm_step(k, rho, 0)
    assert p == pytest.approx(1.0, abs=1e-12)
    np.testing.assert_allclose(new, u @ rho @ u.conj().T, atol=1e-12)


def test_khqmm_completeness_and_state_validity():
    k = random_khqmm(3, 3, 2, seed=10)
    rho = k.rho0
    for y in [0, 2, 1, 1, 0]:
        total = sum(khqmm_step(k, rho, z)[1] for z in range(3))
        assert abs(total - 1) < 1e-10
        rho, _ = khqmm_step(k, rho, y)
        assert np.abs(rho - rho.conj().T).max() < 1e-8
        assert abs(np.trace(rho) - 1) < 1e-8
        assert np.linalg.eigvalsh(rho).min() > -1e-8


def test_khqmm_length_one_matches_step():
    k = random_khqmm(2, 3, 1, seed=11)
    p = khqmm_step(k, k.rho0, 1)[1]
    assert np.exp(khqmm_sequence_log_likelihood(k, [1])) == pytest.approx(p, rel=1e-13)


def test_khqmm_single_state_hmm():
    c = np.array([0.25, 0.75])
    k = hmm_to_khqmm(Hmm(np.ones((1, 1)), c[:, None], np.ones(1)))
    seq = [1, 1, 0, 1]
    assert khqmm_sequence_log_likelihood(k, seq) == pytest.approx(np.log(c[seq]).sum(), abs=1e-12)


def test_khqmm_brute_force_normalization():
    k = random_khqmm(2, 2, 2, seed=12)
    total = sum(np.exp(khqmm_sequence_log_likelihood(k, q)) for q in all_sequences(2, 4))
    assert abs(total - 1) < 1e-9


def test_khqmm_scaled_matches_nested_trace():
    for seed in range(5):
        k = random_khqmm(3, 2, 2, seed)
        seq = list(np.random.default_rng(seed).integers(0, 2, 20))
        naive = hqmm_prob_naive(k.kraus, k.rho0, seq)
        assert abs(khqmm_sequence_log_likelihood(k, seq) - np.log(naive.real)) < 1e-8


def test_khqmm_vectorized_matches_scalar_path():
    k = random_khqmm(3, 3, 2, seed=13)
    seqs = np.random.default_rng(0).integers(0, 3, (6, 40))
    vec = khqmm_log_likelihoods(k.kraus, k.rho0, seqs, burn_in=5)
    loop = [khqmm_sequence_log_likelihood(k, q, burn_in=5) for q in seqs]
    np.testing.assert_allclose(vec, loop, atol=1e-10)
    np.testing.assert_allclose(log_likelihoods(k, list(seqs), burn_in=5), loop, atol=1e-10)


def test_khqmm_validate_rejects_non_isometry():
    k = random_khqmm(2, 2, 1, seed=0)
    with pytest.raises(ValidityError):
        KHqmm(k.kraus * 1.1, k.rho0).validate()


# ---------------------------------------------------------------- L-HQMM


def test_lhqmm_identity_channel():
    rho = random_density(2, seed=2)
    m = LHqmm(kraus_to_liouville(np.eye(2)[None])[None], rho.reshape(-1, order="F"))
    new, p = lhqmm_step_and_prob(m, m.rho0_vec, 0)
    assert p == pytest.approx(1.0, abs=1e-14)
    np.testing.assert_allclose(new, m.rho0_vec, atol=1e-14)


def test_lhqmm_agrees_with_khqmm_stepwise():
    k = random_khqmm(3, 2, 2, seed=14)
    m = khqmm_to_lhqmm(k)
    rho, vec = k.rho0, m.rho0_vec
    for y in [1, 0, 0, 1, 1, 0]:
        rho, p = khqmm_step(k, rho, y)
        vec, q = lhqmm_step_and_prob(m, vec, y)
        assert abs(p - q) < 1e-10
        np.testing.assert_allclose(vec.reshape(3, 3, order="F"), rho, atol=1e-10)


def test_lhqmm_completeness():
    m = khqmm_to_lhqmm(random_khqmm(2, 3, 3, seed=15))
    assert abs(sum(lhqmm_step_and_prob(m, m.rho0_vec, y)[1] for y in range(3)) - 1) < 1e-10


# ---------------------------------------------------------------- families


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10_000), seq=st.lists(st.integers(0, 1), min_size=1, max_size=6))
def test_completeness_along_reachable_states(seed, seq):
    for model in _random_models(seed):
        state = model.initial_state()
        for y in seq:
            probs = np.real_if_close(model.symbol_probabilities(state))
            assert abs(np.sum(probs) - 1) < 1e-10
            state, _ = model.step(state, y)


@pytest.mark.parametrize("family_index", range(5))
@pytest.mark.parametrize("length", [1, 2, 3, 4])
def test_distribution_normalization(family_index, length):
    model = _random_models(21)[family_index]
    total = sum(np.exp(sequence_log_likelihood(model, q)) for q in all_sequences(model.s, length))
    assert abs(total - 1) < 1e-9


def test_noom_states_stay_unit_norm():
    m = random_noom(3, 2, seed=16)
    v = m.v0
    for y in [0, 1, 1, 0, 0]:
        v, _ = noom_step_and_prob(m, v, y)
        assert abs(np.linalg.norm(v) - 1) < 1e-12


def test_hmm_states_stay_stochastic():
    h = random_hmm(4, 3, seed=17)
    x = h.x0
    for y in [2, 0, 1, 1]:
        x, _ = hmm_step(h, x, y)
        assert x.min() >= 0 and abs(x.sum() - 1) < 1e-12


# ---------------------------------------------------------------- sampling


def test_sampling_deterministic_emission():
    A = np.array([[0, 1], [1, 0]], dtype=float)
    h = Hmm(A, np.eye(2), np.array([1.0, 0.0]))
    np.testing.assert_array_equal(sample_sequence(h, 6, seed=0), [1, 0, 1, 0, 1, 0])


def test_sampling_uniform_frequency():
    u = np.full((2, 2), 0.5)
    h = Hmm(u, u, np.array([0.5, 0.5]))
    seq = sample_sequence(h, 100_000, seed=1)
    assert abs(seq.mean() - 0.5) < 0.01


def test_sampling_is_deterministic_per_seed():
    k = random_khqmm(2, 3, 2, seed=3)
    np.testing.assert_array_equal(sample_sequence(k, 200, seed=9), sample_sequence(k, 200, seed=9))
    assert not np.array_equal(sample_sequence(k, 200, seed=9), sample_sequence(k, 200, seed=10))


# ---------------------------------------------------------------- bounded validity


def test_depth_check_passes_for_hmm_oom():
    report = validate_oom_depth(hmm_to_oom(random_hmm(3, 2, seed=18)), 6)
    assert report["bounded"] is True
    assert report["violations"] == []
    assert report["min_probability"] >= 0
    assert report["max_marginal_residual"] < 1e-12
    assert report["sequences_checked"] == sum(2**d for d in range(1, 7))


def test_depth_check_finds_sign_flip():
    g = hmm_to_oom(random_hmm(2, 2, seed=19))
    tau = np.array(g.tau)
    tau[0] *= -1
    report = validate_oom_depth(GeneralOom(tau, g.x0, g.sigma), 1)
    assert [seq for seq, _ in report["violations"]] == [(0,)]


def test_depth_check_passes_for_noom_lift():
    for seed in range(5):
        report = validate_oom_depth(noom_to_oom(random_noom(2, 3, seed)), 4)
        assert report["violations"] == []


def test_depth_check_guard():
    with pytest.raises(ResourceError):
        validate_oom_depth(hmm_to_oom(random_hmm(2, 4, seed=0)), 11)


def test_random_initial_vector_is_unit():
    assert abs(np.linalg.norm(random_unit_vector(5, seed=0)) - 1) < 1e-14
