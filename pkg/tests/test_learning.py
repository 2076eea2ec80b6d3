import time
from dataclasses import replace

import numpy as np
import pytest

from conftest import wirtinger_fd
from hqmm.core import random_density, random_stiefel, stiefel_residual
from hqmm.errors import ConfigurationError, InputError, StepError
from hqmm.learning import (
    HYPERBAND_SCHEDULES,
    TrainingConfig,
    batch_loss,
    conjugate_gradient,
    hyperband_search,
    momentum_renorm,
    polar_projection,
    projection_update,
    train,
    wen_yin_retraction,
)
from hqmm.models import (
    Hmm,
    khqmm_sequence_log_likelihood,
    random_hmm,
    random_khqmm,
    sample_sequence,
)
from hqmm.representations import hmm_to_khqmm, khqmm_to_lhqmm, validate_channel


def _random_batch(s, m, length, seed):
    return list(np.random.default_rng(seed).integers(0, s, (m, length)))


def _tangent(kappa, G):
    """Component of ``G`` tangent to the Stiefel manifold at ``kappa``."""
    sym = (kappa.conj().T @ G + G.conj().T @ kappa) / 2
    return G - kappa @ sym


# ---------------------------------------------------------------- loss


def test_loss_of_single_state_model():
    c = np.array([0.2, 0.3, 0.5])
    k = hmm_to_khqmm(Hmm(np.ones((1, 1)), c[:, None], np.ones(1)))
    seq = np.array([2, 0, 1, 2, 2])
    assert batch_loss(k.kraus, k.rho0, [seq]) == pytest.approx(-np.log(c[seq]).sum(), abs=1e-12)


def test_loss_of_uniform_model():
    s, n = 3, 2
    kraus = np.zeros((s, 1, n, n), dtype=complex)
    kraus[:, 0] = np.eye(n) / np.sqrt(s)
    batch = _random_batch(s, 4, 7, seed=0)
    assert batch_loss(kraus, random_density(n, 0), batch) == pytest.approx(7 * np.log(s), abs=1e-12)


def test_loss_is_mean_of_sequence_likelihoods():
    k = random_khqmm(3, 3, 2, seed=1)
    batch = _random_batch(3, 6, 15, seed=1) + _random_batch(3, 2, 9, seed=2)
    expected = -np.mean([khqmm_sequence_log_likelihood(k, q, burn_in=3) for q in batch])
    assert abs(batch_loss(k.kraus, k.rho0, batch, burn_in=3) - expected) < 1e-12


def test_loss_rejects_bad_symbols():
    k = random_khqmm(2, 2, 1, seed=0)
    with pytest.raises(InputError):
        batch_loss(k.kraus, k.rho0, [np.array([0, 2])])


# ---------------------------------------------------------------- gradient


@pytest.mark.parametrize("burn_in", [0, 4])
def test_gradient_matches_finite_differences(burn_in):
    k = random_khqmm(2, 3, 1, seed=2)
    batch = _random_batch(3, 5, 10, seed=3)
    _, G = conjugate_gradient(k.kraus, k.rho0, batch, burn_in)
    fd = wirtinger_fd(lambda K: batch_loss(K, k.rho0, batch, burn_in), k.kraus)
    rel = np.abs(G - fd).max() / np.abs(fd).max()
    assert rel < 1e-5


def test_gradient_with_mixed_lengths():
    k = random_khqmm(2, 2, 2, seed=4)
    batch = _random_batch(2, 3, 8, seed=4) + _random_batch(2, 2, 5, seed=5)
    _, G = conjugate_gradient(k.kraus, k.rho0, batch, 2)
    fd = wirtinger_fd(lambda K: batch_loss(K, k.rho0, batch, 2), k.kraus)
    assert np.abs(G - fd).max() / np.abs(fd).max() < 1e-5


def test_gradient_vanishes_at_single_state_optimum():
    seq = np.array([0, 1, 1, 2, 1, 0, 2, 1, 1, 1])
    freq = np.bincount(seq, minlength=3) / seq.size
    kraus = np.sqrt(freq).reshape(3, 1, 1, 1).astype(complex)
    rho0 = np.ones((1, 1), dtype=complex)
    _, G = conjugate_gradient(kraus, rho0, [seq])
    kappa = kraus.reshape(-1, 1)
    assert np.abs(_tangent(kappa, G.reshape(-1, 1))).max() < 1e-8
    fd = wirtinger_fd(lambda K: batch_loss(K, rho0, [seq]), kraus).reshape(-1, 1)
    assert np.abs(_tangent(kappa, fd)).max() < 1e-8


def test_gradient_is_zero_when_everything_is_burn_in():
    k = random_khqmm(2, 2, 1, seed=6)
    batch = _random_batch(2, 3, 5, seed=6)
    loss, G = conjugate_gradient(k.kraus, k.rho0, batch, burn_in=5)
    assert loss == 0
    assert np.abs(G).max() == 0


# ---------------------------------------------------------------- momentum


def test_momentum_without_memory_normalizes(rng):
    G = rng.standard_normal((6, 2)) + 1j * rng.standard_normal((6, 2))
    direction, _ = momentum_renorm(G, np.zeros_like(G), 0.0)
    np.testing.assert_allclose(direction, G / np.linalg.norm(G), atol=1e-15)


def test_momentum_with_repeated_gradient(rng):
    G = rng.standard_normal((6, 2)) + 0j
    _, M = momentum_renorm(G, np.zeros_like(G), 0.9)
    direction, _ = momentum_renorm(G, M, 0.9)
    np.testing.assert_allclose(direction, G / np.linalg.norm(G), atol=1e-14)


def test_momentum_direction_has_unit_norm(rng):
    M = np.zeros((8, 2), dtype=complex)
    for _ in range(10):
        G = rng.standard_normal((8, 2)) + 1j * rng.standard_normal((8, 2))
        direction, M = momentum_renorm(G * rng.uniform(1e-6, 1e6), M, 0.9)
        assert abs(np.linalg.norm(direction) - 1) < 1e-12


def test_momentum_zero_gradient_is_harmless():
    direction, M = momentum_renorm(np.zeros((4, 2)), np.zeros((4, 2)), 0.9)
    assert np.all(direction == 0) and np.all(M == 0)


# ---------------------------------------------------------------- retractions


def test_retraction_at_zero_step(rng):
    kappa = random_stiefel(12, 2, 0)
    G = rng.standard_normal((12, 2)) + 0j
    np.testing.assert_array_equal(wen_yin_retraction(kappa, G, 0.0), kappa)


def test_retraction_with_zero_gradient():
    kappa = random_stiefel(12, 2, 1)
    np.testing.assert_allclose(wen_yin_retraction(kappa, np.zeros_like(kappa), 0.7), kappa, atol=1e-15)


@pytest.mark.parametrize("tau", [1e-3, 0.1, 0.75, 10.0])
def test_retraction_stays_on_manifold(tau, rng):
    for seed in range(10):
        kappa = random_stiefel(16, 2, seed)
        G = rng.standard_normal((16, 2)) + 1j * rng.standard_normal((16, 2))
        G /= np.linalg.norm(G)
        assert stiefel_residual(wen_yin_retraction(kappa, G, tau)) < 1e-10


def test_retraction_reports_singular_system():
    kappa = random_stiefel(4, 1, 0)
    with pytest.raises(StepError):
        wen_yin_retraction(kappa, np.full_like(kappa, np.nan), 0.5)


def test_projection_update_at_zero_step(rng):
    kappa = random_stiefel(12, 2, 2)
    np.testing.assert_allclose(projection_update(kappa, rng.standard_normal((12, 2)), 0.0), kappa, atol=1e-14)


def test_projection_update_is_orthonormal(rng):
    for seed in range(10):
        kappa = random_stiefel(12, 3, seed)
        G = rng.standard_normal((12, 3)) + 1j * rng.standard_normal((12, 3))
        assert stiefel_residual(projection_update(kappa, G, 0.6)) < 1e-10


def test_projection_rejects_rank_deficient():
    with pytest.raises(StepError):
        polar_projection(np.zeros((4, 2)))


def test_retraction_descends_along_gradient():
    for seed in range(20):
        k = random_khqmm(2, 3, 2, seed)
        batch = _random_batch(3, 4, 12, seed)
        loss0, G = conjugate_gradient(k.kraus, k.rho0, batch)
        kappa = k.kappa
        moved = wen_yin_retraction(kappa, G.reshape(kappa.shape), 1e-5)
        loss1 = batch_loss(moved.reshape(k.kraus.shape), k.rho0, batch)
        assert (loss1 - loss0) / 1e-5 < 0


# ---------------------------------------------------------------- config


def test_config_validation():
    with pytest.raises(ConfigurationError):
        TrainingConfig(tau=0).validate()
    with pytest.raises(ConfigurationError):
        TrainingConfig(alpha=1.5).validate()
    with pytest.raises(ConfigurationError):
        TrainingConfig(beta=1.0).validate()
    with pytest.raises(ConfigurationError):
        TrainingConfig(update_scheme="adam").validate()
    assert TrainingConfig().validate().tau == 0.75


# ---------------------------------------------------------------- training


def test_zero_epochs_returns_initialization():
    data = _random_batch(3, 4, 30, seed=0)
    run = train(data, (2, 3, 1), TrainingConfig(epochs=0, burn_in=5))
    assert len(run.records) == 1 and run.records[0].epoch == 0
    np.testing.assert_array_equal(run.final_kappa, run.initial_kappa)
    np.testing.assert_array_equal(run.best_kappa, run.initial_kappa)


def test_single_state_training_recovers_frequencies():
    rng = np.random.default_rng(3)
    p = np.array([0.5, 0.3, 0.2])
    data = [rng.choice(3, size=200, p=p) for _ in range(10)]
    freq = np.bincount(np.concatenate(data), minlength=3) / 2000
    run = train(data, (1, 3, 1), TrainingConfig(epochs=60, burn_in=0, batch_size=5, seed=1))
    learned = np.abs(run.final_kappa[:, 0]) ** 2
    assert np.abs(learned - freq).max() < 0.01


def test_training_is_reproducible_and_feasible():
    h = random_hmm(3, 3, seed=4)
    data = [sample_sequence(h, 60, seed=i) for i in range(6)]
    cfg = TrainingConfig(epochs=4, batch_size=3, burn_in=10, seed=5)
    a = train(data, (2, 3, 2), cfg, validation=data[:2])
    b = train(data, (2, 3, 2), cfg, validation=data[:2])
    np.testing.assert_array_equal(a.final_kappa, b.final_kappa)
    assert max(a.feasibility) < 1e-8
    assert len(a.feasibility) == 1 + 4 * 2
    assert a.best_validation_da == max(r.validation_da for r in a.records)
    report = validate_channel(khqmm_to_lhqmm(a.model("final")).L)
    assert report["tp_residual"] < 1e-8 and report["cp_min_eig"] > -1e-8


def test_training_reduces_loss():
    h = random_hmm(3, 3, seed=6)
    data = [sample_sequence(h, 120, seed=i) for i in range(6)]
    run = train(data, (3, 3, 1), TrainingConfig(epochs=10, batch_size=2, burn_in=20, seed=1))
    assert run.records[-1].loss < run.records[1].loss
    assert run.best_validation_da > run.records[0].validation_da


def test_batches_cap_limits_steps():
    data = _random_batch(2, 9, 20, seed=1)
    run = train(data, (2, 2, 1), TrainingConfig(epochs=2, batch_size=2, batches=3, burn_in=2))
    assert len(run.feasibility) == 1 + 2 * 3


def test_projection_scheme_trains():
    data = _random_batch(2, 6, 40, seed=2)
    run = train(data, (2, 2, 2), TrainingConfig(epochs=3, batch_size=3, burn_in=5, update_scheme="projection"))
    assert max(run.feasibility) < 1e-8


def test_training_rejects_empty_data():
    with pytest.raises(ConfigurationError):
        train([], (2, 2, 1))


# ---------------------------------------------------------------- hyperband


def _rounds(trials):
    out = {}
    for t in trials:
        out.setdefault(t["round"], []).append(t["epochs"])
    return [(len(v), v[0]) for _, v in sorted(out.items())]


def test_hyperband_builtin_schedules():
    assert HYPERBAND_SCHEDULES[27] == [(27, 3), (9, 9), (3, 9), (1, 27)]
    assert HYPERBAND_SCHEDULES[9] == [(9, 3), (3, 9), (1, 27)]


def test_hyperband_k9_schedule_from_trial_log():
    data = _random_batch(2, 4, 20, seed=0)
    base = TrainingConfig(batch_size=4, burn_in=2)
    # shrink budgets but keep the elimination rule
    result = hyperband_search(data, (2, 2, 1), data[:2], k=9, base_config=base, schedule=[(9, 1), (3, 2), (1, 3)])
    assert _rounds(result.trials) == [(9, 1), (3, 2), (1, 3)]
    best = max(result.trials, key=lambda t: t["best_validation_da"])
    assert result.best_run.best_validation_da == best["best_validation_da"]


def test_hyperband_survivors_are_the_top_third():
    data = _random_batch(2, 4, 20, seed=1)
    result = hyperband_search(
        data, (2, 2, 1), data[:2], k=9, base_config=TrainingConfig(batch_size=4, burn_in=2),
        schedule=[(9, 1), (3, 1)],
    )
    first = [t for t in result.trials if t["round"] == 0]
    ranked = sorted(first, key=lambda t: -t["best_validation_da"])
    assert {t["config_id"] for t in result.trials if t["round"] == 1} == {t["config_id"] for t in ranked[:3]}


def test_hyperband_rejects_unsupported_k():
    with pytest.raises(ConfigurationError):
        hyperband_search([np.zeros(5, int)], (1, 1, 1), None, k=5)


def test_hyperband_single_configuration_equals_train():
    data = _random_batch(2, 4, 20, seed=2)
    base = TrainingConfig(tau=0.6, alpha=0.95, epochs=99, batch_size=2, burn_in=2, seed=7)
    result = hyperband_search(
        data, (2, 2, 1), data[:2], k=1, base_config=base, schedule=[(1, 3)],
        tau_range=(0.6, 0.6), alpha_range=(0.95, 0.95),
    )
    plain = train(data, (2, 2, 1), replace(base, epochs=3), validation=data[:2])
    np.testing.assert_array_equal(result.best_run.final_kappa, plain.final_kappa)


# ---------------------------------------------------------------- complexity


def _time_loss(n, s, w, m, length):
    k = random_khqmm(n, s, w, 0)
    batch = _random_batch(s, m, length, 0)
    best = np.inf
    for _ in range(5):
        start = time.perf_counter()
        batch_loss(k.kraus, k.rho0, batch)
        best = min(best, time.perf_counter() - start)
    return best


@pytest.mark.slow
def test_loss_cost_scaling():
    base = dict(n=24, s=2, w=2, m=48, length=60)
    t0 = _time_loss(**base)
    for key, expected in [("m", 2), ("length", 2), ("w", 2), ("n", 8)]:
        ratio = _time_loss(**{**base, key: base[key] * 2}) / t0
        assert 0.5 * expected <= ratio <= 1.5 * expected, (key, ratio)
