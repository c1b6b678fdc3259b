import numpy as np
import pytest
import scipy.sparse
from hypothesis import given, settings
from hypothesis import strategies as st

from sparsebeat.beats import TrainingSet
from sparsebeat.dictlearn import (
    BeatError,
    CoefficientMatrix,
    LearnConfig,
    LearningTrace,
    RankDeficientError,
    approximation_product,
    init_dictionary,
    learn,
    prune_unused,
    solve_dictionary,
    sparse_code_step,
    update_dictionary,
)
from sparsebeat.pursuit import Dictionary

from .oracles import lstsq_dictionary


def coeffs_from_dense(C):
    C = np.asarray(C, dtype=float)
    return CoefficientMatrix(scipy.sparse.csc_array(C), np.zeros(C.shape[1]), np.ones(C.shape[1], bool))


def random_sparse_full_rank(m, q, density, rng):
    while True:
        C = rng.standard_normal((m, q)) * (rng.random((m, q)) < density)
        if np.linalg.matrix_rank(C) == m:
            return C


def test_init_is_normalized_subset():
    rng = np.random.default_rng(0)
    F = rng.standard_normal((6, 10))
    ts = TrainingSet.from_beats(F, "N")
    d = init_dictionary(ts, 10, seed=3)
    normed = F / np.linalg.norm(F, axis=0)
    # M = Q: a column permutation of the normalized beats
    order = [int(np.argmax(np.abs(normed.T @ a))) for a in d.atoms.T]
    assert sorted(order) == list(range(10))
    np.testing.assert_allclose(d.atoms, normed[:, order])
    np.testing.assert_array_equal(init_dictionary(ts, 4, seed=3).atoms, init_dictionary(ts, 4, seed=3).atoms)
    with pytest.raises(ValueError):
        init_dictionary(ts, 11)


def test_init_skips_zero_beats():
    F = np.zeros((4, 6))
    F[:, :3] = np.random.default_rng(1).standard_normal((4, 3))
    d = init_dictionary(TrainingSet.from_beats(F, "N"), 3, seed=0)
    assert d.m == 3
    with pytest.raises(ValueError):
        init_dictionary(TrainingSet.from_beats(F, "N"), 4, seed=0)


def test_sparse_code_orthonormal_one_sparse():
    rng = np.random.default_rng(2)
    q, _ = np.linalg.qr(rng.standard_normal((6, 6)))
    F = q[:, [0, 3, 3, 5]] * np.array([2.0, -1.0, 0.5, 3.0])
    C = sparse_code_step(TrainingSet.from_beats(F, "N"), Dictionary(q), "omp", 1e-6)
    np.testing.assert_array_equal(C.k_per_column, 1)


def test_sparse_code_span_of_three():
    rng = np.random.default_rng(3)
    atoms = rng.standard_normal((10, 12))
    d = Dictionary(atoms / np.linalg.norm(atoms, axis=0))
    F = d.atoms[:, :3] @ rng.standard_normal((3, 8))
    for alg in ("omp", "oomp"):
        C = sparse_code_step(TrainingSet.from_beats(F, "N"), d, alg, 1e-8)
        assert np.all(C.k_per_column <= 3)


def test_frobenius_identity():
    rng = np.random.default_rng(4)
    atoms = rng.standard_normal((10, 20))
    d = Dictionary(atoms / np.linalg.norm(atoms, axis=0))
    F = rng.standard_normal((10, 15))
    C = sparse_code_step(TrainingSet.from_beats(F, "N"), d, "mp", 20.0)
    total = np.linalg.norm(F - approximation_product(d.atoms, C))
    assert total == pytest.approx(np.sqrt(np.sum(C.residual_norms**2)), rel=1e-9)


def test_sparse_code_error_has_provenance():
    F = np.ones((4, 3))
    F[:, 0] = [1.0, 2.0, 3.0, 4.0]
    ts = TrainingSet(F, ["N"] * 3, ["r9"] * 3, [5, 6, 7])
    with pytest.raises(BeatError) as info:
        sparse_code_step(ts, Dictionary(np.eye(4)), "omp", 5.0)
    assert (info.value.record, info.value.sample) == ("r9", 6)


def test_update_identity_coefficients():
    rng = np.random.default_rng(5)
    F = rng.standard_normal((5, 4))
    d = update_dictionary(F, coeffs_from_dense(np.eye(4)))
    np.testing.assert_allclose(d.atoms, F / np.linalg.norm(F, axis=0), atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_update_matches_lstsq_oracle(seed):
    rng = np.random.default_rng(seed)
    F = rng.standard_normal((4, 6))
    C = random_sparse_full_rank(3, 6, 0.7, rng)
    D = solve_dictionary(F, coeffs_from_dense(C))
    np.testing.assert_allclose(D, lstsq_dictionary(F, C), atol=1e-8, rtol=1e-8)
    # normal equations before renormalization
    lhs = F @ C.T
    assert np.linalg.norm(lhs - D @ (C @ C.T)) <= 1e-6 * np.linalg.norm(lhs)
    D_old = rng.standard_normal((4, 3))
    assert np.linalg.norm(F - D @ C) <= np.linalg.norm(F - D_old @ C) + 1e-12


def test_rank_deficient_update():
    F = np.random.default_rng(6).standard_normal((4, 5))
    C = np.zeros((3, 5))
    C[0] = 1.0
    C[1] = 2.0
    C[2, 0] = 1.0
    with pytest.raises(RankDeficientError, match="rank-deficient coefficients"):
        update_dictionary(F, coeffs_from_dense(C))


def test_prune_unused():
    rng = np.random.default_rng(7)
    atoms = rng.standard_normal((5, 4))
    d = Dictionary(atoms / np.linalg.norm(atoms, axis=0))
    C = rng.standard_normal((4, 6))
    same_d, same_c, removed = prune_unused(d, coeffs_from_dense(C))
    assert removed == [] and same_d is d
    C[2] = 0.0
    cm = coeffs_from_dense(C)
    d2, c2, removed = prune_unused(d, cm)
    assert removed == [2] and d2.m == 3 and c2.shape == (3, 6)
    np.testing.assert_array_equal(approximation_product(d2.atoms, c2), approximation_product(d.atoms, cm))
    with pytest.raises(ValueError):
        prune_unused(d, coeffs_from_dense(np.zeros((4, 6))))


def test_learn_converges_immediately_on_exact_basis():
    rng = np.random.default_rng(8)
    q, _ = np.linalg.qr(rng.standard_normal((6, 6)))
    F = q @ np.diag([1.0, 2.0, -1.0, 3.0, 1.5, -2.0])
    ts = TrainingSet.from_beats(np.hstack([F, 2 * F]), "N")
    d, trace = learn(ts, LearnConfig(m=6, algorithm="omp", prdn_target=1e-6), initial=Dictionary(q))
    assert trace.converged and len(trace) == 1
    assert trace.dictionary_change[0] < 1e-12


def test_learn_trace_and_determinism():
    rng = np.random.default_rng(9)
    F = rng.standard_normal((8, 60))
    ts = TrainingSet.from_beats(F, "V")
    cfg = LearnConfig(m=12, algorithm="mp", prdn_target=30.0, max_outer_iterations=5, seed=4)
    d1, t1 = learn(ts, cfg)
    d2, t2 = learn(ts, cfg, n_jobs=2)
    np.testing.assert_array_equal(d1.atoms, d2.atoms)
    assert t1.to_dict() == t2.to_dict()
    assert d1.label == "V"
    assert 1 <= len(t1) <= 5
    lengths = {len(t1.mean_k), len(t1.approximation_error), len(t1.dictionary_change), len(t1.pruned)}
    assert lengths == {len(t1)}
    assert np.all(np.isfinite(t1.mean_k + t1.approximation_error + t1.dictionary_change))
    np.testing.assert_allclose(np.linalg.norm(d1.atoms, axis=0), 1.0, atol=1e-9)
    assert LearningTrace.from_dict(t1.to_dict()) == t1


def test_learn_failed_update_returns_last_dictionary():
    # every beat is q * (e1 + e2): both coefficient rows are equal, so C C^T is singular
    F = np.outer([1.0, 1.0, 0.0, 0.0], np.arange(1, 6, dtype=float))
    ts = TrainingSet.from_beats(F, "N")
    init = Dictionary(np.eye(4)[:, :2])
    d, trace = learn(ts, LearnConfig(m=2, algorithm="omp", prdn_target=1e-6), initial=init)
    np.testing.assert_array_equal(d.atoms, init.atoms)
    assert "rank-deficient coefficients" in trace.diagnostic
    assert len(trace) == 0 and not trace.converged


def test_learn_config_validation():
    with pytest.raises(ValueError):
        LearnConfig(m=0)
    with pytest.raises(ValueError):
        LearnConfig(tol=0)
    with pytest.raises(ValueError):
        LearnConfig(max_outer_iterations=0)
