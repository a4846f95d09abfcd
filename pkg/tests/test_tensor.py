import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from robust_cp.tensor import (
    KruskalModel,
    as_tensor,
    fold,
    frobenius_norm,
    khatri_rao,
    khatri_rao_all_but,
    matricize,
    reconstruct,
    smoothed_l1_objective,
)


def random_model(rng, shape, rank):
    return KruskalModel([rng.standard_normal((s, rank)) for s in shape])


def loop_reconstruct(model):
    out = np.zeros(model.shape)
    for idx in itertools.product(*(range(s) for s in model.shape)):
        out[idx] = sum(
            np.prod([f[i, r] for f, i in zip(model.factors, idx)]) for r in range(model.rank)
        )
    return out


def test_matricize_matrix_mode0_is_identity():
    m = np.array([[1.0, 2.0], [3.0, 4.0]])
    np.testing.assert_array_equal(matricize(m, 0), m)


def test_matricize_2x2x2_mode1_by_hand():
    # values 1..8 laid out first-index-fastest: t[i, j, k] = 1 + i + 2j + 4k
    t = as_tensor(np.arange(1, 9), (2, 2, 2))
    assert t[1, 0, 0] == 2 and t[0, 1, 0] == 3 and t[0, 0, 1] == 5
    # columns: (i, k) = (0,0), (1,0), (0,1), (1,1); rows j = 0, 1
    expected = np.array([[1, 2, 5, 6], [3, 4, 7, 8]], dtype=float)
    np.testing.assert_array_equal(matricize(t, 1), expected)


@pytest.mark.parametrize("mode", [0, 1, 2])
def test_fold_round_trip(mode):
    t = np.random.default_rng(0).standard_normal((3, 4, 5))
    np.testing.assert_array_equal(fold(matricize(t, mode), mode, t.shape), t)


def test_fold_round_trip_2x3x4_mode2():
    t = np.random.default_rng(1).standard_normal((2, 3, 4))
    np.testing.assert_array_equal(fold(matricize(t, 2), 2, t.shape), t)


def test_fold_degenerate_dims():
    out = fold(np.array([[1.0], [2.0], [3.0]]), 0, (3, 1, 1))
    assert out.shape == (3, 1, 1)
    np.testing.assert_array_equal(out.ravel(), [1, 2, 3])


def test_fold_shape_mismatch():
    with pytest.raises(ValueError):
        fold(np.zeros((3, 4)), 0, (3, 2, 3))


def test_matricize_mode_out_of_range():
    with pytest.raises(IndexError):
        matricize(np.zeros((2, 2, 2)), 3)


def test_as_tensor_rejects_vectors_and_bad_sizes():
    with pytest.raises(ValueError):
        as_tensor([1.0, 2.0])
    with pytest.raises(ValueError):
        as_tensor([1.0, 2.0, 3.0], (2, 2))


def test_khatri_rao_ones():
    np.testing.assert_array_equal(khatri_rao(np.ones((2, 1)), np.ones((3, 1))), np.ones((6, 1)))


def test_khatri_rao_identities():
    out = khatri_rao(np.eye(2), np.eye(2))
    np.testing.assert_array_equal(out[:, 0], [1, 0, 0, 0])
    np.testing.assert_array_equal(out[:, 1], [0, 0, 0, 1])


def test_khatri_rao_against_kron():
    rng = np.random.default_rng(2)
    a, b = rng.standard_normal((3, 2)), rng.standard_normal((4, 2))
    out = khatri_rao(a, b)
    assert out.shape == (12, 2)
    for r in range(2):
        np.testing.assert_array_equal(out[:, r], np.kron(a[:, r], b[:, r]))


def test_khatri_rao_column_mismatch():
    with pytest.raises(ValueError):
        khatri_rao(np.ones((2, 2)), np.ones((2, 3)))


def test_khatri_rao_all_but_three_way():
    rng = np.random.default_rng(3)
    model = random_model(rng, (4, 3, 2), 2)
    a, b, c = model.factors
    np.testing.assert_array_equal(khatri_rao_all_but(model, 0), khatri_rao(c, b))
    np.testing.assert_array_equal(khatri_rao_all_but(model, 1), khatri_rao(c, a))
    np.testing.assert_allclose(
        matricize(reconstruct(model), 1), b @ khatri_rao_all_but(model, 1).T, rtol=1e-12
    )


def test_khatri_rao_all_but_two_way():
    rng = np.random.default_rng(4)
    model = random_model(rng, (3, 5), 2)
    np.testing.assert_array_equal(khatri_rao_all_but(model, 0), model.factors[1])


def test_reconstruct_ones():
    model = KruskalModel([np.ones((2, 1))] * 3)
    np.testing.assert_array_equal(reconstruct(model), np.ones((2, 2, 2)))


def test_reconstruct_zero_component():
    rng = np.random.default_rng(5)
    first = [rng.standard_normal((s, 1)) for s in (3, 2, 4)]
    two = KruskalModel([np.hstack([f, np.zeros_like(f)]) for f in first])
    np.testing.assert_array_equal(reconstruct(two), reconstruct(KruskalModel(first)))


def test_reconstruct_matches_loops():
    model = random_model(np.random.default_rng(6), (4, 3, 2), 3)
    np.testing.assert_allclose(reconstruct(model), loop_reconstruct(model), rtol=1e-12, atol=1e-14)


def test_kruskal_model_validation():
    with pytest.raises(ValueError):
        KruskalModel([np.ones((2, 2)), np.ones((3, 3))])
    with pytest.raises(ValueError):
        KruskalModel([np.ones((2, 2))])
    model = KruskalModel([np.ones((2, 2)), np.ones((3, 2))])
    with pytest.raises(ValueError):
        model.check_compatible(np.zeros((3, 2)))


def test_frobenius_norm_examples():
    assert frobenius_norm(np.zeros((2, 3))) == 0.0
    assert frobenius_norm(np.array([3.0, 4.0]).reshape(2, 1, 1)) == 5.0
    t = np.random.default_rng(7).standard_normal((3, 4, 5))
    oracle = sum(v * v for v in t.ravel()) ** 0.5
    assert abs(frobenius_norm(t) - oracle) <= 1e-12 * oracle


def test_smoothed_objective_exact_model():
    model = random_model(np.random.default_rng(8), (3, 4, 5), 2)
    value = smoothed_l1_objective(reconstruct(model), model, 1e-10, 0.0)
    assert value == pytest.approx(60 * 1e-5, rel=1e-9)


def test_smoothed_objective_zero_everything():
    model = KruskalModel([np.zeros((s, 2)) for s in (2, 3, 2)])
    assert smoothed_l1_objective(np.zeros((2, 3, 2)), model, 1e-10, 0.5) == pytest.approx(12e-5)


def test_smoothed_objective_matches_loops():
    rng = np.random.default_rng(9)
    model = random_model(rng, (3, 2, 4), 2)
    t = rng.standard_normal((3, 2, 4))
    eps, mu = 1e-3, 0.7
    rec = loop_reconstruct(model)
    oracle = sum(((t[i] - rec[i]) ** 2 + eps) ** 0.5 for i in np.ndindex(t.shape))
    oracle += mu / 2 * sum(float(v) ** 2 for f in model.factors for v in f.ravel())
    assert smoothed_l1_objective(t, model, eps, mu) == pytest.approx(oracle, rel=1e-12)


def test_smoothed_objective_rejects_bad_args():
    model = KruskalModel([np.ones((2, 1))] * 2)
    with pytest.raises(ValueError):
        smoothed_l1_objective(np.ones((2, 2)), model, 0.0, 0.0)
    with pytest.raises(ValueError):
        smoothed_l1_objective(np.ones((3, 2)), model, 1e-3, 0.0)


shapes = st.lists(st.integers(1, 4), min_size=2, max_size=4)


@settings(max_examples=60, deadline=None)
@given(shape=shapes, seed=st.integers(0, 2**32 - 1))
def test_round_trip_property(shape, seed):
    t = np.random.default_rng(seed).standard_normal(shape)
    for mode in range(len(shape)):
        np.testing.assert_array_equal(fold(matricize(t, mode), mode, t.shape), t)


@settings(max_examples=60, deadline=None)
@given(shape=shapes, rank=st.integers(1, 4), seed=st.integers(0, 2**32 - 1))
def test_kruskal_unfolding_identity(shape, rank, seed):
    model = random_model(np.random.default_rng(seed), shape, rank)
    full = reconstruct(model)
    for mode in range(len(shape)):
        lhs = matricize(full, mode)
        rhs = model.factors[mode] @ khatri_rao_all_but(model, mode).T
        assert np.linalg.norm(lhs - rhs) <= 1e-10 * max(np.linalg.norm(lhs), 1e-300)


@settings(max_examples=60, deadline=None)
@given(shape=shapes, rank=st.integers(1, 3), seed=st.integers(0, 2**32 - 1),
       eps=st.floats(1e-12, 1.0))
def test_smoothed_objective_brackets_l1(shape, rank, seed, eps):
    rng = np.random.default_rng(seed)
    model = random_model(rng, shape, rank)
    t = rng.standard_normal(shape)
    l1 = np.sum(np.abs(t - reconstruct(model)))
    value = smoothed_l1_objective(t, model, eps, 0.0)
    assert l1 * (1 - 1e-12) <= value <= (l1 + t.size * np.sqrt(eps)) * (1 + 1e-12)


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), c=st.floats(-1e3, 1e3))
def test_frobenius_homogeneity(seed, c):
    t = np.random.default_rng(seed).standard_normal((3, 2, 2))
    assert frobenius_norm(c * t) == pytest.approx(abs(c) * frobenius_norm(t), rel=1e-12, abs=1e-300)
