import numpy as np
import pytest

from src.core.subspace import Fingerprint, OrthoBasis, augment, build_basis, residual
from src.core.vectors import BasisMode
from src.errors import DimensionMismatchError, InvalidInputError


def test_basis_is_orthonormal_and_full_rank(fingerprint):
    basis = build_basis(fingerprint, BasisMode.LOGITS)

    assert basis.dim == fingerprint.vocab_size
    assert basis.r == fingerprint.hidden_size
    gram = basis.columns.T @ basis.columns
    assert np.allclose(gram, np.eye(basis.r), atol=1e-12)


def test_probability_basis_adds_ones_column(fingerprint):
    basis = build_basis(fingerprint, BasisMode.PROBABILITY)

    assert basis.r == fingerprint.hidden_size + 1
    ones = np.ones(fingerprint.vocab_size)
    assert basis.residual(ones).relative_distance < 1e-12


def test_vectors_in_span_have_zero_residual(fingerprint, rng):
    basis = build_basis(fingerprint, BasisMode.LOGITS)
    for _ in range(10):
        s = fingerprint.weights @ rng.standard_normal(fingerprint.hidden_size)
        assert residual(basis, s).relative_distance < 1e-12


def test_random_vector_is_far_from_span(fingerprint, rng):
    basis = build_basis(fingerprint, BasisMode.LOGITS)
    res = basis.residual(rng.standard_normal(fingerprint.vocab_size))

    # случайный вектор почти ортогонален подпространству размерности h << |V|
    assert res.relative_distance > 0.9
    assert np.isclose(np.linalg.norm(res.component), res.distance)


def test_rank_deficient_weights(rng):
    left = rng.standard_normal((200, 5))
    weights = left @ rng.standard_normal((5, 12))
    basis = build_basis(Fingerprint("low-rank", weights), BasisMode.LOGITS)

    assert basis.r == 5


def test_augment_grows_basis_in_place(fingerprint, rng):
    basis = build_basis(fingerprint, BasisMode.LOGITS)
    outside = rng.standard_normal(fingerprint.vocab_size)
    res = basis.residual(outside)

    same = augment(basis, res)

    assert same is basis
    assert basis.r == fingerprint.hidden_size + 1
    assert basis.residual(outside).relative_distance < 1e-12
    gram = basis.columns.T @ basis.columns
    assert np.allclose(gram, np.eye(basis.r), atol=1e-12)


def test_augment_many_columns_keeps_orthogonality(rng):
    basis = OrthoBasis(np.zeros((300, 0)), origin=BasisMode.LOGITS)
    for _ in range(100):
        basis.augment(basis.residual(rng.standard_normal(300)))

    assert basis.r == 100
    assert np.allclose(basis.columns.T @ basis.columns, np.eye(100), atol=1e-10)


def test_copy_is_independent(fingerprint, rng):
    basis = build_basis(fingerprint, BasisMode.LOGITS)
    clone = basis.copy()
    clone.augment(clone.residual(rng.standard_normal(fingerprint.vocab_size)))

    assert basis.r == fingerprint.hidden_size
    assert clone.r == fingerprint.hidden_size + 1


def test_augment_rejects_zero_residual(fingerprint):
    basis = build_basis(fingerprint, BasisMode.LOGITS)
    res = basis.residual(fingerprint.weights[:, 0])
    zero = type(res)(distance=0.0, relative_distance=0.0, component=np.zeros(basis.dim))

    with pytest.raises(InvalidInputError):
        basis.augment(zero)


def test_residual_dimension_mismatch(fingerprint):
    basis = build_basis(fingerprint, BasisMode.LOGITS)

    with pytest.raises(DimensionMismatchError):
        basis.residual(np.ones(fingerprint.vocab_size + 1))


def test_residual_rejects_non_finite(fingerprint):
    basis = build_basis(fingerprint, BasisMode.LOGITS)
    s = np.ones(fingerprint.vocab_size)
    s[3] = np.nan

    with pytest.raises(InvalidInputError):
        basis.residual(s)


@pytest.mark.parametrize("shape", [(10, 10), (5, 8), (10, 0)])
def test_fingerprint_requires_tall_matrix(shape):
    with pytest.raises(InvalidInputError):
        Fingerprint("bad", np.ones(shape))


def test_fingerprint_rejects_non_finite_weights():
    weights = np.ones((10, 2))
    weights[4, 1] = np.inf

    with pytest.raises(InvalidInputError, match="строка 4"):
        Fingerprint("bad", weights)


def test_fingerprint_widens_float32(rng):
    weights = rng.standard_normal((40, 4)).astype(np.float32)
    fp = Fingerprint("f32", weights)

    assert fp.weights.dtype == np.float64
    assert np.array_equal(fp.weights, weights.astype(np.float64))


# -------------------- Свойства проекции --------------------
def test_distance_does_not_depend_on_orthonormalization(fingerprint, rng):
    basis = build_basis(fingerprint, BasisMode.LOGITS)
    mixed = fingerprint.weights @ rng.standard_normal((fingerprint.hidden_size, fingerprint.hidden_size))
    other = OrthoBasis(np.linalg.qr(mixed)[0], origin=BasisMode.LOGITS)

    for _ in range(10):
        s = rng.standard_normal(fingerprint.vocab_size)
        a, b = basis.residual(s).distance, other.residual(s).distance
        assert abs(a - b) <= 1e-9 * a


def test_pythagoras_and_idempotence(fingerprint, rng):
    basis = build_basis(fingerprint, BasisMode.LOGITS)
    for _ in range(10):
        s = rng.standard_normal(fingerprint.vocab_size) + fingerprint.weights @ rng.standard_normal(
            fingerprint.hidden_size
        )
        res = basis.residual(s)
        projection = s - res.component
        norm_sq = float(s @ s)

        assert abs(norm_sq - (float(projection @ projection) + res.distance**2)) <= 1e-9 * norm_sq
        assert basis.residual(projection).distance <= 1e-10 * np.linalg.norm(s)


def test_unit_vector_orthogonal_to_span_has_unit_distance(rng):
    weights = rng.standard_normal((256, 16))
    v = rng.standard_normal(256)
    v -= weights @ np.linalg.lstsq(weights, v, rcond=None)[0]
    v /= np.linalg.norm(v)

    res = residual(build_basis(Fingerprint("w", weights), BasisMode.LOGITS), v)

    assert abs(res.distance - 1.0) <= 1e-9


def test_ones_matrix_in_probability_mode_has_rank_one():
    basis = build_basis(Fingerprint("ones", np.ones((4, 1))), BasisMode.PROBABILITY)

    assert basis.r == 1


def test_augmented_rank_matches_svd_oracle(rng):
    weights = rng.standard_normal((256, 16))
    samples = rng.standard_normal((256, 20))
    basis = build_basis(Fingerprint("w", weights), BasisMode.LOGITS)

    for column in samples.T:
        augment(basis, residual(basis, column))

    sv = np.linalg.svd(np.hstack([weights, samples]), compute_uv=False)
    assert basis.r == 36
    assert basis.r == int(np.count_nonzero(sv > 1e-8 * sv[0]))
