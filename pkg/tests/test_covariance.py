import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from freeclt.covariance import (
    CovarianceModel,
    MissingFourthMoments,
    alpha2,
    alpha4_bounds,
    beta2,
    beta_constants,
    eta_apply,
    fourth_moment_word,
    model_from_json,
    model_to_json,
    moment_constants,
    scalar_model,
)
from freeclt.operator_space import DimensionMismatch, operator_norm


def _eta_oracle(coeffs, sigma, b):
    # the literal double sum
    out = np.zeros_like(b, dtype=complex)
    for k in range(len(coeffs)):
        for l in range(len(coeffs)):
            out += sigma[k][l] * coeffs[k] @ b @ coeffs[l]
    return out


def _independent_pm1_m4(d):
    # phi(x^k x^l x^p x^r) for free (or classically independent) +-1 variables:
    # 1 when all indices agree or they pair up as k=l, p=r or k=r, l=p
    m4 = np.zeros((d, d, d, d))
    for k in range(d):
        for l in range(d):
            m4[k, k, l, l] = 1
            m4[k, l, l, k] = 1
    return m4


def block_model(m4=None):
    return CovarianceModel([np.diag([1.0, 0.0]), np.diag([0.0, 1.0])], np.eye(2), m4)


def random_model(rng, N, d, with_m4=False):
    coeffs = []
    for _ in range(d):
        a = rng.standard_normal((N, N)) + 1j * rng.standard_normal((N, N))
        coeffs.append((a + a.conj().T) / 2)
    s = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    m4 = _independent_pm1_m4(d) if with_m4 else None
    return CovarianceModel(coeffs, s @ s.conj().T, m4)


def test_eta_scalar_identity():
    m = scalar_model()
    assert eta_apply(m, np.array([[2 - 1j]]))[0, 0] == 2 - 1j


def test_eta_block_model():
    b = np.array([[1 + 1j, 2], [3, 4 - 2j]])
    np.testing.assert_allclose(eta_apply(block_model(), b), np.diag([1 + 1j, 4 - 2j]), atol=1e-15)


def test_eta_of_zero():
    rng = np.random.default_rng(0)
    m = random_model(rng, 3, 2)
    assert np.all(eta_apply(m, np.zeros((3, 3))) == 0)


def test_eta_matches_double_sum():
    rng = np.random.default_rng(1)
    for N, d in [(1, 1), (2, 3), (4, 2)]:
        m = random_model(rng, N, d)
        b = rng.standard_normal((N, N)) + 1j * rng.standard_normal((N, N))
        np.testing.assert_allclose(eta_apply(m, b), _eta_oracle(m.coefficients, m.sigma, b), atol=1e-12)


def test_eta_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        eta_apply(block_model(), np.eye(3))


@pytest.mark.parametrize("model, expected", [
    (scalar_model(), 1.0),
    (block_model(), 1.0),
    (CovarianceModel([np.diag([2.0, 1.0])], [[1.0]]), 4.0),
])
def test_alpha2_examples(model, expected):
    assert alpha2(model) == pytest.approx(expected, rel=1e-15)


def test_fourth_moment_word_examples():
    assert fourth_moment_word(scalar_model(1.0, 1.0), np.ones((1, 1)))[0, 0] == pytest.approx(1.0)
    assert fourth_moment_word(scalar_model(1.0, 2.0), np.ones((1, 1)))[0, 0] == pytest.approx(2.0)
    assert np.all(fourth_moment_word(scalar_model(1.0, 1.0), np.zeros((1, 1))) == 0)


def test_fourth_moment_word_matches_quadruple_sum():
    rng = np.random.default_rng(2)
    m = random_model(rng, 2, 2, with_m4=True)
    b = rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))
    B, m4 = m.coefficients, m.fourth_moments
    expect = np.zeros((2, 2), dtype=complex)
    for k in range(2):
        for l in range(2):
            for p in range(2):
                for r in range(2):
                    expect += m4[k, l, p, r] * B[k] @ b @ B[l] @ B[p] @ b.conj().T @ B[r]
    np.testing.assert_allclose(fourth_moment_word(m, b), expect, atol=1e-12)


def test_missing_fourth_moments():
    m = scalar_model()
    with pytest.raises(MissingFourthMoments):
        fourth_moment_word(m, np.ones((1, 1)))
    with pytest.raises(MissingFourthMoments):
        alpha4_bounds(m)
    with pytest.raises(MissingFourthMoments):
        beta_constants(m)
    assert beta2(m) == 1.0


def test_fourth_moment_word_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        fourth_moment_word(scalar_model(1.0, 1.0), np.eye(2))


@pytest.mark.parametrize("m4", [1.0, 2.0])
def test_alpha4_exact_for_scalar(m4):
    lo, hi = alpha4_bounds(scalar_model(1.0, m4))
    assert lo == pytest.approx(m4, abs=1e-12)
    assert hi == pytest.approx(m4, abs=1e-12)


def test_alpha4_block_model_ordering():
    lo, hi = alpha4_bounds(block_model(_independent_pm1_m4(2)), samples=300)
    assert 0 < lo <= hi
    # triangle sum: six nonzero m4 entries, every ||b_k|| = 1
    assert hi == pytest.approx(6.0)


def test_alpha4_sandwich_random():
    rng = np.random.default_rng(3)
    for N, d in [(1, 2), (2, 2), (3, 1)]:
        lo, hi = alpha4_bounds(random_model(rng, N, d, with_m4=True), samples=50)
        assert lo <= hi
        if N == 1:
            assert lo == pytest.approx(hi, abs=1e-12)


def test_beta_constants():
    assert beta_constants(block_model(_independent_pm1_m4(2)))[0] == 1.0
    m = CovarianceModel([np.eye(1), np.eye(1)], [[1.0, 0.3], [0.3, 1.0]], _independent_pm1_m4(2))
    assert beta_constants(m)[0] == 1.0
    assert beta_constants(scalar_model(1.0, 1.0)) == (1.0, 1.0)
    c = moment_constants(scalar_model(1.0, 1.0))
    assert (c.alpha2, c.alpha4_lower, c.alpha4_upper, c.beta2, c.beta4) == (1.0, 1.0, 1.0, 1.0, 1.0)


def test_validation():
    with pytest.raises(ValueError, match="Hermitian"):
        CovarianceModel([np.array([[0, 1], [0, 0]])], [[1.0]])
    with pytest.raises(ValueError, match="positive semidefinite"):
        CovarianceModel([np.eye(1), np.eye(1)], [[1.0, 2.0], [2.0, 1.0]])
    with pytest.raises(DimensionMismatch):
        CovarianceModel([np.eye(2)], np.eye(2))
    bad = np.zeros((1, 1, 1, 1), dtype=complex)
    bad[0, 0, 0, 0] = 1j
    with pytest.raises(ValueError, match="adjoint symmetry"):
        CovarianceModel([np.eye(1)], [[1.0]], bad)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 3), st.integers(1, 3), st.integers(0, 2**32 - 1))
def test_complete_positivity_and_adjoint_equivariance(N, d, seed):
    rng = np.random.default_rng(seed)
    m = random_model(rng, N, d)
    a = rng.standard_normal((N, N)) + 1j * rng.standard_normal((N, N))
    psd = a @ a.conj().T
    assert np.linalg.eigvalsh(eta_apply(m, psd))[0] >= -1e-10 * max(1.0, operator_norm(psd))
    np.testing.assert_allclose(eta_apply(m, a.conj().T), eta_apply(m, a).conj().T, atol=1e-12)


def test_norm_attained_at_identity():
    rng = np.random.default_rng(4)
    m = random_model(rng, 3, 2)
    a2 = alpha2(m)
    for _ in range(500):
        b = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
        b /= operator_norm(b)
        assert operator_norm(eta_apply(m, b)) <= a2 + 1e-10


def test_json_roundtrip():
    rng = np.random.default_rng(5)
    m = random_model(rng, 2, 2, with_m4=True)
    back = model_from_json(model_to_json(m))
    np.testing.assert_array_equal(back.coefficients, m.coefficients)
    np.testing.assert_array_equal(back.sigma, m.sigma)
    np.testing.assert_array_equal(back.fourth_moments, m.fourth_moments)


def test_json_names_bad_field():
    obj = model_to_json(block_model())
    del obj["sigma"]
    with pytest.raises(ValueError, match="sigma"):
        model_from_json(obj)
