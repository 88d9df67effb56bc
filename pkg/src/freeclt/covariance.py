"""Matrix models ``X = sum_k b_k (x) x^(k)`` and their moment maps.

A :class:`CovarianceModel` stores the Hermitian coefficient matrices ``b_k``,
the covariance ``Sigma`` of the scalar variables and optionally their joint
fourth moments. From these it realizes the covariance map

.. math::
    \\eta(b) = \\sum_{k,l} \\sigma_{kl}\\, b_k\\, b\\, b_l

together with the constants that enter the Berry-Esseen bound.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .operator_space import (
    DimensionMismatch,
    adjoint,
    complex_from_json,
    complex_to_json,
    matrix_from_json,
    matrix_to_json,
    operator_norm,
)


class MissingFourthMoments(ValueError):
    """Raised when an operation needs the fourth-moment tensor but none is set."""


class MomentConstants(NamedTuple):
    alpha2: float
    alpha4_lower: float
    alpha4_upper: float
    beta2: float
    beta4: float


@dataclass(frozen=True, eq=False)
class CovarianceModel:
    """Operator-valued model built from ``d`` scalar variables.

    Parameters
    ----------
    coefficients : (d, N, N) ndarray(complex)
        Hermitian matrices ``b_k``.
    sigma : (d, d) ndarray(complex)
        Hermitian positive semidefinite covariance ``sigma_kl = phi(x^k x^l)``.
    fourth_moments : (d, d, d, d) ndarray(complex), optional
        ``m4[k, l, p, r] = phi(x^k x^l x^p x^r)``.
    """

    coefficients: np.ndarray
    sigma: np.ndarray
    fourth_moments: np.ndarray | None = None

    def __post_init__(self):
        coeffs = np.array(self.coefficients, dtype=complex)
        if coeffs.ndim == 2:
            coeffs = coeffs[None]
        if coeffs.ndim != 3 or coeffs.shape[1] != coeffs.shape[2]:
            raise DimensionMismatch(f"coefficients must have shape (d, N, N), got {coeffs.shape}")
        d = coeffs.shape[0]
        sigma = np.array(self.sigma, dtype=complex)
        if sigma.shape != (d, d):
            raise DimensionMismatch(f"sigma must be {d} x {d}, got {sigma.shape}")
        for k, bk in enumerate(coeffs):
            if np.max(np.abs(bk - adjoint(bk))) > 1e-12:
                raise ValueError(f"coefficient b_{k + 1} is not Hermitian")
        if np.max(np.abs(sigma - adjoint(sigma))) > 1e-12:
            raise ValueError("sigma is not Hermitian")
        if np.linalg.eigvalsh((sigma + adjoint(sigma)) / 2)[0] < -1e-12:
            raise ValueError("sigma is not positive semidefinite")
        m4 = self.fourth_moments
        if m4 is not None:
            m4 = np.array(m4, dtype=complex).reshape(d, d, d, d)
            # phi(x^k x^l x^p x^r)^* = phi(x^r x^p x^l x^k) for selfadjoint x's
            if np.max(np.abs(m4 - np.conj(m4.transpose(3, 2, 1, 0)))) > 1e-12:
                raise ValueError("fourth_moments violate adjoint symmetry")
            m4.setflags(write=False)
        coeffs.setflags(write=False)
        sigma.setflags(write=False)
        object.__setattr__(self, "coefficients", coeffs)
        object.__setattr__(self, "sigma", sigma)
        object.__setattr__(self, "fourth_moments", m4)
        # eta as a superoperator on row-major vec(b)
        N = coeffs.shape[1]
        K = np.zeros((N * N, N * N), dtype=complex)
        for k in range(d):
            for l in range(d):
                if sigma[k, l] != 0:
                    K += sigma[k, l] * np.kron(coeffs[k], coeffs[l].T)
        K.setflags(write=False)
        object.__setattr__(self, "_eta_matrix", K)

    @property
    def N(self) -> int:
        return self.coefficients.shape[1]

    @property
    def d(self) -> int:
        return self.coefficients.shape[0]

    @property
    def eta_matrix(self) -> np.ndarray:
        """``N^2 x N^2`` matrix of ``eta`` acting on row-major ``vec(b)``."""
        return self._eta_matrix

    def with_fourth_moments(self, m4) -> "CovarianceModel":
        return CovarianceModel(self.coefficients, self.sigma, m4)


def scalar_model(variance: float = 1.0, fourth_moment: float | None = None) -> CovarianceModel:
    """``N = d = 1`` model with ``b_1 = [1]``."""
    m4 = None if fourth_moment is None else [[[[fourth_moment]]]]
    return CovarianceModel(np.ones((1, 1, 1)), [[variance]], m4)


def eta_apply(model: CovarianceModel, b) -> np.ndarray:
    """Covariance map ``eta(b) = sum_{k,l} sigma_kl b_k b b_l``."""
    b = np.asarray(b, dtype=complex)
    if b.shape != (model.N, model.N):
        raise DimensionMismatch(f"expected {model.N} x {model.N} argument, got {b.shape}")
    return (model.eta_matrix @ b.reshape(-1)).reshape(model.N, model.N)


def alpha2(model: CovarianceModel) -> float:
    """``||eta||``, attained at the identity because ``eta`` is completely positive."""
    return operator_norm(eta_apply(model, np.eye(model.N, dtype=complex)))


def _require_m4(model):
    if model.fourth_moments is None:
        raise MissingFourthMoments("model has no fourth_moments")
    return model.fourth_moments


def fourth_moment_word(model: CovarianceModel, b) -> np.ndarray:
    """``E[X b X X b* X] = sum m4[k,l,p,r] b_k b b_l b_p b* b_r``."""
    m4 = _require_m4(model)
    b = np.asarray(b, dtype=complex)
    if b.shape != (model.N, model.N):
        raise DimensionMismatch(f"expected {model.N} x {model.N} argument, got {b.shape}")
    B = model.coefficients
    left = np.einsum("kij,jm,lmn->klin", B, b, B)
    right = np.einsum("pij,jm,rmn->prin", B, adjoint(b), B)
    return np.einsum("klpr,klij,prjm->im", m4, left, right)


def alpha4_bounds(model: CovarianceModel, samples: int = 200, seed: int = 0) -> tuple[float, float]:
    """Bracket ``alpha4 = sup_{||b|| = 1} ||E[X b X X b* X]||``.

    The upper value is the triangle-inequality bound
    ``sum |m4[k,l,p,r]| ||b_k|| ||b_l|| ||b_p|| ||b_r||``. The lower value is
    the largest word norm found at ``b = 1`` and at ``samples`` random
    matrices of unit operator norm. For ``N = 1`` the word equals
    ``|b|^2 sum m4 b_k b_l b_p b_r`` and both values are that exact supremum.
    """
    m4 = _require_m4(model)
    if model.N == 1:
        exact = operator_norm(fourth_moment_word(model, np.ones((1, 1))))
        return exact, exact
    norms = np.array([operator_norm(bk) for bk in model.coefficients])
    upper = float(np.einsum("klpr,k,l,p,r->", np.abs(m4), norms, norms, norms, norms))
    lower = operator_norm(fourth_moment_word(model, np.eye(model.N)))
    rng = np.random.default_rng(seed)
    for _ in range(samples):
        b = rng.standard_normal((model.N, model.N)) + 1j * rng.standard_normal((model.N, model.N))
        b /= operator_norm(b)
        lower = max(lower, operator_norm(fourth_moment_word(model, b)))
    # the sampled value can exceed the triangle bound only through round-off
    return min(lower, upper), upper


def beta2(model: CovarianceModel) -> float:
    """``max |sigma_kl|``; needs no fourth moments."""
    return float(np.max(np.abs(model.sigma)))


def beta_constants(model: CovarianceModel) -> tuple[float, float]:
    """Entrywise maxima ``beta2 = max |sigma_kl|`` and ``beta4 = max |m4|``."""
    beta4 = float(np.max(np.abs(_require_m4(model))))
    return beta2(model), beta4


def moment_constants(model: CovarianceModel, samples: int = 200) -> MomentConstants:
    lo, hi = alpha4_bounds(model, samples)
    b2, b4 = beta_constants(model)
    return MomentConstants(alpha2(model), lo, hi, b2, b4)


# -- JSON ---------------------------------------------------------------------

def model_to_json(model: CovarianceModel) -> dict:
    out = {
        "N": model.N,
        "d": model.d,
        "coefficients": [matrix_to_json(bk) for bk in model.coefficients],
        "sigma": matrix_to_json(model.sigma),
    }
    if model.fourth_moments is not None:
        out["fourth_moments"] = [complex_to_json(v) for v in model.fourth_moments.reshape(-1)]
    return out


def model_from_json(obj: dict) -> CovarianceModel:
    """Decode the ``{"N", "d", "coefficients", "sigma", "fourth_moments"?}`` schema."""
    try:
        N = int(obj["N"])
        d = int(obj["d"])
        raw_coeffs = obj["coefficients"]
        raw_sigma = obj["sigma"]
    except (KeyError, TypeError) as exc:
        raise ValueError(f"model: missing or malformed field {exc}") from None
    if len(raw_coeffs) != d:
        raise ValueError(f"model.coefficients: expected {d} matrices, got {len(raw_coeffs)}")
    coeffs = np.array([matrix_from_json(c) for c in raw_coeffs])
    if coeffs.shape[1] != N:
        raise ValueError(f"model.coefficients: expected {N} x {N} matrices")
    sigma = matrix_from_json(raw_sigma)
    if sigma.shape != (d, d):
        raise ValueError(f"model.sigma: expected {d} x {d}")
    m4 = None
    if obj.get("fourth_moments") is not None:
        flat = obj["fourth_moments"]
        if len(flat) != d ** 4:
            raise ValueError(f"model.fourth_moments: expected {d ** 4} entries, got {len(flat)}")
        m4 = np.array([complex_from_json(v) for v in flat]).reshape(d, d, d, d)
    return CovarianceModel(coeffs, sigma, m4)
