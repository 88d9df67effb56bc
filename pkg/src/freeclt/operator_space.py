"""Dense complex matrices and the matrix upper half-plane.

Matrices are plain ``numpy`` arrays of shape ``(N, N)`` and complex dtype.
Every function returns a fresh array; inputs are never modified in place.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

#: Smallest admissible eigenvalue of ``Im b`` for a point of the upper half-plane.
HALF_PLANE_FLOOR = 1e-10


class NotInUpperHalfPlane(ValueError):
    """Raised when ``Im b`` is not (numerically) positive definite."""

    def __init__(self, lambda_min, floor=HALF_PLANE_FLOOR):
        self.lambda_min = float(lambda_min)
        self.floor = float(floor)
        super().__init__(
            f"point is not in the upper half-plane: lambda_min(Im b) = "
            f"{self.lambda_min:.3e} <= {self.floor:.1e}"
        )


class DimensionMismatch(ValueError):
    """Raised when matrix shapes are incompatible."""


def as_matrix(m) -> np.ndarray:
    """Coerce ``m`` to a finite square complex array.

    Scalars are promoted to ``1 x 1`` matrices.
    """
    a = np.array(m, dtype=complex)
    if a.ndim == 0:
        a = a.reshape(1, 1)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix has non-finite entries")
    return a


def adjoint(m: np.ndarray) -> np.ndarray:
    return np.conj(m).T


def imag_part(m) -> np.ndarray:
    """Hermitian imaginary part ``(m - m*) / 2i``."""
    a = as_matrix(m)
    h = (a - adjoint(a)) / 2j
    # symmetrize so that h* == h holds bit for bit
    return (h + adjoint(h)) / 2


def real_part(m) -> np.ndarray:
    a = as_matrix(m)
    h = (a + adjoint(a)) / 2
    return (h + adjoint(h)) / 2


def operator_norm(m) -> float:
    """Largest singular value of ``m``."""
    a = np.asarray(m, dtype=complex)
    if a.ndim == 0 or a.size == 1:
        return float(abs(a.reshape(-1)[0]))
    return float(np.linalg.norm(a, 2))


def is_hermitian(m, atol=1e-12) -> bool:
    a = np.asarray(m, dtype=complex)
    return bool(np.max(np.abs(a - adjoint(a)), initial=0.0) <= atol)


@dataclass(frozen=True, eq=False)
class OperatorPoint:
    """A point ``b`` of the matrix upper half-plane.

    Use :func:`make_point` to construct one; it validates positivity of
    ``Im b`` and fills the cached norms.

    Attributes
    ----------
    b : (N, N) ndarray(complex)
    im_part : (N, N) ndarray(complex)
        Hermitian imaginary part of ``b``.
    im_inv_norm : float
        ``||(Im b)^{-1}|| = 1 / lambda_min(Im b)``.
    b_norm : float
        ``||b||``.
    """

    b: np.ndarray
    im_part: np.ndarray = field(repr=False)
    im_inv_norm: float
    b_norm: float

    @property
    def dim(self) -> int:
        return self.b.shape[0]

    @property
    def near_real_axis(self) -> bool:
        return 1.0 / self.im_inv_norm < 1e-4

    def inv(self) -> np.ndarray:
        return np.linalg.inv(self.b)


def make_point(m, floor: float = HALF_PLANE_FLOOR) -> OperatorPoint:
    """Validate ``m`` as an element of the upper half-plane.

    Raises
    ------
    NotInUpperHalfPlane
        If the smallest eigenvalue of ``Im m`` is ``<= floor``.
    """
    a = as_matrix(m)
    im = imag_part(a)
    lam_min = float(np.linalg.eigvalsh(im)[0])
    if not lam_min > floor:
        raise NotInUpperHalfPlane(lam_min, floor)
    b = a.copy()
    b.setflags(write=False)
    im.setflags(write=False)
    return OperatorPoint(b=b, im_part=im, im_inv_norm=1.0 / lam_min, b_norm=operator_norm(a))


def scalar_point(z: complex, dim: int = 1) -> OperatorPoint:
    """Lift the complex number ``z`` to ``z * I_dim``."""
    return make_point(complex(z) * np.eye(dim, dtype=complex))


def resolvent_norm_cap(p: OperatorPoint) -> float:
    """Upper bound ``||(Im b)^{-1}||`` on ``||(b - S)^{-1}||``.

    Holds for every selfadjoint ``S`` (matrix or operator), and therefore
    also for every Cauchy transform evaluated at ``b``.
    """
    return p.im_inv_norm


# -- JSON encoding: rows of [re, im] pairs -----------------------------------

def matrix_to_json(m) -> list:
    a = np.asarray(m, dtype=complex)
    return [[[float(v.real), float(v.imag)] for v in row] for row in a]


def matrix_from_json(obj) -> np.ndarray:
    """Decode a row-major list of ``[re, im]`` pairs into a square matrix."""
    if not isinstance(obj, list) or not obj:
        raise ValueError("matrix must be a non-empty list of rows")
    rows = []
    for row in obj:
        if not isinstance(row, list) or len(row) != len(obj):
            raise DimensionMismatch("matrix must be square")
        entries = []
        for entry in row:
            if not isinstance(entry, (list, tuple)) or len(entry) != 2:
                raise ValueError("matrix entries must be [re, im] pairs")
            entries.append(complex(float(entry[0]), float(entry[1])))
        rows.append(entries)
    return as_matrix(rows)


def complex_to_json(z: complex) -> list:
    return [float(z.real), float(z.imag)]


def complex_from_json(obj) -> complex:
    if isinstance(obj, (int, float)):
        return complex(obj)
    if not isinstance(obj, (list, tuple)) or len(obj) != 2:
        raise ValueError("complex values are encoded as [re, im]")
    return complex(float(obj[0]), float(obj[1]))
