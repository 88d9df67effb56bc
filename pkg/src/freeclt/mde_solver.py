"""Cauchy transform of an operator-valued semicircular element.

The transform ``G(b)`` is the unique solution with negative definite
imaginary part of

.. math::
    b\\,G - 1 = \\eta(G)\\,G, \\qquad\\text{equivalently}\\qquad G = (b - \\eta(G))^{-1}.

:func:`solve_mde` iterates the second form with adaptive damping.
"""
from __future__ import annotations

import cmath
from dataclasses import dataclass, field

import numpy as np

from .covariance import CovarianceModel
from .operator_space import (
    NotInUpperHalfPlane,
    OperatorPoint,
    imag_part,
    matrix_to_json,
    operator_norm,
)

MIN_DAMPING = 1.0 / 64
RECOVERY_STREAK = 5


class NoConvergence(RuntimeError):
    def __init__(self, max_iter, best_residual):
        self.max_iter = int(max_iter)
        self.best_residual = float(best_residual)
        super().__init__(
            f"fixed-point iteration did not reach tolerance in {self.max_iter} steps "
            f"(best residual {self.best_residual:.3e})"
        )


@dataclass
class MdeSolution:
    """Solution of the semicircular fixed-point equation at one point.

    Attributes
    ----------
    G : (N, N) ndarray(complex)
    residual : float
        ``||(b - eta(G)) G - 1||``.
    iterations : int
    damping_trace : list of float
        Damping factor after every change (starts with 1.0).
    near_real_axis : bool
        True if ``lambda_min(Im b) < 1e-4``; convergence is slow there.
    """

    G: np.ndarray
    residual: float
    iterations: int
    damping_trace: list = field(default_factory=list)
    near_real_axis: bool = False

    def to_json(self) -> dict:
        return {
            "G": matrix_to_json(self.G),
            "residual": self.residual,
            "iterations": self.iterations,
            "near_real_axis": self.near_real_axis,
        }


class _Damping:
    # halve on a non-decreasing residual, double back after a streak of decreases
    def __init__(self):
        self.theta = 1.0
        self.trace = [1.0]
        self.streak = 0

    def update(self, res_new, res):
        if res_new >= res:
            self.streak = 0
            if self.theta > MIN_DAMPING:
                self.theta = max(self.theta / 2, MIN_DAMPING)
                self.trace.append(self.theta)
        else:
            self.streak += 1
            if self.streak >= RECOVERY_STREAK and self.theta < 1.0:
                self.theta = min(2 * self.theta, 1.0)
                self.trace.append(self.theta)
                self.streak = 0


def _solve_scalar(eta_coef, z, g, tol, max_iter):
    # N = 1: eta(g) = eta_coef * g, pure python complex arithmetic
    damp = _Damping()
    trace = damp.trace
    res = abs((z - eta_coef * g) * g - 1.0)
    for it in range(1, max_iter + 1):
        if res <= tol:
            return g, res, it - 1, trace
        theta = damp.theta
        g_new = (1 - theta) * g + theta / (z - eta_coef * g)
        res_new = abs((z - eta_coef * g_new) * g_new - 1.0)
        damp.update(res_new, res)
        g, res = g_new, res_new
    if res <= tol:
        return g, res, max_iter, trace
    raise NoConvergence(max_iter, res)


def _residual(model, b, G, eye):
    eta_g = (model.eta_matrix @ G.reshape(-1)).reshape(G.shape)
    return operator_norm((b - eta_g) @ G - eye), eta_g


def solve_mde(
    model: CovarianceModel,
    b: OperatorPoint,
    tol: float = 1e-12,
    max_iter: int = 10000,
    G0=None,
) -> MdeSolution:
    """Solve ``b G - 1 = eta(G) G`` for the branch with ``Im G < 0``.

    Iterates ``G <- (1 - theta) G + theta (b - eta(G))^{-1}`` from
    ``G0 = b^{-1}`` (or the supplied ``G0``). ``theta`` starts at 1 and is
    halved, down to 1/64, whenever the equation residual fails to decrease;
    after five consecutive decreases it is doubled again, up to 1.
    Stops on the residual ``||(b - eta(G)) G - 1|| <= tol``.

    Raises
    ------
    NotInUpperHalfPlane
        If ``b`` is not an :class:`OperatorPoint`-validated matrix of ``B_+``.
    NoConvergence
        If the tolerance is not met within ``max_iter`` steps.
    """
    if not isinstance(b, OperatorPoint):
        raise TypeError("b must be an OperatorPoint; build it with make_point()")
    if tol <= 0 or max_iter < 1:
        raise ValueError("tol must be positive and max_iter >= 1")
    if b.dim != model.N:
        raise ValueError(f"point has dimension {b.dim}, model has N = {model.N}")
    if G0 is not None:
        G0 = np.asarray(G0, dtype=complex)
        if np.linalg.eigvalsh(imag_part(G0))[-1] >= 0:
            raise ValueError("initial guess must have negative definite imaginary part")

    if model.N == 1:
        z = complex(b.b[0, 0])
        g0 = 1 / z if G0 is None else complex(G0.reshape(-1)[0])
        g, res, it, trace = _solve_scalar(complex(model.eta_matrix[0, 0]), z, g0, tol, max_iter)
        return MdeSolution(np.array([[g]]), res, it, trace, b.near_real_axis)

    B = b.b
    eye = np.eye(model.N, dtype=complex)
    G = np.linalg.inv(B) if G0 is None else G0.copy()
    res, eta_g = _residual(model, B, G, eye)
    damp = _Damping()
    trace = damp.trace
    for it in range(1, max_iter + 1):
        if res <= tol:
            return MdeSolution(G, res, it - 1, trace, b.near_real_axis)
        theta = damp.theta
        G_new = (1 - theta) * G + theta * np.linalg.inv(B - eta_g)
        res_new, eta_new = _residual(model, B, G_new, eye)
        damp.update(res_new, res)
        G, res, eta_g = G_new, res_new, eta_new
    if res <= tol:
        return MdeSolution(G, res, max_iter, trace, b.near_real_axis)
    raise NoConvergence(max_iter, res)


def solve_mde_grid(model, points, tol: float = 1e-12, max_iter: int = 10000) -> list:
    """Solve at every point; failed points hold the raised exception instead."""
    out = []
    for p in points:
        try:
            out.append(solve_mde(model, p, tol, max_iter))
        except (NoConvergence, NotInUpperHalfPlane) as exc:
            out.append(exc)
    return out


def scalar_semicircle(z: complex, variance: float = 1.0) -> complex:
    """Cauchy transform of the centered semicircle law with the given variance.

    Returns the root of ``variance G^2 - z G + 1 = 0`` with ``Im G < 0``.
    """
    z = complex(z)
    if not variance > 0:
        raise ValueError("variance must be positive")
    if not z.imag > 0:
        raise ValueError("z must lie in the upper half-plane")
    s = cmath.sqrt(z * z - 4 * variance)
    # pick the sign without cancellation, then use g1 * g2 = 1 / variance
    big = (z + s) / (2 * variance) if (z.conjugate() * s).real >= 0 else (z - s) / (2 * variance)
    small = 1 / (variance * big)
    return big if big.imag < 0 else small
