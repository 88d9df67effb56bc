"""Scalar reference laws, free powers, Stieltjes inversion and CDF distances.

For ``N = 1`` the Cauchy transform of ``S_n`` is available to machine
precision. Writing ``mu`` for the law of ``X / sqrt(n)`` and
``F_mu = 1 / G_mu``, the ``n``-fold free power satisfies
``G_n(z) = 1 / F_mu(w)`` where ``w`` is the fixed point of

.. math::
    w = z / n + (1 - 1/n)\\, F_\\mu(w),

which is the equation ``z = 1/G + sqrt(n) R(G / sqrt(n))`` rewritten in the
subordination variable. Only the closed-form Cauchy transform of the
summand is needed, so no branch of the R-transform has to be tracked.
"""
from __future__ import annotations

import cmath
import csv
import io
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .covariance import scalar_model
from .cumulant_engine import (
    DEFAULT_M_MAX,
    CumulantFamily,
    catalan,
    free_family,
    single_variable_cumulants,
)
from .mde_solver import scalar_semicircle


class RootNotFound(RuntimeError):
    def __init__(self, z, n, last, residual):
        self.z, self.n, self.last, self.residual = z, n, last, residual
        super().__init__(
            f"no subordination root for n = {n}, z = {z}: last iterate {last}, residual {residual:.3e}"
        )


class GridMismatch(ValueError):
    pass


@dataclass(frozen=True)
class ScalarFamily:
    """A centered scalar law with closed-form Cauchy transform.

    Attributes
    ----------
    name : str
    variance : float
    cauchy : callable
        ``z -> G_X(z)`` for ``Im z > 0``.
    cauchy_derivative : callable
        ``z -> G_X'(z)``.
    r_transform : callable
        ``w -> R(w)`` near ``w = 0``.
    cumulants : list of float
        ``kappa_1 .. kappa_M``.
    fourth_moment : float
    norm_bound : callable or None
        ``n -> L_n`` with ``||S_n|| <= L_n``.
    params : dict
        JSON parameters identifying the family.
    """

    name: str
    variance: float
    cauchy: Callable[[complex], complex]
    cauchy_derivative: Callable[[complex], complex]
    r_transform: Callable[[complex], complex]
    cumulants: list
    fourth_moment: float
    norm_bound: Callable[[int], float] | None = None
    params: dict = field(default_factory=dict)

    @property
    def alpha4(self) -> float:
        """Exact ``alpha4`` in the single-variable case (``= E[X^4]``)."""
        return self.fourth_moment

    def cumulant_family(self, M_max: int = DEFAULT_M_MAX) -> CumulantFamily:
        """The same law as input for the operator-valued series engine (``N = d = 1``)."""
        model = scalar_model(self.variance, self.fourth_moment)
        return free_family(model, [self.cumulants[:M_max]], self.norm_bound, M_max)


def semicircle_family(variance: float = 1.0) -> ScalarFamily:
    cum = [0.0, variance] + [0.0] * (DEFAULT_M_MAX - 2)
    edge = 2.0 * math.sqrt(variance)
    return ScalarFamily(
        name="semicircle",
        variance=variance,
        cauchy=lambda z: scalar_semicircle(z, variance),
        cauchy_derivative=lambda z: _semicircle_derivative(z, variance),
        r_transform=lambda w: variance * w,
        cumulants=cum,
        fourth_moment=2.0 * variance ** 2,
        norm_bound=lambda n: edge,
        params={"type": "semicircle"},
    )


def _semicircle_derivative(z, v):
    g = scalar_semicircle(z, v)
    return g / (2 * v * g - z)


def _bernoulli_r(w):
    w = complex(w)
    if w == 0:
        return 0j
    return (cmath.sqrt(1 + 4 * w * w) - 1) / (2 * w)


def bernoulli_norm_bound(n: int) -> float:
    """Spectral radius of the normalized free sum of ``n`` symmetric Bernoullis.

    The sum of ``n >= 2`` free symmetries is the adjacency operator of the
    ``n``-regular tree, with spectrum ``[-2 sqrt(n-1), 2 sqrt(n-1)]``.
    """
    if n < 1:
        raise ValueError("n must be positive")
    return 1.0 if n == 1 else 2.0 * math.sqrt((n - 1) / n)


def bernoulli_family() -> ScalarFamily:
    """Symmetric Bernoulli law on ``{-1, +1}``."""
    cum = []
    for m in range(1, DEFAULT_M_MAX + 1):
        k = m // 2
        cum.append(0.0 if m % 2 else (-1) ** (k + 1) * catalan(k - 1))
    return ScalarFamily(
        name="bernoulli_sym",
        variance=1.0,
        cauchy=lambda z: z / (z * z - 1),
        cauchy_derivative=lambda z: -(z * z + 1) / (z * z - 1) ** 2,
        r_transform=_bernoulli_r,
        cumulants=cum,
        fourth_moment=1.0,
        norm_bound=bernoulli_norm_bound,
        params={"type": "bernoulli_sym"},
    )


def two_point_family(p: float) -> ScalarFamily:
    """Centered, unit-variance law with atoms ``sqrt(q/p)`` (weight ``p``) and ``-sqrt(p/q)``.

    Its third cumulant ``(q - p) / sqrt(pq)`` is nonzero unless ``p = 1/2``.
    No certified norm bound for the free sums is shipped, so the series
    engine refuses it; use the scalar oracle.
    """
    if not 0 < p < 1:
        raise ValueError("p must lie in (0, 1)")
    q = 1.0 - p
    a, b = math.sqrt(q / p), -math.sqrt(p / q)

    def cauchy(z):
        return p / (z - a) + q / (z - b)

    def dcauchy(z):
        return -p / (z - a) ** 2 - q / (z - b) ** 2

    def r_transform(w):
        # R(w) = G^{-1}(w) - 1/w, inverting G by Newton from the Laurent guess
        w = complex(w)
        if w == 0:
            return 0j
        u = 1 / w + w
        for _ in range(100):
            step = (cauchy(u) - w) / dcauchy(u)
            u -= step
            if abs(step) <= 1e-15 * abs(u):
                break
        return u - 1 / w

    moments = [p * a ** m + q * b ** m for m in range(1, DEFAULT_M_MAX + 1)]
    cum = [complex(v).real for v in single_variable_cumulants(moments)]
    return ScalarFamily(
        name="two_point",
        variance=1.0,
        cauchy=cauchy,
        cauchy_derivative=dcauchy,
        r_transform=r_transform,
        cumulants=cum,
        fourth_moment=p * a ** 4 + q * b ** 4,
        norm_bound=None,
        params={"type": "two_point", "p": p},
    )


def family_from_json(obj: dict) -> ScalarFamily:
    kind = obj.get("type")
    if kind == "bernoulli_sym":
        return bernoulli_family()
    if kind == "semicircle":
        return semicircle_family(float(obj.get("variance", 1.0)))
    if kind == "two_point":
        if "p" not in obj:
            raise ValueError("family.p is required for two_point")
        return two_point_family(float(obj["p"]))
    raise ValueError(f"family.type must be bernoulli_sym, semicircle or two_point, got {kind!r}")


# -- free powers ------------------------------------------------------------------

@dataclass
class FreePowerRoot:
    G: complex
    subordination: complex
    residual: float
    iterations: int


def free_power_root(fam: ScalarFamily, n: int, z: complex, tol: float = 1e-14,
                    max_iter: int = 200) -> FreePowerRoot:
    """Solve for ``G_n(z)`` and return the subordination point with diagnostics.

    Damped Newton on ``h(w) = w - z/n - (1 - 1/n) F_mu(w)`` from ``w = z``;
    steps are halved until ``Im w`` stays positive and ``|h|`` decreases. If
    Newton stalls, the plain iteration ``w <- z/n + (1 - 1/n) F_mu(w)``
    (which maps the upper half-plane into itself) takes over.
    """
    z = complex(z)
    if not z.imag > 0:
        raise ValueError("z must lie in the upper half-plane")
    if n < 1:
        raise ValueError("n must be a positive integer")
    if n == 1:
        return FreePowerRoot(complex(fam.cauchy(z)), z, 0.0, 0)
    sq = math.sqrt(n)

    def F(w):
        return 1.0 / (sq * fam.cauchy(sq * w))

    def dF(w):
        g = sq * fam.cauchy(sq * w)
        return -n * fam.cauchy_derivative(sq * w) / (g * g)

    lam = 1.0 - 1.0 / n

    def h(w):
        return w - z / n - lam * F(w)

    w = z
    r = abs(h(w))
    it = 0
    for it in range(1, max_iter + 1):
        if r <= tol * max(1.0, abs(w)):
            break
        step = h(w) / (1.0 - lam * dF(w))
        t = 1.0
        while t > 1e-6:
            cand = w - t * step
            if cand.imag > 0:
                rc = abs(h(cand))
                if rc < r:
                    w, r = cand, rc
                    break
            t /= 2
        else:
            # Newton stalled: contract with the self-map for a while
            for _ in range(1000):
                w = z / n + lam * F(w)
            r = abs(h(w))
    if not (r <= 1e-13 * max(1.0, abs(w)) and w.imag > 0):
        raise RootNotFound(z, n, w, r)
    return FreePowerRoot(1.0 / F(w), w, r, it)


def free_power_cauchy(fam: ScalarFamily, n: int, z: complex) -> complex:
    """``G_n(z)`` for ``S_n = (X_1 + ... + X_n) / sqrt(n)`` with ``X_i ~ fam``."""
    return free_power_root(fam, n, z).G


def defining_equation_residual(fam: ScalarFamily, n: int, z: complex, G: complex) -> float:
    """``|z - 1/G - sqrt(n) R(G / sqrt(n))|`` using the family's R-transform."""
    sq = math.sqrt(n)
    return abs(complex(z) - 1 / G - sq * fam.r_transform(G / sq))


# -- densities and distances -------------------------------------------------

@dataclass
class ScalarDensity:
    """Density sampled on an increasing grid.

    ``clipped`` is the largest magnitude removed when clipping negative
    values to zero.
    """

    grid: np.ndarray
    values: np.ndarray
    epsilon: float
    clipped: float = 0.0

    def cdf(self) -> np.ndarray:
        return cumulative_trapezoid(self.values, self.grid, initial=0.0)

    def integral(self) -> float:
        return float(np.trapezoid(self.values, self.grid))


def default_grid(lo: float = -4.0, hi: float = 4.0, points: int = 801) -> np.ndarray:
    return np.linspace(lo, hi, points)


def stieltjes_invert(cauchy, grid, epsilon: float = 0.01) -> ScalarDensity:
    """Density ``-Im G(x + i epsilon) / pi`` on ``grid``."""
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size < 2 or np.any(np.diff(grid) <= 0):
        raise ValueError("grid must be a strictly increasing 1-d array")
    raw = np.array([-complex(cauchy(complex(x, epsilon))).imag / math.pi for x in grid])
    clipped = float(max(0.0, -raw.min()))
    return ScalarDensity(grid, np.clip(raw, 0.0, None), float(epsilon), clipped)


def semicircle_density(x, variance: float = 1.0):
    x = np.asarray(x, dtype=float)
    return np.sqrt(np.clip(4 * variance - x * x, 0.0, None)) / (2 * math.pi * variance)


def _check_grids(d1, d2):
    if d1.grid.shape != d2.grid.shape or not np.array_equal(d1.grid, d2.grid):
        raise GridMismatch("densities are sampled on different grids")


def kolmogorov_distance(d1: ScalarDensity, d2: ScalarDensity) -> float:
    """Sup distance between the trapezoid CDFs on the common grid."""
    _check_grids(d1, d2)
    return float(np.max(np.abs(d1.cdf() - d2.cdf())))


def levy_distance(d1: ScalarDensity, d2: ScalarDensity, resolution: float | None = None) -> float:
    """Smallest ``h`` with ``F1(x-h) - h <= F2(x) <= F1(x+h) + h`` on the grid.

    Found by bisection on ``h`` starting from the Kolmogorov distance (which
    always satisfies the band condition), so the result never exceeds it.
    """
    _check_grids(d1, d2)
    x = d1.grid
    F1, F2 = d1.cdf(), d2.cdf()
    if resolution is None:
        resolution = float(np.min(np.diff(x))) / 100

    def ok(h):
        lower = np.interp(x - h, x, F1, left=0.0, right=F1[-1]) - h
        upper = np.interp(x + h, x, F1, left=0.0, right=F1[-1]) + h
        return bool(np.all(lower <= F2 + 1e-15) and np.all(F2 <= upper + 1e-15))

    if ok(0.0):
        return 0.0
    lo, hi = 0.0, kolmogorov_distance(d1, d2)
    while hi - lo > resolution:
        mid = 0.5 * (lo + hi)
        if ok(mid):
            hi = mid
        else:
            lo = mid
    return hi


def density_csv(density: ScalarDensity, column: str = "density") -> str:
    """``x,density`` (or ``x,cdf`` with ``column='cdf'``) rows as CSV text."""
    values = density.values if column == "density" else density.cdf()
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["x", column])
    for x, v in zip(density.grid, values):
        writer.writerow([format(float(x), ".17g"), format(float(v), ".17g")])
    return buf.getvalue()


def write_density_csv(density: ScalarDensity, path, column: str = "density") -> None:
    with open(path, "w", newline="") as fh:
        fh.write(density_csv(density, column))
