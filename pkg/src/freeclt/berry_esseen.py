"""Explicit rate bound for the operator-valued free CLT and sweeps that test it.

For ``b`` in the upper half-plane and ``n >= 1``,

.. math::
    \\|G_n(b) - G(b)\\| \\le 4 c_n(b) (\\|b\\| + \\alpha_2 \\|(\\Im b)^{-1}\\|) \\|(\\Im b)^{-1}\\|^2,

    c_n(b) = \\frac{1}{\\sqrt n}\\|(\\Im b)^{-1}\\|^3 \\sqrt{\\alpha_2}
             (2\\alpha_2 + \\sqrt{\\alpha_4 + 2\\alpha_2^2})
           + \\frac1n \\|(\\Im b)^{-1}\\|^4 \\alpha_2^2.

:func:`run_sweep` measures the left side exactly (scalar oracle for
``N = 1``) or with a certified tail (Neumann series) and compares.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from .covariance import alpha2 as covariance_alpha2
from .covariance import alpha4_bounds
from .cumulant_engine import ContractionViolated, CumulantFamily, gn_series
from .mde_solver import scalar_semicircle, solve_mde
from .operator_space import OperatorPoint, operator_norm
from .scalar_lab import ScalarFamily, free_power_cauchy

CSV_COLUMNS = [
    "point_id", "n", "method", "lhs_value", "lhs_tail", "c_n", "rhs", "ratio",
    "alpha2", "alpha4_upper", "b_norm", "im_inv_norm",
]

SCALAR_SLACK = 1e-12


class InsufficientData(ValueError):
    pass


@dataclass(frozen=True)
class BoundInputs:
    alpha2: float
    alpha4: float
    b_norm: float
    im_inv_norm: float
    n: int

    def __post_init__(self):
        if min(self.alpha2, self.alpha4, self.b_norm, self.im_inv_norm) < 0:
            raise ValueError("bound inputs must be nonnegative")
        if self.n < 1:
            raise ValueError("n must be >= 1")


def c_n(inputs: BoundInputs) -> float:
    a2, a4, r, n = inputs.alpha2, inputs.alpha4, inputs.im_inv_norm, inputs.n
    lead = r ** 3 * math.sqrt(a2) * (2 * a2 + math.sqrt(a4 + 2 * a2 * a2)) / math.sqrt(n)
    return lead + r ** 4 * a2 * a2 / n


def theorem_rhs(inputs: BoundInputs) -> float:
    r = inputs.im_inv_norm
    return 4 * c_n(inputs) * (inputs.b_norm + inputs.alpha2 * r) * r * r


@dataclass
class RateRecord:
    """One ``(point, n)`` cell of a sweep.

    ``ratio = (lhs_value + lhs_tail) / rhs``; the bound holds when it is at
    most 1. Skipped cells (Neumann series refused) carry ``nan`` values.
    """

    point_id: str
    n: int
    method: str
    lhs_value: float
    lhs_tail: float
    c_n: float
    rhs: float
    ratio: float
    alpha2: float
    alpha4_upper: float
    b_norm: float
    im_inv_norm: float
    skipped: bool = False

    @property
    def holds(self) -> bool:
        if self.skipped:
            return True
        if self.method == "scalar_oracle":
            return self.lhs_value + SCALAR_SLACK <= self.rhs
        return self.lhs_value + self.lhs_tail <= self.rhs


@dataclass
class SweepConfig:
    order: int = 16
    tol: float = 1e-12
    alpha4_samples: int = 200
    contraction_limit: float = 0.9


def _normalize_points(points):
    out = []
    for i, p in enumerate(points):
        if isinstance(p, tuple):
            out.append(p)
        else:
            out.append((f"p{i:03d}", p))
    return out


def run_sweep(fam, points, ns, config: SweepConfig | None = None) -> list:
    """Measure ``||G_n(b) - G(b)||`` and the bound at every ``(point, n)``.

    Parameters
    ----------
    fam : ScalarFamily or CumulantFamily
        Scalar families use the exact free-power oracle (``N = 1`` points);
        cumulant families use the Neumann series with its certified tail.
    points : list of OperatorPoint or (point_id, OperatorPoint)
    ns : list of int
    config : SweepConfig, optional

    Returns
    -------
    list of RateRecord, sorted by ``(point_id, n)``.
    """
    config = config or SweepConfig()
    points = _normalize_points(points)
    records = []
    if isinstance(fam, ScalarFamily):
        a2, a4 = fam.variance, fam.alpha4
        for pid, p in points:
            if p.dim != 1:
                raise ValueError(f"scalar family needs 1 x 1 points, got {p.dim} x {p.dim} at {pid}")
            z = complex(p.b[0, 0])
            G = scalar_semicircle(z, fam.variance)
            for n in ns:
                lhs = abs(free_power_cauchy(fam, n, z) - G)
                records.append(_record(pid, n, "scalar_oracle", lhs, 0.0, a2, a4, p))
    elif isinstance(fam, CumulantFamily):
        fam = fam.with_fourth_moments()
        model = fam.model
        a2 = covariance_alpha2(model)
        _, a4 = alpha4_bounds(model, config.alpha4_samples)
        for pid, p in points:
            G = solve_mde(model, p, config.tol).G
            for n in ns:
                try:
                    s = gn_series(fam, n, p, config.order, config.contraction_limit)
                except ContractionViolated:
                    rec = _record(pid, n, "series", math.nan, math.nan, a2, a4, p)
                    rec.skipped = True
                    rec.ratio = math.nan
                    records.append(rec)
                    continue
                lhs = operator_norm(s.value - G)
                records.append(_record(pid, n, "series", lhs, s.tail_budget, a2, a4, p))
    else:
        raise TypeError("fam must be a ScalarFamily or a CumulantFamily")
    records.sort(key=lambda r: (r.point_id, r.n))
    return records


def _record(pid, n, method, lhs, tail, a2, a4, p: OperatorPoint) -> RateRecord:
    inputs = BoundInputs(a2, a4, p.b_norm, p.im_inv_norm, n)
    cn = c_n(inputs)
    rhs = theorem_rhs(inputs)
    ratio = (lhs + tail) / rhs if rhs > 0 else math.inf
    return RateRecord(pid, n, method, lhs, tail, cn, rhs, ratio, a2, a4, p.b_norm, p.im_inv_norm)


def violations(records) -> list:
    return [r for r in records if not r.holds]


def rate_regression(records, point_id) -> tuple[float, float, float]:
    """Least-squares fit ``log(lhs) = slope * log(n) + intercept`` at one point.

    Records whose value does not exceed ten times their tail budget are
    dropped. Returns ``(slope, intercept, r2)``.
    """
    rows = [
        r for r in records
        if r.point_id == point_id and not r.skipped and r.lhs_value > 0
        and r.lhs_value > 10 * r.lhs_tail
    ]
    if len(rows) < 4:
        raise InsufficientData(f"need at least 4 usable records at {point_id}, got {len(rows)}")
    x = np.log([r.n for r in rows])
    y = np.log([r.lhs_value for r in rows])
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid ** 2)) / ss_tot if ss_tot > 0 else 1.0
    return float(slope), float(intercept), r2


def _fmt(v):
    if isinstance(v, str):
        return v
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    return format(float(v), ".17g")


def records_to_csv(records) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for r in records:
        writer.writerow([_fmt(getattr(r, c)) for c in CSV_COLUMNS])
    return buf.getvalue()


def records_to_json(records) -> str:
    rows = []
    for r in records:
        row = asdict(r)
        for k, v in row.items():
            if isinstance(v, float) and not math.isfinite(v):
                row[k] = None
        rows.append(row)
    return json.dumps(rows, indent=2)
