"""Command-line entry point: ``freeclt {solve,rate,density,verify}``.

Exit codes: 0 success, 1 input error, 2 solver non-convergence,
3 rate bound violated, 4 verification failure.
"""
from __future__ import annotations

import argparse
import json
import re
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .berry_esseen import SweepConfig, records_to_csv, run_sweep, violations
from .covariance import CovarianceModel, model_from_json, scalar_model
from .cumulant_engine import CumulantFamily, MissingNormBound
from .cumulant_engine import family_from_json as cumulant_family_from_json
from .mde_solver import NoConvergence, solve_mde
from .operator_space import (
    NotInUpperHalfPlane,
    complex_to_json,
    make_point,
    matrix_from_json,
)
from .scalar_lab import (
    RootNotFound,
    ScalarFamily,
    density_csv,
    free_power_cauchy,
    stieltjes_invert,
)
from .scalar_lab import family_from_json as scalar_family_from_json

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_NO_CONVERGENCE = 2
EXIT_BOUND_VIOLATED = 3
EXIT_VERIFY_FAILED = 4

DEFAULT_TOL = 1e-12
DEFAULT_ORDER = 16
DEFAULT_EPSILON = 0.01
DEFAULT_GRID = "-3:3:601"


class InputError(ValueError):
    """Malformed command-line input; the message names the offending field."""


@dataclass
class RunConfig:
    model_path: Path | None = None
    family_path: Path | None = None
    points: list = field(default_factory=list)
    ns: list = field(default_factory=list)
    order: int = DEFAULT_ORDER
    tol: float = DEFAULT_TOL
    epsilon: float = DEFAULT_EPSILON
    grid: str = DEFAULT_GRID
    out: Path | None = None


# -- parsing ----------------------------------------------------------------------

_COMPLEX_RE = re.compile(r"^[0-9eE.+\-ij]+$")


def parse_complex(text: str) -> complex:
    """Parse ``2i``, ``1+2i``, ``-0.5-1e-3i``, ``3`` (``j`` also accepted)."""
    s = text.strip().replace(" ", "")
    if not s or not _COMPLEX_RE.match(s):
        raise InputError(f"points: cannot parse {text!r} as a complex number")
    s = s.replace("i", "j")
    if s in ("j", "+j", "-j"):
        s = s.replace("j", "1j")
    try:
        return complex(s)
    except ValueError:
        raise InputError(f"points: cannot parse {text!r} as a complex number") from None


def _read_json(path, what):
    p = Path(path)
    if not p.is_file():
        raise InputError(f"{what}: file not found: {p}")
    try:
        return json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise InputError(f"{what}: invalid JSON in {p}: {exc}") from None


def parse_points(spec: str | None) -> list:
    """Comma-separated scalars, or ``@FILE`` holding a JSON list.

    File entries are strings or numbers (scalars) or ``N x N`` matrices in the
    ``[[re, im], ...]`` row format. Returns complex scalars and ndarrays.
    """
    if spec is None:
        return []
    if spec.startswith("@"):
        raw = _read_json(spec[1:], "points")
        if not isinstance(raw, list):
            raise InputError("points: file must hold a JSON list")
        out = []
        for i, item in enumerate(raw):
            if isinstance(item, str):
                out.append(parse_complex(item))
            elif isinstance(item, (int, float)):
                out.append(complex(item))
            else:
                try:
                    out.append(matrix_from_json(item))
                except (ValueError, TypeError, IndexError) as exc:
                    raise InputError(f"points[{i}]: malformed matrix ({exc})") from None
        return out
    return [parse_complex(t) for t in spec.split(",") if t.strip()]


def parse_ns(spec: str | None) -> list:
    if spec is None:
        return []
    try:
        ns = [int(t) for t in spec.split(",") if t.strip()]
    except ValueError:
        raise InputError(f"ns: expected comma-separated integers, got {spec!r}") from None
    if any(n < 1 for n in ns):
        raise InputError("ns: values must be positive")
    if any(b <= a for a, b in zip(ns, ns[1:])):
        raise InputError("ns: values must be strictly increasing")
    return ns


def parse_grid(spec: str) -> np.ndarray:
    """``a:b:k`` gives ``k`` equally spaced points from ``a`` to ``b``."""
    parts = spec.split(":")
    try:
        if len(parts) != 3:
            raise ValueError
        a, b, k = float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError:
        raise InputError(f"grid: expected START:STOP:COUNT, got {spec!r}") from None
    if k < 2 or not b > a:
        raise InputError("grid: need STOP > START and COUNT >= 2")
    return np.linspace(a, b, k)


def lift_points(points, N) -> list:
    """Turn scalars into ``z I_N`` and validate every point lies in the upper half-plane."""
    out = []
    for i, p in enumerate(points):
        m = p * np.eye(N, dtype=complex) if np.isscalar(p) else np.asarray(p, dtype=complex)
        if m.shape != (N, N):
            raise InputError(f"points[{i}]: expected {N} x {N}, got {m.shape}")
        try:
            out.append((f"p{i:03d}", make_point(m)))
        except NotInUpperHalfPlane as exc:
            raise InputError(f"points[{i}]: {exc}") from None
    return out


def load_family(path):
    raw = _read_json(path, "family")
    if not isinstance(raw, dict):
        raise InputError("family: expected a JSON object")
    try:
        if "type" in raw:
            return scalar_family_from_json(raw)
        return cumulant_family_from_json(raw)
    except (ValueError, KeyError, TypeError) as exc:
        raise InputError(f"family: {exc}") from None


def load_model(path) -> CovarianceModel:
    raw = _read_json(path, "model")
    if not isinstance(raw, dict):
        raise InputError("model: expected a JSON object")
    try:
        return model_from_json(raw)
    except (ValueError, KeyError, TypeError) as exc:
        raise InputError(f"model: {exc}") from None


def _emit(text: str, out: Path | None):
    if out is None:
        sys.stdout.write(text)
    else:
        with open(out, "w", newline="\n") as fh:
            fh.write(text)


# -- commands ---------------------------------------------------------------------

def cmd_solve(config: RunConfig) -> int:
    if config.model_path is None:
        raise InputError("model: --model is required for solve")
    model = load_model(config.model_path)
    points = lift_points(config.points, model.N)
    rows, failed = [], False
    for pid, p in points:
        try:
            sol = solve_mde(model, p, config.tol)
        except NoConvergence as exc:
            failed = True
            rows.append({"point_id": pid, "error": str(exc)})
            continue
        row = {"point_id": pid}
        row.update(sol.to_json())
        row["value"] = complex_to_json(np.trace(sol.G) / model.N)
        rows.append(row)
    _emit(json.dumps(rows, indent=2) + "\n", config.out)
    return EXIT_NO_CONVERGENCE if failed else EXIT_OK


def cmd_rate(config: RunConfig) -> int:
    if config.family_path is None:
        raise InputError("family: --family is required for rate")
    if not config.ns:
        raise InputError("ns: --ns is required for rate")
    fam = load_family(config.family_path)
    N = 1 if isinstance(fam, ScalarFamily) else fam.model.N
    if isinstance(fam, CumulantFamily) and config.order > fam.M_max:
        raise InputError(f"order: {config.order} exceeds the family's M_max = {fam.M_max}")
    points = lift_points(config.points, N)
    sweep = SweepConfig(order=config.order, tol=config.tol)
    try:
        records = run_sweep(fam, points, config.ns, sweep)
    except MissingNormBound as exc:
        raise InputError(f"family.norm_bounds: {exc}") from None
    _emit(records_to_csv(records), config.out)
    bad = violations(records)
    if bad:
        cells = ", ".join(f"{r.point_id}/n={r.n}" for r in bad)
        print(f"bound violated at {cells}; this signals a software bug, not a counterexample "
              "to the theorem", file=sys.stderr)
        return EXIT_BOUND_VIOLATED
    return EXIT_OK


def cmd_density(config: RunConfig) -> int:
    if not config.epsilon > 0:
        raise InputError(f"epsilon: must be positive, got {config.epsilon}")
    grid = parse_grid(config.grid)
    if config.family_path is not None:
        fam = load_family(config.family_path)
        if not isinstance(fam, ScalarFamily):
            raise InputError("family: density needs a scalar family (type bernoulli_sym, "
                             "semicircle or two_point)")
        if len(config.ns) > 1:
            raise InputError("ns: density takes at most one n")
        n = config.ns[0] if config.ns else 1

        def cauchy(z):
            return free_power_cauchy(fam, n, z)
    else:
        model = load_model(config.model_path) if config.model_path else scalar_model()
        eye = np.eye(model.N, dtype=complex)

        def cauchy(z):
            return complex(np.trace(solve_mde(model, make_point(z * eye), config.tol).G)) / model.N

    density = stieltjes_invert(cauchy, grid, config.epsilon)
    _emit(density_csv(density), config.out)
    if density.clipped > 0:
        print(f"clipped negative density values (largest magnitude {density.clipped:.3e})",
              file=sys.stderr)
    return EXIT_OK


def cmd_verify(suite: str) -> int:
    from .acceptance import SUITES, run_suite

    if suite not in SUITES:
        raise InputError(f"suite: unknown suite {suite!r}; choose from {', '.join(SUITES)}")
    results = run_suite(suite)
    for r in results:
        print(r.line())
    return EXIT_OK if all(r.passed for r in results) else EXIT_VERIFY_FAILED


# -- argument handling ------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--model", type=Path, help="CovarianceModel JSON file")
    common.add_argument("--family", type=Path, help="scalar or cumulant family JSON file")
    common.add_argument("--points", help="comma-separated scalars like 2i,1+2i, or @FILE")
    common.add_argument("--ns", help="strictly increasing comma-separated n values")
    common.add_argument("--order", type=int, default=DEFAULT_ORDER,
                        help=f"series truncation order (default {DEFAULT_ORDER})")
    common.add_argument("--tol", type=float, default=DEFAULT_TOL,
                        help=f"solver tolerance (default {DEFAULT_TOL:g})")
    common.add_argument("--epsilon", type=float, default=DEFAULT_EPSILON,
                        help=f"distance to the real axis for densities (default {DEFAULT_EPSILON:g})")
    common.add_argument("--grid", default=DEFAULT_GRID,
                        help=f"density grid START:STOP:COUNT; write --grid=-3:3:601 when START "
                             f"is negative (default {DEFAULT_GRID})")
    common.add_argument("--out", type=Path, help="output file (default stdout)")

    parser = argparse.ArgumentParser(prog="freeclt", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("solve", parents=[common], help="solve the semicircular equation at points")
    sub.add_parser("rate", parents=[common], help="rate sweep against the explicit bound (CSV)")
    sub.add_parser("density", parents=[common], help="density by Stieltjes inversion (CSV)")
    v = sub.add_parser("verify", help="run an acceptance suite")
    v.add_argument("suite", help="mde, cumulants, rate or all")
    return parser


def _config(args) -> RunConfig:
    return RunConfig(
        model_path=args.model,
        family_path=args.family,
        points=parse_points(args.points),
        ns=parse_ns(args.ns),
        order=args.order,
        tol=args.tol,
        epsilon=args.epsilon,
        grid=args.grid,
        out=args.out,
    )


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits with 2 on usage errors; 2 is reserved for non-convergence here
        return EXIT_OK if exc.code == 0 else EXIT_INPUT
    try:
        if args.command == "verify":
            return cmd_verify(args.suite)
        config = _config(args)
        if config.order < 2 or config.order % 2:
            raise InputError(f"order: must be a positive even integer, got {config.order}")
        if not config.tol > 0:
            raise InputError(f"tol: must be positive, got {config.tol}")
        if args.command == "solve":
            return cmd_solve(config)
        if args.command == "rate":
            return cmd_rate(config)
        return cmd_density(config)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (NoConvergence, RootNotFound) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NO_CONVERGENCE


if __name__ == "__main__":
    sys.exit(main())
