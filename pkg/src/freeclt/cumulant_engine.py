"""Operator-valued moments of normalized free sums from free cumulants.

The summand is ``X = sum_k b_k (x) x^(k)`` with scalar variables whose joint
free cumulants ``kappa(x^(k1), ..., x^(km))`` are given. Its ``M_N``-valued
cumulants are

.. math::
    \\kappa_m(X d_1, \\dots, X d_{m-1}, X)
        = \\sum_{k_1..k_m} \\kappa(k_1..k_m)\\, b_{k_1} d_1 b_{k_2} \\cdots d_{m-1} b_{k_m},

and those of ``S_n = (X_1 + ... + X_n) / sqrt(n)`` are ``n^(1 - m/2)`` times
these. Moments with a fixed spacer ``c`` are obtained from the first-block
recursion over non-crossing partitions, evaluated on truncated matrix-valued
power series. ``G_n(b)`` then follows from the Neumann series
``(b - S)^{-1} = sum_m b^{-1} (S b^{-1})^m``.

Words are tuples of 0-based variable indices. The JSON encoding uses 1-based
indices.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Callable

import numpy as np

from .covariance import CovarianceModel, model_from_json, model_to_json
from .operator_space import (
    OperatorPoint,
    complex_from_json,
    complex_to_json,
    operator_norm,
)

MAX_ENUMERATION_ORDER = 10
DEFAULT_M_MAX = 16
CONTRACTION_LIMIT = 0.9


class OrderTooLarge(ValueError):
    pass


class ContractionViolated(ValueError):
    def __init__(self, rho, limit=CONTRACTION_LIMIT):
        self.rho = float(rho)
        self.limit = float(limit)
        super().__init__(
            f"Neumann series refused: L_n * ||b^-1|| = {self.rho:.4f} exceeds {self.limit}"
        )


class MissingNormBound(ValueError):
    pass


# -- non-crossing partitions ---------------------------------------------------

@dataclass(frozen=True)
class NCPartition:
    """Non-crossing partition of ``{1, ..., m}``.

    ``blocks`` is a tuple of sorted tuples, ordered by their smallest element.
    """

    blocks: tuple

    @property
    def size(self) -> int:
        return sum(len(b) for b in self.blocks)

    def parents(self) -> dict:
        """Map each block index to the index of the innermost block enclosing it.

        Outer blocks map to ``None``; together this is the nesting forest.
        """
        out = {}
        for i, blk in enumerate(self.blocks):
            best = None
            for j, other in enumerate(self.blocks):
                if j == i or not (other[0] < blk[0] and blk[-1] < other[-1]):
                    continue
                # enclosing means blk sits inside a gap of other
                if best is None or other[0] > self.blocks[best][0]:
                    best = j
            out[i] = best
        return out


def is_noncrossing(blocks) -> bool:
    """True unless some ``a < b < c < d`` has ``a, c`` and ``b, d`` in distinct blocks."""
    label = {}
    for i, blk in enumerate(blocks):
        for v in blk:
            label[v] = i
    pts = sorted(label)
    for a, b, c, d in itertools.combinations(pts, 4):
        if label[a] == label[c] and label[b] == label[d] and label[a] != label[b]:
            return False
    return True


@lru_cache(maxsize=None)
def _nc_blocks(lo: int, hi: int) -> tuple:
    # all NC partitions of the interval lo..hi (inclusive), as tuples of blocks
    if lo > hi:
        return ((),)
    out = []
    rest = list(range(lo + 1, hi + 1))
    for r in range(len(rest) + 1):
        for tail in itertools.combinations(rest, r):
            block = (lo,) + tail
            bounds = list(block) + [hi + 1]
            gap_choices = [_nc_blocks(bounds[i] + 1, bounds[i + 1] - 1) for i in range(len(block))]
            for combo in itertools.product(*gap_choices):
                blocks = [block]
                for part in combo:
                    blocks.extend(part)
                out.append(tuple(sorted(blocks)))
    return tuple(out)


def enumerate_nc(m: int) -> list:
    """All non-crossing partitions of ``{1, ..., m}`` (``1 <= m <= 10``)."""
    if m < 1:
        raise ValueError("m must be positive")
    if m > MAX_ENUMERATION_ORDER:
        raise OrderTooLarge(f"enumeration limited to m <= {MAX_ENUMERATION_ORDER}")
    return [NCPartition(p) for p in _nc_blocks(1, m)]


def catalan(m: int) -> int:
    return math.comb(2 * m, m) // (m + 1)


# -- scalar joint moments and cumulants ---------------------------------------

def _first_block_terms(m):
    # subsets of positions containing 0, as (block, gaps) with gaps as (start, stop)
    for r in range(m):
        for tail in itertools.combinations(range(1, m), r):
            block = (0,) + tail
            bounds = list(block) + [m]
            gaps = [(bounds[i] + 1, bounds[i + 1]) for i in range(len(block))]
            yield block, gaps


def moments_from_cumulants(cumulants: dict, words) -> dict:
    """Scalar joint moments ``phi(x^w1 ... x^wm)`` for each word in ``words``.

    Uses the first-block decomposition of the free moment-cumulant formula.
    Missing cumulants are zero.
    """
    memo = {(): 1.0 + 0j}

    def phi(w):
        if w in memo:
            return memo[w]
        total = 0j
        for block, gaps in _first_block_terms(len(w)):
            k = cumulants.get(tuple(w[i] for i in block), 0)
            if k == 0:
                continue
            term = k
            for a, b in gaps:
                term *= phi(w[a:b])
                if term == 0:
                    break
            total += term
        memo[w] = total
        return total

    return {tuple(w): phi(tuple(w)) for w in words}


def cumulants_from_moments(moments, d: int, max_order: int) -> dict:
    """Invert the free moment-cumulant relation (Moebius inversion on NC(m)).

    Parameters
    ----------
    moments : dict or callable
        ``phi(word)`` for words over ``range(d)``.
    d : int
    max_order : int

    Returns
    -------
    dict
        Nonzero cumulants keyed by word, orders ``1..max_order``.
    """
    get = moments if callable(moments) else (lambda w: moments.get(w, 0))
    kappa = {}
    mom = {(): 1.0 + 0j}
    for m in range(1, max_order + 1):
        for w in itertools.product(range(d), repeat=m):
            mom[w] = complex(get(w))
            rest = 0j
            for block, gaps in _first_block_terms(m):
                if len(block) == m:
                    continue
                k = kappa.get(tuple(w[i] for i in block), 0)
                if k == 0:
                    continue
                term = k
                for a, b in gaps:
                    term *= mom[w[a:b]]
                rest += term
            value = mom[w] - rest
            if abs(value) > 1e-15:
                kappa[w] = value
    return kappa


def single_variable_cumulants(moments: list) -> list:
    """Free cumulants ``[k1, k2, ...]`` from moments ``[m1, m2, ...]`` of one variable."""
    kappa = cumulants_from_moments(lambda w: moments[len(w) - 1], 1, len(moments))
    return [kappa.get((0,) * m, 0j) for m in range(1, len(moments) + 1)]


# -- families ------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class CumulantFamily:
    """Free cumulants of one summand ``X`` plus a norm bound for the partial sums.

    Attributes
    ----------
    model : CovarianceModel
    scalar_cumulants : dict
        ``{word: kappa}`` for words over ``range(model.d)``; absent words are 0.
    norm_bound : callable or None
        ``n -> L_n`` with ``||S_n|| <= L_n``; required for Neumann evaluation.
    M_max : int
    norm_bounds_spec : dict or None
        JSON form of ``norm_bound`` when it came from a file.
    """

    model: CovarianceModel
    scalar_cumulants: dict
    norm_bound: Callable[[int], float] | None = None
    M_max: int = DEFAULT_M_MAX
    norm_bounds_spec: dict | None = field(default=None, repr=False)

    def __post_init__(self):
        d = self.model.d
        clean = {}
        for w, v in self.scalar_cumulants.items():
            w = tuple(int(k) for k in w)
            if not w or any(k < 0 or k >= d for k in w):
                raise ValueError(f"invalid cumulant word {w} for d = {d}")
            if len(w) > self.M_max:
                continue
            if v != 0:
                clean[w] = complex(v)
        for k in range(d):
            if abs(clean.get((k,), 0)) > 1e-12:
                raise ValueError("first-order cumulants must vanish")
        for k in range(d):
            for l in range(d):
                if abs(clean.get((k, l), 0) - self.model.sigma[k, l]) > 1e-12:
                    raise ValueError(f"second-order cumulant {(k + 1, l + 1)} disagrees with sigma")
        object.__setattr__(self, "scalar_cumulants", clean)

    def L(self, n: int) -> float:
        if self.norm_bound is None:
            raise MissingNormBound("family carries no norm bound; Neumann evaluation refused")
        value = float(self.norm_bound(n))
        if not value > 0:
            raise MissingNormBound(f"norm bound for n = {n} must be positive, got {value}")
        return value

    def fourth_moments(self) -> np.ndarray:
        """``m4[k,l,p,r]`` implied by the cumulants (pairings plus the order-4 cumulant)."""
        d = self.model.d
        words = list(itertools.product(range(d), repeat=4))
        mom = moments_from_cumulants(self.scalar_cumulants, words)
        return np.array([mom[w] for w in words]).reshape(d, d, d, d)

    def with_fourth_moments(self) -> "CumulantFamily":
        """Copy whose model carries the fourth-moment tensor implied by the cumulants."""
        if self.model.fourth_moments is not None:
            return self
        return replace(self, model=self.model.with_fourth_moments(self.fourth_moments()))


def free_family(model: CovarianceModel, cumulants_per_variable, norm_bound=None,
                M_max: int = DEFAULT_M_MAX) -> CumulantFamily:
    """Family of freely independent coordinates: mixed cumulants vanish.

    ``cumulants_per_variable[k]`` lists ``[kappa_1, kappa_2, ...]`` of ``x^(k)``.
    ``norm_bound`` is a callable ``n -> L_n`` or a ``norm_bounds`` JSON spec
    such as ``{"type": "constant", "L": 2}`` (kept for serialization).
    """
    spec = None
    if isinstance(norm_bound, dict):
        spec, norm_bound = norm_bound, norm_bound_from_json(norm_bound)
    cum = {}
    for k, seq in enumerate(cumulants_per_variable):
        for m, v in enumerate(seq, start=1):
            if m <= M_max and v != 0:
                cum[(k,) * m] = v
    return CumulantFamily(model, cum, norm_bound, M_max, spec)


def semicircular(fam: CumulantFamily) -> CumulantFamily:
    """The limit family: same covariance, all cumulants of order != 2 removed.

    Its norm bound is ``2 sqrt(alpha2)``, valid for every operator-valued
    semicircular element with covariance ``eta``.
    """
    from .covariance import alpha2

    bound = 2.0 * math.sqrt(alpha2(fam.model))
    cum = {w: v for w, v in fam.scalar_cumulants.items() if len(w) == 2}
    return CumulantFamily(fam.model, cum, lambda n: bound, fam.M_max)


def scaled_cumulants(fam: CumulantFamily, n: int) -> CumulantFamily:
    """Cumulants of ``S_n``: order ``m`` scaled by ``n^(1 - m/2)``."""
    if n < 1:
        raise ValueError("n must be a positive integer")
    if n == 1:
        return fam
    cum = {w: v * n ** (1 - len(w) / 2) for w, v in fam.scalar_cumulants.items()}
    base = fam.norm_bound
    bound = None if base is None else (lambda m, _n=n: base(_n * m))
    return CumulantFamily(fam.model, cum, bound, fam.M_max)


# -- operator-valued moments -------------------------------------------------

def _series_product(A, B, M):
    # truncated product of matrix power series, shapes (M+1, N, N)
    out = np.empty_like(A)
    for r in range(M + 1):
        out[r] = np.einsum("iab,ibc->ac", A[: r + 1], B[r::-1])
    return out


def _word_trie(cumulants):
    trie = {}
    for w, v in cumulants.items():
        node = trie
        for k in w:
            node = node.setdefault(k, [{}, 0j])
            value_slot = node
            node = node[0]
        value_slot[1] += v
    return trie


def moment_series(fam: CumulantFamily, c, M: int) -> np.ndarray:
    """``E[X c X c ... c X]`` with ``m`` factors ``X``, for ``m = 0..M``.

    Entry ``m = 0`` is the identity by convention. Computed by iterating the
    first-block functional equation on series truncated at degree ``M``:

    ``Mo(t) = sum_w kappa(w) t^|w| b_w1 (cF) b_w2 ... (cF) b_wk H``

    with ``F = 1 + sum Mo_i c t^i`` and ``H = 1 + sum c Mo_i t^i``. Each
    sweep fixes at least one further degree; iteration stops at the fixed
    point.
    """
    if M > fam.M_max:
        raise OrderTooLarge(f"order {M} exceeds M_max = {fam.M_max}")
    c = np.asarray(c, dtype=complex)
    N = fam.model.N
    if c.shape != (N, N):
        raise ValueError(f"spacer must be {N} x {N}")
    B = fam.model.coefficients
    eye = np.eye(N, dtype=complex)
    trie = _word_trie(fam.scalar_cumulants)

    mo = np.zeros((M + 1, N, N), dtype=complex)
    mo[0] = eye

    for _ in range(M + 1):
        cF = np.einsum("ab,rbc->rac", c, mo)
        cF[1:] = cF[1:] @ c
        cF[0] = c
        H = np.einsum("ab,rbc->rac", c, mo)
        H[0] = eye
        new = np.zeros_like(mo)
        # depth-first walk over the word trie; prefix series Q = b_w1 cF ... b_wt
        stack = []
        for k, (child, val) in trie.items():
            Q = np.zeros_like(mo)
            Q[0] = B[k]
            stack.append((1, Q, child, val))
        while stack:
            depth, Q, children, val = stack.pop()
            if val != 0 and depth <= M:
                new[depth:] += val * _series_product(Q, H, M - depth)[: M + 1 - depth]
            if depth >= M:
                continue
            if children:
                QcF = _series_product(Q[: M - depth + 1], cF[: M - depth + 1], M - depth)
                for k, (child, cval) in children.items():
                    Qn = np.zeros_like(mo)
                    Qn[: M - depth + 1] = QcF @ B[k]
                    stack.append((depth + 1, Qn, child, cval))
        new[0] = eye
        if np.array_equal(new, mo):
            break
        mo = new
    return mo


def moment(fam: CumulantFamily, m: int, c) -> np.ndarray:
    """``E[(X c)^(m-1) X]`` via the first-block recursion."""
    if m < 0:
        raise ValueError("m must be nonnegative")
    return moment_series(fam, c, max(m, 0))[m]


def _kappa_eval(by_length, B, spacers):
    # sum_w kappa(w) b_w1 d_1 b_w2 ... d_{k-1} b_wk
    k = len(spacers) + 1
    N = B.shape[1]
    total = np.zeros((N, N), dtype=complex)
    for w, v in by_length.get(k, ()):
        prod = B[w[0]]
        for d_i, idx in zip(spacers, w[1:]):
            prod = prod @ d_i @ B[idx]
        total += v * prod
    return total


def moment_nc(fam: CumulantFamily, m: int, c) -> np.ndarray:
    """Same quantity as :func:`moment`, summed explicitly over ``NC(m)``.

    Each partition contributes the nested evaluation of operator-valued
    cumulants: inner blocks are evaluated first and enter the enclosing
    cumulant as arguments, sandwiched between spacers.
    """
    c = np.asarray(c, dtype=complex)
    N = fam.model.N
    B = fam.model.coefficients
    eye = np.eye(N, dtype=complex)
    if m == 0:
        return eye
    by_length = {}
    for w, v in fam.scalar_cumulants.items():
        by_length.setdefault(len(w), []).append((w, v))

    def evaluate(blocks, lo, hi):
        # value of X_lo c X_{lo+1} ... c X_hi under the partition restricted to lo..hi
        first = next(b for b in blocks if b[0] == lo)
        spacers = []
        for a, b in zip(first, first[1:]):
            spacers.append(c @ evaluate(blocks, a + 1, b - 1) @ c if b - a > 1 else c)
        value = _kappa_eval(by_length, B, spacers)
        if first[-1] < hi:
            value = value @ c @ evaluate(blocks, first[-1] + 1, hi)
        return value

    total = np.zeros((N, N), dtype=complex)
    for part in enumerate_nc(m):
        total += evaluate(part.blocks, 1, m)
    return total


# -- Neumann series for G_n -----------------------------------------------

@dataclass
class SeriesCauchyValue:
    """Truncated Neumann evaluation of ``G_n(b)`` with a certified tail bound."""

    value: np.ndarray
    truncation_order: int
    tail_budget: float
    contraction_ratio: float


def gn_series(fam: CumulantFamily, n: int, b: OperatorPoint, M: int | None = None,
              contraction_limit: float = CONTRACTION_LIMIT) -> SeriesCauchyValue:
    """``G_n(b) = E[(b - S_n)^{-1}]`` summed to order ``M`` in ``S_n``.

    The tail beyond ``M`` is bounded by
    ``||b^-1|| rho^(M+1) / (1 - rho)`` with ``rho = L_n ||b^-1||``.

    Raises
    ------
    ContractionViolated
        If ``rho > contraction_limit``.
    OrderTooLarge
        If ``M > fam.M_max``.
    """
    if M is None:
        M = fam.M_max
    if M % 2 or M < 0:
        raise ValueError("truncation order M must be a nonnegative even integer")
    if M > fam.M_max:
        raise OrderTooLarge(f"order {M} exceeds M_max = {fam.M_max}")
    c = b.inv()
    c_norm = operator_norm(c)
    rho = fam.L(n) * c_norm
    if rho > contraction_limit:
        raise ContractionViolated(rho, contraction_limit)
    mo = moment_series(scaled_cumulants(fam, n), c, M)
    value = c.copy()
    for m in range(1, M + 1):
        value += c @ mo[m] @ c
    tail = c_norm * rho ** (M + 1) / (1 - rho)
    return SeriesCauchyValue(value, M, tail, rho)


def limit_moment_gap(fam: CumulantFamily, n: int, m: int) -> float:
    """``||E[S_n^m] - E[s^m]||`` with spacer ``1/sqrt(N)`` (``m <= 8`` even)."""
    if m > 8:
        raise OrderTooLarge("limit_moment_gap supports m <= 8")
    if m % 2:
        raise ValueError("m must be even")
    c = np.eye(fam.model.N, dtype=complex) / math.sqrt(fam.model.N)
    a = moment(scaled_cumulants(fam, n), m, c)
    s = moment(semicircular(fam), m, c)
    return operator_norm(a - s)


# -- norm bounds and JSON ------------------------------------------------------

def norm_bound_from_json(spec: dict):
    kind = spec.get("type")
    if kind == "constant":
        L = float(spec["L"])
        return lambda n: L
    if kind == "per_n":
        table = {int(n): float(L) for n, L in spec["values"]}

        def lookup(n):
            if n not in table:
                raise MissingNormBound(f"no norm bound supplied for n = {n}")
            return table[n]

        return lookup
    raise ValueError(f"norm_bounds.type must be 'constant' or 'per_n', got {kind!r}")


def family_from_json(obj: dict) -> CumulantFamily:
    """Decode the CumulantFamily JSON schema (1-based words)."""
    try:
        model = model_from_json(obj["model"])
        raw = obj["scalar_cumulants"]
    except (KeyError, TypeError) as exc:
        raise ValueError(f"family: missing or malformed field {exc}") from None
    cum = {}
    for item in raw:
        word = tuple(int(k) - 1 for k in item["word"])
        cum[word] = cum.get(word, 0) + complex_from_json(item["value"])
    spec = obj.get("norm_bounds")
    bound = norm_bound_from_json(spec) if spec is not None else None
    return CumulantFamily(model, cum, bound, int(obj.get("M_max", DEFAULT_M_MAX)), spec)


def family_to_json(fam: CumulantFamily) -> dict:
    out = {
        "model": model_to_json(fam.model),
        "scalar_cumulants": [
            {"word": [k + 1 for k in w], "value": complex_to_json(v)}
            for w, v in sorted(fam.scalar_cumulants.items(), key=lambda kv: (len(kv[0]), kv[0]))
        ],
        "M_max": fam.M_max,
    }
    if fam.norm_bounds_spec is not None:
        out["norm_bounds"] = fam.norm_bounds_spec
    return out
