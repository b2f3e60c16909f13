"""Symbolic sharp bounds from the vertices of the dual feasible region.

For ``min c.q s.t. A q = b(p), q >= 0`` every dual vertex ``y`` contributes the
affine lower-bound term ``y . b(p)``; the maximising program gives upper-bound
terms the same way.  Terms are returned over the observed-probability symbols
with exact rational coefficients.
"""

from __future__ import annotations

import json
import os
import tempfile
from collections import Counter
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Mapping

import numpy as np

from .errors import LimitExceeded
from .lp import LinearProgram, Sense, solve_lp
from .model import (
    AffineExpression,
    Estimand,
    StudySetting,
    SymbolicBound,
    cell_positions,
    cells,
    check_levels,
    parse_symbol,
    strata,
    symbol_name,
)
from .response import build_constraints, build_objective, enumerate_space, observation_matrix
from .vertices import DualPolytope, enumerate_vertices

ENGINE_VERSION = 1
IV_SYMBOLIC_LIMIT = 5
OTHER_SYMBOLIC_LIMIT = 8
CACHE_ENV = "ORDBOUNDS_CACHE_DIR"


def check_symbolic_limit(setting: StudySetting, K: int, iv_limit: int | None = None) -> None:
    limit = (iv_limit or IV_SYMBOLIC_LIMIT) if setting.is_iv else OTHER_SYMBOLIC_LIMIT
    if K > limit:
        raise LimitExceeded(
            f"symbolic derivation for {setting} is limited to K <= {limit} (got K={K}); "
            "use numeric bounds instead"
        )


# ---------------------------------------------------------------------------
# expression post-processing


def _vertex_expression(y, rows) -> AffineExpression:
    const = Fraction(0)
    coefs = {}
    for yi, cell in zip(y, rows):
        if cell is None:
            const += yi
        elif yi:
            coefs[cell] = coefs.get(cell, 0) + yi
    return AffineExpression.build(const, coefs)


def reduce_dropped(expr: AffineExpression, setting: StudySetting, K: int, dropped) -> AffineExpression:
    """Rewrite so the dropped cell of every stratum has coefficient zero.

    Two expressions agree on every valid law iff their reduced forms are equal.
    """
    cs = cells(setting, K)
    coefs = expr.coef_map
    const = expr.constant
    for (_, members), drop in zip(strata(setting, K), dropped):
        lam = coefs.get(drop, 0)
        if lam:
            const += lam
            for i in members:
                coefs[cs[i]] = coefs.get(cs[i], 0) - lam
    return AffineExpression.build(const, coefs)


def sparsest_form(expr: AffineExpression, setting: StudySetting, K: int) -> AffineExpression:
    """Add multiples of (stratum total - 1) to maximise the number of zero coefficients.

    Ties keep the expression as given.
    """
    cs = cells(setting, K)
    coefs = expr.coef_map
    const = expr.constant
    for _, members in strata(setting, K):
        vals = [coefs.get(cs[i], Fraction(0)) for i in members]
        counts = Counter(vals)
        best = max(counts.values())
        if counts.get(Fraction(0), 0) == best:
            continue
        shift = min((v for v, k in counts.items() if k == best), key=lambda v: (abs(v), v))
        const += shift
        for i in members:
            coefs[cs[i]] = coefs.get(cs[i], 0) - shift
    return AffineExpression.build(const, coefs)


def _dedupe(terms, setting, K, dropped):
    seen, out = set(), []
    for t in terms:
        key = reduce_dropped(t, setting, K, dropped)
        if key not in seen:
            seen.add(key)
            out.append(t)
    return out


# ---------------------------------------------------------------------------
# derivation


def _default_dropped(setting, K):
    cs = cells(setting, K)
    return tuple(cs[members[-1]] for _, members in strata(setting, K))


def derive_symbolic_bound(setting: StudySetting, estimand, K: int, *, dropped: Mapping | None = None,
                          prune: bool = False, iv_limit: int | None = None) -> SymbolicBound:
    """Sharp bound as max/min of affine terms, one per dual vertex.

    ``dropped`` selects a different omitted cell per stratum (same bound, other
    dual gauge).  ``prune`` removes terms dominated on every feasible law.
    """
    estimand = Estimand.parse(estimand)
    K = check_levels(K)
    check_symbolic_limit(setting, K, iv_limit)
    space = enumerate_space(setting, K)
    system = build_constraints(space, dropped)
    c = build_objective(space, estimand)
    lists = []
    for maximize in (False, True):
        verts = enumerate_vertices(DualPolytope.from_constraints(system.A, c, maximize))
        terms = [_vertex_expression(y, system.rows) for y in verts]
        lists.append(terms)
    all_dropped = _default_dropped(setting, K)
    lower, upper = (
        [sparsest_form(t, setting, K) for t in _dedupe(terms, setting, K, all_dropped)] for terms in lists
    )
    bound = SymbolicBound(setting, estimand, K, tuple(_sorted(lower)), tuple(_sorted(upper)))
    return prune_terms(bound) if prune else bound


def _sorted(terms):
    return sorted(terms, key=lambda e: (len(e.coefs), e.constant, e.coefs))


# ---------------------------------------------------------------------------
# pruning


def _law_vertices(setting: StudySetting, K: int) -> np.ndarray:
    """Columns are the point-mass laws; the feasible law set is their convex hull."""
    return observation_matrix(enumerate_space(setting, K))


def _term_rows(terms, setting, K):
    pos = cell_positions(setting, K)
    L = np.zeros((len(terms), len(pos)))
    c0 = np.zeros(len(terms))
    for i, t in enumerate(terms):
        c0[i] = float(t.constant)
        for cell, v in t.coefs:
            L[i, pos[cell]] = float(v)
    return L, c0


def _witness_exact(t, others, q_float, setting, K) -> bool:
    """Does the rationalised point ``q`` show ``t`` strictly above every other term?"""
    space = enumerate_space(setting, K)
    q = np.clip(q_float, 0, None)
    q = [Fraction(v).limit_denominator(10**6) for v in q / q.sum()]
    q[-1] = 1 - sum(q[:-1])
    if q[-1] < 0:
        return False
    M = observation_matrix(space)
    vals = [sum((q[j] for j in np.flatnonzero(row)), Fraction(0)) for row in M]
    pos = cell_positions(setting, K)
    tv = t.evaluate(vals, pos)
    return all(tv > o.evaluate(vals, pos) for o in others)


def _dominated(t, others, setting, K) -> bool:
    """Exact check that ``t <= max(others)`` on every feasible law."""
    if not others:
        return False
    space = enumerate_space(setting, K)
    M = observation_matrix(space)
    pos = cell_positions(setting, K)
    n = space.size

    def q_coeffs(expr):
        # expr(M q) with the constant folded into sum(q) = 1
        out = [expr.constant] * n
        for cell, v in expr.coefs:
            for j in np.flatnonzero(M[pos[cell]]):
                out[j] += v
        return out

    tq = q_coeffs(t)
    rows, nother = [], len(others)
    # columns: q (n), s+ , s-, slack per other term
    for k, o in enumerate(others):
        g = [a - b for a, b in zip(tq, q_coeffs(o))]
        rows.append(g + [-1, 1] + [-int(i == k) for i in range(nother)])
    rows.append([1] * n + [0, 0] + [0] * nother)
    b = [0] * nother + [1]
    c = [0] * n + [1, -1] + [0] * nother
    sol = solve_lp(LinearProgram(tuple(c), tuple(map(tuple, rows)), tuple(b), Sense.MAX))
    return sol.value <= 0


def _prune_list(terms, setting, K, rng):
    """Drop terms that never exceed the others (lower-bound orientation)."""
    from scipy.optimize import linprog

    terms = list(terms)
    V = _law_vertices(setting, K).astype(float)
    L, c0 = _term_rows(terms, setting, K)
    n = V.shape[1]
    keep = [True] * len(terms)
    for i in range(len(terms)):
        others = [j for j in range(len(terms)) if j != i and keep[j]]
        if not others:
            continue
        # float LP: max s  s.t.  s <= (t - o_j)(V q),  sum q = 1
        G = (L[i] - L[others]) @ V + (c0[i] - c0[others])[:, None]
        A_ub = np.hstack([-G, np.ones((len(others), 1))])
        res = linprog(
            np.r_[np.zeros(n), -1.0], A_ub=A_ub, b_ub=np.zeros(len(others)),
            A_eq=np.r_[np.ones(n), 0.0][None, :], b_eq=[1.0],
            bounds=[(0, None)] * n + [(None, None)], method="highs",
        )
        other_terms = [terms[j] for j in others]
        if res.status == 0 and -res.fun > 1e-9 and _witness_exact(terms[i], other_terms, res.x[:n], setting, K):
            continue
        if _dominated(terms[i], other_terms, setting, K):
            keep[i] = False
    return [t for t, k in zip(terms, keep) if k]


def _negate(t: AffineExpression) -> AffineExpression:
    return AffineExpression(-t.constant, tuple((c, -v) for c, v in t.coefs))


def prune_terms(bound: SymbolicBound, rng=None) -> SymbolicBound:
    """Remove duplicate and dominated terms; pointwise value is unchanged on feasible laws."""
    setting, K = bound.setting, bound.K
    dropped = _default_dropped(setting, K)
    lower = _dedupe(bound.lower, setting, K, dropped)
    upper = _dedupe(bound.upper, setting, K, dropped)
    lower = _prune_list(lower, setting, K, rng)
    upper = [_negate(t) for t in _prune_list([_negate(t) for t in upper], setting, K, rng)]
    return SymbolicBound(setting, bound.estimand, K, tuple(lower), tuple(upper))


# ---------------------------------------------------------------------------
# serialisation


def _expr_to_json(expr: AffineExpression, setting) -> dict:
    return {"const": str(expr.constant), "coefs": {symbol_name(setting, c): str(v) for c, v in expr.coefs}}


def _expr_from_json(obj, setting, K) -> AffineExpression:
    coefs = {parse_symbol(setting, k, K): Fraction(v) for k, v in obj.get("coefs", {}).items()}
    return AffineExpression.build(Fraction(obj.get("const", "0")), coefs)


def bound_to_json(bound: SymbolicBound) -> dict:
    return {
        "setting": bound.setting.kind,
        "no_defiers": bound.setting.no_defiers,
        "estimand": bound.estimand.value,
        "K": bound.K,
        "lower": [_expr_to_json(e, bound.setting) for e in bound.lower],
        "upper": [_expr_to_json(e, bound.setting) for e in bound.upper],
    }


def bound_from_json(obj: Mapping) -> SymbolicBound:
    setting = StudySetting.parse(obj["setting"], bool(obj.get("no_defiers", False)))
    K = check_levels(obj["K"])
    return SymbolicBound(
        setting,
        Estimand.parse(obj["estimand"]),
        K,
        tuple(_expr_from_json(e, setting, K) for e in obj["lower"]),
        tuple(_expr_from_json(e, setting, K) for e in obj["upper"]),
    )


def atomic_write_text(path: Path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_bound(bound: SymbolicBound, path) -> None:
    atomic_write_text(Path(path), json.dumps(bound_to_json(bound), indent=1) + "\n")


def read_bound(path) -> SymbolicBound:
    with open(path) as fh:
        return bound_from_json(json.load(fh))


# ---------------------------------------------------------------------------
# cache


def cache_dir() -> Path:
    env = os.environ.get(CACHE_ENV)
    if env:
        return Path(env)
    base = os.environ.get("XDG_CACHE_HOME") or os.path.join(os.path.expanduser("~"), ".cache")
    return Path(base) / "ordbounds"


def cache_path(setting: StudySetting, estimand: Estimand, K: int, prune: bool = False) -> Path:
    tag = "-pruned" if prune else ""
    return cache_dir() / f"{setting.label}_{estimand.value}_K{K}_v{ENGINE_VERSION}{tag}.json"


_MEMO: dict = {}


def cached_bound(setting: StudySetting, estimand, K: int, *, prune: bool = False,
                 iv_limit: int | None = None, use_disk: bool = True) -> SymbolicBound:
    """``derive_symbolic_bound`` memoised in-process and on disk."""
    estimand = Estimand.parse(estimand)
    key = (setting, estimand, K, prune)
    if key in _MEMO:
        return _MEMO[key]
    check_symbolic_limit(setting, K, iv_limit)
    path = cache_path(setting, estimand, K, prune)
    bound = None
    if use_disk and path.exists():
        try:
            bound = read_bound(path)
        except (ValueError, KeyError, json.JSONDecodeError):
            bound = None
    if bound is None:
        bound = derive_symbolic_bound(setting, estimand, K, prune=prune, iv_limit=iv_limit)
        if use_disk:
            try:
                write_bound(bound, path)
            except OSError:
                pass
    _MEMO[key] = bound
    return bound


# ---------------------------------------------------------------------------
# fast floating evaluation


@dataclass(frozen=True)
class CompiledBound:
    """Dense float form of a bound for vectorised evaluation over many laws."""

    lower_matrix: np.ndarray
    lower_const: np.ndarray
    upper_matrix: np.ndarray
    upper_const: np.ndarray

    @classmethod
    def from_bound(cls, bound: SymbolicBound) -> "CompiledBound":
        L, l0 = _term_rows(bound.lower, bound.setting, bound.K)
        U, u0 = _term_rows(bound.upper, bound.setting, bound.K)
        return cls(L, l0, U, u0)

    def evaluate(self, values) -> tuple:
        """``values`` has shape (..., ncells) in canonical cell order."""
        v = np.asarray(values, dtype=float)
        lo = (v @ self.lower_matrix.T + self.lower_const).max(axis=-1)
        hi = (v @ self.upper_matrix.T + self.upper_const).min(axis=-1)
        return lo, hi
