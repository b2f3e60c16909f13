"""Exact two-phase simplex over the rationals (Bland's rule).

Programs have the shape ``min/max c.q  s.t.  A q = b, q >= 0`` with ``A`` of full
row rank.  Arithmetic uses ``gmpy2.mpq`` when available and ``Fraction``
otherwise; results are always returned as ``Fraction``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from fractions import Fraction

from .errors import Infeasible, InfeasibleLaw, Unbounded
from .model import Estimand, Interval, ObservedLaw, validate_law
from .response import build_constraints, build_objective, default_constraints, enumerate_space

try:
    from gmpy2 import mpq as _Q
except ImportError:  # pragma: no cover
    _Q = Fraction


def _to_q(v):
    if isinstance(v, Fraction):
        return _Q(v.numerator, v.denominator)
    return _Q(v)


def _to_fraction(v) -> Fraction:
    return Fraction(int(v.numerator), int(v.denominator))


class Sense(enum.Enum):
    MIN = "min"
    MAX = "max"


@dataclass(frozen=True)
class LinearProgram:
    c: tuple
    A: tuple
    b: tuple
    sense: Sense = Sense.MIN

    def __post_init__(self):
        n = len(self.c)
        if any(len(row) != n for row in self.A) or len(self.b) != len(self.A):
            raise ValueError("inconsistent LP dimensions")


@dataclass(frozen=True)
class LPSolution:
    value: Fraction
    q: tuple
    basis: tuple


def _pivot(T, r, c):
    row = T[r]
    inv = 1 / row[c]
    row = [v * inv for v in row]
    T[r] = row
    for i, other in enumerate(T):
        if i != r:
            f = other[c]
            if f:
                T[i] = [a - f * b for a, b in zip(other, row)]


def _run(T, basis, ncols, allowed):
    """Bland-rule iterations; objective row is ``T[-1]`` (reduced costs, -value last)."""
    m = len(basis)
    obj = -1
    while True:
        cost = T[obj]
        enter = next((j for j in range(ncols) if allowed[j] and cost[j] < 0), None)
        if enter is None:
            return
        best = None
        for i in range(m):
            a = T[i][enter]
            if a > 0:
                ratio = T[i][-1] / a
                if best is None or ratio < best[0] or (ratio == best[0] and basis[i] < basis[best[1]]):
                    best = (ratio, i)
        if best is None:
            raise Unbounded("objective unbounded below")
        r = best[1]
        _pivot(T, r, enter)
        basis[r] = enter


def solve_lp(lp: LinearProgram) -> LPSolution:
    """Exact optimum of a feasible bounded program.

    Raises ``Infeasible`` (with a Farkas certificate) or ``Unbounded``.
    """
    m, n = len(lp.A), len(lp.c)
    sign = [(-1 if Fraction(bi) < 0 else 1) for bi in lp.b]
    # tableau columns: n structural, m artificial, rhs
    T = []
    for i in range(m):
        s = sign[i]
        row = [_to_q(s * Fraction(a)) for a in lp.A[i]]
        row += [_Q(int(i == k)) for k in range(m)]
        row.append(_to_q(s * Fraction(lp.b[i])))
        T.append(row)
    # phase 1: minimise the artificial sum; reduced costs = -(column sums)
    p1 = [-sum(T[i][j] for i in range(m)) for j in range(n)] + [_Q(0)] * m
    p1.append(-sum(T[i][-1] for i in range(m)))
    T.append(p1)
    basis = list(range(n, n + m))
    _run(T, basis, n + m, [True] * (n + m))
    if T[-1][-1] != 0:
        # y on the sign-flipped rows: y_k = 1 - reduced cost of artificial k
        y = [1 - T[-1][n + k] for k in range(m)]
        cert = tuple(-_to_fraction(sign[k] * y[k]) for k in range(m))
        raise Infeasible(cert)
    # drive zero-level artificials out of the basis
    for r in range(m):
        if basis[r] >= n:
            col = next((j for j in range(n) if T[r][j] != 0), None)
            if col is None:
                raise ValueError("constraint matrix is not of full row rank")
            _pivot(T, r, col)
            basis[r] = col
    # phase 2
    c = [_to_q(Fraction(v)) for v in lp.c]
    if lp.sense is Sense.MAX:
        c = [-v for v in c]
    obj = c + [_Q(0)] * m + [_Q(0)]
    for i in range(m):
        cb = c[basis[i]]
        if cb:
            obj = [a - cb * b for a, b in zip(obj, T[i])]
    T[-1] = obj
    _run(T, basis, n + m, [True] * n + [False] * m)
    value = -T[-1][-1]
    if lp.sense is Sense.MAX:
        value = -value
    q = [Fraction(0)] * n
    for i, j in enumerate(basis):
        q[j] = _to_fraction(T[i][-1])
    return LPSolution(_to_fraction(value), tuple(q), tuple(basis))


def numeric_bounds(law: ObservedLaw, estimand: Estimand, setting=None, system=None) -> Interval:
    """Sharp bounds by direct exact optimisation over the response distribution.

    ``setting`` overrides the law's own setting (e.g. evaluate an iv law with or
    without the no-defiers restriction).
    """
    lo, hi = numeric_bounds_exact(law, estimand, setting=setting, system=system)
    return Interval(float(lo), float(hi))


def numeric_bounds_exact(law: ObservedLaw, estimand: Estimand, setting=None, system=None):
    validate_law(law)
    setting = setting or law.setting
    if setting.kind != law.setting.kind:
        raise ValueError(f"law for {law.setting} cannot be bounded under {setting}")
    if system is None:
        system = default_constraints(setting, law.K)
    c = build_objective(system.space, Estimand.parse(estimand))
    b = tuple(system.rhs(law))
    out = []
    for sense in (Sense.MIN, Sense.MAX):
        try:
            out.append(solve_lp(LinearProgram(c, system.A, b, sense)).value)
        except Infeasible as exc:
            raise InfeasibleLaw(
                f"the observed law is inconsistent with the {setting} causal model "
                "(instrumental inequalities violated)",
                certificate=exc.certificate,
            ) from None
    return out[0], out[1]


def is_feasible(law: ObservedLaw, setting=None) -> bool:
    setting = setting or law.setting
    system = default_constraints(setting, law.K)
    try:
        solve_lp(LinearProgram((0,) * system.space.size, system.A, tuple(system.rhs(law))))
    except Infeasible:
        return False
    return True


__all__ = [
    "LinearProgram",
    "LPSolution",
    "Sense",
    "solve_lp",
    "numeric_bounds",
    "numeric_bounds_exact",
    "is_feasible",
    "build_constraints",
    "enumerate_space",
]

