"""Canonical response-function parametrisation and its linear constraint system.

Every unmeasured-confounding structure over binary Z, binary X and K-level Y is
a mixture ``q`` over pairs (x-pattern, y-pattern): the x-pattern maps z to x and
the y-pattern ``(y0, y1)`` gives Y under x=0 and x=1.  The observable cell
``(z, x, y)`` collects the mass of components with ``x_pattern[z] == x`` and
``y_pattern[x] == y``.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Mapping, Sequence

import numpy as np

from .errors import RankDeficient
from .linalg import rank
from .model import (
    Estimand,
    ObservedLaw,
    StudySetting,
    cell_positions,
    cells,
    check_levels,
    strata,
    symbol_name,
    to_fraction,
)

NEVER, ALWAYS, COMPLIER, DEFIER = (0, 0), (1, 1), (0, 1), (1, 0)
X_PATTERN_NAMES = {NEVER: "never", ALWAYS: "always", COMPLIER: "complier", DEFIER: "defier"}


@dataclass(frozen=True)
class ResponseFunctionSpace:
    setting: StudySetting
    K: int
    x_patterns: tuple  # (x at z=0, x at z=1); constants (0,0),(1,1) when confounded
    y_patterns: tuple  # (y0, y1)

    @property
    def components(self) -> tuple:
        """``(x_pattern or None, y_pattern)`` in the public q ordering."""
        return _components(self)

    @property
    def size(self) -> int:
        return len(self.components)


@lru_cache(maxsize=None)
def _components(space: ResponseFunctionSpace) -> tuple:
    if not space.x_patterns:
        return tuple((None, yp) for yp in space.y_patterns)
    return tuple((xp, yp) for xp in space.x_patterns for yp in space.y_patterns)


@lru_cache(maxsize=None)
def enumerate_space(setting: StudySetting, K: int) -> ResponseFunctionSpace:
    K = check_levels(K)
    y_patterns = tuple((y0, y1) for y0 in range(K) for y1 in range(K))
    if setting.kind == "randomized":
        x_patterns = ()
    elif setting.kind == "confounded":
        x_patterns = (NEVER, ALWAYS)
    elif setting.no_defiers:
        x_patterns = (NEVER, ALWAYS, COMPLIER)
    else:
        x_patterns = (NEVER, ALWAYS, COMPLIER, DEFIER)
    return ResponseFunctionSpace(setting, K, x_patterns, y_patterns)


def _produces(component, cell, kind) -> bool:
    xp, (y0, y1) = component
    if kind == "iv":
        z, x, y = cell
        return xp[z] == x and (y0, y1)[x] == y
    x, y = cell
    if kind == "confounded":
        return xp[0] == x and (y0, y1)[x] == y
    return (y0, y1)[x] == y


@lru_cache(maxsize=None)
def observation_matrix(space: ResponseFunctionSpace) -> np.ndarray:
    """0/1 matrix (all cells x components): entry 1 iff the component yields the cell."""
    comps = space.components
    cs = cells(space.setting, space.K)
    M = np.zeros((len(cs), len(comps)), dtype=np.int64)
    for i, cell in enumerate(cs):
        for j, comp in enumerate(comps):
            if _produces(comp, cell, space.setting.kind):
                M[i, j] = 1
    M.setflags(write=False)
    return M


@dataclass(frozen=True)
class ConstraintSystem:
    """Rows: normalisation then the kept cells of every stratum."""

    space: ResponseFunctionSpace
    A: tuple  # tuple of int tuples
    rows: tuple  # None for the normalisation row, else the cell it equals
    dropped: tuple  # one dropped cell per stratum

    @property
    def shape(self) -> tuple[int, int]:
        return len(self.A), len(self.A[0])

    def rhs(self, law: ObservedLaw) -> list:
        """Right-hand side ``b`` for a law (exact if the law is exact)."""
        pos = cell_positions(law.setting, law.K)
        exact = law.is_exact
        vals = law.values if exact else law.exact_values()
        return [Fraction(1) if c is None else vals[pos[c]] for c in self.rows]

    def row_labels(self) -> list[str]:
        return ["1" if c is None else symbol_name(self.space.setting, c) for c in self.rows]

    def dump(self) -> str:
        labels = self.row_labels()
        w = max(map(len, labels))
        return "\n".join(f"{lab:>{w}} | " + " ".join(str(v) for v in row) for lab, row in zip(labels, self.A))


def build_constraints(space: ResponseFunctionSpace, dropped: Mapping | None = None) -> ConstraintSystem:
    """Normalisation row plus every stratum's cells except one dropped cell.

    ``dropped`` maps stratum label to the cell to omit; default is the
    lexicographically last cell of each stratum.
    """
    setting, K = space.setting, space.K
    cs = cells(setting, K)
    M = observation_matrix(space)
    rows: list = [None]
    drops = []
    for label, members in strata(setting, K):
        drop = cs[members[-1]]
        if dropped and label in dropped:
            drop = tuple(dropped[label])
            if drop not in [cs[i] for i in members]:
                raise ValueError(f"cell {drop} is not in stratum {label}")
        drops.append(drop)
        rows.extend(cs[i] for i in members if cs[i] != drop)
    pos = cell_positions(setting, K)
    A = [tuple([1] * space.size)] + [tuple(int(v) for v in M[pos[c]]) for c in rows[1:]]
    if rank(A) != len(A):
        raise RankDeficient(f"constraint matrix for {setting} K={K} is rank deficient")
    return ConstraintSystem(space, tuple(A), tuple(rows), tuple(drops))


@lru_cache(maxsize=None)
def default_constraints(setting: StudySetting, K: int) -> ConstraintSystem:
    return build_constraints(enumerate_space(setting, K))


@dataclass(frozen=True)
class JointResponseDistribution:
    space: ResponseFunctionSpace
    q: tuple

    def __post_init__(self):
        if len(self.q) != self.space.size:
            raise ValueError(f"q has {len(self.q)} entries, expected {self.space.size}")
        if any(v < 0 for v in self.q):
            raise ValueError("q must be nonnegative")
        total = sum(self.q)
        exact = all(isinstance(v, (int, Fraction)) for v in self.q)
        if (total != 1) if exact else abs(total - 1) > 1e-12:
            raise ValueError(f"q sums to {total}")


def forward_law(space: ResponseFunctionSpace, q) -> ObservedLaw:
    """Observed law implied by a response-function distribution (exact for rational q)."""
    if isinstance(q, JointResponseDistribution):
        q = q.q
    dist = JointResponseDistribution(space, tuple(q))
    M = observation_matrix(space)
    exact = all(isinstance(v, (int, Fraction)) for v in dist.q)
    if exact:
        qf = [to_fraction(v) for v in dist.q]
        vals = tuple(sum((qf[j] for j in np.flatnonzero(row)), Fraction(0)) for row in M)
    else:
        vals = tuple(float(v) for v in M @ np.asarray(dist.q, dtype=float))
    return ObservedLaw(space.setting, space.K, vals)


def objective_entry(estimand: Estimand, y_pattern) -> int:
    y0, y1 = y_pattern
    if estimand is Estimand.PSI:
        return int(y1 >= y0)
    if estimand is Estimand.THETA:
        return int(y1 > y0)
    return (y1 > y0) - (y1 < y0)


@lru_cache(maxsize=None)
def build_objective(space: ResponseFunctionSpace, estimand: Estimand) -> tuple[int, ...]:
    return tuple(objective_entry(estimand, yp) for _, yp in space.components)


def estimand_value(space: ResponseFunctionSpace, estimand: Estimand, q: Sequence):
    c = build_objective(space, estimand)
    return sum((ci * qi for ci, qi in zip(c, q) if ci), Fraction(0) if isinstance(q[0], (int, Fraction)) else 0.0)


def random_distribution(space: ResponseFunctionSpace, rng: np.random.Generator, denominator: int = 1000,
                        sparsity: float | None = None) -> tuple[Fraction, ...]:
    """A random rational q with common denominator.

    ``sparsity`` is the chance each component is forced to zero; the default
    draws it per call so boundary laws (many zero cells) are well represented.
    """
    n = space.size
    if sparsity is None:
        sparsity = rng.choice([0.0, 0.5, 0.8, 0.95])
    weights = rng.integers(0, 20, size=n)
    weights[rng.random(n) < sparsity] = 0
    if weights.sum() == 0:
        weights[rng.integers(n)] = 1
    # spread ``denominator`` units proportionally, fixing the rounding residue on the largest
    units = np.floor(weights / weights.sum() * denominator).astype(np.int64)
    units[np.argmax(weights)] += denominator - units.sum()
    return tuple(Fraction(int(u), denominator) for u in units)


def random_feasible_law(setting: StudySetting, K: int, rng: np.random.Generator, **kw) -> ObservedLaw:
    space = enumerate_space(setting, K)
    return forward_law(space, random_distribution(space, rng, **kw))
