"""Closed-form bounds: published randomized-trial bounds, the general-K confounded
bounds, and the K=3 instrumental-variable displays (kept as data fixtures).

The marginal-based functions work in whatever number type they are given, so
``Fraction`` inputs give exact results.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from importlib import resources

from .errors import SettingMismatch, UnsupportedCombination
from .model import (
    AffineExpression,
    CONFOUNDED,
    Estimand,
    Interval,
    ObservedLaw,
    StudySetting,
    SymbolicBound,
    evaluate_bound,
)


@dataclass(frozen=True)
class MarginalPotentialLaw:
    """``p1[k] = pr{Y(1)=k}`` and ``p0[k] = pr{Y(0)=k}``."""

    p0: tuple
    p1: tuple

    def __post_init__(self):
        if len(self.p0) != len(self.p1) or len(self.p0) < 2:
            raise ValueError("marginals must have equal length K >= 2")
        for vec in (self.p0, self.p1):
            if any(v < 0 for v in vec):
                raise ValueError("negative marginal probability")
            exact = all(isinstance(v, (int, Fraction)) for v in vec)
            total = sum(vec)
            if (total != 1) if exact else abs(total - 1) > 1e-9:
                raise ValueError(f"marginal sums to {total}")

    @property
    def K(self) -> int:
        return len(self.p0)

    @classmethod
    def from_law(cls, law: ObservedLaw) -> "MarginalPotentialLaw":
        """Randomized law rows are the potential-outcome marginals."""
        if law.setting.kind != "randomized":
            raise SettingMismatch("marginal potential outcome law needs a randomized law")
        K = law.K
        return cls(tuple(law.values[:K]), tuple(law.values[K:]))

    def survivor(self, x: int, j: int):
        """``pr{Y(x) >= j}``."""
        vec = self.p1 if x else self.p0
        return sum(vec[j:], type(vec[0])(0))


def _sum(vec, lo, hi):
    """``sum(vec[k] for lo <= k <= hi)``; empty ranges give zero."""
    lo = max(lo, 0)
    return sum(vec[lo:hi + 1], type(vec[0])(0)) if hi >= lo else type(vec[0])(0)


def lu2018_psi(m: MarginalPotentialLaw) -> Interval:
    lo, hi = lu2018_psi_values(m)
    return Interval(float(lo), float(hi))


def lu2018_psi_values(m: MarginalPotentialLaw):
    K = m.K
    diffs = [m.survivor(1, j) - m.survivor(0, j) for j in range(K)]
    lower = max(m.p0[j] + diffs[j] for j in range(K))
    upper = 1 + min(diffs)
    return lower, upper


def lu2018_theta(m: MarginalPotentialLaw) -> Interval:
    lo, hi = lu2018_theta_values(m)
    return Interval(float(lo), float(hi))


def lu2018_theta_values(m: MarginalPotentialLaw):
    K = m.K
    diffs = [m.survivor(1, j) - m.survivor(0, j) for j in range(K)]
    lower = max(diffs)
    # P{Y(1) <= Y(0)} >= P{Y(0) >= j} - P{Y(1) >= j+1}
    upper = 1 + min(diffs[j] - m.p1[j] for j in range(K))
    return lower, upper


def lu2020_phi(m: MarginalPotentialLaw) -> Interval:
    lo, hi = lu2020_phi_values(m)
    return Interval(float(lo), float(hi))


def lu2020_phi_values(m: MarginalPotentialLaw):
    K, p0, p1 = m.K, m.p0, m.p1
    uppers, lowers = [], []
    for j in range(1, K):
        for s in range(1, K - j + 1):
            uppers.append(
                _sum(p1, j, K - 1) + _sum(p1, j + s, K - 1) + _sum(p0, 0, j - 2) - _sum(p0, j + s - 1, K - 1)
            )
            lowers.append(
                _sum(p1, j + s - 1, K - 1) - _sum(p0, j, K - 1) - _sum(p0, j + s, K - 1) - _sum(p1, 0, j - 2)
            )
    return max(lowers), min(uppers)


def fay_phi(m: MarginalPotentialLaw) -> Interval:
    """Interval sum of the psi and theta bounds via phi = theta + psi - 1 (valid, not sharp)."""
    lo, hi = fay_phi_values(m)
    return Interval(float(lo), float(hi))


def fay_phi_values(m: MarginalPotentialLaw):
    pl, pu = lu2018_psi_values(m)
    tl, tu = lu2018_theta_values(m)
    return max(tl + pl - 1, -1), min(tu + pu - 1, 1)


# ---------------------------------------------------------------------------
# confounded setting, any K


def theorem_bound(estimand, K: int) -> SymbolicBound:
    """General-K confounded bounds as a symbolic bound over ``p_xy``."""
    estimand = Estimand.parse(estimand)
    top = K - 1
    no_harm = AffineExpression.build(0, {(0, 0): 1, (1, top): 1})
    benefit_cap = AffineExpression.build(1, {(1, 0): -1, (0, top): -1})
    if estimand is Estimand.PSI:
        lower, upper = no_harm, AffineExpression.build(1)
    elif estimand is Estimand.THETA:
        lower, upper = AffineExpression.build(0), benefit_cap
    else:
        lower = AffineExpression.build(-1, {(0, 0): 1, (1, top): 1})
        upper = benefit_cap
    return SymbolicBound(CONFOUNDED, estimand, K, (lower,), (upper,))


def theorem_bounds(estimand, law: ObservedLaw) -> Interval:
    if law.setting.kind != "confounded":
        raise SettingMismatch("closed-form confounded bounds need a confounded law")
    return evaluate_bound(theorem_bound(estimand, law.K), law)


def robins_risk_difference(law: ObservedLaw):
    """Exact ``(p00 + p11 - 1, 1 - p10 - p01)`` for a binary confounded law."""
    if law.setting.kind != "confounded" or law.K != 2:
        raise SettingMismatch("risk-difference bounds need a confounded K=2 law")
    p = law.exact_values()
    p00, p01, p10, p11 = p
    return p00 + p11 - 1, 1 - p10 - p01


# ---------------------------------------------------------------------------
# K = 3 instrumental-variable displays


@lru_cache(maxsize=None)
def _fixtures() -> dict:
    from .symbolic import bound_from_json

    text = resources.files("ordbounds.data").joinpath("iv_k3_displays.json").read_text()
    out = {}
    for obj in json.loads(text)["bounds"]:
        b = bound_from_json(obj)
        out[(b.setting, b.estimand)] = b
    return out


def fixture_bound(setting: StudySetting, estimand) -> SymbolicBound:
    estimand = Estimand.parse(estimand)
    try:
        return _fixtures()[(setting, estimand)]
    except KeyError:
        raise UnsupportedCombination(
            f"no K=3 display for {setting} / {estimand}; compare against the engine instead"
        ) from None


def fixture_results_k3(setting: StudySetting, estimand, law: ObservedLaw) -> Interval:
    if not setting.is_iv or law.setting.kind != "iv" or law.K != 3:
        raise SettingMismatch("K=3 displays need an iv law with K=3")
    return evaluate_bound(fixture_bound(setting, estimand), law)
