"""Core domain types: study settings, estimands, observed laws and bound expressions.

Observed laws are stored flat, in the canonical cell order of their setting:

* randomized: cells ``(x, y)`` holding ``pr(Y=y | X=x)``, symbol ``p_{y}.{x}``
* confounded: cells ``(x, y)`` holding ``pr(X=x, Y=y)``, symbol ``p_{x}{y}``
* iv: cells ``(z, x, y)`` holding ``pr(X=x, Y=y | Z=z)``, symbol ``p_{x}{y}.{z}``

Entries are either all exact (``int``/``Fraction``) or floating point.
"""

from __future__ import annotations

import csv
import enum
import io
import json
import re
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from numbers import Rational
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import (
    DimensionMismatch,
    EmptyStratum,
    LawError,
    MissingInstrumentColumn,
    NegativeProbability,
    SettingMismatch,
    StratumSumMismatch,
)

STRATUM_TOL = 1e-9

SETTING_KINDS = ("randomized", "confounded", "iv")


@dataclass(frozen=True)
class OutcomeSpace:
    K: int

    def __post_init__(self):
        check_levels(self.K)

    @property
    def levels(self) -> range:
        return range(self.K)


def check_levels(K) -> int:
    if isinstance(K, bool) or not isinstance(K, (int, np.integer)) or K < 2:
        raise ValueError(f"number of outcome levels must be an integer >= 2, got {K!r}")
    return int(K)


@dataclass(frozen=True)
class StudySetting:
    kind: str
    no_defiers: bool = False

    def __post_init__(self):
        if self.kind not in SETTING_KINDS:
            raise ValueError(f"unknown setting {self.kind!r}")
        if self.no_defiers and self.kind != "iv":
            raise ValueError("no_defiers applies only to the iv setting")

    @property
    def is_iv(self) -> bool:
        return self.kind == "iv"

    @property
    def label(self) -> str:
        return "iv-no-defiers" if self.no_defiers else self.kind

    @classmethod
    def parse(cls, name: str, no_defiers: bool = False) -> "StudySetting":
        name = name.strip().lower().replace("_", "-")
        if name in ("iv-no-defiers", "iv-nd", "ivnodefiers"):
            return cls("iv", True)
        if name == "iv":
            return cls("iv", bool(no_defiers))
        return cls(name, False)

    def __str__(self):
        return self.label


RANDOMIZED = StudySetting("randomized")
CONFOUNDED = StudySetting("confounded")
IV = StudySetting("iv")
IV_NO_DEFIERS = StudySetting("iv", True)
ALL_SETTINGS = (RANDOMIZED, CONFOUNDED, IV, IV_NO_DEFIERS)


class Estimand(enum.Enum):
    PSI = "psi"
    THETA = "theta"
    PHI = "phi"

    @property
    def codomain(self) -> tuple[int, int]:
        return (-1, 1) if self is Estimand.PHI else (0, 1)

    @property
    def description(self) -> str:
        return {
            "psi": "P{Y(1) >= Y(0)}",
            "theta": "P{Y(1) > Y(0)}",
            "phi": "P{Y(1) > Y(0)} - P{Y(1) < Y(0)}",
        }[self.value]

    @classmethod
    def parse(cls, name) -> "Estimand":
        if isinstance(name, Estimand):
            return name
        return cls(str(name).strip().lower())

    def __str__(self):
        return self.value


ESTIMANDS = (Estimand.PSI, Estimand.THETA, Estimand.PHI)


# ---------------------------------------------------------------------------
# cell layout


@lru_cache(maxsize=None)
def cells(setting: StudySetting, K: int) -> tuple[tuple[int, ...], ...]:
    """Canonical cell order for a setting: row-major over the table indices."""
    if setting.is_iv:
        return tuple((z, x, y) for z in (0, 1) for x in (0, 1) for y in range(K))
    return tuple((x, y) for x in (0, 1) for y in range(K))


@lru_cache(maxsize=None)
def cell_positions(setting: StudySetting, K: int) -> dict:
    return {c: i for i, c in enumerate(cells(setting, K))}


@lru_cache(maxsize=None)
def strata(setting: StudySetting, K: int) -> tuple[tuple[str, tuple[int, ...]], ...]:
    """Conditioning strata as ``(label, cell positions)``; each stratum sums to one."""
    if setting.kind == "confounded":
        return (("joint", tuple(range(2 * K))),)
    name = "z" if setting.is_iv else "x"
    width = 2 * K if setting.is_iv else K
    return tuple((f"{name}={s}", tuple(range(s * width, (s + 1) * width))) for s in (0, 1))


def table_shape(setting: StudySetting, K: int) -> tuple[int, ...]:
    return (2, 2, K) if setting.is_iv else (2, K)


def _digits(*vals) -> str:
    return ",".join(map(str, vals)) if max(vals) > 9 else "".join(map(str, vals))


def symbol_name(setting: StudySetting, cell: tuple[int, ...]) -> str:
    if setting.is_iv:
        z, x, y = cell
        return f"p_{_digits(x, y)}.{z}"
    x, y = cell
    if setting.kind == "randomized":
        return f"p_{y}.{x}"
    return f"p_{_digits(x, y)}"


_SYMBOL_RE = re.compile(r"^p_(\d+)(?:,(\d+))?(?:\.(\d+))?$")


def parse_symbol(setting: StudySetting, name: str, K: int | None = None) -> tuple[int, ...]:
    m = _SYMBOL_RE.match(name.strip())
    if not m:
        raise ValueError(f"malformed probability symbol {name!r}")
    a, b, c = m.groups()
    if setting.kind == "randomized":
        if b is not None or c is None:
            raise ValueError(f"randomized symbols look like p_y.x, got {name!r}")
        cell = (int(c), int(a))
    else:
        if b is None:
            if len(a) != 2:
                raise ValueError(f"ambiguous symbol {name!r}")
            x, y = int(a[0]), int(a[1])
        else:
            x, y = int(a), int(b)
        if setting.is_iv:
            if c is None:
                raise ValueError(f"iv symbols look like p_xy.z, got {name!r}")
            cell = (int(c), x, y)
        else:
            if c is not None:
                raise ValueError(f"confounded symbols look like p_xy, got {name!r}")
            cell = (x, y)
    if K is not None and cell not in cell_positions(setting, K):
        raise ValueError(f"symbol {name!r} out of range for K={K}")
    return cell


def display_key(cell: tuple[int, ...]) -> tuple[int, ...]:
    """Ordering used when printing expressions (stratum, then y, then x)."""
    if len(cell) == 3:
        z, x, y = cell
        return (z, y, x)
    x, y = cell
    return (y, x)


# ---------------------------------------------------------------------------
# numbers


def as_number(v):
    """Normalise a table entry to ``Fraction`` (exact) or ``float``."""
    if isinstance(v, bool):
        raise TypeError("booleans are not probabilities")
    if isinstance(v, Fraction):
        return v
    if isinstance(v, (int, np.integer)):
        return Fraction(int(v))
    if isinstance(v, Rational):
        return Fraction(v.numerator, v.denominator)
    if isinstance(v, str):
        return Fraction(v)
    if isinstance(v, (float, np.floating)):
        return float(v)
    try:  # gmpy2.mpq and similar
        return Fraction(int(v.numerator), int(v.denominator))
    except AttributeError:
        raise TypeError(f"cannot interpret {v!r} as a probability") from None


def to_fraction(v) -> Fraction:
    return v if isinstance(v, Fraction) else Fraction(v)


# ---------------------------------------------------------------------------
# observed laws


def _flatten(table, shape):
    arr = np.asarray(table, dtype=object)
    if arr.shape != shape:
        raise DimensionMismatch(f"table has shape {arr.shape}, expected {shape}")
    return tuple(as_number(v) for v in arr.reshape(-1))


@dataclass(frozen=True)
class ObservedLaw:
    setting: StudySetting
    K: int
    values: tuple  # flat, canonical cell order

    @classmethod
    def from_table(cls, setting: StudySetting, K: int, table) -> "ObservedLaw":
        K = check_levels(K)
        return cls(setting, K, _flatten(table, table_shape(setting, K)))

    @classmethod
    def from_cells(cls, setting: StudySetting, K: int, mapping: Mapping) -> "ObservedLaw":
        """Build from ``{cell or symbol: probability}``; absent cells are zero."""
        pos = cell_positions(setting, K)
        vals = [Fraction(0)] * len(pos)
        for key, v in mapping.items():
            cell = parse_symbol(setting, key, K) if isinstance(key, str) else tuple(key)
            if cell not in pos:
                raise DimensionMismatch(f"cell {key!r} out of range")
            vals[pos[cell]] = as_number(v)
        if any(isinstance(v, float) for v in vals):
            vals = [float(v) for v in vals]
        return cls(setting, K, tuple(vals))

    @property
    def is_exact(self) -> bool:
        return all(isinstance(v, Fraction) for v in self.values)

    @property
    def table(self) -> np.ndarray:
        return np.array([float(v) for v in self.values]).reshape(table_shape(self.setting, self.K))

    def exact_values(self) -> tuple[Fraction, ...]:
        return tuple(to_fraction(v) for v in self.values)

    def __getitem__(self, cell):
        if isinstance(cell, str):
            cell = parse_symbol(self.setting, cell, self.K)
        return self.values[cell_positions(self.setting, self.K)[tuple(cell)]]

    def by_symbol(self) -> dict[str, object]:
        return {symbol_name(self.setting, c): v for c, v in zip(cells(self.setting, self.K), self.values)}


def validate_law(law: ObservedLaw) -> ObservedLaw:
    """Check dimensions, nonnegativity and stratum sums; return the law unchanged."""
    check_levels(law.K)
    n = len(cells(law.setting, law.K))
    if len(law.values) != n:
        raise DimensionMismatch(f"law has {len(law.values)} cells, expected {n}")
    for c, v in zip(cells(law.setting, law.K), law.values):
        if v < 0:
            raise NegativeProbability(f"{symbol_name(law.setting, c)} = {v}")
        if v > 1:
            raise LawError(f"{symbol_name(law.setting, c)} = {v} exceeds 1")
    exact = law.is_exact
    for label, members in strata(law.setting, law.K):
        if exact:
            dev = sum(law.values[i] for i in members) - 1
            if dev != 0:
                raise StratumSumMismatch(label, float(dev))
        else:
            dev = float(sum(float(law.values[i]) for i in members)) - 1.0
            if abs(dev) > STRATUM_TOL:
                raise StratumSumMismatch(label, dev)
    return law


def law_from_counts(records: Iterable, setting: StudySetting, K: int) -> ObservedLaw:
    """Plug-in proportions from ``(z, x, y, count)`` records (``z`` is None outside iv)."""
    K = check_levels(K)
    pos = cell_positions(setting, K)
    counts = [0] * len(pos)
    for rec in records:
        z, x, y, n = rec
        if setting.is_iv and z is None:
            raise MissingInstrumentColumn("iv counts need a z value on every row")
        if not setting.is_iv and z is not None:
            raise LawError("instrument column supplied for a non-iv setting")
        n = int(n)
        if n < 0:
            raise NegativeProbability(f"negative count {n}")
        cell = (int(z), int(x), int(y)) if setting.is_iv else (int(x), int(y))
        if cell not in pos:
            raise DimensionMismatch(f"record {rec!r} out of range for K={K}")
        counts[pos[cell]] += n
    vals = [Fraction(0)] * len(counts)
    for label, members in strata(setting, K):
        total = sum(counts[i] for i in members)
        if total <= 0:
            raise EmptyStratum(label)
        for i in members:
            vals[i] = Fraction(counts[i], total)
    return validate_law(ObservedLaw(setting, K, tuple(vals)))


# ---------------------------------------------------------------------------
# file formats


def law_to_json(law: ObservedLaw, exact: bool = False) -> dict:
    conv = str if exact and law.is_exact else float
    table = np.array([conv(v) for v in law.values], dtype=object).reshape(table_shape(law.setting, law.K))
    return {
        "setting": law.setting.kind,
        "no_defiers": law.setting.no_defiers,
        "K": law.K,
        "table": table.tolist(),
    }


def law_from_json(obj: Mapping) -> ObservedLaw:
    try:
        setting = StudySetting.parse(obj["setting"], bool(obj.get("no_defiers", False)))
        K = check_levels(obj["K"])
        table = obj["table"]
    except KeyError as exc:
        raise LawError(f"law JSON is missing {exc}") from None
    except ValueError as exc:
        raise LawError(str(exc)) from None
    return validate_law(ObservedLaw.from_table(setting, K, table))


def read_law(path) -> ObservedLaw:
    with open(path) as fh:
        return law_from_json(json.load(fh))


def parse_counts_csv(text: str) -> list[tuple]:
    """Parse ``z,x,y,count`` rows; the z column may be blank or absent."""
    reader = csv.DictReader(io.StringIO(text))
    fields = [f.strip() for f in (reader.fieldnames or [])]
    if not {"x", "y", "count"} <= set(fields):
        raise LawError(f"counts CSV needs columns x,y,count (and z for iv), got {fields}")
    rows = []
    for raw in reader:
        row = {k.strip(): (v or "").strip() for k, v in raw.items() if k is not None}
        if not any(row.values()):
            continue
        z = row.get("z", "")
        rows.append((int(z) if z != "" else None, int(row["x"]), int(row["y"]), int(row["count"])))
    return rows


def read_counts(path) -> list[tuple]:
    with open(path) as fh:
        return parse_counts_csv(fh.read())


# ---------------------------------------------------------------------------
# bound expressions


def _canonical_coefs(mapping) -> tuple:
    items = [(tuple(c), Fraction(v)) for c, v in dict(mapping).items()]
    return tuple(sorted((c, v) for c, v in items if v != 0))


@dataclass(frozen=True)
class AffineExpression:
    """``constant + sum(coef * p_cell)`` with exact rational coefficients."""

    constant: Fraction
    coefs: tuple  # ((cell, Fraction), ...) sorted, no zeros

    @classmethod
    def build(cls, constant=0, coefs: Mapping | None = None) -> "AffineExpression":
        return cls(Fraction(constant), _canonical_coefs(coefs or {}))

    def __post_init__(self):
        if any(v == 0 for _, v in self.coefs):
            raise ValueError("zero coefficient in canonical expression")

    @property
    def coef_map(self) -> dict:
        return dict(self.coefs)

    def evaluate(self, values: Sequence, positions: Mapping) -> Fraction:
        total = self.constant
        for c, v in self.coefs:
            total += v * values[positions[c]]
        return total

    def render(self, setting: StudySetting) -> str:
        parts = []
        if self.constant != 0 or not self.coefs:
            parts.append(_fmt_num(self.constant))
        for cell, v in sorted(self.coefs, key=lambda cv: display_key(cv[0])):
            sym = symbol_name(setting, cell)
            mag = abs(v)
            sep = "" if mag.denominator == 1 else " "
            term = sym if mag == 1 else f"{_fmt_num(mag)}{sep}{sym}"
            if not parts:
                parts.append(term if v > 0 else f"-{term}")
            else:
                parts.append(f"{'+' if v > 0 else '-'} {term}")
        return " ".join(parts)


def _fmt_num(v: Fraction) -> str:
    return str(v.numerator) if v.denominator == 1 else f"{v.numerator}/{v.denominator}"


@dataclass(frozen=True)
class Interval:
    lower: float
    upper: float

    def __post_init__(self):
        if self.lower > self.upper + 1e-12:
            raise ValueError(f"empty interval ({self.lower}, {self.upper})")

    @property
    def width(self) -> float:
        return self.upper - self.lower

    def contains(self, value, slack: float = 0.0) -> bool:
        return self.lower - slack <= value <= self.upper + slack

    def __iter__(self):
        yield self.lower
        yield self.upper

    def __str__(self):
        return f"({self.lower:.2f}, {self.upper:.2f})"


@dataclass(frozen=True)
class SymbolicBound:
    """Lower bound ``max(lower)`` and upper bound ``min(upper)`` over affine terms."""

    setting: StudySetting
    estimand: Estimand
    K: int
    lower: tuple
    upper: tuple

    def __post_init__(self):
        if not self.lower or not self.upper:
            raise ValueError("bound term lists must be non-empty")
        pos = cell_positions(self.setting, self.K)
        for expr in self.lower + self.upper:
            for c, _ in expr.coefs:
                if c not in pos:
                    raise ValueError(f"cell {c} invalid for {self.setting} K={self.K}")

    def render(self) -> str:
        name = self.estimand.value
        lo = ",\n".join(f"    {e.render(self.setting)}" for e in self.lower)
        hi = ",\n".join(f"    {e.render(self.setting)}" for e in self.upper)
        return f"{name} >= max{{\n{lo}\n}}\n{name} <= min{{\n{hi}\n}}\n"


def _check_compatible(bound: SymbolicBound, law: ObservedLaw):
    if bound.setting.kind != law.setting.kind or bound.K != law.K:
        raise SettingMismatch(
            f"bound is for {bound.setting} K={bound.K}, law is {law.setting} K={law.K}"
        )


def evaluate_exact(bound: SymbolicBound, law: ObservedLaw) -> tuple[Fraction, Fraction]:
    """Exact rational ``(max lower, min upper)``; float entries are converted exactly."""
    _check_compatible(bound, law)
    vals = law.exact_values()
    pos = cell_positions(law.setting, law.K)
    lo = max(e.evaluate(vals, pos) for e in bound.lower)
    hi = min(e.evaluate(vals, pos) for e in bound.upper)
    return lo, hi


def evaluate_bound(bound: SymbolicBound, law: ObservedLaw) -> Interval:
    lo, hi = evaluate_exact(bound, law)
    return Interval(float(lo), float(hi))
