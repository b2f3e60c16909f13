from fractions import Fraction as F

import numpy as np
import pytest
from hypothesis import given, strategies as st

from ordbounds.errors import (
    DimensionMismatch,
    EmptyStratum,
    MissingInstrumentColumn,
    NegativeProbability,
    SettingMismatch,
    StratumSumMismatch,
)
from ordbounds.model import (
    CONFOUNDED,
    IV,
    IV_NO_DEFIERS,
    RANDOMIZED,
    AffineExpression,
    Estimand,
    Interval,
    ObservedLaw,
    StudySetting,
    SymbolicBound,
    cells,
    evaluate_bound,
    evaluate_exact,
    law_from_counts,
    law_from_json,
    law_to_json,
    parse_counts_csv,
    parse_symbol,
    symbol_name,
    validate_law,
)


def test_uniform_confounded_law_is_valid():
    law = ObservedLaw.from_table(CONFOUNDED, 2, [[0.25, 0.25], [0.25, 0.25]])
    assert validate_law(law) is law


def test_stratum_sum_mismatch():
    law = ObservedLaw.from_table(CONFOUNDED, 2, [[0.25, 0.25], [0.25, 0.15]])
    with pytest.raises(StratumSumMismatch):
        validate_law(law)


def test_iv_mismatch_names_the_stratum():
    z0 = [[0.2, 0.2, 0.1], [0.1, 0.2, 0.2]]
    z1 = [[0.2, 0.2, 0.1], [0.1, 0.2, 0.22]]
    with pytest.raises(StratumSumMismatch) as info:
        validate_law(ObservedLaw.from_table(IV, 3, [z0, z1]))
    assert info.value.stratum == "z=1"
    assert info.value.deviation == pytest.approx(0.02)


def test_negative_and_shape_errors():
    with pytest.raises(NegativeProbability):
        validate_law(ObservedLaw.from_table(CONFOUNDED, 2, [[0.5, 0.6], [-0.1, 0.0]]))
    with pytest.raises(DimensionMismatch):
        validate_law(ObservedLaw(CONFOUNDED, 2, (0.5, 0.5)))


def test_counts_confounded():
    law = law_from_counts([(None, 0, 0, 3), (None, 1, 1, 1)], CONFOUNDED, 2)
    assert law["p_00"] == F(3, 4) and law["p_11"] == F(1, 4)
    assert law["p_01"] == 0 and law["p_10"] == 0


def test_counts_iv():
    recs = [(0, 0, 0, 1), (0, 1, 1, 1), (1, 1, 1, 2)]
    law = law_from_counts(recs, IV, 2)
    assert law[(0, 0, 0)] == F(1, 2)
    assert law[(0, 1, 1)] == F(1, 2)
    assert law[(1, 1, 1)] == 1


def test_counts_empty_stratum():
    with pytest.raises(EmptyStratum) as info:
        law_from_counts([(0, 0, 0, 1), (0, 1, 1, 1)], IV, 2)
    assert info.value.stratum == "z=1"
    with pytest.raises(MissingInstrumentColumn):
        law_from_counts([(None, 0, 0, 1)], IV, 2)


def test_randomized_strata_are_per_arm():
    law = law_from_counts([(None, 0, 0, 1), (None, 0, 1, 3), (None, 1, 1, 5)], RANDOMIZED, 2)
    assert law[(0, 1)] == F(3, 4) and law[(1, 1)] == 1


def test_counts_csv_blank_z():
    rows = parse_counts_csv("z,x,y,count\n,0,0,3\n,1,1,1\n")
    assert rows == [(None, 0, 0, 3), (None, 1, 1, 1)]
    assert parse_counts_csv("x,y,count\n0,1,4\n") == [(None, 0, 1, 4)]


def test_json_round_trip():
    law = law_from_counts([(0, 0, 0, 1), (0, 1, 2, 2), (1, 1, 1, 1)], IV_NO_DEFIERS, 3)
    back = law_from_json(law_to_json(law, exact=True))
    assert back == law
    assert back.setting == IV_NO_DEFIERS


@pytest.mark.parametrize("setting", [RANDOMIZED, CONFOUNDED, IV])
@pytest.mark.parametrize("K", [2, 3, 11])
def test_symbols_round_trip(setting, K):
    for c in cells(setting, K):
        assert parse_symbol(setting, symbol_name(setting, c), K) == c


def test_symbol_spelling():
    assert symbol_name(CONFOUNDED, (1, 2)) == "p_12"
    assert symbol_name(IV, (0, 1, 2)) == "p_12.0"
    assert symbol_name(RANDOMIZED, (1, 2)) == "p_2.1"
    assert symbol_name(CONFOUNDED, (1, 10)) == "p_1,10"


def test_setting_parse():
    assert StudySetting.parse("iv-no-defiers") == IV_NO_DEFIERS
    assert StudySetting.parse("iv", True) == IV_NO_DEFIERS
    with pytest.raises(ValueError):
        StudySetting("randomized", True)


def test_affine_expression():
    e = AffineExpression.build(1, {(0, 0): -1, (1, 2): F(1, 2), (0, 1): 0})
    assert e.coef_map == {(0, 0): F(-1), (1, 2): F(1, 2)}
    assert e.render(CONFOUNDED) == "1 - p_00 + 1/2 p_12"


def test_interval_invariant():
    with pytest.raises(ValueError):
        Interval(0.5, 0.4)
    assert Interval(0.0, 0.5).contains(0.5)
    assert str(Interval(0.678, 1.0)) == "(0.68, 1.00)"


def test_theorem_one_plug_in():
    bound = SymbolicBound(CONFOUNDED, Estimand.PSI, 3,
                          (AffineExpression.build(0, {(0, 0): 1, (1, 2): 1}),), (AffineExpression.build(1),))
    law = ObservedLaw.from_cells(CONFOUNDED, 3, {"p_00": F(2, 10), "p_12": F(1, 10), "p_01": F(7, 10)})
    assert evaluate_exact(bound, law) == (F(3, 10), 1)
    with pytest.raises(SettingMismatch):
        evaluate_bound(bound, ObservedLaw.from_cells(RANDOMIZED, 3, {"p_0.0": 1, "p_0.1": 1}))


@given(st.lists(st.integers(0, 50), min_size=8, max_size=8).filter(lambda v: sum(v[:4]) and sum(v[4:])))
def test_counts_give_valid_laws(counts):
    recs = [(z, x, y, counts[4 * z + 2 * x + y]) for z in (0, 1) for x in (0, 1) for y in (0, 1)]
    law = law_from_counts(recs, IV, 2)
    assert law.is_exact
    for z in (0, 1):
        assert sum(law.values[4 * z:4 * z + 4]) == 1
    assert np.allclose(law.table.sum(axis=(1, 2)), 1.0)
