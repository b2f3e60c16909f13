"""Acceptance criteria, one test each; every test records a PASS/FAIL line that is
printed in the pytest terminal summary (and echoed with ``-s``)."""

import time

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from ordbounds.cli import main
from ordbounds.lp import numeric_bounds_exact
from ordbounds.model import (
    CONFOUNDED,
    ESTIMANDS,
    IV,
    IV_NO_DEFIERS,
    RANDOMIZED,
    Estimand,
    evaluate_bound,
    evaluate_exact,
)
from ordbounds.reference import (
    MarginalPotentialLaw,
    fay_phi_values,
    fixture_bound,
    lu2018_psi_values,
    lu2018_theta_values,
    lu2020_phi_values,
    robins_risk_difference,
    theorem_bound,
)
from ordbounds.response import random_feasible_law
from ordbounds.simulation import SCENARIOS, StudyConfig, draw_params, replicate_seed, run_study, scenario_law
from ordbounds.symbolic import cached_bound, derive_symbolic_bound


def record(n, ok, detail):
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def _laws(setting, K, n, seed):
    rng = np.random.default_rng(seed)
    return [random_feasible_law(setting, K, rng) for _ in range(n)]


def test_criterion_1_confounded_closed_forms():
    t0 = time.time()
    mismatches = 0
    for K in range(2, 7):
        laws = _laws(CONFOUNDED, K, 1000, 100 + K)
        for est in ESTIMANDS:
            engine, closed = derive_symbolic_bound(CONFOUNDED, est, K), theorem_bound(est, K)
            mismatches += sum(evaluate_exact(engine, law) != evaluate_exact(closed, law) for law in laws)
    elapsed = time.time() - t0
    ok = mismatches == 0 and elapsed < 60
    assert record(1, ok, f"{mismatches} mismatches over 5 K x 3 estimands x 1000 laws, {elapsed:.1f}s (< 60s)")


DISPLAYS = [(IV, "psi"), (IV_NO_DEFIERS, "psi"), (IV, "theta"), (IV_NO_DEFIERS, "theta"), (IV_NO_DEFIERS, "phi")]


def test_criterion_2_iv_displays():
    t0 = time.time()
    exact_bad, float_gap = 0, 0.0
    for i, (setting, est) in enumerate(DISPLAYS):
        engine, shown = derive_symbolic_bound(setting, est, 3), fixture_bound(setting, est)
        for law in _laws(setting, 3, 1000, 200 + i):
            a, b = evaluate_exact(engine, law), evaluate_exact(shown, law)
            exact_bad += a != b
            float_gap = max(float_gap, *(abs(float(x) - float(y)) for x, y in zip(a, b)))
    elapsed = time.time() - t0
    ok = exact_bad == 0 and float_gap <= 1e-12 and elapsed < 120
    assert record(2, ok, f"{exact_bad} exact mismatches, max float gap {float_gap:.1e} over 5 x 1000 laws, "
                         f"{elapsed:.1f}s (< 120s)")


def _symbolic_vs_lp(setting, K, n, seed):
    bad = 0
    bounds = {e: cached_bound(setting, e, K) for e in ESTIMANDS}
    for law in _laws(setting, K, n, seed):
        for e in ESTIMANDS:
            bad += evaluate_exact(bounds[e], law) != numeric_bounds_exact(law, e)
    return bad


def test_criterion_3_symbolic_equals_lp():
    t0 = time.time()
    cases = [(IV, 3), (IV_NO_DEFIERS, 3)] + [(s, K) for s in (RANDOMIZED, CONFOUNDED) for K in range(2, 6)]
    bad = sum(_symbolic_vs_lp(s, K, 500, 300 + 10 * i + K) for i, (s, K) in enumerate(cases))
    sweep = time.time() - t0
    timings, spot_bad = {}, 0
    for setting in (IV, IV_NO_DEFIERS):
        for K in (4, 5):
            t1 = time.time()
            for e in ESTIMANDS:
                derive_symbolic_bound(setting, e, K)
            timings[(str(setting), K)] = time.time() - t1
            spot_bad += _symbolic_vs_lp(setting, K, 100, 400 + K)
    slowest = max(timings.values())
    ok = bad == 0 and spot_bad == 0 and slowest < 600
    times = ", ".join(f"{s} K={K} {t:.1f}s" for (s, K), t in timings.items())
    assert record(3, ok, f"{bad} mismatches on 500-law sweeps ({sweep:.0f}s); K=4,5 spot checks {spot_bad} "
                         f"mismatches; derivation times (all estimands) {times} (< 600s each)")


@pytest.fixture(scope="module")
def randomized_replicates():
    out = {}
    for K in (3, 4, 5):
        laws = []
        for r in range(1000):
            rng = np.random.default_rng(replicate_seed(0, "randomized", K, r))
            laws.append(scenario_law(draw_params(rng, "randomized", K), K))
        out[K] = laws
    return out


def test_criterion_4_prior_bound_equivalence(randomized_replicates):
    closed = {Estimand.PSI: lu2018_psi_values, Estimand.THETA: lu2018_theta_values, Estimand.PHI: lu2020_phi_values}
    worst = {e: 0.0 for e in ESTIMANDS}
    for K, laws in randomized_replicates.items():
        bounds = {e: cached_bound(RANDOMIZED, e, K) for e in ESTIMANDS}
        for law in laws:
            m = MarginalPotentialLaw.from_law(law)
            for e in ESTIMANDS:
                lo, hi = evaluate_bound(bounds[e], law)
                clo, chi = closed[e](m)
                worst[e] = max(worst[e], abs(lo - clo), abs(hi - chi))
    ok = all(v <= 1e-12 for v in worst.values())
    detail = ", ".join(f"{e.value} {v:.1e}" for e, v in worst.items())
    assert record(4, ok, f"max endpoint gap vs closed forms over 3 x 1000 replicates: {detail} (<= 1e-12)")


def test_criterion_5_fay_containment(randomized_replicates):
    n = contained = strict = 0
    for K, laws in randomized_replicates.items():
        bound = cached_bound(RANDOMIZED, Estimand.PHI, K)
        for law in laws:
            lo, hi = evaluate_bound(bound, law)
            flo, fhi = fay_phi_values(MarginalPotentialLaw.from_law(law))
            n += 1
            if flo <= lo + 1e-12 and hi <= fhi + 1e-12:
                contained += 1
                strict += flo < lo - 1e-12 or hi < fhi - 1e-12
    ok = contained == n and strict >= 1
    assert record(5, ok, f"sharp phi inside composed interval {contained}/{n}, strictly {strict}")


@pytest.fixture(scope="module")
def width_study():
    t0 = time.time()
    result = run_study(StudyConfig(SCENARIOS, (3, 4, 5), 500, 0))
    return result, time.time() - t0


def test_criterion_6_truth_containment(width_study):
    result, _ = width_study
    worst, violations, n = np.inf, 0, 0
    for rec in result.records:
        for lo, hi, truth, _ in rec.bounds.values():
            slack = min(truth - lo, hi - truth)
            worst = min(worst, slack)
            violations += slack < -1e-9
            n += 1
    ok = violations == 0
    assert record(6, ok, f"{violations} violations in {n} (replicate, estimand) pairs; smallest slack {worst:.1e}")


def _cells(result):
    return {(c["scenario"], c["K"], c["estimand"]): c for c in result.summary()["cells"]}


def test_criterion_7_width_ordering(width_study):
    result, elapsed = width_study
    cells = _cells(result)
    failures = [(K, e) for K in (3, 4, 5) for e in ("psi", "theta", "phi")
                if not cells[("confounded", K, e)]["mean_width"] > cells[("randomized", K, e)]["mean_width"]]
    ok = not failures and elapsed < 900
    assert record("7 (ordering)", ok, f"confounded mean width > randomized in {9 - len(failures)}/9 cells; "
                                      f"study of 6000 replicates took {elapsed:.0f}s (< 900s)")


def test_criterion_7_randomized_max_width(width_study):
    """Soft check: some estimand's largest randomized width is at most (K-2)/K + 0.01."""
    cells = _cells(width_study[0])
    parts, ok = [], True
    for K in (3, 4, 5):
        ref = (K - 2) / K
        maxes = {e: cells[("randomized", K, e)]["max_width"] for e in ("psi", "theta", "phi")}
        match = [e for e, m in maxes.items() if m <= ref + 0.01]
        ok &= bool(match)
        parts.append(f"K={K} ref {ref:.3f}: " + " ".join(f"{e} {m:.3f}" for e, m in maxes.items())
                     + f" -> {','.join(match) or 'none'}")
    assert record("7 (max width)", ok, "; ".join(parts))


def test_criterion_8_robins():
    bound = theorem_bound("phi", 2)
    laws = _laws(CONFOUNDED, 2, 1000, 800)
    bad = sum(evaluate_exact(bound, law) != robins_risk_difference(law) for law in laws)
    assert record(8, bad == 0, f"{bad} mismatches against (p_00 + p_11 - 1, 1 - p_10 - p_01) on 1000 laws")


def test_criterion_9_determinism(tmp_path, capsys):
    base = ["simulate", "--scenario", "all", "--K", "3,4,5", "--replicates", "40", "--seed", "11"]
    paths = {}
    for name, workers in (("run1", 1), ("run2", 1), ("pool8", 8)):
        paths[name] = tmp_path / f"{name}.csv"
        assert main(base + ["--workers", str(workers), "--out", str(paths[name])]) == 0
    capsys.readouterr()
    data = {k: p.read_bytes() for k, p in paths.items()}
    ok = data["run1"] == data["run2"] == data["pool8"]
    rows = len(data["run1"].splitlines()) - 1
    assert record(9, ok, f"two runs and workers=8 byte-identical ({len(data['run1'])} bytes, {rows} rows)")
