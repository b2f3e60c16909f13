import math

import numpy as np
import pytest
from scipy import integrate
from scipy.special import ndtr, ndtri

from ordbounds.errors import InfeasibleLaw
from ordbounds.lp import numeric_bounds
from ordbounds.model import CONFOUNDED, ESTIMANDS, IV, Estimand, ObservedLaw
from ordbounds.simulation import (
    DEFAULT_QUAD,
    SCENARIO_SETTINGS,
    SCENARIOS,
    QuadratureSpec,
    ReplicateRecord,
    ScenarioParams,
    StudyConfig,
    draw_params,
    latent_model,
    mixture_cutpoints,
    replicate_seed,
    run_study,
    scenario_law,
    true_estimands,
)
from ordbounds.symbolic import cached_bound
from ordbounds.model import evaluate_bound


def _draw(scenario, K, seed):
    return draw_params(np.random.default_rng(seed), scenario, K)


def test_draws_are_reproducible():
    for s in SCENARIOS:
        assert _draw(s, 4, 11) == _draw(s, 4, 11)
    assert len(_draw("iv-no-defiers", 3, 1).c_sorted) == 2
    assert len(_draw("iv", 3, 1).c_sorted) == 3
    assert replicate_seed(0, "iv", 3, 5) != replicate_seed(0, "iv", 4, 5)


def test_tau_draw_mean():
    rng = np.random.default_rng(3)
    taus = [draw_params(rng, "randomized", 3).tau for _ in range(10_000)]
    assert abs(np.mean(taus)) < 3 * 2 / 100


def test_param_validation():
    with pytest.raises(ValueError):
        ScenarioParams("randomized", 3, 0.0, p_inst=0.9)
    with pytest.raises(ValueError):
        ScenarioParams("iv", 3, 0.0, p_inst=0.5, c_sorted=(0.2, 0.2, 0.5))
    with pytest.raises(ValueError):
        ScenarioParams("confounded", 3, 0.0)
    with pytest.raises(ValueError):
        QuadratureSpec(panels=16)


def test_symmetric_cutpoints():
    p = ScenarioParams("randomized", 4, 0.0, p_inst=0.5)
    assert mixture_cutpoints(p, 2) == pytest.approx([0.0], abs=1e-11)
    assert mixture_cutpoints(p, 4) == pytest.approx(ndtri([0.25, 0.5, 0.75]), abs=1e-10)


def _continuous_cdf(p: ScenarioParams, t: float) -> float:
    """Marginal CDF of the latent outcome by adaptive quadrature (independent of the panel rule)."""
    def Y(x, u):
        mean = x * p.tau + p.b1 * u + x * p.b2 * u
        return ndtr(t - mean)

    if p.scenario == "randomized":
        return (1 - p.p_inst) * ndtr(t) + p.p_inst * ndtr(t - p.tau)
    phi = lambda u: math.exp(-u * u / 2) / math.sqrt(2 * math.pi)  # noqa: E731
    if p.scenario == "confounded":
        def f(u):
            px = ndtr(p.a1 + p.a2 * u)
            return phi(u) * ((1 - px) * Y(0, u) + px * Y(1, u))
        return integrate.quad(f, -np.inf, np.inf, epsabs=1e-13, epsrel=1e-13, limit=200)[0]
    edges = [-np.inf, *ndtri(p.c_sorted), np.inf]
    xs = [(0, 0), (1, 1), (0, 1), (1, 0)]
    total = 0.0
    for k in range(len(edges) - 1):
        for z, pz in ((0, 1 - p.p_inst), (1, p.p_inst)):
            x = xs[k][z]
            total += pz * integrate.quad(lambda u: phi(u) * Y(x, u), edges[k], edges[k + 1],
                                         epsabs=1e-13, epsrel=1e-13, limit=200)[0]
    return total


@pytest.mark.parametrize("scenario", SCENARIOS)
@pytest.mark.parametrize("seed", [1, 2, 3])
def test_cutpoints_against_adaptive_quadrature(scenario, seed):
    K = 4
    p = _draw(scenario, K, seed)
    cuts = mixture_cutpoints(p, K)
    assert np.all(np.diff(cuts) > 0)
    for j, t in enumerate(cuts, start=1):
        assert abs(_continuous_cdf(p, t) - j / K) < 1e-8


def test_no_effect_gives_uniform_arms():
    law = scenario_law(ScenarioParams("randomized", 5, 0.0, p_inst=0.3), 5)
    assert np.allclose(law.table, 0.2, atol=1e-12)


def test_confounded_without_confounding_factorises():
    a1 = 0.3
    conf = scenario_law(ScenarioParams("confounded", 3, 1.2, a1=a1, a2=0.0, b1=0.0, b2=0.0), 3)
    rand = scenario_law(ScenarioParams("randomized", 3, 1.2, p_inst=float(ndtr(a1))), 3)
    px = np.array([1 - ndtr(a1), ndtr(a1)])
    assert np.allclose(conf.table, px[:, None] * rand.table, atol=1e-10)


def test_iv_without_effect_slices():
    # Y does not depend on X, so the Y-marginal is the same in both arms of Z;
    # the X=1 part moves by (complier - defier) mass, which is generally nonzero
    p = ScenarioParams("iv", 3, 0.0, p_inst=0.4, b1=1.5, b2=0.0, c_sorted=(0.2, 0.5, 0.6))
    law = scenario_law(p, 3)
    T = law.table
    assert np.allclose(T[0].sum(axis=0), T[1].sum(axis=0), atol=1e-10)
    cuts = mixture_cutpoints(p, 3)
    edges = [-np.inf, *cuts, np.inf]
    u_edges = ndtri(p.c_sorted)

    def mass(lo_u, hi_u, j):
        f = lambda u: math.exp(-u * u / 2) / math.sqrt(2 * math.pi) * (  # noqa: E731
            ndtr(edges[j + 1] - p.b1 * u) - ndtr(edges[j] - p.b1 * u))
        return integrate.quad(f, lo_u, hi_u, epsabs=1e-13)[0]

    for j in range(3):
        diff = mass(u_edges[1], u_edges[2], j) - mass(u_edges[2], np.inf, j)
        assert T[1, 1, j] - T[0, 1, j] == pytest.approx(diff, abs=1e-9)
    assert np.abs(T[1] - T[0]).max() > 1e-3


def test_identical_potential_outcomes():
    for p in (ScenarioParams("randomized", 3, 0.0, p_inst=0.5),
              ScenarioParams("iv", 4, 0.0, p_inst=0.5, b1=2.0, b2=0.0, c_sorted=(0.1, 0.4, 0.9))):
        t = true_estimands(p)
        assert t[Estimand.PSI] == pytest.approx(1.0, abs=1e-12)
        assert t[Estimand.THETA] == pytest.approx(0.0, abs=1e-12)
        assert t[Estimand.PHI] == pytest.approx(0.0, abs=1e-12)


def test_benefit_matches_monte_carlo():
    p = ScenarioParams("randomized", 2, 3.0, p_inst=0.5)
    (t1,) = mixture_cutpoints(p, 2)
    theta = true_estimands(p)[Estimand.THETA]
    e = np.random.default_rng(5).standard_normal(1_000_000)
    hits = (e < t1) & (t1 <= e + p.tau)
    sd = math.sqrt(hits.mean() * (1 - hits.mean()) / hits.size)
    assert abs(theta - hits.mean()) < 3 * sd


@pytest.mark.parametrize("scenario", SCENARIOS)
def test_truth_inside_sharp_bounds(scenario):
    for seed in range(8):
        p = _draw(scenario, 3, seed)
        law = scenario_law(p)
        truth = true_estimands(p)
        assert truth[Estimand.PHI] == pytest.approx(truth[Estimand.THETA] + truth[Estimand.PSI] - 1, abs=1e-8)
        for est in ESTIMANDS:
            iv = evaluate_bound(cached_bound(SCENARIO_SETTINGS[scenario], est, 3), law)
            assert iv.lower - 1e-9 <= truth[est] <= iv.upper + 1e-9
            # independent LP check; the unrestricted iv model avoids float ties on the monotonicity boundary
            setting = IV if scenario.startswith("iv") else law.setting
            lo, hi = numeric_bounds(ObservedLaw(setting, 3, law.values), est)
            assert lo - 1e-9 <= truth[est] <= hi + 1e-9


@pytest.mark.parametrize("scenario", SCENARIOS)
def test_quadrature_converged(scenario):
    p = _draw(scenario, 4, 21)
    a = scenario_law(p, 4, DEFAULT_QUAD).table
    b = scenario_law(p, 4, DEFAULT_QUAD.refined()).table
    assert np.abs(a - b).max() < 1e-8


def test_per_arm_binning_equalises_each_arm():
    p = ScenarioParams("randomized", 4, 1.0, p_inst=0.5)
    cuts = mixture_cutpoints(p, 4, binning="per-arm")
    assert cuts.shape == (2, 3)
    law = scenario_law(p, 4, binning="per-arm")
    assert np.allclose(law.table, 0.25, atol=1e-10)


def test_no_defier_bounds_inside_unrestricted():
    for seed in range(20):
        p = _draw("iv-no-defiers", 4, seed)
        law = scenario_law(p)
        as_iv = ObservedLaw(IV, 4, law.values)
        for est in ESTIMANDS:
            nd = evaluate_bound(cached_bound(law.setting, est, 4), law)
            full = evaluate_bound(cached_bound(IV, est, 4), as_iv)
            assert full.lower - 1e-12 <= nd.lower and nd.upper <= full.upper + 1e-12


def test_record_rejects_truth_outside():
    p = _draw("randomized", 3, 0)
    with pytest.raises(AssertionError):
        ReplicateRecord("randomized", 3, 0, 0, p, scenario_law(p), {Estimand.PSI: (0.2, 0.4, 0.5, 0.2)})


def test_study_is_deterministic():
    cfg = StudyConfig(("randomized",), (3,), 100, 7)
    a, b = run_study(cfg).to_csv(), run_study(cfg).to_csv()
    assert a == b
    assert a.splitlines()[0] == "scenario,K,replicate,seed,estimand,lower,upper,truth,width"
    assert len(a.splitlines()) == 1 + 100 * 3


def test_worker_count_does_not_change_results():
    base = StudyConfig(("confounded", "iv"), (3,), 12, 4)
    pooled = StudyConfig(("confounded", "iv"), (3,), 12, 4, workers=3)
    assert run_study(base).to_csv() == run_study(pooled).to_csv()


def test_summary_widths():
    res = run_study(StudyConfig(("randomized", "confounded"), (3,), 60, 1))
    cells = {(c["scenario"], c["estimand"]): c for c in res.summary()["cells"]}
    for est in ("psi", "theta", "phi"):
        assert cells[("confounded", est)]["mean_width"] > cells[("randomized", est)]["mean_width"]
        q = cells[("randomized", est)]["quantiles"]
        assert q["0"] <= q["0.5"] <= q["1"]
