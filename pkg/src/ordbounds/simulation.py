"""Simulation study: latent-normal data-generating mechanisms, exact observable
laws, true estimand values and the replicate driver.

The latent confounder ``U ~ N(0, 1)`` is integrated by composite Gauss-Legendre
quadrature on ``[-L, L]`` with panel breaks at every compliance-type cutpoint.
Quadrature weights are positive and renormalised to the exact interval masses,
so the node set is itself a discrete confounder distribution: laws and true
values computed from it come from one coherent causal model.
"""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from functools import lru_cache

import numpy as np
from scipy.optimize import bisect
from scipy.special import ndtr, ndtri

from .errors import ConvergenceFailure, QuadratureResidueTooLarge
from .model import (
    CONFOUNDED,
    ESTIMANDS,
    IV,
    IV_NO_DEFIERS,
    RANDOMIZED,
    Estimand,
    ObservedLaw,
    validate_law,
)

SCENARIOS = ("randomized", "confounded", "iv", "iv-no-defiers")
SCENARIO_SETTINGS = {
    "randomized": RANDOMIZED,
    "confounded": CONFOUNDED,
    "iv": IV,
    "iv-no-defiers": IV_NO_DEFIERS,
}
CSV_HEADER = ("scenario", "K", "replicate", "seed", "estimand", "lower", "upper", "truth", "width")


@dataclass(frozen=True)
class ScenarioParams:
    scenario: str
    K: int
    tau: float
    p_inst: float | None = None
    a1: float | None = None
    a2: float | None = None
    b1: float = 0.0
    b2: float = 0.0
    c_sorted: tuple = ()

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ValueError(f"unknown scenario {self.scenario!r}")
        if self.scenario != "confounded":
            if self.p_inst is None or not 0.2 <= self.p_inst <= 0.8:
                raise ValueError(f"p_inst must lie in [0.2, 0.8], got {self.p_inst}")
        if self.scenario == "confounded" and (self.a1 is None or self.a2 is None):
            raise ValueError("confounded scenario needs a1 and a2")
        if self.scenario.startswith("iv"):
            n = 3 if self.scenario == "iv" else 2
            c = tuple(self.c_sorted)
            grid = (0.0,) + c + (1.0,)
            if len(c) != n or not all(a < b for a, b in zip(grid, grid[1:])):
                raise ValueError(f"{self.scenario} needs {n} strictly increasing cutpoints in (0,1), got {c}")


@dataclass(frozen=True)
class QuadratureSpec:
    """Composite Gauss-Legendre rule for ``U``: ``panels`` equal panels on
    ``[-half_width, half_width]`` with ``order`` nodes each."""

    panels: int = 64
    order: int = 16
    half_width: float = 9.0
    tol: float = 1e-12
    residue_tol: float = 1e-8

    def __post_init__(self):
        if self.panels < 32:
            raise ValueError("need at least 32 panels")
        if self.tol > 1e-10:
            raise ValueError("bisection tolerance must be <= 1e-10")

    def refined(self) -> "QuadratureSpec":
        return QuadratureSpec(2 * self.panels, self.order, self.half_width, self.tol, self.residue_tol)


DEFAULT_QUAD = QuadratureSpec()


def draw_params(rng: np.random.Generator, scenario: str, K: int) -> ScenarioParams:
    """Fresh parameters; draw order is fixed so a seed reproduces a replicate."""
    if scenario not in SCENARIOS:
        raise ValueError(f"unknown scenario {scenario!r}")
    if scenario == "confounded":
        tau = rng.normal(0.0, 2.0)
        a1, a2 = rng.normal(0.0, 1.0, size=2)
        b1, b2 = rng.normal(0.0, 2.0, size=2)
        return ScenarioParams(scenario, K, float(tau), None, float(a1), float(a2), float(b1), float(b2))
    p = rng.uniform(0.2, 0.8)
    tau = rng.normal(0.0, 2.0)
    if scenario == "randomized":
        return ScenarioParams(scenario, K, float(tau), float(p))
    b1, b2 = rng.normal(0.0, 2.0, size=2)
    n = 3 if scenario == "iv" else 2
    c = np.sort(rng.uniform(0.0, 1.0, size=n))
    return ScenarioParams(scenario, K, float(tau), float(p), None, None, float(b1), float(b2),
                          tuple(float(v) for v in c))


# ---------------------------------------------------------------------------
# latent model


@lru_cache(maxsize=None)
def _legendre(order: int):
    return np.polynomial.legendre.leggauss(order)


def _panel_rule(breaks, order):
    x, w = _legendre(order)
    a, b = np.asarray(breaks[:-1]), np.asarray(breaks[1:])
    half, mid = (b - a) / 2, (b + a) / 2
    u = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    wt = (half[:, None] * w[None, :]).ravel() * np.exp(-u * u / 2) / math.sqrt(2 * math.pi)
    return u, wt


@dataclass
class LatentModel:
    """Discrete confounder: nodes ``u``, weights, and per-node x-type by z.

    ``arm[z]`` gives X at each node when Z=z (for the confounded scenario the
    column holds P(X=1 | u) and z is ignored).
    """

    scenario: str
    u: np.ndarray
    w: np.ndarray
    p_z: float
    x_given_z: np.ndarray  # shape (2, nodes): X (iv) or P(X=1|u) (other scenarios)
    m0: np.ndarray
    m1: np.ndarray

    def arm_weights(self) -> np.ndarray:
        """Joint weight of (X=x, node), shape (2, nodes)."""
        if self.scenario.startswith("iv"):
            x1 = (1 - self.p_z) * self.x_given_z[0] + self.p_z * self.x_given_z[1]
        else:
            x1 = self.x_given_z[0]
        return np.stack([self.w * (1 - x1), self.w * x1])


def latent_model(params: ScenarioParams, quad: QuadratureSpec = DEFAULT_QUAD) -> LatentModel:
    s = params.scenario
    if s == "randomized":
        u, w = np.zeros(1), np.ones(1)
        px = np.full((2, 1), params.p_inst)
        return LatentModel(s, u, w, params.p_inst, px, np.zeros(1), np.full(1, params.tau))
    L = quad.half_width
    grid = np.linspace(-L, L, quad.panels + 1)
    if s == "confounded":
        u, w = _panel_rule(grid, quad.order)
        _renormalise(w, [np.ones_like(u, dtype=bool)], [1.0], quad)
        px = ndtr(params.a1 + params.a2 * u)
        x_given_z = np.stack([px, px])
        p_z = float("nan")
    else:
        cuts = ndtri(np.asarray(params.c_sorted))
        breaks = np.unique(np.concatenate([grid, np.clip(cuts, -L, L)]))
        u, w = _panel_rule(breaks, quad.order)
        edges = np.concatenate([[-np.inf], cuts, [np.inf]])
        kind = np.searchsorted(cuts, u, side="left")  # 0 never, 1 always, 2 complier, 3 defier
        masses = np.diff(np.concatenate([[0.0], params.c_sorted, [1.0]]))
        _renormalise(w, [kind == k for k in range(len(edges) - 1)], masses, quad)
        table = np.array([[0, 0], [1, 1], [0, 1], [1, 0]], dtype=float)  # x at z=0, z=1
        x_given_z = table[kind].T
        p_z = params.p_inst
    m0 = params.b1 * u
    m1 = params.tau + (params.b1 + params.b2) * u
    return LatentModel(s, u, w, p_z, x_given_z, m0, m1)


def _renormalise(w, groups, masses, quad):
    for g, mass in zip(groups, masses):
        got = w[g].sum()
        if mass > 0 and abs(got - mass) > quad.residue_tol:
            raise QuadratureResidueTooLarge(f"quadrature mass {got} for interval of mass {mass}")
        if got > 0:
            w[g] *= mass / got


# ---------------------------------------------------------------------------
# cutpoints and laws


def _cdf(model: LatentModel, t: float, arm=None) -> float:
    W = model.arm_weights()
    F0 = W[0] @ ndtr(t - model.m0)
    F1 = W[1] @ ndtr(t - model.m1)
    if arm is None:
        return F0 + F1
    return (F1 / W[1].sum()) if arm else (F0 / W[0].sum())


def _solve_cutpoints(model, K, quad, arm=None):
    lo = float(min(model.m0.min(), model.m1.min())) - 40.0
    hi = float(max(model.m0.max(), model.m1.max())) + 40.0
    out = []
    for j in range(1, K):
        target = j / K
        f = lambda t: _cdf(model, t, arm) - target  # noqa: E731
        if not f(lo) < 0 < f(hi):
            raise ConvergenceFailure(f"bisection bracket does not straddle quantile {target}")
        try:
            out.append(bisect(f, lo, hi, xtol=quad.tol, rtol=4 * np.finfo(float).eps, maxiter=400))
        except RuntimeError as exc:
            raise ConvergenceFailure(str(exc)) from None
        lo = out[-1]
    return np.array(out)


def mixture_cutpoints(params: ScenarioParams, K: int | None = None, quad: QuadratureSpec = DEFAULT_QUAD,
                      binning: str = "marginal", model: LatentModel | None = None) -> np.ndarray:
    """Cutpoints giving each of the K bins mass 1/K.

    ``binning="marginal"`` uses the distribution of the latent outcome pooled
    over arms and returns shape (K-1,); ``"per-arm"`` bins each arm's
    conditional distribution separately and returns shape (2, K-1).
    """
    K = K or params.K
    model = model or latent_model(params, quad)
    if binning == "marginal":
        return _solve_cutpoints(model, K, quad)
    if binning == "per-arm":
        return np.stack([_solve_cutpoints(model, K, quad, arm=x) for x in (0, 1)])
    raise ValueError(f"unknown binning {binning!r}")


def _arm_edges(cuts, K):
    cuts = np.asarray(cuts)
    if cuts.ndim == 1:
        cuts = np.stack([cuts, cuts])
    inf = np.full((2, 1), np.inf)
    return np.hstack([-inf, cuts, inf])  # (2, K+1)


def _normal_mass(lo, hi):
    """P(lo < e <= hi) for standard normal e, using the tail closer to zero."""
    upper = lo > 0
    return np.where(upper, ndtr(-lo) - ndtr(-hi), ndtr(hi) - ndtr(lo))


def _bin_probs(edges_x, means):
    """P(bin = j | mean) for each node, shape (nodes, K)."""
    z = edges_x[None, :] - means[:, None]
    return _normal_mass(z[:, :-1], z[:, 1:])


def scenario_law(params: ScenarioParams, K: int | None = None, quad: QuadratureSpec = DEFAULT_QUAD,
                 binning: str = "marginal", cuts=None, model: LatentModel | None = None) -> ObservedLaw:
    K = K or params.K
    model = model or latent_model(params, quad)
    if cuts is None:
        cuts = mixture_cutpoints(params, K, quad, binning, model)
    edges = _arm_edges(cuts, K)
    P0, P1 = _bin_probs(edges[0], model.m0), _bin_probs(edges[1], model.m1)
    s = params.scenario
    if s == "randomized":
        table = np.stack([P0[0], P1[0]])
        setting = RANDOMIZED
    elif s == "confounded":
        W = model.arm_weights()
        table = np.stack([W[0] @ P0, W[1] @ P1])
        setting = CONFOUNDED
    else:
        table = np.zeros((2, 2, K))
        for z in (0, 1):
            x1 = model.x_given_z[z]
            table[z, 0] = (model.w * (1 - x1)) @ P0
            table[z, 1] = (model.w * x1) @ P1
        setting = SCENARIO_SETTINGS[s]
    table = np.clip(table, 0.0, None)
    # strip float residue stratum by stratum
    if setting.kind == "randomized":
        table /= table.sum(axis=1, keepdims=True)
    elif setting.kind == "confounded":
        table /= table.sum()
    else:
        table /= table.sum(axis=(1, 2), keepdims=True)
    return validate_law(ObservedLaw.from_table(setting, K, table))


def true_estimands(params: ScenarioParams, K: int | None = None, quad: QuadratureSpec = DEFAULT_QUAD,
                   binning: str = "marginal", cuts=None, model: LatentModel | None = None) -> dict:
    """(psi, theta, phi) with one error term shared by both potential outcomes.

    Given ``u`` the pair of bins is a function of the shared normal error, so
    the joint bin probabilities are normal masses of interval intersections.
    """
    K = K or params.K
    model = model or latent_model(params, quad)
    if cuts is None:
        cuts = mixture_cutpoints(params, K, quad, binning, model)
    edges = _arm_edges(cuts, K)
    lo0 = edges[0][None, :-1] - model.m0[:, None]  # (nodes, K)
    hi0 = edges[0][None, 1:] - model.m0[:, None]
    lo1 = edges[1][None, :-1] - model.m1[:, None]
    hi1 = edges[1][None, 1:] - model.m1[:, None]
    lo = np.maximum(lo0[:, :, None], lo1[:, None, :])
    hi = np.minimum(hi0[:, :, None], hi1[:, None, :])
    J = _normal_mass(lo, np.maximum(lo, hi))  # (nodes, y0, y1)
    joint = np.tensordot(model.w, J, axes=1)
    joint /= joint.sum()
    y0, y1 = np.indices((K, K))
    psi = float(joint[y1 >= y0].sum())
    theta = float(joint[y1 > y0].sum())
    harm = float(joint[y1 < y0].sum())
    return {Estimand.PSI: psi, Estimand.THETA: theta, Estimand.PHI: theta - harm}


# ---------------------------------------------------------------------------
# replicate driver


@dataclass(frozen=True)
class StudyConfig:
    scenarios: tuple = SCENARIOS
    Ks: tuple = (3, 4, 5)
    replicates: int = 500
    base_seed: int = 0
    quad: QuadratureSpec = DEFAULT_QUAD
    binning: str = "marginal"
    workers: int = 1

    def __post_init__(self):
        bad = [s for s in self.scenarios if s not in SCENARIOS]
        if bad:
            raise ValueError(f"unknown scenario(s) {bad}")
        if self.replicates < 1:
            raise ValueError("need at least one replicate")


@dataclass(frozen=True)
class ReplicateRecord:
    scenario: str
    K: int
    replicate: int
    seed: int
    params: ScenarioParams
    law: ObservedLaw
    bounds: dict = field(default_factory=dict)  # Estimand -> (lower, upper, truth, width)

    def __post_init__(self):
        for est, (lo, hi, truth, width) in self.bounds.items():
            if not lo - 1e-9 <= truth <= hi + 1e-9:
                raise AssertionError(
                    f"{self.scenario} K={self.K} replicate {self.replicate}: "
                    f"true {est.value}={truth} outside ({lo}, {hi})"
                )
            if width < 0:
                raise AssertionError("negative width")


def replicate_seed(base_seed: int, scenario: str, K: int, replicate: int) -> int:
    ss = np.random.SeedSequence([int(base_seed), SCENARIOS.index(scenario), int(K), int(replicate)])
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


def _compiled(setting, K):
    from .symbolic import CompiledBound, cached_bound

    return {e: CompiledBound.from_bound(cached_bound(setting, e, K)) for e in ESTIMANDS}


def simulate_replicate(scenario, K, replicate, base_seed, quad, binning, compiled) -> ReplicateRecord:
    seed = replicate_seed(base_seed, scenario, K, replicate)
    rng = np.random.default_rng(seed)
    params = draw_params(rng, scenario, K)
    model = latent_model(params, quad)
    cuts = mixture_cutpoints(params, K, quad, binning, model)
    law = scenario_law(params, K, quad, binning, cuts, model)
    truth = true_estimands(params, K, quad, binning, cuts, model)
    vals = np.array([float(v) for v in law.values])
    bounds = {}
    for est in ESTIMANDS:
        lo, hi = compiled[est].evaluate(vals)
        lo, hi = float(lo), float(hi)
        bounds[est] = (lo, hi, truth[est], hi - lo)
    return ReplicateRecord(scenario, K, replicate, seed, params, law, bounds)


def _run_task(args):
    scenario, K, reps, base_seed, quad, binning, compiled = args
    out = []
    for r in reps:
        try:
            out.append(simulate_replicate(scenario, K, r, base_seed, quad, binning, compiled))
        except Exception as exc:
            raise RuntimeError(f"{scenario} K={K} replicate {r} failed: {exc}") from exc
    return out


@dataclass
class StudyResult:
    config: StudyConfig
    records: list

    def rows(self):
        for rec in self.records:
            for est in ESTIMANDS:
                lo, hi, truth, width = rec.bounds[est]
                yield (rec.scenario, rec.K, rec.replicate, rec.seed, est.value, lo, hi, truth, width)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for row in self.rows():
            w.writerow([repr(v) if isinstance(v, float) else v for v in row])
        return buf.getvalue()

    def summary(self) -> dict:
        return summarize(self.records)


QUANTILES = (0.0, 0.05, 0.25, 0.5, 0.75, 0.95, 1.0)


def summarize(records) -> dict:
    cells: dict = {}
    for rec in records:
        for est, (_, _, _, width) in rec.bounds.items():
            cells.setdefault((rec.scenario, rec.K, est.value), []).append(width)
    out = []
    for (scenario, K, est), widths in sorted(cells.items(), key=lambda kv: (SCENARIOS.index(kv[0][0]), kv[0][1], kv[0][2])):
        wv = np.array(widths)
        out.append({
            "scenario": scenario,
            "K": K,
            "estimand": est,
            "n": int(wv.size),
            "mean_width": float(wv.mean()),
            "median_width": float(np.median(wv)),
            "max_width": float(wv.max()),
            "min_width": float(wv.min()),
            "quantiles": {f"{q:g}": float(np.quantile(wv, q)) for q in QUANTILES},
        })
    return {"cells": out}


def run_study(config: StudyConfig) -> StudyResult:
    """Run every (scenario, K) cell; records are ordered by cell then replicate index."""
    tasks = []
    for scenario in config.scenarios:
        for K in config.Ks:
            compiled = _compiled(SCENARIO_SETTINGS[scenario], K)
            reps = list(range(config.replicates))
            step = max(1, math.ceil(len(reps) / max(1, config.workers)))
            for i in range(0, len(reps), step):
                tasks.append((scenario, K, reps[i:i + step], config.base_seed, config.quad, config.binning, compiled))
    if config.workers > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            chunks = list(pool.map(_run_task, tasks))
    else:
        chunks = [_run_task(t) for t in tasks]
    return StudyResult(config, [rec for chunk in chunks for rec in chunk])


def params_to_dict(p: ScenarioParams) -> dict:
    return asdict(p)


def write_study(result: StudyResult, csv_path, summary_path=None) -> None:
    from .symbolic import atomic_write_text

    atomic_write_text(csv_path, result.to_csv())
    if summary_path is not None:
        atomic_write_text(summary_path, json.dumps(result.summary(), indent=1) + "\n")
