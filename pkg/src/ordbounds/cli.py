"""``ordbounds`` command line: derive, evaluate, report, simulate, compare.

Exit codes: 0 success, 2 input or limit error, 3 law inconsistent with the model.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from fractions import Fraction
from pathlib import Path

from .errors import InfeasibleLaw, LimitExceeded, OrdboundsError
from .model import (
    CONFOUNDED,
    ESTIMANDS,
    IV,
    IV_NO_DEFIERS,
    RANDOMIZED,
    Estimand,
    Interval,
    ObservedLaw,
    StudySetting,
    law_from_counts,
    law_from_json,
    parse_counts_csv,
    strata,
    validate_law,
)

EXIT_OK, EXIT_INPUT, EXIT_INFEASIBLE = 0, 2, 3
_DENOMINATOR = 10**12


class CliError(Exception):
    def __init__(self, message, code=EXIT_INPUT):
        self.code = code
        super().__init__(message)


def _fmt(iv: Interval) -> str:
    return f"({iv.lower:.2f}, {iv.upper:.2f})"


def _estimands(text: str | None):
    if not text or text == "all":
        return ESTIMANDS
    return tuple(Estimand.parse(t.strip()) for t in text.split(","))


def _setting(args) -> StudySetting:
    return StudySetting.parse(args.setting, getattr(args, "no_defiers", False))


def _write(path, text: str) -> None:
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        from .symbolic import atomic_write_text

        atomic_write_text(Path(path), text)


# ---------------------------------------------------------------------------
# law input


def exact_law(law: ObservedLaw) -> ObservedLaw:
    """Rational copy of a float law; each stratum's largest cell absorbs rounding."""
    if law.is_exact:
        return law
    vals = [Fraction(float(v)).limit_denominator(_DENOMINATOR) for v in law.values]
    for _, members in strata(law.setting, law.K):
        big = max(members, key=lambda i: vals[i])
        vals[big] += 1 - sum(vals[i] for i in members)
    return validate_law(ObservedLaw(law.setting, law.K, tuple(vals)))


def _infer_K(records) -> int:
    return max(2, 1 + max((r[2] for r in records), default=1))


def load_law(path, setting: StudySetting | None = None, K: int | None = None) -> ObservedLaw:
    """Law JSON, or counts CSV (which needs ``setting``; ``K`` defaults to max(y)+1)."""
    text = Path(path).read_text()
    if str(path).endswith(".json") or text.lstrip().startswith("{"):
        law = law_from_json(json.loads(text))
        if setting is not None:
            if setting.kind != law.setting.kind:
                raise CliError(f"law file is {law.setting.kind} but --setting is {setting.kind}")
            law = ObservedLaw(setting, law.K, law.values)
        return law
    records = parse_counts_csv(text)
    if setting is None:
        setting = IV if any(r[0] is not None for r in records) else None
        if setting is None:
            raise CliError("counts without a z column need --setting randomized|confounded")
    return law_from_counts(records, setting, K or _infer_K(records))


# ---------------------------------------------------------------------------
# bounds


def sharp_interval(law: ObservedLaw, estimand: Estimand, setting: StudySetting | None = None,
                   method: str = "lp") -> Interval:
    """Sharp bounds for one estimand; ``lp`` solves exactly, ``symbolic`` evaluates the cached bound."""
    from .lp import is_feasible, numeric_bounds_exact
    from .model import evaluate_exact
    from .symbolic import cached_bound

    setting = setting or law.setting
    law = exact_law(law)
    if method == "symbolic":
        if setting.is_iv and not is_feasible(law, setting):
            raise InfeasibleLaw(f"the observed law is inconsistent with the {setting} causal model")
        lo, hi = evaluate_exact(cached_bound(setting, estimand, law.K), ObservedLaw(setting, law.K, law.values))
    else:
        lo, hi = numeric_bounds_exact(law, estimand, setting=setting)
    return Interval(float(lo), float(hi))


def _interval_json(iv: Interval) -> list:
    return [iv.lower, iv.upper]


# ---------------------------------------------------------------------------
# subcommands


def cmd_derive(args) -> int:
    from .response import default_constraints
    from .symbolic import bound_to_json, cached_bound, derive_symbolic_bound

    setting = _setting(args)
    estimand = Estimand.parse(args.estimand)
    if args.dump_matrix:
        sys.stderr.write(default_constraints(setting, args.K).dump() + "\n")
    if args.no_cache:
        bound = derive_symbolic_bound(setting, estimand, args.K, prune=args.prune, iv_limit=args.iv_limit)
    else:
        bound = cached_bound(setting, estimand, args.K, prune=args.prune, iv_limit=args.iv_limit)
    text = bound.render() + "\n"
    sys.stdout.write(text)
    sys.stdout.write(f"# {len(bound.lower)} lower terms, {len(bound.upper)} upper terms\n")
    if args.out:
        out = Path(args.out)
        _write(out, json.dumps(bound_to_json(bound), indent=1) + "\n")
        _write(out.with_suffix(".txt"), text)
    return EXIT_OK


def cmd_evaluate(args) -> int:
    setting = _setting(args) if args.setting else None
    law = load_law(args.law, setting, args.K)
    target = setting or law.setting
    results = {e: sharp_interval(law, e, target, args.method) for e in _estimands(args.estimand)}
    lines = [f"setting: {target}  K={law.K}", f"{'estimand':<10}{'bounds':>16}"]
    lines += [f"{e.value:<10}{_fmt(iv):>16}" for e, iv in results.items()]
    sys.stdout.write("\n".join(lines) + "\n")
    if args.json:
        payload = {
            "setting": target.kind,
            "no_defiers": target.no_defiers,
            "K": law.K,
            "bounds": {e.value: _interval_json(iv) for e, iv in results.items()},
        }
        _write(args.json, json.dumps(payload, indent=1) + "\n")
    return EXIT_OK


REPORT_ROWS = (
    ("assignment effect", "randomized"),
    ("treatment effect ignoring assignment", "confounded"),
    ("treatment effect", "iv"),
    ("treatment effect assuming no defiers", "iv-no-defiers"),
)


def report_laws(records, K: int) -> dict:
    """The four laws of the report from ``(z, x, y, count)`` records."""
    if any(r[0] is None for r in records):
        raise CliError("report needs a z column on every row")
    iv_law = law_from_counts(records, IV, K)
    by_zy = [(None, z, y, n) for z, _, y, n in records]
    by_xy = [(None, x, y, n) for _, x, y, n in records]
    return {
        "randomized": (law_from_counts(by_zy, RANDOMIZED, K), RANDOMIZED),
        "confounded": (law_from_counts(by_xy, CONFOUNDED, K), CONFOUNDED),
        "iv": (iv_law, IV),
        "iv-no-defiers": (iv_law, IV_NO_DEFIERS),
    }


def build_report(records, K: int, method: str = "lp") -> list[dict]:
    laws = report_laws(records, K)
    rows = []
    for label, key in REPORT_ROWS:
        law, setting = laws[key]
        row = {"row": label, "setting": str(setting), "bounds": {}, "infeasible": False}
        try:
            for e in ESTIMANDS:
                row["bounds"][e.value] = sharp_interval(law, e, setting, method)
        except InfeasibleLaw:
            row["infeasible"], row["bounds"] = True, {}
        rows.append(row)
    return rows


def render_report(rows) -> str:
    width = max(len(r["row"]) for r in rows)
    head = f"{'':<{width}}" + "".join(f"{e.value:>16}" for e in ESTIMANDS)
    lines = [head]
    for r in rows:
        if r["infeasible"]:
            cells = "".join(f"{'infeasible':>16}" for _ in ESTIMANDS)
        else:
            cells = "".join(f"{_fmt(r['bounds'][e.value]):>16}" for e in ESTIMANDS)
        lines.append(f"{r['row']:<{width}}{cells}")
    return "\n".join(lines) + "\n"


def cmd_report(args) -> int:
    records = parse_counts_csv(Path(args.counts).read_text())
    K = args.K or _infer_K(records)
    rows = build_report(records, K, args.method)
    sys.stdout.write(render_report(rows))
    if args.json:
        payload = [
            {**r, "bounds": {k: _interval_json(v) for k, v in r["bounds"].items()}} for r in rows
        ]
        _write(args.json, json.dumps(payload, indent=1) + "\n")
    return EXIT_INFEASIBLE if any(r["infeasible"] for r in rows) else EXIT_OK


def _int_list(text: str) -> tuple:
    try:
        return tuple(int(v) for v in text.split(","))
    except ValueError:
        raise CliError(f"expected comma-separated integers, got {text!r}") from None


def cmd_simulate(args) -> int:
    from .simulation import SCENARIOS, QuadratureSpec, StudyConfig, run_study, write_study

    scenarios = SCENARIOS if args.scenario == "all" else tuple(s.strip() for s in args.scenario.split(","))
    bad = [s for s in scenarios if s not in SCENARIOS]
    if bad:
        raise CliError(f"unknown scenario(s) {bad}; choose from {', '.join(SCENARIOS)} or all")
    quad = QuadratureSpec(panels=args.quad_panels, order=args.quad_order)
    config = StudyConfig(scenarios, _int_list(args.K), args.replicates, args.seed, quad, args.binning, args.workers)
    result = run_study(config)
    if args.out:
        out = Path(args.out)
        write_study(result, out, out.with_suffix(".summary.json"))
    else:
        sys.stdout.write(result.to_csv())
    for cell in result.summary()["cells"]:
        sys.stderr.write(
            f"{cell['scenario']:>14} K={cell['K']} {cell['estimand']:<6}"
            f" mean {cell['mean_width']:.3f}  median {cell['median_width']:.3f}  max {cell['max_width']:.3f}\n"
        )
    return EXIT_OK


def _compare_one(law: ObservedLaw) -> dict:
    from .reference import MarginalPotentialLaw, fay_phi_values, lu2020_phi_values

    law = exact_law(law)
    sharp = sharp_interval(law, Estimand.PHI, RANDOMIZED)
    m = MarginalPotentialLaw.from_law(law)
    fay = [float(v) for v in fay_phi_values(m)]
    lu = [float(v) for v in lu2020_phi_values(m)]
    contained = fay[0] <= sharp.lower + 1e-12 and sharp.upper <= fay[1] + 1e-12
    strict = contained and (fay[0] < sharp.lower - 1e-12 or sharp.upper < fay[1] - 1e-12)
    diff = max(abs(sharp.lower - lu[0]), abs(sharp.upper - lu[1]))
    return {"sharp": _interval_json(sharp), "fay": fay, "lu2020": lu,
            "contained": contained, "strict": strict, "lu2020_max_abs_diff": diff}


def _replicate_laws(text: str):
    from .simulation import DEFAULT_QUAD, draw_params, scenario_law

    import numpy as np

    seen = {}
    for row in csv.DictReader(io.StringIO(text)):
        if row["scenario"] != "randomized":
            raise CliError(f"compare needs randomized replicates, found {row['scenario']}")
        key = (int(row["K"]), int(row["replicate"]), int(row["seed"]))
        if key not in seen:
            K, _, seed = key
            params = draw_params(np.random.default_rng(seed), "randomized", K)
            seen[key] = scenario_law(params, K, DEFAULT_QUAD)
    return [(f"K={k} replicate={r}", law) for (k, r, _), law in seen.items()]


def cmd_compare(args) -> int:
    text = Path(args.input).read_text()
    if text.lstrip().startswith("{") or text.lstrip().startswith("["):
        obj = json.loads(text)
        objs = obj if isinstance(obj, list) else obj.get("laws", [obj])
        laws = [(f"law {i}", law_from_json(o)) for i, o in enumerate(objs)]
    else:
        laws = _replicate_laws(text)
    for _, law in laws:
        if law.setting.kind != "randomized":
            raise CliError(f"compare needs randomized laws, got {law.setting}")
    results = [(name, _compare_one(law)) for name, law in laws]
    for name, r in results:
        flag = "strict" if r["strict"] else ("contained" if r["contained"] else "NOT CONTAINED")
        sys.stdout.write(
            f"{name}: sharp ({r['sharp'][0]:.4f}, {r['sharp'][1]:.4f})"
            f"  fay ({r['fay'][0]:.4f}, {r['fay'][1]:.4f}) {flag}"
            f"  |sharp - lu2020| {r['lu2020_max_abs_diff']:.2e}\n"
        )
    n = len(results)
    summary = {
        "n": n,
        "contained": sum(r["contained"] for _, r in results),
        "strict": sum(r["strict"] for _, r in results),
        "lu2020_max_abs_diff": max((r["lu2020_max_abs_diff"] for _, r in results), default=0.0),
    }
    sys.stdout.write(
        f"contained {summary['contained']}/{n} (strict {summary['strict']}), "
        f"max |sharp - lu2020| = {summary['lu2020_max_abs_diff']:.3e}\n"
    )
    if args.json:
        _write(args.json, json.dumps({"summary": summary, "laws": dict(results)}, indent=1) + "\n")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ordbounds", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    d = sub.add_parser("derive", help="symbolic sharp bound for a setting, estimand and K")
    d.add_argument("--setting", required=True, choices=("randomized", "confounded", "iv"))
    d.add_argument("--no-defiers", action="store_true")
    d.add_argument("--estimand", required=True, choices=[e.value for e in ESTIMANDS])
    d.add_argument("--K", type=int, required=True)
    d.add_argument("--out", help="JSON output path (a .txt rendering is written alongside)")
    d.add_argument("--prune", action="store_true", help="drop terms dominated on every feasible law")
    d.add_argument("--iv-limit", type=int, default=None, help="override the iv symbolic K limit")
    d.add_argument("--no-cache", action="store_true")
    d.add_argument("--dump-matrix", action="store_true", help="print the constraint matrix to stderr")
    d.set_defaults(func=cmd_derive)

    e = sub.add_parser("evaluate", help="sharp bounds for a law JSON or counts CSV")
    e.add_argument("law")
    e.add_argument("--setting", choices=("randomized", "confounded", "iv"))
    e.add_argument("--no-defiers", action="store_true")
    e.add_argument("--K", type=int, default=None)
    e.add_argument("--estimand", default="all", help="comma list of psi,theta,phi or 'all'")
    e.add_argument("--method", choices=("lp", "symbolic"), default="lp")
    e.add_argument("--json", help="full-precision JSON output path ('-' for stdout)")
    e.set_defaults(func=cmd_evaluate)

    r = sub.add_parser("report", help="four-row report from z,x,y,count data")
    r.add_argument("counts")
    r.add_argument("--K", type=int, default=None)
    r.add_argument("--method", choices=("lp", "symbolic"), default="lp")
    r.add_argument("--json")
    r.set_defaults(func=cmd_report)

    s = sub.add_parser("simulate", help="latent-normal simulation study")
    s.add_argument("--scenario", default="all", help="randomized, confounded, iv, iv-no-defiers, a comma list, or all")
    s.add_argument("--K", default="3,4,5")
    s.add_argument("--replicates", type=int, default=500)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", help="CSV path; the summary goes to <stem>.summary.json")
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--binning", choices=("marginal", "per-arm"), default="marginal")
    s.add_argument("--quad-panels", type=int, default=64)
    s.add_argument("--quad-order", type=int, default=16)
    s.set_defaults(func=cmd_simulate)

    c = sub.add_parser("compare", help="sharp phi versus the randomized-trial closed forms")
    c.add_argument("input", help="randomized law JSON (or a list of them) or a replicate CSV")
    c.add_argument("--json")
    c.set_defaults(func=cmd_compare)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except InfeasibleLaw as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_INFEASIBLE
    except LimitExceeded as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_INPUT
    except CliError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return exc.code
    except (OrdboundsError, ValueError, KeyError, OSError) as exc:
        name = type(exc).__name__
        sys.stderr.write(f"error: {name}: {exc}\n")
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
