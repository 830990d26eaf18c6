"""Command-line surface.

Subcommands: analyze (observed CSV -> bound estimates + CIs), oracle
(population JSON -> exact effects, checks, intervals), simulate (scenario
JSON -> Monte Carlo coverage report), plotdata (analysis reports -> plot
ready CSV).

Exit codes: 0 success, 2 input error, 3 assumption or estimation error,
4 internal error. Seeds resolve flag > FB_SEED env > scenario file.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import os
import sys
from pathlib import Path

from . import oracle
from . import population as popmod
from .data import load_csv
from .errors import AssumptionViolationError, FactorBoundsError, InvalidInputError
from .estimate import (
    estimate_bounds,
    imbens_manski_ci,
    parse_method,
    parse_profile,
    wald_reference,
)
from .simulate import load_scenario, monte_carlo

_DEFAULT_METHODS = ["adjusted", "simple", "exclusion"]


def _split_methods(raw: list[str] | None) -> list[str]:
    if not raw:
        return list(_DEFAULT_METHODS)
    methods: list[str] = []
    for chunk in raw:
        methods.extend(m.strip() for m in chunk.split(",") if m.strip())
    if not methods:
        raise InvalidInputError("empty method list")
    for m in methods:
        if not m.startswith("conservative"):
            parse_method(m)
    return methods


def _parse_rescale(text: str | None) -> tuple[float, float] | None:
    if text is None:
        return None
    parts = text.split(",")
    if len(parts) != 2:
        raise InvalidInputError(f"--rescale wants 'min,max', got {text!r}")
    try:
        return float(parts[0]), float(parts[1])
    except ValueError:
        raise InvalidInputError(f"--rescale wants numeric 'min,max', got {text!r}") from None


def _dump_json(obj, out_path: str | None) -> None:
    text = json.dumps(obj, sort_keys=True, indent=2) + "\n"
    if out_path is None or out_path == "-":
        sys.stdout.write(text)
    else:
        Path(out_path).write_text(text, encoding="utf-8")


def _fmt(x) -> str:
    return "-" if x is None else f"{x:+.4f}"


# --- analyze -------------------------------------------------------------------


def cmd_analyze(args) -> int:
    rescale = _parse_rescale(args.rescale)
    data = load_csv(args.input, binary_coding=args.binary_coding, rescale=rescale)
    K = data.design.K
    factors = args.factor or list(range(1, K + 1))
    methods = _split_methods(args.method)
    for m in methods:
        if m.startswith("conservative"):
            raise InvalidInputError(
                "conservative bounds need the true complier share; use the oracle subcommand"
            )
    estimates = []
    for k in factors:
        for method in methods:
            est = estimate_bounds(data, k, method, profile=args.profile)
            ci = imbens_manski_ci(est, alpha=args.alpha)
            estimates.append(est.with_ci(ci))
    wald = [wald_reference(data, k) for k in factors]
    report = {
        "schema": "factorbounds-analysis-v1",
        "K": K,
        "n_rows": data.n,
        "arm_counts": [int(v) for v in data.arm_counts()],
        "alpha": args.alpha,
        "rescale": list(data.rescale) if data.rescale is not None else None,
        "profile": args.profile,
        "estimates": [e.to_dict() for e in estimates],
        "wald": [w.to_dict() for w in wald],
    }
    table = sys.stdout if args.out else sys.stderr
    print(f"{'factor':>6} {'method':<18} {'interval':<22} {'ci':<22} {'se_l':>8} {'se_u':>8}", file=table)
    for e in estimates:
        iv = f"[{e.clipped_lower:+.4f}, {e.clipped_upper:+.4f}]"
        ci_s = f"[{e.ci_lower:+.4f}, {e.ci_upper:+.4f}]"
        print(
            f"{e.factor:>6} {e.method:<18} {iv:<22} {ci_s:<22} {e.se_lower:>8.4f} {e.se_upper:>8.4f}",
            file=table,
        )
    for w in wald:
        print(
            f"{w.factor:>6} {'wald (reference)':<18} {_fmt(w.point):<22} "
            f"{'(' + w.label + ')':<22} {w.se:>8.4f}",
            file=table,
        )
    _dump_json(report, args.out)
    return 0


# --- oracle --------------------------------------------------------------------


def _interval_dict(iv: oracle.Interval, ctx, true_delta: float | None) -> dict:
    return {
        "center": iv.center,
        "half_width_lower": iv.half_width_lower,
        "half_width_upper": iv.half_width_upper,
        "raw_lower": iv.raw_lower,
        "raw_upper": iv.raw_upper,
        "lower": iv.lower,
        "upper": iv.upper,
        "lower_clipped": iv.lower_clipped,
        "upper_clipped": iv.upper_clipped,
        "profile_context": list(ctx) if ctx is not None else None,
        "true_delta": true_delta,
    }


def _oracle_factor_block(pop, k: int, methods: list[str], profile: str) -> tuple[dict, bool]:
    design = pop.design
    mono = popmod.check_conditional_monotonicity(pop, k)
    valid = popmod.check_least_compliant_profile(pop, k) if not mono else ()
    excl = popmod.check_weak_treatment_exclusion(pop, k) if not mono else []
    block: dict = {
        "factor": k,
        "checks": {
            "monotone": {"passes": not mono, "violations": [list(v) for v in mono[:10]]},
            "profile": {"passes": bool(valid), "valid_contexts": [list(c) for c in valid]},
            "exclusion": {"passes": not mono and not excl, "violations": [list(v) for v in excl[:10]]},
        },
    }
    failed = False
    if not mono:
        itt = oracle.itt_report(pop, k)
        block["itt"] = {
            "contexts": [list(c) for c in itt.contexts],
            "gamma": [itt.gamma[c] for c in itt.contexts],
            "components": [list(itt.components[c]) for c in itt.contexts],
            "nu": [itt.nu[c] for c in itt.contexts],
            "nu_plus": [itt.nu_plus[c] for c in itt.contexts],
            "nu_minus": [itt.nu_minus[c] for c in itt.contexts],
        }
    if valid:
        shares = popmod.group_shares(pop, k, valid[0])
        block["shares"] = {
            "tilde": list(shares.tilde),
            "rho_constant": shares.rho_constant,
            "rho_conditional_complier": {
                ",".join(map(str, c)): v for c, v in sorted(shares.rho_conditional_complier.items())
            },
            "rho_always": {",".join(map(str, c)): v for c, v in sorted(shares.rho_always.items())},
            "rho_never": {",".join(map(str, c)): v for c, v in sorted(shares.rho_never.items())},
        }
    methods_out: dict = {}
    for method in methods:
        try:
            methods_out[method] = _oracle_method(pop, k, method, profile)
        except FactorBoundsError as e:
            methods_out[method] = {"error": f"{type(e).__name__}: {e}"}
            failed = True
    block["methods"] = methods_out
    return block, failed


def _resolve_oracle_profile(pop, k: int, profile: str):
    policy, ctx = parse_profile(profile, pop.design.K - 1)
    if policy == "declared":
        return ctx
    valid = popmod.check_least_compliant_profile(pop, k)
    if not valid:
        raise AssumptionViolationError(f"factor {k}: no uniformly least compliant context exists")
    return valid[0]


def _oracle_method(pop, k: int, method: str, profile: str) -> dict:
    if method.startswith("conservative"):
        _, _, tail = method.partition(":")
        try:
            t = float(tail)
        except ValueError:
            raise InvalidInputError(f"conservative method wants conservative:<share>, got {method!r}") from None
        iv = oracle.conservative_bounds(pop, k, t)
        return _interval_dict(iv, None, oracle.main_effect(pop, k)) | {"t": t}
    kind, extra = parse_method(method)
    if kind == "joint":
        k2 = extra[0]
        policy, ctx = parse_profile(profile, pop.design.K - 2)
        if policy == "min":
            valid = popmod.check_joint_least_compliant(pop, k, k2)
            if not valid:
                raise AssumptionViolationError(
                    f"factors ({k}, {k2}): no uniformly least compliant joint context exists"
                )
            ctx = valid[0]
        iv = oracle.joint_bounds(pop, k, k2, ctx)
        return _interval_dict(iv, ctx, oracle.joint_interaction_effect(pop, k, k2))
    ctx = _resolve_oracle_profile(pop, k, profile)
    if kind == "adjusted":
        iv = oracle.adjusted_bounds(pop, k, ctx)
        truth = oracle.main_effect(pop, k)
    elif kind == "simple":
        iv = oracle.simple_bounds(pop, k, ctx)
        truth = oracle.main_effect(pop, k)
    elif kind == "exclusion":
        iv = oracle.exclusion_bounds(pop, k, ctx)
        truth = oracle.main_effect(pop, k)
    else:
        iv = oracle.interaction_bounds(pop, extra, k, ctx)
        truth = oracle.interaction_effect(pop, extra, k)
    return _interval_dict(iv, ctx, truth)


def cmd_oracle(args) -> int:
    pop = popmod.load_population(args.input)
    K = pop.design.K
    factors = args.factor or list(range(1, K + 1))
    methods = _split_methods(args.method)
    blocks = []
    any_failed = False
    for k in factors:
        block, failed = _oracle_factor_block(pop, k, methods, args.profile)
        blocks.append(block)
        any_failed = any_failed or failed
    report = {
        "schema": "factorbounds-oracle-v1",
        "K": K,
        "N": pop.N,
        "profile": args.profile,
        "factors": blocks,
    }
    _dump_json(report, args.out)
    return 3 if any_failed else 0


# --- simulate --------------------------------------------------------------------


def _resolve_seed(args, config_seed: int) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get("FB_SEED")
    if env is not None:
        try:
            seed = int(env)
        except ValueError:
            raise InvalidInputError(f"FB_SEED must be an integer, got {env!r}") from None
        if seed < 0:
            raise InvalidInputError("FB_SEED must be nonnegative")
        return seed
    return config_seed


def cmd_simulate(args) -> int:
    config = load_scenario(args.scenario)
    seed = _resolve_seed(args, config.seed)
    if seed != config.seed:
        config = dataclasses.replace(config, seed=seed)
    report = monte_carlo(config, args.replications)
    text = report.to_json()
    summary = sys.stdout if args.out else sys.stderr
    for tr in report.targets:
        cov_b = "-" if tr.coverage_bounds is None else f"{tr.coverage_bounds:.3f} (mcse {tr.coverage_bounds_mcse:.3f})"
        cov_ci = "-" if tr.coverage_ci is None else f"{tr.coverage_ci:.3f} (mcse {tr.coverage_ci_mcse:.3f})"
        width = "-" if tr.mean_width is None else f"{tr.mean_width:.4f}"
        print(
            f"{tr.label}: ok {tr.n_ok}/{tr.n_reps}  bounds coverage {cov_b}  ci coverage {cov_ci}  mean width {width}",
            file=summary,
        )
        for err, count in sorted(tr.failures.items()):
            print(f"{tr.label}: {count} replication(s) failed with {err}", file=summary)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


# --- plotdata ---------------------------------------------------------------------


def cmd_plotdata(args) -> int:
    reports = []
    for path in args.reports:
        try:
            with open(path, encoding="utf-8") as fh:
                rep = json.load(fh)
        except json.JSONDecodeError as e:
            raise InvalidInputError(f"{path}: invalid JSON ({e})") from None
        if not isinstance(rep, dict) or rep.get("schema") != "factorbounds-analysis-v1":
            raise InvalidInputError(f"{path}: not an analysis report")
        reports.append((Path(path).stem, rep))
    ks = {rep["K"] for _, rep in reports}
    if len(ks) > 1:
        raise InvalidInputError(f"reports mix designs with K in {sorted(ks)}; cannot combine")
    rows = []
    for stem, rep in reports:
        wald_by_factor = {w["factor"]: w["point"] for w in rep.get("wald", [])}
        for e in rep["estimates"]:
            rows.append(
                (
                    f"{stem}/factor{e['factor']}:{e['method']}",
                    e["clipped_lower"],
                    e["clipped_upper"],
                    e["ci_lower"],
                    e["ci_upper"],
                    wald_by_factor.get(e["factor"]),
                )
            )
    out = open(args.out, "w", newline="", encoding="utf-8") if args.out else sys.stdout
    try:
        writer = csv.writer(out)
        writer.writerow(["label", "lower", "upper", "ci_lower", "ci_upper", "point"])
        for label, *vals in rows:
            writer.writerow([label] + ["" if v is None else repr(float(v)) for v in vals])
    finally:
        if args.out:
            out.close()
    return 0


# --- parser -----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="factorbounds",
        description="Bounds on complier factorial effects under noncompliance.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", help="estimate bounds and CIs from an observed-data CSV")
    p.add_argument("input", help="CSV with header z1..zK,d1..dK,y")
    p.add_argument("--factor", action="append", type=int, help="factor to analyze (repeatable; default all)")
    p.add_argument(
        "--method",
        action="append",
        help="comma list of adjusted|simple|exclusion|interaction:<f+f>|joint:<f> (default the main trio)",
    )
    p.add_argument("--profile", default="min", help="min or declared:<comma list of -1/+1> (default min)")
    p.add_argument("--alpha", type=float, default=0.05, help="CI significance level (default 0.05)")
    p.add_argument("--binary-coding", action="store_true", help="read z/d as 0/1 with 0 -> -1")
    p.add_argument("--rescale", help="min,max of the raw outcome; maps it into [0,1]")
    p.add_argument("--out", help="write the JSON report here (default stdout)")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("oracle", help="exact effects, checks, and intervals for a population file")
    p.add_argument("input", help="population JSON ({K, N, uptake, outcome})")
    p.add_argument("--factor", action="append", type=int, help="factor (repeatable; default all)")
    p.add_argument(
        "--method",
        action="append",
        help="comma list; additionally supports conservative:<share> (default the main trio)",
    )
    p.add_argument("--profile", default="min", help="min or declared:<levels> (default min)")
    p.add_argument("--out", help="write the JSON report here (default stdout)")
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("simulate", help="run a Monte Carlo coverage study from a scenario file")
    p.add_argument("scenario", help="scenario JSON")
    p.add_argument("-R", "--replications", type=int, default=100, help="replications (default 100)")
    p.add_argument("--seed", type=int, help="override the scenario seed (precedence: flag > FB_SEED > file)")
    p.add_argument("--out", help="write the JSON report here (default stdout)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("plotdata", help="flatten analysis reports into a plot-ready CSV")
    p.add_argument("reports", nargs="+", help="one or more analyze JSON reports")
    p.add_argument("--out", help="write the CSV here (default stdout)")
    p.set_defaults(func=cmd_plotdata)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except InvalidInputError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except FactorBoundsError as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return 3
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except Exception as e:  # pragma: no cover - defensive
        print(f"internal error: {type(e).__name__}: {e}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
