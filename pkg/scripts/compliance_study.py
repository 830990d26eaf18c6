"""Bound width as a function of compliance, end to end.

Runs the two-program scenario (one weak factor near 0.63 uptake, one
strong factor at 0.98), prints the per-target Monte Carlo summaries,
then draws a single realization and pushes it through the same
analyze -> plotdata path the CLI uses, so the CSV that comes out is
exactly what the plotting notebook consumes.

Usage: python scripts/compliance_study.py [-R 500] [--out-dir results]
"""

import argparse
import json
import pathlib
import sys

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parents[1] / "src"))

from factorbounds import cli
from factorbounds.data import save_csv
from factorbounds.simulate import (
    census_dataset,
    complete_randomization,
    generate_population,
    load_scenario,
    monte_carlo,
    observe,
)


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("-R", "--replications", type=int, default=500)
    ap.add_argument("--out-dir", default="results")
    args = ap.parse_args()

    root = pathlib.Path(__file__).resolve().parents[1]
    out = root / args.out_dir
    out.mkdir(exist_ok=True)

    config = load_scenario(root / "scenarios" / "appc_like.json")
    report = monte_carlo(config, args.replications)
    (out / "appc_like_mc.json").write_text(report.to_json())

    for tr in report.targets:
        lo, hi = tr.mean_lower, tr.mean_upper
        print(
            f"{tr.label}: mean interval [{lo:.4f}, {hi:.4f}]"
            f" width {tr.mean_width:.4f}"
            f" bounds-coverage {tr.coverage_bounds if tr.coverage_bounds is not None else float('nan'):.3f}"
            f" ci-coverage {tr.coverage_ci:.3f}"
        )

    # one concrete draw through the command-line path
    pop = generate_population(config, rep=0)
    alloc = complete_randomization(config.N, config.resolved_arm_sizes(), config.seed)
    data = observe(pop, alloc)
    csv_path = out / "appc_like_draw.csv"
    save_csv(data, csv_path)

    report_path = out / "appc_like_draw_analysis.json"
    rc = cli.main(
        [
            "analyze",
            str(csv_path),
            "--factor", "1", "--factor", "2",
            "--method", "adjusted,simple,exclusion",
            "--out", str(report_path),
        ]
    )
    if rc != 0:
        raise SystemExit(rc)
    rc = cli.main(["plotdata", str(report_path), "--out", str(out / "appc_like_draw_points.csv")])
    if rc != 0:
        raise SystemExit(rc)

    census = census_dataset(pop)
    save_csv(census, out / "appc_like_census.csv")
    print(f"wrote {out / 'appc_like_mc.json'} and plot points; census draw n={census.n}")
    print(json.dumps({"config_hash": report.to_dict()["config_hash"]}, indent=2))


if __name__ == "__main__":
    main()
