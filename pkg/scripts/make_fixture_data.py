"""Regenerate the small fixture datasets under data/.

Writes the four-unit two-factor population, its census CSV, and a
variant with a defier so the assumption-check error paths have a file
to point at.  Everything here is deterministic; re-running overwrites
in place.
"""

import pathlib
import sys

import numpy as np

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parents[1] / "src"))

from factorbounds.data import ObservedDataset, save_csv
from factorbounds.population import fixture_p4, save_population
from factorbounds.simulate import census_dataset


def main() -> None:
    out = pathlib.Path(__file__).resolve().parents[1] / "data"
    out.mkdir(exist_ok=True)

    pop = fixture_p4()
    save_population(pop, out / "p4_population.json")
    data = census_dataset(pop)
    save_csv(data, out / "p4_census.csv")

    # same design, but unit 0 defies on factor 1 in the (z2=-1) context
    uptake = pop.uptake.copy()
    uptake[0, 0, 0] = 1
    uptake[0, 1, 0] = -1
    bad = type(pop)(design=pop.design, uptake=uptake, outcome=pop.outcome)
    save_population(bad, out / "p4_defier.json")
    save_csv(census_dataset(bad), out / "p4_defier_census.csv")

    # a binary-coded copy of the census file, for exercising --binary-coding
    rows = []
    header = "z1,z2,d1,d2,y"
    z = data.assignment_rows()
    for i in range(data.n):
        cells = [(z[i, k] + 1) // 2 for k in range(2)]
        cells += [(data.uptake[i, k] + 1) // 2 for k in range(2)]
        rows.append(",".join(str(int(c)) for c in cells) + "," + repr(float(data.outcome[i])))
    (out / "p4_census_binary.csv").write_text(header + "\n" + "\n".join(rows) + "\n")

    print(f"wrote fixtures to {out}")


if __name__ == "__main__":
    main()
