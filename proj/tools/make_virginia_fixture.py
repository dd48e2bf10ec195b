"""Writes the synthetic statewide fixture used by the workload sweep.

The contest has a relevant margin of exactly 0.053 and a ballot manifest
whose two largest counties roughly match the sizes of Fairfax County and
Virginia Beach. Everything else is filler with deterministic precinct sizes.
"""

import pathlib
import random

OUT = pathlib.Path(__file__).resolve().parent.parent / "data" / "fixtures"
TOTAL = 4_000_000
WINNER, LOSER = 1_974_375, 1_775_625  # (w - l) / (w + l) = 0.053

rng = random.Random(53)
counties = [("Fairfax", 551_000), ("Virginia Beach", 203_000)]
rest = TOTAL - sum(c[1] for c in counties)
others = 38
base = rest // others
for i in range(others):
    size = base if i < others - 1 else rest - base * (others - 1)
    counties.append((f"County {i + 3:02d}", size))

rows = []
for county, ballots in counties:
    left = ballots
    idx = 1
    while left > 0:
        take = min(left, rng.randint(1200, 3200))
        rows.append((county, f"{county.replace(' ', '')}-P{idx:03d}", take))
        left -= take
        idx += 1

with open(OUT / "virginia_manifest.csv", "w") as f:
    f.write("county,container,ballots\n")
    for county, container, n in rows:
        f.write(f"{county},{container},{n}\n")

with open(OUT / "virginia_results.csv", "w") as f:
    f.write("# Synthetic statewide contest, relevant margin 0.053.\n")
    f.write("candidate,votes\n")
    f.write(f"Winner,{WINNER}\nLoser,{LOSER}\n_total_ballots_cast,{TOTAL}\n")
