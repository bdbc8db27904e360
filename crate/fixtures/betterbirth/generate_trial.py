"""Regenerates trial.csv: a synthetic three-stage trial shaped like the BetterBirth data.

Stage sizes are 113, 2143 and 5086 births. Early stages are pre/post pilots (each center
contributes a control period and an intervention period); stage 3 has 15 control and
15 intervention centers, 5 of the latter with a pre-period. Outcomes are the fraction of
measured birth practices performed (14, 19 and 18 measured per stage), drawn binomially
around the logit model in fit.json. a_1 is launch days, a_2 coaching visits, z_1 monthly
birth volume per 100.

    python3 generate_trial.py  # writes trial.csv next to this file
"""

import csv
import json
import os

import numpy as np

HERE = os.path.dirname(os.path.abspath(__file__))
SEED = 20151022
STAGE_SIZES = (113, 2143, 5086)
MEASURED = (14, 19, 18)


def split(total, parts, rng):
    w = rng.uniform(0.7, 1.3, parts)
    n = np.floor(w / w.sum() * total).astype(int)
    n[: total - n.sum()] += 1
    return n


def main():
    rng = np.random.default_rng(SEED)
    fit = json.load(open(os.path.join(HERE, "fit.json")))
    b = fit["beta_hat"]
    beta = np.array([b["intercept"], *b["effects"], *b["covariate_effects"]])

    periods = []  # (stage, center_id, arm, a1, a2, z)
    pilots = {1: 2, 2: 4}
    for stage, centers in pilots.items():
        for j in range(centers):
            z = round(rng.uniform(0.8, 3.0), 2)
            a = (float(rng.integers(1, 4)), float(rng.integers(8, 25)))
            periods.append((stage, f"p{stage}{j}-pre", "control", 0.0, 0.0, z))
            periods.append((stage, f"p{stage}{j}-post", "intervention", *a, z))
    for j in range(15):
        z = round(rng.uniform(0.8, 3.0), 2)
        periods.append((3, f"c{j}", "control", 0.0, 0.0, z))
    for j in range(15):
        z = round(rng.uniform(0.8, 3.0), 2)
        a = (float(rng.integers(2, 6)), float(rng.integers(20, 41)))
        if j < 5:
            periods.append((3, f"i{j}-pre", "control", 0.0, 0.0, z))
        periods.append((3, f"i{j}", "intervention", *a, z))

    rows = []
    for stage, total, m in zip((1, 2, 3), STAGE_SIZES, MEASURED):
        mine = [p for p in periods if p[0] == stage]
        for (s, cid, arm, a1, a2, z), n in zip(mine, split(total, len(mine), rng)):
            eta = beta @ np.array([1.0, a1, a2, z])
            mu = 1.0 / (1.0 + np.exp(-eta))
            for k in rng.binomial(m, mu, n):
                rows.append((s, cid, arm, round(float(k) / m, 6), a1, a2, float(z)))

    with open(os.path.join(HERE, "trial.csv"), "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["stage", "center_id", "arm", "y", "a_1", "a_2", "z_1"])
        for s, cid, arm, y, a1, a2, z in rows:
            w.writerow([s, cid, arm, repr(y), repr(a1), repr(a2), repr(z)])


if __name__ == "__main__":
    main()
