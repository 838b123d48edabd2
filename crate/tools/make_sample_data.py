#!/usr/bin/env python3
"""Generate the bundled NSW/PSID-format sample files.

The files are synthetic stand-ins that follow the public NSW/PSID column
layout (treat, age, education, black, hispanic, married, nodegree, re74,
re75, re78). The trial file carries 185 treated and 260 control rows; the
external file carries 123 untreated rows, a mix of comparable and
structurally different individuals.
"""
import numpy as np

rng = np.random.default_rng(20240817)

COLS = ["treat", "age", "education", "black", "hispanic", "married", "nodegree", "re74", "re75", "re78"]


def earnings(rng, n, zero_p, log_mean, log_sd):
    z = rng.random(n) < zero_p
    e = np.exp(rng.normal(log_mean, log_sd, n))
    e[z] = 0.0
    return np.round(e, 2)


def nsw_like(rng, n, treated):
    age = rng.integers(17, 49, n)
    edu = np.clip(rng.normal(10.3, 1.8, n).round(), 3, 16).astype(int)
    black = (rng.random(n) < 0.80).astype(int)
    hisp = ((rng.random(n) < 0.35) & (black == 0)).astype(int)
    married = (rng.random(n) < 0.17).astype(int)
    nodegree = ((edu < 12) | (rng.random(n) < 0.05)).astype(int)
    re74 = earnings(rng, n, 0.70, 7.9, 1.0)
    re75 = earnings(rng, n, 0.62, 7.8, 1.0)
    base = (
        400.0
        + 55.0 * age
        + 310.0 * edu
        + 0.32 * re74
        + 0.40 * re75
        + 850.0 * married
        - 780.0 * nodegree
        - 350.0 * black
        - 150.0 * hisp
    )
    effect = 1750.0 if treated else 0.0
    y = np.maximum(0.0, base + effect + rng.normal(0.0, 2800.0, n))
    return np.column_stack([
        np.full(n, 1 if treated else 0),
        age, edu, black, hisp, married, nodegree, re74, re75, np.round(y, 2),
    ])


def psid_like(rng, n_similar, n_shifted):
    similar = nsw_like(rng, n_similar, treated=False)
    similar[:, 0] = 0
    n = n_shifted
    age = rng.integers(25, 56, n)
    edu = np.clip(rng.normal(12.5, 2.5, n).round(), 5, 17).astype(int)
    black = (rng.random(n) < 0.25).astype(int)
    hisp = ((rng.random(n) < 0.06) & (black == 0)).astype(int)
    married = (rng.random(n) < 0.75).astype(int)
    nodegree = ((edu < 12) | (rng.random(n) < 0.03)).astype(int)
    re74 = earnings(rng, n, 0.10, 9.7, 0.7)
    re75 = earnings(rng, n, 0.10, 9.7, 0.7)
    base = (
        6500.0
        + 90.0 * age
        + 420.0 * edu
        + 0.45 * re74
        + 0.50 * re75
        + 1400.0 * married
        - 650.0 * nodegree
        - 300.0 * black
        - 120.0 * hisp
    )
    y = np.maximum(0.0, base + rng.normal(0.0, 5200.0, n))
    shifted = np.column_stack([
        np.zeros(n), age, edu, black, hisp, married, nodegree, re74, re75, np.round(y, 2),
    ])
    rows = np.vstack([similar, shifted])
    rng.shuffle(rows)
    return rows


def write(path, rows):
    with open(path, "w") as f:
        f.write(",".join(COLS) + "\n")
        for row in rows:
            cells = []
            for j, v in enumerate(row):
                if j <= 6:
                    cells.append(str(int(v)))
                else:
                    cells.append(f"{v:.2f}")
            f.write(",".join(cells) + "\n")


trial = np.vstack([nsw_like(rng, 185, True), nsw_like(rng, 260, False)])
write("data/nsw_format_trial.csv", trial)
pool = psid_like(rng, 68, 55)
write("data/psid_format_pool.csv", pool)
print("trial rows:", len(trial), "pool rows:", len(pool))
