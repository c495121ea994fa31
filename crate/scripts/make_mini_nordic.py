"""Generate the bundled mini-Nordic fixture (11 zones, 15 lines, 24 hours).

Run from the repository root:  python3 scripts/make_mini_nordic.py
The output is deterministic.
"""
import csv
import math
import os
import random

OUT = os.path.join("crates", "core", "fixtures", "mini_nordic")
HOURS = 24

ZONES = ["DK1", "DK2", "NO1", "NO2", "NO3", "NO5", "SE1", "SE2", "SE3", "SE4", "FI"]

# id, kind, from, to, rated MW, a, b, c
HVDC = [
    ("Skagerrak", "DK1", "NO2", 1700, 0.000017, 0.0, 8.2405),
    ("KontiSkan", "DK1", "SE3", 740, 0.000035, 0.0, 2.1616),
    ("Storebaelt", "DK1", "DK2", 600, 0.000025, 0.0, 1.7590),
    ("FennoSkan", "SE3", "FI", 1200, 0.000026, 0.0, 4.6490),
]
# AC equivalents: full-load loss about 2.5 % of the rating.
AC = [
    ("DK2-SE4", "DK2", "SE4", 1300),
    ("SE4-SE3", "SE4", "SE3", 2600),
    ("SE3-SE2", "SE3", "SE2", 3000),
    ("SE2-SE1", "SE2", "SE1", 2200),
    ("SE1-FI", "SE1", "FI", 1100),
    ("NO1-SE3", "NO1", "SE3", 1800),
    ("NO1-NO2", "NO1", "NO2", 1800),
    ("NO1-NO5", "NO1", "NO5", 500),
    ("NO2-NO5", "NO2", "NO5", 600),
    ("NO1-NO3", "NO1", "NO3", 500),
    ("NO3-SE2", "NO3", "SE2", 800),
]

# zone, id, cost EUR/MWh, capacity MW
GENERATORS = [
    ("DK1", "DK1-wind-backup", 38.0, 900), ("DK1", "DK1-coal", 44.5, 1600),
    ("DK2", "DK2-chp", 41.0, 700), ("DK2", "DK2-gas", 61.0, 900),
    ("NO1", "NO1-hydro", 17.5, 2600), ("NO1", "NO1-peak", 52.0, 500),
    ("NO2", "NO2-hydro", 14.2, 4200), ("NO2", "NO2-reservoir", 23.8, 1500),
    ("NO3", "NO3-hydro", 16.1, 1900),
    ("NO5", "NO5-hydro", 15.3, 2400),
    ("SE1", "SE1-hydro", 12.4, 2800),
    ("SE2", "SE2-hydro", 13.6, 4800),
    ("SE3", "SE3-nuclear", 9.2, 6500), ("SE3", "SE3-chp", 36.0, 1200), ("SE3", "SE3-gas", 71.0, 800),
    ("SE4", "SE4-chp", 39.5, 600), ("SE4", "SE4-gas", 66.0, 700),
    ("FI", "FI-nuclear", 8.7, 2800), ("FI", "FI-chp", 33.5, 1800), ("FI", "FI-gas", 58.0, 1600),
]
# Expensive reserve in every zone keeps each hour feasible on its own.
GENERATORS += [(z, f"{z}-reserve", 95.0 + 1.5 * k, 1500) for k, z in enumerate(ZONES)]

# Average load MW and wind MW per zone.
LOAD = {"DK1": 2300, "DK2": 1600, "NO1": 3600, "NO2": 3900, "NO3": 2700, "NO5": 1900,
        "SE1": 1100, "SE2": 1700, "SE3": 9800, "SE4": 2600, "FI": 9200}
WIND = {"DK1": 1300, "DK2": 400, "SE3": 700, "SE4": 500, "FI": 600, "NO3": 200}


def main():
    rng = random.Random(2017)
    os.makedirs(OUT, exist_ok=True)

    def write(name, header, rows):
        with open(os.path.join(OUT, name), "w", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(header)
            w.writerows(rows)

    write("zones.csv", ["id"], [[z] for z in ZONES])
    write("generators.csv", ["id", "zone", "cost", "p_min", "p_max"],
          [[g, z, f"{c:.2f}", 0, cap] for z, g, c, cap in GENERATORS])
    lines = [[i, "HVDC", f, t, r, a, b, c] for i, f, t, r, a, b, c in HVDC]
    lines += [[i, "AC", f, t, r, f"{0.025 / r:.3e}", "0", "0"] for i, f, t, r in AC]
    write("interconnectors.csv",
          ["id", "kind", "from_zone", "to_zone", "rated_mw", "quad_a", "quad_b", "quad_c"], lines)

    atc, demand, inj = [], [], []
    for h in range(HOURS):
        day = 0.75 + 0.2 * math.sin(math.pi * (h - 6) / 12) ** 2 if 6 <= h <= 22 else 0.8
        gust = 0.6 + 0.4 * math.cos(2 * math.pi * h / 24)
        for z in ZONES:
            demand.append([h, z, round(LOAD[z] * day * rng.uniform(0.97, 1.03), 1)])
            inj.append([h, z, round(WIND.get(z, 0) * gust * rng.uniform(0.8, 1.2), 1)])
        for l in lines:
            rated = l[4]
            fwd = round(rated * rng.uniform(0.75, 1.0))
            rev = round(rated * rng.uniform(0.75, 1.0))
            atc.append([h, l[0], fwd, rev])
    write("atc.csv", ["hour", "line", "fwd_mw", "rev_mw"], atc)
    write("demand.csv", ["hour", "zone", "mw"], demand)
    write("injections.csv", ["hour", "zone", "mw"], inj)

    with open(os.path.join(OUT, "manifest.toml"), "w") as f:
        f.write('zones = "zones.csv"\ngenerators = "generators.csv"\n'
                'interconnectors = "interconnectors.csv"\natc = "atc.csv"\n'
                'demand = "demand.csv"\ninjections = "injections.csv"\n')


if __name__ == "__main__":
    main()
