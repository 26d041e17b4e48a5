#!/usr/bin/env python3
"""Encode the 2000 on-time performance file (Data Expo 2009, Harvard
Dataverse) as a numeric CSV for a probit model of flight diversion.

Columns: diverted, 11 month dummies (February..December), 6 weekday dummies
(Tuesday..Sunday), 10 carrier dummies (AQ is the reference), scheduled
departure and arrival times (hhmm), distance, and the (x, y, z) unit-sphere
coordinates of the origin and destination airports. With the intercept that
`chunkglm fit` adds, the model matrix has 37 columns.

    python3 scripts/flights_encode.py 2000.csv airports.csv flights2000.csv
    chunkglm fit --data flights2000.csv --response diverted \\
        --covariates "$(head -1 flights2000.csv | cut -d, -f2-)" \\
        --family binomial --link probit --estimator mbr --chunk-size 10000 --output text

Pass --run to also fit ML (15 and 20 iterations), mBR and mJPL (one- and
two-pass) with the binary given by --chunkglm.
"""
import argparse
import csv
import math
import subprocess
import sys

CARRIERS = ["AA", "AQ", "AS", "CO", "DL", "HP", "NW", "TW", "UA", "US", "WN"]
REFERENCE_CARRIER = "AQ"


def airport_coordinates(path):
    coords = {}
    with open(path, newline="", encoding="latin-1") as f:
        for row in csv.DictReader(f):
            lat = math.radians(float(row["lat"]))
            lon = math.radians(float(row["long"]))
            coords[row["iata"]] = (
                math.cos(lat) * math.cos(lon),
                math.cos(lat) * math.sin(lon),
                math.sin(lat),
            )
    return coords


def header():
    cols = ["diverted"]
    cols += [f"month{m}" for m in range(2, 13)]
    cols += [f"wday{d}" for d in range(2, 8)]
    cols += [f"carrier{c}" for c in CARRIERS if c != REFERENCE_CARRIER]
    cols += ["crs_dep", "crs_arr", "distance"]
    cols += ["dep_x", "dep_y", "dep_z", "arr_x", "arr_y", "arr_z"]
    return cols


def encode(flights, airports, out):
    coords = airport_coordinates(airports)
    written = skipped = 0
    with open(flights, newline="", encoding="latin-1") as f, open(out, "w", newline="") as g:
        w = csv.writer(g)
        w.writerow(header())
        for row in csv.DictReader(f):
            try:
                origin = coords[row["Origin"]]
                dest = coords[row["Dest"]]
                month = int(row["Month"])
                wday = int(row["DayOfWeek"])
                carrier = row["UniqueCarrier"]
                values = [int(row["Diverted"])]
                values += [int(month == m) for m in range(2, 13)]
                values += [int(wday == d) for d in range(2, 8)]
                values += [int(carrier == c) for c in CARRIERS if c != REFERENCE_CARRIER]
                values += [int(row["CRSDepTime"]), int(row["CRSArrTime"]), int(row["Distance"])]
                values += [*origin, *dest]
            except (KeyError, ValueError):
                skipped += 1
                continue
            w.writerow(values)
            written += 1
    print(f"wrote {written} rows, skipped {skipped}", file=sys.stderr)


def fit(binary, data):
    covariates = ",".join(header()[1:])
    common = ["--data", data, "--response", "diverted", "--covariates", covariates,
              "--family", "binomial", "--link", "probit", "--chunk-size", "10000",
              "--epsilon", "1e-3", "--output", "text"]
    # ML does not converge on these data; report it at two iteration budgets.
    runs = [["--estimator", "ml", "--max-iter", budget] for budget in ("15", "20")]
    runs += [["--estimator", e, "--variant", v]
             for e in ("mbr", "mjpl") for v in ("one-pass", "two-pass")]
    for extra in runs:
        print(" ".join(extra), flush=True)
        subprocess.run([binary, "fit", *common, *extra], check=False)


def main():
    parser = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    parser.add_argument("flights")
    parser.add_argument("airports")
    parser.add_argument("output")
    parser.add_argument("--run", action="store_true")
    parser.add_argument("--chunkglm", default="build/chunkglm")
    args = parser.parse_args()
    encode(args.flights, args.airports, args.output)
    if args.run:
        fit(args.chunkglm, args.output)


if __name__ == "__main__":
    main()
