"""Generates the small synthetic credit datasets used by tests and examples."""
import csv
import math
import random
import sys


def make(path, rows, seed):
    rng = random.Random(seed)
    regions = ["north", "south", "east", "west"]
    region_effect = {"north": -0.3, "south": 0.2, "east": 0.0, "west": 0.4}
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["income", "utilisation", "age", "region", "delinquencies", "target"])
        for _ in range(rows):
            income = round(rng.lognormvariate(3.5, 0.5), 2)
            utilisation = round(rng.random(), 3)
            age = rng.randint(18, 80)
            region = rng.choice(regions)
            delinquencies = min(int(rng.expovariate(1.5)), 6)
            logit = (-1.0 - 0.03 * (income - 35) + 2.0 * utilisation
                     + 0.6 * delinquencies + 0.0004 * (age - 45) ** 2 + region_effect[region])
            y = 1 if rng.random() < 1 / (1 + math.exp(-logit)) else 0
            if rng.random() < 0.05:
                income = -1  # not reported
            w.writerow([income, utilisation, age, region, delinquencies, y])


if __name__ == "__main__":
    make(sys.argv[1], int(sys.argv[2]), int(sys.argv[3]))
