"""Generate the synthetic house-price demo dataset in data/houses_demo.csv."""

import argparse

import numpy as np


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--rows", type=int, default=300)
    parser.add_argument("--seed", type=int, default=20240501)
    parser.add_argument("--out", default="data/houses_demo.csv")
    args = parser.parse_args()

    rng = np.random.default_rng(args.seed)
    n = args.rows
    bathrooms = np.clip(np.round(rng.normal(2.1, 0.75, n) * 4) / 4, 0.75, 4.5)
    living = np.clip(np.round(rng.lognormal(0.6, 0.38, n), 2), 0.5, 6.0)
    condition = rng.choice([2, 3, 4, 5], size=n, p=[0.05, 0.6, 0.25, 0.1])
    grade = np.clip(np.round(rng.normal(7.6, 1.1, n)), 5, 13).astype(int)
    distance = np.round(np.clip(rng.gamma(2.2, 5.0, n), 1.0, 32.0), 2)
    age = np.clip(np.round(rng.uniform(5, 110, n)), 5, 110).astype(int)

    price = (
        90_000
        + 185_000 * living
        + 18_000 * bathrooms
        + 60_000 * (grade - 7)
        + 12_000 * (condition - 3)
        - 9_000 * distance
        + 250_000 * np.exp(-distance / 4.0)
        + 600 * np.abs(age - 55)
    )
    price = np.round(np.maximum(price * rng.lognormal(0.0, 0.08, n), 75_000), -2)

    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write("id,bathrooms,living_area,condition,grade,distance_to_downtown,age,price\n")
        for i in range(n):
            fh.write(
                f"h{i + 1:03d},{bathrooms[i]:g},{living[i]:g},{condition[i]},{grade[i]},"
                f"{distance[i]:g},{age[i]},{price[i]:.0f}\n"
            )


if __name__ == "__main__":
    main()
