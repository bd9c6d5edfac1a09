"""Regenerate the synthetic fixture in data/synthetic_elite.

The fixture mirrors the layout of the French financial elite data (28
persons, 13 named binary attributes, undirected friendship network) but is
drawn from the joint latent space model with two planted groups, so it
contains no real data.
"""
import argparse
from pathlib import Path

import numpy as np
from scipy.special import expit

from aplsm.io import write_matrix_csv
from aplsm.model import attribute_logits, social_logits

ATTRIBUTE_NAMES = [
    "SciencePo", "Polytechniqu", "University", "ENA", "Inspection",
    "Cabinet", "SocialRegister", "FatherStatus", "Particule", "Socialist",
    "Capitalist", "Centrist", "Age",
]
N_PERSONS = 28


def make_fixture(seed=20240101):
    rng = np.random.default_rng(seed)
    # two groups of persons, attributes placed near one group or the other
    group = np.repeat([0, 1], N_PERSONS // 2)
    centres = np.array([[-1.0, 0.0], [1.0, 0.0]])
    u = centres[group] + 0.6 * rng.standard_normal((N_PERSONS, 2))
    side = np.array([1, 0, 0, 0, 0, 0, 1, 1, 1, 0, 1, 0, 1])
    v = centres[side] + 0.8 * rng.standard_normal((len(ATTRIBUTE_NAMES), 2))
    p = expit(social_logits(u, 0.5))
    y = np.triu((rng.random(p.shape) < p).astype(float), 1)
    y = y + y.T
    x = (rng.random((N_PERSONS, len(ATTRIBUTE_NAMES)))
         < expit(attribute_logits(u, v, 0.5))).astype(float)
    return y, x


def main():
    parser = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    parser.add_argument("--out", default=str(Path(__file__).resolve().parents[1]
                                             / "data" / "synthetic_elite"))
    parser.add_argument("--seed", type=int, default=20240101)
    args = parser.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    y, x = make_fixture(args.seed)
    write_matrix_csv(out / "y_i.csv", y.astype(int))
    write_matrix_csv(out / "y_ia.csv", x.astype(int), ATTRIBUTE_NAMES)
    print(f"wrote {out}/y_i.csv and {out}/y_ia.csv")


if __name__ == "__main__":
    main()
