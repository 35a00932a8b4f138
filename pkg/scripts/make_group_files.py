"""Regenerate the shipped group-definition files in groups/.

The reference Schottky group pairs four equatorial caps of chordal radius 0.1
across the sphere; the two cyclic files carry the doubling map and the unit
translation in normal form.
"""

import json
import pathlib
import sys

import numpy as np

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parents[1] / "src"))

from kleinlab.files import mobius_to_record  # noqa: E402
from kleinlab.mobius import affine, translation  # noqa: E402

OUT = pathlib.Path(__file__).resolve().parents[1] / "groups"

CHORDAL_RADIUS = 0.1
THETA = float(2.0 * np.arcsin(CHORDAL_RADIUS / 2.0))


def cap(center):
    return {"center": list(map(float, center)), "theta": THETA}


def main():
    OUT.mkdir(exist_ok=True)
    schottky = {
        "format": 1,
        "dimension": 2,
        "kind": "schottky",
        "ball_pairs": [
            [cap([1.0, 0.0, 0.0]), cap([-1.0, 0.0, 0.0])],
            [cap([0.0, 1.0, 0.0]), cap([0.0, -1.0, 0.0])],
        ],
        "cusp_ends": [],
        "seed": 7,
        "depths": [4, 5, 6],
        "epsilon0": 0.1,
        "tolerances": {},
    }
    loxodromic = {
        "format": 1,
        "dimension": 2,
        "kind": "cyclic",
        "generators": [mobius_to_record(affine(2, r=2.0))],
        "cusp_ends": [],
        "seed": 7,
        "depths": [4, 5, 6],
        "epsilon0": 0.12,
        "tolerances": {},
    }
    parabolic = {
        "format": 1,
        "dimension": 2,
        "kind": "cyclic",
        "generators": [mobius_to_record(translation([1.0, 0.0]))],
        "cusp_ends": [
            {"n": 2, "m": 1, "R": 1.0, "lattice_basis": [1.0], "vol_K": 1.0}
        ],
        "seed": 7,
        "depths": [4, 5, 6],
        "epsilon0": 0.12,
        "tolerances": {},
    }
    for name, doc in [
        ("reference_schottky.json", schottky),
        ("cyclic_loxodromic.json", loxodromic),
        ("cyclic_parabolic.json", parabolic),
    ]:
        path = OUT / name
        path.write_text(json.dumps(doc, indent=2) + "\n")
        print(f"wrote {path}")


if __name__ == "__main__":
    main()
