"""End-to-end demonstration on the shipped reference Schottky group.

Runs validation, limit-set export, the dimension pipeline, the graph
diagnostics, and the finiteness diagnosis, printing each report summary.
Writes CSV artifacts next to this script under out/.
"""

import pathlib
import sys

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parents[1] / "src"))

from kleinlab import cli  # noqa: E402

HERE = pathlib.Path(__file__).resolve().parent
GROUP = str(HERE.parent / "groups" / "reference_schottky.json")
OUT = HERE / "out"


def run(argv):
    print(f"\n$ kleinlab {' '.join(argv)}")
    code = cli.main(argv)
    print(f"[exit {code}]")
    return code


def main():
    OUT.mkdir(exist_ok=True)
    run(["validate", "--file", GROUP])
    run(["limitset", "--file", GROUP, "--depth", "6",
         "--out", str(OUT / "limit_set.csv")])
    run(["dimension", "--file", GROUP])
    run(["graph", "--file", GROUP, "--depth", "4", "--samples", "4000",
         "--out", str(OUT / "graph.csv")])
    run(["harmonic", "--file", GROUP, "--samples", "100000"])
    run(["diagnose", "--file", GROUP])


if __name__ == "__main__":
    main()
