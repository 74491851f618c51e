"""Convert a NASA battery ``.mat`` file (e.g. ``B0005.mat``) to the long CSV layout.

Only discharge cycles are kept and renumbered from 1.  Usage::

    python demos/convert_nasa_mat.py B0005.mat data/nasa/B0005.csv
"""
import csv
import sys

import numpy as np
from scipy.io import loadmat


def discharge_cycles(path):
    name = path.rsplit("/", 1)[-1].split(".")[0]
    cycles = loadmat(path, simplify_cells=True)[name]["cycle"]
    for c in cycles:
        if c["type"] != "discharge":
            continue
        d = c["data"]
        yield (np.asarray(d["Time"], float), np.asarray(d["Voltage_measured"], float),
               np.asarray(d["Current_measured"], float), np.asarray(d["Temperature_measured"], float))


def main(src, dst):
    n = 0
    with open(dst, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["cycle", "time_s", "voltage_v", "current_a", "temperature_c"])
        for n, (t, v, i, temp) in enumerate(discharge_cycles(src), start=1):
            keep = np.concatenate([[True], np.diff(t) > 0])  # drop repeated time stamps
            for row in zip(t[keep], v[keep], i[keep], temp[keep]):
                w.writerow([n, *map(repr, map(float, row))])
    print(f"wrote {n} discharge cycles to {dst}")


if __name__ == "__main__":
    if len(sys.argv) != 3:
        sys.exit(__doc__)
    main(sys.argv[1], sys.argv[2])
