"""Plot the distance to the dissipation kernel for the CSVs of a sweep.

Usage: python scripts/plot_sweep.py OUT_DIR [--save FILE]

``OUT_DIR`` is the ``--out`` directory of ``phoct sweep``. Needs matplotlib
(``pip install .[plot]``).
"""

import argparse
from pathlib import Path

import matplotlib.pyplot as plt

from phoct.io import read_trajectory_csv


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("out_dir")
    ap.add_argument("--save", help="write the figure instead of showing it")
    args = ap.parse_args()
    files = sorted(Path(args.out_dir).glob("trajectory_T*.csv"),
                   key=lambda p: float(p.stem.split("_T")[1]))
    if not files:
        raise SystemExit(f"no trajectory_T*.csv in {args.out_dir}")
    fig, (ax_d, ax_u) = plt.subplots(2, 1, sharex=True, figsize=(7, 6))
    for path in files:
        header, data = read_trajectory_csv(path)
        t = data[:, 0]
        label = f"T = {path.stem.split('_T')[1]}"
        ax_d.plot(t / t[-1], data[:, header.index("dist_ker")], label=label)
        ax_u.step(t / t[-1], data[:, header.index("u_1")], where="post", label=label)
    ax_d.set_ylabel("distance to ker(R^1/2 Q)")
    ax_u.set_ylabel("u_1")
    ax_u.set_xlabel("t / T")
    ax_d.legend()
    fig.tight_layout()
    if args.save:
        fig.savefig(args.save, dpi=120)
    else:
        plt.show()


if __name__ == "__main__":
    main()
