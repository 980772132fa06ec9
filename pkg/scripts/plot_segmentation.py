#!/usr/bin/env python3
"""Plot a segmentation: feature signal, threshold, envelope and labeled events.

Reads the ``<id>.plot.csv`` written by ``pcgkit segment`` or ``pcgkit pipeline``.
Needs matplotlib (not a package dependency).

    python3 scripts/plot_segmentation.py report/segmentation/synth_N_10.plot.csv -o n10.png
"""
import argparse
import csv

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def read(path):
    with open(path, newline="") as f:
        rows = list(csv.DictReader(f))
    col = lambda k: np.array([float(r[k]) for r in rows])
    return col("time_s"), col("feature"), col("threshold"), col("envelope"), [r["event"] for r in rows]


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawTextHelpFormatter)
    ap.add_argument("plot_csv")
    ap.add_argument("-o", "--out", help="image path (default: plot_csv with .png)")
    ap.add_argument("--start", type=float, default=0.0)
    ap.add_argument("--end", type=float, default=None)
    args = ap.parse_args()

    t, feat, thr, env, ev = read(args.plot_csv)
    keep = (t >= args.start) & (t <= (args.end if args.end is not None else t[-1]))
    fig, (a1, a2) = plt.subplots(2, 1, sharex=True, figsize=(11, 5))
    a1.plot(t[keep], env[keep], lw=0.8, color="0.3")
    a1.set_ylabel("envelope")
    a2.plot(t[keep], feat[keep], lw=0.8, label="feature")
    if np.isfinite(thr).any():
        a2.plot(t[keep], thr[keep], lw=0.8, ls="--", label="threshold")
    for i in np.flatnonzero(keep):
        if ev[i]:
            color = "tab:red" if ev[i] == "S1" else "tab:green"
            for ax in (a1, a2):
                ax.axvline(t[i], color=color, lw=0.6, alpha=0.7)
            a2.text(t[i], feat[keep].max(), ev[i], color=color, fontsize=7, ha="center")
    a2.set_xlabel("time (s)")
    a2.legend(loc="upper right", fontsize=8)
    fig.tight_layout()
    out = args.out or args.plot_csv.rsplit(".csv", 1)[0] + ".png"
    fig.savefig(out, dpi=120)
    print(f"wrote {out}")


if __name__ == "__main__":
    main()
