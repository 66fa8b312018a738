#!/usr/bin/env python3
"""Render figures from a `rtaprop compare` output directory.

    python3 scripts/plot_compare.py OUT_DIR [--save figures/]

Needs numpy and matplotlib. Reads only the CSVs the CLI writes; nothing is recomputed.
"""
import argparse
import csv
import glob
import math
import os

import matplotlib.pyplot as plt
import numpy as np


def table(path):
    with open(path, newline="") as f:
        rows = list(csv.DictReader(f))
    return {k: np.array([float(r[k]) for r in rows]) for k in rows[0]} if rows else {}


def position_std(trace):
    return np.sqrt(trace["var_x"] + trace["var_y"] + trace["var_z"])


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("out_dir")
    ap.add_argument("--save", help="write PNGs here instead of showing windows")
    args = ap.parse_args()
    d = args.out_dir

    blended = table(os.path.join(d, "trace_blended.csv"))
    gated = table(os.path.join(d, "trace_gated.csv"))
    mc_path = os.path.join(d, "trace_monte_carlo.csv")

    fig1, ax = plt.subplots()
    ax.plot(blended["t"], position_std(blended), label="sigmoid-blended")
    ax.plot(gated["t"], position_std(gated), label="gated at 2/3")
    if os.path.exists(mc_path):
        mc = table(mc_path)
        ax.plot(mc["t"], position_std(mc), ":", label="Monte Carlo")
    ax.set_xlabel("plan time (s)")
    ax.set_ylabel("position std (m)")
    ax.legend()

    fig2, ax = plt.subplots()
    env = table(os.path.join(d, "ulpa_envelope.csv"))
    ax.fill_between(env["t"], -env["half_width"], env["half_width"], alpha=0.2, label="uLPA envelope")
    for name in ("blended", "gated"):
        b = table(os.path.join(d, f"bounds_{name}.csv"))
        ax.errorbar(b["nominal_rta"] - b["nominal_rta"][0], np.zeros_like(b["nominal_rta"]),
                    yerr=b["upper"] - b["nominal_rta"], fmt="o", capsize=4, label=f"{name} bounds")
    ax.set_xlabel("plan time (s)")
    ax.set_ylabel("arrival window half-width (s)")
    ax.legend()

    arrivals = sorted(glob.glob(os.path.join(d, "arrivals_wp*.csv")))
    figs = [("std", fig1), ("bounds", fig2)]
    if arrivals:
        cols = min(3, len(arrivals))
        fig3, axes = plt.subplots(math.ceil(len(arrivals) / cols), cols, squeeze=False)
        for ax, path in zip(axes.flat, arrivals):
            a = table(path).get("arrival_s", np.array([]))
            ax.hist(a, bins=50)
            ax.set_title(os.path.basename(path)[:-4])
        fig3.tight_layout()
        figs.append(("arrivals", fig3))

    if args.save:
        os.makedirs(args.save, exist_ok=True)
        for name, fig in figs:
            fig.savefig(os.path.join(args.save, f"{name}.png"), dpi=120)
    else:
        plt.show()


if __name__ == "__main__":
    main()
