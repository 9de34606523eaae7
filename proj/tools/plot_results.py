#!/usr/bin/env python3
"""Render plots from an experiment output directory.

Reads the CSVs written by `emx experiment` (spectrum.csv, trajectory_lambda1_*.csv,
efficiency.csv, ranksweep.csv) and writes one PNG per table next to them, or to
--out-dir when given.
"""
import argparse
import pathlib
import sys

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import pandas as pd


def plot_spectrum(df: pd.DataFrame, path: pathlib.Path) -> None:
    fig, ax = plt.subplots(figsize=(6, 4))
    for family, grp in df.groupby("family"):
        grp = grp.sort_values("index")
        ax.errorbar(grp["index"], grp["mean_sigma"], yerr=grp["std_sigma"],
                    marker="o", markersize=3, capsize=2, label=family)
    ax.set_xlabel("singular value index")
    ax.set_ylabel(r"mean $\sigma_i / \sigma_1$")
    ax.set_yscale("symlog", linthresh=1e-10)
    ax.set_title("singular spectrum of the matricized top eigenvector")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_trajectory(df: pd.DataFrame, path: pathlib.Path, label: str) -> None:
    fig, ax = plt.subplots(figsize=(6, 4))
    for (method, init), grp in df.groupby(["method", "init"]):
        grp = grp.sort_values("t")
        ax.plot(grp["t"], grp["mean_log_error"], marker=".", label=f"{method} ({init})")
    ax.set_xlabel("iteration")
    ax.set_ylabel("mean log estimation error")
    ax.set_title(f"error trajectory ({label})")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_efficiency(df: pd.DataFrame, path: pathlib.Path) -> None:
    lambdas = sorted(df["lambda1"].unique())
    fig, axes = plt.subplots(1, len(lambdas), figsize=(4.5 * len(lambdas), 4), squeeze=False)
    for ax, lam in zip(axes[0], lambdas):
        sub = df[df["lambda1"] == lam]
        for (method, init), grp in sub.groupby(["method", "init"]):
            grp = grp.sort_values("n")
            ax.errorbar(grp["n"], grp["mean_error"], yerr=grp["std_error"],
                        marker="o", markersize=3, capsize=2, label=f"{method} ({init})")
        ax.set_xscale("log")
        ax.set_yscale("log")
        ax.set_xlabel("sample size n")
        ax.set_ylabel("mean estimation error")
        ax.set_title(f"lambda1 = {lam:g}")
        ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_ranksweep(df: pd.DataFrame, path: pathlib.Path) -> None:
    fig, ax = plt.subplots(figsize=(6, 4))
    sweep = df[df["method"] != "power"].sort_values("k")
    ax.errorbar(sweep["k"], sweep["mean_error"], yerr=sweep["std_error"],
                marker="o", capsize=2, label="rank-truncated")
    power = df[df["method"] == "power"]
    if not power.empty:
        ax.axhline(power["mean_error"].iloc[0], color="gray", linestyle="--",
                   label="power method")
    ax.set_xscale("log", base=2)
    ax.set_xlabel("truncation rank k")
    ax.set_ylabel("mean estimation error")
    ax.set_title("error vs truncation rank")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("results_dir", type=pathlib.Path, help="directory written by `emx experiment`")
    ap.add_argument("--out-dir", type=pathlib.Path, default=None,
                    help="where to write PNGs (default: alongside the CSVs)")
    args = ap.parse_args()

    out_dir = args.out_dir or args.results_dir
    out_dir.mkdir(parents=True, exist_ok=True)

    made = 0
    for csv in sorted(args.results_dir.glob("*.csv")):
        df = pd.read_csv(csv)
        png = out_dir / (csv.stem + ".png")
        if csv.stem == "spectrum":
            plot_spectrum(df, png)
        elif csv.stem.startswith("trajectory"):
            plot_trajectory(df, png, csv.stem.replace("trajectory_", "").replace("_", " = "))
        elif csv.stem == "efficiency":
            plot_efficiency(df, png)
        elif csv.stem == "ranksweep":
            plot_ranksweep(df, png)
        else:
            print(f"skipping unrecognized table {csv.name}")
            continue
        print(f"wrote {png}")
        made += 1

    if made == 0:
        print(f"no experiment CSVs found in {args.results_dir}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
