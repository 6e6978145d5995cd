#!/usr/bin/env python3
"""Plot the CSV tables produced by `llsim experiment`.

Usage: plot_figures.py RESULTS_DIR [OUT_DIR]

Reads convergence.csv / understanding.csv / icl.csv (whichever exist) and
writes one PNG per table. Dev convenience only; the CSVs are the product.
"""

import csv
import sys
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def plot_convergence(rows, out):
    n = [int(r["n_symbols"]) for r in rows]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.5))
    ax1.semilogx(n, [float(r["cross_entropy_model"]) for r in rows], "o-", label="model")
    ax1.semilogx(n, [float(r["cross_entropy_oracle"]) for r in rows], "--", label="oracle rate")
    ax1.set_xlabel("training symbols")
    ax1.set_ylabel("cross-entropy (nats/symbol)")
    ax1.legend()
    ax2.loglog(n, [float(r["tv_gap"]) for r in rows], "o-")
    ax2.set_xlabel("training symbols")
    ax2.set_ylabel("mean TV gap to oracle")
    fig.tight_layout()
    fig.savefig(out, dpi=150)


def plot_understanding(rows, out):
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for backend, marker in (("oracle", "o"), ("trained", "s")):
        pts = [
            (float(r["measured_epsilon"]), float(r["kl_value"]))
            for r in rows
            if r["backend"] == backend and r["method"] == "exact_dp"
        ]
        if pts:
            ax.plot(*zip(*sorted(pts)), marker + "-", label=backend)
    ax.set_xlabel("mean message ambiguity")
    ax.set_ylabel("KL divergence (nats)")
    ax.legend()
    fig.tight_layout()
    fig.savefig(out, dpi=150)


def plot_icl(rows, out):
    fig, ax = plt.subplots(figsize=(5, 3.5))
    curves = {}
    for r in rows:
        if r["boundary"] != "tied":
            continue
        curves.setdefault(float(r["eta"]), []).append((int(r["m"]), float(r["kl_value"])))
    for eta, pts in sorted(curves.items()):
        ms, kls = zip(*sorted(pts))
        ax.semilogy(ms, [max(k, 1e-18) for k in kls], "o-", label=f"eta={eta:.3f}")
    ax.set_xlabel("example messages in prompt")
    ax.set_ylabel("KL divergence (nats)")
    ax.legend()
    fig.tight_layout()
    fig.savefig(out, dpi=150)


def main():
    if len(sys.argv) < 2:
        sys.exit(__doc__)
    results = Path(sys.argv[1])
    out_dir = Path(sys.argv[2]) if len(sys.argv) > 2 else results
    out_dir.mkdir(parents=True, exist_ok=True)
    plotted = []
    for name, plot in (
        ("convergence", plot_convergence),
        ("understanding", plot_understanding),
        ("icl", plot_icl),
    ):
        path = results / f"{name}.csv"
        if path.exists():
            plot(read_rows(path), out_dir / f"{name}.png")
            plotted.append(name)
    if not plotted:
        sys.exit(f"no experiment CSVs found in {results}")
    print("plotted:", ", ".join(plotted))


if __name__ == "__main__":
    main()
