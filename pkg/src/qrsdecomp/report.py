"""Presentation tables and figures from raw decomposition output.

Raw CSVs keep full precision and natural units; this module applies the
times-100 display scaling, rounds for print, and renders the figures.
"""

from __future__ import annotations

import csv
import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

COMPONENT_COLS = ("total", "EC", "CC", "SC", "PC")


def _fmt6(value) -> str:
    return "%.6g" % float(value)


def read_table(path):
    """Read a CSV written by the CLI, skipping the hash comment line."""
    with open(path) as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    rows = list(csv.DictReader(lines))
    return rows


def write_presentation_table(rows, path, header_comment):
    """Times-100 scaled, 6-significant-digit view of decomposition rows."""
    fields = ["stratum", "statistic", "tau"] + list(COMPONENT_COLS)
    with open(path, "w", newline="") as fh:
        fh.write(header_comment)
        w = csv.writer(fh)
        w.writerow(fields)
        for row in rows:
            out = [row.get("stratum", ""), row["statistic"], row.get("tau", "")]
            for colname in COMPONENT_COLS:
                raw = row.get(colname, "")
                if raw in ("", None):
                    out.append("")
                else:
                    out.append(_fmt6(100.0 * float(raw)))
            w.writerow(out)


def _quantile_sweep(rows, statistic):
    picked = [(float(r["tau"]), r) for r in rows
              if r["statistic"] == statistic and r.get("tau")]
    return sorted(picked)


def plot_quantile_components(rows, statistic, path, title):
    """Line plot of each decomposition component across quantile levels."""
    sweep = _quantile_sweep(rows, statistic)
    if not sweep:
        return False
    taus = [t for t, _ in sweep]
    fig, ax = plt.subplots(figsize=(7, 4.5))
    for name in COMPONENT_COLS:
        vals = [r.get(name, "") for _, r in sweep]
        if any(v in ("", None) for v in vals):
            continue
        ax.plot(taus, [float(v) for v in vals],
                marker="o", markersize=3, label=name)
    ax.axhline(0.0, color="0.6", lw=0.8)
    ax.set_xlabel("quantile level")
    ax.set_ylabel("gap component")
    ax.set_title(title)
    ax.legend(frameon=False, ncol=len(COMPONENT_COLS))
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return True


def plot_mean_components(rows, path):
    """Grouped bars of the scalar decompositions."""
    scalar = [r for r in rows if not r.get("tau")]
    if not scalar:
        return False
    fig, ax = plt.subplots(figsize=(7, 4.5))
    labels = []
    series = {name: [] for name in COMPONENT_COLS}
    for r in scalar:
        labels.append(r["statistic"])
        for name in COMPONENT_COLS:
            raw = r.get(name, "")
            series[name].append(float(raw) if raw not in ("", None) else 0.0)
    x = np.arange(len(labels))
    width = 0.15
    for i, name in enumerate(COMPONENT_COLS):
        ax.bar(x + (i - 2) * width, series[name], width, label=name)
    ax.axhline(0.0, color="0.6", lw=0.8)
    ax.set_xticks(x)
    ax.set_xticklabels(labels, rotation=20, ha="right", fontsize=8)
    ax.set_ylabel("gap component")
    ax.set_title("scalar decompositions")
    ax.legend(frameon=False, ncol=len(COMPONENT_COLS))
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return True


def plot_kendall(rows, path):
    """Bar chart of the per-group rank-correlation estimates."""
    if not rows:
        return False
    fig, ax = plt.subplots(figsize=(5, 4))
    labels = ["%s g%s" % (r.get("stratum", "") or "all", r["group"])
              for r in rows]
    vals = [float(r["kendall_tau"]) for r in rows]
    ax.bar(np.arange(len(vals)), vals, color="tab:blue")
    ax.axhline(0.0, color="0.6", lw=0.8)
    ax.set_xticks(np.arange(len(vals)))
    ax.set_xticklabels(labels, rotation=20, ha="right", fontsize=8)
    ax.set_ylabel("Kendall tau")
    ax.set_title("selection dependence by group")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return True


def render(out_dir, decomp_path, kendall_path=None, header_comment="# \n"):
    """Write all presentation artifacts; returns the list of files made."""
    os.makedirs(out_dir, exist_ok=True)
    made = []
    rows = read_table(decomp_path)
    table = os.path.join(out_dir, "presentation_decompositions.csv")
    write_presentation_table(rows, table, header_comment)
    made.append(table)
    for stat, fname in (("quantile_participants", "components_participants.png"),
                        ("quantile_population", "components_population.png"),
                        ("potential_quantile", "components_potential.png")):
        path = os.path.join(out_dir, fname)
        if plot_quantile_components(rows, stat, path,
                                    stat.replace("_", " ")):
            made.append(path)
    path = os.path.join(out_dir, "components_means.png")
    if plot_mean_components(rows, path):
        made.append(path)
    if kendall_path is not None and os.path.exists(kendall_path):
        path = os.path.join(out_dir, "kendall.png")
        if plot_kendall(read_table(kendall_path), path):
            made.append(path)
    return made
