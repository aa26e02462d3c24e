"""Per-flow histograms of the case summaries, as CSV tables and SVG charts."""

from __future__ import annotations

import csv
import io
from collections import defaultdict
from pathlib import Path
from typing import Sequence

import numpy as np

from .quantities import CaseSummary

QUANTITIES = ("delta_v", "v_max", "dp_star")
HIST_HEADER = ("quantity", "flow", "bin_lo", "bin_hi", "count")


def _flow_key(mdot: float) -> float:
    return float(f"{mdot:.5g}")


def distribution_summary(summaries: Sequence[CaseSummary], bins: int = 50) -> list[tuple]:
    """Rows ``(quantity, flow, bin_lo, bin_hi, count)``.

    Bin edges are shared across flow rates for each quantity so histograms at
    different flows are directly comparable. A quantity with a single distinct
    value gets one bin holding every case.
    """
    if not summaries:
        raise ValueError("no summaries")
    by_flow = defaultdict(list)
    for s in summaries:
        by_flow[_flow_key(s.mdot)].append(s)
    rows = []
    for qname in QUANTITIES:
        allv = np.array([getattr(s, qname) for s in summaries], dtype=np.float64)
        lo, hi = float(allv.min()), float(allv.max())
        for flow in sorted(by_flow):
            vals = np.array([getattr(s, qname) for s in by_flow[flow]], dtype=np.float64)
            if lo == hi:
                rows.append((qname, flow, lo, hi, len(vals)))
                continue
            counts, edges = np.histogram(vals, bins=bins, range=(lo, hi))
            rows += [(qname, flow, float(edges[i]), float(edges[i + 1]), int(counts[i])) for i in range(bins)]
    return rows


def flow_means(summaries: Sequence[CaseSummary], quantity: str) -> list[tuple[float, float]]:
    """``(flow, mean)`` pairs sorted by flow."""
    by_flow = defaultdict(list)
    for s in summaries:
        by_flow[_flow_key(s.mdot)].append(getattr(s, quantity))
    return [(f, float(np.mean(by_flow[f]))) for f in sorted(by_flow)]


def histogram_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(HIST_HEADER)
    for q, f, lo, hi, c in rows:
        w.writerow([q, f"{f:.5g}", repr(lo), repr(hi), c])
    return buf.getvalue()


def write_histograms(rows, path) -> None:
    Path(path).write_text(histogram_csv(rows))


def write_histogram_svg(rows, quantity: str, path) -> None:
    """Stacked-per-flow bar chart of one quantity, written without a display."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    matplotlib.rcParams["svg.hashsalt"] = "aneuflow"
    sel = [r for r in rows if r[0] == quantity]
    if not sel:
        raise ValueError(f"no rows for {quantity!r}")
    flows = sorted({r[1] for r in sel})
    fig, axes = plt.subplots(len(flows), 1, figsize=(5, 1.4 * len(flows) + 0.6), sharex=True, squeeze=False)
    for ax, f in zip(axes[:, 0], flows):
        fr = [r for r in sel if r[1] == f]
        lo = np.array([r[2] for r in fr])
        width = np.array([max(r[3] - r[2], 1e-12) for r in fr])
        ax.bar(lo, [r[4] for r in fr], width=width, align="edge", color="0.35")
        ax.set_ylabel(f"{f:g} kg/s", fontsize=7)
        ax.tick_params(labelsize=7)
    axes[-1, 0].set_xlabel(quantity)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
