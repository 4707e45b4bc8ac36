"""CSV and SVG emission for sweep results.

CSV schema, version 1. Two comment lines (``#``) carry the schema version
and the provenance block, then one header row and one row per (point, UE)
followed by a cell row (``ue_id = cell``) per point:

==================  =====================================================
snr_db              received SNR per RE at each antenna (dB)
n_ues               UEs in the cell
length_km           fiber length (echoed even when ideal_fh is 1)
drop                drop index
ue_id               UE index, or ``cell`` for the aggregate row
eff_sinr_db         MIESM effective SINR (empty on cell rows)
se_bits             spectral efficiency in bits per RE and layer (empty on cell rows)
rate_bps            UE rate; on cell rows the cell rate
cell_rate_bps       aggregate rate of the point
pre_mimo_sinr_db    fronthaul SINR before MIMO (empty for ideal FH)
ideal_fh_flag       1 when the optical stages were bypassed
seed                master seed
status              ``ok`` or the error of a failed point
==================  =====================================================
"""

from __future__ import annotations

import csv
import io
from collections import defaultdict
from pathlib import Path

import numpy as np

from ifofsim.bbu import CellReport

CSV_SCHEMA_VERSION = 1
CSV_COLUMNS = ["snr_db", "n_ues", "length_km", "drop", "ue_id", "eff_sinr_db", "se_bits",
               "rate_bps", "cell_rate_bps", "pre_mimo_sinr_db", "ideal_fh_flag", "seed", "status"]


def _num(x) -> str:
    x = float(x)
    if np.isnan(x):
        return ""
    return repr(x)


def csv_rows(result) -> list[list[str]]:
    rows = []
    for e in result.entries:
        if isinstance(e, CellReport):
            common = [_num(e.snr_db), str(e.n_ues), _num(e.length_km), str(e.drop)]
            tail = [_num(e.pre_mimo_sinr_db), str(int(e.ideal_fh)), str(e.seed), "ok"]
            for u in e.ues:
                rows.append(common + [str(u.ue_id), _num(u.eff_sinr_db), _num(u.se_bits),
                                      _num(u.rate_bps), _num(e.cell_rate_bps)] + tail)
            rows.append(common + ["cell", "", "", _num(e.cell_rate_bps),
                                  _num(e.cell_rate_bps)] + tail)
        else:
            p = e.point
            rows.append([_num(p.snr_db), str(p.n_ues), _num(p.length_km), str(p.drop), "cell",
                         "", "", "", "", "", str(int(p.ideal_fh)), str(e.seed),
                         e.error.replace("\n", " ")])
    return rows


def csv_text(result) -> str:
    buf = io.StringIO()
    buf.write(f"# ifofsim cell-report csv v{CSV_SCHEMA_VERSION}\n")
    prov = getattr(result, "provenance", {}) or {}
    buf.write("# " + " ".join(f"{k}={prov[k]}" for k in sorted(prov)) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    w.writerows(csv_rows(result))
    return buf.getvalue()


def write_csv(result, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(csv_text(result))
    return path


def _mean_by(reports, key, value):
    acc = defaultdict(list)
    for r in reports:
        acc[key(r)].append(value(r))
    return {k: float(np.mean(v)) for k, v in acc.items()}


def _new_axes():
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    plt.rcParams["svg.hashsalt"] = "ifofsim"
    fig, ax = plt.subplots(figsize=(5.5, 4.0))
    ax.grid(True, alpha=0.3)
    return plt, fig, ax


def _save(plt, fig, path):
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def plot_vs_snr(reports, path, metric: str = "rate") -> bool:
    """Cell throughput (or mean effective SINR) vs received SNR, one colour per UE count.

    Ideal-FH points are drawn as dashed lines, fiber points as markers.
    """
    if len({r.snr_db for r in reports}) < 2:
        return False
    if metric == "rate":
        val, label = (lambda r: r.cell_rate_bps / 1e9), "Cell throughput (Gb/s)"
    else:
        val, label = (lambda r: float(np.mean(r.eff_sinr_db()))), "Post-MIMO SINR (dB)"
    plt, fig, ax = _new_axes()
    ues = sorted({r.n_ues for r in reports})
    colors = plt.rcParams["axes.prop_cycle"].by_key()["color"]
    for i, u in enumerate(ues):
        c = colors[i % len(colors)]
        ideal = _mean_by([r for r in reports if r.n_ues == u and r.ideal_fh], lambda r: r.snr_db, val)
        if ideal:
            s = sorted(ideal)
            ax.plot(s, [ideal[k] for k in s], "--", color=c, label=f"{u} UE ideal FH")
        fib = [r for r in reports if r.n_ues == u and not r.ideal_fh]
        if fib:
            far = max(r.length_km for r in fib)
            m = _mean_by([r for r in fib if r.length_km == far], lambda r: r.snr_db, val)
            s = sorted(m)
            ax.plot(s, [m[k] for k in s], "o", color=c, label=f"{u} UE, {far:g} km")
    ax.set_xlabel("Received SNR (dB)")
    ax.set_ylabel(label)
    ax.legend(fontsize=7)
    _save(plt, fig, path)
    return True


def plot_vs_distance(reports, path) -> bool:
    """Cell throughput vs fiber length; closed markers for the lowest SNR, open for the rest."""
    fib = [r for r in reports if not r.ideal_fh]
    if len({r.length_km for r in fib}) < 2:
        return False
    plt, fig, ax = _new_axes()
    for i, snr in enumerate(sorted({r.snr_db for r in fib})):
        for u in sorted({r.n_ues for r in fib}):
            m = _mean_by([r for r in fib if r.snr_db == snr and r.n_ues == u],
                         lambda r: r.length_km, lambda r: r.cell_rate_bps / 1e9)
            s = sorted(m)
            face = None if i == 0 else "none"
            ax.plot(s, [m[k] for k in s], "-o", markerfacecolor=face,
                    label=f"SNR {snr:g} dB, {u} UE")
    ax.set_xlabel("Fiber length (km)")
    ax.set_ylabel("Cell throughput (Gb/s)")
    ax.legend(fontsize=7)
    _save(plt, fig, path)
    return True


def plot_pre_mimo(reports, path) -> bool:
    fib = [r for r in reports if not r.ideal_fh]
    if len({r.length_km for r in fib}) < 2:
        return False
    m = _mean_by(fib, lambda r: r.length_km, lambda r: r.pre_mimo_sinr_db)
    s = sorted(m)
    plt, fig, ax = _new_axes()
    ax.plot(s, [m[k] for k in s], "-s")
    ax.set_xlabel("Fiber length (km)")
    ax.set_ylabel("SINR after the optical link (dB)")
    _save(plt, fig, path)
    return True


def emit_outputs(result, out_dir, plots: bool = True, stem: str = "sweep") -> list[Path]:
    """Write ``<stem>.csv`` and, with ``plots``, whichever SVG figures the grid supports."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = [write_csv(result, out_dir / f"{stem}.csv")]
    if plots:
        reports = result.reports
        figs = [("throughput_vs_snr.svg", lambda p: plot_vs_snr(reports, p, "rate")),
                ("sinr_vs_snr.svg", lambda p: plot_vs_snr(reports, p, "sinr")),
                ("throughput_vs_distance.svg", lambda p: plot_vs_distance(reports, p)),
                ("pre_mimo_sinr_vs_distance.svg", lambda p: plot_pre_mimo(reports, p))]
        for name, fn in figs:
            if reports and fn(out_dir / name):
                written.append(out_dir / name)
    return written
