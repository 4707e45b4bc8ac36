"""Mutual-information effective SINR mapping (MIESM).

The constrained capacity of square QAM over complex AWGN splits exactly into
two independent PAM channels, ``I_QAM(snr) = 2 * I_PAM(snr)``, each PAM
seeing half the symbol energy and half the noise. The curves are tabulated
on a 0.1 dB grid from -20 to 40 dB (``data/qam_mi_table.csv``, produced by
:func:`generate_table`). The table stores the natural log of the capacity
*deficit* ``log2(M) - I`` so that the high-SNR end stays strictly monotone
and averaging does not lose precision.
"""

from __future__ import annotations

import csv
from functools import lru_cache
from importlib import resources

import numpy as np
from scipy.special import logsumexp

from ifofsim.nr_waveform import MODULATION_ORDERS

TABLE_LO_DB = -20.0
TABLE_HI_DB = 40.0
TABLE_STEP_DB = 0.1
TABLE_FILE = "qam_mi_table.csv"


def pam_levels(m: int) -> np.ndarray:
    """``m``-PAM points scaled to energy 1/2 (one axis of unit-energy QAM)."""
    a = np.arange(-(m - 1), m, 2, dtype=float)
    return a * np.sqrt(0.5 / np.mean(a ** 2))


def log_deficit_pam(m: int, snr: float, n_grid: int = 4001, t_max: float = 27.0) -> float:
    """Natural log of ``log2(m) - I_PAM`` at complex-symbol SNR ``snr`` (linear).

    Integrates over the Gaussian noise with a fine trapezoid rule done in
    the log domain.
    """
    a = pam_levels(m)
    s = np.sqrt(0.5 / snr)  # per-axis noise standard deviation
    t = np.linspace(-t_max, t_max, n_grid)
    h = t[1] - t[0]
    n = np.sqrt(2.0) * s * t
    d = a[:, None] - a[None, :]  # d[i, j] = a_i - a_j
    # exponent of the likelihood ratio of symbol j versus the sent symbol i
    x = -(d[:, :, None] ** 2 + 2 * d[:, :, None] * n[None, None, :]) / (2 * s * s)
    eye = np.eye(m, dtype=bool)
    x[eye] = -np.inf
    lse = logsumexp(x, axis=1)  # (i, t): log sum_{j != i} exp(x_ij)
    # log(log1p(exp(L))) without overflow or underflow
    soft = np.where(lse > 30, np.log(np.maximum(lse, 1e-300)),
                    np.where(lse < -30, lse, np.log(np.log1p(np.exp(np.clip(lse, -30, 30))))))
    log_g = -t[None, :] ** 2 + soft - np.log(np.log(2.0))
    w = np.full(n_grid, np.log(h))
    w[[0, -1]] += np.log(0.5)
    return float(logsumexp(log_g + w[None, :]) - np.log(m) - 0.5 * np.log(np.pi))


def log_deficit_qam(modulation: str, snr: float) -> float:
    m = int(np.sqrt(MODULATION_ORDERS[modulation]))
    # the nearest-neighbour likelihood ratio turns over at t = -slope/4 with
    # width ~1/slope; cover it and resolve it
    slope = np.sqrt(2.0) * (pam_levels(m)[1] - pam_levels(m)[0]) * np.sqrt(2 * snr)
    t_max = max(27.0, slope / 4 + 12.0)
    n_grid = int(min(max(4001, 2 * t_max * max(slope, 1.0) / 0.1), 200001)) | 1
    return float(np.log(2.0) + log_deficit_pam(m, snr, n_grid, t_max))


def generate_table() -> dict:
    """Compute every curve on the standard grid (slow; run once)."""
    snr_db = np.round(np.arange(TABLE_LO_DB, TABLE_HI_DB + TABLE_STEP_DB / 2, TABLE_STEP_DB), 1)
    table = {"snr_db": snr_db}
    for mod in MODULATION_ORDERS:
        table[mod] = np.array([log_deficit_qam(mod, 10 ** (g / 10)) for g in snr_db])
    return table


def write_table(path, table: dict) -> None:
    mods = list(MODULATION_ORDERS)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["snr_db"] + [f"ln_deficit_{m}" for m in mods])
        for i, g in enumerate(table["snr_db"]):
            w.writerow([f"{g:.1f}"] + [repr(float(table[m][i])) for m in mods])


@lru_cache(maxsize=None)
def _load_table() -> dict:
    text = resources.files("ifofsim.data").joinpath(TABLE_FILE).read_text()
    rows = list(csv.reader(text.splitlines()))
    header, body = rows[0], np.array(rows[1:], dtype=float)
    table = {"snr_db": body[:, 0]}
    for col, name in enumerate(header[1:], start=1):
        table[name.removeprefix("ln_deficit_")] = body[:, col]
    return table


class MiCurve:
    """Constrained-capacity curve of one modulation with an exact inverse.

    ``I(snr)`` is linear in ``snr`` below the table, piecewise linear in
    (dB, log deficit) inside it and extrapolated with the last segment's
    slope above it, so the inverse reproduces any input exactly.
    """

    def __init__(self, modulation: str = "256QAM"):
        tab = _load_table()
        self.modulation = modulation
        self.bits = float(np.log2(MODULATION_ORDERS[modulation]))
        self.grid_db = tab["snr_db"]
        self.ln_def = tab[modulation]
        if np.any(np.diff(self.ln_def) >= 0):
            raise ValueError(f"{modulation} table is not strictly monotone")
        self._lo_mi = self.bits - np.exp(self.ln_def[0])
        self._lo_lin = 10 ** (self.grid_db[0] / 10)
        self._hi_slope = (self.ln_def[-1] - self.ln_def[-2]) / (self.grid_db[-1] - self.grid_db[-2])

    def deficit(self, snr) -> np.ndarray:
        """``log2(M) - I(snr)`` for linear SNR values (``inf`` maps to 0)."""
        snr = np.asarray(snr, dtype=float)
        out = np.empty(snr.shape)
        low = snr < self._lo_lin
        out[low] = self.bits - self._lo_mi * np.maximum(snr[low], 0.0) / self._lo_lin
        rest = ~low
        with np.errstate(divide="ignore"):
            g = 10 * np.log10(snr[rest])
        ln_d = np.interp(g, self.grid_db, self.ln_def)
        above = g > self.grid_db[-1]
        ln_d[above] = self.ln_def[-1] + self._hi_slope * (g[above] - self.grid_db[-1])
        out[rest] = np.exp(ln_d)
        return out

    def mi(self, snr) -> np.ndarray:
        return self.bits - self.deficit(snr)

    def inverse_deficit(self, deficit) -> np.ndarray:
        """Linear SNR whose deficit equals ``deficit``."""
        d = np.atleast_1d(np.asarray(deficit, dtype=float))
        out = np.empty(d.shape)
        d_lo = np.exp(self.ln_def[0])
        low = d >= d_lo
        out[low] = (self.bits - np.minimum(d[low], self.bits)) / self._lo_mi * self._lo_lin
        rest = ~low
        with np.errstate(divide="ignore"):
            ln_d = np.log(d[rest])
        # ln_def decreases with SNR; search on its negation
        neg = -self.ln_def
        j = np.clip(np.searchsorted(neg, -ln_d), 1, neg.size - 1)
        x0, x1 = neg[j - 1], neg[j]
        frac = (-ln_d - x0) / (x1 - x0)
        g = self.grid_db[j - 1] + frac * (self.grid_db[j] - self.grid_db[j - 1])
        above = ln_d < self.ln_def[-1]
        g[above] = self.grid_db[-1] + (ln_d[above] - self.ln_def[-1]) / self._hi_slope
        out[rest] = 10 ** (g / 10)
        return out.reshape(np.shape(deficit))


@lru_cache(maxsize=None)
def mi_curve(modulation: str = "256QAM") -> MiCurve:
    return MiCurve(modulation)


def mi_average(snr, axis=None, modulation: str = "256QAM") -> np.ndarray:
    """SNR whose mutual information is the mean MI of ``snr`` along ``axis``."""
    curve = mi_curve(modulation)
    return curve.inverse_deficit(np.mean(curve.deficit(snr), axis=axis))


def miesm_effective(prb_sinrs, modulation: str = "256QAM") -> float:
    """Effective SINR (linear) of a set of PRB SINRs (linear), calibration factor 1."""
    prb = np.asarray(prb_sinrs, dtype=float).ravel()
    if prb.size == 0:
        raise ValueError("need at least one PRB SINR")
    return float(mi_average(prb, modulation=modulation))
