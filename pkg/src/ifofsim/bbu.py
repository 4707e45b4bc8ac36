"""Centralized baseband receiver.

Timing sync on the cyclic prefix, DMRS channel estimation, per-subcarrier
multi-user MMSE, per-PRB SINR and the MIESM/rate abstraction that turns the
SINRs into throughput.

Array conventions: ``H`` is ``(n_subcarriers, n_rx, n_layers)``; received
resource elements are ``(n_subcarriers, n_symbols, n_rx)`` as produced by
:func:`ifofsim.nr_waveform.ofdm_demodulate`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ifofsim.errors import ConditioningError, DimensionError, MissingDmrsError, SyncError
from ifofsim.miesm import mi_average, miesm_effective
from ifofsim.nr_waveform import CarrierNumerology, DmrsConfig, ResourceGrid

# highest 256QAM code rate 948/1024 times 8 bits
SE_MAX = 8 * 948 / 1024
MAX_CONDITION = 1e12
SYNC_THRESHOLD = 0.02


def timing_sync(streams, numerology: CarrierNumerology, search: tuple[int, int] | None = None,
                threshold: float = SYNC_THRESHOLD) -> int:
    """Start of the slot from the cyclic-prefix autocorrelation, summed over antennas.

    For every candidate start ``d`` the metric correlates each symbol's CP
    with the tail it copies, over all simulated symbols and all antennas,
    and normalizes by the energy of both segments (so it is 1 for a clean
    periodic signal and ~0 for noise).

    Parameters
    ----------
    streams : IqStream or ndarray
        ``(n_rx, n)`` samples at the numerology's base rate.
    search : (int, int), optional
        Inclusive range of candidate offsets; defaults to every offset that
        leaves room for the slot.
    """
    x = np.atleast_2d(np.asarray(getattr(streams, "samples", streams)))
    n_fft = numerology.fft_size
    span = numerology.stream_length
    n = x.shape[-1]
    if n < span:
        raise SyncError(f"{n} samples cannot hold a {span}-sample slot")
    lo, hi = (0, n - span) if search is None else search
    lo, hi = max(lo, 0), min(hi, n - span)
    if hi < lo:
        raise SyncError("empty timing search range")
    prod = np.sum(x[:, :-n_fft] * np.conj(x[:, n_fft:]), axis=0)
    eng = 0.5 * np.sum(np.abs(x[:, :-n_fft]) ** 2 + np.abs(x[:, n_fft:]) ** 2, axis=0)
    cp_c = np.concatenate([[0], np.cumsum(prod)])
    cp_e = np.concatenate([[0], np.cumsum(eng)])
    d = np.arange(lo, hi + 1)
    corr = np.zeros(d.size, dtype=complex)
    energy = np.zeros(d.size)
    for st, cp in zip(numerology.symbol_starts(), numerology.cp_lengths[: numerology.n_symbols]):
        corr += cp_c[d + st + cp] - cp_c[d + st]
        energy += cp_e[d + st + cp] - cp_e[d + st]
    with np.errstate(invalid="ignore", divide="ignore"):
        metric = np.where(energy > 0, np.abs(corr) / energy, 0.0)
    best = int(np.argmax(metric))
    if metric[best] < threshold:
        raise SyncError(f"timing metric peak {metric[best]:.3g} below threshold {threshold}")
    return int(d[best])


@dataclass
class ChannelEstimate:
    """Estimated channel ``H[k, rx, layer]`` and noise variance per RE."""

    H: np.ndarray
    noise_var_est: float
    granularity: str = "per-subcarrier"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.H.ndim != 3:
            raise DimensionError("H must be (n_subcarriers, n_rx, n_layers)")
        if self.granularity not in ("per-subcarrier", "per-PRB"):
            raise ValueError(f"unknown granularity {self.granularity!r}")
        if not np.all(np.isfinite(self.H)):
            raise ValueError("channel estimate has non-finite entries")

    @property
    def n_layers(self) -> int:
        return self.H.shape[2]

    @property
    def n_rx(self) -> int:
        return self.H.shape[1]


def _ramp_per_subcarrier(z: np.ndarray, axis: int, step: int) -> float:
    """Mean phase advance per subcarrier of ``z`` between entries ``step`` apart."""
    a = np.take(z, np.arange(step, z.shape[axis]), axis=axis)
    b = np.take(z, np.arange(0, z.shape[axis] - step), axis=axis)
    s = np.sum(a * np.conj(b))
    return float(np.angle(s) / step) if s != 0 else 0.0


def _interp_flat(x_known: np.ndarray, values: np.ndarray, x_all: np.ndarray) -> np.ndarray:
    """Linear interpolation along axis 0, held flat beyond the end points."""
    out = np.empty((x_all.size,) + values.shape[1:], dtype=complex)
    flat = values.reshape(values.shape[0], -1)
    res = out.reshape(x_all.size, -1)
    for j in range(flat.shape[1]):
        res[:, j] = (np.interp(x_all, x_known, flat[:, j].real)
                     + 1j * np.interp(x_all, x_known, flat[:, j].imag))
    return out


def channel_estimate(grid: ResourceGrid, dmrs: DmrsConfig, n_layers: int) -> ChannelEstimate:
    """LS channel estimate from the type-2 DMRS of a received grid.

    ``grid.cells`` holds one port per receive antenna. On every CDM group the
    pilots are stripped of their base sequence, and each 2x2 block
    (subcarrier pair x both DMRS symbols) is de-covered with the port's
    signature, giving one estimate per layer every six subcarriers. These
    are interpolated linearly in frequency after removing their mean phase
    ramp (so the timing offset does not bias the interpolation), and held
    flat at the band edges.

    The noise variance comes from the de-covered outputs of unused ports,
    which carry only noise; with all 12 ports in use it falls back to the
    second difference of the estimates along frequency.
    """
    if not 1 <= n_layers <= dmrs.max_ports:
        raise ValueError(f"n_layers must lie in [1, {dmrs.max_ports}]")
    l0, l1 = dmrs.symbols
    if grid.n_symbols <= l1 or not np.all(grid.dmrs_mask[:, [l0, l1]]):
        raise MissingDmrsError("grid carries no DMRS on the configured symbols")
    nsc = grid.n_subcarriers
    if nsc % 6:
        raise DimensionError("type-2 DMRS needs a multiple of 6 subcarriers")
    y = grid.cells[:, [l0, l1], :]  # (k, 2, rx)
    base = dmrs.base_sequence(nsc)
    z = y * (np.conj(base) / dmrs.amplitude)[:, :, None]
    # common phase ramp, measured on subcarriers six apart (same cover position)
    ramp = _ramp_per_subcarrier(z, axis=0, step=6)
    k = np.arange(nsc)
    z = z * np.exp(-1j * ramp * k)[:, None, None]

    n_pairs = nsc // 6
    # blocks[g, n, k', l', rx] for subcarrier 6n + 2g + k'
    blocks = z.reshape(n_pairs, 3, 2, 2, -1).transpose(1, 0, 2, 3, 4)
    codes = np.empty((dmrs.max_ports, n_pairs, blocks.shape[-1]), dtype=complex)
    for p, (g, wf, wt) in enumerate(dmrs.port_signatures):
        w = np.outer(wf, wt)
        codes[p] = np.einsum("nklr,kl->nr", blocks[g], w) / 4
    centres = np.array([6 * np.arange(n_pairs) + 2 * dmrs.port_signatures[p][0] + 0.5
                        for p in range(dmrs.max_ports)])

    # each de-covered code averages 4 REs of pilot power 3: noise var sigma^2 / 12
    if n_layers < dmrs.max_ports:
        noise_var = 12.0 * float(np.mean(np.abs(codes[n_layers:]) ** 2))
    else:
        d2 = codes[:, 2:] - 2 * codes[:, 1:-1] + codes[:, :-2]
        noise_var = 12.0 * float(np.mean(np.abs(d2) ** 2)) / 6.0

    h = np.empty((nsc, codes.shape[-1], n_layers), dtype=complex)
    for p in range(n_layers):
        c = codes[p]
        # residual per-layer ramp, removed for interpolation and put back after
        r = _ramp_per_subcarrier(c, axis=0, step=1) / 6 if n_pairs > 1 else 0.0
        flat = c * np.exp(-1j * r * centres[p])[:, None]
        h[:, :, p] = _interp_flat(centres[p], flat, k.astype(float)) * np.exp(1j * r * k)[:, None]
    h *= np.exp(1j * ramp * k)[:, None, None]
    return ChannelEstimate(h, max(noise_var, np.finfo(float).tiny),
                           meta={"phase_ramp_per_subcarrier": ramp})


def mmse_equalize(y: np.ndarray, est: ChannelEstimate, noise_var: float | None = None):
    """Per-subcarrier linear MMSE.

    Parameters
    ----------
    y : ndarray
        ``(n_subcarriers, n_symbols, n_rx)`` received resource elements.
    est : ChannelEstimate
    noise_var : float, optional
        Overrides ``est.noise_var_est``.

    Returns
    -------
    x_hat : ndarray
        ``(n_subcarriers, n_symbols, n_layers)`` MMSE outputs (biased).
    sinr : ndarray
        ``(n_subcarriers, n_layers)`` post-equalization SINR (linear),
        ``1 / (sigma^2 [(H^H H + sigma^2 I)^-1]_kk) - 1``.
    """
    s2 = est.noise_var_est if noise_var is None else noise_var
    if not s2 > 0:
        raise ConditioningError("noise variance must be positive")
    H = est.H
    y = np.asarray(y)
    if y.ndim == 2:
        y = y[:, None, :]
    if y.shape[0] != H.shape[0] or y.shape[-1] != H.shape[1]:
        raise DimensionError(f"received REs {y.shape} do not match H {H.shape}")
    nl = H.shape[2]
    hh = np.conj(np.swapaxes(H, 1, 2))
    a = hh @ H + s2 * np.eye(nl)
    cond = np.linalg.cond(a)
    if not np.all(np.isfinite(cond)) or np.max(cond) > MAX_CONDITION:
        raise ConditioningError(f"MMSE matrix condition number {np.max(cond):.3g} too large")
    a_inv = np.linalg.inv(a)
    w = a_inv @ hh  # (k, nl, rx)
    x_hat = np.einsum("klr,ksr->ksl", w, y)
    diag = np.real(np.diagonal(a_inv, axis1=1, axis2=2))
    sinr = np.maximum(1.0 / (s2 * diag) - 1.0, 0.0)
    return x_hat, sinr


def mmse_bias(est: ChannelEstimate, noise_var: float | None = None) -> np.ndarray:
    """Diagonal of ``W H`` per subcarrier and layer (MMSE output gain)."""
    s2 = est.noise_var_est if noise_var is None else noise_var
    H = est.H
    hh = np.conj(np.swapaxes(H, 1, 2))
    g = hh @ H
    wh = np.linalg.solve(g + s2 * np.eye(H.shape[2]), g)
    return np.real(np.diagonal(wh, axis1=1, axis2=2))


def evm(x_hat: np.ndarray, x_ref: np.ndarray) -> float:
    """RMS error vector magnitude (fraction) after a least-squares gain per layer."""
    x_hat = np.asarray(x_hat).reshape(-1, np.shape(x_hat)[-1])
    x_ref = np.asarray(x_ref).reshape(-1, np.shape(x_ref)[-1])
    g = np.sum(np.conj(x_ref) * x_hat, axis=0) / np.sum(np.abs(x_ref) ** 2, axis=0)
    err = x_hat / g - x_ref
    return float(np.sqrt(np.sum(np.abs(err) ** 2) / np.sum(np.abs(x_ref) ** 2)))


def prb_sinr(sinr: np.ndarray, modulation: str = "256QAM") -> np.ndarray:
    """Mutual-information average of the per-subcarrier SINR over each PRB.

    ``sinr`` is linear with subcarriers on axis 0. A trailing partial PRB
    (when the count is not a multiple of 12) is averaged over the
    subcarriers it has.
    """
    s = np.asarray(sinr, dtype=float)
    nsc = s.shape[0]
    full = nsc // 12
    out = []
    if full:
        out.append(mi_average(s[: 12 * full].reshape((full, 12) + s.shape[1:]),
                              axis=1, modulation=modulation))
    if nsc % 12:
        out.append(mi_average(s[12 * full:], axis=0, modulation=modulation)[None])
    return np.concatenate(out, axis=0)


def rate_map(gamma_eff: float, data_res_per_second: float) -> tuple[float, float]:
    """Spectral efficiency (bits/RE, capped at ``SE_MAX``) and data rate (bit/s)."""
    g = float(gamma_eff)
    if np.isnan(g):
        raise ValueError("gamma_eff is NaN")
    se = min(float(np.log2(1.0 + max(g, 0.0))), SE_MAX)
    return se, se * data_res_per_second


def cell_throughput(rates) -> float:
    return float(sum(rates))


@dataclass
class UeReport:
    ue_id: int
    prb_sinr_db: np.ndarray
    eff_sinr_db: float
    se_bits: float
    rate_bps: float


@dataclass
class CellReport:
    """Per-UE link abstraction of one scenario point."""

    ues: list
    snr_db: float | None
    n_ues: int
    length_km: float
    seed: int | None
    drop: int = 0
    ideal_fh: bool = False
    pre_mimo_sinr_db: float = float("nan")
    meta: dict = field(default_factory=dict)

    @property
    def cell_rate_bps(self) -> float:
        return cell_throughput(u.rate_bps for u in self.ues)

    def eff_sinr_db(self) -> np.ndarray:
        return np.array([u.eff_sinr_db for u in self.ues])


def _db(x):
    with np.errstate(divide="ignore"):
        return 10 * np.log10(x)


def ue_reports(sinr_per_carrier, ue_of_layer, data_res_per_second: float,
               modulation: str = "256QAM") -> list[UeReport]:
    """Per-UE reports from per-subcarrier SINRs.

    ``sinr_per_carrier`` is a list over carriers of ``(n_subcarriers,
    n_layers)`` linear SINRs. A UE's PRBs from every carrier and every one
    of its layers feed a single MIESM average; its rate counts each layer.
    """
    prbs = np.concatenate([prb_sinr(s, modulation) for s in sinr_per_carrier], axis=0)
    ue_of_layer = np.asarray(ue_of_layer)
    out = []
    for u in range(int(ue_of_layer.max()) + 1):
        layers = np.flatnonzero(ue_of_layer == u)
        p = prbs[:, layers]
        g = miesm_effective(p, modulation)
        se, rate = rate_map(g, data_res_per_second)
        out.append(UeReport(u, _db(p[:, 0]), float(_db(g)), se, rate * layers.size))
    return out
