"""Kramers-Kronig field reconstruction and IF down-conversion.

For a minimum-phase field ``E = A + s`` (strong carrier, single sideband)
the phase follows from the intensity: ``phase = H{ln |E|}``, with ``H`` the
Hilbert transform. Taking the log broadens the spectrum, so the
photocurrent is upsampled first.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.fft as sfft

from ifofsim.dsp import (bin_of, fast_length, hilbert_fir, hilbert_overlap_save,
                         spectral_resample)
from ifofsim.errors import ConfigError, DegenerateInputError, DimensionError
from ifofsim.streams import IqStream

SINR_CAP_DB = 60.0


@dataclass(frozen=True)
class KkConfig:
    """Kramers-Kronig settings.

    ``oversample_factor`` sets the internal rate relative to the
    photocurrent's two-sided bandwidth (its Nyquist rate), so 3 means three
    times the minimum real sampling rate of the detected signal.
    ``epsilon_floor`` is relative to the mean photocurrent.
    """

    oversample_factor: float = 3.0
    hilbert: str = "spectral"
    hilbert_block: int = 2 ** 20
    hilbert_taps: int = 255
    epsilon_floor: float = 1e-12

    def __post_init__(self):
        if self.oversample_factor < 1:
            raise ConfigError("oversample_factor must be >= 1")
        if self.epsilon_floor <= 0:
            raise ConfigError("epsilon_floor must be positive")
        if self.hilbert not in ("spectral", "fir"):
            raise ConfigError(f"unknown hilbert method {self.hilbert!r}")


def kk_reconstruct(photocurrent: IqStream, cfg: KkConfig = KkConfig(),
                   bandwidth_hz: float | None = None,
                   output_rate_hz: float | str | None = None) -> IqStream:
    """Recover the complex field from a real photocurrent.

    Parameters
    ----------
    photocurrent : IqStream
        Real, nominally nonnegative samples.
    bandwidth_hz : float, optional
        One-sided photocurrent bandwidth; defaults to the input Nyquist
        frequency.
    output_rate_hz : float, optional
        Rate of the returned field; defaults to the input rate. Pass
        ``"internal"`` to skip the final resampling and keep the
        oversampled field.

    The count of samples clamped to the floor before the logarithm is
    returned in ``meta['clamp_count']``.
    """
    i_in = np.asarray(photocurrent.samples)
    if np.iscomplexobj(i_in):
        raise DimensionError("photocurrent must be real")
    mean_i = float(np.mean(i_in))
    if not np.any(i_in) or mean_i <= 0:
        raise DegenerateInputError("photocurrent carries no power")
    dur = photocurrent.duration_s
    bw = photocurrent.sample_rate_hz / 2 if bandwidth_hz is None else bandwidth_hz
    n_k = fast_length(dur * cfg.oversample_factor * 2 * bw)
    i_up = spectral_resample(i_in, n_k)
    floor = cfg.epsilon_floor * mean_i
    low = i_up < floor
    clamps = int(np.count_nonzero(low))
    if clamps:
        i_up[low] = floor
    log_amp = 0.5 * np.log(i_up)
    if cfg.hilbert == "fir":
        phase = hilbert_fir(log_amp, cfg.hilbert_taps)
    else:
        phase = hilbert_overlap_save(log_amp, cfg.hilbert_block)
    field = np.exp(log_amp + 1j * phase)
    del log_amp, phase
    if output_rate_hz == "internal":
        n_out = n_k
    elif output_rate_hz is None:
        n_out = i_in.size
    else:
        n_out = fast_length(dur * output_rate_hz)
    if n_out != n_k:
        field = spectral_resample(field, n_out)
    meta = dict(photocurrent.meta)
    meta.update(clamp_count=clamps, internal_rate_hz=n_k / dur)
    return IqStream(field, n_out / dur, 0.0, meta)


def carrier_remove_downconvert(field: IqStream, if_hz: float, composite_rate_hz: float,
                               bandwidth_hz: float | None = None,
                               n_out: int | None = None) -> IqStream:
    """Drop the carrier, shift the sideband from the IF to DC and resample.

    Only bins within ``bandwidth_hz/2`` of the IF are kept (default: the
    whole composite Nyquist band). All filtering is zero-phase, so the
    output needs no delay correction against the transmitted composite.
    """
    x = np.asarray(field.samples)
    dur = field.duration_s
    if n_out is None:
        n_out = int(round(dur * composite_rate_hz))
    bw = composite_rate_hz if bandwidth_hz is None else min(bandwidth_hz, composite_rate_hz)
    spec = sfft.fft(x - np.mean(x))
    n = x.size
    k_if = bin_of(if_hz, dur)
    k = np.fft.fftfreq(n_out, 1.0 / n_out).astype(int)
    keep = np.abs(k) <= int(np.floor(bw / 2 * dur))
    out = np.zeros(n_out, dtype=complex)
    out[keep] = spec[(k[keep] + k_if) % n] * (n_out / n)
    return IqStream(sfft.ifft(out), n_out / dur, 0.0, dict(field.meta))


def align_lag(recovered: np.ndarray, reference: np.ndarray, max_lag: int) -> int:
    """Integer lag maximizing the circular cross-correlation magnitude."""
    if max_lag == 0:
        return 0
    xc = sfft.ifft(sfft.fft(recovered) * np.conj(sfft.fft(reference)))
    lags = np.arange(-max_lag, max_lag + 1)
    return int(lags[np.argmax(np.abs(xc[lags % xc.size]))])


def pre_mimo_sinr(recovered: IqStream, reference: IqStream, max_lag: int = 0) -> float:
    """SINR of ``recovered`` against ``reference`` after a least-squares scalar fit.

    ``reference`` is rolled by the integer lag (within ``+-max_lag``) that
    maximizes the cross-correlation, then ``err = recovered - a*reference``
    with the complex LS scalar ``a``; SINR is ``|a|^2 P_ref / P_err`` in dB,
    capped at 60 dB.
    """
    y = np.asarray(recovered.samples).ravel()
    r = np.asarray(reference.samples).ravel()
    if y.size != r.size:
        raise DimensionError("recovered and reference lengths differ")
    p_ref = np.vdot(r, r).real
    if p_ref == 0:
        raise DegenerateInputError("reference has zero power")
    lag = align_lag(y, r, max_lag)
    if lag:
        r = np.roll(r, lag)
    a = np.vdot(r, y) / p_ref
    err = y - a * r
    p_err = np.vdot(err, err).real
    sig = abs(a) ** 2 * p_ref
    if p_err <= sig * 10 ** (-SINR_CAP_DB / 10):
        return SINR_CAP_DB
    return float(10 * np.log10(sig / p_err))
