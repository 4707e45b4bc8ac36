"""Spectral helpers shared by the optical and receiver stages.

Records are treated as periodic, so callers pad with quiet guard intervals
at both ends. Resampling keeps the record duration fixed, which means every
stage sees the same frequency grid ``1/T`` and band edges and IF shifts
become whole-bin operations.
"""

from __future__ import annotations

import numpy as np
import scipy.fft as sfft


def fast_length(n_min: int) -> int:
    """Smallest FFT-friendly length >= ``n_min`` (even, 2/3/5-smooth)."""
    n = max(int(np.ceil(n_min)), 2)
    while True:
        m = sfft.next_fast_len(n, real=True)
        if m % 2 == 0:
            return m
        n = m + 1


def spectral_resample(x: np.ndarray, n_out: int, axis: int = -1) -> np.ndarray:
    """Band-limited resampling of a periodic record to ``n_out`` samples.

    Content above the smaller Nyquist frequency is discarded; amplitudes are
    preserved. Real input gives real output.
    """
    x = np.asarray(x)
    n = x.shape[axis]
    if n_out == n:
        return x.copy()
    scale = n_out / n
    if np.isrealobj(x):
        spec = sfft.rfft(x, axis=axis)
        keep = min(n, n_out) // 2 + 1
        spec = np.take(spec, np.arange(keep), axis=axis)
        if min(n, n_out) % 2 == 0:
            # split (or halve) the Nyquist bin so the result stays symmetric
            sl = [slice(None)] * spec.ndim
            sl[axis] = keep - 1
            spec[tuple(sl)] *= 0.5 if n_out > n else 1.0
        return sfft.irfft(spec, n_out, axis=axis) * scale
    spec = sfft.fft(x, axis=axis)
    m = min(n, n_out)
    k = np.fft.fftfreq(m, 1.0 / m).astype(int)
    out_shape = list(x.shape)
    out_shape[axis] = n_out
    out = np.zeros(out_shape, dtype=complex)
    src = [slice(None)] * x.ndim
    dst = [slice(None)] * x.ndim
    src[axis] = k % n
    dst[axis] = k % n_out
    out[tuple(dst)] = spec[tuple(src)]
    return sfft.ifft(out, axis=axis) * scale


def bin_of(freq_hz: float, duration_s: float) -> int:
    """Nearest frequency-grid index for a record of the given duration."""
    return int(round(freq_hz * duration_s))


def hilbert_spectral(x: np.ndarray) -> np.ndarray:
    """Hilbert transform of a real periodic record (response ``-j sign(f)``)."""
    n = x.size
    spec = sfft.rfft(x)
    spec *= -1j
    spec[0] = 0.0
    if n % 2 == 0:
        spec[-1] = 0.0
    return sfft.irfft(spec, n)


def hilbert_overlap_save(x: np.ndarray, block: int = 2 ** 20) -> np.ndarray:
    """Blockwise spectral Hilbert transform with 50 % overlap.

    Each block of ``block`` samples is transformed on its own and only its
    central half is kept, so the kernel is effectively truncated at
    ``block/4`` samples. The record wraps around at its ends, matching
    :func:`hilbert_spectral` for periodic input.
    """
    n = x.size
    if n <= block:
        return hilbert_spectral(x)
    if block % 4:
        raise ValueError("block must be a multiple of 4")
    hop = block // 2
    q = block // 4
    n_blocks = -(-n // hop)
    padded = np.concatenate([x[-q:], x, x[: n_blocks * hop - n + q + hop]])
    out = np.empty(n_blocks * hop)
    for b in range(n_blocks):
        seg = padded[b * hop: b * hop + block]
        out[b * hop:(b + 1) * hop] = hilbert_spectral(seg)[q:q + hop]
    return out[:n]


def hilbert_fir(x: np.ndarray, n_taps: int = 255) -> np.ndarray:
    """Hilbert transform with a Blackman-windowed FIR (odd length, zero delay)."""
    if n_taps % 2 == 0:
        raise ValueError("n_taps must be odd")
    m = np.arange(n_taps) - n_taps // 2
    h = np.zeros(n_taps)
    odd = m % 2 != 0
    h[odd] = 2.0 / (np.pi * m[odd])
    h *= np.blackman(n_taps)
    half = n_taps // 2
    xp = np.concatenate([x[-half:], x, x[:half]])
    return np.convolve(xp, h, mode="valid")
