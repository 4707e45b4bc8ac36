"""Clustered geometric multi-user MIMO channel for a planar receive array.

A reduced UMi-like model: each UE is dropped in a 120 degree sector of a
hexagonal site, and its signal reaches the array over ``n_clusters``
plane-wave clusters with an exponential delay/power profile. Pathloss is not
modelled because closed-loop power control (without a Tx power limit) pins
the received SNR anyway.

SNR convention: the *received SNR* is per resource element, i.e. the
in-band signal power over the in-band noise power at one antenna. With the
unitary OFDM of :mod:`ifofsim.nr_waveform` a unit-power RE at the
transmitter stays unit power, and white noise of per-sample variance
``noise_power`` at rate ``fs`` shows up per RE with variance
``noise_power * base_rate / fs``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.fft as sfft

from ifofsim.errors import ConfigError, DegenerateChannelError, DimensionError
from ifofsim.streams import IqStream

# shortest normal cyclic prefix at 30 kHz spacing
NORMAL_CP_30KHZ_S = 288 / 122.88e6


@dataclass(frozen=True)
class ScenarioConfig:
    n_rx_antennas: int = 64
    array_shape: tuple[int, int] = (8, 8)
    n_ues: int = 1
    carrier_freq_hz: float = 3.5e9
    inter_site_distance_m: float = 200.0
    # None: noiseless antennas (power control is skipped)
    target_rx_snr_db: float | None = 12.0
    n_clusters: int = 12
    delay_spread_s: float = 100e-9
    layers_per_ue: int = 1
    rays_per_cluster: int = 1
    # spread of cluster directions around the line of sight (deg)
    azimuth_spread_deg: float = 40.0
    zenith_spread_deg: float = 10.0
    # spread of rays inside a cluster (deg)
    ray_azimuth_spread_deg: float = 5.0
    ray_zenith_spread_deg: float = 3.0
    delay_scaling: float = 2.1
    shadowing_std_db: float = 3.0
    bs_height_m: float = 10.0
    ue_height_m: float = 1.5
    min_distance_m: float = 10.0
    noise_power: float = 1.0
    fir_length: int = 32
    # "clustered" or "identity" (antenna a hears layer a mod n_layers, unit gain)
    kind: str = "clustered"

    def __post_init__(self):
        if self.n_ues < 1:
            raise ConfigError("n_ues must be >= 1")
        if self.layers_per_ue < 1:
            raise ConfigError("layers_per_ue must be >= 1")
        if self.n_layers > 12:
            raise ConfigError(f"{self.n_layers} layers exceed the 12 DMRS ports")
        if int(np.prod(self.array_shape)) != self.n_rx_antennas:
            raise ConfigError("array_shape does not match n_rx_antennas")
        if self.kind not in ("clustered", "identity"):
            raise ConfigError(f"unknown channel kind {self.kind!r}")
        if self.n_clusters < 1 or self.rays_per_cluster < 1:
            raise ConfigError("need at least one cluster and one ray")
        if self.fir_length < 2 or self.fir_length % 2:
            raise ConfigError("fir_length must be an even number >= 2")

    @property
    def n_layers(self) -> int:
        return self.n_ues * self.layers_per_ue

    def ue_of_layer(self) -> np.ndarray:
        return np.repeat(np.arange(self.n_ues), self.layers_per_ue)


@dataclass(frozen=True)
class ChannelBand:
    """Where the signal lives inside the sampled band.

    ``freqs_hz`` are the occupied subcarrier frequencies relative to the
    stream centre; ``base_rate_hz`` is the OFDM numerology rate used to turn
    per-sample noise into per-RE noise.
    """

    sample_rate_hz: float
    freqs_hz: np.ndarray | None = None
    base_rate_hz: float | None = None

    @property
    def re_noise_scale(self) -> float:
        if self.base_rate_hz is None:
            return 1.0
        return self.base_rate_hz / self.sample_rate_hz


@dataclass
class ChannelRealization:
    """Tapped-delay channel for every (layer, antenna) pair.

    ``delays_s`` has shape ``(n_layers, n_taps)`` and ``gains`` shape
    ``(n_layers, n_rx, n_taps)``; they are the raw propagation taps. The
    per-UE ``ue_tx_scale`` (a power factor) is applied on top.
    """

    delays_s: np.ndarray
    gains: np.ndarray
    ue_of_layer: np.ndarray
    ue_tx_scale: np.ndarray
    noise_power: float
    band: ChannelBand
    fir_length: int = 32
    ue_positions_m: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    @property
    def n_layers(self) -> int:
        return self.gains.shape[0]

    @property
    def n_rx(self) -> int:
        return self.gains.shape[1]

    @property
    def n_ues(self) -> int:
        return len(self.ue_tx_scale)

    def layer_amplitude(self) -> np.ndarray:
        return np.sqrt(self.ue_tx_scale[self.ue_of_layer])

    def frequency_response(self, freqs_hz, scaled: bool = True) -> np.ndarray:
        """Ideal response ``H[layer, rx, f]`` of the taps (no FIR truncation)."""
        f = np.asarray(freqs_hz, dtype=float)
        ph = np.exp(-2j * np.pi * self.delays_s[:, :, None] * f[None, None, :])
        h = np.einsum("lat,ltf->laf", self.gains, ph)
        if scaled:
            h = h * self.layer_amplitude()[:, None, None]
        return h

    def rx_re_power(self, scaled: bool = True) -> np.ndarray:
        """Average received power per RE of each UE, averaged over antennas and band."""
        if self.band.freqs_hz is None:
            per_layer = np.sum(np.abs(self.gains) ** 2, axis=-1).mean(axis=1)
            if scaled:
                per_layer = per_layer * self.ue_tx_scale[self.ue_of_layer]
        else:
            h = self.frequency_response(self.band.freqs_hz, scaled=scaled)
            per_layer = np.mean(np.abs(h) ** 2, axis=(1, 2))
        return np.bincount(self.ue_of_layer, weights=per_layer, minlength=self.n_ues)

    @property
    def re_noise_power(self) -> float:
        return self.noise_power * self.band.re_noise_scale

    def fir(self) -> tuple[np.ndarray, int]:
        """Windowed-sinc FIR per (layer, antenna), with its first tap index."""
        fs = self.band.sample_rate_hz
        half = self.fir_length // 2
        d = self.delays_s * fs
        m_min = int(np.floor(d.min())) - half + 1
        m_max = int(np.floor(d.max())) + half
        m = np.arange(m_min, m_max + 1)
        # Hann-windowed sinc around each tap, zero outside its own window
        rel = m[None, None, :] - d[:, :, None]
        w = np.where(np.abs(rel) < half, 0.5 * (1 + np.cos(np.pi * rel / half)), 0.0)
        kern = np.sinc(rel) * w
        h = np.einsum("lat,ltm->lam", self.gains, kern)
        h = h * self.layer_amplitude()[:, None, None]
        return h, m_min


def _steering(array_shape, azimuth, zenith) -> np.ndarray:
    """Half-wavelength planar-array response, shape ``(..., n_rx)``."""
    rows, cols = array_shape
    r = np.repeat(np.arange(rows), cols)
    c = np.tile(np.arange(cols), rows)
    az = np.asarray(azimuth)[..., None]
    ze = np.asarray(zenith)[..., None]
    phase = np.pi * (c * np.sin(ze) * np.sin(az) + r * np.cos(ze))
    return np.exp(1j * phase)


def _drop_ue(rng, scenario: ScenarioConfig) -> np.ndarray:
    """Uniform position in the 120 deg sector of a hexagonal cell, boresight along +x."""
    radius = scenario.inter_site_distance_m / np.sqrt(3.0)
    # the sector is the rhombus spanned by two hexagon edges at +-60 deg
    u = np.array([np.cos(np.pi / 3), np.sin(np.pi / 3)]) * radius
    v = np.array([np.cos(-np.pi / 3), np.sin(-np.pi / 3)]) * radius
    while True:
        a, b = rng.random(2)
        p = a * u + b * v
        if np.hypot(*p) >= scenario.min_distance_m:
            return p


def draw_channel(scenario: ScenarioConfig, rng_seed=None,
                 band: ChannelBand | None = None) -> ChannelRealization:
    """Draw one channel realization (deterministic for a given seed)."""
    if band is None:
        band = ChannelBand(sample_rate_hz=491.52e6)
    rng = np.random.default_rng(rng_seed)
    n_l, n_rx = scenario.n_layers, scenario.n_rx_antennas
    ue_of_layer = scenario.ue_of_layer()
    if scenario.delay_spread_s >= NORMAL_CP_30KHZ_S:
        warnings.warn("delay spread is not below the cyclic prefix duration", stacklevel=2)

    if scenario.kind == "identity":
        gains = np.zeros((n_l, n_rx, 1), dtype=complex)
        gains[np.arange(n_rx) % n_l, np.arange(n_rx), 0] = 1.0
        real = ChannelRealization(np.zeros((n_l, 1)), gains, ue_of_layer,
                                  np.ones(scenario.n_ues), scenario.noise_power, band,
                                  scenario.fir_length)
    else:
        nc, nr = scenario.n_clusters, scenario.rays_per_cluster
        positions = np.array([_drop_ue(rng, scenario) for _ in range(scenario.n_ues)])
        delays = np.zeros((n_l, nc * nr))
        gains = np.zeros((n_l, n_rx, nc * nr), dtype=complex)
        dh = scenario.bs_height_m - scenario.ue_height_m
        for u in range(scenario.n_ues):
            x, y = positions[u]
            los_az = np.arctan2(y, x)
            los_ze = np.pi / 2 + np.arctan2(dh, np.hypot(x, y))
            if scenario.delay_spread_s > 0 and nc > 1:
                tau = -scenario.delay_scaling * scenario.delay_spread_s * np.log(rng.random(nc))
                tau = np.sort(tau - tau.min())
                p = np.exp(-tau * (scenario.delay_scaling - 1)
                           / (scenario.delay_scaling * scenario.delay_spread_s))
            else:
                tau = np.zeros(nc)
                p = np.ones(nc)
            p = p * 10 ** (-rng.standard_normal(nc) * scenario.shadowing_std_db / 10)
            p = p / p.sum()
            c_az = los_az + np.deg2rad(scenario.azimuth_spread_deg) * rng.standard_normal(nc)
            c_ze = los_ze + np.deg2rad(scenario.zenith_spread_deg) * rng.standard_normal(nc)
            if nc == 1:
                c_az, c_ze = np.array([los_az]), np.array([los_ze])
            for lay in np.flatnonzero(ue_of_layer == u):
                for ci in range(nc):
                    if nr == 1:
                        az, ze = np.array([c_az[ci]]), np.array([c_ze[ci]])
                    else:
                        az = c_az[ci] + np.deg2rad(scenario.ray_azimuth_spread_deg) * rng.uniform(-1, 1, nr) * np.sqrt(3)
                        ze = c_ze[ci] + np.deg2rad(scenario.ray_zenith_spread_deg) * rng.uniform(-1, 1, nr) * np.sqrt(3)
                    g = (rng.standard_normal(nr) + 1j * rng.standard_normal(nr)) / np.sqrt(2)
                    g = g * np.sqrt(p[ci] / nr)
                    sl = slice(ci * nr, (ci + 1) * nr)
                    gains[lay, :, sl] = (_steering(scenario.array_shape, az, ze) * g[:, None]).T
                    delays[lay, sl] = tau[ci]
        real = ChannelRealization(delays, gains, ue_of_layer, np.ones(scenario.n_ues),
                                  scenario.noise_power, band, scenario.fir_length, positions)
    if scenario.target_rx_snr_db is not None:
        real = power_control(real, scenario.target_rx_snr_db)
    return real


def power_control(realization: ChannelRealization, target_rx_snr_db: float) -> ChannelRealization:
    """Set every UE's Tx power so its mean per-antenna received SNR hits the target.

    No Tx power limit is applied. The scale is computed from the raw taps, so
    applying this twice is a no-op.
    """
    raw = realization.rx_re_power(scaled=False)
    if np.any(raw <= 0) or not np.all(np.isfinite(raw)):
        raise DegenerateChannelError("a UE has an all-zero channel; cannot power-control it")
    if realization.noise_power <= 0:
        raise DegenerateChannelError("noise_power must be positive for power control")
    target = 10 ** (target_rx_snr_db / 10) * realization.re_noise_power
    return replace(realization, ue_tx_scale=target / raw)


def apply_channel(tx: IqStream, realization: ChannelRealization, rng_seed=None,
                  add_noise: bool = True) -> IqStream:
    """Convolve the layer streams with the channel and add antenna noise.

    ``tx`` holds one row per layer. The FIR is non-causal around each
    cluster delay, so a zero-delay unit tap is an exact identity.
    """
    x = np.atleast_2d(np.asarray(tx.samples))
    if x.shape[0] != realization.n_layers:
        raise DimensionError(f"{x.shape[0]} layer streams for a {realization.n_layers}-layer channel")
    if not np.isclose(tx.sample_rate_hz, realization.band.sample_rate_hz):
        raise DimensionError("stream rate differs from the channel's sample rate")
    n = x.shape[-1]
    h, m_min = realization.fir()
    n_fir = h.shape[-1]
    nfft = sfft.next_fast_len(n + n_fir - 1)
    xf = sfft.fft(x, nfft, axis=-1)
    y = np.empty((realization.n_rx, n), dtype=complex)
    for a in range(realization.n_rx):
        hf = sfft.fft(h[:, a, :], nfft, axis=-1)
        full = sfft.ifft(np.sum(xf * hf, axis=0))
        # y[k] = sum_m h[m] x[k - m]; full[j] holds index j + m_min
        idx = np.arange(n) - m_min
        valid = (idx >= 0) & (idx < nfft)
        row = np.zeros(n, dtype=complex)
        row[valid] = full[idx[valid]]
        y[a] = row
    if add_noise:
        rng = np.random.default_rng(rng_seed)
        sigma = np.sqrt(realization.noise_power / 2)
        y += sigma * (rng.standard_normal(y.shape) + 1j * rng.standard_normal(y.shape))
    return IqStream(y, tx.sample_rate_hz, tx.center_freq_hz)
