"""Round-robin TDMA aggregation of antenna streams into one fronthaul stream.

Sample ``k`` of channel ``i`` goes to composite index ``k*N + i``. Any LTI
filter applied to the composite therefore reaches the channels as an
``N x N`` MIMO filter made of the filter's polyphase components, which is
what lets a MIMO receiver absorb fiber dispersion after de-aggregation.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ifofsim.errors import ConfigError, DimensionError
from ifofsim.streams import IqStream

CAPTURE_MAGIC = b"IFOFCAP\x00"
CAPTURE_VERSION = 1
# magic, version, n_channels, composite rate, samples per channel
_HEADER = struct.Struct("<8sIIdQ")
assert _HEADER.size == 32


@dataclass(frozen=True)
class AggregationPlan:
    n_channels: int = 64
    per_channel_rate_hz: float = 491.52e6

    def __post_init__(self):
        if self.n_channels < 1:
            raise ConfigError("n_channels must be >= 1")
        if self.per_channel_rate_hz <= 0:
            raise ConfigError("per_channel_rate_hz must be positive")

    @property
    def composite_rate_hz(self) -> float:
        return self.n_channels * self.per_channel_rate_hz


def _as_matrix(streams) -> tuple[np.ndarray, float]:
    if isinstance(streams, IqStream):
        return np.atleast_2d(streams.samples), streams.sample_rate_hz
    streams = list(streams)
    if not streams:
        raise DimensionError("no streams to aggregate")
    lens = {s.n_samples for s in streams}
    if len(lens) != 1:
        raise DimensionError("streams have unequal lengths")
    rates = {s.sample_rate_hz for s in streams}
    if len(rates) != 1:
        raise DimensionError("streams have unequal sample rates")
    return np.stack([np.asarray(s.samples) for s in streams]), rates.pop()


def aggregate(streams, plan: AggregationPlan) -> IqStream:
    """Interleave ``plan.n_channels`` streams: ``out[k*N + i] = streams[i][k]``."""
    x, rate = _as_matrix(streams)
    if x.shape[0] != plan.n_channels:
        raise DimensionError(f"{x.shape[0]} streams for a {plan.n_channels}-channel plan")
    if not np.isclose(rate, plan.per_channel_rate_hz, rtol=1e-12):
        raise DimensionError(f"stream rate {rate} differs from plan rate {plan.per_channel_rate_hz}")
    return IqStream(x.T.reshape(-1).copy(), plan.composite_rate_hz)


def deaggregate(stream: IqStream, plan: AggregationPlan) -> IqStream:
    """Split a composite back into ``(n_channels, n)`` streams; exact inverse of :func:`aggregate`.

    A composite delayed by ``d`` samples comes back with channel ``i``
    holding what was sent on channel ``i - d`` (mod ``N``), one channel-rate
    sample late for the channels that wrapped around.
    """
    x = np.asarray(stream.samples)
    if x.ndim != 1:
        raise DimensionError("composite stream must be one-dimensional")
    if x.size % plan.n_channels:
        raise DimensionError(f"length {x.size} not divisible by {plan.n_channels} channels")
    out = x.reshape(-1, plan.n_channels).T.copy()
    return IqStream(out, plan.per_channel_rate_hz)


def polyphase_mimo(taps: np.ndarray, n_channels: int) -> np.ndarray:
    """Channel-domain MIMO filter equivalent to filtering the composite by ``taps``.

    Returns ``G`` of shape ``(N, N, n_lags)`` with
    ``y_i[k] = sum_j sum_m G[i, j, m] * x_j[k - m]`` where ``taps[n]`` acts
    at composite delay ``n >= 0``.
    """
    taps = np.asarray(taps)
    n = n_channels
    n_lags = (n - 1 + len(taps) - 1) // n + 1
    g = np.zeros((n, n, n_lags), dtype=np.result_type(taps, float))
    for i in range(n):
        for j in range(n):
            for m in range(n_lags):
                d = i - j + m * n
                if 0 <= d < len(taps):
                    g[i, j, m] = taps[d]
    return g


def write_capture(path, composite: IqStream, plan: AggregationPlan) -> None:
    """Raw capture: 32-byte header then interleaved little-endian float32 I/Q pairs.

    Header (little-endian): 8-byte magic ``IFOFCAP\\0``, uint32 version,
    uint32 n_channels, float64 composite rate in Hz, uint64 samples per
    channel.
    """
    x = np.asarray(composite.samples).ravel()
    if x.size % plan.n_channels:
        raise DimensionError("composite length not divisible by n_channels")
    header = _HEADER.pack(CAPTURE_MAGIC, CAPTURE_VERSION, plan.n_channels,
                          float(composite.sample_rate_hz), x.size // plan.n_channels)
    iq = np.empty(2 * x.size, dtype="<f4")
    iq[0::2] = x.real
    iq[1::2] = x.imag
    with open(Path(path), "wb") as fh:
        fh.write(header)
        fh.write(iq.tobytes())


def read_capture(path) -> tuple[IqStream, AggregationPlan]:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise DimensionError("capture file shorter than its header")
    magic, version, n_ch, rate, n_per = _HEADER.unpack_from(data)
    if magic != CAPTURE_MAGIC:
        raise ValueError("not a fronthaul capture file")
    if version != CAPTURE_VERSION:
        raise ValueError(f"unsupported capture version {version}")
    iq = np.frombuffer(data, dtype="<f4", offset=_HEADER.size)
    if iq.size != 2 * n_ch * n_per:
        raise DimensionError("capture payload length does not match its header")
    x = iq[0::2].astype(np.float64) + 1j * iq[1::2].astype(np.float64)
    return IqStream(x, rate), AggregationPlan(n_ch, rate / n_ch)
