"""Sampled waveform container shared by every stage of the pipeline."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class IqStream:
    """Uniformly sampled waveform.

    ``samples`` is 1-D for a single stream or 2-D ``(n_channels, n_samples)``
    for a bundle of equally long streams sharing one clock.

    Parameters
    ----------
    samples : ndarray
        Complex (or real) samples.
    sample_rate_hz : float
        Sampling rate.
    center_freq_hz : float
        Frequency that sample-domain DC corresponds to.
    """

    samples: np.ndarray
    sample_rate_hz: float
    center_freq_hz: float = 0.0
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        self.samples = np.asarray(self.samples)
        if self.sample_rate_hz <= 0:
            raise ValueError("sample_rate_hz must be positive")

    @property
    def n_samples(self) -> int:
        return self.samples.shape[-1]

    @property
    def n_channels(self) -> int:
        return 1 if self.samples.ndim == 1 else self.samples.shape[0]

    @property
    def duration_s(self) -> float:
        return self.n_samples / self.sample_rate_hz

    def power(self) -> float:
        """Mean power per sample over every channel."""
        return float(np.mean(np.abs(self.samples) ** 2))

    def channel(self, i: int) -> IqStream:
        if self.samples.ndim == 1:
            if i != 0:
                raise IndexError(i)
            return self
        return IqStream(self.samples[i], self.sample_rate_hz, self.center_freq_hz)

    def with_samples(self, samples, sample_rate_hz=None) -> IqStream:
        return IqStream(
            samples,
            self.sample_rate_hz if sample_rate_hz is None else sample_rate_hz,
            self.center_freq_hz,
            dict(self.meta),
        )

    def retimed(self, sample_rate_hz: float) -> IqStream:
        """Same samples, relabelled clock.

        Used to carry desk-scale waveforms over a fronthaul clock that is
        faster than their native numerology rate.
        """
        return IqStream(self.samples, sample_rate_hz, self.center_freq_hz, dict(self.meta))

    @classmethod
    def stack(cls, streams) -> IqStream:
        streams = list(streams)
        if not streams:
            raise ValueError("no streams to stack")
        rate = streams[0].sample_rate_hz
        for s in streams:
            if s.sample_rate_hz != rate:
                raise ValueError("streams have different sample rates")
        return cls(np.stack([s.samples for s in streams]), rate, streams[0].center_freq_hz)
