"""NR-style uplink OFDM: resource grids, type-2 DMRS, (de)modulation and
four-carrier frequency stacking.

DFT convention: unitary, ``1/sqrt(N)`` in both directions. A single unit
resource element therefore produces time samples of modulus ``1/sqrt(N)``
and grid energy equals stream energy once the cyclic prefix is removed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.fft as sfft

from ifofsim.errors import DimensionError, LayerCapacityError, MissingDmrsError
from ifofsim.streams import IqStream

MODULATION_ORDERS = {"QPSK": 4, "16QAM": 16, "64QAM": 64, "256QAM": 256}


def normal_cp_lengths(fft_size: int, n_symbols: int = 14) -> tuple[int, ...]:
    """Normal cyclic prefix at 30 kHz spacing.

    The first symbol of every 0.5 ms half-subframe (one slot at 30 kHz) gets
    the long prefix, 352 samples at fft 4096; the rest get 288.
    """
    if fft_size % 64:
        raise ValueError("fft_size must be a multiple of 64 for the normal CP")
    long_cp = 352 * fft_size // 4096
    short_cp = 288 * fft_size // 4096
    return tuple(long_cp if i % 14 == 0 else short_cp for i in range(n_symbols))


@dataclass(frozen=True)
class CarrierNumerology:
    fft_size: int = 4096
    scs_hz: float = 30e3
    n_prb: int = 273
    n_symbols_per_slot: int = 14
    cp_lengths: tuple[int, ...] | None = None
    n_carriers: int = 4
    carrier_spacing_hz: float = 122.88e6
    # symbols actually simulated; resource accounting always uses the full slot
    n_symbols: int = 14

    def __post_init__(self):
        if 12 * self.n_prb > self.fft_size:
            raise DimensionError("12*n_prb exceeds fft_size")
        if not 1 <= self.n_symbols <= self.n_symbols_per_slot:
            raise DimensionError("n_symbols must lie in [1, n_symbols_per_slot]")
        if self.cp_lengths is None:
            object.__setattr__(self, "cp_lengths",
                               normal_cp_lengths(self.fft_size, self.n_symbols_per_slot))
        else:
            object.__setattr__(self, "cp_lengths", tuple(int(c) for c in self.cp_lengths))
        if len(self.cp_lengths) < self.n_symbols:
            raise DimensionError("cp_lengths shorter than n_symbols")
        if self.n_carriers < 1:
            raise DimensionError("n_carriers must be >= 1")

    @property
    def n_subcarriers(self) -> int:
        return 12 * self.n_prb

    @property
    def base_rate_hz(self) -> float:
        return self.fft_size * self.scs_hz

    @property
    def composite_rate_hz(self) -> float:
        return self.n_carriers * self.base_rate_hz

    @property
    def slot_length(self) -> int:
        """Samples per full slot at the base rate."""
        return self.n_symbols_per_slot * self.fft_size + sum(
            self.cp_lengths[: self.n_symbols_per_slot])

    @property
    def stream_length(self) -> int:
        """Samples produced for the simulated symbols at the base rate."""
        return self.n_symbols * self.fft_size + sum(self.cp_lengths[: self.n_symbols])

    def symbol_starts(self) -> np.ndarray:
        """Offset of each simulated symbol's CP from the start of the slot."""
        lens = [self.fft_size + c for c in self.cp_lengths[: self.n_symbols]]
        return np.concatenate([[0], np.cumsum(lens)[:-1]]).astype(int)

    def subcarrier_bins(self) -> np.ndarray:
        """FFT bin of each occupied subcarrier; the occupied band is centred on DC."""
        k = np.arange(self.n_subcarriers) - self.n_subcarriers // 2
        return k % self.fft_size

    def carrier_offsets_hz(self) -> np.ndarray:
        c = np.arange(self.n_carriers)
        return (c - (self.n_carriers - 1) / 2) * self.carrier_spacing_hz

    @property
    def occupied_bandwidth_hz(self) -> float:
        return self.n_subcarriers * self.scs_hz

    @property
    def data_res_per_second(self) -> float:
        """Data resource elements per second per layer over every carrier."""
        symbols_per_s = self.n_symbols_per_slot * self.scs_hz / 15e3 * 1000
        data_frac = (self.n_symbols_per_slot - 2) / self.n_symbols_per_slot
        return self.n_carriers * self.n_subcarriers * data_frac * symbols_per_s


# Type-2 port table: (CDM group, frequency cover, time cover)
_W_PLUS = (1, 1)
_W_MINUS = (1, -1)
TYPE2_PORTS = tuple(
    (group, _W_MINUS if p % 2 else _W_PLUS, _W_MINUS if p >= 6 else _W_PLUS)
    for p, group in enumerate([0, 0, 1, 1, 2, 2, 0, 0, 1, 1, 2, 2])
)


@dataclass(frozen=True)
class DmrsConfig:
    """Front-loaded double-symbol DMRS, configuration type 2.

    Each CDM group ``g`` occupies subcarrier pairs ``6n + 2g + {0, 1}`` on the
    two DMRS symbols; the four ports of a group are separated by +-1 cover
    codes over that 2x2 block.
    """

    config_type: int = 2
    n_dmrs_symbols: int = 2
    max_ports: int = 12
    first_symbol: int = 0
    sequence_seed: int = 0x5A5A
    # sqrt(3): every DMRS symbol carries the same average power per port as data
    amplitude: float = float(np.sqrt(3.0))
    port_signatures: tuple = TYPE2_PORTS

    def __post_init__(self):
        if self.config_type != 2 or self.n_dmrs_symbols != 2 or self.max_ports != 12:
            raise ValueError("only double-symbol configuration type 2 is supported")

    @property
    def symbols(self) -> tuple[int, int]:
        return (self.first_symbol, self.first_symbol + 1)

    def base_sequence(self, n_subcarriers: int) -> np.ndarray:
        """QPSK pilot sequence, shape ``(n_subcarriers, 2)``, shared by all ports."""
        rng = np.random.default_rng(self.sequence_seed)
        bits = rng.integers(0, 2, size=(2, n_subcarriers, 2))
        qpsk = ((1 - 2 * bits[0]) + 1j * (1 - 2 * bits[1])) / np.sqrt(2)
        return qpsk

    def cover(self, port: int, n_subcarriers: int) -> np.ndarray:
        """Cover pattern of one port, shape ``(n_subcarriers, 2)``; zero off-group."""
        group, wf, wt = self.port_signatures[port]
        k = np.arange(n_subcarriers)
        in_group = ((k % 6) // 2) == group
        kprime = k % 2
        w = np.zeros((n_subcarriers, 2))
        wf_arr = np.asarray(wf)[kprime]
        for lp in range(2):
            w[:, lp] = np.where(in_group, wf_arr * wt[lp], 0.0)
        return w

    def pilots(self, port: int, n_subcarriers: int) -> np.ndarray:
        return self.amplitude * self.cover(port, n_subcarriers) * self.base_sequence(n_subcarriers)


@dataclass
class ResourceGrid:
    """Subcarrier x symbol x port array of resource elements."""

    cells: np.ndarray
    dmrs_mask: np.ndarray
    modulation: str = "256QAM"
    n_layers: int | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.cells.ndim == 2:
            self.cells = self.cells[:, :, None]
        if self.dmrs_mask.shape != self.cells.shape[:2]:
            raise DimensionError("dmrs_mask must match the grid's subcarrier x symbol shape")
        if self.modulation not in MODULATION_ORDERS:
            raise ValueError(f"unknown modulation {self.modulation!r}")

    @property
    def n_subcarriers(self) -> int:
        return self.cells.shape[0]

    @property
    def n_symbols(self) -> int:
        return self.cells.shape[1]

    @property
    def n_ports(self) -> int:
        return self.cells.shape[2]

    def data(self) -> np.ndarray:
        """Data resource elements, shape ``(n_data_res, n_ports)``."""
        return self.cells[~self.dmrs_mask]

    def energy(self) -> float:
        return float(np.sum(np.abs(self.cells) ** 2))


def qam_constellation(modulation: str) -> np.ndarray:
    """Square QAM points with unit average power, Gray-labelled per axis."""
    m = MODULATION_ORDERS[modulation]
    side = int(np.sqrt(m))
    levels = np.arange(-(side - 1), side, 2, dtype=float)
    gray = np.arange(side) ^ (np.arange(side) >> 1)
    axis = np.empty(side)
    axis[gray] = levels
    pts = (axis[:, None] + 1j * axis[None, :]).ravel()
    return pts / np.sqrt(np.mean(np.abs(pts) ** 2))


def dmrs_mask_for(numerology: CarrierNumerology, dmrs: DmrsConfig) -> np.ndarray:
    mask = np.zeros((numerology.n_subcarriers, numerology.n_symbols), dtype=bool)
    for s in dmrs.symbols:
        if s < numerology.n_symbols:
            mask[:, s] = True
    return mask


def build_grid(numerology: CarrierNumerology, dmrs: DmrsConfig, n_layers: int,
               rng_seed=None, modulation: str = "256QAM") -> ResourceGrid:
    """Random multi-layer PUSCH grid with front-loaded DMRS on ports 0..n_layers-1."""
    if not 1 <= n_layers <= dmrs.max_ports:
        raise LayerCapacityError(f"{n_layers} layers requested, DMRS supports 1..{dmrs.max_ports}")
    if numerology.n_subcarriers % 6:
        raise DimensionError("type-2 DMRS needs a multiple of 6 subcarriers")
    if numerology.n_symbols < max(dmrs.symbols) + 1:
        raise MissingDmrsError("grid too short to hold the DMRS symbols")
    rng = np.random.default_rng(rng_seed)
    nsc, nsym = numerology.n_subcarriers, numerology.n_symbols
    mask = dmrs_mask_for(numerology, dmrs)
    cells = np.zeros((nsc, nsym, n_layers), dtype=complex)
    const = qam_constellation(modulation)
    n_data = int(np.count_nonzero(~mask))
    idx = rng.integers(0, len(const), size=(n_data, n_layers))
    cells[~mask] = const[idx]
    for p in range(n_layers):
        cells[:, list(dmrs.symbols), p] = dmrs.pilots(p, nsc)
    return ResourceGrid(cells, mask, modulation, n_layers, {"symbol_index": idx})


def ofdm_modulate(grid: ResourceGrid, numerology: CarrierNumerology) -> IqStream:
    """CP-OFDM modulation of every port; returns a ``(n_ports, n)`` stream."""
    if grid.n_subcarriers != numerology.n_subcarriers or grid.n_symbols != numerology.n_symbols:
        raise DimensionError("grid dimensions do not match the numerology")
    n = numerology.fft_size
    spec = np.zeros((grid.n_ports, grid.n_symbols, n), dtype=complex)
    spec[:, :, numerology.subcarrier_bins()] = np.transpose(grid.cells, (2, 1, 0))
    body = sfft.ifft(spec, axis=-1, norm="ortho")
    pieces = []
    for s in range(grid.n_symbols):
        cp = numerology.cp_lengths[s]
        sym = body[:, s]
        pieces.append(sym[:, n - cp:] if cp else sym[:, :0])
        pieces.append(sym)
    return IqStream(np.concatenate(pieces, axis=-1), numerology.base_rate_hz)


def ofdm_demodulate(stream: IqStream, timing_offset: int, numerology: CarrierNumerology,
                    dmrs: DmrsConfig | None = None, window_advance: int = 0,
                    derotate: bool = False, modulation: str = "256QAM") -> ResourceGrid:
    """Strip the CP and DFT each symbol of the slot starting at ``timing_offset``.

    ``window_advance`` moves every FFT window that many samples back into the
    cyclic prefix; this only multiplies subcarrier ``k`` by
    ``exp(-2j*pi*k*advance/N)``, which ``derotate`` removes again.
    """
    x = np.atleast_2d(stream.samples)
    n = numerology.fft_size
    starts = numerology.symbol_starts()
    cps = numerology.cp_lengths[: numerology.n_symbols]
    if window_advance < 0 or window_advance > min(cps, default=0):
        raise DimensionError("window_advance must stay inside the cyclic prefix")
    last = timing_offset + starts[-1] + cps[-1] - window_advance + n
    if timing_offset < 0 or last > x.shape[-1]:
        raise DimensionError(
            f"stream of {x.shape[-1]} samples too short for a slot at offset {timing_offset}")
    idx = np.array([timing_offset + st + cp - window_advance for st, cp in zip(starts, cps)])
    win = x[:, idx[:, None] + np.arange(n)[None, :]]
    spec = sfft.fft(win, axis=-1, norm="ortho")
    bins = numerology.subcarrier_bins()
    cells = np.transpose(spec[:, :, bins], (2, 1, 0))
    if derotate and window_advance:
        k = np.arange(numerology.n_subcarriers) - numerology.n_subcarriers // 2
        cells = cells * np.exp(2j * np.pi * k * window_advance / n)[:, None, None]
    mask = (dmrs_mask_for(numerology, dmrs) if dmrs is not None
            else np.zeros(cells.shape[:2], dtype=bool))
    return ResourceGrid(cells, mask, modulation)


def _carrier_bin_offsets(numerology: CarrierNumerology, n: int) -> np.ndarray:
    exact = numerology.carrier_offsets_hz() * n / numerology.base_rate_hz
    offs = np.round(exact).astype(int)
    if np.any(np.abs(exact - offs) > 1e-9):
        raise DimensionError("carrier offsets do not fall on the record's frequency grid; "
                             "use an even stream length")
    if numerology.n_carriers > 1 and np.min(np.diff(offs)) < n:
        raise DimensionError("carrier spacing smaller than the per-carrier sample rate")
    if np.max(np.abs(offs)) + n / 2 > numerology.n_carriers * n / 2 + 1e-9:
        raise DimensionError("carriers do not fit into the composite band")
    return offs


def stack_carriers(streams, numerology: CarrierNumerology) -> IqStream:
    """Upsample each carrier by ``n_carriers`` and shift it to its slot.

    Implemented as an exact spectral placement: the base-rate spectrum of
    carrier ``c`` lands on the composite bins of its slot, so the operation is
    invertible to rounding error and carriers never leak into each other.
    """
    streams = list(streams)
    if len(streams) != numerology.n_carriers:
        raise DimensionError(f"expected {numerology.n_carriers} carrier streams")
    lens = {s.n_samples for s in streams}
    if len(lens) != 1:
        raise DimensionError("carrier streams have different lengths")
    n = lens.pop()
    m = numerology.n_carriers
    if m == 1:
        return streams[0].with_samples(streams[0].samples)
    offs = _carrier_bin_offsets(numerology, n)
    k = np.fft.fftfreq(n, 1.0 / n).astype(int)
    first = np.asarray(streams[0].samples)
    out = np.zeros(first.shape[:-1] + (m * n,), dtype=complex)
    for s, off in zip(streams, offs):
        spec = sfft.fft(np.asarray(s.samples), axis=-1)
        out[..., (k + off) % (m * n)] += m * spec
    return IqStream(sfft.ifft(out, axis=-1), numerology.composite_rate_hz)


def split_carriers(stream: IqStream, numerology: CarrierNumerology) -> list[IqStream]:
    """Inverse of :func:`stack_carriers`."""
    m = numerology.n_carriers
    if m == 1:
        return [stream.with_samples(stream.samples, numerology.base_rate_hz)]
    total = stream.n_samples
    if total % m:
        raise DimensionError("composite length not divisible by n_carriers")
    n = total // m
    offs = _carrier_bin_offsets(numerology, n)
    k = np.fft.fftfreq(n, 1.0 / n).astype(int)
    spec = sfft.fft(np.asarray(stream.samples), axis=-1)
    return [IqStream(sfft.ifft(spec[..., (k + off) % total] / m, axis=-1),
                     numerology.base_rate_hz) for off in offs]
