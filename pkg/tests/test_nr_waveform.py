import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ifofsim.errors import DimensionError, LayerCapacityError
from ifofsim.nr_waveform import (CarrierNumerology, DmrsConfig, ResourceGrid, build_grid,
                                 normal_cp_lengths, ofdm_demodulate, ofdm_modulate,
                                 qam_constellation, split_carriers, stack_carriers)
from ifofsim.streams import IqStream

from conftest import crandn


def test_full_scale_numerology():
    num = CarrierNumerology()
    assert num.base_rate_hz == pytest.approx(122.88e6)
    assert num.composite_rate_hz == pytest.approx(491.52e6)
    assert num.cp_lengths[0] == 352 and set(num.cp_lengths[1:]) == {288}
    assert num.slot_length == 61440  # 0.5 ms at 122.88 MS/s
    assert num.n_subcarriers == 3276
    assert num.occupied_bandwidth_hz == pytest.approx(98.28e6)
    # 4 carriers x 3276 subcarriers x 12 data symbols per 0.5 ms
    assert num.data_res_per_second == pytest.approx(4 * 3276 * 24000)


def test_cp_scaling():
    assert normal_cp_lengths(1024)[:2] == (88, 72)
    with pytest.raises(ValueError):
        normal_cp_lengths(1000)


@pytest.mark.parametrize("mod,m", [("QPSK", 4), ("16QAM", 16), ("64QAM", 64), ("256QAM", 256)])
def test_constellation_unit_power(mod, m):
    c = qam_constellation(mod)
    assert c.size == m and np.unique(np.round(c, 12)).size == m
    assert np.mean(np.abs(c) ** 2) == pytest.approx(1.0)


def test_dmrs_covers_orthogonal(dmrs):
    nsc = 36
    blocks = []
    for p in range(12):
        w = dmrs.cover(p, nsc)
        blocks.append(w)
    # brute force over each 2x2 block of every CDM group
    for p in range(12):
        for q in range(12):
            ip = np.sum(blocks[p] * blocks[q])
            if p == q:
                assert ip == pytest.approx(2 * nsc / 3)
            else:
                assert ip == 0
    for p in range(12):
        for g in range(3):
            for n in range(nsc // 6):
                sl = slice(6 * n + 2 * g, 6 * n + 2 * g + 2)
                for q in range(12):
                    if q != p:
                        assert np.sum(blocks[p][sl] * blocks[q][sl]) == 0


def test_dmrs_power_matches_data(small_num, dmrs):
    g = build_grid(small_num, dmrs, 1, 0)
    d0 = g.cells[:, 0, 0]
    assert np.mean(np.abs(d0) ** 2) == pytest.approx(1.0)
    assert np.mean(np.abs(g.data()) ** 2) == pytest.approx(1.0, rel=0.05)


def test_layer_capacity(small_num, dmrs):
    build_grid(small_num, dmrs, 12, 0)
    with pytest.raises(LayerCapacityError):
        build_grid(small_num, dmrs, 13, 0)


def test_grid_is_seeded(small_num, dmrs):
    a = build_grid(small_num, dmrs, 2, 5).cells
    b = build_grid(small_num, dmrs, 2, 5).cells
    c = build_grid(small_num, dmrs, 2, 6).cells
    assert np.array_equal(a, b) and not np.array_equal(a, c)


def test_single_re_amplitude(small_num):
    cells = np.zeros((small_num.n_subcarriers, small_num.n_symbols), dtype=complex)
    cells[5, 3] = 1.0
    grid = ResourceGrid(cells, np.zeros(cells.shape, bool))
    x = ofdm_modulate(grid, small_num).samples[0]
    st0 = small_num.symbol_starts()[3]
    body = x[st0 + small_num.cp_lengths[3]: st0 + small_num.cp_lengths[3] + small_num.fft_size]
    assert np.allclose(np.abs(body), 1 / np.sqrt(small_num.fft_size))


def test_modulate_demodulate_roundtrip(small_num, dmrs):
    g = build_grid(small_num, dmrs, 3, 1)
    tx = ofdm_modulate(g, small_num)
    assert tx.samples.shape == (3, small_num.slot_length)
    rx = ofdm_demodulate(tx, 0, small_num, dmrs)
    assert np.max(np.abs(rx.cells - g.cells)) < 1e-12
    # unitary transform: energy without the CP equals grid energy
    assert rx.energy() == pytest.approx(g.energy())


def test_window_advance_derotation(small_num, dmrs):
    g = build_grid(small_num, dmrs, 1, 1)
    x = ofdm_modulate(g, small_num)
    padded = IqStream(np.pad(x.samples, ((0, 0), (40, 40))), x.sample_rate_hz)
    a = ofdm_demodulate(padded, 40, small_num, dmrs, window_advance=30, derotate=True)
    assert np.max(np.abs(a.cells - g.cells)) < 1e-12
    b = ofdm_demodulate(padded, 40, small_num, dmrs, window_advance=30)
    k = np.arange(small_num.n_subcarriers) - small_num.n_subcarriers // 2
    ramp = np.exp(-2j * np.pi * k * 30 / small_num.fft_size)
    assert np.allclose(b.cells[:, :, 0], g.cells[:, :, 0] * ramp[:, None])
    with pytest.raises(DimensionError):
        ofdm_demodulate(padded, 40, small_num, dmrs, window_advance=500)


def test_stream_too_short(small_num):
    with pytest.raises(DimensionError):
        ofdm_demodulate(IqStream(np.zeros(100, complex), 1.0), 0, small_num)


def test_stack_split_exact(rng):
    num = CarrierNumerology(fft_size=256, n_prb=16, n_carriers=4, carrier_spacing_hz=7.68e6)
    streams = [IqStream(crandn(rng, 2, 400), num.base_rate_hz) for _ in range(4)]
    comp = stack_carriers(streams, num)
    assert comp.n_samples == 1600
    assert comp.sample_rate_hz == pytest.approx(num.composite_rate_hz)
    back = split_carriers(comp, num)
    for s, b in zip(streams, back):
        assert np.max(np.abs(s.samples - b.samples)) < 1e-12


def test_carriers_land_in_their_slots(rng):
    num = CarrierNumerology(fft_size=256, n_prb=16, n_carriers=4, carrier_spacing_hz=7.68e6)
    n = 400
    t = np.arange(n)
    streams = [IqStream(np.zeros(n, complex), num.base_rate_hz) for _ in range(4)]
    streams[2] = IqStream(np.exp(2j * np.pi * 10 * t / n), num.base_rate_hz)
    comp = stack_carriers(streams, num)
    spec = np.abs(np.fft.fft(comp.samples))
    f = np.fft.fftfreq(4 * n, 1 / comp.sample_rate_hz)
    peak = f[np.argmax(spec)]
    expected = num.carrier_offsets_hz()[2] + 10 * num.base_rate_hz / n
    assert peak == pytest.approx(expected)
    # the other carriers stay empty
    for c, s in enumerate(split_carriers(comp, num)):
        if c != 2:
            assert np.max(np.abs(s.samples)) < 1e-12


def test_odd_length_rejected(rng):
    num = CarrierNumerology(fft_size=256, n_prb=16, n_carriers=4, carrier_spacing_hz=7.68e6)
    streams = [IqStream(crandn(rng, 401), num.base_rate_hz) for _ in range(4)]
    with pytest.raises(DimensionError):
        stack_carriers(streams, num)


@settings(max_examples=15, deadline=None)
@given(st.integers(1, 12), st.integers(0, 2 ** 31 - 1),
       st.sampled_from(["QPSK", "16QAM", "256QAM"]))
def test_roundtrip_property(n_layers, seed, mod):
    num = CarrierNumerology(fft_size=128, n_prb=8, n_carriers=1, n_symbols=4)
    g = build_grid(num, DmrsConfig(), n_layers, seed, mod)
    rx = ofdm_demodulate(ofdm_modulate(g, num), 0, num, DmrsConfig())
    assert np.max(np.abs(rx.cells - g.cells)) < 1e-12
