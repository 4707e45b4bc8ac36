import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import brentq

from ifofsim.miesm import mi_average, mi_curve, miesm_effective
from ifofsim.nr_waveform import MODULATION_ORDERS


def mi_oracle(modulation, snr_db, n_nodes=120):
    """Constrained capacity of square QAM by 2-D Gauss-Hermite quadrature.

    Works on the complex constellation directly (no PAM split).
    """
    side = int(np.sqrt(MODULATION_ORDERS[modulation]))
    a = np.arange(-(side - 1), side, 2.0)
    pts = (a[:, None] + 1j * a[None, :]).ravel()
    pts = pts / np.sqrt(np.mean(np.abs(pts) ** 2))
    m = pts.size
    s2 = 10 ** (-snr_db / 10)
    t, w = np.polynomial.hermite.hermgauss(n_nodes)
    # complex noise with variance s2: n = sqrt(s2) * (t1 + j t2)
    n = np.sqrt(s2) * (t[:, None] + 1j * t[None, :])
    ww = (w[:, None] * w[None, :]) / np.pi
    total = 0.0
    for x in pts:
        d = x - pts
        e = -(np.abs(d[:, None, None] + n[None]) ** 2 - np.abs(n[None]) ** 2) / s2
        lse = np.logaddexp.reduce(e, axis=0)
        total += np.sum(ww * lse) / np.log(2)
    return np.log2(m) - total / m


def mi_oracle_split(modulation, snr_db, n_nodes=300):
    """Same capacity as two independent PAM channels, by 1-D Gauss-Hermite."""
    side = int(np.sqrt(MODULATION_ORDERS[modulation]))
    a = np.arange(-(side - 1), side, 2.0)
    a = a * np.sqrt(0.5 / np.mean(a ** 2))
    s2 = 0.5 * 10 ** (-snr_db / 10)  # per-axis noise variance
    t, w = np.polynomial.hermite.hermgauss(n_nodes)
    n = np.sqrt(2 * s2) * t
    d = a[:, None] - a[None, :]
    e = -((d[:, :, None] + n) ** 2 - n ** 2) / (2 * s2)
    lse = np.logaddexp.reduce(e, axis=1)
    return 2 * (np.log2(side) - np.sum(w * lse) / (np.sqrt(np.pi) * np.log(2) * side))


@pytest.mark.parametrize("mod", ["QPSK", "16QAM", "64QAM"])
@pytest.mark.parametrize("snr_db", [-10.0, 0.0, 7.5, 15.0, 22.0])
def test_table_matches_quadrature(mod, snr_db):
    got = mi_curve(mod).mi(10 ** (snr_db / 10))
    assert got == pytest.approx(mi_oracle(mod, snr_db), abs=2e-3)


@pytest.mark.parametrize("snr_db", [-10.0, 0.0, 7.5, 15.0, 22.0, 30.0])
def test_table_matches_quadrature_256qam(snr_db):
    # the split is exact: both quadratures agree at equal node counts
    assert mi_oracle_split("16QAM", snr_db, 64) == pytest.approx(mi_oracle("16QAM", snr_db, 64),
                                                                 abs=1e-9)
    got = mi_curve("256QAM").mi(10 ** (snr_db / 10))
    assert got == pytest.approx(mi_oracle_split("256QAM", snr_db), abs=2e-3)


def test_table_strictly_monotone():
    for mod in MODULATION_ORDERS:
        c = mi_curve(mod)
        assert np.all(np.diff(c.ln_def) < 0)
        g = np.linspace(-25, 45, 2001)
        d = c.deficit(10 ** (g / 10))
        # the deficit underflows to 0.0 for QPSK above ~31 dB
        pos = d > 0
        assert np.all(np.diff(d[pos]) < 0) and np.all(np.diff(d) <= 0)
        assert np.all(np.diff(c.mi(10 ** (g / 10))) >= 0)


def test_inverse_round_trip():
    c = mi_curve("256QAM")
    snr = 10 ** (np.linspace(-30, 50, 801) / 10)
    back = c.inverse_deficit(c.deficit(snr))
    assert np.allclose(10 * np.log10(back), 10 * np.log10(snr), atol=1e-9)


def test_two_prb_oracle():
    """{0, 20} dB: solve I(g) = mean I with the quadrature curve and brentq."""
    target = 0.5 * (mi_oracle_split("256QAM", 0.0) + mi_oracle_split("256QAM", 20.0))
    g_ref = brentq(lambda g: mi_oracle_split("256QAM", g) - target, 0.0, 20.0, xtol=1e-6)
    got = 10 * np.log10(miesm_effective([1.0, 100.0]))
    assert got == pytest.approx(g_ref, abs=0.05)
    # regression pin
    assert got == pytest.approx(11.2173, abs=1e-3)


def test_fixed_point_exact():
    for g_db in (-15.0, 0.0, 13.37, 30.0, 45.0):
        g = 10 ** (g_db / 10)
        assert 10 * np.log10(miesm_effective([g] * 7)) == pytest.approx(g_db, abs=0.05)


sinrs = st.lists(st.floats(-20, 45), min_size=1, max_size=24).map(
    lambda v: 10 ** (np.array(v) / 10))


@settings(max_examples=200, deadline=None)
@given(sinrs)
def test_effective_bounds(s):
    g = miesm_effective(s)
    assert s.min() * (1 - 1e-9) <= g <= s.max() * (1 + 1e-9)


@settings(max_examples=150, deadline=None)
@given(sinrs, st.randoms(use_true_random=False))
def test_permutation_invariance(s, r):
    perm = list(range(s.size))
    r.shuffle(perm)
    assert miesm_effective(s[perm]) == pytest.approx(miesm_effective(s), rel=1e-12)


@settings(max_examples=150, deadline=None)
@given(sinrs, st.integers(0, 23), st.floats(0.1, 10))
def test_monotone_in_each_prb(s, idx, up_db):
    i = idx % s.size
    t = s.copy()
    t[i] *= 10 ** (up_db / 10)
    assert miesm_effective(t) >= miesm_effective(s) * (1 - 1e-12)


def test_empty_input_rejected():
    with pytest.raises(ValueError):
        miesm_effective([])


def test_mi_average_axis():
    s = np.array([[1.0, 100.0], [10.0, 10.0]])
    out = mi_average(s, axis=1)
    assert out[1] == pytest.approx(10.0, rel=1e-9)
    assert out[0] == pytest.approx(miesm_effective([1.0, 100.0]))
