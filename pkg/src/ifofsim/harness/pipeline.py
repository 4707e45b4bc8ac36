"""End-to-end execution of one scenario point.

waveform -> wireless channel -> aggregate -> SSB modulate -> fiber ->
photodetect -> KK -> de-aggregate -> BBU, or the same chain with the
optical stages bypassed (ideal fronthaul).

Seeding: every point draws from ``SeedSequence([seed, n_ues, drop])``.
SNR, fiber length and the ideal-FH flag do not enter the seed, so points
that differ only in those see the same UE drop, payload and noise
realization and can be compared pairwise.
"""

from __future__ import annotations

import contextlib
import dataclasses
import time
from dataclasses import dataclass

import numpy as np

from ifofsim import bbu
from ifofsim.errors import StageError
from ifofsim.fh_aggregator import aggregate, deaggregate
from ifofsim.kk_receiver import carrier_remove_downconvert, kk_reconstruct, pre_mimo_sinr
from ifofsim.nr_waveform import (DmrsConfig, build_grid, ofdm_demodulate, ofdm_modulate,
                                 split_carriers, stack_carriers)
from ifofsim.optical_link import (fiber_propagate, launched_composite, photodetect,
                                  ssb_modulate)
from ifofsim.streams import IqStream
from ifofsim.wireless_channel import ChannelBand, apply_channel, draw_channel

from ifofsim.harness.config import RunConfig


@dataclass(frozen=True)
class Point:
    snr_db: float
    n_ues: int
    length_km: float = 0.0
    drop: int = 0
    ideal_fh: bool = False


def point_seed(master: int, n_ues: int, drop: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(master), int(n_ues), int(drop)])


@contextlib.contextmanager
def stage(name: str):
    try:
        yield
    except StageError:
        raise
    except Exception as exc:
        raise StageError(name, exc) from exc


@dataclass
class PointTrace:
    """Intermediate signals of a run, kept only when asked for."""

    tx_grids: list
    composite_tx: IqStream | None = None
    composite_rx: IqStream | None = None
    field: object = None
    photocurrent: IqStream | None = None


def subcarrier_freqs(num) -> np.ndarray:
    """Occupied subcarrier frequencies of every carrier relative to the stream centre."""
    k = np.arange(num.n_subcarriers) - num.n_subcarriers // 2
    return (num.carrier_offsets_hz()[:, None] + k[None, :] * num.scs_hz).ravel()


def optical_link(composite: IqStream, cfg: RunConfig, length_km: float, rng_seed=None,
                 trace: PointTrace | None = None) -> tuple[IqStream, dict]:
    """Carry a composite over the fiber and back; returns it at the same length and rate."""
    fcfg = dataclasses.replace(cfg.fiber, length_km=float(length_km))
    rate = composite.sample_rate_hz
    bw = fcfg.effective_bandwidth(rate)
    with stage("optical_link"):
        field = ssb_modulate(composite, fcfg)
        info = {"measured_cspr_db": field.measured_cspr_db()}
        field = fiber_propagate(field, fcfg)
        current = photodetect(field, fcfg, rng_seed)
    info["clip_rate"] = current.meta["clip_rate"]
    if trace is not None:
        trace.field, trace.photocurrent = field, current
    del field
    with stage("kk_receiver"):
        rec = kk_reconstruct(current, cfg.kk, bandwidth_hz=fcfg.photocurrent_bandwidth(rate),
                             output_rate_hz="internal")
        del current
        info["clamp_count"] = rec.meta["clamp_count"]
        out = carrier_remove_downconvert(rec, fcfg.if_hz, rate, bw, n_out=composite.n_samples)
    return IqStream(out.samples, rate), info


def run_point(cfg: RunConfig, point: Point, seed: int | None = None, keep_trace: bool = False):
    """Simulate one point and return its :class:`~ifofsim.bbu.CellReport`.

    With ``keep_trace`` the intermediate signals are returned as well, as
    ``(report, trace)``.
    """
    t0 = time.perf_counter()
    master = cfg.seed if seed is None else seed
    ss_grid, ss_chan, ss_noise, ss_pd = point_seed(master, point.n_ues, point.drop).spawn(4)
    num = cfg.numerology
    dmrs = DmrsConfig()
    sc = dataclasses.replace(cfg.scenario, n_ues=point.n_ues, target_rx_snr_db=point.snr_db)
    nl = sc.n_layers
    g = cfg.guard_samples

    with stage("nr_waveform"):
        grids = [build_grid(num, dmrs, nl, s, cfg.modulation) for s in ss_grid.spawn(num.n_carriers)]
        streams = []
        for grid in grids:
            x = ofdm_modulate(grid, num)
            streams.append(x.with_samples(np.pad(x.samples, ((0, 0), (g, g)))))
        tx = stack_carriers(streams, num)
    with stage("wireless_channel"):
        band = ChannelBand(num.composite_rate_hz, subcarrier_freqs(num), num.base_rate_hz)
        chan = draw_channel(sc, ss_chan, band)
        rx = apply_channel(tx, chan, ss_noise, add_noise=cfg.antenna_noise)

    trace = PointTrace(grids) if keep_trace else None
    info = {}
    pre = float("nan")
    plan = cfg.aggregation
    with stage("fh_aggregator"):
        comp = aggregate(rx.retimed(plan.per_channel_rate_hz), plan)
    if point.ideal_fh:
        back = comp
    else:
        back, info = optical_link(comp, cfg, point.length_km, ss_pd, trace)
        with stage("kk_receiver"):
            # against what was put on the fiber, so the band limit is not counted
            launched = launched_composite(comp, cfg.fiber)
            pre = pre_mimo_sinr(back, launched)
            del launched
    if trace is not None:
        trace.composite_tx, trace.composite_rx = comp, back
    with stage("fh_aggregator"):
        ant = deaggregate(back, plan).retimed(num.composite_rate_hz)

    data_syms = [s for s in range(num.n_symbols) if s not in dmrs.symbols]
    adv = min(num.cp_lengths[: num.n_symbols]) // 2
    sinrs, evms, offsets, noise = [], [], [], []
    with stage("bbu"):
        for c, xc in enumerate(split_carriers(ant, num)):
            off = bbu.timing_sync(xc, num, search=(0, 2 * g))
            rgrid = ofdm_demodulate(xc, off, num, dmrs, window_advance=adv, derotate=True,
                                    modulation=cfg.modulation)
            est = bbu.channel_estimate(rgrid, dmrs, nl)
            y = rgrid.cells[:, data_syms, :]
            x_hat, sinr = bbu.mmse_equalize(y, est)
            gain = bbu.mmse_bias(est)
            evms.append(bbu.evm(x_hat / gain[:, None, :], grids[c].cells[:, data_syms, :]))
            sinrs.append(sinr)
            offsets.append(off - g)
            noise.append(est.noise_var_est)
        ues = bbu.ue_reports(sinrs, chan.ue_of_layer, num.data_res_per_second, cfg.modulation)

    meta = dict(info)
    meta.update(evm=float(np.mean(evms)), sync_error=offsets,
                noise_var_est=float(np.mean(noise)), noise_var_true=chan.re_noise_power,
                runtime_s=time.perf_counter() - t0, profile=cfg.profile)
    report = bbu.CellReport(ues, point.snr_db, point.n_ues,
                            point.length_km, master, point.drop,
                            point.ideal_fh, pre, meta)
    return (report, trace) if keep_trace else report
