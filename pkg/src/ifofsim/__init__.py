"""Link-level simulator of an IF-over-fiber massive-MIMO uplink fronthaul.

The pipeline chains NR-style OFDM waveform generation, a clustered geometric
MIMO channel, TDMA sample aggregation, a single-sideband optical link with
uncompensated chromatic dispersion, a Kramers-Kronig receiver and a
centralized MMSE baseband unit.
"""

from ifofsim.streams import IqStream

__version__ = "0.1.0"

__all__ = ["IqStream", "__version__"]
