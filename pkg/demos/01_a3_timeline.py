"""
Event-A3 handover on a two-cell trace
=====================================

A neighbour cell becomes 2 dB stronger than the serving cell at tick 100. With a
1 dB hysteresis that satisfies the entering condition, so time-to-trigger starts
counting; preparation, command and completion follow at fixed delays.
"""

import numpy as np

from nrhandover.channel import FilterConfig, RawTrace
from nrhandover.protocol import ProtocolConfig, run_baseline

# RSRP in dBm: serving at -80, neighbour at -90 until tick 100, then -78
rsrp = np.array([[-80.0, -78.0 if t >= 100 else -90.0] for t in range(200)])
sinr = np.tile([10.0, 5.0], (200, 1))
trace = RawTrace(0, 0.01, rsrp, sinr, 0, {})

###############################################################################
# Filtering is switched off so the ticks line up with the timer arithmetic:
# TTT 40 ms -> prep start at 104, 50 ms of preparation -> command at 109,
# 40 ms of execution -> completion at 113.

res = run_baseline(trace, ProtocolConfig(), FilterConfig(l1_window=1, l3_k=0))
for e in res.events:
    print(f"tick {e.tick:4d}  {e.kind.name:14s} serving={e.serving} target={e.target}")

# during execution the UE has no serving cell (-1)
print("serving around the handover:", res.serving[106:116].tolist())
