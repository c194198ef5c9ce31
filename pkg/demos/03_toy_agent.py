"""
Learning when to hand over on a crossing trace
==============================================

The UE drives from one base station towards another. Without shadowing the SINR
curves cross at a point that follows from the path-loss model alone, so the
learned handover time can be checked against it.

This trains for 200k steps, which takes about a minute on one CPU core.
"""

import numpy as np

from nrhandover.env import EnvConfig, HandoverEnv
from nrhandover.evaluation import run_agent, score
from nrhandover.ppo import PpoConfig, train
from nrhandover.protocol import EventKind, ProtocolConfig
from nrhandover.scenarios import crossing_traces

geometry = dict(speed_kmh=120.0, d_bs=100.0, lead_m=15.0, jitter_m=15.0)
train_set = crossing_traces(40, seed=1, **geometry)
held_out = crossing_traces(20, seed=2, **geometry)

cfg = PpoConfig(total_timesteps=200_000, n_envs=8, rollout_len=256, lr=2e-4, ent_coef=0.01, phase1_fraction=1.0)
proto = ProtocolConfig()
traces = [c.trace for c in train_set]
model, log = train(lambda i: HandoverEnv(traces, EnvConfig(), proto, seed=10 + i), cfg)
print("final entropy", log.rows[-1]["entropy"])

###############################################################################
# Greedy evaluation: when does the last handover complete relative to the crossing?
# Some seeds learn to dither around the crossing; they show up as several completions.

runs = run_agent(model, [c.trace for c in held_out], proto)
for c, r in zip(held_out, runs):
    done = [e.tick for e in r.events if e.kind is EventKind.HO_COMPLETE]
    print(f"crossing at tick {c.crossing_tick:4d}, {len(done)} handover(s), last offset",
          done[-1] - c.crossing_tick if done else "never")
print("mean relative rate", np.mean([rep.gamma_r for rep in score([c.trace for c in held_out], runs)]))
