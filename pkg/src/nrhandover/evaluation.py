"""Drive whole traces with the A3 baseline or a trained policy and score them."""
from __future__ import annotations

from dataclasses import replace
from typing import Sequence

import numpy as np

from .channel import FilterConfig, RawTrace
from .env import EnvConfig, HandoverEnv
from .metrics import EvalReport, RateConfig, evaluate_run
from .protocol import ProtocolConfig, RunResult, run_baseline
from .ppo.model import PpoModel


def run_agent(model: PpoModel, traces: Sequence[RawTrace], protocol: ProtocolConfig = ProtocolConfig(),
              env_cfg: EnvConfig = EnvConfig()) -> list[RunResult]:
    """Greedy policy over each full trace, no termination, no BS shuffling.

    Traces are stepped in lockstep so the policy network runs on one batch per tick.
    """
    cfg = replace(env_cfg, evaluate=True, shuffle_bs=False,
                  max_episode_ticks=max(t.n_ticks for t in traces))
    envs = [HandoverEnv([t], cfg, protocol) for t in traces]
    obs = np.stack([env.reset(trace_index=0).as_array() for env in envs])
    live = [env.tick < env._max_tick for env in envs]
    while any(live):
        idx = [i for i, ok in enumerate(live) if ok]
        actions = model.greedy(obs[idx])
        for i, a in zip(idx, actions):
            res = envs[i].step(int(a))
            obs[i] = res.next_state.as_array()
            if res.truncated or res.terminated:
                live[i] = False
    return [RunResult(env.events, np.array(env.serving_timeline)) for env in envs]


def score(traces: Sequence[RawTrace], runs: Sequence[RunResult],
          rate_cfg: RateConfig = RateConfig()) -> list[EvalReport]:
    return [evaluate_run(t, r.events, r.serving, rate_cfg) for t, r in zip(traces, runs, strict=True)]


def evaluate_baseline(traces: Sequence[RawTrace], protocol: ProtocolConfig,
                      filter_cfg: FilterConfig = FilterConfig(),
                      rate_cfg: RateConfig = RateConfig()) -> list[EvalReport]:
    return score(traces, [run_baseline(t, protocol, filter_cfg) for t in traces], rate_cfg)


def evaluate_agent(model: PpoModel, traces: Sequence[RawTrace], protocol: ProtocolConfig,
                   env_cfg: EnvConfig = EnvConfig(), rate_cfg: RateConfig = RateConfig()) -> list[EvalReport]:
    return score(traces, run_agent(model, traces, protocol, env_cfg), rate_cfg)
