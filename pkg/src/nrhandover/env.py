"""Episodic handover environment around a trace and the connection engine.

Observation ``s_t`` is built from the SINR row of tick ``t`` and the connection state
after tick ``t`` was processed; the action returned for it is applied on tick ``t+1``.
``reset`` processes tick 0 with no action.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .channel import RawTrace
from .protocol import (
    TICK_MS,
    ConnectionState,
    Event,
    EventKind,
    ProtocolConfig,
    agent_step,
    initial_serving,
)


@dataclass(frozen=True)
class EnvConfig:
    reward_c: float = 0.95
    max_episode_ticks: int = 6000
    phase: int = 1
    shuffle_bs: bool = True
    clip_lo_db: float = -10.0
    clip_hi_db: float = 10.0
    # evaluation mode: never terminate on PP/RLF, only truncate at the horizon
    evaluate: bool = False

    def __post_init__(self):
        if not self.reward_c > 0:
            raise ValueError("reward_c must be > 0")
        if self.max_episode_ticks <= 0:
            raise ValueError("max_episode_ticks must be > 0")
        if self.phase not in (1, 2):
            raise ValueError("phase must be 1 or 2")
        if not self.clip_lo_db < self.clip_hi_db:
            raise ValueError("clip bounds out of order")


@dataclass
class StateVector:
    bs_onehot: np.ndarray
    sinr_scaled: np.ndarray
    pp_flag: int

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.bs_onehot, self.sinr_scaled, [float(self.pp_flag)]])

    @property
    def serving(self) -> int:
        return int(np.argmax(self.bs_onehot))

    def __len__(self):
        return 2 * len(self.bs_onehot) + 1


@dataclass
class StepResult:
    next_state: StateVector
    reward: float
    terminated: bool
    truncated: bool
    info: dict = field(default_factory=dict)


def scale_sinr(sinr_db, lo: float = -10.0, hi: float = 10.0) -> np.ndarray:
    return (np.clip(np.asarray(sinr_db, dtype=float), lo, hi) - lo) / (hi - lo)


def encode_state(sinr_db: Sequence[float], serving: int, pp_elapsed_ms: float | None, *,
                 mts_ms: int = 1000, lo: float = -10.0, hi: float = 10.0) -> StateVector:
    """Build the (one-hot, scaled SINR, PP flag) observation.

    ``pp_elapsed_ms`` is the time since the last completed handover, or None if there
    has been none.
    """
    n = len(sinr_db)
    if not 0 <= serving < n:
        raise ValueError(f"serving BS {serving} out of range for N={n}")
    onehot = np.zeros(n)
    onehot[serving] = 1.0
    pp = int(pp_elapsed_ms is not None and pp_elapsed_ms < mts_ms)
    return StateVector(onehot, scale_sinr(sinr_db, lo, hi), pp)


def compute_reward(state: StateVector, events: Sequence[Event], c: float, *, in_service: bool = True) -> float:
    """SINR term with best-cell bonus, ping-pong penalty, and out-of-sync / RLF penalty."""
    kinds = {e.kind for e in events}
    if in_service:
        q = state.sinr_scaled[state.serving]
        r_sinr = q + c if q >= state.sinr_scaled.max() else q
    else:
        r_sinr = 0.0
    r_pp = -c if EventKind.PP in kinds else 0.0
    if EventKind.RLF in kinds:
        r_rlf = -2.0 * c
    elif EventKind.OOS in kinds:
        r_rlf = -c
    else:
        r_rlf = 0.0
    return float(r_sinr + r_pp + r_rlf)


def check_termination(events: Sequence[Event], tick: int, phase: int, *, max_tick: int,
                      evaluate: bool = False) -> tuple[bool, bool]:
    """(terminated, truncated). ``max_tick`` is the last tick the episode may process."""
    if phase not in (1, 2):
        raise ValueError("phase must be 1 or 2")
    kinds = {e.kind for e in events}
    terminated = False
    if not evaluate:
        terminated = EventKind.RLF in kinds or (phase == 2 and EventKind.PP in kinds)
    truncated = not terminated and tick >= max_tick
    return terminated, truncated


class HandoverEnv:
    """Single-UE handover environment over a dataset of traces.

    Episodes are seeded by ``(seed, episode index)``: the trace choice and the BS
    permutation of episode ``k`` depend on nothing else.
    """

    def __init__(self, dataset: Sequence[RawTrace], cfg: EnvConfig = EnvConfig(),
                 protocol: ProtocolConfig = ProtocolConfig(), seed: int = 0):
        if len(dataset) == 0:
            raise ValueError("dataset is empty")
        n = {t.n_bs for t in dataset}
        if len(n) != 1:
            raise ValueError(f"traces disagree on the number of BSs: {sorted(n)}")
        self.dataset = list(dataset)
        self.n_bs = n.pop()
        self.cfg = cfg
        self.protocol = protocol
        self.seed = seed
        self.episode = 0
        self.perm = np.arange(self.n_bs)
        self.trace_index = 0
        self._sinr: list[list[float]] = []
        self._sinr_arr = np.empty((0, self.n_bs))
        self.tick = 0
        self.conn: ConnectionState | None = None
        self.events: list[Event] = []
        self.serving_timeline: list[int] = []

    @property
    def obs_size(self) -> int:
        return 2 * self.n_bs + 1

    def set_phase(self, phase: int) -> None:
        self.cfg = EnvConfig(**{**self.cfg.__dict__, "phase": phase})

    def reset(self, seed: int | None = None, trace_index: int | None = None) -> StateVector:
        if seed is not None:
            self.seed, self.episode = seed, 0
        rng = np.random.default_rng([self.seed, self.episode])
        self.episode += 1
        pick = int(rng.integers(len(self.dataset)))
        self.trace_index = pick if trace_index is None else trace_index
        self.perm = rng.permutation(self.n_bs) if self.cfg.shuffle_bs else np.arange(self.n_bs)
        trace = self.dataset[self.trace_index]
        self._sinr_arr = trace.sinr_db[:, self.perm]
        self._sinr = self._sinr_arr.tolist()
        self.tick = 0
        self.events = []
        self.conn = ConnectionState.initial(initial_serving(self._sinr_arr), self.n_bs)
        self.conn, ev = agent_step(self.conn, 0, None, self._sinr[0], self.protocol)
        self.events.extend(ev)
        self.serving_timeline = [self._serving_now()]
        self._steps = 0
        self._max_tick = min(len(self._sinr) - 1, self.cfg.max_episode_ticks)
        return self._observe()

    def _serving_now(self) -> int:
        return self.conn.serving_bs if self.conn.in_service else -1

    def _observe(self) -> StateVector:
        last = self.conn.last_ho_complete_t
        elapsed = None if last is None else (self.tick - last) * TICK_MS
        return encode_state(self._sinr[self.tick], self.conn.serving_bs, elapsed,
                            mts_ms=self.protocol.timing.mts_ms,
                            lo=self.cfg.clip_lo_db, hi=self.cfg.clip_hi_db)

    def step(self, action: int) -> StepResult:
        if not 0 <= action < self.n_bs:
            raise ValueError(f"action {action} out of range for N={self.n_bs}")
        if self.tick >= self._max_tick:
            raise RuntimeError("episode is over; call reset()")
        self.tick += 1
        self.conn, ev = agent_step(self.conn, self.tick, int(action), self._sinr[self.tick], self.protocol)
        self.events.extend(ev)
        self.serving_timeline.append(self._serving_now())
        obs = self._observe()
        reward = compute_reward(obs, ev, self.cfg.reward_c,
                                in_service=self.conn.in_service)
        terminated, truncated = check_termination(ev, self.tick, self.cfg.phase,
                                                  max_tick=self._max_tick, evaluate=self.cfg.evaluate)
        info = {"events": ev, "tick": self.tick}
        return StepResult(obs, reward, terminated, truncated, info)
