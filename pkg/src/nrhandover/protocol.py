"""Connection-state engine: handover lifecycle, radio link monitoring, ping-pong detection.

One call advances one 10 ms tick. Every step function takes a state and returns a new
state plus the events emitted on that tick; the input state is never modified.

Per-tick order:
  1. recovery countdown (nothing else happens while recovering),
  2. radio link monitoring on the serving cell (suspended during execution),
  3. the controller's decision (A3 logic or an agent action),
  4. preparation/execution timers.
"""
from __future__ import annotations

import csv
import enum
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from .channel import FilterConfig, RawTrace, l3_filter

TICK_MS = 10


class Phase(enum.Enum):
    CONNECTED = "connected"
    PREPARING = "preparing"
    EXECUTING = "executing"
    RECOVERING = "recovering"


class EventKind(str, enum.Enum):
    HO_PREP_START = "HO_PREP_START"
    HO_ABORT = "HO_ABORT"
    HO_CMD = "HO_CMD"
    HO_COMPLETE = "HO_COMPLETE"
    PP = "PP"
    OOS = "OOS"
    RLF = "RLF"
    HOF = "HOF"
    RECOVERED = "RECOVERED"


@dataclass(frozen=True)
class Event:
    tick: int
    kind: EventKind
    serving: int
    target: int | None = None


@dataclass(frozen=True)
class A3Config:
    hys_db: float = 1.0
    off_db: float = 0.0
    off_n_db: float = 0.0
    off_cn_db: float = 0.0
    off_p_db: float = 0.0
    off_cp_db: float = 0.0
    ttt_ms: int = 40

    def __post_init__(self):
        if self.hys_db < 0:
            raise ValueError("hys_db must be >= 0")
        if self.ttt_ms <= 0:
            raise ValueError("ttt_ms must be > 0")


@dataclass(frozen=True)
class RlfConfig:
    q_in_db: float = -6.0
    q_out_db: float = -8.0
    t310_ms: int = 1000
    n310: int = 10
    n311: int = 3
    recovery_ms: int = 200

    def __post_init__(self):
        if not self.q_out_db < self.q_in_db:
            raise ValueError("q_out_db must be below q_in_db")
        if min(self.t310_ms, self.n310, self.n311, self.recovery_ms) <= 0:
            raise ValueError("RLF timers and counters must be > 0")


@dataclass(frozen=True)
class HoTiming:
    prep_ms: int = 50
    exec_ms: int = 40
    mts_ms: int = 1000

    def __post_init__(self):
        if min(self.prep_ms, self.exec_ms, self.mts_ms) <= 0:
            raise ValueError("handover timings must be > 0")


@dataclass(frozen=True)
class ProtocolConfig:
    a3: A3Config = field(default_factory=A3Config)
    rlf: RlfConfig = field(default_factory=RlfConfig)
    timing: HoTiming = field(default_factory=HoTiming)


@dataclass(frozen=True)
class ConnectionState:
    serving_bs: int
    n_bs: int
    phase: Phase = Phase.CONNECTED
    target: int | None = None
    phase_elapsed_ms: int = 0
    # per-BS A3 time-to-trigger; None while the entering condition does not hold
    ttt_elapsed_ms: tuple = ()
    t310_elapsed_ms: int | None = None
    oos_count: int = 0
    is_count: int = 0
    last_ho_complete_t: int | None = None
    prev_bs: int | None = None

    @classmethod
    def initial(cls, serving_bs: int, n_bs: int) -> ConnectionState:
        return cls(serving_bs, n_bs, ttt_elapsed_ms=(None,) * n_bs)

    @property
    def in_service(self) -> bool:
        """True when the serving cell carries data (connected or preparing)."""
        return self.phase in (Phase.CONNECTED, Phase.PREPARING)

    @property
    def t310_running(self) -> bool:
        return self.t310_elapsed_ms is not None


def a3_entering(m_n_dbm: float, m_p_dbm: float, cfg: A3Config) -> bool:
    return (m_n_dbm + cfg.off_n_db + cfg.off_cn_db - cfg.hys_db
            > m_p_dbm + cfg.off_p_db + cfg.off_cp_db + cfg.off_db)


def a3_leaving(m_n_dbm: float, m_p_dbm: float, cfg: A3Config) -> bool:
    return (m_n_dbm + cfg.off_n_db + cfg.off_cn_db + cfg.hys_db
            < m_p_dbm + cfg.off_p_db + cfg.off_cp_db + cfg.off_db)


def detect_pp(state: ConnectionState, tick: int, cfg: HoTiming) -> bool:
    """Whether the handover completing at ``tick`` (towards ``state.target``) is a ping-pong."""
    if state.prev_bs is None or state.last_ho_complete_t is None:
        return False
    return state.target == state.prev_bs and (tick - state.last_ho_complete_t) * TICK_MS < cfg.mts_ms


def _enter_recovery(state: ConnectionState, tick: int, hof: bool) -> tuple[ConnectionState, list[Event]]:
    events = []
    if hof:
        events.append(Event(tick, EventKind.HOF, state.serving_bs, state.target))
    events.append(Event(tick, EventKind.RLF, state.serving_bs, state.target))
    new = replace(state, phase=Phase.RECOVERING, target=None, phase_elapsed_ms=0,
                  ttt_elapsed_ms=(None,) * state.n_bs, t310_elapsed_ms=None,
                  oos_count=0, is_count=0)
    return new, events


def rlf_step(state: ConnectionState, tick: int, sinr_row: Sequence[float],
             cfg: RlfConfig) -> tuple[ConnectionState, list[Event]]:
    """Radio link monitoring and recovery for one tick.

    ``sinr_row`` holds the SINR of every BS; the serving entry drives the out-of-sync
    and in-sync counters, and the full row picks the cell to re-establish on.
    """
    if state.phase is Phase.RECOVERING:
        elapsed = state.phase_elapsed_ms + TICK_MS
        if elapsed < cfg.recovery_ms:
            return replace(state, phase_elapsed_ms=elapsed), []
        best = int(np.argmax(sinr_row))
        # a re-establishment is not a handover, so it does not seed ping-pong detection
        new = replace(state, serving_bs=best, phase=Phase.CONNECTED, phase_elapsed_ms=0,
                      last_ho_complete_t=None, prev_bs=None)
        return new, [Event(tick, EventKind.RECOVERED, best)]
    if state.phase is Phase.EXECUTING:
        return state, []

    sinr = sinr_row[state.serving_bs]
    events = []
    oos, ins = state.oos_count, state.is_count
    if sinr < cfg.q_out_db:
        oos, ins = min(oos + 1, cfg.n310), 0
        events.append(Event(tick, EventKind.OOS, state.serving_bs))
    elif sinr > cfg.q_in_db:
        oos, ins = 0, min(ins + 1, cfg.n311)
    else:
        oos, ins = 0, 0

    t310 = state.t310_elapsed_ms
    if t310 is None:
        if oos >= cfg.n310:
            t310 = 0
    else:
        t310 += TICK_MS
        if ins >= cfg.n311:
            t310 = None
            ins = 0
        elif t310 >= cfg.t310_ms:
            new, rlf_events = _enter_recovery(state, tick, hof=state.phase is Phase.PREPARING)
            return new, events + rlf_events
    return replace(state, oos_count=oos, is_count=ins, t310_elapsed_ms=t310), events


def start_preparation(state: ConnectionState, tick: int, target: int) -> tuple[ConnectionState, list[Event]]:
    """Start (or restart towards a new target) a handover preparation."""
    events = []
    if state.phase is Phase.PREPARING:
        events.append(Event(tick, EventKind.HO_ABORT, state.serving_bs, state.target))
    events.append(Event(tick, EventKind.HO_PREP_START, state.serving_bs, target))
    # phase_elapsed_ms = -TICK_MS so that advance_handover brings it to 0 on the start tick
    return replace(state, phase=Phase.PREPARING, target=target, phase_elapsed_ms=-TICK_MS), events


def abort_preparation(state: ConnectionState, tick: int) -> tuple[ConnectionState, list[Event]]:
    ev = Event(tick, EventKind.HO_ABORT, state.serving_bs, state.target)
    return replace(state, phase=Phase.CONNECTED, target=None, phase_elapsed_ms=0), [ev]


def advance_handover(state: ConnectionState, tick: int, cfg: ProtocolConfig) -> tuple[ConnectionState, list[Event]]:
    """Advance preparation/execution timers; emits HO_CMD, HO_COMPLETE, PP, or HOF."""
    timing = cfg.timing
    if state.phase is Phase.PREPARING:
        elapsed = state.phase_elapsed_ms + TICK_MS
        if elapsed < timing.prep_ms:
            return replace(state, phase_elapsed_ms=elapsed), []
        cmd = Event(tick, EventKind.HO_CMD, state.serving_bs, state.target)
        if state.t310_running:
            new, events = _enter_recovery(state, tick, hof=True)
            return new, [cmd] + events
        return replace(state, phase=Phase.EXECUTING, phase_elapsed_ms=0,
                       ttt_elapsed_ms=(None,) * state.n_bs), [cmd]
    if state.phase is Phase.EXECUTING:
        elapsed = state.phase_elapsed_ms + TICK_MS
        if elapsed < timing.exec_ms:
            return replace(state, phase_elapsed_ms=elapsed), []
        events = [Event(tick, EventKind.HO_COMPLETE, state.serving_bs, state.target)]
        if detect_pp(state, tick, timing):
            events.append(Event(tick, EventKind.PP, state.serving_bs, state.target))
        new = replace(state, serving_bs=state.target, prev_bs=state.serving_bs, target=None,
                      phase=Phase.CONNECTED, phase_elapsed_ms=0, last_ho_complete_t=tick,
                      ttt_elapsed_ms=(None,) * state.n_bs, t310_elapsed_ms=None,
                      oos_count=0, is_count=0)
        return new, events
    return state, []


def _a3_decision(state: ConnectionState, tick: int, rsrp_row: Sequence[float],
                 cfg: A3Config) -> tuple[ConnectionState, list[Event]]:
    serving = state.serving_bs
    m_p = rsrp_row[serving]
    ttt = []
    for n, prev in enumerate(state.ttt_elapsed_ms):
        if n != serving and a3_entering(rsrp_row[n], m_p, cfg):
            ttt.append(0 if prev is None else prev + TICK_MS)
        else:
            ttt.append(None)
    state = replace(state, ttt_elapsed_ms=tuple(ttt))

    if state.phase is Phase.PREPARING:
        if a3_leaving(rsrp_row[state.target], m_p, cfg):
            return abort_preparation(state, tick)
        return state, []
    ready = [n for n, e in enumerate(ttt) if e is not None and e >= cfg.ttt_ms]
    if not ready:
        return state, []
    # strongest qualifying neighbour; max() keeps the lowest index on ties
    target = max(ready, key=lambda n: rsrp_row[n])
    return start_preparation(state, tick, target)


def baseline_step(state: ConnectionState, tick: int, rsrp_row: Sequence[float],
                  sinr_row: Sequence[float], cfg: ProtocolConfig) -> tuple[ConnectionState, list[Event]]:
    """One tick of the Event-A3 controller driving the connection engine.

    ``rsrp_row`` is the L3-filtered RSRP of every BS, ``sinr_row`` the SINR of every BS.
    """
    state, events = rlf_step(state, tick, sinr_row, cfg.rlf)
    if not state.in_service:
        if state.phase is Phase.EXECUTING:
            state, more = advance_handover(state, tick, cfg)
            events += more
        return state, events
    state, more = _a3_decision(state, tick, rsrp_row, cfg.a3)
    events += more
    state, more = advance_handover(state, tick, cfg)
    return state, events + more


def agent_step(state: ConnectionState, tick: int, action: int | None, sinr_row: Sequence[float],
               cfg: ProtocolConfig) -> tuple[ConnectionState, list[Event]]:
    """One tick where an external policy chooses the BS it wants to be served by.

    The current preparation target continues the preparation, the serving BS keeps
    the connection (aborting a running preparation), and any other BS (re)starts a
    preparation towards it. ``None`` means no decision. Actions are ignored while
    executing or recovering.
    """
    state, events = rlf_step(state, tick, sinr_row, cfg.rlf)
    if state.in_service and action is not None and action != state.target:
        if action != state.serving_bs:
            state, more = start_preparation(state, tick, int(action))
        elif state.phase is Phase.PREPARING:
            state, more = abort_preparation(state, tick)
        else:
            more = []
        events += more
    state, more = advance_handover(state, tick, cfg)
    return state, events + more


@dataclass
class RunResult:
    """Outcome of driving one trace: event log and per-tick serving BS (-1 = no service)."""
    events: list[Event]
    serving: np.ndarray


def initial_serving(sinr_db: np.ndarray) -> int:
    return int(np.argmax(sinr_db[0]))


def run_baseline(trace: RawTrace, cfg: ProtocolConfig,
                 filter_cfg: FilterConfig = FilterConfig()) -> RunResult:
    """Run the Event-A3 controller over a whole trace (RSRP is L3-filtered first)."""
    rsrp = l3_filter(trace.rsrp_dbm, filter_cfg).tolist()
    sinr = trace.sinr_db.tolist()
    state = ConnectionState.initial(initial_serving(trace.sinr_db), trace.n_bs)
    events: list[Event] = []
    serving = np.empty(trace.n_ticks, dtype=int)
    for t in range(trace.n_ticks):
        state, ev = baseline_step(state, t, rsrp[t], sinr[t], cfg)
        events.extend(ev)
        serving[t] = state.serving_bs if state.in_service else -1
    return RunResult(events, serving)


def write_events(events: Iterable[Event], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["tick", "kind", "serving", "target"])
        for e in events:
            w.writerow([e.tick, e.kind.value, e.serving, "" if e.target is None else e.target])


def read_events(path) -> list[Event]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [Event(int(r["tick"]), EventKind(r["kind"]), int(r["serving"]),
                  None if r["target"] == "" else int(r["target"])) for r in rows]
