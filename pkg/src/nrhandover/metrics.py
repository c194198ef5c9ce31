"""Rate, failure, and ping-pong metrics over event logs and serving timelines."""
from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .channel import RawTrace
from .protocol import Event, EventKind


@dataclass(frozen=True)
class RateConfig:
    bandwidth_hz: float = 10e6
    tick_s: float = 0.010

    def __post_init__(self):
        if not self.bandwidth_hz > 0:
            raise ValueError("bandwidth must be > 0")


def spectral_efficiency(sinr_db) -> np.ndarray:
    """Shannon bound log2(1 + SINR) with SINR given in dB."""
    return np.log2(1.0 + 10.0 ** (np.asarray(sinr_db, dtype=float) / 10.0))


def _served_efficiency(sinr_db: np.ndarray, serving: np.ndarray) -> np.ndarray:
    serving = np.asarray(serving)
    if len(serving) != len(sinr_db):
        raise ValueError(f"timeline length {len(serving)} != trace length {len(sinr_db)}")
    se = spectral_efficiency(sinr_db)
    active = serving >= 0
    out = np.zeros(len(serving))
    out[active] = se[np.nonzero(active)[0], serving[active]]
    return out


def average_rate(sinr_db: np.ndarray, serving: Sequence[int], cfg: RateConfig = RateConfig()) -> float:
    """Mean Shannon rate of the serving cell; ticks marked -1 (no service) count as 0."""
    return cfg.bandwidth_hz * float(_served_efficiency(sinr_db, serving).mean())


def max_rate(sinr_db: np.ndarray, cfg: RateConfig = RateConfig()) -> float:
    """Mean rate of an always-best-cell UE with zero handover cost."""
    return cfg.bandwidth_hz * float(spectral_efficiency(sinr_db).max(axis=1).mean())


def gamma_r(avg_rate: float, max_rate: float) -> float:
    if max_rate <= 0:
        raise ValueError("max_rate must be > 0")
    return avg_rate / max_rate


def relative_rate(sinr_db: np.ndarray, serving: Sequence[int]) -> float:
    """Γ_R computed on spectral efficiencies, so it does not depend on the bandwidth at all."""
    achieved = float(_served_efficiency(sinr_db, serving).mean())
    best = float(spectral_efficiency(sinr_db).max(axis=1).mean())
    return gamma_r(achieved, best)


@dataclass
class EventCounts:
    ho_cmd: int = 0
    ho_complete: int = 0
    hof: int = 0
    hof_before_cmd: int = 0
    pp: int = 0
    rlf: int = 0

    def __add__(self, other: EventCounts) -> EventCounts:
        return EventCounts(*(a + b for a, b in zip(asdict(self).values(), asdict(other).values())))

    @property
    def ho_attempts(self) -> int:
        return self.ho_cmd + self.hof_before_cmd


def count_events(events: Iterable[Event]) -> EventCounts:
    c = EventCounts()
    cmd_ticks = set()
    for e in events:
        if e.kind is EventKind.HO_CMD:
            c.ho_cmd += 1
            cmd_ticks.add(e.tick)
        elif e.kind is EventKind.HO_COMPLETE:
            c.ho_complete += 1
        elif e.kind is EventKind.HOF:
            c.hof += 1
            # a HOF on the same tick as a command is the command-during-T310 case
            if e.tick not in cmd_ticks:
                c.hof_before_cmd += 1
        elif e.kind is EventKind.PP:
            c.pp += 1
        elif e.kind is EventKind.RLF:
            c.rlf += 1
    return c


def probabilities(counts: EventCounts) -> tuple[float | None, float | None]:
    hof = counts.hof / counts.ho_attempts if counts.ho_attempts else None
    pp = counts.pp / counts.ho_complete if counts.ho_complete else None
    return hof, pp


def event_probabilities(logs: Iterable[Iterable[Event]]) -> tuple[float | None, float | None]:
    """(HOF probability, PP probability) pooled over several runs; None where undefined.

    HOF probability divides by handover attempts (commands plus failures that struck
    before the command); PP probability divides by completed handovers.
    """
    total = EventCounts()
    for events in logs:
        total = total + count_events(events)
    return probabilities(total)


def sinr_at_handover(events: Iterable[Event], sinr_db: np.ndarray) -> tuple[list[float], list[float]]:
    """Serving-cell SINR at each HO command and target-cell SINR at each HO completion."""
    start, end = [], []
    for e in events:
        if e.kind is EventKind.HO_CMD:
            start.append(float(sinr_db[e.tick, e.serving]))
        elif e.kind is EventKind.HO_COMPLETE:
            end.append(float(sinr_db[e.tick, e.target]))
    return start, end


def sinr_ecdf_at_ho(logs: Sequence[Sequence[Event]], traces: Sequence[RawTrace]) -> tuple[np.ndarray, np.ndarray]:
    """Sorted SINR samples at HO start and HO end, pooled over runs."""
    start, end = [], []
    for events, trace in zip(logs, traces, strict=True):
        s, e = sinr_at_handover(events, trace.sinr_db)
        start += s
        end += e
    return np.sort(np.array(start)), np.sort(np.array(end))


def ecdf_eval(samples: np.ndarray, x: float) -> float:
    """P(SINR <= x) for sorted ``samples``; right-continuous step function."""
    if len(samples) == 0:
        return float("nan")
    return float(np.searchsorted(samples, x, side="right")) / len(samples)


def ecdf_table(samples: np.ndarray) -> list[tuple[float, float]]:
    n = len(samples)
    return [(float(v), (i + 1) / n) for i, v in enumerate(samples)]


def write_ecdf(samples: np.ndarray, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["sinr_db", "cum_prob"])
        for x, p in ecdf_table(samples):
            w.writerow([repr(x), repr(p)])


@dataclass
class EvalReport:
    gamma_r: float
    avg_rate: float
    max_rate: float
    ho_count: int
    hof_count: int
    pp_count: int
    rlf_count: int
    hof_prob: float | None
    pp_prob: float | None
    ecdf_start: list = field(default_factory=list)
    ecdf_end: list = field(default_factory=list)
    speed_kmh: float | None = None
    seeds: list = field(default_factory=list)
    n_traces: int = 1
    ho_attempts: int = 0

    def counts(self) -> EventCounts:
        # only the fields needed to recompute probabilities when pooling
        return EventCounts(ho_cmd=self.ho_attempts, ho_complete=self.ho_count, hof=self.hof_count,
                           pp=self.pp_count, rlf=self.rlf_count)

    def to_dict(self) -> dict:
        return asdict(self)


def evaluate_run(trace: RawTrace, events: Sequence[Event], serving: Sequence[int],
                 cfg: RateConfig = RateConfig()) -> EvalReport:
    c = count_events(events)
    hof_p, pp_p = probabilities(c)
    start, end = sinr_at_handover(events, trace.sinr_db)
    return EvalReport(
        gamma_r=relative_rate(trace.sinr_db, serving),
        avg_rate=average_rate(trace.sinr_db, serving, cfg),
        max_rate=max_rate(trace.sinr_db, cfg),
        ho_count=c.ho_complete, hof_count=c.hof, pp_count=c.pp, rlf_count=c.rlf,
        hof_prob=hof_p, pp_prob=pp_p,
        ecdf_start=sorted(start), ecdf_end=sorted(end),
        speed_kmh=trace.meta.get("speed_kmh"), seeds=[trace.seed], ho_attempts=c.ho_attempts,
    )


def pool_reports(reports: Sequence[EvalReport]) -> EvalReport:
    """Pool per-trace reports: Γ_R and rates are averaged over traces, counts add up."""
    if not reports:
        raise ValueError("nothing to pool")
    total = EventCounts()
    for r in reports:
        total = total + r.counts()
    attempts = total.ho_cmd
    hof_p = total.hof / attempts if attempts else None
    pp_p = total.pp / total.ho_complete if total.ho_complete else None
    speeds = {r.speed_kmh for r in reports}
    return EvalReport(
        gamma_r=float(np.mean([r.gamma_r for r in reports])),
        avg_rate=float(np.mean([r.avg_rate for r in reports])),
        max_rate=float(np.mean([r.max_rate for r in reports])),
        ho_count=total.ho_complete, hof_count=total.hof, pp_count=total.pp, rlf_count=total.rlf,
        hof_prob=hof_p, pp_prob=pp_p,
        ecdf_start=sorted(x for r in reports for x in r.ecdf_start),
        ecdf_end=sorted(x for r in reports for x in r.ecdf_end),
        speed_kmh=speeds.pop() if len(speeds) == 1 else None,
        seeds=[s for r in reports for s in r.seeds],
        n_traces=sum(r.n_traces for r in reports),
        ho_attempts=attempts,
    )


REPORT_COLUMNS = ["trace", "speed_kmh", "seed", "gamma_r", "avg_rate", "max_rate", "ho_count",
                  "hof_count", "pp_count", "rlf_count", "hof_prob", "pp_prob"]


def write_report_csv(rows: Sequence[tuple[str, EvalReport]], path) -> None:
    def fmt(v):
        return "" if v is None else repr(v) if isinstance(v, float) else v

    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(REPORT_COLUMNS)
        for name, r in rows:
            w.writerow([name, fmt(r.speed_kmh), r.seeds[0] if r.seeds else ""] +
                       [fmt(getattr(r, k)) for k in REPORT_COLUMNS[3:]])


def write_summary(doc: dict, path) -> None:
    with open(path, "w") as fh:
        json.dump(doc, fh, sort_keys=True, indent=1)
        fh.write("\n")
