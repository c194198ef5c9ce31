"""Ready-made trace sets: the multi-BS urban scenario and the 2-BS crossing toy."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .channel import (
    BsLayout,
    FilterConfig,
    RadioConfig,
    RawTrace,
    generate_layout,
    generate_path,
    l1_filter,
    straight_path,
    synthesize_trace,
)


@dataclass(frozen=True)
class ScenarioConfig:
    n_bs: int = 7
    area_w_m: float = 1300.0
    area_h_m: float = 700.0
    min_spacing_m: float = 100.0
    duration_s: float = 60.0
    layout_seed: int = 7

    @property
    def area(self) -> tuple[float, float]:
        return (self.area_w_m, self.area_h_m)


def trace_seed(seed: int, speed_kmh: float, index: int) -> int:
    """Stable per-trace seed derived from the run seed, speed class, and index."""
    return int(np.random.SeedSequence([seed, int(round(speed_kmh * 10)), index]).generate_state(1)[0])


def make_trace(layout: BsLayout, scenario: ScenarioConfig, speed_kmh: float, seed: int, *,
               radio: RadioConfig = RadioConfig(), filt: FilterConfig = FilterConfig(),
               ue_id: int = 0) -> RawTrace:
    path = generate_path(scenario.area, speed_kmh, scenario.duration_s, seed)
    raw = synthesize_trace(layout, path, radio, seed + 1, ue_id=ue_id)
    return l1_filter(raw, filt)


def make_dataset(scenario: ScenarioConfig, speeds, count: int, seed: int, *,
                 radio: RadioConfig = RadioConfig(), filt: FilterConfig = FilterConfig(),
                 layout: BsLayout | None = None) -> dict[float, list[RawTrace]]:
    """``count`` traces per speed class on one shared BS layout."""
    layout = layout or generate_layout(scenario.n_bs, scenario.area, scenario.layout_seed,
                                       min_spacing_m=scenario.min_spacing_m,
                                       tx_power_dbm=radio.tx_power_dbm)
    out = {}
    for v in speeds:
        out[v] = [make_trace(layout, scenario, v, trace_seed(seed, v, i), radio=radio, filt=filt, ue_id=i)
                  for i in range(count)]
    return out


def crossing_point(d_bs: float, tx0_dbm: float, tx1_dbm: float, exponent: float) -> float:
    """Distance from BS 0, along the segment to BS 1, where both RSRPs (and SINRs) are equal."""
    ratio = 10.0 ** ((tx1_dbm - tx0_dbm) / (10.0 * exponent))  # d1 / d0 at equality
    return d_bs / (1.0 + ratio)


@dataclass
class CrossingTrace:
    trace: RawTrace
    crossing_tick: int


def crossing_traces(count: int, seed: int, *, speed_kmh: float = 30.0, radio: RadioConfig | None = None,
                    d_bs: float = 400.0, lead_m: float = 60.0,
                    jitter_m: float = 40.0) -> list[CrossingTrace]:
    """Shadowing-free 2-BS walks along the BS axis, with the analytic SINR crossing tick.

    The UE starts ``lead_m`` plus up to ``jitter_m`` before the crossing and walks towards
    BS 1. BS powers differ by up to ±3 dB, which moves the crossing off the midpoint.
    """
    radio = radio or RadioConfig(shadow_sigma_db=0.0)
    rng = np.random.default_rng(seed)
    out = []
    for i in range(count):
        tx = 46.0 + rng.uniform(-3.0, 3.0, size=2)
        layout = BsLayout([[0.0, 0.0], [d_bs, 0.0]], tx)
        x_cross = crossing_point(d_bs, tx[0], tx[1], radio.pathloss_exp)
        x0 = x_cross - lead_m - rng.uniform(0.0, jitter_m)
        x1 = x_cross + lead_m + rng.uniform(0.0, jitter_m)
        path = straight_path((x0, 0.0), (x1, 0.0), speed_kmh)
        step = speed_kmh / 3.6 * path.tick_s
        trace = synthesize_trace(layout, path, radio, seed, ue_id=i,
                                 meta={"crossing_x_m": x_cross})
        out.append(CrossingTrace(trace, math.ceil((x_cross - x0) / step)))
    return out
