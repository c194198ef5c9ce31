"""Synthetic radio traces: BS layouts, UE mobility, pathloss/shadowing, L1/L3 filtering, trace files.

The generator is a desk-scale stand-in for a ray-traced urban channel: log-distance
pathloss plus Gudmundson-correlated log-normal shadowing, evaluated along a random
waypoint path sampled every 10 ms.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

TICK_S = 0.010
SPEED_OF_LIGHT = 299_792_458.0
TRACE_FORMAT_VERSION = 1
_HEADER_TAG = "# nrhandover-trace "


class LayoutError(ValueError):
    """Base stations cannot be placed with the requested spacing."""


class TraceFormatError(ValueError):
    """Base class for trace file problems."""


class MalformedHeaderError(TraceFormatError):
    pass


class ShapeMismatchError(TraceFormatError):
    pass


class UnsupportedVersionError(TraceFormatError):
    pass


@dataclass(frozen=True)
class RadioConfig:
    tx_power_dbm: float = 20.0
    carrier_hz: float = 2.1e9
    pathloss_exp: float = 3.5
    shadow_sigma_db: float = 6.0
    decorr_m: float = 50.0
    noise_dbm: float = -104.0

    def __post_init__(self):
        if not self.pathloss_exp > 2:
            raise ValueError("pathloss exponent must be > 2")
        if not self.shadow_sigma_db >= 0:
            raise ValueError("shadowing sigma must be >= 0")
        if not math.isfinite(self.noise_dbm):
            raise ValueError("noise floor must be finite")
        if not self.decorr_m > 0:
            raise ValueError("decorrelation distance must be > 0")

    @property
    def ref_loss_db(self) -> float:
        """Free-space loss at 1 m for the carrier frequency."""
        return 20.0 * math.log10(4.0 * math.pi * self.carrier_hz / SPEED_OF_LIGHT)


@dataclass(frozen=True)
class FilterConfig:
    l1_window: int = 5
    l3_k: int = 4

    def __post_init__(self):
        if self.l1_window < 1:
            raise ValueError("l1_window must be >= 1")
        if self.l3_k < 0:
            raise ValueError("l3_k must be >= 0")

    @property
    def l3_coeff(self) -> float:
        return 1.0 / 2.0 ** (self.l3_k / 4.0)


@dataclass
class BsLayout:
    positions: np.ndarray  # (N, 2) metres
    tx_power_dbm: np.ndarray  # (N,)

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=float).reshape(-1, 2)
        self.tx_power_dbm = np.broadcast_to(
            np.asarray(self.tx_power_dbm, dtype=float), (len(self.positions),)
        ).copy()
        if not np.all(np.isfinite(self.tx_power_dbm)):
            raise ValueError("tx power must be finite")

    @property
    def n_bs(self) -> int:
        return len(self.positions)


@dataclass
class MobilityPath:
    t: np.ndarray  # (T,) seconds
    xy: np.ndarray  # (T, 2) metres
    speed_kmh: float
    tick_s: float = TICK_S

    def __len__(self):
        return len(self.t)

    def step_lengths(self) -> np.ndarray:
        return np.linalg.norm(np.diff(self.xy, axis=0), axis=1)


@dataclass(eq=False)
class RawTrace:
    ue_id: int
    tick_s: float
    rsrp_dbm: np.ndarray  # (T, N)
    sinr_db: np.ndarray  # (T, N)
    seed: int
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.rsrp_dbm = np.asarray(self.rsrp_dbm, dtype=float)
        self.sinr_db = np.asarray(self.sinr_db, dtype=float)
        if self.rsrp_dbm.shape != self.sinr_db.shape or self.rsrp_dbm.ndim != 2:
            raise ShapeMismatchError(
                f"rsrp {self.rsrp_dbm.shape} and sinr {self.sinr_db.shape} must be equal 2-D shapes"
            )

    @property
    def n_ticks(self) -> int:
        return self.rsrp_dbm.shape[0]

    @property
    def n_bs(self) -> int:
        return self.rsrp_dbm.shape[1]

    def __eq__(self, other):
        if not isinstance(other, RawTrace):
            return NotImplemented
        return (
            self.ue_id == other.ue_id
            and self.tick_s == other.tick_s
            and self.seed == other.seed
            and self.meta == other.meta
            and np.array_equal(self.rsrp_dbm, other.rsrp_dbm)
            and np.array_equal(self.sinr_db, other.sinr_db)
        )

    def permuted(self, perm) -> RawTrace:
        """Relabel BS columns so that new column i holds old column perm[i]."""
        perm = np.asarray(perm)
        return RawTrace(self.ue_id, self.tick_s, self.rsrp_dbm[:, perm], self.sinr_db[:, perm],
                        self.seed, dict(self.meta))


def generate_layout(n_bs: int, area: tuple[float, float], seed: int, *,
                    min_spacing_m: float = 100.0, tx_power_dbm: float = 20.0,
                    max_tries: int = 20_000) -> BsLayout:
    """Place ``n_bs`` stations uniformly in ``area`` with rejection sampling on spacing."""
    if n_bs < 2:
        raise ValueError("n_bs must be >= 2")
    width, height = area
    if width <= 0 or height <= 0:
        raise ValueError("area must be nonempty")
    # each station excludes a disc of radius spacing/2 from the others
    if n_bs * math.pi * (min_spacing_m / 2.0) ** 2 > width * height:
        raise LayoutError(f"{n_bs} stations at {min_spacing_m} m spacing do not fit in {width}x{height} m")

    rng = np.random.default_rng(seed)
    placed: list[np.ndarray] = []
    tries = 0
    while len(placed) < n_bs:
        tries += 1
        if tries > max_tries:
            raise LayoutError(f"rejection sampling gave up after {max_tries} draws")
        cand = rng.uniform((0.0, 0.0), (width, height))
        if all(np.hypot(*(cand - p)) >= min_spacing_m for p in placed):
            placed.append(cand)
    return BsLayout(np.array(placed), np.full(n_bs, tx_power_dbm))


def generate_path(area: tuple[float, float], speed_kmh: float, duration_s: float, seed: int, *,
                  tick_s: float = TICK_S, jitter: float = 0.2) -> MobilityPath:
    """Random-waypoint walk inside ``area``; each leg draws a speed within ±jitter of nominal."""
    if not 1.0 <= speed_kmh <= 120.0:
        raise ValueError(f"speed_kmh={speed_kmh} outside [1, 120]")
    if duration_s <= 0:
        raise ValueError("duration_s must be > 0")
    width, height = area
    n = int(round(duration_s / tick_s))
    rng = np.random.default_rng(seed)
    nominal = speed_kmh / 3.6 * tick_s

    xy = np.empty((n, 2))
    pos = rng.uniform((0.0, 0.0), (width, height))
    dest = rng.uniform((0.0, 0.0), (width, height))
    step = nominal * rng.uniform(1 - jitter, 1 + jitter)
    xy[0] = pos
    for k in range(1, n):
        remaining = step
        while True:
            gap = dest - pos
            dist = math.hypot(gap[0], gap[1])
            if dist > remaining:
                pos = pos + gap * (remaining / dist)
                break
            # turn at the waypoint and spend the leftover on the next leg
            pos = dest
            remaining -= dist
            dest = rng.uniform((0.0, 0.0), (width, height))
            step = nominal * rng.uniform(1 - jitter, 1 + jitter)
            remaining = min(remaining, step)
        xy[k] = pos
    t = np.arange(n) * tick_s
    return MobilityPath(t, xy, float(speed_kmh), tick_s)


def straight_path(start: tuple[float, float], end: tuple[float, float], speed_kmh: float, *,
                  tick_s: float = TICK_S) -> MobilityPath:
    """Constant-speed straight walk from ``start`` to (at most) ``end``."""
    start = np.asarray(start, dtype=float)
    end = np.asarray(end, dtype=float)
    step = speed_kmh / 3.6 * tick_s
    length = float(np.linalg.norm(end - start))
    n = int(length // step) + 1
    k = np.arange(n)
    xy = start + np.outer(k * step / length, end - start)
    return MobilityPath(k * tick_s, xy, float(speed_kmh), tick_s)


def pathloss_db(distance_m, radio: RadioConfig):
    d = np.maximum(np.asarray(distance_m, dtype=float), 1.0)
    return radio.ref_loss_db + 10.0 * radio.pathloss_exp * np.log10(d)


def gudmundson_shadowing(path: MobilityPath, n_bs: int, radio: RadioConfig,
                         rng: np.random.Generator) -> np.ndarray:
    """Per-BS AR(1) shadowing along travelled distance, correlation exp(-Δd / d_corr)."""
    n = len(path)
    out = np.zeros((n, n_bs))
    if radio.shadow_sigma_db == 0 or n == 0:
        return out
    sigma = radio.shadow_sigma_db
    rho = np.exp(-path.step_lengths() / radio.decorr_m)
    innov = np.sqrt(1.0 - rho**2) * sigma
    noise = rng.standard_normal((n, n_bs))
    out[0] = sigma * noise[0]
    for k in range(1, n):
        out[k] = rho[k - 1] * out[k - 1] + innov[k - 1] * noise[k]
    return out


def sinr_from_rsrp(rsrp_dbm: np.ndarray, noise_dbm: float) -> np.ndarray:
    """SINR of each BS against the sum of all other BSs plus thermal noise."""
    rx = 10.0 ** (rsrp_dbm / 10.0)
    total = rx.sum(axis=-1, keepdims=True)
    return 10.0 * np.log10(rx / (total - rx + 10.0 ** (noise_dbm / 10.0)))


def synthesize_trace(layout: BsLayout, path: MobilityPath, radio: RadioConfig, seed: int, *,
                     ue_id: int = 0, meta: dict | None = None) -> RawTrace:
    rng = np.random.default_rng(seed)
    dist = np.linalg.norm(path.xy[:, None, :] - layout.positions[None, :, :], axis=-1)
    shadow = gudmundson_shadowing(path, layout.n_bs, radio, rng)
    rsrp = layout.tx_power_dbm[None, :] - pathloss_db(dist, radio) - shadow
    sinr = sinr_from_rsrp(rsrp, radio.noise_dbm)
    info = {
        "radio": asdict(radio),
        "speed_kmh": path.speed_kmh,
        "bs_positions": layout.positions.tolist(),
    }
    info.update(meta or {})
    return RawTrace(ue_id, path.tick_s, rsrp, sinr, seed, info)


def _moving_average(x: np.ndarray, window: int) -> np.ndarray:
    if window == 1:
        return x.copy()
    out = np.empty_like(x)
    head = min(window - 1, len(x))
    for k in range(head):
        out[k] = x[: k + 1].mean(axis=0)
    if len(x) >= window:
        windows = np.lib.stride_tricks.sliding_window_view(x, window, axis=0)
        out[window - 1:] = windows.mean(axis=-1)
    return out


def l1_filter(trace: RawTrace, cfg: FilterConfig) -> RawTrace:
    """Causal moving average over ``cfg.l1_window`` ticks, in the dB domain."""
    meta = dict(trace.meta)
    meta["l1_window"] = cfg.l1_window
    return RawTrace(trace.ue_id, trace.tick_s, _moving_average(trace.rsrp_dbm, cfg.l1_window),
                    _moving_average(trace.sinr_db, cfg.l1_window), trace.seed, meta)


def l3_filter(series, cfg: FilterConfig) -> np.ndarray:
    """Exponential smoothing F_n = (1-a) F_{n-1} + a M_n along axis 0, F_0 = M_0."""
    x = np.asarray(series, dtype=float)
    a = cfg.l3_coeff
    out = np.empty_like(x)
    if len(x) == 0:
        return out
    out[0] = x[0]
    keep = 1.0 - a
    for k in range(1, len(x)):
        out[k] = keep * out[k - 1] + a * x[k]
    return out


def write_trace(trace: RawTrace, path) -> None:
    """Versioned JSON header line + CSV body; floats are written with round-trip repr."""
    n_bs = trace.n_bs
    header = {
        "version": TRACE_FORMAT_VERSION,
        "ue_id": trace.ue_id,
        "tick_s": trace.tick_s,
        "seed": trace.seed,
        "n_ticks": trace.n_ticks,
        "n_bs": n_bs,
        "meta": trace.meta,
    }
    cols = ["t_s", "ue_id"] + [f"rsrp_dbm_{i}" for i in range(n_bs)] + [f"sinr_db_{i}" for i in range(n_bs)]
    lines = [_HEADER_TAG + json.dumps(header, sort_keys=True), ",".join(cols)]
    body = np.hstack([trace.rsrp_dbm, trace.sinr_db]).tolist()
    for k, row in enumerate(body):
        lines.append(",".join([repr(k * trace.tick_s), str(trace.ue_id)] + [repr(v) for v in row]))
    Path(path).write_text("\n".join(lines) + "\n")


def read_trace(path) -> RawTrace:
    with open(path) as fh:
        first = fh.readline()
        if not first.startswith(_HEADER_TAG):
            raise MalformedHeaderError(f"{path}: missing trace header")
        try:
            header = json.loads(first[len(_HEADER_TAG):])
            version = header["version"]
            n_ticks, n_bs = int(header["n_ticks"]), int(header["n_bs"])
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise MalformedHeaderError(f"{path}: {exc}") from exc
        if version != TRACE_FORMAT_VERSION:
            raise UnsupportedVersionError(f"{path}: trace format version {version} not supported")
        fh.readline()  # column names
        rows = [line.rstrip("\n").split(",") for line in fh if line.strip()]
    width = 2 + 2 * n_bs
    if len(rows) != n_ticks or any(len(r) != width for r in rows):
        raise ShapeMismatchError(f"{path}: expected {n_ticks} rows of {width} columns")
    data = np.array([[float(v) for v in r[2:]] for r in rows]).reshape(n_ticks, 2 * n_bs)
    return RawTrace(int(header["ue_id"]), float(header["tick_s"]), data[:, :n_bs], data[:, n_bs:],
                    int(header["seed"]), header.get("meta", {}))
