"""Command-line entry point: trace generation, baseline runs, training, evaluation, comparison.

All outputs are plain CSV/JSON and are byte-identical for identical config, seed, and
inputs. Paths stored inside outputs are relative, so reruns into another directory
produce the same bytes.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import sys
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from . import __version__
from .channel import TraceFormatError, generate_layout, read_trace, write_trace
from .config import ConfigError, RunConfig, load_config, with_overrides
from .env import HandoverEnv
from .evaluation import evaluate_agent, evaluate_baseline
from .metrics import EvalReport, ecdf_eval, pool_reports, write_ecdf, write_report_csv, write_summary
from .ppo import CheckpointError, PpoModel, TrainingDiverged, load_checkpoint, save_checkpoint, train
from .ppo.train import LOG_COLUMNS, TrainLog
from .protocol import A3Config
from .scenarios import make_trace, trace_seed

log = logging.getLogger("nrhandover")

EXIT_CONFIG = 3
EXIT_IO = 4
EXIT_INCOMPATIBLE = 5
EXIT_DIVERGED = 6

MANIFEST_NAME = "manifest.json"
TTT_GRID_MS = (40, 80, 160)
OFF_GRID_DB = (0.0, 1.0, 2.0)


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def sha256_file(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def manifest_hash(entries: list[dict]) -> str:
    """Content hash of a trace set; independent of where the files live."""
    h = hashlib.sha256()
    for e in entries:
        h.update(f"{e['speed_kmh']!r}:{e['index']}:{e['sha256']}\n".encode())
    return h.hexdigest()


def _json(doc) -> str:
    return json.dumps(doc, sort_keys=True, indent=1) + "\n"


def _speed_key(v: float) -> str:
    return f"{v:g}"


# --------------------------------------------------------------------------- traces

def cmd_gen_traces(cfg: RunConfig, args) -> None:
    out = Path(cfg.io.out)
    if args.count < 0:
        raise CliError("--count must be >= 0", EXIT_CONFIG)
    for v in args.speed:
        if not 1.0 <= v <= 120.0:
            raise CliError(f"speed {v} km/h outside the supported range [1, 120]", EXIT_CONFIG)
    sc = cfg.scenario
    try:
        layout = generate_layout(sc.n_bs, sc.area, sc.layout_seed, min_spacing_m=sc.min_spacing_m,
                                 tx_power_dbm=cfg.radio.tx_power_dbm)
    except ValueError as exc:
        raise CliError(f"layout: {exc}", EXIT_CONFIG) from exc
    entries = []
    for v in args.speed:
        for i in range(args.count):
            tr = make_trace(layout, sc, v, trace_seed(cfg.seed, v, i), radio=cfg.radio, filt=cfg.filter, ue_id=i)
            rel = Path("traces") / f"v{_speed_key(v)}" / f"trace_{i:04d}.csv"
            path = out / rel
            path.parent.mkdir(parents=True, exist_ok=True)
            write_trace(tr, path)
            entries.append({"path": rel.as_posix(), "sha256": sha256_file(path), "speed_kmh": float(v), "index": i})
    doc = {
        "format": "nrhandover-manifest",
        "version": 1,
        "seed": cfg.seed,
        "config": cfg.snapshot(),
        "layout": {"positions": layout.positions.tolist(), "tx_power_dbm": layout.tx_power_dbm.tolist()},
        "traces": entries,
        "manifest_sha256": manifest_hash(entries),
    }
    out.mkdir(parents=True, exist_ok=True)
    (out / MANIFEST_NAME).write_text(_json(doc))
    log.info("wrote %d traces and %s", len(entries), out / MANIFEST_NAME)


def load_trace_set(manifest_path):
    """Read a manifest and its traces, checking every file hash."""
    mpath = Path(manifest_path)
    if mpath.is_dir():
        mpath = mpath / MANIFEST_NAME
    try:
        doc = json.loads(mpath.read_text())
    except OSError as exc:
        raise CliError(f"cannot read manifest {mpath}: {exc.strerror}", EXIT_IO) from exc
    except json.JSONDecodeError as exc:
        raise CliError(f"{mpath}: not a manifest ({exc})", EXIT_IO) from exc
    entries = doc.get("traces")
    if doc.get("format") != "nrhandover-manifest" or entries is None:
        raise CliError(f"{mpath}: not a trace manifest", EXIT_IO)
    traces = []
    for e in entries:
        path = mpath.parent / e["path"]
        try:
            digest = sha256_file(path)
        except OSError as exc:
            raise CliError(f"missing trace file {path}: {exc.strerror}", EXIT_IO) from exc
        if digest != e["sha256"]:
            raise CliError(f"{path}: sha256 {digest} does not match manifest {e['sha256']}", EXIT_INCOMPATIBLE)
        try:
            traces.append(read_trace(path))
        except TraceFormatError as exc:
            raise CliError(str(exc), EXIT_IO) from exc
    return doc, entries, traces


def _require_traces(traces) -> None:
    if not traces:
        raise CliError("the trace set is empty", EXIT_CONFIG)


def _group_by_speed(entries, reports):
    groups: dict[float, list[EvalReport]] = {}
    for e, r in zip(entries, reports):
        groups.setdefault(e["speed_kmh"], []).append(r)
    return dict(sorted(groups.items()))


def _write_reports(out: Path, entries, reports, summary: dict) -> dict:
    out.mkdir(parents=True, exist_ok=True)
    write_report_csv([(e["path"], r) for e, r in zip(entries, reports)], out / "per_trace.csv")
    pooled = {_speed_key(v): pool_reports(rs) for v, rs in _group_by_speed(entries, reports).items()}
    rows = [(k, r) for k, r in pooled.items()]
    write_report_csv(rows, out / "pooled.csv")
    summary["per_speed"] = {k: r.to_dict() for k, r in pooled.items()}
    write_summary(summary, out / "summary.json")
    return pooled


# --------------------------------------------------------------------------- baseline

def cmd_run_baseline(cfg: RunConfig, args) -> None:
    doc, entries, traces = load_trace_set(args.traces)
    _require_traces(traces)
    out = Path(cfg.io.out)
    summary = {"kind": "baseline", "manifest_sha256": doc["manifest_sha256"], "config": cfg.snapshot()}
    a3 = cfg.a3
    if args.sweep:
        sweep = []
        best = None
        for ttt in TTT_GRID_MS:
            for off in OFF_GRID_DB:
                cand = replace(cfg.a3, ttt_ms=ttt, off_db=off)
                reports = evaluate_baseline(traces, replace(cfg.protocol, a3=cand), cfg.filter, cfg.metrics)
                pooled = pool_reports(reports)
                sweep.append({"ttt_ms": ttt, "off_db": off, "gamma_r": pooled.gamma_r,
                              "hof_prob": pooled.hof_prob, "pp_prob": pooled.pp_prob})
                log.info("A3 TTT=%d ms Off=%g dB: mean gamma_r %.6f", ttt, off, pooled.gamma_r)
                # ties keep the earlier (shorter TTT, smaller offset) configuration
                if best is None or pooled.gamma_r > best[0]:
                    best = (pooled.gamma_r, cand)
        a3 = best[1]
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "sweep.csv", "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=["ttt_ms", "off_db", "gamma_r", "hof_prob", "pp_prob"])
            w.writeheader()
            for row in sweep:
                w.writerow({k: "" if v is None else repr(v) if isinstance(v, float) else v for k, v in row.items()})
        summary["sweep"] = sweep
    summary["a3"] = asdict(a3)
    reports = evaluate_baseline(traces, replace(cfg.protocol, a3=a3), cfg.filter, cfg.metrics)
    _write_reports(out, entries, reports, summary)
    log.info("baseline (TTT=%d ms, Off=%g dB) written to %s", a3.ttt_ms, a3.off_db, out)


# --------------------------------------------------------------------------- training

def _read_log(path: Path) -> list[dict]:
    if not path.exists():
        return []
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    out = []
    for r in rows:
        out.append({k: (int(v) if k in ("update", "timesteps", "phase") else float(v)) for k, v in r.items()})
    return out


def env_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence([seed, 7, index]).generate_state(1)[0])


def cmd_train(cfg: RunConfig, args) -> None:
    doc, entries, traces = load_trace_set(args.traces)
    _require_traces(traces)
    out = Path(cfg.io.out)
    ckpt_dir = Path(args.checkpoint_dir) if args.checkpoint_dir else out / "checkpoints"
    ckpt_dir.mkdir(parents=True, exist_ok=True)
    ppo_cfg = replace(cfg.ppo, seed=cfg.seed)
    n_bs = traces[0].n_bs

    model, start_ts, start_upd, rng_state, rows = None, 0, 0, None, []
    if args.resume:
        try:
            model, ck = load_checkpoint(args.resume, expect_n_bs=n_bs)
        except CheckpointError as exc:
            raise CliError(str(exc), EXIT_INCOMPATIBLE) from exc
        except OSError as exc:
            raise CliError(f"cannot read checkpoint: {exc.strerror}", EXIT_IO) from exc
        # the remaining budget and phase split follow the current config
        model.cfg = ppo_cfg
        model.adam.lr = ppo_cfg.lr
        start_ts, start_upd, rng_state = ck["timesteps"], ck["updates"], ck["rng_state"]
        rows = [r for r in _read_log(out / "train_log.csv") if r["timesteps"] <= start_ts]

    extra = {"manifest_sha256": doc["manifest_sha256"], "config": cfg.snapshot()}
    every = max(1, args.checkpoint_every)
    saved = {"last": None}

    def on_update(m: PpoModel, row: dict, rng: np.random.Generator) -> None:
        if row["update"] % every == 0:
            path = ckpt_dir / f"ckpt_{row['update']:06d}.json"
            save_checkpoint(path, m, timesteps=row["timesteps"], updates=row["update"],
                            rng_state=rng.bit_generator.state, extra=extra)
            saved["last"] = path

    def factory(i: int) -> HandoverEnv:
        return HandoverEnv(traces, cfg.env, cfg.protocol, seed=env_seed(cfg.seed, i))

    try:
        model, tlog = train(factory, ppo_cfg, model=model, start_timesteps=start_ts, start_update=start_upd,
                            rng_state=rng_state, on_update=on_update)
    except TrainingDiverged as exc:
        last = saved["last"] or args.resume
        raise CliError(f"training diverged ({exc}); last good checkpoint: {last}", EXIT_DIVERGED) from exc
    all_rows = TrainLog(rows + tlog.rows)
    all_rows.write(out / "train_log.csv")
    final = tlog.rows[-1] if tlog.rows else {"timesteps": start_ts, "update": start_upd}
    save_checkpoint(ckpt_dir / "final.json", model, timesteps=final["timesteps"], updates=final["update"],
                    rng_state=None, extra=extra)
    log.info("trained to %d timesteps; final checkpoint %s", final["timesteps"], ckpt_dir / "final.json")


# --------------------------------------------------------------------------- evaluation

def cmd_eval(cfg: RunConfig, args) -> None:
    doc, entries, traces = load_trace_set(args.traces)
    _require_traces(traces)
    try:
        model, ck = load_checkpoint(args.checkpoint, expect_n_bs=traces[0].n_bs)
    except CheckpointError as exc:
        raise CliError(str(exc), EXIT_INCOMPATIBLE) from exc
    except OSError as exc:
        raise CliError(f"cannot read checkpoint: {exc.strerror}", EXIT_IO) from exc
    trained_on = ck.get("extra", {}).get("manifest_sha256")
    provenance = args.tag or ("train" if trained_on == doc["manifest_sha256"] else "held-out")
    reports = evaluate_agent(model, traces, cfg.protocol, cfg.env, cfg.metrics)
    summary = {"kind": "agent", "provenance": provenance, "manifest_sha256": doc["manifest_sha256"],
               "trained_on_manifest_sha256": trained_on, "checkpoint_sha256": sha256_file(args.checkpoint),
               "config": cfg.snapshot()}
    _write_reports(Path(cfg.io.out), entries, reports, summary)
    log.info("agent evaluation (%s) written to %s", provenance, cfg.io.out)


# --------------------------------------------------------------------------- comparison

COMPARE_COLUMNS = ["speed_kmh", "n_traces", "gamma_r_baseline", "gamma_r_agent", "hof_prob_baseline",
                   "hof_prob_agent", "pp_prob_baseline", "pp_prob_agent", "p_qout_at_cmd_baseline",
                   "p_qout_at_cmd_agent", "ho_attempts_baseline", "ho_attempts_agent"]


def _load_summary(path) -> dict:
    p = Path(path)
    if p.is_dir():
        p = p / "summary.json"
    try:
        return json.loads(p.read_text())
    except OSError as exc:
        raise CliError(f"cannot read report summary {p}: {exc.strerror}", EXIT_IO) from exc
    except json.JSONDecodeError as exc:
        raise CliError(f"{p}: not a report summary ({exc})", EXIT_IO) from exc


def cmd_compare(cfg: RunConfig, args) -> None:
    base, agent = _load_summary(args.baseline), _load_summary(args.agent)
    if base.get("manifest_sha256") != agent.get("manifest_sha256"):
        raise CliError(f"reports come from different trace sets: baseline manifest {base.get('manifest_sha256')} "
                       f"!= agent manifest {agent.get('manifest_sha256')}", EXIT_INCOMPATIBLE)
    if base["per_speed"].keys() != agent["per_speed"].keys():
        raise CliError("reports cover different speed classes", EXIT_INCOMPATIBLE)
    q_out = cfg.rlf.q_out_db
    out = Path(cfg.io.out)
    out.mkdir(parents=True, exist_ok=True)

    def fmt(v):
        return "" if v is None else repr(v) if isinstance(v, float) else v

    rows = []
    pooled_samples = {}
    for key in sorted(base["per_speed"], key=float):
        b, a = base["per_speed"][key], agent["per_speed"][key]
        row = {"speed_kmh": key, "n_traces": b["n_traces"], "gamma_r_baseline": b["gamma_r"],
               "gamma_r_agent": a["gamma_r"], "hof_prob_baseline": b["hof_prob"], "hof_prob_agent": a["hof_prob"],
               "pp_prob_baseline": b["pp_prob"], "pp_prob_agent": a["pp_prob"],
               "ho_attempts_baseline": b["ho_attempts"], "ho_attempts_agent": a["ho_attempts"]}
        for name, rep in (("baseline", b), ("agent", a)):
            s = np.array(rep["ecdf_start"])
            row[f"p_qout_at_cmd_{name}"] = ecdf_eval(s, q_out) if len(s) else None
            for when in ("start", "end"):
                pooled_samples.setdefault((name, when), []).extend(rep[f"ecdf_{when}"])
        rows.append(row)
    with open(out / "comparison.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=COMPARE_COLUMNS)
        w.writeheader()
        for row in rows:
            w.writerow({k: fmt(v) for k, v in row.items()})
    for (name, when), samples in sorted(pooled_samples.items()):
        write_ecdf(np.sort(np.array(samples)), out / f"ecdf_{name}_{when}.csv")
    write_summary({"kind": "comparison", "manifest_sha256": base["manifest_sha256"], "q_out_db": q_out,
                   "rows": rows, "config": cfg.snapshot()}, out / "comparison.json")
    log.info("comparison of %d speed classes written to %s", len(rows), out)


# --------------------------------------------------------------------------- entry point

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="nrhandover", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("--config", help="TOML run configuration")
    p.add_argument("--seed", type=int, help="run seed (overrides the config)")
    p.add_argument("--out", help="output directory (overrides io.out)")
    p.add_argument("--verbose", "-v", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-traces", help="synthesize trace files and a manifest")
    g.add_argument("--count", type=int, default=10, help="traces per speed class")
    g.add_argument("--speed", type=float, nargs="+", default=[30.0], help="speed classes in km/h")
    g.set_defaults(func=cmd_gen_traces)

    b = sub.add_parser("run-baseline", help="evaluate the Event-A3 handover controller")
    b.add_argument("--traces", required=True, help="trace manifest (file or directory)")
    b.add_argument("--ttt", type=int, help="time-to-trigger in ms")
    b.add_argument("--off", type=float, help="A3 offset in dB")
    b.add_argument("--sweep", action="store_true", help="pick the best TTT/offset pair from the standard grid")
    b.set_defaults(func=cmd_run_baseline)

    t = sub.add_parser("train", help="train a PPO handover policy")
    t.add_argument("--traces", required=True, help="trace manifest (file or directory)")
    t.add_argument("--steps", type=int, help="total environment steps")
    t.add_argument("--phase-split", type=float, help="fraction of steps in phase 1")
    t.add_argument("--checkpoint-dir", help="defaults to OUT/checkpoints")
    t.add_argument("--checkpoint-every", type=int, default=10, help="updates between checkpoints")
    t.add_argument("--resume", help="continue from this checkpoint")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="evaluate a trained policy greedily")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--traces", required=True, help="trace manifest (file or directory)")
    e.add_argument("--tag", help="provenance label (default: train or held-out)")
    e.set_defaults(func=cmd_eval)

    c = sub.add_parser("compare", help="side-by-side table and ECDF series")
    c.add_argument("--baseline", required=True, help="run-baseline output directory")
    c.add_argument("--agent", required=True, help="eval output directory")
    c.set_defaults(func=cmd_compare)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        cfg = load_config(args.config)
        a3 = {}
        if getattr(args, "ttt", None) is not None:
            a3["ttt_ms"] = args.ttt
        if getattr(args, "off", None) is not None:
            a3["off_db"] = args.off
        ppo = {}
        if getattr(args, "steps", None) is not None:
            ppo["total_timesteps"] = args.steps
        if getattr(args, "phase_split", None) is not None:
            ppo["phase1_fraction"] = args.phase_split
        cfg = with_overrides(cfg, seed=args.seed, out=args.out, a3=a3, ppo=ppo)
        args.func(cfg, args)
    except ConfigError as exc:
        print(f"nrhandover: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CliError as exc:
        print(f"nrhandover: {exc}", file=sys.stderr)
        return exc.code
    except OSError as exc:
        print(f"nrhandover: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    return 0


if __name__ == "__main__":
    sys.exit(main())
