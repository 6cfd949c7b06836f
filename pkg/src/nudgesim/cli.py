"""Command-line entry point: ``nudgesim run | export | inspect``."""

from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import json
import os
import shutil
import sys
import tempfile
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .behavior import decay_f, decay_g, decay_h
from .env_model import (
    ConfigError,
    DecayParams,
    Environment,
    dump_environment,
    environment_from_dict,
    environment_to_dict,
    load_environment,
    sample_population,
)
from .harness import run_experiment
from .logkit import serialize
from .metrics import MetricRow, MetricStore, write_metrics_csv
from .streams import POPULATION, stream

OUTPUT_FILES = ("logs.jsonl", "metrics.jsonl", "decisions.jsonl", "result.json", "manifest.json")
EXPORTS = ("activity_curve", "regret_curve", "decay_shapes", "metrics")
DECAY_SHAPE_MAX_N = 50


def _err(msg: str):
    print(f"nudgesim: {msg}", file=sys.stderr)


def policy_label(spec: dict) -> str:
    extra = ",".join(f"{k}={v}" for k, v in spec.items() if k not in ("name", "nudge"))
    return f"{spec['name']}({extra})" if extra else spec["name"]


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _compare_summary(args):
    env_doc, spec, seed = args
    env = environment_from_dict(env_doc)
    return run_experiment(env, spec, seed, keep_logs=False).summary()


def _write_run(env: Environment, seed: int, tmp: Path, workers: int, quiet: bool):
    store = MetricStore(tmp / "metrics.jsonl")
    try:
        result = run_experiment(env, env.rl.policy, seed, store=store)
    finally:
        store.close()
    (tmp / "logs.jsonl").write_bytes(serialize(result.logs))
    with open(tmp / "decisions.jsonl", "w", encoding="utf-8", newline="\n") as fh:
        for dec in result.decisions:
            fh.write(json.dumps(dec.to_dict(), separators=(",", ":")) + "\n")
    if not quiet:
        print(f"ran {policy_label(result.policy)}: {len(result.decisions)} decisions, {len(result.logs)} log records")

    summaries = [result.summary()]
    if env.rl.compare:
        jobs = [(environment_to_dict(env), spec, seed) for spec in env.rl.compare]
        if workers > 1 and len(jobs) > 1:
            with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
                summaries.extend(pool.map(_compare_summary, jobs))
        else:
            summaries.extend(map(_compare_summary, jobs))
        if not quiet:
            print(f"ran {len(jobs)} comparison policies")
    for s in summaries:
        s["label"] = policy_label(s["policy"])

    doc = {"environment": environment_to_dict(env), "seed": seed, "policies": summaries}
    (tmp / "result.json").write_text(json.dumps(doc, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")

    files = [
        {"name": name, "bytes": (tmp / name).stat().st_size, "sha256": _sha256(tmp / name)}
        for name in OUTPUT_FILES
        if name != "manifest.json"
    ]
    manifest = {
        "tool": "nudgesim",
        "version": __version__,
        "config_sha256": hashlib.sha256(dump_environment(env).encode("utf-8")).hexdigest(),
        "seed": seed,
        "files": files,
    }
    (tmp / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")


def cmd_run(config_path, out_dir, seed_override=None, quiet=False, workers=None) -> int:
    try:
        text = Path(config_path).read_text(encoding="utf-8")
    except OSError as exc:
        _err(f"cannot read config {config_path}: {exc}")
        return 2
    try:
        env = load_environment(text)
    except ConfigError as exc:
        _err(f"invalid config {config_path}: {exc}")
        return 1
    seed = env.seed if seed_override is None else int(seed_override)
    env = dataclasses.replace(env, seed=seed)
    workers = workers or os.cpu_count() or 1

    out = Path(out_dir)
    tmp = None
    try:
        out.parent.mkdir(parents=True, exist_ok=True)
        tmp = Path(tempfile.mkdtemp(prefix=f".{out.name}.tmp-", dir=out.parent))
        _write_run(env, seed, tmp, workers, quiet)
        if out.exists():
            old = Path(tempfile.mkdtemp(prefix=f".{out.name}.old-", dir=out.parent))
            os.replace(out, old / out.name)
            os.replace(tmp, out)
            shutil.rmtree(old, ignore_errors=True)
        else:
            os.replace(tmp, out)
        tmp = None
    except OSError as exc:
        _err(f"I/O failure writing {out}: {exc}")
        return 2
    finally:
        if tmp is not None:
            shutil.rmtree(tmp, ignore_errors=True)
    if not quiet:
        print(f"wrote {out}")
    return 0


# --- export ------------------------------------------------------------------


def _read_result(run_dir: Path) -> dict:
    return json.loads((run_dir / "result.json").read_text(encoding="utf-8"))


def _read_metric_rows(run_dir: Path) -> list[MetricRow]:
    with MetricStore(run_dir / "metrics.jsonl") as store:
        return store.rows()


def decay_shape_rows(p: DecayParams, max_n: int = DECAY_SHAPE_MAX_N):
    return [(n, decay_f(n, p), decay_g(n, p), decay_h(n, p)) for n in range(max_n + 1)]


def _export_decay_shapes(run_dir, config_path, context_id):
    if config_path is not None:
        env = load_environment(Path(config_path).read_text(encoding="utf-8"))
    elif run_dir is not None:
        env = environment_from_dict(_read_result(run_dir)["environment"])
    else:
        env = None
    if env is None:
        params = DecayParams()
    else:
        ctx = env.context(context_id) if context_id else env.contexts[0]
        params = ctx.decay_params
    return ("n", "f", "g", "h"), decay_shape_rows(params)


def _export_activity(run_dir):
    result = _read_result(run_dir)
    users_per_day = {d["day"]: d["n_users"] for d in result["policies"][0]["days"]}
    sums: dict[int, list] = {day: [0, 0, 0] for day in users_per_day}
    for row in _read_metric_rows(run_dir):
        s = sums.setdefault(row.day, [0, 0, 0])
        s[0] += row.daily_action_count
        s[1] += row.session_count
        s[2] += int(row.active)
    rows = []
    for day in sorted(sums):
        n = users_per_day.get(day, 0)
        a, s, act = sums[day]
        rows.append((day, n, a / n if n else 0.0, s / n if n else 0.0, act / n if n else 0.0))
    return ("day", "users", "mean_actions", "mean_sessions", "active_fraction"), rows


def _export_regret(run_dir):
    policies = _read_result(run_dir)["policies"]
    best = max(policies, key=lambda p: p["cumulative_reward"])
    best_curve = {d["day"]: d["cumulative_reward"] for d in best["days"]}
    rows = []
    for p in policies:
        for d in p["days"]:
            rows.append((d["day"], p["label"], d["cumulative_reward"], best_curve[d["day"]] - d["cumulative_reward"]))
    rows.sort(key=lambda r: (r[0], r[1]))
    return ("day", "policy", "cumulative_reward", "regret"), rows


def cmd_export(run_dir, what, out_path=None, config_path=None, context_id=None) -> int:
    run = Path(run_dir) if run_dir is not None else None
    if what not in EXPORTS:
        _err(f"unknown export {what!r}; choose from {', '.join(EXPORTS)}")
        return 1
    try:
        if what == "decay_shapes":
            header, rows = _export_decay_shapes(run, config_path, context_id)
        elif run is None:
            _err(f"export {what} needs --run")
            return 1
        elif what == "activity_curve":
            header, rows = _export_activity(run)
        elif what == "regret_curve":
            header, rows = _export_regret(run)
        else:
            target = Path(out_path) if out_path else run / "metrics.csv"
            write_metrics_csv(_read_metric_rows(run), target)
            return 0
    except (OSError, KeyError, ValueError) as exc:
        _err(f"cannot export {what}: {exc}")
        return 1
    target = Path(out_path) if out_path else (run or Path(".")) / f"{what}.csv"
    try:
        with open(target, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            w.writerows(rows)
    except OSError as exc:
        _err(f"cannot write {target}: {exc}")
        return 2
    return 0


# --- inspect -----------------------------------------------------------------


def cmd_inspect(config_path, seed_override=None) -> int:
    try:
        env = load_environment(Path(config_path).read_text(encoding="utf-8"))
    except OSError as exc:
        _err(f"cannot read config {config_path}: {exc}")
        return 2
    except ConfigError as exc:
        _err(f"invalid config {config_path}: {exc}")
        return 1
    seed = env.seed if seed_override is None else int(seed_override)
    s = env.schedule
    print(f"seed {seed}; horizon {s.horizon_days} days from {s.start_date}; nudge window {s.nudge_window_days} days")
    print(f"reward {env.rl.reward_metric}; features {', '.join(env.rl.context_features) or '-'}")
    print(f"actions {', '.join(env.rl.action_set)}; policy {policy_label(env.rl.policy)}")
    users = sample_population(env, stream(seed, POPULATION))
    for ctx in env.contexts:
        mine = [u for u in users if u.context_id == ctx.context_id]
        p = ctx.decay_params
        print(
            f"context {ctx.context_id}: {len(mine)} users, {len(ctx.baseline_matrix.states)} states, "
            f"sessions/day {ctx.session_rate_per_day:g}, hours {ctx.active_hours[0]:g}-{ctx.active_hours[1]:g}, "
            f"p_online {ctx.p_online:g}, decay k_a={p.k_a:g} k_b={p.k_b:g} a0={p.a0:g} b0={p.b0:g} c0={p.c0:g}"
        )
        if mine:
            w = np.array([(u.alpha, u.beta, u.gamma) for u in mine])
            for name, col in zip(("alpha", "beta", "gamma"), w.T):
                print(f"  {name:5s} mean {col.mean():.4f}  min {col.min():.4f}  max {col.max():.4f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nudgesim", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="simulate a config and write run outputs")
    run.add_argument("--config", required=True)
    run.add_argument("--out", required=True)
    run.add_argument("--seed", type=int, default=None, help="overrides the config seed")
    run.add_argument("--quiet", action="store_true")
    run.add_argument("--workers", type=int, default=None, help="processes for comparison policies")

    exp = sub.add_parser("export", help="write a CSV derived from a run")
    exp.add_argument("what", choices=EXPORTS)
    exp.add_argument("--run", default=None, help="run output directory")
    exp.add_argument("--out", default=None, help="CSV path (default: <run>/<what>.csv)")
    exp.add_argument("--config", default=None, help="config for decay_shapes")
    exp.add_argument("--context", default=None, help="context id for decay_shapes")

    ins = sub.add_parser("inspect", help="print a config summary and population statistics")
    ins.add_argument("--config", required=True)
    ins.add_argument("--seed", type=int, default=None)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "run":
        return cmd_run(args.config, args.out, args.seed, args.quiet, args.workers)
    if args.command == "export":
        return cmd_export(args.run, args.what, args.out, args.config, args.context)
    return cmd_inspect(args.config, args.seed)


if __name__ == "__main__":
    sys.exit(main())
