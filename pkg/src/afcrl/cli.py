"""Command-line entry point: train, bench, report, replay.

Batch-oriented: every command reads a config (CLI flag > config file >
built-in default), writes its outputs under one directory, and exits.
Exit codes: 0 success, 2 configuration error, 3 runtime failure.
Timestamps only ever go to ``run.log`` so fixed-seed runs are
reproducible file for file.
"""

from __future__ import annotations

import argparse
import csv
import datetime
import os
import sys
from pathlib import Path

from . import bench, orchestrator as orch, reports
from .config import RunConfig, canonical_text, merge_config

from .errors import AfcError, ConfigError
from .bench import ScalingTable, TimingRecord

DEFAULT_OUT_ENV = "AFC_OUT_DIR"
RECORDS_HEADER = ["episodes", "envs", "ranks", "cpus", "hours", "solver_hours",
                  "io_hours", "update_hours", "strategy", "failed", "error"]


def _default_out() -> str:
    return os.environ.get(DEFAULT_OUT_ENV, "afc_out")


def _log(out_dir: Path, message: str) -> None:
    stamp = datetime.datetime.now().isoformat()
    with open(out_dir / "run.log", "a") as fh:
        fh.write(f"{stamp} {message}\n")


def _collect_overrides(args: argparse.Namespace) -> dict[str, str]:
    """Map CLI flags onto config keys; --set wins over nothing, flags win."""
    overrides: dict[str, str] = {}
    for item in args.set or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        overrides[key.strip()] = value.strip()
    flag_map = {
        "envs": "plan.n_envs",
        "ranks": "plan.n_ranks",
        "mode": "plan.mode",
        "io": "io.mode",
        "seed": "run.seed",
        "episodes": "run.episodes",
        "out": "run.out",
        "checkpoint_every": "run.checkpoint_every",
        "grid": "run.grid",
        "repetitions": "run.repetitions",
    }
    for attr, key in flag_map.items():
        value = getattr(args, attr, None)
        if value is not None:
            overrides[key] = str(value)
    return overrides


def _load_config(args: argparse.Namespace,
                 command_defaults: dict[str, str] | None = None) -> RunConfig:
    file_text = None
    if getattr(args, "config", None):
        path = Path(args.config)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        file_text = path.read_text()
    return merge_config(file_text, _collect_overrides(args), command_defaults)


def _prepare_out(cfg: RunConfig) -> Path:
    out_dir = Path(cfg.out) if cfg.out else Path(_default_out())
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "effective_config.cfg").write_text(canonical_text(cfg))
    return out_dir


def cmd_train(args: argparse.Namespace) -> int:
    cfg = _load_config(args, {"plan.mode": "virtual", "io.mode": "disabled"})
    out_dir = _prepare_out(cfg)
    _log(out_dir, f"train started: envs={cfg.plan.n_envs} ranks={cfg.plan.n_ranks} "
                  f"episodes={cfg.episodes} seed={cfg.seed}")
    result = orch.run_training(
        cfg.plan, cfg.env, cfg.ppo, cfg.episodes, cfg.io, cfg.seed,
        out_dir=out_dir, checkpoint_every=cfg.checkpoint_every,
    )
    tail = result.history[-10:]
    mean_cd = sum(r.mean_cd for r in tail) / len(tail)
    reduction = 100.0 * (cfg.env.cd_ref - mean_cd) / cfg.env.cd_ref
    summary = (
        f"episodes={len(result.history)}\n"
        f"mean_cd_last10={mean_cd!r}\n"
        f"cd_ref={cfg.env.cd_ref!r}\n"
        f"drag_reduction_pct={reduction!r}\n"
        f"mean_reward_last10={sum(r.mean_reward for r in tail) / len(tail)!r}\n"
    )
    (out_dir / "summary.txt").write_text(summary)
    sys.stdout.write(summary)
    _log(out_dir, "train finished")
    return 0


def _write_records_csv(path: Path, records: list[TimingRecord]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(RECORDS_HEADER)
        for r in records:
            writer.writerow([
                r.n_episodes, r.n_envs, r.n_ranks, r.n_total,
                repr(r.hours), repr(r.solver_hours), repr(r.io_hours),
                repr(r.update_hours), r.strategy, int(r.failed), r.error,
            ])


def _read_records_csv(path: Path) -> list[TimingRecord]:
    records = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != RECORDS_HEADER:
            raise ConfigError(f"unexpected records header in {path}")
        for row in reader:
            records.append(TimingRecord(
                n_episodes=int(row["episodes"]),
                n_envs=int(row["envs"]),
                n_ranks=int(row["ranks"]),
                hours=float(row["hours"]),
                solver_hours=float(row["solver_hours"]),
                io_hours=float(row["io_hours"]),
                update_hours=float(row["update_hours"]),
                strategy=row["strategy"],
                failed=bool(int(row["failed"])),
                error=row["error"],
            ))
    return records


def _tables_for(records: list[TimingRecord], group: str) -> list[tuple[str, ScalingTable]]:
    if group == "ranks":
        return bench.group_by_ranks(records)
    if group == "strategy":
        return bench.group_by_strategy(records)
    strategies = {r.strategy for r in records}
    return (bench.group_by_strategy(records) if len(strategies) > 1
            else bench.group_by_ranks(records))


def _emit_all(tables, records, formats: list[str], out_dir: Path, stem: str) -> None:
    for fmt in formats:
        reports.emit_report(tables, fmt, out_dir, stem=stem,
                            breakdown_records=records)


def cmd_bench(args: argparse.Namespace) -> int:
    cfg = _load_config(args, {"plan.mode": "virtual", "run.episodes": "20"})
    out_dir = _prepare_out(cfg)
    plans, strategies = bench.grid_points(cfg.grid, base_plan=cfg.plan, payloads=cfg.io)
    _log(out_dir, f"bench started: grid={cfg.grid} mode={cfg.plan.mode}")
    records = bench.run_sweep(
        plans, strategies, mode=cfg.plan.mode,
        n_episodes=cfg.episodes if cfg.plan.mode == orch.REAL else 3000,
        actuations=cfg.env.actuations_per_episode,
        config=cfg.env, hyper=cfg.ppo, seed=cfg.seed, repetitions=cfg.repetitions,
        out_dir=out_dir / "real_runs" if cfg.plan.mode == orch.REAL else None,
    )
    _write_records_csv(out_dir / "records.csv", records)
    tables = _tables_for(records, "strategy" if cfg.grid == "table2" else "ranks")
    formats = [f.strip() for f in args.formats.split(",")] if args.formats else list(reports.FORMATS)
    _emit_all(tables, records, formats, out_dir, stem="scaling")
    _log(out_dir, "bench finished")
    sys.stdout.write(f"wrote {len(records)} records under {out_dir}\n")
    return 0


def cmd_report(args: argparse.Namespace) -> int:
    records_path = Path(args.records)
    if not records_path.is_file():
        raise ConfigError(f"records file not found: {records_path}")
    records = _read_records_csv(records_path)
    out_dir = Path(args.out) if args.out else Path(_default_out())
    out_dir.mkdir(parents=True, exist_ok=True)
    tables = _tables_for(records, args.group)
    formats = [f.strip() for f in args.formats.split(",")] if args.formats else list(reports.FORMATS)
    _emit_all(tables, records, formats, out_dir, stem="scaling")
    sys.stdout.write(f"rendered {len(records)} records under {out_dir}\n")
    return 0


def cmd_replay(args: argparse.Namespace) -> int:
    run_dir = Path(args.run)
    history_path = run_dir / "history.csv"
    if not history_path.is_file():
        raise ConfigError(f"no history.csv under {run_dir}")
    episodes, rewards, walls, solver, io, update = [], [], [], [], [], []
    with open(history_path, newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            episodes.append(int(row["episode"]))
            rewards.append(float(row["mean_reward"]))
            walls.append(float(row["wall_seconds"]))
            solver.append(float(row["solver_seconds"]))
            io.append(float(row["io_seconds"]))
            update.append(float(row["update_seconds"]))
    out_dir = Path(args.out) if args.out else run_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    reward_series = [("mean reward", list(zip((e + 1 for e in episodes), rewards)))]
    svg = reports._series_svg("Training reward", "episode", "mean reward",
                              reward_series, logx=False, logy=False)
    (out_dir / "training_reward.svg").write_text(svg)
    breakdown = [
        TimingRecord(
            n_episodes=1, n_envs=e + 1, n_ranks=1, hours=w / 3600.0,
            solver_hours=s / 3600.0, io_hours=i / 3600.0, update_hours=u / 3600.0,
        )
        for e, w, s, i, u in zip(episodes, walls, solver, io, update)
    ]
    (out_dir / "training_breakdown.svg").write_text(
        reports.render_svg_breakdown(breakdown)
    )
    sys.stdout.write(f"replayed {len(episodes)} episodes under {out_dir}\n")
    return 0


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="key=value config file", default=None)
    parser.add_argument("--seed", type=int, default=None, help="master seed (default: 0)")
    parser.add_argument("--out", default=None,
                        help=f"output directory (default: ${DEFAULT_OUT_ENV} or ./afc_out)")
    parser.add_argument("--set", action="append", metavar="KEY=VALUE", default=None,
                        help="override any config key, e.g. env.beta=0.4")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="afcrl",
        description="Train a jet flow-control policy and benchmark its parallel scaling.",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser(
        "train", help="run multi-environment training",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    _add_common(p_train)
    p_train.add_argument("--envs", type=int, default=None, help="environments (default: 1)")
    p_train.add_argument("--ranks", type=int, default=None, help="ranks per environment (default: 1)")
    p_train.add_argument("--episodes", type=int, default=None, help="episode barriers (default: 50)")
    p_train.add_argument("--io", choices=["baseline", "optimized", "disabled"], default=None,
                         help="file-coupling strategy during training (default: disabled)")
    p_train.add_argument("--mode", choices=["real", "virtual"], default=None,
                         help="timing attribution; virtual keeps history.csv deterministic "
                              "(default: virtual)")
    p_train.add_argument("--checkpoint-every", dest="checkpoint_every", type=int, default=None,
                         help="checkpoint interval in episodes (default: 50)")
    p_train.set_defaults(func=cmd_train)

    p_bench = sub.add_parser(
        "bench", help="run a scaling sweep and emit reports",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    _add_common(p_bench)
    p_bench.add_argument("--grid", default=None,
                         help=f"experiment grid, one of {', '.join(bench.GRIDS)} "
                              "(default: table1)")
    p_bench.add_argument("--mode", choices=["virtual", "real"], default=None,
                         help="virtual = exact cost model; real = wall clock (default: virtual)")
    p_bench.add_argument("--io", choices=["baseline", "optimized", "disabled"], default=None,
                         help="payload strategy for table1-style grids")
    p_bench.add_argument("--episodes", type=int, default=None,
                         help="total environment-episodes per real-mode point (default: 20)")
    p_bench.add_argument("--repetitions", type=int, default=None,
                         help="real-mode repetitions, min is kept (default: 3)")
    p_bench.add_argument("--formats", default=None,
                         help="comma list of csv,markdown,svg (default: all)")
    p_bench.set_defaults(func=cmd_bench)

    p_report = sub.add_parser(
        "report", help="re-render reports from a stored records.csv",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    p_report.add_argument("--records", required=True, help="records.csv from a bench run")
    p_report.add_argument("--out", default=None, help="output directory")
    p_report.add_argument("--group", choices=["auto", "ranks", "strategy"], default="auto")
    p_report.add_argument("--formats", default=None,
                          help="comma list of csv,markdown,svg (default: all)")
    p_report.set_defaults(func=cmd_report)

    p_replay = sub.add_parser(
        "replay", help="re-render training curves from a run directory",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    p_replay.add_argument("--run", required=True, help="training output directory")
    p_replay.add_argument("--out", default=None, help="output directory (default: run dir)")
    p_replay.set_defaults(func=cmd_replay)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except AfcError as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"i/o failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    raise SystemExit(main())
