#!/usr/bin/env python3
"""Reproduce the virtual-clock scaling studies and write all reports.

Runs both experiment grids under the deterministic cost model and emits
CSV, Markdown, and SVG reports plus a short trend summary to stdout.

Example:
    python scripts/scaling_report.py --out runs/scaling
"""

import argparse
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from afcrl import bench, reports
from afcrl.coupling import IoStrategy


def main() -> int:
    parser = argparse.ArgumentParser(
        description=__doc__, formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    parser.add_argument("--out", default="afc_out/scaling")
    args = parser.parse_args()
    out = Path(args.out)

    rank_records = bench.run_sweep(bench.table1_plans(), [IoStrategy(mode="baseline")])
    rank_tables = bench.group_by_ranks(rank_records)
    for fmt in reports.FORMATS:
        reports.emit_report(rank_tables, fmt, out, stem="rank_groups",
                            breakdown_records=rank_records)

    io_records = bench.run_sweep(bench.table2_plans(), bench.table2_strategies())
    io_tables = bench.group_by_strategy(io_records)
    for fmt in reports.FORMATS:
        reports.emit_report(io_tables, fmt, out, stem="io_strategies",
                            breakdown_records=io_records)

    one_rank = dict(rank_tables)["ranks=1"]
    row60 = [r for r in one_rank.rows if r.record.n_envs == 60][0]
    at60 = {r.strategy: r.hours for r in io_records if r.n_envs == 60}
    print(f"single-rank efficiency at 60 envs: {row60.efficiency_pct:.1f}%")
    print(f"60-env hours baseline/optimized/disabled: "
          f"{at60['baseline']:.2f}/{at60['optimized']:.2f}/{at60['disabled']:.2f}")
    print(f"optimized saves {100 * (1 - at60['optimized'] / at60['baseline']):.1f}% "
          f"over baseline")
    print(f"reports under {out}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
