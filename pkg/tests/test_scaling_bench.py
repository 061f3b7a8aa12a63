import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from afcrl import bench, orchestrator as orch, reports
from afcrl.coupling import IoStrategy
from afcrl.env import EnvConfig
from afcrl.errors import ConfigError
from afcrl.ppo import PpoHyper


def rec(hours, envs=1, ranks=1, episodes=3000, strategy="baseline"):
    return bench.TimingRecord(n_episodes=episodes, n_envs=envs, n_ranks=ranks,
                              hours=hours, strategy=strategy)


def trunc1(x: float) -> float:
    return math.trunc(x * 10.0) / 10.0


class TestSpeedup:
    def test_reference_table_single_rank(self):
        assert trunc1(bench.speedup(rec(225.2), rec(7.6, envs=60))) == 29.6

    def test_identity(self):
        r = rec(12.5, envs=4)
        assert bench.speedup(r, r) == 1.0

    def test_reference_table_five_ranks(self):
        assert trunc1(bench.speedup(rec(305.8, ranks=5), rec(32.4, envs=12, ranks=5))) == 9.4

    def test_nonpositive_duration_rejected(self):
        with pytest.raises(ConfigError):
            bench.speedup(rec(1.0), bench.TimingRecord(
                n_episodes=1, n_envs=1, n_ranks=1, hours=float("nan"), failed=True))


class TestEfficiency:
    def test_reference_table_sixty_envs(self):
        e = bench.efficiency(rec(225.2), rec(7.6, envs=60))
        assert trunc1(e) == 49.3

    def test_identity(self):
        r = rec(9.9, envs=8)
        assert bench.efficiency(r, r) == 100.0

    def test_reference_table_five_rank_group(self):
        e = bench.efficiency(rec(305.8, ranks=5), rec(170.8, envs=2, ranks=5))
        assert trunc1(e) == 89.5


class TestConsistentPair:
    @given(st.floats(0.1, 500), st.floats(0.1, 500),
           st.sampled_from([1, 2, 3, 5, 7, 16]),
           st.sampled_from([1, 2, 3, 4, 5, 6, 8, 10, 12, 16, 20, 30, 40, 50, 60]))
    @settings(max_examples=300, deadline=None)
    def test_identity_bitwise(self, t_ref, t_x, c_ref, c_x):
        s, e = bench._consistent_pair(t_ref, c_ref, t_x, c_x)
        assert e * c_x == s * c_ref

    def test_close_to_plain_division(self):
        s, e = bench._consistent_pair(225.2, 1, 7.6, 60)
        assert s == pytest.approx(225.2 / 7.6, rel=1e-12)
        assert e == pytest.approx(225.2 / 7.6 / 60, rel=1e-12)


class TestScalingTable:
    def test_reference_row_reports_one_and_hundred(self):
        records = [rec(10.0), rec(5.5, envs=2), rec(3.0, envs=4)]
        table = bench.ScalingTable.from_records(records)
        assert table.rows[0].speedup == 1.0
        assert table.rows[0].efficiency == 1.0
        assert table.rows[0].efficiency_pct == 100.0

    def test_failed_records_skipped(self):
        records = [rec(10.0), bench.TimingRecord(
            n_episodes=1, n_envs=2, n_ranks=1, hours=float("nan"), failed=True)]
        table = bench.ScalingTable.from_records(records)
        assert len(table.rows) == 1

    def test_group_by_ranks_references(self):
        records = [rec(10.0, ranks=5), rec(6.0, envs=2, ranks=5),
                   rec(8.0, ranks=1), rec(4.5, envs=2, ranks=1)]
        groups = dict(bench.group_by_ranks(records))
        assert groups["ranks=5"].reference.n_envs == 1
        assert groups["ranks=1"].reference.n_ranks == 1


class TestVirtualSweep:
    def test_bitwise_reproducible(self):
        plans = bench.table1_plans()
        strategies = [IoStrategy(mode="baseline")]
        a = bench.run_sweep(plans, strategies)
        b = bench.run_sweep(plans, strategies)
        assert a == b

    def test_table1_row_count(self):
        records = bench.run_sweep(bench.table1_plans(), [IoStrategy(mode="baseline")])
        assert len(records) == 26

    def test_table2_grid_size(self):
        records = bench.run_sweep(bench.table2_plans(), bench.table2_strategies())
        assert len(records) == 33
        assert {r.strategy for r in records} == {"baseline", "disabled", "optimized"}

    def test_efficiency_nonincreasing_in_envs(self):
        records = bench.run_sweep(bench.table1_plans(), [IoStrategy(mode="baseline")])
        table = dict(bench.group_by_ranks(records))["ranks=1"]
        effs = [row.efficiency for row in table.rows]
        for a, b in zip(effs, effs[1:]):
            assert b <= a * (1 + 1e-12)

    def test_disabled_efficiency_is_linear_everywhere(self):
        records = bench.run_sweep(bench.table2_plans(),
                                  [IoStrategy(mode="disabled")])
        table = bench.ScalingTable.from_records(records)
        for row in table.rows:
            assert row.efficiency_pct == pytest.approx(100.0, abs=1e-9)

    def test_breakdown_sums_to_total(self):
        records = bench.run_sweep(bench.table1_plans(), [IoStrategy(mode="baseline")])
        for r in records:
            assert r.solver_hours + r.io_hours + r.update_hours <= r.hours * (1 + 1e-12)
            assert r.hours == r.solver_hours + r.io_hours + r.update_hours

    def test_failed_point_recorded_and_sweep_continues(self):
        plans = [orch.ParallelPlan(mode=orch.VIRTUAL, n_envs=1, disk_bandwidth=-1.0),
                 orch.ParallelPlan(mode=orch.VIRTUAL, n_envs=2)]
        records = bench.run_sweep(plans, [IoStrategy(mode="baseline")])
        assert records[0].failed and not records[1].failed
        assert records[0].error


class TestRealSweep:
    def test_small_real_point(self):
        plan = orch.ParallelPlan(mode=orch.REAL, n_envs=2)
        cfg = EnvConfig(steps_per_actuation=5, actuations_per_episode=5)
        hyper = PpoHyper(epochs=1, minibatch_size=10)
        records = bench.run_sweep(
            [plan], [IoStrategy(mode="disabled")], mode=orch.REAL,
            n_episodes=4, actuations=5, config=cfg, hyper=hyper,
            seed=0, repetitions=2,
        )
        assert len(records) == 1
        r = records[0]
        assert not r.failed
        assert r.hours > 0
        assert r.solver_hours + r.io_hours + r.update_hours <= r.hours * (1 + 1e-9)


class TestGrids:
    def test_unknown_grid_lists_available(self):
        with pytest.raises(ConfigError) as e:
            bench.grid_points("table9")
        assert "table1" in str(e.value) and "table2" in str(e.value)

    def test_table1_strategy_always_baseline(self):
        _, strategies = bench.grid_points("table1", payloads=IoStrategy(mode="optimized"))
        assert [s.mode for s in strategies] == ["baseline"]


class TestReports:
    @pytest.fixture
    def tables(self):
        records = bench.run_sweep(bench.table1_plans(), [IoStrategy(mode="baseline")])
        return bench.group_by_ranks(records), records

    def test_csv_header_and_rows(self, tables):
        groups, _ = tables
        text = reports.render_csv(groups)
        lines = text.splitlines()
        assert lines[0] == "episodes,envs,ranks,cpus,hours,speedup,efficiency,strategy"
        assert len(lines) == 27

    def test_empty_table_is_header_only(self):
        assert reports.render_csv([]) == reports.CSV_HEADER + "\n"

    def test_markdown_reference_row_values(self):
        # the five-rank group of the reference results, rounded as printed
        hours = {1: 305.8, 2: 170.8, 4: 88.5, 6: 59.7, 8: 47.3, 10: 38.3, 12: 32.4}
        records = [rec(h, envs=e, ranks=5) for e, h in hours.items()]
        table = bench.ScalingTable.from_records(records)
        text = reports.render_markdown([("ranks=5", table)])
        row12 = [ln for ln in text.splitlines() if "| 12 | 5 |" in ln][0]
        cells = [c.strip() for c in row12.strip("|").split("|")]
        assert cells[5] == "9.4"   # speedup
        assert cells[6] == "78.6"  # efficiency, truncated at one decimal

    def test_markdown_deterministic(self, tables):
        groups, _ = tables
        assert reports.render_markdown(groups) == reports.render_markdown(groups)

    def test_svg_byte_stable(self, tables):
        groups, records = tables
        assert reports.render_svg_speedup(groups) == reports.render_svg_speedup(groups)
        assert reports.render_svg_efficiency(groups) == reports.render_svg_efficiency(groups)
        assert reports.render_svg_breakdown(records) == reports.render_svg_breakdown(records)

    def test_emit_report_files(self, tables, tmp_path):
        groups, records = tables
        for fmt in ("csv", "markdown", "svg"):
            written = reports.emit_report(groups, fmt, tmp_path,
                                          breakdown_records=records)
            for p in written:
                assert p.is_file() and p.stat().st_size > 0

    def test_unknown_format_rejected(self, tables, tmp_path):
        groups, _ = tables
        with pytest.raises(ConfigError):
            reports.emit_report(groups, "pdf", tmp_path)

    def test_unwritable_path_raises_oserror(self, tables):
        groups, _ = tables
        with pytest.raises(OSError):
            reports.emit_report(groups, "csv", "/proc/definitely/not/writable")

    def test_trunc1_truncates_not_rounds(self):
        assert reports.trunc1(78.652) == "78.6"
        assert reports.trunc1(29.631) == "29.6"
        assert reports.trunc1(89.99) == "89.9"
