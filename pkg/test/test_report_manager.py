"""
Report Manager 테스트 - 메트릭 CSV 형식, 시드 집계 (LOCF), 플롯 데이터
"""

import os
import sys
import tempfile
import unittest
from pathlib import Path

import numpy as np
import pandas as pd

sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..'))

from src.errors import DomainError
from src.monitoring import EpisodeRecord, RunMetrics
from src.report_manager import (aggregate_runs, collect_metrics_files, export_plot_frame,
                                metrics_to_csv_text, normalized_ratio, read_metrics_csv,
                                write_metrics_csv, write_text)

HEADER = "episode,env_steps,return,outcome,lambda,cumulative_violations,risk_truncations"


def _metrics(rows):
    """rows: (return, cumulative_violations)"""
    metrics = RunMetrics()
    for i, (ret, viol) in enumerate(rows):
        metrics.append(EpisodeRecord(i, 5 * (i + 1), ret, 'horizon_end', 0.0, viol, 0))
    return metrics


def _frame(rows):
    return pd.DataFrame({
        'episode': range(len(rows)),
        'env_steps': [5 * (i + 1) for i in range(len(rows))],
        'return': [float(r) for r, _ in rows],
        'cumulative_violations': [v for _, v in rows],
    })


class TestMetricsCsv(unittest.TestCase):

    def test_01_header_and_format(self):
        """헤더 고정, 유효숫자 9자리, 줄바꿈 \\n"""
        metrics = RunMetrics()
        metrics.append(EpisodeRecord(0, 13, -2.0, 'goal_terminal', 1.0 / 3.0, 0, 0))
        metrics.append(EpisodeRecord(1, 14, -100.0, 'reached_unsafe', 128.333333333333, 1, 0))
        text = metrics_to_csv_text(metrics)
        lines = text.split("\n")
        self.assertEqual(lines[0], HEADER)
        self.assertEqual(lines[1], "0,13,-2,goal_terminal,0.333333333,0,0")
        self.assertEqual(lines[2], "1,14,-100,reached_unsafe,128.333333,1,0")
        self.assertEqual(lines[3], "")
        self.assertNotIn("\r", text)

    def test_02_empty_run_has_header(self):
        self.assertEqual(metrics_to_csv_text(RunMetrics()), HEADER + "\n")

    def test_03_write_and_read(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = write_metrics_csv(_metrics([(1.0, 0), (2.0, 1)]), Path(tmp) / "m.csv")
            frame = read_metrics_csv(path)
            self.assertEqual(list(frame['cumulative_violations']), [0, 1])
            write_text(Path(tmp) / "other.csv", "a,b\n1,2\n")
            with self.assertRaises(DomainError):
                read_metrics_csv(Path(tmp) / "other.csv")
            self.assertEqual([p.name for p in collect_metrics_files(tmp)], ["m.csv"])

    def test_04_append_validation(self):
        metrics = _metrics([(1.0, 2)])
        with self.assertRaises(DomainError):
            metrics.append(EpisodeRecord(1, 10, 0.0, 'horizon_end', 0.0, 1, 0))
        with self.assertRaises(DomainError):
            metrics.append(EpisodeRecord(3, 10, 0.0, 'horizon_end', 0.0, 2, 0))


class TestNormalizedRatio(unittest.TestCase):

    def test_01_examples(self):
        np.testing.assert_allclose(normalized_ratio([10.0, 10.0, 5.0], [0, 1, 5], 10.0),
                                   [1.0, 1.0, 0.1])

    def test_02_invalid_range(self):
        with self.assertRaises(DomainError):
            normalized_ratio([1.0], [0], 0.0)
        with self.assertRaises(DomainError):
            normalized_ratio([1.0], [0], -5.0, min_return=-2.0)


class TestAggregation(unittest.TestCase):

    def test_01_single_run_zero_std(self):
        frame = _frame([(1.0, 0), (2.0, 0), (3.0, 1)])
        agg = aggregate_runs([('rpt', frame)])
        self.assertEqual(list(agg['curve'].unique()), ['return_vs_violations'])
        self.assertEqual(list(agg['x']), [0, 1])
        self.assertEqual(list(agg['mean']), [2.0, 3.0])
        self.assertEqual(list(agg['std']), [0.0, 0.0])
        self.assertEqual(list(agg['n_runs']), [1, 1])

    def test_02_locf_alignment(self):
        """위반 수가 다르게 증가하는 두 실행을 마지막 관측값으로 맞춤"""
        a = _frame([(1.0, 0), (2.0, 0), (3.0, 1), (4.0, 2)])
        b = _frame([(10.0, 0), (20.0, 3)])
        agg = aggregate_runs([('rpt', a), ('rpt', b)])
        np.testing.assert_array_equal(agg['x'], [0, 1, 2, 3])
        np.testing.assert_allclose(agg['mean'], [6.0, 6.5, 7.0, 12.0])
        np.testing.assert_allclose(agg['std'], [4.0, 3.5, 3.0, 8.0])
        self.assertEqual(list(agg['n_runs']), [2, 2, 2, 2])

    def test_03_late_start_counts(self):
        a = _frame([(1.0, 0), (2.0, 1)])
        b = _frame([(5.0, 1)])
        agg = aggregate_runs([('rpt', a), ('rpt', b)])
        self.assertEqual(list(agg['n_runs']), [1, 2])
        np.testing.assert_allclose(agg['mean'], [1.0, 3.5])

    def test_04_ratio_curve(self):
        frame = _frame([(-2.0, 0), (-101.0, 1)])
        agg = aggregate_runs([('rpt', frame), ('unshaped', frame)], max_return=-2.0,
                             min_return=-200.0)
        ratio = agg[(agg['curve'] == 'ratio_vs_steps') & (agg['strategy'] == 'rpt')]
        np.testing.assert_array_equal(ratio['x'], [5, 10])
        np.testing.assert_allclose(ratio['mean'], [1.0, 0.5])
        self.assertEqual(sorted(agg['strategy'].unique()), ['rpt', 'unshaped'])

    def test_05_no_runs(self):
        with self.assertRaises(DomainError):
            aggregate_runs([])


class TestExportPlot(unittest.TestCase):

    def test_01_rows_and_monotone_x(self):
        runs = [('rpt_seed1', _frame([(1.0, 0), (2.0, 1), (3.0, 1)])),
                ('rpt_seed2', _frame([(4.0, 0), (5.0, 2)]))]
        frame = export_plot_frame(runs, x='violations', y='return')
        self.assertEqual(list(frame.columns), ['series', 'x', 'y'])
        self.assertEqual(len(frame), 5)
        first = frame[frame['series'] == 'rpt_seed1']['x'].to_numpy()
        self.assertTrue(np.all(np.diff(first) >= 0))

    def test_02_ratio_needs_max_return(self):
        runs = [('a', _frame([(1.0, 0)]))]
        with self.assertRaises(DomainError):
            export_plot_frame(runs, y='ratio')
        frame = export_plot_frame(runs, x='steps', y='ratio', max_return=2.0)
        self.assertEqual(list(frame['x']), [5])
        self.assertEqual(list(frame['y']), [0.5])

    def test_03_invalid_axes(self):
        with self.assertRaises(DomainError):
            export_plot_frame([], x='episodes')


if __name__ == '__main__':
    unittest.main(verbosity=2)
