import itertools
import math
import os
import tempfile
import unittest

import numpy as np

from hybridnas.core.events import Encoding
from hybridnas.core.genome import FIXTURES, BlockType, DesignSpace, sample_homogeneous, serialize
from hybridnas.core.stats import (
    OVERALL,
    REPORT_PROXIES,
    BenchmarkRow,
    BenchmarkTable,
    architecture_key,
    composition_report,
    format_lead_report,
    kendall_tau,
    normalize_column,
    proxy_report,
    spearman_r,
    synthesize_benchmark,
    weight_sweep,
    write_report_dat,
    write_sweep_dat,
)
from hybridnas.core.tensorcore import Rng
from hybridnas.utils.exceptions import BenchmarkSchemaError, ConfigurationError, TensorShapeError, ERROR_CODES


def brute_force_tau_b(x, y):
    """逐对枚举计数（向量化），n 上百时仍然可用"""
    x, y = np.asarray(x, dtype=np.float64), np.asarray(y, dtype=np.float64)
    i, j = np.triu_indices(len(x), k=1)
    dx, dy = np.sign(x[i] - x[j]), np.sign(y[i] - y[j])
    nc = int(np.sum((dx != 0) & (dx == dy)))
    nd = int(np.sum((dx != 0) & (dy != 0) & (dx != dy)))
    tx = int(np.sum((dx == 0) & (dy != 0)))
    ty = int(np.sum((dx != 0) & (dy == 0)))
    return (nc - nd) / math.sqrt((nc + nd + tx) * (nc + nd + ty))


def as_encoding(text, encoding):
    """替换基因串开头的编码字段"""
    return encoding + text[text.index("|"):]


class TestKendall(unittest.TestCase):
    def test_identity_and_reverse(self):
        x = [3.0, 1.0, 4.0, 1.5, 9.0]
        self.assertAlmostEqual(kendall_tau(x, x), 1.0)
        self.assertAlmostEqual(kendall_tau(x, [-v for v in x]), -1.0)

    def test_one_swap(self):
        self.assertAlmostEqual(kendall_tau([1, 2, 3, 4], [1, 3, 2, 4]), 4 / 6, places=12)

    def test_tie_corrected(self):
        self.assertAlmostEqual(kendall_tau([1, 1, 2], [1, 2, 3]), 2 / math.sqrt(6), places=12)

    def test_matches_brute_force_with_ties(self):
        rng = np.random.default_rng(3)
        for _ in range(100):
            n = int(rng.integers(2, 501))
            levels = int(rng.integers(2, 12))
            x = rng.integers(0, levels, n).astype(float)
            y = rng.integers(0, levels, n).astype(float)
            if len(set(x)) == 1 or len(set(y)) == 1:
                continue
            self.assertAlmostEqual(kendall_tau(x, y), brute_force_tau_b(x, y), delta=1e-12)

    def test_all_tied_is_nan(self):
        self.assertTrue(math.isnan(kendall_tau([2, 2, 2], [1, 2, 3])))

    def test_length_errors(self):
        with self.assertRaises(TensorShapeError):
            kendall_tau([1, 2], [1, 2, 3])
        with self.assertRaises(TensorShapeError):
            kendall_tau([1], [1])


class TestSpearman(unittest.TestCase):
    def test_monotone(self):
        x = [0.5, 2.0, -1.0, 3.0]
        self.assertAlmostEqual(spearman_r(x, [v ** 3 for v in x]), 1.0)
        self.assertAlmostEqual(spearman_r(x, [-v for v in x]), -1.0)

    def test_sum_of_squares_example(self):
        self.assertAlmostEqual(spearman_r([1, 2, 3, 4], [2, 1, 4, 3]), 0.6, places=12)

    def test_zero_variance_is_nan(self):
        self.assertTrue(math.isnan(spearman_r([1, 2, 3], [5, 5, 5])))


class TestNormalize(unittest.TestCase):
    def test_rules(self):
        np.testing.assert_allclose(normalize_column(np.array([2.0, 4.0, 3.0])), [0.0, 1.0, 0.5])
        np.testing.assert_allclose(normalize_column(np.array([7.0, 7.0])), [0.5, 0.5])
        np.testing.assert_allclose(normalize_column(np.array([1.0, math.nan, 3.0])), [0.0, 0.0, 1.0])


class TestWeightSweep(unittest.TestCase):
    def test_grid(self):
        result = weight_sweep(synthesize_benchmark(40, Rng(0)), 0.1)
        self.assertEqual(len(result.rows), 11)
        self.assertEqual(result.rows[0].w_zen, 0.0)
        self.assertEqual(result.rows[-1].w_zen, 1.0)
        self.assertEqual(len(weight_sweep(synthesize_benchmark(20, Rng(1)), 0.25).rows), 5)

    def test_planted_macs(self):
        result = weight_sweep(synthesize_benchmark(120, Rng(2), target="macs"), 0.1)
        self.assertEqual(result.best.w_zen, 0.0)
        self.assertAlmostEqual(result.best.tau, 1.0)

    def test_planted_weights(self):
        """预设 0.6/0.4 信号时，100个种子中至少95个的最优权重落在 [0.5, 0.7]"""
        hits = 0
        for seed in range(100):
            best = weight_sweep(synthesize_benchmark(250, Rng(seed)), 0.1).best
            hits += 0.5 - 1e-9 <= best.w_zen <= 0.7 + 1e-9
        self.assertGreaterEqual(hits, 95)

    def test_bad_step(self):
        table = synthesize_benchmark(10, Rng(4))
        with self.assertRaises(ConfigurationError):
            weight_sweep(table, 0.3)
        with self.assertRaises(ConfigurationError):
            weight_sweep(table, 0.0)

    def test_empty_table(self):
        with self.assertRaises(BenchmarkSchemaError):
            weight_sweep(BenchmarkTable(()), 0.1)

    def test_dat_file(self):
        result = weight_sweep(synthesize_benchmark(20, Rng(5)), 0.5)
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "sweep.dat")
            write_sweep_dat(result, path)
            with open(path, encoding="utf-8") as f:
                lines = f.read().splitlines()
        self.assertTrue(lines[0].startswith("#"))
        self.assertEqual(lines[1], "# w_zen w_macs tau rho")
        self.assertEqual(len(lines), 2 + 3)
        self.assertEqual(len(lines[2].split(" ")), 4)


class TestProxyReport(unittest.TestCase):
    def test_planted_zen(self):
        report = proxy_report(synthesize_benchmark(120, Rng(6), target="zen"))
        for entry in report.entries:
            if entry.proxy == "zen":
                self.assertAlmostEqual(entry.tau, 1.0)
                self.assertAlmostEqual(entry.rho, 1.0)
        groups = {e.group for e in report.entries}
        self.assertIn(OVERALL, groups)
        self.assertEqual(len(report.entries), len(REPORT_PROXIES) * len(groups))

    def test_planted_ntk_anti(self):
        report = proxy_report(synthesize_benchmark(120, Rng(7), target="ntk_anti"))
        overall = next(e for e in report.entries if e.proxy == "ntk_cond" and e.group == OVERALL)
        self.assertLess(overall.tau, -0.5)
        self.assertLess(overall.rho, -0.5)

    def test_single_row_group_is_degenerate(self):
        rows = [BenchmarkRow(FIXTURES[name], "SHIST", float(i), 10 * (i + 1), 5 * (i + 1), None, 0.1 * (i + 1))
                for i, name in enumerate(("3M", "5M", "10M"))]
        rows.append(BenchmarkRow(as_encoding(FIXTURES["3M"], "TAF"), "TAF", 1.0, 1, 1, 0.5, 0.2))
        report = proxy_report(BenchmarkTable(tuple(rows)))
        taf = [e for e in report.entries if e.group == "TAF"]
        self.assertTrue(all(e.degenerate for e in taf))
        ntk_shist = next(e for e in report.entries if e.proxy == "ntk_cond" and e.group == "SHIST")
        self.assertEqual(ntk_shist.n, 0)
        self.assertTrue(ntk_shist.degenerate)
        zen_shist = next(e for e in report.entries if e.proxy == "zen" and e.group == "SHIST")
        self.assertFalse(zen_shist.degenerate)
        self.assertAlmostEqual(zen_shist.tau, 1.0)
        self.assertIn("degenerate groups", report.to_text())

    def test_report_dat(self):
        report = proxy_report(synthesize_benchmark(40, Rng(8)))
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "kendall.dat")
            write_report_dat(report, path, "tau")
            with open(path, encoding="utf-8") as f:
                lines = f.read().splitlines()
        self.assertEqual(len(lines), 2 + len(REPORT_PROXIES))
        self.assertTrue(lines[2].startswith("zen "))


class TestComposition(unittest.TestCase):
    def test_groups(self):
        rng = Rng(9)
        rows = []
        for i, block in enumerate((BlockType.C2F, BlockType.C2F, BlockType.MAMBA)):
            g = sample_homogeneous(rng, block)
            rows.append(BenchmarkRow(serialize(g), g.encoding.value, 1.0 + i, 1, 1, None, 0.5))
        rows.append(BenchmarkRow(FIXTURES["3M"], "SHIST", 10.0, 1, 1, None, 0.9))
        frame = composition_report(BenchmarkTable(tuple(rows))).set_index("composition")
        self.assertEqual(frame.loc["c2f", "n"], 2)
        self.assertAlmostEqual(frame.loc["c2f", "mean_zen"], 1.5)
        self.assertEqual(frame.loc["heterogeneous", "n"], 1)
        self.assertAlmostEqual(frame.loc["heterogeneous", "mean_map50"], 0.9)


class TestFormatLead(unittest.TestCase):
    def test_counts_best_encoding_per_architecture(self):
        def row(name, encoding, map50):
            return BenchmarkRow(as_encoding(FIXTURES[name], encoding), encoding, 1.0, 1, 1, None, map50)

        rows = [
            row("3M", "SHIST", 0.5), row("3M", "TAF", 0.7), row("3M", "MDES", 0.6),
            # 并列时取声明顺序靠前的 VTEI
            row("5M", "SHIST", 0.6), row("5M", "VTEI", 0.6),
            # 只有一种编码，不参与比较
            row("10M", "SHIST", 0.9),
        ]
        frame = format_lead_report(BenchmarkTable(tuple(rows))).set_index("encoding")
        self.assertEqual(list(frame.index), ["VTEI", "MDES", "SHIST", "TAF"])
        self.assertEqual(frame.loc["TAF", "leads"], 1)
        self.assertEqual(frame.loc["VTEI", "leads"], 1)
        self.assertEqual(frame.loc["SHIST", "leads"], 0)
        self.assertAlmostEqual(frame.loc["TAF", "share"], 0.5)

    def test_no_comparable_architectures(self):
        frame = format_lead_report(BenchmarkTable((BenchmarkRow(FIXTURES["3M"], "SHIST", 1.0, 1, 1, None, 0.5),)))
        self.assertEqual(int(frame["leads"].sum()), 0)
        self.assertTrue((frame["share"] == 0.0).all())

    def test_architecture_key(self):
        self.assertEqual(architecture_key(as_encoding(FIXTURES["3M"], "TAF")), architecture_key(FIXTURES["3M"]))


class TestSynthesize(unittest.TestCase):
    def test_unique_valid_rows(self):
        table = synthesize_benchmark(60, Rng(10), target="weights")
        self.assertEqual(len({row.key for row in table.rows}), 60)
        self.assertTrue(all(0.0 <= row.map50 <= 1.0 for row in table.rows))

    def test_deterministic(self):
        self.assertEqual(synthesize_benchmark(30, Rng(11)), synthesize_benchmark(30, Rng(11)))

    def test_unknown_target(self):
        with self.assertRaises(ConfigurationError):
            synthesize_benchmark(5, Rng(0), target="params")

    def test_count_beyond_space(self):
        space = DesignSpace(encodings=(Encoding.SHIST,), stem_channels=(16,), multipliers=(1.0,),
                            blocks=((BlockType.C2F,),) * 4, repeats=(1,))
        self.assertEqual(len(synthesize_benchmark(1, Rng(0), space=space).rows), 1)
        with self.assertRaises(ConfigurationError) as ctx:
            synthesize_benchmark(2, Rng(0), space=space)
        self.assertEqual(ctx.exception.error_code, ERROR_CODES["INVALID_CONFIG_VALUE"])
        self.assertEqual(ctx.exception.details["space_size"], 1)


if __name__ == "__main__":
    unittest.main()
