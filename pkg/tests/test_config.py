import os
import tempfile
import unittest
from unittest import mock

from hybridnas.config import DEFAULT_CONFIG_PATH, RunConfig, load_run_config
from hybridnas.config.run_config import DEBUG_TYPES, SETTING_TYPES
from hybridnas.core.events import Encoding
from hybridnas.utils.exceptions import ConfigurationError, ERROR_CODES


class TestRunConfig(unittest.TestCase):
    def setUp(self):
        self._tmp = tempfile.TemporaryDirectory()
        self.tmp = self._tmp.name

    def tearDown(self):
        self._tmp.cleanup()

    def write_cfg(self, text):
        path = os.path.join(self.tmp, "run.cfg")
        with open(path, "w", encoding="utf-8") as f:
            f.write(text)
        return path

    def test_defaults(self):
        config = RunConfig()
        search = config.search_config()
        self.assertEqual(search.population, 50)
        self.assertEqual(search.iterations, 1000)
        self.assertEqual(search.weights, (0.6, 0.4, 0.0))
        self.assertEqual(search.diversity_alpha, 0.05)
        self.assertEqual(search.encoding, Encoding.SHIST)
        self.assertTrue(search.freeze_encoding)
        self.assertEqual(search.score.seeds, (0, 1, 2, 3))

    def test_defaults_cover_every_key(self):
        config = RunConfig()
        self.assertEqual(list(config.settings), list(SETTING_TYPES))
        self.assertEqual(list(config.debug_config), list(DEBUG_TYPES))
        self.assertIsInstance(config.get_setting("max_params"), int)
        self.assertIsInstance(config.get_setting("ntk_fd_step"), float)
        self.assertEqual(config.get_setting("genomes"), "")

    def test_defaults_come_from_packaged_file(self):
        """默认值只来自 default.cfg：改文件即改默认"""
        with open(DEFAULT_CONFIG_PATH, encoding="utf-8") as f:
            text = f.read().replace("population=50\n", "population=77\n")
        path = self.write_cfg(text)
        with mock.patch("hybridnas.config.run_config.DEFAULT_CONFIG_PATH", path):
            self.assertEqual(RunConfig().get_setting("population"), 77)

    def test_incomplete_packaged_file(self):
        with open(DEFAULT_CONFIG_PATH, encoding="utf-8") as f:
            text = f.read().replace("window_us=40000\n", "")
        path = self.write_cfg(text)
        with mock.patch("hybridnas.config.run_config.DEFAULT_CONFIG_PATH", path):
            with self.assertRaises(ConfigurationError) as ctx:
                RunConfig()
        self.assertEqual(ctx.exception.error_code, ERROR_CODES["INVALID_CONFIG_FILE"])
        self.assertEqual(ctx.exception.details["missing"], ["window_us"])

    def test_overlay_and_coercion(self):
        path = self.write_cfg("# 小规模\npopulation=8\nmax_params=3e6\nfreeze_encoding=no\n"
                              "diversity_alpha=0\nencoding=taf\nlog_enabled=on\n")
        config = load_run_config(path)
        self.assertEqual(config.get_setting("population"), 8)
        self.assertEqual(config.get_setting("max_params"), 3_000_000)
        self.assertIs(config.get_setting("freeze_encoding"), False)
        self.assertEqual(config.get_setting("diversity_alpha"), 0.0)
        self.assertEqual(config.search_config().encoding, Encoding.TAF)
        self.assertTrue(config.is_debug_enabled())
        self.assertTrue(config.get_debug_config()["enabled"])

    def test_seed_derives_score_seeds(self):
        config = load_run_config(self.write_cfg("seed=7\nzen_seeds=2\n"))
        score = config.score_config()
        self.assertEqual(score.seeds, (7, 8))
        self.assertEqual(score.graph_seed, 7)

    def test_unknown_key(self):
        with self.assertRaises(ConfigurationError) as ctx:
            load_run_config(self.write_cfg("populaton=8\n"))
        self.assertEqual(ctx.exception.error_code, ERROR_CODES["UNKNOWN_CONFIG_KEY"])
        self.assertEqual(ctx.exception.details["key"], "populaton")

    def test_bad_value(self):
        for text in ("population=many\n", "max_params=2.5\n", "freeze_encoding=maybe\n"):
            with self.subTest(text=text):
                with self.assertRaises(ConfigurationError) as ctx:
                    load_run_config(self.write_cfg(text))
                self.assertEqual(ctx.exception.error_code, ERROR_CODES["INVALID_CONFIG_VALUE"])

    def test_out_of_range_values(self):
        for text in ("population=1\n", "diversity_alpha=2\n", "height=60\n", "top_k=60\n", "encoding=voxel\n"):
            with self.subTest(text=text):
                with self.assertRaises(ConfigurationError):
                    load_run_config(self.write_cfg(text))

    def test_missing_file(self):
        with self.assertRaises(ConfigurationError) as ctx:
            load_run_config(os.path.join(self.tmp, "absent.cfg"))
        self.assertEqual(ctx.exception.error_code, ERROR_CODES["INVALID_CONFIG_FILE"])

    def test_key_without_value(self):
        with self.assertRaises(ConfigurationError):
            load_run_config(self.write_cfg("population\n"))

    def test_save_and_reload(self):
        config = load_run_config(self.write_cfg("population=12\nweight_zen=0.7\nweight_macs=0.3\n"))
        path = os.path.join(self.tmp, "out", "resolved.cfg")
        config.save_config(path)
        self.assertEqual(load_run_config(path).to_dict(), config.to_dict())

    def test_update_setting_rejects_unknown(self):
        config = RunConfig()
        config.update_setting("iterations", "20")
        self.assertEqual(config.get_setting("iterations"), 20)
        with self.assertRaises(ConfigurationError):
            config.update_setting("generations", 20)


if __name__ == "__main__":
    unittest.main()
