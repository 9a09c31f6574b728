import unittest

import numpy as np

from hybridnas.core.events import (
    MAX_TIMESTAMP_US,
    Encoding,
    EventRecord,
    EventWindow,
    TafEncoder,
    encode,
    encode_mdes,
    encode_shist,
    encode_vtei,
    window_split,
)
from hybridnas.core.tensorcore import Rng
from hybridnas.utils.exceptions import ERROR_CODES, EventFormatError, WindowOrderError

W, H = 8, 6
FIXTURE = [EventRecord(0, 1, 1, 1), EventRecord(1, 1, 1, 1), EventRecord(39999, 2, 3, -1)]


def window(records, t_a=0, t_b=40000):
    return EventWindow.from_records(records, t_a, t_b, W, H)


def random_events(rng, n, t_a, t_b):
    t = np.sort(np.array([rng.integers(t_a, t_b) for _ in range(n)]))
    return [EventRecord(int(t[i]), rng.integers(0, W), rng.integers(0, H), rng.choice((-1, 1)))
            for i in range(n)]


class TestEventWindow(unittest.TestCase):
    def test_rejects_event_outside_bounds(self):
        with self.assertRaises(EventFormatError):
            window([EventRecord(40000, 0, 0, 1)])

    def test_rejects_bad_polarity(self):
        with self.assertRaises(EventFormatError):
            window([EventRecord(0, 0, 0, 0)])

    def test_rejects_unordered(self):
        with self.assertRaises(WindowOrderError):
            window([EventRecord(5, 0, 0, 1), EventRecord(4, 0, 0, 1)])

    def test_rejects_coordinates_outside_sensor(self):
        with self.assertRaises(EventFormatError):
            window([EventRecord(0, W, 0, 1)])

    def test_input_channels(self):
        self.assertEqual(Encoding.VTEI.input_channels(5), 5)
        self.assertEqual(Encoding.SHIST.input_channels(5), 10)
        self.assertEqual(Encoding.from_name("taf"), Encoding.TAF)
        with self.assertRaises(EventFormatError):
            Encoding.from_name("voxel")


class TestVtei(unittest.TestCase):
    def test_empty_window(self):
        out = encode_vtei(window([]), 5)
        self.assertEqual(out.tensor.shape, (5, H, W))
        self.assertFalse(out.tensor.any())

    def test_hand_binned_fixture(self):
        t = encode_vtei(window(FIXTURE), 5).tensor
        self.assertEqual(t[0, 1, 1], 1.0)
        self.assertEqual(t[4, 3, 2], -1.0)
        self.assertEqual(np.count_nonzero(t), 2)

    def test_last_event_wins(self):
        t = encode_vtei(window([EventRecord(10, 4, 2, 1), EventRecord(20, 4, 2, -1)]), 5).tensor
        self.assertEqual(t[0, 2, 4], -1.0)

    def test_value_domain(self):
        t = encode_vtei(window(random_events(Rng(0), 200, 0, 40000)), 5).tensor
        self.assertTrue(set(np.unique(t)) <= {-1.0, 0.0, 1.0})


class TestMdes(unittest.TestCase):
    def test_stack_lengths(self):
        """N=16, B=5 时每层事件数为 16, 8, 4, 2, 1"""
        records = [EventRecord(i, i % W, (i // W) % H, 1) for i in range(16)]
        t = encode_mdes(window(records), 5).tensor
        self.assertEqual([int(np.count_nonzero(t[b])) for b in range(5)], [16, 8, 4, 2, 1])

    def test_same_pixel_last_polarity(self):
        records = [EventRecord(i, 3, 3, 1) for i in range(3)] + [EventRecord(3, 3, 3, -1)]
        t = encode_mdes(window(records), 5).tensor
        # n_b = 4, 2, 1, 0, 0
        self.assertEqual(list(t[:, 3, 3]), [127.0, 127.0, 127.0, 0.0, 0.0])

    def test_empty(self):
        self.assertFalse(encode_mdes(window([]), 3).tensor.any())

    def test_value_domain(self):
        t = encode_mdes(window(random_events(Rng(1), 100, 0, 40000)), 5).tensor
        self.assertTrue(set(np.unique(t)) <= {0.0, 127.0, 255.0})


class TestShist(unittest.TestCase):
    def test_hand_binned_fixture(self):
        t = encode_shist(window(FIXTURE), 5).tensor
        self.assertEqual(t.shape, (10, H, W))
        self.assertEqual(t[5, 1, 1], 2.0)
        self.assertEqual(t[4, 3, 2], 1.0)

    def test_sum_equals_event_count(self):
        records = random_events(Rng(2), 300, 0, 40000)
        t = encode_shist(window(records), 5).tensor
        self.assertEqual(int(t.sum()), 300)
        self.assertLessEqual(np.count_nonzero(t), 300)

    def test_saturation(self):
        t = encode_shist(window([EventRecord(0, 0, 0, 1)] * 300), 5).tensor
        self.assertEqual(t[5, 0, 0], 255.0)

    def test_same_timestamp_permutation_invariant(self):
        a = [EventRecord(100, 1, 1, 1), EventRecord(100, 2, 2, -1), EventRecord(100, 1, 1, -1)]
        b = [a[2], a[0], a[1]]
        np.testing.assert_array_equal(encode_shist(window(a), 5).tensor, encode_shist(window(b), 5).tensor)


class TestTaf(unittest.TestCase):
    def test_fresh_encoder_empty(self):
        t = TafEncoder(W, H, 3).push_window(window([])).tensor
        self.assertEqual(t.shape, (6, H, W))
        self.assertTrue(np.all(t == -1.0))

    def test_fifo_keeps_most_recent(self):
        enc = TafEncoder(W, H, 2)
        records = [EventRecord(1000, 2, 2, 1), EventRecord(2000, 2, 2, 1), EventRecord(30000, 2, 2, 1)]
        t = enc.push_window(window(records)).tensor
        self.assertAlmostEqual(float(t[2, 2, 2]), (40000 - 30000) / 40000, places=6)
        self.assertAlmostEqual(float(t[3, 2, 2]), (40000 - 2000) / 40000, places=6)
        self.assertTrue(np.all(t[0:2] == -1.0))

    def test_last_microsecond_age(self):
        t = TafEncoder(W, H, 1).push_window(window([EventRecord(39999, 0, 0, -1)])).tensor
        self.assertAlmostEqual(float(t[0, 0, 0]), 1 / 40000, places=9)

    def test_out_of_order_window(self):
        enc = TafEncoder(W, H, 2)
        enc.push_window(window([], 40000, 80000))
        with self.assertRaises(WindowOrderError):
            enc.push_window(window([], 0, 40000))

    def test_single_window_k1_is_latest_age(self):
        """K=1 单窗口时等价于每个像素/极性最近事件的年龄"""
        records = random_events(Rng(4), 150, 0, 40000)
        t = TafEncoder(W, H, 1).push_window(window(records)).tensor
        want = np.full((2, H, W), -1.0)
        for r in records:
            want[int(r.p > 0), r.y, r.x] = (40000 - r.t_us) / 40000
        np.testing.assert_allclose(t, want, atol=1e-6)

    def test_depth_and_domain_over_replay(self):
        """多窗口重放：深度不超过K，取值在 {-1} ∪ [0, 1)"""
        rng = Rng(5)
        for K in (1, 2, 4):
            enc = TafEncoder(W, H, K)
            stored = {}
            for k in range(6):
                t_a = k * 10000
                records = random_events(rng, 40, t_a, t_a + 10000)
                t = enc.push_window(window(records, t_a, t_a + 10000)).tensor
                for r in records:
                    stored[(int(r.p > 0), r.y, r.x)] = stored.get((int(r.p > 0), r.y, r.x), 0) + 1
                self.assertTrue(np.all((t == -1.0) | ((t >= 0.0) & (t < 1.0))))
                filled = (t.reshape(2, K, H, W) != -1.0).sum(axis=1)
                for (p, y, x), n in stored.items():
                    self.assertEqual(filled[p, y, x], min(n, K))

    def test_dispatch(self):
        w = window(FIXTURE)
        self.assertEqual(encode(w, Encoding.TAF, 5).tensor.shape, (10, H, W))
        self.assertEqual(encode(w, Encoding.MDES, 5).format, Encoding.MDES)


class TestWindowSplit(unittest.TestCase):
    def split(self, times):
        return list(window_split((EventRecord(t, 0, 0, 1) for t in times), 40000, W, H))

    def test_single_window(self):
        windows = self.split([0, 39999])
        self.assertEqual(len(windows), 1)
        self.assertEqual(len(windows[0]), 2)

    def test_half_open_boundary(self):
        self.assertEqual(len(self.split([0, 40000])), 2)

    def test_empty_gap_window(self):
        windows = self.split([0, 120000])
        self.assertEqual([(w.t_a, len(w)) for w in windows], [(0, 1), (40000, 0), (80000, 0), (120000, 1)])

    def test_aligned_to_floor_multiple(self):
        windows = self.split([50000])
        self.assertEqual((windows[0].t_a, windows[0].t_b), (40000, 80000))

    def test_empty_stream(self):
        self.assertEqual(self.split([]), [])

    def test_out_of_order_stream(self):
        with self.assertRaises(WindowOrderError):
            self.split([10, 5])

    def test_timestamp_near_int64_limit(self):
        with self.assertRaises(EventFormatError) as ctx:
            self.split([MAX_TIMESTAMP_US - 10])
        self.assertEqual(ctx.exception.error_code, ERROR_CODES["EVENT_OUT_OF_BOUNDS"])
        windows = self.split([MAX_TIMESTAMP_US - 40000])
        self.assertEqual(windows[0].t_b - windows[0].t_a, 40000)


if __name__ == "__main__":
    unittest.main()
