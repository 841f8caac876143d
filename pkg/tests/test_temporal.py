import numpy as np
import pytest

from acloc.errors import ConfigError
from acloc.synth import SynthConfig, generate
from acloc.temporal import (ClipSpec, Interval, actionness_labels,
                            apply_offsets, clip_concept, clip_feature,
                            collect_training_samples, export_windows_csv,
                            regression_targets, sliding_windows, tiou)


class TestTiou:
    def test_equal_intervals(self):
        assert tiou(Interval(0, 10), Interval(0, 10)) == 1.0

    def test_disjoint(self):
        assert tiou(Interval(0, 10), Interval(20, 30)) == 0.0

    def test_partial(self):
        assert tiou(Interval(0, 10), Interval(5, 15)) == pytest.approx(1 / 3)

    def test_symmetric_bounded_and_identity(self):
        rng = np.random.default_rng(0)
        for _ in range(100):
            a = sorted(rng.uniform(0, 100, 2))
            b = sorted(rng.uniform(0, 100, 2))
            if a[0] == a[1] or b[0] == b[1]:
                continue
            ia, ib = Interval(*a), Interval(*b)
            t1, t2 = tiou(ia, ib), tiou(ib, ia)
            assert t1 == t2
            assert 0.0 <= t1 <= 1.0
            assert (t1 == 1.0) == (a == b)

    def test_invalid_interval_rejected(self):
        with pytest.raises(ValueError):
            Interval(5, 5)


class TestSlidingWindows:
    def test_documented_enumeration(self):
        # 320 frames, length 128, overlap 0.75, 16-frame units:
        # stride 32 frames, starts 0,32,...,192
        wins = sliding_windows("v", 20, [128], 0.75, 16)
        starts = [w.start_unit * 16 for w in wins]
        assert starts == [0, 32, 64, 96, 128, 160, 192]
        assert all(w.num_units == 8 for w in wins)

    def test_zero_overlap_tiles(self):
        wins = sliding_windows("v", 8, [64], 0.0, 16)
        assert [(w.start_unit, w.num_units) for w in wins] == [(0, 4), (4, 4)]

    def test_short_video_single_clamped_window(self):
        wins = sliding_windows("v", 4, [128], 0.75, 16)
        assert len(wins) == 1
        assert (wins[0].start_unit, wins[0].num_units) == (0, 4)

    def test_flush_right_window_added(self):
        # 21 units, stride 2, len 8: grid reaches 12, flush window at 13
        wins = sliding_windows("v", 21, [128], 0.75, 16)
        assert wins[-1].start_unit == 13
        assert {w.start_unit for w in wins} == {0, 2, 4, 6, 8, 10, 12, 13}

    def test_sorted_unit_aligned_in_range(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            units = int(rng.integers(3, 80))
            wins = sliding_windows("v", units, [64, 128, 256], 0.75, 16)
            keys = [(w.start_unit, w.num_units) for w in wins]
            assert keys == sorted(keys)
            assert len(set(keys)) == len(keys)
            for w in wins:
                assert 0 <= w.start_unit and w.end_unit <= units

    def test_bad_length_rejected(self):
        with pytest.raises(ConfigError):
            sliding_windows("v", 20, [100], 0.75, 16)

    def test_bad_overlap_rejected(self):
        with pytest.raises(ConfigError):
            sliding_windows("v", 20, [128], 1.0, 16)


class TestClipPooling:
    def test_central_mean(self):
        units = np.array([[1.0, 3.0], [3.0, 5.0]])
        clip = ClipSpec("v", 0, 2, ctx_units=0)
        feat = clip_feature(units, clip)
        assert np.array_equal(feat[2:4], [2.0, 4.0])

    def test_missing_contexts_are_zero_blocks(self):
        units = np.array([[7.0, 9.0]])
        clip = ClipSpec("v", 0, 1, ctx_units=4)
        feat = clip_feature(units, clip)
        assert np.array_equal(feat, [0, 0, 7, 9, 0, 0])

    def test_matches_loop_oracle(self):
        rng = np.random.default_rng(2)
        units = rng.standard_normal((20, 5))
        clip = ClipSpec("v", 6, 4, ctx_units=8)
        got = clip_feature(units, clip)

        def block(lo, hi):
            lo, hi = max(lo, 0), min(hi, 20)
            if hi <= lo:
                return [0.0] * 5
            acc = [0.0] * 5
            for i in range(lo, hi):
                for j in range(5):
                    acc[j] += units[i][j]
            return [a / (hi - lo) for a in acc]

        expected = block(-2, 6) + block(6, 10) + block(10, 18)
        assert np.allclose(got, expected, atol=1e-12)
        assert got.shape == (15,)

    def test_clamped_context_uses_in_range_units(self):
        units = np.arange(12.0).reshape(6, 2)
        clip = ClipSpec("v", 1, 2, ctx_units=4)
        feat = clip_feature(units, clip)
        assert np.array_equal(feat[:2], units[0])  # only unit 0 in range
        assert np.array_equal(feat[4:], units[3:6].mean(axis=0))

    def test_concept_single_unit(self):
        units = np.array([[0.2, 0.8], [0.5, 0.5]])
        assert np.array_equal(clip_concept(units, ClipSpec("v", 1, 1)), [0.5, 0.5])

    def test_concept_mean_of_one_hots(self):
        units = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
        assert np.array_equal(clip_concept(units, ClipSpec("v", 0, 2)),
                              [0.5, 0.5, 0.0])

    def test_concept_ignores_context(self):
        rng = np.random.default_rng(3)
        units = rng.standard_normal((10, 4))
        a = clip_concept(units, ClipSpec("v", 3, 3, ctx_units=0))
        b = clip_concept(units, ClipSpec("v", 3, 3, ctx_units=8))
        assert np.array_equal(a, b)

    def test_concept_matches_loop_oracle(self):
        rng = np.random.default_rng(4)
        units = rng.standard_normal((9, 3))
        got = clip_concept(units, ClipSpec("v", 2, 4))
        expected = [sum(units[i][j] for i in range(2, 6)) / 4 for j in range(3)]
        assert np.allclose(got, expected, atol=1e-12)


class TestOffsets:
    def test_identical_intervals(self):
        assert regression_targets(Interval(0, 64), Interval(0, 64), 16) == (0.0, 0.0)

    def test_documented_case(self):
        assert regression_targets(Interval(128, 256), Interval(96, 256), 16) == (-2.0, 0.0)

    def test_apply_identity(self):
        clip = Interval(128, 256)
        assert apply_offsets(clip, 0.0, 0.0, 16, 512) == clip

    def test_apply_documented_case(self):
        out = apply_offsets(Interval(128, 256), -2.0, 0.0, 16, 512)
        assert (out.start, out.end) == (96.0, 256.0)

    def test_inversion_guard_returns_unrefined(self):
        clip = Interval(128, 160)
        out = apply_offsets(clip, 10.0, -10.0, 16, 512)
        assert out == clip

    def test_clamped_to_video(self):
        out = apply_offsets(Interval(0, 64), -5.0, 100.0, 16, 128)
        assert (out.start, out.end) == (0.0, 128.0)

    def test_targets_and_apply_are_inverse(self):
        rng = np.random.default_rng(5)
        for _ in range(50):
            s1, e1 = sorted(rng.uniform(0, 400, 2))
            s2, e2 = sorted(rng.uniform(0, 400, 2))
            if s1 == e1 or s2 == e2:
                continue
            clip, gt = Interval(s1, e1), Interval(s2, e2)
            o_s, o_e = regression_targets(clip, gt, 16)
            out = apply_offsets(clip, o_s, o_e, 16, 400.0)
            assert abs(out.start - gt.start) < 1e-9
            assert abs(out.end - gt.end) < 1e-9


class TestTrainingSamples:
    def fixture_manifest(self, tmp_path):
        cfg = SynthConfig(seed=11, num_videos=6, units_range=(24, 32))
        return generate(cfg, tmp_path / "data")

    def test_exact_window_has_zero_targets(self, tmp_path):
        manifest = self.fixture_manifest(tmp_path)
        samples = collect_training_samples(manifest, scales=(128,), overlap=0.75,
                                           pos_tiou=0.5)
        by_query = {q.id: q for q in manifest.queries}
        for s in samples:
            q = by_query[s.query_id]
            gt = Interval.from_seconds(q.start_sec, q.end_sec, manifest.fps)
            wi = s.clip.to_interval(manifest.unit_frames)
            assert s.tiou >= 0.5
            o_s, o_e = regression_targets(wi, gt, manifest.unit_frames)
            assert (o_s, o_e) == (s.target_s, s.target_e)

    def test_threshold_boundary_excludes(self, tmp_path):
        manifest = self.fixture_manifest(tmp_path)
        loose = collect_training_samples(manifest, scales=(64, 128), overlap=0.75,
                                         pos_tiou=0.0)
        strict = collect_training_samples(manifest, scales=(64, 128), overlap=0.75,
                                          pos_tiou=0.5)
        strict_keys = {(s.clip.video_id, s.clip.start_unit, s.clip.num_units,
                        s.query_id) for s in strict}
        for s in loose:
            key = (s.clip.video_id, s.clip.start_unit, s.clip.num_units, s.query_id)
            assert (s.tiou >= 0.5) == (key in strict_keys)

    def test_matches_brute_force_enumeration(self, tmp_path):
        manifest = self.fixture_manifest(tmp_path)
        uf = manifest.unit_frames
        samples = collect_training_samples(manifest, scales=(64, 128), overlap=0.75,
                                           pos_tiou=0.5)
        got = {(s.clip.video_id, s.clip.start_unit, s.clip.num_units, s.query_id)
               for s in samples}
        expected = set()
        for video in manifest.videos:
            windows = sliding_windows(video.id, video.num_units, (64, 128),
                                      0.75, uf)
            for q in manifest.queries:
                if q.video_id != video.id:
                    continue
                gt = Interval.from_seconds(q.start_sec, q.end_sec, manifest.fps)
                for w in windows:
                    if tiou(w.to_interval(uf), gt) >= 0.5:
                        expected.add((video.id, w.start_unit, w.num_units, q.id))
        assert got == expected
        assert len(samples) == len(expected)


class TestActionnessLabels:
    def test_positive_negative_and_ignore_band(self):
        gts = [Interval(0, 100)]
        windows = [Interval(0, 100), Interval(500, 600), Interval(0, 250)]
        # tIoUs: 1.0, 0.0, 0.4 with pos=0.5, neg=0.3 -> [1, 0, None]
        assert actionness_labels(windows, gts, 0.5, 0.3) == [1, 0, None]

    def test_max_over_multiple_segments(self):
        gts = [Interval(0, 50), Interval(200, 260)]
        assert actionness_labels([Interval(200, 260)], gts, 0.5, 0.3) == [1]

    def test_no_segments_all_background(self):
        assert actionness_labels([Interval(0, 10)], [], 0.5, 0.3) == [0]

    def test_bad_thresholds(self):
        with pytest.raises(ConfigError):
            actionness_labels([], [], 0.3, 0.5)

    def test_balance_matches_enumeration(self, tmp_path):
        cfg = SynthConfig(seed=12, num_videos=5)
        manifest = generate(cfg, tmp_path / "d")
        uf = manifest.unit_frames
        gt_by_vid = {}
        for q in manifest.queries:
            gt_by_vid.setdefault(q.video_id, []).append(
                Interval.from_seconds(q.start_sec, q.end_sec, manifest.fps))
        total = {0: 0, 1: 0, None: 0}
        for video in manifest.videos:
            wins = [w.to_interval(uf) for w in sliding_windows(
                video.id, video.num_units, (128, 256), 0.75, uf)]
            labels = actionness_labels(wins, gt_by_vid.get(video.id, []), 0.5, 0.3)
            expected = []
            for w in wins:
                best = max((tiou(w, g) for g in gt_by_vid.get(video.id, [])),
                           default=0.0)
                expected.append(1 if best >= 0.5 else (0 if best < 0.3 else None))
            assert labels == expected
            for l in labels:
                total[l] += 1
        assert total[1] > 0 and total[0] > 0


def test_export_windows_csv(tmp_path):
    wins = sliding_windows("vid7", 20, [128], 0.75, 16)
    path = tmp_path / "w.csv"
    export_windows_csv(wins, 16, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "video_id,start_frame,end_frame"
    assert lines[1] == "vid7,0,128"
    assert len(lines) == len(wins) + 1
