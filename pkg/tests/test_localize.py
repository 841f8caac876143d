import numpy as np
import pytest

from acloc import temporal
from acloc.concepts import LabelLexicon, VOPair
from acloc.data import EmbeddingTable
from acloc.errors import ConfigError, DataValidationError
from acloc.localize import (Mode, Prediction, late_fusion,
                            read_predictions_csv, score_query,
                            write_predictions_csv)
from acloc.model import (ActionnessParams, LocalizerParams, Variant,
                         acl_forward, actionness_forward)
from acloc.nn import sigmoid


def make_setup(seed=0, num_units=24, d_v=6, d_c=4):
    rng = np.random.default_rng(seed)
    acl = LocalizerParams.create(Variant.FULL, 3 * d_v, 10, d_c, 8, 6, 4, 8, rng)
    act = ActionnessParams.create(3 * d_v, 8, rng)
    features = rng.standard_normal((num_units, d_v))
    concepts = rng.standard_normal((num_units, d_c))
    sent = rng.standard_normal(10)
    vo = rng.standard_normal(8)
    from acloc.data import VideoRecord
    video = VideoRecord(id="v0", frames=num_units * 16, fps=16.0,
                        feature_path="", concept_path="", num_units=num_units)
    windows = temporal.sliding_windows("v0", num_units, (128, 256), 0.75, 16)
    return acl, act, features, concepts, video, sent, vo, windows


class TestScoreQuery:
    def test_empty_window_list(self):
        acl, act, features, concepts, video, sent, vo, _ = make_setup()
        assert score_query(acl, act, features, concepts, video, "q", sent, vo,
                           [], Mode.SWIN_SCORE, 16) == []

    def test_constant_eta_preserves_swin_order(self):
        acl, _, features, concepts, video, sent, vo, windows = make_setup()

        class ConstantEta(ActionnessParams):
            pass

        # eta identical for every window: zero weights, fixed bias
        rng = np.random.default_rng(1)
        act = ActionnessParams.create(features.shape[1] * 3, 4, rng)
        act.fc1.weight[:] = 0.0
        act.fc1.bias[:] = 0.0
        act.fc2.weight[:] = 0.0
        act.fc2.bias[:] = 0.7
        swin = score_query(acl, None, features, concepts, video, "q", sent, vo,
                           windows, Mode.SWIN, 16)
        fused = score_query(acl, act, features, concepts, video, "q", sent, vo,
                            windows, Mode.SWIN_SCORE, 16)
        assert [p.window for p in swin] == [p.window for p in fused]

    def test_eta_reorders_equal_deltas(self):
        acl, act, features, concepts, video, sent, vo, windows = make_setup()
        preds = [
            Prediction("q", temporal.Interval(0, 64), temporal.Interval(0, 64),
                       0.0, 0.9, sigmoid(np.array([0.0]))[0] * 0.9),
            Prediction("q", temporal.Interval(64, 128), temporal.Interval(64, 128),
                       0.0, 0.1, sigmoid(np.array([0.0]))[0] * 0.1),
        ]
        assert preds[0].xi > preds[1].xi  # fusion rule: sigma(delta) * eta

    def test_ranking_matches_brute_force_oracle(self):
        acl, act, features, concepts, video, sent, vo, windows = make_setup(seed=3)
        got = score_query(acl, act, features, concepts, video, "q", sent, vo,
                          windows, Mode.SWIN_SCORE, 16)
        scored = []
        for w in windows:
            feat = temporal.clip_feature(features, w)
            conc = temporal.clip_concept(concepts, w)
            delta, o_s, o_e = acl_forward(acl, feat, sent, conc, vo)
            eta = actionness_forward(act, feat)
            xi = sigmoid(np.array([delta]))[0] * eta
            wi = w.to_interval(16)
            scored.append((xi, wi.start, wi.end))
        scored.sort(key=lambda t: (-t[0], t[1], t[2]))
        assert len(got) == len(scored)
        for p, (xi, start, end) in zip(got, scored):
            assert p.xi == pytest.approx(xi, abs=1e-12)
            assert (p.window.start, p.window.end) == (start, end)

    def test_swin_mode_uses_raw_delta_and_unit_eta(self):
        acl, _, features, concepts, video, sent, vo, windows = make_setup(seed=4)
        preds = score_query(acl, None, features, concepts, video, "q", sent, vo,
                            windows, Mode.SWIN, 16)
        assert all(p.eta == 1.0 for p in preds)
        assert all(p.xi == p.delta for p in preds)
        xs = [p.xi for p in preds]
        assert xs == sorted(xs, reverse=True)

    def test_swin_score_without_actionness_rejected(self):
        acl, _, features, concepts, video, sent, vo, windows = make_setup()
        with pytest.raises(ConfigError, match="actionness"):
            score_query(acl, None, features, concepts, video, "q", sent, vo,
                        windows, Mode.SWIN_SCORE, 16)

    def test_refinement_stays_inside_video(self):
        for seed in range(5):
            acl, act, features, concepts, video, sent, vo, windows = \
                make_setup(seed=seed)
            preds = score_query(acl, act, features, concepts, video, "q", sent,
                                vo, windows, Mode.SWIN_SCORE, 16)
            for p in preds:
                assert 0.0 <= p.refined.start < p.refined.end <= video.frames
                assert np.isfinite(p.xi) and np.isfinite(p.delta)

    def test_prop_score_keeps_top_half_and_refines_once(self):
        acl, act, features, concepts, video, sent, vo, windows = make_setup(seed=5)
        preds = score_query(acl, act, features, concepts, video, "q", sent, vo,
                            windows, Mode.PROP_SCORE, 16)
        assert 0 < len(preds) <= int(np.ceil(len(windows) / 2))
        for p in preds:
            # proposals are final: refined boundaries equal the window
            assert p.refined == p.window
            assert p.window.start % 16 == 0 and p.window.end % 16 == 0
            assert 0.0 <= p.window.start < p.window.end <= video.frames


class TestLateFusion:
    def setup(self):
        rng = np.random.default_rng(7)
        table = EmbeddingTable({
            "open": rng.standard_normal(6), "door": rng.standard_normal(6),
            "wash": rng.standard_normal(6), "dish": rng.standard_normal(6),
        })
        lexicon = LabelLexicon.build(["open door", "wash dish"], table)
        preds = [
            Prediction("q", temporal.Interval(0, 64), temporal.Interval(0, 64),
                       1.0, 0.9, 0.9),
            Prediction("q", temporal.Interval(64, 128), temporal.Interval(64, 128),
                       0.5, 0.8, 0.4),
        ]
        concepts = [np.array([3.0, 0.0]), np.array([0.0, 3.0])]
        return table, lexicon, preds, concepts

    def test_below_threshold_unchanged(self):
        table, lexicon, preds, concepts = self.setup()
        out = late_fusion(preds, concepts, VOPair("open", "door"), lexicon,
                          table, theta=1.0)
        assert [p.xi for p in out] == [p.xi for p in preds]

    def test_none_vo_unchanged(self):
        table, lexicon, preds, concepts = self.setup()
        out = late_fusion(preds, concepts, None, lexicon, table, theta=0.0)
        assert [p.xi for p in out] == [p.xi for p in preds]

    def test_uniform_concept_vector_preserves_ranking(self):
        table, lexicon, preds, _ = self.setup()
        uniform = [np.ones(2), np.ones(2)]
        out = late_fusion(preds, uniform, VOPair("open", "door"), lexicon,
                          table, theta=0.0)
        assert [p.window for p in out] == [p.window for p in preds]
        # every xi scaled by the same softmax probability 0.5
        assert [p.xi for p in out] == pytest.approx([0.45, 0.2])

    def test_matching_label_boosts_matching_window(self):
        table, lexicon, preds, concepts = self.setup()
        # query about label 1: window 2's concept mass sits on label 1
        out = late_fusion(preds, concepts, VOPair("wash", "dish"), lexicon,
                          table, theta=0.0)
        p_soft_hi = np.exp(3.0) / (np.exp(3.0) + 1.0)
        assert out[0].xi == pytest.approx(max(0.9 * (1 - p_soft_hi),
                                              0.4 * p_soft_hi))

    def test_bad_theta(self):
        table, lexicon, preds, concepts = self.setup()
        with pytest.raises(ConfigError):
            late_fusion(preds, concepts, VOPair("open", "door"), lexicon,
                        table, theta=1.5)

    def test_planted_labels_do_not_hurt_synthetic_r_at_1(self, tmp_path):
        from acloc import localize as loc
        from acloc import model
        from acloc.concepts import load_label_lexicon, load_pos_lexicon
        from acloc.data import load_embedding_table
        from acloc.evaluate import compute_report
        from acloc.synth import SynthConfig, generate

        manifest = generate(SynthConfig(seed=60, num_videos=40,
                                        vo_coverage=1.0), tmp_path / "d")
        table = load_embedding_table(tmp_path / "d" / "embeddings.txt")
        lexicon = load_pos_lexicon(tmp_path / "d" / "pos_lexicon.txt")
        labels = load_label_lexicon(tmp_path / "d" / "labels.txt", table)
        cfg = model.TrainConfig(batch_size=16, epochs=3, seed=0, d_t=24,
                                d_a=16, hidden=32, sentence_dim=300)
        acl, _ = model.train_acl(manifest, table, lexicon, cfg)
        act, _ = model.train_actionness(
            manifest, model.TrainConfig(batch_size=32, epochs=2, seed=0,
                                        hidden=32))
        gt = {q.id: (q.start_sec, q.end_sec) for q in manifest.queries}

        def r1(preds):
            ivs = {qid: [p.refined.to_seconds(manifest.fps) for p in ps]
                   for qid, ps in preds.items()}
            return compute_report(ivs, gt).recalls[(1, 0.5)]

        plain = loc.score_all(manifest, acl, act, table, lexicon,
                              loc.Mode.SWIN_SCORE)
        fused = loc.score_all(manifest, acl, act, table, lexicon,
                              loc.Mode.SWIN_SCORE,
                              fusion=loc.LateFusion(labels, table, 0.5))
        assert r1(fused) >= r1(plain)


class TestPredictionCsv:
    def make_preds(self):
        return {
            "q1": [Prediction("q1", temporal.Interval(0, 64),
                              temporal.Interval(8, 72), 1.5, 0.9, 0.7),
                   Prediction("q1", temporal.Interval(64, 128),
                              temporal.Interval(64, 128), 0.5, 0.5, 0.3)],
            "q0": [Prediction("q0", temporal.Interval(32, 96),
                              temporal.Interval(32, 96), -0.25, 0.125, 0.0625)],
        }

    def test_round_trip(self, tmp_path):
        path = tmp_path / "pred.csv"
        write_predictions_csv(self.make_preds(), 16.0, path)
        loaded = read_predictions_csv(path)
        assert loaded["q1"] == [(0.5, 4.5), (4.0, 8.0)]
        assert loaded["q0"] == [(2.0, 6.0)]

    def test_header_golden(self, tmp_path):
        path = tmp_path / "pred.csv"
        write_predictions_csv(self.make_preds(), 16.0, path)
        first = path.read_text().splitlines()[0]
        assert first == "query_id,rank,start_sec,end_sec,delta,eta,xi"

    def test_wrong_header_rejected(self, tmp_path):
        path = tmp_path / "pred.csv"
        path.write_text("a,b,c\n1,2,3\n")
        with pytest.raises(DataValidationError, match="header"):
            read_predictions_csv(path)

    def test_malformed_row_rejected(self, tmp_path):
        path = tmp_path / "pred.csv"
        path.write_text("query_id,rank,start_sec,end_sec,delta,eta,xi\n"
                        "q0,notanint,0,1,0,0,0\n")
        with pytest.raises(DataValidationError, match="malformed"):
            read_predictions_csv(path)

    def test_deterministic_bytes(self, tmp_path):
        p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
        write_predictions_csv(self.make_preds(), 16.0, p1)
        write_predictions_csv(self.make_preds(), 16.0, p2)
        assert p1.read_bytes() == p2.read_bytes()
