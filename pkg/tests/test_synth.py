import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spikevad.corpus import CorpusError, load_corpus, read_meta, save_event_corpus, \
    save_feature_corpus
from spikevad.evaluation import roc_auc
from spikevad.events import EventFrameTensor, integrate_frames, serialize_events
from spikevad.synth import (
    SynthSpec,
    ToyEncoder,
    VideoRecord,
    gen_event_corpus,
    gen_event_stream,
    gen_feature_corpus,
    toy_encoder,
)

SMALL = SynthSpec(n_train=6, n_test=4, clips_min=8, clips_max=12, span_min=2, span_max=5,
                  D=8, T_sim=2, seed=11)


def corpora_equal(a, b):
    if [bag.video_id for bag in a.train + a.test] != [bag.video_id for bag in b.train + b.test]:
        return False
    return all(np.array_equal(x.features, y.features) and x.label == y.label
               for x, y in zip(a.train + a.test, b.train + b.test)) and a.records == b.records


class TestSpec:
    @pytest.mark.parametrize("kw", [dict(base_rate=0.5, anomaly_rate=0.5), dict(D=6),
                                    dict(clips_min=0), dict(span_max=40),
                                    dict(anomaly_fraction=1.5), dict(n_train=-1)])
    def test_rejects(self, kw):
        with pytest.raises(ValueError):
            SynthSpec(**kw)


class TestFeatureCorpus:
    def test_default_shape(self):
        c = gen_feature_corpus()
        assert len(c.train) == 40 and len(c.test) == 20
        assert c.planted_channels.size == 4
        for bag in c.train + c.test:
            assert bag.features.shape[0] == 4 and bag.features.shape[2] == 16
            assert 30 <= bag.t_i <= 60
        assert sum(b.label for b in c.train) == 20

    def test_deterministic(self):
        assert corpora_equal(gen_feature_corpus(SynthSpec(seed=7)),
                             gen_feature_corpus(SynthSpec(seed=7)))
        assert not corpora_equal(gen_feature_corpus(SMALL),
                                 gen_feature_corpus(dataclasses.replace(SMALL, seed=12)))

    def test_videos_independent_of_test_count(self):
        a = gen_feature_corpus(SMALL)
        b = gen_feature_corpus(dataclasses.replace(SMALL, n_test=9))
        for x, y in zip(a.train, b.train):
            assert np.array_equal(x.features, y.features)

    def test_no_anomalies(self):
        c = gen_feature_corpus(dataclasses.replace(SMALL, anomaly_fraction=0.0))
        assert all(b.label == 0 for b in c.train + c.test)
        assert all(r.span is None for r in c.records.values())

    def test_extreme_rates(self):
        c = gen_feature_corpus(dataclasses.replace(SMALL, base_rate=0.0, anomaly_rate=1.0))
        mask = np.zeros(SMALL.D, bool)
        mask[c.planted_channels] = True
        for bag in c.train + c.test:
            rec = c.records[bag.video_id]
            inside = np.zeros(bag.t_i, bool)
            if rec.span:
                inside[rec.span[0]:rec.span[1]] = True
            assert (bag.features[:, inside][..., mask] == 1).all()
            assert not bag.features[:, inside][..., ~mask].any()
            assert not bag.features[:, ~inside].any()

    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 10_000), st.floats(0.0, 1.0))
    def test_label_consistency(self, seed, fraction):
        c = gen_feature_corpus(dataclasses.replace(SMALL, seed=seed, anomaly_fraction=fraction))
        for bag in c.train + c.test:
            labels = c.frame_labels(bag)
            assert bag.label == int(labels.any())
            assert labels.size == bag.t_i * SMALL.frames_per_clip

    def test_separability_oracle(self):
        c = gen_feature_corpus()
        scores, labels = [], []
        for bag in c.test:
            clip = bag.features[:, :, c.planted_channels].mean(axis=(0, 2))
            scores.append(np.repeat(clip, c.frames_per_clip))
            labels.append(c.frame_labels(bag))
        assert roc_auc(np.concatenate(scores), np.concatenate(labels)) >= 0.99


class TestEvents:
    def test_empty_when_silent(self):
        rec = VideoRecord("v", 0, 4)
        s = gen_event_stream(rec, np.random.default_rng(0), 8, 8, 1000, 16, 0.0, 400.0, 3.0)
        assert len(s) == 0

    def test_poisson_rate(self):
        lam, window = 50.0, 1000
        rec = VideoRecord("v", 0, 100)
        s = gen_event_stream(rec, np.random.default_rng(1), 16, 16, window, 1, lam, 0.0, 3.0)
        counts = np.bincount(s.t // window, minlength=100)
        assert counts.size == 100
        assert abs(counts.mean() - lam) <= 3 * np.sqrt(lam / 100)

    def test_anomaly_span_is_busier(self):
        rec = VideoRecord("v", 1, 6, (2, 4))
        s = gen_event_stream(rec, np.random.default_rng(2), 32, 32, 1000, 4, 20.0, 300.0, 2.0)
        counts = np.bincount(s.t // 1000, minlength=24)
        assert counts[8:16].min() > counts[:8].max()

    def test_deterministic_bytes(self):
        a, b = gen_event_corpus(SMALL, 16, 12, 2000), gen_event_corpus(SMALL, 16, 12, 2000)
        for x, y in zip(a.train + a.test, b.train + b.test):
            assert serialize_events(x.stream, "bin") == serialize_events(y.stream, "bin")

    def test_stream_covers_its_windows(self):
        c = gen_event_corpus(SMALL, 16, 12, 2000)
        for v in c.train:
            assert v.stream.t.max() < v.record.t_i * c.frames_per_clip * 2000


class TestEncoder:
    def test_zero_frames(self):
        out = toy_encoder(np.zeros((40, 2, 8, 8)), T_sim=3, D=8)
        assert out.shape == (3, 3, 8) and not out.any()

    def test_shape(self):
        assert toy_encoder(np.ones((33, 2, 6, 10)), T_sim=4, D=16).shape == (4, 3, 16)
        assert toy_encoder(np.zeros((0, 2, 6, 10))).shape == (4, 0, 16)

    def test_accepts_tensor(self):
        frames = np.random.default_rng(0).integers(0, 5, size=(20, 2, 8, 8))
        enc = ToyEncoder(D=8)
        assert np.array_equal(enc(EventFrameTensor(frames, 1000)), enc(frames))

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 10_000), st.integers(1, 50))
    def test_doubling_counts_is_monotone(self, seed, J):
        rng = np.random.default_rng(seed)
        frames = rng.poisson(rng.uniform(0, 30), size=(J, 2, 8, 8))
        enc = ToyEncoder(D=8, T_sim=4)
        once, twice = enc(frames), enc(2 * frames)
        assert (twice.sum(axis=(0, 2)) >= once.sum(axis=(0, 2))).all()
        assert (twice >= once).all()

    def test_event_anomalies_are_visible(self):
        c = gen_event_corpus(SMALL, 32, 24, 1000)
        enc = ToyEncoder(D=8, T_sim=2)
        v = next(v for v in c.train if v.record.span)
        feats = enc(integrate_frames(v.stream, 1000, t0=0))
        a, b = v.record.span
        rates = feats.mean(axis=(0, 2))
        assert rates[a:b].mean() > rates[np.r_[0:a, b:len(rates)]].mean()


class TestCorpusDirectory:
    def test_feature_round_trip(self, tmp_path):
        c = gen_feature_corpus(SMALL)
        save_feature_corpus(tmp_path, c, SMALL)
        assert (tmp_path / "synth.txt").exists()
        back = load_corpus(tmp_path)
        assert [b.video_id for b in back.test.bags] == [b.video_id for b in c.test]
        for x, y in zip(back.train.bags, c.train):
            assert np.array_equal(x.features, y.features) and x.label == y.label
        bag = back.test.bags[0]
        assert np.array_equal(back.frame_labels(bag), c.frame_labels(c.test[0]))

    def test_meta_layout(self, tmp_path):
        c = gen_feature_corpus(SMALL)
        save_feature_corpus(tmp_path, c, SMALL)
        lines = (tmp_path / "train" / "meta.csv").read_text().splitlines()
        assert lines[0] == "video_id,label,t_i,span_start,span_end"
        recs = read_meta(tmp_path / "train" / "meta.csv")
        assert recs == [c.records[b.video_id] for b in c.train]

    def test_event_corpus_needs_frames(self, tmp_path):
        save_event_corpus(tmp_path, gen_event_corpus(SMALL, 8, 8, 1000), SMALL)
        assert (tmp_path / "train" / "train_0000.bin").exists()
        with pytest.raises(CorpusError):
            load_corpus(tmp_path)

    def test_missing_directory(self, tmp_path):
        with pytest.raises(CorpusError):
            load_corpus(tmp_path / "nope")
