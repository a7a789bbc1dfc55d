import math

import numpy as np
import pytest

from displab.embedding import ClassifierConfig, zero_shot_classify
from displab.noise import (
    FeatureStore,
    NoiseDictionary,
    Triplet,
    TripletConfig,
    augmented_triplet_loss,
    load_noise_dictionary,
    mine_triplets,
    noise_aware_classify,
    noise_gradient,
    save_noise_dictionary,
    train_noise_dictionary,
    triplet_loss,
)


class TestTripletLoss:
    def test_inactive_hinge(self):
        assert triplet_loss(0.0, 2.0, 1.0) == 0.0

    def test_active_hinge(self):
        assert triplet_loss(1.0, 1.2, 1.0) == pytest.approx(0.8, abs=1e-15)

    def test_boundary(self):
        assert triplet_loss(0.7, 0.7, 0.0) == 0.0

    def test_rejects_negative_distance(self):
        with pytest.raises(ValueError):
            triplet_loss(-0.1, 1.0, 0.5)
        with pytest.raises(ValueError):
            triplet_loss(0.1, -1.0, 0.5)

    def test_non_negative(self, rng):
        for _ in range(100):
            d_ap, d_an = rng.uniform(0, 5, size=2)
            assert triplet_loss(float(d_ap), float(d_an), float(rng.uniform(0, 2))) >= 0.0


def two_class_store(rng, dim=8, per_class=4, separation=0.0):
    offset = np.zeros(dim)
    offset[0] = separation
    return FeatureStore({
        1: rng.normal(size=(per_class, dim)),
        2: rng.normal(size=(per_class, dim)) + offset,
    })


class TestAugmentedTripletLoss:
    def test_zero_noise_reduces_to_plain_loss(self, rng):
        store = two_class_store(rng)
        zero = NoiseDictionary.zeros([1, 2], 8)
        t = Triplet(1, 0, 1, 2, 2)
        d_ap = float(np.linalg.norm(store.vector(1, 0) - store.vector(1, 1)))
        d_an = float(np.linalg.norm(store.vector(1, 0) - store.vector(2, 2)))
        assert augmented_triplet_loss(t, store, zero, 0.5) == triplet_loss(d_ap, d_an, 0.5)

    def test_coincident_vectors_yield_margin(self):
        v = np.array([0.3, -0.7, 0.1])
        store = FeatureStore({1: np.stack([v, v]), 2: v.reshape(1, -1)})
        noise = NoiseDictionary({1: np.array([0.2, 0.0, -0.1]), 2: np.array([0.2, 0.0, -0.1])})
        t = Triplet(1, 0, 1, 2, 0)
        assert augmented_triplet_loss(t, store, noise, 0.75) == pytest.approx(0.75, abs=1e-15)

    def test_dim2_hand_fixture(self):
        # d(a+N1, p+N1)=1, d(a+N1, n+N2)=2 -> max(0, 1-2+0.5) = 0
        store = FeatureStore({1: np.array([[0.0, 0.0], [1.0, 0.0]]),
                              2: np.array([[0.0, 1.0]])})
        noise = NoiseDictionary({1: np.zeros(2), 2: np.array([0.0, 1.0])})
        t = Triplet(1, 0, 1, 2, 0)
        assert augmented_triplet_loss(t, store, noise, 0.5) == 0.0

    def test_shared_noise_cancels_intra_class_distance(self, rng):
        # the anchor/positive distance is noise-invariant
        for _ in range(100):
            dim = int(rng.integers(2, 12))
            f_a = rng.normal(size=dim)
            f_p = rng.normal(size=dim)
            n_c = rng.normal(size=dim) * rng.uniform(0, 10)
            raw = np.linalg.norm(f_a - f_p)
            aug = np.linalg.norm((f_a + n_c) - (f_p + n_c))
            assert abs(aug - raw) <= 1e-12

    def test_dimension_mismatch_rejected(self, rng):
        store = two_class_store(rng, dim=8)
        noise = NoiseDictionary.zeros([1, 2], 9)
        with pytest.raises(ValueError, match="dim"):
            augmented_triplet_loss(Triplet(1, 0, 1, 2, 0), store, noise, 0.1)


def active_fixture(rng, dim):
    """Random fixture guaranteed to have an active hinge with margin to spare."""
    f_a = rng.normal(size=dim)
    f_p = f_a + rng.normal(size=dim) * 2.0          # far positive
    f_n = f_a + rng.normal(size=dim) * 0.05         # near negative
    store = FeatureStore({1: np.stack([f_a, f_p]), 2: f_n.reshape(1, -1)})
    noise = NoiseDictionary({1: rng.normal(size=dim) * 0.1, 2: rng.normal(size=dim) * 0.1})
    return store, noise, Triplet(1, 0, 1, 2, 0)


class TestNoiseGradient:
    def test_inactive_hinge_gives_zero_gradients(self, rng):
        f_a = rng.normal(size=4)
        store = FeatureStore({1: np.stack([f_a, f_a + 0.01]),
                              2: (f_a + 10.0).reshape(1, -1)})
        noise = NoiseDictionary.zeros([1, 2], 4)
        g1, g2 = noise_gradient(Triplet(1, 0, 1, 2, 0), store, noise, 0.1)
        assert not g1.any() and not g2.any()

    def test_gradient_independent_of_positive(self, rng):
        # the intra-class term cancels, so swapping the positive changes nothing
        dim = 6
        f_a = rng.normal(size=dim)
        p1 = f_a + rng.normal(size=dim) * 3.0
        p2 = f_a + rng.normal(size=dim) * 3.0
        f_n = f_a + rng.normal(size=dim) * 0.01
        d1 = np.linalg.norm(f_a - p1)
        d2 = np.linalg.norm(f_a - p2)
        store = FeatureStore({1: np.stack([f_a, p1, p2]), 2: f_n.reshape(1, -1)})
        noise = NoiseDictionary.zeros([1, 2], dim)
        margin = 0.5
        # both must be active for the comparison to be meaningful
        assert d1 > 0.5 and d2 > 0.5
        ga1, gn1 = noise_gradient(Triplet(1, 0, 1, 2, 0), store, noise, margin)
        ga2, gn2 = noise_gradient(Triplet(1, 0, 2, 2, 0), store, noise, margin)
        assert np.array_equal(ga1, ga2)
        assert np.array_equal(gn1, gn2)

    def test_opposite_gradients(self, rng):
        store, noise, t = active_fixture(rng, 8)
        g1, g2 = noise_gradient(t, store, noise, 0.5)
        assert np.allclose(g1, -g2)
        assert np.linalg.norm(g1) == pytest.approx(1.0, abs=1e-12)

    @pytest.mark.parametrize("dim", [2, 8, 64])
    def test_matches_central_finite_differences(self, dim, rng):
        step = 1e-5
        for _ in range(10):
            store, noise, t = active_fixture(rng, dim)
            margin = 0.5
            assert augmented_triplet_loss(t, store, noise, margin) > 0.01
            g1, g2 = noise_gradient(t, store, noise, margin)

            def loss_with(cls, component, delta):
                shifted = {c: noise.get(c).copy() for c in noise.classes()}
                shifted[cls][component] += delta
                return augmented_triplet_loss(t, store, NoiseDictionary(shifted), margin)

            for cls, grad in ((1, g1), (2, g2)):
                for j in range(dim):
                    fd = (loss_with(cls, j, step) - loss_with(cls, j, -step)) / (2 * step)
                    if abs(fd) > 1e-8:
                        assert abs(grad[j] - fd) / abs(fd) <= 1e-4
                    else:
                        assert abs(grad[j]) <= 1e-6

    def test_degenerate_collapse_rejected(self):
        v = np.array([1.0, 2.0])
        store = FeatureStore({1: np.stack([v, v + 5.0]), 2: v.reshape(1, -1)})
        noise = NoiseDictionary.zeros([1, 2], 2)
        with pytest.raises(ValueError, match="degenerate"):
            noise_gradient(Triplet(1, 0, 1, 2, 0), store, noise, 0.5)


class TestMineTriplets:
    def make_store(self, rng, classes=3, per_class=5, dim=4):
        return FeatureStore({
            c: rng.normal(size=(per_class, dim)) for c in range(1, classes + 1)
        })

    def test_single_class_rejected(self, rng):
        store = FeatureStore({1: rng.normal(size=(4, 3))})
        with pytest.raises(ValueError, match="negative class"):
            mine_triplets(store, None, 2, seed=1)

    def test_cardinality_and_invariants(self, rng):
        store = self.make_store(rng, classes=3)
        triplets = mine_triplets(store, None, 4, seed=9)
        assert len(triplets) == 12
        for t in triplets:
            assert t.anchor != t.positive
            assert t.cls != t.negative_cls
            assert 0 <= t.anchor < store.count(t.cls)
            assert 0 <= t.negative < store.count(t.negative_cls)
        assert sorted({t.cls for t in triplets}) == [1, 2, 3]

    def test_deterministic(self, rng):
        store = self.make_store(rng)
        assert mine_triplets(store, None, 6, seed=5) == mine_triplets(store, None, 6, seed=5)
        assert mine_triplets(store, None, 6, seed=5) != mine_triplets(store, None, 6, seed=6)

    def test_thin_class_rejected(self, rng):
        store = FeatureStore({1: rng.normal(size=(1, 3)), 2: rng.normal(size=(4, 3))})
        with pytest.raises(ValueError, match="anchors need"):
            mine_triplets(store, None, 2, seed=1)

    def test_confusion_weighted_negatives(self, rng):
        from displab.analytics import build_fhc
        from displab.embedding import PredictionRecord

        store = self.make_store(rng, classes=3)
        # class 1 confused exclusively with class 3
        recs = [PredictionRecord(f"f{i}", 1, 3, 0.5) for i in range(10)]
        confusions = {1: build_fhc(recs, 1)}
        triplets = mine_triplets(store, confusions, 20, seed=2)
        for t in triplets:
            if t.cls == 1:
                assert t.negative_cls == 3

    def test_all_correct_confusions_fall_back_to_uniform(self, rng):
        from displab.analytics import build_fhc
        from displab.embedding import PredictionRecord

        store = self.make_store(rng, classes=3)
        recs = [PredictionRecord(f"f{i}", 1, 1, 0.9) for i in range(10)]
        confusions = {1: build_fhc(recs, 1)}
        triplets = mine_triplets(store, confusions, 30, seed=3)
        negs = {t.negative_cls for t in triplets if t.cls == 1}
        assert negs == {2, 3}


def separated_store(rng, dim=16, per_class=6, distance=50.0):
    a = rng.normal(size=(per_class, dim))
    b = rng.normal(size=(per_class, dim))
    b[:, 0] += distance
    return FeatureStore({1: a, 2: b})


class TestTraining:
    def test_separated_clusters_stay_at_zero_loss(self, rng):
        # clusters far beyond margin: hinge inactive already at zero init
        store = separated_store(rng)
        cfg = TripletConfig(margin=1.0, learning_rate=0.05, epochs=10,
                            triplets_per_class=6, seed=11, noise_init_scale=0.0)
        # oracle: every mined triplet has zero raw loss with zero noise
        zero = NoiseDictionary.zeros([1, 2], 16)
        for epoch_seed in range(10):
            for t in mine_triplets(store, None, 6, seed=epoch_seed):
                d_ap = np.linalg.norm(store.vector(t.cls, t.anchor) - store.vector(t.cls, t.positive))
                d_an = np.linalg.norm(store.vector(t.cls, t.anchor) - store.vector(t.negative_cls, t.negative))
                assert triplet_loss(float(d_ap), float(d_an), 1.0) == 0.0
        noise, trace = train_noise_dictionary(store, cfg)
        assert trace == [0.0] * 10
        for c in (1, 2):
            assert not noise.get(c).any()

    def test_deterministic_across_runs(self, rng):
        store = two_class_store(rng, dim=6, per_class=5)
        cfg = TripletConfig(margin=0.4, learning_rate=0.05, epochs=5,
                            triplets_per_class=4, seed=21, noise_init_scale=0.01)
        n1, t1 = train_noise_dictionary(store, cfg)
        n2, t2 = train_noise_dictionary(store, cfg)
        assert t1 == t2
        for c in (1, 2):
            assert np.array_equal(n1.get(c), n2.get(c))

    def test_hinge_stationarity(self, rng):
        # once every mined triplet is satisfied, further epochs change nothing
        store = separated_store(rng, distance=40.0)
        base = dict(margin=0.5, learning_rate=0.05, triplets_per_class=5,
                    seed=33, noise_init_scale=0.001)
        short, _ = train_noise_dictionary(store, TripletConfig(epochs=3, **base))
        long, trace = train_noise_dictionary(store, TripletConfig(epochs=12, **base))
        assert all(x == 0.0 for x in trace)
        for c in (1, 2):
            assert np.array_equal(short.get(c), long.get(c))

    def test_training_reduces_loss_on_overlapping_clusters(self, rng):
        store = two_class_store(rng, dim=8, per_class=6, separation=0.5)
        cfg = TripletConfig(margin=0.5, learning_rate=0.05, epochs=30,
                            triplets_per_class=8, seed=3, noise_init_scale=0.01)
        _, trace = train_noise_dictionary(store, cfg)
        assert trace[-1] < trace[0]

    def test_single_class_rejected(self, rng):
        store = FeatureStore({1: rng.normal(size=(4, 3))})
        with pytest.raises(ValueError):
            train_noise_dictionary(store, TripletConfig(seed=1))


class TestNoiseAwareClassify:
    def test_zero_noise_equals_zero_shot(self, rng):
        for _ in range(50):
            dim = int(rng.integers(2, 10))
            image = rng.normal(size=dim)
            texts = [(i + 1, rng.normal(size=dim)) for i in range(4)]
            zero = NoiseDictionary.zeros([1, 2, 3, 4], dim)
            cfg = ClassifierConfig(float(rng.uniform(0.5, 100)))
            assert noise_aware_classify(image, texts, zero, cfg) == zero_shot_classify(
                image, texts, cfg
            )

    def test_flip_fixture_matches_direct_oracle(self):
        # baseline predicts 2; the class-1 noise cancels the off-axis
        # component, flipping the prediction to 1. Expectations evaluated
        # directly from the scoring formula.
        def unit(v):
            v = np.asarray(v, dtype=np.float64)
            return v / np.linalg.norm(v)

        image = unit([0.9, 0.44])
        texts = [(1, np.array([1.0, 0.0])), (2, unit([0.8, 0.6]))]
        noise = NoiseDictionary({1: np.array([0.0, -0.3]), 2: np.zeros(2)})
        cfg = ClassifierConfig(logit_scale=10.0)

        base_pred, base_dist = zero_shot_classify(image, texts, cfg)
        assert base_pred == 2

        def oracle_scores():
            out = {}
            for idx, text in texts:
                v = image + noise.get(idx)
                out[idx] = 10.0 * float(
                    np.dot(v, text) / (np.linalg.norm(v) * np.linalg.norm(text))
                )
            return out

        scores = oracle_scores()
        exps = {i: math.exp(s - max(scores.values())) for i, s in scores.items()}
        z = sum(exps.values())
        expected = {i: e / z for i, e in exps.items()}

        pred, dist = noise_aware_classify(image, texts, noise, cfg)
        assert pred == 1
        for idx in expected:
            assert dist[idx] == pytest.approx(expected[idx], abs=1e-12)

    def test_uniform_shift_keeps_distribution_normalized(self, rng):
        image = rng.normal(size=5)
        texts = [(i + 1, rng.normal(size=5)) for i in range(3)]
        shift = rng.normal(size=5)
        noise = NoiseDictionary({i + 1: shift.copy() for i in range(3)})
        _, dist = noise_aware_classify(image, texts, noise)
        assert abs(sum(dist.values()) - 1.0) <= 1e-9

    def test_missing_noise_vector_rejected(self, rng):
        image = rng.normal(size=4)
        texts = [(1, rng.normal(size=4)), (2, rng.normal(size=4))]
        noise = NoiseDictionary({1: np.zeros(4)})
        with pytest.raises(ValueError, match="missing noise vector"):
            noise_aware_classify(image, texts, noise)

    def test_noise_dim_mismatch_rejected(self, rng):
        image = rng.normal(size=4)
        texts = [(1, rng.normal(size=4))]
        noise = NoiseDictionary({1: np.zeros(5)})
        with pytest.raises(ValueError, match="dim"):
            noise_aware_classify(image, texts, noise)


class TestPersistence:
    def test_round_trip_with_provenance(self, tmp_path, rng):
        noise = NoiseDictionary({c: rng.normal(size=16).astype(np.float32).astype(np.float64)
                                 for c in (1, 2, 7)})
        cfg = TripletConfig(margin=0.3, learning_rate=0.01, epochs=12, seed=99,
                            triplets_per_class=4)
        path = tmp_path / "noise.emb1"
        save_noise_dictionary(path, noise, cfg)
        loaded, header = load_noise_dictionary(path)
        assert loaded.classes() == [1, 2, 7]
        for c in loaded.classes():
            assert np.array_equal(loaded.get(c), noise.get(c))
        assert header["margin"] == 0.3
        assert header["learning_rate"] == 0.01
        assert header["epochs"] == 12
        assert header["seed"] == 99
