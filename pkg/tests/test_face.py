import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from devi.face import (
    DeclaredFace,
    FrameDescriptor,
    KnnModel,
    Outcome,
    RecognitionResult,
    SyntheticEmbeddingProvider,
    classify,
    detect,
    make_provider,
    rebuild_index,
    vote,
)
from devi.people import PersonStore


def knn_oracle(vectors, ids, probe, k, tau):
    """Brute-force reference: enumerate all distances, vote within tau."""
    dists = sorted(
        (float(np.linalg.norm(np.asarray(v) - probe)), i) for i, v in enumerate(vectors)
    )
    neighbors = dists[:k]
    voters = [(d, ids[i]) for d, i in neighbors if d <= tau]
    if not voters:
        return RecognitionResult.unknown()
    tally = {}
    for d, pid in voters:
        tally.setdefault(pid, []).append(d)
    best = min(tally.items(), key=lambda kv: (-len(kv[1]), sum(kv[1]) / len(kv[1]), kv[0]))
    return RecognitionResult.known(best[0], min(best[1]))


def unit(vec):
    vec = np.asarray(vec, dtype=np.float64)
    return vec / np.linalg.norm(vec)


def face_of(w, h, hint="x"):
    return DeclaredFace(width_px=w, height_px=h, embedding=np.zeros(4), identity_hint=hint)


class TestDetect:
    def test_filters_small_faces(self):
        frame = FrameDescriptor(tick=0, faces=(face_of(64, 64), face_of(32, 32)))
        kept = detect(frame)
        assert len(kept) == 1
        assert kept[0].width_px == 64

    def test_empty_frame(self):
        assert detect(FrameDescriptor(tick=0)) == []

    def test_threshold_inclusive(self):
        kept = detect(FrameDescriptor(tick=0, faces=(face_of(40, 40),)))
        assert len(kept) == 1

    def test_minimum_side_gates(self):
        kept = detect(FrameDescriptor(tick=0, faces=(face_of(100, 39),)))
        assert kept == []

    def test_sorted_by_area_descending(self):
        frame = FrameDescriptor(
            tick=3, faces=(face_of(41, 41), face_of(90, 90), face_of(60, 60))
        )
        areas = [o.area_px for o in detect(frame)]
        assert areas == sorted(areas, reverse=True)


def small_model(k=3, tau=0.6):
    # Four identities on distinct axes; distances between entries are sqrt(2).
    base = np.eye(8)
    vectors = np.vstack([
        base[0], base[0] * 0.99 + base[4] * np.sqrt(1 - 0.99**2),
        base[1], base[2],
    ])
    vectors = vectors / np.linalg.norm(vectors, axis=1, keepdims=True)
    ids = ("anna", "anna", "ben", "cara")
    return KnnModel(vectors=vectors, person_ids=ids, k=k, tau=tau)


class TestClassify:
    def test_exact_match_distance_zero(self):
        model = small_model()
        result = classify(model, model.vectors[2])
        assert result.outcome is Outcome.KNOWN
        assert result.person_id == "ben"
        assert result.distance == pytest.approx(0.0)

    def test_far_probe_is_unknown(self):
        model = small_model()
        probe = unit(-np.ones(8))  # far from every axis vector
        dists = np.linalg.norm(model.vectors - probe, axis=1)
        assert dists.min() > 0.6  # established by construction
        assert classify(model, probe).outcome is Outcome.UNKNOWN

    def test_majority_vote_two_against_one(self):
        rng = np.random.default_rng(0)
        center = unit(rng.standard_normal(16))
        other = unit(rng.standard_normal(16))
        vectors = np.vstack([
            unit(center + 0.05 * rng.standard_normal(16)),
            unit(center + 0.05 * rng.standard_normal(16)),
            unit(center + 0.08 * rng.standard_normal(16)),
        ])
        model = KnnModel(vectors=vectors, person_ids=("a", "a", "b"), k=3, tau=0.6)
        result = classify(model, center)
        oracle = knn_oracle(vectors, ("a", "a", "b"), center, 3, 0.6)
        assert result.outcome is Outcome.KNOWN
        assert result.person_id == "a" == oracle.person_id
        assert result.distance == pytest.approx(oracle.distance)

    def test_empty_model_returns_unknown(self):
        model = KnnModel(vectors=np.empty((0, 8)), person_ids=())
        assert classify(model, unit(np.ones(8))).outcome is Outcome.UNKNOWN

    @settings(max_examples=100, deadline=None)
    @given(st.data())
    def test_matches_bruteforce_oracle(self, data):
        seed = data.draw(st.integers(min_value=0, max_value=10_000))
        rng = np.random.default_rng(seed)
        n = data.draw(st.integers(min_value=1, max_value=12))
        k = data.draw(st.integers(min_value=1, max_value=5))
        vectors = np.vstack([unit(rng.standard_normal(6)) for _ in range(n)])
        ids = tuple(rng.choice(["p1", "p2", "p3"]) for _ in range(n))
        model = KnnModel(vectors=vectors, person_ids=ids, k=k, tau=0.9)
        probe = unit(rng.standard_normal(6))
        got = classify(model, probe)
        want = knn_oracle(vectors, ids, probe, k, 0.9)
        assert got.outcome == want.outcome
        assert got.person_id == want.person_id
        if want.distance is not None:
            assert got.distance == pytest.approx(want.distance)

    def test_deterministic(self):
        model = small_model()
        probe = unit(np.arange(1, 9))
        first = classify(model, probe)
        for _ in range(5):
            assert classify(model, probe) == first

    def test_self_consistency_k1(self):
        model = small_model(k=1)
        for vec, pid in zip(model.vectors, model.person_ids):
            result = classify(model, vec)
            assert result.person_id == pid
            assert result.distance == pytest.approx(0.0)

    def test_threshold_monotone(self):
        # Unknown at tau stays Unknown at every smaller tau.
        rng = np.random.default_rng(5)
        vectors = np.vstack([unit(rng.standard_normal(8)) for _ in range(6)])
        ids = tuple("p" + str(i % 2) for i in range(6))
        probe = unit(rng.standard_normal(8))
        taus = [1.2, 0.9, 0.6, 0.3, 0.1]
        seen_unknown = False
        for tau in taus:
            model = KnnModel(vectors=vectors, person_ids=ids, k=3, tau=tau)
            outcome = classify(model, probe).outcome
            if seen_unknown:
                assert outcome is Outcome.UNKNOWN
            if outcome is Outcome.UNKNOWN:
                seen_unknown = True


class TestVote:
    def known(self, pid, d=0.2):
        return RecognitionResult.known(pid, d)

    def test_strict_majority_wins(self):
        results = [self.known("a"), self.known("a"), self.known("a"),
                   RecognitionResult.unknown(), self.known("b")]
        fused = vote(results, 5)
        assert fused.outcome is Outcome.KNOWN and fused.person_id == "a"

    def test_all_unknown(self):
        fused = vote([RecognitionResult.unknown()] * 5, 5)
        assert fused.outcome is Outcome.UNKNOWN

    def test_split_vote_is_unknown(self):
        results = [self.known("a"), self.known("a"), self.known("b"),
                   self.known("b"), RecognitionResult.unknown()]
        assert vote(results, 5).outcome is Outcome.UNKNOWN

    def test_empty_is_no_face(self):
        assert vote([], 5).outcome is Outcome.NO_FACE

    def test_all_no_face(self):
        assert vote([RecognitionResult.no_face()] * 5, 5).outcome is Outcome.NO_FACE

    def test_carries_best_distance_of_winner(self):
        results = [self.known("a", 0.4), self.known("a", 0.1), self.known("a", 0.3)]
        assert vote(results, 5).distance == pytest.approx(0.1)


class TestRebuild:
    def test_empty_store_empty_model(self):
        store = PersonStore()
        model = rebuild_index(store.snapshot())
        assert len(model) == 0

    def test_cardinality(self):
        store = PersonStore()
        rng = np.random.default_rng(1)
        for name in ("Ada", "Joe"):
            record = store.register(name, [], consented=True, now=0)
            for i in range(10):
                store.add_embedding(record.person_id, unit(rng.standard_normal(16)), now=i)
        model = rebuild_index(store.snapshot())
        assert len(model) == 20

    def test_new_person_becomes_classifiable(self):
        store = PersonStore()
        provider = SyntheticEmbeddingProvider(seed=9, dim=32)
        store.register("Ada", [provider.provide("ada#1")], consented=True, now=0)
        record = store.register(
            "Cleo", [provider.provide(f"cleo#{i}") for i in range(3)], consented=True, now=1
        )
        model = rebuild_index(store.snapshot(), k=3, tau=0.6)
        result = classify(model, provider.provide("cleo#99"))
        assert result.outcome is Outcome.KNOWN
        assert result.person_id == record.person_id

    def test_skips_unconsented(self):
        store = PersonStore()
        store.register("Ghost", [], consented=False, now=0)
        assert len(rebuild_index(store.snapshot())) == 0

    def test_entry_order_by_person_then_insertion(self):
        store = PersonStore(id_factory=iter(["b" * 16, "a" * 16]).__next__)
        rng = np.random.default_rng(2)
        rb = store.register("B", [unit(rng.standard_normal(8)) for _ in range(2)],
                            consented=True, now=0)
        ra = store.register("A", [unit(rng.standard_normal(8))], consented=True, now=1)
        model = rebuild_index(store.snapshot())
        assert model.person_ids == (ra.person_id, rb.person_id, rb.person_id)


class TestSyntheticProvider:
    def test_deterministic(self):
        a = SyntheticEmbeddingProvider(seed=4).provide("alice#3")
        b = SyntheticEmbeddingProvider(seed=4).provide("alice#3")
        assert np.array_equal(a, b)

    def test_unit_norm(self):
        provider = SyntheticEmbeddingProvider(seed=4)
        for key in ("alice", "alice#1", "bob#77"):
            assert np.linalg.norm(provider.provide(key)) == pytest.approx(1.0, abs=1e-6)

    def test_same_identity_clusters(self):
        provider = SyntheticEmbeddingProvider(seed=4)
        center = provider.provide("alice")
        for i in range(5):
            sample = provider.provide(f"alice#{i}")
            assert np.linalg.norm(sample - center) < 0.3

    def test_different_identities_far_apart(self):
        provider = SyntheticEmbeddingProvider(seed=4)
        a, b = provider.provide("alice"), provider.provide("bob")
        assert np.linalg.norm(a - b) > 1.0

    def test_accepts_bytes(self):
        provider = SyntheticEmbeddingProvider(seed=4)
        assert np.array_equal(provider.provide(b"alice#1"), provider.provide("alice#1"))

    def test_registry(self):
        provider = make_provider("synthetic", seed=1, dim=16)
        assert provider.provide("x").shape == (16,)
        with pytest.raises(KeyError):
            make_provider("resnet29")
