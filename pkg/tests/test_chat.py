import json
from importlib import resources

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from devi.chat import (
    MATCH_THRESHOLD,
    CatalogError,
    corrupt_transcript,
    default_catalog,
    extract_place,
    load_catalog,
    match,
    normalize,
    respond,
)


@pytest.fixture(scope="module")
def catalog():
    return default_catalog()


def jaccard(a, b):
    a, b = set(a), set(b)
    return len(a & b) / len(a | b) if a | b else 0.0


class TestNormalize:
    def test_stopwords_and_case(self):
        assert normalize("Where IS the Lab?") == ["where", "lab"]

    def test_empty(self):
        assert normalize("") == []

    def test_punctuation(self):
        assert normalize("hi!!!") == ["hi"]

    def test_apostrophes_do_not_leak_fragments(self):
        assert normalize("what's this, isn't it?") == ["what", "this", "isn", "it"]


class TestMatch:
    def test_exact_phrase_scores_one(self, catalog):
        result = match(catalog, "where is the lab")
        assert result.intent_id == "directions"
        assert result.score == 1.0

    def test_order_free(self, catalog):
        result = match(catalog, "lab where")
        assert result.intent_id == "directions"
        # hand-enumerated: tokens {<place>, where} vs {where, <place>} -> 1.0
        assert result.score == pytest.approx(1.0)

    def test_gibberish_falls_back(self, catalog):
        result = match(catalog, "zxqv")
        assert result.intent_id == "fallback"
        assert result.score == 0.0

    def test_score_below_threshold_is_fallback(self, catalog):
        # one shared content token out of three must not fire (1/3 < 0.34)
        result = match(catalog, "lab paint fumes")
        assert jaccard(["<place>", "paint", "fumes"], ["where", "<place>"]) < MATCH_THRESHOLD
        assert result.intent_id == "fallback"

    def test_case_and_permutation_invariant(self, catalog):
        base = match(catalog, "how do i get to the lab")
        for variant in ("How Do I GET to the LAB", "lab the to get i do how"):
            other = match(catalog, variant)
            assert other.intent_id == base.intent_id
            assert other.score == pytest.approx(base.score)

    @settings(max_examples=40, deadline=None)
    @given(st.data())
    def test_token_permutation_property(self, catalog, data):
        phrases = [
            "where is the computer lab",
            "thank you so much",
            "tell me about yourself",
            "see you later",
        ]
        text = data.draw(st.sampled_from(phrases))
        tokens = text.split()
        perm = data.draw(st.permutations(tokens))
        assert match(catalog, " ".join(perm)).intent_id == match(catalog, text).intent_id

    def test_adding_unrelated_intent_never_lowers_score(self, catalog):
        raw = json.loads(
            resources.files("devi.data").joinpath("catalog.json").read_text()
        )
        before = match(catalog, "where is the lab")
        raw["intents"].append(
            {
                "intent_id": "zz-weather",
                "training_phrases": ["will it rain today", "weather forecast"],
                "responses": ["I only know this building."],
            }
        )
        extended = load_catalog(raw)
        after = match(extended, "where is the lab")
        assert after.intent_id == before.intent_id
        assert after.score >= before.score

    def test_deterministic(self, catalog):
        runs = {match(catalog, "where is the office").intent_id for _ in range(10)}
        assert runs == {"directions"}

    def test_slot_filled_for_directions(self, catalog):
        result = match(catalog, "where is the canteen")
        assert result.intent_id == "directions"
        assert result.slots == {"place": "cafeteria"}


class TestExtractPlace:
    def test_simple_alias(self, catalog):
        assert extract_place(catalog, ["where", "lab"]) == "lab"

    def test_no_alias_none(self, catalog):
        assert extract_place(catalog, ["where", "library"]) is None

    def test_longest_alias_wins(self, catalog):
        # "computer lab" (2 tokens) must beat bare "lab".
        tokens = normalize("where is the computer lab")
        assert extract_place(catalog, tokens) == "lab"
        # a catalog where the longer alias belongs to a different place
        doc = {
            "intents": [
                {"intent_id": "fallback", "training_phrases": [], "responses": ["?"]}
            ],
            "places": [
                {"place_id": "a-lab", "aliases": ["lab"], "route_text": "r",
                 "point_bearing_deg": 0},
                {"place_id": "b-media", "aliases": ["media lab"], "route_text": "r",
                 "point_bearing_deg": 10},
            ],
        }
        cat = load_catalog(doc)
        assert extract_place(cat, ["media", "lab"]) == "b-media"
        assert extract_place(cat, ["lab"]) == "a-lab"


class TestRespond:
    def test_greeting_uses_name(self, catalog):
        result = match(catalog, "hello")
        response = respond(catalog, result, {"name": "Alice"})
        assert "Alice" in response.speech_text
        assert response.gesture is None

    def test_directions_attach_gesture(self, catalog):
        result = match(catalog, "where is the lab")
        response = respond(catalog, result)
        assert response.gesture is not None
        assert response.gesture.kind == "point"
        assert response.gesture.bearing_deg == catalog.places["lab"].point_bearing_deg
        assert catalog.places["lab"].route_text in response.speech_text

    def test_directions_without_place_clarifies(self, catalog):
        result = match(catalog, "how do i get there")
        if result.intent_id != "directions":
            result = match(catalog, "show me the way")
        assert result.intent_id == "directions"
        assert "place" not in result.slots
        response = respond(catalog, result)
        assert response.gesture is None
        assert response.speech_text == catalog.clarification

    def test_display_mirrors_speech(self, catalog):
        response = respond(catalog, match(catalog, "thanks"))
        assert response.display_text == response.speech_text


class TestCatalogValidation:
    def base(self):
        return {
            "intents": [
                {"intent_id": "fallback", "training_phrases": [], "responses": ["?"]},
            ],
            "places": [],
        }

    def test_requires_fallback(self):
        doc = self.base()
        doc["intents"][0]["intent_id"] = "other"
        with pytest.raises(CatalogError):
            load_catalog(doc)

    def test_duplicate_intent_ids(self):
        doc = self.base()
        doc["intents"].append(dict(doc["intents"][0]))
        with pytest.raises(CatalogError):
            load_catalog(doc)

    def test_unknown_placeholder_rejected(self):
        doc = self.base()
        doc["intents"].append(
            {"intent_id": "bad", "training_phrases": [], "responses": ["hi {surname}"]}
        )
        with pytest.raises(CatalogError):
            load_catalog(doc)

    def test_route_placeholder_needs_slot(self):
        doc = self.base()
        doc["intents"].append(
            {"intent_id": "bad", "training_phrases": [], "responses": ["go {route}"]}
        )
        with pytest.raises(CatalogError):
            load_catalog(doc)

    def test_place_without_aliases_rejected(self):
        doc = self.base()
        doc["places"].append(
            {"place_id": "x", "aliases": [], "route_text": "r", "point_bearing_deg": 0}
        )
        with pytest.raises(CatalogError):
            load_catalog(doc)


class TestCorpusAccuracy:
    def test_canonical_is_perfect(self, catalog):
        for intent in catalog.intents.values():
            for phrase in intent.training_phrases:
                assert match(catalog, phrase).intent_id == intent.intent_id, phrase

    def test_paraphrases_at_least_90_percent(self, catalog):
        corpus = json.loads(
            resources.files("devi.data").joinpath("paraphrases.json").read_text()
        )
        assert all(len(v) >= 3 for v in corpus.values())
        total = hits = 0
        for intent_id, phrases in corpus.items():
            for phrase in phrases:
                total += 1
                hits += match(catalog, phrase).intent_id == intent_id
        assert hits / total >= 0.90

    def test_corruption_degrades_accuracy(self, catalog):
        corpus = json.loads(
            resources.files("devi.data").joinpath("paraphrases.json").read_text()
        )
        cases = [(p, iid) for iid, ps in corpus.items() for p in ps]
        for intent in catalog.intents.values():
            cases.extend((p, intent.intent_id) for p in intent.training_phrases)

        rng = np.random.default_rng(0)
        total = hits = 0
        for _ in range(3):
            for text, intent_id in cases:
                garbled = corrupt_transcript(text, 0.3, rng)
                total += 1
                hits += match(catalog, garbled).intent_id == intent_id
        clean = 1.0  # canonical corpus accuracy, asserted above
        assert hits / total < clean

    def test_corruption_rate_zero_is_identity(self):
        rng = np.random.default_rng(0)
        assert corrupt_transcript("where is the lab", 0.0, rng) == "where is the lab"
