"""Local intent matching and response generation.

Transcripts are normalized to token sets, place aliases collapse to one
generic slot token, and intents score by Jaccard similarity against their
training phrases.  Below the match threshold everything lands in the
reserved fallback intent.  Direction intents resolve a place and attach a
pointing directive at the place's bearing.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from importlib import resources
from typing import Iterable, Optional, Sequence

MATCH_THRESHOLD = 0.34
PLACE_TOKEN = "<place>"
_ALLOWED_PLACEHOLDERS = {"name", "route", "place"}
_TOKEN_RE = re.compile(r"[^a-z0-9\s]+")


class CatalogError(ValueError):
    pass


@dataclass(frozen=True)
class Place:
    place_id: str
    aliases: tuple[str, ...]
    route_text: str
    point_bearing_deg: float


@dataclass(frozen=True)
class Intent:
    intent_id: str
    training_phrases: tuple[str, ...]
    responses: tuple[str, ...]
    wants_place: bool = False


@dataclass(frozen=True)
class IntentCatalog:
    intents: dict[str, Intent]
    places: dict[str, Place]
    stopwords: frozenset[str]
    clarification: str
    # aliases as normalized token tuples, longest first, with their place ids
    alias_grams: tuple[tuple[tuple[str, ...], str], ...] = field(default=())

    def intent(self, intent_id: str) -> Intent:
        return self.intents[intent_id]


@dataclass(frozen=True)
class MatchResult:
    intent_id: str
    score: float
    slots: dict[str, str] = field(default_factory=dict)


@dataclass(frozen=True)
class GestureDirective:
    kind: str
    bearing_deg: float


@dataclass(frozen=True)
class ChatResponse:
    speech_text: str
    display_text: str
    gesture: Optional[GestureDirective] = None


class MissingSlot(Exception):
    """A direction intent matched but no place could be resolved."""


def _bundled_text(filename: str) -> str:
    return resources.files("devi.data").joinpath(filename).read_text(encoding="utf-8")


def default_stopwords() -> frozenset[str]:
    words = _bundled_text("stopwords.txt").split()
    return frozenset(w for w in words if not w.startswith("#"))


def _basic_tokens(text: str) -> list[str]:
    return _TOKEN_RE.sub(" ", text.lower()).split()


def normalize(text: str, stopwords: Optional[frozenset[str]] = None) -> list[str]:
    """Lowercase, strip punctuation, drop stopwords."""
    if stopwords is None:
        stopwords = default_stopwords()
    return [t for t in _basic_tokens(text) if t not in stopwords]


def _template_placeholders(template: str) -> set[str]:
    return set(re.findall(r"\{(\w+)\}", template))


def load_catalog(source) -> IntentCatalog:
    """Build a validated catalog from a JSON document, path, or parsed dict."""
    if isinstance(source, dict):
        doc = source
    else:
        with open(source, encoding="utf-8") as fh:
            doc = json.load(fh)

    stopwords = (
        frozenset(doc["stopwords"]) if "stopwords" in doc else default_stopwords()
    )

    places: dict[str, Place] = {}
    for raw in doc.get("places", []):
        pid = raw["place_id"]
        if pid in places:
            raise CatalogError(f"duplicate place id {pid!r}")
        aliases = tuple(raw["aliases"])
        if not aliases:
            raise CatalogError(f"place {pid!r} has no aliases")
        places[pid] = Place(
            place_id=pid,
            aliases=aliases,
            route_text=raw["route_text"],
            point_bearing_deg=float(raw["point_bearing_deg"]),
        )

    intents: dict[str, Intent] = {}
    for raw in doc["intents"]:
        iid = raw["intent_id"]
        if iid in intents:
            raise CatalogError(f"duplicate intent id {iid!r}")
        wants_place = False
        slot_spec = raw.get("slot_spec")
        if slot_spec is not None:
            if slot_spec.get("slot") != "place":
                raise CatalogError(f"intent {iid!r}: only the 'place' slot is supported")
            wants_place = True
        responses = tuple(raw["responses"])
        if not responses:
            raise CatalogError(f"intent {iid!r} has no responses")
        for template in responses:
            unknown = _template_placeholders(template) - _ALLOWED_PLACEHOLDERS
            if unknown:
                raise CatalogError(f"intent {iid!r}: unknown placeholders {sorted(unknown)}")
            if not wants_place and _template_placeholders(template) & {"route", "place"}:
                raise CatalogError(
                    f"intent {iid!r}: route/place placeholders need a place slot"
                )
        intents[iid] = Intent(
            intent_id=iid,
            training_phrases=tuple(raw.get("training_phrases", [])),
            responses=responses,
            wants_place=wants_place,
        )
    if "fallback" not in intents:
        raise CatalogError("catalog must define the reserved 'fallback' intent")

    clarification = doc.get("clarification", "Which place are you asking about?")
    unknown = _template_placeholders(clarification) - _ALLOWED_PLACEHOLDERS
    if unknown:
        raise CatalogError(f"clarification: unknown placeholders {sorted(unknown)}")

    grams: list[tuple[tuple[str, ...], str]] = []
    for place in places.values():
        for alias in place.aliases:
            tokens = tuple(_basic_tokens(alias))
            if tokens:
                grams.append((tokens, place.place_id))
    # longest alias first; ties resolved by lexicographic place id
    grams.sort(key=lambda g: (-len(g[0]), -sum(len(t) for t in g[0]), g[1]))

    return IntentCatalog(
        intents=intents,
        places=places,
        stopwords=stopwords,
        clarification=clarification,
        alias_grams=tuple(grams),
    )


def default_catalog() -> IntentCatalog:
    return load_catalog(json.loads(_bundled_text("catalog.json")))


def _expand_aliases(catalog: IntentCatalog, tokens: Sequence[str]) -> list[str]:
    """Replace every place-alias n-gram with the generic place token."""
    out: list[str] = []
    i = 0
    while i < len(tokens):
        matched = 0
        for gram, _pid in catalog.alias_grams:
            if tuple(tokens[i : i + len(gram)]) == gram:
                matched = len(gram)
                break
        if matched:
            out.append(PLACE_TOKEN)
            i += matched
        else:
            out.append(tokens[i])
            i += 1
    return out


def _jaccard(a: frozenset[str], b: frozenset[str]) -> float:
    if not a and not b:
        return 0.0
    union = a | b
    return len(a & b) / len(union)


def match(catalog: IntentCatalog, text: str) -> MatchResult:
    """Resolve a transcript to its best intent, or fallback below threshold."""
    tokens = normalize(text, catalog.stopwords)
    expanded = frozenset(_expand_aliases(catalog, tokens))

    best_id = "fallback"
    best_score = 0.0
    for intent_id in sorted(catalog.intents):
        intent = catalog.intents[intent_id]
        for phrase in intent.training_phrases:
            phrase_tokens = frozenset(
                _expand_aliases(catalog, normalize(phrase, catalog.stopwords))
            )
            score = _jaccard(expanded, phrase_tokens)
            if score > best_score:
                best_id, best_score = intent_id, score

    if best_score < MATCH_THRESHOLD:
        return MatchResult(intent_id="fallback", score=best_score)

    slots: dict[str, str] = {}
    if catalog.intents[best_id].wants_place:
        place_id = extract_place(catalog, tokens)
        if place_id is not None:
            slots["place"] = place_id
    return MatchResult(intent_id=best_id, score=best_score, slots=slots)


def extract_place(catalog: IntentCatalog, tokens: Sequence[str]) -> Optional[str]:
    """Longest place alias present in the tokens; ties by lexicographic id."""
    for gram, place_id in catalog.alias_grams:  # pre-sorted longest first
        for i in range(len(tokens) - len(gram) + 1):
            if tuple(tokens[i : i + len(gram)]) == gram:
                return place_id
    return None


def render_template(template: str, context: Optional[dict[str, str]] = None) -> str:
    values = {"name": "there", "route": "", "place": ""}
    if context:
        values.update({k: v for k, v in context.items() if v})
    return template.format(**values)


def respond(
    catalog: IntentCatalog,
    result: MatchResult,
    person_context: Optional[dict[str, str]] = None,
) -> ChatResponse:
    """Render the matched intent's first template; direction intents point."""
    intent = catalog.intents[result.intent_id]
    context = dict(person_context or {})

    gesture = None
    if intent.wants_place:
        place_id = result.slots.get("place")
        if place_id is None:
            text = render_template(catalog.clarification, context)
            return ChatResponse(speech_text=text, display_text=text)
        place = catalog.places[place_id]
        context["route"] = place.route_text
        context["place"] = place_id
        gesture = GestureDirective(kind="point", bearing_deg=place.point_bearing_deg)

    text = render_template(intent.responses[0], context)
    return ChatResponse(speech_text=text, display_text=text, gesture=gesture)


def corrupt_transcript(
    text: str, rate: float, rng, garble: Iterable[str] = ("uh", "um", "krzz", "ffft")
) -> str:
    """Simulated ASR degradation: delete or substitute tokens at ``rate``."""
    garble = tuple(garble)
    out: list[str] = []
    for token in text.split():
        roll = rng.random()
        if roll < rate / 2:
            continue  # dropped
        if roll < rate:
            out.append(garble[int(rng.integers(len(garble)))])
        else:
            out.append(token)
    return " ".join(out)
