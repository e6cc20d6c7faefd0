"""The interaction brain: a pure state machine over visitor events.

``step`` maps (state, event, now) to a successor state plus a list of
action descriptions; executing them (speech, motion, persistence) is the
runtime's job, so modular failures stay isolated and every transition is
unit-testable.  Three initiation scenarios are covered: a known person is
greeted by name, an unknown person is asked for a name and consent, and a
proximity trigger with no face times out back to idle.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum
from typing import Optional, Union

from devi import chat, motion
from devi.chat import IntentCatalog
from devi.face import Outcome, RecognitionResult
from devi.proximity import ProximityMap, RegionEvent


class Phase(Enum):
    IDLE = "idle"
    TURNING = "turning_to_visitor"
    FACE_SEARCH = "face_search"
    GREET_KNOWN = "greet_known"
    ASK_NAME = "ask_name"
    ASK_CONSENT = "ask_consent"
    QUERY = "query"
    FAREWELL = "farewell"


# Events ----------------------------------------------------------------------

@dataclass(frozen=True)
class RegionArrived:
    event: RegionEvent


@dataclass(frozen=True)
class FramesResult:
    result: RecognitionResult
    person_name: Optional[str] = None
    embeddings: tuple = ()


@dataclass(frozen=True)
class UtteranceText:
    text: str


@dataclass(frozen=True)
class ConsentAnswer:
    yes: bool


@dataclass(frozen=True)
class NameAnswer:
    name: str


@dataclass(frozen=True)
class Timeout:
    pass


@dataclass(frozen=True)
class QueueEmptyTick:
    pass


Event = Union[
    RegionArrived, FramesResult, UtteranceText, ConsentAnswer, NameAnswer, Timeout, QueueEmptyTick
]


# Actions ----------------------------------------------------------------------

@dataclass(frozen=True)
class TurnHead:
    bearing_deg: float
    servo_deg: float
    duration_s: float


@dataclass(frozen=True)
class CaptureFrames:
    n: int


@dataclass(frozen=True)
class Speak:
    text: str


@dataclass(frozen=True)
class Display:
    text: str


@dataclass(frozen=True)
class Gesture:
    plan: motion.GesturePlan


@dataclass(frozen=True)
class PersistRegistration:
    name: str
    embeddings: tuple


@dataclass(frozen=True)
class RecordRecognition:
    person_id: str


@dataclass(frozen=True)
class RebuildIndex:
    pass


@dataclass(frozen=True)
class DequeueNext:
    pass


@dataclass(frozen=True)
class Diagnostic:
    message: str


Action = Union[
    TurnHead,
    CaptureFrames,
    Speak,
    Display,
    Gesture,
    PersistRegistration,
    RecordRecognition,
    RebuildIndex,
    DequeueNext,
    Diagnostic,
]


@dataclass(frozen=True)
class InteractionState:
    phase: Phase = Phase.IDLE
    region: Optional[int] = None
    deadline_ms: Optional[int] = None
    head_servo_deg: float = motion.HEAD_CENTER_DEG
    person_id: Optional[str] = None
    person_name: Optional[str] = None
    pending_name: Optional[str] = None
    captured: tuple = ()
    db_dirty: bool = False


@dataclass(frozen=True)
class OrchestratorConfig:
    face_search_timeout_ms: int = 5000
    greet_pause_ms: int = 1500
    query_idle_timeout_ms: int = 10000
    answer_timeout_ms: int = 15000
    farewell_pause_ms: int = 1000
    capture_frames: int = 5


class Orchestrator:
    """Pure transition function bound to a catalog and timing config."""

    def __init__(self, catalog: Optional[IntentCatalog] = None,
                 config: OrchestratorConfig = OrchestratorConfig()):
        self.catalog = catalog if catalog is not None else chat.default_catalog()
        self.config = config

    # Template helpers ---------------------------------------------------------

    def _line(self, intent_id: str, name: Optional[str] = None) -> str:
        template = self.catalog.intent(intent_id).responses[0]
        return chat.render_template(template, {"name": name} if name else None)

    @staticmethod
    def _say(text: str) -> list[Action]:
        return [Speak(text), Display(text)]

    # Transition function ------------------------------------------------------

    def step(self, state: InteractionState, event: Event, now: int
             ) -> tuple[InteractionState, tuple[Action, ...]]:
        """Advance the machine by one event at simulated time ``now`` (ms)."""
        handler = getattr(self, f"_in_{state.phase.name.lower()}")
        next_state, actions = handler(state, event, now)
        return next_state, tuple(actions)

    def _unexpected(self, state: InteractionState, event: Event
                    ) -> tuple[InteractionState, list[Action]]:
        message = f"unexpected {type(event).__name__} in {state.phase.value}"
        return state, [Diagnostic(message)]

    @staticmethod
    def _to_idle(state: InteractionState) -> InteractionState:
        return InteractionState(
            phase=Phase.IDLE,
            head_servo_deg=state.head_servo_deg,
            db_dirty=state.db_dirty,
        )

    def _in_idle(self, state, event, now):
        if isinstance(event, RegionArrived):
            cmd = motion.head_target(event.event.bearing_deg, state.head_servo_deg)
            next_state = replace(
                state,
                phase=Phase.TURNING,
                region=event.event.region,
                deadline_ms=now + round(cmd.expected_duration_s * 1000),
                head_servo_deg=cmd.target_deg,
            )
            return next_state, [TurnHead(event.event.bearing_deg, cmd.target_deg,
                                         cmd.expected_duration_s)]
        if isinstance(event, QueueEmptyTick):
            if state.db_dirty:
                return replace(state, db_dirty=False), [RebuildIndex()]
            return state, []
        return self._unexpected(state, event)

    def _in_turning(self, state, event, now):
        if isinstance(event, Timeout):
            next_state = replace(
                state,
                phase=Phase.FACE_SEARCH,
                deadline_ms=now + self.config.face_search_timeout_ms,
            )
            return next_state, [CaptureFrames(self.config.capture_frames)]
        return self._unexpected(state, event)

    def _in_face_search(self, state, event, now):
        if isinstance(event, FramesResult):
            result = event.result
            if result.outcome is Outcome.KNOWN:
                name = event.person_name or "there"
                next_state = replace(
                    state,
                    phase=Phase.GREET_KNOWN,
                    person_id=result.person_id,
                    person_name=name,
                    deadline_ms=now + self.config.greet_pause_ms,
                )
                actions = self._say(self._line("greet-known", name))
                actions.append(RecordRecognition(result.person_id))
                return next_state, actions
            if result.outcome is Outcome.UNKNOWN:
                next_state = replace(
                    state,
                    phase=Phase.ASK_NAME,
                    captured=tuple(event.embeddings),
                    deadline_ms=now + self.config.answer_timeout_ms,
                )
                return next_state, self._say(self._line("ask-name"))
            # No face in this burst: keep looking until the deadline.
            return state, [CaptureFrames(self.config.capture_frames)]
        if isinstance(event, Timeout):
            # False detection: no face within the predefined window.
            return self._to_idle(state), [DequeueNext()]
        return self._unexpected(state, event)

    def _in_greet_known(self, state, event, now):
        if isinstance(event, Timeout):
            next_state = replace(
                state,
                phase=Phase.QUERY,
                deadline_ms=now + self.config.query_idle_timeout_ms,
            )
            return next_state, []
        if isinstance(event, UtteranceText):
            next_state = replace(
                state,
                phase=Phase.QUERY,
                deadline_ms=now + self.config.query_idle_timeout_ms,
            )
            return self._handle_utterance(next_state, event.text, now)
        return self._unexpected(state, event)

    def _in_ask_name(self, state, event, now):
        if isinstance(event, NameAnswer):
            name = " ".join(event.name.split())
            if not name:
                return state, self._say(self._line("ask-name"))
            next_state = replace(
                state,
                phase=Phase.ASK_CONSENT,
                pending_name=name,
                deadline_ms=now + self.config.answer_timeout_ms,
            )
            return next_state, self._say(self._line("ask-consent", name))
        if isinstance(event, Timeout):
            return self._to_idle(state), [DequeueNext()]
        return self._unexpected(state, event)

    def _in_ask_consent(self, state, event, now):
        if isinstance(event, ConsentAnswer):
            name = state.pending_name or "there"
            next_state = replace(
                state,
                phase=Phase.QUERY,
                person_name=name,
                pending_name=None,
                deadline_ms=now + self.config.query_idle_timeout_ms,
            )
            if event.yes:
                actions: list[Action] = [PersistRegistration(name, state.captured)]
                actions += self._say(self._line("registered", name))
                return replace(next_state, db_dirty=True, captured=()), actions
            # Serve without storing; captured vectors are discarded.
            return replace(next_state, captured=()), self._say(self._line("no-consent", name))
        if isinstance(event, Timeout):
            return self._to_idle(state), [DequeueNext()]
        return self._unexpected(state, event)

    def _in_query(self, state, event, now):
        if isinstance(event, UtteranceText):
            next_state = replace(
                state, deadline_ms=now + self.config.query_idle_timeout_ms
            )
            return self._handle_utterance(next_state, event.text, now)
        if isinstance(event, Timeout):
            return self._farewell(state, now)
        return self._unexpected(state, event)

    def _in_farewell(self, state, event, now):
        if isinstance(event, Timeout):
            return self._to_idle(state), [DequeueNext()]
        return self._unexpected(state, event)

    def _farewell(self, state, now, spoken: Optional[list[Action]] = None):
        next_state = replace(
            state,
            phase=Phase.FAREWELL,
            deadline_ms=now + self.config.farewell_pause_ms,
        )
        actions = spoken if spoken is not None else self._say(
            self._line("farewell", state.person_name)
        )
        return next_state, actions

    def _handle_utterance(self, state, text, now):
        result = chat.match(self.catalog, text)
        context = {"name": state.person_name} if state.person_name else None
        response = chat.respond(self.catalog, result, context)
        actions: list[Action] = self._say(response.speech_text)
        if response.gesture is not None:
            actions.append(
                Gesture(motion.plan_gesture(motion.PointAt(response.gesture.bearing_deg)))
            )
        if result.intent_id == "farewell":
            return self._farewell(state, now, spoken=actions)
        return state, actions


def gate_recognition(state: InteractionState, pmap: ProximityMap) -> bool:
    """Recognition may run only while servicing a region that is still occupied."""
    if state.phase not in (Phase.TURNING, Phase.FACE_SEARCH):
        return False
    if state.region is None:
        return False
    return bool(pmap.occupied[state.region])
