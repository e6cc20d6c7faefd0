"""The simulation loop: sensors to proximity to brain to actuators.

One `SimLoop` instance owns all mutable state and advances it tick by
tick on an injected simulated clock; scenario replay and the live service
both drive this same loop, so behavior is identical and fully seeded.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Optional

import numpy as np

from devi import chat, face, link, motion, orchestrator as orch, people, proximity
from devi.proximity import DequeuePolicy, SensorGeometry
from devi.sim.config import SimConfig
from devi.sim.scenario import Scenario
from devi.sim.world import Controller, Visitor, World, region_for_bearing


@dataclass
class _CaptureTask:
    remaining: int
    next_tick: int
    results: list = field(default_factory=list)
    embeddings: list = field(default_factory=list)


@dataclass
class _TimedFrame:
    due_ms: int
    joint: motion.Joint
    target_deg: float


@dataclass
class MetricsReport:
    """Deterministic run summary; serializes to canonical JSON."""

    scenario: str
    seed: int
    ticks: int
    sim_ms: int
    visitors: list[dict] = field(default_factory=list)
    recognitions: list[dict] = field(default_factory=list)
    intents: list[dict] = field(default_factory=list)
    intent_accuracy: Optional[float] = None
    speech_log: list[list] = field(default_factory=list)
    phase_trace: list[list] = field(default_factory=list)
    head_trace: list[list] = field(default_factory=list)
    queue_waits_ms: list[int] = field(default_factory=list)
    registered: list[str] = field(default_factory=list)
    people_final: list[dict] = field(default_factory=list)
    rebuilds: int = 0
    dropped_events: int = 0
    diagnostics: list[str] = field(default_factory=list)
    link_stats: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {k: v for k, v in self.__dict__.items()}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":")) + "\n"


class SimLoop:
    """Owns world, filters, queue, store, model, and the interaction machine."""

    def __init__(
        self,
        config: SimConfig,
        scenario: Optional[Scenario] = None,
        store: Optional[people.PersonStore] = None,
    ):
        self.config = config
        self.geometry = SensorGeometry(range_mm=config.occupancy_threshold_mm)
        self.rng = np.random.default_rng(config.seed)
        self._id_rng = np.random.default_rng((config.seed * 7919 + 17) % (2**63))
        self.provider = face.make_provider(
            config.embedding_provider,
            seed=config.seed,
            dim=config.embedding_dim,
            jitter=config.embedding_jitter,
        )

        catalog = (
            chat.load_catalog(config.catalog_path)
            if config.catalog_path
            else chat.default_catalog()
        )
        self.catalog = catalog
        self.orchestrator = orch.Orchestrator(
            catalog,
            orch.OrchestratorConfig(
                face_search_timeout_ms=round(config.face_search_timeout_s * 1000),
                greet_pause_ms=round(config.greet_pause_s * 1000),
                query_idle_timeout_ms=round(config.query_idle_timeout_s * 1000),
                answer_timeout_ms=round(config.answer_timeout_s * 1000),
                farewell_pause_ms=round(config.farewell_pause_s * 1000),
                capture_frames=config.capture_frames,
            ),
        )
        self.state = orch.InteractionState()

        self.store = store if store is not None else people.PersonStore(
            path=config.store_path, id_factory=self._make_person_id
        )
        self.world = World(noise_sigma_mm=config.noise_sigma_mm)
        self.controller = Controller(self.world, self.geometry, self.rng, config.tick_hz)
        self.host_decoder = link.StreamDecoder()
        self._host_seq = 0
        self._to_controller = bytearray()

        self.filter_state = proximity.FilterState(alpha=config.alpha)
        self.queue = proximity.QueueState(
            capacity=config.queue_capacity, debounce_ticks=config.debounce_ticks
        )
        self.current_map: Optional[proximity.ProximityMap] = None
        self.capture: Optional[_CaptureTask] = None
        self._gesture_frames: list[_TimedFrame] = []
        self._gesture_rest_ms: Optional[int] = None

        self.tick_index = 0
        self.last_speech = ""
        self.last_display = ""
        self.acks_received = 0
        self.heartbeats_received = 0

        self.scenario = scenario
        self._next_event = 0
        name = scenario.name if scenario else "live"
        self.report = MetricsReport(scenario=name, seed=config.seed, ticks=0, sim_ms=0)
        self._visitor_meta: dict[str, dict] = {}
        self._region_visitor: dict[int, str] = {}
        self._expected_intents: list[tuple[str, Optional[str]]] = []
        self._last_head_logged: Optional[float] = None
        self._corruption_rng = np.random.default_rng(config.seed + 104729)

        if scenario is not None:
            for person in scenario.people:
                self._preload_person(person)
        self.model = face.rebuild_index(
            self.store.snapshot(), k=config.knn_k, tau=config.unknown_tau, built_at=0
        )
        self._log_phase(0)

    # Identity plumbing --------------------------------------------------------

    def _make_person_id(self) -> str:
        return f"{self._id_rng.integers(0, 2**64, dtype=np.uint64):016x}"

    def _preload_person(self, person: dict) -> None:
        identity = person.get("identity", person["name"].lower())
        samples = int(person.get("samples", 3))
        vectors = [
            self.provider.provide(f"{identity}#seed{j}") for j in range(samples)
        ]
        self.store.register(person["name"], vectors, consented=True, now=0)

    # Time -----------------------------------------------------------------------

    @property
    def now_ms(self) -> int:
        return round(self.tick_index * 1000.0 / self.config.tick_hz)

    # External commands (scenario events and service calls) -----------------------

    def add_visitor(
        self,
        visitor_id: Optional[str] = None,
        bearing_deg: float = 0.0,
        distance_mm: float = 800.0,
        identity: Optional[str] = None,
        face_visible: bool = True,
        face_size_px: int = 64,
    ) -> Visitor:
        if visitor_id is None:
            visitor_id = f"v{len(self._visitor_meta) + 1}"
        if identity is None:
            identity = f"guest-{visitor_id}"
        visitor = Visitor(
            visitor_id=visitor_id,
            bearing_deg=float(bearing_deg),
            distance_mm=float(distance_mm),
            identity=identity,
            face_visible=bool(face_visible),
            face_size_px=int(face_size_px),
        )
        self.world.spawn(visitor)
        self._visitor_meta.setdefault(
            visitor_id,
            {
                "visitor_id": visitor_id,
                "identity": identity,
                "spawn_ms": self.now_ms,
                "region": region_for_bearing(visitor.bearing_deg, self.geometry),
                "arrival_ms": None,
                "dequeued_ms": None,
                "wait_ms": None,
            },
        )
        return visitor

    def move_visitor(self, visitor_id: str, bearing_deg=None, distance_mm=None) -> Visitor:
        visitor = self.world.visitors[visitor_id]
        if bearing_deg is not None:
            visitor.bearing_deg = float(bearing_deg)
        if distance_mm is not None:
            if distance_mm < 0:
                raise ValueError("visitor distance must be non-negative")
            visitor.distance_mm = float(distance_mm)
        meta = self._visitor_meta.get(visitor_id)
        if meta is not None:
            meta["region"] = region_for_bearing(visitor.bearing_deg, self.geometry)
        return visitor

    def set_face(self, visitor_id: str, visible=None, size_px=None) -> Visitor:
        visitor = self.world.visitors[visitor_id]
        if visible is not None:
            visitor.face_visible = bool(visible)
        if size_px is not None:
            visitor.face_size_px = int(size_px)
        return visitor

    def remove_visitor(self, visitor_id: str) -> None:
        self.world.despawn(visitor_id)

    def visitor_utterance(self, visitor_id: str, text: str,
                          expect_intent: Optional[str] = None) -> Optional[str]:
        """Deliver a transcript from a visitor; returns the robot's reply text."""
        text = text[: self.config.max_transcript_chars]
        if self.config.transcript_corruption_rate > 0:
            text = chat.corrupt_transcript(
                text, self.config.transcript_corruption_rate, self._corruption_rng
            )
        if not self._is_serviced(visitor_id):
            self.report.diagnostics.append(
                f"{self.now_ms}ms: utterance from unserviced visitor {visitor_id} ignored"
            )
            return None
        matched = chat.match(self.catalog, text).intent_id
        self._expected_intents.append((matched, expect_intent))
        self.report.intents.append(
            {
                "ms": self.now_ms,
                "visitor_id": visitor_id,
                "text": text,
                "matched": matched,
                "expected": expect_intent,
                "ok": (expect_intent is None) or matched == expect_intent,
            }
        )
        before = len(self.report.speech_log)
        self._dispatch(orch.UtteranceText(text))
        spoken = [entry[1] for entry in self.report.speech_log[before:]]
        return spoken[-1] if spoken else None

    def visitor_name(self, visitor_id: str, text: str) -> bool:
        if not self._is_serviced(visitor_id):
            self.report.diagnostics.append(
                f"{self.now_ms}ms: name answer from unserviced visitor {visitor_id} ignored"
            )
            return False
        self._dispatch(orch.NameAnswer(text))
        return True

    def visitor_consent(self, visitor_id: str, answer: bool) -> bool:
        if not self._is_serviced(visitor_id):
            self.report.diagnostics.append(
                f"{self.now_ms}ms: consent answer from unserviced visitor {visitor_id} ignored"
            )
            return False
        self._dispatch(orch.ConsentAnswer(bool(answer)))
        return True

    def play_gesture(self, plan: motion.GesturePlan) -> None:
        """Run a gesture outside any interaction (console test button)."""
        self._schedule_gesture(plan, self.now_ms)

    def say_line(self, intent_id: str) -> str:
        """Speak a catalog template directly (console self-introduction)."""
        line = chat.render_template(self.catalog.intent(intent_id).responses[0])
        self.last_speech = line
        self.last_display = line
        self.report.speech_log.append([self.now_ms, line])
        return line

    def _is_serviced(self, visitor_id: str) -> bool:
        if self.state.phase is orch.Phase.IDLE or self.state.region is None:
            return False
        visitor = self.world.visitors.get(visitor_id)
        if visitor is None:
            return False
        return region_for_bearing(visitor.bearing_deg, self.geometry) == self.state.region

    # Tick pipeline ----------------------------------------------------------------

    def tick(self) -> None:
        now = self.now_ms

        # 1. scenario events due this tick
        if self.scenario is not None:
            while (
                self._next_event < len(self.scenario.events)
                and self.scenario.events[self._next_event].at_ms <= now
            ):
                self._apply_scenario_event(self.scenario.events[self._next_event])
                self._next_event += 1

        # 2. controller: consume joint commands, report sensor sweep
        inbound = bytes(self._to_controller)
        self._to_controller.clear()
        wire = self.controller.tick(inbound, self.tick_index)

        # 3. host: decode the wire, update filter, map, and queue
        for frame in self.host_decoder.feed(wire):
            if frame.msg_type is link.MsgType.PROXIMITY_REPORT:
                self._ingest_report(link.parse_proximity(frame.payload))
            elif frame.msg_type is link.MsgType.ACK:
                self.acks_received += 1
            elif frame.msg_type is link.MsgType.HEARTBEAT:
                self.heartbeats_received += 1

        # 4. machine timers
        if (
            self.state.deadline_ms is not None
            and now >= self.state.deadline_ms
            and self.state.phase is not orch.Phase.IDLE
        ):
            self._dispatch(orch.Timeout())

        # 5. frame capture toward recognition
        self._advance_capture()

        # 6. idle servicing: dequeue next visitor or use the pause productively
        if self.state.phase is orch.Phase.IDLE:
            if len(self.queue):
                self._dequeue_and_service()
            elif self.state.db_dirty:
                self._dispatch(orch.QueueEmptyTick())

        # 7. physical motion and scheduled gesture steps
        self._advance_gestures(now)
        self.world.animate(1.0 / self.config.tick_hz)
        self._log_head(now)

        self.tick_index += 1

    def _apply_scenario_event(self, event) -> None:
        params = dict(event.params)
        action = event.action
        if action == "spawn":
            self.add_visitor(**params)
        elif action == "move":
            self.move_visitor(**params)
        elif action == "set_face":
            self.set_face(**params)
        elif action == "say":
            self.visitor_utterance(
                params["visitor_id"], params["text"], params.get("expect_intent")
            )
        elif action == "name":
            self.visitor_name(params["visitor_id"], params["text"])
        elif action == "consent":
            self.visitor_consent(params["visitor_id"], params["answer"])
        elif action == "despawn":
            self.remove_visitor(params["visitor_id"])

    def _ingest_report(self, distances_mm) -> None:
        state = self.filter_state
        for index, value in enumerate(distances_mm):
            state = proximity.smooth(
                state,
                proximity.SensorReading(
                    sensor_index=index, raw_mm=float(value), tick=self.tick_index
                ),
            )
        self.filter_state = state
        prev_map = self.current_map
        self.current_map = proximity.build_map(state, self.geometry, self.tick_index)
        self.queue, new_events = proximity.update_queue(
            self.queue, prev_map, self.current_map, self.tick_index
        )
        self.report.dropped_events = self.queue.dropped
        for event in new_events:
            self._note_arrival(event)

    def _note_arrival(self, event: proximity.RegionEvent) -> None:
        # Attribute the region event to the nearest visitor standing in it.
        candidates = [
            v
            for v in self.world.visitors.values()
            if region_for_bearing(v.bearing_deg, self.geometry) == event.region
        ]
        if candidates:
            visitor = min(candidates, key=lambda v: v.distance_mm)
            meta = self._visitor_meta.get(visitor.visitor_id)
            if meta is not None and meta["arrival_ms"] is None:
                meta["arrival_ms"] = self.now_ms
            self._region_visitor[event.region] = visitor.visitor_id

    def _dequeue_and_service(self) -> None:
        self.queue, event = proximity.dequeue_next(self.queue, self.config.policy)
        if event is None:
            return
        visitor_id = self._region_visitor.get(event.region)
        meta = self._visitor_meta.get(visitor_id) if visitor_id else None
        if meta is not None and meta["dequeued_ms"] is None:
            meta["dequeued_ms"] = self.now_ms
            if meta["arrival_ms"] is not None:
                meta["wait_ms"] = self.now_ms - meta["arrival_ms"]
                self.report.queue_waits_ms.append(meta["wait_ms"])
        self._dispatch(orch.RegionArrived(event))

    def _advance_capture(self) -> None:
        task = self.capture
        if task is None or self.tick_index < task.next_tick:
            return
        if self.current_map is None or not orch.gate_recognition(self.state, self.current_map):
            return  # recognition stays off while the serviced region is clear
        frame = self._camera_frame()
        observations = face.detect(frame)
        if observations:
            best = observations[0]
            task.results.append(face.classify(self.model, best.embedding))
            task.embeddings.append(best.embedding)
        else:
            task.results.append(face.RecognitionResult.no_face())
        task.remaining -= 1
        task.next_tick = self.tick_index + self.config.capture_interval_ticks
        if task.remaining <= 0:
            self.capture = None
            fused = face.vote(task.results, self.config.capture_frames)
            person_name = None
            if fused.outcome is face.Outcome.KNOWN:
                person_name = self.store.get(fused.person_id).name
            self._note_recognition(fused, person_name)
            self._dispatch(
                orch.FramesResult(fused, person_name, tuple(task.embeddings))
            )

    def _camera_frame(self) -> face.FrameDescriptor:
        faces = []
        for visitor in self.world.visitors.values():
            if not visitor.face_visible:
                continue
            if region_for_bearing(visitor.bearing_deg, self.geometry) != self.state.region:
                continue
            faces.append(
                face.DeclaredFace(
                    width_px=visitor.face_size_px,
                    height_px=visitor.face_size_px,
                    embedding=self.provider.provide(
                        f"{visitor.identity}#t{self.tick_index}"
                    ),
                    identity_hint=visitor.identity,
                )
            )
        return face.FrameDescriptor(tick=self.tick_index, faces=tuple(faces))

    def _note_recognition(self, fused: face.RecognitionResult, person_name) -> None:
        region = self.state.region
        visitor_id = self._region_visitor.get(region) if region is not None else None
        truth = None
        if visitor_id and visitor_id in self.world.visitors:
            truth = self.world.visitors[visitor_id].identity
        self.report.recognitions.append(
            {
                "ms": self.now_ms,
                "visitor_id": visitor_id,
                "outcome": fused.outcome.value,
                "person_name": person_name,
                "truth_identity": truth,
            }
        )

    # Event dispatch and action execution -------------------------------------------

    def _dispatch(self, event) -> None:
        self.state, actions = self.orchestrator.step(self.state, event, self.now_ms)
        if self.state.phase not in (orch.Phase.TURNING, orch.Phase.FACE_SEARCH):
            self.capture = None  # stale searches never outlive their interaction
        self._log_phase(self.now_ms)
        for action in actions:
            self._execute(action)

    def _execute(self, action) -> None:
        now = self.now_ms
        if isinstance(action, orch.TurnHead):
            self._send_joint(motion.Joint.HEAD, action.servo_deg)
        elif isinstance(action, orch.CaptureFrames):
            self.capture = _CaptureTask(remaining=action.n, next_tick=self.tick_index)
        elif isinstance(action, orch.Speak):
            self.last_speech = action.text
            self.report.speech_log.append([now, action.text])
        elif isinstance(action, orch.Display):
            self.last_display = action.text
        elif isinstance(action, orch.Gesture):
            self._schedule_gesture(action.plan, now)
        elif isinstance(action, orch.PersistRegistration):
            try:
                record = self.store.register(
                    action.name, action.embeddings, consented=True, now=now
                )
                self.report.registered.append(record.name)
            except people.PersonStoreError as exc:
                self.report.diagnostics.append(f"{now}ms: registration failed: {exc}")
        elif isinstance(action, orch.RecordRecognition):
            self.store.record_recognition(action.person_id, now=now)
        elif isinstance(action, orch.RebuildIndex):
            self.model = face.rebuild_index(
                self.store.snapshot(),
                k=self.config.knn_k,
                tau=self.config.unknown_tau,
                built_at=self.tick_index,
            )
            self.report.rebuilds += 1
        elif isinstance(action, orch.DequeueNext):
            if len(self.queue) and self.state.phase is orch.Phase.IDLE:
                self._dequeue_and_service()
        elif isinstance(action, orch.Diagnostic):
            self.report.diagnostics.append(f"{now}ms: {action.message}")

    def _send_joint(self, joint: motion.Joint, target_deg: float) -> None:
        frame = link.Frame(
            link.MsgType.SET_JOINT,
            self._host_seq,
            link.set_joint_payload(motion.JOINT_IDS[joint], target_deg),
        )
        self._host_seq = (self._host_seq + 1) % 256
        self._to_controller += link.encode(frame)

    def _schedule_gesture(self, plan: motion.GesturePlan, now: int) -> None:
        offset = 0.0
        for step in plan.steps:
            for command in step.commands:
                self._gesture_frames.append(
                    _TimedFrame(now + round(offset * 1000), command.joint, command.target_deg)
                )
            offset += step.duration_s
        self.world.arm_pose = plan.kind
        self._gesture_rest_ms = now + round(offset * 1000)

    def _advance_gestures(self, now: int) -> None:
        due = [f for f in self._gesture_frames if f.due_ms <= now]
        if due:
            self._gesture_frames = [f for f in self._gesture_frames if f.due_ms > now]
            for timed in due:
                self._send_joint(timed.joint, timed.target_deg)
        if self._gesture_rest_ms is not None and now >= self._gesture_rest_ms:
            self.world.arm_pose = "rest"
            self._gesture_rest_ms = None

    # Trace helpers ---------------------------------------------------------------

    def _log_phase(self, now: int) -> None:
        phase = self.state.phase.value
        if not self.report.phase_trace or self.report.phase_trace[-1][1] != phase:
            self.report.phase_trace.append([now, phase])

    def _log_head(self, now: int) -> None:
        angle = round(self.world.head_deg, 2)
        if self._last_head_logged is None or abs(angle - self._last_head_logged) >= 0.05:
            self.report.head_trace.append([now, angle])
            self._last_head_logged = angle

    # Snapshots and reports ----------------------------------------------------------

    def snapshot(self) -> dict[str, Any]:
        occupied = list(self.current_map.occupied) if self.current_map else [False] * 5
        return {
            "tick": self.tick_index,
            "ms": self.now_ms,
            "phase": self.state.phase.value,
            "serviced_region": self.state.region,
            "head_deg": round(self.world.head_deg, 2),
            "head_target_deg": round(self.world.joint_target_deg[motion.Joint.HEAD], 2),
            "arm_pose": self.world.arm_pose,
            "occupied": occupied,
            "queue": [
                {
                    "region": e.region,
                    "bearing_deg": e.bearing_deg,
                    "distance_mm": round(e.distance_mm, 1),
                    "arrival_tick": e.arrival_tick,
                }
                for e in self.queue.events
            ],
            "visitors": [
                {
                    "visitor_id": v.visitor_id,
                    "bearing_deg": v.bearing_deg,
                    "distance_mm": v.distance_mm,
                    "region": region_for_bearing(v.bearing_deg, self.geometry),
                    "face_visible": v.face_visible,
                }
                for v in self.world.visitors.values()
            ],
            "last_speech": self.last_speech,
            "last_display": self.last_display,
            "people_count": len(self.store.snapshot()),
            "db_dirty": self.state.db_dirty,
        }

    def finalize_report(self) -> MetricsReport:
        report = self.report
        report.ticks = self.tick_index
        report.sim_ms = self.now_ms
        report.visitors = sorted(self._visitor_meta.values(), key=lambda m: m["visitor_id"])
        graded = [(m, e) for m, e in self._expected_intents if e is not None]
        if graded:
            report.intent_accuracy = round(
                sum(1 for m, e in graded if m == e) / len(graded), 4
            )
        report.people_final = [
            {
                "name": r.name,
                "recognition_count": r.recognition_count,
                "last_seen": r.last_seen,
                "embeddings": len(r.embeddings),
            }
            for r in self.store.snapshot()
        ]
        report.link_stats = {
            "acks_received": self.acks_received,
            "heartbeats_received": self.heartbeats_received,
            "controller_acks_sent": self.controller.acks_sent,
            "host_decode_errors": len(self.host_decoder.diagnostics),
            "controller_decode_errors": len(self.controller.decoder.diagnostics),
        }
        return report


def run_scenario(
    config: SimConfig,
    scenario: Scenario,
    store: Optional[people.PersonStore] = None,
) -> MetricsReport:
    """Replay a scenario to completion and return its metrics."""
    if scenario.config_overrides:
        config = config.merged(scenario.config_overrides)
    loop = SimLoop(config, scenario=scenario, store=store)
    end_ms = scenario.end_ms + config.drain_ms
    total_ticks = max(1, round(end_ms * config.tick_hz / 1000.0))
    for _ in range(total_ticks):
        loop.tick()
    return loop.finalize_report()
