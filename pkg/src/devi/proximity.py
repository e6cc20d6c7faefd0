"""Proximity sensing: TOF necklace model, smoothing filter, map and visitor queue.

Five time-of-flight sensors cover a 180 degree frontal arc, one every 45
degrees with a 25 degree cone each.  Raw distances are smoothed with a
recursive exponential filter, thresholded into per-region occupancy, and
clear-to-occupied transitions become queued visitor events.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Optional

SENSOR_COUNT = 5
OUT_OF_RANGE_MM = 2000.0


class InvalidSensorIndex(ValueError):
    """Sensor index outside 0..4."""


class NotWarmedUp(RuntimeError):
    """A proximity map was requested before every sensor produced a sample."""


@dataclass(frozen=True)
class SensorGeometry:
    """Physical arrangement of the necklace."""

    fov_deg: float = 25.0
    spacing_deg: float = 45.0
    range_mm: float = 1100.0
    count: int = SENSOR_COUNT

    def __post_init__(self) -> None:
        if (self.count - 1) * self.spacing_deg != 180.0:
            raise ValueError("sensor bearings must span exactly 180 degrees")


@dataclass(frozen=True)
class SensorReading:
    sensor_index: int
    raw_mm: float
    tick: int

    def __post_init__(self) -> None:
        if not 0 <= self.sensor_index < SENSOR_COUNT:
            raise InvalidSensorIndex(f"sensor index {self.sensor_index}")
        if not 0.0 <= self.raw_mm <= OUT_OF_RANGE_MM:
            raise ValueError(f"raw distance {self.raw_mm} outside [0, {OUT_OF_RANGE_MM}]")


@dataclass(frozen=True)
class FilterState:
    """Recursive exponential filter over the five distance channels.

    ``current[i]`` is None until sensor i delivers its first sample; the
    first sample seeds the filter directly.
    """

    alpha: float = 0.1
    current: tuple[Optional[float], ...] = (None,) * SENSOR_COUNT

    def __post_init__(self) -> None:
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError(f"alpha {self.alpha} outside (0, 1]")
        if len(self.current) != SENSOR_COUNT:
            raise ValueError("filter state must hold one channel per sensor")

    @property
    def warmed_up(self) -> bool:
        return all(v is not None for v in self.current)


@dataclass(frozen=True)
class ProximityMap:
    smoothed_mm: tuple[float, ...]
    occupied: tuple[bool, ...]
    tick: int


@dataclass(frozen=True)
class RegionEvent:
    region: int
    bearing_deg: float
    distance_mm: float
    arrival_tick: int


class DequeuePolicy(Enum):
    FIFO = "fifo"
    NEAREST_FIRST = "nearest_first"


def sensor_bearing(index: int) -> float:
    """Bearing of sensor ``index``; 0 = robot forward, negative = robot's left."""
    if not 0 <= index < SENSOR_COUNT:
        raise InvalidSensorIndex(f"sensor index {index}")
    return -90.0 + 45.0 * index


def smooth(state: FilterState, reading: SensorReading) -> FilterState:
    """Fold one raw reading into the filter: a*raw + (1-a)*previous."""
    channels = list(state.current)
    prev = channels[reading.sensor_index]
    if prev is None:
        channels[reading.sensor_index] = float(reading.raw_mm)
    else:
        channels[reading.sensor_index] = state.alpha * reading.raw_mm + (1.0 - state.alpha) * prev
    return replace(state, current=tuple(channels))


def build_map(state: FilterState, geometry: SensorGeometry, tick: int) -> ProximityMap:
    """Threshold the smoothed distances into occupancy over the 180 degree field."""
    if not state.warmed_up:
        missing = [i for i, v in enumerate(state.current) if v is None]
        raise NotWarmedUp(f"no sample yet for sensors {missing}")
    smoothed = tuple(float(v) for v in state.current)  # type: ignore[arg-type]
    occupied = tuple(v <= geometry.range_mm for v in smoothed)
    return ProximityMap(smoothed_mm=smoothed, occupied=occupied, tick=tick)


@dataclass(frozen=True)
class QueueState:
    """FIFO of visitor-arrival events with per-region debounce.

    A region fires once on a clear-to-occupied transition and re-arms only
    after staying clear for ``debounce_ticks``.  At most ``capacity`` events
    are pending; overflow drops the newest and records a diagnostic.
    """

    events: tuple[RegionEvent, ...] = ()
    capacity: int = 16
    debounce_ticks: int = 60
    armed: tuple[bool, ...] = (True,) * SENSOR_COUNT
    clear_since: tuple[Optional[int], ...] = (None,) * SENSOR_COUNT
    dropped: int = 0
    diagnostics: tuple[str, ...] = field(default=())

    def __len__(self) -> int:
        return len(self.events)


def update_queue(
    queue: QueueState,
    prev_map: Optional[ProximityMap],
    new_map: ProximityMap,
    tick: int,
) -> tuple[QueueState, tuple[RegionEvent, ...]]:
    """Register clear-to-occupied transitions, ascending region index within a tick."""
    events = list(queue.events)
    armed = list(queue.armed)
    clear_since = list(queue.clear_since)
    dropped = queue.dropped
    diagnostics = list(queue.diagnostics)
    new_events: list[RegionEvent] = []

    def debounce_elapsed(region: int) -> bool:
        since = clear_since[region]
        return since is not None and tick - since >= queue.debounce_ticks

    for region in range(SENSOR_COUNT):
        was = prev_map.occupied[region] if prev_map is not None else False
        now = new_map.occupied[region]
        if now and not was:
            if not armed[region] and debounce_elapsed(region):
                armed[region] = True
            if armed[region]:
                event = RegionEvent(
                    region=region,
                    bearing_deg=sensor_bearing(region),
                    distance_mm=new_map.smoothed_mm[region],
                    arrival_tick=tick,
                )
                if len(events) >= queue.capacity:
                    dropped += 1
                    diagnostics.append(f"tick {tick}: queue full, dropped region {region}")
                else:
                    events.append(event)
                    new_events.append(event)
                armed[region] = False
            clear_since[region] = None
        elif now:
            clear_since[region] = None
        else:
            if was or clear_since[region] is None:
                clear_since[region] = tick
            if not armed[region] and debounce_elapsed(region):
                armed[region] = True

    next_state = replace(
        queue,
        events=tuple(events),
        armed=tuple(armed),
        clear_since=tuple(clear_since),
        dropped=dropped,
        diagnostics=tuple(diagnostics),
    )
    return next_state, tuple(new_events)


def dequeue_next(
    queue: QueueState, policy: DequeuePolicy = DequeuePolicy.FIFO
) -> tuple[QueueState, Optional[RegionEvent]]:
    """Pop the next event: oldest for FIFO, closest for NEAREST_FIRST (ties by age)."""
    if not queue.events:
        return queue, None
    if policy is DequeuePolicy.FIFO:
        index = 0
    else:
        index = min(
            range(len(queue.events)),
            key=lambda i: (queue.events[i].distance_mm, queue.events[i].arrival_tick, i),
        )
    event = queue.events[index]
    remaining = queue.events[:index] + queue.events[index + 1 :]
    return replace(queue, events=remaining), event
