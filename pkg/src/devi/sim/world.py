"""Simulated world: visitors on the 180 degree arc and the robot's body.

The world owns ground truth (visitor positions, joint angles) and the
controller-side physics: sensing with noise, servo motion at the rated
speeds, and the serial frames a real microcontroller would exchange with
the host.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from devi import link, motion
from devi.proximity import OUT_OF_RANGE_MM, SensorGeometry, SensorReading, sensor_bearing


@dataclass
class Visitor:
    visitor_id: str
    bearing_deg: float
    distance_mm: float
    identity: str
    face_visible: bool = True
    face_size_px: int = 64

    def __post_init__(self) -> None:
        if self.distance_mm < 0:
            raise ValueError("visitor distance must be non-negative")


def region_for_bearing(bearing_deg: float, geometry: SensorGeometry) -> Optional[int]:
    """Sensor cone containing the bearing, or None in a coverage gap."""
    half = geometry.fov_deg / 2.0
    for index in range(geometry.count):
        if abs(bearing_deg - sensor_bearing(index)) <= half:
            return index
    return None


def sense(
    world: "World", geometry: SensorGeometry, rng: np.random.Generator, tick: int
) -> list[SensorReading]:
    """One reading per sensor: nearest visitor in the cone plus Gaussian noise.

    Sensors with nothing in range report the exact out-of-range sentinel.
    """
    half = geometry.fov_deg / 2.0
    readings = []
    for index in range(geometry.count):
        bearing = sensor_bearing(index)
        in_cone = [
            v.distance_mm
            for v in world.visitors.values()
            if abs(v.bearing_deg - bearing) <= half and v.distance_mm <= OUT_OF_RANGE_MM
        ]
        if in_cone:
            value = min(in_cone) + rng.normal(0.0, world.noise_sigma_mm)
            value = float(min(max(value, 0.0), OUT_OF_RANGE_MM))
        else:
            value = OUT_OF_RANGE_MM
        readings.append(SensorReading(sensor_index=index, raw_mm=value, tick=tick))
    return readings


@dataclass
class World:
    """Ground truth plus the simulated controller side of the serial link."""

    noise_sigma_mm: float = 6.0
    visitors: dict[str, Visitor] = field(default_factory=dict)
    joint_deg: dict[motion.Joint, float] = field(
        default_factory=lambda: dict(motion.REST_POSE)
    )
    joint_target_deg: dict[motion.Joint, float] = field(
        default_factory=lambda: dict(motion.REST_POSE)
    )
    arm_pose: str = "rest"

    def spawn(self, visitor: Visitor) -> None:
        if visitor.visitor_id in self.visitors:
            raise ValueError(f"visitor {visitor.visitor_id!r} already exists")
        self.visitors[visitor.visitor_id] = visitor

    def despawn(self, visitor_id: str) -> None:
        del self.visitors[visitor_id]

    def set_joint_target(self, joint: motion.Joint, target_deg: float) -> None:
        spec = motion.JOINT_SPECS[joint]
        self.joint_target_deg[joint] = min(max(target_deg, 0.0), spec.range_deg)

    def animate(self, dt_s: float) -> None:
        """Each joint sweeps toward its target at the rated speed."""
        for joint, spec in motion.JOINT_SPECS.items():
            current = self.joint_deg[joint]
            target = self.joint_target_deg[joint]
            if current == target:
                continue
            step = spec.speed_deg_per_s * dt_s
            if abs(target - current) <= step:
                self.joint_deg[joint] = target
            else:
                self.joint_deg[joint] = current + step * (1 if target > current else -1)

    @property
    def head_deg(self) -> float:
        return self.joint_deg[motion.Joint.HEAD]


class Controller:
    """The microcontroller stand-in: senses, reports, and drives servos.

    Bytes in and out are real link-protocol frames, so every scenario run
    exercises the codec end to end.
    """

    def __init__(self, world: World, geometry: SensorGeometry,
                 rng: np.random.Generator, tick_hz: int):
        self.world = world
        self.geometry = geometry
        self.rng = rng
        self.tick_hz = tick_hz
        self.decoder = link.StreamDecoder()
        self._seq = 0
        self.acks_sent = 0
        self.heartbeats_sent = 0

    def _next_seq(self) -> int:
        seq = self._seq
        self._seq = (self._seq + 1) % 256
        return seq

    def tick(self, inbound: bytes, tick: int) -> bytes:
        """Process host frames, then emit this tick's report (and heartbeat).

        Distances reach the host only through the wire format, quantized to
        whole millimeters like a real report would be.
        """
        out = bytearray()
        for frame in self.decoder.feed(inbound):
            if frame.msg_type is link.MsgType.SET_JOINT:
                joint_id, target_deg, _flag = link.parse_set_joint(frame.payload)
                joint = motion.JOINT_BY_ID.get(joint_id)
                if joint is not None:
                    self.world.set_joint_target(joint, target_deg)
                out += link.encode(
                    link.Frame(link.MsgType.ACK, self._next_seq(), link.ack_payload(frame.seq))
                )
                self.acks_sent += 1

        readings = sense(self.world, self.geometry, self.rng, tick)
        out += link.encode(
            link.Frame(
                link.MsgType.PROXIMITY_REPORT,
                self._next_seq(),
                link.proximity_payload(r.raw_mm for r in readings),
            )
        )
        if tick % self.tick_hz == 0:
            out += link.encode(link.Frame(link.MsgType.HEARTBEAT, self._next_seq()))
            self.heartbeats_sent += 1
        return bytes(out)
