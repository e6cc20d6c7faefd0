"""Joint-space motion planning for head turns and arm gestures.

Angles are servo angles: the head spans 0..170 with 85 = straight ahead,
limbs span 0..range with 0 = rest (arm down).  Durations follow directly
from the measured per-joint speeds.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Optional, Union


class Joint(Enum):
    HEAD = "head"
    SHOULDER_LEFT = "shoulder_left"
    SHOULDER_RIGHT = "shoulder_right"
    ELBOW_LEFT = "elbow_left"
    ELBOW_RIGHT = "elbow_right"


@dataclass(frozen=True)
class JointSpec:
    joint: Joint
    range_deg: float
    speed_deg_per_s: float


JOINT_SPECS: dict[Joint, JointSpec] = {
    Joint.HEAD: JointSpec(Joint.HEAD, 170.0, 23.3),
    Joint.SHOULDER_LEFT: JointSpec(Joint.SHOULDER_LEFT, 180.0, 36.5),
    Joint.SHOULDER_RIGHT: JointSpec(Joint.SHOULDER_RIGHT, 180.0, 36.5),
    Joint.ELBOW_LEFT: JointSpec(Joint.ELBOW_LEFT, 110.0, 69.0),
    Joint.ELBOW_RIGHT: JointSpec(Joint.ELBOW_RIGHT, 110.0, 69.0),
}

HEAD_CENTER_DEG = 85.0

# Servo ids on the wire, shared with the link protocol.
JOINT_IDS: dict[Joint, int] = {
    Joint.HEAD: 0,
    Joint.SHOULDER_LEFT: 1,
    Joint.SHOULDER_RIGHT: 2,
    Joint.ELBOW_LEFT: 3,
    Joint.ELBOW_RIGHT: 4,
}
JOINT_BY_ID = {v: k for k, v in JOINT_IDS.items()}


class OutOfRange(ValueError):
    """Angle outside the joint's mechanical range."""


@dataclass(frozen=True)
class JointCommand:
    joint: Joint
    target_deg: float
    expected_duration_s: float
    clamped: bool = False


@dataclass(frozen=True)
class GestureStep:
    commands: tuple[JointCommand, ...]
    dwell_s: float = 0.0

    @property
    def duration_s(self) -> float:
        motion = max((c.expected_duration_s for c in self.commands), default=0.0)
        return motion + self.dwell_s


@dataclass(frozen=True)
class GesturePlan:
    kind: str
    steps: tuple[GestureStep, ...]

    @property
    def total_duration_s(self) -> float:
        return sum(step.duration_s for step in self.steps)


@dataclass(frozen=True)
class PointAt:
    bearing_deg: float


class Wave:
    pass


class Rest:
    pass


GestureKind = Union[PointAt, Wave, Rest]

# Rest pose: head centered, arms down.
REST_POSE: dict[Joint, float] = {
    Joint.HEAD: HEAD_CENTER_DEG,
    Joint.SHOULDER_LEFT: 0.0,
    Joint.SHOULDER_RIGHT: 0.0,
    Joint.ELBOW_LEFT: 0.0,
    Joint.ELBOW_RIGHT: 0.0,
}

# Pointing posture: shoulder raised level, elbow partially extended.
POINT_SHOULDER_DEG = 90.0
POINT_ELBOW_DEG = 60.0
POINT_DWELL_S = 2.0

WAVE_SHOULDER_DEG = 45.0
WAVE_ELBOW_HIGH_DEG = 100.0
WAVE_ELBOW_LOW_DEG = 40.0


def move_duration(joint: Joint, from_deg: float, to_deg: float) -> float:
    """Seconds to sweep between two in-range angles at the joint's rated speed."""
    spec = JOINT_SPECS[joint]
    for angle in (from_deg, to_deg):
        if not 0.0 <= angle <= spec.range_deg:
            raise OutOfRange(f"{joint.value} angle {angle} outside [0, {spec.range_deg}]")
    return abs(to_deg - from_deg) / spec.speed_deg_per_s


def head_target(bearing_deg: float, current_deg: float = HEAD_CENTER_DEG) -> JointCommand:
    """Servo command that faces the head along ``bearing_deg``.

    Bearings beyond +/-85 are clamped to the mechanical stops and flagged.
    """
    raw = bearing_deg + HEAD_CENTER_DEG
    spec = JOINT_SPECS[Joint.HEAD]
    target = min(max(raw, 0.0), spec.range_deg)
    return JointCommand(
        joint=Joint.HEAD,
        target_deg=target,
        expected_duration_s=move_duration(Joint.HEAD, current_deg, target),
        clamped=(raw != target),
    )


def _command(joint: Joint, pose: dict[Joint, float], target: float) -> JointCommand:
    return JointCommand(
        joint=joint,
        target_deg=target,
        expected_duration_s=move_duration(joint, pose[joint], target),
    )


def plan_gesture(kind: GestureKind, pose: Optional[dict[Joint, float]] = None) -> GesturePlan:
    """Plan an arm gesture from ``pose`` (rest by default).

    point_at raises the bearing-side shoulder, extends the elbow, dwells,
    and returns to rest; ties at bearing 0 use the right arm.  Steps with
    no displacement and no dwell are elided, so resting from rest is empty.
    """
    current = dict(REST_POSE if pose is None else pose)

    def step(targets: dict[Joint, float], dwell_s: float = 0.0) -> Optional[GestureStep]:
        commands = tuple(
            _command(j, current, t) for j, t in targets.items() if current[j] != t
        )
        current.update(targets)
        if not commands and dwell_s == 0.0:
            return None
        return GestureStep(commands=commands, dwell_s=dwell_s)

    steps: list[Optional[GestureStep]] = []
    if isinstance(kind, PointAt):
        left = kind.bearing_deg < 0
        shoulder = Joint.SHOULDER_LEFT if left else Joint.SHOULDER_RIGHT
        elbow = Joint.ELBOW_LEFT if left else Joint.ELBOW_RIGHT
        steps.append(step({shoulder: POINT_SHOULDER_DEG}))
        steps.append(step({elbow: POINT_ELBOW_DEG}, dwell_s=POINT_DWELL_S))
        steps.append(step({shoulder: 0.0, elbow: 0.0}))
        name = "point_left" if left else "point_right"
    elif isinstance(kind, Wave):
        steps.append(step({Joint.SHOULDER_RIGHT: WAVE_SHOULDER_DEG, Joint.ELBOW_RIGHT: WAVE_ELBOW_HIGH_DEG}))
        steps.append(step({Joint.ELBOW_RIGHT: WAVE_ELBOW_LOW_DEG}))
        steps.append(step({Joint.ELBOW_RIGHT: WAVE_ELBOW_HIGH_DEG}))
        steps.append(step({Joint.SHOULDER_RIGHT: 0.0, Joint.ELBOW_RIGHT: 0.0}))
        name = "wave"
    elif isinstance(kind, Rest):
        steps.append(step({j: REST_POSE[j] for j in JOINT_SPECS if j is not Joint.HEAD}))
        name = "rest"
    else:
        raise TypeError(f"unknown gesture kind {kind!r}")

    return GesturePlan(kind=name, steps=tuple(s for s in steps if s is not None))
