"""Simulation configuration with documented defaults."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields
from typing import Optional

from devi.proximity import DequeuePolicy

FRAME_SAMPLE_HZ = 15  # camera sampling cadence for recognition


@dataclass(frozen=True)
class SimConfig:
    seed: int = 0
    noise_sigma_mm: float = 6.0
    alpha: float = 0.1
    debounce_s: float = 2.0
    policy: DequeuePolicy = DequeuePolicy.FIFO
    face_search_timeout_s: float = 5.0
    tick_hz: int = 30
    catalog_path: Optional[str] = None  # bundled department guide when unset
    store_path: Optional[str] = None  # ephemeral in-memory store when unset

    occupancy_threshold_mm: float = 1100.0
    queue_capacity: int = 16
    embedding_dim: int = 128
    embedding_provider: str = "synthetic"
    embedding_jitter: float = 0.12
    knn_k: int = 3
    unknown_tau: float = 0.6
    capture_frames: int = 5
    greet_pause_s: float = 1.5
    query_idle_timeout_s: float = 10.0
    answer_timeout_s: float = 15.0
    farewell_pause_s: float = 1.0
    transcript_corruption_rate: float = 0.0
    max_transcript_chars: int = 400  # stands in for the 5 s audio clip window
    drain_ms: int = 15000

    def __post_init__(self) -> None:
        if self.tick_hz < 2 * FRAME_SAMPLE_HZ:
            raise ValueError(
                f"tick_hz {self.tick_hz} must be at least {2 * FRAME_SAMPLE_HZ}"
            )
        if self.noise_sigma_mm < 0:
            raise ValueError("noise sigma must be non-negative")

    @property
    def tick_ms(self) -> float:
        return 1000.0 / self.tick_hz

    @property
    def debounce_ticks(self) -> int:
        return round(self.debounce_s * self.tick_hz)

    @property
    def capture_interval_ticks(self) -> int:
        return max(1, round(self.tick_hz / FRAME_SAMPLE_HZ))

    @classmethod
    def from_dict(cls, raw: dict) -> "SimConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise ValueError(f"unknown config fields: {sorted(unknown)}")
        values = dict(raw)
        if "policy" in values and not isinstance(values["policy"], DequeuePolicy):
            values["policy"] = DequeuePolicy(values["policy"])
        return cls(**values)

    @classmethod
    def from_file(cls, path: str) -> "SimConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def merged(self, overrides: dict) -> "SimConfig":
        base = {f.name: getattr(self, f.name) for f in fields(self)}
        base.update(overrides)
        return type(self).from_dict(
            {k: (v.value if isinstance(v, DequeuePolicy) else v) for k, v in base.items()}
        )
