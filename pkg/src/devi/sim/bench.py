"""Desk benchmarks: smoothing-factor sweep, recognition accuracy, latency.

These mirror the hardware experiments structurally: same sample counts and
parameters, synthetic data.  All are seeded and fast.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from devi import face, proximity

DEFAULT_ALPHAS = (1.0, 0.1, 0.3, 0.5, 0.7, 0.9)


@dataclass(frozen=True)
class FilterBenchRow:
    alpha: float
    mean_mm: float
    std_mm: float


def filter_bench(
    samples: int = 500,
    alphas: tuple[float, ...] = DEFAULT_ALPHAS,
    sigma_mm: float = 5.94,
    true_mm: float = 1000.0,
    seed: int = 0,
) -> list[FilterBenchRow]:
    """Smooth one noisy 500-sample stream with each alpha and compare spreads."""
    rng = np.random.default_rng(seed)
    raw = rng.normal(true_mm, sigma_mm, samples)
    raw = np.clip(raw, 0.0, proximity.OUT_OF_RANGE_MM)

    rows = []
    for alpha in alphas:
        state = proximity.FilterState(alpha=alpha)
        filtered = np.empty(samples)
        for i, value in enumerate(raw):
            state = proximity.smooth(
                state, proximity.SensorReading(sensor_index=0, raw_mm=float(value), tick=i)
            )
            filtered[i] = state.current[0]
        rows.append(
            FilterBenchRow(
                alpha=alpha,
                mean_mm=float(np.mean(filtered)),
                std_mm=float(np.std(filtered, ddof=1)),
            )
        )
    return rows


def sample_in_cone(
    center: np.ndarray, radius: float, rng: np.random.Generator
) -> np.ndarray:
    """Unit vector within chord distance ``radius`` of a unit ``center``."""
    noise = rng.standard_normal(center.shape[0])
    noise -= noise.dot(center) * center
    norm = np.linalg.norm(noise)
    if norm == 0:
        return center.copy()
    offset = rng.uniform(0.0, radius)
    vec = center + noise * (offset / norm)
    return vec / np.linalg.norm(vec)


def separated_centroids(
    count: int, dim: int, min_distance: float, rng: np.random.Generator
) -> np.ndarray:
    """Random unit centroids with all pairwise distances >= ``min_distance``."""
    centroids: list[np.ndarray] = []
    while len(centroids) < count:
        vec = rng.standard_normal(dim)
        vec /= np.linalg.norm(vec)
        if all(np.linalg.norm(vec - c) >= min_distance for c in centroids):
            centroids.append(vec)
    return np.vstack(centroids)


@dataclass(frozen=True)
class RecognitionBenchResult:
    accuracy: float
    probes: int
    identities: int
    elapsed_s: float


def recognition_bench(
    identities: int = 50,
    gallery_per_identity: int = 10,
    probes: int = 1000,
    cone_radius: float = 0.25,
    min_separation: float = 1.0,
    k: int = 3,
    tau: float = 0.6,
    frames_per_probe: int = 5,
    dim: int = face.EMBEDDING_DIM,
    seed: int = 0,
) -> RecognitionBenchResult:
    """Closed-set accuracy over synthetic identity clusters with frame voting."""
    rng = np.random.default_rng(seed)
    centroids = separated_centroids(identities, dim, min_separation, rng)

    vectors = []
    ids = []
    for i in range(identities):
        for _ in range(gallery_per_identity):
            vectors.append(sample_in_cone(centroids[i], cone_radius, rng))
            ids.append(f"id{i:03d}")
    model = face.KnnModel(
        vectors=np.vstack(vectors), person_ids=tuple(ids), k=k, tau=tau
    )

    started = time.perf_counter()
    correct = 0
    for _ in range(probes):
        target = int(rng.integers(identities))
        results = [
            face.classify(model, sample_in_cone(centroids[target], cone_radius, rng))
            for _ in range(frames_per_probe)
        ]
        fused = face.vote(results, frames_per_probe)
        if fused.outcome is face.Outcome.KNOWN and fused.person_id == f"id{target:03d}":
            correct += 1
    elapsed = time.perf_counter() - started
    return RecognitionBenchResult(
        accuracy=correct / probes,
        probes=probes,
        identities=identities,
        elapsed_s=elapsed,
    )


@dataclass(frozen=True)
class LatencyBenchResult:
    p99_ms: float
    mean_ms: float
    runs: int
    entries: int


def latency_bench(
    entries: int = 1000,
    runs: int = 100,
    frames_per_run: int = 5,
    dim: int = face.EMBEDDING_DIM,
    seed: int = 0,
) -> LatencyBenchResult:
    """Wall-clock cost of classify+vote against a large model."""
    rng = np.random.default_rng(seed)
    identities = max(1, entries // 10)
    centroids = separated_centroids(identities, dim, 1.0, rng)
    vectors = []
    ids = []
    for i in range(entries):
        centroid = centroids[i % identities]
        vectors.append(sample_in_cone(centroid, 0.25, rng))
        ids.append(f"id{i % identities:03d}")
    model = face.KnnModel(vectors=np.vstack(vectors), person_ids=tuple(ids))

    probes = [
        [sample_in_cone(centroids[int(rng.integers(identities))], 0.25, rng)
         for _ in range(frames_per_run)]
        for _ in range(runs)
    ]
    timings = []
    for batch in probes:
        started = time.perf_counter()
        face.vote([face.classify(model, p) for p in batch], frames_per_run)
        timings.append((time.perf_counter() - started) * 1000.0)
    timings.sort()
    p99_index = min(len(timings) - 1, int(round(0.99 * (len(timings) - 1))))
    return LatencyBenchResult(
        p99_ms=timings[p99_index],
        mean_ms=sum(timings) / len(timings),
        runs=runs,
        entries=entries,
    )
