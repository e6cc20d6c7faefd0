"""Face identification over a pluggable embedding provider.

Detection gates declared face boxes by the 40x40 minimum size, a KNN model
over unit embeddings identifies people with an unknown-distance threshold,
and multi-frame voting smooths out single-frame misses.  The model is
immutable; idle-time rebuilds produce a fresh one from a store snapshot.
"""

from __future__ import annotations

import hashlib
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Optional, Protocol, Sequence, Union

import numpy as np

EMBEDDING_DIM = 128
MIN_FACE_PX = 40
DEFAULT_K = 3
DEFAULT_TAU = 0.6
VOTE_FRAMES = 5


class Outcome(Enum):
    KNOWN = "known"
    UNKNOWN = "unknown"
    NO_FACE = "no_face"


@dataclass(frozen=True)
class RecognitionResult:
    outcome: Outcome
    person_id: Optional[str] = None
    distance: Optional[float] = None

    @classmethod
    def known(cls, person_id: str, distance: float) -> "RecognitionResult":
        return cls(Outcome.KNOWN, person_id, distance)

    @classmethod
    def unknown(cls) -> "RecognitionResult":
        return cls(Outcome.UNKNOWN)

    @classmethod
    def no_face(cls) -> "RecognitionResult":
        return cls(Outcome.NO_FACE)


@dataclass(frozen=True)
class DeclaredFace:
    """A face as the camera stream declares it; the hint never reaches the classifier."""

    width_px: int
    height_px: int
    embedding: np.ndarray
    identity_hint: Optional[str] = None


@dataclass(frozen=True)
class FrameDescriptor:
    tick: int
    faces: tuple[DeclaredFace, ...] = ()


@dataclass(frozen=True)
class FaceObservation:
    width_px: int
    height_px: int
    embedding: np.ndarray
    source_tick: int

    @property
    def area_px(self) -> int:
        return self.width_px * self.height_px


@dataclass(frozen=True)
class KnnModel:
    """Immutable nearest-neighbor index over person embeddings."""

    vectors: np.ndarray  # (n, dim), float64, unit rows
    person_ids: tuple[str, ...]
    k: int = DEFAULT_K
    tau: float = DEFAULT_TAU
    built_at: int = 0

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.tau <= 0:
            raise ValueError("tau must be positive")
        if len(self.person_ids) != len(self.vectors):
            raise ValueError("one person id per stored vector")
        self.vectors.setflags(write=False)

    def __len__(self) -> int:
        return len(self.person_ids)


def detect(frame: FrameDescriptor) -> list[FaceObservation]:
    """Faces at least 40px on each side, largest first."""
    kept = [
        FaceObservation(f.width_px, f.height_px, f.embedding, frame.tick)
        for f in frame.faces
        if min(f.width_px, f.height_px) >= MIN_FACE_PX
    ]
    kept.sort(key=lambda o: -o.area_px)
    return kept


def classify(model: KnnModel, embedding: np.ndarray) -> RecognitionResult:
    """Identify one embedding against the model.

    The k nearest entries vote, but only entries within tau participate so
    a Known result always carries an in-threshold distance.  Vote ties fall
    to the smaller mean distance, then the lexicographically first id.
    """
    if len(model) == 0:
        return RecognitionResult.unknown()
    probe = np.asarray(embedding, dtype=np.float64)
    distances = np.linalg.norm(model.vectors - probe, axis=1)
    k = min(model.k, len(distances))
    neighbor_idx = np.argsort(distances, kind="stable")[:k]
    voters = [i for i in neighbor_idx if distances[i] <= model.tau]
    if not voters:
        return RecognitionResult.unknown()

    by_person: dict[str, list[float]] = {}
    for i in voters:
        by_person.setdefault(model.person_ids[i], []).append(float(distances[i]))
    winner = min(
        by_person.items(),
        key=lambda item: (-len(item[1]), sum(item[1]) / len(item[1]), item[0]),
    )
    person_id, dists = winner
    return RecognitionResult.known(person_id, min(dists))


def vote(results: Sequence[RecognitionResult], n: int = VOTE_FRAMES) -> RecognitionResult:
    """Fuse per-frame results: strict majority identity, else Unknown, else NoFace."""
    considered = list(results[:n])
    if not considered:
        return RecognitionResult.no_face()
    counts = Counter(r.person_id for r in considered if r.outcome is Outcome.KNOWN)
    if counts:
        person_id, count = max(counts.items(), key=lambda item: (item[1], item[0]))
        if count * 2 > len(considered):
            distance = min(
                r.distance
                for r in considered
                if r.outcome is Outcome.KNOWN and r.person_id == person_id
            )
            return RecognitionResult.known(person_id, distance)
    if any(r.outcome is not Outcome.NO_FACE for r in considered):
        return RecognitionResult.unknown()
    return RecognitionResult.no_face()


def rebuild_index(
    snapshot: Iterable,
    k: int = DEFAULT_K,
    tau: float = DEFAULT_TAU,
    built_at: int = 0,
    dim: int = EMBEDDING_DIM,
) -> KnnModel:
    """Build a fresh model from a store snapshot (consented people only).

    Entries are ordered by person id, then by insertion order within a
    person, so rebuilds are reproducible.
    """
    vectors: list[np.ndarray] = []
    ids: list[str] = []
    for record in sorted(snapshot, key=lambda r: r.person_id):
        for emb in record.embeddings:
            vectors.append(np.asarray(emb.vector, dtype=np.float64))
            ids.append(record.person_id)
    if vectors:
        matrix = np.vstack(vectors)
    else:
        matrix = np.empty((0, dim), dtype=np.float64)
    return KnnModel(vectors=matrix, person_ids=tuple(ids), k=k, tau=tau, built_at=built_at)


# Embedding providers --------------------------------------------------------

class EmbeddingProvider(Protocol):
    """Maps face bytes or a synthetic identity key to a unit vector."""

    dim: int

    def provide(self, face: Union[bytes, str]) -> np.ndarray: ...


@dataclass
class SyntheticEmbeddingProvider:
    """Deterministic seeded embeddings for simulated identities.

    A key of the form ``"identity#salt"`` yields the identity's centroid
    perturbed within a cone of chord radius ``jitter``; the bare identity
    yields the centroid itself.  Same seed, same key, same vector.
    """

    seed: int = 0
    dim: int = EMBEDDING_DIM
    jitter: float = 0.12
    _centroids: dict[str, np.ndarray] = field(default_factory=dict, repr=False)

    def _rng_for(self, label: str) -> np.random.Generator:
        digest = hashlib.sha256(f"{self.seed}:{label}".encode()).digest()
        return np.random.default_rng(int.from_bytes(digest[:8], "little"))

    def centroid(self, identity: str) -> np.ndarray:
        cached = self._centroids.get(identity)
        if cached is None:
            vec = self._rng_for(f"c:{identity}").standard_normal(self.dim)
            cached = vec / np.linalg.norm(vec)
            self._centroids[identity] = cached
        return cached

    def provide(self, face: Union[bytes, str]) -> np.ndarray:
        key = face.decode("utf-8", "replace") if isinstance(face, bytes) else face
        identity, _, salt = key.partition("#")
        center = self.centroid(identity)
        if not salt:
            return center.copy()
        noise = self._rng_for(f"j:{key}").standard_normal(self.dim)
        noise -= noise.dot(center) * center  # tangent component only
        norm = np.linalg.norm(noise)
        if norm > 0:
            offset = (self.jitter * float(self._rng_for(f"m:{key}").uniform(0.2, 1.0))) / norm
            vec = center + noise * offset
        else:
            vec = center.copy()
        return vec / np.linalg.norm(vec)


PROVIDERS = {
    "synthetic": SyntheticEmbeddingProvider,
}


def make_provider(name: str, **kwargs) -> EmbeddingProvider:
    try:
        factory = PROVIDERS[name]
    except KeyError:
        raise KeyError(f"unknown embedding provider {name!r}") from None
    return factory(**kwargs)
