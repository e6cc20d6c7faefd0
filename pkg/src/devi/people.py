"""File-backed dynamic database of people the robot knows.

One record per line in ``people.db``: tab-separated person_id, name,
created_at, last_seen, recognition_count, consented, embedding count, then
each embedding as hex-encoded little-endian float32.  Only consented people
ever touch disk; a visitor who declines consent exists for the session only.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Optional

import numpy as np

MAX_EMBEDDINGS = 10


class PersonStoreError(Exception):
    pass


class EmptyName(PersonStoreError):
    pass


class DuplicateActiveRegistration(PersonStoreError):
    """The same name was registered twice within one store session."""


class UnknownPerson(PersonStoreError):
    pass


class NotConsented(PersonStoreError):
    pass


@dataclass(frozen=True)
class Embedding:
    vector: np.ndarray
    added_at: int  # ms of simulated epoch; informational, not persisted

    def __post_init__(self) -> None:
        self.vector.setflags(write=False)


@dataclass(frozen=True)
class PersonRecord:
    person_id: str
    name: str
    created_at: int
    last_seen: int
    recognition_count: int
    consented: bool
    embeddings: tuple[Embedding, ...] = ()

    def __post_init__(self) -> None:
        if len(self.embeddings) > MAX_EMBEDDINGS:
            raise ValueError(f"more than {MAX_EMBEDDINGS} embeddings")
        if not self.consented and self.embeddings:
            raise ValueError("non-consenting records must not hold embeddings")
        if self.recognition_count < 0:
            raise ValueError("recognition count must be non-negative")


def _default_id_factory() -> str:
    return os.urandom(8).hex()


def _serialize(record: PersonRecord) -> str:
    fields = [
        record.person_id,
        record.name,
        str(record.created_at),
        str(record.last_seen),
        str(record.recognition_count),
        "1" if record.consented else "0",
        str(len(record.embeddings)),
    ]
    for emb in record.embeddings:
        fields.append(np.asarray(emb.vector, dtype="<f4").tobytes().hex())
    return "\t".join(fields)


def _deserialize(line: str, lineno: int) -> PersonRecord:
    parts = line.rstrip("\n").split("\t")
    if len(parts) < 7:
        raise PersonStoreError(f"line {lineno}: expected at least 7 fields, got {len(parts)}")
    person_id, name, created_at, last_seen, count, consented, n_emb = parts[:7]
    n = int(n_emb)
    if len(parts) != 7 + n:
        raise PersonStoreError(f"line {lineno}: expected {n} embeddings, got {len(parts) - 7}")
    created = int(created_at)
    embeddings = tuple(
        Embedding(np.frombuffer(bytes.fromhex(blob), dtype="<f4").astype(np.float64), created)
        for blob in parts[7:]
    )
    return PersonRecord(
        person_id=person_id,
        name=name,
        created_at=created,
        last_seen=int(last_seen),
        recognition_count=int(count),
        consented=consented == "1",
        embeddings=embeddings,
    )


@dataclass
class PersonStore:
    """Single-writer store; every mutation is persisted atomically.

    ``path=None`` keeps everything in memory (ephemeral scenario runs).
    """

    path: Optional[str] = None
    id_factory: Callable[[], str] = field(default=_default_id_factory)
    _records: dict[str, PersonRecord] = field(default_factory=dict, repr=False)
    _session_names: set[str] = field(default_factory=set, repr=False)

    def __post_init__(self) -> None:
        if self.path and os.path.exists(self.path):
            self._load()

    def _load(self) -> None:
        assert self.path is not None
        with open(self.path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                record = _deserialize(line, lineno)
                self._records[record.person_id] = record

    def _persist(self) -> None:
        if not self.path:
            return
        durable = [r for r in self._records.values() if r.consented]
        durable.sort(key=lambda r: (r.created_at, r.person_id))
        tmp = f"{self.path}.tmp"
        with open(tmp, "w", encoding="utf-8") as fh:
            for record in durable:
                fh.write(_serialize(record) + "\n")
        os.replace(tmp, self.path)

    # Operations -------------------------------------------------------------

    def register(
        self,
        name: str,
        embeddings: Iterable[np.ndarray] = (),
        consented: bool = False,
        now: int = 0,
    ) -> PersonRecord:
        """Create a person; without consent nothing is persisted or retained as vectors."""
        cleaned = " ".join(name.split())
        if not cleaned:
            raise EmptyName("name is empty after trimming")
        key = cleaned.casefold()
        if key in self._session_names:
            raise DuplicateActiveRegistration(f"{cleaned!r} already registered this session")

        person_id = self.id_factory()
        while person_id in self._records:
            person_id = self.id_factory()
        stored = (
            tuple(
                Embedding(np.asarray(v, dtype=np.float64).copy(), now)
                for v in list(embeddings)[:MAX_EMBEDDINGS]
            )
            if consented
            else ()
        )
        record = PersonRecord(
            person_id=person_id,
            name=cleaned,
            created_at=now,
            last_seen=now,
            recognition_count=0,
            consented=consented,
            embeddings=stored,
        )
        self._records[person_id] = record
        self._session_names.add(key)
        if consented:
            self._persist()
        return record

    def add_embedding(self, person_id: str, vector: np.ndarray, now: int = 0) -> PersonRecord:
        """Append one face vector; beyond the cap the oldest is evicted."""
        record = self._get(person_id)
        if not record.consented:
            raise NotConsented(f"{record.name!r} has not consented to face storage")
        embeddings = record.embeddings + (Embedding(np.asarray(vector, dtype=np.float64).copy(), now),)
        if len(embeddings) > MAX_EMBEDDINGS:
            embeddings = embeddings[-MAX_EMBEDDINGS:]
        record = replace(record, embeddings=embeddings)
        self._records[person_id] = record
        self._persist()
        return record

    def record_recognition(self, person_id: str, now: int = 0) -> PersonRecord:
        record = self._get(person_id)
        record = replace(
            record,
            recognition_count=record.recognition_count + 1,
            last_seen=max(record.last_seen, now),
        )
        self._records[person_id] = record
        if record.consented:
            self._persist()
        return record

    def purge(self, person_id: str) -> None:
        self._get(person_id)
        del self._records[person_id]
        self._persist()

    def get(self, person_id: str) -> PersonRecord:
        return self._get(person_id)

    def snapshot(self) -> tuple[PersonRecord, ...]:
        """Point-in-time view of consented people, for index rebuilds."""
        return tuple(
            sorted(
                (r for r in self._records.values() if r.consented),
                key=lambda r: (r.created_at, r.person_id),
            )
        )

    def all_records(self) -> tuple[PersonRecord, ...]:
        return tuple(
            sorted(self._records.values(), key=lambda r: (r.created_at, r.person_id))
        )

    def __len__(self) -> int:
        return len(self._records)

    def _get(self, person_id: str) -> PersonRecord:
        try:
            return self._records[person_id]
        except KeyError:
            raise UnknownPerson(person_id) from None
