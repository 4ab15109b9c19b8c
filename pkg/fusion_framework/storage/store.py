"""Central append-only record store fed by phone sync batches.

One JSONL file per ``(device_id, kind)`` named ``<device_id>.<kind>.jsonl``.
Each line holds ``{"body": <canonical record>, "received_at": <ms>}``. The
key index is rebuilt from the files on open.
"""

import json
import logging
import os
import threading
from dataclasses import dataclass
from typing import Any, Dict, Iterable, List, Optional, Tuple

from fusion_framework.core.errors import MalformedRecordError, UnknownKindError
from fusion_framework.core.records import (
    STORABLE_KINDS,
    RecordKind,
    SyncBatch,
    as_kind,
    decode_record,
    record_kind,
    to_dict,
)

logger = logging.getLogger(__name__)

StoreKey = Tuple[str, RecordKind, int]


@dataclass(frozen=True)
class StoredRecord:
    key: StoreKey
    body: Any
    received_at: int


def _storable_kind(kind: Any) -> RecordKind:
    kind = as_kind(kind)
    if kind not in STORABLE_KINDS:
        raise UnknownKindError(f"records of kind '{kind.value}' are not stored")
    return kind


def _line(stored: StoredRecord) -> str:
    return json.dumps(
        {"body": to_dict(stored.body), "received_at": stored.received_at},
        sort_keys=True,
        separators=(",", ":"),
        allow_nan=False,
    )


class StoreSnapshot:
    """Read-only view of the store as of its creation."""

    def __init__(self, files: Dict[Tuple[str, RecordKind], List[StoredRecord]]):
        self._files = {name: tuple(records) for name, records in files.items()}

    def query(self, device_id: str, kind: Any, start_ts: Optional[int] = None, end_ts: Optional[int] = None) -> list:
        """Bodies with ``start_ts <= primary_ts < end_ts`` sorted by primary timestamp."""
        kind = _storable_kind(kind)
        if start_ts is not None and end_ts is not None and end_ts < start_ts:
            raise ValueError(f"invalid range [{start_ts}, {end_ts})")
        records = self._files.get((device_id, kind), ())
        selected = [
            r.body
            for r in records
            if (start_ts is None or r.body.primary_ts >= start_ts)
            and (end_ts is None or r.body.primary_ts < end_ts)
        ]
        selected.sort(key=lambda body: (body.primary_ts, body.key))
        return selected

    def devices(self) -> List[str]:
        return sorted({device for device, _ in self._files})

    def last_timestamp(self, device_id: str, kind: Any) -> Optional[int]:
        kind = _storable_kind(kind)
        records = self._files.get((device_id, kind))
        if not records:
            return None
        return max(r.body.primary_ts for r in records)

    def state(self) -> Dict[str, List[str]]:
        """File name to canonical lines in key order; used to compare whole stores."""
        return {
            f"{device}.{kind.value}.jsonl": [_line(r) for r in sorted(records, key=lambda r: r.body.key)]
            for (device, kind), records in sorted(self._files.items())
        }


class Store:
    """Single writer, any number of snapshot readers."""

    def __init__(self, directory: str):
        self.directory = directory
        self._files: Dict[Tuple[str, RecordKind], List[StoredRecord]] = {}
        self._index: Dict[StoreKey, StoredRecord] = {}
        self._unflushed: Dict[Tuple[str, RecordKind], List[StoredRecord]] = {}
        self._lock = threading.RLock()

    @classmethod
    def open(cls, directory: str) -> "Store":
        store = cls(directory)
        os.makedirs(directory, exist_ok=True)
        store._load()
        return store

    def __enter__(self) -> "Store":
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        self.flush()

    def _file_path(self, device_id: str, kind: RecordKind) -> str:
        return os.path.join(self.directory, f"{device_id}.{kind.value}.jsonl")

    def _load(self) -> None:
        for name in sorted(os.listdir(self.directory)):
            parts = name.split(".")
            if len(parts) < 3 or parts[-1] != "jsonl":
                continue
            kind = _storable_kind(parts[-2])
            path = os.path.join(self.directory, name)
            with open(path, "r") as f:
                for lineno, line in enumerate(f, start=1):
                    if not line.strip():
                        continue
                    try:
                        entry = json.loads(line)
                        body = decode_record(kind, entry["body"])
                        received_at = entry["received_at"]
                    except (json.JSONDecodeError, KeyError, TypeError) as e:
                        raise MalformedRecordError(f"{name}:{lineno}: {e}") from e
                    self._insert(StoredRecord((body.device_id, kind, body.key), body, received_at))
        logger.debug("Opened store %s with %d records", self.directory, len(self._index))

    def _insert(self, stored: StoredRecord) -> None:
        self._index[stored.key] = stored
        self._files.setdefault((stored.key[0], stored.key[1]), []).append(stored)

    def merge_batch(self, batch: SyncBatch) -> Tuple[int, int]:
        """Inserts records with new keys; returns ``(inserted, duplicates)``.

        The whole batch is validated before anything is inserted, so a
        malformed record leaves the store unchanged.
        """
        received_at = batch.covers[1] if batch.covers else 0
        candidates = []
        for record in batch.records:
            kind = record_kind(record)
            if kind not in STORABLE_KINDS:
                raise MalformedRecordError(f"records of kind '{kind.value}' cannot be stored")
            if record.device_id != batch.device_id:
                raise MalformedRecordError(
                    f"record of {record.device_id} in batch of {batch.device_id}"
                )
            record.validate()
            candidates.append(StoredRecord((record.device_id, kind, record.key), record, received_at))

        inserted = duplicates = 0
        with self._lock:
            seen = set()
            for stored in candidates:
                if stored.key in self._index or stored.key in seen:
                    duplicates += 1
                    continue
                seen.add(stored.key)
                self._insert(stored)
                self._unflushed.setdefault((stored.key[0], stored.key[1]), []).append(stored)
                inserted += 1
        logger.info("Merged batch of %s: %d inserted, %d duplicates", batch.device_id, inserted, duplicates)
        return inserted, duplicates

    def flush(self) -> None:
        with self._lock:
            for (device_id, kind), records in sorted(self._unflushed.items()):
                with open(self._file_path(device_id, kind), "a") as f:
                    for stored in records:
                        f.write(_line(stored))
                        f.write("\n")
            self._unflushed.clear()

    def snapshot(self) -> StoreSnapshot:
        with self._lock:
            return StoreSnapshot(self._files)

    def query(self, device_id: str, kind: Any, start_ts: Optional[int] = None, end_ts: Optional[int] = None) -> list:
        return self.snapshot().query(device_id, kind, start_ts, end_ts)

    def last_timestamp(self, device_id: str, kind: Any) -> Optional[int]:
        return self.snapshot().last_timestamp(device_id, kind)

    def devices(self) -> List[str]:
        return self.snapshot().devices()

    def state(self) -> Dict[str, List[str]]:
        return self.snapshot().state()

    def __len__(self) -> int:
        return len(self._index)

    def merge_batches(self, batches: Iterable[SyncBatch]) -> Tuple[int, int]:
        inserted = duplicates = 0
        for batch in batches:
            i, d = self.merge_batch(batch)
            inserted += i
            duplicates += d
        return inserted, duplicates
