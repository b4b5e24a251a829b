"""Append-only experiment log: run records, per-epoch metrics, best tracking.

The store is a directory of JSON-lines files — greppable, diff-able and
trivially portable, which is what reproducibility actually needs:

    <dir>/runs.jsonl    one RunRecord per line
    <dir>/epochs.jsonl  one EpochEntry per line
    <dir>/.lock         writer lock

A single writer is enforced through the lock file; readers may open the
store read-only at any time and see a prefix-consistent view. Timestamps
are RFC 3339 UTC. A partial trailing line (crash mid-append) is truncated
on open and noted.
"""

from __future__ import annotations

import hashlib
import json
import os
import secrets
import threading
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Iterable

from filelock import FileLock, Timeout

from .errors import DataError, StoreError, StoreLockedError
from .ingest import DatasetId

__all__ = [
    "RunRecord",
    "EpochEntry",
    "BestTracker",
    "RunStore",
    "open_store",
    "record_epoch",
    "query",
    "replay_best_tracker",
    "new_ulid",
    "canonical_config",
    "config_hash",
]

_CROCKFORD = "0123456789ABCDEFGHJKMNPQRSTVWXYZ"
_ulid_lock = threading.Lock()
_ulid_last: tuple[int, int] | None = None


def new_ulid(timestamp_ms: int | None = None) -> str:
    """A 26-char ULID: sortable 48-bit ms timestamp + 80 random bits.

    Monotonic within this process: ids generated in the same millisecond
    increment the random part, so sort order matches creation order.
    """
    global _ulid_last
    with _ulid_lock:
        ts = int(datetime.now(timezone.utc).timestamp() * 1000) if timestamp_ms is None else timestamp_ms
        rand = secrets.randbits(80)
        if _ulid_last is not None and ts <= _ulid_last[0]:
            ts = _ulid_last[0]
            rand = (_ulid_last[1] + 1) & ((1 << 80) - 1)
        _ulid_last = (ts, rand)
        value = (ts << 80) | rand
        chars = []
        for _ in range(26):
            chars.append(_CROCKFORD[value & 0x1F])
            value >>= 5
        return "".join(reversed(chars))


def canonical_config(config: dict[str, Any]) -> str:
    """Canonical JSON: sorted keys, no insignificant whitespace."""
    return json.dumps(config, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def config_hash(config: dict[str, Any]) -> str:
    return hashlib.sha256(canonical_config(config).encode("utf-8")).hexdigest()


def _utc_now() -> str:
    return datetime.now(timezone.utc).isoformat()


@dataclass(frozen=True)
class RunRecord:
    """One experiment run: id, timestamp, the exact config, its hash."""

    run_id: str
    created_at: str
    config_snapshot: dict[str, Any]
    config_hash: str
    dataset: DatasetId
    notes: str = ""

    def to_dict(self) -> dict:
        return {
            "run_id": self.run_id,
            "created_at": self.created_at,
            "config_snapshot": self.config_snapshot,
            "config_hash": self.config_hash,
            "dataset": self.dataset.value,
            "notes": self.notes,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RunRecord":
        return cls(
            run_id=d["run_id"],
            created_at=d["created_at"],
            config_snapshot=d["config_snapshot"],
            config_hash=d["config_hash"],
            dataset=DatasetId(d["dataset"]),
            notes=d.get("notes", ""),
        )


@dataclass(frozen=True)
class EpochEntry:
    """Validation metrics for one training epoch of a run."""

    run_id: str
    epoch: int
    val_mae: float
    val_mse: float
    wall_time_s: float = 0.0
    train_loss: float | None = None

    def __post_init__(self) -> None:
        if self.epoch < 0:
            raise DataError(f"epoch must be >= 0, got {self.epoch}")
        if self.val_mae < 0 or self.val_mse < 0:
            raise DataError("val_mae and val_mse must be >= 0")

    def to_dict(self) -> dict:
        return {
            "run_id": self.run_id,
            "epoch": self.epoch,
            "train_loss": self.train_loss,
            "val_mae": self.val_mae,
            "val_mse": self.val_mse,
            "wall_time_s": self.wall_time_s,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EpochEntry":
        return cls(
            run_id=d["run_id"],
            epoch=d["epoch"],
            val_mae=d["val_mae"],
            val_mse=d["val_mse"],
            wall_time_s=d.get("wall_time_s", 0.0),
            train_loss=d.get("train_loss"),
        )


@dataclass(frozen=True)
class BestTracker:
    """Best (minimum) val_mae seen so far for a run; ties keep the earliest epoch."""

    run_id: str
    best_epoch: int
    best_mae: float
    best_mse_at_best_mae: float


def replay_best_tracker(entries: Iterable[EpochEntry]) -> BestTracker | None:
    """Reconstruct the tracker a run would have after the given entries."""
    best: BestTracker | None = None
    for e in entries:
        if best is None or e.val_mae < best.best_mae:
            best = BestTracker(e.run_id, e.epoch, e.val_mae, e.val_mse)
    return best


@dataclass
class RunSummary:
    run: RunRecord
    best: BestTracker | None


def _read_jsonl(path: Path, repair: bool) -> tuple[list[dict], str | None]:
    """Read a JSON-lines file, truncating a partial trailing line if asked."""
    if not path.exists():
        return [], None
    raw = path.read_bytes()
    if not raw:
        return [], None
    records: list[dict] = []
    note: str | None = None
    lines = raw.split(b"\n")
    good_bytes = 0
    for i, line in enumerate(lines):
        if not line.strip():
            good_bytes += len(line) + 1
            continue
        try:
            records.append(json.loads(line))
            good_bytes += len(line) + 1
        except json.JSONDecodeError:
            if i != len(lines) - 1:
                # mid-file corruption is not a recoverable crash artifact
                raise StoreError(f"{path}: corrupt record on line {i + 1}")
            note = f"{path.name}: truncated partial trailing record ({len(line)} bytes)"
            if repair:
                with open(path, "r+b") as fh:
                    fh.truncate(min(good_bytes, len(raw)))
            break
    return records, note


class RunStore:
    """Handle to an experiment log directory. Use :func:`open_store`."""

    def __init__(self, directory: str | Path, *, read_only: bool = False):
        self.directory = Path(directory)
        self.read_only = read_only
        self.recovery_notes: list[str] = []
        self._runs_path = self.directory / "runs.jsonl"
        self._epochs_path = self.directory / "epochs.jsonl"
        self._lock: FileLock | None = None

        self.directory.mkdir(parents=True, exist_ok=True)
        if not read_only:
            lock = FileLock(str(self.directory / ".lock"))
            try:
                lock.acquire(timeout=0)
            except Timeout:
                raise StoreLockedError(
                    f"store {self.directory} is locked by another writer"
                ) from None
            self._lock = lock

        self._runs: dict[str, RunRecord] = {}
        self._last_epoch: dict[str, int] = {}
        self._best: dict[str, BestTracker] = {}
        self._replay()

    def _replay(self) -> None:
        repair = not self.read_only
        run_rows, note = _read_jsonl(self._runs_path, repair)
        if note:
            self.recovery_notes.append(note)
        for row in run_rows:
            rec = RunRecord.from_dict(row)
            self._runs[rec.run_id] = rec
        epoch_rows, note = _read_jsonl(self._epochs_path, repair)
        if note:
            self.recovery_notes.append(note)
        for row in epoch_rows:
            entry = EpochEntry.from_dict(row)
            self._last_epoch[entry.run_id] = entry.epoch
            best = self._best.get(entry.run_id)
            if best is None or entry.val_mae < best.best_mae:
                self._best[entry.run_id] = BestTracker(
                    entry.run_id, entry.epoch, entry.val_mae, entry.val_mse
                )

    def _append(self, path: Path, record: dict) -> None:
        if self.read_only:
            raise StoreError("store opened read-only")
        line = json.dumps(record, ensure_ascii=False) + "\n"
        with open(path, "a", encoding="utf-8") as fh:
            fh.write(line)
            fh.flush()
            os.fsync(fh.fileno())

    def begin_run(
        self,
        dataset: DatasetId,
        config: dict[str, Any],
        notes: str = "",
    ) -> RunRecord:
        """Register a new run with a snapshot of every parameter in effect."""
        record = RunRecord(
            run_id=new_ulid(),
            created_at=_utc_now(),
            config_snapshot=json.loads(canonical_config(config)),
            config_hash=config_hash(config),
            dataset=dataset,
            notes=notes,
        )
        self._append(self._runs_path, record.to_dict())
        self._runs[record.run_id] = record
        return record

    def record_epoch(self, entry: EpochEntry) -> BestTracker:
        """Durably append an epoch entry and return the updated tracker.

        Epochs must be strictly increasing per run; the tracker advances
        only on a strict val_mae improvement, so ties keep the earliest
        epoch.
        """
        if entry.run_id not in self._runs:
            raise DataError(f"unknown run_id {entry.run_id!r}")
        last = self._last_epoch.get(entry.run_id)
        if last is not None and entry.epoch <= last:
            raise DataError(
                f"epoch {entry.epoch} not after last recorded epoch {last} "
                f"for run {entry.run_id}"
            )
        self._append(self._epochs_path, entry.to_dict())
        self._last_epoch[entry.run_id] = entry.epoch
        best = self._best.get(entry.run_id)
        if best is None or entry.val_mae < best.best_mae:
            best = BestTracker(entry.run_id, entry.epoch, entry.val_mae, entry.val_mse)
            self._best[entry.run_id] = best
        return best

    def best_tracker(self, run_id: str) -> BestTracker | None:
        return self._best.get(run_id)

    def epochs(self, run_id: str | None = None) -> list[EpochEntry]:
        """All epoch entries (optionally one run's), in append order."""
        rows, _ = _read_jsonl(self._epochs_path, repair=False)
        entries = [EpochEntry.from_dict(r) for r in rows]
        if run_id is not None:
            entries = [e for e in entries if e.run_id == run_id]
        return entries

    def query(
        self,
        dataset: DatasetId | None = None,
        run_id: str | None = None,
        since: str | datetime | None = None,
    ) -> list[RunSummary]:
        """Filtered runs with their trackers, sorted by created_at."""
        if isinstance(since, datetime):
            since = since.astimezone(timezone.utc).isoformat()
        out = []
        for rec in self._runs.values():
            if dataset is not None and rec.dataset is not dataset:
                continue
            if run_id is not None and rec.run_id != run_id:
                continue
            if since is not None and rec.created_at < since:
                continue
            out.append(RunSummary(rec, self._best.get(rec.run_id)))
        out.sort(key=lambda s: (s.run.created_at, s.run.run_id))
        return out

    def close(self) -> None:
        if self._lock is not None:
            self._lock.release()
            self._lock = None

    def __enter__(self) -> "RunStore":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def open_store(path: str | Path, *, read_only: bool = False) -> RunStore:
    """Create or open an experiment store directory.

    Raises StoreLockedError when another writer holds the lock (readers
    pass read_only=True and never contend).
    """
    return RunStore(path, read_only=read_only)


def record_epoch(store: RunStore, entry: EpochEntry) -> BestTracker:
    return store.record_epoch(entry)


def query(
    store: RunStore,
    dataset: DatasetId | None = None,
    run_id: str | None = None,
    since: str | datetime | None = None,
) -> list[RunSummary]:
    return store.query(dataset=dataset, run_id=run_id, since=since)
