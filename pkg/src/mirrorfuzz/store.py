"""Append-only persistence with rebuild-on-load indexes.

One JSONL log per collection under a root directory; reloading the logs
reproduces identical in-memory indexes. Writes are line-atomic: a record is
a single newline-terminated JSON object, so a torn tail (no newline, or a
half-written object) is detected and dropped on load. Keyed writes are
idempotent - replaying a log or re-running a stage never duplicates records.
Corpus sizes stay small enough (~10^5 records) that flat logs beat a
database here.
"""

from __future__ import annotations

import json
import logging
import threading
from pathlib import Path

from .executor import CrashReport
from .ingest import IssueRecord
from .matcher import SimilarPair
from .recognizer import BugRecord
from .synthesizer import TestCase

logger = logging.getLogger(__name__)

COLLECTIONS = ("issues", "bugs", "pairs", "pool", "crashes")

_DECODERS = {
    "issues": IssueRecord.from_dict,
    "bugs": BugRecord.from_dict,
    "pairs": SimilarPair.from_dict,
    "pool": TestCase.from_dict,
    "crashes": CrashReport.from_dict,
}


def _key_of(collection: str, record) -> tuple:
    if collection == "issues":
        return (record.framework, record.issue_id)
    if collection == "bugs":
        return (record.framework, record.buggy_api, record.issue_id)
    if collection == "pairs":
        return (record.source, record.target, record.kind)
    if collection == "pool":
        return (record.case_id,)
    if collection == "crashes":
        return (record.test_case, record.outcome, record.dedup_key)
    raise KeyError(collection)


class Store:
    """Directory of per-collection append logs plus in-memory indexes.

    root=None gives a purely in-memory store (same interface, no logs); the
    point tools use it to satisfy Algorithm-2-style queries over files they
    load themselves.
    """

    def __init__(self, root: str | Path | None):
        self.root = Path(root) if root is not None else None
        if self.root is not None:
            self.root.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()
        self._records: dict[str, list] = {name: [] for name in COLLECTIONS}
        self._keys: dict[str, set[tuple]] = {name: set() for name in COLLECTIONS}
        if self.root is not None:
            self._load()
            for collection in COLLECTIONS:
                self._path(collection).touch(exist_ok=True)

    def _path(self, collection: str) -> Path:
        return self.root / f"{collection}.jsonl"

    def _load(self) -> None:
        for collection in COLLECTIONS:
            path = self._path(collection)
            if not path.exists():
                continue
            raw = path.read_text(encoding="utf-8")
            if raw and not raw.endswith("\n"):
                # torn final record (append died mid-line): drop its bytes so
                # later appends start on a fresh line
                logger.warning("%s: dropping torn tail record", path)
                raw = raw[: raw.rfind("\n") + 1]
                with open(path, "w", encoding="utf-8") as fh:
                    fh.write(raw)
            for i, line in enumerate(raw.splitlines()):
                if not line.strip():
                    continue
                try:
                    record = _DECODERS[collection](json.loads(line))
                except (json.JSONDecodeError, KeyError, TypeError, ValueError):
                    logger.warning("%s: skipping corrupt record at line %d", path, i + 1)
                    continue
                self._insert(collection, record, persist=False)

    def _insert(self, collection: str, record, persist: bool) -> bool:
        key = _key_of(collection, record)
        if key in self._keys[collection]:
            return False
        self._keys[collection].add(key)
        self._records[collection].append(record)
        if persist and self.root is not None:
            with open(self._path(collection), "a", encoding="utf-8") as fh:
                fh.write(json.dumps(record.to_dict(), sort_keys=True) + "\n")
                fh.flush()
        return True

    def _add(self, collection: str, records) -> int:
        inserted = 0
        with self._lock:
            for record in records:
                if self._insert(collection, record, persist=True):
                    inserted += 1
        return inserted

    # -- writers -------------------------------------------------------------

    def add_issues(self, records: list[IssueRecord]) -> int:
        return self._add("issues", records)

    def update_bugs(self, record: BugRecord) -> bool:
        """Idempotent on (framework, api, issue id / crash dedup key)."""
        return self._add("bugs", [record]) == 1

    def add_bugs(self, records: list[BugRecord]) -> int:
        return self._add("bugs", records)

    def add_pairs(self, records: list[SimilarPair]) -> int:
        return self._add("pairs", records)

    def add_pool(self, records: list[TestCase]) -> int:
        return self._add("pool", records)

    def add_crash(self, record: CrashReport) -> bool:
        return self._add("crashes", [record]) == 1

    # -- readers -------------------------------------------------------------

    def all(self, collection: str) -> list:
        return list(self._records[collection])

    def query_similar(self, source: str, kind: str) -> list[SimilarPair]:
        """Pairs for one source API and kind, best score first."""
        pairs = [p for p in self._records["pairs"] if p.source == source and p.kind == kind]
        return sorted(pairs, key=lambda p: (-p.combined_score, p.target_name, p.target))

    def query_bugs(self, source: str, sim_api: str) -> list[BugRecord]:
        """Bug records of a similar API, verified evidence first.

        `source` (the API under test) is accepted for interface symmetry with
        the similarity queries; records are keyed by the similar API alone.
        """
        framework, _, full_name = sim_api.partition("::")
        records = [
            b
            for b in self._records["bugs"]
            if b.buggy_api == full_name and (not framework or b.framework == framework)
        ]
        return sorted(records, key=lambda b: not b.verified)

    def query_bugs_by_api(self, framework: str, full_name: str) -> list[BugRecord]:
        return self.query_bugs("", f"{framework}::{full_name}")
