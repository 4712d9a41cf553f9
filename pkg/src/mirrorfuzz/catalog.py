"""API catalogs: normalized per-framework API metadata.

A catalog row holds the three metadata facets the matcher compares (name,
parameters, description). Catalogs load from JSON/JSONL dumps produced by a
docs scraper or from fixture files; scraping itself is adapter-per-framework
and out of this module's hands.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

logger = logging.getLogger(__name__)


class CatalogError(RuntimeError):
    """Raised when a catalog source cannot be read at all."""


@dataclass(frozen=True)
class ParamRecord:
    name: str
    description: str = ""
    position: int = 0


@dataclass(frozen=True)
class ApiRecord:
    framework: str
    full_name: str
    params: tuple[ParamRecord, ...] = ()
    description: str = ""
    doc_url: str = ""

    @property
    def api_id(self) -> str:
        """Globally unique id: the framework qualifies the dotted name."""
        return f"{self.framework}::{self.full_name}"

    @property
    def param_names(self) -> tuple[str, ...]:
        return tuple(p.name for p in self.params)

    def to_dict(self) -> dict:
        return {
            "framework": self.framework,
            "full_name": self.full_name,
            "params": [
                {"name": p.name, "description": p.description, "position": p.position}
                for p in self.params
            ],
            "description": self.description,
            "doc_url": self.doc_url,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ApiRecord":
        params = tuple(
            ParamRecord(
                name=p["name"],
                description=p.get("description", ""),
                position=p.get("position", i),
            )
            for i, p in enumerate(data.get("params", []))
        )
        return cls(
            framework=data["framework"],
            full_name=data["full_name"],
            params=params,
            description=data.get("description", ""),
            doc_url=data.get("doc_url", "") or "",
        )


def metadata_text(api: ApiRecord, facet: str) -> str:
    """Serialize one metadata facet (or all of them) to comparable text.

    The "all" serialization keeps a stable section order so embeddings of the
    same record are reproducible.
    """
    if facet == "name":
        return api.full_name
    if facet == "param":
        ordered = sorted(api.params, key=lambda p: p.position)
        return "; ".join(
            f"{p.name}: {p.description}" if p.description else p.name for p in ordered
        )
    if facet == "desc":
        return api.description
    if facet == "all":
        return (
            f"NAME: {metadata_text(api, 'name')}\n"
            f"PARAMS: {metadata_text(api, 'param')}\n"
            f"DESC: {metadata_text(api, 'desc')}"
        )
    raise ValueError(f"unknown metadata facet {facet!r}")


def _iter_source_files(source: Path):
    if source.is_dir():
        yield from sorted(p for p in source.iterdir() if p.suffix in (".json", ".jsonl"))
    else:
        yield source


def _parse_entries(path: Path) -> list[dict]:
    text = path.read_text(encoding="utf-8")
    if path.suffix == ".jsonl":
        return [json.loads(line) for line in text.splitlines() if line.strip()]
    data = json.loads(text)
    if isinstance(data, dict):
        # reference scraper dump: {"framework": ..., "apis": [...]}
        framework = data.get("framework", "")
        entries = data.get("apis", [])
        for entry in entries:
            entry.setdefault("framework", framework)
        return entries
    return data


def load_catalog(source: str | Path, framework: str = "") -> list[ApiRecord]:
    """Load and normalize a catalog from a dump file or fixture directory.

    Duplicate full_names collapse to the entry with the longest description.
    Entries without a full_name are skipped with a warning. Output is sorted
    by full_name so downstream runs are deterministic.
    """
    source = Path(source)
    if not source.exists():
        raise CatalogError(f"catalog source does not exist: {source}")

    by_name: dict[str, ApiRecord] = {}
    skipped = 0
    for path in _iter_source_files(source):
        try:
            entries = _parse_entries(path)
        except (OSError, json.JSONDecodeError) as exc:
            raise CatalogError(f"unreadable catalog source {path}: {exc}") from exc
        for entry in entries:
            if not entry.get("full_name"):
                skipped += 1
                continue
            if framework:
                entry = {**entry, "framework": framework}
            elif not entry.get("framework"):
                skipped += 1
                continue
            record = ApiRecord.from_dict(entry)
            previous = by_name.get(record.full_name)
            if previous is None or len(record.description) > len(previous.description):
                by_name[record.full_name] = record
    if skipped:
        logger.warning("skipped %d catalog entries without full_name/framework", skipped)
    return sorted(by_name.values(), key=lambda r: r.full_name)


def save_catalog(records: list[ApiRecord], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record.to_dict(), sort_keys=True) + "\n")


def levenshtein(a: str, b: str) -> int:
    """Unit-cost edit distance, two-row dynamic program."""
    if a == b:
        return 0
    if not a:
        return len(b)
    if not b:
        return len(a)
    previous = list(range(len(b) + 1))
    for i, ca in enumerate(a, 1):
        current = [i]
        for j, cb in enumerate(b, 1):
            cost = 0 if ca == cb else 1
            current.append(min(current[-1] + 1, previous[j] + 1, previous[j - 1] + cost))
        previous = current
    return previous[-1]


def distance_cap(partial: str) -> float:
    """Maximum acceptable completion distance for a partial API name."""
    return 0.5 * len(partial) + 6


def complete_api_name(partial: str, catalog: list[ApiRecord]) -> tuple[str, int]:
    """Resolve a possibly truncated API name to the nearest catalog full_name.

    Ties prefer a candidate that ends with the partial (truncated calls are
    usually suffixes of their true name), then the lexicographically smaller
    name. Always returns some name; callers apply distance_cap().
    """
    if not catalog:
        raise ValueError("catalog must be non-empty")
    best_name = ""
    best_key = None
    for record in catalog:
        name = record.full_name
        dist = levenshtein(partial, name)
        key = (dist, not name.endswith(partial), name)
        if best_key is None or key < best_key:
            best_key = key
            best_name = name
    return best_name, best_key[0]
