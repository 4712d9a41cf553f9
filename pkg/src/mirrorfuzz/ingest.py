"""Issue ingestion: fetch tracker issues, keep the bug-related ones, pull code.

Bug labels on the tracker are deliberately ignored (they are unreliable for
the bug classes we chase); retention is decided purely by a case-insensitive
keyword phrase match over title and body. Code is taken only from fenced
blocks; prose never becomes a snippet.
"""

from __future__ import annotations

import json
import logging
import os
import re
import time
from dataclasses import dataclass, replace
from pathlib import Path
from urllib.parse import urlparse

import requests

logger = logging.getLogger(__name__)

TRACKER_API = "https://api.github.com"
TOKEN_ENV = "MF_TRACKER_TOKEN"

_FENCE_OPEN = re.compile(r"^\s*```(.*)$")
_FENCE_CLOSE = re.compile(r"^\s*```\s*$")
_URL = re.compile(r"https?://[^\s<>\"')\]]+")


class FetchError(RuntimeError):
    """Issue download failed; `retryable` hints whether another run may work."""

    def __init__(self, message: str, retryable: bool = False):
        super().__init__(message)
        self.retryable = retryable


@dataclass(frozen=True)
class SourceSnippet:
    text: str
    origin: str = "fenced_block"  # or "linked_resource"
    parses: bool = False
    tag: str = ""  # fence info-string; non-code tags get weeded out by the compile filter

    def to_dict(self) -> dict:
        return {"text": self.text, "origin": self.origin, "parses": self.parses, "tag": self.tag}

    @classmethod
    def from_dict(cls, data: dict) -> "SourceSnippet":
        return cls(
            text=data["text"],
            origin=data.get("origin", "fenced_block"),
            parses=data.get("parses", False),
            tag=data.get("tag", ""),
        )


@dataclass(frozen=True)
class IssueRecord:
    issue_id: str
    framework: str
    title: str
    body: str
    snippets: tuple[SourceSnippet, ...] = ()
    matched_keywords: tuple[str, ...] = ()
    url: str = ""

    def to_dict(self) -> dict:
        return {
            "issue_id": self.issue_id,
            "framework": self.framework,
            "title": self.title,
            "body": self.body,
            "snippets": [s.to_dict() for s in self.snippets],
            "matched_keywords": list(self.matched_keywords),
            "url": self.url,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "IssueRecord":
        return cls(
            issue_id=str(data["issue_id"]),
            framework=data.get("framework", ""),
            title=data.get("title", ""),
            body=data.get("body", ""),
            snippets=tuple(SourceSnippet.from_dict(s) for s in data.get("snippets", [])),
            matched_keywords=tuple(data.get("matched_keywords", [])),
            url=data.get("url", ""),
        )


@dataclass(frozen=True)
class KeywordConfig:
    """Ordered, case-folded-deduplicated list of filter phrases."""

    keywords: tuple[str, ...]

    def __post_init__(self):
        if not self.keywords:
            raise ValueError("keyword list must be non-empty")
        seen: set[str] = set()
        unique = []
        for phrase in self.keywords:
            folded = phrase.casefold()
            if folded not in seen:
                seen.add(folded)
                unique.append(phrase)
        object.__setattr__(self, "keywords", tuple(unique))

    @classmethod
    def from_list(cls, phrases: list[str]) -> "KeywordConfig":
        return cls(keywords=tuple(phrases))


def _load_fixture_docs(fixtures: Path) -> list[dict]:
    docs: list[dict] = []
    for path in sorted(fixtures.glob("*.json")):
        data = json.loads(path.read_text(encoding="utf-8"))
        if isinstance(data, list):
            docs.extend(data)
        else:
            docs.append(data)
    return docs


def fetch_issues(
    repo: str,
    token: str | None = None,
    page_limit: int = 10,
    fixtures: str | Path | None = None,
    session=None,
    per_page: int = 100,
    retries: int = 3,
    wait_on_rate_limit: bool = True,
) -> list[dict]:
    """Fetch raw issue documents for owner/name, or replay a fixture directory.

    Live mode walks GET /repos/{owner}/{repo}/issues?state=all page by page,
    honours rate-limit headers (sleep until reset, or abort when
    wait_on_rate_limit is off) and retries transient network failures a
    bounded number of times. Fixture mode reads *.json files in name order
    and never touches the network.
    """
    if page_limit <= 0:
        return []
    if fixtures is not None:
        return _load_fixture_docs(Path(fixtures))

    session = session or requests.Session()
    token = token or os.environ.get(TOKEN_ENV)
    headers = {"Accept": "application/vnd.github+json"}
    if token:
        headers["Authorization"] = f"token {token}"

    docs: list[dict] = []
    malformed = 0
    for page in range(1, page_limit + 1):
        url = f"{TRACKER_API}/repos/{repo}/issues"
        params = {"state": "all", "per_page": per_page, "page": page}
        response = _get_with_retries(session, url, headers, params, retries)

        if response.status_code == 403 and response.headers.get("X-RateLimit-Remaining") == "0":
            reset = int(response.headers.get("X-RateLimit-Reset", "0"))
            wait = max(0.0, reset - time.time()) + 1.0
            if not wait_on_rate_limit:
                raise FetchError(f"rate limited; reset in {wait:.0f}s", retryable=True)
            logger.warning("rate limited, sleeping %.0fs", wait)
            time.sleep(wait)
            response = _get_with_retries(session, url, headers, params, retries)
        if response.status_code != 200:
            raise FetchError(
                f"tracker returned HTTP {response.status_code} for {url}",
                retryable=response.status_code >= 500,
            )

        batch = response.json()
        if not batch:
            break
        for doc in batch:
            if isinstance(doc, dict):
                docs.append(doc)
            else:
                malformed += 1
        if len(batch) < per_page:
            break
    if malformed:
        logger.warning("skipped %d malformed issue documents", malformed)
    return docs


def _get_with_retries(session, url, headers, params, retries):
    last_exc = None
    for attempt in range(max(1, retries)):
        try:
            return session.get(url, headers=headers, params=params, timeout=30)
        except requests.RequestException as exc:
            last_exc = exc
            time.sleep(min(2.0**attempt, 10.0))
    raise FetchError(f"network failure fetching {url}: {last_exc}", retryable=True)


def match_keywords(title: str, body: str, cfg: KeywordConfig) -> tuple[str, ...]:
    """Every configured phrase found (case-insensitive substring) in title or body."""
    haystack = f"{title}\n{body}".casefold()
    return tuple(kw for kw in cfg.keywords if kw.casefold() in haystack)


def filter_bug_issues(raw: list, cfg: KeywordConfig, framework: str = "") -> list[IssueRecord]:
    """Keep issues whose title or body hits at least one keyword.

    Accepts raw tracker documents or already-built IssueRecords (re-filtering
    is stable: keywords are recomputed from the same title/body). Input order
    is preserved.
    """
    kept: list[IssueRecord] = []
    for doc in raw:
        if isinstance(doc, IssueRecord):
            record = doc
        else:
            record = IssueRecord(
                issue_id=str(doc.get("number", doc.get("id", ""))),
                framework=framework or doc.get("framework", ""),
                title=doc.get("title") or "",
                body=doc.get("body") or "",
                url=doc.get("html_url", doc.get("url", "")),
            )
        hits = match_keywords(record.title, record.body, cfg)
        if hits:
            kept.append(replace(record, matched_keywords=hits))
    return kept


def extract_snippets(issue: IssueRecord, link_hosts: list[str] | None = None) -> IssueRecord:
    """Populate snippets from the issue body.

    Every maximal fenced block becomes one snippet, fences excluded, info
    string recorded. A dangling opener is dropped with a warning. URLs whose
    host is on the allowlist become empty linked_resource placeholders
    (fetching them is someone else's problem).
    """
    snippets: list[SourceSnippet] = []
    lines = issue.body.split("\n")
    open_tag: str | None = None
    block: list[str] = []
    for line in lines:
        if open_tag is None:
            m = _FENCE_OPEN.match(line)
            if m:
                open_tag = m.group(1).strip()
                block = []
        else:
            if _FENCE_CLOSE.match(line):
                snippets.append(
                    SourceSnippet(text="\n".join(block), origin="fenced_block", tag=open_tag)
                )
                open_tag = None
            else:
                block.append(line)
    if open_tag is not None:
        logger.warning("issue %s: unterminated code fence ignored", issue.issue_id)

    for host in link_hosts or []:
        for url in _URL.findall(issue.body):
            if urlparse(url).hostname == host:
                snippets.append(SourceSnippet(text="", origin="linked_resource", tag=url))
    return replace(issue, snippets=tuple(snippets))


def save_corpus(records: list[IssueRecord], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record.to_dict(), sort_keys=True) + "\n")


def load_corpus(path: str | Path) -> list[IssueRecord]:
    records = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.strip():
            records.append(IssueRecord.from_dict(json.loads(line)))
    return records
