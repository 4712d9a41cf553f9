"""Buggy-API recognition: from a bug issue to structured bug records.

The model reads the issue context (code, title, description, depending on
the prompt variant) and names the API at fault, the trigger parameters, and
a root-cause summary. Names come back truncated often enough that every
candidate is completed against the catalog by edit distance before it is
believed; candidates too far from anything in the catalog are dropped.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, replace
from pathlib import Path

from .catalog import ApiRecord, complete_api_name, distance_cap
from .ingest import IssueRecord, SourceSnippet
from .llm import LLMClient, OutputContract, Prompt

logger = logging.getLogger(__name__)

VARIANTS = ("all", "no-t", "no-d", "no-td")

ROOT_CAUSE_MAX_CHARS = 512

RECOGNITION_CONTRACT = OutputContract(
    description='{"bugs": [{"api": str, "params": [str], "root_cause": str}]}',
    required_keys=("bugs",),
)

VERIFY_CONTRACT = OutputContract(
    description='{"verdict": "yes" | "no"}',
    required_keys=("verdict",),
)

RECOGNITION_SYSTEM = (
    "You are an expert triager for numerical-computing framework bug reports. "
    "Read the report, reason step by step about which API call misbehaves and "
    "which argument values trigger it, then answer with a single JSON object "
    'inside a fenced code block: {"bugs": [{"api": "<dotted name>", '
    '"params": ["<param>", ...], "root_cause": "<one sentence>"}]}.'
)

RECOGNITION_EXAMPLES = (
    (
        "Code:\n"
        "```\n"
        "import torch\n"
        "x = torch.randn(10, 3, 20, 20)\n"
        "torch.nn.functional.avg_pool2d(x, kernel_size=4, stride=0)\n"
        "```\n"
        "Title: avg_pool2d crashes with core dump\n"
        "Description: Setting stride to 0 makes the process die instantly.",
        "The call that dies is avg_pool2d; the crash appears when stride is 0, "
        "so the pooling step size is the trigger.\n"
        "```json\n"
        '{"bugs": [{"api": "torch.nn.functional.avg_pool2d", "params": ["stride"], '
        '"root_cause": "zero stride makes the pooling window step by nothing and crashes"}]}\n'
        "```"
    ),
)

VERIFY_SYSTEM = (
    "You are double-checking a bug triage result. Given the issue context and "
    "a candidate (API, parameters, root cause), decide whether the candidate "
    "really is the buggy API of this report. Answer with one JSON object in a "
    'fenced code block: {"verdict": "yes"} or {"verdict": "no"}.'
)


@dataclass(frozen=True)
class BugRecord:
    framework: str
    buggy_api: str
    trigger_params: tuple[str, ...]
    root_cause: str
    snippet: SourceSnippet
    issue_id: str  # crash dedup key instead, when source == "fuzzer_found"
    verified: bool = False
    source: str = "mined"  # or "fuzzer_found"

    @property
    def record_id(self) -> str:
        raw = f"{self.framework}|{self.buggy_api}|{self.issue_id}|{self.source}"
        return hashlib.sha256(raw.encode("utf-8")).hexdigest()[:16]

    @property
    def dedup_key(self) -> str:
        return f"{self.buggy_api}|{self.issue_id}"

    def to_dict(self) -> dict:
        return {
            "framework": self.framework,
            "buggy_api": self.buggy_api,
            "trigger_params": list(self.trigger_params),
            "root_cause": self.root_cause,
            "snippet": self.snippet.to_dict(),
            "issue_id": self.issue_id,
            "verified": self.verified,
            "source": self.source,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "BugRecord":
        return cls(
            framework=data["framework"],
            buggy_api=data["buggy_api"],
            trigger_params=tuple(data.get("trigger_params", [])),
            root_cause=data.get("root_cause", ""),
            snippet=SourceSnippet.from_dict(data.get("snippet", {"text": ""})),
            issue_id=str(data["issue_id"]),
            verified=data.get("verified", False),
            source=data.get("source", "mined"),
        )


def compile_filter(snippet: SourceSnippet, host=None) -> SourceSnippet:
    """Mark whether the snippet is syntactically valid host-language source.

    `host` may be a callable(code) -> bool supplied by a live interpreter
    harness; without one we fall back to a syntax-only check, which is all
    fixture mode needs. Linked-resource placeholders never parse (no text).
    """
    if snippet.origin == "linked_resource" or not snippet.text.strip():
        return replace(snippet, parses=False)
    if host is not None:
        try:
            return replace(snippet, parses=bool(host(snippet.text)))
        except Exception:  # noqa: BLE001 - a dying host must not kill the pipeline
            logger.warning("compile host failed; falling back to syntax-only check")
    try:
        compile(snippet.text, "<snippet>", "exec")
        return replace(snippet, parses=True)
    except (SyntaxError, ValueError):
        return replace(snippet, parses=False)


def build_recognition_prompt(issue: IssueRecord, variant: str = "all") -> Prompt:
    """Context assembly per ablation variant; the output contract never varies.

    "all" sends code + title + description; "no-t" drops the title, "no-d"
    the description, "no-td" both (code only).
    """
    if variant not in VARIANTS:
        raise ValueError(f"unknown prompt variant {variant!r}")
    parsing = [s.text for s in issue.snippets if s.parses]
    sections = []
    if parsing:
        joined = "\n\n".join(parsing)
        sections.append(f"Code:\n```\n{joined}\n```")
    if variant in ("all", "no-d"):
        sections.append(f"Title: {issue.title}")
    if variant in ("all", "no-t"):
        sections.append(f"Description: {issue.body}")
    sections.append(
        "Identify every buggy API with its trigger parameters and root cause."
    )
    return Prompt(
        system=RECOGNITION_SYSTEM,
        examples=RECOGNITION_EXAMPLES,
        task="\n\n".join(sections),
        output_contract=RECOGNITION_CONTRACT,
    )


def recognize(
    issue: IssueRecord,
    llm: LLMClient,
    catalog: list[ApiRecord],
    variant: str = "all",
    budget: int = 3,
) -> list[BugRecord]:
    """Extract zero or more BugRecords from one issue.

    Every candidate API name is completed against the issue framework's
    catalog; completions beyond the distance cap are dropped. Trigger
    parameters the catalog does not document are kept as "unknown" rather
    than discarded (positional-argument bugs are common). Records leave here
    unverified.
    """
    framework_catalog = [r for r in catalog if r.framework == issue.framework]
    if not framework_catalog:
        logger.warning("no catalog entries for framework %r", issue.framework)
        return []

    completion = llm.complete(build_recognition_prompt(issue, variant), budget=budget)
    if not completion.valid:
        logger.info("issue %s: no valid recognition reply", issue.issue_id)
        return []
    candidates = completion.parsed.get("bugs")
    if not isinstance(candidates, list):
        return []

    by_name = {r.full_name: r for r in framework_catalog}
    snippet = next(
        (s for s in issue.snippets if s.parses),
        issue.snippets[0] if issue.snippets else SourceSnippet(text=""),
    )
    records: list[BugRecord] = []
    for candidate in candidates:
        if not isinstance(candidate, dict):
            continue
        raw_name = str(candidate.get("api", "")).strip()
        if not raw_name:
            continue
        full_name, dist = complete_api_name(raw_name, framework_catalog)
        if dist > distance_cap(raw_name):
            logger.info(
                "issue %s: candidate %r too far from catalog (distance %d)",
                issue.issue_id,
                raw_name,
                dist,
            )
            continue
        documented = set(by_name[full_name].param_names)
        params = []
        for param in candidate.get("params", []) or []:
            name = str(param).strip()
            if not name:
                continue
            params.append(name if name in documented else "unknown")
        trigger = tuple(dict.fromkeys(params))
        records.append(
            BugRecord(
                framework=issue.framework,
                buggy_api=full_name,
                trigger_params=trigger,
                root_cause=str(candidate.get("root_cause", ""))[:ROOT_CAUSE_MAX_CHARS],
                snippet=snippet,
                issue_id=issue.issue_id,
                verified=False,
                source="mined",
            )
        )
    return records


def build_verify_prompt(record: BugRecord, issue: IssueRecord) -> Prompt:
    task = (
        f"Candidate buggy API: {record.buggy_api}\n"
        f"Candidate trigger parameters: {', '.join(record.trigger_params) or 'unknown'}\n"
        f"Candidate root cause: {record.root_cause}\n\n"
        f"Issue title: {issue.title}\n"
        f"Issue description: {issue.body}\n\n"
        "Is the candidate correct for this issue? Answer yes or no."
    )
    return Prompt(system=VERIFY_SYSTEM, examples=(), task=task, output_contract=VERIFY_CONTRACT)


def verify(record: BugRecord, issue: IssueRecord, llm: LLMClient, budget: int = 3) -> BugRecord:
    """Second-opinion pass; an invalid reply leaves the record unverified."""
    completion = llm.complete(build_verify_prompt(record, issue), budget=budget)
    if not completion.valid:
        return record
    verdict = str(completion.parsed.get("verdict", "")).strip().lower()
    return replace(record, verified=verdict == "yes")


def save_bugdb(records: list[BugRecord], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record.to_dict(), sort_keys=True) + "\n")


def load_bugdb(path: str | Path) -> list[BugRecord]:
    records = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.strip():
            records.append(BugRecord.from_dict(json.loads(line)))
    return records
