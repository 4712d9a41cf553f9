"""Test-case synthesis: turn similar-API bug records into candidate programs.

For an API under test, walk its operation-similar then parameter-similar
neighbours, feed each neighbour's bug record to the model, execute the
candidate, and let the model repair script errors from the error text.
Admitted candidates are ranked by priority = G * (U - C): G flags that the
target API is actually called (hallucination guard), U counts distinct
catalog APIs exercised, C is execution cost in seconds.
"""

from __future__ import annotations

import ast
import hashlib
import json
import logging
from dataclasses import dataclass, replace
from pathlib import Path
from typing import TYPE_CHECKING

from .catalog import ApiRecord, metadata_text
from .llm import LLMClient, OutputContract, Prompt
from .matcher import SimilarPair
from .recognizer import BugRecord
from .sandbox import ERROR, TIMEOUT, classify_outcome

if TYPE_CHECKING:
    from .store import Store

logger = logging.getLogger(__name__)

SYNTHESIS_CONTRACT = OutputContract(
    description='{"code": "<one complete program>"}',
    required_keys=("code",),
)

SYNTHESIS_SYSTEM = (
    "You write small, complete programs that exercise numerical-computing "
    "framework APIs. Given an API under test and a known bug in a similar "
    "API, reason step by step about how the same fault could surface in the "
    "API under test, then answer with a single JSON object inside a fenced "
    'code block: {"code": "<program>"}. The program must call the API under '
    "test and be directly runnable."
)

SYNTHESIS_EXAMPLES = (
    (
        "API under test: torch.nn.functional.max_pool2d\n"
        "Known bug in the operation-similar API torch.nn.functional.avg_pool2d: "
        "zero stride crashes the process.",
        "Max pooling shares the stride-driven window walk with average pooling, "
        "so a zero stride should hit the same division by the step size.\n"
        "```json\n"
        '{"code": "import torch\\nx = torch.randn(10, 3, 20, 20)\\n'
        'torch.nn.functional.max_pool2d(x, kernel_size=4, stride=0)\\n"}\n'
        "```"
    ),
)

KIND_MARKERS = {"OS": "operation-similar", "PS": "parameter-similar"}


@dataclass(frozen=True)
class TestCase:
    __test__ = False  # keep pytest from collecting this as a test class

    code: str
    target_api: str
    lineage: tuple[str, str]  # (bug record id, similar pair id)
    G: int
    U: int
    C: float
    priority: float
    origin: str  # synthesized | repaired | mutated
    framework: str = ""

    @property
    def case_id(self) -> str:
        raw = f"{self.target_api}|{self.code}"
        return hashlib.sha256(raw.encode("utf-8")).hexdigest()[:16]

    def to_dict(self) -> dict:
        return {
            "code": self.code,
            "target_api": self.target_api,
            "lineage": list(self.lineage),
            "G": self.G,
            "U": self.U,
            "C": self.C,
            "priority": self.priority,
            "origin": self.origin,
            "framework": self.framework,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "TestCase":
        return cls(
            code=data["code"],
            target_api=data["target_api"],
            lineage=tuple(data.get("lineage", ("", ""))),
            G=data.get("G", 0),
            U=data.get("U", 0),
            C=data.get("C", 0.0),
            priority=data.get("priority", 0.0),
            origin=data.get("origin", "synthesized"),
            framework=data.get("framework", ""),
        )


# -- static code analysis ---------------------------------------------------


def _dotted_name(expr) -> str | None:
    parts = []
    while isinstance(expr, ast.Attribute):
        parts.append(expr.attr)
        expr = expr.value
    if isinstance(expr, ast.Name):
        parts.append(expr.id)
        return ".".join(reversed(parts))
    return None


def call_paths(code: str) -> set[str]:
    """Dotted paths of every call site, with import aliases expanded.

    `import torch.nn as nn` makes `nn.Conv2d(...)` report torch.nn.Conv2d;
    unresolvable heads are kept verbatim so suffix matching still works.
    """
    tree = ast.parse(code)
    aliases: dict[str, str] = {}
    for node in ast.walk(tree):
        if isinstance(node, ast.Import):
            for name in node.names:
                if name.asname:
                    aliases[name.asname] = name.name
        elif isinstance(node, ast.ImportFrom) and node.module and node.level == 0:
            for name in node.names:
                aliases[name.asname or name.name] = f"{node.module}.{name.name}"
    paths: set[str] = set()
    for node in ast.walk(tree):
        if isinstance(node, ast.Call):
            dotted = _dotted_name(node.func)
            if not dotted:
                continue
            head, _, rest = dotted.partition(".")
            expanded = aliases.get(head, head) + (f".{rest}" if rest else "")
            paths.add(expanded)
    return paths


def _path_matches(full_name: str, dotted: str) -> bool:
    return full_name == dotted or full_name.endswith(f".{dotted}") or dotted.endswith(f".{full_name}")


def api_referenced(code_paths: set[str], full_name: str) -> bool:
    return any(_path_matches(full_name, dotted) for dotted in code_paths)


def count_unique_apis(code: str, catalog_names: list[str]) -> int:
    """U: distinct catalog full_names whose suffix shows up as a call token."""
    try:
        paths = call_paths(code)
    except SyntaxError:
        return 0
    return sum(1 for name in catalog_names if api_referenced(paths, name))


def presence_flag(code: str, target_api: str) -> int:
    """G: 1 iff the code calls the target API (suffix-qualified match allowed)."""
    try:
        paths = call_paths(code)
    except SyntaxError:
        return 0
    return 1 if api_referenced(paths, target_api) else 0


# -- scoring ------------------------------------------------------------------


def priority(tc: TestCase) -> float:
    """Ranking score G * (U - C); G annihilates hallucinated candidates."""
    return tc.G * (tc.U - tc.C)


def scored(tc: TestCase) -> TestCase:
    return replace(tc, priority=priority(tc))


def rescore(tc: TestCase, wall_s: float, timeout_s: float) -> TestCase:
    c = min(max(wall_s, 0.0), timeout_s)
    return scored(replace(tc, C=c))


def select_top(pool: list[TestCase], n: int = 10) -> list[TestCase]:
    """Highest-priority n cases; ties prefer cheaper C, then stable code hash.

    G breaks priority ties first: a case that actually calls its target API
    always outranks a hallucinated one, even at equal (e.g. zero) priority.
    """
    ranked = sorted(pool, key=lambda tc: (-tc.priority, -tc.G, tc.C, tc.case_id))
    return ranked[:n]


# -- prompting ----------------------------------------------------------------


def build_syn_prompt(api: ApiRecord, api_doc: str, bug: BugRecord, kind: str) -> Prompt:
    marker = KIND_MARKERS[kind]
    params = ", ".join(bug.trigger_params) if bug.trigger_params else "unknown"
    task = (
        f"API under test: {api.full_name} (framework {api.framework})\n\n"
        f"Documentation:\n{api_doc}\n\n"
        f"Known bug in the {marker} API {bug.buggy_api} (framework {bug.framework}):\n"
        f"Trigger parameters: {params}\n"
        f"Root cause: {bug.root_cause}\n"
        f"Reproducing snippet:\n```\n{bug.snippet.text}\n```\n\n"
        f"Write one complete program that calls {api.full_name} so the same "
        "class of bug can surface, adapted to this API's own signature and "
        "constraints."
    )
    return Prompt(
        system=SYNTHESIS_SYSTEM,
        examples=SYNTHESIS_EXAMPLES,
        task=task,
        output_contract=SYNTHESIS_CONTRACT,
    )


def build_repair_prompt(tc: TestCase, status: str, output: str) -> Prompt:
    task = (
        f"The following program failed with status {status}.\n\n"
        f"Program:\n```\n{tc.code}\n```\n\n"
        f"Error output:\n```\n{output}\n```\n\n"
        f"Fix the program so it runs, keeping the call to {tc.target_api} and "
        "its bug-triggering intent."
    )
    return Prompt(
        system=SYNTHESIS_SYSTEM,
        examples=(),
        task=task,
        output_contract=SYNTHESIS_CONTRACT,
    )


# -- synthesis loop -------------------------------------------------------------


def _syntax_ok(code: str) -> bool:
    try:
        ast.parse(code)
        return True
    except SyntaxError:
        return False


def _execute(executor, code: str, timeout_s: float):
    """Returns (outcome, stderr, wall_s); (None, "", timeout) when unexecuted."""
    if executor is None:
        return None, "", timeout_s
    raw = executor.run(code, timeout_s)
    outcome, _ = classify_outcome(raw, timeout_s)
    wall = timeout_s if outcome == TIMEOUT else min(max(raw.wall_s, 0.0), timeout_s)
    return outcome, raw.stderr_tail, wall


def repair(
    tc: TestCase,
    status: str,
    output: str,
    llm: LLMClient,
    executor=None,
    retries: int = 2,
    timeout_s: float = 30.0,
    budget: int = 3,
) -> TestCase | None:
    """Up to `retries` fix prompts, each fed the latest error; first fix that
    parses and executes wins, anything else drops the candidate."""
    current, current_status, current_output = tc, status, output
    for _ in range(retries):
        completion = llm.complete(build_repair_prompt(current, current_status, current_output), budget=budget)
        if not completion.valid or not isinstance(completion.parsed.get("code"), str):
            return None
        fixed_code = completion.parsed["code"]
        current = replace(current, code=fixed_code, origin="repaired")
        if not _syntax_ok(fixed_code):
            current_status, current_output = "SyntaxError", "invalid syntax"
            continue
        outcome, stderr, wall = _execute(executor, fixed_code, timeout_s)
        if outcome == ERROR:
            current_status, current_output = outcome, stderr
            continue
        return replace(current, C=wall)
    return None


def synthesize_one(
    api: ApiRecord,
    bug: BugRecord,
    pair: SimilarPair,
    llm: LLMClient,
    executor=None,
    catalog_names: list[str] | None = None,
    timeout_s: float = 30.0,
    repair_retries: int = 2,
    budget: int = 3,
) -> TestCase | None:
    """One synthesis attempt for one (similar API, bug record) pair."""
    prompt = build_syn_prompt(api, metadata_text(api, "all"), bug, pair.kind)
    completion = llm.complete(prompt, budget=budget)
    if not completion.valid or not isinstance(completion.parsed.get("code"), str):
        logger.info("synthesis for %s: invalid completion, skipped", api.full_name)
        return None

    tc = TestCase(
        code=completion.parsed["code"],
        target_api=api.full_name,
        lineage=(bug.record_id, pair.pair_id),
        G=0,
        U=0,
        C=timeout_s,
        priority=0.0,
        origin="synthesized",
        framework=api.framework,
    )

    if not _syntax_ok(tc.code):
        tc = repair(tc, "SyntaxError", "invalid syntax", llm, executor, repair_retries, timeout_s, budget)
    else:
        outcome, stderr, wall = _execute(executor, tc.code, timeout_s)
        if outcome == ERROR:
            tc = repair(tc, outcome, stderr, llm, executor, repair_retries, timeout_s, budget)
        else:
            # crash-class outcomes are admitted untouched: crashing is the
            # point, and reporting belongs to the campaign stage
            tc = replace(tc, C=wall)
    if tc is None or not _syntax_ok(tc.code):
        return None

    names = catalog_names or [api.full_name]
    tc = replace(
        tc,
        G=presence_flag(tc.code, api.full_name),
        U=count_unique_apis(tc.code, names),
        C=min(max(tc.C, 0.0), timeout_s),
    )
    return scored(tc)


def synthesize(
    api: ApiRecord,
    llm: LLMClient,
    store: "Store",
    executor=None,
    catalog_names: list[str] | None = None,
    timeout_s: float = 30.0,
    repair_retries: int = 2,
    budget: int = 3,
) -> list[TestCase]:
    """Build the candidate pool for one API under test.

    Operation-similar neighbours are consumed before parameter-similar ones,
    and verified bug records before unverified, so the strongest evidence
    drives the earliest candidates. The pool is persisted through the store.
    """
    pool: list[TestCase] = []
    for kind in ("OS", "PS"):
        for pair in store.query_similar(api.api_id, kind):
            for bug in store.query_bugs(api.api_id, pair.target):
                tc = synthesize_one(
                    api,
                    bug,
                    pair,
                    llm,
                    executor=executor,
                    catalog_names=catalog_names,
                    timeout_s=timeout_s,
                    repair_retries=repair_retries,
                    budget=budget,
                )
                if tc is not None:
                    pool.append(tc)
    store.add_pool(pool)
    return pool


def save_pool(pool: list[TestCase], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for tc in pool:
            fh.write(json.dumps(tc.to_dict(), sort_keys=True) + "\n")


def load_pool(path: str | Path) -> list[TestCase]:
    pool = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.strip():
            pool.append(TestCase.from_dict(json.loads(line)))
    return pool
