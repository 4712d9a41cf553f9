"""Shared fixtures: toy catalogs, prepared issues, mock model plumbing, and
the seeded end-to-end asset builder used by the pipeline tests."""

from __future__ import annotations

import json
import sys
from dataclasses import replace
from pathlib import Path

import pytest

from mirrorfuzz.catalog import ApiRecord, ParamRecord, save_catalog
from mirrorfuzz.ingest import IssueRecord, extract_snippets
from mirrorfuzz.llm import LLMClient, MockBackend, Prompt, prompt_digest
from mirrorfuzz.matcher import SimilarityMatcher
from mirrorfuzz.recognizer import (
    BugRecord,
    build_recognition_prompt,
    build_verify_prompt,
    compile_filter,
)
from mirrorfuzz.synthesizer import build_syn_prompt
from mirrorfuzz.catalog import metadata_text

from fixtures_data import RECOGNIZER_CATALOG

FIXTURES_DIR = Path(__file__).parent / "fixtures"


def make_api(framework: str, full_name: str, params: list[str], description: str) -> ApiRecord:
    return ApiRecord(
        framework=framework,
        full_name=full_name,
        params=tuple(ParamRecord(name=p, description="", position=i) for i, p in enumerate(params)),
        description=description,
    )


def prepare_issue(issue: IssueRecord, link_hosts: list[str] | None = None) -> IssueRecord:
    """extract fenced snippets and run the syntax-only compile filter."""
    issue = extract_snippets(issue, link_hosts)
    return replace(issue, snippets=tuple(compile_filter(s) for s in issue.snippets))


def scripted_llm(replies: dict[str, str]) -> LLMClient:
    return LLMClient(MockBackend(replies=replies))


def reply_entry(prompt: Prompt, text: str) -> tuple[str, str]:
    return prompt_digest(prompt), text


@pytest.fixture()
def recognizer_catalog() -> list[ApiRecord]:
    return [make_api(fw, name, params, desc) for fw, name, params, desc in RECOGNIZER_CATALOG]


# -- seeded end-to-end assets -------------------------------------------------

E2E_CATALOG = [
    ("alphaflow", "alphaflow.nn.avg_pool2d", ["input", "kernel_size", "stride", "padding"],
     "applies 2D average pooling over the input tensor"),
    ("alphaflow", "alphaflow.nn.max_pool2d", ["input", "kernel_size", "stride", "padding"],
     "applies 2D max pooling over the input tensor"),
    ("alphaflow", "alphaflow.nn.conv2d", ["input", "weight", "stride", "padding"],
     "applies a 2D convolution over the input tensor"),
    ("alphaflow", "alphaflow.fft.rfft", ["input", "length"],
     "computes the real fast Fourier transform"),
    ("alphaflow", "alphaflow.random_tensor", ["shape", "dtype"],
     "creates a tensor filled with random values"),
    ("alphaflow", "alphaflow.reshape", ["input", "shape"],
     "returns a tensor with the same data in a new shape"),
    ("betaflow", "betaflow.nn.avg_pool3d", ["input", "kernel_size", "stride", "padding"],
     "applies 3D average pooling over the input tensor"),
    ("betaflow", "betaflow.nn.max_pool3d", ["input", "kernel_size", "stride", "padding"],
     "applies 3D max pooling over the input tensor"),
    ("betaflow", "betaflow.nn.conv3d", ["input", "weight", "stride", "padding"],
     "applies a 3D convolution over the input tensor"),
    ("betaflow", "betaflow.fft.irfft", ["input", "length"],
     "computes the inverse real fast Fourier transform"),
    ("betaflow", "betaflow.random_tensor", ["shape", "dtype"],
     "creates a tensor filled with random values"),
    ("betaflow", "betaflow.transpose", ["input", "axes"],
     "permutes the dimensions of the input tensor"),
]

E2E_SNIPPET = (
    "import alphaflow\n"
    "x = alphaflow.random_tensor([10, 3, 20, 20])\n"
    "alphaflow.nn.avg_pool2d(x, kernel_size=4, stride=0)"
)

E2E_ISSUE = {
    "number": 1,
    "framework": "alphaflow",
    "title": "avg_pool2d crash with stride 0",
    "body": (
        "Calling avg_pool2d with stride=0 takes the whole process down "
        "(segmentation fault (core dumped)).\n"
        "```\n" + E2E_SNIPPET + "\n```"
    ),
    "html_url": "https://tracker.example/alphaflow/issues/1",
}

E2E_RECOGNITION_REPLY = (
    "The fenced snippet calls the pooling API with stride=0, which matches "
    "the reported fault.\n"
    "```json\n"
    + json.dumps(
        {
            "bugs": [
                {
                    "api": "nn.avg_pool2d",
                    "params": ["stride"],
                    "root_cause": "zero stride makes the pooling window step by nothing and crashes",
                }
            ]
        }
    )
    + "\n```"
)

E2E_CRASH_CODE = (
    "import betaflow\n"
    "x = betaflow.random_tensor([10, 3, 20, 20])\n"
    "betaflow.nn.avg_pool3d(x, kernel_size=4, stride=0)"
)

BENIGN_TEMPLATES = {
    "alphaflow": "import alphaflow\ndata = [[1, 2], [3, 4]]\n{name}(data, 2)",
    "betaflow": "import betaflow\ndata = [[1, 2], [3, 4]]\n{name}(data, 2)",
}


def _benign_code(api: ApiRecord) -> str:
    return BENIGN_TEMPLATES[api.framework].format(name=api.full_name)


def _synthesis_reply(code: str) -> str:
    return (
        "Mirroring the neighbour's trigger conditions on this API.\n"
        "```json\n" + json.dumps({"code": code}) + "\n```"
    )


def build_e2e_assets(root: Path) -> dict:
    """Materialize catalogs, the issue fixture, and the keyed mock replies.

    The reply set is enumerated with the same public prompt builders the
    pipeline uses, so every model call the run can make has a scripted
    answer. Only the avg_pool3d sibling's program carries stride=0; the mock
    runner is scripted to crash on exactly that combination.
    """
    root.mkdir(parents=True, exist_ok=True)
    apis = [make_api(fw, name, params, desc) for fw, name, params, desc in E2E_CATALOG]
    by_framework: dict[str, list[ApiRecord]] = {}
    for api in apis:
        by_framework.setdefault(api.framework, []).append(api)

    catalog_paths = []
    for framework, records in sorted(by_framework.items()):
        path = root / f"catalog_{framework}.jsonl"
        save_catalog(records, path)
        catalog_paths.append(str(path))

    fixtures_dir = root / "issues"
    fixtures_dir.mkdir(exist_ok=True)
    (fixtures_dir / "issue_0001.json").write_text(json.dumps(E2E_ISSUE), encoding="utf-8")

    # replicate the pipeline's issue preparation to key the mock replies
    issue = IssueRecord(
        issue_id="1",
        framework="alphaflow",
        title=E2E_ISSUE["title"],
        body=E2E_ISSUE["body"],
        matched_keywords=("crash",),
        url=E2E_ISSUE["html_url"],
    )
    issue = prepare_issue(issue, ["colab.research.google.com"])

    replies: dict[str, str] = {}
    digest, text = reply_entry(build_recognition_prompt(issue, "all"), E2E_RECOGNITION_REPLY)
    replies[digest] = text

    bug = BugRecord(
        framework="alphaflow",
        buggy_api="alphaflow.nn.avg_pool2d",
        trigger_params=("stride",),
        root_cause="zero stride makes the pooling window step by nothing and crashes",
        snippet=issue.snippets[0],
        issue_id="1",
        verified=False,
        source="mined",
    )
    digest, text = reply_entry(build_verify_prompt(bug, issue), json.dumps({"verdict": "yes"}))
    replies[digest] = text

    engine = SimilarityMatcher([by_framework["alphaflow"], by_framework["betaflow"]])
    pairs = engine.match_all(6, 0.70, 0.60)
    bug_target = "alphaflow::alphaflow.nn.avg_pool2d"
    by_id = {api.api_id: api for api in apis}
    for pair in pairs:
        if pair.target != bug_target:
            continue
        source = by_id[pair.source]
        if source.full_name == "betaflow.nn.avg_pool3d":
            code = E2E_CRASH_CODE
        else:
            code = _benign_code(source)
        prompt = build_syn_prompt(source, metadata_text(source, "all"), bug, pair.kind)
        digest, text = reply_entry(prompt, _synthesis_reply(code))
        replies[digest] = text

    mock_dir = root / "llm"
    mock_dir.mkdir(exist_ok=True)
    for digest, text in replies.items():
        (mock_dir / f"{digest}.txt").write_text(text, encoding="utf-8")

    return {
        "catalogs": ",".join(catalog_paths),
        "fixtures": str(fixtures_dir),
        "llm": f"mock:{mock_dir}",
        "runner": f"{sys.executable} {FIXTURES_DIR / 'mock_runner.py'}",
        "apis": apis,
    }


@pytest.fixture()
def e2e_assets(tmp_path: Path) -> dict:
    return build_e2e_assets(tmp_path / "assets")
