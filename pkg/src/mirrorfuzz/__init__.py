"""Shared-bug fuzzing for API families.

Pipeline stages: mine bug reports from an issue tracker, recognize the buggy
API behind each report, match operation-similar and parameter-similar APIs
within and across catalogs, synthesize test programs from the neighbours'
bug records, then mutate and execute them to catch the same bug surfacing in
the API under test.
"""

from .catalog import ApiRecord, ParamRecord, complete_api_name, levenshtein, load_catalog
from .config import Config, load_config
from .executor import Budget, CrashReport, MutationOp, mutate, run_campaign, triage
from .ingest import IssueRecord, KeywordConfig, SourceSnippet, extract_snippets, fetch_issues, filter_bug_issues
from .llm import Completion, LLMClient, MockBackend, Prompt, make_client
from .matcher import SimilarityMatcher, SimilarPair, StubEmbeddingProvider, select_similar
from .recognizer import BugRecord, compile_filter, recognize, verify
from .sandbox import RawOutcome, RunnerClient, classify_outcome
from .store import Store
from .synthesizer import TestCase, priority, select_top, synthesize

__version__ = "0.1.0"

__all__ = [
    "ApiRecord",
    "Budget",
    "BugRecord",
    "Completion",
    "Config",
    "CrashReport",
    "IssueRecord",
    "KeywordConfig",
    "LLMClient",
    "MockBackend",
    "MutationOp",
    "ParamRecord",
    "Prompt",
    "RawOutcome",
    "RunnerClient",
    "SimilarPair",
    "SimilarityMatcher",
    "SourceSnippet",
    "Store",
    "StubEmbeddingProvider",
    "TestCase",
    "classify_outcome",
    "compile_filter",
    "complete_api_name",
    "extract_snippets",
    "fetch_issues",
    "filter_bug_issues",
    "levenshtein",
    "load_catalog",
    "load_config",
    "make_client",
    "mutate",
    "priority",
    "recognize",
    "run_campaign",
    "select_similar",
    "select_top",
    "synthesize",
    "triage",
    "verify",
]
