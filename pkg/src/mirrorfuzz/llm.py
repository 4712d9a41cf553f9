"""Text-generation client with a deterministic mock backend.

Every prompt-consuming stage goes through `complete()`, so swapping the live
chat endpoint for the fixture-keyed mock changes nothing upstream. Replies
must carry exactly one structured JSON payload in a fenced block; when a
model restates itself the LAST fenced block wins.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import re
import threading
from dataclasses import dataclass
from pathlib import Path

import requests

logger = logging.getLogger(__name__)

LLM_KEY_ENV = "MF_LLM_KEY"

_FENCED = re.compile(r"```[^\n]*\n(.*?)```", re.DOTALL)


class BackendError(RuntimeError):
    """The generation backend could not be reached; retryable by the caller."""


@dataclass(frozen=True)
class OutputContract:
    """Shape the reply payload must satisfy to count as valid."""

    description: str
    required_keys: tuple[str, ...] = ()

    def conforms(self, payload) -> bool:
        if not isinstance(payload, dict):
            return False
        return all(key in payload for key in self.required_keys)


@dataclass(frozen=True)
class Prompt:
    system: str
    task: str
    examples: tuple[tuple[str, str], ...] = ()
    output_contract: OutputContract = OutputContract(description="any JSON object")

    def __post_init__(self):
        if not self.task:
            raise ValueError("prompt task must be non-empty")


@dataclass(frozen=True)
class Completion:
    text: str
    parsed: dict | None = None
    valid: bool = False


def prompt_digest(p: Prompt) -> str:
    """Stable key for fixture-keyed mock replies (task text identifies a prompt)."""
    return hashlib.sha256(p.task.encode("utf-8")).hexdigest()[:16]


def extract_payload(text: str) -> str:
    """The candidate payload: last fenced block if any, else the whole reply."""
    blocks = _FENCED.findall(text)
    if blocks:
        return blocks[-1].strip()
    return text.strip()


def parse_completion(text: str, contract: OutputContract) -> Completion:
    candidate = extract_payload(text)
    try:
        payload = json.loads(candidate)
    except (json.JSONDecodeError, ValueError):
        return Completion(text=text, parsed=None, valid=False)
    if not contract.conforms(payload):
        return Completion(text=text, parsed=None, valid=False)
    return Completion(text=text, parsed=payload, valid=True)


class MockBackend:
    """Replies keyed by prompt digest from a fixture directory or a dict.

    Deterministic by construction: the same Prompt always maps to the same
    reply file, so completions are bit-identical across runs and platforms.
    """

    def __init__(self, replies: dict[str, str] | None = None, directory: str | Path | None = None):
        self._replies = dict(replies or {})
        self._directory = Path(directory) if directory is not None else None

    def generate(self, p: Prompt) -> str:
        key = prompt_digest(p)
        if key in self._replies:
            return self._replies[key]
        if self._directory is not None:
            path = self._directory / f"{key}.txt"
            if path.exists():
                return path.read_text(encoding="utf-8")
        logger.debug("mock backend has no reply for digest %s", key)
        return ""


class HttpBackend:
    """Minimal chat-completion client; base URL and model come from config."""

    def __init__(self, base_url: str, model: str, temperature: float = 0.2, session=None):
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.temperature = temperature
        self._session = session or requests.Session()

    def generate(self, p: Prompt) -> str:
        messages = [{"role": "system", "content": p.system}]
        for user_text, assistant_text in p.examples:
            messages.append({"role": "user", "content": user_text})
            messages.append({"role": "assistant", "content": assistant_text})
        messages.append({"role": "user", "content": p.task})
        headers = {}
        key = os.environ.get(LLM_KEY_ENV)
        if key:
            headers["Authorization"] = f"Bearer {key}"
        try:
            response = self._session.post(
                f"{self.base_url}/chat/completions",
                json={
                    "model": self.model,
                    "messages": messages,
                    "temperature": self.temperature,
                },
                headers=headers,
                timeout=120,
            )
        except requests.RequestException as exc:
            raise BackendError(f"generation backend unreachable: {exc}") from exc
        if response.status_code != 200:
            raise BackendError(f"generation backend returned HTTP {response.status_code}")
        data = response.json()
        return data["choices"][0]["message"]["content"]


class LLMClient:
    """Budgeted completion wrapper around a backend; shareable across workers."""

    def __init__(self, backend, max_concurrency: int = 4):
        self._backend = backend
        self._gate = threading.Semaphore(max_concurrency)

    def complete(self, p: Prompt, budget: int = 3) -> Completion:
        """First attempt whose payload parses wins; else the last, valid=False."""
        if budget < 1:
            raise ValueError("budget must be >= 1")
        completion = Completion(text="", parsed=None, valid=False)
        for _ in range(budget):
            with self._gate:
                text = self._backend.generate(p)
            completion = parse_completion(text, p.output_contract)
            if completion.valid:
                return completion
        return completion


def make_client(
    spec: str,
    base_url: str = "",
    model: str = "",
    temperature: float = 0.2,
    concurrency: int = 4,
) -> LLMClient:
    """Build a client from a backend spec: "mock:<dir>" or "http"."""
    if spec.startswith("mock"):
        _, _, directory = spec.partition(":")
        return LLMClient(MockBackend(directory=directory or None), max_concurrency=concurrency)
    if spec == "http":
        if not base_url or not model:
            raise ValueError("http backend needs llm_base_url and llm_model")
        return LLMClient(HttpBackend(base_url, model, temperature), max_concurrency=concurrency)
    raise ValueError(f"unknown llm backend spec {spec!r}")
