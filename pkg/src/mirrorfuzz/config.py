"""Runtime configuration: built-in defaults, key-value config files, flag overrides.

Precedence is flags > config file > built-in defaults. The config file format
is one `key = value` pair per line; values are parsed as JSON when possible
(so lists and numbers work) and kept as plain strings otherwise.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path


class ConfigError(ValueError):
    """Raised when a configuration value fails validation."""


# Bug-report filter phrases. The list is configuration, not code: extend it
# per target project via a keyword file or config key.
DEFAULT_KEYWORDS = [
    "crash",
    "aborted (core dumped)",
    "assertion failure",
    "segmentation fault (core dumped)",
    "floating point exception",
]

DEFAULT_DTYPES = [
    "float16",
    "float32",
    "float64",
    "int8",
    "int16",
    "int32",
    "int64",
    "uint8",
    "bool",
    "complex64",
]


@dataclass
class Config:
    # similar-API matching
    alpha: float = 0.35
    top_k: int = 6
    h_within: float = 0.70
    h_cross: float = 0.60
    embedder: str = "stub"
    embed_dim: int = 256
    embed_url: str = ""

    # issue ingestion
    keywords: list[str] = field(default_factory=lambda: list(DEFAULT_KEYWORDS))
    link_hosts: list[str] = field(default_factory=lambda: ["colab.research.google.com"])
    per_page: int = 100
    page_limit: int = 10
    fetch_retries: int = 3
    wait_on_rate_limit: bool = True

    # LLM client
    llm: str = "mock:"
    llm_base_url: str = ""
    llm_model: str = ""
    llm_budget: int = 3
    llm_temperature: float = 0.2
    llm_concurrency: int = 4

    # recognition
    variant: str = "all"
    root_cause_max_chars: int = 512

    # synthesis / fuzzing
    repair_retries: int = 2
    select_top_n: int = 10
    mutation_quota: int = 20
    exec_timeout_s: float = 30.0
    workers: int = 1
    seed: int = 0
    internal_failure_patterns: list[str] = field(
        default_factory=lambda: ["Please report this bug"]
    )
    compile_failure_patterns: list[str] = field(
        default_factory=lambda: ["failed to compile", "compilation failed"]
    )
    dtypes: list[str] = field(default_factory=lambda: list(DEFAULT_DTYPES))

    def validate(self) -> None:
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigError(f"alpha must be in [0, 1], got {self.alpha}")
        if self.top_k < 0:
            raise ConfigError(f"top_k must be >= 0, got {self.top_k}")
        for name in ("h_within", "h_cross"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ConfigError(f"{name} must be in [0, 1], got {value}")
        if self.workers < 1:
            raise ConfigError(f"workers must be >= 1, got {self.workers}")
        if self.llm_budget < 1:
            raise ConfigError(f"llm_budget must be >= 1, got {self.llm_budget}")
        if self.llm_concurrency < 1:
            raise ConfigError(f"llm_concurrency must be >= 1, got {self.llm_concurrency}")
        if self.exec_timeout_s <= 0:
            raise ConfigError(f"exec_timeout_s must be > 0, got {self.exec_timeout_s}")
        if not self.keywords:
            raise ConfigError("keyword list must be non-empty")
        if self.variant not in ("all", "no-t", "no-d", "no-td"):
            raise ConfigError(f"unknown prompt variant {self.variant!r}")


def _coerce(raw: str):
    try:
        return json.loads(raw)
    except (json.JSONDecodeError, ValueError):
        return raw


def parse_config_file(path: str | Path) -> dict:
    """Parse a `key = value` file into a dict of raw override values."""
    overrides: dict = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
        key, _, raw = line.partition("=")
        overrides[key.strip()] = _coerce(raw.strip())
    return overrides


def load_config(path: str | Path | None = None, overrides: dict | None = None) -> Config:
    """Build a Config from defaults, an optional file, and flag overrides.

    `overrides` entries with value None are treated as "flag not given".
    """
    values: dict = {}
    if path is not None:
        values.update(parse_config_file(path))
    for key, value in (overrides or {}).items():
        if value is not None:
            values[key] = value

    known = {f.name for f in dataclasses.fields(Config)}
    unknown = sorted(set(values) - known)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")

    cfg = Config(**values)
    cfg.validate()
    return cfg


def load_keywords(path: str | Path) -> list[str]:
    """Read one keyword phrase per line, skipping blanks and # comments."""
    phrases = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            phrases.append(line)
    return phrases
