"""Similar-API matching: combined lexical + semantic scoring over catalogs.

Two pairing kinds come out of here. Operation-similar (OS) pairs compare all
three metadata facets; parameter-similar (PS) pairs compare only the
parameter facet and are drawn exclusively from pairs NOT already selected as
OS. Candidate selection is a two-stage filter: keep the top K per source,
then admit anything beyond rank K whose score clears the threshold H.

Lexical similarity is TF-IDF cosine per facet, with the facet scores folded
as max(name+param, desc+param)/2; the division keeps every score in [0, 1]
so the text/semantic mixing weight and the thresholds stay commensurate.
Semantic similarity mirrors the same structure over embedding cosines.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import re
import threading
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import requests

from .catalog import ApiRecord, metadata_text

logger = logging.getLogger(__name__)

FIELDS = ("name", "param", "desc")

_ALNUM_RUN = re.compile(r"[0-9a-zA-Z]+")
_CAMEL_SPLIT = re.compile(r"(?<=[a-z0-9])(?=[A-Z])|(?<=[A-Z])(?=[A-Z][a-z])")


class MatchError(RuntimeError):
    pass


def tokenize(text: str) -> list[str]:
    """Lowercased tokens split on non-alphanumerics and camelCase boundaries."""
    tokens: list[str] = []
    for run in _ALNUM_RUN.findall(text):
        for part in _CAMEL_SPLIT.split(run):
            tokens.append(part.lower())
    return tokens


@dataclass(frozen=True)
class SimilarPair:
    source: str  # api id, "framework::full_name"
    target: str
    kind: str  # "OS" or "PS"
    text_score: float
    sem_score: float
    combined_score: float
    alpha_used: float

    @property
    def pair_id(self) -> str:
        return f"{self.source}->{self.target}|{self.kind}"

    @property
    def target_name(self) -> str:
        return self.target.split("::", 1)[-1]

    def to_dict(self) -> dict:
        return {
            "source": self.source,
            "target": self.target,
            "kind": self.kind,
            "text_score": self.text_score,
            "sem_score": self.sem_score,
            "combined_score": self.combined_score,
            "alpha_used": self.alpha_used,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SimilarPair":
        return cls(
            source=data["source"],
            target=data["target"],
            kind=data["kind"],
            text_score=data["text_score"],
            sem_score=data["sem_score"],
            combined_score=data["combined_score"],
            alpha_used=data.get("alpha_used", 0.35),
        )


@dataclass
class TfidfIndex:
    """Per-facet IDF tables and sparse per-API weight vectors."""

    vocabulary: dict[str, dict[str, int]]  # facet -> term -> column
    idf: dict[str, dict[str, float]]  # facet -> term -> weight
    vectors: dict[str, dict[str, dict[str, float]]]  # facet -> api id -> term -> weight


def build_index(catalogs: list[list[ApiRecord]]) -> TfidfIndex:
    """Index every (api, facet) document across all catalogs in scope.

    IDF weighting is shared across the whole collection so cross-framework
    comparisons rank terms consistently: idf(t) = ln(N / (1 + df)) + 1 with
    N the per-facet document count. TF is the raw in-document count.
    """
    apis = [record for collection in catalogs for record in collection]
    if not apis:
        raise MatchError("cannot index an empty catalog collection")

    vocabulary: dict[str, dict[str, int]] = {}
    idf: dict[str, dict[str, float]] = {}
    vectors: dict[str, dict[str, dict[str, float]]] = {}
    for facet in FIELDS:
        docs = {api.api_id: tokenize(metadata_text(api, facet)) for api in apis}
        df: dict[str, int] = {}
        for tokens in docs.values():
            for term in dict.fromkeys(tokens):
                df[term] = df.get(term, 0) + 1
        n_docs = len(docs)
        facet_idf = {term: math.log(n_docs / (1 + count)) + 1.0 for term, count in df.items()}
        facet_vectors: dict[str, dict[str, float]] = {}
        for api_id, tokens in docs.items():
            counts: dict[str, int] = {}
            for term in tokens:
                counts[term] = counts.get(term, 0) + 1
            facet_vectors[api_id] = {
                term: count * facet_idf[term] for term, count in counts.items()
            }
        vocabulary[facet] = {term: i for i, term in enumerate(sorted(facet_idf))}
        idf[facet] = facet_idf
        vectors[facet] = facet_vectors

    if not any(vocabulary[facet] for facet in FIELDS):
        raise MatchError("empty vocabulary: no tokens in any catalog document")
    return TfidfIndex(vocabulary=vocabulary, idf=idf, vectors=vectors)


def combine_fields(name: float, param: float, desc: float) -> float:
    """Fold facet similarities: max(name+param, desc+param) / 2.

    The max picks the stronger of the two facet pairings; dividing by two
    maps the [0, 2] sum back onto [0, 1].
    """
    return max(name + param, desc + param) / 2.0


def sparse_cosine(a: dict[str, float], b: dict[str, float]) -> float:
    if not a or not b:
        return 0.0
    if len(b) < len(a):
        a, b = b, a
    dot = sum(weight * b[term] for term, weight in a.items() if term in b)
    norm_a = math.sqrt(sum(w * w for w in a.values()))
    norm_b = math.sqrt(sum(w * w for w in b.values()))
    if norm_a == 0.0 or norm_b == 0.0:
        return 0.0
    return dot / (norm_a * norm_b)


def dense_cosine(a: np.ndarray, b: np.ndarray) -> float:
    norm_a = float(np.linalg.norm(a))
    norm_b = float(np.linalg.norm(b))
    if norm_a == 0.0 or norm_b == 0.0:
        return 0.0
    return float(np.dot(a, b)) / (norm_a * norm_b)


class StubEmbeddingProvider:
    """Deterministic offline embedder: signed feature-hashed token counts.

    Each token lands in a sha256-derived bucket with a sha256-derived sign,
    so the same text maps to the same vector on every platform. Real
    providers plug in behind the same interface.
    """

    def __init__(self, dimension: int = 256):
        self.dimension = dimension

    def embed(self, text: str) -> np.ndarray:
        vec = np.zeros(self.dimension, dtype=np.float64)
        for token in tokenize(text):
            digest = hashlib.sha256(token.encode("utf-8")).digest()
            bucket = int.from_bytes(digest[:4], "big") % self.dimension
            sign = 1.0 if digest[4] % 2 == 0 else -1.0
            vec[bucket] += sign
        return vec


class HttpEmbeddingProvider:
    """Embedding service client: POST {"texts": [...]} -> {"vectors": [[...]]}."""

    def __init__(self, base_url: str, dimension: int, session=None):
        self.base_url = base_url.rstrip("/")
        self.dimension = dimension
        self._session = session or requests.Session()

    def embed(self, text: str) -> np.ndarray:
        try:
            response = self._session.post(
                f"{self.base_url}/embed", json={"texts": [text]}, timeout=60
            )
        except requests.RequestException as exc:
            raise MatchError(f"embedding provider unreachable: {exc}") from exc
        if response.status_code != 200:
            raise MatchError(f"embedding provider returned HTTP {response.status_code}")
        return np.asarray(response.json()["vectors"][0], dtype=np.float64)


class CachedProvider:
    """Read-through cache; concurrent lookups share one computed vector."""

    def __init__(self, provider):
        self._provider = provider
        self.dimension = provider.dimension
        self._cache: dict[str, np.ndarray] = {}
        self._lock = threading.Lock()

    def embed(self, text: str) -> np.ndarray:
        with self._lock:
            cached = self._cache.get(text)
        if cached is not None:
            return cached
        vec = self._provider.embed(text)
        if not np.all(np.isfinite(vec)):
            raise MatchError("embedding provider returned non-finite components")
        with self._lock:
            self._cache[text] = vec
        return vec


def make_provider(spec: str, dimension: int = 256, url: str = ""):
    if spec == "stub":
        return StubEmbeddingProvider(dimension=dimension)
    if spec == "http":
        if not url:
            raise ValueError("http embedder needs embed_url")
        return HttpEmbeddingProvider(url, dimension=dimension)
    raise ValueError(f"unknown embedder spec {spec!r}")


def select_similar(source: str, targets: list[SimilarPair], k: int, h: float) -> list[SimilarPair]:
    """Two-stage candidate filter: top-k by score, plus the tail above h.

    Ordering is score-descending with ties broken by target full_name (then
    the full target id) so runs are stable. When every candidate clears h
    this degenerates to pure threshold selection.
    """
    ranked = sorted(
        targets, key=lambda p: (-p.combined_score, p.target_name, p.target)
    )
    selected = ranked[:k]
    for pair in ranked[k:]:
        if pair.combined_score >= h:
            selected.append(pair)
    return selected


class SimilarityMatcher:
    """Scoring engine over one or more loaded catalogs."""

    def __init__(self, catalogs: list[list[ApiRecord]], provider=None, alpha: float = 0.35):
        self.apis: dict[str, ApiRecord] = {}
        for collection in catalogs:
            for record in collection:
                self.apis[record.api_id] = record
        self.index = build_index(catalogs)
        self.provider = CachedProvider(provider or StubEmbeddingProvider())
        self.alpha = alpha

    # -- lexical ----------------------------------------------------------

    def sim_text_field(self, a: str, b: str, facet: str) -> float:
        return sparse_cosine(self.index.vectors[facet][a], self.index.vectors[facet][b])

    def sim_text_all(self, a: str, b: str) -> float:
        return combine_fields(
            self.sim_text_field(a, b, "name"),
            self.sim_text_field(a, b, "param"),
            self.sim_text_field(a, b, "desc"),
        )

    # -- semantic ----------------------------------------------------------

    def _embed_facet(self, api_id: str, facet: str) -> np.ndarray:
        return self.provider.embed(metadata_text(self.apis[api_id], facet))

    def sim_semantic(self, a: str, b: str, facet: str = "all") -> float:
        if facet == "all":
            return combine_fields(
                self.sim_semantic(a, b, "name"),
                self.sim_semantic(a, b, "param"),
                self.sim_semantic(a, b, "desc"),
            )
        return dense_cosine(self._embed_facet(a, facet), self._embed_facet(b, facet))

    # -- combined ----------------------------------------------------------

    def score_os(self, a: str, b: str, alpha: float | None = None) -> SimilarPair:
        alpha = self.alpha if alpha is None else alpha
        text = self.sim_text_all(a, b)
        sem = max(0.0, self.sim_semantic(a, b, "all"))
        return SimilarPair(
            source=a,
            target=b,
            kind="OS",
            text_score=text,
            sem_score=sem,
            combined_score=alpha * text + (1 - alpha) * sem,
            alpha_used=alpha,
        )

    def score_ps(self, a: str, b: str, alpha: float | None = None) -> SimilarPair:
        alpha = self.alpha if alpha is None else alpha
        text = self.sim_text_field(a, b, "param")
        sem = max(0.0, self.sim_semantic(a, b, "param"))
        return SimilarPair(
            source=a,
            target=b,
            kind="PS",
            text_score=text,
            sem_score=sem,
            combined_score=alpha * text + (1 - alpha) * sem,
            alpha_used=alpha,
        )

    # -- driver -------------------------------------------------------------

    def match_all(self, k: int = 6, h_within: float = 0.70, h_cross: float = 0.60) -> list[SimilarPair]:
        """All OS and PS pairs, selected per (source, target framework).

        PS candidates are restricted to targets the OS stage did not select
        for that source/framework scope, so no pair carries both kinds.
        """
        by_framework: dict[str, list[str]] = {}
        for api_id, record in self.apis.items():
            by_framework.setdefault(record.framework, []).append(api_id)
        for ids in by_framework.values():
            ids.sort()

        results: list[SimilarPair] = []
        for source_id in sorted(self.apis):
            source_fw = self.apis[source_id].framework
            for framework in sorted(by_framework):
                threshold = h_within if framework == source_fw else h_cross
                targets = [t for t in by_framework[framework] if t != source_id]
                if not targets:
                    continue
                os_scored = [self.score_os(source_id, t) for t in targets]
                os_selected = select_similar(source_id, os_scored, k, threshold)
                results.extend(os_selected)
                chosen = {p.target for p in os_selected}
                ps_scored = [
                    self.score_ps(source_id, t) for t in targets if t not in chosen
                ]
                results.extend(select_similar(source_id, ps_scored, k, threshold))
        return results


def save_pairs(pairs: list[SimilarPair], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for pair in pairs:
            fh.write(json.dumps(pair.to_dict(), sort_keys=True) + "\n")


def load_pairs(path: str | Path) -> list[SimilarPair]:
    pairs = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.strip():
            pairs.append(SimilarPair.from_dict(json.loads(line)))
    return pairs
