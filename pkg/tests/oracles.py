"""Independent brute-force oracles the test suite checks the library against.

Everything here is written from the definitions alone (full DP matrices,
dict arithmetic, explicit sort-then-filter) and must stay independent of the
library's implementation paths.
"""

from __future__ import annotations

import math
import re


def oracle_tokenize(text: str) -> list[str]:
    tokens = []
    for run in re.findall(r"[0-9a-zA-Z]+", text):
        # camelCase boundaries: lower/digit -> Upper, and ACRONYMWord seams
        pieces = re.sub(r"(?<=[a-z0-9])(?=[A-Z])|(?<=[A-Z])(?=[A-Z][a-z])", " ", run).split()
        tokens.extend(piece.lower() for piece in pieces)
    return tokens


def oracle_tfidf(docs: dict[str, str]) -> dict[str, dict[str, float]]:
    """doc id -> term -> tf*idf with idf = ln(N/(1+df)) + 1, tf = raw count."""
    tokenized = {doc_id: oracle_tokenize(text) for doc_id, text in docs.items()}
    n_docs = len(docs)
    df: dict[str, int] = {}
    for tokens in tokenized.values():
        for term in set(tokens):
            df[term] = df.get(term, 0) + 1
    weights: dict[str, dict[str, float]] = {}
    for doc_id, tokens in tokenized.items():
        vec: dict[str, float] = {}
        for term in tokens:
            vec[term] = vec.get(term, 0.0) + 1.0
        for term in vec:
            vec[term] = vec[term] * (math.log(n_docs / (1 + df[term])) + 1.0)
        weights[doc_id] = vec
    return weights


def oracle_sparse_cosine(a: dict[str, float], b: dict[str, float]) -> float:
    dot = math.fsum(a[t] * b[t] for t in sorted(set(a) & set(b)))
    norm_a = math.sqrt(math.fsum(w * w for w in a.values()))
    norm_b = math.sqrt(math.fsum(w * w for w in b.values()))
    if norm_a == 0.0 or norm_b == 0.0:
        return 0.0
    return dot / (norm_a * norm_b)


def oracle_dense_cosine(a, b) -> float:
    dot = math.fsum(float(x) * float(y) for x, y in zip(a, b))
    norm_a = math.sqrt(math.fsum(float(x) * float(x) for x in a))
    norm_b = math.sqrt(math.fsum(float(y) * float(y) for y in b))
    if norm_a == 0.0 or norm_b == 0.0:
        return 0.0
    return dot / (norm_a * norm_b)


def oracle_levenshtein(a: str, b: str) -> int:
    """Full-matrix dynamic program, unit costs."""
    rows, cols = len(a) + 1, len(b) + 1
    dp = [[0] * cols for _ in range(rows)]
    for i in range(rows):
        dp[i][0] = i
    for j in range(cols):
        dp[0][j] = j
    for i in range(1, rows):
        for j in range(1, cols):
            cost = 0 if a[i - 1] == b[j - 1] else 1
            dp[i][j] = min(dp[i - 1][j] + 1, dp[i][j - 1] + 1, dp[i - 1][j - 1] + cost)
    return dp[rows - 1][cols - 1]


def oracle_select(pairs: list, k: int, h: float) -> list:
    """Sorted-desc first K, union everything later whose score clears h."""
    ranked = sorted(pairs, key=lambda p: (-p.combined_score, p.target_name, p.target))
    return ranked[:k] + [p for p in ranked[k:] if p.combined_score >= h]


def oracle_top(cases: list, n: int) -> list:
    ranked = sorted(cases, key=lambda tc: (-tc.priority, -tc.G, tc.C, tc.case_id))
    return ranked[:n]
