"""Candidate-tool retrieval: BM25 over tool documents, dense cosine search, recall@k."""

from __future__ import annotations

import json
import math
import os
import re
import threading
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, Protocol, Sequence

import httpx
import numpy as np

from .errors import DimensionMismatchError, EmbedBackendDownError, EmptyPoolError, PreconditionError, UnknownGoldToolError
from .instances import Instance
from .schema import ToolPool, ToolSpec

FIELD_CHOICES = ("name", "description", "parameters", "responses", "field")
DEFAULT_MASK = ("name", "description", "parameters")

_TOKEN = re.compile(r"[^\W_]+")


def tokenize(text: str) -> list[str]:
    """Lowercase, split on anything non-alphanumeric; no stemming or stopwords."""
    return _TOKEN.findall(text.lower())


def document_text(tool: ToolSpec, field_mask: Sequence[str] = DEFAULT_MASK) -> str:
    unknown = set(field_mask) - set(FIELD_CHOICES)
    if unknown:
        raise PreconditionError(f"unknown field mask entries {sorted(unknown)}")
    parts = []
    if "name" in field_mask:
        parts.append(tool.name)
    if "description" in field_mask:
        parts.append(tool.description)
    if "field" in field_mask:
        parts.append(tool.field_path)
    if "parameters" in field_mask:
        parts.extend(p.description for p in tool.parameters.values())
    if "responses" in field_mask:
        parts.extend(r.description for r in tool.responses.values())
    return " ".join(parts)


@dataclass(frozen=True)
class ToolDocument:
    tool_name: str
    text: str
    token_counts: dict[str, int]
    length: int

    @classmethod
    def from_text(cls, name: str, text: str) -> "ToolDocument":
        counts = Counter(tokenize(text))
        return cls(name, text, dict(counts), sum(counts.values()))


@dataclass
class ToolIndex:
    documents: list[ToolDocument]
    df: dict[str, int]
    avg_len: float
    k1: float = 1.2
    b: float = 0.75
    field_mask: tuple[str, ...] = DEFAULT_MASK

    @property
    def n_docs(self) -> int:
        return len(self.documents)

    def idf(self, token: str) -> float:
        n = self.df.get(token, 0)
        return math.log(1.0 + (self.n_docs - n + 0.5) / (n + 0.5))

    def score_all(self, query: str) -> list[float]:
        q = tokenize(query)
        weights = {t: self.idf(t) for t in set(q)}
        avg = self.avg_len or 1.0
        scores = []
        for doc in self.documents:
            norm = self.k1 * (1.0 - self.b + self.b * doc.length / avg)
            s = 0.0
            for t in q:
                tf = doc.token_counts.get(t)
                if tf:
                    s += weights[t] * tf * (self.k1 + 1.0) / (tf + norm)
            scores.append(s)
        return scores

    def with_documents(self, docs: Iterable[ToolDocument], *, refresh_stats: bool = True) -> "ToolIndex":
        """Copy of the index with extra documents; stats optionally left frozen."""
        documents = self.documents + list(docs)
        if refresh_stats:
            return _index_from_documents(documents, self.k1, self.b, self.field_mask)
        return ToolIndex(documents, dict(self.df), self.avg_len, self.k1, self.b, self.field_mask)

    def to_json(self) -> dict[str, Any]:
        return {
            "params": {"k1": self.k1, "b": self.b, "field_mask": list(self.field_mask)},
            "avg_len": self.avg_len,
            "df": dict(sorted(self.df.items())),
            "documents": [
                {"tool_name": d.tool_name, "text": d.text, "length": d.length} for d in self.documents
            ],
        }

    @classmethod
    def from_json(cls, raw: dict[str, Any]) -> "ToolIndex":
        docs = [ToolDocument.from_text(d["tool_name"], d["text"]) for d in raw["documents"]]
        p = raw["params"]
        return cls(docs, {k: int(v) for k, v in raw["df"].items()}, float(raw["avg_len"]), p["k1"], p["b"], tuple(p["field_mask"]))

    def save(self, path: str | Path) -> None:
        from .dataset import write_json_atomic

        write_json_atomic(path, self.to_json())

    @classmethod
    def load(cls, path: str | Path) -> "ToolIndex":
        return cls.from_json(json.loads(Path(path).read_text(encoding="utf-8")))


def _index_from_documents(docs: list[ToolDocument], k1: float, b: float, mask: Sequence[str]) -> ToolIndex:
    df: Counter = Counter()
    for d in docs:
        df.update(d.token_counts.keys())
    avg = sum(d.length for d in docs) / len(docs) if docs else 0.0
    return ToolIndex(docs, dict(df), avg, k1, b, tuple(mask))


def build_index(
    pool: ToolPool | Iterable[ToolSpec], field_mask: Sequence[str] = DEFAULT_MASK, *, k1: float = 1.2, b: float = 0.75
) -> ToolIndex:
    tools = list(pool)
    if not tools:
        raise EmptyPoolError("cannot index an empty pool")
    docs = [ToolDocument.from_text(t.name, document_text(t, field_mask)) for t in tools]
    return _index_from_documents(docs, k1, b, field_mask)


def _rank(names: Sequence[str], scores: Sequence[float], k: int) -> list[tuple[str, float]]:
    if k < 1:
        raise PreconditionError("k must be >= 1")
    order = sorted(range(len(names)), key=lambda i: (-scores[i], names[i]))
    return [(names[i], float(scores[i])) for i in order[:k]]


def search(index: ToolIndex, query: str, k: int = 5) -> list[tuple[str, float]]:
    """Top-k ``(tool_name, score)`` by BM25, ties broken by name."""
    return _rank([d.tool_name for d in index.documents], index.score_all(query), k)


class Retriever(Protocol):
    def search(self, query: str, k: int) -> list[tuple[str, float]]: ...


class BM25Retriever:
    def __init__(self, index: ToolIndex):
        self.index = index

    def search(self, query: str, k: int) -> list[tuple[str, float]]:
        return search(self.index, query, k)


# --- dense retrieval ----------------------------------------------------------------


@dataclass
class EmbeddingConfig:
    endpoint_url: str = "http://localhost:8000/v1/embeddings"
    model_name: str = "text-embedding-3-small"
    api_key_env: str = "LLM_API_KEY"
    request_timeout: float = 60.0
    batch_size: int = 64


class EmbeddingClient:
    """POSTs ``{"input": [...], "model": ...}`` and reads ``data[i].embedding``."""

    def __init__(self, config: EmbeddingConfig, *, transport: httpx.BaseTransport | None = None):
        self.config = config
        self._client = httpx.Client(timeout=config.request_timeout, transport=transport)

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        headers = {}
        key = os.environ.get(self.config.api_key_env)
        if key:
            headers["Authorization"] = f"Bearer {key}"
        try:
            resp = self._client.post(
                self.config.endpoint_url,
                json={"input": list(texts), "model": self.config.model_name},
                headers=headers,
            )
        except httpx.TransportError as exc:
            raise EmbedBackendDownError(type(exc).__name__) from None
        if resp.status_code >= 500 or resp.status_code == 429:
            raise EmbedBackendDownError(f"HTTP {resp.status_code}")
        if resp.status_code >= 400:
            raise EmbedBackendDownError(f"HTTP {resp.status_code}")
        try:
            vectors = [item["embedding"] for item in resp.json()["data"]]
        except (ValueError, KeyError, TypeError):
            raise DimensionMismatchError("embedding response lacks data[].embedding") from None
        return _as_matrix(vectors, len(texts))


def _as_matrix(vectors: Sequence[Sequence[float]], expected: int) -> np.ndarray:
    if len(vectors) != expected:
        raise DimensionMismatchError(f"got {len(vectors)} embeddings for {expected} inputs")
    dims = {len(v) for v in vectors}
    if len(dims) > 1 or 0 in dims:
        raise DimensionMismatchError(f"inconsistent embedding sizes {sorted(dims)}")
    m = np.asarray(vectors, dtype=float).reshape(expected, -1)
    norms = np.linalg.norm(m, axis=1)
    if np.any(norms == 0) or not np.all(np.isfinite(norms)):
        raise DimensionMismatchError("zero-norm or non-finite embedding")
    return m / norms[:, None]


class DenseRetriever:
    """Cosine search over unit-normalised tool embeddings, cached per document text."""

    def __init__(self, client: Any, pool: ToolPool | Iterable[ToolSpec], field_mask: Sequence[str] = DEFAULT_MASK):
        tools = list(pool)
        if not tools:
            raise EmptyPoolError("cannot index an empty pool")
        self.client = client
        self.names = [t.name for t in tools]
        self.texts = [document_text(t, field_mask) for t in tools]
        self._cache: dict[str, np.ndarray] = {}
        self._lock = threading.Lock()
        self._matrix: np.ndarray | None = None

    def _doc_matrix(self) -> np.ndarray:
        with self._lock:
            if self._matrix is None:
                todo = list(dict.fromkeys(t for t in self.texts if t not in self._cache))
                batch = getattr(getattr(self.client, "config", None), "batch_size", 64)
                for i in range(0, len(todo), batch):
                    chunk = todo[i : i + batch]
                    for text, vec in zip(chunk, self.client.embed(chunk)):
                        self._cache[text] = vec
                self._matrix = np.vstack([self._cache[t] for t in self.texts])
            return self._matrix

    def search(self, query: str, k: int) -> list[tuple[str, float]]:
        docs = self._doc_matrix()
        q = self.client.embed([query])
        if q.shape[1] != docs.shape[1]:
            raise DimensionMismatchError(f"query dim {q.shape[1]} != document dim {docs.shape[1]}")
        return _rank(self.names, (docs @ q[0]).tolist(), k)


def embed_search(client: Any, pool: ToolPool, query: str, k: int = 5) -> list[tuple[str, float]]:
    return DenseRetriever(client, pool).search(query, k)


# --- evaluation of retrievers -------------------------------------------------------


def recall_at_k(retriever: Retriever, instances: Sequence[Instance], k: int, pool: ToolPool | None = None) -> float:
    """Micro recall: retrieved gold tools over all gold tools (gold taken as sets)."""
    hit = total = 0
    for inst in instances:
        gold = set(inst.gold_tools)
        if pool is not None:
            unknown = sorted(g for g in gold if pool.lookup(g) is None)
            if unknown:
                raise UnknownGoldToolError(f"{inst.id}: {unknown}")
        top = {name for name, _ in retriever.search(inst.query, k)}
        hit += len(gold & top)
        total += len(gold)
    return hit / total if total else 0.0
