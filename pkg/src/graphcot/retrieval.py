"""Node retrieval backing ``RetrieveNode``.

The default backend is an in-process BM25 index over one "document" per node
(the concatenation of that node type's searchable fields).  A dense backend
scores unit-normalised embeddings fetched from an OpenAI-compatible
``/embeddings`` endpoint.
"""
from __future__ import annotations

import json
import logging
import math
import os
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import httpx
import numpy as np

from .graph import Graph

logger = logging.getLogger(__name__)

_TOKEN = re.compile(r"[^\W_]+")

# Default searchable fields: titles for documents, names for entities.
DEFAULT_FIELDS: dict[str, tuple[str, ...]] = {
    "paper": ("title",),
    "book": ("title",),
    "item": ("title",),
    "series": ("title",),
    "opinion": ("plain_text",),
    "opinion cluster": ("syllabus",),
    "docket": ("case_name",),
    "court": ("full_name",),
}


def tokenize(text: str) -> list[str]:
    """Lowercase and split on runs of non-alphanumeric characters."""
    return _TOKEN.findall(text.lower())


class RetrievalError(Exception):
    pass


class IndexConfigError(RetrievalError):
    pass


class EmbeddingError(RetrievalError):
    pass


@dataclass(frozen=True)
class RetrievalHit:
    node: str
    score: float
    rank: int


@dataclass
class IndexConfig:
    searchable_fields: dict[str, tuple[str, ...]] = field(default_factory=dict)
    bm25_k1: float = 1.2
    bm25_b: float = 0.75

    def __post_init__(self) -> None:
        if not self.bm25_k1 > 0:
            raise IndexConfigError(f"bm25_k1 must be > 0, got {self.bm25_k1}")
        if not 0 <= self.bm25_b <= 1:
            raise IndexConfigError(f"bm25_b must be in [0, 1], got {self.bm25_b}")
        self.searchable_fields = {k: tuple(v) for k, v in self.searchable_fields.items()}

    def fields_for(self, node_type: str) -> tuple[str, ...]:
        if node_type in self.searchable_fields:
            return self.searchable_fields[node_type]
        return DEFAULT_FIELDS.get(node_type, ("name",))

    @classmethod
    def from_dict(cls, data: Mapping) -> "IndexConfig":
        return cls(
            searchable_fields=dict(data.get("searchable_fields") or {}),
            bm25_k1=float(data.get("bm25_k1", 1.2)),
            bm25_b=float(data.get("bm25_b", 0.75)),
        )

    def to_dict(self) -> dict:
        return {
            "searchable_fields": {k: list(v) for k, v in self.searchable_fields.items()},
            "bm25_k1": self.bm25_k1,
            "bm25_b": self.bm25_b,
        }


def node_text(g: Graph, node_id: str, fields: Sequence[str]) -> str:
    """Searchable text of a node: the named feature values joined by spaces."""
    feats = g.nodes[node_id].features
    parts = []
    for name in fields:
        value = feats.get(name)
        if value is None:
            continue
        parts.append(" ".join(value) if isinstance(value, tuple) else value)
    return " ".join(p for p in parts if p)


def document_texts(g: Graph, cfg: IndexConfig) -> tuple[list[tuple[str, str]], int]:
    """(node id, text) for every node with non-empty searchable text, plus the excluded count."""
    _check_fields(g, cfg)
    docs = []
    excluded = 0
    for nid, node in g.nodes.items():
        text = node_text(g, nid, cfg.fields_for(node.node_type))
        if text.strip() and tokenize(text):
            docs.append((nid, text))
        else:
            excluded += 1
    return docs, excluded


def _check_fields(g: Graph, cfg: IndexConfig) -> None:
    for node_type, fields in cfg.searchable_fields.items():
        if node_type not in g.node_types:
            raise IndexConfigError(f"index config names unknown node type {node_type!r}")
        known: set[str] = set()
        spec = g.manifest.node_types.get(node_type)
        if spec is not None:
            known.update(spec.features)
        for nid in g.nodes_of_type(node_type):
            known.update(g.nodes[nid].features)
        for f in fields:
            if f not in known:
                raise IndexConfigError(f"index config references unknown feature {f!r} for node type {node_type!r}")


class BM25Index:
    """Okapi BM25 over pre-tokenised documents.

    idf uses the non-negative form ``ln(1 + (N - df + 0.5) / (df + 0.5))``.
    A document whose token sequence equals the query's is an exact match and
    ranks above every partial match: its score is offset by the largest score
    any document could reach for that query.
    """

    def __init__(self, docs: Sequence[tuple[str, Sequence[str]]], k1: float = 1.2, b: float = 0.75, excluded: int = 0):
        self.k1 = k1
        self.b = b
        self.excluded = excluded
        self.ids = [d[0] for d in docs]
        self.doc_tokens = [tuple(d[1]) for d in docs]
        self.doc_len = [len(t) for t in self.doc_tokens]
        self.avgdl = sum(self.doc_len) / len(self.doc_len) if self.doc_len else 0.0
        self.df: Counter[str] = Counter()
        self.postings: dict[str, list[tuple[int, int]]] = {}
        self._exact: dict[tuple[str, ...], list[int]] = {}
        for i, toks in enumerate(self.doc_tokens):
            for term, tf in Counter(toks).items():
                self.df[term] += 1
                self.postings.setdefault(term, []).append((i, tf))
            self._exact.setdefault(toks, []).append(i)
        n = len(self.ids)
        self.idf = {t: math.log(1.0 + (n - df + 0.5) / (df + 0.5)) for t, df in self.df.items()}

    def __len__(self) -> int:
        return len(self.ids)

    def scores(self, query: str) -> dict[int, float]:
        """Sparse BM25 score per document index (documents sharing no term are absent)."""
        out: dict[int, float] = {}
        k1, b, avgdl = self.k1, self.b, self.avgdl
        for term in tokenize(query):
            post = self.postings.get(term)
            if not post:
                continue
            idf = self.idf[term]
            for i, tf in post:
                norm = tf + k1 * (1.0 - b + b * self.doc_len[i] / avgdl)
                out[i] = out.get(i, 0.0) + idf * tf * (k1 + 1.0) / norm
        return out

    def retrieve(self, query: str, k: int) -> list[RetrievalHit]:
        if k < 1:
            raise ValueError("k must be >= 1")
        if not self.ids:
            raise RetrievalError("index is empty")
        scores = self.scores(query)
        qtoks = tuple(tokenize(query))
        exact = self._exact.get(qtoks, ())
        if exact:
            ceiling = sum(self.idf.get(t, 0.0) for t in qtoks) * (self.k1 + 1.0)
            for i in exact:
                scores[i] = scores.get(i, 0.0) + ceiling
        ranked = sorted(scores.items(), key=lambda kv: (-kv[1], self.ids[kv[0]]))[:k]
        return [RetrievalHit(self.ids[i], s, r) for r, (i, s) in enumerate(ranked, 1)]

    # -- persistence ------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "kind": "bm25",
            "k1": self.k1,
            "b": self.b,
            "excluded": self.excluded,
            "documents": [[nid, list(toks)] for nid, toks in zip(self.ids, self.doc_tokens)],
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "BM25Index":
        if data.get("kind") != "bm25":
            raise RetrievalError(f"not a BM25 index file (kind={data.get('kind')!r})")
        return cls([(d[0], d[1]) for d in data["documents"]], data["k1"], data["b"], data.get("excluded", 0))


def build_index(g: Graph, cfg: IndexConfig | None = None) -> BM25Index:
    cfg = cfg or IndexConfig()
    docs, excluded = document_texts(g, cfg)
    if excluded:
        logger.info("excluded %d nodes with empty searchable text", excluded)
    return BM25Index([(nid, tokenize(text)) for nid, text in docs], cfg.bm25_k1, cfg.bm25_b, excluded)


def retrieve(idx: "BM25Index | DenseIndex", query: str, k: int) -> list[RetrievalHit]:
    return idx.retrieve(query, k)


def save_index(idx: BM25Index, path: str | Path) -> None:
    Path(path).write_text(json.dumps(idx.to_dict(), ensure_ascii=False), encoding="utf-8")


def load_index(path: str | Path) -> BM25Index:
    return BM25Index.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


# -- dense retrieval --------------------------------------------------------


class EmbeddingClient:
    """Client for an OpenAI-compatible embeddings endpoint.

    The full endpoint URL comes from the argument or ``GRAPHCOT_EMBED_URL``;
    the bearer token only from the environment variable named by ``api_key_env``.
    """

    def __init__(
        self,
        url: str | None = None,
        model: str = "all-mpnet-base-v2",
        api_key_env: str = "GRAPHCOT_EMBED_KEY",
        timeout: float = 30.0,
        batch_size: int = 64,
        transport: httpx.BaseTransport | None = None,
    ):
        self.url = url or os.environ.get("GRAPHCOT_EMBED_URL", "")
        if not self.url:
            raise EmbeddingError("no embedding endpoint configured (set GRAPHCOT_EMBED_URL)")
        self.model = model
        self.batch_size = batch_size
        headers = {}
        key = os.environ.get(api_key_env)
        if key:
            headers["Authorization"] = f"Bearer {key}"
        self._client = httpx.Client(timeout=timeout, headers=headers, transport=transport)

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        rows: list[list[float]] = []
        for start in range(0, len(texts), self.batch_size):
            batch = list(texts[start : start + self.batch_size])
            try:
                resp = self._client.post(self.url, json={"input": batch, "model": self.model})
                resp.raise_for_status()
                data = resp.json()["data"]
            except httpx.HTTPError as exc:
                raise EmbeddingError(f"embedding endpoint {self.url} failed: {exc}") from exc
            except (KeyError, ValueError) as exc:
                raise EmbeddingError(f"malformed embedding response from {self.url}: {exc}") from exc
            if len(data) != len(batch):
                raise EmbeddingError(f"endpoint returned {len(data)} embeddings for {len(batch)} inputs")
            rows.extend(item["embedding"] for item in data)
        return np.asarray(rows, dtype=np.float64)

    def close(self) -> None:
        self._client.close()


def normalize_rows(mat: np.ndarray) -> np.ndarray:
    mat = np.atleast_2d(np.asarray(mat, dtype=np.float64))
    norms = np.linalg.norm(mat, axis=1, keepdims=True)
    norms[norms == 0] = 1.0
    return mat / norms


class DenseIndex:
    """Brute-force cosine index over unit-normalised node embeddings."""

    def __init__(self, ids: Sequence[str], vectors: np.ndarray, embedder: EmbeddingClient | None = None):
        vectors = np.atleast_2d(np.asarray(vectors, dtype=np.float64))
        if len(ids) != vectors.shape[0]:
            raise RetrievalError("ids and vectors differ in length")
        self.ids = list(ids)
        self.vectors = normalize_rows(vectors)
        self.embedder = embedder

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def __len__(self) -> int:
        return len(self.ids)

    @classmethod
    def build(cls, g: Graph, embedder: EmbeddingClient, cfg: IndexConfig | None = None) -> "DenseIndex":
        docs, _ = document_texts(g, cfg or IndexConfig())
        vecs = embedder.embed([text for _, text in docs])
        return cls([nid for nid, _ in docs], vecs, embedder)

    def search_vector(self, query_vec: Sequence[float], k: int) -> list[RetrievalHit]:
        if k < 1:
            raise ValueError("k must be >= 1")
        if not self.ids:
            raise RetrievalError("index is empty")
        q = np.asarray(query_vec, dtype=np.float64).ravel()
        if q.shape[0] != self.dim:
            raise EmbeddingError(f"query dimension {q.shape[0]} does not match index dimension {self.dim}")
        q = normalize_rows(q)[0]
        sims = np.clip(self.vectors @ q, -1.0, 1.0)
        order = sorted(range(len(self.ids)), key=lambda i: (-sims[i], self.ids[i]))[:k]
        return [RetrievalHit(self.ids[i], float(sims[i]), r) for r, i in enumerate(order, 1)]

    def retrieve(self, query: str, k: int) -> list[RetrievalHit]:
        return embed_retrieve(self, query, k)


def embed_retrieve(idx: DenseIndex, query: str, k: int) -> list[RetrievalHit]:
    if idx.embedder is None:
        raise EmbeddingError("dense index has no embedding endpoint configured")
    return idx.search_vector(idx.embedder.embed([query])[0], k)


def load_index_config(path: str | Path) -> IndexConfig:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise IndexConfigError(f"cannot read index config {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise IndexConfigError(f"malformed index config {path}: {exc}") from None
    return IndexConfig.from_dict(data)

