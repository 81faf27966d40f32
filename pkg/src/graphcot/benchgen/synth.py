"""Seeded synthetic graphs conforming to a domain schema."""
from __future__ import annotations

import itertools
import logging
import random
from typing import Mapping

from ..graph import Graph, Manifest, Node, NodeTypeSpec, section_name
from ..retrieval import tokenize
from .schemas import CATEGORY_LEAVES, CATEGORY_ROOTS, FeatureSpec, Relation, Schema, get_schema

logger = logging.getLogger(__name__)

_ONSETS = ("b", "c", "d", "f", "g", "h", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "br", "st", "tr", "pl")
_VOWELS = ("a", "e", "i", "o", "u", "ae", "io")
_CODAS = ("", "", "n", "r", "s", "l", "x", "th")


def zipf_weights(exponent: float, n: int) -> list[float]:
    """Unnormalised pmf of the zipf law truncated to 1..n."""
    return [k ** -exponent for k in range(1, n + 1)]


class _TextFactory:
    """Pseudo-words and phrases, with uniqueness tracked on token sequences."""

    def __init__(self, rng: random.Random, lexicon_size: int = 6000):
        self.rng = rng
        self.seen: set[tuple[str, ...]] = set()
        self.orgs: list[str] = []
        self.cases: list[str] = []
        syllables = [o + v for o in _ONSETS for v in _VOWELS]
        lexicon: set[str] = set()
        while len(lexicon) < lexicon_size:
            lexicon.add("".join(rng.choices(syllables, k=rng.randint(1, 3))) + rng.choice(_CODAS))
        self.lexicon = sorted(lexicon)

    def word(self) -> str:
        return self.rng.choice(self.lexicon)

    def words(self, lo: int, hi: int) -> str:
        return " ".join(self.rng.choices(self.lexicon, k=self.rng.randint(lo, hi)))

    def unique(self, make) -> str:
        while True:
            text = make()
            key = tuple(tokenize(text))
            if key and key not in self.seen:
                self.seen.add(key)
                return text

    def value(self, spec: FeatureSpec, ident: str):
        r = self.rng
        kind, args = spec.kind, spec.args
        if kind == "title":
            make = lambda: " ".join(w.capitalize() for w in self.words(3, 7).split())
        elif kind in ("name", "person"):
            make = lambda: f"{self.word().capitalize()} {self.word().capitalize()}"
        elif kind == "org":
            make = lambda: f"{self.word().capitalize()} {r.choice(('University', 'Institute', 'Labs', 'Group', 'Press', 'Company'))}"
        elif kind == "venue":
            make = lambda: f"journal of {self.words(1, 2)}"
        elif kind == "court":
            make = lambda: f"{self.word().capitalize()} {r.choice(('District', 'Circuit', 'Supreme', 'Appellate'))} Court"
        elif kind == "abbrev":
            make = lambda: f"{self.word()[:4].capitalize()}. {r.choice(('Dist.', 'Cir.', 'App.'))}"
        elif kind == "sentence":
            make = lambda: self.words(*args).capitalize() + "."
        elif kind == "text":
            return self.words(*args)
        elif kind == "year":
            return str(r.randint(*args))
        elif kind == "int":
            return str(r.randint(*args))
        elif kind == "price":
            return f"{r.uniform(*args):.2f}"
        elif kind == "bool":
            return r.choice(("true", "false"))
        elif kind == "choice":
            return r.choice(args[0])
        elif kind == "list":
            vocab, lo, hi = args
            return r.sample(vocab, r.randint(lo, hi))
        elif kind == "category":
            return [r.choice(CATEGORY_ROOTS), r.choice(CATEGORY_LEAVES)]
        elif kind == "date":
            return f"{r.randint(*args)}-{r.randint(1, 12):02d}-{r.randint(1, 28):02d}"
        elif kind == "url":
            return f"{args[0]}/{ident}"
        elif kind == "digits":
            make = lambda: str(r.randrange(10 ** (args[0] - 1), 10 ** args[0]))
        elif kind == "people":
            return ", ".join(f"{self.word().capitalize()} {self.word().capitalize()}" for _ in range(r.randint(*args)))
        elif kind == "case":
            # case names recur across dockets: a docket is one filing of a case
            if self.cases and r.random() < 0.4:
                return r.choice(self.cases)
            name = f"{self.word().capitalize()} v. {self.word().capitalize()}"
            self.cases.append(name)
            return name
        else:
            raise ValueError(f"unknown feature kind {kind!r}")
        if spec.unique:
            return self.unique(make)
        if kind == "org":
            # organisations are shared by many authors
            if len(self.orgs) < 25 or r.random() < 0.1:
                self.orgs.append(make())
            return r.choice(self.orgs)
        return make()


def _add_relation(
    rel: Relation,
    ids: Mapping[str, list[str]],
    adj: dict[str, dict[str, list[str]]],
    rng: random.Random,
    exponent: float,
) -> None:
    srcs, dsts = ids[rel.src], ids[rel.dst]
    if not srcs or not dsts:
        return
    fwd: dict[str, list[str]] = {s: [] for s in srcs}
    if rel.policy == "one":
        for s in srcs:
            fwd[s].append(rng.choice(dsts))
    elif rel.policy == "fanout":
        for s in srcs:
            k = rng.randint(rel.lo, rel.hi)
            pool = len(dsts) - (1 if rel.src == rel.dst else 0)
            picks = [d for d in rng.sample(dsts, min(k + 1, len(dsts))) if d != s][: min(k, pool)]
            fwd[s].extend(picks)
    elif rel.policy == "powerlaw":
        cap = min(rel.hi, len(dsts) - (1 if rel.src == rel.dst else 0))
        if cap < 1:
            return
        cum = list(itertools.accumulate(zipf_weights(exponent, cap)))
        for s in srcs:
            k = rng.choices(range(1, cap + 1), cum_weights=cum)[0]
            fwd[s].extend([d for d in rng.sample(dsts, min(k + 1, len(dsts))) if d != s][:k])
    else:
        raise ValueError(f"unknown relation policy {rel.policy!r}")

    if rel.symmetric:
        lists = {s: adj[s].setdefault(rel.edge, []) for s in srcs}
        members = {s: set(v) for s, v in lists.items()}
        for s in srcs:
            for d in fwd[s]:
                if d not in members[s]:
                    members[s].add(d)
                    lists[s].append(d)
                    members[d].add(s)
                    lists[d].append(s)
        return
    for s in srcs:
        adj[s].setdefault(rel.edge, []).extend(fwd[s])
    for d in dsts:
        adj[d].setdefault(rel.reverse, [])
    for s in srcs:
        for d in fwd[s]:
            adj[d][rel.reverse].append(s)


def manifest_for(schema: Schema, graph_id: str) -> Manifest:
    edges: dict[str, dict[str, str]] = {t.name: {} for t in schema.types}
    recip: list[tuple[str, str, str]] = []
    for rel in schema.relations:
        edges[rel.src][rel.edge] = rel.dst
        edges[rel.dst][rel.reverse] = rel.src
        recip.append((rel.src, rel.edge, rel.reverse))
        if not rel.symmetric:
            recip.append((rel.dst, rel.reverse, rel.edge))
    types = {
        t.name: NodeTypeSpec(section_name(t.name), tuple(f.name for f in t.features), edges[t.name])
        for t in schema.types
    }
    return Manifest(graph_id, schema.description, types, tuple(recip))


def generate_synthetic_graph(
    schema: str | Schema,
    sizes: Mapping[str, int] | None = None,
    seed: int = 0,
    exponent: float = 2.0,
    graph_id: str | None = None,
) -> Graph:
    """Deterministic schema-conformant graph.

    ``sizes`` overrides the per-type node counts; ``exponent`` is the zipf
    exponent of power-law relations (citations).
    """
    schema = get_schema(schema) if isinstance(schema, str) else schema
    sizes = dict(sizes or {})
    unknown = set(sizes) - {t.name for t in schema.types}
    if unknown:
        raise ValueError(f"sizes name unknown node types for schema {schema.name!r}: {sorted(unknown)}")
    rng = random.Random(seed)
    text = _TextFactory(rng)
    counter = itertools.count(100_000)
    ids: dict[str, list[str]] = {}
    features: dict[str, dict] = {}
    for t in schema.types:
        n = sizes.get(t.name, t.size)
        if n < 0:
            raise ValueError(f"size of {t.name!r} must be >= 0")
        ids[t.name] = []
        for _ in range(n):
            nid = str(next(counter))
            ids[t.name].append(nid)
            features[nid] = {f.name: text.value(f, nid) for f in t.features}
    adj: dict[str, dict[str, list[str]]] = {nid: {} for nid in features}
    for rel in schema.relations:
        _add_relation(rel, ids, adj, rng, exponent)
    for d in schema.derived:
        for nid in ids[d.node_type]:
            via = adj[nid].get(d.via) or []
            if via:
                features[nid][d.feature] = features[via[0]][d.feature]
    gid = graph_id or f"{schema.name}-synthetic-{seed}"
    nodes = [Node(nid, t.name, features[nid], adj[nid]) for t in schema.types for nid in ids[t.name]]
    g = Graph.build(nodes, manifest_for(schema, gid), strict=True)
    logger.info("generated %s graph with %d nodes", schema.name, len(g))
    return g
