"""Function chains: a small declarative language producing question bindings
and ground-truth answers by walking a graph.

A chain is a list of steps ``{"op": ..., "out": name, ...}`` evaluated in
order against an environment of named values (node ids, lists, text,
numbers).  Random steps (``sample``, ``choose``) draw from the supplied RNG
and record what they drew, so a chain can be replayed exactly from those
recorded choices.  A failed precondition raises :class:`Skip`.
"""
from __future__ import annotations

import random
from collections import Counter, deque
from typing import Any, Callable, Mapping, Sequence

from ..graph import Graph


class Skip(Exception):
    """The sampled anchors do not satisfy the chain's preconditions."""


class ChainError(ValueError):
    """Malformed chain."""


def _as_list(v: Any) -> list:
    if isinstance(v, (list, tuple)):
        return list(v)
    return [v]


def _dedupe(seq) -> list:
    return list(dict.fromkeys(seq))


def _num(v: Any) -> float:
    try:
        return float(v)
    except (TypeError, ValueError):
        raise Skip(f"non-numeric value {v!r}") from None


def fmt_number(x: float) -> str:
    return str(int(x)) if float(x).is_integer() else f"{x:.2f}"


def _bfs_levels(g: Graph, start: str, path: Sequence[str], max_depth: int) -> dict[str, int]:
    """Distances from ``start`` where one step follows every edge in ``path``."""
    dist = {start: 0}
    queue = deque([start])
    while queue:
        u = queue.popleft()
        if dist[u] >= max_depth:
            continue
        frontier = [u]
        for edge in path:
            frontier = _dedupe(v for x in frontier for v in g.nodes[x].neighbors.get(edge, ()))
        for v in frontier:
            if v not in dist:
                dist[v] = dist[u] + 1
                queue.append(v)
    return dist


class ChainRunner:
    def __init__(self, g: Graph, rng: random.Random | None = None, replay: Sequence[Any] | None = None):
        if rng is None and replay is None:
            raise ChainError("a chain needs an RNG or recorded choices")
        self.g = g
        self.rng = rng
        self.replay = list(replay) if replay is not None else None
        self.choices: list[Any] = []
        self.env: dict[str, Any] = {}

    # -- helpers --------------------------------------------------------

    def _get(self, name: str) -> Any:
        try:
            return self.env[name]
        except KeyError:
            raise ChainError(f"unbound name {name!r}") from None

    def _arg(self, step: Mapping, key: str) -> Any:
        """A step argument naming a binding; literals are written ``{"value": x}``."""
        ref = step[key]
        if isinstance(ref, Mapping) and "value" in ref:
            return ref["value"]
        if isinstance(ref, list):
            return [self._get(r) for r in ref]
        return self._get(ref)

    def _pick(self, pool: list, k: int) -> list:
        if self.replay is not None:
            if not self.replay:
                raise ChainError("recorded choices exhausted")
            got = self.replay.pop(0)
            got = got if k > 1 else [got]
            if len(got) != k or any(x not in pool for x in got):
                raise ChainError(f"recorded choice {got!r} is not available")
        else:
            if len(pool) < k:
                raise Skip(f"need {k} candidates, have {len(pool)}")
            got = self.rng.sample(pool, k)
        self.choices.append(got if k > 1 else got[0])
        return got

    def _set(self, step: Mapping, value: Any) -> None:
        out = step["out"]
        if isinstance(out, list):
            value = list(value)
            if len(value) != len(out):
                raise ChainError(f"cannot spread {len(value)} values over {out}")
            for name, v in zip(out, value):
                self.env[name] = v
        else:
            self.env[out] = value

    def _neighbors(self, node: str, edge: str) -> tuple[str, ...]:
        return self.g.nodes[node].neighbors.get(edge, ())

    def _feature(self, node: str, name: str) -> Any:
        value = self.g.nodes[node].features.get(name)
        if value is None:
            raise Skip(f"node {node} lacks feature {name!r}")
        return value

    # -- ops ------------------------------------------------------------

    def op_sample(self, s):
        pool = self.g.nodes_of_type(s["type"])
        if "exclude" in s:
            banned = set(_as_list(self._arg(s, "exclude")))
            pool = [n for n in pool if n not in banned]
        k = s.get("k", 1)
        got = self._pick(pool, k)
        return got if k > 1 or isinstance(s["out"], list) else got[0]

    def op_choose(self, s):
        pool = _dedupe(_as_list(self._arg(s, "from")))
        k = s.get("k", 1)
        got = self._pick(pool, k)
        return got if k > 1 or isinstance(s["out"], list) else got[0]

    def op_all(self, s):
        return self.g.nodes_of_type(s["type"])

    def op_find(self, s):
        target = self._arg(s, "equals")
        out = []
        for nid in self.g.nodes_of_type(s["type"]):
            value = self.g.nodes[nid].features.get(s["feature"])
            if value == target or (isinstance(value, tuple) and target in value):
                out.append(nid)
        return out

    def op_neighbors(self, s):
        edge = s["edge"]
        found = [v for u in _as_list(self._arg(s, "node")) for v in self._neighbors(u, edge)]
        return _dedupe(found) if s.get("distinct", True) else found

    def op_feature(self, s):
        name = s["name"]
        node = self._arg(s, "node")
        if isinstance(node, list):
            values = [self._feature(n, name) for n in node]
            if s.get("flatten"):
                values = [v for value in values for v in _as_list(value)]
            elif "index" in s:
                values = [v[s["index"]] for v in values]
            return values
        value = self._feature(node, name)
        if "index" in s:
            return value[s["index"]]
        return list(value) if isinstance(value, tuple) else value

    def op_count(self, s):
        return len(_as_list(self._arg(s, "of")))

    def op_degree(self, s):
        return len(self._neighbors(self._arg(s, "node"), s["edge"]))

    def op_require(self, s):
        value = self._arg(s, "of")
        n = len(value) if isinstance(value, (list, tuple)) else _num(value)
        if n < s.get("min", float("-inf")) or n > s.get("max", float("inf")):
            raise Skip(f"{s['of']} = {n} outside [{s.get('min')}, {s.get('max')}]")
        return None

    def op_exclude(self, s):
        banned = set(_as_list(self._arg(s, "remove")))
        return [x for x in _as_list(self._arg(s, "from")) if x not in banned]

    def op_intersect(self, s):
        first, *rest = self._arg(s, "of")
        keep = set(_as_list(rest[0])) if rest else set()
        for other in rest[1:]:
            keep &= set(_as_list(other))
        return [x for x in _dedupe(_as_list(first)) if x in keep]

    def op_concat(self, s):
        return [x for v in self._arg(s, "of") for x in _as_list(v)]

    def op_shuffle(self, s):
        items = list(_as_list(self._arg(s, "of")))
        if self.replay is not None:
            order = self.replay.pop(0)
            if sorted(order) != sorted(items):
                raise ChainError("recorded shuffle does not match")
            items = list(order)
        else:
            self.rng.shuffle(items)
        self.choices.append(list(items))
        return items

    def op_filter(self, s):
        """Keep nodes whose feature equals (or, for lists, overlaps) a value."""
        nodes = _as_list(self._arg(s, "from"))
        name = s["feature"]
        if "equals" in s:
            target = self._arg(s, "equals")
            target = tuple(target) if isinstance(target, list) else target
            return [n for n in nodes if self.g.nodes[n].features.get(name) == target]
        wanted = set(_as_list(self._arg(s, "overlaps")))
        return [n for n in nodes if wanted & set(_as_list(self.g.nodes[n].features.get(name, ())))]

    def op_filter_linked(self, s):
        nodes = _as_list(self._arg(s, "from"))
        targets = set(_as_list(self._arg(s, "to")))
        return [n for n in nodes if targets & set(self._neighbors(n, s["edge"]))]

    def op_mode(self, s):
        values = _as_list(self._arg(s, "of"))
        if not values:
            raise Skip("mode of nothing")
        (top, n), *rest = Counter(values).most_common(2) + [(None, -1)]
        if rest[0][1] == n:
            raise Skip("tied mode")
        return top

    def op_top(self, s):
        """The ``k`` most frequent values, most frequent first (ties by first
        occurrence).  The cut after ``k`` must be unambiguous."""
        k = s["k"]
        counts = Counter(_as_list(self._arg(s, "of")))
        ranked = sorted(counts.items(), key=lambda kv: -kv[1])  # stable: first occurrence breaks ties
        if len(ranked) < k:
            raise Skip("too few distinct values")
        if len(ranked) > k and ranked[k][1] == ranked[k - 1][1]:
            raise Skip("ambiguous top-k")
        return [v for v, _ in ranked[:k]]

    def _extreme(self, s, pick: Callable):
        nodes = _dedupe(_as_list(self._arg(s, "of")))
        if not nodes:
            raise Skip("extremum of nothing")
        if "degree" in s:
            keys = [len(self._neighbors(n, s["degree"])) for n in nodes]
        else:
            keys = [_num(self._feature(n, s["feature"])) for n in nodes]
        best = pick(keys)
        winners = [n for n, k in zip(nodes, keys) if k == best]
        if len(winners) != 1:
            raise Skip("tied extremum")
        return winners[0]

    def op_argmax(self, s):
        return self._extreme(s, max)

    def op_argmin(self, s):
        return self._extreme(s, min)

    def op_mean(self, s):
        values = [_num(v) for v in _as_list(self._arg(s, "of"))]
        if not values:
            raise Skip("mean of nothing")
        return f"{sum(values) / len(values):.2f}"

    def op_join(self, s):
        return ", ".join(str(v) for v in _as_list(self._arg(s, "of")))

    def op_ring(self, s):
        dist = _bfs_levels(self.g, self._arg(s, "from"), s["path"], s["max"])
        return [n for n, d in dist.items() if s["min"] <= d <= s["max"]]

    def op_distance(self, s):
        dist = _bfs_levels(self.g, self._arg(s, "from"), s["path"], s["max"])
        target = self._arg(s, "to")
        if target not in dist:
            raise Skip("unreachable")
        return dist[target] + s.get("offset", 0)

    def op_overlap(self, s):
        """Same-type nodes sharing more than ``max - 1`` ``edge`` neighbors with ``node``.

        Output is ``[matches, threshold]``; the threshold is one below the
        best overlap so the answer set is never empty.
        """
        node = self._arg(s, "node")
        mine = set(self._neighbors(node, s["edge"]))
        counts: dict[str, int] = {}
        for other in self.g.nodes_of_type(self.g.nodes[node].node_type):
            if other != node:
                n = len(mine & set(self._neighbors(other, s["edge"])))
                if n:
                    counts[other] = n
        if not counts:
            raise Skip("no overlap")
        threshold = max(counts.values()) - 1
        if threshold < s.get("min_threshold", 1):
            raise Skip("overlap too small")
        return [[n for n, c in counts.items() if c > threshold], threshold]

    def op_same_set(self, s):
        node = self._arg(s, "node")
        mine = set(self._neighbors(node, s["edge"]))
        if not mine:
            raise Skip("empty neighbor set")
        return [
            other
            for other in self.g.nodes_of_type(self.g.nodes[node].node_type)
            if other != node and set(self._neighbors(other, s["edge"])) == mine
        ]

    def op_member(self, s):
        return "True" if self._arg(s, "item") in set(_as_list(self._arg(s, "of"))) else "False"

    def op_choose_mixed(self, s):
        """Half the time a member of ``from``, otherwise any node of ``type``."""
        pool = _dedupe(_as_list(self._arg(s, "from")))
        if self.replay is None and pool and self.rng.random() < 0.5:
            return self._pick(pool, 1)[0]
        return self._pick(self.g.nodes_of_type(s["type"]), 1)[0]

    # -- driver ---------------------------------------------------------

    def run(self, chain: Sequence[Mapping]) -> dict[str, Any]:
        for i, step in enumerate(chain):
            op = step.get("op")
            fn = getattr(self, f"op_{op}", None)
            if fn is None:
                raise ChainError(f"step {i}: unknown op {op!r}")
            try:
                value = fn(step)
            except KeyError as exc:
                raise ChainError(f"step {i} ({op}): missing argument {exc}") from None
            if "out" in step:
                self._set(step, value)
        return self.env


OPS = sorted(name[3:] for name in dir(ChainRunner) if name.startswith("op_"))


def outputs(chain: Sequence[Mapping]) -> set[str]:
    names: set[str] = set()
    for step in chain:
        out = step.get("out")
        if isinstance(out, list):
            names.update(out)
        elif out:
            names.add(out)
    return names


def run_chain(
    chain: Sequence[Mapping], g: Graph, rng: random.Random | None = None, replay: Sequence[Any] | None = None
) -> tuple[dict[str, Any], list[Any]]:
    """Execute ``chain``; returns (environment, recorded choices)."""
    runner = ChainRunner(g, rng, replay)
    env = runner.run(chain)
    return env, runner.choices
