"""Relational equality-saturation engine.

E-nodes are (op, child-ids) with hashconsing; literals are their own
nullary nodes.  Alongside the term graph, a fact store holds Datalog-style
relation tuples (has-type, amx-B-tile, AMXShape, ...) whose arguments are
class ids; facts are canonicalized on rebuild.

Rules pair a query (term patterns joined with relation atoms and primitive
guards) with an imperative action that may construct terms, union classes,
and assert facts.  The schedule runs supporting rules to fixpoint, then one
sequential round of axiomatic, application, and lowering rules, then
rebuilds — for a fixed number of iterations.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field


class NodeBudgetExceeded(Exception):
    pass


class NoFiniteCost(Exception):
    pass


@dataclass(frozen=True)
class PVar:
    name: str


@dataclass(frozen=True)
class PNode:
    op: tuple
    children: tuple = ()


def PLit(v):
    return PNode(("int", int(v)))


@dataclass(frozen=True)
class Bind:
    """Query atom: `var`'s class contains a term matching `pattern`."""

    var: str
    pattern: object


@dataclass(frozen=True)
class Rel:
    """Query atom: a tuple of `name` unifies with `terms` (PVar or PNode)."""

    name: str
    terms: tuple


def rel(name, *terms):
    return Rel(name, terms)


@dataclass(frozen=True)
class Guard:
    """Query atom: `fn(graph, env)` is truthy.  All referenced variables
    must be bound by earlier atoms."""

    fn: object
    doc: str = ""


@dataclass
class RuleDef:
    name: str
    category: str  # axiomatic | application | lowering | supporting
    query: tuple
    action: object  # fn(graph, env) -> None
    doc: str = ""
    semantic: bool = False  # unions value terms; subject to soundness fuzzing
    target: str = ""  # "", "amx", or "wmma"
    fuzz: object = None  # optional fn(rng) -> (lhs Expr, rhs Expr, env inputs)
    enabled: bool = True


class EGraph:
    def __init__(self, on_add=None):
        self._parent = []
        self._hashcons = {}
        self._class_nodes = {}  # root -> dict[node -> None]
        self._op_index = {}  # op -> set of roots (refreshed on rebuild)
        self.facts = {}  # relation name -> set of arg tuples
        self._dirty = []
        self.version = 0
        self.on_add = on_add

    # -- union-find ---------------------------------------------------------

    def find(self, a):
        while self._parent[a] != a:
            self._parent[a] = self._parent[self._parent[a]]
            a = self._parent[a]
        return a

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return ra
        if rb < ra:
            ra, rb = rb, ra
        self._parent[rb] = ra
        nodes = self._class_nodes.pop(rb, {})
        self._class_nodes.setdefault(ra, {}).update(nodes)
        self._dirty.append(ra)
        self.version += 1
        return ra

    # -- insertion ----------------------------------------------------------

    def add(self, op, children=()):
        node = (op, tuple(self.find(c) for c in children))
        found = self._hashcons.get(node)
        if found is not None:
            return self.find(found)
        cid = len(self._parent)
        self._parent.append(cid)
        self._hashcons[node] = cid
        self._class_nodes[cid] = {node: None}
        self._op_index.setdefault(op, set()).add(cid)
        self.version += 1
        if self.on_add:
            self.on_add(self, op, cid)
        return cid

    def add_int(self, v):
        return self.add(("int", int(v)))

    def assert_fact(self, name, *args):
        tup = tuple(self.find(a) for a in args)
        store = self.facts.setdefault(name, set())
        if tup not in store:
            store.add(tup)
            self.version += 1

    # -- congruence ---------------------------------------------------------

    def rebuild(self):
        while True:
            changed = False
            new_hashcons = {}
            for node, cid in self._hashcons.items():
                canon = (node[0], tuple(self.find(c) for c in node[1]))
                root = self.find(cid)
                other = new_hashcons.get(canon)
                if other is not None and self.find(other) != root:
                    self.union(other, root)
                    changed = True
                new_hashcons[canon] = self.find(root)
            self._hashcons = new_hashcons
            if not changed:
                break
        self._class_nodes = {}
        self._op_index = {}
        for node, cid in self._hashcons.items():
            root = self.find(cid)
            self._class_nodes.setdefault(root, {})[node] = None
            self._op_index.setdefault(node[0], set()).add(root)
        for name, tuples in self.facts.items():
            self.facts[name] = {tuple(self.find(a) for a in t) for t in tuples}
        self._dirty.clear()

    # -- inspection ---------------------------------------------------------

    def class_ids(self):
        return sorted(self._class_nodes)

    def class_nodes(self, cid):
        return sorted(self._class_nodes.get(self.find(cid), ()),
                      key=lambda n: (repr(n[0]), n[1]))

    def classes_with_op(self, op):
        return sorted({self.find(c) for c in self._op_index.get(op, ())})

    def class_int(self, cid):
        for op, _ in self.class_nodes(cid):
            if op[0] == "int":
                return op[1]
        for op, _ in self.class_nodes(cid):
            if op[0] == "imm" and op[1] == "i32":
                return int(op[2])
        return None

    def class_imm(self, cid):
        for op, _ in self.class_nodes(cid):
            if op[0] == "imm":
                return op[1], op[2]
        return None

    @property
    def n_classes(self):
        return len(self._class_nodes)

    @property
    def n_nodes(self):
        return len(self._hashcons)

    def has_fact(self, name, *args):
        tup = tuple(self.find(a) for a in args)
        return tup in {tuple(self.find(a) for a in t)
                       for t in self.facts.get(name, ())}

    def dump(self):
        classes = []
        for cid in self.class_ids():
            classes.append({
                "id": cid,
                "nodes": [{"op": list(op), "children": list(ch)}
                          for op, ch in self.class_nodes(cid)],
            })
        facts = {name: sorted(list(t) for t in tuples)
                 for name, tuples in sorted(self.facts.items())}
        return {"classes": classes, "facts": facts}


# ---------------------------------------------------------------------------
# e-matching


def _match_pattern(g, pat, cid, env):
    cid = g.find(cid)
    if isinstance(pat, PVar):
        bound = env.get(pat.name)
        if bound is not None:
            return [env] if g.find(bound) == cid else []
        out = dict(env)
        out[pat.name] = cid
        return [out]
    assert isinstance(pat, PNode)
    results = []
    for op, children in g.class_nodes(cid):
        if op != pat.op or len(children) != len(pat.children):
            continue
        envs = [env]
        for cpat, ccid in zip(pat.children, children):
            envs = [e2 for e in envs for e2 in _match_pattern(g, cpat, ccid, e)]
            if not envs:
                break
        results.extend(envs)
    return results


def _candidate_classes(g, pat):
    if isinstance(pat, PNode):
        return g.classes_with_op(pat.op)
    return g.class_ids()


def _match_atom(g, atom, env):
    if isinstance(atom, Bind):
        bound = env.get(atom.var)
        if bound is not None:
            return _match_pattern(g, atom.pattern, bound, env)
        out = []
        for cid in _candidate_classes(g, atom.pattern):
            e2 = dict(env)
            e2[atom.var] = cid
            out.extend(_match_pattern(g, atom.pattern, cid, e2))
        return out
    if isinstance(atom, Rel):
        out = []
        for tup in sorted(g.facts.get(atom.name, ())):
            if len(tup) != len(atom.terms):
                continue
            envs = [env]
            for term, cid in zip(atom.terms, tup):
                envs = [e2 for e in envs for e2 in _match_pattern(g, term, cid, e)]
                if not envs:
                    break
            out.extend(envs)
        return out
    if isinstance(atom, Guard):
        return [env] if atom.fn(g, env) else []
    raise TypeError(f"not a query atom: {atom!r}")


def ematch(g, query):
    """All substitutions (variable -> canonical class id) satisfying the
    query's atoms, deduplicated and deterministically ordered."""
    envs = [{}]
    for atom in query:
        envs = [e2 for env in envs for e2 in _match_atom(g, atom, env)]
        if not envs:
            return []
    seen, out = set(), []
    for env in envs:
        key = tuple(sorted((k, g.find(v) if isinstance(v, int) else v)
                           for k, v in env.items()))
        if key not in seen:
            seen.add(key)
            out.append({k: (g.find(v) if isinstance(v, int) else v)
                        for k, v in env.items()})
    out.sort(key=lambda e: tuple(sorted(e.items())))
    return out


# ---------------------------------------------------------------------------
# schedule


@dataclass
class SaturationReport:
    iterations: int = 0
    matches: dict = field(default_factory=dict)  # category -> match count
    applications: dict = field(default_factory=dict)  # category -> growth events
    n_classes: int = 0
    n_nodes: int = 0
    ms: float = 0.0
    budget_exceeded: bool = False

    def as_dict(self, timing=True):
        d = {"iters": self.iterations, "classes": self.n_classes,
             "nodes": self.n_nodes, "matches": dict(self.matches),
             "budget_exceeded": self.budget_exceeded}
        if timing:
            d["ms"] = round(self.ms, 3)
        return d


CATEGORY_ORDER = ("axiomatic", "application", "lowering")


def _apply_rule(g, rule, report):
    matches = ematch(g, rule.query)
    report.matches[rule.category] = report.matches.get(rule.category, 0) + len(matches)
    before = g.version
    for env in matches:
        rule.action(g, env)
    if g.version != before:
        report.applications[rule.category] = (
            report.applications.get(rule.category, 0) + 1)


def run_schedule(g, rules, iterations, node_budget=1_000_000):
    """Fixed-iteration schedule: supporting rules to fixpoint, then one
    round of axiomatic + application + lowering, then rebuild.  Raises
    NodeBudgetExceeded (leaving the partial graph intact) when the class
    count passes the budget."""
    t0 = time.perf_counter()
    report = SaturationReport()
    active = [r for r in rules if r.enabled]
    supporting = [r for r in active if r.category == "supporting"]
    rounds = {cat: [r for r in active if r.category == cat]
              for cat in CATEGORY_ORDER}

    def check_budget():
        if g.n_classes > node_budget:
            report.ms = (time.perf_counter() - t0) * 1e3
            report.n_classes, report.n_nodes = g.n_classes, g.n_nodes
            report.budget_exceeded = True
            raise NodeBudgetExceeded(
                f"{g.n_classes} classes exceed budget {node_budget}")

    for it in range(iterations):
        report.iterations = it + 1
        while True:
            before = g.version
            for rule in supporting:
                _apply_rule(g, rule, report)
            g.rebuild()
            check_budget()
            if g.version == before:
                break
        for cat in CATEGORY_ORDER:
            for rule in rounds[cat]:
                _apply_rule(g, rule, report)
            check_budget()
        before = g.version
        g.rebuild()
        check_budget()
    report.n_classes, report.n_nodes = g.n_classes, g.n_nodes
    report.ms = (time.perf_counter() - t0) * 1e3
    return report


# ---------------------------------------------------------------------------
# extraction


@dataclass
class CostModel:
    """AST-size by default: every node costs 1, intrinsic calls 1 + arity.

    Unresolved data-movement nodes carry a prohibitive cost so extraction
    returns a movement-free (realizable) term whenever one is represented;
    among those the choice is plain AST size."""

    node_cost: object = None
    movement_cost: int = 1000

    def cost(self, op, arity):
        if self.node_cost:
            return self.node_cost(op, arity)
        if op[0] == "l2l":
            return self.movement_cost
        return 1 + arity if op[0] == "call" else 1


def extract_best(g, root, cost_model=None):
    """Minimal-cost term represented in `root`'s class, as a nested
    (op, children) tree.  Ties break on the smallest operator then the
    smallest child ids, so extraction is deterministic."""
    cm = cost_model or CostModel()
    root = g.find(root)
    best = {}  # class -> (cost, op tiebreak key, child ids, node)

    changed = True
    while changed:
        changed = False
        for cid in g.class_ids():
            for op, children in g.class_nodes(cid):
                if any(g.find(c) not in best for c in children):
                    continue
                total = cm.cost(op, len(children)) + sum(
                    best[g.find(c)][0] for c in children)
                cand = (total, repr(op), children)
                cur = best.get(cid)
                if cur is None or cand < cur[:3]:
                    best[cid] = (total, repr(op), children, (op, children))
                    changed = True
    if root not in best:
        raise NoFiniteCost(f"class {root} has no finite-cost term")

    memo = {}

    def build(cid):
        cid = g.find(cid)
        if cid not in memo:
            op, children = best[cid][3]
            memo[cid] = (op, tuple(build(c) for c in children))
        return memo[cid]

    return build(root)
