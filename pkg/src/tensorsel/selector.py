"""Tile-extractor pipeline: data-movement injection, per-statement equality
saturation and extraction, realizability checking, temporary
materialization with hoisting, and shuffle desugaring.

Statements saturate in isolation (one e-graph per statement); tiles are
handed across statements only through explicitly accelerator-located
buffers.  Failure is non-fatal: a statement whose extraction is not
realizable keeps its original form and is reported as failed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from . import interp, ir, layout, rules
from .egraph import CostModel, NodeBudgetExceeded, extract_best, run_schedule


class SelectionError(Exception):
    pass


class LocationConflict(SelectionError):
    pass


@dataclass
class SelectionConfig:
    target: str = "all"  # amx | wmma | all
    iterations: int = 6
    node_budget: int = 1_000_000
    # Speculative offload: lower MatMuls whose destination the user left in
    # memory.  Applies to allocated intermediates by default; widening to
    # user-visible output parameters is opt-in.
    speculative: bool = True
    speculative_user_outputs: bool = False
    desugar: bool = True
    dump_egraph: bool = False

    def __post_init__(self):
        assert self.iterations >= 1
        assert self.node_budget >= 1000


@dataclass
class StatementOutcome:
    index: int
    path: str
    outcome: str  # lowered | unchanged | failed | failed: budget
    intrinsics: list = field(default_factory=list)
    residual: list = field(default_factory=list)
    egraph: dict = field(default_factory=dict)
    dump: dict | None = None


@dataclass
class SelectionReport:
    statements: list = field(default_factory=list)
    temporaries: list = field(default_factory=list)

    @property
    def ok(self):
        return all(not s.outcome.startswith("failed") for s in self.statements)

    @property
    def failed(self):
        return [s for s in self.statements if s.outcome.startswith("failed")]

    def as_dict(self, timing=True, dumps=False):
        stmts = []
        for s in self.statements:
            d = {"index": s.index, "outcome": s.outcome,
                 "intrinsics": list(s.intrinsics),
                 "egraph": {k: v for k, v in s.egraph.items()
                            if timing or k != "ms"}}
            if s.residual:
                d["residual"] = list(s.residual)
            if dumps and s.dump is not None:
                d["egraph_dump"] = s.dump
            stmts.append(d)
        return {"statements": stmts,
                "temporaries": [dict(t) for t in self.temporaries]}

    def to_json(self, timing=True, dumps=False):
        return json.dumps(self.as_dict(timing, dumps), indent=2)


# ---------------------------------------------------------------------------
# data-movement injection


def static_loc(e, buffers):
    """Location an expression's top node produces its value in."""
    if isinstance(e, ir.LocToLoc):
        return e.dst
    if isinstance(e, ir.Load):
        entry = buffers.get(e.buffer)
        return entry[2] if entry else "mem"
    if isinstance(e, ir.Call) and interp.is_intrinsic(e.name):
        return interp.intrinsic_location(e.name)
    return "mem"


def _rebuild(e, f):
    if isinstance(e, ir.Cast):
        return ir.Cast(e.vtype, f(e.operand))
    if isinstance(e, ir.Bop):
        return ir.Bop(e.op, f(e.lhs), f(e.rhs))
    if isinstance(e, ir.Ramp):
        return ir.Ramp(f(e.base), f(e.stride), e.steps)
    if isinstance(e, ir.Broadcast):
        return ir.Broadcast(f(e.operand), e.copies)
    if isinstance(e, ir.VectorReduceAdd):
        return ir.VectorReduceAdd(e.result_lanes, f(e.operand))
    if isinstance(e, ir.LocToLoc):
        return ir.LocToLoc(e.src, e.dst, f(e.operand))
    if isinstance(e, ir.ExprVar):
        return ir.ExprVar(f(e.operand))
    if isinstance(e, ir.Shuffle):
        return ir.Shuffle(f(e.source), e.indices)
    if isinstance(e, ir.Load):
        return ir.Load(e.buffer, e.vtype, f(e.index))
    if isinstance(e, ir.Call):
        return ir.Call(e.name, tuple(f(a) for a in e.args))
    return e


def inject_data_movement(p):
    """Wrap cross-location reads in loc_to_loc and move each store's value
    to its buffer's location.  Reads of a buffer co-located with the store
    destination stay bare (the accumulator pattern); intrinsic calls are
    already location-resolved and left untouched."""
    buffers = ir.buffer_table(p)

    def wrap_reads(e, store_loc):
        if isinstance(e, ir.Load):
            loc = buffers.get(e.buffer, ("", 0, "mem"))[2]
            e = ir.Load(e.buffer, e.vtype, wrap_reads(e.index, "mem"))
            if loc != "mem" and loc != store_loc:
                return ir.LocToLoc(loc, "mem", e)
            return e
        if isinstance(e, ir.Call) and interp.is_intrinsic(e.name):
            return e
        if isinstance(e, ir.LocToLoc):
            return e
        return _rebuild(e, lambda c: wrap_reads(c, store_loc))

    def inject_stmt(s, path):
        if isinstance(s, ir.Store):
            loc = buffers.get(s.buffer, ("", 0, "mem"))[2]
            val = wrap_reads(s.value, loc)
            vloc = static_loc(val, buffers)
            if vloc != loc:
                if vloc != "mem" and loc != "mem":
                    raise LocationConflict(
                        f"{path}: value on {vloc} stored into {loc} buffer "
                        f"{s.buffer!r}")
                val = ir.LocToLoc(vloc, loc, val)
            return ir.Store(s.buffer, wrap_reads(s.index, "mem"), val)
        if isinstance(s, ir.Evaluate):
            return ir.Evaluate(wrap_reads(s.value, "mem"))
        if isinstance(s, ir.For):
            return ir.For(s.var, s.min, s.extent,
                          tuple(inject_stmt(b, f"{path}.body") for b in s.body))
        return s

    body = tuple(inject_stmt(s, f"body[{i}]") for i, s in enumerate(p.body))
    return ir.Program(p.params, body, p.shapes)


# ---------------------------------------------------------------------------
# realizability


def realizability_check(s, buffers):
    """True iff no loc_to_loc node remains and every accelerator-located
    value is produced by an intrinsic or an accelerator-buffer load and
    consumed by an intrinsic tile operand or a co-located store."""
    diags = []

    def check(e, expected, path):
        if isinstance(e, ir.LocToLoc):
            diags.append(f"{path}: unresolved {e.src}->{e.dst} data movement")
            check(e.operand, e.src, path + ".operand")
            return
        if isinstance(e, ir.Call) and interp.is_intrinsic(e.name):
            produced = interp.intrinsic_location(e.name)
            if produced != expected:
                diags.append(f"{path}: {e.name} yields a {produced} value "
                             f"in a {expected} context")
            roles = interp.INTRINSICS[e.name][1]
            accel = "amx" if e.name.startswith("tile") else "wmma"
            for i, (arg, role) in enumerate(zip(e.args, roles)):
                if role == "buffer":
                    continue
                want = accel if role == "tile" else "mem"
                check(arg, want, f"{path}.args[{i}]")
            return
        if isinstance(e, ir.Load):
            loc = buffers.get(e.buffer, ("", 0, "mem"))[2]
            if loc != expected:
                diags.append(f"{path}: load from {loc} buffer {e.buffer!r} "
                             f"in a {expected} context")
            check(e.index, "mem", path + ".index")
            return
        if expected != "mem":
            diags.append(f"{path}: {type(e).__name__} computes in memory "
                         f"but a {expected} value is required")
        for i, c in enumerate(ir._children(e)):
            check(c, "mem", f"{path}[{i}]")

    if isinstance(s, ir.Store):
        loc = buffers.get(s.buffer, ("", 0, "mem"))[2]
        check(s.index, "mem", "index")
        check(s.value, loc, "value")
    elif isinstance(s, ir.Evaluate):
        check(s.value, "mem", "value")
    return not diags, diags


def _movement_nodes(s):
    out = []
    exprs = [s.index, s.value] if isinstance(s, ir.Store) else [s.value]
    for e in exprs:
        for sub in ir.walk_exprs(e):
            if isinstance(sub, ir.LocToLoc):
                out.append(f"{sub.src}->{sub.dst}")
    return out


def _intrinsic_names(s):
    names = []
    exprs = [s.value] if isinstance(s, (ir.Store, ir.Evaluate)) else []
    for e in exprs:
        for sub in ir.walk_exprs(e):
            if isinstance(sub, ir.Call) and interp.is_intrinsic(sub.name):
                names.append(sub.name)
    return sorted(set(names))


def _touches_accel(s, buffers):
    exprs = [s.index, s.value] if isinstance(s, ir.Store) else [s.value]
    if isinstance(s, ir.Store) and buffers.get(s.buffer, ("", 0, "mem"))[2] != "mem":
        return True
    for e in exprs:
        for sub in ir.walk_exprs(e):
            if isinstance(sub, ir.LocToLoc):
                return True
            if isinstance(sub, ir.Load) and \
                    buffers.get(sub.buffer, ("", 0, "mem"))[2] != "mem":
                return True
            if isinstance(sub, ir.Call) and interp.is_intrinsic(sub.name):
                return True
    return False


# ---------------------------------------------------------------------------
# per-statement selection


def select_statement(s, buffers, ruleset, config, param_names=(), path="", index=0):
    outcome = StatementOutcome(index=index, path=path, outcome="unchanged")
    speculative_ok = False
    if isinstance(s, ir.Store) and not _touches_accel(s, buffers):
        is_param = s.buffer in param_names
        speculative_ok = config.speculative and (
            not is_param or config.speculative_user_outputs)
        if not speculative_ok:
            return s, outcome

    g = rules.new_graph()
    root = rules.encode_stmt(g, s)
    rules.seed_facts(g, buffers, ruleset.shapes)
    try:
        rep = run_schedule(g, ruleset.for_target(config.target),
                           config.iterations, config.node_budget)
        outcome.egraph = rep.as_dict()
    except NodeBudgetExceeded:
        outcome.outcome = "failed: budget"
        outcome.egraph = {"classes": g.n_classes, "nodes": g.n_nodes,
                          "budget_exceeded": True}
        return s, outcome
    if config.dump_egraph:
        outcome.dump = g.dump()
    witness = rules.check_type_consistency(g)
    if witness is not None:
        raise SelectionError(f"type facts disagree after saturation: {witness}")

    extracted = rules.decode_term(extract_best(g, root, CostModel()))
    ok, diags = realizability_check(extracted, buffers)

    if not ok:
        outcome.outcome = "failed"
        outcome.residual = _movement_nodes(extracted) or diags
        return s, outcome
    if extracted == s:
        return s, outcome
    intrinsics = _intrinsic_names(extracted)
    outcome.intrinsics = intrinsics
    outcome.outcome = "lowered" if intrinsics else "unchanged"
    return extracted, outcome


# ---------------------------------------------------------------------------
# temporary materialization


def lower_exprvars(p):
    """Materialize each distinct ExprVar operand as one memory temporary:
    an allocation at program top plus one initializing store hoisted to the
    outermost position where the operand's free variables are bound."""
    buffers = ir.buffer_table(p)
    order, names = [], {}

    def note(e):
        for sub in ir.walk_exprs(e):
            if isinstance(sub, ir.ExprVar) and sub.operand not in names:
                names[sub.operand] = f"swizzle{len(names)}"
                order.append(sub.operand)

    for _, s in ir.walk_stmts(p.body):
        if isinstance(s, ir.Store):
            note(s.index)
            note(s.value)
        elif isinstance(s, ir.Evaluate):
            note(s.value)
    if not names:
        return p, []

    def replace(e):
        if isinstance(e, ir.ExprVar):
            t = ir.type_of(e.operand, buffers)
            return ir.Load(names[e.operand], t,
                           ir.Ramp(ir.Imm("i32", 0), ir.Imm("i32", 1), t.lanes))
        if isinstance(e, ir.Call) and interp.is_intrinsic(e.name):
            bufpos = interp.buffer_arg_positions(e.name)
            args = tuple(
                ir.Var(names[a.operand])
                if i in bufpos and isinstance(a, ir.ExprVar) else replace(a)
                for i, a in enumerate(e.args))
            return ir.Call(e.name, args)
        return _rebuild(e, replace)

    # first-use paths, walked the same way the rebuild below walks
    first_use = {}

    def scan(body, prefix, bound):
        for i, s in enumerate(body):
            here = prefix + (i,)
            if isinstance(s, ir.For):
                scan(s.body, here, bound + ((s.var,),))
            elif isinstance(s, (ir.Store, ir.Evaluate)):
                exprs = [s.index, s.value] if isinstance(s, ir.Store) else [s.value]
                for e in exprs:
                    for sub in ir.walk_exprs(e):
                        if isinstance(sub, ir.ExprVar) and sub.operand not in first_use:
                            first_use[sub.operand] = (here, bound)

    scan(p.body, (), ())

    temps, inits = [], {}
    for operand in order:
        name = names[operand]
        t = ir.type_of(operand, buffers)
        use_path, bound_stack = first_use[operand]
        fv = ir.free_vars(operand) - set(buffers)
        depth = 0
        seen = set()
        while depth < len(bound_stack) and not fv <= seen:
            seen |= set(bound_stack[depth])
            depth += 1
        if not fv <= seen:
            depth = len(bound_stack)  # place at the use site
        insert_at = use_path[:depth + 1]
        init = ir.Store(name, ir.Ramp(ir.Imm("i32", 0), ir.Imm("i32", 1), t.lanes),
                        replace(operand))
        inits.setdefault(insert_at, []).append(init)
        temps.append({"name": name, "lanes": t.lanes, "hoist_depth": depth})

    def rebuild(body, prefix):
        out = []
        for i, s in enumerate(body):
            here = prefix + (i,)
            out.extend(inits.get(here, ()))
            if isinstance(s, ir.For):
                out.append(ir.For(s.var, s.min, s.extent, tuple(rebuild(s.body, here))))
            elif isinstance(s, ir.Store):
                out.append(ir.Store(s.buffer, replace(s.index), replace(s.value)))
            elif isinstance(s, ir.Evaluate):
                out.append(ir.Evaluate(replace(s.value)))
            else:
                out.append(s)
        return out

    allocs = tuple(ir.Allocate(names[op], ir.type_of(op, buffers).kind,
                               ir.type_of(op, buffers).lanes, "mem")
                   for op in order)
    return ir.Program(p.params, allocs + tuple(rebuild(p.body, ())), p.shapes), temps


# ---------------------------------------------------------------------------
# shuffle desugaring


def desugar_shuffles(p):
    """Rewrite shuffle intrinsics into Shuffle gathers over plain kernel
    loads (index -1 selecting the constant zero lane), preserving
    semantics."""
    buffers = ir.buffer_table(p)

    def spec_shuffle(e):
        name = e.args[0]
        base = e.args[1]
        if e.name == "ConvolutionShuffle":
            rows, cols = (int(a.value) for a in e.args[2:4])
            spec = layout.ToeplitzSpec(l=rows - cols, k=cols)
        else:
            l, k, p_, s_ = (int(a.value) for a in e.args[2:6])
            spec = layout.ToeplitzSpec(l=l, k=k, s=s_, p=p_)
        total = spec.kernel_length
        bufname = name.name
        kind, length, _ = buffers[bufname]
        base_val = int(base.value) if isinstance(base, ir.Imm) else None
        raw = layout.shuffle_indices_for(
            spec, base_val if base_val is not None else 0,
            length if base_val is not None else total)
        indices = tuple(i - 1 if i >= 1 else -1 for i in raw)
        load = ir.Load(bufname, ir.VecType(kind, total),
                       ir.Ramp(desugar(base), ir.Imm("i32", 1), total))
        return ir.Shuffle(load, indices)

    def desugar(e):
        if isinstance(e, ir.Call):
            if e.name == "KWayInterleave":
                k, row_len = (int(a.value) for a in e.args[0:2])
                v = desugar(e.args[2])
                rows = ir.lanes_of(v) // row_len
                perm = layout.kway_interleave_indices(k, rows, row_len)
                return ir.Shuffle(v, tuple(perm))
            if e.name in ("ConvolutionShuffle", "PolyphaseShuffle"):
                return spec_shuffle(e)
            return ir.Call(e.name, tuple(desugar(a) for a in e.args))
        return _rebuild(e, desugar)

    def on_stmt(s):
        if isinstance(s, ir.Store):
            return ir.Store(s.buffer, desugar(s.index), desugar(s.value))
        if isinstance(s, ir.Evaluate):
            return ir.Evaluate(desugar(s.value))
        if isinstance(s, ir.For):
            return ir.For(s.var, s.min, s.extent, tuple(on_stmt(b) for b in s.body))
        return s

    return ir.Program(p.params, tuple(on_stmt(s) for s in p.body), p.shapes)


# ---------------------------------------------------------------------------
# whole-program pipeline


def select_program(p, config=None, ruleset=None):
    """inject -> per-statement saturate/extract -> materialize temporaries
    -> desugar shuffles -> validate.  The output program is
    interpreter-equivalent to the input; per-statement failures are
    reported, with the original statement kept in place."""
    config = config or SelectionConfig()
    vrep = ir.validate_program(p)
    if not vrep.ok:
        raise SelectionError(f"input does not validate:\n{vrep}")
    if ruleset is None:
        ruleset = rules.build_default_ruleset(
            tuple(rules.DEFAULT_SHAPES) + tuple(p.shapes))
    inj = inject_data_movement(p)
    buffers = ir.buffer_table(inj)
    param_names = {prm.name for prm in p.params}

    outcomes = []
    counter = [0]

    def walk(body, path):
        out = []
        for i, s in enumerate(body):
            here = f"{path}[{i}]"
            if isinstance(s, ir.For):
                out.append(ir.For(s.var, s.min, s.extent,
                                  tuple(walk(s.body, here + ".body"))))
            elif isinstance(s, (ir.Store, ir.Evaluate)):
                idx = counter[0]
                counter[0] += 1
                new_s, oc = select_statement(s, buffers, ruleset, config,
                                             param_names, here, idx)
                outcomes.append(oc)
                out.append(new_s)
            else:
                out.append(s)
        return out

    lowered = ir.Program(inj.params, tuple(walk(inj.body, "body")), inj.shapes)
    lowered, temps = lower_exprvars(lowered)
    if config.desugar:
        lowered = desugar_shuffles(lowered)
    out_rep = ir.validate_program(lowered)
    if not out_rep.ok:
        raise SelectionError(f"selection produced an invalid program:\n{out_rep}")
    return lowered, SelectionReport(statements=outcomes, temporaries=temps)
