"""Command-line front end: check | run | select | difftest | layout.

Exit codes: 0 success, 1 semantic/selection/divergence failure, 2 usage or
parse failure.  All reports go to stdout, as JSON with --json, human text
otherwise; --no-timing drops wall-clock fields so reports are byte-stable.
The saturation class budget can be overridden with TENSORSEL_NODE_BUDGET.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import interp, ir, layout, selector


@dataclass
class DiffTestResult:
    program: str
    trials: int
    seeds: list = field(default_factory=list)
    divergence: dict | None = None
    selection_ok: bool = True

    def as_dict(self):
        return {"program": self.program, "trials": self.trials,
                "seeds": self.seeds, "selection_ok": self.selection_ok,
                "divergence": self.divergence}


def _load(path):
    try:
        text = Path(path).read_text()
    except OSError as e:
        print(f"error: cannot read {path}: {e}", file=sys.stderr)
        raise SystemExit(2)
    try:
        return ir.parse_program(text)
    except ir.ParseError as e:
        print(f"error: {path}: {e}", file=sys.stderr)
        raise SystemExit(2)


def _check(path):
    prog = _load(path)
    report = ir.validate_program(prog)
    return prog, report


def _node_budget(args):
    env = os.environ.get("TENSORSEL_NODE_BUDGET")
    if env:
        return int(env)
    return args.node_budget


def _config(args):
    return selector.SelectionConfig(
        target=args.target, iterations=args.iters,
        node_budget=_node_budget(args), dump_egraph=args.dump_egraph)


def cmd_check(args):
    _, report = _check(args.file)
    if args.json:
        print(json.dumps({"errors": [list(e) for e in report.errors],
                          "warnings": [list(w) for w in report.warnings]},
                         indent=2))
    else:
        print(report)
    return 0 if report.ok else 1


def cmd_run(args):
    prog, report = _check(args.file)
    if not report.ok:
        print(report, file=sys.stderr)
        return 1
    if args.inputs:
        inputs = interp.load_buffers(args.inputs)
        for prm in prog.params:
            if prm.name not in inputs:
                print(f"error: inputs are missing {prm.name!r}", file=sys.stderr)
                return 1
            if len(inputs[prm.name].data) != prm.length:
                print(f"error: input {prm.name!r} has length "
                      f"{len(inputs[prm.name].data)}, manifest/program disagree",
                      file=sys.stderr)
                return 1
    else:
        inputs = interp.random_inputs(prog, args.seed)
    lints = []
    try:
        out = interp.run_program(prog, inputs, lint_sink=lints)
    except interp.EvalError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    for lint in lints:
        print(f"warning: {lint}", file=sys.stderr)
    if args.output:
        interp.save_buffers(out, args.output)
    summary = {name: {"kind": buf.kind, "length": len(buf.data)}
               for name, buf in sorted(out.items())}
    if args.json:
        print(json.dumps({"buffers": summary}, indent=2))
    else:
        for name, meta in summary.items():
            print(f"{name}: {meta['kind']} x {meta['length']}")
    return 0


def cmd_select(args):
    prog, report = _check(args.file)
    if not report.ok:
        print(report, file=sys.stderr)
        return 1
    config = _config(args)
    try:
        lowered, rep = selector.select_program(prog, config)
    except selector.SelectionError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    if args.output:
        Path(args.output).write_text(ir.print_program(lowered))
    payload = rep.as_dict(timing=not args.no_timing, dumps=args.dump_egraph)
    if args.json:
        print(json.dumps(payload, indent=2))
    else:
        for s in payload["statements"]:
            extra = f" {','.join(s['intrinsics'])}" if s["intrinsics"] else ""
            print(f"statement {s['index']}: {s['outcome']}{extra}")
        for t in payload["temporaries"]:
            print(f"temporary {t['name']}: {t['lanes']} lanes, "
                  f"hoist depth {t['hoist_depth']}")
        if not args.output:
            print(ir.print_program(lowered), end="")
    if not rep.ok:
        for s in rep.failed:
            print(f"failed: statement {s.index} ({s.path}): "
                  f"{'; '.join(s.residual) or s.outcome}", file=sys.stderr)
        return 1
    return 0


def _ulp_equal(a, b, ulps):
    if a.dtype == np.int64:
        return np.array_equal(a, b)
    ai = a.view(np.int32).astype(np.int64)
    bi = b.view(np.int32).astype(np.int64)
    ai = np.where(ai < 0, -(2**31) - ai, ai)
    bi = np.where(bi < 0, -(2**31) - bi, bi)
    return bool(np.all(np.abs(ai - bi) <= ulps))


def run_difftest(prog, name, trials, seed, config, ulps=0, ruleset=None):
    """Select, then run source and lowered programs over `trials` seeds and
    compare every output parameter bitwise (or within --ulp)."""
    result = DiffTestResult(program=name, trials=trials)
    lowered, rep = selector.select_program(prog, config, ruleset=ruleset)
    result.selection_ok = rep.ok
    for t in range(trials):
        s = seed + t
        result.seeds.append(s)
        inputs = interp.random_inputs(prog, s)
        out_a = interp.run_program(prog, inputs)
        out_b = interp.run_program(lowered, inputs)
        for prm in prog.params:
            a, b = out_a[prm.name].data, out_b[prm.name].data
            same = (_ulp_equal(a, b, ulps) if ulps
                    else a.tobytes() == b.tobytes())
            if not same:
                lane = int(np.nonzero(a != b)[0][0])
                result.divergence = {
                    "seed": s, "buffer": prm.name, "lane": lane,
                    "lhs": float(a[lane]), "rhs": float(b[lane])}
                return result, rep
    return result, rep


def cmd_difftest(args):
    prog, report = _check(args.file)
    if not report.ok:
        print(report, file=sys.stderr)
        return 1
    config = _config(args)
    try:
        result, rep = run_difftest(prog, Path(args.file).stem, args.trials,
                                   args.seed, config, args.ulp)
    except (selector.SelectionError, interp.EvalError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    if args.json:
        print(json.dumps(result.as_dict(), indent=2))
    else:
        status = "diverged" if result.divergence else (
            "ok" if result.selection_ok else "selection failed")
        print(f"{result.program}: {result.trials} trials: {status}")
        if result.divergence:
            d = result.divergence
            print(f"  seed {d['seed']} buffer {d['buffer']} lane {d['lane']}: "
                  f"{d['lhs']} vs {d['rhs']}")
    if result.divergence or not result.selection_ok:
        return 1
    return 0


def cmd_layout(args):
    if args.generator == "interleave":
        idx = layout.kway_interleave_indices(args.p or 2, args.k, args.l)
        payload = {"indices": idx}
    else:
        spec = layout.ToeplitzSpec(l=args.l, k=args.k, s=args.s, p=args.p)
        rows = layout.matrix_rows(spec)
        taps = [[layout.kernel_taps(spec, y, x) for x in range(spec.k)]
                for y in range(rows)]
        idx = layout.shuffle_indices_for(spec, 0, spec.kernel_length)
        payload = {"mode": spec.mode, "rows": rows, "cols": spec.k,
                   "taps": taps, "shuffle_indices": idx}
    if args.json:
        print(json.dumps(payload, indent=2))
    elif args.generator == "interleave":
        print(" ".join(str(i) for i in payload["indices"]))
    else:
        for row in payload["taps"]:
            print(" ".join("." if t is None else f"K{t}" for t in row))
        print("indices:", " ".join(str(i) for i in payload["shuffle_indices"]))
    return 0


def _add_common(p):
    p.add_argument("--json", action="store_true", help="JSON output")


def _add_select_opts(p):
    p.add_argument("--target", choices=("amx", "wmma", "all"), default="all")
    p.add_argument("--iters", type=int, default=6,
                   help="saturation iterations (default 6)")
    p.add_argument("--node-budget", type=int, default=1_000_000)
    p.add_argument("--dump-egraph", action="store_true",
                   help="include e-graph dumps in the JSON report")
    p.add_argument("--no-timing", action="store_true",
                   help="omit wall-clock fields for byte-stable reports")


def main(argv=None):
    ap = argparse.ArgumentParser(
        prog="tensorsel",
        description="tensor instruction selection over a small vector IR")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("check", help="parse and validate a program")
    p.add_argument("file")
    _add_common(p)
    p.set_defaults(fn=cmd_check)

    p = sub.add_parser("run", help="interpret a program")
    p.add_argument("file")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--seed", type=int, default=0,
                   help="seeded pseudo-random parameter fill (SplitMix64)")
    g.add_argument("--inputs", help="directory with manifest.json and .bin buffers")
    p.add_argument("-o", "--output", help="directory to write result buffers")
    _add_common(p)
    p.set_defaults(fn=cmd_run)

    p = sub.add_parser("select", help="run the tile-extractor pipeline")
    p.add_argument("file")
    p.add_argument("-o", "--output", help="file for the lowered program")
    _add_select_opts(p)
    _add_common(p)
    p.set_defaults(fn=cmd_select)

    p = sub.add_parser("difftest",
                       help="select, then compare source and lowered programs")
    p.add_argument("file")
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--ulp", type=int, default=0,
                   help="tolerate this many ULPs (default: bitwise)")
    _add_select_opts(p)
    _add_common(p)
    p.set_defaults(fn=cmd_difftest)

    p = sub.add_parser("layout", help="debug the kernel-matrix generators")
    p.add_argument("generator", choices=("toeplitz", "strided", "polyphase",
                                         "interleave"))
    p.add_argument("--l", type=int, required=True, help="kernel taps per phase")
    p.add_argument("--k", type=int, required=True, help="output block width")
    p.add_argument("--s", type=int, default=1, help="stride (downsample)")
    p.add_argument("--p", type=int, default=1, help="phases (upsample)")
    _add_common(p)
    p.set_defaults(fn=cmd_layout)

    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        raise SystemExit(2 if e.code not in (0, None) else 0)
    if getattr(args, "generator", None) == "strided" and args.s == 1:
        args.s = 2
    if getattr(args, "generator", None) == "polyphase" and args.p == 1:
        args.p = 2
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
