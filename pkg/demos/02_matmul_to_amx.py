#!/usr/bin/env python3
"""From a simplifier-mangled MatMul to AMX intrinsics.

The vectorizer hands us a 16x32 * 32x16 bf16 MatMul whose A index arrived
un-nested (a ramp-of-broadcasts plus a broadcast-of-ramp) and whose B is a
broadcast *of* a load.  The selector injects data-movement markers,
saturates each statement under the rule catalog, and extracts the
intrinsic form: tile_zero / tile_matmul / tile_store, with the
standard-layout B swizzled into a VNNI temporary first.
"""

import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(ROOT / "src"))

from tensorsel import interp, ir, selector


def main():
    prog = ir.parse_program((ROOT / "corpus" / "matmul_standard.sexp").read_text())
    print("== source program (standard-layout B)")
    print(ir.print_program(prog))

    injected = selector.inject_data_movement(prog)
    print("== after data-movement injection (note the bare accumulator read)")
    print(ir.print_stmt(injected.body[2])[:200], "...\n")

    lowered, report = selector.select_program(
        prog, selector.SelectionConfig(target="amx"))
    print("== selection report")
    for s in report.statements:
        stats = s.egraph
        print(f"   statement {s.index}: {s.outcome:9s} "
              f"intrinsics={','.join(s.intrinsics) or '-'} "
              f"({stats.get('classes', '?')} classes, "
              f"{stats.get('nodes', '?')} nodes)")
    for t in report.temporaries:
        print(f"   temporary {t['name']}: {t['lanes']} lanes "
              f"(hoist depth {t['hoist_depth']})")

    print("\n== lowered program")
    print(ir.print_program(lowered))

    print("== differential test, 25 seeds, bitwise")
    for seed in range(25):
        ins = interp.random_inputs(prog, seed)
        a = interp.run_program(prog, ins)
        b = interp.run_program(lowered, ins)
        assert a["matmul_wrapper"].data.tobytes() == \
            b["matmul_wrapper"].data.tobytes(), seed
    print("   bit-exact on all seeds")


if __name__ == "__main__":
    main()
