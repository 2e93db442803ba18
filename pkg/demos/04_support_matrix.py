#!/usr/bin/env python3
"""The MatMul schedule support matrix.

Eight schedules (reference, loop-reordered, preload-A, preload-B; each
with B in the VNNI or the standard row-major layout) run through the
selector.  Everything lowers except preload-B under the standard layout:
the staging copy is lowered in isolation and cannot know the later MatMul
wants the bytes swizzled, so the update statement keeps an unresolved
movement node and selection reports it as failed.
"""

import sys
import time
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(ROOT / "src"))

from tensorsel import interp, ir, selector

ROWS = ("matmul", "matmul_reordered", "matmul_preloadA", "matmul_preloadB")
LABEL = {"matmul": "Reference impl.", "matmul_reordered": "Loop reordering",
         "matmul_preloadA": "Preloading matrix A",
         "matmul_preloadB": "Preloading matrix B"}


def attempt(name):
    prog = ir.parse_program((ROOT / "corpus" / f"{name}.sexp").read_text())
    t0 = time.perf_counter()
    lowered, report = selector.select_program(
        prog, selector.SelectionConfig(target="amx"))
    dt = time.perf_counter() - t0
    if report.ok:
        for seed in range(5):
            ins = interp.random_inputs(prog, seed)
            a = interp.run_program(prog, ins)
            b = interp.run_program(lowered, ins)
            for prm in prog.params:
                assert a[prm.name].data.tobytes() == b[prm.name].data.tobytes()
    return report, dt


def main():
    print(f"{'Implementation':<22} {'VNNI':<14} {'Standard':<14}")
    for row in ROWS:
        cells = []
        for layout_name in ("vnni", "standard"):
            report, dt = attempt(f"{row}_{layout_name}")
            if report.ok:
                cells.append(f"ok ({dt * 1e3:4.0f} ms)")
            else:
                failed = report.failed[0]
                cells.append(f"x (stmt {failed.index})")
        print(f"{LABEL[row]:<22} {cells[0]:<14} {cells[1]:<14}")
    print("\nfailures are clean: the program still validates, runs, and")
    print("difftests (movement markers are value identities); the exit code")
    print("of `tensorsel select` is 1 so schedulers can react.")


if __name__ == "__main__":
    main()
