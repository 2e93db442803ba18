#!/usr/bin/env python3
"""A tour of the vector IR: lane arithmetic, the textual format, and the
reference interpreter's Ramp/Broadcast semantics.

Multiply-vectorized loops become nested Ramp/Broadcast index vectors: a
Ramp concatenates an arithmetic progression of vectors, a Broadcast
concatenates copies.  Gathering through such an index expresses small
tensor operations; VectorReduceAdd contracts a reduction axis.
"""

import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

import numpy as np

from tensorsel import interp, ir
from tensorsel.ir import (Bop, Broadcast, Imm, Load, Ramp, VecType,
                          VectorReduceAdd)


def i32(v):
    return Imm("i32", v)


def show(title, e, env):
    print(f"\n== {title}")
    print("  ", ir.print_expr(e))
    v = interp.eval_expr(e, env)
    print(f"   lanes={ir.lanes_of(e)} ->", np.array2string(v.data, threshold=40))


def main():
    env = interp.Env(buffers=interp.BufferStore())
    env.buffers["M"] = interp.Buffer("f32", "mem",
                                     np.arange(32, dtype=np.float32))
    env.buffers["A"] = interp.Buffer("f32", "mem",
                                     np.array([1, 2, 3], np.float32))
    env.buffers["B"] = interp.Buffer("f32", "mem",
                                     np.arange(10, dtype=np.float32))

    # a plain vectorized index
    show("dense ramp: one vectorized loop",
         Ramp(i32(0), i32(1), 8), env)

    # two nested vectorized loops: reading a 4x8 row-major matrix
    # column-major, i.e. a 4x8 transpose
    transpose = Load("M", VecType("f32", 32),
                     Ramp(Ramp(i32(0), i32(8), 4), Broadcast(i32(1), 4), 8))
    show("4x8 transpose as a nested gather", transpose, env)

    # a 3-tap convolution of a signal of size 8: broadcast kernel against
    # overlapped signal windows, then reduce groups of 3
    conv = VectorReduceAdd(8, Bop(
        "*",
        Load("A", VecType("f32", 24), Broadcast(Ramp(i32(0), i32(1), 3), 8)),
        Load("B", VecType("f32", 24),
             Ramp(Ramp(i32(0), i32(1), 3), Broadcast(i32(1), 3), 8))))
    show("3-tap convolution via broadcast x windows", conv, env)

    # the textual format round-trips byte-exactly
    text = ir.print_expr(conv)
    prog = ir.parse_program(f"(param A f32 3 mem)\n(param B f32 10 mem)\n"
                            f"(param out f32 8 mem)\n"
                            f"(store out (ramp (imm i32 0) (imm i32 1) 8) {text})")
    print("\n== parse/print round trip")
    print("   reparsed equals original:",
          ir.parse_program(ir.print_program(prog)) == prog)

    # canonical index construction: (extent, stride) axes, outermost first
    idx = ir.canonical_index([(16, 32), (16, 0), (32, 1)], i32(0))
    print("\n== canonical 3-axis MatMul A index")
    print("  ", ir.print_expr(idx))


if __name__ == "__main__":
    main()
