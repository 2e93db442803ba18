#!/usr/bin/env python3
"""Regenerate the golden corpus under corpus/.

Each program is a fully vectorized source kernel as the vectorizer would
emit it (indices arrive simplifier-mangled, exactly the forms the axiom
rules have to undo).  MatMul kernels target AMX 16x32x16 over bf16; the
convolution/resampling kernels target WMMA fragments over f16.
"""

import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from tensorsel import ir
from tensorsel.ir import (Allocate, Bop, Broadcast, Cast, For, Imm, Load,
                          Param, Program, Ramp, ShapeDecl, Store, Var,
                          VecType, VectorReduceAdd)


def i32(v):
    return Imm("i32", v)


def flat(n, base=None):
    return Ramp(base if base is not None else i32(0), i32(1), n)


def mul(a, b):
    return Bop("*", i32(a) if isinstance(a, int) else a,
               Var(b) if isinstance(b, str) else b)


def f32x(n):
    return VecType("f32", n)


# -- AMX MatMul pieces (M=16, K=32, N=16) -------------------------------------

M, K, N = 16, 32, 16
MN, MKN = M * N, M * K * N


def a_index_unnested(base, stride):
    # simplifier-mangled A access: ramp-of-broadcasts plus broadcast-of-ramp
    return Bop("+",
               Ramp(Broadcast(base, K * N), Broadcast(i32(stride), K * N), M),
               Broadcast(Ramp(i32(0), i32(1), K), M * N))


def b_standard_operand(buf, base, stride):
    # load of a 512-lane row-major slab, cast, then broadcast over x
    idx = Ramp(Ramp(base, i32(stride), K), Broadcast(i32(1), K), N)
    return Broadcast(Cast(f32x(K * N), Load(buf, VecType("bf16", K * N), idx)), M)


def b_vnni_operand(buf, base, vstride):
    pair = Ramp(base, i32(1), 2)
    rows = Ramp(pair, Broadcast(i32(vstride), 2), K // 2)
    cols = Ramp(rows, Broadcast(i32(2), K), N)
    return Cast(f32x(MKN), Load(buf, VecType("bf16", MKN), Broadcast(cols, M)))


def matmul_update(acc_idx, a_buf, a_base, a_stride, b_operand, acc="matmul"):
    a = Cast(f32x(MKN), Load(a_buf, VecType("bf16", MKN),
                             a_index_unnested(a_base, a_stride)))
    acc_load = Load(acc, f32x(MN), acc_idx)
    return Store(acc, acc_idx,
                 Bop("+", VectorReduceAdd(MN, Bop("*", a, b_operand)), acc_load))


def matmul_reference(layout):
    b_op = (b_vnni_operand("B", i32(0), 2 * N) if layout == "vnni"
            else b_standard_operand("B", i32(0), N))
    return Program(
        params=(Param("A", "bf16", M * K), Param("B", "bf16", K * N),
                Param("matmul_wrapper", "f32", MN)),
        body=(Allocate("matmul", "f32", MN, "amx"),
              Store("matmul", flat(MN), Broadcast(Imm("f32", 0.0), MN)),
              matmul_update(flat(MN), "A", i32(0), K, b_op),
              Store("matmul_wrapper", flat(MN), Load("matmul", f32x(MN), flat(MN)))))


def matmul_reordered(layout):
    # two M-tiles x two K-chunks of a 32x64 * 64x16 MatMul, K-outer loop
    a_base = Bop("+", mul(M * 64, "xo"), mul(K, "ko"))
    b_base = mul(K * N, "ko")  # 512*ko in both layouts
    b_op = (b_vnni_operand("B", b_base, 2 * N) if layout == "vnni"
            else b_standard_operand("B", b_base, N))
    tile_idx = flat(MN, mul(MN, "xo"))
    return Program(
        params=(Param("A", "bf16", 32 * 64), Param("B", "bf16", 64 * N),
                Param("matmul_wrapper", "f32", 2 * MN)),
        body=(Allocate("matmul", "f32", 2 * MN, "amx"),
              For("xo", 0, 2, (
                  Store("matmul", tile_idx, Broadcast(Imm("f32", 0.0), MN)),)),
              For("ko", 0, 2, (
                  For("xo", 0, 2, (
                      matmul_update(tile_idx, "A", a_base, 64, b_op),)),)),
              For("xo", 0, 2, (
                  Store("matmul_wrapper", tile_idx,
                        Load("matmul", f32x(MN), tile_idx)),))))


def matmul_preload_a(layout):
    b_op = (b_vnni_operand("B", i32(0), 2 * N) if layout == "vnni"
            else b_standard_operand("B", i32(0), N))
    return Program(
        params=(Param("A", "bf16", M * K), Param("B", "bf16", K * N),
                Param("matmul_wrapper", "f32", MN)),
        body=(Allocate("Astage", "bf16", M * K, "amx"),
              Allocate("matmul", "f32", MN, "amx"),
              Store("Astage", flat(M * K),
                    Load("A", VecType("bf16", M * K), flat(M * K))),
              Store("matmul", flat(MN), Broadcast(Imm("f32", 0.0), MN)),
              matmul_update(flat(MN), "Astage", i32(0), K, b_op),
              Store("matmul_wrapper", flat(MN), Load("matmul", f32x(MN), flat(MN)))))


def matmul_preload_b(layout):
    # B is staged into AMX registers by a dense copy.  In the VNNI layout the
    # staged bytes are exactly the B tile; in the standard layout the later
    # MatMul would need the staged data swizzled, which no local rule can
    # decide, so selection must fail on the update statement.
    b_op = (b_vnni_operand("Bstage", i32(0), 2 * N) if layout == "vnni"
            else b_standard_operand("Bstage", i32(0), N))
    return Program(
        params=(Param("A", "bf16", M * K), Param("B", "bf16", K * N),
                Param("matmul_wrapper", "f32", MN)),
        body=(Allocate("Bstage", "bf16", K * N, "amx"),
              Allocate("matmul", "f32", MN, "amx"),
              Store("Bstage", flat(K * N),
                    Load("B", VecType("bf16", K * N), flat(K * N))),
              Store("matmul", flat(MN), Broadcast(Imm("f32", 0.0), MN)),
              matmul_update(flat(MN), "A", i32(0), K, b_op),
              Store("matmul_wrapper", flat(MN), Load("matmul", f32x(MN), flat(MN)))))


# -- WMMA convolution pieces (m32n8k16: 256 outputs per statement) ------------


def conv_update(i_buf, k_buf, base_i, base_k, taps, stride=1, acc="conv"):
    lanes = 256 * taps
    i_idx = Ramp(Ramp(base_i, i32(1), taps), Broadcast(i32(stride), taps), 256)
    i_op = Cast(f32x(lanes), Load(i_buf, VecType("f16", lanes), i_idx))
    k_load = Load(k_buf, VecType("f16", taps), Ramp(base_k, i32(1), taps))
    k_op = Broadcast(Cast(f32x(taps), k_load), 256)
    acc_load = Load(acc, f32x(256), flat(256))
    return Store(acc, flat(256),
                 Bop("+", VectorReduceAdd(256, Bop("*", i_op, k_op)), acc_load))


def conv_program(params, body, shapes=()):
    prologue = (Allocate("conv", "f32", 256, "wmma"),
                Store("conv", flat(256), Broadcast(Imm("f32", 0.0), 256)))
    epilogue = (Store("output", flat(256), Load("conv", f32x(256), flat(256))),)
    return Program(params, prologue + body + epilogue, shapes)


def conv1d_k8():
    return conv_program(
        (Param("K", "f16", 8), Param("I", "f16", 264), Param("output", "f32", 256)),
        (conv_update("I", "K", i32(0), i32(0), 8),))


def conv1d_k16():
    return conv_program(
        (Param("K", "f16", 16), Param("I", "f16", 272), Param("output", "f32", 256)),
        (For("rx", 0, 2, (
            conv_update("I", "K", mul(8, "rx"), mul(8, "rx"), 8),)),))


def conv2d_outer_ry():
    # 2D 8x8 kernel over a 264-wide image strip: the ry reduction stays a
    # serial outer loop, each iteration a 1D convolution against kernel row ry
    return conv_program(
        (Param("K", "f16", 64), Param("I", "f16", 2112), Param("output", "f32", 256)),
        (For("ry", 0, 8, (
            conv_update("I", "K", mul(264, "ry"), mul(8, "ry"), 8),)),))


def downsample2_1d():
    # stride-2 convolution, 8 taps: windows of 2*8+8 = 24 need the declared
    # 32x24x8 fragment shape (the hardware-16 window cannot hold a strided
    # 8-tap kernel)
    return conv_program(
        (Param("K", "f16", 8), Param("I", "f16", 520), Param("output", "f32", 256)),
        (conv_update("I", "K", i32(0), i32(0), 8, stride=2),),
        shapes=(ShapeDecl("wmma", 32, 24, 8),))


def upsample2_1d():
    # factor-2 upsample with a 24-tap kernel (12 taps per phase); 256 outputs
    # are 32 windows x 4 input positions x 2 interleaved phases
    p, l = 2, 12
    i_idx = Ramp(Ramp(Broadcast(Ramp(i32(0), i32(1), l), p),
                      Broadcast(i32(1), p * l), 4),
                 Broadcast(i32(4), 4 * p * l), 32)
    k_idx = Broadcast(Ramp(Ramp(i32(0), i32(p), l), Broadcast(i32(1), l), p), 128)
    lanes = 32 * 4 * p * l
    i_op = Cast(f32x(lanes), Load("I", VecType("f16", lanes), i_idx))
    k_op = Cast(f32x(lanes), Load("K", VecType("f16", lanes), k_idx))
    acc_load = Load("conv", f32x(256), flat(256))
    update = Store("conv", flat(256),
                   Bop("+", VectorReduceAdd(256, Bop("*", i_op, k_op)), acc_load))
    return conv_program(
        (Param("K", "f16", p * l), Param("I", "f16", 140), Param("output", "f32", 256)),
        (update,))


PROGRAMS = {
    "matmul_vnni": lambda: matmul_reference("vnni"),
    "matmul_standard": lambda: matmul_reference("standard"),
    "matmul_reordered_vnni": lambda: matmul_reordered("vnni"),
    "matmul_reordered_standard": lambda: matmul_reordered("standard"),
    "matmul_preloadA_vnni": lambda: matmul_preload_a("vnni"),
    "matmul_preloadA_standard": lambda: matmul_preload_a("standard"),
    "matmul_preloadB_vnni": lambda: matmul_preload_b("vnni"),
    "matmul_preloadB_standard": lambda: matmul_preload_b("standard"),
    "conv1d_k8": conv1d_k8,
    "conv1d_k16": conv1d_k16,
    "conv2d_outer_ry": conv2d_outer_ry,
    "downsample2_1d": downsample2_1d,
    "upsample2_1d": upsample2_1d,
}

# programs whose selection must fail cleanly (Table I "x" entries)
EXPECTED_FAIL = ("matmul_preloadB_standard",)


def main():
    outdir = Path(__file__).resolve().parent.parent / "corpus"
    outdir.mkdir(exist_ok=True)
    for name, build in PROGRAMS.items():
        prog = build()
        report = ir.validate_program(prog)
        if not report.ok:
            raise SystemExit(f"{name} does not validate:\n{report}")
        (outdir / f"{name}.sexp").write_text(ir.print_program(prog))
        print(f"wrote {name}.sexp")


if __name__ == "__main__":
    main()
