"""Reference interpreter: the ground-truth oracle for every differential test.

Values are carried as float32 (bf16/f16 elements are re-rounded into the
carrier at casts and at tile/fragment load boundaries) or as exact integers
for i32.  Every reduction — VectorReduceAdd, tile_matmul, wmma_mma — sums
its group/k dimension left to right, so a correctly matched lowering is
bit-exact against its source program.

Accelerator tiles and fragments are modeled as plain vectors; loc_to_loc is
the identity on values.  Emulated intrinsics accept any registered (M, K, N)
shape; strict mode admits only the hardware shapes.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import ir

HARDWARE_SHAPES = (
    ir.ShapeDecl("amx", 16, 32, 16),
    ir.ShapeDecl("wmma", 32, 16, 8),
    ir.ShapeDecl("wmma", 16, 16, 16),
)


class EvalError(Exception):
    pass


class OutOfBounds(EvalError):
    def __init__(self, buffer, index):
        super().__init__(f"buffer {buffer!r} index {index} out of bounds")
        self.buffer, self.index = buffer, index


class DivideByZero(EvalError):
    pass


class UnknownIntrinsic(EvalError):
    pass


class ShapeUnregistered(EvalError):
    pass


class I32Overflow(EvalError):
    pass


# ---------------------------------------------------------------------------
# scalar rounding


def round_bf16(x):
    """Round-to-nearest-even into the bf16 value set, in the f32 carrier."""
    a = np.asarray(x, dtype=np.float32)
    bits = a.view(np.uint32)
    rounded = ((bits.astype(np.uint64) + 0x7FFF + ((bits >> 16) & 1)) >> 16) << 16
    out = rounded.astype(np.uint32).view(np.float32)
    out = np.where(np.isnan(a), np.float32(np.nan), out)
    return out if out.ndim else np.float32(out)


def round_f16(x):
    """Round-to-nearest-even into the IEEE binary16 value set (f32 carrier)."""
    a = np.asarray(x, dtype=np.float32)
    with np.errstate(over="ignore"):
        out = a.astype(np.float16).astype(np.float32)
    return out if out.ndim else np.float32(out)


def round_to_kind(x, kind):
    if kind == "bf16":
        return round_bf16(x)
    if kind == "f16":
        return round_f16(x)
    if kind == "f32":
        return np.asarray(x, dtype=np.float32)
    raise EvalError(f"not a float kind: {kind}")


# ---------------------------------------------------------------------------
# deterministic pseudo-random fill


class SplitMix64:
    """Documented generator for seeded buffer fills."""

    MASK = 0xFFFFFFFFFFFFFFFF

    def __init__(self, seed):
        self.state = seed & self.MASK

    def next_u64(self):
        self.state = (self.state + 0x9E3779B97F4A7C15) & self.MASK
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & self.MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & self.MASK
        return z ^ (z >> 31)

    def uniform(self):
        """Uniform float in [-1, 1]."""
        return (self.next_u64() >> 11) / float(1 << 53) * 2.0 - 1.0

    def small_int(self):
        """Uniform integer in [0, 16)."""
        return self.next_u64() >> 60


# ---------------------------------------------------------------------------
# runtime state


@dataclass
class VectorValue:
    kind: str
    data: np.ndarray  # float32 for float kinds, int64 for i32

    @property
    def lanes(self):
        return len(self.data)


@dataclass
class Buffer:
    kind: str
    location: str
    data: np.ndarray


class BufferStore(dict):
    """Map buffer name -> Buffer."""


@dataclass
class Env:
    buffers: BufferStore
    bindings: dict = field(default_factory=dict)
    exprvar_cache: dict = field(default_factory=dict)
    shapes: frozenset = frozenset((s.target, s.m, s.k, s.n) for s in HARDWARE_SHAPES)
    lints: list = field(default_factory=list)


def _dtype_of(kind):
    return np.int64 if kind == "i32" else np.float32


def _check_i32(arr):
    if arr.size and (arr.max() >= 2**31 or arr.min() < -(2**31)):
        raise I32Overflow(f"i32 range exceeded (max {arr.max()}, min {arr.min()})")
    return arr


def _foldl(groups):
    """Left-to-right sum along axis 1 of a 2-D array."""
    acc = groups[:, 0].copy()
    for j in range(1, groups.shape[1]):
        acc = acc + groups[:, j]
    return acc


# ---------------------------------------------------------------------------
# expression evaluation


def eval_expr(e, env):
    if isinstance(e, ir.Imm):
        if e.kind == "i32":
            return VectorValue("i32", _check_i32(np.array([int(e.value)], np.int64)))
        return VectorValue(e.kind, np.array([round_to_kind(e.value, e.kind)], np.float32))
    if isinstance(e, ir.Var):
        if e.name not in env.bindings:
            raise EvalError(f"unbound variable {e.name!r}")
        return VectorValue("i32", np.array([env.bindings[e.name]], np.int64))
    if isinstance(e, ir.Load):
        idx = eval_expr(e.index, env)
        return _gather(e.buffer, idx.data, env, e.vtype.kind)
    if isinstance(e, ir.Cast):
        v = eval_expr(e.operand, env)
        return _cast(v, e.vtype.kind)
    if isinstance(e, ir.Bop):
        return _bop(e.op, eval_expr(e.lhs, env), eval_expr(e.rhs, env))
    if isinstance(e, ir.Ramp):
        base = eval_expr(e.base, env)
        stride = eval_expr(e.stride, env)
        steps = np.arange(e.steps).reshape(-1, 1)
        if base.kind == "i32":
            out = _check_i32((base.data + steps * stride.data).reshape(-1))
        else:
            out = (base.data + steps.astype(np.float32) * stride.data).reshape(-1)
        return VectorValue(base.kind, out)
    if isinstance(e, ir.Broadcast):
        v = eval_expr(e.operand, env)
        return VectorValue(v.kind, np.tile(v.data, e.copies))
    if isinstance(e, ir.VectorReduceAdd):
        v = eval_expr(e.operand, env)
        if v.lanes % e.result_lanes:
            raise EvalError(f"cannot reduce {v.lanes} lanes to {e.result_lanes}")
        groups = v.data.reshape(e.result_lanes, -1)
        out = _foldl(groups)
        if v.kind == "i32":
            _check_i32(out)
        return VectorValue(v.kind, out)
    if isinstance(e, ir.LocToLoc):
        return eval_expr(e.operand, env)
    if isinstance(e, ir.ExprVar):
        key = (e.operand, tuple(sorted(
            (n, env.bindings[n]) for n in ir.free_vars(e.operand) if n in env.bindings)))
        if key not in env.exprvar_cache:
            env.exprvar_cache[key] = eval_expr(e.operand, env)
        return env.exprvar_cache[key]
    if isinstance(e, ir.Shuffle):
        src = eval_expr(e.source, env)
        out = np.empty(len(e.indices), dtype=src.data.dtype)
        for pos, i in enumerate(e.indices):
            out[pos] = 0 if i == -1 else src.data[i]
        return VectorValue(src.kind, out)
    if isinstance(e, ir.Call):
        return eval_intrinsic(e.name, e.args, env)
    raise EvalError(f"cannot evaluate {e!r}")


def _gather(name, idx, env, kind=None):
    if name not in env.buffers:
        raise EvalError(f"load from undeclared buffer {name!r}")
    buf = env.buffers[name]
    if idx.size and (idx.min() < 0 or idx.max() >= len(buf.data)):
        bad = idx[(idx < 0) | (idx >= len(buf.data))][0]
        raise OutOfBounds(name, int(bad))
    return VectorValue(kind or buf.kind, buf.data[idx].copy())


def _cast(v, kind):
    if kind == "i32":
        if v.kind == "i32":
            return v
        return VectorValue("i32", _check_i32(np.trunc(v.data).astype(np.int64)))
    if v.kind == "i32":
        return VectorValue(kind, round_to_kind(v.data.astype(np.float32), kind))
    return VectorValue(kind, round_to_kind(v.data, kind))


def _bop(op, a, b):
    if a.kind != b.kind:
        raise EvalError(f"{op} over {a.kind} and {b.kind}")
    if a.kind == "i32":
        x, y = a.data, b.data
        if op == "+":
            out = x + y
        elif op == "-":
            out = x - y
        elif op == "*":
            out = x * y
        elif op in ("/", "%"):
            if np.any(y == 0):
                raise DivideByZero(f"integer {op} by zero")
            r = np.mod(x, np.abs(y))  # Euclidean: 0 <= r < |y|
            out = r if op == "%" else (x - r) // y
        else:
            raise EvalError(f"unknown op {op}")
        return VectorValue("i32", _check_i32(out))
    x, y = a.data, b.data
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        if op == "+":
            out = x + y
        elif op == "-":
            out = x - y
        elif op == "*":
            out = x * y
        elif op == "/":
            out = x / y
        elif op == "%":
            out = np.fmod(x, y)
        else:
            raise EvalError(f"unknown op {op}")
    return VectorValue(a.kind, out)


# ---------------------------------------------------------------------------
# intrinsic catalog
#
# Canonical hardware shapes: AMX 16x32x16 over bf16 (B tiles in the VNNI
# layout), WMMA m32n8k16 and m16n16k16 over f16 (row-major fragments).
# Loads and stores carry explicit (rows, cols) so a lowered program is
# self-describing; matmul shapes are derived from operand lane counts.

_LOAD_SIG = ("buffer", "expr", "expr", "imm", "imm")

INTRINSICS = {
    # name: (result location, arg roles)
    "tile_zero": ("amx", ("imm", "imm")),
    "tile_load": ("amx", _LOAD_SIG),
    "tile_matmul": ("amx", ("tile", "tile", "tile")),
    "tile_store": ("amx", ("buffer", "expr", "expr", "imm", "tile")),
    "wmma_load_a": ("wmma", _LOAD_SIG),
    "wmma_load_b": ("wmma", _LOAD_SIG),
    "wmma_load_c": ("wmma", _LOAD_SIG),
    "wmma_zero": ("wmma", ("imm", "imm")),
    "wmma_mma": ("wmma", ("tile", "tile", "tile")),
    "wmma_store": ("wmma", ("buffer", "expr", "expr", "imm", "tile")),
    "ConvolutionShuffle": ("mem", ("buffer", "expr", "imm", "imm")),
    "KWayInterleave": ("mem", ("imm", "imm", "expr")),
    "PolyphaseShuffle": ("mem", ("buffer", "expr", "imm", "imm", "imm", "imm")),
}

SHUFFLE_INTRINSICS = ("ConvolutionShuffle", "KWayInterleave", "PolyphaseShuffle")


def is_intrinsic(name):
    return name in INTRINSICS


def intrinsic_location(name):
    if name not in INTRINSICS:
        raise UnknownIntrinsic(name)
    if name in ("tile_store", "wmma_store"):
        return "mem"  # side effect into memory; the produced value is spent
    return INTRINSICS[name][0]


def buffer_arg_positions(name):
    return tuple(i for i, role in enumerate(INTRINSICS[name][1]) if role == "buffer")


def tile_arg_positions(name):
    return tuple(i for i, role in enumerate(INTRINSICS[name][1]) if role == "tile")


def _imm_int(e):
    if isinstance(e, ir.Imm) and e.kind == "i32":
        return int(e.value)
    raise ir.LaneMismatch(f"expected an i32 immediate argument, got {e!r}")


def _buffer_name(e):
    if isinstance(e, ir.Var):
        return e.name
    raise EvalError(f"expected a buffer reference, got {e!r}")


def intrinsic_result_lanes(call, path="e"):
    name, args = call.name, call.args
    if name not in INTRINSICS:
        raise ir.LaneMismatch(f"unknown intrinsic {name!r}", path)
    if len(args) != len(INTRINSICS[name][1]):
        raise ir.LaneMismatch(
            f"{name} takes {len(INTRINSICS[name][1])} arguments, got {len(args)}", path)
    if name in ("tile_zero", "wmma_zero"):
        return _imm_int(args[0]) * _imm_int(args[1])
    if name in ("tile_load", "wmma_load_a", "wmma_load_b", "wmma_load_c"):
        return _imm_int(args[3]) * _imm_int(args[4])
    if name == "tile_matmul":
        return ir.lanes_of(args[0], path + ".acc")
    if name == "wmma_mma":
        return ir.lanes_of(args[2], path + ".acc")
    if name in ("tile_store", "wmma_store"):
        return ir.lanes_of(args[4], path + ".tile")
    if name == "ConvolutionShuffle":
        return _imm_int(args[2]) * _imm_int(args[3])
    if name == "KWayInterleave":
        return ir.lanes_of(args[2], path + ".input")
    if name == "PolyphaseShuffle":
        l, k, p, s = (_imm_int(a) for a in args[2:6])
        from .layout import ToeplitzSpec, matrix_rows
        return matrix_rows(ToeplitzSpec(l=l, k=k, s=s, p=p)) * k
    raise ir.LaneMismatch(f"unhandled intrinsic {name!r}", path)


def intrinsic_result_kind(call, buffers=None, path="e"):
    name = call.name
    if name in ("tile_zero", "wmma_zero", "tile_matmul", "wmma_mma",
                "tile_store", "wmma_store", "wmma_load_c"):
        return "f32"
    if name in ("tile_load", "ConvolutionShuffle", "PolyphaseShuffle",
                "wmma_load_a", "wmma_load_b"):
        if isinstance(call.args[0], ir.ExprVar):  # pre-materialization form
            return ir._kind_of(call.args[0].operand, buffers, path)
        bufname = _buffer_name(call.args[0])
        if buffers is not None:
            if bufname not in buffers:
                raise ir.UnknownBuffer(bufname)
            return buffers[bufname][0]
        return "f16" if name.startswith("wmma") else "bf16"
    if name == "KWayInterleave":
        return ir._kind_of(call.args[2], buffers, path)
    raise UnknownIntrinsic(name)


def _derive_mkn(la, lb, lc):
    """Unique (M, K, N) with M*K = la, K*N = lb, M*N = lc, or None."""
    if la * lc % lb or lb * lc % la or la * lb % lc:
        return None
    m2, n2, k2 = la * lc // lb, lb * lc // la, la * lb // lc
    m, n, k = math.isqrt(m2), math.isqrt(n2), math.isqrt(k2)
    if m * m != m2 or n * n != n2 or k * k != k2 or not (m and n and k):
        return None
    return m, k, n


def _tile_gather(env, name, base, stride, rows, cols, kind=None):
    buf_idx = base + stride * np.arange(rows).reshape(-1, 1) + np.arange(cols)
    return _gather(name, buf_idx.reshape(-1), env, kind)


def _scalar_int(v):
    if v.kind != "i32" or v.lanes != 1:
        raise EvalError(f"expected a scalar i32 argument, got {v.kind}x{v.lanes}")
    return int(v.data[0])


def eval_intrinsic(name, args, env):
    if name not in INTRINSICS:
        raise UnknownIntrinsic(name)

    if name in ("tile_zero", "wmma_zero"):
        m, n = _imm_int(args[0]), _imm_int(args[1])
        return VectorValue("f32", np.zeros(m * n, np.float32))

    if name in ("tile_load", "wmma_load_a", "wmma_load_b", "wmma_load_c"):
        base = _scalar_int(eval_expr(args[1], env))
        stride = _scalar_int(eval_expr(args[2], env))
        rows, cols = _imm_int(args[3]), _imm_int(args[4])
        if isinstance(args[0], ir.ExprVar):
            # pre-materialization form: gather from the would-be temporary
            src = eval_expr(args[0], env)
            idx = (base + stride * np.arange(rows).reshape(-1, 1)
                   + np.arange(cols)).reshape(-1)
            if idx.min() < 0 or idx.max() >= src.lanes:
                raise OutOfBounds("<exprvar>", int(idx.max()))
            v = VectorValue(src.kind, src.data[idx].copy())
        else:
            v = _tile_gather(env, _buffer_name(args[0]), base, stride, rows, cols)
        if v.kind != "i32":
            v = VectorValue(v.kind, round_to_kind(v.data, v.kind))
        return v

    if name in ("tile_store", "wmma_store"):
        buf = _buffer_name(args[0])
        base = _scalar_int(eval_expr(args[1], env))
        stride = _scalar_int(eval_expr(args[2], env))
        cols = _imm_int(args[3])
        tile = eval_expr(args[4], env)
        if cols < 1 or tile.lanes % cols:
            raise EvalError(f"{name}: {tile.lanes}-lane tile not divisible "
                            f"into {cols}-wide rows")
        rows = tile.lanes // cols
        idx = (base + stride * np.arange(rows).reshape(-1, 1) + np.arange(cols)).reshape(-1)
        _scatter(buf, idx, tile, env)
        return tile

    if name in ("tile_matmul", "wmma_mma"):
        if name == "tile_matmul":
            c, a, b = (eval_expr(x, env) for x in args)
        else:
            a, b, c = (eval_expr(x, env) for x in args)
        mkn = _derive_mkn(a.lanes, b.lanes, c.lanes)
        if mkn is None:
            raise ShapeUnregistered(
                f"{name}: no (M,K,N) fits lanes A={a.lanes} B={b.lanes} C={c.lanes}")
        m, k, n = mkn
        target = "amx" if name == "tile_matmul" else "wmma"
        if (target, m, k, n) not in env.shapes:
            raise ShapeUnregistered(f"{name}: shape {target} {m}x{k}x{n} not registered")
        am = a.data.reshape(m, k)
        if name == "tile_matmul":
            # b holds the VNNI pack: b[(k//2)*2N + 2j + k%2] = B[k][j]
            bv = b.data.reshape(k // 2, 2 * n)
            bm = np.empty((k, n), np.float32)
            bm[0::2, :] = bv[:, 0::2]
            bm[1::2, :] = bv[:, 1::2]
        else:
            bm = b.data.reshape(k, n)
        prods = am[:, :, None] * bm[None, :, :]  # (m, k, n), f32
        s = prods[:, 0, :].copy()
        for kk in range(1, k):
            s = s + prods[:, kk, :]
        out = c.data.reshape(m, n) + s
        return VectorValue("f32", out.reshape(-1))

    if name == "ConvolutionShuffle":
        buf = _buffer_name(args[0])
        base = _scalar_int(eval_expr(args[1], env))
        rows, cols = _imm_int(args[2]), _imm_int(args[3])
        from .layout import ToeplitzSpec
        return _shuffle_matrix(env, buf, base, ToeplitzSpec(l=rows - cols, k=cols))

    if name == "PolyphaseShuffle":
        buf = _buffer_name(args[0])
        base = _scalar_int(eval_expr(args[1], env))
        l, k, p, s = (_imm_int(a) for a in args[2:6])
        from .layout import ToeplitzSpec
        return _shuffle_matrix(env, buf, base, ToeplitzSpec(l=l, k=k, s=s, p=p))

    if name == "KWayInterleave":
        k = _imm_int(args[0])
        row_len = _imm_int(args[1])
        v = eval_expr(args[2], env)
        if v.lanes % (k * row_len):
            raise EvalError(f"KWayInterleave: {v.lanes} lanes not divisible")
        rows = v.lanes // row_len
        inp = v.data.reshape(rows, row_len)
        out = np.empty((rows // k, k * row_len), v.data.dtype)
        for d in range(k):
            out[:, d::k] = inp[d::k, :]
        return VectorValue(v.kind, out.reshape(-1))

    raise UnknownIntrinsic(name)


def _shuffle_matrix(env, bufname, base, spec):
    from .layout import kernel_taps, matrix_rows
    buf = env.buffers.get(bufname)
    if buf is None:
        raise EvalError(f"kernel buffer {bufname!r} undeclared")
    total = spec.kernel_length
    if base < 0 or base + total > len(buf.data):
        raise OutOfBounds(bufname, base + total - 1)
    kern = buf.data[base:base + total]
    rows = matrix_rows(spec)
    out = np.zeros((rows, spec.k), buf.data.dtype)
    for y in range(rows):
        for x in range(spec.k):
            t = kernel_taps(spec, y, x)
            if t is not None:
                out[y, x] = kern[t]
    return VectorValue(buf.kind, out.reshape(-1))


def _scatter(name, idx, value, env):
    if name not in env.buffers:
        raise EvalError(f"store into undeclared buffer {name!r}")
    buf = env.buffers[name]
    if idx.size and (idx.min() < 0 or idx.max() >= len(buf.data)):
        bad = idx[(idx < 0) | (idx >= len(buf.data))][0]
        raise OutOfBounds(name, int(bad))
    data = value.data
    if buf.kind == "i32" and value.kind != "i32":
        data = np.trunc(data).astype(np.int64)
    elif buf.kind != "i32" and value.kind == "i32":
        data = data.astype(np.float32)
    uniq = np.unique(idx)
    if len(uniq) != len(idx):
        env.lints.append(f"store into {name!r} has colliding lanes (last wins)")
        for pos in range(len(idx)):  # last-lane-wins, explicitly ordered
            buf.data[idx[pos]] = data[pos]
    else:
        buf.data[idx] = data


# ---------------------------------------------------------------------------
# program execution


def shape_registry(p, extra_shapes=(), strict=False):
    if strict:
        decls = HARDWARE_SHAPES
    else:
        decls = tuple(HARDWARE_SHAPES) + tuple(p.shapes) + tuple(extra_shapes)
    return frozenset((s.target, s.m, s.k, s.n) for s in decls)


def run_program(p, inputs, extra_shapes=(), strict=False, lint_sink=None):
    """Execute `p` over the given parameter buffers; returns the final
    buffer state (parameters, allocations, and temporaries).  Runtime lints
    (store-lane collisions) are appended to `lint_sink` when given."""
    store = BufferStore()
    for prm in p.params:
        if prm.name not in inputs:
            raise EvalError(f"missing input buffer {prm.name!r}")
        src = inputs[prm.name]
        data = np.array(src.data if isinstance(src, Buffer) else src,
                        dtype=_dtype_of(prm.kind))
        if len(data) != prm.length:
            raise EvalError(
                f"input {prm.name!r} has length {len(data)}, declared {prm.length}")
        store[prm.name] = Buffer(prm.kind, prm.location, data)
    env = Env(buffers=store, shapes=shape_registry(p, extra_shapes, strict))
    if lint_sink is not None:
        env.lints = lint_sink
    _exec_stmts(p.body, env, "body")
    return store


def _exec_stmts(body, env, path):
    for i, s in enumerate(body):
        sp = f"{path}[{i}]"
        try:
            if isinstance(s, ir.Allocate):
                env.buffers[s.name] = Buffer(
                    s.kind, s.location, np.zeros(s.length, _dtype_of(s.kind)))
            elif isinstance(s, ir.Store):
                idx = eval_expr(s.index, env)
                val = eval_expr(s.value, env)
                if idx.lanes != val.lanes:
                    raise EvalError(
                        f"store index {idx.lanes} lanes, value {val.lanes}")
                _scatter(s.buffer, idx.data, val, env)
            elif isinstance(s, ir.Evaluate):
                eval_expr(s.value, env)
            elif isinstance(s, ir.For):
                for v in range(s.min, s.min + s.extent):
                    env.bindings[s.var] = v
                    _exec_stmts(s.body, env, sp)
                env.bindings.pop(s.var, None)
            else:
                raise EvalError(f"not a statement: {s!r}")
        except EvalError as err:
            if not getattr(err, "stmt_path", None):
                err.stmt_path = sp
                err.args = (f"{sp}: {err.args[0]}",) if err.args else (sp,)
            raise


def random_inputs(p, seed):
    """Deterministic parameter fill: one SplitMix64 stream per program seed,
    consumed in parameter declaration order."""
    rng = SplitMix64(seed)
    out = {}
    for prm in p.params:
        if prm.kind == "i32":
            data = np.array([rng.small_int() for _ in range(prm.length)], np.int64)
        else:
            raw = np.array([rng.uniform() for _ in range(prm.length)], np.float32)
            data = round_to_kind(raw, prm.kind)
        out[prm.name] = Buffer(prm.kind, prm.location, data)
    return out


# ---------------------------------------------------------------------------
# buffer directory I/O

_NP_DTYPE = {"f32": "<f4", "f16": "<f2", "i32": "<i4", "bf16": "<u2"}


def save_buffers(store, dirpath):
    d = Path(dirpath)
    d.mkdir(parents=True, exist_ok=True)
    manifest = []
    for name in sorted(store):
        buf = store[name]
        manifest.append({"name": name, "kind": buf.kind, "length": len(buf.data),
                         "location": buf.location})
        if buf.kind == "bf16":
            raw = (buf.data.astype(np.float32).view(np.uint32) >> 16).astype("<u2")
        else:
            raw = buf.data.astype(_NP_DTYPE[buf.kind])
        (d / f"{name}.bin").write_bytes(raw.tobytes())
    (d / "manifest.json").write_text(json.dumps({"buffers": manifest}, indent=2) + "\n")


def load_buffers(dirpath):
    d = Path(dirpath)
    manifest = json.loads((d / "manifest.json").read_text())
    out = BufferStore()
    for entry in manifest["buffers"]:
        name, kind = entry["name"], entry["kind"]
        raw = np.frombuffer((d / f"{name}.bin").read_bytes(), _NP_DTYPE[kind])
        if len(raw) != entry["length"]:
            raise EvalError(f"{name}.bin has {len(raw)} elements, "
                            f"manifest says {entry['length']}")
        if kind == "bf16":
            data = (raw.astype(np.uint32) << 16).view(np.float32).copy()
        elif kind == "f16":
            data = raw.astype(np.float32)
        elif kind == "i32":
            data = raw.astype(np.int64)
        else:
            data = raw.astype(np.float32)
        out[name] = Buffer(kind, entry.get("location", "mem"), data)
    return out
