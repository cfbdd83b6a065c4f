"""Operation recording.

A function is recorded by calling it once on symbolic ``Var`` objects.  Every
arithmetic operation appends a node to a flat instruction list; the result is
an immutable :class:`Tape` that the kernels replay on numeric batches.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

# opcodes; INPUT nodes always occupy the first n_in slots
INPUT = 0
CONST = 1
ADD = 2
SUB = 3
MUL = 4
DIV = 5
NEG = 6
SIN = 7
COS = 8
TAN = 9
EXP = 10
LOG = 11
SQRT = 12
POWC = 13
POW = 14

OP_NAMES = {
    INPUT: "input",
    CONST: "const",
    ADD: "add",
    SUB: "sub",
    MUL: "mul",
    DIV: "div",
    NEG: "neg",
    SIN: "sin",
    COS: "cos",
    TAN: "tan",
    EXP: "exp",
    LOG: "log",
    SQRT: "sqrt",
    POWC: "powc",
    POW: "pow",
}

_UNARY_METHODS = {
    "sin": SIN,
    "cos": COS,
    "tan": TAN,
    "exp": EXP,
    "log": LOG,
    "sqrt": SQRT,
}


class RecordingError(Exception):
    """The recorded function used something the tape cannot represent."""


class EvaluationError(ArithmeticError):
    """Replay produced a non-finite value (domain violation)."""


class Var:
    """Symbolic scalar bound to a node of the recorder that created it."""

    __slots__ = ("_rec", "node")
    __array_priority__ = 1000

    def __init__(self, rec: "_Recorder", node: int):
        self._rec = rec
        self.node = node

    # arithmetic -----------------------------------------------------------
    def __add__(self, other):
        if isinstance(other, np.ndarray):
            return NotImplemented
        return self._rec.binary(ADD, self, other)

    def __radd__(self, other):
        return self._rec.binary(ADD, other, self)

    def __sub__(self, other):
        if isinstance(other, np.ndarray):
            return NotImplemented
        return self._rec.binary(SUB, self, other)

    def __rsub__(self, other):
        return self._rec.binary(SUB, other, self)

    def __mul__(self, other):
        if isinstance(other, np.ndarray):
            return NotImplemented
        return self._rec.binary(MUL, self, other)

    def __rmul__(self, other):
        return self._rec.binary(MUL, other, self)

    def __truediv__(self, other):
        if isinstance(other, np.ndarray):
            return NotImplemented
        return self._rec.binary(DIV, self, other)

    def __rtruediv__(self, other):
        return self._rec.binary(DIV, other, self)

    def __neg__(self):
        return self._rec.unary(NEG, self)

    def __pos__(self):
        return self

    def __pow__(self, other):
        if isinstance(other, Var):
            return self._rec.binary(POW, self, other)
        return self._rec.powc(self, float(other))

    def __rpow__(self, other):
        return self._rec.binary(POW, other, self)

    # numpy object-array loops look these up by name
    def sin(self):
        return self._rec.unary(SIN, self)

    def cos(self):
        return self._rec.unary(COS, self)

    def tan(self):
        return self._rec.unary(TAN, self)

    def exp(self):
        return self._rec.unary(EXP, self)

    def log(self):
        return self._rec.unary(LOG, self)

    def sqrt(self):
        return self._rec.unary(SQRT, self)

    def square(self):
        return self._rec.powc(self, 2.0)

    def __getattr__(self, name):
        if name.startswith("_"):
            raise AttributeError(name)

        def unsupported(*args, **kwargs):
            raise RecordingError(f"unsupported primitive: {name}")

        return unsupported

    # value-dependent control flow cannot be taped
    def _branch(self, *args):
        raise RecordingError("branching on a taped value is not supported")

    __bool__ = _branch
    __lt__ = _branch
    __le__ = _branch
    __gt__ = _branch
    __ge__ = _branch
    __abs__ = _branch
    __float__ = _branch
    __int__ = _branch
    __index__ = _branch

    def __eq__(self, other):
        raise RecordingError("comparing taped values is not supported")

    __ne__ = __eq__
    __hash__ = object.__hash__

    def __repr__(self):
        return f"Var(node={self.node})"


class _Recorder:
    def __init__(self, n_in: int):
        self.op = [INPUT] * n_in
        self.a0 = [-1] * n_in
        self.a1 = [-1] * n_in
        self.val = [float(i) for i in range(n_in)]
        self._consts: dict[tuple[float, float], int] = {}

    def _push(self, op, a0=-1, a1=-1, val=0.0):
        self.op.append(op)
        self.a0.append(a0)
        self.a1.append(a1)
        self.val.append(val)
        return Var(self, len(self.op) - 1)

    def const(self, value: float) -> int:
        value = float(value)
        if not math.isfinite(value):
            raise RecordingError(f"non-finite constant {value!r}")
        key = (value, math.copysign(1.0, value))
        node = self._consts.get(key)
        if node is None:
            node = self._push(CONST, val=value).node
            self._consts[key] = node
        return node

    def _node(self, x) -> int:
        if isinstance(x, Var):
            if x._rec is not self:
                raise RecordingError("mixing values from two recordings")
            return x.node
        if isinstance(x, (int, float, np.integer, np.floating)):
            return self.const(x)
        raise RecordingError(f"unsupported operand type {type(x).__name__}")

    def binary(self, op, a, b):
        return self._push(op, self._node(a), self._node(b))

    def unary(self, op, a):
        return self._push(op, self._node(a))

    def powc(self, a, c: float):
        if not math.isfinite(c):
            raise RecordingError("non-finite exponent")
        return self._push(POWC, self._node(a), -1, c)


@dataclass(frozen=True)
class SparsityPattern:
    """Row-major, duplicate-free list of structurally nonzero entries."""

    rows: np.ndarray
    cols: np.ndarray
    shape: tuple[int, int]

    @property
    def nnz(self) -> int:
        return int(self.rows.size)

    def pairs(self) -> set[tuple[int, int]]:
        return set(zip(self.rows.tolist(), self.cols.tolist()))


@dataclass(frozen=True, eq=False)
class Tape:
    op: np.ndarray
    a0: np.ndarray
    a1: np.ndarray
    val: np.ndarray
    n_in: int
    outputs: np.ndarray
    jac_pattern: SparsityPattern
    hess_pattern: SparsityPattern  # lower triangle of the union over outputs
    name: str = field(default="")

    @property
    def n_out(self) -> int:
        return int(self.outputs.size)

    @property
    def n_nodes(self) -> int:
        return int(self.op.size)

    def __repr__(self):
        return (
            f"Tape({self.name!r}, n_in={self.n_in}, n_out={self.n_out}, "
            f"nodes={self.n_nodes})"
        )


def _flatten_outputs(result, rec: _Recorder) -> list[int]:
    if isinstance(result, Var) or np.isscalar(result):
        items = [result]
    else:
        items = list(np.asarray(result, dtype=object).ravel())
    return [rec._node(r) for r in items]


def _patterns(rec: _Recorder, outputs: list[int], n_in: int):
    n = len(rec.op)
    # only nodes feeding an output matter
    live = np.zeros(n, dtype=bool)
    for o in outputs:
        live[o] = True
    for j in range(n - 1, -1, -1):
        if live[j]:
            if rec.a0[j] >= 0:
                live[rec.a0[j]] = True
            if rec.a1[j] >= 0:
                live[rec.a1[j]] = True

    deps: list[frozenset] = [frozenset()] * n
    hess: set[tuple[int, int]] = set()

    def cross(p, q):
        for i in p:
            for k in q:
                hess.add((max(i, k), min(i, k)))

    empty = frozenset()
    for j in range(n):
        op = rec.op[j]
        if op == INPUT:
            deps[j] = frozenset((j,))
            continue
        if op == CONST:
            deps[j] = empty
            continue
        da = deps[rec.a0[j]]
        db = deps[rec.a1[j]] if rec.a1[j] >= 0 else empty
        deps[j] = da | db
        if not live[j]:
            continue
        if op == MUL:
            cross(da, db)
        elif op == DIV:
            cross(da | db, db)
        elif op == POW:
            cross(da | db, da | db)
        elif op == POWC:
            if rec.val[j] != 1.0:
                cross(da, da)
        elif op in (SIN, COS, TAN, EXP, LOG, SQRT):
            cross(da, da)

    jr, jc = [], []
    for r, o in enumerate(outputs):
        for c in sorted(deps[o]):
            jr.append(r)
            jc.append(c)
    jac = SparsityPattern(
        np.asarray(jr, dtype=np.int64), np.asarray(jc, dtype=np.int64), (len(outputs), n_in)
    )
    hp = sorted(hess)
    hes = SparsityPattern(
        np.asarray([p[0] for p in hp], dtype=np.int64),
        np.asarray([p[1] for p in hp], dtype=np.int64),
        (n_in, n_in),
    )
    return jac, hes


def record(function, input_dim: int, name: str = "") -> Tape:
    """Tape ``function`` of a length-``input_dim`` vector.

    ``function`` receives an object array of :class:`Var` and may return a
    scalar or any array-like of scalars.  Constant outputs are allowed.
    """
    if input_dim < 0:
        raise ValueError("input_dim must be nonnegative")
    rec = _Recorder(input_dim)
    xs = np.empty(input_dim, dtype=object)
    for i in range(input_dim):
        xs[i] = Var(rec, i)
    try:
        result = function(xs)
    except RecordingError:
        raise
    except TypeError as exc:
        # numpy reports a missing object-loop method this way
        raise RecordingError(f"unsupported primitive in recorded function: {exc}") from exc
    outputs = _flatten_outputs(result, rec)
    jac, hes = _patterns(rec, outputs, input_dim)
    return Tape(
        op=np.asarray(rec.op, dtype=np.int64),
        a0=np.asarray(rec.a0, dtype=np.int64),
        a1=np.asarray(rec.a1, dtype=np.int64),
        val=np.asarray(rec.val, dtype=np.float64),
        n_in=input_dim,
        outputs=np.asarray(outputs, dtype=np.int64),
        jac_pattern=jac,
        hess_pattern=hes,
        name=name,
    )
