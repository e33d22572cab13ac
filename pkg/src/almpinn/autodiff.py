"""Scalar automatic differentiation with second-order input jets and a reverse tape.

Two derivative mechanisms cooperate here:

* ``Jet2`` carries a value together with its first and second derivatives with
  respect to the two network inputs (x, t).  Jets are propagated *forward*
  through every operation, so a single evaluation of the network yields
  u, u_x, u_t, u_xx, u_xt, u_tt.
* The ``Tape`` records every operation so that one *reverse* sweep yields the
  gradient of a scalar loss with respect to all trainable parameters.

Tape values are float64 numpy arrays.  A node may hold a batch axis: a batch
of N points is semantically N independent scalar tapes run in lockstep, and
reductions over the batch are explicit ``mean`` nodes.  Gradients are
accumulated in node order, so results are deterministic for a fixed tape.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "Tape",
    "Var",
    "Jet2",
    "JetDomainError",
    "NonFiniteError",
    "seed_input",
    "jet_apply",
    "backward",
    "grad_check",
    "vtanh",
    "vsquare",
    "vexp",
    "vln",
    "vsin",
    "vabs",
    "vmean",
    "vclamp_min",
]

JET_OPS = ("add", "sub", "mul", "scale", "tanh", "square", "exp", "ln", "sin")


class JetDomainError(ValueError):
    """Operand outside an operation's domain (e.g. ln of a non-positive value)."""


class NonFiniteError(ArithmeticError):
    """A composition produced a non-finite value; never propagated silently."""


def _as_value(x) -> np.ndarray:
    return np.asarray(x, dtype=np.float64)


class Tape:
    """Append-only record of operations, topologically ordered by construction.

    Parameters are registered leaves; ``backward`` returns one gradient entry
    per registered parameter element, in registration order.  A tape has a
    single writer and is rebuilt for every loss evaluation.
    """

    __slots__ = ("vals", "ops", "srcs", "aux", "params")

    def __init__(self) -> None:
        self.vals: list[np.ndarray] = []
        self.ops: list[str] = []
        self.srcs: list[tuple[int, ...]] = []
        self.aux: list = []
        self.params: list[int] = []

    def __len__(self) -> int:
        return len(self.vals)

    def _push(self, op: str, value, srcs: tuple[int, ...] = (), aux=None) -> "Var":
        self.vals.append(value)
        self.ops.append(op)
        self.srcs.append(srcs)
        self.aux.append(aux)
        return Var(self, len(self.vals) - 1)

    def const(self, value) -> "Var":
        return self._push("const", _as_value(value))

    def param(self, value: np.ndarray) -> "Var":
        """Register a trainable leaf. The array is referenced, not copied."""
        var = self._push("param", _as_value(value))
        self.params.append(var.i)
        return var

    def n_param_entries(self) -> int:
        return sum(self.vals[i].size for i in self.params)


class Var:
    """Handle to one tape node; arithmetic on handles appends new nodes."""

    __slots__ = ("tape", "i")
    # keep numpy from swallowing Var operands into object arrays
    __array_ufunc__ = None

    def __init__(self, tape: Tape, i: int):
        self.tape = tape
        self.i = i

    @property
    def value(self) -> np.ndarray:
        return self.tape.vals[self.i]

    @property
    def shape(self):
        return np.shape(self.value)

    def item(self) -> float:
        return float(self.value)

    # -- arithmetic --------------------------------------------------------
    def _binary(self, op: str, other: "Var") -> "Var":
        t = self.tape
        a, b = t.vals[self.i], t.vals[other.i]
        if op == "add":
            v = a + b
        elif op == "sub":
            v = a - b
        elif op == "mul":
            v = a * b
        else:
            v = a / b
        return t._push(op, v, (self.i, other.i))

    def __add__(self, other):
        if isinstance(other, Var):
            return self._binary("add", other)
        return self.tape._push("addc", self.value + other, (self.i,), other)

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Var):
            return self._binary("sub", other)
        return self.tape._push("addc", self.value - other, (self.i,), -other)

    def __rsub__(self, other):
        # other - self == -self + other
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, Var):
            return self._binary("mul", other)
        return self.tape._push("mulc", self.value * other, (self.i,), other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Var):
            return self._binary("div", other)
        return self.tape._push("mulc", self.value * (1.0 / other), (self.i,), 1.0 / other)

    def __rtruediv__(self, other):
        return self.tape.const(other)._binary("div", self)

    def __neg__(self):
        return self.tape._push("mulc", -self.value, (self.i,), -1.0)

    # -- elementwise functions ----------------------------------------------
    def tanh(self):
        return self.tape._push("tanh", np.tanh(self.value), (self.i,))

    def square(self):
        return self.tape._push("square", np.square(self.value), (self.i,))

    def exp(self):
        return self.tape._push("exp", np.exp(self.value), (self.i,))

    def ln(self):
        if np.any(self.value <= 0.0):
            raise JetDomainError("ln requires strictly positive values")
        return self.tape._push("ln", np.log(self.value), (self.i,))

    def sin(self):
        return self.tape._push("sin", np.sin(self.value), (self.i,))

    def cos(self):
        return self.tape._push("cos", np.cos(self.value), (self.i,))

    def abs(self):
        return self.tape._push("abs", np.abs(self.value), (self.i,))

    def clamp_min(self, floor: float):
        return self.tape._push("clamp_min", np.maximum(self.value, floor), (self.i,), floor)

    def mean(self):
        return self.tape._push("mean", np.mean(self.value), (self.i,))

    def reshape(self, shape):
        return self.tape._push("reshape", self.value.reshape(shape), (self.i,), np.shape(self.value))

    def __getitem__(self, k: int):
        return self.tape._push("getitem", self.value[k], (self.i,), k)


# -- tape-level matrix / jet-stack operations -------------------------------
#
# The network hot path keeps the six jet components of a whole point batch in
# one (6, n, width) array so each layer is a handful of BLAS calls instead of
# thousands of scalar nodes.  This is the lockstep-batched realization of the
# per-point scalar tape; the arithmetic is identical.


def matmul(a: Var, b: Var) -> Var:
    """a @ b with a of shape (n, i) or (6, n, i) and b of shape (i, o)."""
    t = a.tape
    return t._push("matmul", a.value @ b.value, (a.i, b.i))


def jet_linear(a: Var, w: Var, b: Var) -> Var:
    """Affine layer on a jet stack: components (6, n, i) -> (6, n, o).

    The bias feeds only component 0 (the value); derivative components are
    linear maps without offset.
    """
    t = a.tape
    out = a.value @ w.value
    out[0] += b.value
    return t._push("jet_linear", out, (a.i, w.i, b.i))


def jet_tanh(a: Var) -> Var:
    """tanh applied through second order on a jet stack (6, n, w)."""
    t = a.tape
    av = a.value
    T = np.tanh(av[0])
    fp = 1.0 - T * T
    fpp = -2.0 * T * fp
    out = np.empty_like(av)
    out[0] = T
    out[1] = fp * av[1]
    out[2] = fp * av[2]
    out[3] = fpp * np.square(av[1]) + fp * av[3]
    out[4] = fpp * av[1] * av[2] + fp * av[4]
    out[5] = fpp * np.square(av[2]) + fp * av[5]
    return t._push("jet_tanh", out, (a.i,), (T, fp, fpp))


def jet_component(a: Var, k: int) -> Var:
    """Extract one jet component (6, n, w) -> (n, w)."""
    return a.tape._push("jet_component", a.value[k], (a.i,), k)


# -- jets --------------------------------------------------------------------


@dataclass
class Jet2:
    """Value plus first/second derivatives w.r.t. the inputs x and t.

    Fields may be ``Var`` handles (training path) or plain floats/arrays
    (oracle path); the propagation rules are written generically over both.
    """

    v: object
    gx: object
    gt: object
    hxx: object
    hxt: object
    htt: object

    def fields(self) -> tuple:
        return (self.v, self.gx, self.gt, self.hxx, self.hxt, self.htt)

    def values(self) -> tuple:
        return tuple(f.value if isinstance(f, Var) else np.asarray(f, dtype=np.float64)
                     for f in self.fields())


def _check_finite_jet(jet: Jet2, op: str) -> Jet2:
    for name, val in zip(("v", "gx", "gt", "hxx", "hxt", "htt"), jet.values()):
        if not np.all(np.isfinite(val)):
            raise NonFiniteError(f"non-finite {name} produced by jet op {op!r}")
    return jet


def seed_input(x, t, tape: Tape | None = None) -> tuple[Jet2, Jet2]:
    """Input jets with unit first-derivative seeds: (x,1,0,0,0,0) and (t,0,1,0,0,0)."""
    xv, tv = _as_value(x), _as_value(t)
    if not (np.all(np.isfinite(xv)) and np.all(np.isfinite(tv))):
        raise JetDomainError("seed_input requires finite inputs")
    if tape is None:
        zero, one = np.zeros_like(xv)[()], np.ones_like(xv)[()]
        return (Jet2(xv[()], one, zero, zero, zero, zero),
                Jet2(tv[()], zero, one, zero, zero, zero))
    zero = tape.const(np.zeros_like(xv))
    one = tape.const(np.ones_like(xv))
    zt = tape.const(np.zeros_like(tv))
    ot = tape.const(np.ones_like(tv))
    return (Jet2(tape.const(xv), one, zt, zero, zero, zero),
            Jet2(tape.const(tv), zero, ot, zero, zero, zero))


# Generic numeric helpers: dispatch between Var and plain numpy values so the
# same loss/residual formulas serve training tapes and closed-form oracles.

def vtanh(x):
    return x.tanh() if isinstance(x, Var) else np.tanh(x)


def vsquare(x):
    return x.square() if isinstance(x, Var) else np.square(x)


def vexp(x):
    return x.exp() if isinstance(x, Var) else np.exp(x)


def vln(x):
    if isinstance(x, Var):
        return x.ln()
    if np.any(np.asarray(x) <= 0.0):
        raise JetDomainError("ln requires strictly positive values")
    return np.log(x)


def vsin(x):
    return x.sin() if isinstance(x, Var) else np.sin(x)


def vcos(x):
    return x.cos() if isinstance(x, Var) else np.cos(x)


def vabs(x):
    return x.abs() if isinstance(x, Var) else np.abs(x)


def vmean(x):
    return x.mean() if isinstance(x, Var) else np.mean(x)


def vclamp_min(x, floor: float):
    return x.clamp_min(floor) if isinstance(x, Var) else np.maximum(x, floor)


def _jet_unary(op: str, a: Jet2) -> Jet2:
    """Second-order chain rule for f(a): h-components pick up f''·(first)²."""
    if op == "tanh":
        f = vtanh(a.v)
        fp = 1.0 + vsquare(f) * (-1.0)
        fpp = f * fp * (-2.0)
    elif op == "square":
        f = vsquare(a.v)
        fp = a.v * 2.0
        fpp = None  # constant 2
    elif op == "exp":
        f = vexp(a.v)
        fp = f
        fpp = f
    elif op == "ln":
        f = vln(a.v)
        fp = 1.0 / a.v
        fpp = -vsquare(fp) if isinstance(fp, Var) else -np.square(fp)
    elif op == "sin":
        f = vsin(a.v)
        fp = vcos(a.v)
        fpp = -f if isinstance(f, Var) else -np.asarray(f)
    else:  # pragma: no cover - guarded by jet_apply
        raise ValueError(op)
    if fpp is None:
        hxx = (vsquare(a.gx) + a.v * a.hxx) * 2.0
        hxt = (a.gx * a.gt + a.v * a.hxt) * 2.0
        htt = (vsquare(a.gt) + a.v * a.htt) * 2.0
    else:
        hxx = fpp * vsquare(a.gx) + fp * a.hxx
        hxt = fpp * (a.gx * a.gt) + fp * a.hxt
        htt = fpp * vsquare(a.gt) + fp * a.htt
    return Jet2(f, fp * a.gx, fp * a.gt, hxx, hxt, htt)


def _jet_mul(a: Jet2, b: Jet2) -> Jet2:
    return Jet2(
        a.v * b.v,
        a.gx * b.v + a.v * b.gx,
        a.gt * b.v + a.v * b.gt,
        a.hxx * b.v + (a.gx * b.gx) * 2.0 + a.v * b.hxx,
        a.hxt * b.v + a.gx * b.gt + a.gt * b.gx + a.v * b.hxt,
        a.htt * b.v + (a.gt * b.gt) * 2.0 + a.v * b.htt,
    )


def jet_apply(op: str, operands: Sequence[Jet2], tape: Tape | None = None,
              const: float | None = None) -> Jet2:
    """Apply one operation to jets with exact second-order propagation.

    ``tape`` is carried by the Var fields themselves; the argument is accepted
    for callers that keep it explicit.  ``const`` is the factor for ``scale``.
    """
    del tape  # Var operands already reference their tape
    if op not in JET_OPS:
        raise ValueError(f"unknown jet op {op!r}")
    arity = 1 if op in ("tanh", "square", "exp", "ln", "sin", "scale") else 2
    if len(operands) != arity:
        raise ValueError(f"jet op {op!r} expects {arity} operand(s), got {len(operands)}")
    with np.errstate(over="ignore", invalid="ignore"):
        if op == "add":
            a, b = operands
            out = Jet2(*(fa + fb for fa, fb in zip(a.fields(), b.fields())))
        elif op == "sub":
            a, b = operands
            out = Jet2(*(fa - fb for fa, fb in zip(a.fields(), b.fields())))
        elif op == "mul":
            out = _jet_mul(*operands)
        elif op == "scale":
            if const is None:
                raise ValueError("scale requires a constant factor")
            out = Jet2(*(f * const for f in operands[0].fields()))
        else:
            if op == "ln":
                val = operands[0].v.value if isinstance(operands[0].v, Var) else operands[0].v
                if np.any(np.asarray(val) <= 0.0):
                    raise JetDomainError("ln requires a strictly positive jet value")
            out = _jet_unary(op, operands[0])
    return _check_finite_jet(out, op)


# -- reverse sweep -----------------------------------------------------------


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Reduce a broadcast gradient back to the operand's shape."""
    if np.shape(grad) == shape:
        return grad
    grad = np.asarray(grad)
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, s in enumerate(shape):
        if s == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def backward(tape: Tape, loss_node: int | Var) -> np.ndarray:
    """Gradient of a scalar node w.r.t. every registered parameter entry.

    Visits each node exactly once in reverse topological order; deterministic
    for a fixed tape.
    """
    idx = loss_node.i if isinstance(loss_node, Var) else int(loss_node)
    if np.size(tape.vals[idx]) != 1:
        raise ValueError("backward requires a scalar loss node")
    bar: list = [None] * len(tape.vals)
    bar[idx] = np.ones_like(tape.vals[idx])

    def acc(node: int, grad: np.ndarray) -> None:
        grad = _unbroadcast(grad, np.shape(tape.vals[node]))
        if bar[node] is None:
            bar[node] = np.array(grad, dtype=np.float64, copy=True)
        else:
            bar[node] += grad

    for i in range(idx, -1, -1):
        g = bar[i]
        if g is None:
            continue
        op = tape.ops[i]
        if op in ("const", "param"):
            continue
        src = tape.srcs[i]
        a = tape.vals[src[0]]
        if op == "add":
            acc(src[0], g)
            acc(src[1], g)
        elif op == "sub":
            acc(src[0], g)
            acc(src[1], -g)
        elif op == "mul":
            acc(src[0], g * tape.vals[src[1]])
            acc(src[1], g * a)
        elif op == "div":
            b = tape.vals[src[1]]
            acc(src[0], g / b)
            acc(src[1], -g * tape.vals[i] / b)
        elif op == "addc":
            acc(src[0], g)
        elif op == "mulc":
            acc(src[0], g * tape.aux[i])
        elif op == "tanh":
            acc(src[0], g * (1.0 - np.square(tape.vals[i])))
        elif op == "square":
            acc(src[0], g * 2.0 * a)
        elif op == "exp":
            acc(src[0], g * tape.vals[i])
        elif op == "ln":
            acc(src[0], g / a)
        elif op == "sin":
            acc(src[0], g * np.cos(a))
        elif op == "cos":
            acc(src[0], -g * np.sin(a))
        elif op == "abs":
            acc(src[0], g * np.sign(a))
        elif op == "clamp_min":
            acc(src[0], g * (a > tape.aux[i]))
        elif op == "mean":
            acc(src[0], np.full(np.shape(a), float(g) / max(np.size(a), 1)))
        elif op == "reshape":
            acc(src[0], np.reshape(g, tape.aux[i]))
        elif op == "getitem":
            full = np.zeros_like(a)
            full[tape.aux[i]] = g
            acc(src[0], full)
        elif op == "matmul":
            b = tape.vals[src[1]]
            acc(src[0], g @ b.T)
            if a.ndim == 2:
                acc(src[1], a.T @ g)
            else:
                acc(src[1], np.tensordot(a, g, axes=([0, 1], [0, 1])))
        elif op == "jet_linear":
            w = tape.vals[src[1]]
            acc(src[0], g @ w.T)
            acc(src[1], np.tensordot(a, g, axes=([0, 1], [0, 1])))
            acc(src[2], g[0].sum(axis=0))
        elif op == "jet_tanh":
            T, fp, fpp = tape.aux[i]
            a1, a2 = a[1], a[2]
            dfp = -2.0 * T * fp
            dfpp = -2.0 * np.square(fp) + 4.0 * np.square(T) * fp
            ga = np.empty_like(a)
            ga[0] = (g[0] * fp
                     + dfp * (g[1] * a1 + g[2] * a2 + g[3] * a[3] + g[4] * a[4] + g[5] * a[5])
                     + dfpp * (g[3] * np.square(a1) + g[4] * a1 * a2 + g[5] * np.square(a2)))
            ga[1] = g[1] * fp + fpp * (2.0 * a1 * g[3] + a2 * g[4])
            ga[2] = g[2] * fp + fpp * (a1 * g[4] + 2.0 * a2 * g[5])
            ga[3] = g[3] * fp
            ga[4] = g[4] * fp
            ga[5] = g[5] * fp
            acc(src[0], ga)
        elif op == "jet_component":
            full = np.zeros_like(a)
            full[tape.aux[i]] = g
            acc(src[0], full)
        else:  # pragma: no cover
            raise ValueError(f"no backward rule for op {op!r}")

    pieces = []
    for p in tape.params:
        g = bar[p]
        if g is None:
            pieces.append(np.zeros(tape.vals[p].size))
        else:
            pieces.append(np.asarray(g, dtype=np.float64).ravel())
    if not pieces:
        return np.zeros(0)
    return np.concatenate(pieces)


def grad_check(f: Callable[[np.ndarray], tuple[float, np.ndarray]],
               theta: np.ndarray, step: float = 1e-5) -> float:
    """Max relative error between f's analytic gradient and central differences.

    ``f`` maps a parameter vector to ``(value, gradient)``.  The relative
    error per entry is |analytic - fd| / max(1, |fd|).
    """
    theta = np.asarray(theta, dtype=np.float64)
    _, analytic = f(theta)
    analytic = np.asarray(analytic, dtype=np.float64)
    worst = 0.0
    for k in range(theta.size):
        bumped = theta.copy()
        bumped[k] = theta[k] + step
        hi, _ = f(bumped)
        bumped[k] = theta[k] - step
        lo, _ = f(bumped)
        fd = (hi - lo) / (2.0 * step)
        err = abs(analytic[k] - fd) / max(1.0, abs(fd))
        worst = max(worst, err)
    return worst
