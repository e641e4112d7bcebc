"""Path functionals as closed expression trees.

A :class:`Node` tree describes ``F: D([0, inf)) -> R``.  Leaves read the path
(``Coordinate``, ``RunningSup``, ``TimeIntegral``), constants, the free
scalar slot of a parametric functional (``Slot``) or an argument of a
cylindrical function (``Arg``).  Trees are immutable, hashable and serialise
to node-tagged JSON, so one tree can be evaluated identically on samples from
any backend.

Evaluation is vectorised over a :class:`~levymalliavin.canonical_path.JumpBatch`.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import kernels
from .canonical_path import JumpBatch, JumpList, _interp_brownian, as_batch
from .errors import DomainError, HorizonExceeded
from .levy_model import LevyTriplet

DEFAULT_GRID_DIVISIONS = 1024


def _bump(a):
    a = np.asarray(a, dtype=float)
    inside = np.abs(a) < 1.0
    safe = np.where(inside, a, 0.0)
    return np.where(inside, np.exp(-1.0 / (1.0 - safe * safe)), 0.0)


UNARY: dict[str, Callable] = {
    "neg": np.negative,
    "exp": np.exp,
    "sin": np.sin,
    "cos": np.cos,
    "tanh": np.tanh,
    "bump": _bump,  # smooth, supported on (-1, 1)
}

BINARY = ("+", "-", "*", "/")


@dataclass
class _Ctx:
    batch: JumpBatch | None
    triplet: LevyTriplet | None
    n: int
    args: tuple | None = None
    slot: np.ndarray | None = None


class Node:
    """Base class; arithmetic operators build new trees."""

    def _eval(self, ctx: _Ctx, loc: str):
        raise NotImplementedError

    def children(self) -> tuple["Node", ...]:
        return ()

    def referenced_times(self) -> set[float]:
        out = set()
        for c in self.children():
            out |= c.referenced_times()
        return out

    def has_slot(self) -> bool:
        return any(c.has_slot() for c in self.children())

    def reads_path(self) -> bool:
        return any(c.reads_path() for c in self.children())

    def depth(self) -> int:
        return 1 + max((c.depth() for c in self.children()), default=0)

    def to_dict(self) -> dict:
        raise NotImplementedError

    def __add__(self, other):
        return BinOp("+", self, wrap(other))

    def __radd__(self, other):
        return BinOp("+", wrap(other), self)

    def __sub__(self, other):
        return BinOp("-", self, wrap(other))

    def __rsub__(self, other):
        return BinOp("-", wrap(other), self)

    def __mul__(self, other):
        return BinOp("*", self, wrap(other))

    def __rmul__(self, other):
        return BinOp("*", wrap(other), self)

    def __truediv__(self, other):
        return BinOp("/", self, wrap(other))

    def __rtruediv__(self, other):
        return BinOp("/", wrap(other), self)

    def __neg__(self):
        return Unary("neg", self)

    def __pow__(self, exponent):
        return Pow(self, exponent)


def wrap(x) -> Node:
    if isinstance(x, Node):
        return x
    if isinstance(x, (int, float, np.floating, np.integer)):
        return Const(float(x))
    raise TypeError(f"cannot use {type(x).__name__} in a functional")


@dataclass(frozen=True, eq=True)
class Const(Node):
    value: float

    def _eval(self, ctx, loc):
        return np.full(ctx.n, self.value)

    def to_dict(self):
        return {"node": "const", "value": self.value}


@dataclass(frozen=True)
class Arg(Node):
    """The ``index``-th argument of the enclosing cylindrical function."""

    index: int

    def _eval(self, ctx, loc):
        if ctx.args is None:
            raise ValueError(f"Arg({self.index}) used outside a cylindrical function at {loc}")
        return ctx.args[self.index]

    def to_dict(self):
        return {"node": "arg", "index": self.index}


@dataclass(frozen=True)
class Slot(Node):
    """The free scalar ``x`` of a parametric functional ``G(path, x)``."""

    def _eval(self, ctx, loc):
        if ctx.slot is None:
            raise ValueError(f"unbound slot at {loc}; use parametric_eval or bind")
        return ctx.slot

    def has_slot(self):
        return True

    def to_dict(self):
        return {"node": "slot"}


@dataclass(frozen=True)
class Coordinate(Node):
    """Projection ``h -> h(t)``."""

    t: float

    def _eval(self, ctx, loc):
        return ctx.batch.path_values(ctx.triplet, self.t)

    def referenced_times(self):
        return {self.t}

    def reads_path(self):
        return True

    def to_dict(self):
        return {"node": "coord", "t": self.t}


def _grid_sup_integral(batch: JumpBatch, triplet: LevyTriplet, H: float, step: float):
    """Grid + jump-time discretisation used when a Brownian part is present."""
    drift = triplet.gamma - batch.partition.compensator
    times, sizes = batch.time_sorted
    grid = np.append(np.arange(0.0, H, step), H)
    sup = np.empty(len(batch))
    integral = np.empty(len(batch))
    for i in range(len(batch)):
        lo, hi = batch.offsets[i], batch.offsets[i + 1]
        tj, xj = times[lo:hi], sizes[lo:hi]
        keep = tj <= H
        tj, xj = tj[keep], xj[keep]
        pts = np.union1d(grid, tj)
        cum = np.concatenate([[0.0], np.cumsum(xj)])
        J = cum[np.searchsorted(tj, pts, side="right")]
        W = np.array([_interp_brownian(batch.brownian[i : i + 1], batch.brownian_step, p)[0] for p in pts])
        X = drift * pts + J + triplet.sigma * W
        J_left = cum[np.searchsorted(tj, pts, side="left")]
        X_left = drift * pts + J_left + triplet.sigma * W
        sup[i] = max(X.max(), X_left.max())
        integral[i] = np.sum((X[:-1] + X_left[1:]) * 0.5 * np.diff(pts))
    return sup, integral


def _sup_integral(ctx: _Ctx, H: float, step: float | None):
    batch, triplet = ctx.batch, ctx.triplet
    batch._check_time(H)
    key = ("supint", H, step, triplet.gamma, triplet.sigma)
    hit = batch._cache.get(key)
    if hit is None:
        if triplet.sigma == 0.0:
            times, sizes = batch.time_sorted
            drift = triplet.gamma - batch.partition.compensator
            hit = kernels.sup_integral(batch.offsets, times, sizes, drift, H)
        else:
            hit = _grid_sup_integral(batch, triplet, H, step or batch.horizon / DEFAULT_GRID_DIVISIONS)
        batch._cache[key] = hit
    return hit


@dataclass(frozen=True)
class RunningSup(Node):
    """``sup_{0 <= s <= horizon} h(s)``."""

    horizon: float
    step: float | None = None

    def _eval(self, ctx, loc):
        return _sup_integral(ctx, self.horizon, self.step)[0]

    def referenced_times(self):
        return {self.horizon}

    def reads_path(self):
        return True

    def to_dict(self):
        d = {"node": "sup", "horizon": self.horizon}
        if self.step is not None:
            d["step"] = self.step
        return d


@dataclass(frozen=True)
class TimeIntegral(Node):
    """``int_0^horizon h(s) ds``."""

    horizon: float
    step: float | None = None

    def _eval(self, ctx, loc):
        return _sup_integral(ctx, self.horizon, self.step)[1]

    def referenced_times(self):
        return {self.horizon}

    def reads_path(self):
        return True

    def to_dict(self):
        d = {"node": "integral", "horizon": self.horizon}
        if self.step is not None:
            d["step"] = self.step
        return d


@dataclass(frozen=True)
class BinOp(Node):
    op: str
    left: Node
    right: Node

    def __post_init__(self):
        if self.op not in BINARY:
            raise ValueError(f"unknown operator {self.op!r}")

    def children(self):
        return (self.left, self.right)

    def _eval(self, ctx, loc):
        a = self.left._eval(ctx, loc + "/left")
        b = self.right._eval(ctx, loc + "/right")
        if self.op == "+":
            return a + b
        if self.op == "-":
            return a - b
        if self.op == "*":
            return a * b
        if np.any(b == 0.0):
            raise DomainError("division by zero", loc or "/")
        return a / b

    def to_dict(self):
        return {"node": "binop", "op": self.op, "left": self.left.to_dict(), "right": self.right.to_dict()}


@dataclass(frozen=True)
class Unary(Node):
    """A scalar function applied to a subtree (``Compose``)."""

    fn: str
    arg: Node

    def __post_init__(self):
        if self.fn not in UNARY:
            raise ValueError(f"unknown function {self.fn!r}")

    def children(self):
        return (self.arg,)

    def _eval(self, ctx, loc):
        return UNARY[self.fn](self.arg._eval(ctx, loc + f"/{self.fn}"))

    def to_dict(self):
        return {"node": "unary", "fn": self.fn, "arg": self.arg.to_dict()}


@dataclass(frozen=True)
class Pow(Node):
    arg: Node
    exponent: int

    def __post_init__(self):
        if int(self.exponent) != self.exponent or self.exponent < 0:
            raise ValueError("exponent must be a non-negative integer")
        object.__setattr__(self, "exponent", int(self.exponent))

    def children(self):
        return (self.arg,)

    def _eval(self, ctx, loc):
        a = self.arg._eval(ctx, loc + "/pow")
        out = np.ones_like(a)
        for _ in range(self.exponent):
            out = out * a
        return out

    def to_dict(self):
        return {"node": "pow", "arg": self.arg.to_dict(), "exponent": self.exponent}


@dataclass(frozen=True)
class Cylindrical(Node):
    """``phi(h(t_1), ..., h(t_m))`` with ``phi`` a closed scalar expression in ``Arg``s."""

    phi: Node
    times: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "times", tuple(float(t) for t in self.times))
        if self.phi.reads_path() or self.phi.has_slot():
            raise ValueError("phi must be built from Arg, Const and scalar operations only")
        used = _arg_indices(self.phi)
        if used and max(used) >= len(self.times):
            raise ValueError(f"phi uses Arg({max(used)}) but only {len(self.times)} times given")

    def _eval(self, ctx, loc):
        args = tuple(ctx.batch.path_values(ctx.triplet, t) for t in self.times)
        return eval_scalar(self.phi, args, ctx.n, loc + "/phi")

    def referenced_times(self):
        return set(self.times)

    def reads_path(self):
        return True

    def to_dict(self):
        return {"node": "cyl", "phi": self.phi.to_dict(), "times": list(self.times)}


@dataclass(frozen=True)
class Bind(Node):
    """``h -> g(h, f(h))``: the slot of ``g`` receives the value of ``f``."""

    g: Node
    f: Node

    def children(self):
        return (self.g, self.f)

    def has_slot(self):
        return self.f.has_slot()

    def _eval(self, ctx, loc):
        y = self.f._eval(ctx, loc + "/f")
        inner = _Ctx(ctx.batch, ctx.triplet, ctx.n, ctx.args, np.broadcast_to(y, (ctx.n,)))
        return self.g._eval(inner, loc + "/g")

    def to_dict(self):
        return {"node": "bind", "g": self.g.to_dict(), "f": self.f.to_dict()}


def _arg_indices(node: Node) -> set[int]:
    if isinstance(node, Arg):
        return {node.index}
    out = set()
    for c in node.children():
        out |= _arg_indices(c)
    return out


# Type aliases for the two roles a tree can play.
PathFunctional = Node
ParametricFunctional = Node


def from_dict(d: dict) -> Node:
    """Inverse of ``Node.to_dict``."""
    kind = d.get("node")
    if kind == "const":
        return Const(float(d["value"]))
    if kind == "arg":
        return Arg(int(d["index"]))
    if kind == "slot":
        return Slot()
    if kind == "coord":
        return Coordinate(float(d["t"]))
    if kind == "sup":
        return RunningSup(float(d["horizon"]), d.get("step"))
    if kind == "integral":
        return TimeIntegral(float(d["horizon"]), d.get("step"))
    if kind == "binop":
        return BinOp(d["op"], from_dict(d["left"]), from_dict(d["right"]))
    if kind == "unary":
        return Unary(d["fn"], from_dict(d["arg"]))
    if kind == "pow":
        return Pow(from_dict(d["arg"]), int(d["exponent"]))
    if kind == "cyl":
        return Cylindrical(from_dict(d["phi"]), tuple(d["times"]))
    if kind == "bind":
        return Bind(from_dict(d["g"]), from_dict(d["f"]))
    raise ValueError(f"unknown node type {kind!r}")


# ---------------------------------------------------------------------------
# evaluation API
# ---------------------------------------------------------------------------


def eval_scalar(phi: Node, args, n: int | None = None, loc: str = "") -> np.ndarray:
    """Evaluate a path-free expression on argument arrays."""
    args = tuple(np.asarray(a, dtype=float) for a in args)
    if n is None:
        n = len(args[0]) if args else 1
    return np.broadcast_to(phi._eval(_Ctx(None, None, n, args), loc), (n,))


def _unwrap(omega, values):
    values = np.broadcast_to(values, (len(values),)) if np.ndim(values) else values
    if isinstance(omega, JumpList):
        return float(values[0])
    return np.asarray(values)


def _check_horizon(F: Node, batch: JumpBatch):
    times = F.referenced_times()
    if times and max(times) > batch.horizon:
        raise HorizonExceeded(f"functional reads time {max(times)} beyond horizon {batch.horizon}")


def eval_functional(F: Node, omega, triplet: LevyTriplet):
    """``Y(omega) = F(X(omega))``; float for a JumpList, array for a JumpBatch."""
    if F.has_slot():
        raise ValueError("functional has a free slot; use parametric_eval or bind")
    batch = as_batch(omega)
    _check_horizon(F, batch)
    out = F._eval(_Ctx(batch, triplet, len(batch)), "")
    return _unwrap(omega, np.broadcast_to(out, (len(batch),)))


def parametric_eval(G: Node, omega, triplet: LevyTriplet, x):
    """``G(X(omega), x)``; ``x`` is a scalar or one value per sample."""
    batch = as_batch(omega)
    _check_horizon(G, batch)
    slot = np.broadcast_to(np.asarray(x, dtype=float), (len(batch),))
    out = G._eval(_Ctx(batch, triplet, len(batch), slot=slot), "")
    return _unwrap(omega, np.broadcast_to(out, (len(batch),)))


def bind(G: Node, F: Node) -> Node:
    """The functional ``h -> G(h, F(h))``."""
    return Bind(G, F)


def compose(fn: str, F: Node) -> Node:
    return Unary(fn, F)


def cylindrical(phi: Node, times) -> Cylindrical:
    return Cylindrical(phi, tuple(times))


# ---------------------------------------------------------------------------
# random trees for property tests
# ---------------------------------------------------------------------------

_BOUNDED_FNS = ("tanh", "sin", "cos", "bump")


def _random_bounded(rng, leaf, depth):
    if depth <= 1 or rng.random() < 0.25:
        return Const(float(rng.uniform(-1, 1)))
    return Unary(str(rng.choice(_BOUNDED_FNS)), _random_expr(rng, leaf, depth - 1))


def _random_expr(rng, leaf, depth):
    """Random tree of depth <= ``depth`` whose values grow at most linearly in the leaves."""
    if depth <= 1 or rng.random() < 0.2:
        return leaf() if rng.random() < 0.7 else Const(float(rng.uniform(-1, 1)))
    kind = rng.integers(5)
    if kind == 0:
        return BinOp("+", _random_expr(rng, leaf, depth - 1), _random_expr(rng, leaf, depth - 1))
    if kind == 1:
        return BinOp("-", _random_expr(rng, leaf, depth - 1), _random_expr(rng, leaf, depth - 1))
    if kind == 2:
        return BinOp("*", _random_bounded(rng, leaf, depth - 1), _random_expr(rng, leaf, depth - 1))
    if kind == 3:
        return Pow(_random_bounded(rng, leaf, depth - 1), 2)
    return _random_bounded(rng, leaf, depth)


def random_scalar_expr(rng: np.random.Generator, n_args: int, depth: int = 4) -> Node:
    """Random smooth expression in ``Arg(0) .. Arg(n_args - 1)``."""
    return _random_expr(rng, lambda: Arg(int(rng.integers(n_args))), depth)


def random_cylindrical(rng: np.random.Generator, horizon: float, n_times: int = 3, depth: int = 4) -> Cylindrical:
    times = tuple(sorted(float(t) for t in rng.uniform(0.0, horizon, n_times)))
    return Cylindrical(random_scalar_expr(rng, n_times, depth), times)


def random_path_functional(
    rng: np.random.Generator, horizon: float, depth: int = 4, parametric: bool = False
) -> Node:
    """Random tree over coordinates, running sup, time integral (and the slot if parametric)."""

    def leaf():
        kind = rng.integers(5 if parametric else 4)
        if kind == 0 or kind == 1:
            return Coordinate(float(rng.uniform(0.0, horizon)))
        if kind == 2:
            return RunningSup(float(rng.uniform(0.0, horizon)))
        if kind == 3:
            return TimeIntegral(float(rng.uniform(0.0, horizon)))
        return Slot()

    tree = _random_expr(rng, leaf, depth)
    if parametric and not tree.has_slot():
        tree = tree + Slot() * _random_bounded(rng, leaf, 2)
    return tree


def referenced_horizon(F: Node) -> float:
    times = F.referenced_times()
    return max(times) if times else 0.0


__all__ = [
    "Node",
    "Const",
    "Arg",
    "Slot",
    "Coordinate",
    "RunningSup",
    "TimeIntegral",
    "BinOp",
    "Unary",
    "Pow",
    "Cylindrical",
    "Bind",
    "PathFunctional",
    "ParametricFunctional",
    "eval_functional",
    "parametric_eval",
    "eval_scalar",
    "bind",
    "compose",
    "cylindrical",
    "from_dict",
    "random_scalar_expr",
    "random_cylindrical",
    "random_path_functional",
]
