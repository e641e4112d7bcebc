"""Lévy triplets, parametric jump measures, sector partitions and the control measure.

A jump measure ``nu`` is one of three closed parametric families.  Integrals
``int_A x**p nu(dx)`` (p = 0, 1, 2) over finite unions of intervals are
computed by adaptive quadrature; each family also carries the closed-form
antiderivative so the two routes can be compared.

The partition follows the canonical construction: the big-jump sector
``{|x| >= 1}`` comes first and is not compensated, the band ``eps_min < |x| < 1``
is split into dyadic shells which are compensated.  Sectors without mass are
dropped and the remaining ones renumbered ``k = 1, 2, ...``.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Iterable, Sequence, Union

import numpy as np
from scipy import integrate

from .errors import EmptyPartition, NonIntegrable

QUAD_EPSABS = 1e-13
QUAD_EPSREL = 1e-12
DEFAULT_EPS_MIN = 1e-3


# ---------------------------------------------------------------------------
# intervals
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Interval:
    """A real interval with independent open/closed ends (``(lo, hi]`` by default)."""

    lo: float
    hi: float
    lo_closed: bool = False
    hi_closed: bool = True

    def __post_init__(self):
        if math.isnan(self.lo) or math.isnan(self.hi):
            raise ValueError("interval bounds must not be NaN")
        # infinite ends are always open
        if math.isinf(self.lo) and self.lo_closed:
            object.__setattr__(self, "lo_closed", False)
        if math.isinf(self.hi) and self.hi_closed:
            object.__setattr__(self, "hi_closed", False)

    @property
    def is_empty(self) -> bool:
        if self.lo > self.hi:
            return True
        return self.lo == self.hi and not (self.lo_closed and self.hi_closed)

    def contains(self, x):
        x = np.asarray(x, dtype=float)
        above = x >= self.lo if self.lo_closed else x > self.lo
        below = x <= self.hi if self.hi_closed else x < self.hi
        out = above & below
        return bool(out) if out.ndim == 0 else out

    def intersect(self, other: "Interval") -> "Interval":
        if self.lo > other.lo:
            lo, lo_closed = self.lo, self.lo_closed
        elif self.lo < other.lo:
            lo, lo_closed = other.lo, other.lo_closed
        else:
            lo, lo_closed = self.lo, self.lo_closed and other.lo_closed
        if self.hi < other.hi:
            hi, hi_closed = self.hi, self.hi_closed
        elif self.hi > other.hi:
            hi, hi_closed = other.hi, other.hi_closed
        else:
            hi, hi_closed = self.hi, self.hi_closed and other.hi_closed
        return Interval(lo, hi, lo_closed, hi_closed)

    def __str__(self):
        return "%s%s, %s%s" % (
            "[" if self.lo_closed else "(",
            _fmt_bound(self.lo),
            _fmt_bound(self.hi),
            "]" if self.hi_closed else ")",
        )


def _fmt_bound(x: float) -> str:
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return repr(float(x))


_INTERVAL_RE = re.compile(r"^\s*([\[(])\s*([^,]+?)\s*,\s*([^,]+?)\s*([\])])\s*$")


def parse_interval(text: str) -> Interval:
    """Parse ``"(0.5, 1.5]"``-style notation; ``inf``/``-inf`` are accepted."""
    m = _INTERVAL_RE.match(text)
    if m is None:
        raise ValueError(f"cannot parse interval {text!r}")
    left, lo, hi, right = m.groups()
    return Interval(float(lo), float(hi), left == "[", right == "]")


@dataclass(frozen=True)
class IntervalSet:
    """A finite union of intervals (not necessarily disjoint, though usually so)."""

    intervals: tuple[Interval, ...]

    def __init__(self, intervals: Iterable[Union[Interval, str]] = ()):
        items = []
        for iv in intervals:
            iv = parse_interval(iv) if isinstance(iv, str) else iv
            if not iv.is_empty:
                items.append(iv)
        object.__setattr__(self, "intervals", tuple(items))

    def contains(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape, dtype=bool)
        for iv in self.intervals:
            out |= iv.contains(x)
        return bool(out) if out.ndim == 0 else out

    def intersect(self, other: "IntervalSet") -> "IntervalSet":
        return IntervalSet(a.intersect(b) for a in self.intervals for b in other.intervals)

    def is_disjoint(self, other: "IntervalSet") -> bool:
        return not self.intersect(other).intervals

    @property
    def is_empty(self) -> bool:
        return not self.intervals

    def __iter__(self):
        return iter(self.intervals)

    def __str__(self):
        return " U ".join(str(iv) for iv in self.intervals) or "{}"


SetLike = Union[IntervalSet, Interval, str, Sequence]


def as_set(A: SetLike) -> IntervalSet:
    if isinstance(A, IntervalSet):
        return A
    if isinstance(A, (Interval, str)):
        return IntervalSet([A])
    return IntervalSet(A)


REAL_LINE = IntervalSet([Interval(-math.inf, math.inf)])


# ---------------------------------------------------------------------------
# jump measure families
# ---------------------------------------------------------------------------


class JumpMeasure:
    """Base class for the parametric Lévy measures."""

    tag = ""
    finite_activity = True

    def support(self) -> IntervalSet:
        raise NotImplementedError

    def density(self, x: float) -> float:
        raise NotImplementedError

    def closed_form_moment(self, iv: Interval, p: int) -> float:
        """``int_iv x**p nu(dx)`` from the antiderivative; ``iv`` must not straddle 0."""
        raise NotImplementedError

    def inverse_cdf(self, iv: Interval, u):
        """Map uniforms ``u`` to draws from ``nu`` restricted to ``iv`` and normalised."""
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError


def _split_at_zero(iv: Interval) -> list[Interval]:
    parts = []
    neg = iv.intersect(Interval(-math.inf, 0.0, False, False))
    pos = iv.intersect(Interval(0.0, math.inf, False, False))
    for part in (neg, pos):
        if not part.is_empty:
            parts.append(part)
    return parts


@dataclass(frozen=True)
class FiniteDiscrete(JumpMeasure):
    """``nu = sum_i rate_i * delta_{x_i}``."""

    atoms: tuple[tuple[float, float], ...] = ()
    tag = "finite_discrete"

    def __init__(self, atoms: Iterable[Sequence[float]] = ()):
        clean = []
        for x, rate in atoms:
            x, rate = float(x), float(rate)
            if x == 0.0:
                raise ValueError("atoms must sit away from 0")
            if not rate > 0.0 or not math.isfinite(rate):
                raise ValueError(f"atom rate must be positive and finite, got {rate}")
            clean.append((x, rate))
        object.__setattr__(self, "atoms", tuple(sorted(clean)))

    @property
    def positions(self) -> np.ndarray:
        return np.array([a[0] for a in self.atoms], dtype=float)

    @property
    def rates(self) -> np.ndarray:
        return np.array([a[1] for a in self.atoms], dtype=float)

    def support(self):
        return IntervalSet(Interval(x, x, True, True) for x, _ in self.atoms)

    def moment(self, A: IntervalSet, p: int) -> float:
        return math.fsum(rate * x**p for x, rate in self.atoms if A.contains(x))

    def closed_form_moment(self, iv, p):
        return self.moment(IntervalSet([iv]), p)

    def inverse_cdf(self, iv, u):
        inside = [(x, r) for x, r in self.atoms if iv.contains(x)]
        if not inside:
            raise ValueError(f"no atoms in {iv}")
        xs = np.array([a[0] for a in inside])
        cum = np.cumsum([a[1] for a in inside])
        idx = np.searchsorted(cum / cum[-1], np.asarray(u, dtype=float), side="right")
        return xs[np.minimum(idx, len(xs) - 1)]

    def to_dict(self):
        return {"type": self.tag, "atoms": [[x, r] for x, r in self.atoms]}


@dataclass(frozen=True)
class TwoSidedExponential(JumpMeasure):
    """Exponential jump tails: ``rate_plus/scale_plus * exp(-x/scale_plus)`` for x > 0,
    mirrored with the ``minus`` parameters for x < 0.  Total mass ``rate_plus + rate_minus``."""

    rate_plus: float
    scale_plus: float
    rate_minus: float
    scale_minus: float
    tag = "two_sided_exponential"

    def __post_init__(self):
        for name in ("rate_plus", "rate_minus"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        for name in ("scale_plus", "scale_minus"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0")

    def support(self):
        return IntervalSet(["(-inf, 0)", "(0, inf)"])

    def density(self, x):
        if x > 0:
            return self.rate_plus / self.scale_plus * math.exp(-x / self.scale_plus)
        if x < 0:
            return self.rate_minus / self.scale_minus * math.exp(x / self.scale_minus)
        return 0.0

    def _side(self, positive):
        return (self.rate_plus, self.scale_plus) if positive else (self.rate_minus, self.scale_minus)

    def closed_form_moment(self, iv, p):
        positive = iv.lo >= 0
        rate, s = self._side(positive)
        a, b = (iv.lo, iv.hi) if positive else (-iv.hi, -iv.lo)

        def anti(y):
            if math.isinf(y):
                return 0.0
            e = math.exp(-y / s)
            poly = (1.0, y + s, y * y + 2 * y * s + 2 * s * s)[p]
            return poly * e

        val = rate * (anti(a) - anti(b))
        return val if positive or p % 2 == 0 else -val

    def inverse_cdf(self, iv, u):
        u = np.asarray(u, dtype=float)
        positive = iv.lo >= 0
        _, s = self._side(positive)
        a, b = (iv.lo, iv.hi) if positive else (-iv.hi, -iv.lo)
        y = a - s * np.log1p(u * np.expm1(-(b - a) / s))
        y = np.clip(y, a, b)
        return y if positive else -y

    def to_dict(self):
        return {
            "type": self.tag,
            "rate_plus": self.rate_plus,
            "scale_plus": self.scale_plus,
            "rate_minus": self.rate_minus,
            "scale_minus": self.scale_minus,
        }


@dataclass(frozen=True)
class TruncatedStable(JumpMeasure):
    """Symmetric power-law measure ``scale * |x|**(-1-alpha)`` on ``cutoff <= |x| <= x_max``.

    ``cutoff = 0`` gives the genuine infinite-activity stable measure; in that
    case integrals of ``x**p`` with ``p <= alpha`` diverge near 0.
    """

    alpha: float
    scale: float
    cutoff: float
    x_max: float = math.inf
    tag = "truncated_stable"

    def __post_init__(self):
        if not 0.0 < self.alpha < 2.0:
            raise ValueError("alpha must lie in (0, 2)")
        if not self.scale > 0:
            raise ValueError("scale must be > 0")
        if self.cutoff < 0 or not self.x_max > self.cutoff:
            raise ValueError("need 0 <= cutoff < x_max")

    @property
    def finite_activity(self):
        return self.cutoff > 0

    def support(self):
        return IntervalSet(
            [
                Interval(-self.x_max, -self.cutoff, True, self.cutoff > 0),
                Interval(self.cutoff, self.x_max, self.cutoff > 0, True),
            ]
        )

    def density(self, x):
        ax = abs(x)
        if ax == 0 or ax < self.cutoff or ax > self.x_max:
            return 0.0
        return self.scale * ax ** (-1.0 - self.alpha)

    def _pos_range(self, iv):
        positive = iv.lo >= 0
        a, b = (iv.lo, iv.hi) if positive else (-iv.hi, -iv.lo)
        return positive, max(a, self.cutoff), min(b, self.x_max)

    def closed_form_moment(self, iv, p):
        positive, a, b = self._pos_range(iv)
        if a >= b:
            return 0.0
        q = p - self.alpha
        if a == 0.0 and q <= 0:
            raise NonIntegrable(f"int x^{p} nu(dx) diverges at 0 for alpha={self.alpha}")
        if math.isinf(b) and q >= 0:
            val = math.inf
        elif q == 0:
            val = self.scale * math.log(b / a)
        else:
            bq = 0.0 if math.isinf(b) else b**q
            val = self.scale * (bq - a**q) / q
        return val if positive or p % 2 == 0 else -val

    def inverse_cdf(self, iv, u):
        u = np.asarray(u, dtype=float)
        positive, a, b = self._pos_range(iv)
        if a == 0.0:
            raise NonIntegrable("cannot sample an infinite-activity sector touching 0")
        al = self.alpha
        b_term = 0.0 if math.isinf(b) else b ** (-al)
        y = (a ** (-al) - u * (a ** (-al) - b_term)) ** (-1.0 / al)
        y = np.clip(y, a, b)
        return y if positive else -y

    def to_dict(self):
        d = {"type": self.tag, "alpha": self.alpha, "scale": self.scale, "cutoff": self.cutoff}
        if not math.isinf(self.x_max):
            d["x_max"] = self.x_max
        return d


JumpMeasureSpec = Union[FiniteDiscrete, TwoSidedExponential, TruncatedStable]


def jump_measure_from_dict(d: dict) -> JumpMeasureSpec:
    kind = d.get("type")
    if kind == FiniteDiscrete.tag:
        return FiniteDiscrete(d.get("atoms", []))
    if kind == TwoSidedExponential.tag:
        return TwoSidedExponential(d["rate_plus"], d["scale_plus"], d["rate_minus"], d["scale_minus"])
    if kind == TruncatedStable.tag:
        return TruncatedStable(d["alpha"], d["scale"], d["cutoff"], d.get("x_max", math.inf))
    raise ValueError(f"unknown jump measure type {kind!r}")


def _quad_piece(spec: JumpMeasure, iv: Interval, p: int) -> float:
    """Adaptive Gauss-Kronrod integral of ``x**p * density`` over a one-signed piece."""
    supp = spec.support()
    total = 0.0
    for s in supp.intersect(IntervalSet([iv])):
        if s.is_empty or s.lo == s.hi:
            continue
        if not spec.finite_activity and (s.lo == 0.0 or s.hi == 0.0):
            if isinstance(spec, TruncatedStable):
                # closed form decides divergence; the algebraic weight handles the singularity
                spec.closed_form_moment(s, p)
                if math.isinf(s.lo) or math.isinf(s.hi):
                    total += _quad_piece(spec, s.intersect(Interval(-1.0, 1.0)), p)
                    total += _quad_piece(spec, s.intersect(Interval(1.0, math.inf, False, False)), p)
                    total += _quad_piece(spec, s.intersect(Interval(-math.inf, -1.0, False, False)), p)
                    continue
                sign = 1.0 if s.lo >= 0 else (-1.0) ** p
                hi = s.hi if s.lo >= 0 else -s.lo
                val, _ = integrate.quad(
                    lambda _x: spec.scale,
                    0.0,
                    hi,
                    weight="alg",
                    wvar=(p - 1.0 - spec.alpha, 0.0),
                    epsabs=QUAD_EPSABS,
                    epsrel=QUAD_EPSREL,
                    limit=200,
                )
                total += sign * val
                continue
        if isinstance(spec, TruncatedStable):
            cf = spec.closed_form_moment(s, p)
            if math.isinf(cf):
                return cf
        val, _ = integrate.quad(
            lambda x: x**p * spec.density(x),
            s.lo,
            s.hi,
            epsabs=QUAD_EPSABS,
            epsrel=QUAD_EPSREL,
            limit=200,
        )
        total += val
    return total


def nu_moment(spec: JumpMeasureSpec, A: SetLike, p: int = 0) -> float:
    """``int_A x**p nu(dx)``; exact for atoms, quadrature otherwise.

    Raises NonIntegrable if ``A`` reaches 0 and the integral diverges there.
    """
    A = as_set(A)
    if isinstance(spec, FiniteDiscrete):
        return spec.moment(A, p)
    total = 0.0
    for iv in A:
        for piece in _split_at_zero(iv):
            total += _quad_piece(spec, piece, p)
    return total


def closed_form_moment(spec: JumpMeasureSpec, A: SetLike, p: int = 0) -> float:
    """Same integral as :func:`nu_moment` but from antiderivatives only."""
    A = as_set(A)
    if isinstance(spec, FiniteDiscrete):
        return spec.moment(A, p)
    total = 0.0
    for iv in A:
        for piece in _split_at_zero(iv):
            total += spec.closed_form_moment(piece, p)
    return total


def nu_mass(spec: JumpMeasureSpec, A: SetLike) -> float:
    """``nu(A)``."""
    return nu_moment(spec, A, 0)


# ---------------------------------------------------------------------------
# triplet
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LevyTriplet:
    gamma: float
    sigma: float
    nu: JumpMeasureSpec

    def __post_init__(self):
        if not self.sigma >= 0:
            raise ValueError("sigma must be >= 0")
        small = nu_moment(self.nu, ["[-1, 0)", "(0, 1)"], 2)
        big = nu_mass(self.nu, ["(-inf, -1]", "[1, inf)"])
        if not math.isfinite(small + big):
            raise ValueError("nu violates int min(1, x^2) nu(dx) < inf")

    @property
    def is_pure_jump(self) -> bool:
        return self.sigma == 0.0

    def to_dict(self):
        return {"gamma": self.gamma, "sigma": self.sigma, "nu": self.nu.to_dict()}

    @classmethod
    def from_dict(cls, d):
        return cls(float(d["gamma"]), float(d["sigma"]), jump_measure_from_dict(d["nu"]))


# ---------------------------------------------------------------------------
# sector partition
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Sector:
    """One set ``S_k`` with its cached integrals."""

    k: int
    set: IntervalSet
    mass: float
    drift: float
    quad: float
    compensated: bool

    def sample_sizes(self, spec: JumpMeasureSpec, u_side, u_size) -> np.ndarray:
        """Draws from ``Q_k = nu(. & S_k) / nu(S_k)`` from two uniform streams."""
        pieces = [iv for iv in self.set if nu_mass(spec, IntervalSet([iv])) > 0]
        u_size = np.asarray(u_size, dtype=float)
        if len(pieces) == 1:
            return spec.inverse_cdf(pieces[0], u_size)
        weights = np.array([nu_mass(spec, IntervalSet([iv])) for iv in pieces])
        cum = np.cumsum(weights) / weights.sum()
        which = np.minimum(np.searchsorted(cum, np.asarray(u_side), side="right"), len(pieces) - 1)
        out = np.empty(u_size.shape)
        for i, iv in enumerate(pieces):
            sel = which == i
            if np.any(sel):
                out[sel] = spec.inverse_cdf(iv, u_size[sel])
        return out


def _sector_sets(K: int, eps_min: float) -> list[IntervalSet]:
    sets = [IntervalSet(["(-inf, -1]", "[1, inf)"])]
    upper = 1.0
    for j in range(1, K):
        if upper <= eps_min:
            break
        last = j == K - 1 or 2.0**-j <= eps_min
        lower = eps_min if last else 2.0**-j
        sets.append(
            IntervalSet(
                [
                    Interval(-upper, -lower, False, not last),
                    Interval(lower, upper, not last, False),
                ]
            )
        )
        upper = lower
    return sets


@dataclass(frozen=True)
class SectorPartition:
    """Finite realisation of ``(S_k)``: big jumps first, dyadic shells down to ``eps_min``."""

    nu: JumpMeasureSpec
    K: int
    eps_min: float
    sectors: tuple[Sector, ...]
    lower_bound: float = field(default=1.0)
    small_jump_variance: float = field(default=0.0)

    @property
    def covered(self) -> IntervalSet:
        return IntervalSet(iv for s in self.sectors for iv in s.set)

    @property
    def compensator(self) -> float:
        """``sum_{k compensated} int_{S_k} x nu(dx)``, the deterministic drift correction."""
        return math.fsum(s.drift for s in self.sectors if s.compensated)

    @property
    def total_mass(self) -> float:
        return math.fsum(s.mass for s in self.sectors)

    def locate(self, x):
        """Sector index (0-based) containing each ``x``; -1 when uncovered."""
        x = np.asarray(x, dtype=float)
        out = np.full(x.shape, -1, dtype=np.int64)
        for i, s in enumerate(self.sectors):
            out[(out < 0) & s.set.contains(x)] = i
        return int(out) if out.ndim == 0 else out


def build_partition(
    spec: JumpMeasureSpec, K: int, eps_min: float = DEFAULT_EPS_MIN, allow_empty: bool = False
) -> SectorPartition:
    """Partition the support of ``spec`` into ``K`` sectors and cache their integrals.

    ``allow_empty`` admits the zero measure (a pure drift/Brownian model) by
    returning a partition with no sectors instead of raising EmptyPartition.
    """
    if K < 1:
        raise ValueError("K must be >= 1")
    if not eps_min > 0:
        raise ValueError("eps_min must be > 0")
    sets = _sector_sets(K, eps_min)
    sectors = []
    for A in sets:
        mass = nu_mass(spec, A)
        if mass <= 0.0:
            continue
        if not math.isfinite(mass):
            raise NonIntegrable(f"nu has infinite mass on {A}")
        k = len(sectors) + 1
        compensated = A is not sets[0]
        sectors.append(Sector(k, A, mass, nu_moment(spec, A, 1), nu_moment(spec, A, 2), compensated))
    if not sectors and not allow_empty:
        raise EmptyPartition(f"jump measure {spec.to_dict()} has no mass on any sector")
    lower = eps_min if len(sets) > 1 else 1.0
    residual = IntervalSet([Interval(-lower, 0.0, False, False), Interval(0.0, lower, False, False)])
    return SectorPartition(spec, K, eps_min, tuple(sectors), lower, nu_moment(spec, residual, 2))


# ---------------------------------------------------------------------------
# control measure
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Rect:
    """Time-size rectangle ``[s, t) x A``."""

    s: float
    t: float
    A: IntervalSet

    def __init__(self, s: float, t: float, A: SetLike):
        if not 0.0 <= s <= t:
            raise ValueError(f"need 0 <= s <= t, got [{s}, {t})")
        object.__setattr__(self, "s", float(s))
        object.__setattr__(self, "t", float(t))
        object.__setattr__(self, "A", as_set(A))

    def is_disjoint(self, other: "Rect") -> bool:
        if self.t <= other.s or other.t <= self.s or self.s == self.t or other.s == other.t:
            return True
        return self.A.is_disjoint(other.A)

    def contains(self, r, v):
        r = np.asarray(r, dtype=float)
        out = (r >= self.s) & (r < self.t) & self.A.contains(v)
        return bool(out) if out.ndim == 0 else out

    def to_dict(self):
        return {"s": self.s, "t": self.t, "A": [str(iv) for iv in self.A]}

    @classmethod
    def from_dict(cls, d):
        return cls(d["s"], d["t"], d["A"])

    def __str__(self):
        return f"[{self.s}, {self.t}) x {self.A}"


@dataclass(frozen=True)
class ControlMeasure:
    """``m = Lebesgue x (sigma^2 delta_0 + x^2 nu)`` on ``[0, T] x R``.

    With a partition attached, the jump part is restricted to the covered
    sectors, which is the measure the simulated random measure actually has.
    """

    triplet: LevyTriplet
    horizon: float
    partition: SectorPartition | None = None

    def __post_init__(self):
        if not self.horizon > 0:
            raise ValueError("horizon must be > 0")

    def __call__(self, rect: Rect) -> float:
        return control_measure(self, rect)


def control_measure(cm: ControlMeasure, rect: Rect) -> float:
    """``(t - s) * (sigma^2 * 1{0 in A} + int_A x^2 nu(dx))``."""
    if rect.t > cm.horizon:
        raise ValueError(f"rectangle {rect} exceeds horizon {cm.horizon}")
    A = rect.A
    if cm.partition is not None:
        A = A.intersect(cm.partition.covered)
    spatial = nu_moment(cm.triplet.nu, A, 2) if not A.is_empty else 0.0
    if rect.A.contains(0.0):
        spatial += cm.triplet.sigma**2
    return (rect.t - rect.s) * spatial
