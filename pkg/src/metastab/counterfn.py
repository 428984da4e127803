"""Saturating naturals and monotone counter-functions on them.

A :class:`Bound` is either an exact natural below a cap or the sentinel
"at least cap".  Counter-functions map bounds to bounds and know how to
treat the sentinel soundly: a function that grows at least like the
identity sends "at least cap" to "at least cap", a constant ignores it,
and anything else refuses with :class:`SaturationError`.
"""

from __future__ import annotations

import functools
import os
import threading
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Optional, Sequence, Union

DEFAULT_CAP = 10**18
CAP_ENV_VAR = "METASTAB_CAP"


class SaturationError(ArithmeticError):
    """Raised when a saturated value cannot be propagated soundly."""


def default_cap() -> int:
    raw = os.environ.get(CAP_ENV_VAR)
    if raw is None or raw.strip() == "":
        return DEFAULT_CAP
    cap = int(raw)
    if cap < 1:
        raise ValueError(f"{CAP_ENV_VAR} must be a positive integer, got {raw!r}")
    return cap


@functools.total_ordering
@dataclass(frozen=True)
class Bound:
    """Exact natural number below ``cap``, or the saturated sentinel ``>= cap``.

    Saturated values store the cap in ``value``.  Ordering compares the
    stored numbers, so ``Exact(a) <= Saturated(c)`` whenever ``a < c`` and
    two saturations with the same cap compare equal.
    """

    value: int
    saturated: bool
    cap: int

    @classmethod
    def exact(cls, value: int, cap: int) -> "Bound":
        if value < 0:
            raise ValueError(f"bounds are natural numbers, got {value}")
        if value >= cap:
            return cls(cap, True, cap)
        return cls(value, False, cap)

    @classmethod
    def sat(cls, cap: int) -> "Bound":
        return cls(cap, True, cap)

    def __int__(self) -> int:
        if self.saturated:
            raise SaturationError(f"value is only known to be >= {self.cap}")
        return self.value

    def __index__(self) -> int:
        return int(self)

    def __lt__(self, other: object) -> bool:
        if isinstance(other, Bound):
            return self.value < other.value
        if isinstance(other, int):
            return self.value < other
        return NotImplemented

    def __eq__(self, other: object) -> bool:
        if isinstance(other, Bound):
            return (self.value, self.saturated) == (other.value, other.saturated)
        if isinstance(other, int):
            return not self.saturated and self.value == other
        return NotImplemented

    def __hash__(self) -> int:
        return hash((self.value, self.saturated))

    def _coerce(self, other: Union["Bound", int]) -> "Bound":
        if isinstance(other, Bound):
            return other
        if isinstance(other, int):
            return Bound.exact(other, self.cap)
        raise TypeError(f"cannot combine Bound with {type(other).__name__}")

    def __add__(self, other: Union["Bound", int]) -> "Bound":
        o = self._coerce(other)
        cap = min(self.cap, o.cap)
        if self.saturated or o.saturated:
            return Bound.sat(cap)
        return Bound.exact(self.value + o.value, cap)

    __radd__ = __add__

    def __mul__(self, other: Union["Bound", int]) -> "Bound":
        o = self._coerce(other)
        cap = min(self.cap, o.cap)
        # A saturated factor times zero is exactly zero; times anything >= 1 stays >= cap.
        if (not self.saturated and self.value == 0) or (not o.saturated and o.value == 0):
            return Bound.exact(0, cap)
        if self.saturated or o.saturated:
            return Bound.sat(cap)
        return Bound.exact(self.value * o.value, cap)

    __rmul__ = __mul__

    def square(self) -> "Bound":
        return self * self

    def to_json(self) -> dict:
        if self.saturated:
            return {"saturated_at": str(self.cap)}
        return {"exact": str(self.value)}

    def __repr__(self) -> str:
        if self.saturated:
            return f"Saturated({self.cap})"
        return f"Exact({self.value})"

    __str__ = __repr__


NatLike = Union[Bound, int]


def as_bound(x: NatLike, cap: int) -> Bound:
    if isinstance(x, Bound):
        return x
    return Bound.exact(int(x), cap)


def bmax(first: Bound, *rest: NatLike) -> Bound:
    out = first
    for x in rest:
        x = as_bound(x, first.cap)
        if x.saturated:
            return Bound.sat(min(out.cap, x.cap))
        if not out.saturated and x.value > out.value:
            out = x
    return out


def pow_bound(base: int, exponent: Bound) -> Bound:
    """``base ** exponent`` with saturation; ``base`` must be at least 2."""
    if base < 2:
        raise ValueError("pow_bound needs base >= 2")
    cap = exponent.cap
    if exponent.saturated or exponent.value >= cap.bit_length():
        # base**e >= 2**e >= 2**bitlen(cap) > cap
        return Bound.sat(cap)
    return Bound.exact(base**exponent.value, cap)


def ln_upper(x: int) -> int:
    """Integer upper bound on ``ln x``: the bit length of ``x``."""
    if x < 1:
        raise ValueError("ln_upper is defined for x >= 1")
    return int(x).bit_length()


def ln_ceil(x: int) -> int:
    """Tight ``ceil(ln x)`` via high-precision arithmetic."""
    import mpmath

    if x < 1:
        raise ValueError("ln_ceil is defined for x >= 1")
    if x == 1:
        return 0
    with mpmath.workprec(x.bit_length() + 96):
        y = mpmath.log(mpmath.mpf(x))
        c = int(mpmath.ceil(y))
        # ln of an integer > 1 is irrational, so y is never exactly c
        if abs(y - c) < mpmath.mpf(2) ** -64:
            raise ArithmeticError(f"could not separate ln({x}) from an integer")
    return c


# ---------------------------------------------------------------------------
# counter-functions


class CounterFn:
    """Monotone function on the naturals, evaluable on saturating bounds.

    ``f(n)`` with an ``int`` returns the exact ``int`` value (where the
    representation supports it).  ``f(x)`` with a :class:`Bound` returns a
    :class:`Bound` with the same cap.
    """

    name: str = "f"
    monotone: bool = True
    inflationary: bool = False  # f(n) >= n for every n
    strict: bool = False  # f(n) > n for every n

    def value(self, n: int) -> int:
        raise TypeError(f"{self.name} has no exact integer evaluation")

    def apply(self, x: Bound) -> Bound:
        if x.saturated:
            if self.inflationary:
                return x
            raise SaturationError(f"cannot certify saturation through {self.name}")
        return Bound.exact(self.value(x.value), x.cap)

    def __call__(self, x):
        if isinstance(x, Bound):
            return self.apply(x)
        return self.value(int(x))

    def describe(self) -> dict:
        return {"kind": "opaque", "name": self.name}

    def __repr__(self) -> str:
        return f"<CounterFn {self.name}>"


class Identity(CounterFn):
    name = "identity"
    inflationary = True

    def value(self, n: int) -> int:
        return n

    def apply(self, x: Bound) -> Bound:
        return x

    def describe(self) -> dict:
        return {"kind": "identity"}


class Constant(CounterFn):
    def __init__(self, c: int):
        if c < 0:
            raise ValueError("constant must be a natural number")
        self.c = int(c)
        self.name = f"const-{self.c}"

    def value(self, n: int) -> int:
        return self.c

    def apply(self, x: Bound) -> Bound:
        return Bound.exact(self.c, x.cap)

    def describe(self) -> dict:
        return {"kind": "constant", "c": self.c}


class Affine(CounterFn):
    """``n -> a*n + c`` with natural ``a`` and ``c``."""

    def __init__(self, a: int, c: int = 0):
        if a < 0 or c < 0:
            raise ValueError("affine coefficients must be natural numbers")
        self.a, self.c = int(a), int(c)
        self.inflationary = self.a >= 1
        self.strict = self.a >= 2 or (self.a == 1 and self.c >= 1)
        if self.a == 1:
            self.name = f"plus-{self.c}"
        elif self.c == 0:
            self.name = f"times-{self.a}"
        else:
            self.name = f"{self.a}n+{self.c}"

    def value(self, n: int) -> int:
        return self.a * n + self.c

    def apply(self, x: Bound) -> Bound:
        if x.saturated:
            return x if self.a >= 1 else Bound.exact(self.c, x.cap)
        return Bound.exact(self.value(x.value), x.cap)

    def describe(self) -> dict:
        if self.a == 1:
            return {"kind": "plus", "c": self.c}
        if self.c == 0:
            return {"kind": "times", "c": self.a}
        return {"kind": "affine", "a": self.a, "c": self.c}


class Power(CounterFn):
    """``n -> base**n`` for ``base >= 2``."""

    inflationary = True
    strict = True

    def __init__(self, base: int):
        if base < 2:
            raise ValueError("power base must be at least 2")
        self.base = int(base)
        self.name = f"power-{self.base}"

    def value(self, n: int) -> int:
        return self.base**n

    def apply(self, x: Bound) -> Bound:
        return pow_bound(self.base, x)

    def describe(self) -> dict:
        return {"kind": "power", "base": self.base}


class ExpCeil(CounterFn):
    """``n -> ceil(exp(n))`` computed with enough precision to be exact."""

    name = "exp-ceil"
    inflationary = True
    strict = True

    def value(self, n: int) -> int:
        import mpmath

        if n == 0:
            return 1
        with mpmath.workprec(2 * n + 96):
            y = mpmath.exp(n)
            c = int(mpmath.ceil(y))
            if abs(y - c) < mpmath.mpf(2) ** -64:
                raise ArithmeticError(f"could not separate exp({n}) from an integer")
        return c

    def apply(self, x: Bound) -> Bound:
        if x.saturated or x.value >= x.cap.bit_length():
            return Bound.sat(x.cap)  # e**n >= 2**n
        return Bound.exact(self.value(x.value), x.cap)

    def describe(self) -> dict:
        return {"kind": "exp"}


class Table(CounterFn):
    """Finite table, closed under running max, extended by ``max(last, n)``."""

    def __init__(self, values: Sequence[int]):
        if not values:
            raise ValueError("table needs at least one value")
        closed, run = [], 0
        for v in values:
            v = int(v)
            if v < 0:
                raise ValueError("table values must be natural numbers")
            run = max(run, v)
            closed.append(run)
        self.values = tuple(closed)
        self.inflationary = all(v >= i for i, v in enumerate(self.values))
        self.name = "table"

    def value(self, n: int) -> int:
        if n < len(self.values):
            return self.values[n]
        return max(self.values[-1], n)

    def apply(self, x: Bound) -> Bound:
        if x.saturated:
            return x  # beyond the table the function dominates the identity
        return Bound.exact(self.value(x.value), x.cap)

    def describe(self) -> dict:
        return {"kind": "table", "values": list(self.values)}


class FromCallable(CounterFn):
    """Wrap an arbitrary ``int -> int`` callable; monotonicity is not assumed."""

    def __init__(self, fn: Callable[[int], int], name: str = "callable",
                 monotone: bool = False, inflationary: bool = False):
        self.fn = fn
        self.name = name
        self.monotone = monotone
        self.inflationary = inflationary

    def value(self, n: int) -> int:
        return int(self.fn(n))


class RunningMax(CounterFn):
    """``n -> max(f(0), ..., f(n))`` for a function not known to be monotone."""

    def __init__(self, inner: CounterFn):
        self.inner = inner
        self.name = f"tilde({inner.name})"
        self.inflationary = inner.inflationary
        self._prefix: list[int] = []
        self._lock = threading.Lock()

    def value(self, n: int) -> int:
        with self._lock:
            run = self._prefix[-1] if self._prefix else 0
            for i in range(len(self._prefix), n + 1):
                run = max(run, self.inner.value(i))
                self._prefix.append(run)
            return self._prefix[n]

    def describe(self) -> dict:
        return {"kind": "tilde", "of": self.inner.describe()}


class Composite(CounterFn):
    """Counter-function given directly on bounds by a monotone expression."""

    def __init__(self, fn: Callable[[Bound], Bound], name: str,
                 inflationary: bool = False, strict: bool = False):
        self.fn = fn
        self.name = name
        self.inflationary = inflationary
        self.strict = strict

    def apply(self, x: Bound) -> Bound:
        return self.fn(x)

    def value(self, n: int) -> int:
        # Evaluate far from any cap so the answer is exact.
        out = self.fn(Bound.exact(n, 1 << 4096))
        return int(out)

    def describe(self) -> dict:
        return {"kind": "composite", "name": self.name}


IDENTITY = Identity()


def tilde(f: CounterFn) -> CounterFn:
    """Monotone envelope ``n -> max_{k<=n} f(k)``."""
    if f.monotone:
        return f
    return RunningMax(f)


@dataclass(frozen=True)
class Majorization:
    holds: bool
    certified: bool  # False means "only checked on the probe range"

    def __bool__(self) -> bool:
        return self.holds


def _tail_form(f: CounterFn):
    """Closed form valid for all n beyond a threshold: ('affine', a, c, t) or ('power', base, t)."""
    if isinstance(f, Identity):
        return ("affine", 1, 0, 0)
    if isinstance(f, Constant):
        return ("affine", 0, f.c, 0)
    if isinstance(f, Affine):
        return ("affine", f.a, f.c, 0)
    if isinstance(f, Table):
        # max(last, n) equals n once n >= last
        return ("affine", 1, 0, max(len(f.values), f.values[-1]))
    if isinstance(f, Power):
        return ("power", f.base, 0)
    return None


def _tail_dominates(g_form, f_form, start: int) -> Optional[bool]:
    """Decide whether g(n) <= f(n) for all n >= start, given g(start) <= f(start)."""
    if g_form[0] == "affine" and f_form[0] == "affine":
        # difference (a_f - a_g) n + (c_f - c_g) is linear; nonneg at start and slope >= 0 suffices
        return f_form[1] >= g_form[1]
    if g_form[0] == "power" and f_form[0] == "power":
        return f_form[1] >= g_form[1]
    if g_form[0] == "affine" and f_form[0] == "power":
        # f(n+1)-f(n) = base^n (base-1) >= a_g = g(n+1)-g(n) once base^n >= a_g
        base, a = f_form[1], g_form[1]
        return base**start >= a or None
    if g_form[0] == "power" and f_form[0] == "affine":
        return False
    return None


def majorizes(g: CounterFn, f: CounterFn, probe_limit: int = 1000) -> Majorization:
    """Strong majorizability ``g <=* f``: for all n and k <= n, g(k) <= f(n) and f(k) <= f(n).

    The relation is checked exhaustively on ``[0, probe_limit]``; when both
    functions have closed forms the tail beyond the probe range is
    certified analytically as well.
    """
    gmax = fmax = -1
    for n in range(probe_limit + 1):
        fn = f.value(n)
        gmax = max(gmax, g.value(n))
        fmax = max(fmax, fn)
        if gmax > fn or fmax > fn:
            return Majorization(False, True)
    gf, ff = _tail_form(g), _tail_form(f)
    if gf is None or ff is None:
        return Majorization(True, False)
    start = max(probe_limit, gf[-1], ff[-1])
    # Walk forward to the start of the closed-form tail, then decide analytically.
    for n in range(probe_limit + 1, start + 1):
        fn = f.value(n)
        gmax = max(gmax, g.value(n))
        if gmax > fn:
            return Majorization(False, True)
    verdict = _tail_dominates(gf, ff, start)
    if verdict is None:
        return Majorization(True, False)
    if verdict is False:
        # the tail eventually violates g <= f; the probe range was just too short
        return Majorization(False, True)
    return Majorization(True, True)


def iterate(g: CounterFn, r: NatLike, start: int, cap: int, max_steps: int = 10**7) -> Bound:
    """``g`` composed ``r`` times, evaluated at ``start`` with saturation at ``cap``."""
    if cap < 1:
        raise ValueError("cap must be at least 1")
    x = Bound.exact(start, cap)
    if isinstance(r, Bound) and r.saturated:
        if not g.inflationary:
            raise SaturationError("cannot certify saturation: iteration count saturated "
                                  f"and {g.name} is not inflationary")
        if g.strict:
            return Bound.sat(cap)  # g^r(start) >= start + r >= cap
        count = None
    else:
        count = int(r)
    steps = 0
    while count is None or steps < count:
        y = g.apply(x)
        steps += 1
        if y == x:
            return x  # fixed point: the remaining applications change nothing
        if y.saturated and g.inflationary:
            return y
        x = y
        if steps >= max_steps and (count is None or steps < count):
            raise SaturationError(f"iteration of {g.name} did not settle within {max_steps} steps")
    return x


# ---------------------------------------------------------------------------
# step-size sequences and their moduli


@dataclass(frozen=True)
class LambdaSeq:
    """Step sizes ``lambda_n``: harmonic ``1/(n+1)`` or a finite user table."""

    kind: str = "harmonic"
    table: tuple = ()

    def __post_init__(self):
        if self.kind not in ("harmonic", "table"):
            raise ValueError(f"unknown lambda sequence kind {self.kind!r}")
        if self.kind == "table":
            if not self.table:
                raise ValueError("lambda table is empty")
            for v in self.table:
                if not (0 <= Fraction(v) <= 1):
                    raise ValueError("lambda values must lie in [0, 1]")

    def exact(self, n: int) -> Fraction:
        if self.kind == "harmonic":
            return Fraction(1, n + 1)
        if n >= len(self.table):
            raise IndexError(f"lambda table has no entry {n}")
        return Fraction(self.table[n])

    def __call__(self, n: int) -> float:
        if self.kind == "harmonic":
            return 1.0 / (n + 1)
        return float(self.exact(n))

    def describe(self) -> dict:
        if self.kind == "harmonic":
            return {"kind": "harmonic"}
        return {"kind": "table", "values": [str(Fraction(v)) for v in self.table]}


@dataclass(frozen=True)
class LambdaModuli:
    lambda_seq: LambdaSeq
    mu: CounterFn
    nu: CounterFn
    xi: CounterFn
    ell: int = 1


def default_harmonic_moduli(ell: int = 1) -> LambdaModuli:
    """Moduli for ``lambda_n = 1/(n+1)``: mu(k)=k, nu(k)=3**k, xi(k)=ell*(k+1)."""
    if ell < 1:
        raise ValueError("ell must be at least 1")
    return LambdaModuli(LambdaSeq("harmonic"), Identity(), Power(3), Affine(ell, ell), ell)


def parse_counterfn(desc) -> CounterFn:
    """Build a counter-function from a JSON-style descriptor.

    Accepted forms: ``"identity"``, ``"plus-5"``, ``"times-2"``,
    ``{"kind": "table", "values": [...]}`` and the dict forms produced by
    :meth:`CounterFn.describe`.
    """
    if isinstance(desc, str):
        if desc == "identity":
            return Identity()
        if desc == "exp":
            return ExpCeil()
        kind, _, arg = desc.partition("-")
        if kind and arg.isdigit():
            desc = {"kind": kind, "c": int(arg)}
        else:
            raise ValueError(f"unknown counter-function {desc!r}")
    if not isinstance(desc, dict) or "kind" not in desc:
        raise ValueError(f"bad counter-function descriptor {desc!r}")
    kind = desc["kind"]
    if kind == "identity":
        return Identity()
    if kind in ("constant", "const"):
        return Constant(int(desc["c"]))
    if kind == "plus":
        return Affine(1, int(desc["c"]))
    if kind == "times":
        return Affine(int(desc["c"]), 0)
    if kind == "affine":
        return Affine(int(desc["a"]), int(desc.get("c", 0)))
    if kind == "power":
        return Power(int(desc.get("base", desc.get("c", 2))))
    if kind == "exp":
        return ExpCeil()
    if kind == "table":
        return Table([int(v) for v in desc["values"]])
    raise ValueError(f"unknown counter-function kind {kind!r}")


def counterfn_label(f: CounterFn) -> str:
    d = f.describe()
    kind = d["kind"]
    if kind in ("identity", "exp"):
        return kind
    if kind in ("plus", "times"):
        return f"{kind}-{d['c']}"
    if kind == "constant":
        return f"constant-{d['c']}"
    if kind == "table":
        return "table[" + ",".join(str(v) for v in d["values"]) + "]"
    return f.name


def partial_sum(term: Callable[[int], Fraction], lo: int, hi: int) -> Fraction:
    """Exact ``sum(term(j) for j in lo..hi)`` by balanced splitting."""
    if hi < lo:
        return Fraction(0)

    def split(a: int, b: int) -> tuple[int, int]:
        if b - a < 16:
            s = Fraction(0)
            for j in range(a, b + 1):
                s += term(j)
            return s.numerator, s.denominator
        mid = (a + b) // 2
        p1, q1 = split(a, mid)
        p2, q2 = split(mid + 1, b)
        return p1 * q2 + p2 * q1, q1 * q2

    p, q = split(lo, hi)
    return Fraction(p, q)

