"""Bound functionals for the Browder, Halpern-type and cyclic Halpern iterations.

Every functional takes a :class:`ProblemParams`, a natural ``k`` (an
``int`` or a :class:`Bound`) and, where relevant, a counter-function, and
returns a saturating :class:`Bound`.  Closed forms are written out
separately from the generic combinators :func:`psi_general` and
:func:`phi_general` so the two can be checked against each other.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

from .counterfn import (
    Bound,
    Composite,
    CounterFn,
    LambdaModuli,
    NatLike,
    SaturationError,
    as_bound,
    bmax,
    default_cap,
    default_harmonic_moduli,
    iterate,
    ln_ceil,
    ln_upper,
    tilde,
)


@dataclass(frozen=True)
class ProblemParams:
    b: int
    ell: int = 1
    moduli: Optional[LambdaModuli] = None
    tau: Optional[CounterFn] = None
    cap: int = field(default_factory=default_cap)
    tight_log: bool = False

    def __post_init__(self):
        if int(self.b) != self.b or self.b < 1:
            raise ValueError(f"diameter bound b must be a positive integer, got {self.b!r}")
        if int(self.ell) != self.ell or self.ell < 1:
            raise ValueError(f"family size ell must be a positive integer, got {self.ell!r}")
        if self.cap < 1:
            raise ValueError("cap must be at least 1")
        if self.tau is not None and not self.tau.monotone:
            raise ValueError("tau must be monotone")
        if self.moduli is None:
            object.__setattr__(self, "moduli", default_harmonic_moduli(self.ell))

    def nat(self, x: NatLike) -> Bound:
        return as_bound(x, self.cap)

    def ln(self, x: int) -> int:
        return ln_ceil(x) if self.tight_log else ln_upper(x)


Functional = Callable[..., Bound]


def _lazy_max(first: Callable[[], Bound], second: Callable[[], Bound]) -> Bound:
    a = first()
    if a.saturated:
        return a
    return bmax(a, second())


def _with_log(p: ProblemParams, head: Bound, log_arg: Bound, outer: CounterFn) -> Bound:
    """``outer(head + ln(log_arg))``.

    A saturated ``log_arg`` leaves the logarithm unknown; that is harmless
    only when ``outer(head)`` already saturates, since ``outer`` is monotone.
    """
    if log_arg.saturated:
        out = outer.apply(head)
        if not out.saturated:
            raise SaturationError("logarithm of a saturated argument feeds a finite result")
        return out
    return outer.apply(head + p.ln(log_arg.value))


# ---------------------------------------------------------------------------
# building blocks shared by all three schemes


def r(p: ProblemParams, k: NatLike) -> Bound:
    """Iteration count ``b^4 (k+1)^2 + b^2``."""
    K = p.nat(k)
    return p.b**4 * (K + 1).square() + p.b**2


def omega(p: ProblemParams, g: CounterFn) -> CounterFn:
    """``m -> max(g(12b(m+1)^2), 12b(m+1)^2) + 1``."""

    def w(m: Bound) -> Bound:
        t = 12 * p.b * (m + 1).square()
        return _lazy_max(lambda: t, lambda: g.apply(t)) + 1

    return Composite(w, f"omega[{g.name}]", inflationary=True, strict=True)


def gamma_kg(p: ProblemParams, k: NatLike, g: CounterFn) -> CounterFn:
    """``m -> max(g(m), 2b(k+1))``."""
    floor = 2 * p.b * (p.nat(k) + 1)
    return Composite(lambda m: _lazy_max(lambda: floor, lambda: g.apply(m)),
                     f"gamma[{g.name}]", inflationary=g.inflationary)


def proj_bound_initial(p: ProblemParams, k: NatLike, f: CounterFn) -> Bound:
    """``(f~ + 1)`` composed ``b^2 (k+1)`` times, evaluated at 0."""
    f = tilde(f)
    step = Composite(lambda m: f.apply(m) + 1, f"{f.name}+1",
                     inflationary=f.inflationary, strict=f.inflationary)
    return iterate(step, p.b**2 * (p.nat(k) + 1), 0, p.cap)


def psi_general(alpha: Functional, beta: Functional, k: NatLike, f: CounterFn) -> Bound:
    """``alpha(beta(k, f'), f)`` where ``f'(m) = f(alpha(m, f))``."""
    f_alpha = Composite(lambda m: f.apply(alpha(m, f)), f"{f.name}.alpha")
    return alpha(beta(k, f_alpha), f)


def phi_general(sigma: Functional, psi: Functional, delta: Functional,
                gamma: Functional, eta: Functional, k: NatLike, f: CounterFn) -> Bound:
    """``sigma(2k+1, psi(delta(2k+1), f'), f)`` with ``f'(m) = max(gamma(2k+1, m, f), eta(2k+1, m, f))``."""
    K = 2 * k + 1
    f_max = Composite(lambda m: _lazy_max(lambda: gamma(K, m, f), lambda: eta(K, m, f)),
                      f"max[gamma,eta]({f.name})")
    return sigma(K, psi(delta(K), f_max), f)


def eta_plain(p: ProblemParams, k: NatLike, n: NatLike, f: CounterFn) -> Bound:
    return f.apply(p.nat(n))


# ---------------------------------------------------------------------------
# Browder


def alpha_browder(p: ProblemParams, k: NatLike, f: Optional[CounterFn] = None) -> Bound:
    return p.b * (p.nat(k) + 1)


def beta_browder(p: ProblemParams, k: NatLike, f: CounterFn) -> Bound:
    """``12b (omega_f^(r(k))(0) + 1)^2``."""
    f = tilde(f)
    top = iterate(omega(p, f), r(p, k), 0, p.cap)
    return 12 * p.b * (top + 1).square()


def psi_browder(p: ProblemParams, k: NatLike, f: CounterFn) -> Bound:
    return psi_general(lambda k_, f_: alpha_browder(p, k_, f_),
                       lambda k_, f_: beta_browder(p, k_, f_), k, tilde(f))


def _scaled_minus_one(p: ProblemParams, c: int, k: NatLike, x: Bound) -> Bound:
    """``c (k+1)^2 (x+1) - 1`` for ``c >= 2``.

    The subtraction is done exactly whenever ``k`` and ``x`` are exact.  If
    either is saturated the product is at least ``2 * cap``, so the result
    is still at least ``cap``.
    """
    K = p.nat(k)
    if K.saturated or x.saturated:
        return Bound.sat(p.cap)
    return Bound.exact(c * (K.value + 1) ** 2 * (x.value + 1) - 1, p.cap)


def delta_browder(p: ProblemParams, k: NatLike) -> Bound:
    """``2(k+1)^2 - 1``."""
    return _scaled_minus_one(p, 2, k, Bound.exact(0, p.cap))


def gamma_browder(p: ProblemParams, k: NatLike, n: NatLike, f: CounterFn) -> Bound:
    """``2b (f(n) + 1)(k+1)^2``."""
    return 2 * p.b * (p.nat(k) + 1).square() * (f.apply(p.nat(n)) + 1)


def sigma_browder(p: ProblemParams, k: NatLike, n: NatLike, f: Optional[CounterFn] = None) -> Bound:
    return p.nat(n)


def browder_instantiation(p: ProblemParams) -> dict:
    return dict(
        sigma=lambda k, n, f: sigma_browder(p, k, n, f),
        psi=lambda k, f: psi_browder(p, k, f),
        delta=lambda k: delta_browder(p, k),
        gamma=lambda k, n, f: gamma_browder(p, k, n, f),
        eta=lambda k, n, f: eta_plain(p, k, n, f),
    )


def browder_h(p: ProblemParams, k: int, f: CounterFn) -> CounterFn:
    """``m -> max(8b (f(12b^2 (m+1)^2 + b) + 1)(k+1)^2, 12b(m+1)^2) + 1``."""
    b = p.b

    def h(m: Bound) -> Bound:
        sq = (m + 1).square()
        tail = 12 * b * sq
        return _lazy_max(lambda: tail,
                         lambda: 8 * b * (k + 1) ** 2 * (f.apply(12 * b * b * sq + b) + 1)) + 1

    return Composite(h, f"h[{f.name}]", inflationary=True, strict=True)


def phi_browder(p: ProblemParams, k: int, f: CounterFn) -> Bound:
    """Closed-form rate ``12b^2 (h^(R)(0) + 1)^2 + b`` with ``R = 64 b^4 (k+1)^4 + b^2``."""
    f = tilde(f)
    b = p.b
    R = 64 * b**4 * (k + 1) ** 4 + b**2
    top = iterate(browder_h(p, k, f), R, 0, p.cap)
    return 12 * b * b * (top + 1).square() + b


# ---------------------------------------------------------------------------
# Halpern-type (Wittmann) and cyclic (Bauschke) iterations


def sigma_prime(p: ProblemParams, k: NatLike, n: NatLike) -> Bound:
    """``nu(n~ + 1 + ln(3b^2 (k+1)^2))`` with ``n~ = max(n, mu(6b^2 (k+1)^2))``."""
    K = p.nat(k)
    b2 = p.b * p.b
    sq = (K + 1).square()
    n_tilde = _lazy_max(lambda: p.nat(n), lambda: p.moduli.mu.apply(6 * b2 * sq))
    return _with_log(p, n_tilde + 1, 3 * b2 * sq, p.moduli.nu)


def alpha_wittmann(p: ProblemParams, k: NatLike, f: Optional[CounterFn] = None) -> Bound:
    """``16 b^2 (k+1)^2 + 8b(k+1)``."""
    K1 = p.nat(k) + 1
    return 16 * p.b * p.b * K1.square() + 8 * p.b * K1


def beta0(p: ProblemParams, k: NatLike, f: CounterFn) -> Bound:
    """``12b (omega_{gamma_{k,f}}^(r(2k+1))(0) + 1)^2``."""
    f = tilde(f)
    K = p.nat(k)
    top = iterate(omega(p, gamma_kg(p, K, f)), r(p, 2 * K + 1), 0, p.cap)
    return 12 * p.b * (top + 1).square()


beta_wittmann = beta0


def psi_wittmann(p: ProblemParams, k: NatLike, f: CounterFn) -> Bound:
    return psi_general(lambda k_, f_: alpha_wittmann(p, k_, f_),
                       lambda k_, f_: beta_wittmann(p, k_, f_), k, tilde(f))


def delta_wittmann(p: ProblemParams, k: NatLike) -> Bound:
    """``12(k+1)^2 - 1``."""
    return _scaled_minus_one(p, 12, k, Bound.exact(0, p.cap))


delta_bauschke = delta_wittmann


def gamma_wittmann(p: ProblemParams, k: NatLike, n: NatLike, f: CounterFn) -> Bound:
    """``9b (k+1)^2 (f(sigma'(k, n)) + 1) - 1``."""
    return _scaled_minus_one(p, 9 * p.b, k, f.apply(sigma_prime(p, k, n)))


def eta_wittmann(p: ProblemParams, k: NatLike, n: NatLike, f: CounterFn) -> Bound:
    return f.apply(sigma_prime(p, k, n))


def sigma_wittmann(p: ProblemParams, k: NatLike, n: NatLike, f: Optional[CounterFn] = None) -> Bound:
    return sigma_prime(p, k, n)


def wittmann_instantiation(p: ProblemParams) -> dict:
    return dict(
        sigma=lambda k, n, f: sigma_wittmann(p, k, n, f),
        psi=lambda k, f: psi_wittmann(p, k, f),
        delta=lambda k: delta_wittmann(p, k),
        gamma=lambda k, n, f: gamma_wittmann(p, k, n, f),
        eta=lambda k, n, f: eta_wittmann(p, k, n, f),
    )


def _outer_rate(p: ProblemParams, k: int, f: CounterFn, psi: Functional) -> Bound:
    """``sigma'(2k+1, psi(48(k+1)^2 - 1, f'))`` with ``f'(m) = 36b(k+1)^2 (f(sigma'(2k+1, m)) + 1) - 1``."""
    K = 2 * k + 1

    def f_outer(m: Bound) -> Bound:
        return _scaled_minus_one(p, 36 * p.b, k, f.apply(sigma_prime(p, K, m)))

    inner = psi(48 * (k + 1) ** 2 - 1, Composite(f_outer, f"outer[{f.name}]"))
    return sigma_prime(p, K, inner)


def phi_wittmann(p: ProblemParams, k: int, f: CounterFn) -> Bound:
    return _outer_rate(p, k, tilde(f), lambda k_, f_: psi_wittmann(p, k_, f_))


def chi(p: ProblemParams, k: NatLike) -> Bound:
    """``nu(xi(2b(k+1)) + 1 + ell + ln(2b(k+1)))``."""
    t = 2 * p.b * (p.nat(k) + 1)
    head = p.moduli.xi.apply(t) + 1 + p.ell
    return _with_log(p, head, t, p.moduli.nu)


def alpha_tilde(p: ProblemParams, k: NatLike) -> Bound:
    """``max(mu(2 ell b (k+1)), chi(2k+1))``."""
    K = p.nat(k)
    return _lazy_max(lambda: p.moduli.mu.apply(2 * p.ell * p.b * (K + 1)),
                     lambda: chi(p, 2 * K + 1))


def alpha_hat(p: ProblemParams, k: NatLike) -> Bound:
    if p.tau is None:
        raise ValueError("alpha_hat needs tau")
    return alpha_tilde(p, p.tau.apply(p.nat(k)))


def beta_bauschke(p: ProblemParams, k: NatLike, f: CounterFn) -> Bound:
    """``3 beta0(k, g) + 2`` with ``g(m) = f(3m + 2)``."""
    f = tilde(f)
    g = Composite(lambda m: f.apply(3 * m + 2), f"{f.name}(3m+2)")
    return 3 * beta0(p, k, g) + 2


def psi_bauschke(p: ProblemParams, k: NatLike, f: CounterFn) -> Bound:
    return psi_general(lambda k_, f_: alpha_hat(p, k_),
                       lambda k_, f_: beta_bauschke(p, k_, f_), k, tilde(f))


gamma_bauschke = gamma_wittmann
eta_bauschke = eta_wittmann
sigma_bauschke = sigma_wittmann


def bauschke_instantiation(p: ProblemParams) -> dict:
    if p.tau is None:
        raise ValueError("the cyclic scheme needs tau")
    return dict(
        sigma=lambda k, n, f: sigma_bauschke(p, k, n, f),
        psi=lambda k, f: psi_bauschke(p, k, f),
        delta=lambda k: delta_bauschke(p, k),
        gamma=lambda k, n, f: gamma_bauschke(p, k, n, f),
        eta=lambda k, n, f: eta_bauschke(p, k, n, f),
    )


def phi_bauschke(p: ProblemParams, k: int, f: CounterFn) -> Bound:
    if p.tau is None:
        raise ValueError("phi_bauschke needs tau")
    return _outer_rate(p, k, tilde(f), lambda k_, f_: psi_bauschke(p, k_, f_))


def phi_for_scheme(p: ProblemParams, scheme: str, k: int, f: CounterFn) -> Bound:
    if scheme == "browder":
        return phi_browder(p, k, f)
    if scheme == "halpern":
        return phi_wittmann(p, k, f)
    if scheme == "bauschke":
        return phi_bauschke(p, k, f)
    raise ValueError(f"no rate for scheme {scheme!r}")


# ---------------------------------------------------------------------------
# lookup by name


def _fn_or_value(make_fn, args):
    fn = make_fn()
    return fn if not args else fn.apply(args[0])


# name -> (arities, evaluator(params, args))
_PRIMITIVES: dict = {
    "r": ((1,), lambda p, a: r(p, a[0])),
    "omega": ((1, 2), lambda p, a: _fn_or_value(lambda: omega(p, a[0]), [p.nat(x) for x in a[1:]])),
    "gamma_kg": ((2, 3), lambda p, a: _fn_or_value(lambda: gamma_kg(p, a[0], a[1]), [p.nat(x) for x in a[2:]])),
    "chi": ((1,), lambda p, a: chi(p, a[0])),
    "alpha_tilde": ((1,), lambda p, a: alpha_tilde(p, a[0])),
    "alpha_hat": ((1,), lambda p, a: alpha_hat(p, a[0])),
    "beta0": ((2,), lambda p, a: beta0(p, a[0], a[1])),
    "delta_B": ((1,), lambda p, a: delta_browder(p, a[0])),
    "delta_W": ((1,), lambda p, a: delta_wittmann(p, a[0])),
    "gamma_B": ((3,), lambda p, a: gamma_browder(p, a[0], a[1], a[2])),
    "gamma_W": ((3,), lambda p, a: gamma_wittmann(p, a[0], a[1], a[2])),
    "eta": ((3,), lambda p, a: eta_plain(p, a[0], a[1], a[2])),
    "eta_W": ((3,), lambda p, a: eta_wittmann(p, a[0], a[1], a[2])),
    "sigma": ((2, 3), lambda p, a: sigma_browder(p, a[0], a[1])),
    "sigma_prime": ((2,), lambda p, a: sigma_prime(p, a[0], a[1])),
    "alpha_B": ((1,), lambda p, a: alpha_browder(p, a[0])),
    "alpha_W": ((1,), lambda p, a: alpha_wittmann(p, a[0])),
    "proj_bound_initial": ((2,), lambda p, a: proj_bound_initial(p, a[0], a[1])),
    "beta_browder": ((2,), lambda p, a: beta_browder(p, a[0], a[1])),
    "psi_browder": ((2,), lambda p, a: psi_browder(p, a[0], a[1])),
    "phi_browder": ((2,), lambda p, a: phi_browder(p, a[0], a[1])),
    "beta_wittmann": ((2,), lambda p, a: beta_wittmann(p, a[0], a[1])),
    "psi_wittmann": ((2,), lambda p, a: psi_wittmann(p, a[0], a[1])),
    "phi_wittmann": ((2,), lambda p, a: phi_wittmann(p, a[0], a[1])),
    "beta_bauschke": ((2,), lambda p, a: beta_bauschke(p, a[0], a[1])),
    "psi_bauschke": ((2,), lambda p, a: psi_bauschke(p, a[0], a[1])),
    "phi_bauschke": ((2,), lambda p, a: phi_bauschke(p, a[0], a[1])),
}

PRIMITIVE_NAMES = tuple(sorted(_PRIMITIVES))


def eval_primitive(p: ProblemParams, name: str, args: list):
    """Evaluate a named primitive or rate functional.

    Functions-valued primitives (``omega``, ``gamma_kg``) return a
    :class:`CounterFn` when called without the point argument.
    """
    if name not in _PRIMITIVES:
        raise KeyError(f"unknown primitive {name!r}; known: {', '.join(PRIMITIVE_NAMES)}")
    arities, fn = _PRIMITIVES[name]
    if len(args) not in arities:
        raise TypeError(f"{name} takes {' or '.join(map(str, arities))} arguments, got {len(args)}")
    return fn(p, list(args))
