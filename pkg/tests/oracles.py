"""Plain-integer reference evaluations for the rate building blocks.

These are written straight from the defining formulas with Python ints and
no saturation, so they are only usable on small inputs.  ``None`` means the
value exceeded ``limit``.
"""

import math


def bitlen(x):
    return math.floor(math.log2(x)) + 1 if x > 0 else 0


def r(b, k):
    return b**4 * (k + 1) ** 2 + b**2


def omega_step(b, g, m):
    t = 12 * b * (m + 1) ** 2
    return max(g(t), t) + 1


def omega_power(b, g, times, limit):
    x = 0
    for _ in range(times):
        x = omega_step(b, g, x)
        if x > limit:
            return None
    return x


def beta_browder(b, k, f, limit=10**30):
    top = omega_power(b, f, r(b, k), limit)
    return None if top is None else 12 * b * (top + 1) ** 2


def psi_browder(b, k, f, limit=10**30):
    alpha = lambda m: b * (m + 1)
    beta = beta_browder(b, k, lambda m: f(alpha(m)), limit)
    return None if beta is None else alpha(beta)


def sigma_prime(b, k, n, mu=lambda x: x, nu=lambda x: 3**x, limit=10**30):
    sq = 3 * b * b * (k + 1) ** 2
    exponent = max(n, mu(2 * sq)) + 1 + bitlen(sq)
    if exponent > 200:
        return None
    v = nu(exponent)
    return v if v <= limit else None


def chi(b, ell, k):
    t = 2 * b * (k + 1)
    return 3 ** (ell * (t + 1) + 1 + ell + bitlen(t))


def alpha_tilde(b, ell, k):
    return max(2 * ell * b * (k + 1), chi(b, ell, 2 * k + 1))


def running_max(f):
    return lambda n: max(f(i) for i in range(n + 1))


def proj_bound_initial(b, k, f):
    ft = running_max(f)
    x = 0
    for _ in range(b * b * (k + 1)):
        x = ft(x) + 1
    return x
