import itertools

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from metastab import rates
from metastab.counterfn import (
    Affine,
    Bound,
    Composite,
    Constant,
    FromCallable,
    Identity,
    LambdaModuli,
    LambdaSeq,
    SaturationError,
    default_harmonic_moduli,
    majorizes,
)
from metastab.rates import ProblemParams

ID, PLUS10, TIMES2 = Identity(), Affine(1, 10), Affine(2, 0)


def P(b=1, ell=1, tau=None, cap=10**18, moduli=None):
    return ProblemParams(b=b, ell=ell, tau=tau, cap=cap, moduli=moduli)


class TestFrozenValues:
    def test_r(self):
        assert rates.r(P(), 0) == 2 == oracles.r(1, 0)
        assert rates.r(P(b=2), 1) == 68 == oracles.r(2, 1)

    def test_omega(self):
        w = rates.omega(P(), ID)
        assert w(0) == 13 == oracles.omega_step(1, ID, 0)
        assert w(w(0)) == 2353

    def test_beta_browder(self):
        assert rates.beta_browder(P(), 0, ID) == 66495792 == oracles.beta_browder(1, 0, ID)
        # a constant-0 f is swamped by the 12b(m+1)^2 term
        assert rates.beta_browder(P(), 0, Constant(0)) == 66495792

    def test_psi_browder(self):
        assert rates.psi_browder(P(), 0, ID) == 87674509 == oracles.psi_browder(1, 0, ID)

    def test_sigma_prime(self):
        assert rates.sigma_prime(P(), 0, 0) == 19683 == oracles.sigma_prime(1, 0, 0)
        assert rates.sigma_prime(P(), 0, 100).saturated

    def test_cyclic_thresholds(self):
        p = P(ell=2, tau=ID)
        assert rates.chi(p, 0) == 177147 == oracles.chi(1, 2, 0)
        assert rates.alpha_tilde(p, 0) == 43046721 == oracles.alpha_tilde(1, 2, 0)
        assert rates.alpha_hat(p, 0) == 43046721
        assert rates.alpha_hat(p, 3).saturated

    def test_alpha_forms(self):
        assert rates.alpha_wittmann(P(), 3) == 288
        assert rates.alpha_browder(P(b=3), 4) == 15

    def test_deltas(self):
        assert rates.delta_browder(P(), 1) == 7
        assert rates.delta_wittmann(P(), 1) == 47

    @pytest.mark.parametrize("b,k,f,want", [
        (1, 0, Identity(), 1),
        (1, 1, Identity(), 2),
        (2, 0, Identity(), 4),
        (2, 0, Constant(0), 1),  # n -> 0 + 1 is stuck at 1
        (1, 3, Affine(2, 0), 15),
    ])
    def test_proj_bound_initial(self, b, k, f, want):
        assert rates.proj_bound_initial(P(b=b), k, f) == want == oracles.proj_bound_initial(b, k, f)

    def test_non_monotone_f_goes_through_envelope(self):
        spike = FromCallable(lambda n: 50 if n == 1 else 0)
        assert rates.proj_bound_initial(P(), 1, spike) == oracles.proj_bound_initial(1, 1, spike)

    def test_full_rates_saturate(self):
        for scheme in ("browder", "halpern", "bauschke"):
            assert rates.phi_for_scheme(P(ell=2, tau=ID), scheme, 0, ID).saturated

    def test_tight_log_option(self):
        loose = rates.sigma_prime(P(), 0, 0)
        tight = rates.sigma_prime(ProblemParams(b=1, tight_log=True), 0, 0)
        assert tight <= loose


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 3), st.integers(0, 3), st.integers(0, 20))
def test_beta_matches_oracle_or_saturates(b, k, c):
    f = Affine(1, c)
    got = rates.beta_browder(P(b=b, cap=10**40), k, f)
    want = oracles.beta_browder(b, k, f, limit=10**40)
    if want is None or want >= 10**40:
        assert got.saturated
    else:
        assert got == want


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 3), st.integers(0, 6), st.integers(0, 40))
def test_sigma_prime_matches_oracle(b, k, n):
    got = rates.sigma_prime(P(b=b), k, n)
    want = oracles.sigma_prime(b, k, n, limit=10**18)
    assert got.saturated if want is None or want >= 10**18 else got == want


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 4), st.integers(1, 2), st.sampled_from([ID, PLUS10, TIMES2]),
       st.sampled_from(["beta_browder", "psi_browder", "proj_bound_initial", "beta0"]))
def test_saturation_is_sound_at_larger_cap(k, b, f, name):
    small = rates.eval_primitive(P(b=b, cap=10**8), name, [k, f])
    big = rates.eval_primitive(P(b=b, cap=10**9), name, [k, f])
    if small.saturated:
        assert big.value >= 10**8
    else:
        assert big == small


class TestStructure:
    """Closed forms agree with the generic compositions they were derived from."""

    @pytest.mark.parametrize("k,f", [(0, ID), (1, PLUS10), (2, TIMES2), (3, Affine(3, 1)), (0, Constant(4))])
    def test_browder_inner_map(self, k, f):
        # h is omega applied to f'(alpha(m)) where f'(m) = max(gamma(2k+1, m, f), f(m))
        p = P(b=2, cap=1 << 4000)
        K = 2 * k + 1
        f_prime = Composite(lambda m: rates.gamma_browder(p, K, m, f), "f'")
        f_alpha = Composite(lambda m: f_prime.apply(rates.alpha_browder(p, m)), "f'a")
        h = rates.browder_h(p, k, f)
        w = rates.omega(p, f_alpha)
        for m in (0, 1, 7, 123, 10**6):
            assert h(m) == w(m)

    @pytest.mark.parametrize("k,f", [(0, ID), (1, PLUS10), (2, TIMES2), (3, Affine(3, 1)), (1, Constant(0))])
    def test_browder_iteration_count(self, k, f):
        p = P(b=2)
        assert rates.r(p, rates.delta_browder(p, 2 * k + 1)) == 64 * 2**4 * (k + 1) ** 4 + 4

    @pytest.mark.parametrize("scheme,k,f", [
        ("browder", 0, ID), ("browder", 2, PLUS10), ("halpern", 1, TIMES2),
        ("halpern", 3, ID), ("bauschke", 0, PLUS10), ("bauschke", 2, TIMES2),
    ])
    @pytest.mark.parametrize("cap", [10**18, 10**200])
    def test_closed_form_equals_general(self, scheme, k, f, cap):
        p = P(ell=2, tau=ID, cap=cap)
        inst = {"browder": rates.browder_instantiation, "halpern": rates.wittmann_instantiation,
                "bauschke": rates.bauschke_instantiation}[scheme](p)
        general = rates.phi_general(inst["sigma"], inst["psi"], inst["delta"], inst["gamma"],
                                    inst["eta"], k, f)
        closed = rates.phi_for_scheme(p, scheme, k, f)
        assert general == closed

    @pytest.mark.parametrize("k,f", [(0, ID), (1, PLUS10), (2, TIMES2), (0, Affine(5, 2)), (3, Constant(9))])
    def test_outer_rate_with_small_moduli(self, k, f):
        # with a linear nu the outer composition stays exact, so equality is not vacuous
        small = LambdaModuli(LambdaSeq(), Identity(), Affine(1, 0), Affine(1, 1), 1)
        p = P(b=1, cap=10**30, moduli=small)
        stub = lambda k_, f_: f_.apply(p.nat(k_)) + k_
        inst = rates.wittmann_instantiation(p)
        general = rates.phi_general(inst["sigma"], stub, inst["delta"], inst["gamma"], inst["eta"], k, f)
        closed = rates._outer_rate(p, k, f, stub)
        assert not closed.saturated
        assert general == closed


# functionals of (params, k, f) that should be monotone in k and in f under <=*
MONOTONE = {
    "r": lambda p, k, f: rates.r(p, k),
    "chi": lambda p, k, f: rates.chi(p, k),
    "alpha_tilde": lambda p, k, f: rates.alpha_tilde(p, k),
    "alpha_hat": lambda p, k, f: rates.alpha_hat(p, k),
    "alpha_W": lambda p, k, f: rates.alpha_wittmann(p, k),
    "alpha_B": lambda p, k, f: rates.alpha_browder(p, k),
    "delta_B": lambda p, k, f: rates.delta_browder(p, k),
    "delta_W": lambda p, k, f: rates.delta_wittmann(p, k),
    "sigma_prime": lambda p, k, f: rates.sigma_prime(p, k, f(3)),
    "omega": lambda p, k, f: rates.omega(p, f).apply(p.nat(k)),
    "gamma_kg": lambda p, k, f: rates.gamma_kg(p, k, f).apply(p.nat(5)),
    "gamma_B": lambda p, k, f: rates.gamma_browder(p, k, 4, f),
    "gamma_W": lambda p, k, f: rates.gamma_wittmann(p, k, 0, f),
    "eta_W": lambda p, k, f: rates.eta_wittmann(p, k, 0, f),
    "proj_bound_initial": rates.proj_bound_initial,
    "beta_browder": rates.beta_browder,
    "beta0": rates.beta0,
    "beta_bauschke": rates.beta_bauschke,
    "psi_browder": rates.psi_browder,
    "psi_wittmann": rates.psi_wittmann,
    "psi_bauschke": rates.psi_bauschke,
    "phi_browder": rates.phi_browder,
    "phi_wittmann": rates.phi_wittmann,
    "phi_bauschke": rates.phi_bauschke,
}


def monotonicity_violations(cap=10**18):
    fns = [ID, PLUS10, TIMES2]
    pairs = [(f, g) for f in fns for g in fns if majorizes(f, g)]
    bad = []
    for name, fn in MONOTONE.items():
        for b in (1, 2):
            p = P(b=b, ell=2, tau=ID, cap=cap)
            vals = {(k, f): fn(p, k, f) for k in range(4) for f in fns}
            for (k1, k2), (f, g) in itertools.product(itertools.combinations_with_replacement(range(4), 2), pairs):
                if not vals[(k1, f)] <= vals[(k2, g)]:
                    bad.append((name, b, k1, f.name, k2, g.name))
    return bad


def test_monotonicity_suite():
    assert monotonicity_violations() == []


def test_monotone_at_larger_cap():
    assert monotonicity_violations(cap=10**60) == []


def test_eval_primitive_dispatch():
    p = P()
    assert rates.eval_primitive(p, "r", [0]) == 2
    assert rates.eval_primitive(p, "omega", [ID, 0]) == 13
    assert callable(rates.eval_primitive(p, "omega", [ID]))
    with pytest.raises(KeyError):
        rates.eval_primitive(p, "nope", [])
    with pytest.raises(TypeError):
        rates.eval_primitive(p, "r", [0, 1])


def test_param_validation():
    with pytest.raises(ValueError):
        ProblemParams(b=0)
    with pytest.raises(ValueError):
        ProblemParams(b=1, ell=0)
    with pytest.raises(ValueError):
        ProblemParams(b=1, tau=FromCallable(lambda n: n))
    with pytest.raises(ValueError):
        rates.alpha_hat(P(), 0)


def test_saturated_log_argument_is_refused_when_unsound():
    tiny = LambdaModuli(LambdaSeq(), Identity(), Constant(2), Identity(), 1)
    p = P(cap=100, moduli=tiny)
    with pytest.raises(SaturationError):
        rates.sigma_prime(p, 10**3, 0)
