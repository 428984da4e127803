import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from metastab import iterations as it
from metastab.counterfn import LambdaSeq
from metastab.space import (
    Ball,
    Composition,
    LineProjection,
    MetricProjection,
    OperatorFamily,
    Rotation,
)


class TestResolvent:
    @pytest.mark.parametrize("n", [1, 2, 10, 57, 200])
    def test_picard_matches_linear_solve(self, quarter_turn, half_disc, n):
        v0 = np.array([0.5, 0.0])
        exact, c1 = it.solve_resolvent(quarter_turn, half_disc, v0, n, 1e-12, method="exact")
        picard, c2 = it.solve_resolvent(quarter_turn, half_disc, v0, n, 1e-12, method="picard")
        assert np.linalg.norm(exact - picard) <= 1e-9
        assert c1 <= 1e-12 and c2 <= 1e-12

    def test_fixed_point_in_closed_form(self, quarter_turn, half_disc):
        # x = q R x + (1-q) v0 for the quarter turn, solved by hand
        n, v0 = 3, np.array([0.5, 0.0])
        q = n / (n + 1)
        want = np.linalg.solve(np.eye(2) - q * np.array([[0, -1], [1, 0]]), (1 - q) * v0)
        got, _ = it.solve_resolvent(quarter_turn, half_disc, v0, n, 1e-12)
        assert np.allclose(got, want, atol=1e-15)

    def test_certificate_bounds_true_error(self, half_disc):
        op = Composition([Rotation(0.9, [0.0, 0.0], 2), MetricProjection(Ball([0.1, 0.0], 0.3))])
        v0 = np.array([0.0, 0.4])
        for n in (1, 5, 40):
            x, cert = it.solve_resolvent(op, half_disc, v0, n, 1e-6, method="picard")
            ref, _ = it.solve_resolvent(op, half_disc, v0, n, 1e-14, method="picard")
            assert np.linalg.norm(x - ref) <= cert + 1e-13

    def test_errors(self, quarter_turn, half_disc):
        nonaffine = MetricProjection(half_disc)
        with pytest.raises(it.SolverError):
            it.solve_resolvent(nonaffine, half_disc, [0.5, 0.0], 3, 1e-9, method="exact")
        with pytest.raises(it.SolverError):
            it.solve_resolvent(quarter_turn, half_disc, [0.5, 0.0], 1000, 1e-15, method="picard",
                               max_steps=10)
        with pytest.raises(ValueError):
            it.solve_resolvent(quarter_turn, half_disc, [0.5, 0.0], 3, 0.0)

    def test_default_eps(self):
        assert it.default_eps(0) == 1e-10
        assert it.default_eps(10**6) < 1e-12


class TestSequences:
    def test_browder_quasi_fixed(self, quarter_turn, half_disc):
        tr = it.browder_sequence(quarter_turn, half_disc, [0.5, 0.0], 300)
        n = np.arange(tr.length)
        assert np.all(tr.residuals <= 1.0 / (n + 1) + 1e-12)
        assert tr.certs[0] == 0.0 and np.all(tr.certs <= 1e-10)

    def test_halpern_is_single_operator_cyclic(self, quarter_turn, half_disc):
        u0 = [0.5, 0.0]
        h = it.halpern_sequence(quarter_turn, half_disc, u0, None, 200)
        c = it.bauschke_sequence(OperatorFamily((quarter_turn,)), half_disc, u0, None, 200)
        assert np.array_equal(h.points, c.points)
        assert h.residuals.ndim == 1 and c.residuals.shape == (201, 1)

    def test_compiled_recurrence_matches_python(self, axis_family):
        u0 = np.array([0.5, 0.5])
        lams = np.array([LambdaSeq()(n) for n in range(501)])
        A = np.array([op.affine()[0] for op in axis_family.operators])
        c = np.array([op.affine()[1] for op in axis_family.operators])
        out1, out2 = np.zeros((501, 2)), np.zeros((501, 2))
        out1[0] = out2[0] = u0
        it._affine_recurrence(A, c, u0, lams, out1)
        it._affine_recurrence_py(A, c, u0, lams, out2)
        assert np.allclose(out1, out2, atol=1e-15)

    def test_affine_and_generic_paths_agree(self, half_disc):
        rot = Rotation(0.4, [0.0, 0.0], 2)
        wrapped = Composition([rot, MetricProjection(Ball([0.0, 0.0], 10.0))])  # same map, not affine
        a = it.halpern_sequence(rot, half_disc, [0.3, 0.1], None, 300)
        b = it.halpern_sequence(wrapped, half_disc, [0.3, 0.1], None, 300)
        assert np.allclose(a.points, b.points, atol=1e-13)

    def test_step_identity(self, axis_family, unit_disc):
        tr = it.bauschke_sequence(axis_family, unit_disc, [0.5, 0.5], None, 100)
        u0 = tr.anchor
        for n in range(100):
            t = 1.0 / (n + 2)
            assert np.allclose(tr.points[n + 1], t * u0 + (1 - t) * axis_family.at(n + 1)(tr.points[n]))

    def test_leaving_the_body_is_an_error(self):
        tiny = Ball([0.0, 0.0], 0.1, 1)
        with pytest.raises(it.SolverError):
            it.halpern_sequence(Rotation(0.5, [1.0, 0.0], 2), tiny, [0.0, 0.0], None, 20)

    @settings(max_examples=10, deadline=None)
    @given(st.floats(-0.5, 0.5), st.floats(-0.5, 0.5), st.integers(5, 60))
    def test_deterministic(self, x, y, N):
        fam = OperatorFamily((LineProjection([1.0, 0.0]), LineProjection([1.0, 1.0])))
        a = it.bauschke_sequence(fam, None, [x, y], None, N)
        b = it.bauschke_sequence(fam, None, [x, y], None, N)
        assert a.to_csv() == b.to_csv()

    def test_csv_layout(self, axis_family, unit_disc):
        tr = it.bauschke_sequence(axis_family, unit_disc, [0.5, 0.5], None, 3)
        lines = tr.to_csv().splitlines()
        assert lines[0] == "n,x0,x1,residual,residual_T0,residual_T1,cert"
        assert len(lines) == 5

    def test_streamed_trace_has_no_points(self, axis_family):
        tr = it.bauschke_sequence(axis_family, None, [0.5, 0.5], None, 10**9, store=False)
        assert tr.streamed and tr.last == 10**9
        with pytest.raises(ValueError):
            tr.to_csv()


def brute_scan(trace, thresholds):
    P, fam, lam, u0 = trace.points, trace.family, trace.lam, trace.anchor
    N, ell = trace.last, fam.ell

    def q(j, n):
        if j == 0:
            return np.linalg.norm(P[n + 1] - fam.at(n + 1)(P[n]))
        if j == 1:
            return np.linalg.norm(P[n + ell] - P[n])
        if j == 2:
            y = P[n]
            for s in range(1, ell + 1):
                y = fam.at(n + s)(y)
            return np.linalg.norm(P[n] - y)
        return max(np.linalg.norm(P[n] - op(P[n])) for op in fam.operators)

    ends = [N - 1, N - ell, N, N]
    return [{t: max(q(j, n) for n in range(t, ends[j] + 1)) for t in thresholds[j] if t <= ends[j]}
            for j in range(4)]


@pytest.mark.parametrize("streamed", [False, True])
def test_scan_matches_brute_force(axis_family, streamed):
    N = 400
    stored = it.bauschke_sequence(axis_family, None, [0.5, 0.5], None, N)
    trace = it.bauschke_sequence(axis_family, None, [0.5, 0.5], None, N, store=not streamed)
    ths = [[0, 3, 50, 399], [0, 7, 398], [1, 100, 400], [0, 250, 9999]]
    got = it.scan_cyclic(trace, ths)
    want = brute_scan(stored, ths)
    for j in range(4):
        assert got.suffix_max[j].keys() == want[j].keys()
        for t in want[j]:
            assert got.suffix_max[j][t] == pytest.approx(want[j][t], abs=1e-14)


def test_generic_scan_matches_compiled():
    fam = OperatorFamily((LineProjection([1.0, 0.0]), LineProjection([1.0, 2.0]), Rotation(0.3, [0.0, 0.0], 2)))
    tr = it.bauschke_sequence(fam, None, [0.2, -0.4], None, 300, store=False)
    T = np.array([[0, 10, 200], [0, 10, 200], [0, 10, 200], [0, 10, 200]], dtype=np.int64)
    counts = np.array([3, 3, 3, 3], dtype=np.int64)
    A = np.array([op.affine()[0] for op in fam.operators])
    c = np.array([op.affine()[1] for op in fam.operators])
    seg1, last1 = it._scan_affine(A, c, tr.anchor, 300, T, counts)
    seg2, last2 = it._scan_generic(fam, tr.anchor, tr.lam, 300, T, counts)
    assert np.allclose(seg1, seg2, atol=1e-14) and np.allclose(last1, last2, atol=1e-14)
