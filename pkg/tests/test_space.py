from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from metastab.space import (
    Ball,
    Box,
    Composition,
    ConvexCombinationOp,
    IdentityOp,
    L1Shift,
    LineProjection,
    MetricProjection,
    OperatorFamily,
    PointNegation,
    Polytope,
    Reflection,
    Rotation,
    Segment,
    SparseL1,
    convex_combine,
    parse_body,
    parse_operator,
    residual,
    sample_points,
)

coord = st.floats(min_value=-3, max_value=3, allow_nan=False)
point2 = st.tuples(coord, coord).map(np.array)

BODIES = [
    Ball([0.0, 0.0], 0.5, 1),
    Ball([1.0, -1.0], 2.0),
    Box([-1.0, 0.0], [0.5, 1.0]),
    Segment([0.0, 0.0], [1.0, 1.0], 2),
]

OPERATORS = [
    Rotation(np.pi / 2, [0.0, 0.0], 2),
    Rotation(1.0, [0.3, -0.2], 2),
    Reflection([1.0, 1.0], [0.0, 0.5]),
    LineProjection([1.0, 2.0], [0.1, 0.0]),
    PointNegation([0.25, 0.25]),
    MetricProjection(Box([-1.0, -1.0], [0.0, 0.0])),
    Composition([Rotation(0.7, [0.0, 0.0], 2), MetricProjection(Ball([0.0, 0.0], 0.4))]),
    ConvexCombinationOp([0.3, 0.7], [Reflection([0.0, 1.0], [0.0, 0.0]), LineProjection([1.0, 0.0])]),
]


@settings(max_examples=60)
@given(point2, point2, st.sampled_from(OPERATORS))
def test_operators_are_nonexpansive(x, y, op):
    assert np.linalg.norm(op(x) - op(y)) <= np.linalg.norm(x - y) + 1e-12


@settings(max_examples=60)
@given(point2, point2, st.sampled_from(BODIES))
def test_projection_properties(x, y, body):
    px = body.project(x)
    assert body.contains(px)
    # idempotent
    assert np.allclose(body.project(px), px, atol=1e-12)
    # variational inequality against another member of the body
    z = body.project(y)
    assert np.dot(x - px, z - px) <= 1e-9
    # firmly nonexpansive implies nonexpansive
    assert np.linalg.norm(px - z) <= np.linalg.norm(x - y) + 1e-12


def test_affine_forms_match_direct_application():
    X = np.random.default_rng(0).uniform(-2, 2, size=(20, 2))
    for op in OPERATORS:
        direct = np.array([op(x) for x in X])
        assert np.allclose(op.apply_many(X), direct, atol=1e-12)


def test_quarter_turn_is_exact():
    R = Rotation(np.pi / 2, [0.0, 0.0], 2)
    assert R(np.array([0.5, 0.0])).tolist() == [0.0, 0.5]


def test_composition_order():
    shift_then_project = Composition([PointNegation([1.0, 0.0]), LineProjection([0.0, 1.0])])
    assert np.allclose(shift_then_project(np.array([0.0, 3.0])), [0.0, -3.0])


def test_body_diameter_bound():
    assert Ball([0, 0], 0.5).b == 1
    assert Ball([0, 0], 1.0).b == 2
    with pytest.raises(ValueError):
        Ball([0, 0], 1.0, 1)
    with pytest.raises(ValueError):
        Ball([0, 0], 0.5, 0)


def test_polytope():
    square = Polytope([[1, 0], [-1, 0], [0, 1], [0, -1]], [1, 1, 1, 1])
    assert len(square.vertices) == 4
    assert square.diameter() == pytest.approx(2 * np.sqrt(2))
    assert square.b == 3
    assert square.contains(np.array([0.9, -0.9])) and not square.contains(np.array([1.1, 0.0]))
    with pytest.raises(ValueError):
        Polytope([[1, 0], [0, 1]], [1, 1])
    with pytest.raises(NotImplementedError):
        square.project(np.zeros(2))


def test_sampling_is_deterministic_and_inside():
    for body in BODIES:
        a = sample_points(body, 30, seed=4)
        b = sample_points(body, 30, seed=4)
        assert all(np.array_equal(p, q) for p, q in zip(a, b))
        assert all(body.contains(p) for p in a)
        assert np.array_equal(a[0], body.center())


def test_convex_combine_clamps(caplog):
    u, v = np.zeros(2), np.ones(2)
    assert np.array_equal(convex_combine(1.5, u, v), v)
    assert "clamped" in caplog.text


class TestL1:
    def test_shift_is_isometry(self):
        x = SparseL1({0: Fraction(1, 3), 4: Fraction(-2, 5)})
        s = L1Shift()(x)
        assert s.norm() == x.norm() and s.support == [1, 5]

    def test_residual_exact(self):
        x = SparseL1.constant_prefix(Fraction(1, 4), 4)
        assert residual(L1Shift(), x) == Fraction(1, 2)

    def test_no_mixing(self):
        with pytest.raises(TypeError):
            convex_combine(0.5, SparseL1(), np.zeros(2))


def test_family_cycles():
    fam = OperatorFamily((IdentityOp(2), PointNegation([0.0, 0.0])))
    assert fam.ell == 2
    assert fam.at(0) is fam.operators[0] and fam.at(3) is fam.operators[1]


def test_parsers():
    body = parse_body({"kind": "ball", "center": [0, 0], "radius": 1, "b": 2})
    op = parse_operator({"kind": "rotation", "degrees": 90}, 2)
    assert np.allclose(op(np.array([1.0, 0.0])), [0.0, 1.0])
    proj = parse_operator({"kind": "projection"}, 2, body)
    assert np.allclose(proj(np.array([3.0, 0.0])), [1.0, 0.0])
    with pytest.raises(ValueError):
        parse_operator({"kind": "warp"}, 2)
