import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import kgbohm as kb
from kgbohm import CausalClass
from kgbohm.errors import SpeedNotSubluminal

G = np.diag([1.0, -1.0, -1.0, -1.0])


def test_minkowski_dot_examples():
    assert kb.minkowski_dot(kb.four_vector(1, 0, 0, 0), kb.four_vector(1, 0, 0, 0)) == 1.0
    assert kb.minkowski_dot(kb.four_vector(1, 1, 0, 0), kb.four_vector(1, 1, 0, 0)) == 0.0
    v = kb.four_vector(np.sqrt(2), 1, 0, 0)
    assert kb.minkowski_dot(v, v) == pytest.approx(1.0, abs=1e-15)


def test_four_vector_rejects_nonfinite():
    with pytest.raises(ValueError):
        kb.four_vector(np.nan, 0, 0, 0)
    with pytest.raises(ValueError):
        kb.four_vector(1, np.inf, 0, 0)


def test_boost_identity():
    np.testing.assert_array_equal(kb.boost([0, 0, 0]).matrix, np.eye(4))


def test_boost_textbook_case():
    out = kb.boost([0.6, 0, 0]).apply(kb.four_vector(1, 0, 0, 0))
    np.testing.assert_allclose(out, [1.25, 0.75, 0, 0], atol=1e-15)


def test_boost_preserves_metric():
    m = kb.boost([0.6, 0, 0]).matrix
    np.testing.assert_allclose(m.T @ G @ m, G, atol=1e-12)


def test_boost_subluminal_guard():
    with pytest.raises(SpeedNotSubluminal):
        kb.boost([1.0, 0, 0])
    with pytest.raises(SpeedNotSubluminal):
        kb.boost([0.8, 0.7, 0])


def test_boost_roundtrip_is_identity():
    beta = np.array([0.3, -0.2, 0.55])
    m = (kb.boost(beta) @ kb.boost(-beta)).matrix
    np.testing.assert_allclose(m, np.eye(4), atol=1e-10)


def test_lorentz_transform_rejects_non_orthogonal():
    with pytest.raises(ValueError):
        kb.LorentzTransform(np.eye(4) * 1.001)


@settings(max_examples=60, deadline=None)
@given(
    beta=st.tuples(*[st.floats(-0.55, 0.55) for _ in range(3)]),
    a=st.tuples(*[st.floats(-5, 5) for _ in range(4)]),
    b=st.tuples(*[st.floats(-5, 5) for _ in range(4)]),
)
def test_boost_preserves_inner_product(beta, a, b):
    transform = kb.boost(np.array(beta))
    a = np.array(a)
    b = np.array(b)
    before = kb.minkowski_dot(a, b)
    after = kb.minkowski_dot(transform.apply(a), transform.apply(b))
    assert abs(after - before) <= 1e-10 * (1.0 + abs(before))


@pytest.mark.parametrize("v,expected", [
    ((2 * np.sqrt(2), 2, 0, 0), CausalClass.TIMELIKE),
    ((1, 1, 0, 0), CausalClass.LIGHTLIKE),
    ((0.1, 1, 0, 0), CausalClass.SPACELIKE),
])
def test_causal_class_examples(v, expected):
    assert kb.causal_class(np.array(v), 1e-9) is expected


def test_causal_class_invariant_under_boosts():
    rng = np.random.default_rng(11)
    transforms = [kb.boost(rng.uniform(-0.5, 0.5, 3)) for _ in range(5)]
    vectors = [np.array(v) for v in
               [(2 * np.sqrt(2), 2, 0, 0), (0.1, 1, 0, 0), (3, 0.2, -1, 0.5)]]
    for v in vectors:
        base = kb.causal_class(v, 1e-9)
        for tr in transforms:
            assert kb.causal_class(tr.apply(v), 1e-8) is base


def test_causal_class_rejects_negative_tolerance():
    with pytest.raises(ValueError):
        kb.causal_class(np.array([1.0, 0, 0, 0]), -1.0)


def test_signed_distance_examples():
    lab = kb.Hypersurface(kb.four_vector(1, 0, 0, 0), 2.0)
    assert lab.signed_distance(np.array([2.0, 5, 0, 0])) == 0.0
    lab0 = kb.Hypersurface(kb.four_vector(1, 0, 0, 0), 0.0)
    assert lab0.signed_distance(np.array([3.0, 1, 0, 0])) == 3.0
    boosted = kb.Hypersurface(kb.boost([0.6, 0, 0]).apply(kb.four_vector(1, 0, 0, 0)), 0.0)
    assert kb.signed_distance(boosted, np.array([1.0, 1, 0, 0])) == pytest.approx(0.5)


def test_hypersurface_validation():
    with pytest.raises(ValueError):
        kb.Hypersurface(np.array([1.0, 1.0, 0, 0]), 0.0)  # lightlike normal
    with pytest.raises(ValueError):
        kb.Hypersurface(np.array([-1.0, 0, 0, 0]), 0.0)  # past-oriented


def test_surface_frame_orthonormal_and_embedding():
    normal = kb.boost([0.6, 0.1, -0.2]).apply(kb.four_vector(1, 0, 0, 0))
    sigma = kb.Hypersurface(normal, 1.3)
    triad = sigma.triad
    for i in range(3):
        assert abs(kb.minkowski_dot(triad[i], sigma.normal)) < 1e-12
        for j in range(3):
            expect = -1.0 if i == j else 0.0
            assert abs(kb.minkowski_dot(triad[i], triad[j]) - expect) < 1e-12
    u = np.array([0.4, -1.2, 0.7])
    x = sigma.embed(u)
    assert abs(sigma.signed_distance(x)) < 1e-12
    np.testing.assert_allclose(sigma.coordinates(x), u, atol=1e-12)
