import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from korn_lab.geometry import (DomainSpecError, ExteriorPointError, Polygon2D, axis_box, catalog,
                               cusp3d, koch_prefractal2d, l_shape, parse_domain_spec,
                               polygon_is_simple)


def brute_box_rho(x, lo, hi):
    return np.min(np.concatenate([x - lo, hi - x], axis=-1), axis=-1)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0.01, 0.99), min_size=3, max_size=3))
def test_box_distance_matches_face_distance(p):
    d = axis_box([0, 0, 0], [1, 1, 1])
    x = np.array([p])
    assert np.allclose(d.distance(x), brute_box_rho(x, 0.0, 1.0), atol=1e-15)


def test_lshape_distance_reentrant_corner():
    d = l_shape(2)
    # the reentrant corner sits at (1/2, 1/2)
    x = np.array([[0.25, 0.75], [0.4, 0.4], [0.75, 0.25]])
    rho = d.distance(x)
    assert rho[1] == pytest.approx(np.hypot(0.1, 0.1), abs=1e-15)
    assert rho[0] == pytest.approx(0.25)
    assert not d.contains(np.array([[0.75, 0.75]]))[0]


def test_exterior_distance_raises():
    with pytest.raises(ExteriorPointError):
        axis_box([0, 0], [1, 1]).distance(np.array([[2.0, 0.5]]))


def test_polygon_reoriented_ccw():
    cw = [[0, 0], [0, 1], [1, 1], [1, 0]]
    p = Polygon2D(cw)
    a = p.vertices
    area2 = np.sum(a[:, 0] * np.roll(a[:, 1], -1) - np.roll(a[:, 0], -1) * a[:, 1])
    assert area2 > 0
    assert p.distance(np.array([[0.5, 0.5]]))[0] == pytest.approx(0.5)


def test_self_intersecting_polygon_rejected():
    with pytest.raises(DomainSpecError):
        Polygon2D([[0, 0], [1, 1], [1, 0], [0, 1]])
    assert not polygon_is_simple(np.array([[0, 0], [1, 1], [1, 0], [0, 1]], float))


def test_koch_prefractal_is_simple():
    d = koch_prefractal2d(3)
    assert polygon_is_simple(d.vertices)
    assert len(d.vertices) == 3 * 4 ** 3


def test_cusp_membership_and_distance_bound(rng):
    d = cusp3d(2.0)
    x = d.sample_interior(rng, 500)
    assert np.all(x[:, 2] < x[:, 1] ** 2)
    rho = d.distance(x)
    assert np.all(rho > 0)
    # rho is at most the vertical gap to the graph
    assert np.all(rho <= x[:, 1] ** 2 - x[:, 2] + 1e-15)


def test_cusp_curve_distance_against_dense_search():
    d = cusp3d(2.0)
    p = np.array([[0.5, 0.6, 0.1], [0.5, 0.3, 0.05], [0.5, 0.9, 0.7]])
    t = np.linspace(0, 1, 200001)
    for x in p:
        brute = np.min(np.hypot(t - x[1], t ** 2 - x[2]))
        assert d.curve_distance(x[1:2], x[2:3])[0] == pytest.approx(brute, abs=1e-9)


@pytest.mark.parametrize("text, path", [
    ("{", "$"),
    ('{"type": "axis_box", "lo": [0, 0]}', "$.hi"),
    ('{"type": "axis_box", "lo": [0, 0], "hi": [1]}', "$.hi"),
    ('{"type": "l_shape", "n": 5}', "$.n"),
    ('{"type": "box_union", "boxes": [{"lo": [0, 0], "hi": [1, "a"]}]}', "$.boxes[0].hi"),
    ('{"type": "nope"}', "$.type"),
])
def test_domain_spec_errors_name_path(text, path):
    with pytest.raises(DomainSpecError) as exc:
        parse_domain_spec(text)
    assert exc.value.path == path


def test_domain_spec_roundtrip():
    for d in catalog().values():
        again = parse_domain_spec(json.dumps(d.to_dict()))
        assert again.n == d.n
        assert np.allclose(again.lo, d.lo) and np.allclose(again.hi, d.hi)


def test_disconnected_box_union_rejected():
    with pytest.raises(DomainSpecError):
        parse_domain_spec('{"type": "box_union", "boxes": [{"lo": [0, 0], "hi": [1, 1]},'
                          ' {"lo": [2, 0], "hi": [3, 1]}]}')
