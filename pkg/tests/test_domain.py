import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from extremal_lab.errors import InvalidSpec
from extremal_lab.geom2d import (
    Annulus,
    Disk,
    Ellipse,
    PeriodicStrip,
    Polygon,
    domain_spec_from_json,
    domain_spec_to_json,
)

ALL_SPECS = [
    Disk(1.0),
    Ellipse(2.0, 1.0),
    Polygon(((0, 0), (1, 0), (1, 1), (0, 1))),
    Annulus(0.5, 1.25),
    PeriodicStrip(6.0, (1.0, 0.1)),
]


@pytest.mark.parametrize("spec", ALL_SPECS, ids=lambda s: s.kind)
def test_json_round_trip(spec):
    blob = json.dumps(domain_spec_to_json(spec))
    back = domain_spec_from_json(json.loads(blob))
    assert back == spec


_pos = st.floats(min_value=0.01, max_value=100.0, allow_nan=False)


@given(
    st.one_of(
        st.builds(Disk, radius=_pos),
        st.builds(Ellipse, semi_a=_pos, semi_b=_pos),
        st.tuples(_pos, _pos).map(lambda t: Annulus(min(t) / 2, max(t))),
        st.tuples(_pos, _pos).map(lambda t: PeriodicStrip(t[0], (t[1],))),
    )
)
@settings(max_examples=80, deadline=None)
def test_json_round_trip_property(spec):
    spec.validate()
    back = domain_spec_from_json(json.loads(json.dumps(domain_spec_to_json(spec))))
    assert back == spec


def test_json_needs_kind():
    with pytest.raises(InvalidSpec):
        domain_spec_from_json({"radius": 1.0})
    with pytest.raises(InvalidSpec):
        domain_spec_from_json({"kind": "hyperbola"})


def test_invalid_specs_rejected():
    with pytest.raises(InvalidSpec):
        Disk(-1.0).validate()
    with pytest.raises(InvalidSpec):
        Annulus(1.0, 0.5).validate()
    with pytest.raises(InvalidSpec):
        PeriodicStrip(5.0, (0.1, 0.5)).validate()  # half-width dips negative
    # clockwise square
    with pytest.raises(InvalidSpec):
        Polygon(((0, 0), (0, 1), (1, 1), (1, 0))).validate()
    # bow-tie
    with pytest.raises(InvalidSpec):
        Polygon(((0, 0), (1, 1), (1, 0), (0, 1))).validate()


def test_areas():
    assert Disk(1.5).area() == pytest.approx(math.pi * 2.25)
    assert Ellipse(2, 1).area() == pytest.approx(2 * math.pi)
    assert Polygon(((0, 0), (2, 0), (2, 1), (0, 1))).area() == pytest.approx(2.0)
    assert Annulus(0.5, 1.0).area() == pytest.approx(math.pi * 0.75)
    # oscillatory half-width modes do not change the cell area
    assert PeriodicStrip(6.0, (1.0, 0.3, -0.1)).area() == pytest.approx(12.0)


def test_contains_strip_and_annulus():
    s = PeriodicStrip(4.0, (1.0, 0.25))
    pts = np.array([[0.0, 1.2], [0.0, 1.3], [2.0, 0.74], [2.0, 0.8]])
    assert list(s.contains(pts)) == [True, False, True, False]
    a = Annulus(0.5, 1.0)
    pts = np.array([[0.0, 0.0], [0.7, 0.0], [1.1, 0.0]])
    assert list(a.contains(pts)) == [False, True, False]


def test_polygon_signed_distance_sign():
    p = Polygon(((0, 0), (1, 0), (1, 1), (0, 1)))
    d = p.signed_distance(np.array([[0.5, 0.5], [2.0, 0.5]]))
    assert d[0] == pytest.approx(-0.5)
    assert d[1] == pytest.approx(1.0)
