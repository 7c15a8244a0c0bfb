"""Geometry tests: exact-rational oracle plus frozen examples and properties."""

from __future__ import annotations

import random
from fractions import Fraction

import pytest
from hypothesis import given
from hypothesis import strategies as st

from patimt.geometry import (
    BBox,
    CoordSpace,
    CoordinateRangeError,
    ImageDims,
    SpaceMismatchError,
    area,
    convert,
    iou,
    overlap_ratio,
    union_box,
)

# ---------------------------------------------------------------------------
# Oracle. All arithmetic stays in Fraction so there is no float rounding to
# hide behind; the library must agree exactly on integer-coordinate boxes.
# ---------------------------------------------------------------------------


def _frac_area(t):
    return (Fraction(t[2]) - Fraction(t[0])) * (Fraction(t[3]) - Fraction(t[1]))


def _frac_inter(a, b):
    w = Fraction(min(a[2], b[2])) - Fraction(max(a[0], b[0]))
    h = Fraction(min(a[3], b[3])) - Fraction(max(a[1], b[1]))
    if w <= 0 or h <= 0:
        return Fraction(0)
    return w * h


def oracle_iou(a, b):
    inter = _frac_inter(a, b)
    union = _frac_area(a) + _frac_area(b) - inter
    if union == 0:
        return Fraction(0)
    return inter / union


def oracle_overlap_ratio(inner, outer):
    denom = _frac_area(inner)
    if denom == 0:
        return Fraction(0)
    return _frac_inter(inner, outer) / denom


def oracle_union(a, b):
    return (min(a[0], b[0]), min(a[1], b[1]), max(a[2], b[2]), max(a[3], b[3]))


def _random_box_tuple(rng):
    xs = sorted(rng.randint(0, 1000) for _ in range(2))
    ys = sorted(rng.randint(0, 1000) for _ in range(2))
    return (xs[0], ys[0], xs[1], ys[1])


def test_rational_oracle_agreement():
    rng = random.Random(20240817)
    for _ in range(1000):
        ta, tb = _random_box_tuple(rng), _random_box_tuple(rng)
        a, b = BBox(*ta), BBox(*tb)
        assert iou(a, b) == float(oracle_iou(ta, tb))
        assert overlap_ratio(a, b) == float(oracle_overlap_ratio(ta, tb))
        assert union_box(a, b).as_tuple() == oracle_union(ta, tb)


# ---------------------------------------------------------------------------
# Frozen examples.
# ---------------------------------------------------------------------------


def test_iou_identical_boxes_is_one():
    b = BBox(3, 4, 10, 12)
    assert iou(b, b) == 1.0


def test_iou_quarter_overlap():
    a = BBox(0, 0, 10, 10)
    b = BBox(5, 5, 15, 15)
    assert iou(a, b) == float(Fraction(25, 175))


def test_iou_disjoint_is_zero():
    assert iou(BBox(0, 0, 10, 10), BBox(20, 20, 30, 30)) == 0.0


def test_iou_degenerate_is_zero():
    line = BBox(5, 0, 5, 10)
    assert area(line) == 0.0
    assert iou(line, line) == 0.0
    assert iou(line, BBox(0, 0, 10, 10)) == 0.0


def test_overlap_ratio_contained_is_one():
    inner = BBox(2, 2, 4, 4)
    outer = BBox(0, 0, 10, 10)
    assert overlap_ratio(inner, outer) == 1.0
    assert overlap_ratio(outer, inner) == float(Fraction(4, 100))


def test_union_box_covers_both():
    a = BBox(0, 0, 50, 10)
    b = BBox(60, 0, 110, 25)
    assert union_box(a, b).as_tuple() == (0.0, 0.0, 110.0, 25.0)


def test_corner_order_normalized_on_construction():
    b = BBox(10, 12, 0, 2)
    assert b.as_tuple() == (0.0, 2.0, 10.0, 12.0)


def test_space_mismatch_raises():
    a = BBox(0, 0, 1, 1, CoordSpace.UNIT)
    b = BBox(0, 0, 10, 10, CoordSpace.ABSOLUTE)
    for op in (iou, overlap_ratio, union_box):
        with pytest.raises(SpaceMismatchError):
            op(a, b)


def test_convert_absolute_to_unit():
    dims = ImageDims(400, 200)
    b = BBox(100, 50, 200, 100)
    u = convert(b, CoordSpace.UNIT, dims)
    assert u.space is CoordSpace.UNIT
    assert u.as_tuple() == (0.25, 0.25, 0.5, 0.5)


def test_convert_unit_to_thousand_needs_no_dims():
    u = BBox(0.25, 0.25, 0.5, 0.5, CoordSpace.UNIT)
    t = convert(u, CoordSpace.THOUSAND)
    assert t.as_tuple() == (250.0, 250.0, 500.0, 500.0)


def test_convert_identity_returns_equal_box():
    b = BBox(1, 2, 3, 4)
    assert convert(b, CoordSpace.ABSOLUTE) == b


def test_convert_absolute_requires_dims():
    with pytest.raises(ValueError):
        convert(BBox(0, 0, 10, 10), CoordSpace.UNIT)


def test_image_dims_must_be_positive():
    with pytest.raises(ValueError):
        ImageDims(0, 100)
    with pytest.raises(ValueError):
        ImageDims(100, -1)


def test_normalized_overshoot_clamped_within_one_percent():
    b = BBox(-0.005, 0.0, 1.005, 1.0, CoordSpace.UNIT)
    assert b.as_tuple() == (0.0, 0.0, 1.0, 1.0)
    t = BBox(0, 0, 1005, 990, CoordSpace.THOUSAND)
    assert t.as_tuple() == (0.0, 0.0, 1000.0, 990.0)


def test_normalized_overshoot_beyond_one_percent_errors():
    with pytest.raises(CoordinateRangeError):
        BBox(0, 0, 1.02, 1.0, CoordSpace.UNIT)
    with pytest.raises(CoordinateRangeError):
        BBox(-12, 0, 900, 900, CoordSpace.THOUSAND)


def test_absolute_negative_coords_clamp_to_zero():
    b = BBox(-3, -0.5, 10, 10)
    assert b.as_tuple() == (0.0, 0.0, 10.0, 10.0)


# ---------------------------------------------------------------------------
# Properties.
# ---------------------------------------------------------------------------

_coord = st.integers(min_value=0, max_value=1000)
_abs_box = st.tuples(_coord, _coord, _coord, _coord).map(lambda t: BBox(*t))


@given(_abs_box, _abs_box)
def test_iou_symmetric(a, b):
    assert iou(a, b) == iou(b, a)


@given(_abs_box, _abs_box)
def test_iou_bounded_by_overlap_ratios(a, b):
    v = iou(a, b)
    assert 0.0 <= v <= 1.0
    assert v <= min(overlap_ratio(a, b), overlap_ratio(b, a)) <= 1.0


@given(_abs_box, _abs_box, _abs_box)
def test_union_box_lattice_properties(a, b, c):
    assert union_box(a, b) == union_box(b, a)
    assert union_box(a, a) == a
    assert union_box(union_box(a, b), c) == union_box(a, union_box(b, c))
    assert area(union_box(a, b)) >= max(area(a), area(b))


@given(
    st.integers(min_value=1, max_value=4000),
    st.integers(min_value=1, max_value=4000),
    st.lists(st.floats(min_value=0.0, max_value=1.0), min_size=4, max_size=4),
)
def test_round_trip_within_tolerance(w, h, fracs):
    dims = ImageDims(w, h)
    b = BBox(fracs[0] * w, fracs[1] * h, fracs[2] * w, fracs[3] * h)
    for space in (CoordSpace.UNIT, CoordSpace.THOUSAND, CoordSpace.NINE99):
        back = convert(convert(b, space, dims), CoordSpace.ABSOLUTE, dims)
        for got, want in zip(back.as_tuple(), b.as_tuple()):
            assert abs(got - want) <= 1e-9
