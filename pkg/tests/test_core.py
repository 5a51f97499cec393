import pytest
from hypothesis import given
from hypothesis import strategies as st

from centerpercept.core import (
    BoundingBoxAnn,
    GridSpec,
    LaneInstance,
    SceneTags,
    image_to_grid,
    round_half_away,
)


def test_grid_dims(grid):
    assert (grid.grid_w, grid.grid_h) == (160, 80)
    assert grid.shape == (80, 160)


@pytest.mark.parametrize("w,h,s", [(640, 322, 4), (10, 10, 0), (2, 2, 4)])
def test_grid_rejects_bad_stride(w, h, s):
    with pytest.raises(ValueError):
        GridSpec(w, h, s)


@pytest.mark.parametrize(
    "p,expected",
    [((13.0, 7.0), (3, 2)), ((0.0, 0.0), (0, 0)), ((638.0, 318.0), (159, 79))],
)
def test_image_to_grid_examples(grid, p, expected):
    assert image_to_grid(p, grid) == expected


def test_rounding_ties_go_away_from_zero():
    assert round_half_away(2.5) == 3
    assert round_half_away(3.5) == 4
    assert round_half_away(-2.5) == -3
    assert round_half_away(2.4999) == 2


@given(st.floats(0, 640), st.floats(0, 320))
def test_image_to_grid_in_bounds(x, y):
    grid = GridSpec(640, 320, 4)
    gx, gy = image_to_grid((x, y), grid)
    assert 0 <= gx < grid.grid_w and 0 <= gy < grid.grid_h
    assert abs(gx * 4 - x) <= 4 / 2 + 4
    assert abs(gy * 4 - y) <= 4 / 2 + 4


@given(st.floats(0, 640), st.floats(0, 320))
def test_image_to_grid_scale_consistent(x, y):
    a = image_to_grid((x, y), GridSpec(640, 320, 4))
    b = image_to_grid((2 * x, 2 * y), GridSpec(1280, 640, 8))
    assert a == b


def test_box_validation():
    BoundingBoxAnn(0, 0, 10, 10, 9).validate(640, 320)
    with pytest.raises(ValueError):
        BoundingBoxAnn(0, 0, 10, 10, 10).validate()
    with pytest.raises(ValueError):
        BoundingBoxAnn(5, 0, 5, 10, 0).validate()
    with pytest.raises(ValueError):
        BoundingBoxAnn(0, 0, 700, 10, 0).validate(640, 320)


def test_lane_and_tag_validation():
    LaneInstance(7, [(0, 0), (1, 1)]).validate(640, 320)
    with pytest.raises(ValueError):
        LaneInstance(8, [(0, 0), (1, 1)]).validate()
    with pytest.raises(ValueError):
        LaneInstance(0, [(0, 0)]).validate()
    SceneTags(6, 6, 3).validate()
    with pytest.raises(ValueError):
        SceneTags(0, 0, 4).validate()
