import pytest

from guidedmpc.geometry import Polyline, wrap_angle
from guidedmpc.roads import (MapFormatError, SignalProgram, load_preset,
                             load_suite_manifest, parse_map)


def test_parse_minimal_map():
    road = parse_map("LANE a WIDTH 3.5 POINTS 0,0 10,0\nZONE intersection CENTER 5,0 RADIUS 3\n")
    assert "a" in road.lanes
    assert road.zones[0].kind == "intersection"


def test_parse_rejects_garbage():
    with pytest.raises(MapFormatError):
        parse_map("NONSENSE 1 2 3\n")
    with pytest.raises(MapFormatError):
        parse_map("LANE a WIDTH x POINTS 0,0 1,1\n")
    with pytest.raises(MapFormatError):
        parse_map("# only comments\n")


def test_signal_cycle_states():
    sig = SignalProgram("s", (0, 0), ("a",), (("green", 10.0), ("yellow", 3.0),
                                              ("red", 12.0)))
    assert sig.state_at(0.0) == "green"
    assert sig.state_at(9.99) == "green"
    assert sig.state_at(10.5) == "yellow"
    assert sig.state_at(14.0) == "red"
    assert sig.state_at(25.0) == "green"   # wraps
    shifted = SignalProgram("s", (0, 0), ("a",), (("green", 10.0), ("red", 10.0)),
                            offset=10.0)
    assert shifted.state_at(0.0) == "red"


def test_bundled_presets_load_and_have_unique_lane_ids():
    for name in ("si", "usi", "lane", "rab", "eoa", "narrow"):
        road = load_preset(name)
        assert len(road.lanes) >= 2
        ids = list(road.lanes)
        assert len(set(ids)) == len(ids)


def test_suite_manifest_25_seeds_each():
    suites = load_suite_manifest()
    for family in ("si", "usi", "lane", "rab", "eoa"):
        assert len(suites[family]) == 25
        assert len(set(suites[family])) == 25


def test_lane_entry_arc_found():
    road = load_preset("usi")
    zone = road.zones[0]
    arc = road.lane_entry_arc("eb_0", zone)
    assert arc is not None
    p = road.lanes["eb_0"].centerline.point_at(arc)
    assert zone.contains(p[0], p[1])


def test_polyline_projection_sign():
    line = Polyline([(0, 0), (10, 0)])
    s, lateral = line.project((5.0, 2.0))
    assert s == pytest.approx(5.0)
    assert lateral == pytest.approx(2.0)    # left of travel direction is positive
    _, lateral = line.project((5.0, -2.0))
    assert lateral == pytest.approx(-2.0)


def test_polyline_closed_wraps():
    square = Polyline([(0, 0), (10, 0), (10, 10), (0, 10)], closed=True)
    assert square.length == pytest.approx(40.0)
    p = square.point_at(45.0)
    assert p == pytest.approx([5.0, 0.0])


def test_wrap_angle_half_open_interval():
    import math
    assert wrap_angle(math.pi) == pytest.approx(math.pi)
    assert wrap_angle(-math.pi) == pytest.approx(math.pi)
    assert wrap_angle(0.0) == 0.0
    assert wrap_angle(3 * math.pi / 2) == pytest.approx(-math.pi / 2)
