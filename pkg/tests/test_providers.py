import math

import pytest

from guidedmpc.bezier import generate_candidates
from guidedmpc.decision import format_decision, parse_decision
from guidedmpc.dynamics import VehicleState
from guidedmpc.geometry import Polyline
from guidedmpc.observation import ParticipantTrack, StaticObservation, TrackPoint
from guidedmpc.providers import (BaselineProvider, DecisionView, LlmProvider, MockTransport,
                                 OracleProvider, OracleRulebook, ScriptedProvider,
                                 TransportError, heading_closest)
from guidedmpc.roads import Lane, Zone
from guidedmpc.weights import WeightSelection


def _static(with_zone=False):
    lanes = (Lane("ns", 3.5, Polyline([(0, -70), (0, 90)])),
             Lane("eb", 3.5, Polyline([(-140, -1.75), (90, -1.75)])))
    zones = (Zone("intersection", (0.0, 0.0), 8.0),) if with_zone else ()
    return StaticObservation(lanes=lanes, signals=(), zones=zones)


def _track(pid, x, y, v, heading, hist_len=3):
    return ParticipantTrack(id=pid, kind="car",
                            history=tuple(TrackPoint(x, y, v, heading)
                                          for _ in range(hist_len)),
                            predicted=(), v_max=8.0)


def _view(tracks=(), with_zone=False, ego=None, family="usi", goal=(0.0, 55.0)):
    static = _static(with_zone)
    ego = ego or VehicleState(0.0, -30.0, 7.0, math.pi / 2, 0.0)
    candidates = {"ego": generate_candidates(static, ego)}
    for t in tracks:
        cur = t.current
        candidates[t.id] = generate_candidates(
            static, VehicleState(cur.x, cur.y, cur.v, cur.heading, 0.0))
    return DecisionView(timestamp=2.0, family=family, ego_state=ego, ego_v_max=9.0,
                        ego_lane_id="ns", static_obs=static, tracks=tuple(tracks),
                        candidates=candidates, pool_sizes=(3, 3, 3, 3), bins=(5, 5),
                        validity=5.0, ego_goal=goal)


def test_baseline_attends_everything_no_bias():
    tracks = (_track(1, -20, -1.75, 7.0, 0.0), _track(2, 0, -45, 6.0, math.pi / 2))
    view = _view(tracks, with_zone=True)
    d = BaselineProvider().decide(view)
    assert all(b == 1 for b in d.attention_mask.bits)
    assert d.bias_selection is None
    assert d.weight_selection == WeightSelection()


def test_baseline_heading_closest_straight():
    view = _view()
    d = BaselineProvider().decide(view)
    chosen = view.candidates["ego"][d.ego_trajectory_index]
    assert chosen.lane_id == "ns"


def test_baseline_deterministic():
    tracks = (_track(1, -20, -1.75, 7.0, 0.0),)
    view = _view(tracks, with_zone=True)
    p = BaselineProvider()
    assert p.decide(view) == p.decide(view)


def test_heading_closest_picks_aligned_candidate():
    view = _view()
    idx = heading_closest(view.candidates["ego"], math.pi / 2)
    assert view.candidates["ego"][idx].lane_id == "ns"


def test_oracle_empty_intersection_defaults():
    view = _view((), with_zone=True)
    d = OracleProvider(OracleRulebook(family="usi")).decide(view)
    assert d.bias_selection is None
    assert d.weight_selection == WeightSelection()


def test_oracle_yields_to_imminent_cross_traffic():
    # crossing car 20 m west of the box doing 7 m/s: arrival well inside the window
    tracks = (_track(1, -22.0, -1.75, 7.0, 0.0),)
    view = _view(tracks, with_zone=True, ego=VehicleState(0, -16.0, 6.0, math.pi / 2, 0))
    rb = OracleRulebook(family="usi")
    d = OracleProvider(rb).decide(view)
    assert d.bias_selection == (rb.stop_accel_index, rb.steer_center_index)
    assert d.weight_selection.action == 2
    assert d.weight_selection.safety == 2


def test_oracle_masks_irrelevant_far_vehicle():
    tracks = (_track(1, -22.0, -1.75, 7.0, 0.0),           # relevant crosser
              _track(2, 0.0, 80.0, 6.0, math.pi / 2))      # far ahead, beyond attention
    view = _view(tracks, with_zone=True, ego=VehicleState(0, -16.0, 6.0, math.pi / 2, 0))
    d = OracleProvider(OracleRulebook(family="usi")).decide(view)
    mask = d.mask_by_id()
    assert mask[1] == 1
    assert mask[2] == 0


def test_oracle_emergency_guidance_brakes_hard():
    rb = OracleRulebook(family="eoa")
    view = _view((), family="eoa")
    g = OracleProvider(rb).decide_emergency(view)
    assert g.bias_selection == (rb.hard_brake_index, rb.steer_center_index)
    assert g.weight_selection.action == 2
    assert g.weight_selection.safety == 2


def test_oracle_deterministic():
    tracks = (_track(1, -22.0, -1.75, 7.0, 0.0),)
    view = _view(tracks, with_zone=True)
    p = OracleProvider(OracleRulebook(family="usi"))
    assert p.decide(view) == p.decide(view)


def _canned_reply(view):
    d = BaselineProvider().decide(view)
    return format_decision(d), d


def test_llm_mock_round_trip():
    view = _view((_track(1, -22.0, -1.75, 7.0, 0.0),), with_zone=True)
    text, expected = _canned_reply(view)
    provider = LlmProvider(MockTransport([text]))
    got = provider.decide(view)
    assert got == expected


def test_llm_retry_then_success():
    view = _view()
    text, expected = _canned_reply(view)
    transport = MockTransport(["not a decision", text])
    provider = LlmProvider(transport)
    assert provider.decide(view) == expected
    assert len(transport.requests) == 2
    assert "previous reply was invalid" in transport.requests[1][1]


def test_llm_double_garbage_returns_fallback():
    view = _view()
    provider = LlmProvider(MockTransport(["junk", "more junk"]))
    assert provider.decide(view) is None


def test_llm_transport_error_returns_fallback():
    view = _view()
    provider = LlmProvider(MockTransport([]))   # exhausted -> TransportError
    assert provider.decide(view) is None


def test_http_transport_requires_endpoint(monkeypatch):
    from guidedmpc.providers import ENDPOINT_ENV, HttpTransport
    monkeypatch.delenv(ENDPOINT_ENV, raising=False)
    with pytest.raises(TransportError):
        HttpTransport()


def test_scripted_provider_replays_in_order():
    view = _view()
    t1, d1 = _canned_reply(view)
    provider = ScriptedProvider([t1])
    assert provider.decide(view) == d1
    assert provider.decide(view) is None   # exhausted -> fallback signal
