"""Interchangeable decision providers: baseline rules, scenario oracle,
scripted replay, and a remote chat-endpoint client with mock transport."""
from __future__ import annotations

import json
import logging
import math
import os
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import requests

from .bezier import ControlPolygon
from .decision import (Decision, DecisionContext, DecisionParseError, DecisionRangeError,
                       Guidance, PromptBundle, format_decision, generate_guidance_prompt,
                       generate_prompt, parse_decision)
from .dynamics import VehicleState
from .geometry import wrap_angle
from .observation import AttentionMask, ParticipantTrack, StaticObservation
from .weights import WeightSelection

log = logging.getLogger(__name__)

ENDPOINT_ENV = "GUIDEDMPC_LLM_ENDPOINT"
TOKEN_ENV = "GUIDEDMPC_LLM_TOKEN"


@dataclass(frozen=True)
class DecisionView:
    """Everything a provider may look at when issuing a decision."""
    timestamp: float
    family: str
    ego_state: VehicleState
    ego_v_max: float
    ego_lane_id: str | None
    static_obs: StaticObservation
    tracks: tuple[ParticipantTrack, ...]          # unmasked, ascending id
    candidates: Mapping                           # "ego" and participant ids -> 3 polygons
    pool_sizes: tuple[int, int, int, int]
    bins: tuple[int, int]
    validity: float
    instruction: str | None = None
    prev_decision: Decision | None = None
    emergency_reason: str = ""
    ego_goal: tuple[float, float] | None = None

    def context(self) -> DecisionContext:
        return DecisionContext(
            participant_ids=tuple(t.id for t in self.tracks),
            accel_bins=self.bins[0], steer_bins=self.bins[1],
            pool_sizes=self.pool_sizes, issued_at=self.timestamp,
            validity=self.validity)


def initial_heading(polygon: ControlPolygon) -> float:
    (x0, y0), (x1, y1) = polygon.points[0], polygon.points[1]
    return math.atan2(y1 - y0, x1 - x0)


def heading_closest(candidates: Sequence[ControlPolygon], heading: float) -> int:
    """Candidate whose initial tangent deviates least from the given heading."""
    devs = [abs(wrap_angle(initial_heading(c) - heading)) for c in candidates]
    return min(range(len(devs)), key=lambda k: devs[k])


def baseline_decision(view: DecisionView) -> Decision:
    """Fixed-weight behavior: attend everything, heading-aligned selections, no bias."""
    preds = {t.id: heading_closest(view.candidates[t.id], t.current.heading)
             for t in view.tracks}
    return Decision(
        ego_trajectory_index=heading_closest(view.candidates["ego"], view.ego_state.psi),
        participant_trajectory_indices=preds,
        attention_mask=AttentionMask.ones(len(view.tracks)),
        bias_selection=None,
        weight_selection=WeightSelection(),
        rationale_text="fixed weights, heading-aligned candidates, all participants attended",
        issued_at=view.timestamp, validity=view.validity)


class BaselineProvider:
    name = "baseline"

    def decide(self, view: DecisionView) -> Decision | None:
        return baseline_decision(view)

    def decide_emergency(self, view: DecisionView) -> Guidance | None:
        return Guidance(bias_selection=None, weight_selection=WeightSelection(),
                        rationale_text="fixed weights (baseline has no guidance stage)")


# --- scenario oracle ---------------------------------------------------------

@dataclass(frozen=True)
class OracleRulebook:
    """Deterministic stand-in reproducing the described high-level behaviors."""
    family: str
    clear_time_gap: float = 6.0       # s of cross-traffic headway required to enter
    yield_brake: float = 2.2          # m/s^2 assumed soft braking for the yield trigger
    yield_margin: float = 4.0         # m held back from the conflict-zone edge
    cadence_margin: float = 2.5       # s of decision latching covered by the trigger
    attention_radius: float = 38.0    # m, participants farther than this are masked out
    follow_range: float = 45.0        # m, lead-vehicle corridor length
    corridor_halfwidth: float = 2.2   # m, lateral tolerance for same-path checks
    slow_lead_ratio: float = 0.55     # lead slower than this fraction of ego v_max
    overtake_clear_ahead: float = 26.0
    overtake_clear_behind: float = 10.0
    stop_accel_index: int = 1         # firm braking interval
    hard_brake_index: int = 0
    steer_center_index: int = 2

    def yield_trigger_distance(self, speed: float) -> float:
        return (speed * speed / (2.0 * self.yield_brake)
                + speed * self.cadence_margin + self.yield_margin)


def _corridor_position(lane, state: VehicleState, track: ParticipantTrack,
                       halfwidth: float) -> float | None:
    """Arc distance of a participant ahead of ego along a lane, None if off-corridor."""
    line = lane.centerline
    s_ego, _ = line.project((state.x, state.y))
    s_p, lat = line.project((track.current.x, track.current.y))
    if abs(lat) > halfwidth:
        return None
    gap = s_p - s_ego
    if line.closed:
        gap = gap % line.length
    return gap if gap > 0 else None


class OracleProvider:
    """Rule-based provider exercising the full decision surface per family."""
    name = "oracle"

    def __init__(self, rulebook: OracleRulebook):
        self.rulebook = rulebook

    # -- helpers

    def _zone(self, view: DecisionView):
        for zone in view.static_obs.zones:
            if zone.kind in ("intersection", "roundabout", "narrow"):
                return zone
        return None

    def _ego_zone_distance(self, view: DecisionView, zone) -> float:
        return zone.distance(view.ego_state.x, view.ego_state.y)

    def _ego_past_zone(self, view: DecisionView, zone) -> bool:
        dx = zone.center[0] - view.ego_state.x
        dy = zone.center[1] - view.ego_state.y
        ahead = dx * math.cos(view.ego_state.psi) + dy * math.sin(view.ego_state.psi)
        return ahead < 0 and self._ego_zone_distance(view, zone) > 0

    def _crossing(self, view: DecisionView, track: ParticipantTrack) -> bool:
        rel = abs(wrap_angle(track.current.heading - view.ego_state.psi))
        return math.pi / 4 < rel < 3 * math.pi / 4

    def _crossing_window(self, view: DecisionView, zone) -> float:
        """Seconds the ego needs to clear the far side of the zone, planned from
        a near-standstill (so the window cannot flicker shut while braking),
        plus one decision period of reaction lag."""
        rb = self.rulebook
        dist = max(self._ego_zone_distance(view, zone), 0.0)
        d_need = dist + 2.0 * zone.radius + 5.0
        v0 = min(view.ego_state.v, 2.0)
        v_top = max(view.ego_v_max, v0, 1.0)
        accel = 2.3
        d_accel = (v_top * v_top - v0 * v0) / (2.0 * accel)
        if d_need <= d_accel:
            t_clear = (-v0 + math.sqrt(v0 * v0 + 2.0 * accel * d_need)) / accel
        else:
            t_clear = (v_top - v0) / accel + (d_need - d_accel) / v_top
        return max(rb.clear_time_gap, t_clear + rb.cadence_margin)

    def _zone_busy(self, view: DecisionView, zone) -> bool:
        window = self._crossing_window(view, zone)
        for track in view.tracks:
            if track.kind == "pedestrian":
                continue
            cur = track.current
            dist = zone.distance(cur.x, cur.y)
            if dist <= 0.5 and cur.v >= 0.8:
                return True
            if cur.v < 0.8:
                continue    # stopped at the line means yielding, not arriving
            if not self._crossing(view, track):
                continue
            closing = (zone.center[0] - cur.x) * math.cos(cur.heading) \
                + (zone.center[1] - cur.y) * math.sin(cur.heading)
            if closing <= 0:
                continue
            eta = dist / max(cur.v, 0.5)
            if eta < window:
                return True
        return False

    def _crosser_imminent(self, view: DecisionView) -> bool:
        """A crossing participant bearing down on the ego at close range."""
        ex, ey = view.ego_state.x, view.ego_state.y
        for track in view.tracks:
            cur = track.current
            if cur.v < 1.0 or not self._crossing(view, track):
                continue
            dist = math.hypot(cur.x - ex, cur.y - ey)
            closing = ((ex - cur.x) * math.cos(cur.heading)
                       + (ey - cur.y) * math.sin(cur.heading))
            if dist < 16.0 and closing > 0:
                return True
        return False

    def _lead(self, view: DecisionView) -> tuple[ParticipantTrack, float] | None:
        if view.ego_lane_id is None:
            return None
        lane = view.static_obs.lane(view.ego_lane_id)
        best = None
        for track in view.tracks:
            gap = _corridor_position(lane, view.ego_state, track,
                                     self.rulebook.corridor_halfwidth)
            if gap is not None and gap <= self.rulebook.follow_range:
                if best is None or gap < best[1]:
                    best = (track, gap)
        return best

    def _attend_bits(self, view: DecisionView, zone) -> tuple[int, ...]:
        rb = self.rulebook
        lead = self._lead(view)
        lead_id = lead[0].id if lead else None
        bits = []
        for track in view.tracks:
            cur = track.current
            dist = math.hypot(cur.x - view.ego_state.x, cur.y - view.ego_state.y)
            keep = False
            if track.id == lead_id:
                keep = True
            elif dist <= rb.attention_radius and self._crossing(view, track):
                if zone is None or not self._ego_past_zone(view, zone):
                    keep = True
            elif dist <= rb.attention_radius and zone is not None \
                    and zone.distance(cur.x, cur.y) <= 0.5 \
                    and not self._ego_past_zone(view, zone):
                keep = True
            bits.append(1 if keep else 0)
        return tuple(bits)

    def _select_ego(self, view: DecisionView) -> int:
        """Mission-aware candidate choice: prefer paths that end nearer the goal,
        heading alignment breaking ties."""
        if view.ego_goal is None:
            return heading_closest(view.candidates["ego"], view.ego_state.psi)
        gx, gy = view.ego_goal
        best, best_score = 0, math.inf
        for k, cand in enumerate(view.candidates["ego"]):
            if cand.is_duplicate:
                continue
            ex, ey = cand.points[-1]
            dev = abs(wrap_angle(initial_heading(cand) - view.ego_state.psi))
            score = math.hypot(ex - gx, ey - gy) + 4.0 * dev
            if score < best_score:
                best, best_score = k, score
        return best

    def _lane_change_target(self, view: DecisionView) -> int | None:
        """Adjacent-lane candidate index with a clear window, if any."""
        rb = self.rulebook
        ego_idx = heading_closest(view.candidates["ego"], view.ego_state.psi)
        for k, poly in enumerate(view.candidates["ego"]):
            if k == ego_idx or poly.is_duplicate or poly.lane_id is None \
                    or poly.lane_id == view.candidates["ego"][ego_idx].lane_id:
                continue
            lane = view.static_obs.lane(poly.lane_id)
            s_ego, _ = lane.centerline.project((view.ego_state.x, view.ego_state.y))
            clear = True
            for track in view.tracks:
                s_p, lat = lane.centerline.project((track.current.x, track.current.y))
                if abs(lat) > rb.corridor_halfwidth:
                    continue
                ds = s_p - s_ego
                if -rb.overtake_clear_behind < ds < rb.overtake_clear_ahead:
                    clear = False
                    break
            if clear:
                return k
        return None

    # -- provider interface

    def decide(self, view: DecisionView) -> Decision | None:
        rb = self.rulebook
        zone = self._zone(view)
        base = baseline_decision(view)
        bits = self._attend_bits(view, zone)
        bias = None
        selection = WeightSelection()
        ego_idx = self._select_ego(view)
        why = "cruise: defaults"

        red_for_ego = any(sig.state in ("red", "yellow") and view.ego_lane_id in sig.governs
                          for sig in view.static_obs.signals)

        if zone is not None and not self._ego_past_zone(view, zone):
            dist = self._ego_zone_distance(view, zone)
            # evaluate the trigger at the speed the ego may reach before the
            # next decision, so cadence lag cannot carry it past the point of
            # no return while accelerating
            v_proj = max(view.ego_state.v,
                         min(view.ego_state.v + 3.0 * rb.cadence_margin, view.ego_v_max))
            trigger = rb.yield_trigger_distance(v_proj)
            if 0.0 < dist < trigger and red_for_ego:
                bias = (rb.stop_accel_index, rb.steer_center_index)
                selection = WeightSelection(action=2, safety=2)
                why = "red signal ahead: stop and wait"
            elif 0.0 < dist < trigger and self._zone_busy(view, zone):
                bias = (rb.stop_accel_index, rb.steer_center_index)
                selection = WeightSelection(action=2, safety=2)
                why = "conflict zone busy: yield before entering"
            elif dist <= 0.0:
                if view.ego_state.v < 3.5 and (self._crosser_imminent(view)
                                               or self._zone_busy(view, zone)):
                    bias = (rb.stop_accel_index, rb.steer_center_index)
                    selection = WeightSelection(action=2, safety=2)
                    why = "crossing stream at close range: hold position"
                else:
                    selection = WeightSelection(safety=0)
                    why = "inside the conflict zone: clear it decisively"

        if bias is None and view.family in ("lane", "eoa") and not red_for_ego:
            lead = self._lead(view)
            if lead is not None and lead[0].current.v < rb.slow_lead_ratio * view.ego_v_max:
                target = self._lane_change_target(view)
                if target is not None:
                    ego_idx = target
                    selection = WeightSelection(safety=2)
                    why = f"slow lead {lead[0].id}: overtake via adjacent lane"
                else:
                    bias = (2, rb.steer_center_index)
                    selection = WeightSelection(action=2, safety=2)
                    why = f"slow lead {lead[0].id}, no clear gap: ease off and follow"

        if view.instruction:
            low = view.instruction.lower()
            if "conservat" in low or "caut" in low:
                if bias is None:
                    selection = replace(selection, safety=2)
                ego_idx = base.ego_trajectory_index
                why += "; instruction: conservative, keep lane"
            elif "aggress" in low or "overtake" in low:
                target = self._lane_change_target(view)
                if target is not None and self._lead(view) is not None:
                    ego_idx = target
                    why += "; instruction: aggressive, overtaking"

        return replace(base, ego_trajectory_index=ego_idx,
                       attention_mask=AttentionMask(bits),
                       bias_selection=bias, weight_selection=selection,
                       rationale_text=why)

    def decide_emergency(self, view: DecisionView) -> Guidance | None:
        rb = self.rulebook
        return Guidance(bias_selection=(rb.hard_brake_index, rb.steer_center_index),
                        weight_selection=WeightSelection(tracking=0, action=2, safety=2),
                        rationale_text=f"emergency braking: {view.emergency_reason}")


class ScriptedProvider:
    """Replays pre-recorded wire-format decision texts in request order."""
    name = "scripted"

    def __init__(self, texts: Sequence[str], guidance_texts: Sequence[str] = ()):
        self._texts = list(texts)
        self._guidance = list(guidance_texts)
        self._i = 0
        self._j = 0

    def decide(self, view: DecisionView) -> Decision | None:
        if self._i >= len(self._texts):
            return None
        text = self._texts[self._i]
        self._i += 1
        try:
            return parse_decision(text, view.context())
        except (DecisionParseError, DecisionRangeError):
            return None

    def decide_emergency(self, view: DecisionView) -> Guidance | None:
        if self._j >= len(self._guidance):
            return None
        text = self._guidance[self._j]
        self._j += 1
        try:
            d = parse_decision(text, view.context(), scene=False, emergency=True)
        except (DecisionParseError, DecisionRangeError):
            return None
        return Guidance(d.bias_selection, d.weight_selection, d.rationale_text)


# --- transports and the remote client ---------------------------------------

class TransportError(RuntimeError):
    pass


class MockTransport:
    """Canned-reply transport for tests and offline replay."""

    def __init__(self, replies: Sequence[str]):
        self.replies = list(replies)
        self.requests: list[tuple[str, str]] = []
        self._i = 0

    def complete(self, system_text: str, user_text: str, timeout: float) -> str:
        self.requests.append((system_text, user_text))
        if self._i >= len(self.replies):
            raise TransportError("mock transport exhausted")
        reply = self.replies[self._i]
        self._i += 1
        return reply


class HttpTransport:
    """Chat-completion-style JSON endpoint; endpoint and token from environment."""

    def __init__(self, endpoint: str | None = None, token: str | None = None,
                 model: str = "gpt-3.5-turbo"):
        self.endpoint = endpoint or os.environ.get(ENDPOINT_ENV, "")
        self.token = token if token is not None else os.environ.get(TOKEN_ENV, "")
        self.model = model
        if not self.endpoint:
            raise TransportError(f"no endpoint configured ({ENDPOINT_ENV} unset)")

    def complete(self, system_text: str, user_text: str, timeout: float) -> str:
        body = {"model": self.model,
                "messages": [{"role": "system", "content": system_text},
                             {"role": "user", "content": user_text}]}
        log.debug("llm request: %s", json.dumps(body)[:2000])  # token never enters the body
        headers = {"Content-Type": "application/json"}
        if self.token:
            headers["Authorization"] = f"Bearer {self.token}"
        try:
            resp = requests.post(self.endpoint, json=body, timeout=timeout, headers=headers)
            resp.raise_for_status()
            payload = resp.json()
            reply = payload["choices"][0]["message"]["content"]
        except (requests.RequestException, KeyError, IndexError, ValueError) as exc:
            raise TransportError(str(exc)) from exc
        log.debug("llm reply: %s", reply[:2000])
        return reply


class LlmProvider:
    """Remote decision maker: prompt out, wire-format text back, one retry."""
    name = "llm"

    def __init__(self, transport, timeout: float = 10.0):
        self.transport = transport
        self.timeout = timeout

    def _ask(self, prompt: PromptBundle, context: DecisionContext, scene: bool,
             emergency: bool) -> Decision | None:
        user = prompt.user_text()
        for attempt in range(2):
            try:
                reply = self.transport.complete(prompt.system_text, user, self.timeout)
            except TransportError as exc:
                log.warning("llm transport failure: %s", exc)
                return None
            try:
                return parse_decision(reply, context, scene=scene, emergency=emergency)
            except (DecisionParseError, DecisionRangeError) as exc:
                log.warning("llm reply rejected: %s", exc)
                user = (prompt.user_text()
                        + f"\n# your previous reply was invalid: {exc}. "
                        "Answer again using exactly the required grammar.")
        return None

    def decide(self, view: DecisionView) -> Decision | None:
        prompt = generate_prompt(
            _bundle_for_prompt(view), view.candidates, view.instruction,
            pool_sizes=view.pool_sizes, bins=view.bins)
        return self._ask(prompt, view.context(), scene=True, emergency=False)

    def decide_emergency(self, view: DecisionView) -> Guidance | None:
        prompt = generate_guidance_prompt(view.emergency_reason, view.instruction)
        decision = self._ask(prompt, view.context(), scene=False, emergency=True)
        if decision is None:
            return None
        return Guidance(decision.bias_selection, decision.weight_selection,
                        decision.rationale_text)


def _bundle_for_prompt(view: DecisionView):
    from .observation import AttentionMask as _Mask, assemble
    return assemble(view.static_obs, view.tracks, _Mask.ones(len(view.tracks)),
                    view.timestamp)


class RecordingProvider:
    """Wraps a provider, capturing serialized texts (to drive scripted/mock replay)."""

    def __init__(self, inner):
        self.inner = inner
        self.name = inner.name
        self.texts: list[str] = []
        self.guidance_texts: list[str] = []

    def decide(self, view: DecisionView) -> Decision | None:
        decision = self.inner.decide(view)
        if decision is not None:
            self.texts.append(format_decision(decision))
        return decision

    def decide_emergency(self, view: DecisionView) -> Guidance | None:
        guidance = self.inner.decide_emergency(view)
        if guidance is not None:
            stub = Decision(ego_trajectory_index=0, participant_trajectory_indices={},
                            attention_mask=AttentionMask(()), bias_selection=guidance.bias_selection,
                            weight_selection=guidance.weight_selection,
                            rationale_text=guidance.rationale_text,
                            issued_at=view.timestamp, validity=view.validity, emergency=True)
            self.guidance_texts.append(format_decision(stub, scene=False))
        return guidance


class AblationProvider:
    """Selectively disables the scene-encoding or guidance stages of a provider."""
    def __init__(self, inner, use_encoder: bool, use_guidance: bool):
        self.inner = inner
        self.use_encoder = use_encoder
        self.use_guidance = use_guidance
        parts = []
        if use_encoder:
            parts.append("enc")
        if use_guidance:
            parts.append("gui")
        self.name = f"{inner.name}[{'+'.join(parts) or 'none'}]"

    def decide(self, view: DecisionView) -> Decision | None:
        decision = self.inner.decide(view)
        if decision is None:
            return None
        base = baseline_decision(view)
        if not self.use_encoder:
            decision = replace(decision,
                               ego_trajectory_index=base.ego_trajectory_index,
                               participant_trajectory_indices=base.participant_trajectory_indices,
                               attention_mask=base.attention_mask)
        if not self.use_guidance:
            decision = replace(decision, bias_selection=None,
                               weight_selection=WeightSelection())
        return decision

    def decide_emergency(self, view: DecisionView) -> Guidance | None:
        if not self.use_guidance:
            return Guidance(None, WeightSelection(), "guidance stage disabled")
        return self.inner.decide_emergency(view)
