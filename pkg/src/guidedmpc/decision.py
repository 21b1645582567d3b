"""High-level decision packets: wire grammar, prompt rendering, selection ops.

The wire format is line oriented and bit exact; lines whose first non-blank
character is '#' are ignored:

    EGO_TRAJ: <0|1|2>
    PRED <id>: <0|1|2>          one line per participant
    ATTend <id>: <0|1>          one line per participant
    BIAS_ACCEL: <index|NONE>
    BIAS_STEER: <index|NONE>
    W_TRACK: <index>
    W_ACTION: <index>
    W_SMOOTH: <index>
    W_SAFETY: <index>
    RATIONALE: <free text to end of line>
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .observation import AttentionMask, ObservationBundle
from .weights import (ActionBias, ActionDiscretization, WeightPool, WeightSelection,
                      WeightSet)

N_CANDIDATES = 3


class DecisionParseError(ValueError):
    def __init__(self, message: str, line: str | None = None, lineno: int | None = None):
        self.line = line
        self.lineno = lineno
        if line is not None:
            message = f"{message} (line {lineno}: {line!r})"
        super().__init__(message)


class DecisionRangeError(ValueError):
    pass


@dataclass(frozen=True)
class Decision:
    ego_trajectory_index: int
    participant_trajectory_indices: dict[int, int]
    attention_mask: AttentionMask               # bits ordered by ascending participant id
    bias_selection: tuple[int, int] | None      # (accel interval, steer interval)
    weight_selection: WeightSelection
    rationale_text: str
    issued_at: float
    validity: float
    emergency: bool = False

    def __post_init__(self):
        if self.validity <= 0:
            raise ValueError("decision validity must be positive")
        if len(self.attention_mask.bits) != len(self.participant_trajectory_indices):
            raise ValueError("mask length differs from participant count")

    def mask_by_id(self) -> dict[int, int]:
        ids = sorted(self.participant_trajectory_indices)
        return dict(zip(ids, self.attention_mask.bits))


@dataclass(frozen=True)
class Guidance:
    """Bias-and-weights-only decision payload used on the emergency fast path."""
    bias_selection: tuple[int, int] | None
    weight_selection: WeightSelection
    rationale_text: str


@dataclass(frozen=True)
class DecisionContext:
    participant_ids: tuple[int, ...]
    accel_bins: int
    steer_bins: int
    pool_sizes: tuple[int, int, int, int]
    issued_at: float = 0.0
    validity: float = 5.0


@dataclass(frozen=True)
class PromptBundle:
    system_text: str
    environment_text: str
    request_schema_text: str

    def user_text(self) -> str:
        return self.environment_text + "\n" + self.request_schema_text


def interval_midpoint(disc: ActionDiscretization,
                      selection: tuple[int, int] | None) -> ActionBias:
    """Action bias at the midpoints of the selected intervals; inactive when none."""
    if selection is None:
        return ActionBias.INACTIVE
    a_lo, a_hi = disc.accel_interval(selection[0])
    t_lo, t_hi = disc.steer_interval(selection[1])
    return ActionBias(a_bias=(a_lo + a_hi) / 2.0, theta_bias=(t_lo + t_hi) / 2.0,
                      active=True)


def compose_weights(pool: WeightPool, selection: WeightSelection) -> WeightSet:
    """Union of the four selected fragments; the clearance comes from the safety level."""
    return pool.compose(selection)


# --- wire format -----------------------------------------------------------

def format_decision(decision: Decision, scene: bool = True) -> str:
    lines = []
    if scene:
        lines.append(f"EGO_TRAJ: {decision.ego_trajectory_index}")
        ids = sorted(decision.participant_trajectory_indices)
        for pid in ids:
            lines.append(f"PRED {pid}: {decision.participant_trajectory_indices[pid]}")
        for pid, bit in zip(ids, decision.attention_mask.bits):
            lines.append(f"ATTend {pid}: {bit}")
    if decision.bias_selection is None:
        lines.append("BIAS_ACCEL: NONE")
        lines.append("BIAS_STEER: NONE")
    else:
        lines.append(f"BIAS_ACCEL: {decision.bias_selection[0]}")
        lines.append(f"BIAS_STEER: {decision.bias_selection[1]}")
    sel = decision.weight_selection
    lines.append(f"W_TRACK: {sel.tracking}")
    lines.append(f"W_ACTION: {sel.action}")
    lines.append(f"W_SMOOTH: {sel.smoothness}")
    lines.append(f"W_SAFETY: {sel.safety}")
    lines.append(f"RATIONALE: {decision.rationale_text}")
    return "\n".join(lines) + "\n"


def _parse_index(value: str, limit: int, what: str, line: str, lineno: int) -> int:
    try:
        idx = int(value)
    except ValueError:
        raise DecisionParseError(f"{what} is not an integer", line, lineno) from None
    if not 0 <= idx < limit:
        raise DecisionRangeError(f"{what} {idx} out of range 0..{limit - 1}")
    return idx


def parse_decision(text: str, context: DecisionContext, scene: bool = True,
                   emergency: bool = False) -> Decision:
    """Parse wire-format text against the given scene context.

    With scene=False only guidance keys are required; scene keys, when present,
    are ignored (the fast path skips scenario encoding).
    """
    ego_idx: int | None = None
    preds: dict[int, int] = {}
    attend: dict[int, int] = {}
    bias_acc: str | None = None
    bias_steer: str | None = None
    wsel: dict[str, int] = {}
    rationale = ""
    known = set(context.participant_ids)
    weight_keys = {"W_TRACK": 0, "W_ACTION": 1, "W_SMOOTH": 2, "W_SAFETY": 3}

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition(":")
        if not sep:
            raise DecisionParseError("missing ':' separator", line, lineno)
        key = key.strip()
        value = value.strip() if key != "RATIONALE" else value.lstrip(" ")
        if key == "EGO_TRAJ":
            if ego_idx is not None and scene:
                raise DecisionParseError("duplicate EGO_TRAJ", line, lineno)
            ego_idx = _parse_index(value, N_CANDIDATES, "ego trajectory", line, lineno)
        elif key.startswith("PRED ") or key.startswith("ATTend "):
            word, _, pid_text = key.partition(" ")
            try:
                pid = int(pid_text)
            except ValueError:
                raise DecisionParseError("participant id is not an integer", line, lineno) from None
            if pid not in known:
                raise DecisionParseError(f"unknown participant id {pid}", line, lineno)
            if word == "PRED":
                if pid in preds and scene:
                    raise DecisionParseError(f"duplicate PRED {pid}", line, lineno)
                preds[pid] = _parse_index(value, N_CANDIDATES, "prediction", line, lineno)
            else:
                if pid in attend and scene:
                    raise DecisionParseError(f"duplicate ATTend {pid}", line, lineno)
                attend[pid] = _parse_index(value, 2, "attention bit", line, lineno)
        elif key == "BIAS_ACCEL":
            bias_acc = value
        elif key == "BIAS_STEER":
            bias_steer = value
        elif key in weight_keys:
            limits = context.pool_sizes[weight_keys[key]]
            wsel[key] = _parse_index(value, limits, key, line, lineno)
        elif key == "RATIONALE":
            rationale = value
        else:
            raise DecisionParseError(f"unknown key {key!r}", line, lineno)

    if not text.strip():
        raise DecisionParseError("empty decision text")

    missing_w = [k for k in weight_keys if k not in wsel]
    if missing_w:
        raise DecisionParseError(f"missing weight selections: {', '.join(sorted(missing_w))}")

    bias: tuple[int, int] | None
    if (bias_acc in (None, "NONE")) and (bias_steer in (None, "NONE")):
        bias = None
    elif bias_acc not in (None, "NONE") and bias_steer not in (None, "NONE"):
        ai = _parse_index(bias_acc, context.accel_bins, "accel bias", bias_acc, 0)
        si = _parse_index(bias_steer, context.steer_bins, "steer bias", bias_steer, 0)
        bias = (ai, si)
    else:
        raise DecisionParseError("action bias needs both BIAS_ACCEL and BIAS_STEER")

    selection = WeightSelection(tracking=wsel["W_TRACK"], action=wsel["W_ACTION"],
                                smoothness=wsel["W_SMOOTH"], safety=wsel["W_SAFETY"])

    if not scene:
        ids = tuple(sorted(known))
        return Decision(ego_trajectory_index=ego_idx if ego_idx is not None else 0,
                        participant_trajectory_indices={pid: preds.get(pid, 0) for pid in ids},
                        attention_mask=AttentionMask(tuple(attend.get(pid, 1) for pid in ids)),
                        bias_selection=bias, weight_selection=selection,
                        rationale_text=rationale, issued_at=context.issued_at,
                        validity=context.validity, emergency=emergency)

    if ego_idx is None:
        raise DecisionParseError("missing EGO_TRAJ")
    missing = [pid for pid in known if pid not in preds]
    if missing:
        raise DecisionParseError(f"missing PRED lines for ids {sorted(missing)}")
    missing = [pid for pid in known if pid not in attend]
    if missing:
        raise DecisionParseError(f"missing ATTend lines for ids {sorted(missing)}")

    ids = tuple(sorted(known))
    return Decision(ego_trajectory_index=ego_idx,
                    participant_trajectory_indices={pid: preds[pid] for pid in ids},
                    attention_mask=AttentionMask(tuple(attend[pid] for pid in ids)),
                    bias_selection=bias, weight_selection=selection,
                    rationale_text=rationale, issued_at=context.issued_at,
                    validity=context.validity, emergency=emergency)


# --- prompt generation -------------------------------------------------------

_SCHEMA_TEXT = """Respond with one line per key, nothing else:
EGO_TRAJ: <0|1|2>
PRED <id>: <0|1|2>        (one line per listed participant)
ATTend <id>: <0|1>        (one line per listed participant; 0 = ignore)
BIAS_ACCEL: <interval index|NONE>
BIAS_STEER: <interval index|NONE>
W_TRACK: <level index>
W_ACTION: <level index>
W_SMOOTH: <level index>
W_SAFETY: <level index>
RATIONALE: <one line of reasoning>"""

_RULES_TEXT = """You are the high-level decision maker of an autonomous car.
Traffic rules: yield to traffic already inside an unsignalized junction or
roundabout; stop at red signals; do not overtake inside a junction; keep a
safe distance; prefer smooth, decisive maneuvers."""


def _fmt(value: float) -> str:
    return f"{value:.2f}"


def _describe_candidates(candidates) -> list[str]:
    lines = []
    for k, poly in enumerate(candidates):
        end = poly.points[-1]
        dup = " (duplicate)" if poly.is_duplicate else ""
        lane = poly.lane_id if poly.lane_id is not None else "?"
        lines.append(f"  candidate {k}: lane {lane}, toward ({_fmt(end[0])}, {_fmt(end[1])}){dup}")
    return lines


def generate_prompt(bundle: ObservationBundle, candidates: Mapping,
                    instruction: str | None = None,
                    pool_sizes: tuple[int, int, int, int] = (3, 3, 3, 3),
                    bins: tuple[int, int] = (5, 5)) -> PromptBundle:
    """Deterministic textual rendering of the scene for a remote decision maker."""
    system = _RULES_TEXT
    if instruction:
        system += f"\nUser driving instruction: {instruction}"
    system += (f"\nWeight levels per category: {pool_sizes[0]} tracking, {pool_sizes[1]} action, "
               f"{pool_sizes[2]} smoothness, {pool_sizes[3]} safety (0 = lowest). "
               f"Action intervals: {bins[0]} acceleration bins, {bins[1]} steering bins.")

    env: list[str] = [f"Simulation time {_fmt(bundle.timestamp)} s."]
    lane_ids = ", ".join(lane.id for lane in bundle.static_obs.lanes)
    env.append(f"Lanes: {lane_ids}.")
    for sig in bundle.static_obs.signals:
        env.append(f"Signal {sig.id} at ({_fmt(sig.position[0])}, {_fmt(sig.position[1])}) "
                   f"is {sig.state}, governs {', '.join(sig.governs)}.")
    env.append("Ego candidate trajectories:")
    env.extend(_describe_candidates(candidates["ego"]))
    if not bundle.dynamic:
        env.append("no other traffic participants")
    else:
        env.append("Traffic participants:")
        for track in bundle.dynamic:
            cur = track.current
            env.append(f"- id {track.id} ({track.kind}) at ({_fmt(cur.x)}, {_fmt(cur.y)}), "
                       f"speed {_fmt(cur.v)} m/s, heading {_fmt(math.degrees(cur.heading))} deg")
            if track.id in candidates:
                env.extend(_describe_candidates(candidates[track.id]))
    return PromptBundle(system_text=system, environment_text="\n".join(env),
                        request_schema_text=_SCHEMA_TEXT)


def generate_guidance_prompt(reason: str, instruction: str | None = None) -> PromptBundle:
    """Reduced prompt for the emergency fast path: guidance keys only."""
    system = _RULES_TEXT
    if instruction:
        system += f"\nUser driving instruction: {instruction}"
    env = (f"EMERGENCY: {reason}. Scenario encoding is skipped; "
           "reply only with action bias and weight selections.")
    schema = "\n".join(line for line in _SCHEMA_TEXT.splitlines()
                       if not line.startswith(("EGO_TRAJ", "PRED", "ATTend")))
    return PromptBundle(system_text=system, environment_text=env,
                        request_schema_text=schema)
