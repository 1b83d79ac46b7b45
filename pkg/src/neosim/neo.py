"""Incident-aware lane-change control for connected vehicles (NEO).

Extends the MOBIL criterion with two non-local incentives built from virtual
vehicles, plus a distance-annealed selfishness weight:

* downstream gain: a virtual vehicle at the jam tail moving at each lane's
  reported average speed scores how much a lane helps once the queue is
  reached;
* mandatory gain: stopped virtual vehicles anchored at the off-ramp (or, when
  overtaking the incident cannot finish before the ramp, realigned to the jam
  tail) force routed vehicles toward the exit lane.

A change happens when

    lambda_s*g_ego + lambda_p*g_neighbors + lambda_d*g_downstream
        + lambda_m*g_mandatory > a_th

for the best safe adjacent lane.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .idm import IdmParams, follow_eval
from .incident import IncidentReport
from .mobil import (
    EVAL_HEADWAY_FLOOR,
    IncentiveBreakdown,
    ego_gain,
    neighbor_gain,
    safety_check,
)
from .road import OFFRAMP, NeighborSet, OffRamp, VehicleState


@dataclass(frozen=True)
class NeoParams:
    """Weights and thresholds for the generalized incentive criterion.

    ``realign_boundary`` is the position the overtaking completion point is
    compared against; None means the off-ramp position itself.
    """

    lambda_s: float = 1.0  # selfishness: weight on ego's own gain
    lambda_p: float = 0.0  # politeness: weight on followers' gains
    lambda_d: float = 100.0  # downstream incentive weight
    lambda_m: float = 100.0  # mandatory incentive weight
    x_safe: float = 100.0  # per-lane virtual-vehicle spacing, m
    anneal_start: float = 1000.0  # distance where selfishness starts fading, m
    a_th: float = 0.1  # decision threshold, m/s^2
    b_safe: float = -4.0  # safety veto bound, m/s^2
    realign_boundary: float | None = None

    def __post_init__(self) -> None:
        for name in ("lambda_s", "lambda_p", "lambda_d", "lambda_m"):
            if getattr(self, name) < 0:
                raise ValueError(f"NeoParams.{name} must be non-negative")
        if self.x_safe <= 0:
            raise ValueError("NeoParams.x_safe must be positive")
        if self.anneal_start <= 0:
            raise ValueError("NeoParams.anneal_start must be positive")


def downstream_gain(ego: VehicleState, report: IncidentReport | None,
                    current_lane: int, target_lane: int, p: IdmParams) -> float:
    """Acceleration gain at the jam tail from being in ``target_lane`` rather
    than ``current_lane``, using each lane's reported average speed as the
    virtual leader speed.  Zero without a report or when ego is not strictly
    upstream of the tail."""
    if report is None or not ego.position < report.jam_tail:
        return 0.0
    h_d = report.jam_tail - ego.position
    v_tgt = report.lane_speeds[target_lane]
    v_cur = report.lane_speeds[current_lane]
    return float(follow_eval(h_d, ego.speed, v_tgt, p)
                 - follow_eval(h_d, ego.speed, v_cur, p))


def mandatory_headway(ego: VehicleState, offramp: OffRamp, lane: int,
                      x_safe: float) -> float:
    """Headway from ego to the stopped virtual vehicle encoding the off-ramp
    constraint for ``lane``: +inf in the target lane, else the distance to the
    ramp shortened by one ``x_safe`` per additional lane to cross."""
    if lane == offramp.target_lane:
        return math.inf
    offset = abs(lane - offramp.target_lane)
    return offramp.position - ego.position - (offset - 1) * x_safe


def intersection_point(ego: VehicleState, report: IncidentReport) -> float:
    """Position where ego, overtaking at the fastest non-incident lane's
    average speed, draws level with the jam head.  +inf when no lane is faster
    than the incident lane (catch-up impossible)."""
    v_inc = report.lane_speeds[report.incident_lane]
    v_pass = max(s for i, s in enumerate(report.lane_speeds)
                 if i != report.incident_lane)
    if not v_pass > v_inc:
        return math.inf
    return ego.position + v_pass * (report.jam_head - ego.position) / (v_pass - v_inc)


def realign_headways(headways: dict[int, float], ego: VehicleState,
                     report: IncidentReport, offramp: OffRamp,
                     params: NeoParams) -> dict[int, float]:
    """Move the mandatory virtual vehicles from the off-ramp to the jam tail
    when the overtaking maneuver cannot complete ``x_safe`` before the
    realignment boundary.  Finite entries become anchored at the tail
    (x_t - x_ego - (offset-1)*x_safe, the same shift as h - x_end + x_t);
    +inf entries stay +inf.  Recomputing from the anchor makes the operation
    idempotent for a fixed report."""
    boundary = (params.realign_boundary if params.realign_boundary is not None
                else offramp.position)
    x_int = intersection_point(ego, report)
    if not x_int + params.x_safe > boundary:
        return dict(headways)
    out: dict[int, float] = {}
    for lane, h in headways.items():
        if math.isinf(h):
            out[lane] = h
        else:
            offset = abs(lane - offramp.target_lane)
            out[lane] = report.jam_tail - ego.position - (offset - 1) * params.x_safe
    return out


def mandatory_gain(ego: VehicleState, h_current: float, h_target: float,
                   p: IdmParams) -> float:
    """Gain against the stopped virtual vehicles: target minus current lane.
    +inf headways evaluate as free road; finite ones are floored to stay in
    follow_eval's domain (a virtual vehicle at or behind ego reads as an
    extreme disincentive, which is the intent)."""
    a_tgt = follow_eval(max(h_target, EVAL_HEADWAY_FLOOR), ego.speed, 0.0, p)
    a_cur = follow_eval(max(h_current, EVAL_HEADWAY_FLOOR), ego.speed, 0.0, p)
    return float(a_tgt - a_cur)


def anneal_selfishness(lambda_s: float, distance_to_turn: float,
                       anneal_start: float) -> float:
    """Linearly fade the selfishness weight from full at ``anneal_start``
    meters before the turn to zero at the turn."""
    frac = min(max(distance_to_turn / anneal_start, 0.0), 1.0)
    return lambda_s * frac


def neo_decide(ego: VehicleState, nb: NeighborSet,
               report: IncidentReport | None, offramp: OffRamp | None,
               params: NeoParams, idm: IdmParams,
               ) -> tuple[int | None, dict[int, IncentiveBreakdown]]:
    """Generalized incentive decision over the valid adjacent lanes.

    Without a report the downstream term is zero and mandatory headways stay
    anchored at the off-ramp (the unconnected behavior); with lambda_d =
    lambda_m = 0 and a mainline ego this reduces exactly to ``mobil_decide``
    with politeness lambda_p.  Ties prefer the lower lane index.
    """
    routed = ego.route == OFFRAMP and offramp is not None
    lam_s = params.lambda_s
    heads: dict[int, float] | None = None
    if routed:
        lam_s = anneal_selfishness(
            params.lambda_s, offramp.position - ego.position, params.anneal_start)
        heads = {lane: mandatory_headway(ego, offramp, lane, params.x_safe)
                 for lane in nb.lanes}
        if report is not None:
            heads = realign_headways(heads, ego, report, offramp, params)

    best: int | None = None
    best_total = -math.inf
    out: dict[int, IncentiveBreakdown] = {}
    for lane in sorted(nb.lanes):
        if lane == ego.lane:
            continue
        ok = safety_check(ego, nb, lane, idm, params.b_safe)
        g_e = ego_gain(ego, nb, lane, idm)
        g_n = neighbor_gain(ego, nb, lane, idm)
        g_d = downstream_gain(ego, report, ego.lane, lane, idm)
        g_m = mandatory_gain(ego, heads[ego.lane], heads[lane], idm) if heads else 0.0
        total = (lam_s * g_e + params.lambda_p * g_n
                 + params.lambda_d * g_d + params.lambda_m * g_m)
        out[lane] = IncentiveBreakdown(
            target_lane=lane, ego=g_e, neighbors=g_n, downstream=g_d,
            mandatory=g_m, weighted_total=total, safety_ok=ok,
        )
        if ok and total > params.a_th and total > best_total:
            best = lane
            best_total = total
    return best, out
