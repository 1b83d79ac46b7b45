"""MOBIL-style lane-change gains, safety veto, and decision rule.

All gains are differences of IDM accelerations evaluated on hypothetical
post-change arrangements.  Candidate lanes are the valid adjacent lanes; the
rule picks the candidate with the largest weighted gain above the threshold,
preferring the right (lower-index) lane on ties.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .idm import IdmParams, follow_eval
from .road import NeighborSet, VehicleState, gap

# Floor for headways fed to follow_eval while scoring hypothetical
# arrangements: mandatory/virtual headways and cross-lane gaps can be <= 0
# (vehicle alongside, virtual vehicle behind ego) where follow_eval's domain
# requires h > 0.  The floor keeps gains finite with the right ordering;
# safety_check still rejects on the raw gaps.
EVAL_HEADWAY_FLOOR = 0.1


@dataclass(frozen=True)
class MobilParams:
    """Classic MOBIL parameters."""

    politeness: float = 0.0  # p: weight on neighboring followers' gains
    accel_threshold: float = 0.1  # minimum weighted gain to act, m/s^2
    safe_braking: float = -4.0  # least acceptable new-follower accel, m/s^2


@dataclass(frozen=True)
class IncentiveBreakdown:
    """Per-candidate decision record: the four gain components, the weighted
    total as configured, and whether the candidate passed the safety veto."""

    target_lane: int
    ego: float
    neighbors: float
    downstream: float
    mandatory: float
    weighted_total: float
    safety_ok: bool


def _eval_headway(h: float) -> float:
    return max(h, EVAL_HEADWAY_FLOOR)


def _accel_behind(subject: VehicleState, leader: VehicleState | None,
                  head: float, p: IdmParams) -> float:
    if leader is None:
        return float(follow_eval(math.inf, subject.speed, 0.0, p))
    return float(follow_eval(_eval_headway(head), subject.speed, leader.speed, p))


def ego_gain(ego: VehicleState, nb: NeighborSet, target_lane: int,
             p: IdmParams) -> float:
    """Ego's own acceleration gain from moving to ``target_lane``."""
    cur = nb[ego.lane]
    tgt = nb[target_lane]
    a_now = _accel_behind(ego, cur.leader, cur.leader_gap, p)
    a_new = _accel_behind(ego, tgt.leader, tgt.leader_gap, p)
    return a_new - a_now


def neighbor_gain(ego: VehicleState, nb: NeighborSet, target_lane: int,
                  p: IdmParams) -> float:
    """Summed acceleration change of the affected followers.

    The new follower (target lane) trades its current leader for ego; the old
    follower (current lane) trades ego for ego's current leader.  Absent
    followers contribute zero.
    """
    cur = nb[ego.lane]
    tgt = nb[target_lane]
    total = 0.0
    new_f = tgt.follower
    if new_f is not None:
        before = _accel_behind(new_f, tgt.leader,
                               gap(tgt.leader, new_f) if tgt.leader else math.inf, p)
        after = _accel_behind(new_f, ego, gap(ego, new_f), p)
        total += after - before
    old_f = cur.follower
    if old_f is not None:
        before = _accel_behind(old_f, ego, gap(ego, old_f), p)
        after = _accel_behind(old_f, cur.leader,
                              gap(cur.leader, old_f) if cur.leader else math.inf, p)
        total += after - before
    return total


def safety_check(ego: VehicleState, nb: NeighborSet, target_lane: int,
                 p: IdmParams, safe_braking: float = -4.0) -> bool:
    """True when the change is safe: both post-change gaps in the target lane
    are strictly positive and the new follower would not have to brake below
    ``safe_braking`` (inclusive bound)."""
    tgt = nb[target_lane]
    if tgt.leader is not None and tgt.leader_gap <= 0.0:
        return False
    if tgt.follower is not None:
        g = gap(ego, tgt.follower)
        if g <= 0.0:
            return False
        braking = float(follow_eval(g, tgt.follower.speed, ego.speed, p))
        if braking < safe_braking:
            return False
    return True


def mobil_decide(ego: VehicleState, nb: NeighborSet, params: MobilParams,
                 idm: IdmParams) -> tuple[int | None, dict[int, IncentiveBreakdown]]:
    """Classic MOBIL decision over the valid adjacent lanes.

    Returns the chosen lane (or None) and the per-candidate breakdown.
    Candidates are scored g_ego + politeness * g_neighbors; unsafe candidates
    are never chosen.  Ties prefer the lower lane index (keep right).
    """
    best: int | None = None
    best_total = -math.inf
    out: dict[int, IncentiveBreakdown] = {}
    for lane in sorted(nb.lanes):
        if lane == ego.lane:
            continue
        ok = safety_check(ego, nb, lane, idm, params.safe_braking)
        g_e = ego_gain(ego, nb, lane, idm)
        g_n = neighbor_gain(ego, nb, lane, idm)
        total = g_e + params.politeness * g_n
        out[lane] = IncentiveBreakdown(
            target_lane=lane, ego=g_e, neighbors=g_n, downstream=0.0,
            mandatory=0.0, weighted_total=total, safety_ok=ok,
        )
        if ok and total > params.accel_threshold and total > best_total:
            best = lane
            best_total = total
    return best, out
