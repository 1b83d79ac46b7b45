"""Incident detection and broadcast: jam bounds, lane speeds, report noise.

The service reads the ground-truth world each step and produces an
IncidentReport: the jam head (front of the incident vehicle), the jam tail
(rear of the last queued vehicle in the incident's lane), and per-lane average
speeds near the tail.  Connected vehicles receive independently perturbed
copies when noise is configured.

The *_arrays helpers are the actual computations on plain numpy arrays; the
world-level functions wrap them.  The engine calls the array forms directly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .idm import IdmParams, desired_gap
from .road import INCIDENT, VehicleState, World

# jam membership thresholds: a vehicle is queued when slower than
# SPEED_FACTOR * v0 and closer than GAP_FACTOR * s* to its leader
SPEED_FACTOR = 0.6
GAP_FACTOR = 2.0

# half-width of the window around the jam tail used for lane speeds, m
SPEED_WINDOW = 50.0


@dataclass(frozen=True)
class NoiseSpec:
    """Report perturbation: position noise on both jam bounds, speed noise on
    every lane-speed entry (independent Gaussians)."""

    sigma_x: float = 0.0  # m
    sigma_v: float = 0.0  # m/s

    def __post_init__(self) -> None:
        if self.sigma_x < 0 or self.sigma_v < 0:
            raise ValueError("noise std devs must be non-negative")


@dataclass(frozen=True)
class IncidentReport:
    """Broadcast describing the incident-induced queue.

    ``incident_lane`` identifies which lane_speeds entry is the blocked lane;
    the overtaking geometry needs it and the service knows it exactly.
    """

    jam_head: float  # x_h: front bumper of the incident vehicle, m
    jam_tail: float  # x_t: rear bumper of the last queued vehicle, m
    lane_speeds: tuple[float, ...]  # mean speed near the tail, per lane, m/s
    incident_lane: int
    timestamp: float = 0.0  # sim time the report was generated, s


def jam_bounds_arrays(lane_pos: np.ndarray, lane_len: np.ndarray,
                      lane_speed: np.ndarray, incident_idx: int, p: IdmParams,
                      speed_factor: float = SPEED_FACTOR,
                      gap_factor: float = GAP_FACTOR) -> tuple[float, float]:
    """Jam bounds within one lane.

    Inputs are the incident lane's vehicles sorted by position ascending;
    ``incident_idx`` locates the incident vehicle.  The queue is the maximal
    contiguous upstream chain where each vehicle is slower than
    speed_factor*v0 and within gap_factor*s* of its leader.
    """
    x_h = float(lane_pos[incident_idx])
    k = incident_idx
    if k == 0:
        return x_h, float(lane_pos[k] - lane_len[k])
    v = lane_speed[:k]
    v_lead = lane_speed[1:k + 1]
    gaps = lane_pos[1:k + 1] - lane_len[1:k + 1] - lane_pos[:k]
    ok = (v < speed_factor * p.v0) & (gaps < gap_factor * desired_gap(v, v_lead, p))
    # walk upstream from the vehicle right behind the incident
    rev = ok[::-1]
    bad = ~rev
    chain = int(np.argmax(bad)) if bad.any() else k
    last = k - chain
    return x_h, float(lane_pos[last] - lane_len[last])


def lane_speeds_arrays(pos: np.ndarray, speed: np.ndarray, lane: np.ndarray,
                       n_lanes: int, jam_tail: float, v0: float,
                       window: float = SPEED_WINDOW) -> np.ndarray:
    """Mean speed per lane over vehicles within ``window`` of the jam tail;
    lanes with no vehicle in the window report the free-flow speed."""
    near = np.abs(pos - jam_tail) <= window
    out = np.empty(n_lanes)
    for l in range(n_lanes):
        sel = near & (lane == l)
        out[l] = speed[sel].mean() if sel.any() else v0
    return out


def constrain_report(jam_head, jam_tail, lane_speeds, segment_length: float):
    """Physical-validity clamps applied after perturbation: positions inside
    the segment, speeds non-negative, tail at or behind the head (swap when
    violated).  Works elementwise on scalars or arrays."""
    head = np.clip(jam_head, 0.0, segment_length)
    tail = np.clip(jam_tail, 0.0, segment_length)
    swapped_head = np.maximum(head, tail)
    swapped_tail = np.minimum(head, tail)
    return swapped_head, swapped_tail, np.maximum(lane_speeds, 0.0)


def detect_jam(world: World, incident: VehicleState,
               p: IdmParams) -> tuple[float, float]:
    """Jam head and tail for the queue behind ``incident`` in its lane."""
    lane_vehicles = world.in_lane(incident.lane)
    idx = next(i for i, v in enumerate(lane_vehicles) if v.id == incident.id)
    return jam_bounds_arrays(
        np.array([v.position for v in lane_vehicles]),
        np.array([v.length for v in lane_vehicles]),
        np.array([v.speed for v in lane_vehicles]),
        idx, p,
    )


def estimate_lane_speeds(world: World, jam_tail: float, p: IdmParams,
                         window: float = SPEED_WINDOW) -> tuple[float, ...]:
    """Per-lane mean speeds near the jam tail (incident vehicle included)."""
    vs = world.vehicles
    out = lane_speeds_arrays(
        np.array([v.position for v in vs]),
        np.array([v.speed for v in vs]),
        np.array([v.lane for v in vs], dtype=np.int64),
        world.segment.n_lanes, jam_tail, p.v0, window,
    )
    return tuple(float(x) for x in out)


def build_report(world: World, p: IdmParams,
                 timestamp: float = 0.0) -> IncidentReport | None:
    """Ground-truth report for the world's incident vehicle, or None when no
    incident-class vehicle is present."""
    incident = next((v for v in world.vehicles if v.vclass == INCIDENT), None)
    if incident is None:
        return None
    x_h, x_t = detect_jam(world, incident, p)
    speeds = estimate_lane_speeds(world, x_t, p)
    return IncidentReport(jam_head=x_h, jam_tail=x_t, lane_speeds=speeds,
                          incident_lane=incident.lane, timestamp=timestamp)


def perturb_report(report: IncidentReport, noise: NoiseSpec,
                   rng: np.random.Generator,
                   segment_length: float) -> IncidentReport:
    """One noisy copy of ``report``.  Draw order is fixed (head, tail, then
    lane speeds); zero noise reproduces the input exactly."""
    head = report.jam_head + noise.sigma_x * rng.standard_normal()
    tail = report.jam_tail + noise.sigma_x * rng.standard_normal()
    speeds = (np.asarray(report.lane_speeds)
              + noise.sigma_v * rng.standard_normal(len(report.lane_speeds)))
    head, tail, speeds = constrain_report(head, tail, speeds, segment_length)
    return IncidentReport(
        jam_head=float(head), jam_tail=float(tail),
        lane_speeds=tuple(float(s) for s in speeds),
        incident_lane=report.incident_lane,
        timestamp=report.timestamp,
    )
