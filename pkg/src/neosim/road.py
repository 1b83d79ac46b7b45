"""Road geometry and vehicle state for a straight multi-lane highway segment.

Lane 0 is the rightmost lane.  Positions are front-bumper distances in meters
from the segment start, increasing in the direction of travel.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

# vehicle classes
HUMAN = "human"
CAV = "cav"
INCIDENT = "incident"
VEHICLE_CLASSES = (HUMAN, CAV, INCIDENT)

# routes
MAINLINE = "mainline"
OFFRAMP = "offramp"
ROUTES = (MAINLINE, OFFRAMP)


@dataclass(frozen=True)
class OffRamp:
    """An exit at ``position`` reachable only from ``target_lane``."""

    position: float
    target_lane: int = 0


@dataclass(frozen=True)
class HighwaySegment:
    """Straight homogeneous segment with ``n_lanes`` parallel lanes."""

    length: float = 2000.0
    n_lanes: int = 3
    offramp: OffRamp | None = None

    def __post_init__(self) -> None:
        if self.length <= 0:
            raise ValueError(f"segment length must be positive, got {self.length}")
        if self.n_lanes < 2:
            raise ValueError(f"need at least 2 lanes, got {self.n_lanes}")
        if self.offramp is not None:
            if not 0 < self.offramp.position <= self.length:
                raise ValueError(
                    f"off-ramp at {self.offramp.position} m outside segment"
                )
            if not 0 <= self.offramp.target_lane < self.n_lanes:
                raise ValueError(
                    f"off-ramp target lane {self.offramp.target_lane} invalid"
                )

    def valid_lane(self, lane: int) -> bool:
        return 0 <= lane < self.n_lanes


@dataclass
class VehicleState:
    """One vehicle.  ``position`` is the front bumper; the body occupies
    [position - length, position]."""

    id: int
    lane: int
    position: float
    speed: float
    length: float = 5.0
    vclass: str = HUMAN
    route: str = MAINLINE
    lc_cooldown: float = 0.0  # seconds until the next lane change is allowed

    @property
    def rear(self) -> float:
        return self.position - self.length


def gap(leader: VehicleState, follower: VehicleState) -> float:
    """Bumper-to-bumper gap: leader rear minus follower front."""
    return leader.position - leader.length - follower.position


@dataclass(frozen=True)
class LaneNeighbors:
    """Nearest leader/follower of a reference vehicle in one lane.

    ``leader_gap``/``follower_gap`` are bumper-to-bumper and +inf when the
    corresponding vehicle is absent.
    """

    leader: VehicleState | None
    follower: VehicleState | None
    leader_gap: float
    follower_gap: float


@dataclass(frozen=True)
class NeighborSet:
    """Per-lane neighbors of one vehicle over its own and adjacent lanes."""

    ego_id: int
    lanes: dict[int, LaneNeighbors]

    def __getitem__(self, lane: int) -> LaneNeighbors:
        return self.lanes[lane]

    def __contains__(self, lane: int) -> bool:
        return lane in self.lanes


@dataclass
class World:
    """Immutable-by-convention snapshot: a segment plus a set of vehicles."""

    segment: HighwaySegment
    vehicles: list[VehicleState] = field(default_factory=list)

    def find(self, vehicle_id: int) -> VehicleState:
        for v in self.vehicles:
            if v.id == vehicle_id:
                return v
        raise KeyError(f"no vehicle with id {vehicle_id}")

    def in_lane(self, lane: int) -> list[VehicleState]:
        """Vehicles in ``lane`` sorted by position ascending."""
        return sorted(
            (v for v in self.vehicles if v.lane == lane), key=lambda v: v.position
        )


def neighbors(world: World, ego: VehicleState) -> NeighborSet:
    """Nearest leader and follower of ``ego`` in its own and adjacent lanes.

    The leader in a lane is the nearest vehicle strictly ahead of ego's front
    bumper; the follower is the nearest vehicle at or behind it.  Ego itself is
    excluded.  Raises KeyError if ego's id is not in the world.
    """
    world.find(ego.id)
    out: dict[int, LaneNeighbors] = {}
    for lane in (ego.lane - 1, ego.lane, ego.lane + 1):
        if not world.segment.valid_lane(lane):
            continue
        leader: VehicleState | None = None
        follower: VehicleState | None = None
        for v in world.vehicles:
            if v.lane != lane or v.id == ego.id:
                continue
            if v.position > ego.position:
                if leader is None or v.position < leader.position:
                    leader = v
            else:
                if follower is None or v.position > follower.position:
                    follower = v
        out[lane] = LaneNeighbors(
            leader=leader,
            follower=follower,
            leader_gap=gap(leader, ego) if leader is not None else math.inf,
            follower_gap=gap(ego, follower) if follower is not None else math.inf,
        )
    return NeighborSet(ego_id=ego.id, lanes=out)
