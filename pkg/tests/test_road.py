"""Geometry, vehicle state, and per-lane neighbor lookup."""

import math

import pytest

from neosim import HighwaySegment, OffRamp, VehicleState, World, gap, neighbors

from conftest import veh, world_of


# -------------------------------------------------------------------- segment

def test_segment_defaults():
    seg = HighwaySegment()
    assert seg.length == 2000.0
    assert seg.n_lanes == 3
    assert seg.offramp is None


def test_segment_validation():
    with pytest.raises(ValueError):
        HighwaySegment(length=0.0)
    with pytest.raises(ValueError):
        HighwaySegment(n_lanes=1)
    with pytest.raises(ValueError):
        HighwaySegment(offramp=OffRamp(position=2500.0))
    with pytest.raises(ValueError):
        HighwaySegment(offramp=OffRamp(position=1900.0, target_lane=3))


def test_valid_lane_bounds():
    seg = HighwaySegment(n_lanes=3)
    assert seg.valid_lane(0) and seg.valid_lane(2)
    assert not seg.valid_lane(-1)
    assert not seg.valid_lane(3)


def test_offramp_default_target_is_rightmost():
    assert OffRamp(position=1900.0).target_lane == 0


# -------------------------------------------------------------- vehicle state

def test_rear_and_gap_are_bumper_to_bumper():
    lead = veh(1, 0, 100.0, 20.0)
    foll = veh(2, 0, 80.0, 20.0)
    assert lead.rear == 95.0
    assert gap(lead, foll) == 15.0
    # vehicles touching: zero gap
    assert gap(lead, veh(3, 0, 95.0, 0.0)) == 0.0


def test_world_find_and_in_lane():
    w = world_of([veh(1, 0, 50.0, 10.0), veh(2, 0, 10.0, 10.0),
                  veh(3, 1, 30.0, 10.0)])
    assert w.find(3).lane == 1
    with pytest.raises(KeyError):
        w.find(99)
    assert [v.id for v in w.in_lane(0)] == [2, 1]
    assert w.in_lane(2) == []


# ------------------------------------------------------------------ neighbors

def test_neighbors_basic_three_lane_layout():
    ego = veh(10, 1, 100.0, 20.0)
    w = world_of([
        ego,
        veh(1, 1, 150.0, 18.0),   # own-lane leader
        veh(2, 1, 60.0, 22.0),    # own-lane follower
        veh(3, 0, 130.0, 15.0),   # right leader
        veh(4, 2, 90.0, 25.0),    # left follower
    ])
    nb = neighbors(w, ego)
    assert set(nb.lanes) == {0, 1, 2}
    assert nb[1].leader.id == 1
    assert nb[1].leader_gap == 45.0
    assert nb[1].follower.id == 2
    assert nb[1].follower_gap == 35.0
    assert nb[0].leader.id == 3
    assert nb[0].follower is None
    assert nb[0].follower_gap == math.inf
    assert nb[2].leader is None
    assert nb[2].leader_gap == math.inf
    assert nb[2].follower.id == 4


def test_neighbors_picks_nearest_of_several():
    ego = veh(10, 0, 100.0, 20.0)
    w = world_of([ego, veh(1, 0, 200.0, 20.0), veh(2, 0, 120.0, 20.0),
                  veh(3, 0, 20.0, 20.0), veh(4, 0, 70.0, 20.0)])
    nb = neighbors(w, ego)
    assert nb[0].leader.id == 2
    assert nb[0].follower.id == 4


def test_neighbors_equal_position_counts_as_follower():
    # leader must be strictly ahead; an exact tie is a follower
    ego = veh(10, 1, 100.0, 20.0)
    other = veh(11, 1, 100.0, 20.0)
    nb = neighbors(world_of([ego, other]), ego)
    assert nb[1].leader is None
    assert nb[1].follower.id == 11


def test_neighbors_edge_lane_has_no_invalid_entries():
    ego = veh(10, 0, 100.0, 20.0)
    nb = neighbors(world_of([ego]), ego)
    assert set(nb.lanes) == {0, 1}
    assert -1 not in nb
    ego_top = veh(11, 2, 100.0, 20.0)
    nb = neighbors(world_of([veh(10, 0, 1.0, 0.0), ego_top]), ego_top)
    assert set(nb.lanes) == {1, 2}


def test_neighbors_requires_ego_in_world():
    w = world_of([veh(1, 0, 10.0, 5.0)])
    with pytest.raises(KeyError):
        neighbors(w, veh(99, 0, 50.0, 5.0))


def test_vehicle_state_defaults():
    v = VehicleState(id=1, lane=0, position=10.0, speed=5.0)
    assert v.length == 5.0
    assert v.vclass == "human"
    assert v.route == "mainline"
    assert v.lc_cooldown == 0.0
