"""Shared builders for the test suite.

Most tests construct tiny worlds by hand; these helpers keep the noise down.
``IDM0`` is the standard parameter set with motion noise disabled, used
whenever a test wants exact trajectories.
"""

from __future__ import annotations

from neosim import HighwaySegment, IdmParams, VehicleState, World

IDM0 = IdmParams(noise_std=0.0)


def veh(vid: int, lane: int, pos: float, speed: float, *, length: float = 5.0,
        vclass: str = "human", route: str = "mainline",
        cooldown: float = 0.0) -> VehicleState:
    return VehicleState(id=vid, lane=lane, position=pos, speed=speed,
                        length=length, vclass=vclass, route=route,
                        lc_cooldown=cooldown)


def world_of(vehicles, n_lanes: int = 3, length: float = 2000.0,
             offramp=None) -> World:
    seg = HighwaySegment(length=length, n_lanes=n_lanes, offramp=offramp)
    return World(segment=seg, vehicles=list(vehicles))
