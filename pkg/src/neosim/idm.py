"""Intelligent Driver Model car following.

Accelerations follow

    accel = a * (1 - (v / v0)**delta - (s_star / h)**2)

with the desired dynamic gap

    s_star = s0 + max(0, v*T + v*(v - v_lead) / (2*sqrt(a*b))).

``h`` is the bumper-to-bumper headway to the leader; ``h = +inf`` means free
road (the interaction term vanishes).  All functions broadcast over numpy
arrays; scalars in, scalars out.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class IdmParams:
    """Car-following parameters, shared by every driver class."""

    v0: float = 20.0  # desired speed, m/s
    T: float = 1.2  # desired time headway, s
    a: float = 1.5  # maximum acceleration, m/s^2
    b: float = 2.0  # comfortable deceleration, m/s^2
    delta: float = 4.0  # free-road exponent
    s0: float = 2.0  # standstill jam distance, m
    noise_std: float = 0.2  # std dev of per-step acceleration noise, m/s^2

    def __post_init__(self) -> None:
        for name in ("v0", "T", "a", "b", "s0"):
            if getattr(self, name) <= 0:
                raise ValueError(f"IdmParams.{name} must be positive")
        if self.noise_std < 0:
            raise ValueError("IdmParams.noise_std must be non-negative")


def desired_gap(v, v_lead, p: IdmParams):
    """Desired dynamic gap s* for a vehicle at speed ``v`` behind ``v_lead``."""
    dyn = v * p.T + v * (v - v_lead) / (2.0 * np.sqrt(p.a * p.b))
    return p.s0 + np.maximum(0.0, dyn)


def _check_headway(h) -> None:
    # domain: h > 0 or +inf; overlapping or zero headways are invalid states
    if np.any(np.less_equal(h, 0.0)):
        raise ValueError("headway must be positive (or +inf for free road)")


def follow_eval(h, v, v_lead, p: IdmParams):
    """Noise-free IDM acceleration; the shared primitive for all incentive
    evaluations.  ``v_lead`` is ignored when ``h`` is +inf."""
    _check_headway(h)
    return p.a * (1.0 - (v / p.v0) ** p.delta - (desired_gap(v, v_lead, p) / h) ** 2)


def idm_accel(h, v, v_lead, p: IdmParams, noise=0.0):
    """Executed IDM acceleration: ``follow_eval`` plus additive noise."""
    return follow_eval(h, v, v_lead, p) + noise
