"""Discrete-time multi-lane highway simulation.

Vehicle state lives in parallel numpy arrays kept sorted by position
(struct-of-arrays); the per-step stages — neighbor lookup, incentive
evaluation, car-following, integration — run in the compiled kernels of
``_kernels`` so a full 1200 s run stays around a second on a single core.
The scalar functions in ``mobil``/``neo`` define the decision contract; the
kernels reproduce them with the same operation order, and the test suite
holds the two paths in exact agreement.

Step order: inject -> regenerate report (per-vehicle noisy copies) ->
evaluate decisions on the pre-step snapshot -> apply changes upstream to
downstream with a safety re-check -> car-following accelerations + noise ->
semi-implicit Euler -> overlap/conservation checks -> off-ramp outcomes ->
removals -> metrics.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._kernels import (apply_kernel, decide_kernel, motion_kernel,
                       overlap_kernel)
from .idm import IdmParams
from .incident import (SPEED_WINDOW, IncidentReport, NoiseSpec,
                       constrain_report, jam_bounds_arrays,
                       lane_speeds_arrays)
from .mobil import EVAL_HEADWAY_FLOOR
from .neo import NeoParams
from .road import (CAV, HUMAN, INCIDENT, MAINLINE, OFFRAMP, HighwaySegment,
                   VehicleState, World)

EMERGENCY_DECEL = -8.0  # hard floor on commanded deceleration, m/s^2
OFFRAMP_DECISION_OFFSET = 10.0  # outcome settles this far before the ramp, m


@dataclass(frozen=True)
class ModelSpec:
    """Lane-change parameterization for one driver class.

    ``connected`` gates everything that requires the broadcast incident
    report: the downstream incentive and headway realignment.  An
    unconnected spec with zero downstream weight is plain MOBIL with
    politeness ``lambda_p`` (plus the mandatory term for routed vehicles).
    """

    id: str
    connected: bool = False
    lambda_s: float = 1.0
    lambda_p: float = 0.0
    lambda_d: float = 0.0
    lambda_m: float = 100.0
    x_safe: float = 100.0
    anneal_start: float = 1000.0
    accel_threshold: float = 0.1
    safe_braking: float = -4.0
    realign_boundary: float | None = None

    def neo_params(self) -> NeoParams:
        return NeoParams(
            lambda_s=self.lambda_s, lambda_p=self.lambda_p,
            lambda_d=self.lambda_d, lambda_m=self.lambda_m,
            x_safe=self.x_safe, anneal_start=self.anneal_start,
            a_th=self.accel_threshold, b_safe=self.safe_braking,
            realign_boundary=self.realign_boundary)


def human_model() -> ModelSpec:
    """Unconnected selfish driver: ego gain plus mandatory pressure only."""
    return ModelSpec(id="human")


def altruistic_mobil_model() -> ModelSpec:
    """Unconnected fully polite driver (politeness weight 1)."""
    return ModelSpec(id="altruistic-mobil", lambda_p=1.0)


def neo_model(politeness: float = 1.0, model_id: str | None = None) -> ModelSpec:
    """Connected driver combining local, downstream, and mandatory terms."""
    if model_id is None:
        model_id = f"neo-p{politeness:g}"
    return ModelSpec(id=model_id, connected=True, lambda_p=politeness,
                     lambda_d=100.0)


@dataclass(frozen=True)
class IncidentSpec:
    """Exogenous disturbance placed on the road at t = 0."""

    kind: str  # "stopped" | "slow"
    position: float
    speed: float = 0.0
    lane: int = 0

    def __post_init__(self) -> None:
        if self.kind not in ("stopped", "slow"):
            raise ValueError(f"unknown incident kind: {self.kind!r}")
        if self.speed < 0:
            raise ValueError("incident speed must be >= 0")
        if self.kind == "stopped" and self.speed != 0:
            raise ValueError("a stopped incident must have zero speed")
        if self.position <= 0:
            raise ValueError("incident position must be positive")


@dataclass(frozen=True)
class SimConfig:
    """One run's knobs; scenario sweeps derive per-cell copies of this."""

    dt: float = 0.25
    horizon: float = 1200.0
    seed: int = 0
    inflow_per_lane: float = 800.0  # veh/hr/lane
    p_cav: float = 0.0
    routing_fraction: float = 0.2  # share routed to the off-ramp, if any
    model_human: ModelSpec = field(default_factory=human_model)
    model_cav: ModelSpec = field(default_factory=neo_model)
    idm: IdmParams = field(default_factory=IdmParams)
    lc_cooldown: float = 2.0  # s between lane changes of one vehicle
    check_invariants: bool = True

    def __post_init__(self) -> None:
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.horizon <= 0:
            raise ValueError("horizon must be positive")
        if not 0.0 <= self.p_cav <= 1.0:
            raise ValueError("p_cav must be a probability")
        if not 0.0 <= self.routing_fraction <= 1.0:
            raise ValueError("routing_fraction must be a probability")
        if self.inflow_per_lane < 0:
            raise ValueError("inflow_per_lane must be >= 0")
        if self.lc_cooldown < 0:
            raise ValueError("lc_cooldown must be >= 0")


@dataclass(frozen=True)
class SimResult:
    """Aggregated outcome of one run."""

    mean_speed_all: float
    mean_speed_cav: float | None  # absent when no connected-class vehicle ran
    offramp_attempts: int
    offramp_failures: int
    offramp_attempts_cav: int
    offramp_failures_cav: int
    offramp_attempts_human: int
    offramp_failures_human: int
    injected: int
    steps: int
    sim_time: float


class SimulationError(RuntimeError):
    """Invariant violation; carries the step and sim time for triage."""

    def __init__(self, message: str, step: int, sim_time: float):
        super().__init__(f"{message} (step {step}, t={sim_time:.2f} s)")
        self.step = step
        self.sim_time = sim_time


def _class_consts(m: ModelSpec, x_end: float) -> tuple[float, ...]:
    # scalar argument block for decide_kernel, one per driver class; floats
    # throughout so numba sees one stable signature
    bound = m.realign_boundary if m.realign_boundary is not None else x_end
    return (float(m.lambda_s), float(m.lambda_p), float(m.lambda_d),
            float(m.lambda_m), float(m.x_safe), float(m.accel_threshold),
            float(m.safe_braking), float(m.anneal_start), float(bound))


class Simulation:
    """One simulation run over a highway segment.

    Arrays are position-ascending at all times.  Two RNG streams are split
    from the seed: motion noise, and everything auxiliary (lane choice,
    class assignment, routing, report noise) so toggling one stochastic
    feature never shifts the other stream's draws.
    """

    def __init__(self, segment: HighwaySegment, config: SimConfig,
                 incident: IncidentSpec | None = None,
                 noise: NoiseSpec | None = None,
                 initial_vehicles: tuple[VehicleState, ...] = (),
                 trace_hook=None):
        self.segment = segment
        self.config = config
        self.incident = incident
        self.noise = noise if noise is not None else NoiseSpec()
        self.trace_hook = trace_hook

        motion_ss, aux_ss = np.random.SeedSequence(config.seed).spawn(2)
        self._rng_motion = np.random.default_rng(motion_ss)
        self._rng_aux = np.random.default_rng(aux_ss)

        self.sim_time = 0.0
        self.step_count = 0
        self._owed = 0.0
        q_in = config.inflow_per_lane * segment.n_lanes / 3600.0
        self._spawn_period = (1.0 / q_in) if q_in > 0 else None

        idm = config.idm
        off = segment.offramp
        self._x_end = float(off.position) if off is not None else 0.0
        self._target_lane = int(off.target_lane) if off is not None else 0
        self._idm_consts = (float(idm.v0), float(idm.T), float(idm.a),
                            float(2.0 * np.sqrt(idm.a * idm.b)),
                            float(idm.delta), float(idm.s0))
        self._model_consts = (_class_consts(config.model_human, self._x_end)
                              + _class_consts(config.model_cav, self._x_end))

        self.exited_main = 0
        self.exited_off = 0
        self.attempts = {CAV: 0, HUMAN: 0}
        self.failures = {CAV: 0, HUMAN: 0}
        self._speed_sum_all = 0.0
        self._speed_steps_all = 0
        self._speed_sum_cav = 0.0
        self._speed_steps_cav = 0
        self._incident_exited = False

        vehicles = list(initial_vehicles)
        if incident is not None:
            if not segment.valid_lane(incident.lane):
                raise ValueError("incident lane outside segment")
            if not 0 < incident.position <= segment.length:
                raise ValueError("incident position outside segment")
            vehicles.append(VehicleState(
                id=0, lane=incident.lane, position=incident.position,
                speed=incident.speed, vclass=INCIDENT))
        ids = [v.id for v in vehicles]
        if len(set(ids)) != len(ids):
            raise ValueError("vehicle ids must be unique")
        self._next_id = max(ids, default=0) + 1

        vehicles.sort(key=lambda v: v.position)
        self._pos = np.array([v.position for v in vehicles], float)
        self._speed = np.array([v.speed for v in vehicles], float)
        self._len = np.array([v.length for v in vehicles], float)
        self._lane = np.array([v.lane for v in vehicles], np.int64)
        self._cool = np.array([v.lc_cooldown for v in vehicles], float)
        self._vid = np.array([v.id for v in vehicles], np.int64)
        self._is_cav = np.array([v.vclass == CAV for v in vehicles], bool)
        self._is_inc = np.array([v.vclass == INCIDENT for v in vehicles], bool)
        self._routed = np.array([v.route == OFFRAMP for v in vehicles], bool)
        self._succeeded = np.zeros(len(vehicles), bool)
        for v in vehicles:
            if not segment.valid_lane(v.lane):
                raise ValueError(f"vehicle {v.id} in invalid lane {v.lane}")
        self._incident_present = bool(self._is_inc.any())
        self.injected = int(np.sum(~self._is_inc))

    # ------------------------------------------------------------------ state

    @property
    def n_vehicles(self) -> int:
        return int(self._pos.size)

    @property
    def terminated(self) -> bool:
        if self.sim_time >= self.config.horizon:
            return True
        return self._incident_present and self._incident_exited

    def world(self) -> World:
        """Materialize the current state as an immutable snapshot."""
        vs = []
        for i in range(self._pos.size):
            if self._is_inc[i]:
                vclass = INCIDENT
            elif self._is_cav[i]:
                vclass = CAV
            else:
                vclass = HUMAN
            vs.append(VehicleState(
                id=int(self._vid[i]), lane=int(self._lane[i]),
                position=float(self._pos[i]), speed=float(self._speed[i]),
                length=float(self._len[i]), vclass=vclass,
                route=OFFRAMP if self._routed[i] else MAINLINE,
                lc_cooldown=float(self._cool[i])))
        return World(segment=self.segment, vehicles=tuple(vs))

    def result(self) -> SimResult:
        msa = (self._speed_sum_all / self._speed_steps_all
               if self._speed_steps_all else 0.0)
        msc = (self._speed_sum_cav / self._speed_steps_cav
               if self._speed_steps_cav else None)
        return SimResult(
            mean_speed_all=msa, mean_speed_cav=msc,
            offramp_attempts=self.attempts[CAV] + self.attempts[HUMAN],
            offramp_failures=self.failures[CAV] + self.failures[HUMAN],
            offramp_attempts_cav=self.attempts[CAV],
            offramp_failures_cav=self.failures[CAV],
            offramp_attempts_human=self.attempts[HUMAN],
            offramp_failures_human=self.failures[HUMAN],
            injected=self.injected, steps=self.step_count,
            sim_time=self.sim_time)

    # -------------------------------------------------------------- injection

    def _insert(self, position: float, speed: float, length: float, lane: int,
                is_cav: bool, routed: bool) -> None:
        i = int(np.searchsorted(self._pos, position, side="left"))
        self._pos = np.insert(self._pos, i, position)
        self._speed = np.insert(self._speed, i, speed)
        self._len = np.insert(self._len, i, length)
        self._lane = np.insert(self._lane, i, lane)
        self._cool = np.insert(self._cool, i, 0.0)
        self._vid = np.insert(self._vid, i, self._next_id)
        self._next_id += 1
        self._is_cav = np.insert(self._is_cav, i, is_cav)
        self._is_inc = np.insert(self._is_inc, i, False)
        self._routed = np.insert(self._routed, i, routed)
        self._succeeded = np.insert(self._succeeded, i, False)

    def _try_spawn(self) -> bool:
        cfg = self.config
        spawn_len = 5.0
        cell_top = 2.0 * cfg.idm.s0 + spawn_len
        lane = -1
        for cand in self._rng_aux.permutation(self.segment.n_lanes):
            in_lane = self._lane == cand
            if in_lane.any():
                rear_min = float(np.min(self._pos[in_lane] - self._len[in_lane]))
                if rear_min < cell_top:
                    continue
            lane = int(cand)
            break
        if lane < 0:
            return False
        in_lane = self._lane == lane
        if in_lane.any():
            j = int(np.argmax(in_lane))  # position-sorted: first hit is nearest
            gap = float(self._pos[j] - self._len[j]) - spawn_len
            v_lead = float(self._speed[j])
            # cap so the entrant can always stop behind its leader at the
            # emergency decel; spawning at v0 into a queued entrance would
            # force an unavoidable overlap
            speed = min(cfg.idm.v0,
                        math.sqrt(v_lead * v_lead - 2.0 * EMERGENCY_DECEL * gap))
        else:
            speed = cfg.idm.v0
        is_cav = bool(self._rng_aux.random() < cfg.p_cav)
        routed = False
        if self.segment.offramp is not None:
            routed = bool(self._rng_aux.random() < cfg.routing_fraction)
        self._insert(position=spawn_len, speed=speed, length=spawn_len,
                     lane=lane, is_cav=is_cav, routed=routed)
        self.injected += 1
        return True

    def _inject(self) -> None:
        if self._spawn_period is None:
            return
        self._owed += self.config.dt / self._spawn_period
        while self._owed >= 1.0:
            if not self._try_spawn():
                break  # entrance blocked: deficit carries to the next step
            self._owed -= 1.0

    # ---------------------------------------------------------------- reports

    def _lane_grouping(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        order = np.argsort(self._lane, kind="stable")
        sorted_lanes = self._lane[order]
        lanes = np.arange(self.segment.n_lanes)
        starts = np.searchsorted(sorted_lanes, lanes, side="left")
        ends = np.searchsorted(sorted_lanes, lanes, side="right")
        return order, starts, ends

    def _ground_truth_report(self, grouping) -> IncidentReport | None:
        inc = np.flatnonzero(self._is_inc)
        if inc.size == 0:
            return None
        k = int(inc[0])
        order, starts, ends = grouping
        lane = int(self._lane[k])
        block = order[starts[lane]:ends[lane]]
        bidx = int(np.flatnonzero(block == k)[0])
        idm = self.config.idm
        x_h, x_t = jam_bounds_arrays(self._pos[block], self._len[block],
                                     self._speed[block], bidx, idm)
        speeds = lane_speeds_arrays(self._pos, self._speed, self._lane,
                                    self.segment.n_lanes, x_t, idm.v0,
                                    SPEED_WINDOW)
        return IncidentReport(jam_head=x_h, jam_tail=x_t,
                              lane_speeds=tuple(float(s) for s in speeds),
                              incident_lane=lane, timestamp=self.sim_time)

    def _report_arrays(self, report: IncidentReport | None):
        """Per-vehicle report values: (head, tail, lane_speeds, valid).

        Connected vehicles each get an independently perturbed copy; the
        draws are batched (all heads, all tails, all speed rows) with a
        fixed shape per step for a given vehicle census.
        """
        n = self._pos.size
        n_lanes = self.segment.n_lanes
        if report is None:
            z = np.zeros(n)
            return z, z, np.zeros((n, n_lanes)), np.zeros(n, bool)
        hm, cm = self.config.model_human, self.config.model_cav
        conn = np.where(self._is_cav, cm.connected, hm.connected)
        valid = conn & ~self._is_inc
        head = np.full(n, report.jam_head)
        tail = np.full(n, report.jam_tail)
        ls = np.broadcast_to(np.asarray(report.lane_speeds, float),
                             (n, n_lanes)).copy()
        ns = self.noise
        if valid.any() and (ns.sigma_x > 0 or ns.sigma_v > 0):
            idx = np.flatnonzero(valid)
            m = idx.size
            d_head = ns.sigma_x * self._rng_aux.standard_normal(m)
            d_tail = ns.sigma_x * self._rng_aux.standard_normal(m)
            d_v = ns.sigma_v * self._rng_aux.standard_normal((m, n_lanes))
            h, t, s = constrain_report(head[idx] + d_head, tail[idx] + d_tail,
                                       ls[idx] + d_v, self.segment.length)
            head[idx] = h
            tail[idx] = t
            ls[idx] = s
        return head, tail, ls, valid

    # -------------------------------------------------------------- decisions

    def evaluate_decisions(self) -> tuple[np.ndarray, IncidentReport | None]:
        """Proposed lane per vehicle on the current state (snapshot
        semantics; no mutation).  Entries equal the current lane when the
        vehicle stays put.  Consumes report-noise draws when noise is on."""
        n = self._pos.size
        if n == 0:
            return np.zeros(0, np.int64), None
        report = self._ground_truth_report(self._lane_grouping())
        return self._decide(report), report

    def _decide(self, report: IncidentReport | None) -> np.ndarray:
        rep_head, rep_tail, rep_ls, rep_valid = self._report_arrays(report)
        man_on = (self.segment.offramp is not None
                  and bool(self._routed.any()))
        inc_lane = int(report.incident_lane) if report is not None else 0
        return decide_kernel(
            self._pos, self._speed, self._len, self._lane, self._cool,
            self._is_cav, self._is_inc, self._routed,
            rep_head, rep_tail, rep_ls, rep_valid, inc_lane, man_on,
            self.segment.n_lanes, self._x_end, self._target_lane,
            *self._model_consts, *self._idm_consts, EVAL_HEADWAY_FLOOR)

    def _apply_changes(self, proposal: np.ndarray) -> list[tuple[int, int, int]]:
        hm, cm = self.config.model_human, self.config.model_cav
        nch, ch_idx, ch_from, ch_to = apply_kernel(
            self._pos, self._speed, self._len, self._lane, self._cool,
            self._is_cav, proposal, float(self.config.lc_cooldown),
            float(hm.safe_braking), float(cm.safe_braking),
            *self._idm_consts)
        return [(int(self._vid[ch_idx[k]]), int(ch_from[k]), int(ch_to[k]))
                for k in range(nch)]

    # ----------------------------------------------------------------- motion

    def _check_overlap(self) -> None:
        i, j = overlap_kernel(self._pos, self._len, self._lane,
                              self.segment.n_lanes)
        if i >= 0:
            raise SimulationError(
                f"overlap between vehicles {int(self._vid[i])} and "
                f"{int(self._vid[j])} in lane {int(self._lane[i])}",
                self.step_count, self.sim_time)

    # ------------------------------------------------------------------- step

    def step(self) -> None:
        cfg = self.config
        self._inject()
        n = self._pos.size
        report: IncidentReport | None = None
        changes: list[tuple[int, int, int]] = []
        if n:
            if self._incident_present:
                report = self._ground_truth_report(self._lane_grouping())
            proposal = self._decide(report)
            changes = self._apply_changes(proposal)

            noise = self._rng_motion.standard_normal(n) * cfg.idm.noise_std
            prev_pos = self._pos.copy()
            motion_kernel(self._pos, self._speed, self._len, self._lane,
                          self._cool, self._is_inc, noise,
                          self.segment.n_lanes, float(cfg.dt),
                          *self._idm_consts, EVAL_HEADWAY_FLOOR,
                          EMERGENCY_DECEL)

            if np.any(self._pos[1:] < self._pos[:-1]):  # overtaking happened
                order = np.argsort(self._pos, kind="stable")
                self._reindex(order)
                prev_pos = prev_pos[order]

            if cfg.check_invariants:
                if np.any(self._speed < 0):
                    raise SimulationError("negative speed", self.step_count,
                                          self.sim_time)
                self._check_overlap()

            self._offramp_outcomes(prev_pos)
            self._remove_exited()
            if cfg.check_invariants:
                present = int(np.sum(~self._is_inc))
                if self.injected != present + self.exited_main + self.exited_off:
                    raise SimulationError("vehicle conservation violated",
                                          self.step_count, self.sim_time)

        live = ~self._is_inc
        if live.any():
            self._speed_sum_all += float(self._speed[live].mean())
            self._speed_steps_all += 1
            cav = live & self._is_cav
            if cav.any():
                self._speed_sum_cav += float(self._speed[cav].mean())
                self._speed_steps_cav += 1

        self.sim_time += cfg.dt
        self.step_count += 1

        if self.trace_hook is not None:
            self.trace_hook(self._trace_record(report, changes))

    def _reindex(self, order: np.ndarray) -> None:
        self._pos = self._pos[order]
        self._speed = self._speed[order]
        self._len = self._len[order]
        self._lane = self._lane[order]
        self._cool = self._cool[order]
        self._vid = self._vid[order]
        self._is_cav = self._is_cav[order]
        self._is_inc = self._is_inc[order]
        self._routed = self._routed[order]
        self._succeeded = self._succeeded[order]

    def _offramp_outcomes(self, prev_pos: np.ndarray) -> None:
        off = self.segment.offramp
        if off is None:
            return
        thresh = off.position - OFFRAMP_DECISION_OFFSET
        crossed = (self._routed & ~self._is_inc & ~self._succeeded
                   & (prev_pos < thresh) & (self._pos >= thresh))
        for i in np.flatnonzero(crossed):
            cls = CAV if self._is_cav[i] else HUMAN
            self.attempts[cls] += 1
            if int(self._lane[i]) == off.target_lane:
                self._succeeded[i] = True
            else:
                self.failures[cls] += 1
                self._routed[i] = False  # rerouted through the main carriageway

    def _remove_exited(self) -> None:
        off = self.segment.offramp
        gone_main = self._pos >= self.segment.length
        if off is not None:
            gone_off = self._succeeded & (self._pos >= off.position)
        else:
            gone_off = np.zeros(self._pos.size, bool)
        remove = gone_main | gone_off
        if not remove.any():
            return
        if np.any(remove & self._is_inc):
            self._incident_exited = True
        live = remove & ~self._is_inc
        self.exited_off += int(np.sum(live & gone_off))
        self.exited_main += int(np.sum(live & ~gone_off))
        self._reindex(np.flatnonzero(~remove))

    def _trace_record(self, report: IncidentReport | None,
                      changes: list[tuple[int, int, int]]) -> dict:
        vehicles = []
        for i in range(self._pos.size):
            if self._is_inc[i]:
                vclass = INCIDENT
            elif self._is_cav[i]:
                vclass = CAV
            else:
                vclass = HUMAN
            vehicles.append({
                "id": int(self._vid[i]), "lane": int(self._lane[i]),
                "pos": round(float(self._pos[i]), 3),
                "speed": round(float(self._speed[i]), 3),
                "cls": vclass,
                "route": OFFRAMP if self._routed[i] else MAINLINE})
        rep = None
        if report is not None:
            rep = {"jam_head": report.jam_head, "jam_tail": report.jam_tail,
                   "lane_speeds": list(report.lane_speeds),
                   "incident_lane": report.incident_lane,
                   "timestamp": report.timestamp}
        return {"t": round(self.sim_time, 6), "vehicles": vehicles,
                "report": rep, "lane_changes": [list(c) for c in changes]}

    def run(self) -> SimResult:
        while not self.terminated:
            self.step()
        return self.result()
