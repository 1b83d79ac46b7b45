"""Compiled per-step hot path of the simulation engine.

The scalar functions in ``idm``/``mobil``/``neo`` define the behavioral
contract; these numba kernels restate them as loops over the position-sorted
state arrays so a full run compiles down to machine code.  Every formula here
keeps the exact operation order of its scalar counterpart (same
associativity, same floors, same strict comparisons) and the test suite holds
the two paths in agreement — keep them in lockstep when editing either side.

All position arrays are globally ascending; lane grouping is a counting sort,
so within a lane vehicles stay ascending too.  ``-1`` is the "no neighbor"
sentinel throughout.
"""

from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True, inline="always")
def _follow(h, v, v_lead, v0, T, a_max, sqrt2ab, delta, s0):
    # idm.follow_eval without the domain check; callers guarantee h > 0
    dyn = v * T + v * (v - v_lead) / sqrt2ab
    if dyn < 0.0:
        dyn = 0.0
    s_star = s0 + dyn
    return a_max * (1.0 - (v / v0) ** delta - (s_star / h) ** 2)


@njit(cache=True)
def _group(lane, pos, n_lanes):
    # counting sort by lane, position-ascending within each lane
    n = lane.shape[0]
    starts = np.zeros(n_lanes + 1, np.int64)
    for i in range(n):
        starts[lane[i] + 1] += 1
    for l in range(n_lanes):
        starts[l + 1] += starts[l]
    fill = starts[:n_lanes].copy()
    by_lane = np.empty(n, np.int64)
    gpos = np.empty(n, np.float64)
    for i in range(n):
        k = fill[lane[i]]
        by_lane[k] = i
        gpos[k] = pos[i]
        fill[lane[i]] = k + 1
    return by_lane, gpos, starts


@njit(cache=True, inline="always")
def _upper_bound(gpos, lo, hi, x):
    # first index in [lo, hi) with gpos > x (leader side of a tie)
    while lo < hi:
        mid = (lo + hi) // 2
        if gpos[mid] <= x:
            lo = mid + 1
        else:
            hi = mid
    return lo


@njit(cache=True, inline="always")
def _mand_h(l, target_lane, x_end, xi, x_safe, realign, tail):
    # neo.mandatory_headway, re-anchored at the jam tail when realigned
    if l == target_lane:
        return np.inf
    off_n = abs(l - target_lane) - 1.0
    base = tail if realign else x_end
    return base - xi - off_n * x_safe


@njit(cache=True)
def decide_kernel(pos, speed, length, lane, cool, is_cav, is_inc, routed,
                  rep_head, rep_tail, rep_ls, rep_valid, inc_lane, man_on,
                  n_lanes, x_end, target_lane,
                  h_lam_s, h_lam_p, h_lam_d, h_lam_m, h_x_safe, h_a_th,
                  h_b_safe, h_anneal, h_bound,
                  c_lam_s, c_lam_p, c_lam_d, c_lam_m, c_x_safe, c_a_th,
                  c_b_safe, c_anneal, c_bound,
                  v0, T, a_max, sqrt2ab, delta, s0, floor):
    """Proposed lane per vehicle (== current lane to stay put).

    Mirrors ``neo.neo_decide`` per vehicle: candidates are the valid adjacent
    lanes, scored lam_s*g_ego + lam_p*g_neighbors + lam_d*g_downstream +
    lam_m*g_mandatory, right side first, strict improvement to switch.
    ``rep_*`` carry each vehicle's (possibly perturbed) copy of the incident
    report; ``rep_valid`` is False for unconnected vehicles.  Pure: no input
    is mutated.
    """
    n = pos.shape[0]
    proposal = lane.copy()
    by_lane, gpos, starts = _group(lane, pos, n_lanes)

    lead = np.full(n, -1, np.int64)
    foll = np.full(n, -1, np.int64)
    for l in range(n_lanes):
        for k in range(starts[l], starts[l + 1]):
            i = by_lane[k]
            if k + 1 < starts[l + 1]:
                lead[i] = by_lane[k + 1]
            if k > starts[l]:
                foll[i] = by_lane[k - 1]

    for i in range(n):
        if is_inc[i] or cool[i] > 0.0:
            continue
        li = lane[i]
        xi = pos[i]
        vi = speed[i]
        rear_i = xi - length[i]
        cav = is_cav[i]
        lam_s = c_lam_s if cav else h_lam_s
        lam_p = c_lam_p if cav else h_lam_p
        lam_d = c_lam_d if cav else h_lam_d
        lam_m = c_lam_m if cav else h_lam_m
        x_safe = c_x_safe if cav else h_x_safe
        a_th = c_a_th if cav else h_a_th
        b_safe = c_b_safe if cav else h_b_safe

        # keep-lane baseline
        ld = lead[i]
        if ld >= 0:
            h_cur = pos[ld] - length[ld] - xi
            if h_cur < floor:
                h_cur = floor
            v_ld = speed[ld]
            a_keep = _follow(h_cur, vi, v_ld, v0, T, a_max, sqrt2ab, delta, s0)
        else:
            v_ld = 0.0
            a_keep = _follow(np.inf, vi, 0.0, v0, T, a_max, sqrt2ab, delta, s0)

        # old follower's change if ego vacates (side-independent)
        g_of = 0.0
        fo = foll[i]
        if fo >= 0:
            v_fo = speed[fo]
            h_b = rear_i - pos[fo]
            if h_b < floor:
                h_b = floor
            of_before = _follow(h_b, v_fo, vi, v0, T, a_max, sqrt2ab, delta, s0)
            if ld >= 0:
                h_a = pos[ld] - length[ld] - pos[fo]
                if h_a < floor:
                    h_a = floor
                of_after = _follow(h_a, v_fo, v_ld, v0, T, a_max, sqrt2ab,
                                   delta, s0)
            else:
                of_after = _follow(np.inf, v_fo, 0.0, v0, T, a_max, sqrt2ab,
                                   delta, s0)
            g_of = of_after - of_before

        # virtual leader at the reported jam tail (strictly upstream only)
        has_d = rep_valid[i] and xi < rep_tail[i]
        h_d = 0.0
        f_d_cur = 0.0
        if has_d:
            h_d = rep_tail[i] - xi
            f_d_cur = _follow(h_d, vi, rep_ls[i, li], v0, T, a_max, sqrt2ab,
                              delta, s0)

        # mandatory off-ramp pressure, routed vehicles only
        lam_s_eff = lam_s
        man_i = man_on and routed[i]
        realign = False
        a_m_cur = 0.0
        if man_i:
            frac = (x_end - xi) / (c_anneal if cav else h_anneal)
            if frac < 0.0:
                frac = 0.0
            elif frac > 1.0:
                frac = 1.0
            lam_s_eff = lam_s * frac
            if rep_valid[i]:
                v_inc = rep_ls[i, inc_lane]
                v_pass = -np.inf
                for l in range(n_lanes):
                    if l != inc_lane and rep_ls[i, l] > v_pass:
                        v_pass = rep_ls[i, l]
                if v_pass - v_inc > 0.0:
                    x_int = xi + v_pass * (rep_head[i] - xi) / (v_pass - v_inc)
                else:
                    x_int = np.inf
                bound = c_bound if cav else h_bound
                realign = x_int + x_safe > bound
            h_m = _mand_h(li, target_lane, x_end, xi, x_safe, realign,
                          rep_tail[i])
            if h_m < floor:
                h_m = floor
            a_m_cur = _follow(h_m, vi, 0.0, v0, T, a_max, sqrt2ab, delta, s0)

        best_lane = li
        best_total = -np.inf
        for sdx in range(2):
            tl = li - 1 if sdx == 0 else li + 1
            if tl < 0 or tl >= n_lanes:
                continue
            j = _upper_bound(gpos, starts[tl], starts[tl + 1], xi)
            t_ld = by_lane[j] if j < starts[tl + 1] else -1
            t_fo = by_lane[j - 1] if j > starts[tl] else -1

            if t_ld >= 0:
                t_gap = pos[t_ld] - length[t_ld] - xi
                v_tld = speed[t_ld]
            else:
                t_gap = np.inf
                v_tld = 0.0
            h_t = t_gap
            if h_t < floor:
                h_t = floor
            a_new = _follow(h_t, vi, v_tld, v0, T, a_max, sqrt2ab, delta, s0)
            g_e = a_new - a_keep

            v_nf = 0.0
            foll_gap = np.inf
            if t_fo >= 0:
                v_nf = speed[t_fo]
                p_nf = pos[t_fo]
                if t_ld >= 0:
                    h_nb = pos[t_ld] - length[t_ld] - p_nf
                    if h_nb < floor:
                        h_nb = floor
                    nf_before = _follow(h_nb, v_nf, v_tld, v0, T, a_max,
                                        sqrt2ab, delta, s0)
                else:
                    nf_before = _follow(np.inf, v_nf, 0.0, v0, T, a_max,
                                        sqrt2ab, delta, s0)
                foll_gap = rear_i - p_nf
                h_na = foll_gap
                if h_na < floor:
                    h_na = floor
                nf_after = _follow(h_na, v_nf, vi, v0, T, a_max, sqrt2ab,
                                   delta, s0)
                g_n = (nf_after - nf_before) + g_of
            else:
                g_n = 0.0 + g_of

            # safety veto on the raw gaps
            safe = t_gap > 0.0 and foll_gap > 0.0
            if safe and t_fo >= 0:
                braking = _follow(foll_gap, v_nf, vi, v0, T, a_max, sqrt2ab,
                                  delta, s0)
                if braking < b_safe:
                    safe = False
            if not safe:
                continue

            g_d = 0.0
            if has_d:
                g_d = _follow(h_d, vi, rep_ls[i, tl], v0, T, a_max, sqrt2ab,
                              delta, s0) - f_d_cur
            g_m = 0.0
            if man_i:
                h_mt = _mand_h(tl, target_lane, x_end, xi, x_safe, realign,
                               rep_tail[i])
                if h_mt < floor:
                    h_mt = floor
                g_m = _follow(h_mt, vi, 0.0, v0, T, a_max, sqrt2ab, delta,
                              s0) - a_m_cur

            total = (lam_s_eff * g_e + lam_p * g_n + lam_d * g_d
                     + lam_m * g_m)
            if total > a_th and total > best_total:
                best_total = total
                best_lane = tl
        proposal[i] = best_lane
    return proposal


@njit(cache=True)
def apply_kernel(pos, speed, length, lane, cool, is_cav, proposal,
                 lc_cooldown, h_b_safe, c_b_safe,
                 v0, T, a_max, sqrt2ab, delta, s0):
    """Apply proposed changes in ascending-position order, re-checking each
    against the partially updated lane assignment (an upstream acceptance can
    invalidate a downstream one).  Mutates ``lane``/``cool``; returns the
    accepted changes as (count, index, from-lane, to-lane) arrays.
    """
    n = pos.shape[0]
    ch_idx = np.empty(n, np.int64)
    ch_from = np.empty(n, np.int64)
    ch_to = np.empty(n, np.int64)
    nch = 0
    for i in range(n):
        tl = proposal[i]
        if tl == lane[i]:
            continue
        t_lead = -1
        t_foll = -1
        for j in range(n):  # ascending position: last <= is follower
            if lane[j] != tl:
                continue
            if pos[j] > pos[i]:
                t_lead = j
                break
            t_foll = j
        ok = True
        if t_lead >= 0 and pos[t_lead] - length[t_lead] - pos[i] <= 0.0:
            ok = False
        if ok and t_foll >= 0:
            g = pos[i] - length[i] - pos[t_foll]
            if g <= 0.0:
                ok = False
            else:
                b = c_b_safe if is_cav[i] else h_b_safe
                braking = _follow(g, speed[t_foll], speed[i], v0, T, a_max,
                                  sqrt2ab, delta, s0)
                if braking < b:
                    ok = False
        if ok:
            ch_idx[nch] = i
            ch_from[nch] = lane[i]
            ch_to[nch] = tl
            nch += 1
            lane[i] = tl
            cool[i] = lc_cooldown
    return nch, ch_idx, ch_from, ch_to


@njit(cache=True)
def motion_kernel(pos, speed, length, lane, cool, is_inc, noise,
                  n_lanes, dt, v0, T, a_max, sqrt2ab, delta, s0, floor,
                  emergency_decel):
    """Car following + semi-implicit Euler, in place.

    Followers are visited before their leaders (grouped ascending), so every
    headway reads pre-step positions.  Incidents move kinematically and
    ignore their noise draw.  Cooldowns tick down at the end, including for
    vehicles that changed lane this step.
    """
    by_lane, gpos, starts = _group(lane, pos, n_lanes)
    for l in range(n_lanes):
        for k in range(starts[l], starts[l + 1]):
            i = by_lane[k]
            if is_inc[i]:
                pos[i] += speed[i] * dt
                continue
            if k + 1 < starts[l + 1]:
                ld = by_lane[k + 1]
                h = pos[ld] - length[ld] - pos[i]
                if h <= 0.0:
                    h = floor
                v_ld = speed[ld]
            else:
                h = np.inf
                v_ld = 0.0
            acc = _follow(h, speed[i], v_ld, v0, T, a_max, sqrt2ab, delta,
                          s0) + noise[i]
            if acc < emergency_decel:
                acc = emergency_decel
            elif acc > a_max:
                acc = a_max
            v2 = speed[i] + acc * dt
            if v2 < 0.0:
                v2 = 0.0
            speed[i] = v2
            pos[i] += v2 * dt
    for i in range(pos.shape[0]):
        c = cool[i] - dt
        cool[i] = c if c > 0.0 else 0.0


@njit(cache=True)
def overlap_kernel(pos, length, lane, n_lanes):
    """Indices of the first same-lane pair with negative bumper gap, follower
    first; (-1, -1) when the state is overlap-free."""
    by_lane, gpos, starts = _group(lane, pos, n_lanes)
    for l in range(n_lanes):
        for k in range(starts[l] + 1, starts[l + 1]):
            i = by_lane[k - 1]
            j = by_lane[k]
            if pos[j] - length[j] - pos[i] < 0.0:
                return i, j
    return -1, -1
