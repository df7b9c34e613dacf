"""Compiled tick loop.

Mirrors, operation for operation, the reference numpy functions in
``channel``, ``scheduler`` and ``handover``; the test-suite checks the two
paths against each other. HO events are emitted as a flat log and charged
to counters afterwards by :class:`samro.handover.HoClassifier`.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

EV_TRIGGER, EV_COMPLETE, EV_RLF, EV_REESTABLISH = 0, 1, 2, 3
EVENT_NAMES = ("TRIGGER", "COMPLETE", "RLF", "REESTABLISH")


@njit(cache=True)
def _sample_region(u, r0, r1, circle, center, radius, box, out):
    if circle[u]:
        r = radius[u] * math.sqrt(r0)
        th = 2.0 * math.pi * r1
        out[u, 0] = center[u, 0] + r * math.cos(th)
        out[u, 1] = center[u, 1] + r * math.sin(th)
    else:
        out[u, 0] = box[0] + r0 * (box[2] - box[0])
        out[u, 1] = box[1] + r1 * (box[3] - box[1])


@njit(cache=True)
def site_rsrp(pos, shadow, site_pos, cell_site, bore, chan, rsrp):
    """Fill ``rsrp`` (U, N) in dBm; chan = (tx, pl0, d0, n_exp, min_d, bw3db, max_att)."""
    tx, pl0, d0, nexp, min_d, bw, amax = chan[0], chan[1], chan[2], chan[3], chan[4], chan[5], chan[6]
    n_users = pos.shape[0]
    n_cells = cell_site.shape[0]
    n_sites = site_pos.shape[0]
    pl = np.empty(n_sites)
    ang = np.empty(n_sites)
    for u in range(n_users):
        for k in range(n_sites):
            dx = pos[u, 0] - site_pos[k, 0]
            dy = pos[u, 1] - site_pos[k, 1]
            d = max(math.hypot(dx, dy), min_d)
            pl[k] = pl0 + 10.0 * nexp * math.log10(d / d0)
            ang[k] = math.atan2(dy, dx)
        for c in range(n_cells):
            k = cell_site[c]
            phi = ang[k] - bore[c]
            phi = (phi + math.pi) % (2.0 * math.pi) - math.pi
            phi = phi * 180.0 / math.pi
            g = -min(12.0 * (phi / bw) ** 2, amax)
            rsrp[u, c] = tx + g - pl[k] - shadow[u, k]


@njit(cache=True)
def sinr_db(rsrp, serving, activity, noise_lin, out):
    n_users, n_cells = rsrp.shape
    for u in range(n_users):
        s = serving[u]
        if s < 0:
            out[u] = np.nan
            continue
        sig = 10.0 ** (rsrp[u, s] / 10.0)
        intf = 0.0
        for c in range(n_cells):
            if c != s:
                intf += 10.0 ** (rsrp[u, c] / 10.0) * activity[c]
        out[u] = 10.0 * math.log10(sig / (intf + noise_lin))


@njit(cache=True)
def schedule(serving, active, sinr, demand, user_slice, sched_p, rate, latency, load, users_cs):
    """Equal-share allocation; sched_p = (bandwidth, se_cap, packet_kbit, queue_ms, eps)."""
    bw, cap, pkt, qd, eps = sched_p[0], sched_p[1], sched_p[2], sched_p[3], sched_p[4]
    n_users = serving.shape[0]
    n_cells = load.shape[0]
    k_cell = np.zeros(n_cells)
    util = np.zeros(n_cells)
    share = np.zeros(n_users)
    load[:, :] = 0.0
    users_cs[:, :] = 0.0
    for u in range(n_users):
        rate[u] = 0.0
        latency[u] = np.nan
        if active[u] and serving[u] >= 0:
            k_cell[serving[u]] += 1.0
    for u in range(n_users):
        c = serving[u]
        if active[u] and c >= 0:
            se = min(math.log2(1.0 + 10.0 ** (sinr[u] / 10.0)), cap)
            share[u] = bw / k_cell[c] * se
            frac = min(1.0, demand[u] / share[u]) / k_cell[c]
            util[c] += frac
            load[c, user_slice[u]] += frac
            users_cs[c, user_slice[u]] += 1.0
    for u in range(n_users):
        c = serving[u]
        if active[u] and c >= 0:
            r = min(demand[u], share[u])
            rho = util[c]
            rate[u] = r
            latency[u] = pkt / r + qd * rho / (1.0 - rho + eps)


@njit(cache=True)
def run_ticks(n_ticks, t0, st, mob, shadow_p, geo, chan, sched_p, ho_p, traffic_p,
              hom, need, user_slice, demand, req_rate, req_lat,
              wp_draws, sh_draws, act_draws, acc, ev):
    """Advance ``n_ticks`` radio ticks in place.

    Returns the number of events written to ``ev`` (columns: tick, user,
    kind, source, target).
    """
    pos, wp, step, moving, circle, center, radius, box = mob
    shadow, rho, innov, sigma = shadow_p
    site_pos, cell_site, bore = geo
    (serving, active, hold, rlf_cnt, exec_left, exec_tgt, reest_left,
     activity, rsrp, sinr, rate, latency, load, users_cs) = st
    n_rlf, n_exec, n_reest, q_out, noise_lin = (
        int(ho_p[0]), int(ho_p[1]), int(ho_p[2]), ho_p[3], ho_p[4])
    act_ticks, p_min, p_max, day, tick_s, start_tod = (
        int(traffic_p[0]), traffic_p[1], traffic_p[2], traffic_p[3], traffic_p[4], traffic_p[5])
    acc_load, acc_users, acc_tsl, acc_lsl = acc
    n_users = pos.shape[0]
    n_cells = cell_site.shape[0]
    n_sites = site_pos.shape[0]
    n_ev = 0
    sinr_pre = np.empty(n_users)
    for i in range(n_ticks):
        t = t0 + i + 1
        # mobility
        for u in range(n_users):
            if not moving[u]:
                continue
            dx = wp[u, 0] - pos[u, 0]
            dy = wp[u, 1] - pos[u, 1]
            d = math.hypot(dx, dy)
            if d <= step[u]:
                pos[u, 0] = wp[u, 0]
                pos[u, 1] = wp[u, 1]
                _sample_region(u, wp_draws[i, u, 0], wp_draws[i, u, 1], circle, center, radius, box, wp)
            else:
                pos[u, 0] += dx * step[u] / d
                pos[u, 1] += dy * step[u] / d
        # shadowing
        for u in range(n_users):
            for k in range(n_sites):
                shadow[u, k] = rho[u] * shadow[u, k] + innov[u] * sigma * sh_draws[i, u, k]
        site_rsrp(pos, shadow, site_pos, cell_site, bore, chan, rsrp)
        # traffic
        if t % act_ticks == 0:
            tod = start_tod + t * tick_s
            p = p_min + (p_max - p_min) * 0.5 * (1.0 - math.cos(2.0 * math.pi * tod / day))
            for u in range(n_users):
                active[u] = act_draws[i, u] < p

        # re-establishment on the strongest cell
        for u in range(n_users):
            if reest_left[u] > 0:
                reest_left[u] -= 1
                if reest_left[u] == 0:
                    best = 0
                    for c in range(1, n_cells):
                        if rsrp[u, c] > rsrp[u, best]:
                            best = c
                    ev[n_ev, 0] = t; ev[n_ev, 1] = u; ev[n_ev, 2] = 3
                    ev[n_ev, 3] = -1; ev[n_ev, 4] = best
                    n_ev += 1
                    serving[u] = best
                    for c in range(n_cells):
                        hold[u, c] = 0
        sinr_db(rsrp, serving, activity, noise_lin, sinr_pre)
        # RLF
        for u in range(n_users):
            if serving[u] >= 0 and sinr_pre[u] < q_out:
                rlf_cnt[u] += 1
            else:
                rlf_cnt[u] = 0
            if rlf_cnt[u] >= n_rlf:
                ev[n_ev, 0] = t; ev[n_ev, 1] = u; ev[n_ev, 2] = 2
                ev[n_ev, 3] = serving[u]; ev[n_ev, 4] = -1
                n_ev += 1
                serving[u] = -1
                rlf_cnt[u] = 0
                exec_left[u] = 0
                reest_left[u] = n_reest
                for c in range(n_cells):
                    hold[u, c] = 0
        # HO execution
        for u in range(n_users):
            if exec_left[u] > 0:
                exec_left[u] -= 1
                if exec_left[u] == 0:
                    ev[n_ev, 0] = t; ev[n_ev, 1] = u; ev[n_ev, 2] = 1
                    ev[n_ev, 3] = serving[u]; ev[n_ev, 4] = exec_tgt[u]
                    n_ev += 1
                    serving[u] = exec_tgt[u]
                    rlf_cnt[u] = 0
                    for c in range(n_cells):
                        hold[u, c] = 0
        # slice-specific HO criterion
        for u in range(n_users):
            srv = serving[u]
            if srv < 0 or exec_left[u] > 0:
                for c in range(n_cells):
                    hold[u, c] = 0
                continue
            s = user_slice[u]
            target = -1
            for c in range(n_cells):
                if rsrp[u, c] > rsrp[u, srv] + hom[srv, c, s]:
                    hold[u, c] += 1
                    if hold[u, c] >= need[srv, c, s]:
                        if target < 0 or rsrp[u, c] > rsrp[u, target]:
                            target = c
                else:
                    hold[u, c] = 0
            if target >= 0:
                ev[n_ev, 0] = t; ev[n_ev, 1] = u; ev[n_ev, 2] = 0
                ev[n_ev, 3] = srv; ev[n_ev, 4] = target
                n_ev += 1
                exec_left[u] = n_exec
                exec_tgt[u] = target
                for c in range(n_cells):
                    hold[u, c] = 0

        sinr_db(rsrp, serving, activity, noise_lin, sinr)
        schedule(serving, active, sinr, demand, user_slice, sched_p, rate, latency, load, users_cs)
        for c in range(n_cells):
            tot = 0.0
            for s in range(load.shape[1]):
                tot += load[c, s]
                acc_load[c, s] += load[c, s]
                acc_users[c, s] += users_cs[c, s]
            activity[c] = tot
        for u in range(n_users):
            if rate[u] > 0.0:
                s = user_slice[u]
                c = serving[u]
                acc_tsl[c, s] += min(rate[u] / req_rate[s], 1.0)
                acc_lsl[c, s] += min(req_lat[s] / latency[u], 1.0)
    return n_ev
