"""Equal-share, slice-agnostic cell scheduler."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def spectral_efficiency(sinr_db, cap):
    return np.minimum(np.log2(1.0 + 10.0 ** (np.asarray(sinr_db, float) / 10.0)), cap)


@dataclass
class Allocation:
    rate: np.ndarray  # Mbit/s per user, 0 when not scheduled
    latency: np.ndarray  # ms per user, nan when not scheduled
    load: np.ndarray  # (N, S) resource fraction per cell and slice
    utilization: np.ndarray  # (N,)
    n_users: np.ndarray  # (N, S) scheduled users


def allocate_resources(serving, active, sinr_db, demand, user_slice, n_cells, n_slices, config):
    """Schedule every cell at once.

    A scheduled user (active and attached) gets ``min(demand, W/K * SE)``;
    utilisation is the mean fraction of the per-user share actually needed;
    latency is transmission time of one packet plus a load-dependent queueing
    term ``d0 * rho / (1 - rho + eps)``.
    """
    serving = np.asarray(serving)
    sched = np.asarray(active, bool) & (serving >= 0)
    n_users = len(serving)
    rate = np.zeros(n_users)
    latency = np.full(n_users, np.nan)
    load = np.zeros((n_cells, n_slices))
    users_cs = np.zeros((n_cells, n_slices))
    util = np.zeros(n_cells)
    if not sched.any():
        return Allocation(rate, latency, load, util, users_cs)

    idx = np.flatnonzero(sched)
    cell = serving[idx]
    sl = np.asarray(user_slice)[idx]
    k_cell = np.bincount(cell, minlength=n_cells)
    share = config.bandwidth_per_cell / k_cell[cell] * spectral_efficiency(
        sinr_db[idx], config.max_spectral_eff)
    dem = np.asarray(demand, float)[idx]
    r = np.minimum(dem, share)
    frac = np.minimum(1.0, dem / share) / k_cell[cell]  # resource fraction consumed
    util = np.bincount(cell, weights=frac, minlength=n_cells)
    rho = util[cell]
    d = config.packet_size / r + config.queue_delay * rho / (1.0 - rho + config.eps_rho)

    rate[idx] = r
    latency[idx] = d
    np.add.at(load, (cell, sl), frac)
    np.add.at(users_cs, (cell, sl), 1.0)
    return Allocation(rate, latency, load, util, users_cs)
