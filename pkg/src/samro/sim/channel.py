"""Log-distance propagation with spatially correlated shadowing."""

from __future__ import annotations

import numpy as np


def pathloss(tx_pos, rx_pos, config, shadowing=0.0):
    """Path loss in dB: PL0 + 10 n log10(d / d0) + shadowing.

    Distances below ``config.min_distance`` are clamped. Broadcasts over
    leading dimensions of the position arrays.
    """
    diff = np.asarray(rx_pos, float) - np.asarray(tx_pos, float)
    d = np.maximum(np.hypot(diff[..., 0], diff[..., 1]), config.min_distance)
    return config.pl0 + 10.0 * config.n_exp * np.log10(d / config.d0) + shadowing


def antenna_gain(tx_pos, rx_pos, boresight, config):
    """Horizontal sector pattern, 0 dB on boresight."""
    diff = np.asarray(rx_pos, float) - np.asarray(tx_pos, float)
    phi = np.arctan2(diff[..., 1], diff[..., 0]) - boresight
    phi = np.rad2deg((phi + np.pi) % (2 * np.pi) - np.pi)
    return -np.minimum(12.0 * (phi / config.antenna_beamwidth) ** 2, config.antenna_max_atten)


def rsrp_dbm(user_pos, config, shadow_site):
    """Received power from every cell.

    ``user_pos`` is (..., U, 2) and ``shadow_site`` (..., U, n_sites);
    returns (..., U, N).
    """
    cells = config.cell_positions()
    bore = config.cell_boresights()
    up = np.asarray(user_pos, float)[..., :, None, :]
    pl = pathloss(cells, up, config)
    gain = antenna_gain(cells, up, bore, config)
    return config.tx_power + gain - pl - shadow_site[..., config.cell_site()]


def db2lin(x):
    return 10.0 ** (np.asarray(x, float) / 10.0)


def lin2db(x):
    return 10.0 * np.log10(x)


def compute_sinr(rsrp_db, serving, cell_activity, noise_dbm):
    """SINR (dB) of each user towards its serving cell.

    Interference from cell ``c`` is weighted by its activity factor (total
    load). ``rsrp_db`` is (U, N) and ``serving`` (U,); users with a negative
    serving index get NaN.
    """
    rsrp_db = np.atleast_2d(rsrp_db)
    serving = np.atleast_1d(np.asarray(serving))
    lin = db2lin(rsrp_db)
    attached = serving >= 0
    srv = np.where(attached, serving, 0)
    rows = np.arange(len(serving))
    signal = lin[rows, srv]
    act = np.asarray(cell_activity, float)
    interference = lin @ act - signal * act[srv]
    sinr = lin2db(signal / (np.maximum(interference, 0.0) + db2lin(noise_dbm)))
    return np.where(attached, sinr, np.nan)


class ShadowingField:
    """Per (user, site) lognormal shadowing, AR(1) over travelled distance.

    The correlation between consecutive ticks is exp(-v dt / d_corr);
    co-located sectors share the site's value.
    """

    def __init__(self, n_users, n_sites, speed_mps, config, rng):
        self.sigma = config.shadow_sigma
        step = np.asarray(speed_mps, float) * config.radio_tick
        self.rho = np.exp(-step / config.shadow_decorr)[:, None]
        self.innov = np.sqrt(1.0 - self.rho ** 2)
        self.rng = rng
        self.value = self.sigma * rng.standard_normal((n_users, n_sites))

    def advance(self, n_ticks):
        """Return the next ``n_ticks`` samples, shape (n_ticks, U, n_sites)."""
        z = self.rng.standard_normal((n_ticks,) + self.value.shape)
        out = np.empty_like(z)
        v = self.value
        for i in range(n_ticks):
            v = self.rho * v + self.innov * self.sigma * z[i]
            out[i] = v
        self.value = v
        return out
