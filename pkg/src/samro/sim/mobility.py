"""Random-waypoint mobility inside per-group regions, and diurnal traffic activity."""

from __future__ import annotations

import numpy as np


class Regions:
    """Mobility region of every user: the playground box or a circle."""

    def __init__(self, playground, circle_mask, centers, radii):
        self.box = np.asarray(playground, float)
        self.circle = np.asarray(circle_mask, bool)
        self.center = np.asarray(centers, float)
        self.radius = np.asarray(radii, float)

    @classmethod
    def from_groups(cls, groups, playground):
        mask, centers, radii = [], [], []
        for g in groups:
            for _ in range(g.size):
                if g.region is None:
                    mask.append(False)
                    centers.append((0.0, 0.0))
                    radii.append(0.0)
                else:
                    mask.append(True)
                    centers.append((g.region.cx, g.region.cy))
                    radii.append(g.region.radius)
        return cls(playground, mask, np.reshape(centers, (-1, 2)), radii)

    def sample(self, users, rng):
        """Uniform point in the region of each listed user."""
        users = np.asarray(users, dtype=int)
        u = rng.random((len(users), 2))
        xmin, ymin, xmax, ymax = self.box
        pts = np.c_[xmin + u[:, 0] * (xmax - xmin), ymin + u[:, 1] * (ymax - ymin)]
        circ = self.circle[users]
        if circ.any():
            r = self.radius[users][circ] * np.sqrt(u[circ, 0])
            th = 2 * np.pi * u[circ, 1]
            pts[circ] = self.center[users][circ] + np.c_[r * np.cos(th), r * np.sin(th)]
        return pts

    def contains(self, pos, tol=1e-6):
        pos = np.asarray(pos, float)
        xmin, ymin, xmax, ymax = self.box
        in_box = ((pos[:, 0] >= xmin - tol) & (pos[:, 0] <= xmax + tol)
                  & (pos[:, 1] >= ymin - tol) & (pos[:, 1] <= ymax + tol))
        d = np.hypot(*(pos - self.center).T)
        in_circle = d <= self.radius + tol
        return np.where(self.circle, in_circle, in_box)


class RandomWaypoint:
    """Constant-speed travel to uniformly drawn waypoints, no pause."""

    def __init__(self, regions, speed_mps, rng):
        self.regions = regions
        self.speed = np.asarray(speed_mps, float)
        self.rng = rng
        n = len(self.speed)
        self.pos = regions.sample(np.arange(n), rng)
        self.waypoint = regions.sample(np.arange(n), rng)
        self.moving = self.speed > 0

    def advance(self, n_ticks, dt):
        """Move ``n_ticks`` ticks; returns positions after each tick, (T, U, 2)."""
        out = np.empty((n_ticks,) + self.pos.shape)
        step = self.speed * dt
        for i in range(n_ticks):
            vec = self.waypoint - self.pos
            dist = np.hypot(vec[:, 0], vec[:, 1])
            arrive = self.moving & (dist <= step)
            go = self.moving & ~arrive
            self.pos[go] += vec[go] * (step[go] / dist[go])[:, None]
            if arrive.any():
                who = np.flatnonzero(arrive)
                self.pos[who] = self.waypoint[who]
                self.waypoint[who] = self.regions.sample(who, self.rng)
            out[i] = self.pos
        return out


def on_probability(t_seconds, p_min, p_max, day_length):
    """Sinusoidal daily profile: p_min at midnight, p_max at midday."""
    phase = 2 * np.pi * np.asarray(t_seconds, float) / day_length
    return p_min + (p_max - p_min) * 0.5 * (1.0 - np.cos(phase))
