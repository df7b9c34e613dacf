"""The gridded HO-parameter action space.

An action holds one (HOM, TTT) pair per directed boundary and slice, laid
out boundary-major, then slice, then HOM before TTT. The actor works on
the unit box; :class:`ActionGrid` converts between that box, continuous
"proto" actions and on-grid operating actions.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .handover import HoParams

HOM_VALUES = tuple(range(-5, 6))
TTT_VALUES = (40, 64, 80, 100, 128, 160, 256, 320, 480, 512, 640, 1024, 1280, 2560, 5120)
DEFAULT_HOM = 0.0
DEFAULT_TTT = 512.0
EXACT_HIT = 1e-9


def _check_set(values, name):
    v = np.asarray(values, float)
    if v.ndim != 1 or v.size == 0:
        raise ValueError(f"{name} grid must be a non-empty list")
    if np.any(np.diff(v) <= 0):
        raise ValueError(f"{name} grid must be strictly ascending")
    return v


@dataclass
class ActionGrid:
    """Value sets and layout of a (2 * n_boundaries * n_slices)-dim action."""

    n_boundaries: int
    n_slices: int
    hom_values: np.ndarray = field(default_factory=lambda: np.array(HOM_VALUES, float))
    ttt_values: np.ndarray = field(default_factory=lambda: np.array(TTT_VALUES, float))

    def __post_init__(self):
        if self.n_boundaries < 1 or self.n_slices < 1:
            raise ValueError("need at least one boundary and one slice")
        self.hom_values = _check_set(self.hom_values, "HOM")
        self.ttt_values = _check_set(self.ttt_values, "TTT")
        half = self.n_boundaries * self.n_slices
        self.lo = np.tile([self.hom_values[0], self.ttt_values[0]], half)
        self.hi = np.tile([self.hom_values[-1], self.ttt_values[-1]], half)

    @property
    def dim(self):
        return 2 * self.n_boundaries * self.n_slices

    @property
    def sets(self):
        return self.hom_values, self.ttt_values

    def columns(self, boundaries=None, prefix="a"):
        names = ([f"{n}-{m}" for n, m in boundaries.directed] if boundaries is not None
                 else [str(b) for b in range(self.n_boundaries)])
        return [f"{prefix}_b{b}_s{s}_{p}" for b in names for s in range(self.n_slices)
                for p in ("hom", "ttt")]

    def _check(self, a):
        a = np.asarray(a, float)
        if a.shape[-1] != self.dim:
            raise ValueError(f"action width {a.shape[-1]} != {self.dim}")
        return a

    # -- representations -----------------------------------------------
    def normalize(self, action):
        a = self._check(action)
        return 2.0 * (a - self.lo) / (self.hi - self.lo) - 1.0

    def denormalize(self, unit):
        u = self._check(unit)
        return self.lo + 0.5 * (u + 1.0) * (self.hi - self.lo)

    def clip(self, action):
        return np.clip(self._check(action), self.lo, self.hi)

    def default(self, hom=DEFAULT_HOM, ttt=DEFAULT_TTT):
        return np.tile([float(hom), float(ttt)], self.n_boundaries * self.n_slices)

    def on_grid(self, action):
        a = self._check(action)
        return bool(np.all(np.isin(a[..., 0::2], self.hom_values))
                    and np.all(np.isin(a[..., 1::2], self.ttt_values)))

    def to_params(self, action) -> HoParams:
        return HoParams.from_vector(self._check(action), self.n_boundaries, self.n_slices)

    def replicate(self, action, n_slices):
        """Copy a single-slice action into every one of ``n_slices`` slices."""
        if self.n_slices != 1:
            raise ValueError("only a slice-agnostic action can be replicated")
        a = self._check(action).reshape(self.n_boundaries, 1, 2)
        return np.repeat(a, n_slices, axis=1).reshape(-1)

    # -- per-set helpers -----------------------------------------------
    def _per_set(self, a, fn, *args):
        out = np.empty_like(a)
        out[..., 0::2] = fn(a[..., 0::2], self.hom_values, *args)
        out[..., 1::2] = fn(a[..., 1::2], self.ttt_values, *args)
        return out


def _snap(v, grid):
    if len(grid) == 1:
        return np.full(v.shape, grid[0])
    i = np.clip(np.searchsorted(grid, v), 1, len(grid) - 1)
    lower, upper = grid[i - 1], grid[i]
    out = np.where(upper - v < v - lower, upper, lower)  # exact midpoint -> smaller value
    return np.clip(out, grid[0], grid[-1])


def snap_nearest(proto, grid: ActionGrid):
    """Nearest grid value per dimension; exact midpoints go to the smaller value."""
    return grid._per_set(grid._check(proto), _snap)


def _neighbor_draw(v, values, u):
    """Reciprocal-distance choice between the grid values bracketing ``v``."""
    n = len(values)
    idx = np.clip(np.searchsorted(values, v, side="right"), 1, max(n - 1, 1))
    lower = values[idx - 1]
    upper = values[np.minimum(idx, n - 1)]
    d_lo = np.abs(v - lower)
    d_hi = np.abs(upper - v)
    with np.errstate(divide="ignore", invalid="ignore"):
        nu_lo = 1.0 / d_lo
        nu_hi = 1.0 / d_hi
        p_up = nu_hi / (nu_hi + nu_lo)
    p_up = np.where(d_lo < EXACT_HIT, 0.0, np.where(d_hi < EXACT_HIT, 1.0, p_up))
    out = np.where(u < p_up, upper, lower)
    out = np.where(v <= values[0], values[0], out)
    return np.where(v >= values[-1], values[-1], out)


def neighbor_probabilities(value, values):
    """(lower, upper, p_upper) used by :func:`k_neighbors` for one scalar."""
    values = np.asarray(values, float)
    if value <= values[0]:
        return values[0], values[0], 0.0
    if value >= values[-1]:
        return values[-1], values[-1], 1.0
    i = int(np.searchsorted(values, value, side="right"))
    lo, hi = values[i - 1], values[i]
    if value - lo < EXACT_HIT:
        return lo, hi, 0.0
    if hi - value < EXACT_HIT:
        return lo, hi, 1.0
    nu_lo, nu_hi = 1.0 / (value - lo), 1.0 / (hi - value)
    return lo, hi, nu_hi / (nu_hi + nu_lo)


def k_neighbors(proto, k, grid: ActionGrid, rng):
    """Draw ``k`` on-grid actions around ``proto``; returns an array (k, dim).

    Each dimension independently picks the grid value above the proto value
    with probability proportional to the reciprocal of its distance, else
    the value below. Values outside the grid range snap to the nearest end.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    proto = grid._check(proto)
    u = rng.random((k, grid.dim))
    out = np.empty((k, grid.dim))
    out[:, 0::2] = _neighbor_draw(proto[0::2], grid.hom_values, u[:, 0::2])
    out[:, 1::2] = _neighbor_draw(proto[1::2], grid.ttt_values, u[:, 1::2])
    return out


def project(state, proto, k, grid: ActionGrid, q_evaluator, rng, batched=False):
    """Pick the candidate with the best Q estimate among ``k`` sampled neighbours.

    ``q_evaluator(state, action)`` returns a scalar; with ``batched=True`` it
    receives all candidates as a (k, dim) array and returns k values. Ties
    go to the lowest candidate index.
    """
    cands = k_neighbors(proto, k, grid, rng)
    if k == 1:
        return cands[0]
    if batched:
        q = np.asarray(q_evaluator(state, cands), float).reshape(-1)
    else:
        q = np.array([float(q_evaluator(state, a)) for a in cands])
    return cands[int(np.argmax(q))]


def _cell_bounds(values):
    """Snapping cell (low, high] of every grid value; the first cell is closed."""
    mids = 0.5 * (values[1:] + values[:-1])
    low = np.r_[values[0], mids]
    high = np.r_[mids, values[-1]]
    return low, high


def augment_continuous(action, k, grid: ActionGrid, rng):
    """``k`` continuous actions, each of which snaps back to ``action``.

    Every dimension is drawn uniformly from the snapping cell of its grid
    value. Returns an array (k, dim).
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    action = grid._check(action)
    if not grid.on_grid(action):
        raise ValueError("augmentation needs an on-grid action")
    low = np.empty(grid.dim)
    high = np.empty(grid.dim)
    for sl, values in ((slice(0, None, 2), grid.hom_values), (slice(1, None, 2), grid.ttt_values)):
        lo, hi = _cell_bounds(values)
        j = np.searchsorted(values, action[sl])
        low[sl], high[sl] = lo[j], hi[j]
    u = rng.random((k, grid.dim))
    out = high - u * (high - low)  # u in [0, 1) gives (low, high]
    # rounding can land exactly on a lower midpoint; fall back to the grid value there
    bad = snap_nearest(out, grid) != action
    return np.where(bad, action, out)
