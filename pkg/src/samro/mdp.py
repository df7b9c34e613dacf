"""HO and service metrics, the scaled reward, and the network state vector."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .handover import COUNTER_NAMES, HOA, HOE, HOL, HOPP, HOS, HOW

STATE_CELL_FEATURES = ("load", "users", "tsl", "lsl")
STATE_PAIR_FEATURES = ("HOA", "HOS", "HOL", "HOPP")
_PAIR_COLS = (HOA, HOS, HOL, HOPP)


def _counts(book):
    return getattr(book, "counts", book)


def _ratio(num, den):
    return float(num) / float(den) if den > 0 else 0.0


def hfr(book, s):
    """Handover failure ratio of slice ``s`` summed over all boundaries; 0 if no attempts."""
    c = _counts(book)[:, s]
    return _ratio(c[:, HOL].sum() + c[:, HOE].sum() + c[:, HOW].sum(), c[:, HOA].sum())


def ppr(book, s):
    """Ping-pong ratio of slice ``s``; 0 if no successful HO."""
    c = _counts(book)[:, s]
    return _ratio(c[:, HOPP].sum(), c[:, HOS].sum())


def user_service_levels(rate, latency, slice_spec):
    """Throughput and latency service levels of users of one slice, capped at 1."""
    rate = np.asarray(rate, float)
    latency = np.asarray(latency, float)
    if np.any(latency <= 0) or slice_spec.throughput_req <= 0:
        raise ValueError("latency and throughput requirement must be positive")
    tsl = np.minimum(rate / slice_spec.throughput_req, 1.0)
    lsl = np.minimum(slice_spec.latency_req / latency, 1.0)
    return tsl, lsl


def slice_service_levels(tsl_sums, lsl_sums, user_counts):
    """Area-wide slice TSL and LSL from per-cell sums; 0 when the slice has no users."""
    k = float(np.sum(user_counts))
    if k <= 0:
        return 0.0, 0.0
    return float(np.sum(tsl_sums)) / k, float(np.sum(lsl_sums)) / k


@dataclass
class SliceMetrics:
    hfr: np.ndarray
    ppr: np.ndarray
    tsl: np.ndarray
    lsl: np.ndarray

    @property
    def n_slices(self):
        return len(self.hfr)

    def as_rows(self):
        return [dict(slice=s, hfr=self.hfr[s], ppr=self.ppr[s], tsl=self.tsl[s], lsl=self.lsl[s])
                for s in range(self.n_slices)]


@dataclass
class RewardConfig:
    w_tsl: tuple = (1.0, 1.0)
    w_lsl: tuple = (1.0, 1.0)
    w_hfr: tuple = (1.0, 1.0)
    w_ppr: tuple = (0.3, 0.3)
    scale: float = 5.0
    normalize_slices: bool = True

    def __post_init__(self):
        ws = np.r_[self.w_tsl, self.w_lsl, self.w_hfr, self.w_ppr]
        if np.any(ws < 0) or self.scale <= 0:
            raise ValueError("reward weights must be >= 0 and scale > 0")

    def for_slices(self, n):
        """Same weights broadcast to ``n`` slices (first entry of each)."""
        pick = lambda w: tuple([np.atleast_1d(w)[0]] * n)  # noqa: E731
        return RewardConfig(pick(self.w_tsl), pick(self.w_lsl), pick(self.w_hfr),
                            pick(self.w_ppr), self.scale, self.normalize_slices)

    def bounds(self):
        s = len(self.w_tsl)
        norm = s if self.normalize_slices else 1
        hi = self.scale * (np.sum(self.w_tsl) + np.sum(self.w_lsl)) / norm
        lo = -self.scale * (np.sum(self.w_hfr) + np.sum(self.w_ppr)) / norm
        return lo, hi


def reward(metrics: SliceMetrics, cfg: RewardConfig) -> float:
    w = [np.asarray(x, float)[: metrics.n_slices] for x in (cfg.w_tsl, cfg.w_lsl, cfg.w_hfr, cfg.w_ppr)]
    total = (w[0] @ metrics.tsl + w[1] @ metrics.lsl - w[2] @ metrics.hfr - w[3] @ metrics.ppr)
    norm = metrics.n_slices if cfg.normalize_slices else 1
    return float(cfg.scale * total / norm)


@dataclass
class KpiAggregate:
    """Everything one agent step reports (Table-1 inputs plus raw counts).

    Per-cell arrays are (N, S) time averages over the step; ``counts`` is the
    (B, S, 6) counter array of the step's HO book.
    """

    load: np.ndarray
    users: np.ndarray
    tsl_sum: np.ndarray
    lsl_sum: np.ndarray
    counts: np.ndarray
    boundaries: object = field(repr=False)

    @property
    def n_slices(self):
        return self.load.shape[1]

    def metrics(self) -> SliceMetrics:
        s_range = range(self.n_slices)
        levels = [slice_service_levels(self.tsl_sum[:, s], self.lsl_sum[:, s], self.users[:, s])
                  for s in s_range]
        return SliceMetrics(
            hfr=np.array([hfr(self.counts, s) for s in s_range]),
            ppr=np.array([ppr(self.counts, s) for s in s_range]),
            tsl=np.array([lv[0] for lv in levels]),
            lsl=np.array([lv[1] for lv in levels]),
        )

    def merged_slices(self) -> "KpiAggregate":
        """Slice-agnostic view (one pseudo-slice), as a legacy MRO agent sees it."""
        return KpiAggregate(
            self.load.sum(1, keepdims=True), self.users.sum(1, keepdims=True),
            self.tsl_sum.sum(1, keepdims=True), self.lsl_sum.sum(1, keepdims=True),
            self.counts.sum(1, keepdims=True), self.boundaries)


class StateLayout:
    """Canonical layout of the (4N + 2B) S state vector."""

    def __init__(self, n_cells, boundaries, n_slices):
        self.n_cells = n_cells
        self.boundaries = boundaries
        self.n_slices = n_slices
        self.n_pairs = len(boundaries.pairs)
        self.pair_of = boundaries.pair_index()

    @property
    def dim(self):
        return (4 * self.n_cells + 2 * len(self.boundaries)) * self.n_slices

    @property
    def cell_block(self):
        return 4 * self.n_cells * self.n_slices

    def columns(self, prefix="s"):
        cols = [f"{prefix}_c{n}_s{s}_{f}" for n in range(self.n_cells)
                for s in range(self.n_slices) for f in STATE_CELL_FEATURES]
        cols += [f"{prefix}_p{a}-{b}_s{s}_{f}" for a, b in self.boundaries.pairs
                 for s in range(self.n_slices) for f in STATE_PAIR_FEATURES]
        return cols

    def pair_counts(self, counts):
        """Sum directional counts onto unordered pairs: (P, S, 4)."""
        out = np.zeros((self.n_pairs, self.n_slices, 4))
        np.add.at(out, self.pair_of, np.asarray(counts, float)[..., _PAIR_COLS])
        return out

    def assemble(self, agg: KpiAggregate) -> np.ndarray:
        cell = np.stack([agg.load, agg.users, agg.tsl_sum, agg.lsl_sum], axis=-1)
        if cell.shape != (self.n_cells, self.n_slices, 4):
            raise ValueError(f"aggregate shape {cell.shape} does not fit the layout")
        vec = np.concatenate([cell.ravel(), self.pair_counts(agg.counts).ravel()])
        if vec.shape != (self.dim,):
            raise ValueError("state dimension mismatch")
        return vec

    def split(self, vec):
        """Inverse of :meth:`assemble`: (cell block (N, S, 4), pair block (P, S, 4))."""
        vec = np.asarray(vec, float)
        if vec.shape != (self.dim,):
            raise ValueError("state dimension mismatch")
        cell = vec[: self.cell_block].reshape(self.n_cells, self.n_slices, 4)
        pair = vec[self.cell_block:].reshape(self.n_pairs, self.n_slices, 4)
        return cell, pair

    def scale_vector(self, count_cap=50.0):
        """Divisors used to condition states for the networks (loads unscaled)."""
        cell = np.tile([1.0, count_cap, count_cap, count_cap], self.n_cells * self.n_slices)
        pair = np.full(self.n_pairs * self.n_slices * 4, count_cap)
        return np.concatenate([cell, pair])


def assemble_state(agg: KpiAggregate) -> np.ndarray:
    return StateLayout(agg.load.shape[0], agg.boundaries, agg.n_slices).assemble(agg)


def counter_columns(boundaries, n_slices):
    return [f"b{n}-{m}_s{s}_{k}" for n, m in boundaries.directed
            for s in range(n_slices) for k in COUNTER_NAMES]
