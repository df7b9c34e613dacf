"""Scenario description for the multi-cell, multi-slice radio environment."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Optional

import numpy as np


class ConfigError(ValueError):
    """Raised for an invalid scenario or experiment configuration."""


@dataclass(frozen=True)
class SliceSpec:
    throughput_req: float  # Mbit/s
    latency_req: float = 1.0  # ms
    name: str = ""

    def __post_init__(self):
        if not (self.throughput_req > 0 and self.latency_req > 0):
            raise ConfigError(f"slice requirements must be positive: {self}")


@dataclass(frozen=True)
class Circle:
    cx: float
    cy: float
    radius: float


@dataclass(frozen=True)
class UserGroupSpec:
    size: int
    slice: int
    expected_rate: float  # Mbit/s
    speed: float  # km/h
    region: Optional[Circle] = None  # None -> whole playground
    name: str = ""

    def __post_init__(self):
        if self.size < 0 or self.speed < 0:
            raise ConfigError(f"group size and speed must be non-negative: {self}")


def _default_slices():
    return [SliceSpec(5.0, 1.0, "video"), SliceSpec(3.0, 1.0, "http")]


def _default_groups():
    return [
        UserGroupSpec(25, 0, 5.0, 6.0, None, "group1"),
        UserGroupSpec(25, 1, 3.0, 3.0, None, "group2"),
        UserGroupSpec(8, 0, 5.0, 3.0, Circle(250.0, 130.0, 60.0), "hotspot1"),
        UserGroupSpec(8, 0, 5.0, 3.0, Circle(560.0, 300.0, 60.0), "hotspot2"),
    ]


@dataclass
class ScenarioConfig:
    """All knobs of the simulated network.

    Distances are meters, powers dBm/dB, times seconds unless the field name
    says otherwise.
    """

    n_cells: int = 9
    n_slices: int = 2
    site_positions: list = field(
        default_factory=lambda: [(0.0, 0.0), (500.0, 100.0), (380.0, 350.0)])
    sectors_per_site: int = 3
    sector_boresights: tuple = (30.0, 150.0, 270.0)  # degrees
    playground: tuple = (-200.0, -200.0, 700.0, 550.0)  # xmin, ymin, xmax, ymax
    carrier_freq: float = 2.4  # GHz, informational only for the log-distance model
    bandwidth_per_cell: float = 10.0  # MHz
    tx_power: float = 46.0
    noise_floor: float = -97.0
    user_groups: list = field(default_factory=_default_groups)
    slice_specs: list = field(default_factory=_default_slices)
    radio_tick: float = 0.1
    ticks_per_agent_step: int = 9000
    rng_seed: int = 0

    # propagation
    pl0: float = 40.0
    d0: float = 10.0
    n_exp: float = 3.5
    shadow_sigma: float = 6.0
    shadow_decorr: float = 25.0
    min_distance: float = 1.0
    antenna_beamwidth: float = 65.0  # 3 dB beamwidth, degrees
    antenna_max_atten: float = 20.0

    # neighbour relations
    cell_ref_offset: float = 150.0
    neighbor_threshold: float = 320.0
    neighbor_pairs: Optional[list] = None  # explicit unordered pairs override the rule

    # link / scheduler
    max_spectral_eff: float = 6.0  # bit/s/Hz
    packet_size: float = 12.0  # kbit
    queue_delay: float = 0.2  # ms, d_0 of the load-dependent delay term
    eps_rho: float = 0.01

    # handover / RLF
    q_out: float = -8.0  # dB
    t_rlf: float = 1.0
    t_crit: float = 1.0
    t_pp: float = 2.0
    ho_exec_delay: float = 0.05
    reest_delay: float = 0.2

    # traffic
    p_on_min: float = 0.3
    p_on_max: float = 1.0
    day_length: float = 86400.0
    activity_period: float = 60.0
    start_time_of_day: float = 8 * 3600.0

    def __post_init__(self):
        self.site_positions = [tuple(map(float, p)) for p in self.site_positions]
        self.validate()

    def validate(self):
        if self.sectors_per_site < 1 or not self.site_positions:
            raise ConfigError("need at least one site with one sector")
        if self.n_cells != len(self.site_positions) * self.sectors_per_site:
            raise ConfigError(
                f"n_cells={self.n_cells} but {len(self.site_positions)} sites x "
                f"{self.sectors_per_site} sectors")
        if len(self.sector_boresights) != self.sectors_per_site:
            raise ConfigError("one boresight per sector required")
        if self.n_slices < 1 or len(self.slice_specs) != self.n_slices:
            raise ConfigError("slice_specs must list exactly n_slices entries")
        if self.radio_tick <= 0:
            raise ConfigError("radio_tick must be > 0")
        if self.ticks_per_agent_step < 1:
            raise ConfigError("ticks_per_agent_step must be >= 1")
        if self.bandwidth_per_cell <= 0 or self.d0 <= 0 or self.min_distance <= 0:
            raise ConfigError("bandwidth, d0 and min_distance must be > 0")
        xmin, ymin, xmax, ymax = self.playground
        if not (xmax > xmin and ymax > ymin):
            raise ConfigError("empty playground")
        for g in self.user_groups:
            if not 0 <= g.slice < self.n_slices:
                raise ConfigError(f"group {g.name!r} references slice {g.slice}")
            if g.region is not None and g.region.radius <= 0:
                raise ConfigError(f"group {g.name!r} has a non-positive region radius")
        if not 0 <= self.p_on_min <= self.p_on_max <= 1:
            raise ConfigError("need 0 <= p_on_min <= p_on_max <= 1")

    @property
    def n_users(self) -> int:
        return sum(g.size for g in self.user_groups)

    @property
    def agent_step_seconds(self) -> float:
        return self.ticks_per_agent_step * self.radio_tick

    def cell_site(self) -> np.ndarray:
        return np.repeat(np.arange(len(self.site_positions)), self.sectors_per_site)

    def cell_positions(self) -> np.ndarray:
        """Antenna position of every cell (sectors share their site position)."""
        return np.repeat(np.asarray(self.site_positions, float), self.sectors_per_site, axis=0)

    def cell_boresights(self) -> np.ndarray:
        return np.deg2rad(np.tile(np.asarray(self.sector_boresights, float),
                                  len(self.site_positions)))

    def cell_pairs(self) -> list:
        """Unordered neighbour pairs (n, m), n < m, in lexicographic order."""
        if self.neighbor_pairs is not None:
            pairs = sorted({tuple(sorted((int(a), int(b)))) for a, b in self.neighbor_pairs})
            for a, b in pairs:
                if a == b or not (0 <= a < self.n_cells and 0 <= b < self.n_cells):
                    raise ConfigError(f"invalid neighbour pair {(a, b)}")
            return pairs
        site = self.cell_site()
        bore = self.cell_boresights()
        ref = self.cell_positions() + self.cell_ref_offset * np.c_[np.cos(bore), np.sin(bore)]
        pairs = []
        for n, m in itertools.combinations(range(self.n_cells), 2):
            if site[n] == site[m] or np.hypot(*(ref[n] - ref[m])) <= self.neighbor_threshold:
                pairs.append((n, m))
        return pairs

    def boundaries(self) -> "BoundarySet":
        return BoundarySet.from_pairs(self.cell_pairs(), self.n_cells)


@dataclass(frozen=True)
class BoundarySet:
    """Directional cell boundaries B and the unordered pair set B'."""

    n_cells: int
    directed: tuple  # (n, m) in lexicographic order
    pairs: tuple  # (n, m), n < m, lexicographic

    @classmethod
    def from_pairs(cls, pairs, n_cells):
        pairs = tuple(sorted({tuple(sorted(p)) for p in pairs}))
        directed = tuple(sorted(pairs + tuple((m, n) for n, m in pairs)))
        return cls(n_cells, directed, pairs)

    def __post_init__(self):
        ds = set(self.directed)
        for n, m in self.directed:
            if n == m or (m, n) not in ds:
                raise ConfigError(f"boundary set not symmetric at {(n, m)}")
        if 2 * len(self.pairs) != len(self.directed):
            raise ConfigError("|B'| must equal |B|/2")

    def __len__(self):
        return len(self.directed)

    @property
    def index(self) -> dict:
        return {b: i for i, b in enumerate(self.directed)}

    def pair_index(self) -> np.ndarray:
        """For each directed boundary, the index of its unordered pair."""
        pidx = {p: i for i, p in enumerate(self.pairs)}
        return np.array([pidx[tuple(sorted(b))] for b in self.directed], dtype=int)

    def matrix(self) -> np.ndarray:
        """(N, N) array holding the directed-boundary index, -1 where absent."""
        out = np.full((self.n_cells, self.n_cells), -1, dtype=int)
        for i, (n, m) in enumerate(self.directed):
            out[n, m] = i
        return out


def desk_scenario(**overrides) -> ScenarioConfig:
    """Full-size network with 60 s agent steps."""
    kw = dict(ticks_per_agent_step=600)
    kw.update(overrides)
    return ScenarioConfig(**kw)


def full_scenario(**overrides) -> ScenarioConfig:
    """Full-size network with 900 s (15 min) agent steps."""
    kw = dict(ticks_per_agent_step=9000)
    kw.update(overrides)
    return ScenarioConfig(**kw)
