"""The multi-cell, multi-slice radio world, advanced in radio ticks."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from ..handover import (HoClassifier, HoCounterBook, HoEvent, HoParams, HoTiming,
                        UserHoContext, param_tables, roll_book)
from ..mdp import KpiAggregate, SliceMetrics, StateLayout
from . import kernel
from .channel import compute_sinr, db2lin, rsrp_dbm
from .mobility import Regions, on_probability
from .scenario import ConfigError, ScenarioConfig
from .scheduler import allocate_resources

CHUNK = 200  # ticks per compiled call


@dataclass
class StepResult:
    aggregate: KpiAggregate
    state: np.ndarray
    metrics: SliceMetrics
    book: HoCounterBook


class World:
    """Mutable state of one simulated network.

    Mobility, shadowing and traffic each draw from their own RNG stream, so
    the radio environment seen under different HO parameters is identical
    for a given seed; only cell association differs.
    """

    def __init__(self, config: ScenarioConfig, record_events=False):
        config.validate()
        self.config = cfg = config
        self.boundaries = cfg.boundaries()
        self.layout = StateLayout(cfg.n_cells, self.boundaries, cfg.n_slices)
        ss = np.random.SeedSequence(cfg.rng_seed)
        self._rng_mob, self._rng_shadow, self._rng_traffic = [
            np.random.default_rng(s) for s in ss.spawn(3)]

        groups = cfg.user_groups
        per_user = lambda f, dtype: np.array([f(g) for g in groups for _ in range(g.size)], dtype)  # noqa: E731
        self.user_slice = per_user(lambda g: g.slice, np.int64)
        self.user_group = np.repeat(np.arange(len(groups)), [g.size for g in groups])
        self.demand = per_user(lambda g: g.expected_rate, float)
        speed = per_user(lambda g: g.speed / 3.6, float)
        n = len(self.user_slice)
        n_sites = len(cfg.site_positions)
        self.regions = Regions.from_groups(groups, cfg.playground)
        self.pos = self.regions.sample(np.arange(n), self._rng_mob)
        self.waypoint = self.regions.sample(np.arange(n), self._rng_mob)
        self.shadow = cfg.shadow_sigma * self._rng_shadow.standard_normal((n, n_sites))
        step = speed * cfg.radio_tick
        rho = np.exp(-step / cfg.shadow_decorr)
        self._mob = (self.pos, self.waypoint, step, speed > 0, self.regions.circle,
                     self.regions.center.reshape(n, 2), self.regions.radius, self.regions.box)
        self._shadow_p = (self.shadow, rho, np.sqrt(1.0 - rho ** 2), float(cfg.shadow_sigma))
        self._geo = (np.asarray(cfg.site_positions, float), cfg.cell_site().astype(np.int64),
                     cfg.cell_boresights())
        self._chan = np.array([cfg.tx_power, cfg.pl0, cfg.d0, cfg.n_exp, cfg.min_distance,
                               cfg.antenna_beamwidth, cfg.antenna_max_atten])
        self._sched = np.array([cfg.bandwidth_per_cell, cfg.max_spectral_eff, cfg.packet_size,
                                cfg.queue_delay, cfg.eps_rho])
        self.timing = HoTiming.from_config(cfg)
        self._ho = np.array([self.timing.n_rlf, self.timing.n_exec, self.timing.n_reest,
                             cfg.q_out, db2lin(cfg.noise_floor)])
        self._activity_ticks = max(1, int(round(cfg.activity_period / cfg.radio_tick)))
        self._traffic = np.array([self._activity_ticks, cfg.p_on_min, cfg.p_on_max,
                                  cfg.day_length, cfg.radio_tick, cfg.start_time_of_day])
        self.req_rate = np.array([s.throughput_req for s in cfg.slice_specs], float)
        self.req_latency = np.array([s.latency_req for s in cfg.slice_specs], float)

        self.t = 0
        self.rsrp = (rsrp_dbm(self.pos, cfg, self.shadow) if n
                     else np.zeros((0, cfg.n_cells)))
        self.serving = np.argmax(self.rsrp, axis=1).astype(np.int64) if n else np.zeros(0, np.int64)
        p_on = on_probability(cfg.start_time_of_day, cfg.p_on_min, cfg.p_on_max, cfg.day_length)
        self.active = self._rng_traffic.random(n) < p_on
        self.sinr = compute_sinr(self.rsrp, self.serving, np.ones(cfg.n_cells), cfg.noise_floor) \
            if n else np.zeros(0)
        alloc = allocate_resources(self.serving, self.active, self.sinr, self.demand,
                                   self.user_slice, cfg.n_cells, cfg.n_slices, cfg)
        self.rate, self.latency = alloc.rate, alloc.latency
        self.load, self.users_cs = alloc.load, alloc.n_users
        self.cell_activity = self.load.sum(axis=1)
        self.hold = np.zeros((n, cfg.n_cells), np.int64)
        self.rlf_count = np.zeros(n, np.int64)
        self.exec_left = np.zeros(n, np.int64)
        self.exec_target = np.full(n, -1, np.int64)
        self.reest_left = np.zeros(n, np.int64)

        self.classifier = HoClassifier(self.boundaries.index, cfg.t_crit, cfg.t_pp)
        self.book = HoCounterBook(len(self.boundaries), cfg.n_slices)
        self.contexts = [UserHoContext(int(c), int(s)) for c, s in zip(self.serving, self.user_slice)]
        self.record_events = record_events
        self.events = []
        self._params_key = None
        self.snapshot_every = 0
        self.snapshot_rows = []
        self._reset_accumulators()

    @property
    def n_users(self):
        return len(self.user_slice)

    @property
    def time(self):
        return self.t * self.config.radio_tick

    def _reset_accumulators(self):
        shape = (self.config.n_cells, self.config.n_slices)
        self._acc = tuple(np.zeros(shape) for _ in range(4))  # load, users, tsl, lsl
        self._acc_ticks = 0

    def _set_params(self, params: HoParams):
        key = (params.hom.tobytes(), params.ttt.tobytes())
        if key != self._params_key:
            self._hom, self._need = param_tables(params, self.boundaries, self.config.n_slices,
                                                 self.config.radio_tick)
            self._params_key = key

    def snapshot(self):
        """Copy of the observable state, for determinism checks and export."""
        return dict(t=self.t, pos=self.pos.copy(), waypoint=self.waypoint.copy(),
                    shadow=self.shadow.copy(), serving=self.serving.copy(),
                    active=self.active.copy(), rsrp=self.rsrp.copy(), sinr=self.sinr.copy(),
                    load=self.load.copy())

    def advance(self, n_ticks, params: HoParams):
        """Run ``n_ticks`` radio ticks under fixed HO parameters."""
        self._set_params(params)
        n = self.n_users
        done = 0
        while done < n_ticks:
            m = min(CHUNK, n_ticks - done)
            if self.snapshot_every:
                m = min(m, self.snapshot_every - self.t % self.snapshot_every)
            self._run_chunk(m, n)
            done += m
            if self.snapshot_every and self.t % self.snapshot_every == 0:
                self._record_snapshot()
        return self

    def _run_chunk(self, m, n):
        n_sites = len(self.config.site_positions)
        wp_draws = self._rng_mob.random((m, n, 2))
        sh_draws = self._rng_shadow.standard_normal((m, n, n_sites))
        act_draws = self._rng_traffic.random((m, n))
        ev = np.empty((2 * m * n + 1, 5), np.int64)
        st = (self.serving, self.active, self.hold, self.rlf_count, self.exec_left,
              self.exec_target, self.reest_left, self.cell_activity, self.rsrp, self.sinr,
              self.rate, self.latency, self.load, self.users_cs)
        n_ev = kernel.run_ticks(
            m, self.t, st, self._mob, self._shadow_p, self._geo, self._chan, self._sched,
            self._ho, self._traffic, self._hom, self._need, self.user_slice, self.demand,
            self.req_rate, self.req_latency, wp_draws, sh_draws, act_draws, self._acc, ev)
        self.t += m
        self._acc_ticks += m
        self._charge(ev[:n_ev])

    def _charge(self, ev):
        tick_s = self.config.radio_tick
        clf, book = self.classifier, self.book
        for t, u, kind, src, tgt in ev:
            ctx = self.contexts[u]
            e = HoEvent(t * tick_s, int(u), kernel.EVENT_NAMES[kind], int(src), int(tgt),
                        ctx.slice)
            clf.apply(ctx, e, book)
            if self.record_events:
                self.events.append(e)

    def tick(self, params: HoParams):
        return self.advance(1, params)

    def _record_snapshot(self):
        for u in range(self.n_users):
            self.snapshot_rows.append((
                repr(self.time), u, repr(float(self.pos[u, 0])), repr(float(self.pos[u, 1])),
                int(self.serving[u]), int(self.active[u]), repr(float(self.sinr[u])),
                repr(float(self.rate[u])), repr(float(self.latency[u]))))

    def write_snapshots(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["time", "user", "x", "y", "serving", "active", "sinr_db",
                        "rate_mbps", "latency_ms"])
            w.writerows(self.snapshot_rows)

    def run_agent_step(self, params: HoParams) -> StepResult:
        """Run one agent step worth of ticks with counters reset at its start."""
        self._reset_accumulators()
        self.advance(self.config.ticks_per_agent_step, params)
        closed, self.book = roll_book(self.book, self.contexts)
        n = max(self._acc_ticks, 1)
        load, users, tsl, lsl = (a / n for a in self._acc)
        agg = KpiAggregate(load, users, tsl, lsl, closed.counts.copy(), self.boundaries)
        return StepResult(agg, self.layout.assemble(agg), agg.metrics(), closed)


def build_scenario(config: ScenarioConfig, record_events=False) -> World:
    if not isinstance(config, ScenarioConfig):
        raise ConfigError("expected a ScenarioConfig")
    return World(config, record_events=record_events)


def tick(world: World, params: HoParams) -> World:
    return world.tick(params)


def run_agent_step(world: World, params: HoParams) -> StepResult:
    return world.run_agent_step(params)
