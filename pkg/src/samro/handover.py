"""Slice-specific handover state machine, RLF detection and HO event accounting.

The world's compiled tick loop produces a raw event log (trigger, completion,
RLF, re-establishment). :class:`HoClassifier` turns events into counts; the
same classifier replays exported traces. :func:`process_user_tick` is the
plain-Python single-user reference of the tick loop's HO logic.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

# column order of HoCounterBook.counts
HOA, HOS, HOL, HOE, HOW, HOPP = range(6)
COUNTER_NAMES = ("HOA", "HOS", "HOL", "HOE", "HOW", "HOPP")


def ticks_for(duration_ms, tick_ms):
    """Number of samples a duration spans, rounded to the nearest tick (min 1)."""
    return max(1, int(math.floor(duration_ms / tick_ms + 0.5)))


def evaluate_criterion(p_serving, p_target, hom_db, ttt_ms, sample_ms):
    """True iff ``p_target > p_serving + hom`` on every sample of the trailing
    TTT window.

    ``p_serving`` and ``p_target`` are RSRP histories (dBm, oldest first)
    sampled every ``sample_ms``; the newest sample is the evaluation instant.
    A history shorter than the window cannot have satisfied the condition.
    """
    p_serving = np.asarray(p_serving, float)
    p_target = np.asarray(p_target, float)
    need = ticks_for(ttt_ms, sample_ms)
    if len(p_serving) < need or len(p_target) < need:
        return False
    return bool(np.all(p_target[-need:] > p_serving[-need:] + hom_db))


def detect_rlf(sinr_history, q_out_db, t_rlf_s, sample_s):
    """True iff the trailing ``t_rlf_s`` of SINR samples are all below Q_out."""
    sinr = np.asarray(sinr_history, float)
    need = ticks_for(t_rlf_s, sample_s)
    if len(sinr) < need:
        return False
    return bool(np.all(sinr[-need:] < q_out_db))


class HoParams(NamedTuple):
    """HOM (dB) and TTT (ms) per directed boundary and slice, shape (B, S)."""

    hom: np.ndarray
    ttt: np.ndarray

    @classmethod
    def from_vector(cls, vec, n_boundaries, n_slices):
        v = np.asarray(vec, float).reshape(n_boundaries, n_slices, 2)
        return cls(v[..., 0].copy(), v[..., 1].copy())

    @classmethod
    def uniform(cls, hom, ttt, n_boundaries, n_slices):
        shape = (n_boundaries, n_slices)
        return cls(np.full(shape, float(hom)), np.full(shape, float(ttt)))


class HoCounterBook:
    """Per directed boundary, per slice HO event counts.

    ``in_flight`` tracks attempts triggered but not yet resolved, so that
    ``HOA == HOS + HOL + HOE + HOW + in_flight`` holds at every instant.
    """

    def __init__(self, n_boundaries, n_slices, epoch=0):
        self.counts = np.zeros((n_boundaries, n_slices, 6), dtype=np.int64)
        self.in_flight = np.zeros((n_boundaries, n_slices), dtype=np.int64)
        self.epoch = epoch

    @property
    def shape(self):
        return self.counts.shape[:2]

    def __getitem__(self, name):
        return self.counts[..., COUNTER_NAMES.index(name)]

    def add(self, kind, b, s, n=1):
        self.counts[b, s, kind] += n

    def identity_residual(self):
        c = self.counts
        return c[..., HOA] - c[..., HOS] - c[..., HOL] - c[..., HOE] - c[..., HOW] - self.in_flight

    def check(self):
        c = self.counts
        assert (c >= 0).all(), "negative HO count"
        assert (self.identity_residual() == 0).all(), "HOA identity violated"
        assert (c[..., HOPP] <= c[..., HOS]).all(), "HOPP exceeds HOS"

    def copy(self):
        out = HoCounterBook(*self.shape, epoch=self.epoch)
        out.counts = self.counts.copy()
        out.in_flight = self.in_flight.copy()
        return out

    def __eq__(self, other):
        return (isinstance(other, HoCounterBook)
                and np.array_equal(self.counts, other.counts)
                and np.array_equal(self.in_flight, other.in_flight))

    def __repr__(self):
        tot = self.counts.sum(axis=(0, 1))
        return "HoCounterBook(" + ", ".join(
            f"{k}={v}" for k, v in zip(COUNTER_NAMES, tot)) + ")"


@dataclass
class HoRecord:
    source: int
    target: int
    time: float  # trigger time while executing, completion time afterwards
    epoch: int
    pingpong: bool = False


@dataclass
class UserHoContext:
    serving: int
    slice: int = 0
    executing: Optional[HoRecord] = None
    last_ho: Optional[HoRecord] = None
    # set on RLF until re-establishment: (time, cell at RLF, recent HO or None, already charged)
    rlf: Optional[tuple] = None
    # tick timers, only used by process_user_tick
    hold: Optional[np.ndarray] = None
    rlf_count: int = 0
    exec_left: int = 0
    reest_left: int = 0


@dataclass
class HoEvent:
    time: float
    user: int
    event: str  # TRIGGER | COMPLETE | RLF | REESTABLISH
    source: int = -1
    target: int = -1
    slice: int = 0


class HoClassifier:
    """Charges HO events to a counter book.

    Rules (windows in seconds):

    * trigger n->m: HOA on (n, m); if the last completed HO was m->n within
      ``t_pp``, one HOPP on (m, n).
    * completion: HOS on (n, m).
    * RLF while executing n->m: HOL on (n, m).
    * RLF within ``t_crit`` of a completed n->m, re-established on n: the HO
      becomes HOE on (n, m); on a third cell: HOW on (n, m); on m: not a HO
      failure.
    * any other RLF: HOL (plus its attempt) on (serving, re-establishment cell)
      when that boundary exists; otherwise nothing is charged.
    """

    def __init__(self, boundary_index, t_crit=1.0, t_pp=2.0):
        self.bidx = dict(boundary_index)
        self.t_crit = t_crit
        self.t_pp = t_pp
        self.uncounted = 0

    def trigger(self, ctx, t, target, book):
        n, s = ctx.serving, ctx.slice
        b = self.bidx[(n, target)]
        book.add(HOA, b, s)
        book.in_flight[b, s] += 1
        last = ctx.last_ho
        if (last is not None and last.source == target and last.target == n
                and not last.pingpong and last.epoch == book.epoch
                and t - last.time <= self.t_pp):
            last.pingpong = True
            book.add(HOPP, self.bidx[(last.source, last.target)], s)
        ctx.executing = HoRecord(n, target, t, book.epoch)

    def complete(self, ctx, t, book):
        ho, s = ctx.executing, ctx.slice
        b = self.bidx[(ho.source, ho.target)]
        book.in_flight[b, s] -= 1
        book.add(HOS, b, s)
        ctx.executing = None
        ctx.serving = ho.target
        ctx.last_ho = HoRecord(ho.source, ho.target, t, book.epoch)

    def rlf(self, ctx, t, book):
        s = ctx.slice
        if ctx.executing is not None:
            ho = ctx.executing
            b = self.bidx[(ho.source, ho.target)]
            book.in_flight[b, s] -= 1
            book.add(HOL, b, s)
            ctx.executing = None
            ctx.rlf = (t, ctx.serving, None, True)
        else:
            last = ctx.last_ho
            recent = last if last is not None and t - last.time <= self.t_crit else None
            ctx.rlf = (t, ctx.serving, recent, False)
        ctx.serving = -1

    def reestablish(self, ctx, t, cell, book):
        _, lost, recent, charged = ctx.rlf
        s = ctx.slice
        ctx.rlf = None
        ctx.serving = cell
        ctx.last_ho = None
        if charged:
            return
        if recent is not None:
            if cell == recent.target:
                return
            kind = HOE if cell == recent.source else HOW
            b = self.bidx[(recent.source, recent.target)]
            if recent.epoch == book.epoch:
                book.add(HOS, b, s, -1)
            else:
                book.add(HOA, b, s)
            book.add(kind, b, s)
            return
        if cell == lost:
            return
        b = self.bidx.get((lost, cell))
        if b is None:
            self.uncounted += 1
            return
        book.add(HOA, b, s)
        book.add(HOL, b, s)

    def apply(self, ctx, ev, book):
        """Dispatch one :class:`HoEvent`."""
        if ev.event == "TRIGGER":
            self.trigger(ctx, ev.time, ev.target, book)
        elif ev.event == "COMPLETE":
            self.complete(ctx, ev.time, book)
        elif ev.event == "RLF":
            self.rlf(ctx, ev.time, book)
        elif ev.event == "REESTABLISH":
            self.reestablish(ctx, ev.time, ev.target, book)
        else:
            raise ValueError(f"unknown HO event {ev.event!r}")


def roll_book(book, contexts):
    """Close ``book`` and return ``(closed, fresh)``.

    Attempts still executing move to the fresh book, so both books satisfy
    the count identity on their own.
    """
    fresh = HoCounterBook(*book.shape, epoch=book.epoch + 1)
    carried = book.in_flight.copy()
    book.counts[..., HOA] -= carried
    book.in_flight[:] = 0
    fresh.counts[..., HOA] += carried
    fresh.in_flight[:] = carried
    for c in contexts:
        if c.executing is not None:
            c.executing.epoch = fresh.epoch
    return book, fresh


def replay_trace(events, boundary_index, n_boundaries, n_slices, initial_cells,
                 user_slices, t_crit=1.0, t_pp=2.0):
    """Replay an event trace through a fresh classifier into a new book."""
    clf = HoClassifier(boundary_index, t_crit, t_pp)
    book = HoCounterBook(n_boundaries, n_slices)
    ctxs = {u: UserHoContext(c, user_slices[u]) for u, c in initial_cells.items()}
    for ev in events:
        clf.apply(ctxs[ev.user], ev, book)
    return book


def write_trace_csv(events, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["time", "user", "event", "source", "target", "slice"])
        for e in events:
            w.writerow([repr(float(e.time)), e.user, e.event, e.source, e.target, e.slice])


def read_trace_csv(path):
    with open(path, newline="") as fh:
        return [HoEvent(float(r["time"]), int(r["user"]), r["event"], int(r["source"]),
                        int(r["target"]), int(r["slice"])) for r in csv.DictReader(fh)]


@dataclass
class HoTiming:
    """Tick counts derived from the time constants of a scenario."""

    n_rlf: int
    n_exec: int
    n_reest: int
    q_out: float

    @classmethod
    def from_config(cls, cfg):
        tick = cfg.radio_tick
        return cls(
            n_rlf=ticks_for(cfg.t_rlf, tick),
            # at least one tick, so an RLF can interrupt the execution
            n_exec=max(1, int(math.ceil(cfg.ho_exec_delay / tick - 1e-9))),
            n_reest=max(1, int(math.ceil(cfg.reest_delay / tick - 1e-9))),
            q_out=cfg.q_out,
        )


def param_tables(params: HoParams, boundaries, n_slices, tick_s):
    """Dense (N, N, S) HOM table (inf off-boundary) and required hold ticks."""
    n = boundaries.n_cells
    hom = np.full((n, n, n_slices), np.inf)
    need = np.zeros((n, n, n_slices), dtype=np.int64)
    tick_ms = tick_s * 1000.0
    for i, (a, b) in enumerate(boundaries.directed):
        hom[a, b] = params.hom[i]
        need[a, b] = [ticks_for(t, tick_ms) for t in params.ttt[i]]
    return hom, need


def process_user_tick(ctx, t, report, tables, timing, classifier, book, events=None, user=0):
    """Advance one user's HO state machine by one tick (reference path).

    ``report`` is ``(rsrp_per_cell, cell_activity, noise_dbm)``; ``tables``
    comes from :func:`param_tables`. Same ordering as the compiled loop:
    re-establishment, RLF check, execution, criterion.
    """
    from .sim.channel import compute_sinr

    rsrp, activity, noise = report
    rsrp = np.asarray(rsrp, float)
    hom, need = tables
    n_cells = len(rsrp)
    if ctx.hold is None:
        ctx.hold = np.zeros(n_cells, dtype=np.int64)

    def log(kind, src, tgt):
        if events is not None:
            events.append(HoEvent(t, user, kind, src, tgt, ctx.slice))

    if ctx.reest_left > 0:
        ctx.reest_left -= 1
        if ctx.reest_left == 0:
            cell = int(np.argmax(rsrp))
            log("REESTABLISH", -1, cell)
            classifier.reestablish(ctx, t, cell, book)
            ctx.hold[:] = 0
    if ctx.serving >= 0:
        sinr = compute_sinr(rsrp[None], [ctx.serving], activity, noise)[0]
        ctx.rlf_count = ctx.rlf_count + 1 if sinr < timing.q_out else 0
    else:
        ctx.rlf_count = 0
    if ctx.rlf_count >= timing.n_rlf:
        log("RLF", ctx.serving, -1)
        classifier.rlf(ctx, t, book)
        ctx.rlf_count = 0
        ctx.exec_left = 0
        ctx.reest_left = timing.n_reest
        ctx.hold[:] = 0
    if ctx.exec_left > 0:
        ctx.exec_left -= 1
        if ctx.exec_left == 0:
            log("COMPLETE", ctx.executing.source, ctx.executing.target)
            classifier.complete(ctx, t, book)
            ctx.rlf_count = 0
            ctx.hold[:] = 0
    if ctx.serving < 0 or ctx.exec_left > 0:
        ctx.hold[:] = 0
        return ctx
    n, s = ctx.serving, ctx.slice
    cond = rsrp > rsrp[n] + hom[n, :, s]
    ctx.hold = np.where(cond, ctx.hold + 1, 0)
    fired = np.flatnonzero(cond & (ctx.hold >= need[n, :, s]))
    if fired.size:
        target = int(fired[np.argmax(rsrp[fired])])
        log("TRIGGER", n, target)
        classifier.trigger(ctx, t, target, book)
        ctx.exec_left = timing.n_exec
        ctx.hold[:] = 0
    return ctx
