"""Exact event-driven simulation of the two-type jump-and-drift chain.

A single exponential clock of rate ``N1*alpha12 + N2*alpha21`` drives all
jumps; at each ring a source particle is drawn proportionally to its rate
and copies the current position of a uniformly chosen particle of the other
type.  Between rings every particle drifts at its own speed.

Positions are stored lazily as ``(anchor, anchor_time)`` pairs so that an
event costs O(1) regardless of population size; the position of a particle
at time ``t`` is ``anchor + v * (t - anchor_time)``.  A particle that just
jumped therefore sits *exactly* on its target.

Random numbers come from numpy's PCG64 seeded through ``SeedSequence``.
Replica ``r`` of master seed ``s`` uses ``SeedSequence(s, spawn_key=(r,))``,
independent of how many replicas are run or in which order.  Uniforms are
drawn in fixed-size blocks and consumed three per event (holding time,
source, target), so stepping event by event and running in bulk produce
bitwise-identical paths.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from numba import njit

from .model import ModelParams

_BLOCK_EVENTS = 4096
_NEED_REFILL = 1
_DONE = 0


def replica_rng(seed: int, replica: int, stream: int | None = None) -> np.random.Generator:
    """PCG64 generator for one replica; ``stream`` separates families of runs under one seed."""
    key = (int(replica),) if stream is None else (int(stream), int(replica))
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=key)))


@dataclass(frozen=True)
class JumpEvent:
    wait: float
    source_type: int
    source_index: int
    target_index: int


@njit(cache=True, nogil=True)
def _draw(pending, now, u0, u1, u2, lam, n1_rate, a12, a21, n1, n2):
    pending[0] = now - math.log1p(-u0) / lam
    s = u1 * lam
    if s < n1_rate:
        pending[1] = 1.0
        pending[2] = min(int(s / a12), n1 - 1)
        pending[3] = min(int(u2 * n2), n2 - 1)
    else:
        pending[1] = 2.0
        pending[2] = min(int((s - n1_rate) / a21), n2 - 1)
        pending[3] = min(int(u2 * n1), n1 - 1)


@njit(cache=True, nogil=True)
def _apply(pending, anc1, tl1, anc2, tl2, v1, v2):
    tau = pending[0]
    i = int(pending[2])
    j = int(pending[3])
    if pending[1] == 1.0:
        anc1[i] = anc2[j] + v2 * (tau - tl2[j])
        tl1[i] = tau
    else:
        anc2[i] = anc1[j] + v1 * (tau - tl1[j])
        tl2[i] = tau


@njit(cache=True, nogil=True)
def _advance(anc1, tl1, anc2, tl2, v1, v2, a12, a21, pending, buf, cursor, t_end):
    n1 = anc1.shape[0]
    n2 = anc2.shape[0]
    n1_rate = n1 * a12
    lam = n1_rate + n2 * a21
    jumps = 0
    while pending[0] <= t_end:
        if cursor + 3 > buf.shape[0]:
            return cursor, jumps, _NEED_REFILL
        _apply(pending, anc1, tl1, anc2, tl2, v1, v2)
        jumps += 1
        _draw(pending, pending[0], buf[cursor], buf[cursor + 1], buf[cursor + 2], lam, n1_rate, a12, a21, n1, n2)
        cursor += 3
    return cursor, jumps, _DONE


class ParticleState:
    """Positions of ``N1 + N2`` particles, the clock and the random stream.

    Single owner: the operations below mutate the state in place (and return
    it for chaining).  Use :meth:`copy` to branch a trajectory.
    """

    def __init__(self, params: ModelParams, init1, init2, rng: np.random.Generator, *, _jumps: bool = True):
        init1 = np.array(init1, dtype=float).ravel()
        init2 = np.array(init2, dtype=float).ravel()
        if init1.size == 0 or init2.size == 0:
            raise ValueError("both populations must be nonempty")
        self.params = params
        self._anc1 = init1
        self._anc2 = init2
        self._tl1 = np.zeros(init1.size)
        self._tl2 = np.zeros(init2.size)
        self.clock = 0.0
        self.jump_count = 0
        self.rng = rng
        self._buf = np.empty(0)
        self._cursor = 0
        self._pending = np.empty(4)
        self._jumps = _jumps
        self._draw_next(0.0)

    @property
    def n1(self) -> int:
        return self._anc1.size

    @property
    def n2(self) -> int:
        return self._anc2.size

    @property
    def total_rate(self) -> float:
        return self.n1 * self.params.alpha12 + self.n2 * self.params.alpha21

    @property
    def positions1(self) -> np.ndarray:
        return self._anc1 + self.params.v1 * (self.clock - self._tl1)

    @property
    def positions2(self) -> np.ndarray:
        return self._anc2 + self.params.v2 * (self.clock - self._tl2)

    def copy(self) -> "ParticleState":
        new = object.__new__(ParticleState)
        new.__dict__.update(self.__dict__)
        for name in ("_anc1", "_anc2", "_tl1", "_tl2", "_buf", "_pending"):
            setattr(new, name, getattr(self, name).copy())
        new.rng = np.random.Generator(np.random.PCG64())
        new.rng.bit_generator.state = self.rng.bit_generator.state
        return new

    def _refill(self):
        self._buf = self.rng.random(3 * _BLOCK_EVENTS)
        self._cursor = 0

    def _draw_next(self, now: float):
        if not self._jumps:
            self._pending[:] = (np.inf, 1.0, 0.0, 0.0)
            return
        if self._cursor + 3 > self._buf.size:
            self._refill()
        c = self._cursor
        p = self.params
        _draw(self._pending, now, self._buf[c], self._buf[c + 1], self._buf[c + 2],
              self.total_rate, self.n1 * p.alpha12, p.alpha12, p.alpha21, self.n1, self.n2)
        self._cursor += 3


def new_state(params: ModelParams, init1, init2, seed: int, *, replica: int = 0, _jumps: bool = True) -> ParticleState:
    """Fresh state at clock 0; the seed fully determines the future path."""
    return ParticleState(params, init1, init2, replica_rng(seed, replica), _jumps=_jumps)


def next_event(state: ParticleState) -> JumpEvent:
    """The next jump, without mutating the state.

    The event is drawn when the previous one is applied, so repeated calls
    return the same value; its ``wait`` is the residual holding time from
    the current clock, which is again exponential by memorylessness.
    """
    t, kind, src, tgt = state._pending
    return JumpEvent(wait=float(t - state.clock), source_type=int(kind), source_index=int(src), target_index=int(tgt))


def apply_event(state: ParticleState, event: JumpEvent) -> ParticleState:
    pending = state._pending
    if event != next_event(state):
        raise ValueError("event was not produced by next_event for this state")
    p = state.params
    _apply(pending, state._anc1, state._tl1, state._anc2, state._tl2, p.v1, p.v2)
    state.clock = float(pending[0])
    state.jump_count += 1
    state._draw_next(state.clock)
    return state


def run_until(state: ParticleState, t: float) -> ParticleState:
    """Apply every event with time ``<= t`` and drift to exactly ``t``."""
    if t < state.clock:
        raise ValueError(f"cannot run backwards: t={t} < clock={state.clock}")
    p = state.params
    while True:
        cursor, jumps, status = _advance(
            state._anc1, state._tl1, state._anc2, state._tl2, p.v1, p.v2, p.alpha12, p.alpha21,
            state._pending, state._buf, state._cursor, float(t),
        )
        state._cursor = cursor
        state.jump_count += jumps
        if status == _DONE:
            break
        state._refill()
    state.clock = float(t)
    return state


@dataclass(frozen=True)
class Observables:
    mean1: float
    mean2: float
    var1: float
    var2: float
    min_all: float

    def as_tuple(self):
        return (self.mean1, self.mean2, self.var1, self.var2, self.min_all)


def observables(state: ParticleState) -> Observables:
    """Per-type means, per-type population variances (divisor ``N_i``) and the global minimum."""
    x1 = state.positions1
    x2 = state.positions2
    return Observables(
        mean1=float(x1.mean()),
        mean2=float(x2.mean()),
        var1=float(x1.var()),
        var2=float(x2.var()),
        min_all=float(min(x1.min(), x2.min())),
    )


def default_spacing(params: ModelParams) -> float:
    return 5.0 / params.total_rate


def gap_samples(params: ModelParams, seed: int, t_burnin: float, n: int, spacing: float | None = None,
                *, replica: int = 0) -> np.ndarray:
    """Gaps ``x2 - x1`` of the one-particle-per-type chain, sampled after burn-in."""
    if spacing is None:
        spacing = default_spacing(params)
    if not spacing > 0:
        raise ValueError("spacing must be positive")
    state = new_state(params, [0.0], [0.0], seed, replica=replica)
    run_until(state, t_burnin)
    out = np.empty(n)
    for k in range(n):
        run_until(state, t_burnin + (k + 1) * spacing)
        out[k] = state.positions2[0] - state.positions1[0]
    return out


InitSampler = Callable[[np.random.Generator, int, int], tuple]


def make_initial(inits, rng: np.random.Generator, n1: int, n2: int):
    """Resolve an initial-condition spec into two position arrays.

    ``inits`` is ``None`` (all particles at 0), a pair of arrays, or a
    callable ``(rng, n1, n2) -> (x1, x2)`` drawing from the replica stream.
    """
    if inits is None:
        return np.zeros(n1), np.zeros(n2)
    if callable(inits):
        x1, x2 = inits(rng, n1, n2)
    else:
        x1, x2 = inits
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    if x1.size != n1 or x2.size != n2:
        raise ValueError(f"initial positions have sizes ({x1.size}, {x2.size}), expected ({n1}, {n2})")
    return x1, x2


def replica_state(params: ModelParams, n1: int, n2: int, inits, seed: int, replica: int,
                  stream: int | None = None) -> ParticleState:
    rng = replica_rng(seed, replica, stream)
    x1, x2 = make_initial(inits, rng, n1, n2)
    return ParticleState(params, x1, x2, rng)


def simulate_observables(params: ModelParams, n1: int, n2: int, inits, times: Sequence[float], seed: int,
                         replica_ids: Sequence[int], *, threads: int = 1, stream: int | None = None) -> np.ndarray:
    """Observables of each replica at each time; shape ``(replicas, len(times), 5)``.

    Rows follow ``replica_ids`` order regardless of scheduling.
    """
    times = np.asarray(times, dtype=float)
    if np.any(np.diff(times) < 0):
        raise ValueError("times must be nondecreasing")

    def one(r):
        state = replica_state(params, n1, n2, inits, seed, r, stream)
        rows = np.empty((times.size, 5))
        for k, t in enumerate(times):
            run_until(state, t)
            rows[k] = observables(state).as_tuple()
        return rows

    return np.stack(map_replicas(one, replica_ids, threads)) if len(replica_ids) else np.empty((0, times.size, 5))


def map_replicas(fn, replica_ids, threads: int = 1) -> list:
    """Run ``fn(r)`` for each replica id; results in id order.

    The numba kernel releases the GIL, so threads overlap the event loops.
    """
    replica_ids = list(replica_ids)
    if threads <= 1 or len(replica_ids) <= 1:
        return [fn(r) for r in replica_ids]
    from concurrent.futures import ThreadPoolExecutor

    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, replica_ids))
