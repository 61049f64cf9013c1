"""Walk engine: legal-step samplers and trajectory generation.

Each step from the current position is a unit step whose direction is
uniform on the closed complement of the open interior cone of the hull
at that position. Two samplers realize this law: ``direct`` maps one
uniform variate affinely onto the allowed arc; ``rejection`` redraws
full-circle uniform directions until the first legal one, recording the
first trial for alignment-event analysis.

Randomness derives from numpy's splittable SeedSequence with the stream
rule ``SeedSequence([seed, run_index])``, so ensembles are reproducible
without shared state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Sequence

import numpy as np

from .errors import InternalError
from .geometry import FULL_CIRCLE, TWO_PI, Arc, Point, canon_angle
from .hull import RANK_FULL, ConvexHull, DiameterState

REJECTION_GUARD = 1_000_000
_BUF = 4096

DIRECT = "direct"
REJECTION = "rejection"
MODES = (DIRECT, REJECTION)


class StepSample(NamedTuple):
    """One executed step: chosen direction plus sampling bookkeeping."""

    chosen: float
    arc: Arc
    trials: int
    first_trial: float  # nan in direct mode


class FrozenState(NamedTuple):
    """Lightweight snapshot of a walk state for sampler studies."""

    n: int
    x: float
    y: float
    arc: Arc


def rng_for(seed: int, run_index: int = 0) -> np.random.Generator:
    """Generator for run ``run_index`` of master seed ``seed``."""
    return np.random.default_rng(np.random.SeedSequence([seed, run_index]))


class WalkState:
    """Mutable state of one walk: past positions, hull, diameter, RNG."""

    __slots__ = ("positions", "hull", "diam", "n", "rng", "mode", "cur",
                 "violations", "_buf", "_bi")

    def __init__(self, rng: np.random.Generator, mode: str = DIRECT):
        if mode not in MODES:
            raise ValueError(f"unknown sampler mode {mode!r}")
        self.positions: list[Point] = [(0.0, 0.0)]
        self.hull = ConvexHull()
        self.hull.add(0.0, 0.0, 0)
        self.diam = DiameterState()
        self.n = 0
        self.rng = rng
        self.mode = mode
        self.cur = 0
        self.violations = 0
        self._buf: list[float] = []
        self._bi = 0

    @classmethod
    def fresh(cls, seed: int, mode: str = DIRECT, run_index: int = 0):
        return cls(rng_for(seed, run_index), mode=mode)

    @property
    def position(self) -> Point:
        return self.positions[-1]

    def _uniform(self) -> float:
        bi = self._bi
        if bi == len(self._buf):
            self._buf = self.rng.random(_BUF).tolist()
            bi = 0
        self._bi = bi + 1
        return self._buf[bi]

    def allowed_arc(self) -> Arc:
        """Closed complement of the open interior cone at the current position."""
        hull = self.hull
        if hull.rank < RANK_FULL:
            return FULL_CIRCLE
        if self.cur >= 0:
            theta_prev, _theta_next, interior = hull.cone_at_vertex(self.cur)
            return Arc(theta_prev, TWO_PI - interior)
        # Current position was absorbed into the boundary (measure zero).
        return hull.allowed_arc_at(self.position)

    def freeze(self) -> FrozenState:
        x, y = self.position
        return FrozenState(self.n, x, y, self.allowed_arc())

    def step(self, verify: bool = False) -> StepSample:
        if self.mode == REJECTION:
            return step_rejection(self, verify)
        return step_direct(self, verify)


def _commit(state: WalkState, arc: Arc, theta: float, trials: int,
            first_trial: float, verify: bool) -> StepSample:
    x, y = state.positions[-1]
    px = x + math.cos(theta)
    py = y + math.sin(theta)
    if verify and state.hull.segment_hits_interior((x, y), (px, py)):
        state.violations += 1
    birth = state.n + 1
    state.diam.update(state.hull, (px, py), birth)
    state.cur = state.hull.add(px, py, birth, hint=state.cur)
    state.positions.append((px, py))
    state.n = birth
    return StepSample(canon_angle(theta), arc, trials, first_trial)


def step_direct(state: WalkState, verify: bool = False) -> StepSample:
    """Advance one step, mapping a single uniform draw onto the allowed arc."""
    arc = state.allowed_arc()
    theta = arc.start + arc.length * state._uniform()
    return _commit(state, arc, theta, 1, math.nan, verify)


def step_rejection(state: WalkState, verify: bool = False) -> StepSample:
    """Advance one step by redrawing full-circle directions until legal."""
    arc = state.allowed_arc()
    start = arc.start
    length = arc.length
    trials = 0
    first = math.nan
    while True:
        theta = TWO_PI * state._uniform()
        trials += 1
        if trials == 1:
            first = theta
        if (theta - start) % TWO_PI <= length:
            break
        if trials >= REJECTION_GUARD:
            # Allowed arcs are at least pi long, so this is unreachable
            # unless the cone computation is broken.
            raise InternalError("rejection sampler exceeded trial guard")
    return _commit(state, arc, theta, trials, first, verify)


@dataclass
class WalkResult:
    """Trajectory record of one walk, one row per time index 0..steps."""

    seed: int
    run_index: int
    mode: str
    steps: int
    x: np.ndarray
    y: np.ndarray
    d: np.ndarray
    hull_size: np.ndarray
    arc_len: np.ndarray
    trials: np.ndarray
    first_trial: np.ndarray
    is_ladder: np.ndarray
    ladder_far: np.ndarray
    final_hull: Optional[ConvexHull] = None
    snapshots: list = field(default_factory=list)
    violations: int = 0

    def __len__(self) -> int:
        return len(self.x)

    def norms(self) -> np.ndarray:
        return np.hypot(self.x, self.y)

    def running_max_norm(self) -> np.ndarray:
        return np.maximum.accumulate(self.norms())


def run_walk(steps: int, seed: int, mode: str = DIRECT, run_index: int = 0,
             verify: bool = False,
             snapshot_at: Optional[Sequence[int]] = None) -> WalkResult:
    """Simulate ``steps`` legal unit steps from the origin.

    Deterministic given (seed, run_index, mode, steps). ``verify`` runs
    the independent segment-vs-interior predicate on every step and
    counts violations (expected zero). ``snapshot_at`` captures frozen
    states at the given time indices.
    """
    if steps < 0:
        raise ValueError("steps must be >= 0")
    state = WalkState.fresh(seed, mode=mode, run_index=run_index)
    snapset = frozenset(snapshot_at) if snapshot_at else frozenset()

    d = [0.0]
    hull_size = [1]
    arc_len = []
    trials = [1]
    first_trial = [math.nan]
    is_ladder = [False]
    ladder_far = [-1]

    snapshots = []
    prev_d = 0.0
    for n in range(steps):
        if n in snapset:
            snapshots.append(state.freeze())
        sample = state.step(verify=verify)
        arc_len.append(sample.arc.length)
        d.append(state.diam.d)
        hull_size.append(len(state.hull))
        trials.append(sample.trials)
        first_trial.append(sample.first_trial)
        increased = state.diam.d > prev_d
        is_ladder.append(increased)
        ladder_far.append(state.diam.far_birth if increased else -1)
        prev_d = state.diam.d
    arc_len.append(state.allowed_arc().length)
    if steps in snapset:
        snapshots.append(state.freeze())

    xs = np.array([p[0] for p in state.positions])
    ys = np.array([p[1] for p in state.positions])
    return WalkResult(
        seed=seed, run_index=run_index, mode=mode, steps=steps,
        x=xs, y=ys, d=np.array(d), hull_size=np.array(hull_size, dtype=np.int64),
        arc_len=np.array(arc_len), trials=np.array(trials, dtype=np.int64),
        first_trial=np.array(first_trial), is_ladder=np.array(is_ladder, dtype=bool),
        ladder_far=np.array(ladder_far, dtype=np.int64),
        final_hull=state.hull, snapshots=snapshots, violations=state.violations)


def sample_step_angles(arc: Arc, k: int, rng: np.random.Generator,
                       mode: str = DIRECT):
    """Draw ``k`` i.i.d. step directions at a frozen state.

    Returns (angles, trials): angles canonical in [0, 2*pi), trials all
    ones in direct mode and the per-sample rejection counts otherwise.
    """
    if mode == DIRECT:
        theta = (arc.start + arc.length * rng.random(k)) % TWO_PI
        return theta, np.ones(k, dtype=np.int64)
    if mode != REJECTION:
        raise ValueError(f"unknown sampler mode {mode!r}")
    accept_p = arc.length / TWO_PI
    angle_parts = []
    idx_parts = []
    accepted = 0
    drawn = 0
    while accepted < k:
        m = int((k - accepted) / max(accept_p, 1e-3) * 1.5) + 64
        theta = TWO_PI * rng.random(m)
        ok = (theta - arc.start) % TWO_PI <= arc.length
        idx = np.flatnonzero(ok)
        angle_parts.append(theta[idx])
        idx_parts.append(idx + drawn)
        accepted += len(idx)
        drawn += m
    angles = np.concatenate(angle_parts)[:k]
    global_idx = np.concatenate(idx_parts)[:k]
    trials = np.diff(np.concatenate([[-1], global_idx])).astype(np.int64)
    return angles % TWO_PI, trials
