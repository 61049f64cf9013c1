"""Ladder structure, lens frames, good-time flags and related observables.

Everything here post-processes stored trajectories; nothing runs in the
simulation loop. A ladder epoch starts each time the hull diameter
strictly increases; within an epoch the walker is confined to the lens
of the two diametral endpoints, and each step is described by a frame:
distances to the lens center and to the diametral line, plus the angles
the two boundary rays at the walker make with the chords toward that
center and toward the foot of the perpendicular.

Ray naming: the ``near`` boundary ray is the one whose boundary chain
reaches the epoch's own ladder point before the far diametral endpoint;
the ``far`` ray is the other. The sufficient goodness criterion (inside
the small ball and near-foot angle at most pi/4) is stated for the near
ray, and the combined-drift floor argument leans on the same pairing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .drift import (GOOD_DRIFT_THRESHOLD, DriftConstants, derive_constants,
                    line_drift_many, radial_drift_many)
from .errors import DegenerateFrame, ModeMismatch
from .geometry import EPS_GEOM, angle_between, angle_of, project_onto_line
from .hull import ConvexHull
from .walk import REJECTION, WalkResult

_BORDERLINE_WINDOW = 1e-6


@dataclass
class LadderRecord:
    """One ladder epoch of the diameter process."""

    index: int
    time: int                      # step at which the diameter increased
    far_birth: int                 # birth step of the far diametral endpoint
    center: Optional[tuple]        # midpoint of the diametral segment
    diam: float
    length: Optional[int] = None   # steps until the next increase
    lens_exit: Optional[int] = None
    ball_exit: Optional[int] = None
    aligned: Optional[bool] = None


def ladder_times(d: np.ndarray) -> np.ndarray:
    """Times >= 1 at which the diameter strictly increases."""
    return np.flatnonzero(d[1:] > d[:-1]) + 1


def extract_ladders(res: WalkResult, verify_far: bool = False,
                    constants: Optional[DriftConstants] = None
                    ) -> list[LadderRecord]:
    """Ladder records for a trajectory, including lens and ball exits.

    ``verify_far`` recomputes each far endpoint by brute force over all
    earlier positions (earliest index wins ties) instead of trusting the
    engine's recorded argmax.
    """
    if constants is None:
        constants = _default_constants()
    x, y, d = res.x, res.y, res.d
    n_total = len(x) - 1
    taus = ladder_times(d)
    records = [LadderRecord(index=0, time=0, far_birth=-1, center=None,
                            diam=0.0,
                            length=int(taus[0]) if len(taus) else None)]
    gamma = constants.ball_ratio
    for i, t in enumerate(taus, start=1):
        t = int(t)
        if verify_far:
            dist2 = (x[:t] - x[t]) ** 2 + (y[:t] - y[t]) ** 2
            far = int(np.argmax(dist2))
        else:
            far = int(res.ladder_far[t])
        ax, ay = float(x[t]), float(y[t])
        bx, by = float(x[far]), float(y[far])
        diam = float(d[t])
        nxt = int(taus[i]) if i < len(taus) else None
        rec = LadderRecord(
            index=i, time=t, far_birth=far,
            center=((ax + bx) / 2.0, (ay + by) / 2.0), diam=diam,
            length=(nxt - t) if nxt is not None else None)
        rec.lens_exit = _first_exit(
            x, y, t, lambda s, e: np.maximum(
                (x[s:e] - ax) ** 2 + (y[s:e] - ay) ** 2,
                (x[s:e] - bx) ** 2 + (y[s:e] - by) ** 2) > diam * diam)
        rec.ball_exit = _first_exit(
            x, y, t, lambda s, e:
            (x[s:e] - ax) ** 2 + (y[s:e] - ay) ** 2 > (gamma * diam) ** 2)
        records.append(rec)
    return records


def _first_exit(x, y, start, exceeds) -> Optional[int]:
    """First index > start where ``exceeds`` fires, scanning by windows."""
    n_total = len(x) - 1
    s = start + 1
    w = 64
    while s <= n_total:
        e = min(s + w, n_total + 1)
        hits = np.flatnonzero(exceeds(s, e))
        if len(hits):
            return int(s + hits[0])
        s = e
        w *= 2
    return None


def alignment_events(res: WalkResult, ladders: list[LadderRecord]
                     ) -> np.ndarray:
    """Fill and return the first-trial alignment flags, one per epoch >= 1.

    The flag is set when the first rejection trial at a ladder time has
    inner product at least 1/2 with the unit diametral direction; such a
    trial is automatically legal and forces a half-unit diameter gain on
    the very next step. Only rejection-mode runs record first trials.
    """
    if res.mode != REJECTION:
        raise ModeMismatch("alignment events need a rejection-mode run")
    n_total = len(res.x) - 1
    flags = []
    for rec in ladders[1:]:
        t = rec.time
        if t + 1 > n_total:
            rec.aligned = None
            continue
        theta = float(res.first_trial[t + 1])
        ex = (res.x[t] - res.x[rec.far_birth]) / rec.diam
        ey = (res.y[t] - res.y[rec.far_birth]) / rec.diam
        rec.aligned = bool(math.cos(theta) * ex + math.sin(theta) * ey >= 0.5)
        flags.append(rec.aligned)
    return np.array(flags, dtype=bool)


# -- lens frames -------------------------------------------------------------


@dataclass
class FrameTable:
    """Per-step lens frames as parallel arrays (one row per frame)."""

    epoch: np.ndarray
    n: np.ndarray
    t: np.ndarray
    diam: np.ndarray
    r: np.ndarray            # distance to the lens center
    dline: np.ndarray        # distance to the diametral line
    zx: np.ndarray
    zy: np.ndarray
    phi_near: np.ndarray     # near boundary ray vs chord to the center
    phi_far: np.ndarray
    psi_near: np.ndarray     # near boundary ray vs chord to the foot
    psi_far: np.ndarray
    in_ball: np.ndarray
    has_angles: np.ndarray
    epoch_complete: np.ndarray
    side_fallbacks: int = 0
    drift_r: np.ndarray = field(default=None, repr=False)
    drift_d: np.ndarray = field(default=None, repr=False)
    drift_err: np.ndarray = field(default=None, repr=False)
    good: np.ndarray = field(default=None, repr=False)
    good_sufficient: np.ndarray = field(default=None, repr=False)
    borderline: np.ndarray = field(default=None, repr=False)

    def __len__(self) -> int:
        return len(self.t)


def lens_frames(res: WalkResult, ladders: list[LadderRecord],
                constants: Optional[DriftConstants] = None) -> FrameTable:
    """Replay the hull evolution and build the frame table.

    Frames exist for every time in an epoch with index >= 1. The four
    boundary-ray angles need the walker strictly off the diametral line
    and off the lens center, so the epoch-opening frame (n = 0, where
    the walker sits on the line) carries only distances.
    """
    if constants is None:
        constants = _default_constants()
    ball_ratio = constants.ball_ratio
    x, y = res.x, res.y
    n_total = len(x) - 1
    if not len(ladders) or (len(ladders) > 1 and ladders[1].diam <= EPS_GEOM):
        raise DegenerateFrame("degenerate diametral segment")

    cols = {k: [] for k in ("epoch", "n", "t", "diam", "r", "dline", "zx",
                            "zy", "phi_near", "phi_far", "psi_near",
                            "psi_far", "in_ball", "has_angles",
                            "epoch_complete")}
    ap = {k: cols[k].append for k in cols}
    fallbacks = 0

    hull = ConvexHull()
    hull.add(float(x[0]), float(y[0]), 0)
    cur = 0
    next_ladder = 1  # position in ladders list of the next epoch start
    rec = None
    inside_ball = True
    for t in range(1, n_total + 1):
        px, py = float(x[t]), float(y[t])
        cur = hull.add(px, py, t, hint=cur)
        if next_ladder < len(ladders) and ladders[next_ladder].time == t:
            rec = ladders[next_ladder]
            next_ladder += 1
            inside_ball = True
        if rec is None:
            continue
        n = t - rec.time
        ax, ay = float(x[rec.time]), float(y[rec.time])
        bx, by = float(x[rec.far_birth]), float(y[rec.far_birth])
        yx, yy = rec.center
        r = math.hypot(px - yx, py - yy)
        zx, zy = project_onto_line((px, py), (ax, ay), (bx, by))
        dl = math.hypot(px - zx, py - zy)
        if n > 0:
            inside_ball = (inside_ball and
                           math.hypot(px - ax, py - ay)
                           <= ball_ratio * rec.diam)
        phi_n = phi_f = psi_n = psi_f = math.nan
        has = False
        if n > 0 and r > 1e-9 and dl > 1e-9 and cur >= 0:
            side = _near_is_next(hull, cur, rec.time, rec.far_birth)
            if side is None:
                fallbacks += 1
            else:
                theta_prev, theta_next, _ = hull.cone_at_vertex(cur)
                ray_near, ray_far = ((theta_next, theta_prev) if side
                                     else (theta_prev, theta_next))
                to_center = angle_of(yx - px, yy - py)
                to_foot = angle_of(zx - px, zy - py)
                phi_n = angle_between(ray_near, to_center)
                phi_f = angle_between(ray_far, to_center)
                psi_n = angle_between(ray_near, to_foot)
                psi_f = angle_between(ray_far, to_foot)
                has = True
        ap["epoch"](rec.index)
        ap["n"](n)
        ap["t"](t)
        ap["diam"](rec.diam)
        ap["r"](r)
        ap["dline"](dl)
        ap["zx"](zx)
        ap["zy"](zy)
        ap["phi_near"](phi_n)
        ap["phi_far"](phi_f)
        ap["psi_near"](psi_n)
        ap["psi_far"](psi_f)
        ap["in_ball"](inside_ball)
        ap["has_angles"](has)
        ap["epoch_complete"](rec.length is not None)

    return FrameTable(
        epoch=np.array(cols["epoch"], dtype=np.int64),
        n=np.array(cols["n"], dtype=np.int64),
        t=np.array(cols["t"], dtype=np.int64),
        diam=np.array(cols["diam"]),
        r=np.array(cols["r"]),
        dline=np.array(cols["dline"]),
        zx=np.array(cols["zx"]),
        zy=np.array(cols["zy"]),
        phi_near=np.array(cols["phi_near"]),
        phi_far=np.array(cols["phi_far"]),
        psi_near=np.array(cols["psi_near"]),
        psi_far=np.array(cols["psi_far"]),
        in_ball=np.array(cols["in_ball"], dtype=bool),
        has_angles=np.array(cols["has_angles"], dtype=bool),
        epoch_complete=np.array(cols["epoch_complete"], dtype=bool),
        side_fallbacks=fallbacks)


def _near_is_next(hull: ConvexHull, cur: int, near_birth: int,
                  far_birth: int) -> Optional[bool]:
    """Whether the boundary chain through the next vertex reaches the
    epoch's ladder point strictly before the far endpoint."""
    births = hull.births
    h = len(births)
    for off in range(1, h):
        b = births[(cur + off) % h]
        if b == near_birth:
            return True
        if b == far_birth:
            return False
    return None


def good_flags(frames: FrameTable,
               constants: Optional[DriftConstants] = None) -> FrameTable:
    """Evaluate exact drifts and set good / good_sufficient / borderline.

    A frame with n >= 1 is good when the walker is still inside the
    small ball around the epoch's ladder point and the exact expected
    radial push away from the lens center is at least 1/(pi*sqrt(8))
    (minus a 1e-9 numerical allowance; frames within 1e-6 of the
    threshold are additionally flagged borderline). n = 0 is good by
    definition. The sufficient variant replaces the drift evaluation by
    the geometric test near-foot angle <= pi/4.
    """
    m = len(frames)
    frames.drift_r = np.full(m, np.nan)
    frames.drift_d = np.full(m, np.nan)
    frames.drift_err = np.full(m, np.nan)
    idx = np.flatnonzero(frames.has_angles)
    if len(idx):
        v, e = radial_drift_many(frames.r[idx], frames.phi_near[idx],
                                 frames.phi_far[idx])
        frames.drift_r[idx] = v
        vd, ed = line_drift_many(frames.dline[idx], frames.psi_near[idx],
                                 frames.psi_far[idx])
        frames.drift_d[idx] = vd
        frames.drift_err[idx] = e + ed
    with np.errstate(invalid="ignore"):
        push_ok = frames.drift_r >= GOOD_DRIFT_THRESHOLD - 1e-9
        frames.good = (frames.n == 0) | (frames.has_angles & frames.in_ball
                                         & push_ok)
        frames.good_sufficient = (frames.has_angles & frames.in_ball
                                  & (frames.psi_near <= math.pi / 4.0))
        frames.borderline = (frames.has_angles
                             & (np.abs(frames.drift_r - GOOD_DRIFT_THRESHOLD)
                                < _BORDERLINE_WINDOW))
    return frames


# -- exponential excursion functional ----------------------------------------


def track_supermartingale(frames: FrameTable, ladders: list[LadderRecord],
                          constants: Optional[DriftConstants] = None
                          ) -> dict[int, np.ndarray]:
    """Per-epoch values of the exponential excursion functional.

    For a complete epoch of length L the returned array holds the values
    at offsets 0..L-1; the functional is zero from offset L on (the
    survival indicator has dropped). Requires good flags to be set.
    """
    if frames.good is None:
        raise ValueError("run good_flags first")
    if constants is None:
        constants = _default_constants()
    c = constants.exponent_scale
    beta = constants.radial_weight
    tracks: dict[int, np.ndarray] = {}
    lengths = {rec.index: rec.length for rec in ladders[1:]
               if rec.length is not None}
    diams = {rec.index: rec.diam for rec in ladders[1:]}
    # Frames are built in time order, so epochs are contiguous runs.
    epochs = frames.epoch
    bounds = np.flatnonzero(np.diff(epochs)) + 1
    starts = np.concatenate([[0], bounds])
    ends = np.concatenate([bounds, [len(epochs)]])
    for s, e in zip(starts, ends):
        rows = np.arange(s, e)
        i = int(frames.epoch[s])
        if i not in lengths:
            continue
        r0 = diams[i] / 2.0
        goods = frames.good[rows].astype(np.int64)
        cum = np.concatenate([[0], np.cumsum(goods)[:-1]])
        expo = (frames.dline[rows] + beta * (frames.r[rows] - r0)
                - 4.0 * cum)
        tracks[i] = np.exp(-c * expo)
    return tracks


def pooled_supermartingale(tracks: dict[int, np.ndarray],
                           n_max: Optional[int] = None):
    """Pool per-epoch functional values over epochs.

    Returns (n, mean, se, count): at each offset an epoch contributes
    its value while alive and zero afterwards, matching the survival
    indicator in the definition.
    """
    if not tracks:
        return (np.zeros(0, dtype=int), np.zeros(0), np.zeros(0), 0)
    if n_max is None:
        n_max = max(len(v) for v in tracks.values())
    sums = np.zeros(n_max)
    sq = np.zeros(n_max)
    for v in tracks.values():
        k = min(len(v), n_max)
        sums[:k] += v[:k]
        sq[:k] += v[:k] ** 2
    count = len(tracks)
    mean = sums / count
    var = np.maximum(sq / count - mean ** 2, 0.0)
    se = np.sqrt(var / count)
    return np.arange(n_max), mean, se, count


# -- running-maximum ladder structure ----------------------------------------


@dataclass
class MaxLadderRecord:
    """Record time of the walker's running maximum distance from home."""

    index: int
    time: int
    value: float


def max_ladders(res: WalkResult):
    """Ladder structure of the running max of ||X_n||.

    Returns (records, epoch_of_step, max_epoch_of_step): the two maps
    give, for each time n, the index of the last diameter ladder not
    after n and the index of the last running-max record not after n.
    """
    norms = res.norms()
    run_max = np.maximum.accumulate(norms)
    mus = np.concatenate([[0], np.flatnonzero(run_max[1:] > run_max[:-1]) + 1])
    records = [MaxLadderRecord(j, int(t), float(run_max[t]))
               for j, t in enumerate(mus)]
    taus = np.concatenate([[0], ladder_times(res.d)])
    steps = np.arange(len(norms))
    epoch_of_step = np.searchsorted(taus, steps, side="right") - 1
    max_epoch_of_step = np.searchsorted(mus, steps, side="right") - 1
    return records, epoch_of_step, max_epoch_of_step


_CONSTANTS_CACHE: Optional[DriftConstants] = None


def _default_constants() -> DriftConstants:
    global _CONSTANTS_CACHE
    if _CONSTANTS_CACHE is None:
        _CONSTANTS_CACHE = derive_constants()
    return _CONSTANTS_CACHE


# -- invariant verification ---------------------------------------------------


def replay_legality(res: WalkResult) -> int:
    """Count steps whose segment meets the hull interior (expected 0).

    Rebuilds the hull incrementally and tests every step segment with
    the clipping predicate, independently of the cone arithmetic the
    samplers used.
    """
    x, y = res.x, res.y
    hull = ConvexHull()
    hull.add(float(x[0]), float(y[0]), 0)
    cur = 0
    bad = 0
    for t in range(1, len(x)):
        a = (float(x[t - 1]), float(y[t - 1]))
        b = (float(x[t]), float(y[t]))
        if hull.segment_hits_interior(a, b):
            bad += 1
        cur = hull.add(b[0], b[1], t, hint=cur)
    return bad


def verify_trajectory(res: WalkResult, tol: float = 1e-9,
                      check_drift: bool = True,
                      constants: Optional[DriftConstants] = None) -> dict:
    """Run every invariant suite over one trajectory.

    Returns a report dict with per-inequality violation counters (all
    zero on a healthy build) plus context counts. ``tol`` is the frame
    identity tolerance; the drift checks always use their own 1e-9
    allowance and the 1e-10 quadrature error target.
    """
    if constants is None:
        constants = _default_constants()
    x, y, d = res.x, res.y, res.d
    report: dict = {"steps": len(x) - 1, "mode": res.mode, "tol": tol}
    v: dict[str, int] = {}

    inc = np.hypot(np.diff(x), np.diff(y))
    v["step_length"] = int((np.abs(inc - 1.0) > 1e-12).sum())
    dd = np.diff(d)
    v["d_decrease"] = int((dd < 0.0).sum())
    v["d_increment"] = int((dd > 1.0 + 1e-12).sum())
    v["legality"] = replay_legality(res)

    ladders = extract_ladders(res, constants=constants)
    report["epochs"] = len(ladders) - 1
    v["ladder_distance"] = 0
    v["lens_exit_order"] = 0
    v["ball_exit_floor"] = 0
    gamma = constants.ball_ratio
    for rec in ladders[1:]:
        t, far = rec.time, rec.far_birth
        span = math.hypot(x[t] - x[far], y[t] - y[far])
        if abs(span - rec.diam) > tol:
            v["ladder_distance"] += 1
        if rec.length is not None and rec.lens_exit is not None:
            if t + rec.length > rec.lens_exit:
                v["lens_exit_order"] += 1
        if rec.ball_exit is not None:
            if rec.ball_exit < t + math.ceil(gamma * rec.diam - 1e-9):
                v["ball_exit_floor"] += 1

    frames = lens_frames(res, ladders, constants=constants)
    report["frames"] = len(frames)
    report["frames_with_angles"] = int(frames.has_angles.sum())
    report["side_fallbacks"] = frames.side_fallbacks
    m = frames.has_angles
    phisum = frames.phi_near[m] + frames.phi_far[m]
    psisum = frames.psi_near[m] + frames.psi_far[m]
    v["angle_sum_equal"] = int((np.abs(phisum - psisum) > tol).sum())
    v["angle_sum_pi"] = int((phisum > math.pi + tol).sum())
    dn = np.abs(frames.phi_near[m] - frames.psi_near[m])
    df = np.abs(frames.phi_far[m] - frames.psi_far[m])
    v["angle_diff_equal"] = int((np.abs(dn - df) > tol).sum())
    v["angle_diff_halfpi"] = int((dn > math.pi / 2.0 + tol).sum())
    v["radius_le_diam"] = int((frames.r > frames.diam + tol).sum())
    v["line_le_radius"] = int((frames.dline > frames.r + tol).sum())

    if check_drift:
        good_flags(frames, constants=constants)
        bound_r = (np.sin(frames.phi_near[m]) + np.sin(frames.phi_far[m])) \
            / (2.0 * math.pi)
        bound_d = (np.sin(frames.psi_near[m]) + np.sin(frames.psi_far[m])) \
            / (2.0 * math.pi)
        v["radial_drift_bound"] = int(
            (frames.drift_r[m] < bound_r - 1e-9).sum())
        v["line_drift_bound"] = int(
            (frames.drift_d[m] < bound_d - 1e-9).sum())
        v["combined_drift_floor"] = int(
            (frames.drift_r[m] + frames.drift_d[m]
             < constants.drift_floor - 1e-9).sum())
        v["quadrature_error"] = int((frames.drift_err[m] > 1e-10).sum())
        v["sufficient_implies_good"] = int(
            (frames.good_sufficient & ~frames.good).sum())
        report["borderline_frames"] = int(frames.borderline.sum())

    if res.mode == REJECTION:
        alignment_events(res, ladders)
        v["alignment_gain"] = 0
        for rec in ladders[1:]:
            if rec.aligned and d[rec.time + 1] < rec.diam + 0.5 - 1e-9:
                v["alignment_gain"] += 1

    norms = res.norms()
    run_max = np.maximum.accumulate(norms)
    v["max_le_diam"] = int((run_max > d + tol).sum())
    v["diam_le_twice_max"] = int((d > 2.0 * run_max + tol).sum())
    records, i_n, j_n = max_ladders(res)
    taus = np.concatenate([[0], ladder_times(d)]).astype(int)
    mus = np.array([r.time for r in records], dtype=int)
    v["epoch_diam_map"] = int((~np.isclose(d[taus[i_n]], d, atol=tol)).sum())
    v["max_record_map"] = int(
        (~np.isclose(run_max, norms[mus[j_n]], atol=tol)).sum())

    report["violations"] = v
    report["total_violations"] = int(sum(v.values()))
    return report
