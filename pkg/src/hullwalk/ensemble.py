"""Ensembles of independent runs and the estimators built on them.

Work is a fixed list of (run_index -> derived seed) jobs; aggregation
only ever folds per-run summaries in run-index order, so results are
bit-identical regardless of worker count or scheduling. Event
probabilities carry Clopper-Pearson intervals, which keep exact coverage
at the small counts typical of tail events.
"""

from __future__ import annotations

import math
import multiprocessing
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import stats

from .drift import DriftConstants, derive_constants
from .errors import InsufficientData, ModeMismatch
from .observables import (alignment_events, extract_ladders, good_flags,
                          lens_frames, track_supermartingale,
                          verify_trajectory)
from .walk import DIRECT, REJECTION, WalkResult, run_walk

# Offsets tracked when pooling the excursion functional; epochs longer
# than this are rare at desk scale and contribute zeros beyond it anyway.
M_TRACK_CAP = 128


@dataclass(frozen=True)
class EnsembleConfig:
    """Plan for an ensemble: sizes, seeds, mode and what to collect.

    ``collect`` chooses the per-run payload: "speed" (checkpoint
    norms/diameters), "ladders" (epoch lengths), "alignment"
    (first-trial alignment flags and gain checks, rejection mode only),
    "mtrack" (pooled excursion-functional sums) and "invariants" (full
    verification counters).
    """

    runs: int
    steps: int
    master_seed: int
    mode: str = DIRECT
    checkpoints: tuple = ()
    workers: int = 1
    collect: tuple = ("speed",)

    def __post_init__(self):
        if self.runs < 1:
            raise ValueError("runs must be >= 1")
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if self.mode not in (DIRECT, REJECTION):
            raise ValueError(f"unknown mode {self.mode!r}")
        cps = tuple(sorted(set(int(c) for c in self.checkpoints))) \
            or (max(1, self.steps // 2), self.steps)
        if cps[0] < 1 or cps[-1] > self.steps:
            raise ValueError("checkpoints must lie in [1, steps]")
        object.__setattr__(self, "checkpoints", cps)


@dataclass
class RunSummary:
    """Per-run payload folded by the estimators."""

    run_index: int
    checkpoints: np.ndarray
    norm_at: np.ndarray
    diam_at: np.ndarray
    max_at: np.ndarray
    n_epochs: int = 0
    deltas: Optional[np.ndarray] = None
    aligned: Optional[np.ndarray] = None
    gain_failures: int = 0
    m_sum: Optional[np.ndarray] = None
    m_sq: Optional[np.ndarray] = None
    m_count: int = 0
    violations: Optional[dict] = None


def simulate_run(cfg: EnsembleConfig, run_index: int) -> RunSummary:
    """Simulate one run of the ensemble and reduce it to its summary."""
    res = run_walk(cfg.steps, cfg.master_seed, mode=cfg.mode,
                   run_index=run_index)
    cps = np.array(cfg.checkpoints, dtype=int)
    norms = res.norms()
    summary = RunSummary(
        run_index=run_index,
        checkpoints=cps,
        norm_at=norms[cps],
        diam_at=res.d[cps],
        max_at=res.running_max_norm()[cps])

    need_ladders = any(k in cfg.collect
                       for k in ("ladders", "alignment", "mtrack"))
    ladders = extract_ladders(res) if need_ladders else None
    if ladders is not None:
        complete = [rec for rec in ladders[1:] if rec.length is not None]
        summary.n_epochs = len(complete)
        if "ladders" in cfg.collect:
            summary.deltas = np.array([rec.length for rec in complete],
                                      dtype=np.int64)
    if "alignment" in cfg.collect:
        flags = alignment_events(res, ladders)
        summary.aligned = flags
        fails = 0
        for rec in ladders[1:]:
            if rec.aligned and res.d[rec.time + 1] < rec.diam + 0.5 - 1e-9:
                fails += 1
        summary.gain_failures = fails
    if "mtrack" in cfg.collect:
        frames = lens_frames(res, ladders)
        good_flags(frames)
        tracks = track_supermartingale(frames, ladders)
        m_sum = np.zeros(M_TRACK_CAP)
        m_sq = np.zeros(M_TRACK_CAP)
        for arr in tracks.values():
            k = min(len(arr), M_TRACK_CAP)
            m_sum[:k] += arr[:k]
            m_sq[:k] += arr[:k] ** 2
        summary.m_sum = m_sum
        summary.m_sq = m_sq
        summary.m_count = len(tracks)
    if "invariants" in cfg.collect:
        summary.violations = verify_trajectory(res)["violations"]
    return summary


def _job(args) -> RunSummary:
    cfg, idx = args
    return simulate_run(cfg, idx)


def run_ensemble(cfg: EnsembleConfig) -> list[RunSummary]:
    """Run all jobs; output is ordered by run index, so aggregation is
    independent of the worker pool's scheduling."""
    jobs = [(cfg, i) for i in range(cfg.runs)]
    if cfg.workers > 1:
        with multiprocessing.Pool(cfg.workers) as pool:
            out = pool.map(_job, jobs, chunksize=max(1, cfg.runs // (4 * cfg.workers)))
    else:
        out = [_job(j) for j in jobs]
    return out


# -- estimators ---------------------------------------------------------------


def clopper_pearson(k: int, n: int, alpha: float = 0.05):
    """Exact two-sided binomial confidence interval."""
    if n == 0:
        return (0.0, 1.0)
    lo = 0.0 if k == 0 else float(stats.beta.ppf(alpha / 2, k, n - k + 1))
    hi = 1.0 if k == n else float(stats.beta.ppf(1 - alpha / 2, k + 1, n - k))
    return (lo, hi)


def estimate_speed(summaries: list[RunSummary]) -> dict:
    """Per-checkpoint location/scale/quantiles of ||X_n||/n and d_n/n."""
    cps = summaries[0].checkpoints
    norm = np.stack([s.norm_at for s in summaries])          # (runs, cps)
    diam = np.stack([s.diam_at for s in summaries])
    runs = len(summaries)
    out = {"checkpoints": cps.tolist(), "runs": runs}
    for name, vals in (("speed", norm / cps), ("diam_rate", diam / cps)):
        sec = {
            "mean": vals.mean(axis=0).tolist(),
            "se": (vals.std(axis=0, ddof=1) / math.sqrt(runs)).tolist()
            if runs > 1 else [float("nan")] * len(cps),
            "min": vals.min(axis=0).tolist(),
        }
        if runs >= 30:
            for q in (1, 5, 50):
                sec[f"p{q:02d}"] = np.percentile(vals, q, axis=0).tolist()
        out[name] = sec
    return out


@dataclass
class TailEstimate:
    """Empirical survival of epoch lengths with a log-linear tail fit."""

    levels: np.ndarray
    survival: np.ndarray
    fitted_rate: float
    fit_r2: float
    n_epochs: int
    per_decile_rates: list = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "levels": self.levels.tolist(),
            "survival": self.survival.tolist(),
            "fitted_rate": self.fitted_rate,
            "fit_r2": self.fit_r2,
            "n_epochs": self.n_epochs,
            "per_decile_rates": self.per_decile_rates,
        }


def _log_linear_rate(levels, survival):
    logs = np.log(survival)
    slope, intercept = np.polyfit(levels, logs, 1)
    fit = slope * levels + intercept
    ss_res = float(((logs - fit) ** 2).sum())
    ss_tot = float(((logs - logs.mean()) ** 2).sum())
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else float("nan")
    return float(slope), r2


def delta_tails(summaries: list[RunSummary]) -> TailEstimate:
    """Pooled survival of epoch lengths (the opening unit epoch excluded)
    and its exponential-rate fit over the resolvable range.

    The full curve is reported from level 1, but the rate fit starts at
    level 3: survival at level 1 is identically 1 and level 2 sits on
    the large single-step atom, so neither speaks to the exponential
    tail. The resolvable range ends where fewer than 10 observations
    remain above the level.
    """
    parts = [s.deltas for s in summaries if s.deltas is not None]
    if not parts:
        raise InsufficientData("no epoch lengths collected")
    deltas = np.concatenate(parts)
    n = len(deltas)
    if n < 1000:
        raise InsufficientData(f"{n} epochs < 1000")
    counts = np.bincount(deltas)
    # survival[k] = P[delta >= level_k], levels from 1 upward
    ge = np.cumsum(counts[::-1])[::-1]
    levels = np.arange(1, len(counts))
    survival = ge[1:] / n
    keep = (survival * n >= 10) & (levels >= 3)
    if keep.sum() < 3:
        raise InsufficientData("tail too short for a fit")
    rate, r2 = _log_linear_rate(levels[keep], survival[keep])
    deciles = []
    split = [np.array_split(p, 10) for p in parts if len(p) >= 10]
    for q in range(10):
        pool = np.concatenate([chunks[q] for chunks in split]) \
            if split else np.zeros(0, dtype=int)
        if len(pool) >= 200:
            c = np.bincount(pool)
            g = np.cumsum(c[::-1])[::-1]
            lv = np.arange(1, len(c))
            sv = g[1:] / len(pool)
            k = sv * len(pool) >= 10
            if k.sum() >= 3:
                deciles.append(_log_linear_rate(lv[k], sv[k])[0])
                continue
        deciles.append(float("nan"))
    return TailEstimate(levels=levels[keep], survival=survival[keep],
                        fitted_rate=rate, fit_r2=r2, n_epochs=n,
                        per_decile_rates=deciles)


def ldp_curve(summaries: list[RunSummary], speeds) -> dict:
    """Empirical P[||X_n|| <= c*n] per checkpoint and speed c, with
    exact binomial intervals and a log-probability slope where counts
    allow."""
    cps = summaries[0].checkpoints
    norm = np.stack([s.norm_at for s in summaries])
    runs = len(summaries)
    out = {"checkpoints": cps.tolist(), "speeds": list(speeds),
           "runs": runs, "prob": [], "ci_lo": [], "ci_hi": [],
           "log_slope": []}
    for c in speeds:
        ks = (norm <= c * cps).sum(axis=0)
        probs = ks / runs
        cis = [clopper_pearson(int(k), runs) for k in ks]
        out["prob"].append(probs.tolist())
        out["ci_lo"].append([ci[0] for ci in cis])
        out["ci_hi"].append([ci[1] for ci in cis])
        pos = probs > 0
        if pos.sum() >= 2:
            slope, _ = _log_linear_rate(cps[pos], probs[pos])
            out["log_slope"].append(slope)
        else:
            out["log_slope"].append(float("nan"))
    return out


def supermartingale_decay(summaries: list[RunSummary],
                          constants: Optional[DriftConstants] = None) -> dict:
    """Pooled mean of the excursion functional per offset, with the
    derived envelope exp(scale*bound)*exp(-rate*n) alongside."""
    if constants is None:
        constants = derive_constants()
    parts = [s for s in summaries if s.m_sum is not None]
    if not parts:
        raise InsufficientData("no functional tracks collected")
    count = sum(s.m_count for s in parts)
    if count < 100:
        raise InsufficientData(f"{count} epochs < 100")
    m_sum = np.sum([s.m_sum for s in parts], axis=0)
    m_sq = np.sum([s.m_sq for s in parts], axis=0)
    mean = m_sum / count
    var = np.maximum(m_sq / count - mean ** 2, 0.0)
    se = np.sqrt(var / count)
    nz = np.flatnonzero(m_sum > 0)
    n_max = int(nz[-1]) + 1 if len(nz) else 1
    ns = np.arange(n_max)
    bound = constants.start_envelope * np.exp(-constants.decay_rate * ns)
    return {"n": ns.tolist(), "mean": mean[:n_max].tolist(),
            "se": se[:n_max].tolist(), "epochs": count,
            "bound": bound.tolist()}


def alignment_stats(summaries: list[RunSummary]) -> dict:
    """Frequency, independence and gain diagnostics of the first-trial
    alignment events."""
    parts = [s.aligned for s in summaries if s.aligned is not None]
    if not parts:
        raise ModeMismatch("alignment flags were not collected "
                           "(direct mode or missing collect)")
    flags = np.concatenate(parts)
    n = len(flags)
    if n == 0:
        raise InsufficientData("no alignment flags observed")
    k = int(flags.sum())
    p_hat = k / n
    lag_num = 0.0
    lag_den = 0
    pairs_x = []
    pairs_y = []
    for arr in parts:
        if len(arr) >= 2:
            pairs_x.append(arr[:-1].astype(float))
            pairs_y.append(arr[1:].astype(float))
    if pairs_x:
        xs = np.concatenate(pairs_x)
        ys = np.concatenate(pairs_y)
        sx = xs.std()
        sy = ys.std()
        lag1 = float(((xs - xs.mean()) * (ys - ys.mean())).mean()
                     / (sx * sy)) if sx > 0 and sy > 0 else float("nan")
        lag1_se = 1.0 / math.sqrt(len(xs))
    else:
        lag1 = float("nan")
        lag1_se = float("nan")
    gain_failures = sum(s.gain_failures for s in summaries)
    aligned_total = k
    return {
        "n": n, "count": k, "p_hat": p_hat,
        "ci": clopper_pearson(k, n),
        "se": math.sqrt(p_hat * (1 - p_hat) / n) if n else float("nan"),
        "lag1_corr": lag1, "lag1_se": lag1_se,
        "conditional_gain_fraction":
            1.0 - gain_failures / aligned_total if aligned_total else
            float("nan"),
    }
