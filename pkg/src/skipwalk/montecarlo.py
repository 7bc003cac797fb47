"""Trajectory simulation and empirical skipped-point statistics.

Each replica owns a splitmix64 stream derived from (seed, replica index),
so serial and chunked runs produce bit-identical results.  Site visits are
tracked in a dense byte array while the walk stays below the stop level.

Two stopping modes:

"margin"     -- stop once the walk exceeds target + margin and declare the
                unvisited sites <= target skipped.  The truncation bias is
                the exact probability of a later return below the target,
                which design_experiment computes from the D-series and
                records; for near-critical families this decays only like a
                small power of the margin, so the certificate matters.
"exact-tail" -- stop at the target level and resample the "ever returns"
                event with its exact probability (1 - escape, from the
                D-series identities); re-entry from above is necessarily at
                the stop level, so the estimator is unbiased at any level.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .dseries import DTable, NotConvergedError
from .perturbation import ChainParams
from .tails import TailTable

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_TWO64 = 2.0**64
_FULL = np.uint64(0xFFFFFFFFFFFFFFFF)  # sentinel: probability exactly 1


@njit(cache=True, inline="always")
def _mix64(z):
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


@njit(cache=True, inline="always")
def _stream_state(seed, replica):
    return _mix64((seed + _GOLDEN) ^ (replica * _MIX1 + _MIX2))


@njit(cache=True)
def _walk_batch(
    thr,
    stop_level,
    target,
    max_steps,
    seed,
    rep0,
    nrep,
    exact_tail,
    ret_thr1,
    ret_thr2,
    layer_ks,
    levels,
    out_flags,
    out_counts,
    out_level_counts,
    out_trunc,
):
    """Simulate nrep replicas; fill skip flags/counts for sites <= target."""
    for rr in range(nrep):
        state = _stream_state(seed, np.uint64(rep0 + rr))
        visited = np.zeros(stop_level + 3, dtype=np.uint8)
        pos = 0
        steps = np.int64(0)
        truncated = False
        while True:
            if steps >= max_steps:
                truncated = True
                break
            visited[pos] = 1
            state = state + _GOLDEN
            x = _mix64(state)
            if x < thr[pos] or thr[pos] == _FULL:
                pos += 2
            else:
                pos -= 1
            steps += 1
            if pos > stop_level:
                if exact_tail:
                    state = state + _GOLDEN
                    x = _mix64(state)
                    rt = ret_thr1 if pos == stop_level + 1 else ret_thr2
                    if x < rt or rt == _FULL:
                        pos = stop_level  # first re-entry from above is here
                    else:
                        break
                else:
                    break
        out_trunc[rr] = np.uint8(1) if truncated else np.uint8(0)
        cnt = 0
        li = 0
        for s in range(1, target + 1):
            if visited[s] == 0:
                cnt += 1
            while li < levels.shape[0] and s == levels[li]:
                out_level_counts[rr, li] = cnt
                li += 1
        while li < levels.shape[0]:
            out_level_counts[rr, li] = cnt
            li += 1
        out_counts[rr] = cnt
        for ki in range(layer_ks.shape[0]):
            k = layer_ks[ki]
            if visited[2 * k] == 0 or visited[2 * k + 1] == 0:
                out_flags[rr, ki] = np.uint8(1)


@njit(cache=True)
def _walk_visited(thr, stop_level, max_steps, seed, replica, exact_tail, ret_thr1, ret_thr2):
    """One replica; returns (visited byte array, truncated flag, steps)."""
    state = _stream_state(seed, np.uint64(replica))
    visited = np.zeros(stop_level + 3, dtype=np.uint8)
    pos = 0
    steps = np.int64(0)
    truncated = False
    while True:
        if steps >= max_steps:
            truncated = True
            break
        visited[pos] = 1
        state = state + _GOLDEN
        x = _mix64(state)
        if x < thr[pos] or thr[pos] == _FULL:
            pos += 2
        else:
            pos -= 1
        steps += 1
        if pos > stop_level:
            if exact_tail:
                state = state + _GOLDEN
                x = _mix64(state)
                rt = ret_thr1 if pos == stop_level + 1 else ret_thr2
                if x < rt or rt == _FULL:
                    pos = stop_level
                else:
                    break
            else:
                break
    return visited, truncated, steps


def _thresholds(chain: ChainParams, stop_level: int) -> np.ndarray:
    p = chain.p_array(0, stop_level)
    thr = np.full(p.size, _FULL, dtype=np.uint64)
    sub = p < 1.0
    thr[sub] = (np.maximum(p[sub], 0.0) * _TWO64).astype(np.uint64)
    return thr


def _prob_to_u64(p: float) -> np.uint64:
    if p >= 1.0:
        return _FULL
    return np.uint64(max(p, 0.0) * _TWO64)


def return_probability(dtab: DTable, a: int, b: int) -> float:
    """Exact P(walk from b ever hits [0, a]) = prod_{i=a}^{b-1} (1 - 1/D(i))."""
    if b <= a:
        return 1.0
    v = dtab.values[a - dtab.m_lo : b - dtab.m_lo]
    if np.any(np.isinf(v)):
        return 1.0
    if np.any(np.isnan(v)):
        raise NotConvergedError("return probability needs converged D values")
    return float(np.exp(np.sum(np.log1p(-1.0 / v))))


@dataclass(frozen=True)
class SkipExperiment:
    """Monte Carlo run configuration with its truncation certificate.

    return_prob is the exact probability of a return below target_level
    once the walk passed the stop level: the truncation bias scale for
    "margin" mode, and the resampling probability (bias zero) for
    "exact-tail" mode.
    """

    chain: ChainParams
    target_level: int
    margin: int
    replicas: int
    seed: int
    max_steps: int = 10**9
    mode: str = "margin"
    return_prob: float = math.nan
    ret1: float = math.nan  # exact-tail: P(return | at stop+1)
    ret2: float = math.nan  # exact-tail: P(return | at stop+2)

    @property
    def stop_level(self) -> int:
        return self.target_level + self.margin

    def to_record(self) -> dict:
        return {
            "target_level": self.target_level,
            "margin": self.margin,
            "replicas": self.replicas,
            "seed": self.seed,
            "max_steps": self.max_steps,
            "mode": self.mode,
            "return_prob": self.return_prob,
        }


def design_experiment(
    chain: ChainParams,
    dtab: DTable | None,
    target_level: int,
    margin: int,
    replicas: int,
    seed: int,
    mode: str = "margin",
    max_steps: int = 10**9,
    bias_limit: float | None = None,
) -> SkipExperiment:
    """Build a SkipExperiment, computing its exact truncation certificate.

    dtab must cover [target_level, stop_level + 1] when available; pass
    None only for margin mode without a certificate (return_prob NaN).
    bias_limit, when given, rejects margin-mode designs whose recorded
    return probability exceeds it.
    """
    if replicas < 1 or max_steps < 1:
        raise ValueError("replicas and max_steps must be >= 1")
    if target_level < 2:
        raise ValueError("target_level must be >= 2")
    if mode not in ("margin", "exact-tail"):
        raise ValueError(f"unknown mode {mode!r}")
    stop = target_level + margin
    ret = math.nan
    ret1 = ret2 = math.nan
    if mode == "exact-tail":
        if margin != 0:
            raise ValueError("exact-tail mode uses margin = 0")
        if dtab is None:
            raise ValueError("exact-tail mode needs a DTable")
        if dtab.status == "divergent-suspected":
            ret1 = ret2 = 1.0
            ret = 1.0
        else:
            d_stop = dtab.require(stop)
            u_next = 1.0  # only used through (1 + U_{stop+1})/D
            # U_{stop+1} from the D recurrence: D(stop) = 1 + U_{stop+1} D(stop+1)
            d_next = dtab.require(stop + 1)
            u_next = (d_stop - 1.0) / d_next
            ret1 = 1.0 - 1.0 / d_stop
            ret2 = 1.0 - (1.0 + u_next) / d_stop
            ret = ret1
    elif dtab is not None:
        if dtab.status == "divergent-suspected":
            ret = 1.0
        else:
            ret = return_probability(dtab, target_level, stop + 1)
        if bias_limit is not None and not ret <= bias_limit:
            raise ValueError(
                f"margin {margin} leaves return probability {ret:.3e} > bias limit {bias_limit:.1e}"
            )
    return SkipExperiment(
        chain, target_level, margin, replicas, seed, max_steps, mode, ret, ret1, ret2
    )


@dataclass(frozen=True)
class WalkSummary:
    """Visited/unvisited summary of a single trajectory."""

    unvisited: np.ndarray  # sites <= judged level never visited
    truncated: bool
    steps: int


def simulate_walk(
    exp: SkipExperiment, replica: int = 0, tails: TailTable | None = None
) -> WalkSummary:
    """One bit-reproducible trajectory of the experiment's walk."""
    thr = _thresholds(exp.chain, exp.stop_level)
    visited, truncated, steps = _walk_visited(
        thr,
        exp.stop_level,
        exp.max_steps,
        np.uint64(exp.seed),
        np.uint64(replica),
        exp.mode == "exact-tail",
        _prob_to_u64(exp.ret1) if exp.mode == "exact-tail" else np.uint64(0),
        _prob_to_u64(exp.ret2) if exp.mode == "exact-tail" else np.uint64(0),
    )
    judged = visited[1 : exp.target_level + 1]
    unvisited = np.nonzero(judged == 0)[0] + 1
    return WalkSummary(unvisited, bool(truncated), int(steps))


@dataclass(frozen=True)
class SkipStats:
    """Aggregated skipped-point frequencies with binomial standard errors."""

    experiment: SkipExperiment
    ks: tuple[int, ...]
    freq: np.ndarray
    se: np.ndarray
    pairs: tuple[tuple[int, int], ...]
    pair_freq: np.ndarray
    pair_se: np.ndarray
    flags: np.ndarray  # per-replica layer indicators (replicas x len(ks))
    counts: np.ndarray  # per-replica number of skipped sites <= target
    truncated_replicas: int
    n_effective: int

    def to_record(self) -> dict:
        return {
            "experiment": self.experiment.to_record(),
            "ks": list(self.ks),
            "freq": [float(x) for x in self.freq],
            "se": [float(x) for x in self.se],
            "pairs": [list(p) for p in self.pairs],
            "pair_freq": [float(x) for x in self.pair_freq],
            "pair_se": [float(x) for x in self.pair_se],
            "truncated_replicas": self.truncated_replicas,
            "n_effective": self.n_effective,
        }


def _run_batch(exp: SkipExperiment, ks, levels, chunk: int = 1 << 15):
    thr = _thresholds(exp.chain, exp.stop_level)
    ks_arr = np.asarray(ks, dtype=np.int64)
    lv_arr = np.asarray(levels, dtype=np.int64)
    n = exp.replicas
    flags = np.zeros((n, ks_arr.size), dtype=np.uint8)
    counts = np.zeros(n, dtype=np.int64)
    lev_counts = np.zeros((n, lv_arr.size), dtype=np.int64)
    trunc = np.zeros(n, dtype=np.uint8)
    exact_tail = exp.mode == "exact-tail"
    r1 = _prob_to_u64(exp.ret1) if exact_tail else np.uint64(0)
    r2 = _prob_to_u64(exp.ret2) if exact_tail else np.uint64(0)
    for rep0 in range(0, n, chunk):
        m = min(chunk, n - rep0)
        _walk_batch(
            thr,
            exp.stop_level,
            exp.target_level,
            exp.max_steps,
            np.uint64(exp.seed),
            rep0,
            m,
            exact_tail,
            r1,
            r2,
            ks_arr,
            lv_arr,
            flags[rep0 : rep0 + m],
            counts[rep0 : rep0 + m],
            lev_counts[rep0 : rep0 + m],
            trunc[rep0 : rep0 + m],
        )
    return flags, counts, lev_counts, trunc


def estimate_skip(
    exp: SkipExperiment, ks, pairs: tuple[tuple[int, int], ...] = ()
) -> SkipStats:
    """Empirical layer-skip frequencies (and pair frequencies) with SEs.

    Truncated replicas (step budget exhausted) are excluded from the
    frequency denominators and reported.
    """
    ks = tuple(int(k) for k in ks)
    for k in ks:
        if 2 * k + 1 > exp.target_level:
            raise ValueError(f"layer k={k} needs target_level >= {2 * k + 1}")
    for j, k in pairs:
        if j not in ks or k not in ks:
            raise ValueError(f"pair ({j}, {k}) members must be in ks")
    if not ks:
        return SkipStats(
            exp,
            (),
            np.empty(0),
            np.empty(0),
            tuple(pairs),
            np.empty(0),
            np.empty(0),
            np.zeros((0, 0), dtype=np.uint8),
            np.zeros(0, dtype=np.int64),
            0,
            0,
        )
    flags, counts, _, trunc = _run_batch(exp, ks, ())
    ok = trunc == 0
    n_eff = int(np.count_nonzero(ok))
    if n_eff == 0:
        raise RuntimeError("all replicas exhausted the step budget")
    fl = flags[ok].astype(np.float64)
    freq = fl.mean(axis=0)
    se = np.sqrt(freq * (1.0 - freq) / n_eff)
    pf = np.empty(len(pairs))
    pse = np.empty(len(pairs))
    for i, (j, k) in enumerate(pairs):
        both = fl[:, ks.index(j)] * fl[:, ks.index(k)]
        pf[i] = both.mean()
        pse[i] = math.sqrt(pf[i] * (1.0 - pf[i]) / n_eff)
    return SkipStats(
        exp,
        ks,
        freq,
        se,
        tuple(pairs),
        pf,
        pse,
        flags,
        counts,
        int(np.count_nonzero(trunc)),
        n_eff,
    )


@dataclass(frozen=True)
class GrowthTable:
    """Distribution of skipped-site counts below each target level."""

    experiment: SkipExperiment
    levels: tuple[int, ...]
    counts: np.ndarray  # replicas x levels
    medians: np.ndarray
    truncated_replicas: int


def count_growth(exp: SkipExperiment, levels) -> GrowthTable:
    """Per-level skipped-site count distribution from one batch of walks.

    levels must be increasing and within the experiment's judged range;
    a single walk to the top stop level serves every level at once.
    """
    levels = tuple(int(x) for x in levels)
    if list(levels) != sorted(levels) or len(set(levels)) != len(levels):
        raise ValueError("levels must be strictly increasing")
    if levels[-1] > exp.target_level:
        raise ValueError(f"top level {levels[-1]} beyond target_level {exp.target_level}")
    _, _, lev_counts, trunc = _run_batch(exp, (), levels)
    ok = trunc == 0
    med = np.median(lev_counts[ok], axis=0) if np.any(ok) else np.full(len(levels), np.nan)
    return GrowthTable(exp, levels, lev_counts, med, int(np.count_nonzero(trunc)))


def growth_to_csv(table: GrowthTable, dest) -> None:
    """Columns replica, level, skip_count."""
    close = False
    if isinstance(dest, (str, bytes)):
        dest = open(dest, "w", newline="")
        close = True
    try:
        w = csv.writer(dest, lineterminator="\n")
        w.writerow(["replica", "level", "skip_count"])
        for rep in range(table.counts.shape[0]):
            for li, level in enumerate(table.levels):
                w.writerow([rep, level, int(table.counts[rep, li])])
    finally:
        if close:
            dest.close()


def growth_csv_text(table: GrowthTable) -> str:
    buf = io.StringIO()
    growth_to_csv(table, buf)
    return buf.getvalue()


def stats_json(stats: SkipStats) -> str:
    return json.dumps(stats.to_record(), sort_keys=True)
