"""Finite-vs-infinite skipped-point classification and recurrence checks.

Two classification routes.  The symbolic route is a pure step function of
the perturbation exponent beta, with the probability qualifier attached
verbatim: above 1 the skipped-point count is almost surely finite, at or
below 1 it is infinite with probability at least 11/27.  The numeric route
inspects tabulated D values: the finite/infinite dichotomy is governed by
convergence of sum 1/(D(n) log n) together with the side condition
D(n) <= delta n log n, neither of which is finitely decidable, so numeric
verdicts are labeled heuristic and carry their diagnostics.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .dseries import DTable, SeriesDiagnostics, series_diagnostics
from .tails import TailTable

FINITE = "FiniteSkips"
INFINITE = "InfiniteSkips"
INCONCLUSIVE = "Inconclusive"

LOWER_PROB = 11.0 / 27.0  # guaranteed probability of the infinite verdict


@dataclass(frozen=True)
class Verdict:
    """Classification outcome plus how much to trust it."""

    verdict: str
    qualifier: str
    heuristic: bool
    diagnostics: dict

    def to_json(self) -> str:
        return json.dumps(
            {
                "verdict": self.verdict,
                "qualifier": self.qualifier,
                "heuristic": self.heuristic,
                "diagnostics": self.diagnostics,
            },
            sort_keys=True,
        )


def classify_theorem2(beta: float) -> Verdict:
    """Symbolic verdict for the loglog-corrected near-critical family."""
    if not beta > 0:
        raise ValueError("beta must be positive")
    if beta > 1.0:
        return Verdict(FINITE, "almost surely", False, {"beta": beta})
    return Verdict(
        INFINITE, f"with probability >= 11/27 ({LOWER_PROB:.6f})", False, {"beta": beta}
    )


def _diag_dict(diag: SeriesDiagnostics) -> dict:
    return {
        "partial_sum": diag.partial_sum,
        "increment_first": diag.increment_first,
        "increment_last": diag.increment_last,
        "slope": diag.slope,
        "beta_hat": diag.beta_hat,
        "delta_implied": diag.delta_implied,
    }


def classify_numeric(
    ns: np.ndarray, ds: np.ndarray, delta_probe: float = 2.0
) -> Verdict:
    """Heuristic verdict from tabulated D(n) over index array ns.

    The series sum 1/(D(n) log n) converges iff D grows faster than
    n log n (log log n)-style corrections allow; diagnostics separate three
    regimes:

    * slope of log D vs log n clearly above 1 -> convergent trend;
    * slope ~ 1: decided by the fitted loglog exponent beta_hat, with a
      dead band around 1 mapped to inconclusive;
    * otherwise the geometric-segment increments decide directly.

    Also reports whether D(n) <= delta_probe * n log n throughout (the
    side condition attached to the divergent case); delta_fit is the
    smallest delta that would satisfy it.
    """
    diag = series_diagnostics(np.asarray(ns), np.asarray(ds))
    out = _diag_dict(diag)
    out["delta_probe"] = delta_probe
    out["delta_fit"] = diag.delta_implied
    out["side_condition_holds"] = bool(diag.delta_implied <= delta_probe)
    if diag.slope > 1.25:
        verdict, qual = FINITE, "heuristic: D grows polynomially faster than n"
    elif diag.slope < 0.75:
        verdict, qual = INFINITE, "heuristic: D grows slower than n"
    elif diag.beta_hat is not None:
        out["beta_hat"] = diag.beta_hat
        if diag.beta_hat >= 1.25:
            verdict, qual = FINITE, "heuristic: loglog exponent above 1"
        elif diag.beta_hat <= 1.05:
            verdict, qual = INFINITE, "heuristic: loglog exponent at most 1"
        else:
            verdict, qual = INCONCLUSIVE, "loglog exponent in the dead band (1.05, 1.25)"
    elif diag.bounded_trend:
        verdict, qual = FINITE, "heuristic: series increments decaying"
    else:
        verdict, qual = INFINITE, "heuristic: series increments not decaying"
    return Verdict(verdict, qual, True, out)


def classify_table(dtab: DTable, n_from: int, n_to: int, delta_probe: float = 2.0) -> Verdict:
    """classify_numeric over a computed DTable range."""
    if dtab.status != "converged":
        return Verdict(
            INCONCLUSIVE,
            f"D table status {dtab.status}: not enough converged values",
            True,
            {"status": dtab.status},
        )
    if n_from < max(2, dtab.m_lo) or n_to > dtab.m_hi:
        raise ValueError(f"range [{n_from}, {n_to}] outside table [{dtab.m_lo}, {dtab.m_hi}]")
    ns = np.arange(n_from, n_to + 1)
    ds = dtab.values[n_from - dtab.m_lo : n_to - dtab.m_lo + 1]
    return classify_numeric(ns, ds, delta_probe)


TRANSIENT = "transient"
RECURRENT = "recurrent"


def recurrence_check(tails: TailTable, n_terms: int | None = None) -> Verdict:
    """Transience test: does sum over n of prod_{i<=n} U_i converge?

    The products are evaluated in log space from the tail table.  Verdicts:
    partial sums flattening with geometrically decaying terms -> transient;
    terms bounded away from zero -> recurrent; anything else inconclusive.
    """
    lo = max(tails.n_lo, 1)
    hi = tails.n_hi if n_terms is None else min(tails.n_hi, lo + n_terms - 1)
    u = tails.U_slice(lo, hi)
    log_terms = np.cumsum(np.log(u))
    terms = np.exp(log_terms)
    total = float(math.fsum(terms))
    last = float(terms[-1])
    first = float(terms[0])
    diag = {
        "terms_used": int(terms.size),
        "partial_sum": total,
        "first_term": first,
        "last_term": last,
    }
    if last > 0.5 * first:
        return Verdict(RECURRENT, "terms not decaying", False, diag)
    # geometric-tail certificate: compare the last two halves
    half = terms.size // 2
    tail_ratio = float(np.sum(terms[half:]) / max(np.sum(terms[:half]), 1e-300))
    diag["tail_ratio"] = tail_ratio
    if tail_ratio < 0.5 and last < 1e-6 * first:
        return Verdict(TRANSIENT, "partial sums converged", False, diag)
    if tail_ratio < 1.0:
        return Verdict(TRANSIENT, "heuristic: decaying tail mass", True, diag)
    return Verdict(INCONCLUSIVE, "tail mass not decaying but terms shrink", True, diag)
