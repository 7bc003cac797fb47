"""Continued-fraction tails f^(n) and the reciprocals U_n = 1/xi_n.

The positive solution of xi_n = (1 + 1/xi_{n+1}) / a_n is evaluated through
the tail recursion f^(n) = a_{n+1} / (1 + f^(n+1)), run backward from a deep
start index.  Backward evaluation is the self-correcting direction: a seed
error contracts by roughly a_{n+1}/(1+f)^2 (about 1/2 near the a_n -> 2
fixed point) per step, so a modest buffer of extra steps above the window
yields machine-accurate tails.  The identity U_{n+1} = f^(n) converts the
tail table into the xi reciprocals.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .perturbation import ChainParams


class NonContractingError(RuntimeError):
    """Backward recursion failed to contract; carries the offending index."""

    def __init__(self, index: int, factor: float):
        super().__init__(
            f"tail recursion not contracting near n={index} (local factor {factor:.6g} >= 1)"
        )
        self.index = index
        self.factor = factor


@njit(cache=True)
def _backward_pass(a: np.ndarray, f_seed: float) -> np.ndarray:
    """f[k] for k = 0..m-1 given a[k] = a_{n_start+k+1} and f[m-1] seeded.

    a has length m; the recursion is f[k] = a[k] / (1 + f[k+1]) with
    f[m-1] = f_seed already the tail value at the deepest index.
    """
    m = a.shape[0]
    f = np.empty(m)
    f[m - 1] = f_seed
    for k in range(m - 2, -1, -1):
        f[k] = a[k] / (1.0 + f[k + 1])
    return f


@dataclass(frozen=True)
class TailTable:
    """Tail values on an index window, with a seeding-error certificate.

    f[i] is f^(n) at n = n_lo + i; xi_inv[i] is U_n = 1/xi_n at n = n_lo + i.
    err_bound bounds the contamination of any reported value by the backward
    seeding error (largest at n_hi, contracted further below it).
    """

    chain: ChainParams
    n_lo: int
    n_hi: int
    f: np.ndarray
    xi_inv: np.ndarray
    buffer_used: int
    err_bound: float

    def f_at(self, n: int) -> float:
        if not self.n_lo <= n <= self.n_hi:
            raise IndexError(f"f^({n}) outside window [{self.n_lo}, {self.n_hi}]")
        return float(self.f[n - self.n_lo])

    def U(self, n: int) -> float:
        if not self.n_lo <= n <= self.n_hi:
            raise IndexError(f"U_{n} outside window [{self.n_lo}, {self.n_hi}]")
        return float(self.xi_inv[n - self.n_lo])

    def U_slice(self, lo: int, hi: int) -> np.ndarray:
        """U_n for n in [lo, hi] as a view."""
        if lo < self.n_lo or hi > self.n_hi:
            raise IndexError(f"[{lo}, {hi}] outside window [{self.n_lo}, {self.n_hi}]")
        return self.xi_inv[lo - self.n_lo : hi - self.n_lo + 1]


def _seed_value(a_deep: float) -> float:
    # Local fixed point of x = a/(1+x); equals 1 - 3r + O(r^2) when
    # a = 2 - 9r + O(r^2), matching the asymptotic tail expansion.
    return 0.5 * (-1.0 + math.sqrt(1.0 + 4.0 * a_deep))


def compute_tails(chain: ChainParams, n_lo: int, n_hi: int, tol: float = 1e-14) -> TailTable:
    """Backward-recursed tail table on [n_lo, n_hi] with seeding error <= tol."""
    if n_lo < 1 or n_hi < n_lo:
        raise ValueError(f"bad window [{n_lo}, {n_hi}]")
    if not tol > 0:
        raise ValueError("tol must be positive")
    err0 = 1.0  # conservative cap on the seed error; f^(n) in (0, max a_n)
    buffer = max(16, int(math.ceil(math.log(err0 / tol) / math.log(2.0))) + 16)
    max_buffer = max(20000, 64 * buffer)
    while True:
        n_start = n_lo - 1  # f^(n_lo - 1) provides U_{n_lo}
        n_deep = n_hi + buffer
        # a[k] corresponds to a_{n_start + k + 1}, k = 0..n_deep-n_start-1
        a = chain.a_array(n_start + 1, n_deep)
        f = _backward_pass(a, _seed_value(a[-1]))
        # local error-contraction factor per backward step
        factors = f[:-1] / (1.0 + f[1:])
        # contamination at index n_start+k: err0 * prod factors[k:]
        logf = np.log(factors[n_hi - n_start :])
        cum = err0 * math.exp(float(np.sum(logf)))
        if cum <= tol:
            err_bound = cum
            break
        buffer_factors = factors[n_hi - n_start :]
        if np.exp(np.mean(np.log(buffer_factors))) >= 0.999 or buffer >= max_buffer:
            worst = int(np.argmax(buffer_factors))
            raise NonContractingError(n_hi + worst, float(buffer_factors[worst]))
        buffer *= 2
    window = slice(n_lo - n_start, n_hi - n_start + 1)
    f_win = f[window].copy()
    # U_n = f^(n-1)
    u_win = f[n_lo - n_start - 1 : n_hi - n_start].copy()
    if np.any(f_win <= 0) or np.any(u_win <= 0):
        raise NonContractingError(n_lo, float(np.min(f_win)))
    return TailTable(chain, n_lo, n_hi, f_win, u_win, buffer, err_bound)


def monotonicity_index(table: TailTable, strict: bool = False) -> int | None:
    """Smallest n with U_m (weakly) increasing for all m >= n in the window.

    Returns None when even the last adjacent pair decreases.  Weak
    comparison is the default so that constant sequences (zero family)
    qualify from n_lo on; pass strict=True to demand strict increase.
    """
    u = table.xi_inv
    if u.size < 2:
        return table.n_lo
    diffs = u[1:] - u[:-1]
    ok = diffs > 0 if strict else diffs >= 0
    bad = np.nonzero(~ok)[0]
    if bad.size == 0:
        return table.n_lo
    last_bad = int(bad[-1])
    if last_bad == diffs.size - 1:
        return None
    return table.n_lo + last_bad + 1


def tails_to_csv(table: TailTable, dest) -> None:
    """Write columns n, r_n, a_n, f_n, xi_inv_n to a path or text file."""
    close = False
    if isinstance(dest, (str, bytes)):
        dest = open(dest, "w", newline="")
        close = True
    try:
        w = csv.writer(dest, lineterminator="\n")
        w.writerow(["n", "r_n", "a_n", "f_n", "xi_inv_n"])
        for i, n in enumerate(range(table.n_lo, table.n_hi + 1)):
            w.writerow(
                [
                    n,
                    repr(table.chain.r(n)),
                    repr(table.chain.a(n)),
                    repr(float(table.f[i])),
                    repr(float(table.xi_inv[i])),
                ]
            )
    finally:
        if close:
            dest.close()


def tails_csv_text(table: TailTable) -> str:
    buf = io.StringIO()
    tails_to_csv(table, buf)
    return buf.getvalue()
