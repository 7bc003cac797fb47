"""Exact first-passage and skipped-point probabilities for the (1,2) walk.

Every probability here is an instance of one boundary-value problem: the
harmonic equation h(n) = q_n h(n-1) + p_n h(n+2) on an interval, with given
values on the absorbing states reachable in one step outside it (n-1 below,
n+1 and n+2 above).  The system is banded (each row couples n-1, n, n+2)
and solved by banded elimination, which is stable where forward shooting
is not.  Infinite-horizon escape probabilities use the D-series identities
1 - P(a,a+1,inf) = 1/D(a) and 1 - P(a,a+2,inf) = (1 + U_{a+1})/D(a)
rather than large-horizon truncation.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_banded

from .dseries import DTable, NotConvergedError, d_partial
from .perturbation import ChainParams
from .tails import TailTable

RESIDUAL_LIMIT = 1e-10


class SolveError(RuntimeError):
    """Banded solve failed or produced an unacceptable residual."""


@dataclass(frozen=True)
class HittingSolution:
    """One boundary-value query result with its linear-system residual."""

    kind: str
    params: dict
    value: float
    residual: float

    def to_record(self) -> dict:
        return {
            "kind": self.kind,
            "params": self.params,
            "value": self.value,
            "residual": self.residual,
        }


@dataclass(frozen=True)
class SkipProbability:
    """Probability that layer k (or both layers j and k) holds a skipped site."""

    k: int
    value: float
    channels: dict
    horizon: int
    j: int | None = None

    def to_record(self) -> dict:
        params = {"k": self.k} if self.j is None else {"j": self.j, "k": self.k}
        return {
            "kind": "skip" if self.j is None else "joint_skip",
            "params": params,
            "value": self.value,
            "channels": self.channels,
            "horizon": self.horizon,
        }


def solve_interval(
    chain: ChainParams, lo: int, hi: int, boundary: dict[int, float]
) -> tuple[np.ndarray, float]:
    """Harmonic values h on [lo, hi] for the given absorbing boundary.

    boundary must assign every state reachable in one step outside the
    interval: lo-1 (unless lo = 0, where p_0 = 1 shields it) and hi+1,
    hi+2.  Returns (h, residual).
    """
    if hi < lo:
        raise ValueError(f"empty interval [{lo}, {hi}]")
    if lo < 0:
        raise ValueError("states are nonnegative")
    needed = [hi + 1, hi + 2] if hi >= lo else []
    if lo >= 1:
        needed.append(lo - 1)
    for s in needed:
        if s not in boundary:
            raise ValueError(f"boundary value for state {s} missing")
    n = hi - lo + 1
    p = chain.p_array(lo, hi)
    q = 1.0 - p
    ab = np.zeros((4, n))
    rhs = np.zeros(n)
    ab[2, :] = 1.0  # diagonal
    for i in range(n):
        state = lo + i
        up = state + 2
        if up <= hi:
            ab[0, i + 2] = -p[i]
        else:
            rhs[i] += p[i] * boundary[up]
        if state == 0:
            continue  # p_0 = 1, no down move
        down = state - 1
        if down >= lo:
            ab[3, i - 1] = -q[i]
        else:
            rhs[i] += q[i] * boundary[down]
    try:
        h = solve_banded((1, 2), ab, rhs)
    except Exception as e:  # singular guarded; cannot occur for p in (0,1)
        raise SolveError(f"banded solve failed on [{lo}, {hi}]: {e}") from e
    # residual by direct stencil evaluation
    ax = h.copy()
    if n > 2:
        ax[: n - 2] -= p[: n - 2] * h[2:]
    if n > 1:
        ax[1:] -= q[1:] * h[:-1]  # i = 0 couples below the interval (or is state 0)
    residual = float(np.max(np.abs(ax - rhs)))
    if not np.isfinite(residual) or residual > RESIDUAL_LIMIT:
        raise SolveError(f"residual {residual:.3e} exceeds {RESIDUAL_LIMIT} on [{lo}, {hi}]")
    return h, residual


def _abc_guard(a: int, b: int, c: int) -> None:
    if not (1 <= a <= b <= c):
        raise ValueError(f"need 1 <= a <= b <= c, got ({a}, {b}, {c})")
    if a == c and a != b:
        raise ValueError(f"degenerate barrier a = c = {a}")


def p_abc(chain: ChainParams, a: int, b: int, c: int) -> HittingSolution:
    """P(walk from b hits [0,a] before [c, inf))."""
    _abc_guard(a, b, c)
    params = {"a": a, "b": b, "c": c}
    if b <= a:
        return HittingSolution("P", params, 1.0, 0.0)
    if b >= c:
        return HittingSolution("P", params, 0.0, 0.0)
    h, residual = solve_interval(chain, a + 1, c - 1, {a: 1.0, c: 0.0, c + 1: 0.0})
    return HittingSolution("P", params, float(h[b - a - 1]), residual)


def _q_variant(chain: ChainParams, a: int, b: int, c: int, at_c: float, at_c1: float, kind: str):
    _abc_guard(a, b, c)
    params = {"a": a, "b": b, "c": c}
    if b >= c:
        # already in [c, inf); entry point is b itself
        value = at_c if b == c else (at_c1 if b == c + 1 else math.nan)
        if math.isnan(value):
            raise ValueError(f"start b={b} beyond c+1={c + 1} has no entry point")
        return HittingSolution(kind, params, value, 0.0)
    if b <= a:
        return HittingSolution(kind, params, 0.0, 0.0)
    h, residual = solve_interval(chain, a + 1, c - 1, {a: 0.0, c: at_c, c + 1: at_c1})
    return HittingSolution(kind, params, float(h[b - a - 1]), residual)


def q_abc(chain: ChainParams, a: int, b: int, c: int) -> HittingSolution:
    """Q(a,b,c): hits [c, inf) before a."""
    return _q_variant(chain, a, b, c, 1.0, 1.0, "Q")


def q1_abc(chain: ChainParams, a: int, b: int, c: int) -> HittingSolution:
    """Q1(a,b,c): hits [c, inf) before a, entering at c."""
    return _q_variant(chain, a, b, c, 1.0, 0.0, "Q1")


def q2_abc(chain: ChainParams, a: int, b: int, c: int) -> HittingSolution:
    """Q2(a,b,c): hits [c, inf) before a, entering at c+1."""
    return _q_variant(chain, a, b, c, 0.0, 1.0, "Q2")


def sandwich_bounds(tails: TailTable, a: int, b: int, c: int) -> tuple[float, float]:
    """U-product bounds enclosing P(a,b,c), for 1 <= a <= b <= c.

    lower = sum_{i=b}^{c-1} V_i / (1 + sum_{i=a+1}^{c-1} V_i) and the upper
    bound extends both sums to c, where V_i = U_{a+1} ... U_i (V_a = 1).
    """
    _abc_guard(a, b, c)
    u = tails.U_slice(a + 1, c)
    v = np.cumprod(u)  # v[i - a - 1] = V_i for i in [a+1, c]
    s_all = np.concatenate([[1.0], v])  # V_a .. V_c

    def seg(lo: int, hi: int) -> float:
        if hi < lo:
            return 0.0
        return float(math.fsum(s_all[lo - a : hi - a + 1]))

    lower = seg(b, c - 1) / (1.0 + seg(a + 1, c - 1))
    upper = seg(b, c) / (1.0 + seg(a + 1, c))
    return lower, upper


def escape_bounds_one_step(tails: TailTable, a: int, c: int) -> tuple[float, float]:
    """[1/D(a,c+1), 1/D(a,c)]: bounds on 1 - P(a, a+1, c) for c > a + 1."""
    if c <= a + 1:
        raise ValueError("need c > a + 1")
    return 1.0 / d_partial(tails, a, c + 1), 1.0 / d_partial(tails, a, c)


def escape_bounds_two_step(tails: TailTable, a: int, c: int) -> tuple[float, float]:
    """[(1+U_{a+1})/D(a,c+1), (1+U_{a+1})/D(a,c)]: bounds on 1 - P(a, a+2, c)."""
    if c <= a + 2:
        raise ValueError("need c > a + 2")
    w = 1.0 + tails.U(a + 1)
    return w / d_partial(tails, a, c + 1), w / d_partial(tails, a, c)


def escape_to_infinity(
    chain: ChainParams, tails: TailTable, dtab: DTable, a: int, b: int
) -> HittingSolution:
    """1 - P(a, b, inf) for b in {a+1, a+2} via the D-series identities."""
    if b not in (a + 1, a + 2):
        raise ValueError(f"b must be a+1 or a+2, got a={a}, b={b}")
    params = {"a": a, "b": b}
    d = dtab.require(a)  # inf when divergence-suspected -> escape 0 (recurrent)
    if math.isinf(d):
        return HittingSolution("escape", params, 0.0, 0.0)
    value = 1.0 / d if b == a + 1 else (1.0 + tails.U(a + 1)) / d
    return HittingSolution("escape", params, value, 0.0)


def layer_entry(chain: ChainParams, k: int) -> tuple[float, float]:
    """(h_k(1), h_k(2)): first entry of layer {2k, 2k+1} at 2k vs 2k+1.

    Start is state 0 (deterministic first move to 2); both splitting
    probabilities are solved independently and must sum to 1.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    h1, _ = solve_interval(chain, 0, 2 * k - 1, {2 * k: 1.0, 2 * k + 1: 0.0})
    h2, _ = solve_interval(chain, 0, 2 * k - 1, {2 * k: 0.0, 2 * k + 1: 1.0})
    return float(h1[0]), float(h2[0])


def eta(chain: ChainParams, k: int, j: int) -> tuple[float, float]:
    """(eta_{k,j}(1), eta_{k,j}(2)): entry of [j+1, inf) at j+1 vs j+2, from k."""
    if not 1 <= k <= j:
        raise ValueError(f"need 1 <= k <= j, got k={k}, j={j}")
    e1, _ = solve_interval(chain, 0, j, {j + 1: 1.0, j + 2: 0.0})
    e2, _ = solve_interval(chain, 0, j, {j + 1: 0.0, j + 2: 1.0})
    return float(e1[k]), float(e2[k])


def skip_prob(chain: ChainParams, tails: TailTable, dtab: DTable, k: int) -> SkipProbability:
    """P(layer k contains a skipped site), assembled from the two channels.

    Channel B1: enter at 2k, jump the layer top (2k+1) and never return to
    it; channel B2: enter at 2k+1 with 2k never visited afterwards.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    h1, h2 = layer_entry(chain, k)
    _, eta2 = eta(chain, 2 * k, 2 * k)
    esc_top = escape_to_infinity(chain, tails, dtab, 2 * k + 1, 2 * k + 2).value
    esc_bot = escape_to_infinity(chain, tails, dtab, 2 * k, 2 * k + 1).value
    b1 = h1 * eta2 * esc_top
    b2 = h2 * esc_bot
    return SkipProbability(k, b1 + b2, {"B1": b1, "B2": b2}, dtab.n_anchor)


def joint_skip_prob(
    chain: ChainParams, tails: TailTable, dtab: DTable, j: int, k: int
) -> SkipProbability:
    """P(both layer j and layer k contain skipped sites), j < k.

    Four channels by which site of each layer is skipped (top/top, top/
    bottom, bottom/bottom, bottom/top), each a product of a layer-entry
    split, interval crossing probabilities Q1/Q2, and an escape factor.
    """
    if not 1 <= j < k:
        raise ValueError(f"need 1 <= j < k, got j={j}, k={k}")
    hj1, hj2 = layer_entry(chain, j)
    _, eta2j = eta(chain, 2 * j, 2 * j)
    esc_top = escape_to_infinity(chain, tails, dtab, 2 * k + 1, 2 * k + 2).value
    esc_bot = escape_to_infinity(chain, tails, dtab, 2 * k, 2 * k + 1).value
    e1 = (
        hj1
        * eta2j
        * q1_abc(chain, 2 * j + 1, 2 * j + 2, 2 * k).value
        * q2_abc(chain, 2 * j + 1, 2 * k, 2 * k + 1).value
        * esc_top
    )
    e2 = hj1 * eta2j * q2_abc(chain, 2 * j + 1, 2 * j + 2, 2 * k).value * esc_bot
    e3 = hj2 * q2_abc(chain, 2 * j, 2 * j + 1, 2 * k).value * esc_bot
    e4 = (
        hj2
        * q1_abc(chain, 2 * j, 2 * j + 1, 2 * k).value
        * q2_abc(chain, 2 * j, 2 * k, 2 * k + 1).value
        * esc_top
    )
    return SkipProbability(
        k, e1 + e2 + e3 + e4, {"E1": e1, "E2": e2, "E3": e3, "E4": e4}, dtab.n_anchor, j=j
    )


def ab_ratios(chain: ChainParams, j: int, k: int) -> tuple[float, float]:
    """The two conditional crossing ratios A(j,k), B(j,k); both are <= 1.

    A(j,k) = Q1(2j+1,2j+2,2k)/Q(2j+1,2j+2,2k) * Q2(2j+1,2k,2k+1)
             + Q2(2j+1,2j+2,2k)/Q(2j+1,2j+2,2k), and B(j,k) is the same
    with the lower barrier at 2j and start 2j+1.
    """
    if not 1 <= j < k:
        raise ValueError(f"need 1 <= j < k, got j={j}, k={k}")

    def ratio(a: int, b: int) -> float:
        qq = q_abc(chain, a, b, 2 * k).value
        if qq <= 0.0:
            raise SolveError(f"Q({a},{b},{2 * k}) vanished")  # guarded; p_n in (0,1)
        q1 = q1_abc(chain, a, b, 2 * k).value
        q2 = q2_abc(chain, a, b, 2 * k).value
        tail2 = q2_abc(chain, a, 2 * k, 2 * k + 1).value
        return (q1 / qq) * tail2 + q2 / qq

    return ratio(2 * j + 1, 2 * j + 2), ratio(2 * j, 2 * j + 1)


def skip_prob_bounds(chain: ChainParams, dtab: DTable, k: int) -> tuple[float, float]:
    """[p_{2k}/D(2k+1), 1/D(2k)] enclosing P(layer k skipped) for large k."""
    return chain.p(2 * k) / dtab.require(2 * k + 1), 1.0 / dtab.require(2 * k)


def joint_skip_bounds(
    chain: ChainParams, tails: TailTable, dtab: DTable, j: int, k: int, eps: float = 0.05
) -> tuple[float, float]:
    """Two-sided enclosure of the joint layer-skip probability, j < k.

    Lower: p_{2j} p_{2k} / ((1+eps) D(2j,2k) D(2k+1)).  Upper: (27/11)
    (1+eps)^2 P(j skipped) P(k skipped) D(2j+1)/D(2j+1,2k).  Valid past the
    eps-threshold index (see k0_epsilon); the D-ratio slack eps is the same
    parameter in both.
    """
    if not 1 <= j < k:
        raise ValueError(f"need 1 <= j < k, got j={j}, k={k}")
    lower = (
        chain.p(2 * j)
        * chain.p(2 * k)
        / ((1.0 + eps) * d_partial(tails, 2 * j, 2 * k) * dtab.require(2 * k + 1))
    )
    pj = skip_prob(chain, tails, dtab, j).value
    pk = skip_prob(chain, tails, dtab, k).value
    upper = (
        (27.0 / 11.0)
        * (1.0 + eps) ** 2
        * pj
        * pk
        * dtab.require(2 * j + 1)
        / d_partial(tails, 2 * j + 1, 2 * k)
    )
    return lower, upper


def k0_epsilon(
    chain: ChainParams, tails: TailTable, dtab: DTable, eps: float = 0.05, k_max: int = 10**4
) -> int:
    """Operational threshold index for the asymptotic skip-probability bounds.

    Returns the smallest k such that, for every k' in [k, k_max],
    D(2k'+1)/D(2k') <= 1 + eps and eta_{2k',2k'}(2) >= 11/27 - 1e-6.  The
    D-ratio part is checked over the whole range (it is what the bounds
    consume at both indices of a pair); the eta part is spot-checked on a
    geometric subgrid since eta varies slowly and monotonically there.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    hi = min(k_max, (dtab.m_hi - 1) // 2)
    ds = np.array([dtab.require(m) for m in range(2, 2 * hi + 2)])
    ratios = ds[1::2] / ds[0::2]  # D(2k+1)/D(2k) for k = 1..hi
    ok = ratios <= 1.0 + eps
    # last failure anywhere in range pushes the threshold past it
    bad = np.nonzero(~ok)[0]
    k_ratio = 1 if bad.size == 0 else int(bad[-1]) + 2
    k_probe = k_ratio
    grid = sorted({k_probe, 2 * k_probe, 4 * k_probe, hi})
    for kk in grid:
        if kk > hi:
            continue
        _, e2 = eta(chain, 2 * kk, 2 * kk)
        if e2 < 11.0 / 27.0 - 1e-6:
            raise SolveError(f"eta bound fails at k={kk}; no valid threshold below k_max")
    return k_probe
