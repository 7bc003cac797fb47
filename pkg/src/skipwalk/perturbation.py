"""Perturbation families and derived chain parameters for the (1,2) walk.

The walk steps +2 with probability p_n and -1 with probability q_n = 1 - p_n
from site n >= 1, and moves 0 -> 2 deterministically (p_0 = 1).  A family
r_n defines p_n = 1/3 + r_n; everything downstream (continued-fraction
tails, D-series, hitting probabilities) is a function of the family.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

FAMILIES = ("zero", "theorem2", "powerlaw", "table")

_R_LO = -1.0 / 3.0
_R_HI = 2.0 / 3.0


class FamilyError(ValueError):
    """Invalid perturbation family definition or out-of-range index."""


@dataclass(frozen=True)
class PerturbationSpec:
    """A perturbation family r_n.

    family:
        "zero"     -- r_n = 0 (critical chain, p_n = 1/3).
        "theorem2" -- r_n = (1/3)(1/n + 1/(n (log log n)^beta)) for
                      n >= n_min, and r_n = 1/3 below n_min (default 4).
        "powerlaw" -- r_n = c / n^alpha; generic probe family, flagged
                      non-canonical in serialized output.
        "table"    -- explicit finite list of r values, r_n = values[n-1].
    """

    family: str
    beta: float | None = None
    c: float | None = None
    alpha: float | None = None
    values: tuple[float, ...] | None = None
    n_min_override: int | None = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise FamilyError(f"unknown family {self.family!r}")
        if self.family == "theorem2":
            if self.beta is None or not self.beta > 0:
                raise FamilyError("theorem2 family needs beta > 0")
            if self.n_min_override is not None and self.n_min_override < 3:
                raise FamilyError("n_min_override must be >= 3 (log log n must be positive)")
        elif self.family == "powerlaw":
            if self.c is None or self.alpha is None or not self.alpha > 0:
                raise FamilyError("powerlaw family needs c and alpha > 0")
            if not (_R_LO < self.c < _R_HI):
                raise FamilyError(f"powerlaw c={self.c} leaves (-1/3, 2/3) at n=1")
        elif self.family == "table":
            if not self.values:
                raise FamilyError("table family needs a nonempty values list")
            vals = tuple(float(v) for v in self.values)
            for i, v in enumerate(vals):
                if not (_R_LO < v < _R_HI):
                    raise FamilyError(f"table value r_{i + 1}={v} outside (-1/3, 2/3)")
            object.__setattr__(self, "values", vals)

    @property
    def n_min(self) -> int:
        """First index where the theorem2 formula branch applies."""
        if self.n_min_override is not None:
            return self.n_min_override
        return 4

    @property
    def smooth(self) -> bool:
        """True when r extends to a smooth function of a real argument."""
        return self.family in ("zero", "theorem2", "powerlaw")


def r(spec: PerturbationSpec, n: int) -> float:
    """The perturbation r_n at a single index n >= 1."""
    if n < 1:
        raise FamilyError(f"index n={n} must be >= 1")
    if spec.family == "zero":
        return 0.0
    if spec.family == "theorem2":
        if n < spec.n_min:
            return 1.0 / 3.0
        # the formula can exceed 1/3 at small n for large beta (log log n
        # is still < 1 there); cap at the same value used below n_min so
        # p_n stays a probability -- the asymptotics are untouched
        return min((1.0 / n + 1.0 / (n * math.log(math.log(n)) ** spec.beta)) / 3.0, 1.0 / 3.0)
    if spec.family == "powerlaw":
        return spec.c / n**spec.alpha
    # table
    if n > len(spec.values):
        raise FamilyError(f"table family has {len(spec.values)} entries, index {n} out of range")
    return spec.values[n - 1]


def r_array(spec: PerturbationSpec, n_lo: int, n_hi: int) -> np.ndarray:
    """Vectorized r_n for n in [n_lo, n_hi]."""
    if n_lo < 1 or n_hi < n_lo:
        raise FamilyError(f"bad index range [{n_lo}, {n_hi}]")
    n = np.arange(n_lo, n_hi + 1, dtype=np.float64)
    if spec.family == "zero":
        return np.zeros_like(n)
    if spec.family == "theorem2":
        out = np.full_like(n, 1.0 / 3.0)
        mask = n >= spec.n_min
        nm = n[mask]
        out[mask] = np.minimum(
            (1.0 / nm + 1.0 / (nm * np.log(np.log(nm)) ** spec.beta)) / 3.0, 1.0 / 3.0
        )
        return out
    if spec.family == "powerlaw":
        return spec.c / n**spec.alpha
    if n_hi > len(spec.values):
        raise FamilyError(f"table family has {len(spec.values)} entries, index {n_hi} out of range")
    return np.asarray(spec.values[n_lo - 1 : n_hi], dtype=np.float64)


def r_continuous(spec: PerturbationSpec, x: np.ndarray) -> np.ndarray:
    """Smooth extension of r to real arguments (zero/theorem2/powerlaw only).

    Used by the D-series tail continuation; x must stay >= n_min for the
    theorem2 family.
    """
    if not spec.smooth:
        raise FamilyError("r_continuous needs a smooth family")
    x = np.asarray(x, dtype=np.float64)
    if spec.family == "zero":
        return np.zeros_like(x)
    if spec.family == "theorem2":
        if np.any(x < spec.n_min):
            raise FamilyError("continuous evaluation below the formula branch")
        return np.minimum((1.0 / x + 1.0 / (x * np.log(np.log(x)) ** spec.beta)) / 3.0, 1.0 / 3.0)
    return spec.c / x**spec.alpha


@dataclass(frozen=True)
class ChainParams:
    """Transition parameters p_n, q_n and the ratio a_n = q_n / p_n.

    p_0 = 1 always; for n >= 1, p_n = 1/3 + r_n, which the validated range
    r_n in (-1/3, 2/3) keeps inside (0, 1).
    """

    spec: PerturbationSpec

    def r(self, n: int) -> float:
        return r(self.spec, n)

    def p(self, n: int) -> float:
        if n == 0:
            return 1.0
        return 1.0 / 3.0 + r(self.spec, n)

    def q(self, n: int) -> float:
        if n == 0:
            return 0.0
        return 1.0 - self.p(n)

    def a(self, n: int) -> float:
        pn = self.p(n)
        return (1.0 - pn) / pn

    def p_array(self, n_lo: int, n_hi: int) -> np.ndarray:
        """p_n for n in [n_lo, n_hi]; index 0 allowed (p_0 = 1)."""
        if n_lo == 0:
            rest = self.p_array(1, n_hi) if n_hi >= 1 else np.empty(0)
            return np.concatenate([[1.0], rest])
        return 1.0 / 3.0 + r_array(self.spec, n_lo, n_hi)

    def a_array(self, n_lo: int, n_hi: int) -> np.ndarray:
        p = self.p_array(max(n_lo, 1), n_hi)
        if n_lo == 0:
            raise FamilyError("a_0 is undefined (p_0 = 1)")
        return (1.0 - p) / p


@dataclass(frozen=True)
class RegularityReport:
    """Finite-range proxies for the standing hypotheses on r_n.

    All quantities are finite-sample measurements, not asymptotic claims:
    `ratio_sup` is sup |r_n - r_{n+1}| / r_n^2 over the range (proxy for
    the quadratic-difference condition) and `inv_a_divergent` flags whether
    the partial sums of 1/a_n keep growing linearly (solution-uniqueness
    check for the tail recursion).
    """

    n_lo: int
    n_hi: int
    monotone: bool
    strictly_monotone: bool
    ratio_sup: float
    inv_a_sum: float
    inv_a_divergent: bool
    inconclusive: bool


def check_regularity(spec: PerturbationSpec, n_lo: int, n_hi: int) -> RegularityReport:
    """Probe r_n monotonicity, the difference/square ratio, and sum 1/a_n."""
    if n_hi < n_lo or n_lo < 1:
        raise FamilyError(f"bad index range [{n_lo}, {n_hi}]")
    rv = r_array(spec, n_lo, n_hi)
    inconclusive = rv.size < 3
    if rv.size < 2:
        return RegularityReport(n_lo, n_hi, True, False, 0.0, 0.0, False, True)
    diff = rv[:-1] - rv[1:]
    monotone = bool(np.all(diff >= 0.0))
    strict = bool(np.all(diff > 0.0))
    nz = rv[:-1] != 0.0
    ratio_sup = float(np.max(np.abs(diff[nz]) / rv[:-1][nz] ** 2)) if np.any(nz) else 0.0
    p = 1.0 / 3.0 + rv
    inv_a = p / (1.0 - p)
    s = float(np.sum(inv_a))
    # Linear growth of the partial sums over the two halves signals divergence.
    half = rv.size // 2
    s1 = float(np.sum(inv_a[:half]))
    s2 = s - s1
    divergent = bool(half >= 1 and s2 >= 0.5 * s1 and s2 > 0)
    return RegularityReport(n_lo, n_hi, monotone, strict, ratio_sup, s, divergent, inconclusive)


def spec_to_json(spec: PerturbationSpec) -> str:
    """Canonical JSON form; schema {"family", "beta"?, "c"?, "alpha"?, "values"?}."""
    doc: dict = {"family": spec.family}
    if spec.beta is not None:
        doc["beta"] = spec.beta
    if spec.c is not None:
        doc["c"] = spec.c
    if spec.alpha is not None:
        doc["alpha"] = spec.alpha
    if spec.values is not None:
        doc["values"] = list(spec.values)
    if spec.n_min_override is not None:
        doc["n_min_override"] = spec.n_min_override
    if spec.family == "powerlaw":
        doc["non_canonical"] = True  # probe family, not one of the studied laws
    return json.dumps(doc, sort_keys=True)


def spec_from_json(text: str) -> PerturbationSpec:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise FamilyError(f"invalid spec JSON: {e}") from e
    if not isinstance(doc, dict) or "family" not in doc:
        raise FamilyError("spec JSON must be an object with a 'family' key")
    return PerturbationSpec(
        family=doc["family"],
        beta=doc.get("beta"),
        c=doc.get("c"),
        alpha=doc.get("alpha"),
        values=tuple(doc["values"]) if doc.get("values") is not None else None,
        n_min_override=doc.get("n_min_override"),
    )
