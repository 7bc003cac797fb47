"""Command-line front end.

Subcommands map one-to-one onto the library modules: ``tails`` exports the
continued-fraction tail table, ``dseries`` the D-table and criterion
series, ``exact`` evaluates skip and joint-skip probabilities, ``simulate``
runs Monte Carlo experiments, ``classify`` prints verdicts, and ``verify``
runs the full inequality suite.  Every subcommand is deterministic given
its arguments (including seeds): output carries no timestamps and floats
are serialized with repr, so repeated runs are byte-identical.

Exit codes: 0 success, 2 configuration error, 3 verification failure,
4 numerical non-convergence.
"""
from __future__ import annotations

import argparse
import io
import json
import math
import os
import sys

import numpy as np

from . import criteria, montecarlo
from .dseries import (
    DTable,
    NotConvergedError,
    build_d_table,
    d_partial,
    d_table_to_csv,
    series_to_csv,
)
from .exact import (
    SolveError,
    ab_ratios,
    eta,
    joint_skip_bounds,
    joint_skip_prob,
    k0_epsilon,
    p_abc,
    q1_abc,
    q2_abc,
    q_abc,
    sandwich_bounds,
    skip_prob,
    skip_prob_bounds,
    solve_interval,
)
from .perturbation import ChainParams, FamilyError, PerturbationSpec, spec_from_json, spec_to_json
from .tails import NonContractingError, compute_tails, tails_to_csv

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_VERIFY = 3
EXIT_NUMERIC = 4


class ConfigError(ValueError):
    pass


def _load_spec(text: str) -> PerturbationSpec:
    """--spec accepts inline JSON or a path to a JSON file."""
    if text.lstrip().startswith("{"):
        raw = text
    else:
        if not os.path.exists(text):
            raise ConfigError(f"spec file not found: {text}")
        with open(text) as fh:
            raw = fh.read()
    try:
        return spec_from_json(raw)
    except (FamilyError, ValueError, KeyError) as exc:
        raise ConfigError(f"bad perturbation spec: {exc}") from exc


def _emit(text: str, out: str | None) -> None:
    if out:
        with open(out, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _build(chain: ChainParams, n_cap: int, tol: float) -> tuple:
    tails = compute_tails(chain, 1, n_cap)
    dtab = build_d_table(tails, m_lo=0, tol=max(tol, 1e-12))
    return tails, dtab


def cmd_tails(args) -> int:
    spec = _load_spec(args.spec)
    chain = ChainParams(spec)
    tails = compute_tails(chain, 1, args.n_cap, tol=args.tol)
    if args.format == "json":
        rec = {
            "spec": json.loads(spec_to_json(spec)),
            "n_lo": tails.n_lo,
            "n_hi": tails.n_hi,
            "buffer_used": tails.buffer_used,
            "err_bound": tails.err_bound,
            "f": [repr(float(x)) for x in tails.f],
            "xi_inv": [repr(float(x)) for x in tails.xi_inv],
        }
        _emit(json.dumps(rec, sort_keys=True) + "\n", args.out)
    else:
        buf = io.StringIO()
        tails_to_csv(tails, buf)
        _emit(buf.getvalue(), args.out)
    return EXIT_OK


def cmd_dseries(args) -> int:
    spec = _load_spec(args.spec)
    chain = ChainParams(spec)
    tails, dtab = _build(chain, args.n_cap, args.tol)
    if args.series:
        n_to = min(dtab.m_hi, args.n_cap)
        buf = io.StringIO()
        series_to_csv(dtab, 2, n_to, buf)
        _emit(buf.getvalue(), args.out)
        return EXIT_OK
    if args.format == "json":
        rec = {
            "spec": json.loads(spec_to_json(spec)),
            "m_lo": dtab.m_lo,
            "m_hi": dtab.m_hi,
            "status": dtab.status,
            "err_rel": dtab.err_rel,
            "n_anchor": dtab.n_anchor,
            "values": [repr(float(x)) for x in dtab.values],
        }
        _emit(json.dumps(rec, sort_keys=True) + "\n", args.out)
    else:
        buf = io.StringIO()
        d_table_to_csv(dtab, buf)
        _emit(buf.getvalue(), args.out)
    return EXIT_OK


def cmd_exact(args) -> int:
    spec = _load_spec(args.spec)
    chain = ChainParams(spec)
    if args.k is None:
        raise ConfigError("exact needs --k (and optionally --j for the joint probability)")
    n_cap = max(args.n_cap, 4 * args.k + 64)
    tails, dtab = _build(chain, n_cap, args.tol)
    if args.j is not None:
        res = joint_skip_prob(chain, tails, dtab, args.j, args.k)
    else:
        res = skip_prob(chain, tails, dtab, args.k)
    rec = res.to_record()
    rec["spec"] = json.loads(spec_to_json(spec))
    if args.j is None:
        lo, hi = skip_prob_bounds(chain, dtab, args.k)
        rec["bounds"] = [lo, hi]
    _emit(json.dumps(rec, sort_keys=True) + "\n", args.out)
    return EXIT_OK


def cmd_simulate(args) -> int:
    spec = _load_spec(args.spec)
    chain = ChainParams(spec)
    levels = [int(x) for x in args.levels.split(",")] if args.levels else None
    ks = [int(x) for x in args.k.split(",")] if args.k else None
    if not levels and not ks:
        raise ConfigError("simulate needs --levels (growth) or --k (layer frequencies)")
    target = max(levels) if levels else 2 * max(ks) + 1
    mode = args.mode
    dtab = None
    if mode == "exact-tail" or args.margin is None:
        n_cap = max(args.n_cap, 2 * target + 64)
        _, dtab = _build(chain, n_cap, args.tol)
    margin = args.margin if mode == "margin" else 0
    if margin is None:
        margin = target  # default margin when no certificate is requested
    exp = montecarlo.design_experiment(
        chain, dtab, target, margin, args.replicas, args.seed, mode=mode, max_steps=args.max_steps
    )
    if levels:
        table = montecarlo.count_growth(exp, levels)
        if args.format == "json":
            rec = {
                "experiment": exp.to_record(),
                "levels": list(table.levels),
                "medians": [float(x) for x in table.medians],
                "truncated_replicas": table.truncated_replicas,
            }
            _emit(json.dumps(rec, sort_keys=True) + "\n", args.out)
        else:
            _emit(montecarlo.growth_csv_text(table), args.out)
    else:
        stats = montecarlo.estimate_skip(exp, ks)
        _emit(montecarlo.stats_json(stats) + "\n", args.out)
    return EXIT_OK


def cmd_classify(args) -> int:
    spec = _load_spec(args.spec)
    chain = ChainParams(spec)
    out: dict = {"spec": json.loads(spec_to_json(spec))}
    if spec.family == "theorem2":
        out["symbolic"] = json.loads(criteria.classify_theorem2(spec.beta).to_json())
    tails, dtab = _build(chain, args.n_cap, args.tol)
    out["recurrence"] = json.loads(criteria.recurrence_check(tails).to_json())
    n_from = max(2, args.n_cap // 100)
    verdict = criteria.classify_table(dtab, n_from, dtab.m_hi, delta_probe=args.delta)
    out["numeric"] = json.loads(verdict.to_json())
    _emit(json.dumps(out, sort_keys=True) + "\n", args.out)
    return EXIT_OK


def _verify_checks(chain: ChainParams, tails, dtab: DTable, args):
    """Yield (name, passed, margin_note) for the bound-verification suite."""
    rng = np.random.default_rng(args.seed)
    hi_idx = min(tails.n_hi, 2000)

    # stochasticity: all-ones boundary reproduces the constant function
    h, res = solve_interval(chain, 1, 50, {0: 1.0, 51: 1.0, 52: 1.0})
    dev = float(np.max(np.abs(h - 1.0)))
    yield "stochasticity", dev < 1e-12, f"max|h-1|={dev:.2e}"

    # splitting identity Q1 + Q2 = 1 - P on random instances
    worst = 0.0
    for _ in range(50):
        a = int(rng.integers(1, hi_idx - 2))
        c = int(rng.integers(a + 2, min(a + 500, hi_idx)))
        b = int(rng.integers(a, c + 1))
        gap = abs(
            q1_abc(chain, a, b, c).value
            + q2_abc(chain, a, b, c).value
            + p_abc(chain, a, b, c).value
            - 1.0
        )
        worst = max(worst, gap)
    yield "splitting-identity", worst < 1e-10, f"max|Q1+Q2+P-1|={worst:.2e}"

    # crossing-probability sandwich from the U-products
    violations = 0
    margin = math.inf
    for _ in range(args.instances):
        a = int(rng.integers(1, hi_idx - 2))
        c = int(rng.integers(a + 2, min(a + 800, hi_idx)))
        b = int(rng.integers(a + 1, c))
        lo, up = sandwich_bounds(tails, a, b, c)
        v = p_abc(chain, a, b, c).value
        slack = 1e-12 * max(1.0, abs(v))
        if not (lo - slack <= v <= up + slack):
            violations += 1
        margin = min(margin, v - lo, up - v)
    yield "crossing-sandwich", violations == 0, f"violations={violations} min_margin={margin:.2e}"

    if dtab.status == "converged":
        # finite-horizon escape bounds and their infinite-horizon limits
        bad = 0
        gap = 0.0
        for _ in range(30):
            a = int(rng.integers(1, min(hi_idx - 20, 1500)))
            c = int(rng.integers(a + 10, min(a + 2000, tails.n_hi)))
            one = 1.0 - p_abc(chain, a, a + 1, c).value
            lo1 = 1.0 / d_partial(tails, a, c + 1)
            up1 = 1.0 / d_partial(tails, a, c)
            if not (lo1 - 1e-12 <= one <= up1 + 1e-12):
                bad += 1
            gap = max(gap, abs(one - 1.0 / dtab.require(a)) / (1.0 / dtab.require(a)))
        yield "escape-bounds", bad == 0, f"violations={bad} max_rel_gap_to_limit={gap:.2e}"

        k0 = k0_epsilon(chain, tails, dtab, eps=args.eps, k_max=(dtab.m_hi - 1) // 2)
        ks = sorted(
            {int(x) for x in np.geomspace(max(k0, 10), min((dtab.m_hi - 1) // 2, 800), 12)}
        )
        bad = 0
        for k in ks:
            lo, up = skip_prob_bounds(chain, dtab, k)
            v = skip_prob(chain, tails, dtab, k).value
            if not (lo - 1e-12 <= v <= up + 1e-12):
                bad += 1
        yield "skip-prob-bounds", bad == 0, f"k0={k0} grid={len(ks)} violations={bad}"

        bad = 0
        for j, k in [(ks[0], ks[len(ks) // 2]), (ks[1], ks[-1]), (ks[len(ks) // 2], ks[-1])]:
            if j >= k:
                continue
            lo, up = joint_skip_bounds(chain, tails, dtab, j, k, eps=args.eps)
            v = joint_skip_prob(chain, tails, dtab, j, k).value
            if not (lo - 1e-12 <= v <= up + 1e-12):
                bad += 1
        yield "joint-skip-bounds", bad == 0, f"violations={bad}"

        # Monte Carlo vs exact at one layer
        k = ks[0]
        exp = montecarlo.design_experiment(
            chain, dtab, 2 * k + 1, 0, args.replicas, args.seed, mode="exact-tail"
        )
        stats = montecarlo.estimate_skip(exp, (k,))
        v = skip_prob(chain, tails, dtab, k).value
        z = (stats.freq[0] - v) / max(stats.se[0], 1e-300)
        yield "mc-vs-exact", abs(z) <= 4.0, f"k={k} z={z:+.2f} reps={args.replicas}"
    else:
        # recurrent-side degeneracy: escape probabilities vanish
        yield "divergent-D-escape-zero", True, f"status={dtab.status}: skip probabilities 0"

    bad_ab = 0
    bad_eta = 0
    for k in (50, 200, 800):
        if 2 * k + 2 > tails.n_hi:
            continue
        aa, bb = ab_ratios(chain, k // 2, k)
        if aa > 1.0 + 1e-12 or bb > 1.0 + 1e-12:
            bad_ab += 1
        _, e2 = eta(chain, 2 * k, 2 * k)
        if e2 < 11.0 / 27.0 - 1e-6:
            bad_eta += 1
    yield "ab-ratios", bad_ab == 0, f"violations={bad_ab}"
    yield "eta-lower-bound", bad_eta == 0, f"violations={bad_eta}"


def cmd_verify(args) -> int:
    spec = _load_spec(args.spec)
    chain = ChainParams(spec)
    tails, dtab = _build(chain, args.n_cap, args.tol)
    lines = []
    all_ok = True
    for name, ok, note in _verify_checks(chain, tails, dtab, args):
        all_ok &= ok
        lines.append(f"{'PASS' if ok else 'FAIL'} {name} {note}")
    _emit("\n".join(lines) + "\n", args.out)
    return EXIT_OK if all_ok else EXIT_VERIFY


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="skipwalk",
        description="Skipped-point analysis of near-critical (1,2) random walks.",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, n_cap_default=20000):
        p.add_argument("--spec", required=True, help="perturbation spec: inline JSON or file path")
        p.add_argument("--tol", type=float, default=1e-4, help="target relative tolerance")
        p.add_argument("--n-cap", type=int, default=n_cap_default, help="deepest index computed")
        p.add_argument("--format", choices=("csv", "json", "table"), default="csv")
        p.add_argument("--out", default=None, help="output path (default stdout)")

    p = sub.add_parser("tails", help="continued-fraction tail table")
    common(p)
    p.set_defaults(func=cmd_tails, tol=1e-14)

    p = sub.add_parser("dseries", help="D-table and criterion series")
    common(p)
    p.add_argument("--series", action="store_true", help="emit the criterion series instead")
    p.set_defaults(func=cmd_dseries)

    p = sub.add_parser("exact", help="skip / joint-skip probabilities")
    common(p)
    p.add_argument("--k", type=int, default=None, help="layer index")
    p.add_argument("--j", type=int, default=None, help="lower layer for the joint probability")
    p.set_defaults(func=cmd_exact, format="json")

    p = sub.add_parser("simulate", help="Monte Carlo skip experiments")
    common(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--replicas", type=int, default=10000)
    p.add_argument("--levels", default=None, help="comma-separated growth levels")
    p.add_argument("--k", default=None, help="comma-separated layer indices")
    p.add_argument("--margin", type=int, default=None)
    p.add_argument("--mode", choices=("margin", "exact-tail"), default="exact-tail")
    p.add_argument("--max-steps", type=int, default=10**9)
    # the D values only set resampling thresholds here; 1e-3 relative error
    # is far below Monte Carlo resolution and admits much shallower windows
    p.set_defaults(func=cmd_simulate, tol=1e-3)

    p = sub.add_parser("classify", help="finite/infinite skip verdicts")
    common(p, n_cap_default=100000)
    p.add_argument("--delta", type=float, default=2.0, help="side-condition probe delta")
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("verify", help="bound-verification suite")
    common(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--replicas", type=int, default=20000)
    p.add_argument("--instances", type=int, default=200)
    p.add_argument("--eps", type=float, default=0.05)
    p.set_defaults(func=cmd_verify)

    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        # argparse uses exit code 2 for usage errors already
        return int(exc.code or 0)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ValueError, FamilyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NotConvergedError, NonContractingError, SolveError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except BrokenPipeError:
        return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
