"""Command-line entry point: ``stackprice <command> --game FILE [options]``.

Exit codes: 0 success, 2 invalid game or game file, 3 a solver did not
converge (or a derivative could not be certified), 4 I/O failure.
"""

from __future__ import annotations

import argparse
import csv
import io as _io
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .errors import (BudgetError, ConvergenceError, GameFileError, GameValidationError, InfeasibleError,
                     MonotonicityError, RankError, ScenarioError, SingularKKTError, StaleEquilibriumError,
                     StructuralError, UnreliableStencilError)
from .game import validate_game
from .io import parse_game_file, trace_columns, trace_records, write_trace
from .leader import LeaderConfig, solve_stackelberg
from .nash import NashConfig, solve_nash, verify_nash

EXIT_OK, EXIT_INVALID, EXIT_NONCONVERGED, EXIT_IO = 0, 2, 3, 4

# checked after _NONCONVERGED, since RankError is also a ValueError
_INVALID = (GameFileError, GameValidationError, StructuralError, ScenarioError, MonotonicityError,
            InfeasibleError, BudgetError, ValueError)
_NONCONVERGED = (ConvergenceError, SingularKKTError, StaleEquilibriumError, RankError, UnreliableStencilError)


def _vector(text):
    try:
        return np.array([float(v) for v in text.replace(",", " ").split()], dtype=float)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"not a numeric vector: {text!r}") from exc


def _seeds(text):
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"not a comma-separated integer list: {text!r}") from exc


def _check_len(vec, m, flag):
    if vec is not None and vec.size != m:
        raise GameFileError(flag, f"expected {m} entries, got {vec.size}")


def _emit(text, out):
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).write_text(text, encoding="utf-8")


def _table(columns, rows, fmt, extra=None):
    if fmt == "json":
        payload = {"columns": columns, "rows": [dict(zip(columns, r)) for r in rows]}
        if extra:
            payload.update(extra)
        return json.dumps(payload, indent=1) + "\n"
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([repr(v) if isinstance(v, float) else v for v in r])
    return buf.getvalue()


def cmd_validate(args):
    gf = parse_game_file(args.game, validate=False)
    rep = validate_game(gf.game)
    rows = [[c.name, c.where, "pass" if c.passed else "FAIL", c.detail] for c in rep.checks]
    _emit(_table(["check", "where", "status", "detail"], rows, args.format,
                 {"passed": rep.passed, "warnings": list(rep.warnings)}), args.out)
    print(rep.summary(), file=sys.stderr)
    return EXIT_OK if rep.passed else EXIT_INVALID


def _nash_cfg(args, gf):
    eps = args.eps if getattr(args, "eps", None) is not None else gf.leader_config.get("eps", 1e-8)
    return NashConfig(eps=eps)


def cmd_nash(args):
    gf = parse_game_file(args.game)
    game = gf.game
    pi = game.box_midpoint() if args.pi is None else args.pi
    _check_len(pi, game.m_L, "--pi")
    res = solve_nash(game, pi, _nash_cfg(args, gf))
    rep = verify_nash(game, res.x, pi)
    cols = ["follower"] + [f"x_{j + 1}" for j in range(game.m_F)]
    rows = [[i] + [float(v) for v in res.x[i]] for i in range(game.N)]
    _emit(_table(cols, rows, args.format, {"pi": pi.tolist(), "iterations": res.iterations,
                                           "residual": res.residual, "JL": game.leader.value(res.x, pi),
                                           "best_response_gap": rep.worst}), args.out)
    print(f"equilibrium in {res.iterations} iterations, residual {res.residual:.3g}, "
          f"best-response gap {rep.worst:.3g}", file=sys.stderr)
    return EXIT_OK


def _leader_cfg(args, gf):
    kw = {k: v for k, v in gf.leader_config.items() if k in ("beta", "s_bar", "delta", "max_outer")}
    for flag, key in (("beta", "beta"), ("sbar", "s_bar"), ("delta", "delta"), ("max_outer", "max_outer")):
        v = getattr(args, flag)
        if v is not None:
            kw[key] = v
    return LeaderConfig(**kw)


def _suffixed(path, k):
    p = Path(path)
    return p.with_name(f"{p.stem}_run{k}{p.suffix}")


def cmd_solve(args):
    gf = parse_game_file(args.game)
    game = gf.game
    starts = []
    if args.pi0 is not None:
        _check_len(args.pi0, game.m_L, "--pi0")
        starts.append(("pi0", args.pi0))
    if args.file_starts:
        starts += [(f"file[{k}]", s) for k, s in enumerate(gf.starts)]
    for seed in args.seed_list or []:
        rng = np.random.default_rng(seed)
        starts.append((f"seed {seed}", rng.uniform(game.price_lo, game.price_hi)))
    if not starts:
        starts.append(("midpoint", game.box_midpoint()))
    ncfg, lcfg = _nash_cfg(args, gf), _leader_cfg(args, gf)
    results = []
    for k, (label, pi0) in enumerate(starts):
        r = solve_stackelberg(game, pi0, ncfg, lcfg)
        results.append(r)
        print(f"[{label}] JL={r.JL:.10g} pi={np.round(r.pi, 8).tolist()} outer={len(r.trace)} "
              f"({r.trace.reason})", file=sys.stderr)
        if len(starts) > 1 and args.out is not None:
            write_trace(r.trace, _suffixed(args.out, k), args.format, game.m_L)
    best = min(range(len(results)), key=lambda k: results[k].JL)
    if args.out is not None:
        write_trace(results[best].trace, args.out, args.format, game.m_L)
    else:
        cols = trace_columns(game.m_L)
        rows = [[rec[c] for c in cols] for rec in trace_records(results[best].trace)]
        _emit(_table(cols, rows, args.format), None)
    return EXIT_OK if all(r.converged for r in results) else EXIT_NONCONVERGED


def cmd_grid(args):
    from .scenario import grid_search

    gf = parse_game_file(args.game)
    game = gf.game
    res = grid_search(game, args.points, _nash_cfg(args, gf))
    cols = ["rank"] + [f"pi_{k + 1}" for k in range(game.m_L)] + ["JL"]
    rows = [[n] + [float(v) for v in p] + [val] for n, (p, val) in enumerate(res.ranked(args.top))]
    _emit(_table(cols, rows, args.format), args.out)
    print(f"best grid point {res.best_pi.tolist()} with JL={res.best_value:.10g}", file=sys.stderr)
    return EXIT_OK


def cmd_fd_check(args):
    from .oracle import gradient_discrepancy, jacobian_discrepancy

    gf = parse_game_file(args.game)
    game = gf.game
    pi = game.box_midpoint() if args.pi is None else args.pi
    _check_len(pi, game.m_L, "--pi")
    if args.what == "gradient":
        d = gradient_discrepancy(game, pi)
        cols = ["k", "chain_rule", "finite_difference", "difference"]
        rows = [[k, float(a), float(b), float(c)] for k, (a, b, c) in
                enumerate(zip(d["chain_rule"], d["finite_difference"], d["difference"]))]
        worst = d["max_abs_difference"]
    else:
        res = solve_nash(game, pi, NashConfig(eps=1e-12))
        cols = ["follower", "row", "col", "ift", "finite_difference", "difference"]
        rows = []
        worst = 0.0
        for d in jacobian_discrepancy(game, res.x, pi):
            for (r, c), v in np.ndenumerate(d["ift"]):
                fd = float(d["finite_difference"][r, c])
                rows.append([d["follower"], r, c, float(v), fd, float(v) - fd])
            worst = max(worst, d["max_abs_difference"])
    _emit(_table(cols, rows, args.format, {"pi": pi.tolist(), "max_abs_difference": worst}), args.out)
    print(f"max |difference| = {worst:.3g}", file=sys.stderr)
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="stackprice", description="Leader pricing for aggregative follower games.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--game", required=True, help="JSON game or scenario file")
        sp.add_argument("--out", default=None, help="output path (default: stdout)")
        sp.add_argument("--format", choices=("csv", "json"), default="csv")

    sp = sub.add_parser("validate", help="check the standing assumptions")
    common(sp)
    sp.set_defaults(func=cmd_validate)

    sp = sub.add_parser("nash", help="follower equilibrium at a fixed price")
    common(sp)
    sp.add_argument("--pi", type=_vector, default=None, help="price vector, e.g. '1,0'")
    sp.add_argument("--eps", type=float, default=None)
    sp.set_defaults(func=cmd_nash)

    sp = sub.add_parser("solve", help="leader descent; writes the iteration trace")
    common(sp)
    sp.add_argument("--pi0", type=_vector, default=None)
    sp.add_argument("--beta", type=float, default=None)
    sp.add_argument("--sbar", type=float, default=None)
    sp.add_argument("--delta", type=float, default=None)
    sp.add_argument("--eps", type=float, default=None)
    sp.add_argument("--max-outer", type=int, default=None)
    sp.add_argument("--seed-list", type=_seeds, default=None,
                    help="comma-separated RNG seeds; each adds a uniform random start in the box")
    sp.add_argument("--file-starts", action="store_true", help="also run every start listed in the game file")
    sp.set_defaults(func=cmd_solve)

    sp = sub.add_parser("grid", help="exhaustive grid search over the price box")
    common(sp)
    sp.add_argument("--points", type=int, default=11, help="points per axis")
    sp.add_argument("--top", type=int, default=None, help="only write the best N points")
    sp.add_argument("--eps", type=float, default=None)
    sp.set_defaults(func=cmd_grid)

    sp = sub.add_parser("fd-check", help="compare analytic derivatives with finite differences")
    common(sp)
    sp.add_argument("--what", choices=("jacobian", "gradient"), default="jacobian")
    sp.add_argument("--pi", type=_vector, default=None)
    sp.set_defaults(func=cmd_fd_check)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except _NONCONVERGED as exc:
        print(f"not converged: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGED
    except _INVALID as exc:
        print(f"invalid: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
