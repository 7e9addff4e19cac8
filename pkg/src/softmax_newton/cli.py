"""Command line interface: ``generate``, ``solve``, ``verify`` and ``bench``.

Exit codes: 0 success, 2 validation failure, 3 numerical failure, 4 I/O error.
Flags may also come from a flat ``key=value`` file given with ``--config``
(keys are flag names without dashes, ``-`` or ``_``); explicit flags win.
"""
from __future__ import annotations

import argparse
import csv
import logging
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import formats, suites
from .errors import (
    InstanceError,
    NumericalError,
    OracleFailure,
    RankDeficientError,
    SolverAborted,
)
from .linalg import unit_sphere
from .problem import generate_oracle, generate_trivial, validate
from .sketch import SketchConfig
from .solver import SolverConfig, solve

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3
EXIT_IO = 4

SEED_ENV = "SOFTMAX_NEWTON_SEED"
MODES = ("exact_full", "exact_diag", "sketched_diag")

log = logging.getLogger("softmax_newton")


class CliError(Exception):
    def __init__(self, code: int, msg: str):
        self.code = code
        super().__init__(msg)


def _default_seed() -> int:
    raw = os.environ.get(SEED_ENV)
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError:
        raise CliError(EXIT_VALIDATION, f"{SEED_ENV}={raw!r} is not an integer") from None


def _positive(kind):
    def conv(s):
        v = kind(s)
        if not v > 0:
            raise argparse.ArgumentTypeError(f"must be positive, got {s}")
        return v
    return conv


def _open_interval(lo, hi):
    def conv(s):
        v = float(s)
        if not lo < v < hi:
            raise argparse.ArgumentTypeError(f"must lie in ({lo}, {hi}), got {s}")
        return v
    return conv


def _int_list(s: str) -> list[int]:
    try:
        vals = [int(t) for t in s.replace(",", " ").split()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {s!r}") from None
    if not vals or any(v < 1 for v in vals):
        raise argparse.ArgumentTypeError("grid values must be positive integers")
    return vals


def _mode_list(s: str) -> list[str]:
    vals = [t for t in s.replace(",", " ").split() if t]
    bad = [v for v in vals if v not in MODES]
    if bad or not vals:
        raise argparse.ArgumentTypeError(f"modes must be among {MODES}, got {s!r}")
    return vals


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="softmax-newton", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a synthetic instance bundle")
    g.add_argument("--config", type=Path)
    g.add_argument("--n", type=_positive(int), required=True)
    g.add_argument("--d", type=_positive(int), required=True)
    g.add_argument("--mode", choices=("trivial", "oracle"), default="trivial")
    g.add_argument("--R", type=_positive(float), default=10.0)
    g.add_argument("--l", type=_positive(float), default=1.0)
    g.add_argument("--radius", type=float, default=1.0, help="target radius (oracle mode)")
    g.add_argument("--margin", type=_positive(float), default=1.0)
    g.add_argument("--seed", type=int, default=None)
    g.add_argument("--out", type=Path, required=True)

    s = sub.add_parser("solve", help="run a Newton solver on a bundle")
    s.add_argument("--config", type=Path)
    s.add_argument("--bundle", type=Path, required=True)
    s.add_argument("--mode", choices=MODES, default="sketched_diag")
    s.add_argument("--stop", choices=("fixed_T", "grad_norm"), default="grad_norm")
    s.add_argument("--eps", type=_open_interval(0, 0.1), default=1e-8)
    s.add_argument("--delta", type=_open_interval(0, 0.1), default=0.05)
    s.add_argument("--l", type=_positive(float), default=None,
                   help="strong convexity parameter (default: bundle meta, else 1)")
    s.add_argument("--grad-tol", type=_positive(float), default=None)
    s.add_argument("--max-iters", type=_positive(int), default=100)
    s.add_argument("--eps0", type=_open_interval(0, 0.5), default=0.1)
    s.add_argument("--oversample", type=_positive(float), default=8.0)
    s.add_argument("--seed", type=int, default=None)
    s.add_argument("--x0", type=Path, default=None, help="initial point (vector file)")
    s.add_argument("--init-radius", type=float, default=None,
                   help="start at x* + radius * u with u uniform on the sphere")
    s.add_argument("--validate-mode", choices=("convexity", "sketch"), default=None)
    s.add_argument("--unsafe", action="store_true", help="run even if assumptions fail")
    s.add_argument("--no-fallback", action="store_true",
                   help="fail instead of sketching W^2 when B_diag + W^2 is not positive")
    s.add_argument("--trace", type=Path, default=None, help="CSV trace output")
    s.add_argument("--out", type=Path, default=None, help="solution vector output")

    v = sub.add_parser("verify", help="run property suites")
    v.add_argument("--config", type=Path)
    v.add_argument("--check", action="append", default=None,
                   help=f"suite(s) to run: {', '.join(suites.CHECKS)} or all (repeatable, comma lists ok)")
    src = v.add_mutually_exclusive_group()
    src.add_argument("--bundle", type=Path)
    src.add_argument("--random", nargs=3, type=int, metavar=("N", "D", "SEEDS"))
    v.add_argument("--trials", type=_positive(int), default=100)
    v.add_argument("--eps0", type=_open_interval(0, 0.5), default=0.1)
    v.add_argument("--delta", type=_open_interval(0, 0.5), default=0.05)
    v.add_argument("--oversample", type=_positive(float), default=8.0)
    v.add_argument("--R", type=_positive(float), default=2.0, help="radius for lipschitz/beta probes")
    v.add_argument("--scale", type=_positive(float), default=1.0, help="||A|| of random instances")
    v.add_argument("--pairs", type=_positive(int), default=200)
    v.add_argument("--points", type=_positive(int), default=1000)
    v.add_argument("--l", type=_positive(float), default=1.0)
    v.add_argument("--validate-mode", choices=("convexity", "sketch"), default="sketch")
    v.add_argument("--jobs", type=_positive(int), default=1)
    v.add_argument("--seed", type=int, default=None)

    b = sub.add_parser("bench", help="compare solver modes over an n grid (CSV)")
    b.add_argument("--config", type=Path)
    b.add_argument("--n-grid", type=_int_list, default=[2000, 8000])
    b.add_argument("--d", type=_positive(int), default=20)
    b.add_argument("--modes", type=_mode_list, default=["exact_full", "sketched_diag"])
    b.add_argument("--eps", type=_open_interval(0, 0.1), default=1e-8)
    b.add_argument("--delta", type=_open_interval(0, 0.1), default=0.05)
    b.add_argument("--eps0", type=_open_interval(0, 0.5), default=0.1)
    b.add_argument("--oversample", type=_positive(float), default=8.0)
    b.add_argument("--R", type=_positive(float), default=1.0)
    b.add_argument("--l", type=_positive(float), default=1.0)
    b.add_argument("--r0", type=_positive(float), default=1e-2, help="initial distance to x*")
    b.add_argument("--seed", type=int, default=None)
    b.add_argument("--out", type=Path, default=None, help="CSV output (default stdout)")
    return p


def _norm_key(k: str) -> str:
    return k.strip().lstrip("-").replace("-", "_").lower()


def _scan_config(argv: list[str]) -> tuple[str | None, Path | None]:
    """Subcommand and ``--config`` path, found without running the full parser."""
    command = next((a for a in argv if a in COMMANDS), None)
    path = None
    for i, a in enumerate(argv):
        if a == "--config" and i + 1 < len(argv):
            path = Path(argv[i + 1])
        elif a.startswith("--config="):
            path = Path(a.split("=", 1)[1])
    return command, path


def _apply_config(parser: argparse.ArgumentParser, argv: list[str]) -> argparse.Namespace:
    """Parse ``argv``, using ``--config`` values as defaults for the chosen subcommand."""
    command, cfg_path = _scan_config(argv)
    if command is None or cfg_path is None:
        return parser.parse_args(argv)
    try:
        cfg = formats.read_keyvalue(cfg_path)
    except (OSError, formats.FormatError) as exc:
        raise CliError(EXIT_IO, f"cannot read config {cfg_path}: {exc}") from None
    subparser = parser._subparsers._group_actions[0].choices[command]
    actions = {a.dest.lower(): a for a in subparser._actions if a.dest not in ("help", "config")}
    defaults = {}
    for k, raw in cfg.items():
        act = actions.get(_norm_key(k))
        if act is None:
            raise CliError(EXIT_VALIDATION, f"{cfg_path}: unknown key {k!r} for {command}")
        if act.dest == "check":
            val = [raw]
        elif act.nargs == 0:
            val = raw.lower() in ("1", "true", "yes", "on")
        else:
            try:
                if isinstance(act.nargs, int):
                    val = [act.type(t) if act.type else t for t in raw.split()]
                else:
                    val = act.type(raw) if act.type else raw
            except (argparse.ArgumentTypeError, ValueError) as exc:
                raise CliError(EXIT_VALIDATION, f"{cfg_path}: bad value for {k}: {exc}") from None
            if act.choices is not None and val not in act.choices:
                raise CliError(EXIT_VALIDATION, f"{cfg_path}: {k} must be one of {list(act.choices)}")
        defaults[act.dest] = val
        # a required flag may now come from the file
        act.required = False
    subparser.set_defaults(**defaults)
    return parser.parse_args(argv)


# --------------------------------------------------------------------------


def cmd_generate(args) -> int:
    seed = args.seed if args.seed is not None else _default_seed()
    if args.d > args.n:
        raise CliError(EXIT_VALIDATION, f"need n >= d, got n={args.n}, d={args.d}")
    if args.mode == "trivial":
        inst, xs = generate_trivial(args.n, args.d, args.R, args.l, seed, args.margin)
    else:
        if args.radius < 0:
            raise CliError(EXIT_VALIDATION, "--radius must be nonnegative")
        inst, xs = generate_oracle(args.n, args.d, args.R, args.l, args.radius, seed, args.margin)
    try:
        formats.write_bundle(args.out, inst, xs)
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot write bundle to {args.out}: {exc}") from None
    print(f"bundle={args.out}")
    print(f"n={inst.n}")
    print(f"d={inst.d}")
    print(f"kind={args.mode}")
    return EXIT_OK


def _load_bundle(path: Path):
    try:
        return formats.read_bundle(path)
    except FileNotFoundError as exc:
        raise CliError(EXIT_IO, str(exc)) from None
    except formats.FormatError as exc:
        raise CliError(EXIT_IO, str(exc)) from None
    except InstanceError as exc:
        raise CliError(EXIT_VALIDATION, f"{path}: {exc}") from None


def cmd_solve(args) -> int:
    inst, xs = _load_bundle(args.bundle)
    seed = args.seed if args.seed is not None else int(inst.meta.get("seed", _default_seed()))
    l = args.l if args.l is not None else (inst.l or 1.0)
    vmode = args.validate_mode or ("sketch" if args.mode == "sketched_diag" else "convexity")
    try:
        rep = validate(inst, l, vmode)
    except RankDeficientError as exc:
        raise CliError(EXIT_VALIDATION, str(exc)) from None
    if not rep.passed:
        msg = f"assumption(s) failed ({vmode} mode): {', '.join(rep.failures())}"
        if not args.unsafe:
            raise CliError(EXIT_VALIDATION, msg)
        log.warning("%s; continuing (--unsafe)", msg)

    if args.x0 is not None:
        try:
            x0 = formats.read_vector(args.x0)
        except (OSError, formats.FormatError) as exc:
            raise CliError(EXIT_IO, str(exc)) from None
        if x0.shape != (inst.d,):
            raise CliError(EXIT_VALIDATION, f"{args.x0}: expected length {inst.d}")
    elif args.init_radius is not None:
        if xs is None:
            raise CliError(EXIT_VALIDATION, "--init-radius needs xstar.vec in the bundle")
        x0 = xs + args.init_radius * unit_sphere(np.random.default_rng(seed), inst.d)
    else:
        x0 = np.zeros(inst.d)
    if args.stop == "fixed_T" and xs is None:
        raise CliError(EXIT_VALIDATION, "--stop fixed_T needs xstar.vec in the bundle")

    cfg = SolverConfig(
        epsilon=args.eps, delta=args.delta, l=l, mode=args.mode, max_iters=args.max_iters,
        stop_rule=args.stop, grad_tol=args.grad_tol,
        sketch=SketchConfig(args.eps0, args.delta, args.oversample, seed),
        d_fallback=not args.no_fallback,
    )
    code = EXIT_OK
    try:
        x, trace = solve(inst, x0, cfg, xs)
    except SolverAborted as exc:
        trace, x, code = exc.trace, None, EXIT_NUMERICAL
        print(f"error={exc}", file=sys.stderr)
    except NumericalError as exc:
        raise CliError(EXIT_NUMERICAL, str(exc)) from None
    if code == EXIT_OK and trace.status != "converged":
        code = EXIT_NUMERICAL

    try:
        if args.trace is not None:
            with open(args.trace, "w", newline="") as fh:
                trace.to_csv(fh)
        if args.out is not None and x is not None:
            formats.write_vector(args.out, x)
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot write output: {exc}") from None

    last = trace.records[-1]
    print(f"status={trace.status}")
    print(f"iterations={trace.iterations}")
    if trace.planned_T is not None:
        print(f"planned_T={trace.planned_T}")
    print(f"loss={last.loss:.17g}")
    print(f"grad_norm={last.grad_norm:.17g}")
    if not math.isnan(last.r):
        print(f"final_error={last.r:.17g}")
        c = trace.contractions()
        if c.size:
            print(f"max_contraction={c.max():.17g}")
    return code


def _expand_checks(raw: list[str] | None) -> list[str]:
    if not raw:
        return list(suites.CHECKS)
    out = []
    for item in raw:
        for name in item.replace(",", " ").split():
            if name == "all":
                out.extend(suites.CHECKS)
            elif name in suites.CHECKS:
                out.append(name)
            else:
                raise CliError(EXIT_VALIDATION, f"unknown check {name!r}; choose from {suites.CHECKS}")
    return list(dict.fromkeys(out))


def cmd_verify(args) -> int:
    checks = _expand_checks(args.check)
    seed = args.seed if args.seed is not None else _default_seed()
    bundle = None
    if args.bundle is not None:
        bundle, _ = _load_bundle(args.bundle)
        n, d, trials = bundle.n, bundle.d, args.trials
    elif args.random is not None:
        n, d, trials = args.random
        if not n >= d >= 1 or trials < 1:
            raise CliError(EXIT_VALIDATION, "--random needs N >= D >= 1 and SEEDS >= 1")
    else:
        n, d, trials = 10, 4, args.trials
    src = suites.Source(n=n, d=d, trials=trials, seed=seed, R=args.scale, l=args.l, bundle=bundle)

    results = []
    try:
        for name in checks:
            if name == "assumptions":
                results.append(suites.suite_assumptions(src, args.validate_mode, args.jobs))
            elif name == "B_bounds":
                results.append(suites.suite_B_bounds(src, args.jobs))
            elif name == "hessian_pd":
                results.append(suites.suite_hessian_pd(src, args.jobs))
            elif name == "w2_sandwich":
                results.append(suites.suite_w2_sandwich(src, args.jobs))
            elif name == "gradient_fd":
                results.append(suites.suite_gradient_fd(src, args.jobs))
            elif name == "hessian_fd":
                results.append(suites.suite_hessian_fd(src, args.jobs))
            elif name == "sandwich":
                sk_src = suites.Source(n=n, d=d, trials=args.trials, seed=seed, R=args.scale,
                                       l=args.l, bundle=bundle)
                results.append(suites.suite_sketch_sandwich(
                    sk_src, args.eps0, args.delta, args.oversample, args.jobs))
            elif name == "lipschitz":
                results.append(suites.suite_lipschitz(src, args.R, args.pairs))
            elif name == "beta":
                results.append(suites.suite_beta(src, args.R, args.points))
    except RankDeficientError as exc:
        raise CliError(EXIT_VALIDATION, str(exc)) from None

    for r in results:
        for ln in r.report():
            print(ln)
    ok = all(r.passed for r in results)
    print("PASS" if ok else "FAIL")
    if ok:
        return EXIT_OK
    only_assumptions = all(r.passed or r.name == "assumptions" for r in results)
    return EXIT_VALIDATION if only_assumptions else EXIT_NUMERICAL


BENCH_HEADER = ["n", "d", "mode", "iters", "final_error", "final_grad_norm",
                "iter_ms_mean", "total_ms", "nnz_mean", "status"]


def cmd_bench(args) -> int:
    seed = args.seed if args.seed is not None else _default_seed()
    rows = []
    for n in args.n_grid:
        if n < args.d:
            raise CliError(EXIT_VALIDATION, f"grid value n={n} is smaller than d={args.d}")
        inst, xs = generate_trivial(n, args.d, args.R, args.l, seed)
        x0 = xs + args.r0 * unit_sphere(np.random.default_rng(seed), args.d)
        for mode in args.modes:
            cfg = SolverConfig(
                epsilon=args.eps, delta=args.delta, l=args.l, mode=mode, stop_rule="fixed_T",
                max_iters=1000, sketch=SketchConfig(args.eps0, args.delta, args.oversample, seed),
            )
            t0 = time.perf_counter()
            try:
                _, trace = solve(inst, x0, cfg, xs)
            except SolverAborted as exc:
                trace = exc.trace
            total = (time.perf_counter() - t0) * 1e3
            recs = trace.records[1:]
            nnz = [r.nnz for r in recs if r.nnz is not None]
            rows.append([
                n, args.d, mode, trace.iterations,
                f"{trace.records[-1].r:.6e}", f"{trace.records[-1].grad_norm:.6e}",
                f"{np.mean([r.ms for r in recs]) if recs else 0.0:.3f}", f"{total:.3f}",
                f"{np.mean(nnz):.1f}" if nnz else "", trace.status,
            ])
    try:
        fh = open(args.out, "w", newline="") if args.out else sys.stdout
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot write {args.out}: {exc}") from None
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(BENCH_HEADER)
        w.writerows(rows)
    finally:
        if fh is not sys.stdout:
            fh.close()
    return EXIT_OK


COMMANDS = {"generate": cmd_generate, "solve": cmd_solve, "verify": cmd_verify, "bench": cmd_bench}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = _apply_config(parser, argv)
        logging.basicConfig(
            level=logging.INFO if args.verbose else logging.WARNING,
            format="%(levelname)s %(name)s: %(message)s",
        )
        return COMMANDS[args.command](args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except OracleFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ValueError, InstanceError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
