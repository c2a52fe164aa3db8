"""Command-line front end.

Commands: ``run`` (one experiment to a CSV trace), ``sweep`` (grid of
experiments), ``verify`` (empirical recursion margins and compressor
contracts), ``constants`` (print a method's registered tuple), and
``ingest`` (normalize a dataset to canonical libsvm text).

Exit codes: 0 success, 1 usage or config error, 2 divergence,
3 verification failure.  ``VRADAPT_SEED`` supplies a seed when neither
the flag nor the config file does.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import engine, verify
from .compressors import check_biased_contract, check_unbiased_contract, make_compressor
from .data import load_libsvm, synthetic_dataset, write_libsvm
from .estimators import DISTRIBUTED_METHODS, METHODS, constants as constants_table
from .schedulers import nu_of

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DIVERGED = 2
EXIT_VERIFY_FAILED = 3


def _fail(message):
    print(f"error: {message}", file=sys.stderr)
    return EXIT_USAGE


def _resolve_seed(flag_seed, config_pairs):
    """Seed precedence: --seed flag, then config file, then VRADAPT_SEED,
    then 0."""
    if flag_seed is not None:
        return flag_seed
    if "seed" in config_pairs:
        return int(config_pairs["seed"])
    env = os.environ.get("VRADAPT_SEED")
    if env is not None:
        return int(env)
    return 0


def _load_config(path, flag_seed):
    with open(path, "r", encoding="utf-8") as handle:
        text = handle.read()
    pairs = engine.parse_config_pairs(text)
    cfg = engine.config_from_mapping(pairs)
    cfg.seed = _resolve_seed(flag_seed, pairs)
    return cfg


def _summary_line(result, out):
    s = result.summary
    return (
        f"status={result.status} iterations={s['iterations']} "
        f"min_grad_norm={s['min_grad_norm']:.6g} final_loss={s['final_loss']:.6g} "
        f"grad_calls={s['grad_calls']} partial_calls={s['partial_calls']} "
        f"bits={s['bits']} trace={out}"
    )


def cmd_run(args):
    try:
        cfg = _load_config(args.config, args.seed)
    except (OSError, ValueError) as exc:
        return _fail(str(exc))
    out = args.out
    if out is None:
        stem = os.path.splitext(os.path.basename(args.config))[0]
        out = stem + "_trace.csv"
    try:
        result = engine.run(cfg)
    except ValueError as exc:
        return _fail(str(exc))
    engine.trace_to_csv(result.trace, out)
    print(_summary_line(result, out))
    return EXIT_DIVERGED if result.status == "diverged" else EXIT_OK


def _parse_grid(specs):
    grid = {}
    for spec in specs or []:
        if "=" not in spec:
            raise ValueError(f"grid entry must be key=v1,v2,..., got {spec!r}")
        key, _, values = spec.partition("=")
        key = key.strip()
        parsed = []
        for token in values.split(","):
            token = token.strip()
            if key in engine._INT_KEYS:
                parsed.append(int(token))
            elif key in engine._FLOAT_KEYS:
                parsed.append(float(token))
            elif key in engine._BOOL_KEYS:
                parsed.append(engine._parse_bool(token))
            elif key in engine._STR_KEYS:
                parsed.append(token)
            else:
                raise ValueError(f"unknown config key {key!r}")
        grid[key] = parsed
    return grid


def cmd_sweep(args):
    try:
        cfg = _load_config(args.config, args.seed)
        grid = _parse_grid(args.grid)
    except (OSError, ValueError) as exc:
        return _fail(str(exc))
    results = engine.sweep(cfg, grid, jobs=args.jobs)
    os.makedirs(args.out_dir, exist_ok=True)
    worst = EXIT_OK
    keys = sorted(grid)
    for result in results:
        tag = "_".join(f"{k}{getattr(result.config, k)}" for k in keys) or "base"
        out = os.path.join(args.out_dir, f"sweep_{tag}.csv")
        engine.trace_to_csv(result.trace, out)
        print(_summary_line(result, out))
        if result.status == "diverged":
            worst = EXIT_DIVERGED
    return worst


def _parse_perturb(text):
    factors = {}
    for part in text.split(","):
        name, _, factor = part.partition(":")
        if not factor:
            raise ValueError(f"perturbation must be NAME:FACTOR, got {part!r}")
        factors[name.strip()] = float(factor)
    return factors


def _verify_one(method, args):
    problem, hyperparams = verify.standard_margin_setup(method)
    override = None
    if args.perturb:
        reg = verify.registered_constants(
            method, **verify._constants_kwargs(method, hyperparams, problem)
        )
        override = reg.scaled(_parse_perturb(args.perturb))
    report = verify.assumption_margin(
        method,
        hyperparams,
        problem,
        state_points=args.states,
        samples_per_point=args.samples,
        seed=args.seed if args.seed is not None else 0,
        constants_override=override,
    )
    ok = report.passed
    print(
        f"{method}: margins {'PASS' if ok else 'FAIL'} "
        f"(alignment={report.alignment}, worst={report.worst().margin:.3g})"
    )
    if method in DISTRIBUTED_METHODS:
        hp = hyperparams
        comp = make_compressor(hp["compressor"], problem.dim, hp.get("k"))
        rng = np.random.default_rng(0)
        if comp.unbiased:
            contract = check_unbiased_contract(comp, problem.dim, 20000, rng)
        else:
            contract = check_biased_contract(comp, problem.dim, 20000, rng)
        print(
            f"{method}: compressor contract {'PASS' if contract['passed'] else 'FAIL'} "
            f"({hp['compressor']}, margin={contract['margin']:.3g})"
        )
        ok = ok and contract["passed"]
    return report, ok


def cmd_verify(args):
    methods = list(METHODS) if args.all else [args.method]
    if not args.all:
        if args.method is None:
            return _fail("give --method NAME or --all")
        if args.method not in METHODS:
            return _fail(f"unknown method {args.method!r}")
    try:
        reports = []
        all_ok = True
        for method in methods:
            report, ok = _verify_one(method, args)
            reports.append(report)
            all_ok = all_ok and ok
    except ValueError as exc:
        return _fail(str(exc))
    if args.out:
        verify.margins_to_csv(reports, args.out)
        print(f"margins written to {args.out}")
    return EXIT_OK if all_ok else EXIT_VERIFY_FAILED


def _constants_kwargs_from_flags(method, args):
    n = args.n
    b = args.b
    if b == "n":
        b = n
    elif b is not None:
        b = int(b)
    if b is None:
        b = 8
    kwargs = {}
    if method in ("lsvrg", "page"):
        kwargs.update(b=min(b, n), p=args.p, n=n)
    elif method in ("saga", "zerosarah"):
        kwargs.update(b=min(b, n), n=n)
    elif method in ("sega", "jaguar"):
        kwargs.update(b=min(b, args.d), d=args.d)
    elif method == "ef21":
        if args.delta is not None:
            kwargs.update(delta=args.delta)
        else:
            kwargs.update(d=args.d, k=args.k)
    else:
        if args.omega is not None:
            kwargs.update(omega=args.omega)
        else:
            kwargs.update(d=args.d, k=args.k)
        kwargs.update(n_clients=args.clients)
    return kwargs


def cmd_constants(args):
    methods = list(METHODS) if args.all else [args.method]
    if not args.all and args.method is None:
        return _fail("give --method NAME or --all")
    header = f"{'method':<10} {'rho1':>10} {'rho2':>10} {'A':>10} {'B':>10} {'C':>10} {'nu':>12}"
    print(header)
    for method in methods:
        if method not in METHODS:
            return _fail(f"unknown method {method!r}")
        try:
            c = constants_table(method, **_constants_kwargs_from_flags(method, args))
        except (KeyError, ValueError) as exc:
            return _fail(f"{method}: {exc}")
        print(
            f"{method:<10} {c.rho1:>10.6g} {c.rho2:>10.6g} {c.A:>10.6g} "
            f"{c.B:>10.6g} {c.C:>10.6g} {nu_of(c):>12.6g}"
        )
    return EXIT_OK


def cmd_ingest(args):
    try:
        if args.data is not None:
            ds = load_libsvm(args.data, force_dim=args.force_dim, limit=args.limit)
        elif args.synthetic is not None:
            shape = args.synthetic.lower().split("x")
            if len(shape) != 2:
                return _fail(f"--synthetic wants ROWSxDIM, got {args.synthetic!r}")
            dim = int(shape[1])
            ds = synthetic_dataset(
                int(shape[0]),
                dim=dim,
                seed=args.seed if args.seed is not None else 0,
                nnz_per_row=min(14, dim),
            )
        else:
            return _fail("give --data PATH or --synthetic ROWSxDIM")
        write_libsvm(ds, args.out)
    except (OSError, ValueError) as exc:
        return _fail(str(exc))
    print(f"rows={ds.n} dim={ds.d} nnz={ds.nnz()} -> {args.out}")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(
        prog="vradapt",
        description="Variance-reduced optimization bench: run, sweep, verify, constants, ingest.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one experiment from a config file")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--out", default=None, help="trace CSV path")
    p_run.add_argument("--seed", type=int, default=None)
    p_run.set_defaults(func=cmd_run)

    p_sweep = sub.add_parser("sweep", help="run a Cartesian grid of overrides")
    p_sweep.add_argument("--config", required=True)
    p_sweep.add_argument(
        "--grid", action="append", default=[], metavar="KEY=V1,V2",
        help="repeatable; Cartesian product over all --grid flags",
    )
    p_sweep.add_argument("--jobs", type=int, default=1)
    p_sweep.add_argument("--out-dir", default="sweep_out")
    p_sweep.add_argument("--seed", type=int, default=None)
    p_sweep.set_defaults(func=cmd_sweep)

    p_verify = sub.add_parser("verify", help="empirical recursion margins")
    p_verify.add_argument("--method", default=None)
    p_verify.add_argument("--all", action="store_true")
    p_verify.add_argument("--samples", type=int, default=20000)
    p_verify.add_argument("--states", type=int, default=10)
    p_verify.add_argument("--seed", type=int, default=None)
    p_verify.add_argument(
        "--perturb", default=None, metavar="NAME:FACTOR",
        help="evaluate with scaled constants, e.g. C:0.5",
    )
    p_verify.add_argument("--out", default=None, help="margin CSV path")
    p_verify.set_defaults(func=cmd_verify)

    p_const = sub.add_parser("constants", help="print registered recursion constants")
    p_const.add_argument("--method", default=None)
    p_const.add_argument("--all", action="store_true")
    p_const.add_argument("--b", default=None, help="batch size, or the literal 'n'")
    p_const.add_argument("--p", type=float, default=0.25)
    p_const.add_argument("--n", type=int, default=100)
    p_const.add_argument("--d", type=int, default=100)
    p_const.add_argument("--k", type=int, default=5)
    p_const.add_argument("--omega", type=float, default=None)
    p_const.add_argument("--delta", type=float, default=None)
    p_const.add_argument("--clients", type=int, default=10)
    p_const.set_defaults(func=cmd_constants)

    p_ingest = sub.add_parser("ingest", help="normalize a dataset to libsvm text")
    p_ingest.add_argument("--data", default=None, help="input libsvm path (.gz ok)")
    p_ingest.add_argument("--synthetic", default=None, metavar="ROWSxDIM")
    p_ingest.add_argument("--limit", type=int, default=None)
    p_ingest.add_argument("--force-dim", type=int, default=None)
    p_ingest.add_argument("--seed", type=int, default=None)
    p_ingest.add_argument("--out", required=True)
    p_ingest.set_defaults(func=cmd_ingest)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
