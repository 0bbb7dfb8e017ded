"""Command-line interface.

Every subcommand writes one CSV with a fixed column order and floats at 17
significant digits, so a rerun with identical config and seeds reproduces
the file byte for byte at any thread count.  Wall-clock timings and run
provenance (seed, build hash, config digest) go to a JSON sidecar next to
the CSV, never into the CSV itself.

Exit codes: 0 on success, 2 when a validation check or the requested
computation fails on the realized instance, 3 for configuration errors
(bad flags, malformed config/law files).  The RCM_THREADS environment
variable overrides --threads and any configured thread count.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from .chains import (
    ChainError,
    annulus_lower_bound,
    build_chain,
    diagonal_decay_profile,
)
from .cluster import ClusterError, decompose, hole_report
from .config import ConfigError, ExperimentConfig
from .csvio import write_csv
from .experiments import (
    RunResult,
    VALID_FAULTS,
    annulus_profile,
    anomaly_experiment,
    build_digest,
    moment_experiment,
    validate_suite,
)
from .field import FieldError, box_field, lazy_field
from .greens import (
    GreensError,
    greens_comparison_check,
    greens_identity_check,
)
from .lattice import GeometryError
from .law import LawError, law_from_dict, load_law
from .nash import (
    NashError,
    derived_constants,
    heat_constants,
    monotonicity_probe,
    nash_bundle,
    nash_derivative_check,
    nash_variance_check,
    poincare_suite,
)
from .traps import trap_census
from .walk import WalkError, simulate_return

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_CONFIG = 3

DEFAULT_LAW = {"id": "two-atom-mixed", "atoms": [[1.0, 0.75], [0.0625, 0.25]]}
ANOMALY_LAW = {"id": "two-atom-heavy", "atoms": [[1.0, 0.7], [0.015625, 0.3]]}
MOMENT_DEFAULTS = dict(
    law={"id": "two-atom-sparse", "atoms": [[1.0, 0.9], [0.1, 0.1]]},
    d=1,
    seeds=(3,),
    horizons=(16,),
    annuli=(4,),
    walkers=200,
    box_sizes=(16,),
)

_VALIDATION_ERRORS = (
    ChainError,
    ClusterError,
    FieldError,
    GeometryError,
    GreensError,
    NashError,
    WalkError,
)
_CONFIG_ERRORS = (ConfigError, LawError)


class CliParser(argparse.ArgumentParser):
    """Argument parser whose usage errors exit with the config-error code."""

    def error(self, message):  # noqa: D102 - argparse hook
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _seed64(text: str) -> int:
    value = int(text)
    if not 0 <= value < 1 << 64:
        raise argparse.ArgumentTypeError(f"seed must fit in 64 bits, got {text}")
    return value


def _positive(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def _law_arg(args, default: dict):
    """Resolve --law (a JSON file path or an inline JSON object literal)."""
    raw = getattr(args, "law", None)
    if raw is None:
        return law_from_dict(default)
    if raw.lstrip().startswith("{"):
        try:
            obj = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"--law is not valid JSON: {exc}") from exc
        return law_from_dict(obj)
    return load_law(raw)


def _law_spec(args, default: dict):
    """The serializable form of --law, for embedding into a config."""
    raw = getattr(args, "law", None)
    if raw is None:
        return default
    if raw.lstrip().startswith("{"):
        try:
            return json.loads(raw)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"--law is not valid JSON: {exc}") from exc
    return raw


def _resolve_threads(args, config: ExperimentConfig | None = None) -> int:
    env = os.environ.get("RCM_THREADS")
    if env is not None:
        try:
            value = int(env)
        except ValueError as exc:
            raise ConfigError(f"RCM_THREADS must be an integer, got {env!r}") from exc
        if value < 1:
            raise ConfigError(f"RCM_THREADS must be >= 1, got {value}")
        return value
    if args.threads is not None:
        return args.threads
    return config.threads if config is not None else 1


def _effective_config(args, defaults: dict) -> ExperimentConfig:
    """Config from --config when given, else from per-command defaults,
    with command-line flags layered on top."""
    if args.config is not None:
        config = ExperimentConfig.from_file(args.config)
    else:
        merged = dict(defaults)
        merged["law"] = _law_spec(args, merged["law"])
        config = ExperimentConfig(**merged)
    overrides: dict = {}
    if args.seed is not None:
        overrides["seeds"] = (args.seed,)
    if getattr(args, "n", None):
        overrides["horizons"] = tuple(args.n)
    if getattr(args, "k", None):
        overrides["annuli"] = tuple(args.k)
    if getattr(args, "walkers", None) is not None:
        overrides["walkers"] = args.walkers
    if getattr(args, "alpha", None) is not None:
        overrides["alpha"] = args.alpha
    if getattr(args, "d", None) is not None:
        overrides["d"] = args.d
    if getattr(args, "L", None) is not None:
        overrides["box_sizes"] = (args.L,)
    overrides["threads"] = _resolve_threads(args, config)
    if args.out is not None:
        overrides["output_dir"] = args.out
    return dataclasses.replace(config, **overrides)


def _out_path(args, config: ExperimentConfig | None, name: str, suffix: str = ".csv") -> Path:
    base = args.out
    if base is None:
        base = config.output_dir if config is not None else "."
    path = Path(base)
    if path.suffix == suffix:
        path.parent.mkdir(parents=True, exist_ok=True)
        return path
    path.mkdir(parents=True, exist_ok=True)
    return path / f"{name}{suffix}"


def _write_result(args, config: ExperimentConfig, result: RunResult) -> Path:
    csv_path = _out_path(args, config, result.experiment)
    write_csv(csv_path, result.columns, result.rows)
    sidecar = csv_path.with_suffix(".json")
    sidecar.write_text(
        json.dumps(
            {
                "experiment": result.experiment,
                "columns": list(result.columns),
                "provenance": result.provenance,
                "timings": result.timings,
                "config": config.to_dict(),
            },
            indent=2,
            sort_keys=True,
        )
        + "\n"
    )
    for warning in result.provenance.get("warnings", []):
        print(f"warning: {warning}", file=sys.stderr)
    print(f"wrote {len(result.rows)} rows to {csv_path}")
    return csv_path


def _flag_field(args, law, boundary: str = "free"):
    seed = args.seed if args.seed is not None else 1
    return box_field(law, args.d, args.L, seed, boundary=boundary), seed


def _usable_induced(law, d: int, L: int, alpha: float, seed: int | None):
    """Build the hole-integrated chain, scanning seeds when none is pinned."""
    seeds = [seed] if seed is not None else list(range(64))
    last: Exception | None = None
    for s in seeds:
        field = box_field(law, d, L, s)
        dec = decompose(field, alpha, box=field.box)
        if not dec.on_giant((0,) * d):
            last = ChainError(f"origin off the strong component at seed {s}")
            continue
        try:
            return field, dec, build_chain(field, dec, "induced", alpha=alpha), s
        except ChainError as exc:
            last = exc
    raise ChainError(f"no usable instance found: {last}")


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_sample_env(args) -> int:
    law = _law_arg(args, DEFAULT_LAW)
    field, seed = _flag_field(args, law, boundary=args.boundary)
    grid = field.box.coordinate_grid()
    values = np.concatenate(
        [field.edge_values_batch(grid, axis) for axis in range(args.d)]
    )
    values = values[values > 0.0]
    rows = []
    for value, prob in zip(law.values, law.probs):
        count = int(np.count_nonzero(values == value))
        rows.append(
            (seed, args.d, args.L, args.boundary, value, prob, count, count / values.size)
        )
    path = _out_path(args, None, "sample-env")
    write_csv(path, ("seed", "d", "L", "boundary", "value", "prob", "count", "fraction"), rows)
    print(f"sampled {values.size} edges; wrote {path}")
    return EXIT_OK


def cmd_cluster_stats(args) -> int:
    law = _law_arg(args, DEFAULT_LAW)
    field, _ = _flag_field(args, law)
    rows = []
    for alpha in args.alpha:
        dec = decompose(field, alpha, box=field.box)
        report = hole_report(dec)
        rows.append(
            (
                alpha,
                args.L,
                dec.giant_size,
                report.n_holes,
                report.max_diameter,
                report.mean_size,
            )
        )
    path = _out_path(args, None, "cluster-stats")
    write_csv(
        path,
        ("alpha", "box", "giant_size", "n_holes", "max_hole_diam", "mean_hole_size"),
        rows,
    )
    print(f"wrote {len(rows)} rows to {path}")
    return EXIT_OK


def cmd_simulate_return(args) -> int:
    config = None
    if args.config is not None:
        config = ExperimentConfig.from_file(args.config)
        law = config.resolve_law()
        d = config.d
        seeds = (args.seed,) if args.seed is not None else config.seeds
        horizons = tuple(args.n) if args.n else config.horizons
        walkers = args.walkers if args.walkers is not None else config.walkers
    else:
        law = _law_arg(args, DEFAULT_LAW)
        d = args.d
        seeds = (args.seed if args.seed is not None else 1,)
        horizons = tuple(args.n) if args.n else (8,)
        walkers = args.walkers if args.walkers is not None else 100_000
    threads = _resolve_threads(args, config)
    rows = []
    for seed in seeds:
        if args.L is not None:
            field = box_field(law, d, args.L, seed)
        else:
            field = lazy_field(law, d, seed)
        for n in horizons:
            est = simulate_return(field, n, walkers, seed, threads=threads)
            rows.append((est.n, est.hits, est.walkers, est.p_hat, est.stderr, est.seed))
    path = _out_path(args, config, "simulate-return")
    write_csv(path, ("n", "hits", "walkers", "p_hat", "stderr", "seed"), rows)
    print(f"wrote {len(rows)} rows to {path}")
    return EXIT_OK


def cmd_trap_census(args) -> int:
    law = _law_arg(args, DEFAULT_LAW)
    field, seed = _flag_field(args, law)
    region = [tuple(v) for v in field.box.coordinate_grid().tolist()]
    census = trap_census(field, region, args.n)
    rows = []
    for rec in census.records:
        fence_values = [value for _, value in rec.fence]
        rows.append(
            (
                seed,
                rec.n,
                rec.adjacent_vertex,
                rec.tail,
                rec.axis,
                rec.strong_value,
                min(fence_values),
                max(fence_values),
            )
        )
    path = _out_path(args, None, "trap-census")
    write_csv(
        path,
        ("seed", "n", "vertex", "tail", "axis", "strong_value", "fence_min", "fence_max"),
        rows,
    )
    print(
        f"flagged {len(census.flagged)} of {len(region)} vertices at scale "
        f"{args.n}; wrote {path}"
    )
    return EXIT_OK


def cmd_rnk_moments(args) -> int:
    config = _effective_config(args, MOMENT_DEFAULTS)
    _write_result(args, config, moment_experiment(config))
    return EXIT_OK


def cmd_annulus_profile(args) -> int:
    defaults = dict(
        law=DEFAULT_LAW,
        d=1,
        seeds=(0,),
        horizons=(16,),
        annuli=(1, 2, 3),
        walkers=2000,
        box_sizes=(16,),
    )
    config = _effective_config(args, defaults)
    _write_result(args, config, annulus_profile(config))
    return EXIT_OK


def cmd_anomaly(args) -> int:
    defaults = dict(
        law=ANOMALY_LAW,
        d=4,
        seeds=(1,),
        horizons=(16, 32, 64),
        annuli=(2,),
        walkers=100_000,
        box_sizes=(16,),
    )
    config = _effective_config(args, defaults)
    result = anomaly_experiment(config)
    _write_result(args, config, result)
    return EXIT_OK


def cmd_exact_kernel(args) -> int:
    law = _law_arg(args, DEFAULT_LAW)
    op = args.op
    rows: list[tuple] = []
    if op == "annulus-bound":
        columns = ("d", "seed", "n", "lhs", "rhs", "gap", "holds")
        seed = args.seed if args.seed is not None else 1
        for n in args.n or [4]:
            field = box_field(law, args.d, 2 * n, seed)
            bound = annulus_lower_bound(field, field.box, n)
            rows.append((args.d, seed, n, bound.lhs, bound.rhs, bound.gap, bound.holds))
    elif op == "decay":
        columns = ("d", "L", "seed", "ell", "scaled_sup")
        field, seed = _flag_field(args, law)
        chain = build_chain(field, field.box, "full")
        profile = diagonal_decay_profile(chain, (0,) * args.d, args.steps)
        for ell, value in enumerate(profile.values, start=1):
            rows.append((args.d, args.L, seed, ell, value))
    elif op in ("green-id", "green-cmp"):
        field, dec, chain, seed = _usable_induced(law, args.d, args.L, args.alpha, args.seed)
        killed = [v for v in chain.states if field.box.on_surface(v)]
        if op == "green-id":
            columns = ("d", "L", "seed", "alpha", "n_alive", "max_rel_error", "generator_error", "ok")
            rep = greens_identity_check(field, dec, args.alpha, killed)
            rows.append(
                (args.d, args.L, seed, args.alpha, rep.n_alive, rep.max_rel_error, rep.generator_error, rep.ok)
            )
        else:
            columns = (
                "d", "L", "seed", "alpha", "n_alive", "lhs", "rhs",
                "operator_gap", "operator_min_eigenvalue", "holds", "operator_order_holds",
            )
            f = {v: 1.0 for v in chain.states if v not in killed}
            rep = greens_comparison_check(field, dec, args.alpha, killed, f)
            rows.append(
                (
                    args.d, args.L, seed, args.alpha, rep.n_alive, rep.lhs, rep.rhs,
                    rep.operator_gap, rep.operator_min_eigenvalue, rep.holds,
                    rep.operator_order_holds,
                )
            )
    elif op == "nash":
        columns = ("d", "L", "seed", "alpha", "radius", "t", "lhs", "rhs1", "rhs2", "rhs3", "slack", "holds")
        _, _, chain, seed = _usable_induced(law, args.d, args.L, args.alpha, args.seed)
        bundle = nash_bundle(chain, (0,) * args.d, radius=args.radius)
        for t in args.t or [2.0, 4.0, 8.0]:
            rep = nash_derivative_check(bundle, t)
            rows.append(
                (args.d, args.L, seed, args.alpha, args.radius, t,
                 rep.lhs, rep.rhs1, rep.rhs2, rep.rhs3, rep.slack, rep.holds)
            )
    elif op == "poincare":
        columns = ("d", "L", "seed", "alpha", "radius", "probe", "ratio")
        _, _, chain, seed = _usable_induced(law, args.d, args.L, args.alpha, args.seed)
        bundle = nash_bundle(chain, (0,) * args.d, radius=args.radius)
        report = poincare_suite(bundle, n_funcs=args.probes, seed=seed)
        for i, ratio in enumerate(report.ratios):
            rows.append((args.d, args.L, seed, args.alpha, args.radius, i, ratio))
    else:  # pragma: no cover - argparse restricts choices
        raise ConfigError(f"unknown exact-kernel op {op!r}")
    path = _out_path(args, None, f"exact-kernel-{op}")
    write_csv(path, columns, rows)
    print(f"wrote {len(rows)} rows to {path}")
    return EXIT_OK


def cmd_nash_check(args) -> int:
    law = _law_arg(args, DEFAULT_LAW)
    _, _, chain, seed = _usable_induced(law, args.d, args.L, args.alpha, args.seed)
    z = (0,) * args.d
    radius = args.radius
    consts = heat_constants(chain, z, [radius**2 / 4.0, radius**2 / 2.0, float(radius**2)])
    bundle = nash_bundle(chain, z, radius=radius, c6=consts.c6_hat)
    start = bundle.window_start
    grid = np.linspace(start, 2.0 * start, 10)
    mono = monotonicity_probe(bundle, grid)
    variance = nash_variance_check(bundle, 2.0 * start)
    poincare = poincare_suite(bundle, n_funcs=args.probes, seed=seed)
    slacks = [nash_derivative_check(bundle, t).slack for t in grid]
    derived = derived_constants(
        c5=consts.c5_hat,
        c6=consts.c6_hat,
        c7=bundle.volume_constant,
        c8=mono.c8_hat,
        c9=mono.c9_hat,
        c10=poincare.c10_hat,
        radius=radius,
        d=chain.d,
    )
    rows = [
        ("derivative-slack-min", min(slacks), min(slacks) >= -1e-8),
        ("compensated-entropy-monotone", mono.min_derivative_margin, mono.holds),
        ("variance-slack", variance.slack, variance.holds),
        ("poincare-min", poincare.c10_hat, poincare.all_positive),
        ("window-start", start, True),
        ("volume", bundle.volume, True),
        ("c5-hat", consts.c5_hat, True),
        ("c6-hat", consts.c6_hat, True),
        ("c7-hat", bundle.volume_constant, True),
        ("c8-hat", mono.c8_hat, True),
        ("c9-hat", mono.c9_hat, True),
        ("zeta-hat", mono.zeta_hat, True),
        ("c-tilde", derived.c_tilde, True),
        ("c-prime", derived.c_prime, True),
        ("gamma", derived.gamma, True),
    ]
    path = _out_path(args, None, "nash-check")
    write_csv(path, ("check", "value", "holds"), rows)
    failed = [name for name, _, ok in rows if not ok]
    for name, value, ok in rows:
        print(f"[{'ok  ' if ok else 'FAIL'}] {name}: {value:.6g}")
    print(f"wrote {path}")
    return EXIT_VALIDATION if failed else EXIT_OK


def cmd_validate(args) -> int:
    report = validate_suite(fault=args.fault)
    report["build"] = build_digest()
    path = _out_path(args, None, "validate", suffix=".json")
    path.write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    for check in report["checks"]:
        mark = "ok  " if check["passed"] else "FAIL"
        print(f"[{mark}] {check['name']}: {check['detail']}")
    print(f"wrote {path}")
    return EXIT_OK if report["all_passed"] else EXIT_VALIDATION


# ---------------------------------------------------------------------------
# parser assembly
# ---------------------------------------------------------------------------


def _add_instance_flags(p, d=2, L=8, alpha=0.5, with_alpha=True,
                        law_help="law JSON file or inline JSON object"):
    p.add_argument("--law", metavar="LAW", help=law_help)
    p.add_argument("--d", type=_positive, default=d, help=f"lattice dimension (default {d})")
    p.add_argument("--L", type=_positive, default=L, help=f"box radius (default {L})")
    if with_alpha:
        p.add_argument("--alpha", type=float, default=alpha,
                       help=f"strong-edge threshold (default {alpha})")


def build_parser() -> CliParser:
    common = argparse.ArgumentParser(add_help=False)
    group = common.add_argument_group("global options")
    group.add_argument("--config", metavar="PATH", default=argparse.SUPPRESS,
                       help="experiment config JSON file")
    group.add_argument("--seed", type=_seed64, metavar="U64", default=argparse.SUPPRESS,
                       help="environment/walk seed (overrides config seeds)")
    group.add_argument("--threads", type=_positive, metavar="N", default=argparse.SUPPRESS,
                       help="worker threads (RCM_THREADS overrides)")
    group.add_argument("--out", metavar="DIR", default=argparse.SUPPRESS,
                       help="output directory or explicit .csv path")

    parser = CliParser(
        prog="rcmlab",
        description="Simulation and exact-numerics laboratory for random "
        "walks among i.i.d. random conductances.",
        parents=[common],
    )
    sub = parser.add_subparsers(dest="command", required=True, parser_class=CliParser)

    def add(name, func, help_text, columns=None):
        epilog = f"CSV columns: {', '.join(columns)}" if columns else None
        p = sub.add_parser(
            name,
            parents=[common],
            help=help_text,
            description=help_text,
            epilog=epilog,
        )
        p.set_defaults(func=func)
        return p

    p = add("sample-env", cmd_sample_env,
            "Sample a boxed environment and report realized atom frequencies.",
            ("seed", "d", "L", "boundary", "value", "prob", "count", "fraction"))
    _add_instance_flags(p)
    p.add_argument("--boundary", choices=("free", "periodic"), default="free")

    p = add("cluster-stats", cmd_cluster_stats,
            "Strong-component and hole geometry of a sampled box.",
            ("alpha", "box", "giant_size", "n_holes", "max_hole_diam", "mean_hole_size"))
    _add_instance_flags(p, with_alpha=False)
    p.add_argument("--alpha", type=float, nargs="+", default=[0.5],
                   help="one row per threshold (default 0.5)")

    p = add("simulate-return", cmd_simulate_return,
            "Monte Carlo estimate of the 2n-step return probability.",
            ("n", "hits", "walkers", "p_hat", "stderr", "seed"))
    p.add_argument("--law", metavar="LAW", help="law JSON file or inline JSON object")
    p.add_argument("--d", type=_positive, default=2, help="lattice dimension (default 2)")
    p.add_argument("--L", type=_positive, default=None,
                   help="box radius; omit for the infinite lazy field")
    p.add_argument("--n", type=_positive, action="append",
                   help="horizon n (repeatable; default 8 or config horizons)")
    p.add_argument("--walkers", type=_positive, default=None,
                   help="number of walkers (default 100000 or config)")

    p = add("trap-census", cmd_trap_census,
            "Flag every box vertex adjacent to a trap at scale n.",
            ("seed", "n", "vertex", "tail", "axis", "strong_value", "fence_min", "fence_max"))
    _add_instance_flags(p, L=12)
    p.add_argument("--n", type=_positive, default=16, help="trap scale (default 16)")

    p = add("rnk-moments", cmd_rnk_moments,
            "Window-count moments versus the trap-density targets.",
            ("seed", "n", "k", "t_k", "walkers", "beta", "mean", "variance", "stderr",
             "truncated_mean", "ek_frequency", "target_mean", "target_second",
             "mean_ratio", "in_window"))
    p.add_argument("--law", metavar="LAW", help="law JSON file or inline JSON object")
    p.add_argument("--d", type=_positive, default=None)
    p.add_argument("--L", type=_positive, default=None)
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--n", type=_positive, action="append", help="horizon (repeatable)")
    p.add_argument("--k", type=_positive, action="append", help="annulus index (repeatable)")
    p.add_argument("--walkers", type=_positive, default=None)

    p = add("annulus-profile", cmd_annulus_profile,
            "Per-shell squared occupation masses and the window count.",
            ("seed", "n", "k", "method", "walkers", "mass", "annulus_size",
             "contribution", "in_window", "z_count"))
    p.add_argument("--law", metavar="LAW", help="law JSON file or inline JSON object")
    p.add_argument("--d", type=_positive, default=None)
    p.add_argument("--n", type=_positive, action="append", help="horizon (repeatable)")
    p.add_argument("--k", type=_positive, action="append", help="annulus index (repeatable)")
    p.add_argument("--walkers", type=_positive, default=None)

    p = add("exact-kernel", cmd_exact_kernel,
            "Exact finite-chain checks; columns depend on --op. "
            "annulus-bound: d, seed, n, lhs, rhs, gap, holds. "
            "green-id: d, L, seed, alpha, n_alive, max_rel_error, generator_error, ok. "
            "green-cmp: d, L, seed, alpha, n_alive, lhs, rhs, operator_gap, "
            "operator_min_eigenvalue, holds, operator_order_holds. "
            "nash: d, L, seed, alpha, radius, t, lhs, rhs1, rhs2, rhs3, slack, holds. "
            "poincare: d, L, seed, alpha, radius, probe, ratio. "
            "decay: d, L, seed, ell, scaled_sup.")
    p.add_argument("--op", required=True,
                   choices=("annulus-bound", "green-id", "green-cmp", "nash", "poincare", "decay"))
    _add_instance_flags(p, d=2, L=4)
    p.add_argument("--n", type=_positive, action="append", help="horizons for annulus-bound")
    p.add_argument("--steps", type=_positive, default=12, help="profile length for decay")
    p.add_argument("--radius", type=_positive, default=3, help="ball radius for nash/poincare")
    p.add_argument("--t", type=float, action="append", help="time grid for nash")
    p.add_argument("--probes", type=_positive, default=20, help="function count for poincare")

    p = add("nash-check", cmd_nash_check,
            "Full entropy-method certificate on one sampled cluster.",
            ("check", "value", "holds"))
    _add_instance_flags(p, d=2, L=4)
    p.add_argument("--radius", type=_positive, default=3)
    p.add_argument("--probes", type=_positive, default=50)

    p = add("anomaly", cmd_anomaly,
            "Scaled return probability under the configured law versus the "
            "all-ones baseline, on infinite lazy fields.",
            ("seed", "n", "walkers", "hits_law", "p_law", "stderr_law", "hits_base",
             "p_base", "stderr_base", "scaled_law", "scaled_base", "ratio",
             "ratio_stderr", "budget_warning"))
    p.add_argument("--law", metavar="LAW", help="law JSON file or inline JSON object")
    p.add_argument("--d", type=_positive, default=None, help="dimension (default 4)")
    p.add_argument("--n", type=_positive, action="append", help="horizon (repeatable)")
    p.add_argument("--walkers", type=_positive, default=None)

    p = add("validate", cmd_validate,
            "Run every deterministic cross-module identity/inequality check.")
    p.add_argument("--fault", choices=VALID_FAULTS, default=None,
                   help="inject a negative-control fault")

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    # Shared flags use SUPPRESS defaults so a value parsed before the
    # subcommand is not clobbered by the subparser; fill the gaps here.
    for name in ("config", "seed", "threads", "out"):
        if not hasattr(args, name):
            setattr(args, name, None)
    try:
        return args.func(args)
    except _CONFIG_ERRORS as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except _VALIDATION_ERRORS as exc:
        print(f"validation failure: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
