"""Experiment orchestration: anomaly ratios, annulus profiles, window-count
moments, and the deterministic validation suite.

Every experiment consumes an ExperimentConfig and returns a RunResult whose
rows are a pure function of (config, seeds): tasks fan out over independent
(seed, horizon, annulus) triples and are aggregated in a fixed order, so
reruns reproduce estimates bit-for-bit at any thread count.  Wall times and
provenance travel separately from the rows.
"""

from __future__ import annotations

import hashlib
import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .chains import ChainError, annulus_lower_bound, build_chain, heat_kernel
from .cluster import decompose
from .config import (
    SCHEMA_VERSION,
    ConfigError,
    ExperimentConfig,
    window_annuli,
    window_contains,
)
from .field import box_field, lazy_field
from .greens import greens, greens_comparison_check, greens_identity_check
from .lattice import annulus_size
from .law import (
    family_bound_check,
    family_law,
    law_from_dict,
    trap_scale_mass,
    trap_scale_mass_exact,
    uniform_law,
)
from .nash import nash_bundle, nash_derivative_check, poisson_window_weights
from .stream import WalkerStream
from .walk import estimate_beta, sample_rnk, simulate_return, terminal_positions

__all__ = [
    "RunResult",
    "build_digest",
    "anomaly_experiment",
    "annulus_profile",
    "moment_experiment",
    "validate_suite",
    "ANOMALY_COLUMNS",
    "PROFILE_COLUMNS",
    "MOMENT_COLUMNS",
    "VALID_FAULTS",
]

ANOMALY_COLUMNS = (
    "seed",
    "n",
    "walkers",
    "hits_law",
    "p_law",
    "stderr_law",
    "hits_base",
    "p_base",
    "stderr_base",
    "scaled_law",
    "scaled_base",
    "ratio",
    "ratio_stderr",
    "budget_warning",
)

PROFILE_COLUMNS = (
    "seed",
    "n",
    "k",
    "method",
    "walkers",
    "mass",
    "annulus_size",
    "contribution",
    "in_window",
    "z_count",
)

MOMENT_COLUMNS = (
    "seed",
    "n",
    "k",
    "t_k",
    "walkers",
    "beta",
    "mean",
    "variance",
    "stderr",
    "truncated_mean",
    "ek_frequency",
    "target_mean",
    "target_second",
    "mean_ratio",
    "in_window",
)

VALID_FAULTS = ("kernel-row",)


@dataclass(frozen=True)
class RunResult:
    """Deterministic rows of one experiment plus run provenance.

    ``rows`` align with ``columns`` and depend only on the config; wall
    times live in ``timings`` so serialized rows stay byte-stable.
    """

    experiment: str
    columns: tuple[str, ...]
    rows: tuple[tuple, ...]
    provenance: dict
    timings: dict

    def row_dicts(self) -> list[dict]:
        return [dict(zip(self.columns, row)) for row in self.rows]


@lru_cache(maxsize=1)
def build_digest() -> str:
    """Content hash of the package sources, acting as the build id."""
    here = Path(__file__).resolve().parent
    h = hashlib.sha256()
    for path in sorted(here.glob("*.py")):
        h.update(path.name.encode())
        h.update(path.read_bytes())
    return h.hexdigest()[:16]


def _provenance(config: ExperimentConfig, warnings: list[str]) -> dict:
    return {
        "schema": SCHEMA_VERSION,
        "seeds": list(config.seeds),
        "build": build_digest(),
        "config_digest": config.digest(),
        "warnings": list(warnings),
    }


def _fan_out(tasks: Sequence[Callable[[], object]], threads: int) -> list:
    """Run independent tasks, returning results in submission order."""
    if threads <= 1 or len(tasks) <= 1:
        return [task() for task in tasks]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        futures = [pool.submit(task) for task in tasks]
        return [f.result() for f in futures]


# ---------------------------------------------------------------------------
# anomaly ratio: scaled return probability vs the homogeneous baseline
# ---------------------------------------------------------------------------


def anomaly_experiment(config: ExperimentConfig) -> RunResult:
    """Compare n^2 P^{2n}(0,0) under the configured law against the all-ones
    environment, walker for walker on infinite lazy fields.

    Both estimates share the walk seed, so running the all-ones law against
    its own baseline reproduces the ratio 1 exactly.  Rows where either
    relative error exceeds 50% carry the budget warning.
    """
    law = config.resolve_law()
    warnings: list[str] = []
    if config.d != 4:
        warnings.append(
            f"dimension {config.d} != 4: the slow-decay contrast is "
            "calibrated for d = 4"
        )
    rows: list[tuple] = []
    per_row: list[float] = []
    for seed in config.seeds:
        env = lazy_field(law, config.d, seed)
        base = lazy_field(uniform_law(), config.d, seed)
        for n in config.horizons:
            t0 = time.perf_counter()
            est = simulate_return(env, n, config.walkers, seed, threads=config.threads)
            ref = simulate_return(base, n, config.walkers, seed, threads=config.threads)
            per_row.append(time.perf_counter() - t0)
            budget = False
            if est.hits == 0 or ref.hits == 0:
                ratio = float("nan")
                ratio_stderr = float("nan")
                budget = True
                warnings.append(
                    f"walker budget infeasible at seed={seed} n={n}: "
                    "zero return hits"
                )
            else:
                rel_law = est.stderr / est.p_hat
                rel_base = ref.stderr / ref.p_hat
                ratio = est.p_hat / ref.p_hat
                ratio_stderr = ratio * math.hypot(rel_law, rel_base)
                if max(rel_law, rel_base) > 0.5:
                    budget = True
                    warnings.append(
                        f"walker budget infeasible at seed={seed} n={n}: "
                        "relative error exceeds 50%"
                    )
            rows.append(
                (
                    seed,
                    n,
                    config.walkers,
                    est.hits,
                    est.p_hat,
                    est.stderr,
                    ref.hits,
                    ref.p_hat,
                    ref.stderr,
                    n * n * est.p_hat,
                    n * n * ref.p_hat,
                    ratio,
                    ratio_stderr,
                    budget,
                )
            )
    return RunResult(
        experiment="anomaly",
        columns=ANOMALY_COLUMNS,
        rows=tuple(rows),
        provenance=_provenance(config, warnings),
        timings={"rows_s": per_row, "total_s": math.fsum(per_row)},
    )


# ---------------------------------------------------------------------------
# annulus profile: per-shell contributions to the return probability
# ---------------------------------------------------------------------------


def _annulus_masses_exact(law, d: int, n: int, seed: int) -> Sequence[float]:
    field = box_field(law, d, 2 * n, seed)
    return annulus_lower_bound(field, field.box, n).masses


def _annulus_masses_mc(law, d: int, n: int, seed: int, walkers: int) -> np.ndarray:
    field = lazy_field(law, d, seed)
    pos = terminal_positions(field, n, walkers, seed)
    r = np.abs(pos).max(axis=1)
    kidx = np.where(
        r == 0, 0, np.floor(np.log2(np.maximum(r, 1))).astype(np.int64) + 1
    )
    return np.bincount(kidx) / walkers


def annulus_profile(config: ExperimentConfig) -> RunResult:
    """Per-shell squared masses P(X_n in B_k)^2 / |B_k| plus the window count.

    Masses are exact (matrix powers on a box of radius 2n) for d <= 2 and
    Monte Carlo on the lazy field otherwise; shells beyond a walk's reach
    report zero mass.
    """
    law = config.resolve_law()
    exact = config.d <= 2
    method = "exact" if exact else "mc"
    walkers = 0 if exact else config.walkers

    def task(seed: int, n: int) -> tuple[list[tuple], float]:
        t0 = time.perf_counter()
        if exact:
            masses = _annulus_masses_exact(law, config.d, n, seed)
        else:
            masses = _annulus_masses_mc(law, config.d, n, seed, config.walkers)
        z_count = len(window_annuli(n))
        out = []
        for k in config.annuli:
            mass = float(masses[k]) if k < len(masses) else 0.0
            size = annulus_size(config.d, k)
            out.append(
                (
                    seed,
                    n,
                    k,
                    method,
                    walkers,
                    mass,
                    size,
                    mass * mass / size,
                    window_contains(n, k),
                    z_count,
                )
            )
        return out, time.perf_counter() - t0

    tasks = [
        (lambda seed=seed, n=n: task(seed, n))
        for seed in config.seeds
        for n in config.horizons
    ]
    results = _fan_out(tasks, config.threads)
    rows = [row for chunk, _ in results for row in chunk]
    per_row = [dt for _, dt in results]
    return RunResult(
        experiment="annulus-profile",
        columns=PROFILE_COLUMNS,
        rows=tuple(rows),
        provenance=_provenance(config, []),
        timings={"rows_s": per_row, "total_s": math.fsum(per_row)},
    )


# ---------------------------------------------------------------------------
# window-count moments vs the trap-density targets
# ---------------------------------------------------------------------------


def moment_experiment(config: ExperimentConfig) -> RunResult:
    """Empirical window-count moments against the targets rho_n t_k and
    (rho_n t_k)^2, aggregated over seeds on dense box fields."""
    law = config.resolve_law()
    L = max(config.box_sizes)
    envs = {}
    for seed in config.seeds:
        field = box_field(law, config.d, L, seed)
        dec = decompose(field, config.alpha, box=field.box)
        envs[seed] = (field, dec, estimate_beta(field, dec))

    def task(seed: int, n: int, k: int) -> tuple[tuple, float]:
        t0 = time.perf_counter()
        field, dec, beta = envs[seed]
        stats = sample_rnk(field, dec, n, k, beta, config.walkers, seed)
        rho = trap_scale_mass(law, n, config.d)
        target = rho * stats.t_k
        ratio = stats.mean / target if target > 0.0 else float("nan")
        row = (
            seed,
            n,
            k,
            stats.t_k,
            config.walkers,
            beta,
            stats.mean,
            stats.variance,
            stats.stderr,
            stats.truncated_mean,
            stats.ek_frequency,
            target,
            target * target,
            ratio,
            window_contains(n, k),
        )
        return row, time.perf_counter() - t0

    tasks = [
        (lambda seed=seed, n=n, k=k: task(seed, n, k))
        for seed in config.seeds
        for n in config.horizons
        for k in config.annuli
    ]
    results = _fan_out(tasks, config.threads)
    return RunResult(
        experiment="rnk-moments",
        columns=MOMENT_COLUMNS,
        rows=tuple(row for row, _ in results),
        provenance=_provenance(config, []),
        timings={
            "rows_s": [dt for _, dt in results],
            "total_s": math.fsum(dt for _, dt in results),
        },
    )


# ---------------------------------------------------------------------------
# validation suite
# ---------------------------------------------------------------------------

_VALIDATION_LAW = {
    "id": "validation-mixed",
    "atoms": [[1.0, 0.75], [0.0625, 0.25]],
}


@lru_cache(maxsize=1)
def _validation_instance():
    """First seed whose mixed-law box yields a usable hole-integrated chain
    with the origin on the strong component."""
    law = law_from_dict(_VALIDATION_LAW)
    for seed in range(64):
        field = box_field(law, 2, 4, seed)
        dec = decompose(field, 0.5, box=field.box)
        if not dec.on_giant((0, 0)):
            continue
        try:
            chain = build_chain(field, dec, "induced", alpha=0.5)
        except ChainError:
            continue
        return field, dec, chain
    raise ConfigError("no usable validation instance among 64 seeds")


def _surface_killed(chain) -> list:
    box = chain.field.box
    return [v for v in chain.states if box.on_surface(v)]


def _check_law_mass() -> tuple[bool, str]:
    law = law_from_dict(_VALIDATION_LAW)
    total = math.fsum(law.probs)
    ok = abs(total - 1.0) <= 1e-15 and all(0.0 < v <= 1.0 for v in law.values)
    return ok, f"atom mass sums to {total!r}"


def _check_family_bound() -> tuple[bool, str]:
    rows = family_bound_check(family_law(d=4))
    ok = bool(rows) and all(r["holds"] for r in rows)
    return ok, f"rho^2 >= 1/(4 lambda) on {len(rows)} scales"


def _check_stream() -> tuple[bool, str]:
    a = [WalkerStream(seed=42, walker_id=7).uniform() for _ in range(2)]
    s1 = WalkerStream(seed=42, walker_id=7)
    s2 = WalkerStream(seed=42, walker_id=8)
    ok = a[0] == a[1] == s1.uniform() and s1.uniform() != s2.uniform()
    return ok, "per-walker streams replay and separate"


def _check_field_storage() -> tuple[bool, str]:
    law = law_from_dict(_VALIDATION_LAW)
    dense = box_field(law, 2, 4, seed=9)
    lazy = lazy_field(law, 2, seed=9)
    worst = 0.0
    for tail in ((0, 0), (1, -2), (-3, 3), (2, 1)):
        for axis in (0, 1):
            worst = max(
                worst, abs(dense.edge_value(tail, axis) - lazy.edge_value(tail, axis))
            )
    return worst == 0.0, f"dense/lazy max discrepancy {worst!r}"


def _check_cluster_labels() -> tuple[bool, str]:
    _, dec, _ = _validation_instance()
    sym = (dec.strong_csr != dec.strong_csr.T).nnz
    ok = dec.giant_size >= 1 and sym == 0
    return ok, f"giant size {dec.giant_size}, adjacency asymmetries {sym}"


def _check_row_sums() -> tuple[bool, str]:
    field, dec, chain = _validation_instance()
    err = max(
        chain.row_sum_error(),
        build_chain(field, field.box, "full").row_sum_error(),
    )
    return err <= 1e-12, f"max row-sum error {err!r}"


def _check_detailed_balance(fault: str | None) -> tuple[bool, str]:
    field, _, _ = _validation_instance()
    chain = build_chain(field, field.box, "full")
    if fault == "kernel-row":
        chain.kernel.data[0] *= 1.5
    err = chain.detailed_balance_error()
    return err <= 1e-12, f"max pi-flux asymmetry {err!r}"


def _check_semigroup() -> tuple[bool, str]:
    _, _, chain = _validation_instance()
    z = chain.states[0]
    direct = heat_kernel(chain, z, 6).distribution
    half = heat_kernel(chain, z, 3).distribution
    for _ in range(3):
        half = chain.kernel_t @ half
    err = float(np.abs(direct - half).max())
    return err <= 1e-12, f"P^6 vs P^3 P^3 max gap {err!r}"


def _check_annulus_bound() -> tuple[bool, str]:
    field = box_field(law_from_dict(_VALIDATION_LAW), 1, 8, seed=3)
    bound = annulus_lower_bound(field, field.box, 4)
    return bound.holds, f"gap {bound.gap!r}"


def _check_greens_identity() -> tuple[bool, str]:
    field, dec, chain = _validation_instance()
    report = greens_identity_check(field, dec, 0.5, _surface_killed(chain))
    return report.ok, f"max relative error {report.max_rel_error!r}"


def _check_greens_comparison() -> tuple[bool, str]:
    field, dec, chain = _validation_instance()
    killed = _surface_killed(chain)
    f = {}
    for v in chain.states:
        if v not in killed:
            f[v] = 1.0
            break
    report = greens_comparison_check(field, dec, 0.5, killed, f)
    ok = report.holds and report.operator_order_holds
    return ok, f"form gap {report.rhs - report.lhs!r}"


def _check_cauchy_schwarz() -> tuple[bool, str]:
    _, _, chain = _validation_instance()
    g = greens(chain, _surface_killed(chain))
    excess = g.cauchy_schwarz_excess()
    return excess <= 1e-12, f"worst density CS excess {excess!r}"


def _check_nash_derivative() -> tuple[bool, str]:
    _, _, chain = _validation_instance()
    bundle = nash_bundle(chain, (0, 0), radius=3)
    report = nash_derivative_check(bundle, 4.0)
    return report.holds, f"derivative slack {report.slack!r}"


def _check_window_weights() -> tuple[bool, str]:
    w = poisson_window_weights(200, 2)
    err = abs(w.computed_total - w.analytic_total)
    return err <= 1e-10, f"|sum a_n - t_k/3| = {err!r}"


def _check_trap_mass() -> tuple[bool, str]:
    law = law_from_dict({"atoms": [[1.0, 0.75], [0.125, 0.25]]})
    got = trap_scale_mass_exact(law, 16, 2)
    want = Fraction(3, 4) * Fraction(1, 4) ** 6
    return got == want, f"exact mass {got} vs product {want}"


def _check_config_round_trip() -> tuple[bool, str]:
    cfg = ExperimentConfig(law=_VALIDATION_LAW, d=2, seeds=(1, 2), walkers=10)
    back = ExperimentConfig.from_dict(json.loads(cfg.to_json()))
    ok = back == cfg and back.digest() == cfg.digest()
    return ok, f"digest {cfg.digest()}"


def _check_window_predicate() -> tuple[bool, str]:
    got = window_annuli(4096)
    return got == [4], f"window annuli at n=4096: {got}"


def validate_suite(fault: str | None = None) -> dict:
    """Run every deterministic cross-module identity/inequality check.

    ``fault`` perturbs one stored kernel entry before the detailed-balance
    check, as a negative control that the suite can fail.  The report is a
    JSON-serializable mapping.
    """
    if fault is not None and fault not in VALID_FAULTS:
        raise ConfigError(f"unknown fault {fault!r}; valid: {VALID_FAULTS}")
    checks: list[tuple[str, Callable[[], tuple[bool, str]]]] = [
        ("law-mass", _check_law_mass),
        ("family-trap-bound", _check_family_bound),
        ("stream-determinism", _check_stream),
        ("field-storage-agreement", _check_field_storage),
        ("cluster-labels", _check_cluster_labels),
        ("kernel-row-sums", _check_row_sums),
        ("kernel-detailed-balance", lambda: _check_detailed_balance(fault)),
        ("kernel-semigroup", _check_semigroup),
        ("annulus-lower-bound", _check_annulus_bound),
        ("greens-identity", _check_greens_identity),
        ("greens-comparison", _check_greens_comparison),
        ("greens-cauchy-schwarz", _check_cauchy_schwarz),
        ("nash-derivative", _check_nash_derivative),
        ("window-weights", _check_window_weights),
        ("trap-mass-exact", _check_trap_mass),
        ("config-round-trip", _check_config_round_trip),
        ("window-predicate", _check_window_predicate),
    ]
    results = []
    for name, fn in checks:
        try:
            passed, detail = fn()
        except Exception as exc:  # noqa: BLE001 - reported, not masked
            passed, detail = False, f"error: {exc!r}"
        results.append({"name": name, "passed": bool(passed), "detail": detail})
    return {
        "schema": SCHEMA_VERSION,
        "fault": fault,
        "all_passed": all(c["passed"] for c in results),
        "checks": results,
    }
