#!/usr/bin/env python3
"""Exact-numerics certificate over a batch of sampled clusters.

For each usable cluster instance (origin on the strong giant, no hole
touching the box surface) this measures the kernel-sup and spread
constants, checks the entropy derivative inequality over its probing
window, the localization variance bound, and the Poincare ratios, and
assembles the composite constants.  One CSV row per (seed, check).

Example:
    python scripts/run_certificate.py --d 2 --L 8 --instances 5 --out runs/
"""

import argparse
from pathlib import Path

import numpy as np

from rcmlab.chains import ChainError, build_chain
from rcmlab.cluster import ClusterError, decompose
from rcmlab.csvio import write_csv
from rcmlab.field import box_field
from rcmlab.law import law_from_dict
from rcmlab.nash import (
    derived_constants,
    heat_constants,
    monotonicity_probe,
    nash_bundle,
    nash_derivative_check,
    nash_variance_check,
    poincare_suite,
)

DEFAULT_LAW = {"id": "two-atom-mixed", "atoms": [[1.0, 0.75], [0.0625, 0.25]]}
COLUMNS = ("seed", "states", "check", "value", "holds")


def certify(field, alpha: float, radius: int, probes: int) -> list[tuple]:
    dec = decompose(field, alpha, box=field.box)
    if not dec.on_giant((0,) * field.d):
        raise ClusterError("origin off the giant")
    chain = build_chain(field, dec, "induced", alpha)
    z = (0,) * field.d
    hc = heat_constants(chain, z, [radius**2 / 4, radius**2 / 2, radius**2])
    bundle = nash_bundle(chain, z, radius, c6=hc.c6_hat)
    start = bundle.window_start
    grid = np.linspace(start, 2.0 * start, 10)
    slacks = [nash_derivative_check(bundle, float(t)).slack for t in grid]
    mono = monotonicity_probe(bundle, [float(t) for t in grid])
    variance = nash_variance_check(bundle, float(2.0 * start))
    poincare = poincare_suite(bundle, n_funcs=probes, seed=0)
    consts = derived_constants(
        hc.c5_hat, hc.c6_hat, bundle.volume_constant,
        mono.c8_hat, mono.c9_hat, poincare.c10_hat, radius, field.d,
    )
    rows = [
        ("derivative-slack-min", min(slacks), min(slacks) >= -1e-8),
        ("variance-slack", variance.slack, variance.holds),
        ("poincare-min", poincare.c10_hat, poincare.all_positive),
        ("compensated-entropy-monotone", mono.min_derivative_margin, mono.holds),
        ("window-start", start, True),
        ("c5-hat", hc.c5_hat, True),
        ("c6-hat", hc.c6_hat, True),
        ("zeta-hat", mono.zeta_hat, True),
        ("c-tilde", consts.c_tilde, True),
        ("gamma", consts.gamma, True),
    ]
    return [(chain.n_states, name, value, ok) for name, value, ok in rows]


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--d", type=int, default=2)
    ap.add_argument("--L", type=int, default=8)
    ap.add_argument("--alpha", type=float, default=0.5)
    ap.add_argument("--radius", type=int, default=3)
    ap.add_argument("--probes", type=int, default=100)
    ap.add_argument("--instances", type=int, default=5)
    ap.add_argument("--out", default="runs")
    args = ap.parse_args()

    law = law_from_dict(DEFAULT_LAW)
    rows = []
    found = 0
    for seed in range(4096):
        if found >= args.instances:
            break
        field = box_field(law, args.d, args.L, seed)
        try:
            cert = certify(field, args.alpha, args.radius, args.probes)
        except (ChainError, ClusterError):
            continue
        rows.extend((seed, states, name, value, ok) for states, name, value, ok in cert)
        found += 1
    if found < args.instances:
        raise SystemExit(f"only {found} usable instances below seed 4096")

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / "certificate.csv"
    write_csv(path, COLUMNS, rows)
    failures = [r for r in rows if not r[4]]
    print(f"{found} instances certified, {len(rows)} rows -> {path}")
    for r in failures:
        print(f"FAIL seed={r[0]} {r[2]} = {r[3]:.6g}")
    if not failures:
        print("all checks hold")


if __name__ == "__main__":
    main()
