#!/usr/bin/env python3
"""Why per-pulse detection counts must be checked when the basis is slow.

Simulates an intercept-resend eavesdropper against BB84 with one basis
choice per M-pulse sequence.  Eve measures a few sequences in Z, forwards
the ones she measured (plus some untouched ones to pad the loss budget),
and blocks everything else.  Whenever every forwarded sequence happens to
match the legitimate bases, she holds the entire sifted key and the error
check shows nothing.

The fix is one extra sifting rule: discard any sequence with more than one
detection.  Eve's forwarded sequences arrive at full intensity and light up
all M pulses, so they are all discarded; honest sequences at realistic loss
rarely contain two detections and survive almost untouched.
"""

from __future__ import annotations

import argparse
import math

from slowqkd.attacksim import (
    DEFAULT_SCENARIO,
    analytic_success,
    honest_baseline,
    run_attack,
)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--trials", type=int, default=200_000)
    ap.add_argument("--seed", type=int, default=7)
    args = ap.parse_args()

    sc = DEFAULT_SCENARIO
    print(f"scenario: p_z={sc.p_z}, M={sc.M}, {sc.n_sequences} sequences/run, "
          f"Eve measures {sc.n_measured} + forwards {sc.n_clean} clean, "
          f"nominal transmission {sc.eta_nominal}")

    attacked = run_attack(sc, trials=args.trials, seed=args.seed)
    p = analytic_success(sc)
    se = attacked.success_stderr
    print(f"\nundetectable-attack probability: analytic {p:.4e}, "
          f"simulated {attacked.empirical_success:.4e} "
          f"(+/- {se:.1e}, {args.trials} trials)")
    print(f"  -> roughly one run in {math.ceil(1 / p)} hands Eve the whole key")

    honest = honest_baseline(sc, trials=min(args.trials, 2000), seed=args.seed)
    print("\nsifted bits per run        naive sifting    discard multi-detection")
    print(f"  under attack           {attacked.sifted_naive_mean:14.1f}  "
          f"{attacked.sifted_modified_mean:22.1f}")
    print(f"  honest channel         {honest.sifted_naive_mean:14.1f}  "
          f"{honest.sifted_modified_mean:22.1f}")

    kept = honest.sifted_modified_total / max(1, honest.sifted_naive_total)
    print(f"\nthe countermeasure keeps {kept:.0%} of the honest key and "
          f"reduces Eve's haul to {attacked.sifted_modified_total} bits "
          f"across all {args.trials} attacked runs")


if __name__ == "__main__":
    main()
