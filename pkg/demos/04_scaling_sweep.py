"""Scaling of the quadratic solver with the component count.

Solves random-topology instances for growing k and fits the runtime
exponent.  Equivalent to `santt bench --k 4,6,8,10 --runs 3`.

Run:  python3 demos/04_scaling_sweep.py
"""

import time

import numpy as np

from santt import CaseStudyParams, SolverConfig, compute_mtta, generate_case_study

ks = (4, 6, 8, 10)
runs = 3

print(f"{'k':>3} {'states':>10} {'mean s':>8} {'max s':>8} {'max rank':>9} {'peak MB':>8}")
means = []
for k in ks:
    times, ranks, peaks = [], [], []
    for seed in range(runs):
        model = generate_case_study(CaseStudyParams(k, seed=seed))
        start = time.perf_counter()
        report = compute_mtta(
            model, SolverConfig(algorithm="squared", stop_tol=1e-7, max_iter=40)
        )
        times.append(time.perf_counter() - start)
        ranks.append(max(report.max_rank_history))
        peaks.append(report.peak_tt_bytes / 1e6)
    means.append(np.mean(times))
    print(
        f"{k:>3} {3**k:>10} {np.mean(times):>8.2f} {np.max(times):>8.2f} "
        f"{max(ranks):>9} {max(peaks):>8.1f}"
    )

exponent = np.polyfit(np.log(ks), np.log(means), 1)[0]
print(f"\nfitted runtime exponent: k^{exponent:.2f}")
