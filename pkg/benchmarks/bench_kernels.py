"""Compare the compiled and vectorized recursion kernels.

Times the forward, backward, and transition-posterior kernels in both forms
(numba-compiled loops vs the numpy fallback) over a grid of sequence lengths
and state counts, then an end-to-end E-step workload with each form bound.
Usage:

    python3 benchmarks/bench_kernels.py --lengths 50,200,800 --states 2,4,8

When numba is unavailable (or disabled via GRAPHHMM_NO_NUMBA=1) only the
numpy column is reported.
"""

import argparse
import time

import numpy as np

from graphhmm import kernels
from graphhmm.hmm import GaussianHmm, gaussian_log_densities
from graphhmm.mixture import SequenceDataset, SparseMixtureModel, mixture_posteriors


def median_seconds(fn, repeats):
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return float(np.median(times))


def build_inputs(rng, length, states, dim=2):
    log_pi = np.log(rng.dirichlet(np.ones(states)))
    log_a = np.log(rng.dirichlet(np.ones(states), size=states))
    seq = rng.normal(size=(length, dim))
    means = rng.normal(size=(states, dim))
    variances = rng.uniform(0.5, 1.5, size=(states, dim))
    log_obs = gaussian_log_densities(seq, means, variances)
    return log_pi, log_a, log_obs


def bench_kernels(rng, lengths, states_list, repeats):
    header = f"{'kernel':<22}{'T':>6}{'S':>4}{'numpy':>12}"
    if kernels.NUMBA_ENABLED:
        header += f"{'numba':>12}{'speedup':>9}"
    print(header)
    print("-" * len(header))
    for length in lengths:
        for states in states_list:
            log_pi, log_a, log_obs = build_inputs(rng, length, states)
            la = kernels.forward_numpy(log_pi, log_a, log_obs)
            lb = kernels.backward_numpy(log_a, log_obs)
            ll = float(kernels.logsumexp(la[-1]))
            variants = [
                ("forward", lambda f: f(log_pi, log_a, log_obs),
                 kernels.forward_numpy, kernels.forward_numba),
                ("backward", lambda f: f(log_a, log_obs),
                 kernels.backward_numpy, kernels.backward_numba),
                ("transition_posteriors", lambda f: f(la, lb, log_a, log_obs, ll),
                 kernels.transition_posteriors_numpy,
                 kernels.transition_posteriors_numba),
            ]
            for name, call, numpy_fn, numba_fn in variants:
                t_np = median_seconds(lambda: call(numpy_fn), repeats)
                row = f"{name:<22}{length:>6}{states:>4}{t_np * 1e6:>10.1f}us"
                if numba_fn is not None:
                    call(numba_fn)  # compile outside the timed region
                    t_nb = median_seconds(lambda: call(numba_fn), repeats)
                    row += f"{t_nb * 1e6:>10.1f}us{t_np / t_nb:>8.1f}x"
                print(row)


def bench_estep(rng, repeats):
    """Full mixture E-step (forward-backward for every sequence/component
    pair) with each kernel form bound in place of the selected one."""
    comps = []
    for _ in range(4):
        pi = rng.dirichlet(np.ones(4))
        a = rng.dirichlet(np.ones(4), size=4)
        comps.append(GaussianHmm(pi, a, rng.normal(size=(4, 2)),
                                 rng.uniform(0.5, 1.5, size=(4, 2))))
    model = SparseMixtureModel(comps, np.full((2, 4), 0.25))
    data = SequenceDataset([(1 + i % 2, rng.normal(size=(100, 2)))
                            for i in range(40)])
    bound = (kernels.forward, kernels.backward, kernels.transition_posteriors)
    forms = [("numpy", kernels.forward_numpy, kernels.backward_numpy,
              kernels.transition_posteriors_numpy)]
    if kernels.NUMBA_ENABLED:
        forms.append(("numba", kernels.forward_numba, kernels.backward_numba,
                      kernels.transition_posteriors_numba))
    print(f"\nE-step, 40 sequences x T=100, M=4, S=4 (median of {repeats}):")
    results = {}
    try:
        for name, fwd, bwd, tp in forms:
            kernels.forward, kernels.backward, kernels.transition_posteriors = fwd, bwd, tp
            mixture_posteriors(model, data)  # warm
            results[name] = median_seconds(lambda: mixture_posteriors(model, data),
                                           repeats)
            print(f"  {name:<7}{results[name] * 1e3:>10.1f}ms")
    finally:
        kernels.forward, kernels.backward, kernels.transition_posteriors = bound
    if len(results) == 2:
        print(f"  speedup{results['numpy'] / results['numba']:>9.1f}x")


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--lengths", default="50,200,800",
                        help="comma-separated sequence lengths")
    parser.add_argument("--states", default="2,4,8",
                        help="comma-separated state counts")
    parser.add_argument("--repeats", type=int, default=50,
                        help="timing repeats per configuration (median reported)")
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)

    lengths = [int(v) for v in args.lengths.split(",")]
    states_list = [int(v) for v in args.states.split(",")]
    if not kernels.NUMBA_ENABLED:
        print("numba path unavailable (not installed or GRAPHHMM_NO_NUMBA=1); "
              "timing the numpy fallback only\n")
    rng = np.random.default_rng(args.seed)
    bench_kernels(rng, lengths, states_list, args.repeats)
    bench_estep(rng, max(5, args.repeats // 10))
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
