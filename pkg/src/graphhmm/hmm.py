"""Gaussian-emission hidden Markov model: exact inference and sampling.

A model over a length-T sequence has hidden states at t = 0..T. The state at
t = 0 is drawn from the initial distribution and emits nothing; every later
state emits one observation from a diagonal Gaussian. All inference runs in
log space, so long sequences cannot underflow.
"""

from dataclasses import dataclass

import numpy as np

from . import kernels

VARIANCE_FLOOR = 1e-6
ROW_SUM_TOL = 1e-9
_LOG_2PI = np.log(2.0 * np.pi)


def _check_rows_normalized(arr: np.ndarray, name: str) -> None:
    if np.any(arr < 0.0):
        raise ValueError(f"{name} has negative entries")
    sums = arr.sum(axis=-1)
    if np.any(np.abs(sums - 1.0) > ROW_SUM_TOL):
        raise ValueError(f"{name} rows must sum to 1 within {ROW_SUM_TOL:g}, got sums {sums}")


@dataclass
class GaussianHmm:
    """HMM with a non-emitting initial state and diagonal Gaussian emissions.

    Parameters
    ----------
    initial : (S,) initial state distribution.
    transition : (S, S) row-stochastic transition matrix. Exact zeros are
        legal and are kept as -inf in log space, never replaced by an epsilon.
    means : (S, D) per-state emission means.
    variances : (S, D) per-state diagonal variances, each >= VARIANCE_FLOOR.

    Instances are treated as immutable; training code builds new ones.
    """

    initial: np.ndarray
    transition: np.ndarray
    means: np.ndarray
    variances: np.ndarray

    def __post_init__(self):
        self.initial = np.asarray(self.initial, dtype=np.float64)
        self.transition = np.asarray(self.transition, dtype=np.float64)
        self.means = np.atleast_2d(np.asarray(self.means, dtype=np.float64))
        self.variances = np.atleast_2d(np.asarray(self.variances, dtype=np.float64))
        s = self.initial.shape[0]
        if self.transition.shape != (s, s):
            raise ValueError(f"transition must be ({s}, {s}), got {self.transition.shape}")
        if self.means.ndim != 2 or self.means.shape[0] != s:
            raise ValueError(f"means must be ({s}, D), got {self.means.shape}")
        if self.variances.shape != self.means.shape:
            raise ValueError(
                f"variances shape {self.variances.shape} != means shape {self.means.shape}")
        for arr, name in ((self.initial, "initial"), (self.transition, "transition"),
                          (self.means, "means"), (self.variances, "variances")):
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} contains non-finite values")
        _check_rows_normalized(self.initial, "initial")
        _check_rows_normalized(self.transition, "transition")
        if np.any(self.variances < VARIANCE_FLOOR):
            raise ValueError(f"variances must be >= {VARIANCE_FLOOR:g}")

    @property
    def num_states(self) -> int:
        return self.initial.shape[0]

    @property
    def dim(self) -> int:
        return self.means.shape[1]


@dataclass
class StatePosteriors:
    """Exact smoothing posteriors for one (model, sequence) pair.

    gamma[t, s] = P(state_t = s | sequence) for t = 0..T; row 0 is the
    non-emitting initial state. xi[t - 1, s, u] = P(state_{t-1} = s,
    state_t = u | sequence) for t = 1..T.
    """

    log_likelihood: float
    gamma: np.ndarray
    xi: np.ndarray


def log_params(hmm: GaussianHmm):
    """Return (log initial, log transition) with exact -inf at zeros."""
    with np.errstate(divide="ignore"):
        return np.log(hmm.initial), np.log(hmm.transition)


def gaussian_log_densities(seq: np.ndarray, means: np.ndarray,
                           variances: np.ndarray) -> np.ndarray:
    """Per-frame, per-state diagonal Gaussian log-densities, shape (T, S).

    An observation far enough away to overflow the quadratic term saturates
    to -inf, the structural-zero convention of the forward pass.
    """
    diff = seq[:, None, :] - means[None, :, :]
    log_norm = np.sum(_LOG_2PI + np.log(variances), axis=1)
    with np.errstate(over="ignore"):
        quad = np.sum(diff * diff / variances[None, :, :], axis=2)
    return -0.5 * (log_norm[None, :] + quad)


def validate_sequence(seq: np.ndarray, dim: int) -> np.ndarray:
    seq = np.asarray(seq, dtype=np.float64)
    if seq.ndim != 2:
        raise ValueError(f"sequence must be 2-d (T, D), got shape {seq.shape}")
    if seq.shape[0] < 1:
        raise ValueError("sequence must contain at least one observation")
    if seq.shape[1] != dim:
        raise ValueError(f"sequence has dimension {seq.shape[1]}, model expects {dim}")
    if not np.all(np.isfinite(seq)):
        raise ValueError("sequence contains non-finite values")
    return seq


def log_likelihood(hmm: GaussianHmm, seq: np.ndarray) -> float:
    """Exact log p(sequence | hmm), marginalizing over all state paths."""
    seq = validate_sequence(seq, hmm.dim)
    log_pi, log_a = log_params(hmm)
    log_obs = gaussian_log_densities(seq, hmm.means, hmm.variances)
    log_alpha = kernels.forward(log_pi, log_a, log_obs)
    return float(kernels.logsumexp(log_alpha[-1]))


def posteriors(hmm: GaussianHmm, seq: np.ndarray) -> StatePosteriors:
    """Forward-backward smoothing: state and transition posteriors."""
    seq = validate_sequence(seq, hmm.dim)
    log_pi, log_a = log_params(hmm)
    log_obs = gaussian_log_densities(seq, hmm.means, hmm.variances)
    log_alpha = kernels.forward(log_pi, log_a, log_obs)
    log_beta = kernels.backward(log_a, log_obs)
    ll = float(kernels.logsumexp(log_alpha[-1]))
    if ll == -np.inf:
        raise ValueError("sequence has zero likelihood under the model")
    gamma = np.exp(log_alpha + log_beta - ll)
    xi = kernels.transition_posteriors(log_alpha, log_beta, log_a, log_obs, ll)
    return StatePosteriors(log_likelihood=ll, gamma=gamma, xi=xi)


def sample(hmm: GaussianHmm, length: int, rng) -> np.ndarray:
    """Draw one sequence of the given length by ancestral sampling.

    ``rng`` is an integer seed or a ``numpy.random.Generator``; passing a
    generator threads one stream through nested sampling calls.
    """
    if length < 1:
        raise ValueError("length must be >= 1")
    rng = np.random.default_rng(rng)
    std = np.sqrt(hmm.variances)
    out = np.empty((length, hmm.dim))
    state = rng.choice(hmm.num_states, p=hmm.initial)
    for t in range(length):
        state = rng.choice(hmm.num_states, p=hmm.transition[state])
        out[t] = rng.normal(hmm.means[state], std[state])
    return out
