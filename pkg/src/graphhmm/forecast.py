"""Conditioning a trained mixture on an observed prefix.

Given a prefix observed at a node, only two things change relative to the
prior model: the component weights become the posterior responsibilities of
the prefix, and each component's initial-state distribution becomes its
smoothed state posterior at the prefix's final timestep. Transition and
emission parameters are untouched. A continuation is then scored or sampled
by treating the conditioned initial distribution exactly like the usual
non-emitting initial state.
"""

from dataclasses import dataclass

import numpy as np

from . import kernels
from .hmm import gaussian_log_densities, log_params, posteriors, validate_sequence
from .mixture import SparseMixtureModel, _check_node


@dataclass
class PosteriorModel:
    """A mixture conditioned on one prefix.

    weights[m] = P(component m | prefix, node); conditional_initials[m] is
    that component's state distribution at the prefix end. Components with
    weight exactly zero carry a uniform placeholder row and are flagged in
    ``inert``; they are skipped by scoring and never sampled.
    """

    components: list
    weights: np.ndarray
    conditional_initials: np.ndarray
    inert: np.ndarray

    @property
    def num_components(self) -> int:
        return self.weights.shape[0]

    @property
    def dim(self) -> int:
        return self.components[0].dim


def condition(model: SparseMixtureModel, prefix: np.ndarray, node: int) -> PosteriorModel:
    """Compute the prefix posterior over components and end states."""
    node = _check_node(model, node)
    prefix = validate_sequence(prefix, model.dim)
    m_count = model.num_components
    s_count = model.num_states
    row = model.alpha[node - 1]
    log_w = np.full(m_count, -np.inf)
    initials = np.full((m_count, s_count), 1.0 / s_count)
    for m in range(m_count):
        if row[m] > 0.0:
            post = posteriors(model.components[m], prefix)
            log_w[m] = np.log(row[m]) + post.log_likelihood
            initials[m] = post.gamma[-1]
    total = float(kernels.logsumexp(log_w))
    if total == -np.inf:
        raise ValueError("prefix has zero likelihood under every component")
    weights = np.exp(log_w - total)
    inert = weights == 0.0
    initials[inert] = 1.0 / s_count
    return PosteriorModel(components=list(model.components), weights=weights,
                          conditional_initials=initials, inert=inert)


def predictive_log_likelihood(posterior: PosteriorModel, continuation: np.ndarray) -> float:
    """log p(continuation | prefix, node) under the conditioned mixture."""
    continuation = validate_sequence(continuation, posterior.dim)
    terms = []
    for m in range(posterior.num_components):
        w = posterior.weights[m]
        if w == 0.0:
            continue
        comp = posterior.components[m]
        _, log_a = log_params(comp)
        with np.errstate(divide="ignore"):
            log_init = np.log(posterior.conditional_initials[m])
        log_obs = gaussian_log_densities(continuation, comp.means, comp.variances)
        log_alpha = kernels.forward(log_init, log_a, log_obs)
        terms.append(np.log(w) + kernels.logsumexp(log_alpha[-1]))
    return float(kernels.logsumexp(np.array(terms)))


def forecast_mean(model: SparseMixtureModel, prefix: np.ndarray, node: int,
                  horizon: int, num_samples: int, rng) -> np.ndarray:
    """Monte Carlo posterior-predictive mean, shape (horizon, D).

    Each sample draws a component from the posterior weights, an initial
    state from that component's conditioned initial distribution, and then
    rolls the component forward. A closed-form propagation of the state
    posterior would avoid the sampling noise; the sampled estimator is kept
    for now because it matches the evaluation protocol used downstream.
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    if num_samples < 1:
        raise ValueError("num_samples must be >= 1")
    post = condition(model, prefix, node)
    rng = np.random.default_rng(rng)
    m_count = post.num_components
    acc = np.zeros((horizon, post.dim))
    for _ in range(num_samples):
        z = int(rng.choice(m_count, p=post.weights))
        comp = post.components[z]
        std = np.sqrt(comp.variances)
        state = int(rng.choice(comp.num_states, p=post.conditional_initials[z]))
        for t in range(horizon):
            state = int(rng.choice(comp.num_states, p=comp.transition[state]))
            acc[t] += rng.normal(comp.means[state], std[state])
    return acc / num_samples
