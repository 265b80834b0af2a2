"""Shared dictionary of HMMs mixed per node of a weighted graph.

Each node k of a K-node graph owns a distribution alpha[k] over M shared
HMM components, so a sequence observed at node k has density
p(X | k) = sum_m alpha[k, m] * p(X | component m). Mixing coefficients may
be parameterized through per-entry scores beta via a squared-rectifier map,
which can drive coefficients exactly to zero.

Node ids are 1-based throughout the public API, matching the file formats;
component indices returned to callers (sampling traces, cluster labels)
are 1-based as well.
"""

from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from . import kernels
from .hmm import _check_rows_normalized, log_likelihood, posteriors, sample, validate_sequence


@dataclass
class AffinityGraph:
    """Symmetric node-affinity matrix with an exactly-zero diagonal.

    weights[j, k] > 0 pulls the mixing distributions of nodes j and k toward
    each other during regularized training; negative weights push them apart.
    """

    weights: np.ndarray

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        w = self.weights
        if w.ndim != 2 or w.shape[0] != w.shape[1]:
            raise ValueError(f"weights must be square, got shape {w.shape}")
        if not np.all(np.isfinite(w)):
            raise ValueError("weights contains non-finite values")
        if np.any(w != w.T):
            raise ValueError("weights must be exactly symmetric")
        if np.any(np.diag(w) != 0.0):
            raise ValueError("weights must have an exactly zero diagonal")

    @property
    def num_nodes(self) -> int:
        return self.weights.shape[0]

    def normalized(self) -> "AffinityGraph":
        """Rescale so the largest weight is 1. Requires a positive maximum."""
        mx = self.weights.max()
        if mx <= 0.0:
            raise ValueError("graph normalization requires a positive maximum weight")
        return AffinityGraph(self.weights / mx)


class SequenceItem(NamedTuple):
    node: int
    seq: np.ndarray
    label: Optional[str] = None


@dataclass
class SequenceDataset:
    """Sequences tagged with the 1-based id of the node that produced them.

    Sequences may have different lengths but must share one feature
    dimension. The optional per-item label is "normal" or "anomalous".
    """

    items: list

    def __post_init__(self):
        checked = []
        dim = None
        for i, item in enumerate(self.items):
            node, seq = item[0], item[1]
            label = item[2] if len(item) > 2 else None
            if not isinstance(node, (int, np.integer)) or isinstance(node, bool) or node < 1:
                raise ValueError(f"item {i}: node id must be an integer >= 1, got {node!r}")
            if label is not None and label not in ("normal", "anomalous"):
                raise ValueError(f"item {i}: label must be 'normal' or 'anomalous', got {label!r}")
            seq = np.asarray(seq, dtype=np.float64)
            if seq.ndim != 2 or seq.shape[0] < 1:
                raise ValueError(f"item {i}: sequence must be a non-empty (T, D) array")
            if not np.all(np.isfinite(seq)):
                raise ValueError(f"item {i}: sequence contains non-finite values")
            if dim is None:
                dim = seq.shape[1]
            elif seq.shape[1] != dim:
                raise ValueError(
                    f"item {i}: dimension {seq.shape[1]} differs from earlier items ({dim})")
            checked.append(SequenceItem(int(node), seq, label))
        if not checked:
            raise ValueError("dataset contains no sequences")
        self.items = checked

    def __len__(self) -> int:
        return len(self.items)

    @property
    def dim(self) -> int:
        return self.items[0].seq.shape[1]

    @property
    def max_node(self) -> int:
        return max(item.node for item in self.items)

    def node_counts(self, num_nodes: int) -> np.ndarray:
        counts = np.zeros(num_nodes, dtype=np.int64)
        for item in self.items:
            if item.node > num_nodes:
                raise ValueError(f"node id {item.node} exceeds declared node count {num_nodes}")
            counts[item.node - 1] += 1
        return counts

    def frames(self) -> np.ndarray:
        return np.concatenate([item.seq for item in self.items], axis=0)


def reparameterize(beta_row: np.ndarray) -> np.ndarray:
    """Map a score row to mixing coefficients: rectify, square, normalize.

    Entries with beta <= 0 map to exactly zero. At least one entry must be
    positive, otherwise the row is degenerate.
    """
    beta_row = np.asarray(beta_row, dtype=np.float64)
    r = np.maximum(beta_row, 0.0)
    r = r * r
    total = r.sum()
    if total == 0.0:
        raise ValueError("degenerate score row: no positive entry")
    return r / total


def reparameterize_rows(beta: np.ndarray) -> np.ndarray:
    return np.vstack([reparameterize(row) for row in np.asarray(beta, dtype=np.float64)])


@dataclass
class SparseMixtureModel:
    """K nodes sharing M HMM components through per-node mixing rows.

    alpha is (K, M) row-stochastic. beta, when present, holds the score
    parameterization and alpha must equal reparameterize_rows(beta) exactly;
    models trained without the graph regularizer carry beta = None.
    """

    components: list
    alpha: np.ndarray
    beta: Optional[np.ndarray] = None

    def __post_init__(self):
        self.alpha = np.asarray(self.alpha, dtype=np.float64)
        if not self.components:
            raise ValueError("model must have at least one component")
        s, d = self.components[0].num_states, self.components[0].dim
        for m, comp in enumerate(self.components):
            if comp.num_states != s or comp.dim != d:
                raise ValueError(
                    f"component {m + 1} has shape (S={comp.num_states}, D={comp.dim}), "
                    f"expected (S={s}, D={d})")
        if self.alpha.ndim != 2 or self.alpha.shape[1] != len(self.components):
            raise ValueError(
                f"alpha must be (K, {len(self.components)}), got {self.alpha.shape}")
        _check_rows_normalized(self.alpha, "alpha")
        if self.beta is not None:
            self.beta = np.asarray(self.beta, dtype=np.float64)
            if self.beta.shape != self.alpha.shape:
                raise ValueError(
                    f"beta shape {self.beta.shape} != alpha shape {self.alpha.shape}")
            if np.any(reparameterize_rows(self.beta) != self.alpha):
                raise ValueError("alpha does not equal the reparameterization of beta")

    @property
    def num_nodes(self) -> int:
        return self.alpha.shape[0]

    @property
    def num_components(self) -> int:
        return self.alpha.shape[1]

    @property
    def num_states(self) -> int:
        return self.components[0].num_states

    @property
    def dim(self) -> int:
        return self.components[0].dim


@dataclass
class MixtureSufficientStats:
    """Everything the M-step needs, cached from one E-step sweep.

    eta[i, m] is the posterior probability that sequence i came from
    component m given its node. posteriors[i][m] is the StatePosteriors of
    (component m, sequence i), or None where the prior alpha[node_i, m] is
    exactly zero (eta is exactly zero there and the pair contributes
    nothing). log_likelihoods[i] is log p(seq_i | node_i).
    """

    node_counts: np.ndarray
    eta: np.ndarray
    posteriors: list
    nodes: np.ndarray = None
    log_likelihoods: np.ndarray = None


def _check_node(model: SparseMixtureModel, node: int) -> int:
    if not isinstance(node, (int, np.integer)) or isinstance(node, bool):
        raise ValueError(f"node id must be an integer, got {node!r}")
    if node < 1 or node > model.num_nodes:
        raise ValueError(f"node id {node} out of range [1..{model.num_nodes}]")
    return int(node)


def mixture_log_likelihood(model: SparseMixtureModel, seq: np.ndarray, node: int) -> float:
    """log p(seq | node) = log sum_m alpha[node, m] p(seq | component m).

    Components whose coefficient is exactly zero are skipped, so sparse
    mixing rows reduce inference cost.
    """
    node = _check_node(model, node)
    seq = validate_sequence(seq, model.dim)
    row = model.alpha[node - 1]
    terms = [np.log(row[m]) + log_likelihood(model.components[m], seq)
             for m in range(model.num_components) if row[m] > 0.0]
    return float(kernels.logsumexp(np.array(terms)))


def mixture_posteriors(model: SparseMixtureModel, dataset: SequenceDataset) -> MixtureSufficientStats:
    """One E-step sweep: component responsibilities and state posteriors.

    Pairs (i, m) with alpha[node_i, m] == 0 are skipped; their eta is exactly
    zero and their posterior slot is None.
    """
    n = len(dataset)
    m_count = model.num_components
    eta = np.zeros((n, m_count))
    post_grid = []
    seq_ll = np.empty(n)
    nodes = np.empty(n, dtype=np.int64)
    for i, item in enumerate(dataset.items):
        node = _check_node(model, item.node)
        nodes[i] = node
        row = model.alpha[node - 1]
        log_w = np.full(m_count, -np.inf)
        posts = [None] * m_count
        for m in range(m_count):
            if row[m] > 0.0:
                p = posteriors(model.components[m], item.seq)
                posts[m] = p
                log_w[m] = np.log(row[m]) + p.log_likelihood
        ll = float(kernels.logsumexp(log_w))
        if ll == -np.inf:
            raise ValueError(f"sequence {i} has zero likelihood under every component")
        eta[i] = np.exp(log_w - ll)
        seq_ll[i] = ll
        post_grid.append(posts)
    counts = dataset.node_counts(model.num_nodes)
    return MixtureSufficientStats(node_counts=counts, eta=eta, posteriors=post_grid,
                                  nodes=nodes, log_likelihoods=seq_ll)


def regularizer_value(alpha: np.ndarray, graph: AffinityGraph) -> float:
    """Graph affinity of the mixing rows: 0.5 * sum_{j != k} G[j,k] <alpha_j, alpha_k>.

    The regularization strength is applied by the caller, not here.
    """
    alpha = np.asarray(alpha, dtype=np.float64)
    if alpha.shape[0] != graph.num_nodes:
        raise ValueError(
            f"alpha has {alpha.shape[0]} rows but graph has {graph.num_nodes} nodes")
    overlap = alpha @ alpha.T
    return float(0.5 * np.sum(graph.weights * overlap))


def coefficient_gradient(model: SparseMixtureModel, stats: MixtureSufficientStats,
                         graph: AffinityGraph, lam: float) -> np.ndarray:
    """Ascent direction on beta for the penalized mixing objective.

    Combines the data pull (responsibilities minus current coefficients,
    averaged over the dataset) with the graph pull, then maps through the
    reparameterization. Coordinates with beta <= 0 get an exact zero.
    """
    if model.beta is None:
        raise ValueError("model has no score parameterization (beta is None)")
    alpha, beta = model.alpha, model.beta
    k_count, m_count = alpha.shape
    n = stats.eta.shape[0]
    psi = np.zeros((k_count, m_count))
    np.add.at(psi, stats.nodes - 1, stats.eta)
    psi -= stats.node_counts[:, None] * alpha
    psi /= n
    overlap = alpha @ alpha.T
    cross = np.sum(graph.weights * overlap, axis=1)
    omega = alpha * (graph.weights @ alpha - cross[:, None])
    pull = psi + lam * omega
    safe_beta = np.where(beta > 0.0, beta, 1.0)
    return np.where(beta > 0.0, (2.0 / safe_beta) * pull, 0.0)


def sample_from_node(model: SparseMixtureModel, node: int, length: int, rng,
                     return_component: bool = False):
    """Draw one sequence from a node: pick a component, then sample it.

    ``rng`` is an integer seed or a Generator; the same stream is threaded
    through the component draw and the sequence draw. With
    ``return_component=True`` the chosen component's 1-based index is
    returned alongside the sequence.
    """
    node = _check_node(model, node)
    rng = np.random.default_rng(rng)
    z = int(rng.choice(model.num_components, p=model.alpha[node - 1]))
    seq = sample(model.components[z], length, rng)
    if return_component:
        return seq, z + 1
    return seq
