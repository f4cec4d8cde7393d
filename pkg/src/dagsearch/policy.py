"""Stochastic policy over DAGs with exact, differentiable log probabilities.

The policy factorizes a graph decision into an ordering and an edge support:

* node ordering: Plackett-Luce over ``node_scores / temperature``, sampled by
  perturbing the scaled scores with Gumbel noise and sorting descending;
* edges: for every pair allowed by the ordering (earlier node to later node),
  an independent Bernoulli with probability ``sigmoid(edge_logits / temperature)``.

Every sample is acyclic by construction, and both the log probability and its
gradient in the parameters are available in closed form, so no relaxation or
reparametrization is needed anywhere.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, replace

import numpy as np
from scipy.special import expit, log_expit, logsumexp, softmax

from .graphs import DirectedGraph

MAX_ENUM_NODES = 4  # d! * 2^(d(d-1)/2) actions; 1536 at d=4, 122_880 at d=5


@dataclass(frozen=True)
class PolicyParams:
    """node_scores orders the variables, edge_logits gates the allowed pairs."""

    node_scores: np.ndarray
    edge_logits: np.ndarray
    temperature: float = 1.0

    def __post_init__(self):
        s = np.asarray(self.node_scores, dtype=np.float64)
        w = np.asarray(self.edge_logits, dtype=np.float64)
        object.__setattr__(self, "node_scores", s)
        object.__setattr__(self, "edge_logits", w)
        if s.ndim != 1:
            raise ValueError("node_scores must be a vector")
        if w.shape != (s.size, s.size):
            raise ValueError(f"edge_logits must be {s.size}x{s.size}, got {w.shape}")
        if not (np.isfinite(s).all() and np.isfinite(w).all()):
            raise ValueError("parameters must be finite")
        if not self.temperature > 0:
            raise ValueError("temperature must be positive")

    @property
    def d(self) -> int:
        return self.node_scores.size

    @classmethod
    def init(cls, d: int, temperature: float = 1.0) -> "PolicyParams":
        """Uniform start: every ordering equally likely, every edge at p=0.5."""
        return cls(np.zeros(d), np.zeros((d, d)), temperature)

    def copy(self) -> "PolicyParams":
        return replace(self, node_scores=self.node_scores.copy(), edge_logits=self.edge_logits.copy())


@dataclass(frozen=True)
class DagAction:
    """One sampled decision: a node ordering plus the chosen edge support.

    ``edge_rows`` is the adjacency of the induced graph as row bitmasks, so it
    may only contain pairs the ordering allows (earlier -> later).
    """

    order: tuple[int, ...]
    edge_rows: tuple[int, ...]

    def __post_init__(self):
        d = len(self.order)
        if sorted(self.order) != list(range(d)):
            raise ValueError(f"order is not a permutation of 0..{d - 1}: {self.order}")
        if len(self.edge_rows) != d:
            raise ValueError("edge_rows length must match order length")
        pos = {node: k for k, node in enumerate(self.order)}
        for i, row in enumerate(self.edge_rows):
            if row >> d:
                raise ValueError(f"edge bits out of range in row {i}")
            for j in range(d):
                if row >> j & 1 and pos[i] >= pos[j]:
                    raise ValueError(f"edge {i}->{j} violates the ordering")

    @property
    def d(self) -> int:
        return len(self.order)

    @property
    def graph(self) -> DirectedGraph:
        return DirectedGraph(self.d, self.edge_rows)


@dataclass
class PolicyGradient:
    """Gradient of a scalar in the same layout as PolicyParams."""

    node_scores: np.ndarray
    edge_logits: np.ndarray

    @classmethod
    def zeros(cls, d: int) -> "PolicyGradient":
        return cls(np.zeros(d), np.zeros((d, d)))

    def add_scaled(self, other: "PolicyGradient", weight: float) -> None:
        self.node_scores += weight * other.node_scores
        self.edge_logits += weight * other.edge_logits


def _allowed_pairs(order: tuple[int, ...]):
    for a in range(len(order)):
        for b in range(a + 1, len(order)):
            yield order[a], order[b]


def sample_action(params: PolicyParams, rng: np.random.Generator) -> DagAction:
    """Draw one (ordering, edges) pair from the exact policy distribution.

    Gumbel-perturbed argsort of the scaled scores is an exact Plackett-Luce
    sample. The uniform draw is a full d x d block so the generator stream
    does not depend on which pairs the ordering allows.
    """
    d = params.d
    keys = params.node_scores / params.temperature + rng.gumbel(size=d)
    order = tuple(int(i) for i in np.argsort(-keys, kind="stable"))
    probs = expit(params.edge_logits / params.temperature)
    uni = rng.random((d, d))
    rows = [0] * d
    for i, j in _allowed_pairs(order):
        if uni[i, j] < probs[i, j]:
            rows[i] |= 1 << j
    return DagAction(order, tuple(rows))


def log_prob(params: PolicyParams, action: DagAction) -> float:
    """Exact log probability of the action under the current parameters."""
    if action.d != params.d:
        raise ValueError("action and params disagree on d")
    u = params.node_scores / params.temperature
    order = np.asarray(action.order)
    total = 0.0
    for k in range(params.d):
        tail = u[order[k:]]
        total += tail[0] - logsumexp(tail)
    scaled = params.edge_logits / params.temperature
    for i, j in _allowed_pairs(action.order):
        chosen = action.edge_rows[i] >> j & 1
        total += log_expit(scaled[i, j] if chosen else -scaled[i, j])
    return float(total)


def grad_log_prob(params: PolicyParams, action: DagAction) -> PolicyGradient:
    """Closed-form gradient of ``log_prob`` in node_scores and edge_logits.

    The ordering term is translation invariant in the scores, so the score
    gradient always sums to zero.
    """
    if action.d != params.d:
        raise ValueError("action and params disagree on d")
    d, tau = params.d, params.temperature
    u = params.node_scores / tau
    order = np.asarray(action.order)
    g_u = np.ones(d)
    for k in range(d):
        tail = order[k:]
        g_u[tail] -= softmax(u[tail])
    g_w = np.zeros((d, d))
    probs = expit(params.edge_logits / tau)
    for i, j in _allowed_pairs(action.order):
        chosen = action.edge_rows[i] >> j & 1
        g_w[i, j] = (chosen - probs[i, j]) / tau
    return PolicyGradient(g_u / tau, g_w)


def map_graph(params: PolicyParams) -> DirectedGraph:
    """Most probable ordering (score-descending) with all p > 1/2 edges."""
    order = tuple(int(i) for i in np.argsort(-params.node_scores, kind="stable"))
    rows = [0] * params.d
    for i, j in _allowed_pairs(order):
        if params.edge_logits[i, j] > 0:
            rows[i] |= 1 << j
    return DirectedGraph(params.d, tuple(rows))


def enumerate_actions(d: int):
    """Every (ordering, edges) action on d nodes; supports exactness tests."""
    if d > MAX_ENUM_NODES:
        raise ValueError(f"action enumeration is limited to d <= {MAX_ENUM_NODES}")
    for order in itertools.permutations(range(d)):
        pairs = list(_allowed_pairs(order))
        for bits in range(1 << len(pairs)):
            rows = [0] * d
            for idx, (i, j) in enumerate(pairs):
                if bits >> idx & 1:
                    rows[i] |= 1 << j
            yield DagAction(order, tuple(rows))


# -- checkpoint text format -------------------------------------------------------
#
#   d=<n>
#   temperature=<repr>
#   scores <repr> ... <repr>
#   edges
#   <d lines of d reprs>
#
# repr round-trips float64 exactly, so write -> read -> write is byte-stable.


def params_to_text(params: PolicyParams) -> str:
    lines = [
        f"d={params.d}",
        f"temperature={params.temperature!r}",
        "scores " + " ".join(repr(v) for v in params.node_scores.tolist()),
        "edges",
    ]
    for row in params.edge_logits.tolist():
        lines.append(" ".join(repr(v) for v in row))
    return "\n".join(lines) + "\n"


def params_from_text(text: str) -> PolicyParams:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    try:
        d = int(lines[0].removeprefix("d="))
        temperature = float(lines[1].removeprefix("temperature="))
        if not lines[2].startswith("scores "):
            raise ValueError("missing scores line")
        scores = np.array([float(v) for v in lines[2].removeprefix("scores ").split()])
        if lines[3] != "edges":
            raise ValueError("missing edges marker")
        rows = [[float(v) for v in lines[4 + i].split()] for i in range(d)]
    except (IndexError, ValueError) as exc:
        raise ValueError(f"unparseable policy checkpoint: {exc}") from exc
    if scores.size != d:
        raise ValueError(f"checkpoint claims d={d} but has {scores.size} scores")
    return PolicyParams(scores, np.array(rows), temperature)


def save_params(path, params: PolicyParams) -> None:
    with open(path, "w") as fh:
        fh.write(params_to_text(params))


def load_params(path) -> PolicyParams:
    with open(path) as fh:
        return params_from_text(fh.read())
