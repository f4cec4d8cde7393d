"""Synthetic structural causal models and dataset handling.

Ground-truth SCMs pair a DAG with one mechanism per node plus additive
Gaussian noise. Mechanisms are either randomly initialized one-hidden-layer
networks or random linear maps; root nodes are pure noise. All sampling is
driven by an injected numpy Generator so equal seeds give bit-identical
specs and data.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .graphs import DirectedGraph, is_acyclic, topological_order

DEFAULT_HIDDEN_WIDTH = 16
DEFAULT_WEIGHT_SCALE = 1.0
DEFAULT_NOISE_RANGE = (0.4, 0.8)
_PILOT_SAMPLES = 1000


@dataclass(frozen=True)
class ZeroMechanism:
    """Constant-zero mechanism for root nodes: the variable is pure noise."""

    n_inputs: int = 0

    def evaluate(self, parent_values: np.ndarray) -> np.ndarray:
        return np.zeros(parent_values.shape[0])


@dataclass(frozen=True)
class LinearMechanism:
    weights: tuple[float, ...]

    @property
    def n_inputs(self) -> int:
        return len(self.weights)

    def evaluate(self, parent_values: np.ndarray) -> np.ndarray:
        return parent_values @ np.asarray(self.weights)


@dataclass(frozen=True)
class MechanismNet:
    """One-hidden-layer tanh network mapping parent values to a scalar.

    Shapes: ``w1`` is (n_parents, hidden), ``w2`` is (hidden,); output is
    ``tanh(x @ w1 + b1) @ w2 + b2``.
    """

    w1: tuple[tuple[float, ...], ...]
    b1: tuple[float, ...]
    w2: tuple[float, ...]
    b2: float

    @property
    def n_inputs(self) -> int:
        return len(self.w1)

    def evaluate(self, parent_values: np.ndarray) -> np.ndarray:
        h = np.tanh(parent_values @ np.asarray(self.w1) + np.asarray(self.b1))
        return h @ np.asarray(self.w2) + self.b2


Mechanism = ZeroMechanism | LinearMechanism | MechanismNet


@dataclass(frozen=True)
class ScmSpec:
    """A sampled ground-truth SCM: graph, mechanisms, scales, noise, seed."""

    graph: DirectedGraph
    mechanisms: tuple[Mechanism, ...]
    output_scales: tuple[float, ...]
    noise_scales: tuple[float, ...]
    seed: int | None = None

    def __post_init__(self):
        d = self.graph.d
        if not is_acyclic(self.graph):
            raise ValueError("SCM graph must be acyclic")
        if len(self.mechanisms) != d or len(self.noise_scales) != d or len(self.output_scales) != d:
            raise ValueError("need exactly one mechanism, output scale and noise scale per node")
        for i, mech in enumerate(self.mechanisms):
            n_pa = len(self.graph.parents_of(i))
            expect = 0 if isinstance(mech, ZeroMechanism) else mech.n_inputs
            if expect != n_pa:
                raise ValueError(f"mechanism {i} takes {expect} inputs but node has {n_pa} parents")
        if any(s <= 0 for s in self.noise_scales):
            raise ValueError("noise scales must be strictly positive")
        if any(s <= 0 for s in self.output_scales):
            raise ValueError("output scales must be strictly positive")


@dataclass(frozen=True)
class Dataset:
    """An n-by-d real matrix with optional column names."""

    values: np.ndarray
    column_names: tuple[str, ...] | None = None

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2:
            raise ValueError(f"dataset values must be 2-D, got shape {v.shape}")
        if not np.isfinite(v).all():
            raise ValueError("dataset contains non-finite entries")
        object.__setattr__(self, "values", v)
        if self.column_names is not None and len(self.column_names) != v.shape[1]:
            raise ValueError("column name count does not match column count")

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def d(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class DataSplit:
    train: Dataset
    est: Dataset
    split_fraction: float

    def __post_init__(self):
        if self.train.d != self.est.d:
            raise ValueError("train and estimation parts disagree on column count")
        if self.train.n == 0 or self.est.n == 0:
            raise ValueError("both split parts must be non-empty")

    @property
    def d(self) -> int:
        return self.train.d


def sample_er_graph(d: int, e: float, rng: np.random.Generator) -> DirectedGraph:
    """Erdos-Renyi DAG with expected edge count ``e``.

    Draws a uniformly random ordering, then includes each of the
    d(d-1)/2 order-respecting edges independently with probability
    ``e / (d(d-1)/2)``; acyclic by construction.
    """
    if d < 2:
        raise ValueError(f"need at least 2 nodes, got {d}")
    max_edges = d * (d - 1) // 2
    if not 0 <= e <= max_edges:
        raise ValueError(f"expected edge count {e} outside [0, {max_edges}]")
    p = e / max_edges
    order = rng.permutation(d)
    edges = []
    for a in range(d):
        for b in range(a + 1, d):
            if rng.random() < p:
                edges.append((int(order[a]), int(order[b])))
    return DirectedGraph.from_edges(d, edges)


def _draw_mechanism(
    n_parents: int,
    hidden_width: int,
    weight_scale: float,
    min_weight: float,
    rng: np.random.Generator,
    kind: str,
) -> Mechanism:
    if n_parents == 0:
        return ZeroMechanism()
    if kind == "linear":
        w = rng.normal(0.0, weight_scale, size=n_parents)
        while min_weight > 0 and (mask := np.abs(w) < min_weight).any():
            w[mask] = rng.normal(0.0, weight_scale, size=int(mask.sum()))
        return LinearMechanism(tuple(float(x) for x in w))
    if kind == "mlp":
        w1 = rng.normal(0.0, weight_scale, size=(n_parents, hidden_width))
        b1 = rng.normal(0.0, weight_scale, size=hidden_width)
        w2 = rng.normal(0.0, weight_scale, size=hidden_width)
        b2 = rng.normal(0.0, weight_scale)
        return MechanismNet(
            tuple(tuple(float(x) for x in row) for row in w1),
            tuple(float(x) for x in b1),
            tuple(float(x) for x in w2),
            float(b2),
        )
    raise ValueError(f"unknown mechanism kind {kind!r}")


def sample_mechanisms(
    graph: DirectedGraph,
    hidden_width: int = DEFAULT_HIDDEN_WIDTH,
    weight_scale: float = DEFAULT_WEIGHT_SCALE,
    rng: np.random.Generator | None = None,
    *,
    mechanism: str = "mlp",
    noise_range: tuple[float, float] = DEFAULT_NOISE_RANGE,
    min_weight: float = 0.0,
    standardize: bool = True,
    seed: int | None = None,
) -> ScmSpec:
    """Attach random mechanisms and noise scales to ``graph``.

    Weights are i.i.d. zero-mean Gaussian with scale ``weight_scale``; noise
    standard deviations are uniform over ``noise_range`` per node. When
    ``standardize`` is set, each mechanism's output is divided by its
    empirical standard deviation on a pilot ancestral sample, which keeps
    variances from compounding along long chains.

    ``min_weight`` resamples linear weights with magnitude below the floor,
    the usual benchmark convention for keeping every edge statistically
    visible; it does not apply to network mechanisms.
    """
    if rng is None:
        rng = np.random.default_rng(seed)
    if hidden_width < 1:
        raise ValueError("hidden width must be positive")
    if weight_scale < 0:
        raise ValueError("weight scale must be nonnegative")
    if min_weight < 0:
        raise ValueError("weight floor must be nonnegative")
    order = topological_order(graph)
    if order is None:
        raise ValueError("graph must be acyclic")

    d = graph.d
    mechanisms = tuple(
        _draw_mechanism(
            len(graph.parents_of(i)), hidden_width, weight_scale, min_weight, rng, mechanism
        )
        for i in range(d)
    )
    noise_scales = tuple(float(x) for x in rng.uniform(*noise_range, size=d))

    scales = [1.0] * d
    if standardize:
        pilot = np.zeros((_PILOT_SAMPLES, d))
        for node in order:
            parents = graph.parents_of(node)
            raw = mechanisms[node].evaluate(pilot[:, parents])
            std = float(raw.std())
            if std > 1e-12:
                scales[node] = std
            pilot[:, node] = raw / scales[node] + noise_scales[node] * rng.standard_normal(
                _PILOT_SAMPLES
            )

    return ScmSpec(graph, mechanisms, tuple(scales), noise_scales, seed=seed)


def generate_dataset(scm: ScmSpec, n: int, rng: np.random.Generator) -> Dataset:
    """Ancestral sampling: ``x_i = f_i(x_pa) / scale_i + sigma_i * eps``."""
    if n < 1:
        raise ValueError(f"sample count must be positive, got {n}")
    d = scm.graph.d
    order = topological_order(scm.graph)
    assert order is not None  # ScmSpec invariant
    values = np.zeros((n, d))
    noise = rng.standard_normal((n, d))
    for node in order:
        parents = scm.graph.parents_of(node)
        raw = scm.mechanisms[node].evaluate(values[:, parents])
        if not np.isfinite(raw).all():
            raise ValueError(f"non-finite mechanism output at node {node}")
        values[:, node] = raw / scm.output_scales[node] + scm.noise_scales[node] * noise[:, node]
    return Dataset(values)


def split_dataset(data: Dataset, split_fraction: float, rng: np.random.Generator) -> DataSplit:
    """Random row partition without replacement; both parts non-empty."""
    if data.n < 2:
        raise ValueError("need at least 2 rows to split")
    if not 0.0 < split_fraction < 1.0:
        raise ValueError(f"split fraction must lie in (0, 1), got {split_fraction}")
    n_train = int(round(split_fraction * data.n))
    n_train = min(max(n_train, 1), data.n - 1)
    perm = rng.permutation(data.n)
    train_rows = np.sort(perm[:n_train])
    est_rows = np.sort(perm[n_train:])
    return DataSplit(
        Dataset(data.values[train_rows], data.column_names),
        Dataset(data.values[est_rows], data.column_names),
        split_fraction,
    )


# -- CSV ingestion / emission --------------------------------------------------


def load_csv(path: str | Path) -> Dataset:
    """Read a rectangular numeric CSV with an optional single header row."""
    text = Path(path).read_text()
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise ValueError(f"{path}: empty file")

    def parse_row(line: str) -> list[float] | None:
        cells = line.split(",")
        out = []
        for cell in cells:
            try:
                out.append(float(cell))
            except ValueError:
                return None
        return out

    header: tuple[str, ...] | None = None
    first = parse_row(lines[0])
    start = 0
    if first is None:
        header = tuple(c.strip() for c in lines[0].split(","))
        start = 1
        if start == len(lines):
            raise ValueError(f"{path}: header but no data rows")

    rows: list[list[float]] = []
    width: int | None = None
    for k in range(start, len(lines)):
        cells = lines[k].split(",")
        if width is None:
            width = len(cells)
        elif len(cells) != width:
            raise ValueError(f"{path}: row {k + 1} has {len(cells)} cells, expected {width}")
        row = []
        for j, cell in enumerate(cells):
            try:
                row.append(float(cell))
            except ValueError:
                raise ValueError(
                    f"{path}: non-numeric cell at row {k + 1}, column {j + 1}: {cell.strip()!r}"
                ) from None
        rows.append(row)
    if header is not None and width is not None and len(header) != width:
        raise ValueError(f"{path}: header has {len(header)} names for {width} columns")
    return Dataset(np.array(rows), header)


def save_csv(data: Dataset, path: str | Path) -> None:
    lines = []
    if data.column_names is not None:
        lines.append(",".join(data.column_names))
    for row in data.values:
        lines.append(",".join(repr(float(x)) for x in row))
    Path(path).write_text("\n".join(lines) + "\n")


# -- SCM spec serialization ------------------------------------------------------
#
# Self-describing JSON: graph edge list, per-node mechanism kind + flattened
# weights, scales, and the seed, so a generated benchmark task can be rebuilt
# bit-exactly.


def _mechanism_to_dict(mech: Mechanism) -> dict:
    if isinstance(mech, ZeroMechanism):
        return {"kind": "zero"}
    if isinstance(mech, LinearMechanism):
        return {"kind": "linear", "weights": list(mech.weights)}
    return {
        "kind": "mlp",
        "w1": [list(r) for r in mech.w1],
        "b1": list(mech.b1),
        "w2": list(mech.w2),
        "b2": mech.b2,
    }


def _mechanism_from_dict(obj: dict) -> Mechanism:
    kind = obj["kind"]
    if kind == "zero":
        return ZeroMechanism()
    if kind == "linear":
        return LinearMechanism(tuple(obj["weights"]))
    if kind == "mlp":
        return MechanismNet(
            tuple(tuple(r) for r in obj["w1"]),
            tuple(obj["b1"]),
            tuple(obj["w2"]),
            float(obj["b2"]),
        )
    raise ValueError(f"unknown mechanism kind {kind!r}")


def scm_to_json(scm: ScmSpec) -> str:
    payload = {
        "d": scm.graph.d,
        "edges": scm.graph.edges(),
        "mechanisms": [_mechanism_to_dict(m) for m in scm.mechanisms],
        "output_scales": list(scm.output_scales),
        "noise_scales": list(scm.noise_scales),
        "seed": scm.seed,
    }
    return json.dumps(payload, indent=2)


def scm_from_json(text: str) -> ScmSpec:
    obj = json.loads(text)
    graph = DirectedGraph.from_edges(obj["d"], [tuple(e) for e in obj["edges"]])
    return ScmSpec(
        graph,
        tuple(_mechanism_from_dict(m) for m in obj["mechanisms"]),
        tuple(obj["output_scales"]),
        tuple(obj["noise_scales"]),
        seed=obj.get("seed"),
    )
