"""Score-based causal discovery with a learned posterior over DAGs.

The pipeline splits the data, scores candidate graphs by summed per-variable
posterior-predictive log likelihood minus an edge penalty, and optimizes a
factorized ordering-plus-edges policy over DAGs with clipped policy gradients.
Likelihood backends are pluggable: an exact conjugate Bayesian linear model, a
trained feed-forward baseline, or an external model behind a line-delimited
JSON bridge.
"""

from .estimators import (
    BridgeClient,
    BridgeConnectionError,
    BridgeProtocolError,
    BridgeRemoteError,
    ConjugateGaussian,
    EstimatorError,
    External,
    LikelihoodQuery,
    LikelihoodResult,
    MlpBaseline,
    MlpHyperparams,
    NigPrior,
    estimate_conjugate_gaussian,
    estimate_external,
    estimate_mlp,
    make_estimator,
)
from .graphs import (
    Cpdag,
    CycleError,
    DirectedGraph,
    ParentSet,
    cpdag_from_text,
    cpdag_to_text,
    dag_to_cpdag,
    enumerate_all_dags,
    graph_from_text,
    graph_to_text,
    is_acyclic,
    mec_of,
    shd_cpdag,
    topological_order,
)
from .harness import (
    BenchmarkReport,
    BenchmarkTask,
    BootstrapReport,
    benchmark_shd,
    bootstrap_variance_study,
    incorrect_structure_count,
    percentile_bootstrap_ci,
)
from .policy import (
    DagAction,
    PolicyGradient,
    PolicyParams,
    enumerate_actions,
    grad_log_prob,
    load_params,
    log_prob,
    map_graph,
    params_from_text,
    params_to_text,
    sample_action,
    save_params,
)
from .ppo import (
    BaselineState,
    PpoConfig,
    TrajectoryBuffer,
    advantage,
    clipped_objective,
    optimize,
    update_step,
    write_run_log,
)
from .scm import (
    DataSplit,
    Dataset,
    LinearMechanism,
    MechanismNet,
    ScmSpec,
    ZeroMechanism,
    generate_dataset,
    load_csv,
    sample_er_graph,
    sample_mechanisms,
    save_csv,
    scm_from_json,
    scm_to_json,
    split_dataset,
)
from .scoring import (
    GraphScore,
    GraphScorer,
    ScoreCache,
    ScoreConfig,
    best_score,
    edge_list_string,
    resolve_penalty,
    score_all_dags,
    variable_loglik,
)

__version__ = "0.1.0"

__all__ = [
    "BaselineState",
    "BenchmarkReport",
    "BenchmarkTask",
    "BootstrapReport",
    "BridgeClient",
    "BridgeConnectionError",
    "BridgeProtocolError",
    "BridgeRemoteError",
    "ConjugateGaussian",
    "Cpdag",
    "CycleError",
    "DagAction",
    "DataSplit",
    "Dataset",
    "DirectedGraph",
    "EstimatorError",
    "External",
    "GraphScore",
    "GraphScorer",
    "LikelihoodQuery",
    "LikelihoodResult",
    "LinearMechanism",
    "MechanismNet",
    "MlpBaseline",
    "MlpHyperparams",
    "NigPrior",
    "ParentSet",
    "PolicyGradient",
    "PolicyParams",
    "PpoConfig",
    "ScmSpec",
    "ScoreCache",
    "ScoreConfig",
    "TrajectoryBuffer",
    "ZeroMechanism",
    "advantage",
    "benchmark_shd",
    "best_score",
    "bootstrap_variance_study",
    "clipped_objective",
    "cpdag_from_text",
    "cpdag_to_text",
    "dag_to_cpdag",
    "edge_list_string",
    "enumerate_actions",
    "enumerate_all_dags",
    "estimate_conjugate_gaussian",
    "estimate_external",
    "estimate_mlp",
    "generate_dataset",
    "grad_log_prob",
    "graph_from_text",
    "graph_to_text",
    "incorrect_structure_count",
    "is_acyclic",
    "load_csv",
    "load_params",
    "log_prob",
    "make_estimator",
    "map_graph",
    "mec_of",
    "optimize",
    "params_from_text",
    "params_to_text",
    "percentile_bootstrap_ci",
    "resolve_penalty",
    "sample_action",
    "sample_er_graph",
    "sample_mechanisms",
    "save_csv",
    "save_params",
    "scm_from_json",
    "scm_to_json",
    "score_all_dags",
    "shd_cpdag",
    "split_dataset",
    "topological_order",
    "update_step",
    "variable_loglik",
    "write_run_log",
]
