"""Structural bias/fairness explanations for GCN node predictions.

The heavy lifting lives in the compiled extension; this package simply
re-exports it.
"""

from ._core import (  # noqa: F401
    AttributedGraph,
    BiasScore,
    BudgetMode,
    ComputationGraph,
    DebiasConfig,
    DebiasReport,
    DebiasRow,
    Edge,
    ExplainConfig,
    ExplanationPair,
    GcnModel,
    LossTerms,
    RefereeError,
    SbmParams,
    ScoredEdge,
    TrainConfig,
    d_min,
    delta_eo,
    delta_sp,
    explain_node,
    extract_computation_graph,
    fidelity,
    forward,
    generate_sbm,
    load_checkpoint,
    load_graph,
    node_bias,
    normalize_features,
    predict_labels,
    removal_set,
    run_debias,
    save_checkpoint,
    save_graph_json,
    sinkhorn_w1,
    train,
    w1_exact_binary,
)

__version__ = "0.1.0"
