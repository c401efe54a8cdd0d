"""Hypergraph dynamical systems: simulation, learning, effective-order inference."""

from .datasets import (
    Dataset,
    ERSource,
    FixedSource,
    Sample,
    load_dataset,
    make_point_dataset,
    make_trajectory_dataset,
    sample_initial_state,
    save_dataset,
)
from .decomposition import (
    effective_order_bound,
    reduce_pairwise_kuramoto,
    verify_decomposition,
)
from .dynamics import (
    DivergenceError,
    Trajectory,
    UpdateFamily,
    edge_update,
    evaluate_rhs,
    integrate_euler,
    kernel_eval,
    make_family,
)
from .evaluation import (
    EvalReport,
    SuiteResult,
    evaluate_dataset,
    kfold_cv,
    mc_perf,
    pointwise_mae,
    rollout_predict,
    select_effective_order,
    trajectory_mae,
)
from .hypergraph import (
    Hypergraph,
    build_hypergraph,
    clique_weights,
    generate_er_hypergraph,
    incidence_view,
    load_hyperedge_file,
    save_hyperedge_file,
)
from .mlp import AdamState, MlpParams, MlpSpec, init_params, mlp_forward, mlp_gradient, optimizer_step
from .model import (
    LearnedDynamics,
    TrainConfig,
    edge_update_learned,
    load_model,
    loss,
    predict_rhs,
    save_model,
    search_lambda,
    train,
)

__version__ = "0.1.0"
