"""Distance-profile mismatch experiments on synthetic graph tasks.

The package samples contextual SBM node-classification tasks whose label
signal sits at a controllable hop distance, trains a small distance-biased
graph transformer on them, measures the mismatch between where the task's
signal lives and where the model attends, and closes the loop with a
gap-driven controller on the attention bias slope.
"""

from ._version import __version__
from .control import (
    ControllerConfig,
    ControllerKind,
    ControllerState,
    FixedRunSummary,
    Selection,
    closed_loop_convergence_check,
    controller_step,
    initial_controller_state,
    oracle_targets_from_sweep,
    select_lambda_star,
)
from .diagnostics import (
    DistanceProfile,
    MismatchReport,
    Regime,
    attention_profile,
    classify_regime,
    mean_distance,
    mismatch_report,
    point_mass,
    pooled_attention_mass,
    task_profile,
    wasserstein1,
)
from .errors import (
    ControllerError,
    DegenerateTaskError,
    DistgapError,
    EmptyGraphError,
    FormatError,
    IncompleteTableError,
    NumericError,
    ParameterError,
)
from .graphgen import (
    UNREACHABLE,
    CsbmParams,
    DistanceMatrix,
    Graph,
    all_pairs_spd,
    community_signs,
    load_graph,
    mean_shell_sizes,
    mean_unreachable_count,
    sample_csbm,
    save_graph,
    shell,
)
from .harness import (
    ControlRow,
    EvalRow,
    RunConfig,
    RunResult,
    SweepConfig,
    SweepRow,
    SweepTable,
    default_run_config,
    default_sweep_config,
    derive_seeds,
    emit_reports,
    load_run_config,
    load_selections,
    load_sweep_config,
    run_controller_grid,
    run_fixed_grid,
    run_one,
    run_sweep,
    save_run_config,
    save_selections,
    save_sweep_config,
    select_best_fixed,
    write_run_result,
)
from .model import (
    ForwardResult,
    ModelConfig,
    ModelState,
    biased_logits,
    evaluate,
    forward,
    init_model,
    load_checkpoint,
    loss_and_grads,
    save_checkpoint,
    self_attention_mass,
    subset_cross_entropy,
    surrogate_hops,
    train_step,
)
from .task import (
    LabeledTask,
    TaskSpec,
    far_score,
    load_labeled_graph,
    local_score,
    make_labels,
    save_labeled_graph,
    standardize,
)

