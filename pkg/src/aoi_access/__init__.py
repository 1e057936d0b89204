"""aoi-access package.

Age-of-information aware grant-free random access: closed-form access-parameter
optimization, age-gated unfolded detectors with learned pilots, a convergence
certificate and a closed-loop slot simulator.
"""

# Also expose at package level for entry point
from aoi_access._internal import cli
from aoi_access._internal.access import (
    AccessParams,
    AccessSurface,
    aoi_chain_mean,
    avg_aoi,
    binomial_cdf,
    binomial_log_pmf,
    eligible_population,
    optimize_access,
    optimize_over_pilot_lengths,
    s_max,
    simulate_age_chain,
    success_rate,
    success_rate_random_access,
    success_surface,
    tuned_system,
)
from aoi_access._internal.checkpoint import (
    CHECKPOINT_FORMAT,
    CHECKPOINT_VERSION,
    Checkpoint,
    load_checkpoint,
    save_checkpoint,
)
from aoi_access._internal.cli import (
    get_parser,
    main,
)
from aoi_access._internal.exceptions import (
    AoiAccessError,
    CertificationError,
    CheckpointError,
    ConfigurationError,
    DimensionError,
    DivergenceError,
    InfeasibleGridError,
    UndefinedMetricError,
)
from aoi_access._internal.experiments import (
    AGGREGATE_COLUMNS,
    OPTIMIZE_COLUMNS,
    RUN_COLUMNS,
    RunOutcome,
    RunTask,
    ScenarioResult,
    SweepPoint,
    aggregate,
    build_scheme,
    is_interior_minimum,
    optimize_table,
    plan_runs,
    read_csv,
    run_scenario,
    run_task,
    sign_test,
    sweep_points,
    write_csv,
)
from aoi_access._internal.log import (
    DEFAULT_LOG_LEVEL,
    LOG_LEVEL_ENV,
    ROOT_LOGGER,
    configure_logging,
    get_logger,
    resolve_log_level,
)
from aoi_access._internal.models import (
    VARIANTS,
    AccessMode,
    CertifyConfig,
    ExperimentConfig,
    GridSpec,
    PopulationRounding,
    Scenario,
    SchemeSpec,
    SimulationConfig,
    SolverKind,
    SweepKind,
    SweepSpec,
    SystemConfig,
    TrainConfig,
)
from aoi_access._internal.presets import (
    get_preset_text,
    load_config,
    parse_config,
    preset_names,
)
from aoi_access._internal.simulation import (
    SLOT_COLUMNS,
    Decoder,
    IstaDecoder,
    NullDecoder,
    Observation,
    OracleDecoder,
    SchemePlug,
    SimulationResult,
    SlotRecord,
    UnfoldedDecoder,
    run,
    scheme_catalog,
    step,
)
from aoi_access._internal.solvers import (
    AgeGate,
    DetectionResult,
    SolverParams,
    Trajectory,
    age_gated_threshold,
    detect,
    detection_rate,
    ista_solve,
    lasso_objective,
    lista_age_forward,
    max_step_size,
    soft_threshold,
    unfold,
)
from aoi_access._internal.system import (
    ActivityMask,
    AgeVector,
    PilotMatrix,
    SparseChannelVector,
    awgn,
    draw_activity,
    draw_channels,
    draw_complex_channels,
    eligible_monitors,
    encode,
    expected_signal_power,
    generate_instance,
    noise_variance,
    normalize_columns,
    random_pilot_matrix,
    stack_complex,
    unstack_complex,
)
from aoi_access._internal.theory import (
    CertificationDataset,
    CertificationReport,
    CoherenceReport,
    LayerCheck,
    certify_bound,
    coherence,
    construct_instance,
    lista_constants,
    make_dataset,
    theta_schedule,
)
from aoi_access._internal.training import (
    Adam,
    Batch,
    Evaluation,
    Gradients,
    PlateauScheduler,
    TrainResult,
    TrainState,
    backward,
    batch_loss,
    describe,
    evaluate,
    gradient_check,
    loss,
    loss_and_gradients,
    make_batch,
    train,
)

__all__: list[str] = [
    "AGGREGATE_COLUMNS",
    "CHECKPOINT_FORMAT",
    "CHECKPOINT_VERSION",
    "DEFAULT_LOG_LEVEL",
    "LOG_LEVEL_ENV",
    "OPTIMIZE_COLUMNS",
    "ROOT_LOGGER",
    "RUN_COLUMNS",
    "SLOT_COLUMNS",
    "VARIANTS",
    "AccessMode",
    "AccessParams",
    "AccessSurface",
    "ActivityMask",
    "Adam",
    "AgeGate",
    "AgeVector",
    "AoiAccessError",
    "Batch",
    "CertificationDataset",
    "CertificationError",
    "CertificationReport",
    "CertifyConfig",
    "Checkpoint",
    "CheckpointError",
    "CoherenceReport",
    "ConfigurationError",
    "Decoder",
    "DetectionResult",
    "DimensionError",
    "DivergenceError",
    "Evaluation",
    "ExperimentConfig",
    "Gradients",
    "GridSpec",
    "InfeasibleGridError",
    "IstaDecoder",
    "LayerCheck",
    "NullDecoder",
    "Observation",
    "OracleDecoder",
    "PilotMatrix",
    "PlateauScheduler",
    "PopulationRounding",
    "RunOutcome",
    "RunTask",
    "Scenario",
    "ScenarioResult",
    "SchemePlug",
    "SchemeSpec",
    "SimulationConfig",
    "SimulationResult",
    "SlotRecord",
    "SolverKind",
    "SolverParams",
    "SparseChannelVector",
    "SweepKind",
    "SweepPoint",
    "SweepSpec",
    "SystemConfig",
    "TrainConfig",
    "TrainResult",
    "TrainState",
    "Trajectory",
    "UndefinedMetricError",
    "UnfoldedDecoder",
    "age_gated_threshold",
    "aggregate",
    "aoi_chain_mean",
    "avg_aoi",
    "awgn",
    "backward",
    "batch_loss",
    "binomial_cdf",
    "binomial_log_pmf",
    "build_scheme",
    "certify_bound",
    "cli",
    "coherence",
    "configure_logging",
    "construct_instance",
    "describe",
    "detect",
    "detection_rate",
    "draw_activity",
    "draw_channels",
    "draw_complex_channels",
    "eligible_monitors",
    "eligible_population",
    "encode",
    "evaluate",
    "expected_signal_power",
    "generate_instance",
    "get_logger",
    "get_parser",
    "get_preset_text",
    "gradient_check",
    "is_interior_minimum",
    "ista_solve",
    "lasso_objective",
    "lista_age_forward",
    "lista_constants",
    "load_checkpoint",
    "load_config",
    "loss",
    "loss_and_gradients",
    "main",
    "make_batch",
    "make_dataset",
    "max_step_size",
    "noise_variance",
    "normalize_columns",
    "optimize_access",
    "optimize_over_pilot_lengths",
    "optimize_table",
    "parse_config",
    "plan_runs",
    "preset_names",
    "random_pilot_matrix",
    "read_csv",
    "resolve_log_level",
    "run",
    "run_scenario",
    "run_task",
    "s_max",
    "save_checkpoint",
    "scheme_catalog",
    "sign_test",
    "simulate_age_chain",
    "soft_threshold",
    "stack_complex",
    "step",
    "success_rate",
    "success_rate_random_access",
    "success_surface",
    "sweep_points",
    "theta_schedule",
    "train",
    "tuned_system",
    "unfold",
    "unstack_complex",
    "write_csv",
]
