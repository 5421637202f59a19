"""Budget-equalized, noise-aware neural architecture search engine."""

from noisenas.space import (
    Genotype,
    LevelTrace,
    ArchitectureGraph,
    CellSpec,
    decode_levels,
    repair,
    derive_skips,
    build_graph,
    random_genotype,
    count_feasible_topologies,
    serialize_graph,
    parse_graph,
)
from noisenas.evaluation import (
    SetupKind,
    EvaluationSetup,
    TrainingUnit,
    SplitPlan,
    SeedPool,
    BudgetLedger,
    BudgetExhausted,
    EvaluationArchive,
    FitnessFunction,
    trainings_per_evaluation,
    evaluations_allowed,
    make_split_plan,
    evaluate_fitness,
    independent_quality,
)

__all__ = [
    "Genotype",
    "LevelTrace",
    "ArchitectureGraph",
    "CellSpec",
    "decode_levels",
    "repair",
    "derive_skips",
    "build_graph",
    "random_genotype",
    "count_feasible_topologies",
    "serialize_graph",
    "parse_graph",
    "SetupKind",
    "EvaluationSetup",
    "TrainingUnit",
    "SplitPlan",
    "SeedPool",
    "BudgetLedger",
    "BudgetExhausted",
    "EvaluationArchive",
    "FitnessFunction",
    "trainings_per_evaluation",
    "evaluations_allowed",
    "make_split_plan",
    "evaluate_fitness",
    "independent_quality",
]
