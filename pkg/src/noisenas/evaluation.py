"""Fitness evaluation setups, training-unit budgets, and the score archive.

A fitness evaluation of a genotype consists of 1, 5, or 15 network
trainings (Setup-1Fold / Setup-CV / Setup-3CV). The budget currency is
the training unit: one (genotype, partitioning, fold, seed) tuple.
Executed units are cached in an archive; cache hits are budget-free.
"""

from __future__ import annotations

import enum
import json
import threading
from collections.abc import Callable
from dataclasses import dataclass

from noisenas.space import Genotype, repair

FOLDS_PER_CV = 5


class SetupKind(enum.Enum):
    ONE_FOLD = "1fold"
    CV = "cv"
    THREE_CV = "3cv"

    @classmethod
    def parse(cls, name: str) -> "SetupKind":
        name = name.strip().lower()
        for kind in cls:
            if kind.value == name:
                return kind
        raise ValueError(f"unknown setup {name!r}; expected 1fold, cv, or 3cv")


@dataclass(frozen=True)
class EvaluationSetup:
    kind: SetupKind
    folds_per_cv: int = FOLDS_PER_CV

    @property
    def partitionings(self) -> int:
        return 3 if self.kind is SetupKind.THREE_CV else 1


def trainings_per_evaluation(setup: SetupKind | EvaluationSetup) -> int:
    kind = setup.kind if isinstance(setup, EvaluationSetup) else setup
    return {SetupKind.ONE_FOLD: 1, SetupKind.CV: 5, SetupKind.THREE_CV: 15}[kind]


def evaluations_allowed(budget: int, setup: SetupKind | EvaluationSetup) -> int:
    if budget < 0:
        raise ValueError("budget must be non-negative")
    return budget // trainings_per_evaluation(setup)


@dataclass(frozen=True)
class TrainingUnit:
    """One network-training-equivalent; the key is the full tuple."""

    genotype: Genotype
    partitioning: int
    fold: int
    seed: int

    @property
    def slot(self) -> tuple[int, int, int]:
        return (self.partitioning, self.fold, self.seed)


@dataclass(frozen=True)
class SeedPool:
    """Disjoint reservoirs of partitioning ids and seed ids.

    One pool drives the search-phase plans, a second (non-overlapping)
    pool drives the independent quality measure.
    """

    name: str
    partitionings: tuple[int, ...]
    seeds: tuple[int, ...]

    def __post_init__(self):
        if len(set(self.partitionings)) != len(self.partitionings):
            raise ValueError("duplicate partitioning ids in pool")
        if len(set(self.seeds)) != len(self.seeds):
            raise ValueError("duplicate seed ids in pool")

    def overlaps(self, other: "SeedPool") -> bool:
        return bool(
            set(self.partitionings) & set(other.partitionings)
            or set(self.seeds) & set(other.seeds)
        )


def search_pool() -> SeedPool:
    return SeedPool("search", tuple(range(3)), tuple(range(15)))


def holdout_pool() -> SeedPool:
    return SeedPool("holdout", tuple(range(100, 103)), tuple(range(100, 115)))


class ConfigurationError(ValueError):
    pass


@dataclass(frozen=True)
class SplitPlan:
    """The (partitioning, fold, seed) slots composing one fitness evaluation."""

    setup: SetupKind
    slots: tuple[tuple[int, int, int], ...]
    seed_pool_id: str

    def units_for(self, repaired: Genotype) -> tuple[TrainingUnit, ...]:
        return tuple(TrainingUnit(repaired, p, f, s) for p, f, s in self.slots)


def make_split_plan(setup: SetupKind | EvaluationSetup, pool: SeedPool, rng) -> SplitPlan:
    """Deterministic plan for (setup, pool, rng state).

    Plans nest across setups drawn with the same rng seed: the 1Fold slot
    is the first CV slot, and the CV slots are the first partitioning's
    3CV slots, so upgrading a setup never discards cached trainings.
    """
    kind = setup.kind if isinstance(setup, EvaluationSetup) else setup
    if len(pool.partitionings) < 3 or len(pool.seeds) < 15:
        raise ConfigurationError(
            f"pool {pool.name!r} needs >= 3 partitionings and >= 15 seeds"
        )
    parts = list(pool.partitionings)
    seeds = list(pool.seeds)
    rng.shuffle(parts)
    rng.shuffle(seeds)
    n_parts = 3 if kind is SetupKind.THREE_CV else 1
    n_folds = 1 if kind is SetupKind.ONE_FOLD else FOLDS_PER_CV
    slots = tuple(
        (parts[p], f, seeds[p * FOLDS_PER_CV + f])
        for p in range(n_parts)
        for f in range(n_folds)
    )
    return SplitPlan(kind, slots, pool.name)


class BudgetExhausted(RuntimeError):
    """Raised when a fitness evaluation cannot be fully paid for."""


class BudgetLedger:
    """Training-unit accounting; consumed never exceeds budget."""

    def __init__(self, budget: int):
        if budget < 0:
            raise ValueError("budget must be non-negative")
        self.budget = budget
        self.consumed = 0
        self._lock = threading.Lock()

    @property
    def remaining(self) -> int:
        return self.budget - self.consumed

    def charge(self, n: int) -> None:
        with self._lock:
            if self.consumed + n > self.budget:
                raise BudgetExhausted(
                    f"need {n} trainings, {self.remaining} left of {self.budget}"
                )
            self.consumed += n


class EvaluationArchive:
    """Cache of executed training units and fitness records.

    Append-only: every executed training and every fitness evaluation is
    logged as one JSON-serializable event; replaying the log rebuilds
    the maps exactly.
    """

    def __init__(self):
        self._unit_scores: dict[tuple, float] = {}
        self._fitness: dict[tuple, tuple[Genotype, float]] = {}
        self.events: list[dict] = []
        self._lock = threading.Lock()
        self._n_trainings = 0
        self._n_evals = 0

    @staticmethod
    def _unit_key(unit: TrainingUnit) -> tuple:
        return (unit.genotype.genes, unit.partitioning, unit.fold, unit.seed)

    def unit_score(self, unit: TrainingUnit) -> float | None:
        return self._unit_scores.get(self._unit_key(unit))

    def record_unit(self, unit: TrainingUnit, raw: Genotype, score: float) -> None:
        if not 0.0 <= score <= 1.0:
            raise ValueError(f"unit score {score} outside [0, 1]")
        with self._lock:
            self._unit_scores[self._unit_key(unit)] = score
            self.events.append(
                {
                    "genotype": list(raw.genes),
                    "repaired": list(unit.genotype.genes),
                    "partitioning": unit.partitioning,
                    "fold": unit.fold,
                    "seed": unit.seed,
                    "score": score,
                    "training_index": self._n_trainings,
                }
            )
            self._n_trainings += 1

    def record_fitness(self, raw: Genotype, setup: SetupKind, fitness: float) -> None:
        with self._lock:
            self._fitness[(raw.genes, setup.value)] = (raw, fitness)
            self.events.append(
                {
                    "genotype": list(raw.genes),
                    "setup": setup.value,
                    "fitness": fitness,
                    "eval_index": self._n_evals,
                }
            )
            self._n_evals += 1

    def fitness_of(self, raw: Genotype, setup: SetupKind) -> float | None:
        rec = self._fitness.get((raw.genes, setup.value))
        return rec[1] if rec else None

    @property
    def n_trainings(self) -> int:
        return self._n_trainings

    def to_jsonl(self) -> str:
        return "".join(
            json.dumps(e, sort_keys=True, separators=(",", ":")) + "\n"
            for e in self.events
        )

    @classmethod
    def from_jsonl(cls, text: str) -> "EvaluationArchive":
        archive = cls()
        for line in text.splitlines():
            if not line.strip():
                continue
            e = json.loads(line)
            raw = Genotype.from_genes(e["genotype"])
            if "training_index" in e:
                unit = TrainingUnit(
                    Genotype.from_genes(e["repaired"]),
                    e["partitioning"],
                    e["fold"],
                    e["seed"],
                )
                archive.record_unit(unit, raw, e["score"])
            else:
                archive.record_fitness(raw, SetupKind(e["setup"]), e["fitness"])
        return archive


Evaluator = Callable[[Genotype, TrainingUnit], float]


def evaluate_fitness(
    genotype: Genotype,
    plan: SplitPlan,
    evaluator: Evaluator,
    archive: EvaluationArchive,
    ledger: BudgetLedger | None = None,
) -> float:
    """Score a genotype under a plan: mean of its (cached or fresh) units.

    The genotype is repaired for evaluation only; the raw form is what
    gets recorded with the resulting fitness. Budget enforcement is
    atomic: if the uncached units cannot all be paid for, nothing is
    consumed and nothing is recorded.
    """
    repaired = repair(genotype)
    units = plan.units_for(repaired)
    missing = [u for u in units if archive.unit_score(u) is None]
    if ledger is not None and missing:
        ledger.charge(len(missing))
    for unit in missing:
        archive.record_unit(unit, genotype, evaluator(repaired, unit))
    scored = sorted((u.slot, archive.unit_score(u)) for u in units)
    fitness = sum(score for _, score in scored) / len(scored)
    archive.record_fitness(genotype, plan.setup, fitness)
    return fitness


def independent_quality(
    genotype: Genotype,
    evaluator: Evaluator,
    holdout: SeedPool,
    archive: EvaluationArchive | None = None,
    search: SeedPool | None = None,
) -> float:
    """Ground-truth quality: mean over three fresh 5-fold CVs.

    Uses holdout partitionings and seeds only and never touches any
    search budget ledger.
    """
    if search is not None and holdout.overlaps(search):
        raise ConfigurationError(
            f"holdout pool {holdout.name!r} overlaps search pool {search.name!r}"
        )
    if archive is None:
        archive = EvaluationArchive()
    slots = tuple(
        (holdout.partitionings[p], f, holdout.seeds[p * FOLDS_PER_CV + f])
        for p in range(3)
        for f in range(FOLDS_PER_CV)
    )
    plan = SplitPlan(SetupKind.THREE_CV, slots, holdout.name)
    return evaluate_fitness(genotype, plan, evaluator, archive, ledger=None)


class FitnessFunction:
    """Callable fitness wrapper handed to search algorithms.

    Search algorithms see an opaque genotype -> score function plus the
    ledger contract (BudgetExhausted on an unpayable evaluation); they
    never see fold or seed structure.
    """

    def __init__(
        self,
        plan: SplitPlan,
        evaluator: Evaluator,
        archive: EvaluationArchive,
        ledger: BudgetLedger,
    ):
        self.plan = plan
        self.evaluator = evaluator
        self.archive = archive
        self.ledger = ledger

    def __call__(self, genotype: Genotype) -> float:
        return evaluate_fitness(
            genotype, self.plan, self.evaluator, self.archive, self.ledger
        )
