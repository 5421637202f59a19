"""Experiment orchestration: configs, runs, persistence, and reports.

An experiment directory holds one cell of the grid (one algorithm, one
evaluation setup, one budget) with n_runs independent runs. Reports
aggregate over one or more such directories.
"""

from __future__ import annotations

import csv
import io
import json
import random
import sys
from dataclasses import dataclass, field
from pathlib import Path

from noisenas import hashing
from noisenas.evaluation import (
    BudgetLedger,
    ConfigurationError,
    EvaluationArchive,
    FitnessFunction,
    SeedPool,
    SetupKind,
    holdout_pool,
    independent_quality,
    make_split_plan,
    search_pool,
)
from noisenas.evaluators import (
    EvaluatorFailure,
    ExternalEvaluator,
    SubprocessTransport,
    SyntheticBenchmark,
    SyntheticBenchmarkParams,
    TabularBenchmark,
)
from noisenas.search import ALGORITHMS
from noisenas.space import Genotype, repair
from noisenas.stats import (
    bonferroni,
    spearman,
    top_fraction_correlation,
    wilcoxon_one_sided,
)

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


def derive_seed(base: int, tag: str) -> int:
    """Stable sub-seed derivation, independent of hash randomization."""
    return hashing.fnv1a64(hashing.encode_message(tag, (base,)))


@dataclass
class ExperimentConfig:
    algorithm: str
    setup: SetupKind
    budget: int
    output_dir: Path
    evaluator_kind: str = "synthetic"
    evaluator_options: dict = field(default_factory=dict)
    n_runs: int = 5
    n_best: int = 5
    seeds: tuple[int, ...] = ()
    search_pool: SeedPool = field(default_factory=search_pool)
    holdout_pool: SeedPool = field(default_factory=holdout_pool)

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ConfigurationError(f"unknown algorithm {self.algorithm!r}")
        if self.budget <= 0:
            raise ConfigurationError("budget must be positive")
        if not self.seeds:
            self.seeds = tuple(range(1, self.n_runs + 1))
        if len(set(self.seeds)) != len(self.seeds):
            raise ConfigurationError("run seeds must be distinct")
        if len(self.seeds) != self.n_runs:
            raise ConfigurationError("need exactly n_runs seeds")
        if self.search_pool.overlaps(self.holdout_pool):
            raise ConfigurationError("search and holdout pools overlap")

    @classmethod
    def from_toml(cls, path: str | Path) -> "ExperimentConfig":
        with open(path, "rb") as fh:
            doc = tomllib.load(fh)
        try:
            ev = doc.get("evaluator", {"kind": "synthetic"})
            search = doc["search"]
            out = doc["output"]
            return cls(
                algorithm=search["algorithm"],
                setup=SetupKind.parse(search["setup"]),
                budget=int(search["budget"]),
                n_runs=int(search.get("n_runs", 5)),
                n_best=int(search.get("n_best", 5)),
                seeds=tuple(search.get("seeds", ())),
                evaluator_kind=ev.get("kind", "synthetic"),
                evaluator_options={k: v for k, v in ev.items() if k != "kind"},
                output_dir=Path(out["directory"]),
            )
        except KeyError as exc:
            raise ConfigurationError(f"missing config key: {exc}") from exc

    def build_evaluator(self):
        if self.evaluator_kind == "synthetic":
            return SyntheticBenchmark(SyntheticBenchmarkParams(**self.evaluator_options))
        if self.evaluator_kind == "tabular":
            path = self.evaluator_options.get("path")
            if not path:
                raise ConfigurationError("tabular evaluator needs a path")
            return TabularBenchmark.from_jsonl(Path(path).read_text())
        if self.evaluator_kind == "external":
            command = self.evaluator_options.get("command")
            if not command:
                raise ConfigurationError("external evaluator needs a command")
            timeout = float(self.evaluator_options.get("timeout", 3600.0))
            return ExternalEvaluator(SubprocessTransport(list(command)), timeout=timeout)
        raise ConfigurationError(f"unknown evaluator kind {self.evaluator_kind!r}")


@dataclass
class RunResult:
    seed: int
    algorithm: str
    setup: SetupKind
    budget: int
    consumed: int
    n_evaluations: int
    best: list[tuple[Genotype, float]]
    independent: dict[str, float] = field(default_factory=dict)
    failed: str | None = None

    def to_doc(self) -> dict:
        doc = {
            "seed": self.seed,
            "algorithm": self.algorithm,
            "setup": self.setup.value,
            "budget": self.budget,
            "consumed": self.consumed,
            "n_evaluations": self.n_evaluations,
            "best": [
                {"genotype": list(g.genes), "fitness": f} for g, f in self.best
            ],
        }
        if self.independent:
            doc["independent"] = dict(sorted(self.independent.items()))
        if self.failed:
            doc["failed"] = self.failed
        return doc

    @classmethod
    def from_doc(cls, doc: dict) -> "RunResult":
        return cls(
            seed=doc["seed"],
            algorithm=doc["algorithm"],
            setup=SetupKind(doc["setup"]),
            budget=doc["budget"],
            consumed=doc["consumed"],
            n_evaluations=doc["n_evaluations"],
            best=[
                (Genotype.from_genes(b["genotype"]), b["fitness"])
                for b in doc["best"]
            ],
            independent=doc.get("independent", {}),
            failed=doc.get("failed"),
        )


def best_of_history(history, n_best: int) -> list[tuple[Genotype, float]]:
    """Top n_best by fitness, deduplicated by repaired genotype."""
    seen = set()
    ranked = []
    for genotype, fitness in sorted(
        history, key=lambda gf: (-gf[1], gf[0].genes)
    ):
        key = repair(genotype).genes
        if key in seen:
            continue
        seen.add(key)
        ranked.append((genotype, fitness))
        if len(ranked) == n_best:
            break
    return ranked


def execute_run(config: ExperimentConfig, seed: int, evaluator=None):
    """One search run to budget exhaustion; returns (result, archive)."""
    evaluator = evaluator or config.build_evaluator()
    ledger = BudgetLedger(config.budget)
    archive = EvaluationArchive()
    plan_rng = random.Random(derive_seed(seed, "plan"))
    plan = make_split_plan(config.setup, config.search_pool, plan_rng)
    fitness_fn = FitnessFunction(plan, evaluator, archive, ledger)
    algorithm = ALGORITHMS[config.algorithm]
    state = algorithm(fitness_fn, derive_seed(seed, "search"))
    result = RunResult(
        seed=seed,
        algorithm=config.algorithm,
        setup=config.setup,
        budget=config.budget,
        consumed=ledger.consumed,
        n_evaluations=state.n_evaluations,
        best=best_of_history(state.history, config.n_best),
    )
    return result, archive


def run_experiment(config: ExperimentConfig, evaluator=None) -> list[RunResult]:
    """Execute all runs of one experiment cell and persist their outputs."""
    config.output_dir.mkdir(parents=True, exist_ok=True)
    shared_evaluator = evaluator or config.build_evaluator()
    results = []
    for seed in config.seeds:
        run_dir = config.output_dir / f"run_{seed}"
        run_dir.mkdir(parents=True, exist_ok=True)
        try:
            result, archive = execute_run(config, seed, shared_evaluator)
            (run_dir / "archive.jsonl").write_text(archive.to_jsonl())
        except EvaluatorFailure as exc:
            result = RunResult(
                seed=seed,
                algorithm=config.algorithm,
                setup=config.setup,
                budget=config.budget,
                consumed=0,
                n_evaluations=0,
                best=[],
                failed=str(exc),
            )
        (run_dir / "result.json").write_text(
            json.dumps(result.to_doc(), sort_keys=True, separators=(",", ":"))
            + "\n"
        )
        results.append(result)
    _write_cell_meta(config)
    return results


def _write_cell_meta(config: ExperimentConfig) -> None:
    meta = {
        "algorithm": config.algorithm,
        "setup": config.setup.value,
        "budget": config.budget,
        "n_runs": config.n_runs,
        "n_best": config.n_best,
        "seeds": list(config.seeds),
        "evaluator": {"kind": config.evaluator_kind, **config.evaluator_options},
    }
    (config.output_dir / "cell.json").write_text(
        json.dumps(meta, sort_keys=True, separators=(",", ":")) + "\n"
    )


def load_results(cell_dir: str | Path) -> list[RunResult]:
    cell_dir = Path(cell_dir)
    results = []
    for result_path in sorted(cell_dir.glob("run_*/result.json")):
        results.append(RunResult.from_doc(json.loads(result_path.read_text())))
    return results


def find_cells(results_dir: str | Path) -> list[Path]:
    """Cell directories under a results root (the root itself may be one)."""
    root = Path(results_dir)
    if (root / "cell.json").exists():
        return [root]
    return sorted(p.parent for p in root.glob("*/cell.json"))


def load_cells(results_dir: str | Path) -> dict[tuple, list[RunResult]]:
    """Map (algorithm, setup value, budget) -> run results for every cell."""
    cells: dict[tuple, list[RunResult]] = {}
    for cell_dir in find_cells(results_dir):
        meta = json.loads((cell_dir / "cell.json").read_text())
        key = (meta["algorithm"], meta["setup"], meta["budget"])
        cells.setdefault(key, []).extend(load_results(cell_dir))
    return cells


def reevaluate(
    results: list[RunResult],
    evaluator,
    holdout: SeedPool,
    search: SeedPool | None = None,
) -> list[RunResult]:
    """Fill independent qualities for every best genotype; idempotent."""
    if search is not None and holdout.overlaps(search):
        raise ConfigurationError("holdout pool overlaps search pool")
    archive = EvaluationArchive()
    for result in results:
        if result.failed:
            continue
        for genotype, _ in result.best:
            quality = independent_quality(
                genotype, evaluator, holdout, archive=archive, search=search
            )
            result.independent[genotype.to_text()] = quality
    return results


def reevaluate_cell(cell_dir: str | Path, evaluator=None) -> list[RunResult]:
    """Reevaluate a persisted cell and rewrite its result files."""
    cell_dir = Path(cell_dir)
    meta = json.loads((cell_dir / "cell.json").read_text())
    if evaluator is None:
        ev = meta.get("evaluator", {})
        kind = ev.get("kind", "synthetic")
        if kind != "synthetic":
            raise ConfigurationError(
                "reevaluation needs an explicit evaluator for non-synthetic cells"
            )
        params = {k: v for k, v in ev.items() if k != "kind"}
        evaluator = SyntheticBenchmark(SyntheticBenchmarkParams(**params))
    results = load_results(cell_dir)
    reevaluate(results, evaluator, holdout_pool(), search=search_pool())
    for result in results:
        (cell_dir / f"run_{result.seed}" / "result.json").write_text(
            json.dumps(result.to_doc(), sort_keys=True, separators=(",", ":"))
            + "\n"
        )
    return results


def summarize(cells: dict[tuple, list[RunResult]]) -> str:
    """CSV table of mean fitness and mean independent quality per cell.

    Keys are (algorithm, setup value, budget). Cells with no usable runs
    are emitted empty and flagged.
    """
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(
        ["algorithm", "setup", "budget", "n_points", "mean_fitness",
         "mean_quality", "flag"]
    )
    for (algorithm, setup, budget), results in sorted(cells.items()):
        fitnesses, qualities = [], []
        flag = ""
        for result in results:
            if result.failed:
                flag = "failed_runs"
                continue
            for genotype, fitness in result.best:
                fitnesses.append(fitness)
                quality = result.independent.get(genotype.to_text())
                if quality is not None:
                    qualities.append(quality)
        if not fitnesses:
            writer.writerow([algorithm, setup, budget, 0, "", "", flag or "empty"])
            continue
        mean_f = sum(fitnesses) / len(fitnesses)
        mean_q = sum(qualities) / len(qualities) if qualities else ""
        writer.writerow(
            [algorithm, setup, budget, len(fitnesses),
             f"{mean_f:.6f}", f"{mean_q:.6f}" if mean_q != "" else "", flag]
        )
    return buf.getvalue()


def trajectory_table(cells: dict[tuple, list[RunResult]]) -> str:
    """Budget-ascending mean quality per (algorithm, setup): plot-ready CSV."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["budget", "algorithm", "setup", "mean_quality", "n_points"])
    rows = []
    for (algorithm, setup, budget), results in cells.items():
        qualities = [
            q for r in results if not r.failed for q in (
                r.independent.get(g.to_text())
                for g, _ in r.best
            ) if q is not None
        ]
        if qualities:
            rows.append(
                (budget, algorithm, setup,
                 f"{sum(qualities) / len(qualities):.6f}", len(qualities))
            )
    for row in sorted(rows):
        writer.writerow(row)
    return buf.getvalue()


def paired_qualities(
    results_a: list[RunResult], results_b: list[RunResult]
) -> tuple[list[float], list[float]]:
    """Pair independent qualities by (run seed, rank within run)."""
    by_seed_b = {r.seed: r for r in results_b if not r.failed}
    a_scores, b_scores = [], []
    for ra in results_a:
        if ra.failed or ra.seed not in by_seed_b:
            continue
        rb = by_seed_b[ra.seed]
        for (ga, _), (gb, _) in zip(ra.best, rb.best):
            qa = ra.independent.get(ga.to_text())
            qb = rb.independent.get(gb.to_text())
            if qa is None or qb is None:
                raise ConfigurationError("missing independent qualities; reevaluate first")
            a_scores.append(qa)
            b_scores.append(qb)
    if not a_scores:
        raise ConfigurationError("no matched (seed, rank) pairs between cells")
    return a_scores, b_scores


def compare_setups(
    cells: dict[tuple, list[RunResult]],
    pairs: list[tuple[str, str]],
    m: int,
    alpha: float = 0.05,
) -> str:
    """One-sided Wilcoxon tests that setup A finds better networks than B.

    For every (algorithm, budget) present with both setups, matched by
    (run seed, rank). Returns a CSV with raw and Bonferroni-adjusted
    p-values and a significance flag at the given alpha.
    """
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(
        ["algorithm", "budget", "better", "worse", "n_pairs", "p_value",
         "p_adjusted", "significant"]
    )
    combos = sorted({(alg, budget) for alg, _, budget in cells})
    for alg, budget in combos:
        for setup_a, setup_b in pairs:
            key_a = (alg, setup_a, budget)
            key_b = (alg, setup_b, budget)
            if key_a not in cells or key_b not in cells:
                continue
            a_scores, b_scores = paired_qualities(cells[key_a], cells[key_b])
            p = wilcoxon_one_sided(a_scores, b_scores)
            p_adj = bonferroni(p, m)
            writer.writerow(
                [alg, budget, setup_a, setup_b, len(a_scores),
                 f"{p:.6g}", f"{p_adj:.6g}", str(p_adj < alpha).lower()]
            )
    return buf.getvalue()


def noise_analysis(
    evaluator,
    n_samples: int,
    fraction: float = 0.2,
    rng_seed: int = 0,
    pool: SeedPool | None = None,
) -> dict:
    """Fig-1 style analysis: score genotypes under two seeds / partitionings.

    Returns paired scores plus overall and top-fraction rank
    correlations and argmax-disagreement flags for both comparisons.
    """
    from noisenas.evaluation import TrainingUnit
    from noisenas.space import random_genotype

    pool = pool or search_pool()
    rng = random.Random(derive_seed(rng_seed, "noise"))
    genotypes = []
    seen = set()
    while len(genotypes) < n_samples:
        g = repair(random_genotype(rng))
        if g.genes in seen:
            continue
        seen.add(g.genes)
        genotypes.append(g)

    s0, s1 = pool.seeds[0], pool.seeds[1]
    p0, p1 = pool.partitionings[0], pool.partitionings[1]
    f0 = 0

    if isinstance(evaluator, SyntheticBenchmark):
        import numpy as np

        genes = np.array([g.genes for g in genotypes], dtype=np.int64)
        seed_a = evaluator.noisy_score_batch(genes, p0, f0, s0).tolist()
        seed_b = evaluator.noisy_score_batch(genes, p0, f0, s1).tolist()
        part_a = seed_a
        part_b = evaluator.noisy_score_batch(genes, p1, f0, s0).tolist()
    else:
        def score(g, p, f, s):
            return evaluator(g, TrainingUnit(g, p, f, s))

        seed_a = [score(g, p0, f0, s0) for g in genotypes]
        seed_b = [score(g, p0, f0, s1) for g in genotypes]
        part_a = seed_a
        part_b = [score(g, p1, f0, s0) for g in genotypes]

    def stats_for(a, b):
        pairs = list(zip(a, b))
        return {
            "overall_rho": spearman(a, b),
            "top_fraction_rho": top_fraction_correlation(pairs, fraction),
            "argmax_disagrees": a.index(max(a)) != b.index(max(b)),
        }

    return {
        "n_samples": n_samples,
        "fraction": fraction,
        "genotypes": [g.to_text() for g in genotypes],
        "seed_scores": list(zip(seed_a, seed_b)),
        "partitioning_scores": list(zip(part_a, part_b)),
        "seed_comparison": stats_for(seed_a, seed_b),
        "partitioning_comparison": stats_for(part_a, part_b),
    }


def noise_report_csv(report: dict) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["genotype", "seed_a", "seed_b", "part_a", "part_b"])
    for g, (sa, sb), (pa, pb) in zip(
        report["genotypes"], report["seed_scores"], report["partitioning_scores"]
    ):
        writer.writerow([g, repr(sa), repr(sb), repr(pa), repr(pb)])
    return buf.getvalue()
