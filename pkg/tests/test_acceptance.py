"""End-to-end acceptance checks for the search engine.

Each test states its tolerance inline. Runtime-limited checks measure
wall time; everything here is deterministic (fixed seeds throughout),
so observed margins are reproducible exactly.
"""

import itertools
import json
import math
import random
import time

import numpy as np
import pytest
from click.testing import CliRunner

from noisenas.cli import main
from noisenas.evaluation import (
    BudgetExhausted,
    BudgetLedger,
    EvaluationArchive,
    FitnessFunction,
    SetupKind,
    evaluations_allowed,
    make_split_plan,
    search_pool,
    trainings_per_evaluation,
)
from noisenas.evaluators import SyntheticBenchmark, SyntheticBenchmarkParams
from noisenas.experiments import derive_seed, noise_analysis
from noisenas.search import (
    ALGORITHMS,
    SearchState,
    _Evaluations,
    _ls_sweep,
    p3_gomea,
)
from noisenas.space import (
    Genotype,
    MAX_LEVEL,
    random_genotype,
    repair_topologies,
)
from noisenas.stats import dice, spearman, wilcoxon_one_sided

# ---------------------------------------------------------------------------
# helpers shared by the search-protocol criteria

SETUPS = (SetupKind.ONE_FOLD, SetupKind.CV, SetupKind.THREE_CV)
BUDGETS = (375, 750, 1500, 3000)


def run_search(bench, algorithm, setup, repeat_seed, budget):
    """One full search run; returns the true base fitness of its best."""
    ledger = BudgetLedger(budget)
    archive = EvaluationArchive()
    plan = make_split_plan(
        setup, search_pool(), random.Random(derive_seed(repeat_seed, "plan"))
    )
    fitness_fn = FitnessFunction(plan, bench, archive, ledger)
    state = ALGORITHMS[algorithm](fitness_fn, derive_seed(repeat_seed, "search"))
    return bench.base_fitness(state.best_genotype)


def test_a1_repair_totality():
    start = time.monotonic()
    vectors = np.array(
        list(itertools.product((0, 1, 2), repeat=12)), dtype=np.int64
    )
    assert len(vectors) == 531_441
    repaired = repair_topologies(vectors)
    # feasibility: running level stays within [0, MAX_LEVEL] everywhere
    level = np.zeros(len(repaired), dtype=np.int64)
    for i in range(12):
        level += (repaired[:, i] == 1).astype(np.int64)
        level -= (repaired[:, i] == 2).astype(np.int64)
        assert level.min() >= 0
        assert level.max() <= MAX_LEVEL
    # idempotence: repairing repaired vectors changes nothing
    assert np.array_equal(repair_topologies(repaired), repaired)
    assert time.monotonic() - start < 10.0


def test_a2_budget_exactness():
    for setup, budget in itertools.product(SETUPS, BUDGETS):
        units = trainings_per_evaluation(setup)
        allowed = evaluations_allowed(budget, setup)
        assert allowed == budget // units
        ledger = BudgetLedger(budget)
        archive = EvaluationArchive()
        plan = make_split_plan(setup, search_pool(), random.Random(0))
        fitness_fn = FitnessFunction(plan, SyntheticBenchmark(), archive, ledger)
        # distinct feasible genotypes -> zero cache hits by construction
        fresh = (
            Genotype((0,) * 12, tuple(blocks))
            for blocks in itertools.product(range(5), repeat=12)
        )
        n_evals = 0
        try:
            for genotype in fresh:
                fitness_fn(genotype)
                n_evals += 1
        except BudgetExhausted:
            pass
        assert n_evals == allowed, (setup, budget)
        assert ledger.consumed == allowed * units
        assert ledger.consumed <= budget
    assert evaluations_allowed(375, SetupKind.THREE_CV) == 25


def test_a3_metric_oracles():
    # dice: hand-counted voxel cases, exact equality
    pred = np.array([[1, 1, 0], [2, 0, 0]])
    true = np.array([[1, 0, 1], [2, 0, 0]])
    assert dice(pred, true, n_classes=3) == 0.75  # (0.5 + 1.0) / 2
    grid = np.array([[0, 1], [2, 2]])
    assert dice(grid, grid, n_classes=3) == 1.0
    assert dice(
        np.array([[0, 0], [0, 1]]), np.array([[1, 1], [1, 1]]), n_classes=2
    ) == 0.4  # 2*1 / (1+4)

    def rank(vals):
        order = sorted(range(len(vals)), key=lambda i: vals[i])
        out = [0.0] * len(vals)
        i = 0
        while i < len(order):
            j = i
            while j + 1 < len(order) and vals[order[j + 1]] == vals[order[i]]:
                j += 1
            for k in range(i, j + 1):
                out[order[k]] = (i + j) / 2 + 1
            i = j + 1
        return out

    rng = random.Random(2024)
    for _ in range(100):
        n = rng.randrange(4, 13)
        xs = [rng.randrange(8) for _ in range(n)]
        ys = [rng.randrange(8) for _ in range(n)]
        if len(set(xs)) < 2 or len(set(ys)) < 2:
            continue
        # spearman: Pearson on average ranks, |delta rho| < 1e-12
        rx, ry = rank(xs), rank(ys)
        mx, my = sum(rx) / n, sum(ry) / n
        num = sum((a - mx) * (b - my) for a, b in zip(rx, ry))
        den = math.sqrt(
            sum((a - mx) ** 2 for a in rx) * sum((b - my) ** 2 for b in ry)
        )
        assert abs(spearman(xs, ys) - num / den) < 1e-12

    for _ in range(60):
        n = rng.randrange(3, 13)
        diffs = [rng.randrange(-6, 7) for _ in range(n)]
        nz = [d for d in diffs if d != 0]
        if not nz:
            continue
        ranks = rank([abs(d) for d in nz])
        w_obs = sum(r for d, r in zip(nz, ranks) if d > 0)
        count = sum(
            sum(r for s, r in zip(signs, ranks) if s) >= w_obs
            for signs in itertools.product((0, 1), repeat=len(nz))
        )
        # wilcoxon: exact equality with full sign enumeration
        assert wilcoxon_one_sided(diffs, [0.0] * len(diffs)) == count / 2 ** len(nz)


def test_a4_noise_phenomenology():
    start = time.monotonic()
    report = noise_analysis(SyntheticBenchmark(), n_samples=5000)
    comparison = report["seed_comparison"]
    assert comparison["overall_rho"] > 0.6
    assert comparison["top_fraction_rho"] < 0.3
    disagreements = 0
    for benchmark_seed in range(20):
        bench = SyntheticBenchmark(
            SyntheticBenchmarkParams(benchmark_seed=benchmark_seed)
        )
        stats = noise_analysis(bench, n_samples=5000)["seed_comparison"]
        disagreements += stats["argmax_disagrees"]
    assert disagreements >= 10
    assert time.monotonic() - start < 30.0


def test_a5_cv_beats_single_fold_at_full_budget():
    start = time.monotonic()
    bench = SyntheticBenchmark()
    for algorithm in ("ls", "tpe"):
        cv = [
            run_search(bench, algorithm, SetupKind.CV, seed, 3000)
            for seed in range(1, 11)
        ]
        one_fold = [
            run_search(bench, algorithm, SetupKind.ONE_FOLD, seed, 3000)
            for seed in range(1, 11)
        ]
        assert sum(cv) / 10 > sum(one_fold) / 10, algorithm
        assert wilcoxon_one_sided(cv, one_fold) < 0.05, algorithm
    assert time.monotonic() - start < 600.0


def test_a6_three_cv_does_not_win_at_low_budget():
    bench = SyntheticBenchmark()
    for algorithm in ("ls", "tpe"):
        cv = [
            run_search(bench, algorithm, SetupKind.CV, seed, 375)
            for seed in range(1, 11)
        ]
        three_cv = [
            run_search(bench, algorithm, SetupKind.THREE_CV, seed, 375)
            for seed in range(1, 11)
        ]
        assert sum(three_cv) / 10 <= sum(cv) / 10, algorithm


# deterministic deceptive landscape for A7: three concatenated traps over
# the topology genes; per-gene gradients point away from the all-2 blocks
def _trap(genotype):
    total = 0.0
    for b in range(3):
        block = genotype.topology[4 * b : 4 * b + 4]
        maxed = sum(v == 2 for v in block)
        total += 1.0 if maxed == 4 else (3 - maxed) / 4
    return total / 3


# separable landscape: per-gene contributions over the topology genes
# (block genes weigh zero, so any value is an argmax for them)
def _separable(genotype):
    return sum(genotype.topology) / 24.0


def test_a7_search_sanity():
    # P3-GOMEA reaches the trap optimum within 50,000 evaluations in
    # >= 18 of 20 seeds
    gomea_hits = 0
    for seed in range(20):
        solved = [False]

        def stopping(genotype):
            f = _trap(genotype)
            if f >= 1.0:
                solved[0] = True
                raise BudgetExhausted
            return f

        p3_gomea(stopping, rng_seed=seed, max_evals=50_000)
        gomea_hits += solved[0]
    assert gomea_hits >= 18

    # single-sweep LS from the same starts never reaches it
    for seed in range(20):
        state = SearchState()
        evals = _Evaluations(_trap, state, None)
        rng = random.Random(seed)
        genotype = random_genotype(rng)
        genotype, fitness, _ = _ls_sweep(genotype, evals(genotype), evals, rng)
        assert fitness < 1.0, seed

    # all four non-random algorithms reach the separable optimum
    for algorithm in ("ls", "gomea", "tpe", "sagomea"):
        solved = [False]

        def stopping(genotype):
            f = _separable(genotype)
            if f >= 1.0:
                solved[0] = True
                raise BudgetExhausted
            return f

        ALGORITHMS[algorithm](stopping, rng_seed=1, max_evals=20_000)
        assert solved[0], algorithm


def test_a8_run_determinism(tmp_path):
    runner = CliRunner()
    outputs = []
    for label in ("first", "second"):
        out_dir = tmp_path / label
        config = tmp_path / f"{label}.toml"
        config.write_text(
            "[search]\n"
            'algorithm = "ls"\n'
            'setup = "cv"\n'
            "budget = 150\n"
            "n_runs = 2\n"
            "[output]\n"
            f'directory = "{out_dir}"\n'
        )
        assert runner.invoke(main, ["run", "--config", str(config)]).exit_code == 0
        assert runner.invoke(main, ["reeval", "--results", str(out_dir)]).exit_code == 0
        assert runner.invoke(main, ["report", "--results", str(out_dir)]).exit_code == 0
        outputs.append(
            {
                rel: (out_dir / rel).read_bytes()
                for rel in (
                    "cell.json",
                    "run_1/archive.jsonl",
                    "run_1/result.json",
                    "run_2/archive.jsonl",
                    "run_2/result.json",
                    "summary.csv",
                    "trajectory.csv",
                )
            }
        )
    assert outputs[0] == outputs[1]
