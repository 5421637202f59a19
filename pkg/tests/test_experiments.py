import json
import random
from pathlib import Path

import pytest

from noisenas.evaluation import ConfigurationError, SetupKind, TrainingUnit
from noisenas.evaluators import SyntheticBenchmark, SyntheticBenchmarkParams
from noisenas.experiments import (
    ExperimentConfig,
    RunResult,
    best_of_history,
    compare_setups,
    derive_seed,
    execute_run,
    find_cells,
    load_cells,
    load_results,
    noise_analysis,
    paired_qualities,
    reevaluate,
    reevaluate_cell,
    run_experiment,
    summarize,
    trajectory_table,
)
from noisenas.space import Genotype, random_genotype, repair

FAST_EVALUATOR = {"m": 2, "k": 2}  # tiny landscape keeps test runs quick


def make_config(tmp_path, **overrides):
    kwargs = dict(
        algorithm="random",
        setup=SetupKind.ONE_FOLD,
        budget=30,
        output_dir=tmp_path / "cell",
        evaluator_options=dict(FAST_EVALUATOR),
        n_runs=2,
        n_best=3,
    )
    kwargs.update(overrides)
    return ExperimentConfig(**kwargs)


class TestDeriveSeed:
    def test_stable(self):
        assert derive_seed(7, "plan") == derive_seed(7, "plan")

    def test_tag_and_base_sensitive(self):
        assert derive_seed(7, "plan") != derive_seed(7, "search")
        assert derive_seed(7, "plan") != derive_seed(8, "plan")


class TestConfig:
    def test_validation(self, tmp_path):
        with pytest.raises(ConfigurationError):
            make_config(tmp_path, algorithm="annealing")
        with pytest.raises(ConfigurationError):
            make_config(tmp_path, budget=0)
        with pytest.raises(ConfigurationError):
            make_config(tmp_path, seeds=(1, 1))
        with pytest.raises(ConfigurationError):
            make_config(tmp_path, seeds=(1, 2, 3))  # n_runs is 2

    def test_default_seeds(self, tmp_path):
        assert make_config(tmp_path).seeds == (1, 2)

    def test_from_toml(self, tmp_path):
        path = tmp_path / "exp.toml"
        path.write_text(
            "[evaluator]\n"
            'kind = "synthetic"\n'
            "m = 4\n"
            "[search]\n"
            'algorithm = "ls"\n'
            'setup = "cv"\n'
            "budget = 750\n"
            "n_runs = 3\n"
            "seeds = [11, 12, 13]\n"
            "[output]\n"
            f'directory = "{tmp_path / "out"}"\n'
        )
        config = ExperimentConfig.from_toml(path)
        assert config.algorithm == "ls"
        assert config.setup is SetupKind.CV
        assert config.budget == 750
        assert config.seeds == (11, 12, 13)
        assert config.evaluator_options == {"m": 4}

    def test_from_toml_missing_section(self, tmp_path):
        path = tmp_path / "broken.toml"
        path.write_text('[search]\nalgorithm = "ls"\n')
        with pytest.raises(ConfigurationError):
            ExperimentConfig.from_toml(path)

    def test_build_unknown_evaluator(self, tmp_path):
        config = make_config(tmp_path, evaluator_kind="oracle")
        with pytest.raises(ConfigurationError):
            config.build_evaluator()


class TestBestOfHistory:
    def test_sorted_and_capped(self):
        rng = random.Random(1)
        history = [(random_genotype(rng), rng.random()) for _ in range(30)]
        best = best_of_history(history, 5)
        assert len(best) == 5
        assert [f for _, f in best] == sorted((f for _, f in best), reverse=True)
        assert best[0][1] == max(f for _, f in history)

    def test_dedupes_by_repaired_genotype(self):
        a = Genotype(tuple([2] + [0] * 11), (0,) * 12)  # repairs to all-normal
        b = Genotype((0,) * 12, (0,) * 12)
        history = [(a, 0.9), (b, 0.8)]
        best = best_of_history(history, 5)
        assert best == [(a, 0.9)]

    def test_shorter_history_returned_whole(self):
        g = Genotype((0,) * 12, (0,) * 12)
        assert best_of_history([(g, 0.5)], 5) == [(g, 0.5)]


class TestExecuteRun:
    def test_budget_respected_and_exhausted(self, tmp_path):
        config = make_config(tmp_path, setup=SetupKind.CV, budget=23)
        result, archive = execute_run(config, seed=1)
        # 23 // 5 evaluations of 5 fresh trainings each, then stop
        assert result.consumed <= 23
        assert archive.n_trainings == result.consumed
        assert result.n_evaluations >= result.consumed // 5

    def test_reproducible(self, tmp_path):
        config = make_config(tmp_path)
        r1, a1 = execute_run(config, seed=4)
        r2, a2 = execute_run(config, seed=4)
        assert r1.to_doc() == r2.to_doc()
        assert a1.to_jsonl() == a2.to_jsonl()

    def test_seed_changes_run(self, tmp_path):
        config = make_config(tmp_path)
        r1, _ = execute_run(config, seed=1)
        r2, _ = execute_run(config, seed=2)
        assert r1.to_doc() != r2.to_doc()


class TestRunExperiment:
    def test_outputs_on_disk(self, tmp_path):
        config = make_config(tmp_path)
        results = run_experiment(config)
        assert len(results) == 2
        for seed in (1, 2):
            run_dir = config.output_dir / f"run_{seed}"
            assert (run_dir / "archive.jsonl").exists()
            doc = json.loads((run_dir / "result.json").read_text())
            assert doc["seed"] == seed
            assert doc["consumed"] <= config.budget
        meta = json.loads((config.output_dir / "cell.json").read_text())
        assert meta["algorithm"] == "random"
        assert meta["evaluator"]["kind"] == "synthetic"

    def test_byte_identical_across_invocations(self, tmp_path):
        out_a = run_experiment(make_config(tmp_path, output_dir=tmp_path / "a"))
        out_b = run_experiment(make_config(tmp_path, output_dir=tmp_path / "b"))
        assert [r.to_doc() for r in out_a] == [r.to_doc() for r in out_b]
        for rel in ("cell.json", "run_1/result.json", "run_1/archive.jsonl"):
            assert (tmp_path / "a" / rel).read_bytes() == (
                tmp_path / "b" / rel
            ).read_bytes()

    def test_load_round_trip(self, tmp_path):
        config = make_config(tmp_path)
        results = run_experiment(config)
        loaded = load_results(config.output_dir)
        assert [r.to_doc() for r in loaded] == [r.to_doc() for r in results]

    def test_find_and_load_cells(self, tmp_path):
        run_experiment(make_config(tmp_path, output_dir=tmp_path / "r" / "c1"))
        run_experiment(
            make_config(
                tmp_path, output_dir=tmp_path / "r" / "c2", setup=SetupKind.CV,
                budget=40,
            )
        )
        assert len(find_cells(tmp_path / "r")) == 2
        cells = load_cells(tmp_path / "r")
        assert set(cells) == {("random", "1fold", 30), ("random", "cv", 40)}
        # a cell dir is also accepted directly
        assert find_cells(tmp_path / "r" / "c1") == [tmp_path / "r" / "c1"]


class TestReevaluate:
    def test_fills_all_best_and_is_idempotent(self, tmp_path):
        config = make_config(tmp_path)
        results = run_experiment(config)
        evaluator = config.build_evaluator()
        reevaluate(results, evaluator, config.holdout_pool, config.search_pool)
        first = [dict(r.independent) for r in results]
        for result in results:
            assert set(result.independent) == {g.to_text() for g, _ in result.best}
            for q in result.independent.values():
                assert 0.0 <= q <= 1.0
        reevaluate(results, evaluator, config.holdout_pool, config.search_pool)
        assert [dict(r.independent) for r in results] == first

    def test_overlapping_pools_rejected(self, tmp_path):
        config = make_config(tmp_path)
        results = run_experiment(config)
        with pytest.raises(ConfigurationError):
            reevaluate(results, config.build_evaluator(),
                       config.search_pool, config.search_pool)

    def test_reevaluate_cell_persists(self, tmp_path):
        config = make_config(tmp_path)
        run_experiment(config)
        results = reevaluate_cell(config.output_dir)
        loaded = load_results(config.output_dir)
        assert [r.to_doc() for r in loaded] == [r.to_doc() for r in results]
        assert all(r.independent for r in loaded)


def _reevaluated_cells(tmp_path, setups=(SetupKind.ONE_FOLD, SetupKind.CV)):
    root = tmp_path / "grid"
    for setup in setups:
        config = make_config(
            tmp_path, output_dir=root / setup.value, setup=setup, budget=60
        )
        run_experiment(config)
        reevaluate_cell(config.output_dir)
    return root, load_cells(root)


class TestReports:
    def test_summary_table(self, tmp_path):
        _, cells = _reevaluated_cells(tmp_path)
        table = summarize(cells)
        lines = table.strip().split("\n")
        assert lines[0].startswith("algorithm,setup,budget,n_points")
        assert len(lines) == 3
        assert "random,1fold,60" in lines[1]

    def test_empty_cell_flagged(self):
        empty = RunResult(1, "ls", SetupKind.CV, 10, 0, 0, [], failed="boom")
        table = summarize({("ls", "cv", 10): [empty]})
        assert "failed_runs" in table

    def test_trajectory_sorted_by_budget(self, tmp_path):
        _, cells = _reevaluated_cells(tmp_path)
        table = trajectory_table(cells)
        budgets = [
            int(line.split(",")[0])
            for line in table.strip().split("\n")[1:]
        ]
        assert budgets == sorted(budgets)

    def test_paired_qualities_alignment(self, tmp_path):
        _, cells = _reevaluated_cells(tmp_path)
        a, b = paired_qualities(
            cells[("random", "cv", 60)], cells[("random", "1fold", 60)]
        )
        assert len(a) == len(b) > 0

    def test_paired_qualities_requires_reeval(self, tmp_path):
        config = make_config(tmp_path)
        results = run_experiment(config)
        with pytest.raises(ConfigurationError):
            paired_qualities(results, results)

    def test_compare_setups_table(self, tmp_path):
        _, cells = _reevaluated_cells(tmp_path)
        table = compare_setups(cells, [("cv", "1fold")], m=8)
        lines = table.strip().split("\n")
        assert len(lines) == 2
        row = lines[1].split(",")
        assert row[:4] == ["random", "60", "cv", "1fold"]
        assert 0.0 < float(row[5]) <= 1.0
        assert float(row[6]) >= float(row[5])  # Bonferroni never shrinks p


class TestNoiseAnalysis:
    def test_batch_path_matches_generic_evaluator(self):
        bench = SyntheticBenchmark(SyntheticBenchmarkParams(**FAST_EVALUATOR))
        fast = noise_analysis(bench, n_samples=40)

        def generic(genotype, unit):
            return bench.noisy_score(genotype, unit)

        slow = noise_analysis(generic, n_samples=40)
        assert fast["seed_scores"] == slow["seed_scores"]
        assert fast["partitioning_scores"] == slow["partitioning_scores"]

    def test_report_structure(self):
        bench = SyntheticBenchmark(SyntheticBenchmarkParams(**FAST_EVALUATOR))
        report = noise_analysis(bench, n_samples=30, fraction=0.5)
        assert len(report["genotypes"]) == 30
        assert len(set(report["genotypes"])) == 30
        for key in ("seed_comparison", "partitioning_comparison"):
            stats = report[key]
            assert set(stats) == {"overall_rho", "top_fraction_rho", "argmax_disagrees"}

    def test_genotypes_already_repaired(self):
        bench = SyntheticBenchmark(SyntheticBenchmarkParams(**FAST_EVALUATOR))
        report = noise_analysis(bench, n_samples=20)
        for text in report["genotypes"]:
            g = Genotype.from_text(text)
            assert repair(g).genes == g.genes
