"""Deterministic toy objectives answered by the worker.

`echo-synthetic` reimplements the engine's synthetic noisy benchmark
from the shared hash specification, so a request scored here is
bit-identical to the engine scoring it in process. All constants below
are pinned to the engine's defaults and must not drift.

`toy-threshold-segmenter` is a self-contained stand-in for a real
trainer: it thresholds a hashed synthetic intensity volume at a level
derived from the genotype and reports the Dice overlap with a hashed
ground-truth mask. It is a pure function of (genotype, unit) with
scores in [0, 1].
"""

from __future__ import annotations

from collections.abc import Sequence

from nas_eval_worker import hashing

N_CELLS = 12
GENE_CARDINALITIES = (3,) * N_CELLS + (5,) * N_CELLS
N_GENES = len(GENE_CARDINALITIES)

# Synthetic-benchmark constants, pinned to the engine's defaults.
BENCHMARK_SEED = 0
SUBSET_SIZE = 3
N_SUBFUNCTIONS = 8
SIGMA_SEED = 0.08
SIGMA_FOLD = 0.016
SIGMA_INTERACTION = 0.04
TABLE_SKEW = 16.0
TABLE_SCALE = 0.85


def _subfunction_subsets() -> list[tuple[int, ...]]:
    """Gene subsets per subfunction: one hashed partial Fisher-Yates each."""
    subsets = []
    for j in range(N_SUBFUNCTIONS):
        idx = list(range(N_GENES))
        for t in range(SUBSET_SIZE):
            u = hashing.hash_uniform("subset", (BENCHMARK_SEED, j, t))
            swap = t + int(u * (N_GENES - t))
            idx[t], idx[swap] = idx[swap], idx[t]
        subsets.append(tuple(idx[:SUBSET_SIZE]))
    return subsets


def _subfunction_tables(subsets: list[tuple[int, ...]]) -> list[list[float]]:
    """Flat row-major lookup table per subfunction, entries in [0, TABLE_SCALE]."""
    tables = []
    for j, subset in enumerate(subsets):
        size = 1
        for g in subset:
            size *= GENE_CARDINALITIES[g]
        flat = []
        for idx in range(size):
            u = hashing.hash_uniform("table", (BENCHMARK_SEED, j, idx))
            flat.append(TABLE_SCALE * (1.0 - (1.0 - u) ** TABLE_SKEW))
        tables.append(flat)
    return tables


_SUBSETS = _subfunction_subsets()
_TABLES = _subfunction_tables(_SUBSETS)


def _base_fitness(genes: Sequence[int]) -> float:
    total = 0.0
    for subset, table in zip(_SUBSETS, _TABLES):
        flat_index = 0
        for g in subset:
            flat_index = flat_index * GENE_CARDINALITIES[g] + genes[g]
        total += table[flat_index]
    return total / N_SUBFUNCTIONS


def synthetic_score(
    genes: Sequence[int], partitioning: int, fold: int, seed: int
) -> float:
    """Noisy benchmark score, bit-identical to the engine's evaluator."""
    z_seed = hashing.hash_normal("seed", (BENCHMARK_SEED, *genes, seed))
    z_fold = hashing.hash_normal("fold", (BENCHMARK_SEED, *genes, partitioning, fold))
    z_int = hashing.hash_normal(
        "interaction", (BENCHMARK_SEED, *genes, seed, partitioning, fold)
    )
    score = (
        _base_fitness(genes)
        + SIGMA_SEED * z_seed
        + SIGMA_FOLD * z_fold
        + SIGMA_INTERACTION * z_int
    )
    return min(1.0, max(0.0, score))


_N_VOXELS = 96


def segmenter_score(
    genes: Sequence[int], partitioning: int, fold: int, seed: int
) -> float:
    """Dice overlap of a hashed toy volume thresholded by the genotype.

    The ground truth depends on the data split (partitioning, fold); the
    intensities additionally depend on the training seed; the decision
    threshold depends on the block genes. Foreground intensities sit in
    [0.4, 1.0] and background in [0.0, 0.6], so thresholds in the
    genotype-reachable range [0.3, 0.7] trade precision against recall.
    """
    threshold = 0.3 + 0.4 * sum(genes[N_CELLS:]) / (4 * N_CELLS)
    overlap = truth_size = predicted_size = 0
    for v in range(_N_VOXELS):
        truth = hashing.hash_uniform("segmenter-truth", (partitioning, fold, v)) < 0.5
        u = hashing.hash_uniform(
            "segmenter-intensity", (partitioning, fold, seed, v)
        )
        intensity = 0.4 + 0.6 * u if truth else 0.6 * u
        predicted = intensity >= threshold
        truth_size += truth
        predicted_size += predicted
        overlap += truth and predicted
    if truth_size + predicted_size == 0:
        return 1.0
    return 2.0 * overlap / (truth_size + predicted_size)


OBJECTIVES = {
    "echo-synthetic": synthetic_score,
    "toy-threshold-segmenter": segmenter_score,
}
