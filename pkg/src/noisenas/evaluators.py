"""Score sources: synthetic noisy benchmark, tabular lookup, external worker.

The synthetic benchmark is a deterministic stand-in for real network
training. Its base fitness is an additive landscape (mean of table
lookups over small gene subsets) and its per-training-unit noise mimics
the seed/split variance seen in real runs: strong rank agreement over
the whole space together with near-random ranking among the best
architectures.
"""

from __future__ import annotations

import json
import subprocess
import selectors
from dataclasses import dataclass

import numpy as np

from noisenas import hashing
from noisenas.evaluation import TrainingUnit
from noisenas.space import GENE_CARDINALITIES, Genotype

PROTOCOL_NAME = "nas-eval/1"

_N_GENES = len(GENE_CARDINALITIES)


@dataclass(frozen=True)
class SyntheticBenchmarkParams:
    """Knobs for the synthetic benchmark.

    The defaults are calibrated so the noise magnitude matches the
    spread of the top fitness quintile: the regime where single-training
    evaluation produces rank inversions among good architectures while
    whole-space ranking stays reliable. `table_skew` > 1 skews table
    entries toward the top of [0, table_scale], compressing the upper
    end of the base-fitness distribution as real benchmarks do;
    `table_scale` < 1 keeps noisy scores clear of the clamp at 1.
    """

    benchmark_seed: int = 0
    k: int = 3
    m: int = 8
    sigma_seed: float = 0.08
    sigma_fold: float = 0.016
    sigma_interaction: float = 0.04
    table_skew: float = 16.0
    table_scale: float = 0.85

    def __post_init__(self):
        if min(self.sigma_seed, self.sigma_fold, self.sigma_interaction) < 0:
            raise ValueError("noise magnitudes must be non-negative")
        if not 0 < self.table_scale <= 1:
            raise ValueError("table_scale must be in (0, 1]")
        if not (1 <= self.k <= _N_GENES and self.m >= 1):
            raise ValueError("need 1 <= k <= 24 and m >= 1")


def _subfunction_subsets(params: SyntheticBenchmarkParams) -> list[tuple[int, ...]]:
    """k-gene subsets per subfunction, drawn by hash from the benchmark seed.

    Partial Fisher-Yates over the gene indices, one shuffle per
    subfunction, consuming one hashed uniform per swap.
    """
    subsets = []
    for j in range(params.m):
        idx = list(range(_N_GENES))
        for t in range(params.k):
            u = hashing.hash_uniform("subset", (params.benchmark_seed, j, t))
            swap = t + int(u * (_N_GENES - t))
            idx[t], idx[swap] = idx[swap], idx[t]
        subsets.append(tuple(idx[: params.k]))
    return subsets


def _subfunction_tables(
    params: SyntheticBenchmarkParams, subsets: list[tuple[int, ...]]
) -> list[np.ndarray]:
    """Lookup table per subfunction; entries skewed toward the top of
    [0, table_scale], keeping noisy scores clear of the clamp at 1."""
    tables = []
    for j, subset in enumerate(subsets):
        dims = tuple(GENE_CARDINALITIES[g] for g in subset)
        flat = []
        for idx in range(int(np.prod(dims))):
            u = hashing.hash_uniform("table", (params.benchmark_seed, j, idx))
            flat.append(params.table_scale * (1.0 - (1.0 - u) ** params.table_skew))
        tables.append(np.array(flat, dtype=np.float64).reshape(dims))
    return tables


class SyntheticBenchmark:
    """Deterministic noisy benchmark; pure function of (genotype, unit)."""

    def __init__(self, params: SyntheticBenchmarkParams | None = None):
        self.params = params or SyntheticBenchmarkParams()
        self.subsets = _subfunction_subsets(self.params)
        self.tables = _subfunction_tables(self.params, self.subsets)

    def base_fitness(self, genotype: Genotype) -> float:
        """Noise-free architecture quality; the quantity searches should find."""
        genes = genotype.genes
        total = 0.0
        for subset, table in zip(self.subsets, self.tables):
            total += float(table[tuple(genes[g] for g in subset)])
        return total / self.params.m

    def noisy_score(self, genotype: Genotype, unit: TrainingUnit) -> float:
        p = self.params
        genes = genotype.genes
        z_seed = hashing.hash_normal("seed", (p.benchmark_seed, *genes, unit.seed))
        z_fold = hashing.hash_normal(
            "fold", (p.benchmark_seed, *genes, unit.partitioning, unit.fold)
        )
        z_int = hashing.hash_normal(
            "interaction",
            (p.benchmark_seed, *genes, unit.seed, unit.partitioning, unit.fold),
        )
        score = (
            self.base_fitness(genotype)
            + p.sigma_seed * z_seed
            + p.sigma_fold * z_fold
            + p.sigma_interaction * z_int
        )
        return min(1.0, max(0.0, score))

    # evaluator protocol used by evaluate_fitness
    __call__ = noisy_score

    def base_fitness_batch(self, genes: np.ndarray) -> np.ndarray:
        """Vectorized base fitness for a (n, 24) gene array."""
        g = np.asarray(genes, dtype=np.int64)
        total = np.zeros(len(g), dtype=np.float64)
        for subset, table in zip(self.subsets, self.tables):
            total = total + table[tuple(g[:, i] for i in subset)]
        return total / self.params.m

    def noisy_score_batch(
        self, genes: np.ndarray, partitioning: int, fold: int, seed: int
    ) -> np.ndarray:
        """Vectorized noisy score of many genotypes under one unit slot."""
        p = self.params
        g = np.asarray(genes, dtype=np.int64)
        n = len(g)
        bench = np.full((n, 1), p.benchmark_seed)
        col = lambda v: np.full((n, 1), v)
        z_seed = hashing.hash_normal_batch("seed", np.hstack([bench, g, col(seed)]))
        z_fold = hashing.hash_normal_batch(
            "fold", np.hstack([bench, g, col(partitioning), col(fold)])
        )
        z_int = hashing.hash_normal_batch(
            "interaction",
            np.hstack([bench, g, col(seed), col(partitioning), col(fold)]),
        )
        score = (
            self.base_fitness_batch(g)
            + p.sigma_seed * z_seed
            + p.sigma_fold * z_fold
            + p.sigma_interaction * z_int
        )
        return np.clip(score, 0.0, 1.0)


class MissingEntry(KeyError):
    pass


class TabularBenchmark:
    """Exact lookup of precomputed unit scores loaded from a JSON-lines file."""

    def __init__(self, scores: dict[tuple, float]):
        self._scores = dict(scores)

    @classmethod
    def from_jsonl(cls, text: str) -> "TabularBenchmark":
        scores = {}
        for line in text.splitlines():
            if not line.strip():
                continue
            e = json.loads(line)
            if "training_index" not in e:
                continue
            key = (
                tuple(e["repaired"]),
                e["partitioning"],
                e["fold"],
                e["seed"],
            )
            scores[key] = float(e["score"])
        return cls(scores)

    def __call__(self, genotype: Genotype, unit: TrainingUnit) -> float:
        key = (genotype.genes, unit.partitioning, unit.fold, unit.seed)
        if key not in self._scores:
            raise MissingEntry(str(key))
        return self._scores[key]


class ProtocolError(RuntimeError):
    pass


class EvaluatorFailure(RuntimeError):
    pass


class EvaluatorTimeout(EvaluatorFailure):
    pass


class ExternalEvaluator:
    """Client for an external trainer speaking the nas-eval/1 protocol.

    The transport exposes `send_line(str)` and `receive_line(timeout)
    -> str | None`; one request is in flight per connection.
    """

    def __init__(self, transport, timeout: float = 3600.0):
        self.transport = transport
        self.timeout = timeout
        self._next_id = 1
        self.worker_name = None
        self._handshake()

    def _handshake(self) -> None:
        line = self.transport.receive_line(self.timeout)
        if line is None:
            raise EvaluatorTimeout("no handshake from worker")
        try:
            hello = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ProtocolError(f"malformed handshake: {line!r}") from exc
        if hello.get("protocol") != PROTOCOL_NAME:
            raise ProtocolError(f"unsupported protocol: {hello.get('protocol')!r}")
        self.worker_name = hello.get("name")

    def __call__(self, genotype: Genotype, unit: TrainingUnit) -> float:
        request_id = self._next_id
        self._next_id += 1
        request = {
            "id": request_id,
            "genotype": list(genotype.genes),
            "partitioning": unit.partitioning,
            "fold": unit.fold,
            "seed": unit.seed,
        }
        self.transport.send_line(json.dumps(request, sort_keys=True))
        line = self.transport.receive_line(self.timeout)
        if line is None:
            raise EvaluatorTimeout(f"no response to request {request_id}")
        try:
            response = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ProtocolError(f"malformed response: {line!r}") from exc
        if response.get("id") != request_id:
            raise ProtocolError(
                f"response id {response.get('id')} != request id {request_id}"
            )
        if "error" in response:
            raise EvaluatorFailure(str(response["error"]))
        score = response.get("score")
        if not isinstance(score, (int, float)) or not 0.0 <= score <= 1.0:
            raise ProtocolError(f"score outside [0, 1]: {score!r}")
        return float(score)


class SubprocessTransport:
    """Line transport over a worker subprocess's stdin/stdout."""

    def __init__(self, command: list[str]):
        self.process = subprocess.Popen(
            command,
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            text=True,
            bufsize=1,
        )
        self._selector = selectors.DefaultSelector()
        self._selector.register(self.process.stdout, selectors.EVENT_READ)

    def send_line(self, line: str) -> None:
        self.process.stdin.write(line + "\n")
        self.process.stdin.flush()

    def receive_line(self, timeout: float) -> str | None:
        if not self._selector.select(timeout):
            return None
        line = self.process.stdout.readline()
        return line.rstrip("\n") if line else None

    def close(self) -> None:
        self._selector.close()
        if self.process.stdin:
            self.process.stdin.close()
        self.process.wait(timeout=10)


class LoopbackTransport:
    """In-process mock transport: requests answered by a handler callable."""

    def __init__(self, handler, name: str = "loopback"):
        self.handler = handler
        self._outbox = [json.dumps({"protocol": PROTOCOL_NAME, "name": name})]

    def send_line(self, line: str) -> None:
        self._outbox.append(self.handler(line))

    def receive_line(self, timeout: float) -> str | None:
        return self._outbox.pop(0) if self._outbox else None
