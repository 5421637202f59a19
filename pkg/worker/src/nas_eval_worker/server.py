"""Single-threaded nas-eval/1 request loop over stdin/stdout.

Protocol (JSON lines):
  handshake (first output line): {"protocol": "nas-eval/1", "name": ...}
  request:  {"id": 1, "genotype": [... 24 ints], "partitioning": 0,
             "fold": 2, "seed": 5}
  response: {"id": 1, "score": 0.7213}  or  {"id": 1, "error": "message"}

A malformed request produces an error response carrying the same id
(null when no id could be read) and the loop continues; the worker only
exits when its input closes. Every response is a pure function of the
request line and the configuration, including injected failures, which
are decided by hashing the request payload against the configured
probability rather than by sampling.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import dataclass
from typing import TextIO

from nas_eval_worker import hashing
from nas_eval_worker.objectives import GENE_CARDINALITIES, OBJECTIVES

PROTOCOL_NAME = "nas-eval/1"


@dataclass(frozen=True)
class WorkerConfig:
    objective: str = "echo-synthetic"
    latency_ms: float = 0.0
    failure_probability: float = 0.0
    name: str = "nas-eval-worker"

    def __post_init__(self):
        if self.objective not in OBJECTIVES:
            raise ValueError(
                f"unknown objective {self.objective!r}; "
                f"expected one of {sorted(OBJECTIVES)}"
            )
        if self.latency_ms < 0:
            raise ValueError("latency_ms must be non-negative")
        if not 0.0 <= self.failure_probability <= 1.0:
            raise ValueError("failure_probability must be in [0, 1]")


class _BadRequest(ValueError):
    pass


def _parse_request(request: dict) -> tuple[tuple[int, ...], int, int, int]:
    try:
        genotype = request["genotype"]
        partitioning = request["partitioning"]
        fold = request["fold"]
        seed = request["seed"]
    except KeyError as exc:
        raise _BadRequest(f"missing field {exc.args[0]!r}") from exc
    if not isinstance(genotype, list) or len(genotype) != len(GENE_CARDINALITIES):
        raise _BadRequest(
            f"genotype must be a list of {len(GENE_CARDINALITIES)} integers"
        )
    genes = []
    for i, (g, card) in enumerate(zip(genotype, GENE_CARDINALITIES)):
        if not isinstance(g, int) or isinstance(g, bool) or not 0 <= g < card:
            raise _BadRequest(f"gene {i} must be an integer in [0, {card})")
        genes.append(g)
    for field_name, value in (
        ("partitioning", partitioning),
        ("fold", fold),
        ("seed", seed),
    ):
        if not isinstance(value, int) or isinstance(value, bool) or value < 0:
            raise _BadRequest(f"{field_name} must be a non-negative integer")
    return tuple(genes), partitioning, fold, seed


def _handle_line(line: str, config: WorkerConfig) -> dict:
    request_id = None
    try:
        try:
            request = json.loads(line)
        except json.JSONDecodeError as exc:
            raise _BadRequest(f"request is not valid JSON: {exc}") from exc
        if not isinstance(request, dict):
            raise _BadRequest("request is not a JSON object")
        request_id = request.get("id")
        genes, partitioning, fold, seed = _parse_request(request)
    except _BadRequest as exc:
        return {"id": request_id, "error": str(exc)}
    if config.failure_probability > 0.0:
        u = hashing.hash_uniform("failure", (*genes, partitioning, fold, seed))
        if u < config.failure_probability:
            return {"id": request_id, "error": "injected failure"}
    score = OBJECTIVES[config.objective](genes, partitioning, fold, seed)
    return {"id": request_id, "score": score}


def serve(stdin: TextIO, stdout: TextIO, config: WorkerConfig) -> int:
    stdout.write(json.dumps({"protocol": PROTOCOL_NAME, "name": config.name}) + "\n")
    stdout.flush()
    for line in stdin:
        line = line.rstrip("\n")
        if config.latency_ms > 0:
            time.sleep(config.latency_ms / 1000.0)
        response = _handle_line(line, config)
        stdout.write(json.dumps(response, sort_keys=True) + "\n")
        stdout.flush()
    return 0


def main(argv: list[str] | None = None) -> None:
    parser = argparse.ArgumentParser(
        description="Reference nas-eval/1 evaluator worker"
    )
    parser.add_argument(
        "--objective",
        default="echo-synthetic",
        choices=sorted(OBJECTIVES),
        help="scoring function answered to requests",
    )
    parser.add_argument(
        "--latency-ms",
        type=float,
        default=0.0,
        help="simulated per-request latency in milliseconds",
    )
    parser.add_argument(
        "--failure-probability",
        type=float,
        default=0.0,
        help="deterministic per-request error-injection probability",
    )
    parser.add_argument(
        "--name", default="nas-eval-worker", help="name reported in the handshake"
    )
    args = parser.parse_args(argv)
    try:
        config = WorkerConfig(
            objective=args.objective,
            latency_ms=args.latency_ms,
            failure_probability=args.failure_probability,
            name=args.name,
        )
    except ValueError as exc:
        parser.error(str(exc))
    sys.exit(serve(sys.stdin, sys.stdout, config))


if __name__ == "__main__":
    main()
