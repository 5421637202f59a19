"""Reference external-evaluator worker for the nas-eval/1 protocol."""

from nas_eval_worker.server import WorkerConfig, serve

__all__ = ["WorkerConfig", "serve"]
