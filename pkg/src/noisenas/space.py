"""Architecture search space: genotype encoding, repair, and graph decoding.

An architecture is a sequence of 12 cells. Each cell is described by two
genes: a topology gene (normal / downsampling / upsampling) and a block
gene (identity or one of four non-trivial block families). Cells live on
resolution levels 0..4; level i halves the spatial size and doubles the
channel count i times relative to the stem output.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass

import numpy as np

N_CELLS = 12
MAX_LEVEL = 4
TOPOLOGY_CARDINALITY = 3
BLOCK_CARDINALITY = 5

NORMAL, DOWN, UP = 0, 1, 2

KIND_NAMES = ("normal", "down", "up")
BLOCK_TAGS = ("identity", "vgg", "resnet", "xception", "efficientnet")

# Resampling metadata carried by non-normal cells.
DOWNSAMPLING_OP = "conv_k3_s2"
UPSAMPLING_OP = "transposed_conv_k3"

GENE_CARDINALITIES = (TOPOLOGY_CARDINALITY,) * N_CELLS + (BLOCK_CARDINALITY,) * N_CELLS


@dataclass(frozen=True)
class Genotype:
    """24-gene encoding of one architecture: 12 topology + 12 block genes."""

    topology: tuple[int, ...]
    blocks: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "topology", tuple(int(g) for g in self.topology))
        object.__setattr__(self, "blocks", tuple(int(g) for g in self.blocks))
        if len(self.topology) != N_CELLS or len(self.blocks) != N_CELLS:
            raise ValueError(
                f"genotype needs {N_CELLS} topology and {N_CELLS} block genes"
            )
        bad_t = [g for g in self.topology if not 0 <= g < TOPOLOGY_CARDINALITY]
        bad_b = [g for g in self.blocks if not 0 <= g < BLOCK_CARDINALITY]
        if bad_t or bad_b:
            raise ValueError(f"gene values out of range: {bad_t + bad_b}")

    @property
    def genes(self) -> tuple[int, ...]:
        return self.topology + self.blocks

    @classmethod
    def from_genes(cls, genes) -> "Genotype":
        genes = tuple(int(g) for g in genes)
        if len(genes) != 2 * N_CELLS:
            raise ValueError(f"expected {2 * N_CELLS} genes, got {len(genes)}")
        return cls(genes[:N_CELLS], genes[N_CELLS:])

    def to_text(self) -> str:
        """Text form: 24 comma-separated integers, topology genes first."""
        return ",".join(str(g) for g in self.genes)

    @classmethod
    def from_text(cls, text: str) -> "Genotype":
        return cls.from_genes(int(p) for p in text.strip().split(","))


@dataclass(frozen=True)
class LevelTrace:
    """Output level of every cell plus the positions whose move was illegal."""

    levels: tuple[int, ...]
    infeasible_positions: frozenset[int] = frozenset()

    @property
    def feasible(self) -> bool:
        return not self.infeasible_positions

    def input_level(self, i: int) -> int:
        """Input level of cell i (= output level of cell i-1, stem is 0)."""
        return 0 if i == 0 else self.levels[i - 1]


@dataclass(frozen=True)
class CellSpec:
    index: int
    kind: str  # "normal" | "down" | "up"
    block_tag: str
    input_level: int
    output_level: int
    skip_from: int | None = None
    resampling: str | None = None
    # output tensor shape at this cell's level: (channels, width, height)
    shape: tuple[int, int, int] | None = None

    @property
    def has_skip(self) -> bool:
        return self.skip_from is not None


@dataclass(frozen=True)
class ArchitectureGraph:
    cells: tuple[CellSpec, ...]
    skip_edges: tuple[tuple[int, int], ...]
    stem_channels: int = 32
    input_width: int = 128
    input_height: int = 128


def decode_levels(topology_genes) -> LevelTrace:
    """Trace cell levels left to right from the stem (level 0).

    A gene demanding a level below 0 or above MAX_LEVEL is recorded as
    infeasible and treated as normal so the trace can continue.
    """
    genes = tuple(int(g) for g in topology_genes)
    if len(genes) != N_CELLS:
        raise ValueError(f"expected {N_CELLS} topology genes")
    levels = []
    infeasible = set()
    level = 0
    for i, g in enumerate(genes):
        if g == DOWN and level < MAX_LEVEL:
            level += 1
        elif g == UP and level > 0:
            level -= 1
        elif g != NORMAL:
            infeasible.add(i)
        levels.append(level)
    return LevelTrace(tuple(levels), frozenset(infeasible))


def repair(genotype: Genotype) -> Genotype:
    """Replace illegal down/up genes with normal in one left-to-right pass.

    Block genes are untouched. Feasible genotypes come back unchanged and
    the operation is idempotent.
    """
    trace = decode_levels(genotype.topology)
    if trace.feasible:
        return genotype
    fixed = tuple(
        NORMAL if i in trace.infeasible_positions else g
        for i, g in enumerate(genotype.topology)
    )
    return Genotype(fixed, genotype.blocks)


def repair_topologies(vectors: np.ndarray) -> np.ndarray:
    """Vectorized repair of a (n, 12) array of topology vectors."""
    v = np.asarray(vectors, dtype=np.int64)
    out = v.copy()
    level = np.zeros(len(v), dtype=np.int64)
    for i in range(N_CELLS):
        g = out[:, i]
        bad = ((g == DOWN) & (level >= MAX_LEVEL)) | ((g == UP) & (level <= 0))
        out[bad, i] = NORMAL
        level = level + (out[:, i] == DOWN).astype(np.int64)
        level = level - (out[:, i] == UP).astype(np.int64)
    return out


def derive_skips(trace: LevelTrace) -> list[tuple[int, int]]:
    """Skip edges for a feasible trace.

    Cell i receives a skip from the latest cell j <= i-2 whose output
    level equals cell i's input level; at most one skip per cell. The
    stem is never a skip source.
    """
    if not trace.feasible:
        raise ValueError("skips are only defined for feasible traces")
    edges = []
    for i in range(1, N_CELLS):
        want = trace.input_level(i)
        for j in range(i - 2, -1, -1):
            if trace.levels[j] == want:
                edges.append((j, i))
                break
    return edges


def build_graph(
    genotype: Genotype,
    stem_channels: int = 32,
    input_width: int = 128,
    input_height: int = 128,
) -> ArchitectureGraph:
    """Decode a genotype (repairing it first) into an architecture graph."""
    repaired = repair(genotype)
    trace = decode_levels(repaired.topology)
    skips = derive_skips(trace)
    skip_for = {target: source for source, target in skips}
    cells = []
    for i in range(N_CELLS):
        kind = KIND_NAMES[repaired.topology[i]]
        out_level = trace.levels[i]
        resampling = None
        if kind == "down":
            resampling = DOWNSAMPLING_OP
        elif kind == "up":
            resampling = UPSAMPLING_OP
        cells.append(
            CellSpec(
                index=i,
                kind=kind,
                block_tag=BLOCK_TAGS[repaired.blocks[i]],
                input_level=trace.input_level(i),
                output_level=out_level,
                skip_from=skip_for.get(i),
                resampling=resampling,
                shape=level_shape(out_level, stem_channels, input_width, input_height),
            )
        )
    return ArchitectureGraph(
        cells=tuple(cells),
        skip_edges=tuple(skips),
        stem_channels=stem_channels,
        input_width=input_width,
        input_height=input_height,
    )


def level_shape(
    level: int, stem_channels: int, input_width: int, input_height: int
) -> tuple[int, int, int]:
    """Feature-map shape at a level: (D * 2^i, W' / 2^i, H' / 2^i)."""
    return (
        stem_channels * 2**level,
        input_width // 2**level,
        input_height // 2**level,
    )


def random_genotype(rng: random.Random) -> Genotype:
    """Uniform sample over the raw (possibly infeasible) genotype space."""
    topology = tuple(rng.randrange(TOPOLOGY_CARDINALITY) for _ in range(N_CELLS))
    blocks = tuple(rng.randrange(BLOCK_CARDINALITY) for _ in range(N_CELLS))
    return Genotype(topology, blocks)


def count_feasible_topologies(n_cells: int = N_CELLS) -> int:
    """Number of topology vectors whose decode has no infeasible position.

    Dynamic program over (position, level).
    """
    counts = {0: 1}
    for _ in range(n_cells):
        nxt: dict[int, int] = {}
        for level, c in counts.items():
            nxt[level] = nxt.get(level, 0) + c  # normal
            if level < MAX_LEVEL:
                nxt[level + 1] = nxt.get(level + 1, 0) + c  # down
            if level > 0:
                nxt[level - 1] = nxt.get(level - 1, 0) + c  # up
        counts = nxt
    return sum(counts.values())


def serialize_graph(graph: ArchitectureGraph) -> str:
    """Canonical JSON for a graph; byte-stable for identical graphs."""
    doc = {
        "n_cells": len(graph.cells),
        "stem_channels": graph.stem_channels,
        "input_size": [graph.input_width, graph.input_height],
        "cells": [
            {
                "index": c.index,
                "kind": c.kind,
                "block": c.block_tag,
                "in_level": c.input_level,
                "out_level": c.output_level,
                "skip_from": c.skip_from,
            }
            for c in graph.cells
        ],
        "skips": [list(edge) for edge in graph.skip_edges],
    }
    return json.dumps(doc, sort_keys=True, separators=(",", ":"))


def parse_graph(text: str) -> ArchitectureGraph:
    doc = json.loads(text)
    width, height = doc.get("input_size", [128, 128])
    stem = doc["stem_channels"]
    cells = []
    for c in doc["cells"]:
        kind = c["kind"]
        resampling = None
        if kind == "down":
            resampling = DOWNSAMPLING_OP
        elif kind == "up":
            resampling = UPSAMPLING_OP
        cells.append(
            CellSpec(
                index=c["index"],
                kind=kind,
                block_tag=c["block"],
                input_level=c["in_level"],
                output_level=c["out_level"],
                skip_from=c["skip_from"],
                resampling=resampling,
                shape=level_shape(c["out_level"], stem, width, height),
            )
        )
    return ArchitectureGraph(
        cells=tuple(cells),
        skip_edges=tuple(tuple(edge) for edge in doc["skips"]),
        stem_channels=stem,
        input_width=width,
        input_height=height,
    )
