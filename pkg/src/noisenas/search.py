"""Budget-driven search algorithms over the raw genotype space.

All algorithms maximize an opaque genotype -> fitness callable. They
operate on raw (possibly infeasible) genotypes; repair happens inside
the fitness function, for evaluation only. A search run ends when the
fitness function raises BudgetExhausted or an optional evaluation cap
is reached.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field

import numpy as np

from noisenas.evaluation import BudgetExhausted
from noisenas.space import GENE_CARDINALITIES, Genotype, random_genotype

N_GENES = len(GENE_CARDINALITIES)


class _EvalCapReached(Exception):
    pass


@dataclass
class SearchState:
    """History and incumbent of one search run."""

    rng_seed: int | None = None
    history: list[tuple[Genotype, float]] = field(default_factory=list)
    best_genotype: Genotype | None = None
    best_fitness: float = -math.inf

    @property
    def n_evaluations(self) -> int:
        return len(self.history)


class _Evaluations:
    """Memoizing eval wrapper shared by all algorithms.

    Each distinct raw genotype is evaluated once per run and appended to
    the history; repeats return the memoized fitness for free.
    """

    def __init__(self, eval_fn, state: SearchState, max_evals: int | None):
        self.eval_fn = eval_fn
        self.state = state
        self.max_evals = max_evals
        self.cache: dict[tuple[int, ...], float] = {}

    def seen(self, genotype: Genotype) -> bool:
        return genotype.genes in self.cache

    def __call__(self, genotype: Genotype) -> float:
        key = genotype.genes
        if key in self.cache:
            return self.cache[key]
        if self.max_evals is not None and len(self.state.history) >= self.max_evals:
            raise _EvalCapReached
        fitness = self.eval_fn(genotype)
        self.cache[key] = fitness
        self.state.history.append((genotype, fitness))
        if fitness > self.state.best_fitness:
            self.state.best_fitness = fitness
            self.state.best_genotype = genotype
        return fitness


def _run(loop, eval_fn, rng_seed, max_evals):
    state = SearchState(rng_seed=rng_seed)
    evals = _Evaluations(eval_fn, state, max_evals)
    rng = random.Random(rng_seed)
    try:
        loop(evals, rng)
    except (BudgetExhausted, _EvalCapReached):
        pass
    return state


def _gene_values(i: int) -> range:
    return range(GENE_CARDINALITIES[i])


def _with_gene(genotype: Genotype, i: int, value: int) -> Genotype:
    genes = list(genotype.genes)
    genes[i] = value
    return Genotype.from_genes(genes)


def random_search(eval_fn, rng_seed: int, max_evals: int | None = None) -> SearchState:
    """Uniform sampling of raw genotypes until the budget runs out."""

    def loop(evals, rng):
        while True:
            evals(random_genotype(rng))

    return _run(loop, eval_fn, rng_seed, max_evals)


def _ls_sweep(genotype, fitness, evals, rng):
    """One greedy pass over the variables in a fresh random order.

    For each variable, all alternative values are evaluated and the best
    is kept; ties keep the current value. Returns the possibly improved
    solution and whether any strict improvement happened.
    """
    improved = False
    order = list(range(N_GENES))
    rng.shuffle(order)
    for i in order:
        best_v, best_f = genotype.genes[i], fitness
        for v in _gene_values(i):
            if v == genotype.genes[i]:
                continue
            f = evals(_with_gene(genotype, i, v))
            if f > best_f:
                best_v, best_f = v, f
        if best_v != genotype.genes[i]:
            genotype, fitness, improved = _with_gene(genotype, i, best_v), best_f, True
    return genotype, fitness, improved


def local_search(eval_fn, rng_seed: int, max_evals: int | None = None) -> SearchState:
    """Greedy per-variable search with restarts after convergence."""

    def loop(evals, rng):
        while True:
            genotype = random_genotype(rng)
            fitness = evals(genotype)
            improved = True
            while improved:
                genotype, fitness, improved = _ls_sweep(genotype, fitness, evals, rng)

    return _run(loop, eval_fn, rng_seed, max_evals)


# ---------------------------------------------------------------------------
# GOMEA

@dataclass(frozen=True)
class LinkageModel:
    """Family of variable-index subsets (FOS) learned from a population."""

    fos: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        full = tuple(range(N_GENES))
        for subset in self.fos:
            if not subset or tuple(sorted(subset)) == full:
                raise ValueError("FOS subsets must be nonempty and proper")


def _mutual_information(pop: np.ndarray) -> np.ndarray:
    """Pairwise MI over the gene columns of a (n, 24) population array."""
    n, n_vars = pop.shape
    mi = np.zeros((n_vars, n_vars))
    logs = {}

    def entropy(counts):
        p = counts[counts > 0] / n
        return float(-(p * np.log(p)).sum())

    marginal = [entropy(np.bincount(pop[:, i])) for i in range(n_vars)]
    for i in range(n_vars):
        for j in range(i + 1, n_vars):
            joint = np.bincount(pop[:, i] * 8 + pop[:, j])
            mi[i, j] = mi[j, i] = marginal[i] + marginal[j] - entropy(joint)
    return mi


def learn_linkage_tree(population: list[Genotype]) -> LinkageModel:
    """UPGMA linkage tree over pairwise mutual information of the genes.

    FOS = all leaf and internal clusters except the root. A degenerate
    population (all genotypes identical) yields singletons only.
    """
    if len(population) < 2:
        raise ValueError("population size must be >= 2")
    pop = np.array([g.genes for g in population], dtype=np.int64)
    singletons = tuple((i,) for i in range(N_GENES))
    if all(np.all(pop[:, i] == pop[0, i]) for i in range(N_GENES)):
        return LinkageModel(singletons)

    sim = _mutual_information(pop)
    clusters: dict[int, tuple[int, ...]] = {i: (i,) for i in range(N_GENES)}
    fos = list(singletons)
    sizes = {i: 1 for i in range(N_GENES)}
    active = list(range(N_GENES))
    next_id = N_GENES
    # UPGMA similarities between current clusters, keyed by cluster id
    simtab = {
        a: {b: float(sim[a, b]) for b in active if b != a} for a in active
    }
    while len(active) > 2:
        best = None
        for ai, a in enumerate(active):
            for b in active[ai + 1 :]:
                s = simtab[a][b]
                if best is None or s > best[0] + 1e-15:
                    best = (s, a, b)
        _, a, b = best
        merged = tuple(sorted(clusters[a] + clusters[b]))
        clusters[next_id] = merged
        fos.append(merged)
        sizes[next_id] = sizes[a] + sizes[b]
        simtab[next_id] = {}
        for c in active:
            if c in (a, b):
                continue
            s = (sizes[a] * simtab[a][c] + sizes[b] * simtab[b][c]) / (
                sizes[a] + sizes[b]
            )
            simtab[next_id][c] = s
            simtab[c][next_id] = s
        for c in (a, b):
            active.remove(c)
            del simtab[c]
        for c in active:
            simtab[c].pop(a, None)
            simtab[c].pop(b, None)
        active.append(next_id)
        next_id += 1
    return LinkageModel(tuple(fos))


def gom_step(
    solution: Genotype,
    fitness: float,
    model: LinkageModel,
    population: list[tuple[Genotype, float]],
    evals,
    rng,
) -> tuple[Genotype, float, bool]:
    """Gene-pool optimal mixing: donor crossover per FOS subset.

    Subsets are visited in random order; for each, a random donor's
    genes are copied in. Changed genotypes are evaluated and accepted
    when not worse (ties accepted). Returns the resulting solution, its
    fitness, and whether any strict improvement happened.
    """
    improved = False
    order = list(model.fos)
    rng.shuffle(order)
    for subset in order:
        donor, _ = population[rng.randrange(len(population))]
        if all(donor.genes[i] == solution.genes[i] for i in subset):
            continue
        genes = list(solution.genes)
        for i in subset:
            genes[i] = donor.genes[i]
        candidate = Genotype.from_genes(genes)
        f = evals(candidate)
        if f >= fitness:
            if f > fitness:
                improved = True
            solution, fitness = candidate, f
    return solution, fitness, improved


class _Pyramid:
    """Levelled populations with monotone level maxima.

    Adding a solution to a level propagates it upward while it beats the
    next level's best, which keeps max fitness non-decreasing with
    height.
    """

    def __init__(self):
        self.levels: list[list[tuple[Genotype, float]]] = []

    def add(self, level: int, genotype: Genotype, fitness: float) -> None:
        while len(self.levels) <= level:
            self.levels.append([])
        self.levels[level].append((genotype, fitness))
        nxt = level + 1
        if nxt < len(self.levels) and self.levels[nxt]:
            if fitness > max(f for _, f in self.levels[nxt]):
                self.add(nxt, genotype, fitness)

    def __len__(self):
        return len(self.levels)


def p3_gomea(eval_fn, rng_seed: int, max_evals: int | None = None) -> SearchState:
    """Parameterless pyramid GOMEA with linkage-tree mixing."""

    def loop(evals, rng):
        pyramid = _Pyramid()
        while True:
            genotype = random_genotype(rng)
            fitness = evals(genotype)
            genotype, fitness, _ = _ls_sweep(genotype, fitness, evals, rng)
            pyramid.add(0, genotype, fitness)
            level = 0
            while level < len(pyramid):
                population = pyramid.levels[level]
                if len(population) >= 2:
                    model = learn_linkage_tree([g for g, _ in population])
                    genotype, fitness, improved = gom_step(
                        genotype, fitness, model, population, evals, rng
                    )
                    if improved:
                        pyramid.add(level + 1, genotype, fitness)
                level += 1

    return _run(loop, eval_fn, rng_seed, max_evals)


# ---------------------------------------------------------------------------
# TPE

def _tpe_propose_arrays(
    genes: np.ndarray,
    fitnesses: np.ndarray,
    gamma: float,
    n_candidates: int,
    rng: random.Random,
) -> tuple[int, ...]:
    """TPE proposal over pre-built (n, 24) gene and (n,) fitness arrays."""
    order = np.argsort(-fitnesses, kind="stable")
    n_good = max(1, math.ceil(gamma * len(order)))
    good = genes[order[:n_good]]
    bad = genes[order[n_good:]]

    max_card = max(GENE_CARDINALITIES)
    l_dens = np.zeros((N_GENES, max_card))
    log_ratio = np.full((N_GENES, max_card), -math.inf)
    for i in range(N_GENES):
        card = GENE_CARDINALITIES[i]
        lc = np.bincount(good[:, i], minlength=card).astype(np.float64) + 1.0
        gc = np.bincount(bad[:, i], minlength=card).astype(np.float64) + 1.0
        l_dens[i, :card] = lc / lc.sum()
        log_ratio[i, :card] = np.log(l_dens[i, :card]) - np.log(gc / gc.sum())

    cum = np.cumsum(l_dens, axis=1)
    us = np.array(
        [rng.random() for _ in range(n_candidates * N_GENES)]
    ).reshape(n_candidates, N_GENES)
    candidates = np.empty((n_candidates, N_GENES), dtype=np.int64)
    for i in range(N_GENES):
        candidates[:, i] = np.searchsorted(cum[i], us[:, i], side="right")
    scores = log_ratio[np.arange(N_GENES), candidates].sum(axis=1)
    return tuple(int(v) for v in candidates[int(np.argmax(scores))])


def tpe_propose(
    history: list[tuple[Genotype, float]],
    gamma: float = 0.25,
    n_candidates: int = 24,
    rng: random.Random | None = None,
) -> Genotype:
    """Tree-structured Parzen estimator proposal over categorical genes.

    History is split at the gamma-quantile of fitness into good and bad
    sets; per-variable categorical densities are fitted with add-one
    smoothing; candidates sampled from the good density are scored by
    the product of per-variable good/bad density ratios.
    """
    if not history:
        raise ValueError("history must be nonempty")
    genes = np.array([g.genes for g, _ in history], dtype=np.int64)
    fitnesses = np.array([f for _, f in history], dtype=np.float64)
    return Genotype.from_genes(
        _tpe_propose_arrays(
            genes, fitnesses, gamma, n_candidates, rng or random.Random(0)
        )
    )


def tpe_search(
    eval_fn,
    rng_seed: int,
    max_evals: int | None = None,
    gamma: float = 0.25,
    n_candidates: int = 24,
    n_init: int = 10,
) -> SearchState:
    """Sequential TPE: random initialization, then guided proposals."""

    def loop(evals, rng):
        for _ in range(n_init):
            evals(random_genotype(rng))
        # history arrays grow in place so proposals stay O(history)
        capacity = 1024
        genes = np.empty((capacity, N_GENES), dtype=np.int64)
        fitnesses = np.empty(capacity, dtype=np.float64)
        for i, (g, f) in enumerate(evals.state.history):
            genes[i], fitnesses[i] = g.genes, f
        n = len(evals.state.history)
        while True:
            proposal = Genotype.from_genes(
                _tpe_propose_arrays(
                    genes[:n], fitnesses[:n], gamma, n_candidates, rng
                )
            )
            if evals.seen(proposal):
                proposal = random_genotype(rng)
            before = len(evals.state.history)
            f = evals(proposal)
            if len(evals.state.history) == before:
                continue  # repeat genotype: history unchanged
            if n == capacity:
                capacity *= 2
                genes = np.concatenate([genes, np.empty_like(genes)])
                fitnesses = np.concatenate([fitnesses, np.empty_like(fitnesses)])
            genes[n], fitnesses[n] = proposal.genes, f
            n += 1

    return _run(loop, eval_fn, rng_seed, max_evals)


# ---------------------------------------------------------------------------
# SAGOMEA

class KnnSurrogate:
    """Distance-weighted k-nearest-neighbor regressor on Hamming distance."""

    def __init__(self, k: int = 10):
        self.k = k
        self._genes: list[tuple[int, ...]] = []
        self._fitness: list[float] = []
        self._matrix: np.ndarray | None = None

    def add(self, genotype: Genotype, fitness: float) -> None:
        self._genes.append(genotype.genes)
        self._fitness.append(fitness)
        self._matrix = None

    def __len__(self):
        return len(self._genes)

    def predict(self, genotype: Genotype) -> float:
        if not self._genes:
            raise ValueError("surrogate has no training data")
        if self._matrix is None:
            self._matrix = np.array(self._genes, dtype=np.int64)
        d = (self._matrix != np.array(genotype.genes)).sum(axis=1)
        k = min(self.k, len(self._genes))
        nearest = np.argsort(d, kind="stable")[:k]
        if d[nearest[0]] == 0:
            return self._fitness[nearest[0]]
        w = 1.0 / d[nearest].astype(np.float64)
        f = np.array([self._fitness[i] for i in nearest])
        return float((w * f).sum() / w.sum())


def sagomea(
    eval_fn,
    rng_seed: int,
    max_evals: int | None = None,
    n_bootstrap: int = 10,
) -> SearchState:
    """Surrogate-assisted pyramid GOMEA.

    GOM variation is screened by a k-NN surrogate: a changed genotype is
    really evaluated only when its estimate reaches the elitist fitness
    minus an adaptive margin. Surrogate calls are free; the margin
    doubles after an iteration without real evaluations and halves after
    each real improvement.
    """

    def loop(evals, rng):
        surrogate = KnnSurrogate()
        state = evals.state

        real_eval_count = [0]
        inner = evals

        def tracked(genotype):
            before = len(state.history)
            f = inner(genotype)
            if len(state.history) > before:
                surrogate.add(genotype, f)
                real_eval_count[0] += 1
            return f

        for _ in range(n_bootstrap):
            tracked(random_genotype(rng))

        fitnesses = [f for _, f in state.history]
        delta = [float(np.std(fitnesses)) if fitnesses else 0.0]

        def screened_gom(solution, fitness, model, population, _evals, rng):
            improved = False
            order = list(model.fos)
            rng.shuffle(order)
            for subset in order:
                donor, _ = population[rng.randrange(len(population))]
                if all(donor.genes[i] == solution.genes[i] for i in subset):
                    continue
                genes = list(solution.genes)
                for i in subset:
                    genes[i] = donor.genes[i]
                candidate = Genotype.from_genes(genes)
                estimate = surrogate.predict(candidate)
                if estimate < state.best_fitness - delta[0]:
                    continue
                f = tracked(candidate)
                if f >= fitness:
                    if f > fitness:
                        improved = True
                        delta[0] *= 0.5
                    solution, fitness = candidate, f
            return solution, fitness, improved

        pyramid = _Pyramid()
        while True:
            before_real = real_eval_count[0]
            genotype = random_genotype(rng)
            fitness = tracked(genotype)
            genotype, fitness, _ = _ls_sweep(genotype, fitness, tracked, rng)
            pyramid.add(0, genotype, fitness)
            level = 0
            while level < len(pyramid):
                population = pyramid.levels[level]
                if len(population) >= 2:
                    model = learn_linkage_tree([g for g, _ in population])
                    genotype, fitness, improved = screened_gom(
                        genotype, fitness, model, population, tracked, rng
                    )
                    if improved:
                        pyramid.add(level + 1, genotype, fitness)
                level += 1
            if real_eval_count[0] == before_real:
                delta[0] = delta[0] * 2.0 if delta[0] > 0 else 1e-6

    return _run(loop, eval_fn, rng_seed, max_evals)


ALGORITHMS = {
    "random": random_search,
    "ls": local_search,
    "gomea": p3_gomea,
    "tpe": tpe_search,
    "sagomea": sagomea,
}
