"""Improved genetic algorithm (IGA) for the four RISE gains.

Two phases share one operator suite:

* FGA (construction): steady-state GA over a small population of ``N_p``
  random individuals; each of ``N_g`` generations makes one child (binary
  tournament parents, blend crossover, Gaussian mutation) that replaces the
  worst member if strictly better. The best member after every generation is
  copied into the real initial population (RIP), which therefore holds
  ``N_g`` individuals.
* CGA (refinement): the same loop over the RIP for ``k * N_g`` generations,
  but a child is admitted only if it beats both of its parents and the worst
  member.

Every fitness evaluation is written to an :class:`AuditLog`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np

from .controller import ControllerState, GainConditionBounds, RiseGains, check_gain_condition
from .reference import TrajectorySpec
from .session import rmse

INFEASIBLE_COST = 1e6
GAIN_NAMES = ("alpha1", "alpha2", "ks", "beta")


@dataclass(frozen=True)
class GainBounds:
    alpha1: tuple[float, float] = (0.5, 8.0)
    alpha2: tuple[float, float] = (0.5, 8.0)
    ks: tuple[float, float] = (10.0, 80.0)
    beta: tuple[float, float] = (1.0, 6.0)

    def __post_init__(self):
        for name in GAIN_NAMES:
            lo, hi = getattr(self, name)
            if not 0.0 < lo < hi:
                raise ValueError(f"bounds for {name} must satisfy 0 < low < high, got ({lo}, {hi})")

    @property
    def low(self) -> np.ndarray:
        return np.array([getattr(self, n)[0] for n in GAIN_NAMES])

    @property
    def high(self) -> np.ndarray:
        return np.array([getattr(self, n)[1] for n in GAIN_NAMES])

    def clip(self, x: np.ndarray) -> np.ndarray:
        return np.clip(x, self.low, self.high)

    def contains(self, gains: RiseGains) -> bool:
        x = np.array(gains.as_tuple())
        return bool(np.all(x >= self.low) and np.all(x <= self.high))


@dataclass(frozen=True)
class IgaConfig:
    population_size: int = 8
    mutation_rate: float = 0.5
    generations: int = 6
    iterations: int = 1
    bounds: GainBounds = field(default_factory=GainBounds)
    seed: int = 0
    fitness_horizon: float = 20.0
    saturation_penalty: float = 5.0
    condition_penalty: float = 10.0
    condition_bounds: GainConditionBounds = field(default_factory=GainConditionBounds)
    init_retries: int = 100

    def __post_init__(self):
        if self.population_size < 2:
            raise ValueError("population_size must be >= 2")
        if not 0.0 <= self.mutation_rate <= 1.0:
            raise ValueError("mutation_rate must lie in [0, 1]")
        if self.generations < 1 or self.iterations < 1:
            raise ValueError("generations and iterations must be >= 1")
        if not self.fitness_horizon > 0:
            raise ValueError("fitness_horizon must be positive")


PRESETS = {
    "first": dict(population_size=8, mutation_rate=0.5, generations=6, iterations=1),
    "later": dict(population_size=10, mutation_rate=0.3, generations=30, iterations=1),
}


def preset(name: str, **overrides) -> IgaConfig:
    """``first`` = time-limited in-session tuning, ``later`` = offline tuning between sessions."""
    if name not in PRESETS:
        raise ValueError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    return IgaConfig(**{**PRESETS[name], **overrides})


@dataclass
class Individual:
    gains: RiseGains
    fitness: float = math.inf
    condition_margin: float = 0.0
    penalized: bool = False  # initial sampling never met the gain condition

    @property
    def feasible(self) -> bool:
        return self.fitness < INFEASIBLE_COST and self.condition_margin >= 0.0

    def sort_key(self):
        return (self.fitness, *self.gains.as_tuple())


def _ranked(pop: Iterable[Individual]) -> list[Individual]:
    return sorted(pop, key=Individual.sort_key)


@dataclass(frozen=True)
class AuditRecord:
    phase: str
    generation: int
    index: int
    gains: RiseGains
    cost: float
    margin: float

    def line(self) -> str:
        g = "\t".join(repr(v) for v in self.gains.as_tuple())
        return f"{self.phase}\t{self.generation}\t{self.index}\t{g}\t{self.cost!r}\t{self.margin!r}"


class AuditLog:
    HEADER = "phase\tgeneration\tindex\talpha1\talpha2\tks\tbeta\tcost\tmargin"

    def __init__(self):
        self.records: list[AuditRecord] = []

    def __len__(self):
        return len(self.records)

    def add(self, record: AuditRecord) -> None:
        self.records.append(record)

    def text(self) -> str:
        return "\n".join([self.HEADER] + [r.line() for r in self.records]) + "\n"


FitnessFn = Callable[[RiseGains], float]


def _rng(cfg: IgaConfig, phase: int, generation: int, index: int = 0) -> np.random.Generator:
    return np.random.default_rng([cfg.seed, phase, generation, index])


def fitness(gains: RiseGains, system, spec: TrajectorySpec, cfg: IgaConfig,
            controller: ControllerState | None = None) -> float:
    """Closed-loop cost: RMSE (deg) + saturation and gain-condition penalties.

    A diverged rollout costs :data:`INFEASIBLE_COST`.
    """
    cs = (controller or ControllerState()).fresh()
    ro = system.closed_loop(gains, spec, cs, horizon=cfg.fitness_horizon)
    if ro.diverged or ro.n == 0:
        return INFEASIBLE_COST
    cost = rmse(ro.theta, ro.theta_d)
    cost += cfg.saturation_penalty * ro.saturated_fraction
    margin = check_gain_condition(gains, cfg.condition_bounds).margin
    cost += cfg.condition_penalty * max(0.0, -margin)
    if not math.isfinite(cost):
        return INFEASIBLE_COST
    return min(cost, INFEASIBLE_COST)


def init_population(cfg: IgaConfig) -> list[Individual]:
    """Uniform samples inside the bounds, redrawn until the gain condition holds.

    After ``cfg.init_retries`` failed draws the last sample is kept and flagged
    ``penalized``.
    """
    lo, hi = cfg.bounds.low, cfg.bounds.high
    pop = []
    for i in range(cfg.population_size):
        rng = _rng(cfg, 0, 0, i)
        for _ in range(cfg.init_retries):
            gains = RiseGains.from_sequence(rng.uniform(lo, hi))
            cond = check_gain_condition(gains, cfg.condition_bounds)
            if cond.satisfied:
                pop.append(Individual(gains, condition_margin=cond.margin))
                break
        else:
            pop.append(Individual(gains, condition_margin=cond.margin, penalized=True))
    return pop


class _Evaluator:
    def __init__(self, fn: FitnessFn, cfg: IgaConfig, audit: AuditLog | None):
        self.fn = fn
        self.cfg = cfg
        self.audit = audit if audit is not None else AuditLog()

    def __call__(self, ind: Individual, phase: str, generation: int, index: int) -> Individual:
        cost = float(self.fn(ind.gains))
        if not math.isfinite(cost):
            cost = INFEASIBLE_COST
        ind.fitness = cost
        ind.condition_margin = check_gain_condition(ind.gains, self.cfg.condition_bounds).margin
        self.audit.add(AuditRecord(phase, generation, index, ind.gains, cost, ind.condition_margin))
        return ind


def _tournament(pop: list[Individual], rng: np.random.Generator) -> int:
    i, j = rng.integers(0, len(pop), size=2)
    a, b = pop[i], pop[j]
    return int(i) if a.sort_key() <= b.sort_key() else int(j)


def _make_child(pop: list[Individual], cfg: IgaConfig, rng: np.random.Generator) -> tuple[Individual, int, int]:
    pa = _tournament(pop, rng)
    pb = _tournament(pop, rng)
    x1 = np.array(pop[pa].gains.as_tuple())
    x2 = np.array(pop[pb].gains.as_tuple())
    lam = rng.random(4)
    child = x1 + lam * (x2 - x1)
    sigma = 0.1 * (cfg.bounds.high - cfg.bounds.low)
    mutate = rng.random(4) < cfg.mutation_rate
    child = child + mutate * rng.normal(0.0, 1.0, 4) * sigma
    child = cfg.bounds.clip(child)
    return Individual(RiseGains.from_sequence(child)), pa, pb


def _worst_index(pop: list[Individual]) -> int:
    return max(range(len(pop)), key=lambda i: pop[i].sort_key())


def _best(pop: list[Individual]) -> Individual:
    return min(pop, key=Individual.sort_key)


def _clone(ind: Individual) -> Individual:
    return Individual(ind.gains, ind.fitness, ind.condition_margin, ind.penalized)


def fga_run(cfg: IgaConfig, fitness_fn: FitnessFn, audit: AuditLog | None = None,
            population: list[Individual] | None = None, trace: list | None = None) -> list[Individual]:
    """Construction phase; returns the RIP (one best-of-generation copy per generation).

    ``trace``, if given, receives the best-so-far cost after the initial
    evaluation and after each generation.
    """
    ev = _Evaluator(fitness_fn, cfg, audit)
    pop = population if population is not None else init_population(cfg)
    for i, ind in enumerate(pop):
        ev(ind, "fga", 0, i)
    if trace is not None:
        trace.append(_best(pop).fitness)
    rip = []
    for gen in range(1, cfg.generations + 1):
        rng = _rng(cfg, 1, gen)
        child, _, _ = _make_child(pop, cfg, rng)
        ev(child, "fga", gen, len(pop))
        worst = _worst_index(pop)
        if child.sort_key() < pop[worst].sort_key():
            pop[worst] = child
        rip.append(_clone(_best(pop)))
        if trace is not None:
            trace.append(_best(pop).fitness)
    return rip


def cga_run(rip: list[Individual], cfg: IgaConfig, fitness_fn: FitnessFn, audit: AuditLog | None = None,
            iterations: int | None = None, trace: list | None = None) -> list[Individual]:
    """Refinement phase over an already evaluated RIP; returns the population ranked by cost."""
    if not rip:
        raise ValueError("RIP is empty")
    ev = _Evaluator(fitness_fn, cfg, audit)
    pop = [_clone(ind) for ind in rip]
    for ind in pop:
        if not math.isfinite(ind.fitness):
            raise ValueError("RIP individuals must carry fitness values")
    iterations = cfg.iterations if iterations is None else iterations
    if trace is not None:
        trace.append(_best(pop).fitness)
    for it in range(iterations):
        for gen in range(1, cfg.generations + 1):
            rng = _rng(cfg, 2 + it, gen)
            child, pa, pb = _make_child(pop, cfg, rng)
            ev(child, "cga", it * cfg.generations + gen, len(pop))
            worst = _worst_index(pop)
            key = child.sort_key()
            if key < pop[pa].sort_key() and key < pop[pb].sort_key() and key < pop[worst].sort_key():
                pop[worst] = child
            if trace is not None:
                trace.append(_best(pop).fitness)
    return _ranked(pop)


@dataclass
class TuneResult:
    best: Individual
    ranked: list[Individual]
    rip: list[Individual]
    audit: AuditLog
    infeasible: bool

    @property
    def gains(self) -> RiseGains:
        return self.best.gains


def select_best(ranked: list[Individual]) -> tuple[Individual, bool]:
    """Lowest-cost individual meeting the gain condition; falls back to lowest cost (flagged infeasible)."""
    feasible = [ind for ind in ranked if ind.feasible]
    if feasible:
        return min(feasible, key=Individual.sort_key), False
    return min(ranked, key=Individual.sort_key), True


def tune(system, spec: TrajectorySpec, cfg: IgaConfig = IgaConfig(),
         controller: ControllerState | None = None) -> TuneResult:
    """Full IGA: random init -> FGA -> CGA against ``system`` on ``spec``."""
    audit = AuditLog()

    def fn(gains: RiseGains) -> float:
        return fitness(gains, system, spec, cfg, controller)

    rip = fga_run(cfg, fn, audit)
    ranked = cga_run(rip, cfg, fn, audit)
    best, infeasible = select_best(ranked)
    return TuneResult(best, ranked, rip, audit, infeasible)
