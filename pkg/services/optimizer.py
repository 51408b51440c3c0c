"""
Derivative-free maximization of the Bell parameter or the DI key rate.

A coarse grid over the free variables seeds Nelder-Mead refinements from the
best grid points and a few seeded random starts. Angles are left unbounded
while refining (every objective is pi-periodic in each angle) and the
squeezing parameter stays inside its bounds.
"""

from dataclasses import dataclass, field, replace
from enum import Enum
import itertools
import logging
import math
from typing import Optional

import numpy as np
from scipy.optimize import Bounds, minimize

from config.settings import EngineConfig, config as default_config
from services.errors import DomainError
from services.metrics import Backend, bell_parameter, qber_di
from services.models import (
    TSIRELSON,
    BinningStrategy,
    DetectorModel,
    KeyRateInput,
    MeasurementPlan,
    SourceModel,
    Spdc,
)
from services.rates import di_key_rate

logger = logging.getLogger(__name__)

# Same order as MeasurementPlan.angles()
ANGLE_VARIABLES = ("theta_a1", "theta_a2", "theta_b1", "theta_b2", "theta_a0")
CHSH_VARIABLES = ANGLE_VARIABLES[:4]
VARIABLES = ANGLE_VARIABLES + ("xi",)
MIN_BUDGET = 100

_ANGLE_STEP = 0.1
_XI_STEP = 0.05


class Objective(str, Enum):
    BELL = "bell"
    DI_KEY_RATE = "key-rate"


class _BudgetExhausted(Exception):
    pass


@dataclass(frozen=True)
class OptimizationProblem:
    """
    What to maximize, over which variables, with everything else held fixed.

    Attributes:
        source (SourceModel): Photon-pair source; its xi is the start value when xi is free
        detector (DetectorModel): Detection efficiency and dark counts
        strategy (BinningStrategy): Binning of non-conclusive events
        objective (Objective): Bell parameter or DI key rate
        free_variables (tuple): Subset of VARIABLES
        bounds (dict): Optional per-variable (lo, hi) overrides
        base_plan (MeasurementPlan): Values of the angles that are not free
        backend (Backend): Engine used for SPDC sources
    """

    source: SourceModel
    detector: DetectorModel = field(default_factory=DetectorModel)
    strategy: BinningStrategy = BinningStrategy.STANDARD
    objective: Objective = Objective.BELL
    free_variables: tuple = CHSH_VARIABLES
    bounds: dict = field(default_factory=dict)
    base_plan: MeasurementPlan = field(default_factory=MeasurementPlan)
    backend: Backend = Backend.GAUSSIAN
    tail: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "strategy", BinningStrategy(self.strategy))
        object.__setattr__(self, "objective", Objective(self.objective))
        object.__setattr__(self, "backend", Backend(self.backend))
        free = tuple(self.free_variables)
        object.__setattr__(self, "free_variables", free)
        if not free:
            raise DomainError("free_variables", free, "at least one variable must be free")
        unknown = [name for name in free if name not in VARIABLES]
        if unknown:
            raise DomainError("free_variables", unknown, f"expected names from {VARIABLES}")
        if len(set(free)) != len(free):
            raise DomainError("free_variables", free, "variables must not repeat")
        if "xi" in free and not isinstance(self.source, Spdc):
            raise DomainError("free_variables", "xi", "only an SPDC source has a squeezing parameter")
        for name, (lo, hi) in self.bounds.items():
            if name not in free:
                raise DomainError("bounds", name, "bounds given for a variable that is not free")
            if not lo < hi:
                raise DomainError("bounds", (lo, hi), f"empty interval for {name}")
            if name == "xi" and not (0.0 < lo and hi <= 1.5):
                raise DomainError("bounds", (lo, hi), "xi must stay inside (0, 1.5]")
            if name != "xi" and not (0.0 <= lo and hi <= math.pi):
                raise DomainError("bounds", (lo, hi), f"{name} must stay inside [0, pi]")

    def bounds_for(self, name: str, cfg: EngineConfig = default_config) -> tuple:
        if name in self.bounds:
            lo, hi = self.bounds[name]
            return float(lo), float(hi)
        if name == "xi":
            return cfg.xi_bounds
        return 0.0, math.pi

    def start_point(self) -> dict:
        """Current values of the free variables taken from base_plan and source."""
        current = dict(zip(ANGLE_VARIABLES, self.base_plan.angles()))
        if isinstance(self.source, Spdc):
            current["xi"] = self.source.xi
        return {name: current[name] for name in self.free_variables}

    def assemble(self, values: dict) -> tuple:
        """Returns (source, plan) with the free variables set to `values`."""
        angles = dict(zip(ANGLE_VARIABLES, self.base_plan.angles()))
        angles.update({name: float(v) for name, v in values.items() if name != "xi"})
        source = self.source
        if "xi" in values:
            source = replace(source, xi=float(values["xi"]))
        return source, MeasurementPlan(**angles)

    def value(self, values: dict) -> float:
        source, plan = self.assemble(values)
        bell_s = bell_parameter(source, self.detector, plan, self.strategy, self.backend, self.tail)
        if self.objective is Objective.BELL:
            return bell_s
        qber = qber_di(source, self.detector, plan, self.strategy, self.backend, self.tail)
        return di_key_rate(KeyRateInput(qber, min(bell_s, TSIRELSON))).rate

    def relevant_angles(self) -> tuple:
        return CHSH_VARIABLES if self.objective is Objective.BELL else ANGLE_VARIABLES


@dataclass(frozen=True)
class OptimizationResult:
    best_value: float
    argmax: dict
    evaluations: int
    converged: bool
    source: SourceModel
    plan: MeasurementPlan

    def to_dict(self) -> dict:
        return {
            "best_value": self.best_value,
            "argmax": dict(self.argmax),
            "evaluations": self.evaluations,
            "converged": self.converged,
        }


class _CountingObjective:
    """Wraps the objective, counts calls and stops the search once the budget is spent."""

    def __init__(self, problem: OptimizationProblem, budget: int):
        self.problem = problem
        self.budget = budget
        self.evaluations = 0
        self.best = None

    def __call__(self, point) -> float:
        if self.evaluations >= self.budget:
            raise _BudgetExhausted()
        self.evaluations += 1
        point = tuple(float(v) for v in point)
        value = self.problem.value(dict(zip(self.problem.free_variables, point)))
        if self.best is None or value > self.best[0]:
            self.best = (value, point)
        return value

    def negated(self, point) -> float:
        return -self(point)

    @property
    def remaining(self) -> int:
        return self.budget - self.evaluations


def canonical_angles(values: dict, problem: OptimizationProblem) -> dict:
    """
    Reduces every free angle mod pi. When the source is invariant under a common
    analyzer rotation and every angle the objective depends on is free, all angles
    are first shifted by the multiple of pi/4 that puts theta_b1 in [0, pi/4).
    """
    out = dict(values)
    relevant = problem.relevant_angles()
    shift_all = problem.source.common_rotation_invariant and all(name in out for name in relevant)
    if shift_all:
        quarters = math.floor((out["theta_b1"] % math.pi) / (math.pi / 4))
        for name in relevant:
            out[name] -= quarters * math.pi / 4
    for name in ANGLE_VARIABLES:
        if name in out:
            out[name] = out[name] % math.pi
    return out


def _grid(problem: OptimizationProblem, cfg: EngineConfig) -> list:
    axes = []
    for name in problem.free_variables:
        lo, hi = problem.bounds_for(name, cfg)
        # angles are periodic, so the upper end would repeat the lower one
        axes.append(np.linspace(lo, hi, cfg.grid_points, endpoint=(name == "xi")))
    return [tuple(float(v) for v in point) for point in itertools.product(*axes)]


def _initial_simplex(problem: OptimizationProblem, start: tuple, cfg: EngineConfig) -> np.ndarray:
    simplex = [np.array(start, dtype=float)]
    for i, name in enumerate(problem.free_variables):
        vertex = simplex[0].copy()
        if name == "xi":
            lo, hi = problem.bounds_for(name, cfg)
            vertex[i] += _XI_STEP if vertex[i] + _XI_STEP <= hi else -_XI_STEP
            vertex[i] = min(max(vertex[i], lo), hi)
        else:
            vertex[i] += _ANGLE_STEP
        simplex.append(vertex)
    return np.array(simplex)


def _nelder_mead_bounds(problem: OptimizationProblem, cfg: EngineConfig) -> Optional[Bounds]:
    if "xi" not in problem.free_variables:
        return None
    lower = [problem.bounds_for(n, cfg)[0] if n == "xi" else -np.inf for n in problem.free_variables]
    upper = [problem.bounds_for(n, cfg)[1] if n == "xi" else np.inf for n in problem.free_variables]
    return Bounds(lower, upper)


def _refine_from(counter: _CountingObjective, start: tuple, cfg: EngineConfig) -> tuple:
    """One Nelder-Mead run; returns (value, point, converged)."""
    problem = counter.problem
    tol = cfg.simplex_tolerance
    result = minimize(
        counter.negated,
        np.array(start, dtype=float),
        method="Nelder-Mead",
        bounds=_nelder_mead_bounds(problem, cfg),
        options={
            "initial_simplex": _initial_simplex(problem, start, cfg),
            "xatol": tol,
            "fatol": tol * tol,
            "maxfev": counter.remaining,
            "maxiter": counter.remaining,
        },
    )
    simplex = result.final_simplex[0]
    diameter = float(np.ptp(simplex, axis=0).max())
    logger.debug("Refined from %s to %.12g (diameter %.3e)", start, -result.fun, diameter)
    return -float(result.fun), tuple(float(v) for v in result.x), bool(result.success) and diameter < tol


def _finish(problem: OptimizationProblem, candidates: list, counter: _CountingObjective, exhausted: bool):
    if counter.best is not None:
        candidates.append((counter.best[0], counter.best[1], False))
    if not candidates:
        raise DomainError("budget", counter.budget, "no objective evaluation fitted in the budget")
    # value descending, then lexicographic point, converged runs first on exact ties
    value, point, converged = min(candidates, key=lambda c: (-c[0], c[1], not c[2]))
    argmax = canonical_angles(dict(zip(problem.free_variables, point)), problem)
    source, plan = problem.assemble(argmax)
    if exhausted:
        logger.warning("Optimizer budget of %d evaluations exhausted", counter.budget)
    return OptimizationResult(
        best_value=value,
        argmax=argmax,
        evaluations=counter.evaluations,
        converged=converged and not exhausted,
        source=source,
        plan=plan,
    )


def _check_budget(budget: int):
    if budget < MIN_BUDGET:
        raise DomainError("budget", budget, f"at least {MIN_BUDGET} evaluations are required")


def optimize(
    problem: OptimizationProblem,
    seed: int = 0,
    budget: Optional[int] = None,
    config: Optional[EngineConfig] = None,
) -> OptimizationResult:
    """
    Maximizes the problem's objective over its free variables.

    Args:
        problem (OptimizationProblem): Objective, free variables and fixed context
        seed (int): Seed of the random starts
        budget (Optional[int]): Maximal number of objective evaluations, >= 100
        config (Optional[EngineConfig]): Grid density, start counts and tolerances

    Returns:
        OptimizationResult: converged is False when the budget ran out first

    Raises:
        DomainError: If the budget is below 100
    """
    cfg = config or default_config
    budget = cfg.optimizer_budget if budget is None else int(budget)
    _check_budget(budget)
    counter = _CountingObjective(problem, budget)
    candidates = []
    logger.info(
        "Optimizing %s over %s for %s (seed=%d, budget=%d)",
        problem.objective.value, ",".join(problem.free_variables), problem.source, seed, budget,
    )
    try:
        scored = [(counter(point), point) for point in _grid(problem, cfg)]
        scored.sort(key=lambda s: (-s[0], s[1]))
        candidates.append((scored[0][0], scored[0][1], False))
        starts = [point for _, point in scored[: cfg.refine_starts]]
        rng = np.random.default_rng(seed)
        limits = [problem.bounds_for(name, cfg) for name in problem.free_variables]
        for _ in range(cfg.random_starts):
            starts.append(tuple(float(rng.uniform(lo, hi)) for lo, hi in limits))
        for start in starts:
            candidates.append(_refine_from(counter, start, cfg))
        exhausted = False
    except _BudgetExhausted:
        exhausted = True
    return _finish(problem, candidates, counter, exhausted)


def refine(
    problem: OptimizationProblem,
    start: Optional[dict] = None,
    budget: Optional[int] = None,
    config: Optional[EngineConfig] = None,
) -> OptimizationResult:
    """
    Single local refinement from a given point, used for continuation along a sweep.

    Args:
        problem (OptimizationProblem): Objective, free variables and fixed context
        start (Optional[dict]): Start values; missing variables come from problem.start_point()
        budget (Optional[int]): Maximal number of objective evaluations, >= 100
        config (Optional[EngineConfig]): Tolerances
    """
    cfg = config or default_config
    budget = cfg.optimizer_budget if budget is None else int(budget)
    _check_budget(budget)
    point = {**problem.start_point(), **(start or {})}
    counter = _CountingObjective(problem, budget)
    candidates = []
    try:
        candidates.append(_refine_from(counter, tuple(float(point[n]) for n in problem.free_variables), cfg))
        exhausted = False
    except _BudgetExhausted:
        exhausted = True
    return _finish(problem, candidates, counter, exhausted)
