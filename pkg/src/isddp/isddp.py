"""Sampling-based nested decomposition with certified inexact stage solves.

One iteration is a forward pass that samples a scenario path and walks it
with delta-certified solves against last iteration's cut pools, followed by
a backward pass that revisits the path last stage first, solves every
realization at the incoming state against the freshly updated next-stage
pool, and appends one expectation cut per stage.  The cut anchors at the
probability-weighted primal values and gives back twice the worst certified
error level among the realization solves, so it stays a global minorant of
the expected cost-to-go no matter how inexact the solves were.

Lower bounds come from an exact stage-1 re-solve against the newest pool
(reported as its certified dual value, so the number is safe even if the
simplex ever returned a slightly infeasible point).  Upper estimates come
from the sampled path's cost and, on trees small enough to enumerate, from
simulating the pool-greedy policy over every node.
"""

from dataclasses import dataclass, field
from time import perf_counter
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from .cuts import Cut, CutPool
from .errors import IsddpError, NumericalTrouble, SolverFailure
from .model import MultistageProblem
from .oracle import build_tree, subtree_value, tree_size
from .subsolve import SubproblemInstance, solve_exact, solve_inexact

FULL_TREE_MAX_NODES = 10_000
PLATEAU_WINDOW = 20
PLATEAU_TOL = 1e-6
_BOX_TOL = 1e-9

# Seed mixing: one independent substream per (run seed, iteration, stage,
# node) with a salt separating forward, backward, and simulation solves.
_MIX_SEED = 1_000_003
_MIX_ITER = 8191
_MIX_STAGE = 131
_MIX_NODE = 7
_SALT_FORWARD = 0
_SALT_BACKWARD = 1
_SALT_SIM = 2


def _node_seed(seed, k, t, j, salt):
    return _MIX_SEED * seed + _MIX_ITER * k + _MIX_STAGE * t + _MIX_NODE * j + salt


@dataclass(frozen=True)
class ErrorSchedule:
    """Per-iteration error targets for the stage solves.

    ``eps`` levels drive the backward (cut-building) solves and ``delta``
    levels the forward and simulation solves.  ``constant`` holds both at
    their bars, ``vanishing`` decays both as decay/k, and ``custom``
    delegates to user functions of (iteration, stage).
    """

    kind: str = "constant"
    eps_bar: float = 0.0
    delta_bar: float = 0.0
    decay: float = 0.0
    eps_fn: Optional[Callable[[int, int], float]] = None
    delta_fn: Optional[Callable[[int, int], float]] = None

    def __post_init__(self):
        if self.kind not in ("constant", "vanishing", "custom"):
            raise ValueError(f"unknown schedule kind {self.kind!r}")
        if min(self.eps_bar, self.delta_bar, self.decay) < 0.0:
            raise ValueError("schedule levels must be nonnegative")
        if self.kind == "custom" and (self.eps_fn is None
                                      or self.delta_fn is None):
            raise ValueError("custom schedules need eps_fn and delta_fn")

    def eps(self, k: int, t: int) -> float:
        if self.kind == "constant":
            return float(self.eps_bar)
        if self.kind == "vanishing":
            return float(self.decay) / k
        return self._checked(self.eps_fn(k, t))

    def delta(self, k: int, t: int) -> float:
        if self.kind == "constant":
            return float(self.delta_bar)
        if self.kind == "vanishing":
            return float(self.decay) / k
        return self._checked(self.delta_fn(k, t))

    @staticmethod
    def _checked(val) -> float:
        val = float(val)
        if val < 0.0:
            raise ValueError(f"custom schedule returned negative level {val}")
        return val

    @classmethod
    def exact(cls) -> "ErrorSchedule":
        return cls(kind="constant", eps_bar=0.0, delta_bar=0.0)

    @classmethod
    def constant_levels(cls, eps_bar, delta_bar=None) -> "ErrorSchedule":
        if delta_bar is None:
            delta_bar = eps_bar
        return cls(kind="constant", eps_bar=float(eps_bar),
                   delta_bar=float(delta_bar))

    @classmethod
    def vanishing(cls, decay) -> "ErrorSchedule":
        return cls(kind="vanishing", decay=float(decay))


@dataclass(frozen=True)
class IterationRecord:
    """Everything one iteration reports.

    upper_path is the sampled path's stage-cost total (a noisy single-sample
    policy estimate); upper_tree is the exact expectation of the pool-greedy
    policy over the whole tree, present only when the tree was small enough
    to enumerate.  node_gaps maps stage t to the worst oracle gap
    Q_t(x_n) - pool_t(x_n) over the simulated states feeding stage t, and is
    present only when the run asked for the full-tree diagnostic.
    """

    k: int
    lower_bound: float
    sampled_path: Tuple[int, ...]
    forward_states: Tuple[np.ndarray, ...]
    upper_path: float
    upper_tree: Optional[float]
    eps_k: float
    delta_k: float
    wall_time: float
    node_gaps: Optional[Dict[int, float]] = None

    def __post_init__(self):
        object.__setattr__(self, "sampled_path",
                           tuple(int(j) for j in self.sampled_path))
        states = []
        for x in self.forward_states:
            arr = np.array(x, dtype=float)
            arr.setflags(write=False)
            states.append(arr)
        object.__setattr__(self, "forward_states", tuple(states))


@dataclass
class SolverState:
    """Mutable run state: the problem, its cut pools, and the iteration log.

    pools[t] models the expected cost-to-go of stages t..T as a function of
    the stage t-1 state, for t = 2..T+1; the last one is pinned at zero and
    never grows.
    """

    problem: MultistageProblem
    schedule: ErrorSchedule
    mode: str
    seed: int
    pools: Dict[int, CutPool]
    sharp: bool = False
    records: List[IterationRecord] = field(default_factory=list)

    @property
    def lower_bounds(self) -> List[float]:
        return [r.lower_bound for r in self.records]


def initialize(problem: MultistageProblem, schedule: Optional[ErrorSchedule] = None,
               mode: str = "injected", seed: int = 0,
               sharp_intercepts: bool = False) -> SolverState:
    """Fresh solver state with every pool holding one flat floor cut.

    The stage-t pool starts at the tail sum of the stage cost lower bounds
    over stages t..T, a uniform floor for the expected cost-to-go there.
    With `sharp_intercepts` the backward pass anchors cuts at the certified
    dual values instead of the primal values minus the full error budget;
    sharp cuts are never lower and carry the smaller certified looseness.
    """
    if schedule is None:
        schedule = ErrorSchedule.exact()
    if mode not in ("truncated", "injected"):
        raise ValueError(f"unknown mode {mode!r}")
    T = problem.horizon
    tail = 0.0
    floors = {}
    for t in range(T, 0, -1):
        tail += problem.stage(t).cost_lower_bound
        floors[t] = tail
    pools = {t: CutPool(dim=problem.prev_dim(t), lower_bound=floors[t])
             for t in range(2, T + 1)}
    pools[T + 1] = CutPool(dim=problem.prev_dim(T + 1), lower_bound=0.0)
    return SolverState(problem=problem, schedule=schedule, mode=mode,
                       seed=int(seed), pools=pools,
                       sharp=bool(sharp_intercepts))


def _stage_instance(problem, t, j, xbar, pool):
    stage = problem.stage(t)
    r = stage.realizations[j]
    return SubproblemInstance(cost=r.cost, A=r.A, B=r.B, b=r.b,
                              ineq=r.ineq_constraints, Y=stage.state_set,
                              xbar=np.asarray(xbar, dtype=float),
                              value_model=pool)


def _certified_solve(inst, eps_primal, eps_dual, mode, seed, t, j):
    """Stage solve at the requested certified levels, tagging any solver
    error with the (stage, realization) it came from."""
    try:
        if eps_primal == 0.0 and eps_dual == 0.0:
            return solve_exact(inst)
        if mode == "truncated":
            # one simplex run certifies both sides by its duality gap
            level = max(eps_primal, eps_dual)
            return solve_inexact(inst, level, level, "truncated")
        return solve_inexact(inst, eps_primal, eps_dual, "injected", seed=seed)
    except IsddpError as exc:
        exc.stage = t
        exc.realization = j
        raise


def forward_pass(state: SolverState, k: int, seed: Optional[int] = None):
    """Sample one scenario path and walk it with certified stage solves.

    Returns (sampled_path, states, path_cost): the realization index per
    stage (the first stage is deterministic, always index 0), the visited
    states, and the stage-cost total along the path.  Solves run against the
    pools as the previous iteration left them, at levels delta_t^k.
    """
    problem, schedule = state.problem, state.schedule
    if seed is None:
        seed = state.seed
    rng = np.random.default_rng(_MIX_SEED * seed + _MIX_ITER * k)
    path: List[int] = []
    states: List[np.ndarray] = []
    x_prev = problem.x0
    total_cost = 0.0
    for t in range(1, problem.horizon + 1):
        stage = problem.stage(t)
        if t == 1:
            j = 0
        else:
            cum = np.cumsum(stage.probabilities)
            j = min(int(np.searchsorted(cum, rng.random(), side="right")),
                    stage.n_realizations - 1)
        inst = _stage_instance(problem, t, j, x_prev, state.pools[t + 1])
        cert = _certified_solve(inst, schedule.delta(k, t), 0.0, state.mode,
                                _node_seed(seed, k, t, j, _SALT_FORWARD), t, j)
        x_t = np.array(cert.y_hat, dtype=float)
        if not stage.state_set.contains(x_t, tol=_BOX_TOL):
            raise NumericalTrouble(
                f"stage {t} forward solution leaves its box by more "
                f"than {_BOX_TOL:g}")
        path.append(j)
        states.append(x_t)
        total_cost += inst.stage_cost(x_t)
        x_prev = x_t
    return tuple(path), tuple(states), float(total_cost)


def backward_pass(state: SolverState, k: int, states,
                  schedule: Optional[ErrorSchedule] = None,
                  seed: Optional[int] = None) -> float:
    """Append one expectation cut per stage t = T..2 at the forward states,
    then re-solve stage 1 exactly for a certified lower bound.

    Stage t solves all its realizations at x_{t-1} against the already
    refreshed pool of stage t+1 (descending order, so deeper cuts are seen
    immediately); realizations are aggregated in index order so repeated
    runs sum bitwise identically.  Returns the stage-1 dual value.
    """
    problem = state.problem
    if schedule is None:
        schedule = state.schedule
    if seed is None:
        seed = state.seed
    for t in range(problem.horizon, 1, -1):
        stage = problem.stage(t)
        xbar = np.asarray(states[t - 2], dtype=float)
        eps = schedule.eps(k, t)
        beta = np.zeros(problem.prev_dim(t))
        primal_mean = 0.0
        dual_mean = 0.0
        gap_mean = 0.0
        achieved = 0.0
        for j in range(stage.n_realizations):
            inst = _stage_instance(problem, t, j, xbar, state.pools[t + 1])
            cert = _certified_solve(
                inst, 0.0, eps, state.mode,
                _node_seed(seed, k, t, j, _SALT_BACKWARD), t, j)
            p = stage.realizations[j].probability
            beta = beta + p * np.asarray(cert.lambda_hat, dtype=float)
            primal_mean += p * float(cert.primal_value)
            dual_mean += p * float(cert.dual_value)
            gap_mean += p * max(0.0, float(cert.primal_value)
                                - float(cert.dual_value))
            achieved = max(achieved, float(cert.eps_primal),
                           float(cert.eps_dual))
        if state.sharp:
            anchored, looseness = dual_mean, gap_mean
        else:
            anchored = primal_mean - 2.0 * achieved
            looseness = 2.0 * achieved
        cut = Cut(intercept=anchored - float(beta @ xbar), slope=beta,
                  looseness=looseness, provenance="P22", iteration=k)
        state.pools[t].append(cut)
    inst1 = _stage_instance(problem, 1, 0, problem.x0, state.pools[2])
    try:
        cert1 = solve_exact(inst1)
    except IsddpError as exc:
        exc.stage = 1
        exc.realization = 0
        raise
    return float(cert1.dual_value)


def _simulate_tree(state: SolverState, k: int, seed: int):
    """Pool-greedy policy decisions at every tree node.

    Returns the exact expected policy cost and the per-node states, solving
    each node at its parent's simulated state with the current pools at the
    forward error level delta_t^k.
    """
    problem, schedule = state.problem, state.schedule
    nodes = build_tree(problem)
    xs = {0: np.asarray(problem.x0, dtype=float)}
    expected = 0.0
    for node in nodes:
        if node.id == 0:
            continue
        t, j = node.stage, node.realization
        inst = _stage_instance(problem, t, j, xs[node.parent],
                               state.pools[t + 1])
        cert = _certified_solve(
            inst, schedule.delta(k, t), 0.0, state.mode,
            _node_seed(seed, k, t, node.id, _SALT_SIM), t, j)
        xs[node.id] = np.asarray(cert.y_hat, dtype=float)
        expected += node.path_probability * inst.stage_cost(cert.y_hat)
    return float(expected), xs, nodes


def _node_gaps(state: SolverState, xs, nodes) -> Dict[int, float]:
    """Worst oracle gap Q_t(x) - pool_t(x) over the simulated states feeding
    each stage t >= 2 (one exact subtree solve per node)."""
    problem = state.problem
    gaps: Dict[int, float] = {}
    for node in nodes:
        t = node.stage + 1
        if not 2 <= t <= problem.horizon:
            continue
        x = xs[node.id]
        gap = subtree_value(problem, t, x) - state.pools[t].eval(x)
        gaps[t] = max(gaps.get(t, -np.inf), gap)
    return gaps


def plateau_reached(values, window: int = PLATEAU_WINDOW,
                    tol: float = PLATEAU_TOL) -> bool:
    """True once the trailing `window` values agree within `tol`."""
    if len(values) < window:
        return False
    tail = list(values[-window:])
    return max(tail) - min(tail) <= tol


def run(problem: Optional[MultistageProblem] = None,
        schedule: Optional[ErrorSchedule] = None, iterations: int = 1,
        seed: int = 0, mode: str = "injected", full_tree_sim: bool = False,
        sharp_intercepts: bool = False, stop_on_plateau: bool = False,
        plateau_window: int = PLATEAU_WINDOW, plateau_tol: float = PLATEAU_TOL,
        state: Optional[SolverState] = None) -> List[IterationRecord]:
    """Iterate forward sampling and backward cut building.

    Returns one record per completed iteration.  upper_tree is filled
    whenever the scenario tree is small enough to enumerate; per-node gaps
    against the exact oracle are added when full_tree_sim is set (they cost
    one subtree solve per node and iteration).  stop_on_plateau ends the run
    early once the trailing window of lower bounds agrees within the
    tolerance.  Passing an existing `state` continues that run (its problem,
    schedule, mode, and seed win) and appends to its records.
    """
    if iterations < 1:
        raise ValueError("iterations must be at least 1")
    if state is None:
        if problem is None:
            raise ValueError("run needs a problem or an existing state")
        state = initialize(problem, schedule=schedule, mode=mode, seed=seed,
                           sharp_intercepts=sharp_intercepts)
    problem = state.problem
    small_tree = tree_size(problem) <= FULL_TREE_MAX_NODES
    T = problem.horizon
    k_start = len(state.records) + 1
    fresh: List[IterationRecord] = []
    for k in range(k_start, k_start + iterations):
        t0 = perf_counter()
        try:
            path, states, upper_path = forward_pass(state, k)
            lower = backward_pass(state, k, states)
            upper_tree = None
            gaps = None
            if small_tree:
                upper_tree, xs, nodes = _simulate_tree(state, k, state.seed)
                if full_tree_sim:
                    gaps = _node_gaps(state, xs, nodes)
        except SolverFailure:
            raise
        except IsddpError as exc:
            raise SolverFailure(exc, iteration=k,
                                stage=getattr(exc, "stage", None),
                                realization=getattr(exc, "realization", None)
                                ) from exc
        record = IterationRecord(
            k=k, lower_bound=lower, sampled_path=path, forward_states=states,
            upper_path=upper_path, upper_tree=upper_tree,
            eps_k=max((state.schedule.eps(k, t) for t in range(2, T + 1)),
                      default=0.0),
            delta_k=max(state.schedule.delta(k, t) for t in range(1, T + 1)),
            wall_time=perf_counter() - t0, node_gaps=gaps)
        state.records.append(record)
        fresh.append(record)
        if stop_on_plateau and plateau_reached(state.lower_bounds,
                                               plateau_window, plateau_tol):
            break
    return fresh
