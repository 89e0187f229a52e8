"""Shared test utilities: random instance generators and reference solves.

Random subproblems are feasible by construction (an interior point y0 is
drawn first and the constraint data is built around it), so exact solves
must succeed and Slater-style interiority holds with a known margin.
"""

import numpy as np
from scipy.optimize import linprog

from isddp.compare import SmoothInstance, sample_instance
from isddp.model import (AffinePiece, Box, MultistageProblem,
                         PolyhedralFunction, Realization, StageModel)
from isddp.subsolve import SubproblemInstance


def polyhedral(pieces, dim_y, dim_x):
    """PolyhedralFunction from (slope_y, slope_x, offset) triples."""
    return PolyhedralFunction(
        tuple(AffinePiece(np.asarray(sy, dtype=float),
                          np.asarray(sx, dtype=float), float(off))
              for sy, sx, off in pieces),
        dim_y, dim_x)


def single_var_instance(cost_pieces, ineq=(), lo=0.0, hi=1.0, xbar=0.5):
    """1-D decision / 1-D state instance, the workhorse of pinned examples."""
    cost = polyhedral(cost_pieces, 1, 1)
    gs = tuple(polyhedral(p, 1, 1) for p in ineq)
    return SubproblemInstance(
        cost=cost, A=np.zeros((0, 1)), B=np.zeros((0, 1)), b=np.zeros(0),
        ineq=gs, Y=Box(np.array([lo]), np.array([hi])),
        xbar=np.array([xbar]))


def random_instance(rng, state_dim=None, decision_dim=None, n_eq=None,
                    n_ineq=None, max_pieces=6, interior_margin=0.3,
                    value_model=None):
    """Random feasible subproblem: y0 interior of Y is drawn first, equality
    right-hand sides and inequality offsets are derived from it."""
    if state_dim is None:
        state_dim = int(rng.integers(1, 3))
    if decision_dim is None:
        decision_dim = int(rng.integers(1, 5))
    m, n = decision_dim, state_dim
    lower = rng.uniform(-2.0, 0.0, size=m)
    upper = lower + rng.uniform(1.0, 3.0, size=m)
    Y = Box(lower, upper)
    xbar = rng.uniform(-1.0, 1.0, size=n)
    y0 = lower + rng.uniform(0.35, 0.65, size=m) * (upper - lower)

    if n_eq is None:
        n_eq = int(rng.integers(0, min(m, 2) + 1))
    A = rng.normal(size=(n_eq, m))
    B = rng.normal(size=(n_eq, n))
    b = A @ y0 + B @ xbar

    n_pieces = int(rng.integers(1, max_pieces + 1))
    cost = polyhedral(
        [(rng.normal(size=m), rng.normal(size=n), float(rng.normal()))
         for _ in range(n_pieces)], m, n)

    if n_ineq is None:
        n_ineq = int(rng.integers(0, 3))
    ineq = []
    for _ in range(n_ineq):
        pieces = []
        for _ in range(int(rng.integers(1, 4))):
            gy = rng.normal(size=m)
            gx = rng.normal(size=n)
            off = -(gy @ y0 + gx @ xbar) - interior_margin
            pieces.append((gy, gx, off))
        ineq.append(polyhedral(pieces, m, n))

    return SubproblemInstance(cost=cost, A=A, B=B, b=b, ineq=tuple(ineq),
                              Y=Y, xbar=xbar, value_model=value_model)


def subproblem_from_stage(problem, t, j, xbar, value_model=None):
    """SubproblemInstance for stage t, realization j of a parsed problem."""
    stage = problem.stage(t)
    r = stage.realizations[j]
    return SubproblemInstance(
        cost=r.cost, A=r.A, B=r.B, b=r.b, ineq=r.ineq_constraints,
        Y=stage.state_set, xbar=np.asarray(xbar, dtype=float),
        value_model=value_model)


def reference_value(inst, xbar=None):
    """Exact optimal value by an independent LP solver; +inf when infeasible.

    Builds the substituted epigraph LP directly from the instance data and
    hands it to scipy's HiGHS interface, sharing no code with the package's
    own simplex engine.
    """
    xv = inst.xbar if xbar is None else np.asarray(xbar, dtype=float)
    m = inst.cost.dim_y
    pool = []
    if inst.value_model is not None and len(inst.value_model) > 0:
        pool = [(np.asarray(cut.slope, dtype=float), float(cut.intercept))
                for cut in inst.value_model]
    n_epi = 1 + (1 if pool else 0)
    ncols = m + n_epi
    c = np.zeros(ncols)
    c[m:] = 1.0

    rows_ub, rhs_ub = [], []
    sy, sx, off = inst.cost.stacked()
    for p in range(len(off)):
        row = np.zeros(ncols)
        row[:m] = sy[p]
        row[m] = -1.0
        rows_ub.append(row)
        rhs_ub.append(-(off[p] + sx[p] @ xv))
    for beta, theta in pool:
        row = np.zeros(ncols)
        row[:m] = beta
        row[m + 1] = -1.0
        rows_ub.append(row)
        rhs_ub.append(-theta)
    for g in inst.ineq:
        gy, gx, goff = g.stacked()
        for p in range(len(goff)):
            row = np.zeros(ncols)
            row[:m] = gy[p]
            rows_ub.append(row)
            rhs_ub.append(-(goff[p] + gx[p] @ xv))

    kwargs = {}
    if len(inst.b):
        A_eq = np.zeros((len(inst.b), ncols))
        A_eq[:, :m] = inst.A
        kwargs = {"A_eq": A_eq, "b_eq": inst.b - inst.B @ xv}
    bounds = [(inst.Y.lower[j], inst.Y.upper[j]) for j in range(m)]
    bounds += [(None, None)] * n_epi
    res = linprog(c, A_ub=np.array(rows_ub), b_ub=np.array(rhs_ub),
                  bounds=bounds, method="highs", **kwargs)
    if res.status == 2:
        return np.inf
    assert res.status == 0, f"reference LP failed: {res.message}"
    return float(res.fun)


def _piece_floor(piece, ybox, xlow, xhigh):
    lo = float(piece.offset)
    lo += np.minimum(piece.slope_y * ybox.lower, piece.slope_y * ybox.upper).sum()
    lo += np.minimum(piece.slope_x * xlow, piece.slope_x * xhigh).sum()
    return lo


def random_problem(rng, horizon=2, n_realizations=2, state_dim=1, max_pieces=3):
    """Random multistage problem with box state sets and polyhedral costs.

    Stage costs carry no equality or inequality coupling, so every
    subproblem is feasible for any parent state.  cost_lower_bound is the
    best single-piece minimum over the stage box times the parent box,
    which is a valid floor for a pointwise max of affine pieces.
    """
    x0 = rng.uniform(-0.5, 0.5, size=state_dim)
    stages = []
    prev_low, prev_high = x0.copy(), x0.copy()
    for t in range(1, horizon + 1):
        lower = rng.uniform(-1.0, 0.0, size=state_dim)
        upper = lower + rng.uniform(1.0, 2.0, size=state_dim)
        box = Box(lower=lower, upper=upper)
        count = 1 if t == 1 else n_realizations
        probs = rng.uniform(0.2, 1.0, size=count)
        probs /= probs.sum()
        probs[-1] = 1.0 - probs[:-1].sum()
        realizations = []
        floor = np.inf
        for j in range(count):
            n_pieces = int(rng.integers(1, max_pieces + 1))
            pieces = tuple(
                AffinePiece(slope_y=rng.normal(size=state_dim),
                            slope_x=rng.normal(size=len(prev_low)),
                            offset=float(rng.normal()))
                for _ in range(n_pieces))
            cost = PolyhedralFunction(pieces, state_dim, len(prev_low))
            realizations.append(Realization(
                probability=float(probs[j]),
                A=np.zeros((0, state_dim)),
                B=np.zeros((0, len(prev_low))),
                b=np.zeros(0),
                cost=cost))
            floor = min(floor,
                        max(_piece_floor(p, box, prev_low, prev_high)
                            for p in pieces))
        stages.append(StageModel(state_dim=state_dim, state_set=box,
                                 realizations=tuple(realizations),
                                 cost_lower_bound=floor))
        prev_low, prev_high = lower, upper
    return MultistageProblem(horizon=horizon, x0=x0, stages=tuple(stages))


def random_smooth_instance(rng, xbar, dim=1, n_ineq=1):
    """Quadratic-over-box instance with a strictly feasible point at xbar."""
    return sample_instance(rng, xbar, dim=dim, n_ineq=n_ineq)
