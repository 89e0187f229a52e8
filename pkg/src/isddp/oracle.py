"""Ground truth at desk scale.

Two independent evaluation routes for the same quantities:

* the extensive form — one monolithic LP over every node of the scenario
  tree, giving the exact optimal value and per-node decisions;
* a backward grid recursion for 1-D states whose inner minimizations are
  solved in closed form (no LPs at all), giving expected cost-to-go values
  together with a conservative interpolation error bound.

Agreement of the two within the reported bound is the package's strongest
self-check, since they share no solution machinery.
"""

from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np

from . import _lp, simplex
from .errors import Infeasible, TooLarge, Unbounded
from .model import MultistageProblem
from .subsolve import SubproblemInstance

MAX_NODES = 100_000
MAX_ENTRIES = 50_000_000
DEFAULT_GRID = 1001
_TOL = 1e-12


@dataclass(frozen=True)
class TreeNode:
    """One scenario-tree node; the root sits at stage 0 and carries x0."""

    id: int
    stage: int
    parent: Optional[int]
    children: Tuple[int, ...]
    probability: float        # transition probability given the parent
    path_probability: float   # product of transition probabilities from root
    realization: Optional[int]  # index within the stage; None at the root


def tree_size(problem: MultistageProblem, t_start=1) -> int:
    """Node count of the (sub)tree rooted just before stage t_start."""
    total, width = 1, 1
    for t in range(t_start, problem.horizon + 1):
        width *= problem.stage(t).n_realizations
        total += width
    return total


def build_tree(problem: MultistageProblem) -> List[TreeNode]:
    """Materialize the scenario tree in breadth-first, realization-minor order."""
    if tree_size(problem) > MAX_NODES:
        raise TooLarge(f"scenario tree has more than {MAX_NODES} nodes")
    parents = [0]
    meta = [(0, None, None, 1.0, 1.0)]  # stage, parent, realization, p, path_p
    children: List[List[int]] = [[]]
    for t in range(1, problem.horizon + 1):
        next_parents = []
        for pid in parents:
            for j, r in enumerate(problem.stage(t).realizations):
                nid = len(meta)
                meta.append((t, pid, j, r.probability,
                             meta[pid][4] * r.probability))
                children.append([])
                children[pid].append(nid)
                next_parents.append(nid)
        parents = next_parents
    return [TreeNode(id=i, stage=s, parent=p, children=tuple(children[i]),
                     probability=pr, path_probability=pp, realization=j)
            for i, (s, p, j, pr, pp) in enumerate(meta)]


def _solve_slice(problem, t_start, x_root):
    """Optimal value of stages t_start..T below a fixed incoming state.

    Returns (value, decisions) with decisions a dict from local node id
    (0 = the fixed root) to the optimal state vector; (inf, {}) when the
    slice is infeasible.
    """
    if tree_size(problem, t_start) > MAX_NODES:
        raise TooLarge(f"scenario tree has more than {MAX_NODES} nodes")
    x_root = np.asarray(x_root, dtype=float)
    bld = _lp._Builder()
    # local node table: (stage, realization, parent local id, ycols, ucol)
    nodes = [(t_start - 1, None, None, None, None)]
    level = [0]
    for t in range(t_start, problem.horizon + 1):
        stage = problem.stage(t)
        nxt = []
        for pid in level:
            for j in range(stage.n_realizations):
                ycols = bld.add_cols(stage.state_dim, stage.state_set.lower,
                                     stage.state_set.upper)
                ucol = bld.add_cols(1, -np.inf, np.inf)
                nxt.append(len(nodes))
                nodes.append((t, j, pid, ycols, ucol))
        level = nxt

    # path probabilities weight the epigraph columns
    path_p = {0: 1.0}
    for nid, (t, j, pid, ycols, ucol) in enumerate(nodes):
        if nid == 0:
            continue
        p = problem.stage(t).realizations[j].probability
        path_p[nid] = path_p[pid] * p
        bld.set_cost(ucol, path_p[nid])

    for nid, (t, j, pid, ycols, ucol) in enumerate(nodes):
        if nid == 0:
            continue
        r = problem.stage(t).realizations[j]
        par_y = nodes[pid][3]

        def coupled(row_y, row_x, rhs, le):
            if par_y is None:
                bld.add_row([(ycols, row_y)], rhs - row_x @ x_root, le=le)
            else:
                bld.add_row([(ycols, row_y), (par_y, row_x)], rhs, le=le)

        for i in range(len(r.b)):
            coupled(r.A[i], r.B[i], r.b[i], le=False)
        sy, sx, off = r.cost.stacked()
        for p in range(len(off)):
            if par_y is None:
                bld.add_row([(ycols, sy[p]), (ucol, [-1.0])],
                            -off[p] - sx[p] @ x_root, le=True)
            else:
                bld.add_row([(ycols, sy[p]), (par_y, sx[p]), (ucol, [-1.0])],
                            -off[p], le=True)
        for g in r.ineq_constraints:
            gy, gx, goff = g.stacked()
            for p in range(len(goff)):
                coupled(gy[p], gx[p], -goff[p], le=True)

    c, G, h, lb, ub, _ = bld.build()
    if G.size > MAX_ENTRIES:
        raise TooLarge("extensive-form LP exceeds the dense size guard")
    res = simplex.solve(c, G, h, lb, ub)
    if res.status == simplex.INFEASIBLE:
        return np.inf, {}
    if res.status == simplex.UNBOUNDED:
        raise Unbounded("extensive form unbounded below: invariant violation")
    res.raise_for_status()
    decisions = {0: x_root.copy()}
    for nid, (t, j, pid, ycols, ucol) in enumerate(nodes):
        if nid:
            decisions[nid] = res.x[ycols].copy()
    return float(res.obj), decisions


def extensive_form(problem: MultistageProblem):
    """Exact optimal value of the full problem and the per-node decisions,
    keyed by the ids of build_tree (0 is the root holding x0)."""
    value, decisions = _solve_slice(problem, 1, problem.x0)
    if not np.isfinite(value):
        raise Infeasible("extensive form is infeasible")
    return value, decisions


def subtree_value(problem: MultistageProblem, t: int, x) -> float:
    """Expected optimal cost of stages t..T given x_{t-1} = x; 0 for t = T+1,
    +inf when some stage-t subproblem is infeasible at x."""
    if not 1 <= t <= problem.horizon + 1:
        raise ValueError(f"stage {t} outside 1..{problem.horizon + 1}")
    if t == problem.horizon + 1:
        return 0.0
    return _solve_slice(problem, t, x)[0]


def single_value_function_grid(inst: SubproblemInstance, xs) -> np.ndarray:
    """Q(x) of one subproblem on a grid of parameter points; +inf marks the
    infeasible points.  One warm parametric LP sweep, exact per point."""
    xs = np.asarray(xs, dtype=float)
    n = inst.cost.dim_x
    pts = xs.reshape(-1, n)
    lp = _lp.parametric_lp(inst)
    H = _lp.param_rhs_matrix(lp, pts)
    statuses, vals = simplex.solve_many_rhs(lp.c, lp.G, H, lp.lb, lp.ub)
    bad = statuses == simplex.UNBOUNDED
    if np.any(bad):
        raise Unbounded("value function unbounded below at a grid point")
    return vals


# ---------------------------------------------------------------------------
# 1-D backward grid recursion (LP-free)
# ---------------------------------------------------------------------------

def _inner_min_1d(r, xs, ybox, vgrid_x, vgrid_v):
    """min over feasible scalar y of cost_r(y, x) + Vhat(y), vectorized in x.

    Vhat is the piecewise-linear interpolant of (vgrid_x, vgrid_v) (absent at
    the last stage).  The minimand is convex piecewise linear in y, so its
    minimum over the feasible interval sits at an interval endpoint, a kink
    of Vhat, or a crossing of two cost pieces; all candidates are closed-form.
    """
    xs = np.asarray(xs, dtype=float).ravel()
    npts = len(xs)
    lo = np.full(npts, ybox.lower[0])
    hi = np.full(npts, ybox.upper[0])
    feas = np.ones(npts, dtype=bool)

    for i in range(len(r.b)):
        a = r.A[i, 0]
        rhs = r.b[i] - r.B[i, 0] * xs
        if abs(a) > _TOL:
            pin = rhs / a
            lo = np.maximum(lo, pin)
            hi = np.minimum(hi, pin)
        else:
            feas &= np.abs(rhs) <= 1e-9
    for g in r.ineq_constraints:
        gy, gx, goff = g.stacked()
        for p in range(len(goff)):
            rate = gy[p, 0]
            level = gx[p, 0] * xs + goff[p]
            if rate > _TOL:
                hi = np.minimum(hi, -level / rate)
            elif rate < -_TOL:
                lo = np.maximum(lo, -level / rate)
            else:
                feas &= level <= 1e-9
    feas &= lo <= hi + 1e-12

    sy, sx, off = r.cost.stacked()
    sy1, sx1 = sy[:, 0], sx[:, 0]
    cands = [lo[:, None], hi[:, None]]
    if vgrid_x is not None:
        cands.append(np.broadcast_to(vgrid_x, (npts, len(vgrid_x))))
    K = len(off)
    for k in range(K):
        for l in range(k + 1, K):
            den = sy1[k] - sy1[l]
            if abs(den) > _TOL:
                cross = -((off[k] - off[l]) + (sx1[k] - sx1[l]) * xs) / den
                cands.append(cross[:, None])
    C = np.clip(np.concatenate(cands, axis=1), lo[:, None], hi[:, None])

    cost = np.max(sy1[None, None, :] * C[:, :, None]
                  + (sx1[None, :] * xs[:, None])[:, None, :]
                  + off[None, None, :], axis=2)
    if vgrid_x is not None:
        cost = cost + np.interp(C.ravel(), vgrid_x, vgrid_v).reshape(C.shape)
    vals = cost.min(axis=1)
    vals[~feas] = np.inf
    return vals


def _grid_dp_1d(problem, t, xs, resolution):
    """Backward recursion for Q_t on 1-D states, with a conservative bound.

    The continuation function entering each level is the chord interpolant
    of convex samples, hence an overestimate; each level's contribution to
    the error bound is twice its largest adjacent sample difference (a bound
    on cell oscillation via the neighboring chord slopes).
    """
    T = problem.horizon
    vgrid_x = vgrid_v = None
    bound = 0.0
    vals = np.zeros(len(np.asarray(xs).ravel()))
    for s in range(T, t - 1, -1):
        stage = problem.stage(s)
        if s == t:
            target = np.asarray(xs, dtype=float).ravel()
        else:
            prev_box = problem.stage(s - 1).state_set
            target = np.linspace(prev_box.lower[0], prev_box.upper[0],
                                 resolution)
        vals = np.zeros(len(target))
        for r in stage.realizations:
            vals = vals + r.probability * _inner_min_1d(
                r, target, stage.state_set, vgrid_x, vgrid_v)
        if s > t:
            bound += 2.0 * float(np.max(np.abs(np.diff(vals))))
        vgrid_x, vgrid_v = target, vals
    return vals, bound


def true_Q_grid(problem: MultistageProblem, t: int, xs,
                resolution=DEFAULT_GRID):
    """Expected cost-to-go Q_t at the points xs (values, error_bound).

    1-D state chains use the LP-free grid recursion with its interpolation
    bound; 2-D states fall back to one extensive-form solve per point
    (bound 0).  t = T+1 returns zeros by convention.
    """
    xs = np.asarray(xs, dtype=float)
    T = problem.horizon
    if not 1 <= t <= T + 1:
        raise ValueError(f"stage {t} outside 1..{T + 1}")
    dim = problem.prev_dim(t)
    pts = xs.reshape(-1, dim)
    if t == T + 1:
        return np.zeros(len(pts)), 0.0
    if dim > 2:
        raise TooLarge("grid evaluation supports state dimensions 1 and 2")
    chain_1d = dim == 1 and all(
        problem.stage(s).state_dim == 1 for s in range(t, T + 1))
    if chain_1d:
        return _grid_dp_1d(problem, t, pts[:, 0], resolution)
    vals = np.array([subtree_value(problem, t, p) for p in pts])
    return vals, 0.0
