"""LP assembly for parametric subproblems.

Builds equality-form LPs (min c.x, G x = h, bounds) for the simplex kernel
from polyhedral subproblem data.  Inequality rows get explicit slack columns
appended after all structural columns, so structural column indices are
stable and row duals keep the shadow-price convention of the kernel
(duals[i] = d value / d h[i]).

Two subproblem encodings are provided:

* the parametric form: variables (y, z, u, v) with coupling A y + B z = b and
  pinning rows z = xbar, whose duals are the value function's subgradient in
  the parameter;
* the substituted form: variables (y, u, v) with xbar substituted into every
  row, exposing per-constraint duals instead.

In both, u is the epigraph of the polyhedral cost and v (optional) the
epigraph of an appended cut pool in y.
"""

from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np


@dataclass
class AssembledLP:
    """Equality-form LP plus index metadata for interpreting solutions."""

    c: np.ndarray
    G: np.ndarray
    h: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    obj_const: float = 0.0
    cols: Dict[str, slice] = field(default_factory=dict)
    rows: Dict[str, slice] = field(default_factory=dict)
    ineq_rows: List[slice] = field(default_factory=list)

    @property
    def n_structural(self):
        return self.G.shape[1]


class _Builder:
    """Accumulates columns and rows; <=-rows are slacked at build time."""

    def __init__(self):
        self._col_lb = []
        self._col_ub = []
        self._col_cost = []
        self._rows = []          # (coeff row over structural cols, rhs, is_le)
        self._n_le = 0

    def add_cols(self, n, lb, ub, cost=0.0):
        start = len(self._col_lb)
        self._col_lb.extend(np.broadcast_to(lb, (n,)).tolist())
        self._col_ub.extend(np.broadcast_to(ub, (n,)).tolist())
        self._col_cost.extend(np.broadcast_to(cost, (n,)).tolist())
        return slice(start, start + n)

    def set_cost(self, cols, cost):
        vals = np.broadcast_to(cost, (cols.stop - cols.start,))
        for i, v in zip(range(cols.start, cols.stop), vals):
            self._col_cost[i] = float(v)

    def add_row(self, entries, rhs, le=False):
        """entries: list of (col_slice, coefficient vector)."""
        self._rows.append((list(entries), float(rhs), bool(le)))
        if le:
            self._n_le += 1
        return len(self._rows) - 1

    def add_rows(self, entries_list, rhs_vec, le=False):
        start = len(self._rows)
        for entries, rhs in zip(entries_list, rhs_vec):
            self.add_row(entries, rhs, le=le)
        return slice(start, len(self._rows))

    def build(self):
        n_struct = len(self._col_lb)
        m = len(self._rows)
        G = np.zeros((m, n_struct + self._n_le))
        h = np.zeros(m)
        slack_at = n_struct
        for i, (entries, rhs, le) in enumerate(self._rows):
            for cols, coef in entries:
                G[i, cols] = coef
            h[i] = rhs
            if le:
                G[i, slack_at] = 1.0
                slack_at += 1
        lb = np.concatenate([self._col_lb, np.zeros(self._n_le)])
        ub = np.concatenate([self._col_ub, np.full(self._n_le, np.inf)])
        c = np.concatenate([self._col_cost, np.zeros(self._n_le)])
        return c, G, h, lb, ub, slice(n_struct, n_struct + self._n_le)


def _pool_data(value_model):
    """Extract (slopes matrix, intercepts) from a cut pool, or None."""
    if value_model is None or len(value_model) == 0:
        return None
    slopes = np.asarray([cut.slope for cut in value_model], dtype=np.float64)
    thetas = np.asarray([cut.intercept for cut in value_model], dtype=np.float64)
    return slopes, thetas


def parametric_lp(inst, pin_param=True) -> AssembledLP:
    """The coupling form: min u + v over (y, z) with A y + B z = b, g(y,z) <= 0,
    y in Y, and (when pin_param) rows z = xbar whose duals are the subgradient
    of the parametric value in xbar.  Dropping the pinning rows leaves the
    relaxed feasible set used by dual-value evaluation, where the objective on
    z is set by the caller.
    """
    m = inst.cost.dim_y
    n = inst.cost.dim_x
    bld = _Builder()
    ycols = bld.add_cols(m, inst.Y.lower, inst.Y.upper)
    zcols = bld.add_cols(n, -np.inf, np.inf)
    ucol = bld.add_cols(1, -np.inf, np.inf, cost=1.0)
    pool = _pool_data(inst.value_model)
    vcol = bld.add_cols(1, -np.inf, np.inf, cost=1.0) if pool is not None else None

    rows = {}
    k = len(inst.b)
    rows["eq"] = bld.add_rows(
        [[(ycols, inst.A[i]), (zcols, inst.B[i])] for i in range(k)], inst.b)
    if pin_param:
        eye = np.eye(n)
        rows["param"] = bld.add_rows(
            [[(zcols, eye[i])] for i in range(n)], np.asarray(inst.xbar, dtype=float))
    sy, sx, off = inst.cost.stacked()
    rows["cost"] = bld.add_rows(
        [[(ycols, sy[p]), (zcols, sx[p]), (ucol, [-1.0])] for p in range(len(off))],
        -off, le=True)
    if pool is not None:
        slopes, thetas = pool
        rows["pool"] = bld.add_rows(
            [[(ycols, slopes[q]), (vcol, [-1.0])] for q in range(len(thetas))],
            -thetas, le=True)
    ineq_rows = []
    for g in inst.ineq:
        gy, gx, goff = g.stacked()
        ineq_rows.append(bld.add_rows(
            [[(ycols, gy[p]), (zcols, gx[p])] for p in range(len(goff))],
            -goff, le=True))

    c, G, h, lb, ub, slack = bld.build()
    cols = {"y": ycols, "z": zcols, "u": ucol, "slack": slack}
    if vcol is not None:
        cols["v"] = vcol
    return AssembledLP(c=c, G=G, h=h, lb=lb, ub=ub, cols=cols, rows=rows,
                       ineq_rows=ineq_rows)


def substituted_lp(inst) -> AssembledLP:
    """The substituted form: xbar folded into the right-hand sides, variables
    (y, u, v) only.  Row duals expose the equality multipliers and per-piece
    inequality multipliers directly.
    """
    m = inst.cost.dim_y
    xbar = np.asarray(inst.xbar, dtype=float)
    bld = _Builder()
    ycols = bld.add_cols(m, inst.Y.lower, inst.Y.upper)
    ucol = bld.add_cols(1, -np.inf, np.inf, cost=1.0)
    pool = _pool_data(inst.value_model)
    vcol = bld.add_cols(1, -np.inf, np.inf, cost=1.0) if pool is not None else None

    rows = {}
    k = len(inst.b)
    rows["eq"] = bld.add_rows(
        [[(ycols, inst.A[i])] for i in range(k)], inst.b - inst.B @ xbar)
    sy, sx, off = inst.cost.stacked()
    rows["cost"] = bld.add_rows(
        [[(ycols, sy[p]), (ucol, [-1.0])] for p in range(len(off))],
        -(off + sx @ xbar), le=True)
    if pool is not None:
        slopes, thetas = pool
        rows["pool"] = bld.add_rows(
            [[(ycols, slopes[q]), (vcol, [-1.0])] for q in range(len(thetas))],
            -thetas, le=True)
    ineq_rows = []
    for g in inst.ineq:
        gy, gx, goff = g.stacked()
        ineq_rows.append(bld.add_rows(
            [[(ycols, gy[p])] for p in range(len(goff))],
            -(goff + gx @ xbar), le=True))

    c, G, h, lb, ub, slack = bld.build()
    cols = {"y": ycols, "u": ucol, "slack": slack}
    if vcol is not None:
        cols["v"] = vcol
    return AssembledLP(c=c, G=G, h=h, lb=lb, ub=ub, cols=cols, rows=rows,
                       ineq_rows=ineq_rows)


def param_rhs_matrix(lp: AssembledLP, xs) -> np.ndarray:
    """RHS rows for sweeping the pinned parameter of a parametric_lp over the
    points xs (shape (k, n) or (k,) when n = 1)."""
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    prows = lp.rows["param"]
    if xs.shape[1] != prows.stop - prows.start:
        xs = xs.reshape(-1, prows.stop - prows.start)
    H = np.tile(lp.h, (xs.shape[0], 1))
    H[:, prows] = xs
    return H


def lagrangian_lp(inst, lam, mu) -> AssembledLP:
    """Dual-function LP for the substituted form: minimize over y in Y

        f(y, xbar) [+ pool(y)] + lam . (A y + B xbar - b) + sum_i mu_i g_i(y, xbar)

    with epigraph variables for f, the pool, and each g_i (mu must be >= 0
    for the epigraph reformulation of the max to be exact).
    """
    lam = np.asarray(lam, dtype=float)
    mu = np.asarray(mu, dtype=float)
    if np.any(mu < 0):
        raise ValueError("Lagrangian LP needs nonnegative inequality multipliers")
    xbar = np.asarray(inst.xbar, dtype=float)
    m = inst.cost.dim_y
    bld = _Builder()
    ycols = bld.add_cols(m, inst.Y.lower, inst.Y.upper,
                         cost=(inst.A.T @ lam) if len(inst.b) else np.zeros(m))
    ucol = bld.add_cols(1, -np.inf, np.inf, cost=1.0)
    pool = _pool_data(inst.value_model)
    vcol = bld.add_cols(1, -np.inf, np.inf, cost=1.0) if pool is not None else None

    sy, sx, off = inst.cost.stacked()
    rows = {}
    rows["cost"] = bld.add_rows(
        [[(ycols, sy[p]), (ucol, [-1.0])] for p in range(len(off))],
        -(off + sx @ xbar), le=True)
    if pool is not None:
        slopes, thetas = pool
        rows["pool"] = bld.add_rows(
            [[(ycols, slopes[q]), (vcol, [-1.0])] for q in range(len(thetas))],
            -thetas, le=True)
    ineq_rows = []
    for i, g in enumerate(inst.ineq):
        wcol = bld.add_cols(1, -np.inf, np.inf, cost=mu[i])
        gy, gx, goff = g.stacked()
        ineq_rows.append(bld.add_rows(
            [[(ycols, gy[p]), (wcol, [-1.0])] for p in range(len(goff))],
            -(goff + gx @ xbar), le=True))

    const = float(lam @ (inst.B @ xbar - inst.b)) if len(inst.b) else 0.0
    c, G, h, lb, ub, slack = bld.build()
    cols = {"y": ycols, "u": ucol, "slack": slack}
    if vcol is not None:
        cols["v"] = vcol
    return AssembledLP(c=c, G=G, h=h, lb=lb, ub=ub, obj_const=const,
                       cols=cols, rows=rows, ineq_rows=ineq_rows)


def slater_lp(inst, shrink_box=True, include_ineq=True) -> AssembledLP:
    """Maximize the minimum margin: box-interior margin on non-degenerate
    coordinates of Y plus slack of every inequality piece, subject to
    A y + B xbar = b.  The LP minimizes -s; the optimum's negative is the
    achievable margin (positive means a strict interior point exists).
    """
    xbar = np.asarray(inst.xbar, dtype=float)
    m = inst.cost.dim_y
    bld = _Builder()
    ycols = bld.add_cols(m, inst.Y.lower, inst.Y.upper)
    scol = bld.add_cols(1, -np.inf, np.inf, cost=-1.0)

    rows = {}
    k = len(inst.b)
    rows["eq"] = bld.add_rows(
        [[(ycols, inst.A[i])] for i in range(k)], inst.b - inst.B @ xbar)
    if shrink_box:
        eye = np.eye(m)
        for j in range(m):
            if inst.Y.lower[j] < inst.Y.upper[j]:
                # y_j - s >= l_j  and  y_j + s <= u_j
                bld.add_row([(ycols, -eye[j]), (scol, [1.0])], -inst.Y.lower[j], le=True)
                bld.add_row([(ycols, eye[j]), (scol, [1.0])], inst.Y.upper[j], le=True)
    if include_ineq:
        for g in inst.ineq:
            gy, gx, goff = g.stacked()
            for p in range(len(goff)):
                bld.add_row([(ycols, gy[p]), (scol, [1.0])],
                            -(goff[p] + gx[p] @ xbar), le=True)

    c, G, h, lb, ub, slack = bld.build()
    return AssembledLP(c=c, G=G, h=h, lb=lb, ub=ub,
                       cols={"y": ycols, "s": scol, "slack": slack}, rows=rows)


def box_linear_min(coef, box):
    """Exact min of coef . y over a box, with the minimizing point."""
    coef = np.asarray(coef, dtype=float)
    y = np.where(coef >= 0, box.lower, box.upper)
    return float(coef @ y), y


def fenchel_lp(fen, Y, xbar, A=None, B=None, b=None) -> AssembledLP:
    """Epigraph LP for the Fenchel form: min_{y in Y} max_k [y.A0_k + xbar.B0_k
    - phi0_k] + a1.xbar + a2.y, optionally subject to A y + B xbar = b.
    Duals of the epigraph rows recover the maximizing simplex weights."""
    xbar = np.asarray(xbar, dtype=float)
    m = len(fen.a2)
    K = fen.A0.shape[1]
    bld = _Builder()
    ycols = bld.add_cols(m, Y.lower, Y.upper, cost=fen.a2)
    ucol = bld.add_cols(1, -np.inf, np.inf, cost=1.0)

    rows = {}
    if A is not None and len(b):
        rows["eq"] = bld.add_rows(
            [[(ycols, A[i])] for i in range(len(b))], b - B @ xbar)
    # u >= y.A0_k + xbar.B0_k - phi0_k
    rows["pieces"] = bld.add_rows(
        [[(ycols, fen.A0[:, kk]), (ucol, [-1.0])] for kk in range(K)],
        fen.phi0 - fen.B0.T @ xbar, le=True)

    const = float(fen.a1 @ xbar)
    c, G, h, lb, ub, slack = bld.build()
    return AssembledLP(c=c, G=G, h=h, lb=lb, ub=ub, obj_const=const,
                       cols={"y": ycols, "u": ucol, "slack": slack}, rows=rows)
