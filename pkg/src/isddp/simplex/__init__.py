"""LP engine with a compiled core and a pure-python fallback.

The compiled extension (``_speedups``, Cython) and ``_fallback`` (numpy)
implement the same bounded-variable two-phase simplex with identical pivot
rules.  The backend is picked at import time; set ``ISDDP_PURE_PYTHON=1`` to
force the fallback.
"""

import os
from dataclasses import dataclass

import numpy as np

from ..errors import Infeasible, MaxPivots, NumericalTrouble, Unbounded

if os.environ.get("ISDDP_PURE_PYTHON") == "1":
    from . import _fallback as _backend
else:
    try:
        from . import _speedups as _backend
    except ImportError:
        from . import _fallback as _backend

OPTIMAL = 0
INFEASIBLE = 1
UNBOUNDED = 2
MAXPIVOTS = 3
PAUSED = 4
NUMERIC = 5

BACKEND = _backend.BACKEND_NAME


@dataclass
class SolveResult:
    status: int
    x: np.ndarray
    duals: np.ndarray
    obj: float
    state: tuple  # (basis, vstat), opaque; feed back via `state=` to resume
    pivots: int

    @property
    def optimal(self):
        return self.status == OPTIMAL

    def raise_for_status(self, allow_paused=False):
        if self.status == OPTIMAL or (allow_paused and self.status == PAUSED):
            return self
        if self.status == INFEASIBLE:
            raise Infeasible("LP infeasible")
        if self.status == UNBOUNDED:
            raise Unbounded("LP unbounded below")
        if self.status == MAXPIVOTS:
            raise MaxPivots(f"pivot budget exhausted after {self.pivots} pivots")
        raise NumericalTrouble("basis factorization failed")


def _writable(a, dtype=float):
    out = np.ascontiguousarray(a, dtype=dtype)
    if not out.flags.writeable:
        out = out.copy()
    return out


def solve(c, G, h, lb, ub, max_pivots=0, pause_every=0, state=None,
          feas_tol=1e-9, opt_tol=1e-9):
    """Solve min c.x s.t. G x = h, lb <= x <= ub.  Never raises; check status.

    `state` from a previous result warm-starts phase 2 (the caller must
    guarantee the old basis is still primal feasible, e.g. only the objective
    changed).  On a numeric failure the solve is retried cold, then with
    Bland pricing via a fresh pivot budget.
    """
    c, h, lb, ub = (_writable(v) for v in (c, h, lb, ub))
    G = _writable(np.atleast_2d(G))
    basis_in = vstat_in = None
    if state is not None:
        basis_in, vstat_in = state
    out = _backend.lp_solve(c, G, h, lb, ub, max_pivots, pause_every,
                            basis_in, vstat_in, feas_tol, opt_tol)
    if out[0] == NUMERIC and state is not None:
        out = _backend.lp_solve(c, G, h, lb, ub, max_pivots, pause_every,
                                None, None, feas_tol, opt_tol)
    status, x, duals, obj, basis, vstat, pivots = out
    return SolveResult(int(status), np.asarray(x), np.asarray(duals), float(obj),
                       (np.asarray(basis), np.asarray(vstat)), int(pivots))


def solve_many_rhs(c, G, H, lb, ub, max_pivots=0, feas_tol=1e-9, opt_tol=1e-9):
    """Objective values of the same LP under each right-hand side in H.

    Returns (statuses, values); +inf marks infeasible rows, -inf unbounded.
    """
    c, lb, ub = (_writable(v) for v in (c, lb, ub))
    G = _writable(np.atleast_2d(G))
    H = _writable(np.atleast_2d(H))
    statuses, objs = _backend.lp_solve_many(c, G, H, lb, ub,
                                            max_pivots, feas_tol, opt_tol)
    return np.asarray(statuses), np.asarray(objs)
