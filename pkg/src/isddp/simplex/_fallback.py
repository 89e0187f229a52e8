"""Pure-numpy backend: dense two-phase simplex with bounded variables.

Solves  min c.x  s.t.  G x = h,  lb <= x <= ub  (bound entries may be +-inf).
Inequality rows must be converted to equalities with explicit slack columns
by the caller.  Row duals follow the shadow-price convention: duals[i] is a
subgradient of the optimal value with respect to h[i], which is exactly what
cut construction needs.

Pricing is Dantzig (most violating reduced cost) with a permanent switch to
Bland's rule once the objective stalls, which guards against cycling.  The
basis inverse is kept explicitly and refreshed periodically.
"""

import numpy as np

OPTIMAL = 0
INFEASIBLE = 1
UNBOUNDED = 2
MAXPIVOTS = 3
PAUSED = 4
NUMERIC = 5

AT_LOWER = 0
AT_UPPER = 1
BASIC = 2
FREE_NB = 3

_REFRESH_EVERY = 64
_STALL_LIMIT = 120
_PIVOT_TOL = 1e-11
_DRIVE_TOL = 1e-7

BACKEND_NAME = "python"


def default_pivot_budget(m, n):
    return 20000 + 200 * (m + n)


def lp_solve(c, G, h, lb, ub, max_pivots=0, pause_every=0,
             basis_in=None, vstat_in=None, feas_tol=1e-9, opt_tol=1e-9):
    """Solve one LP.  Returns (status, x, duals, obj, basis, vstat, pivots)."""
    c = np.ascontiguousarray(c, dtype=np.float64)
    G = np.ascontiguousarray(G, dtype=np.float64)
    h = np.ascontiguousarray(h, dtype=np.float64)
    lb = np.ascontiguousarray(lb, dtype=np.float64)
    ub = np.ascontiguousarray(ub, dtype=np.float64)
    m, n = G.shape
    if max_pivots <= 0:
        max_pivots = default_pivot_budget(m, n)

    ne = n + m
    creal = np.zeros(ne)
    creal[:n] = c
    lbx = np.empty(ne)
    ubx = np.empty(ne)
    lbx[:n] = lb
    ubx[:n] = ub

    # Initial nonbasic placement for structural columns.
    x0 = np.where(np.isfinite(lb), lb, np.where(np.isfinite(ub), ub, 0.0))
    tol_inf = feas_tol * (1.0 + float(np.abs(h).sum()))

    if basis_in is None:
        r = h - G @ x0
        sigma = np.where(r >= 0.0, 1.0, -1.0)
        Gext = np.hstack([G, np.diag(sigma)]) if m else G.reshape(0, n)
        vstat = np.empty(ne, dtype=np.int8)
        vstat[:n] = np.where(np.isfinite(lb), AT_LOWER,
                             np.where(np.isfinite(ub), AT_UPPER, FREE_NB))
        vstat[n:] = BASIC
        xval = np.zeros(ne)
        xval[:n] = x0
        xval[n:] = np.abs(r)
        lbx[n:] = 0.0
        ubx[n:] = np.inf
        basis = np.arange(n, ne, dtype=np.int64)
        Binv = np.diag(sigma) if m else np.zeros((0, 0))
        cx = np.zeros(ne)
        cx[n:] = 1.0
        phase = 1
    else:
        # Resume / warm start: basis and vstat describe a phase-2 state.
        sigma = np.ones(m)
        Gext = np.hstack([G, np.diag(sigma)]) if m else G.reshape(0, n)
        basis = np.array(basis_in, dtype=np.int64).copy()
        vstat = np.array(vstat_in, dtype=np.int8).copy()
        lbx[n:] = 0.0
        ubx[n:] = 0.0
        xval = np.zeros(ne)
        nb = vstat != BASIC
        xval[nb] = np.where(vstat[nb] == AT_UPPER, ubx[nb],
                            np.where(vstat[nb] == AT_LOWER, lbx[nb], 0.0))
        try:
            Binv = np.linalg.inv(Gext[:, basis]) if m else np.zeros((0, 0))
        except np.linalg.LinAlgError:
            return (NUMERIC, xval[:n], np.zeros(m), 0.0, basis, vstat, 0)
        xnb = xval.copy()
        xnb[basis] = 0.0
        xb = Binv @ (h - Gext @ xnb) if m else np.zeros(0)
        if m and (np.any(xb < lbx[basis] - 1e-6) or np.any(xb > ubx[basis] + 1e-6)):
            return (NUMERIC, xval[:n], np.zeros(m), 0.0, basis, vstat, 0)
        if m:
            xval[basis] = xb
        cx = creal
        phase = 2

    notfixed = lbx < ubx
    pivots = 0
    phase2_entry = 0
    bland = False
    stall = 0
    best_obj = np.inf
    refresh = 0

    def refactor():
        nonlocal Binv
        if m == 0:
            return True
        try:
            Binv = np.linalg.inv(Gext[:, basis])
        except np.linalg.LinAlgError:
            return False
        xnb = xval.copy()
        xnb[basis] = 0.0
        xb = Binv @ (h - Gext @ xnb)
        if np.any(xb < lbx[basis] - 1e-6) or np.any(xb > ubx[basis] + 1e-6):
            return False
        xval[basis] = xb
        return True

    while True:
        if refresh >= _REFRESH_EVERY:
            refresh = 0
            if not refactor():
                return (NUMERIC, xval[:n], np.zeros(m), 0.0, basis, vstat, pivots)

        pi = cx[basis] @ Binv if m else np.zeros(0)
        d = cx - pi @ Gext if m else cx.copy()

        viol = np.zeros(ne)
        ml = (vstat == AT_LOWER) & notfixed & (d < -opt_tol)
        mu = (vstat == AT_UPPER) & notfixed & (d > opt_tol)
        mf = (vstat == FREE_NB) & (np.abs(d) > opt_tol)
        viol[ml] = -d[ml]
        viol[mu] = d[mu]
        viol[mf] = np.abs(d[mf])

        if bland:
            cand = np.flatnonzero(viol > 0.0)
            q = int(cand[0]) if cand.size else -1
        else:
            q = int(np.argmax(viol))
            if viol[q] <= 0.0:
                q = -1

        if q < 0:
            if phase == 1:
                obj1 = float(cx @ xval)
                if obj1 > tol_inf:
                    return (INFEASIBLE, xval[:n], np.zeros(m),
                            float(creal[:n] @ xval[:n]), basis, vstat, pivots)
                # Drive basic artificials out where possible; redundant rows
                # keep theirs, pinned to zero below.
                for rr in range(m):
                    if basis[rr] < n:
                        continue
                    row = Binv[rr] @ Gext[:, :n]
                    ok = (vstat[:n] != BASIC) & notfixed[:n] & (np.abs(row) > _DRIVE_TOL)
                    js = np.flatnonzero(ok)
                    if js.size == 0:
                        continue
                    j = int(js[np.argmax(np.abs(row[js]))])
                    wcol = Binv @ Gext[:, j]
                    art = basis[rr]
                    piv = wcol[rr]
                    Binv[rr] /= piv
                    for ii in range(m):
                        if ii != rr and wcol[ii] != 0.0:
                            Binv[ii] -= wcol[ii] * Binv[rr]
                    basis[rr] = j
                    vstat[j] = BASIC
                    vstat[art] = AT_LOWER
                    xval[art] = 0.0
                lbx[n:] = 0.0
                ubx[n:] = 0.0
                notfixed = lbx < ubx
                art_nb = np.flatnonzero(vstat[n:] != BASIC) + n
                vstat[art_nb] = AT_LOWER
                xval[art_nb] = 0.0
                cx = creal
                phase = 2
                phase2_entry = pivots
                bland = False
                stall = 0
                best_obj = np.inf
                refresh = _REFRESH_EVERY  # force refactor entering phase 2
                continue
            obj = float(creal[:n] @ xval[:n])
            duals = cx[basis] @ Binv if m else np.zeros(0)
            return (OPTIMAL, xval[:n].copy(), duals, obj, basis, vstat, pivots)

        sigma_dir = 1.0 if (vstat[q] == AT_LOWER or (vstat[q] == FREE_NB and d[q] < 0.0)) else -1.0
        w = Binv @ Gext[:, q] if m else np.zeros(0)

        delta_own = ubx[q] - lbx[q]  # inf when either bound is infinite

        den = sigma_dir * w
        ratios = np.full(m, np.inf)
        if m:
            dec = den > _PIVOT_TOL
            inc = den < -_PIVOT_TOL
            xb = xval[basis]
            with np.errstate(invalid="ignore"):
                ratios[dec] = (xb[dec] - lbx[basis[dec]]) / den[dec]
                ratios[inc] = (ubx[basis[inc]] - xb[inc]) / (-den[inc])
            np.nan_to_num(ratios, copy=False, nan=np.inf, posinf=np.inf)
            np.maximum(ratios, 0.0, out=ratios)
        delta_rows = float(ratios.min()) if m else np.inf

        if delta_own <= delta_rows:
            if not np.isfinite(delta_own):
                if phase == 1:
                    return (NUMERIC, xval[:n], np.zeros(m), 0.0, basis, vstat, pivots)
                return (UNBOUNDED, xval[:n], np.zeros(m),
                        float(creal[:n] @ xval[:n]), basis, vstat, pivots)
            # Bound flip, basis unchanged.
            if m:
                xval[basis] = xval[basis] - den * delta_own
            xval[q] = ubx[q] if sigma_dir > 0 else lbx[q]
            vstat[q] = AT_UPPER if sigma_dir > 0 else AT_LOWER
            improvement = viol[q] * delta_own
        else:
            tie = ratios <= delta_rows + 1e-12 * (1.0 + delta_rows)
            cand_rows = np.flatnonzero(tie)
            if bland:
                r = int(cand_rows[np.argmin(basis[cand_rows])])
                if abs(w[r]) <= _PIVOT_TOL:
                    r = int(cand_rows[np.argmax(np.abs(w[cand_rows]))])
            else:
                r = int(cand_rows[np.argmax(np.abs(w[cand_rows]))])
            piv = w[r]
            if abs(piv) <= _PIVOT_TOL:
                return (NUMERIC, xval[:n], np.zeros(m), 0.0, basis, vstat, pivots)
            delta = float(ratios[r])
            leave = basis[r]
            hit_upper = den[r] < 0.0
            xval[basis] = xval[basis] - den * delta
            xval[q] = xval[q] + sigma_dir * delta
            xval[leave] = ubx[leave] if hit_upper else lbx[leave]
            vstat[leave] = AT_UPPER if hit_upper else AT_LOWER
            vstat[q] = BASIC
            basis[r] = q
            Binv[r] /= piv
            wr = w.copy()
            wr[r] = 0.0
            Binv -= np.outer(wr, Binv[r])
            refresh += 1
            improvement = viol[q] * delta

        pivots += 1
        obj_now = float(cx @ xval)
        if improvement <= 1e-12 * (1.0 + abs(obj_now)) and obj_now >= best_obj - 1e-12 * (1.0 + abs(obj_now)):
            stall += 1
            if stall >= _STALL_LIMIT:
                bland = True
        else:
            stall = 0
        best_obj = min(best_obj, obj_now)

        if pivots >= max_pivots:
            return (MAXPIVOTS, xval[:n], np.zeros(m), float(creal[:n] @ xval[:n]),
                    basis, vstat, pivots)
        if phase == 2 and pause_every > 0 and (pivots - phase2_entry) >= pause_every:
            duals = cx[basis] @ Binv if m else np.zeros(0)
            return (PAUSED, xval[:n].copy(), duals, float(creal[:n] @ xval[:n]),
                    basis, vstat, pivots)


def lp_solve_many(c, G, H, lb, ub, max_pivots=0, feas_tol=1e-9, opt_tol=1e-9):
    """Cold-solve the same LP for each right-hand side row of H.

    Returns (statuses, objectives); objective is +inf for infeasible rows,
    -inf for unbounded ones.
    """
    H = np.ascontiguousarray(H, dtype=np.float64)
    k = H.shape[0]
    statuses = np.empty(k, dtype=np.int64)
    objs = np.empty(k, dtype=np.float64)
    for i in range(k):
        st, _x, _du, obj, _b, _v, _p = lp_solve(
            c, G, H[i], lb, ub, max_pivots=max_pivots,
            feas_tol=feas_tol, opt_tol=opt_tol)
        statuses[i] = st
        if st == INFEASIBLE:
            objs[i] = np.inf
        elif st == UNBOUNDED:
            objs[i] = -np.inf
        else:
            objs[i] = obj
    return statuses, objs
