# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled backend: identical algorithm and pivot rules to ``_fallback``."""

import numpy as np

cimport numpy as cnp
from libc.math cimport INFINITY, fabs

cnp.import_array()

OPTIMAL = 0
INFEASIBLE = 1
UNBOUNDED = 2
MAXPIVOTS = 3
PAUSED = 4
NUMERIC = 5

BACKEND_NAME = "compiled"

cdef int C_OPTIMAL = 0, C_INFEASIBLE = 1, C_UNBOUNDED = 2
cdef int C_MAXPIVOTS = 3, C_PAUSED = 4, C_NUMERIC = 5
cdef int AT_LOWER = 0, AT_UPPER = 1, BASIC = 2, FREE_NB = 3
cdef int REFRESH_EVERY = 64
cdef int STALL_LIMIT = 120
cdef double PIVOT_TOL = 1e-11
cdef double DRIVE_TOL = 1e-7


def default_pivot_budget(m, n):
    return 20000 + 200 * (m + n)


cdef int _invert(double[:, ::1] A, double[:, ::1] out, double[:, ::1] tmp, int m) noexcept nogil:
    """Gauss-Jordan inverse with partial pivoting.  Returns -1 if singular."""
    cdef int i, j, k, p
    cdef double piv, f
    for i in range(m):
        for j in range(m):
            tmp[i, j] = A[i, j]
            out[i, j] = 1.0 if i == j else 0.0
    for k in range(m):
        p = k
        piv = fabs(tmp[k, k])
        for i in range(k + 1, m):
            if fabs(tmp[i, k]) > piv:
                piv = fabs(tmp[i, k])
                p = i
        if piv < 1e-12:
            return -1
        if p != k:
            for j in range(m):
                f = tmp[k, j]; tmp[k, j] = tmp[p, j]; tmp[p, j] = f
                f = out[k, j]; out[k, j] = out[p, j]; out[p, j] = f
        f = tmp[k, k]
        for j in range(m):
            tmp[k, j] /= f
            out[k, j] /= f
        for i in range(m):
            if i != k:
                f = tmp[i, k]
                if f != 0.0:
                    for j in range(m):
                        tmp[i, j] -= f * tmp[k, j]
                        out[i, j] -= f * out[k, j]
    return 0


cdef int _refactor(int m, int ne,
                   double[:, ::1] Gext, double[::1] h,
                   double[::1] lbx, double[::1] ubx,
                   double[::1] xval, signed char[::1] vstat,
                   cnp.int64_t[::1] basis,
                   double[:, ::1] Binv, double[:, ::1] t1, double[:, ::1] t2,
                   double[::1] rhs) noexcept nogil:
    cdef int i, r, col
    cdef cnp.int64_t j
    cdef double s, xj
    if m == 0:
        return 0
    for i in range(m):
        col = <int> basis[i]
        for r in range(m):
            t1[r, i] = Gext[r, col]
    if _invert(t1, Binv, t2, m) != 0:
        return -1
    for r in range(m):
        rhs[r] = h[r]
    for j in range(ne):
        if vstat[j] != BASIC and xval[j] != 0.0:
            xj = xval[j]
            for r in range(m):
                rhs[r] -= Gext[r, j] * xj
    for i in range(m):
        s = 0.0
        for r in range(m):
            s += Binv[i, r] * rhs[r]
        col = <int> basis[i]
        if s < lbx[col] - 1e-6 or s > ubx[col] + 1e-6:
            return -1
        xval[col] = s
    return 0


cdef int _simplex(int m, int n, int ne,
                  double[:, ::1] Gext, double[::1] h,
                  double[::1] creal, double[::1] cx,
                  double[::1] lbx, double[::1] ubx,
                  double[::1] xval, signed char[::1] vstat,
                  cnp.int64_t[::1] basis,
                  double[:, ::1] Binv, double[:, ::1] t1, double[:, ::1] t2,
                  double[::1] pi, double[::1] w, double[::1] d,
                  double[::1] ratios, double[::1] rhs,
                  int phase, int force_refresh,
                  long max_pivots, long pause_every,
                  double tol_inf, double opt_tol,
                  long* pivots_out) noexcept nogil:
    cdef long pivots = 0, phase2_entry = 0
    cdef int bland = 0, stall = 0
    cdef int refresh = REFRESH_EVERY if force_refresh else 0
    cdef double best_obj = INFINITY
    cdef int i, j, r, rr, q, bestj, col
    cdef double s, viol, best, dq, sigma_dir, delta_own, delta_rows
    cdef double den, ratio, piv, f, delta, obj_now, improvement, tie_tol, bestv
    cdef int vs, hit_upper
    cdef cnp.int64_t leave, art

    while True:
        if refresh >= REFRESH_EVERY:
            refresh = 0
            if _refactor(m, ne, Gext, h, lbx, ubx, xval, vstat, basis,
                         Binv, t1, t2, rhs) != 0:
                pivots_out[0] = pivots
                return C_NUMERIC

        # pricing: pi = cx_B Binv, d = cx - pi G
        for j in range(m):
            s = 0.0
            for i in range(m):
                s += cx[basis[i]] * Binv[i, j]
            pi[j] = s
        for j in range(ne):
            d[j] = cx[j]
        for i in range(m):
            f = pi[i]
            if f != 0.0:
                for j in range(ne):
                    d[j] -= f * Gext[i, j]

        q = -1
        best = 0.0
        dq = 0.0
        for j in range(ne):
            vs = vstat[j]
            if vs == BASIC or lbx[j] >= ubx[j]:
                continue
            s = d[j]
            viol = 0.0
            if vs == AT_LOWER:
                if s < -opt_tol:
                    viol = -s
            elif vs == AT_UPPER:
                if s > opt_tol:
                    viol = s
            else:
                if s < -opt_tol:
                    viol = -s
                elif s > opt_tol:
                    viol = s
            if viol > 0.0:
                if bland:
                    q = j
                    dq = s
                    break
                if viol > best:
                    best = viol
                    q = j
                    dq = s

        if q < 0:
            if phase == 1:
                obj_now = 0.0
                for j in range(ne):
                    obj_now += cx[j] * xval[j]
                if obj_now > tol_inf:
                    pivots_out[0] = pivots
                    return C_INFEASIBLE
                # drive basic artificials out where a structural pivot exists
                for rr in range(m):
                    if basis[rr] < n:
                        continue
                    bestj = -1
                    bestv = DRIVE_TOL
                    for j in range(n):
                        if vstat[j] == BASIC or lbx[j] >= ubx[j]:
                            continue
                        s = 0.0
                        for i in range(m):
                            s += Binv[rr, i] * Gext[i, j]
                        if fabs(s) > bestv:
                            bestv = fabs(s)
                            bestj = j
                    if bestj < 0:
                        continue
                    for i in range(m):
                        s = 0.0
                        for r in range(m):
                            s += Binv[i, r] * Gext[r, bestj]
                        w[i] = s
                    art = basis[rr]
                    piv = w[rr]
                    for j in range(m):
                        Binv[rr, j] /= piv
                    for i in range(m):
                        if i != rr:
                            f = w[i]
                            if f != 0.0:
                                for j in range(m):
                                    Binv[i, j] -= f * Binv[rr, j]
                    basis[rr] = bestj
                    vstat[bestj] = BASIC
                    vstat[art] = AT_LOWER
                    xval[art] = 0.0
                for j in range(n, ne):
                    lbx[j] = 0.0
                    ubx[j] = 0.0
                    if vstat[j] != BASIC:
                        vstat[j] = AT_LOWER
                        xval[j] = 0.0
                for j in range(ne):
                    cx[j] = creal[j]
                phase = 2
                phase2_entry = pivots
                bland = 0
                stall = 0
                best_obj = INFINITY
                refresh = REFRESH_EVERY
                continue
            pivots_out[0] = pivots
            return C_OPTIMAL

        if vstat[q] == AT_LOWER or (vstat[q] == FREE_NB and dq < 0.0):
            sigma_dir = 1.0
        else:
            sigma_dir = -1.0

        for i in range(m):
            s = 0.0
            for r in range(m):
                s += Binv[i, r] * Gext[r, q]
            w[i] = s

        delta_own = ubx[q] - lbx[q]
        delta_rows = INFINITY
        for i in range(m):
            den = sigma_dir * w[i]
            ratio = INFINITY
            col = <int> basis[i]
            if den > PIVOT_TOL:
                if lbx[col] > -INFINITY:
                    ratio = (xval[col] - lbx[col]) / den
            elif den < -PIVOT_TOL:
                if ubx[col] < INFINITY:
                    ratio = (ubx[col] - xval[col]) / (-den)
            if ratio < 0.0:
                ratio = 0.0
            ratios[i] = ratio
            if ratio < delta_rows:
                delta_rows = ratio

        if delta_own <= delta_rows:
            if delta_own == INFINITY:
                pivots_out[0] = pivots
                return C_NUMERIC if phase == 1 else C_UNBOUNDED
            for i in range(m):
                col = <int> basis[i]
                xval[col] = xval[col] - sigma_dir * w[i] * delta_own
            xval[q] = ubx[q] if sigma_dir > 0.0 else lbx[q]
            vstat[q] = AT_UPPER if sigma_dir > 0.0 else AT_LOWER
            improvement = best * delta_own if not bland else fabs(dq) * delta_own
        else:
            tie_tol = delta_rows + 1e-12 * (1.0 + delta_rows)
            r = -1
            if bland:
                for i in range(m):
                    if ratios[i] <= tie_tol:
                        if r < 0 or basis[i] < basis[r]:
                            r = i
                if fabs(w[r]) <= PIVOT_TOL:
                    r = -1
            if r < 0:
                bestv = -1.0
                for i in range(m):
                    if ratios[i] <= tie_tol and fabs(w[i]) > bestv:
                        bestv = fabs(w[i])
                        r = i
            piv = w[r]
            if fabs(piv) <= PIVOT_TOL:
                pivots_out[0] = pivots
                return C_NUMERIC
            delta = ratios[r]
            leave = basis[r]
            hit_upper = 1 if sigma_dir * w[r] < 0.0 else 0
            for i in range(m):
                col = <int> basis[i]
                xval[col] = xval[col] - sigma_dir * w[i] * delta
            xval[q] = xval[q] + sigma_dir * delta
            xval[leave] = ubx[leave] if hit_upper else lbx[leave]
            vstat[leave] = AT_UPPER if hit_upper else AT_LOWER
            vstat[q] = BASIC
            basis[r] = q
            for j in range(m):
                Binv[r, j] /= piv
            for i in range(m):
                if i != r:
                    f = w[i]
                    if f != 0.0:
                        for j in range(m):
                            Binv[i, j] -= f * Binv[r, j]
            refresh += 1
            improvement = best * delta if not bland else fabs(dq) * delta

        pivots += 1
        obj_now = 0.0
        for j in range(ne):
            obj_now += cx[j] * xval[j]
        if improvement <= 1e-12 * (1.0 + fabs(obj_now)) and obj_now >= best_obj - 1e-12 * (1.0 + fabs(obj_now)):
            stall += 1
            if stall >= STALL_LIMIT:
                bland = 1
        else:
            stall = 0
        if obj_now < best_obj:
            best_obj = obj_now

        if pivots >= max_pivots:
            pivots_out[0] = pivots
            return C_MAXPIVOTS
        if phase == 2 and pause_every > 0 and (pivots - phase2_entry) >= pause_every:
            pivots_out[0] = pivots
            return C_PAUSED


cdef _run(double[::1] c, double[:, ::1] G, double[::1] h,
          double[::1] lb, double[::1] ub,
          long max_pivots, long pause_every,
          object basis_in, object vstat_in,
          double feas_tol, double opt_tol,
          dict ws):
    """Set up buffers (cached in ws across calls) and run the core."""
    cdef int m = G.shape[0]
    cdef int n = G.shape[1]
    cdef int ne = n + m
    cdef int i, j
    if max_pivots <= 0:
        max_pivots = 20000 + 200 * (m + n)

    if not ws:
        ws["Gext"] = np.zeros((m, ne))
        ws["creal"] = np.zeros(ne)
        ws["cx"] = np.zeros(ne)
        ws["lbx"] = np.zeros(ne)
        ws["ubx"] = np.zeros(ne)
        ws["xval"] = np.zeros(ne)
        ws["vstat"] = np.zeros(ne, dtype=np.int8)
        ws["basis"] = np.zeros(m, dtype=np.int64)
        ws["Binv"] = np.zeros((m, m))
        ws["t1"] = np.zeros((m, m))
        ws["t2"] = np.zeros((m, m))
        ws["pi"] = np.zeros(m)
        ws["w"] = np.zeros(m)
        ws["d"] = np.zeros(ne)
        ws["ratios"] = np.zeros(m)
        ws["rhs"] = np.zeros(m)

    cdef double[:, ::1] Gext = ws["Gext"]
    cdef double[::1] creal = ws["creal"]
    cdef double[::1] cx = ws["cx"]
    cdef double[::1] lbx = ws["lbx"]
    cdef double[::1] ubx = ws["ubx"]
    cdef double[::1] xval = ws["xval"]
    cdef signed char[::1] vstat = ws["vstat"]
    cdef cnp.int64_t[::1] basis = ws["basis"]
    cdef double[:, ::1] Binv = ws["Binv"]
    cdef double[:, ::1] t1 = ws["t1"]
    cdef double[:, ::1] t2 = ws["t2"]
    cdef double[::1] pi = ws["pi"]
    cdef double[::1] w = ws["w"]
    cdef double[::1] d = ws["d"]
    cdef double[::1] ratios = ws["ratios"]
    cdef double[::1] rhs = ws["rhs"]

    cdef double tol_inf = feas_tol
    cdef double habs = 0.0
    for i in range(m):
        habs += fabs(h[i])
    tol_inf = feas_tol * (1.0 + habs)

    for j in range(n):
        creal[j] = c[j]
        lbx[j] = lb[j]
        ubx[j] = ub[j]
        for i in range(m):
            Gext[i, j] = G[i, j]
    for j in range(n, ne):
        creal[j] = 0.0

    cdef int phase, force_refresh
    cdef double resid, sigma_j
    cdef cnp.int64_t[::1] b_in
    cdef signed char[::1] v_in

    if basis_in is None:
        # cold start: structural vars to a finite bound (lower preferred)
        for j in range(n):
            if lb[j] > -INFINITY:
                xval[j] = lb[j]
                vstat[j] = AT_LOWER
            elif ub[j] < INFINITY:
                xval[j] = ub[j]
                vstat[j] = AT_UPPER
            else:
                xval[j] = 0.0
                vstat[j] = FREE_NB
        for i in range(m):
            resid = h[i]
            for j in range(n):
                resid -= G[i, j] * xval[j]
            sigma_j = 1.0 if resid >= 0.0 else -1.0
            for j in range(m):
                Gext[i, n + j] = 0.0
                Binv[i, j] = 0.0
            Gext[i, n + i] = sigma_j
            Binv[i, i] = sigma_j
            basis[i] = n + i
            vstat[n + i] = BASIC
            xval[n + i] = resid if resid >= 0.0 else -resid
            lbx[n + i] = 0.0
            ubx[n + i] = INFINITY
            cx[n + i] = 1.0
        for j in range(n):
            cx[j] = 0.0
        phase = 1
        force_refresh = 0
    else:
        b_in = np.ascontiguousarray(basis_in, dtype=np.int64)
        v_in = np.ascontiguousarray(vstat_in, dtype=np.int8)
        for i in range(m):
            basis[i] = b_in[i]
            for j in range(m):
                Gext[i, n + j] = 0.0
            Gext[i, n + i] = 1.0
        for j in range(ne):
            vstat[j] = v_in[j]
            cx[j] = creal[j]
        for j in range(n, ne):
            lbx[j] = 0.0
            ubx[j] = 0.0
        for j in range(ne):
            if vstat[j] == BASIC:
                xval[j] = 0.0
            elif vstat[j] == AT_UPPER:
                xval[j] = ubx[j]
            elif vstat[j] == AT_LOWER:
                xval[j] = lbx[j]
            else:
                xval[j] = 0.0
        phase = 2
        force_refresh = 1

    cdef long pivots = 0
    cdef int status
    with nogil:
        status = _simplex(m, n, ne, Gext, h, creal, cx, lbx, ubx, xval, vstat,
                          basis, Binv, t1, t2, pi, w, d, ratios, rhs,
                          phase, force_refresh, max_pivots, pause_every,
                          tol_inf, opt_tol, &pivots)

    x_out = np.asarray(ws["xval"])[:n].copy()
    obj = float(np.dot(np.asarray(ws["creal"])[:n], x_out))
    if status == C_OPTIMAL or status == C_PAUSED:
        duals = np.zeros(m)
        for j in range(m):
            sigma_j = 0.0
            for i in range(m):
                sigma_j += cx[basis[i]] * Binv[i, j]
            duals[j] = sigma_j
    else:
        duals = np.zeros(m)
    basis_out = np.asarray(ws["basis"]).copy()
    vstat_out = np.asarray(ws["vstat"]).copy()
    return (int(status), x_out, duals, obj, basis_out, vstat_out, int(pivots))


def lp_solve(c, G, h, lb, ub, max_pivots=0, pause_every=0,
             basis_in=None, vstat_in=None, feas_tol=1e-9, opt_tol=1e-9):
    """Solve one LP.  Returns (status, x, duals, obj, basis, vstat, pivots)."""
    c = np.ascontiguousarray(c, dtype=np.float64)
    G = np.ascontiguousarray(G, dtype=np.float64)
    h = np.ascontiguousarray(h, dtype=np.float64)
    lb = np.ascontiguousarray(lb, dtype=np.float64)
    ub = np.ascontiguousarray(ub, dtype=np.float64)
    if G.ndim != 2:
        G = G.reshape(len(h), len(c))
    return _run(c, G, h, lb, ub, max_pivots, pause_every,
                basis_in, vstat_in, feas_tol, opt_tol, {})


def lp_solve_many(c, G, H, lb, ub, max_pivots=0, feas_tol=1e-9, opt_tol=1e-9):
    """Cold-solve the same LP for every right-hand side row of H."""
    c = np.ascontiguousarray(c, dtype=np.float64)
    G = np.ascontiguousarray(G, dtype=np.float64)
    H = np.ascontiguousarray(np.atleast_2d(H), dtype=np.float64)
    lb = np.ascontiguousarray(lb, dtype=np.float64)
    ub = np.ascontiguousarray(ub, dtype=np.float64)
    cdef int k = H.shape[0]
    cdef int i
    statuses = np.empty(k, dtype=np.int64)
    objs = np.empty(k, dtype=np.float64)
    ws = {}
    for i in range(k):
        st, _x, _du, obj, _b, _v, _p = _run(c, G, H[i], lb, ub, max_pivots, 0,
                                            None, None, feas_tol, opt_tol, ws)
        statuses[i] = st
        if st == C_INFEASIBLE:
            objs[i] = np.inf
        elif st == C_UNBOUNDED:
            objs[i] = -np.inf
        else:
            objs[i] = obj
    return statuses, objs
