"""Certified solves of one parametric subproblem.

A subproblem is min f(y, xbar) [+ pool(y)] over y in Y with A y + B xbar = b
and polyhedral inequalities g(y, xbar) <= 0.  Solves return certificates
carrying an approximately optimal primal point, an approximately optimal dual
vector for the parameter-pinning constraint, and certified error levels:
eps_primal bounds primal_value - Q(xbar) and eps_dual bounds
Q(xbar) - dual_value, both by weak-duality arithmetic (no knowledge of the
exact optimum is ever assumed).

Inexactness comes in two flavors: `truncated` stops the simplex early once
the certified gap is below target, `injected` solves exactly and then
deliberately degrades the primal point along a feasible ray and the dual
vector along a segment until the requested error levels are met, which makes
error levels reproducible for experiments.
"""

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import _lp, simplex
from .errors import NoInteriorPoint, NumericalTrouble
from .model import Box, PolyhedralFunction, fenchel_view

FEAS_TOL = 1e-9
SLATER_TOL = 1e-7
_BISECT_STEPS = 80
_N_RANDOM_DIRECTIONS = 24
_TRUNCATE_CHUNK = 2
# Dual degradations below this are indistinguishable from LP evaluation
# noise (the dual function is evaluated by a fresh solve, and near the
# boundary of its domain that solve sits on a razor edge); rather than
# certify a fictitious nano-scale error, fall back to the exact dual.
_DEGRADE_FLOOR = 1e-7


@dataclass(frozen=True)
class SubproblemInstance:
    """One parametric subproblem; immutable input to every solve."""

    cost: PolyhedralFunction
    A: np.ndarray
    B: np.ndarray
    b: np.ndarray
    ineq: Sequence[PolyhedralFunction]
    Y: Box
    xbar: np.ndarray
    value_model: Optional[object] = None  # cut pool over y, or None

    def __post_init__(self):
        m, n = self.cost.dim_y, self.cost.dim_x
        b = np.asarray(self.b, dtype=float).reshape(-1)
        A = np.asarray(self.A, dtype=float).reshape(len(b), m)
        B = np.asarray(self.B, dtype=float).reshape(len(b), n)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "ineq", tuple(self.ineq))
        object.__setattr__(self, "xbar", np.asarray(self.xbar, dtype=float).reshape(n))
        if self.Y.dim != m:
            raise ValueError(f"Y has dimension {self.Y.dim}, expected {m}")
        for g in self.ineq:
            if g.dim_y != m or g.dim_x != n:
                raise ValueError("inequality dimensions inconsistent with cost")

    def objective_value(self, y):
        """f(y, xbar) plus the pool term when a value model is attached."""
        val = self.cost.value(y, self.xbar)
        if self.value_model is not None and len(self.value_model) > 0:
            val += self.value_model.eval(y)
        return val

    def stage_cost(self, y):
        return self.cost.value(y, self.xbar)

    def max_infeasibility(self, y):
        """Largest constraint violation of y (0 when feasible)."""
        viol = 0.0
        if len(self.b):
            viol = float(np.max(np.abs(self.A @ y + self.B @ self.xbar - self.b)))
        for g in self.ineq:
            viol = max(viol, g.value(y, self.xbar))
        viol = max(viol, float(np.max(self.Y.lower - y, initial=0.0)))
        viol = max(viol, float(np.max(y - self.Y.upper, initial=0.0)))
        return viol


@dataclass(frozen=True)
class Certificate:
    """epsilon-optimal primal/dual pair with certified error levels."""

    y_hat: np.ndarray
    lambda_hat: np.ndarray
    primal_value: float
    dual_value: float
    eps_primal: float
    eps_dual: float
    eq_multipliers: Optional[np.ndarray] = None
    ineq_multipliers: Optional[np.ndarray] = None

    @property
    def gap(self):
        return self.primal_value - self.dual_value


@dataclass(frozen=True)
class FenchelCertificate:
    """Certificate for the saddle representation: simplex weights w_hat,
    inner point y_hat, optional equality multipliers lambda_hat, and the
    certified error triple (eps, tau, delta)."""

    w_hat: np.ndarray
    y_hat: np.ndarray
    lambda_hat: Optional[np.ndarray]
    eps: float
    tau: float
    delta: float
    value: float


# ---------------------------------------------------------------------------
# dual-value evaluators
# ---------------------------------------------------------------------------

def theta_value(inst: SubproblemInstance, lam, state=None):
    """Dual function of the parameter constraint: min over the relaxed set of
    f(y, z) [+ pool(y)] + lam . (xbar - z).  Returns (value, solver state);
    value is -inf when the relaxation is unbounded for this lam."""
    lam = np.asarray(lam, dtype=float)
    lp = parametric_relaxation(inst)
    return _theta_from_relaxation(inst, lp, lam, state)


def parametric_relaxation(inst):
    """Relaxed LP (parameter rows dropped) reused across theta evaluations."""
    return _lp.parametric_lp(inst, pin_param=False)


def _theta_from_relaxation(inst, lp, lam, state=None):
    c = lp.c.copy()
    c[lp.cols["z"]] = -lam
    res = simplex.solve(c, lp.G, lp.h, lp.lb, lp.ub, state=state)
    if res.status == simplex.UNBOUNDED:
        return -np.inf, None
    res.raise_for_status()
    return float(res.obj + lam @ inst.xbar), res.state


def lagrangian_theta(inst: SubproblemInstance, lam, mu):
    """Dual value for the substituted form: min over y in Y of
    f(y, xbar) [+ pool] + lam.(A y + B xbar - b) + sum_i mu_i g_i(y, xbar)."""
    lp = _lp.lagrangian_lp(inst, lam, mu)
    res = simplex.solve(lp.c, lp.G, lp.h, lp.lb, lp.ub)
    if res.status == simplex.UNBOUNDED:
        return -np.inf
    res.raise_for_status()
    return float(res.obj + lp.obj_const)


def slater_margin(inst: SubproblemInstance):
    """Best achievable joint margin: distance to the nearest box face on
    non-degenerate coordinates and slack of every inequality, over points
    satisfying the equality rows.  Negative or -inf when no point qualifies."""
    lp = _lp.slater_lp(inst)
    res = simplex.solve(lp.c, lp.G, lp.h, lp.lb, lp.ub)
    if res.status == simplex.INFEASIBLE:
        return -np.inf
    if res.status == simplex.UNBOUNDED:
        return np.inf
    res.raise_for_status()
    return float(-res.obj)


# ---------------------------------------------------------------------------
# exact solve
# ---------------------------------------------------------------------------

def _param_duals(lp, duals):
    return duals[lp.rows["param"]].copy()


def _constraint_multipliers(lp, duals):
    lam_eq = -duals[lp.rows["eq"]].copy()
    mus = np.array([-float(np.sum(duals[rows])) for rows in lp.ineq_rows])
    return lam_eq, mus


def solve_exact(inst: SubproblemInstance, dual_space="param") -> Certificate:
    """Solve to LP optimality; the certified errors are the (tiny) residual
    duality gap, never assumed to be exactly zero."""
    if dual_space == "param":
        lp = _lp.parametric_lp(inst)
        res = simplex.solve(lp.c, lp.G, lp.h, lp.lb, lp.ub)
        res.raise_for_status()
        y_hat = res.x[lp.cols["y"]].copy()
        lam = _param_duals(lp, res.duals)
        primal = inst.objective_value(y_hat)
        dual, _ = theta_value(inst, lam)
        lam_eq, mus = _constraint_multipliers(lp, res.duals)
        gap = max(0.0, primal - dual)
        return Certificate(y_hat=y_hat, lambda_hat=lam, primal_value=primal,
                           dual_value=dual, eps_primal=gap, eps_dual=gap,
                           eq_multipliers=lam_eq, ineq_multipliers=mus)
    if dual_space == "constraints":
        lp = _lp.substituted_lp(inst)
        res = simplex.solve(lp.c, lp.G, lp.h, lp.lb, lp.ub)
        res.raise_for_status()
        y_hat = res.x[lp.cols["y"]].copy()
        lam_eq, mus = _constraint_multipliers(lp, res.duals)
        mus = np.maximum(mus, 0.0)
        primal = inst.objective_value(y_hat)
        dual = lagrangian_theta(inst, lam_eq, mus)
        gap = max(0.0, primal - dual)
        return Certificate(y_hat=y_hat, lambda_hat=lam_eq, primal_value=primal,
                           dual_value=dual, eps_primal=gap, eps_dual=gap,
                           eq_multipliers=lam_eq, ineq_multipliers=mus)
    raise ValueError(f"unknown dual_space {dual_space!r}")


# ---------------------------------------------------------------------------
# truncated mode: stop the simplex at a certified gap
# ---------------------------------------------------------------------------

def _solve_truncated(inst, target_primal, target_dual):
    lp = _lp.parametric_lp(inst)
    relax = parametric_relaxation(inst)
    stop_at = min(target_primal, target_dual)
    state = None
    theta_state = None
    best = None
    while True:
        res = simplex.solve(lp.c, lp.G, lp.h, lp.lb, lp.ub,
                            pause_every=_TRUNCATE_CHUNK, state=state)
        res.raise_for_status(allow_paused=True)
        state = res.state
        y_hat = res.x[lp.cols["y"]].copy()
        lam = _param_duals(lp, res.duals)
        primal = inst.objective_value(y_hat)
        dual, theta_state = _theta_from_relaxation(inst, relax, lam, theta_state)
        gap = max(0.0, primal - dual)
        lam_eq, mus = _constraint_multipliers(lp, res.duals)
        best = Certificate(y_hat=y_hat, lambda_hat=lam, primal_value=primal,
                           dual_value=dual, eps_primal=gap, eps_dual=gap,
                           eq_multipliers=lam_eq, ineq_multipliers=mus)
        if gap <= stop_at or res.status == simplex.OPTIMAL:
            return best


# ---------------------------------------------------------------------------
# injected mode: exact solve, then deliberate degradation
# ---------------------------------------------------------------------------

def _null_project(A, d):
    if A.shape[0] == 0:
        return d
    # remove the row-space component so equality rows stay satisfied
    return d - np.linalg.pinv(A) @ (A @ d)


def _primal_step_limit(inst, y0, d):
    """Largest s >= 0 with y0 + s d feasible (box and inequalities)."""
    s_max = np.inf
    for j in range(len(d)):
        if d[j] > 1e-12:
            s_max = min(s_max, (inst.Y.upper[j] - y0[j]) / d[j])
        elif d[j] < -1e-12:
            s_max = min(s_max, (inst.Y.lower[j] - y0[j]) / d[j])
    for g in inst.ineq:
        gy, gx, goff = g.stacked()
        level = gy @ y0 + gx @ inst.xbar + goff   # <= 0 at y0
        rate = gy @ d
        for p in range(len(goff)):
            if rate[p] > 1e-12:
                s_max = min(s_max, max(0.0, -level[p]) / rate[p])
    return max(0.0, s_max)


def _bisect_increasing(fn, hi, target, tol=1e-13):
    """Smallest s in [0, hi] with fn(s) ~= target, for fn convex nondecreasing
    with fn(0) = 0 and fn(hi) >= target."""
    lo = 0.0
    for _ in range(_BISECT_STEPS):
        mid = 0.5 * (lo + hi)
        if fn(mid) < target:
            lo = mid
        else:
            hi = mid
        if hi - lo <= tol * (1.0 + hi):
            break
    return hi


def _primal_directions(m, rng):
    eye = np.eye(m)
    for j in range(m):
        yield eye[j]
        yield -eye[j]
    for _ in range(_N_RANDOM_DIRECTIONS):
        yield rng.normal(size=m)


def _degrade_primal(inst, y_star, base_value, target, rng):
    """Move along feasible rays from the optimum until the objective rises by
    `target` (or as far as the feasible set permits)."""
    if target <= 0.0:
        return y_star, 0.0
    best_y, best_rise = y_star, 0.0
    for d_raw in _primal_directions(len(y_star), rng):
        d = _null_project(inst.A, np.asarray(d_raw, dtype=float))
        norm = np.linalg.norm(d)
        if norm <= 1e-10:
            continue
        d = d / norm
        s_max = _primal_step_limit(inst, y_star, d)
        if not np.isfinite(s_max):
            s_max = 1.0 + abs(target) * 1e3  # compact Y makes this unreachable
        if s_max <= 1e-14:
            continue

        def rise(s):
            return inst.objective_value(y_star + s * d) - base_value

        top = rise(s_max)
        if top >= target:
            s_hit = _bisect_increasing(rise, s_max, target)
            y_hit = y_star + s_hit * d
            return y_hit, rise(s_hit)
        if top > best_rise:
            best_rise, best_y = top, y_star + s_max * d
    return best_y, best_rise


def _dual_candidates(lam_star, rng):
    n = len(lam_star)
    yield np.zeros(n)
    eye = np.eye(n)
    scale = 1.0 + float(np.max(np.abs(lam_star), initial=0.0))
    for j in range(n):
        yield lam_star + scale * eye[j]
        yield lam_star - scale * eye[j]
    for _ in range(_N_RANDOM_DIRECTIONS):
        yield lam_star + scale * rng.normal(size=n)


def _degrade_dual(theta_fn, lam_star, theta_star, target, rng, candidates=None):
    """Move along segments from the optimal dual until the dual value drops by
    `target`.  theta_fn(lam) must be concave.  Returns (lam_hat, theta_hat)
    with theta_hat the freshly evaluated, always finite value at lam_hat;
    candidate segments that leave the region where theta is finite are
    clipped, and numerically unusable directions are skipped.  Targets at or
    below the evaluation noise floor, and geometries where no candidate can
    drop theta past it, return the exact dual unchanged."""
    if target <= _DEGRADE_FLOOR:
        return lam_star, theta_star
    gen = candidates if candidates is not None else _dual_candidates(lam_star, rng)
    best_lam, best_theta = lam_star, theta_star
    for lam_c in gen:
        lam_c = np.asarray(lam_c, dtype=float)
        if np.allclose(lam_c, lam_star):
            continue

        def at(a):
            return lam_star + a * (lam_c - lam_star)

        def drop(a):
            val = theta_fn(at(a))
            return np.inf if val == -np.inf else theta_star - val

        a_hi = 1.0
        if drop(a_hi) == np.inf:
            # back off to the largest step with a finite dual value
            lo, hi = 0.0, a_hi
            for _ in range(_BISECT_STEPS):
                mid = 0.5 * (lo + hi)
                if drop(mid) == np.inf:
                    hi = mid
                else:
                    lo = mid
            a_hi = lo
        th_hi = theta_fn(at(a_hi))
        if th_hi == -np.inf:
            continue
        full = theta_star - th_hi
        if full >= target:
            a_hit = _bisect_increasing(drop, a_hi, target)
            th_hit = theta_fn(at(a_hit))
            if th_hit == -np.inf:
                continue
            return at(a_hit), th_hit
        if full > theta_star - best_theta:
            best_lam, best_theta = at(a_hi), th_hi
    if theta_star - best_theta <= _DEGRADE_FLOOR:
        return lam_star, theta_star
    return best_lam, best_theta


def _solve_injected(inst, target_primal, target_dual, seed, dual_space):
    exact = solve_exact(inst, dual_space=dual_space)
    rng = np.random.default_rng(seed)
    y_hat, achieved_p = _degrade_primal(
        inst, exact.y_hat, exact.primal_value, target_primal, rng)
    primal = exact.primal_value + achieved_p

    if dual_space == "param":
        relax = parametric_relaxation(inst)
        cache = {"state": None}

        def theta_fn(lam):
            val, cache["state"] = _theta_from_relaxation(inst, relax, lam,
                                                         cache["state"])
            return val

        lam_hat, dual = _degrade_dual(
            theta_fn, exact.lambda_hat, exact.dual_value, target_dual, rng)
        achieved_d = max(0.0, exact.dual_value - dual)
        return Certificate(
            y_hat=y_hat, lambda_hat=lam_hat, primal_value=primal,
            dual_value=dual,
            eps_primal=max(achieved_p, exact.eps_primal),
            eps_dual=max(achieved_d, exact.eps_dual),
            eq_multipliers=exact.eq_multipliers,
            ineq_multipliers=exact.ineq_multipliers)

    # constraints space: degrade (lam, mu) jointly, keeping mu >= 0
    k = len(exact.eq_multipliers)
    pair_star = np.concatenate([exact.eq_multipliers, exact.ineq_multipliers])

    def theta_fn(pair):
        mu = np.maximum(pair[k:], 0.0)
        return lagrangian_theta(inst, pair[:k], mu)

    pair_hat, dual = _degrade_dual(
        theta_fn, pair_star, exact.dual_value, target_dual, rng)
    achieved_d = max(0.0, exact.dual_value - dual)
    lam_eq = pair_hat[:k]
    mus = np.maximum(pair_hat[k:], 0.0)
    return Certificate(
        y_hat=y_hat, lambda_hat=lam_eq, primal_value=primal, dual_value=dual,
        eps_primal=max(achieved_p, exact.eps_primal),
        eps_dual=max(achieved_d, exact.eps_dual),
        eq_multipliers=lam_eq, ineq_multipliers=mus)


def solve_inexact(inst: SubproblemInstance, target_eps_primal, target_eps_dual,
                  mode, seed=0, dual_space="param") -> Certificate:
    """Solve to the requested certified error levels.

    `truncated` stops the simplex once the measured duality gap is below
    min(targets); `injected` solves exactly and then degrades the primal by
    target_eps_primal and the dual by target_eps_dual (or the largest
    achievable amounts, recorded in the certificate)."""
    if target_eps_primal < 0 or target_eps_dual < 0:
        raise ValueError("error targets must be nonnegative")
    if target_eps_primal == 0.0 and target_eps_dual == 0.0:
        return solve_exact(inst, dual_space=dual_space)
    if mode == "truncated":
        if dual_space != "param":
            raise ValueError("truncated mode supports the param dual space only")
        return _solve_truncated(inst, target_eps_primal, target_eps_dual)
    if mode == "injected":
        return _solve_injected(inst, target_eps_primal, target_eps_dual, seed,
                               dual_space)
    raise ValueError(f"unknown mode {mode!r}")


# ---------------------------------------------------------------------------
# Fenchel saddle solves
# ---------------------------------------------------------------------------

def _fenchel_theta(fen, Y, xbar, w, A, b, B):
    """Saddle dual value at weights w: the exact inner minimum over y."""
    cy = fen.a2 + fen.A0 @ w
    const = float(fen.a1 @ xbar + (fen.B0 @ w) @ xbar - fen.phi0 @ w)
    if A is None or len(b) == 0:
        val, _ = _lp.box_linear_min(cy, Y)
        return const + val
    res = simplex.solve(cy, A, b - B @ xbar, Y.lower, Y.upper)
    if res.status == simplex.INFEASIBLE:
        return np.inf
    res.raise_for_status()
    return const + float(res.obj)


def _simplex_candidates(w_star, rng):
    K = len(w_star)
    eye = np.eye(K)
    for kk in range(K):
        yield eye[kk]
    yield np.full(K, 1.0 / K)
    for _ in range(_N_RANDOM_DIRECTIONS):
        raw = rng.random(K)
        yield raw / raw.sum()


def solve_fenchel_saddle(inst: SubproblemInstance, eps=0.0, tau=0.0, delta=0.0,
                         mode="exact", seed=0) -> FenchelCertificate:
    """Solve the saddle form of the subproblem via the simplex-weight view of
    its polyhedral cost.  Exact mode extracts the optimal weights from the
    epigraph duals; injected mode then degrades w (by eps), y (by tau) and,
    when equality rows are present, the equality multipliers (by delta)."""
    if inst.ineq:
        raise ValueError("saddle form handles equality-constrained instances only")
    if inst.value_model is not None and len(inst.value_model) > 0:
        raise ValueError("saddle form does not take a value model")
    if mode == "truncated":
        raise ValueError("saddle solves support exact and injected modes only")
    if mode not in ("exact", "injected"):
        raise ValueError(f"unknown mode {mode!r}")
    constrained = len(inst.b) > 0
    fen = fenchel_view(inst.cost)
    if constrained:
        margin = slater_margin(inst)
        if not margin > SLATER_TOL:
            raise NoInteriorPoint(
                f"no strictly interior feasible point (margin {margin:.3g})")

    lp = _lp.fenchel_lp(fen, inst.Y, inst.xbar,
                        A=inst.A if constrained else None,
                        B=inst.B if constrained else None,
                        b=inst.b if constrained else None)
    res = simplex.solve(lp.c, lp.G, lp.h, lp.lb, lp.ub)
    res.raise_for_status()
    value = float(res.obj + lp.obj_const)
    y_star = res.x[lp.cols["y"]].copy()
    w_star = np.maximum(-res.duals[lp.rows["pieces"]], 0.0)
    total = w_star.sum()
    if abs(total - 1.0) > 1e-6:
        raise NumericalTrouble(f"simplex weights sum to {total:.6g}")
    w_star = w_star / total
    lam_star = -res.duals[lp.rows["eq"]].copy() if constrained else None

    rng = np.random.default_rng(seed)
    A = inst.A if constrained else None
    B = inst.B if constrained else None
    b = inst.b if constrained else np.zeros(0)

    def theta_w(w):
        return _fenchel_theta(fen, inst.Y, inst.xbar, w, A, b, B)

    # --- degrade the weights by eps (theta is concave over the simplex)
    theta_star = theta_w(w_star)
    w_hat, theta_hat = w_star, theta_star
    if mode == "injected" and eps > 0.0:
        w_hat, theta_hat = _degrade_dual(
            theta_w, w_star, theta_star, eps, rng,
            candidates=_simplex_candidates(w_star, rng))

    # --- the inner problem at the (possibly degraded) weights.  For the
    # constrained case it keeps the equality rows, which pins the exact
    # meaning of tau and keeps y_hat equality-feasible.
    cy_inner = fen.a2 + fen.A0 @ w_hat
    if constrained:
        res_in = simplex.solve(cy_inner, inst.A, inst.b - inst.B @ inst.xbar,
                               inst.Y.lower, inst.Y.upper)
        res_in.raise_for_status()
        inner_min, y_min = float(res_in.obj), res_in.x.copy()
    else:
        inner_min, y_min = _lp.box_linear_min(cy_inner, inst.Y)

    # --- equality multipliers and their degradation by delta
    lam_hat, achieved_delta = lam_star, 0.0
    if constrained:
        def h_fn(lam):
            cy = cy_inner + inst.A.T @ lam
            val, _ = _lp.box_linear_min(cy, inst.Y)
            return (val + float(fen.a1 @ inst.xbar)
                    + float((fen.B0 @ w_hat) @ inst.xbar)
                    - float(fen.phi0 @ w_hat)
                    + float(lam @ (inst.B @ inst.xbar - inst.b)))

        if mode == "injected":
            # re-anchor at the equality multipliers that are optimal for the
            # degraded weights, so the drop below is exactly delta
            lam_hat = -res_in.duals.copy()
            if delta > 0.0:
                lam_hat, _ = _degrade_dual(h_fn, lam_hat, h_fn(lam_hat),
                                           delta, rng)
        achieved_delta = max(0.0, theta_hat - h_fn(lam_hat))

    # --- inner point and its degradation by tau (slack measured on the
    # inner problem above, so it is exactly computable)
    y_hat = y_star if float(cy_inner @ y_star) - inner_min <= tau else y_min.copy()
    if mode == "injected" and tau > 0.0:
        y_hat = y_hat.copy()
        remaining = tau - max(0.0, float(cy_inner @ y_hat) - inner_min)
        if constrained:
            # walk along equality-preserving rays; the cost along a ray is
            # linear, so each request is met exactly or the ray is exhausted
            for d_raw in _primal_directions(len(y_hat), rng):
                if remaining <= 1e-15:
                    break
                d = _null_project(inst.A, np.asarray(d_raw, dtype=float))
                norm = np.linalg.norm(d)
                if norm <= 1e-10:
                    continue
                d = d / norm
                rate = float(cy_inner @ d)
                if rate <= 1e-12:
                    continue
                s_max = _primal_step_limit(inst, y_hat, d)
                if s_max <= 1e-14:
                    continue
                step = min(s_max, remaining / rate)
                y_hat = y_hat + step * d
                remaining -= step * rate
        else:
            # greedy coordinate moves toward the costlier box face, largest
            # coefficient first, stopping exactly at the requested slack
            for j in np.argsort(-np.abs(cy_inner)):
                if remaining <= 0.0:
                    break
                if abs(cy_inner[j]) <= 1e-15:
                    continue
                worst = inst.Y.upper[j] if cy_inner[j] > 0 else inst.Y.lower[j]
                gain = abs(cy_inner[j]) * abs(worst - y_hat[j])
                if gain <= 0.0:
                    continue
                step = min(1.0, remaining / gain)
                y_hat[j] += step * (worst - y_hat[j])
                remaining -= step * gain
    achieved_tau = max(0.0, float(cy_inner @ y_hat) - inner_min)

    # value equals the best saddle value, so value - theta(w_hat) certifies
    # the weight suboptimality in both modes
    return FenchelCertificate(
        w_hat=w_hat, y_hat=y_hat, lambda_hat=lam_hat,
        eps=max(0.0, value - theta_hat), tau=achieved_tau,
        delta=achieved_delta, value=value)
