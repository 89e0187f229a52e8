"""Gradient-based cuts for smooth quadratic instances and the diagnostic
comparison against the subgradient-based construction.

The instance class is deliberately narrow: a strictly convex quadratic that
pulls the decision toward the incoming state, affine inequality rows, and a
box.  Everything the comparison needs -- the exact optimum, Lagrangian dual
values, gradients, and the box maximization behind the looseness term -- then
has a closed form, so certificates carry exactly known error levels.

``cut_differentiable`` builds the gradient cut C2 from such a certificate;
``compare_bounds`` samples degraded certificates and audits, trial by trial,
the two-sided bound on C1(xbar) - C2(xbar), the sign and size of the
complementarity term <mu, g>, and the range of the looseness term.
"""

import itertools
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .cuts import Cut
from .errors import BoundViolation, Infeasible
from .model import Box
from .subsolve import Certificate

_KKT_TOL = 1e-8
_BISECT_STEPS = 80
_N_RANDOM_DIRECTIONS = 24

# An affine constraint has a constant gradient, so its co-coercivity modulus
# is 0 in the limit; a tiny positive placeholder keeps the assembled constant
# finite (a larger constant only loosens the upper bound, never breaks it).
AFFINE_MODULUS = 1e-12


@dataclass(frozen=True)
class SmoothInstance:
    """min_y  q/2 ||y - x||^2 + lin . y   over  y in Y,  G y + H x + h0 <= 0.

    The decision and the state share one dimension (the quadratic couples
    them coordinate by coordinate).  ``slater`` is a point of Y kept strictly
    inside every inequality row at the anchor states of interest; it feeds
    the multiplier bound of the comparison.  ``g_moduli`` holds one
    co-coercivity modulus per inequality row (affine rows get
    ``AFFINE_MODULUS``); the objective's modulus is exactly ``q``.
    """

    q: float
    lin: np.ndarray
    G: np.ndarray
    H: np.ndarray
    h0: np.ndarray
    Y: Box
    slater: np.ndarray
    g_moduli: Optional[np.ndarray] = None

    def __post_init__(self):
        lin = np.asarray(self.lin, dtype=float).reshape(-1)
        m = len(lin)
        G = np.asarray(self.G, dtype=float).reshape(-1, m)
        p = G.shape[0]
        H = np.asarray(self.H, dtype=float).reshape(p, m)
        h0 = np.asarray(self.h0, dtype=float).reshape(p)
        slater = np.asarray(self.slater, dtype=float).reshape(m)
        moduli = self.g_moduli
        moduli = (np.full(p, AFFINE_MODULUS) if moduli is None
                  else np.asarray(moduli, dtype=float).reshape(p))
        if not self.q > 0.0:
            raise ValueError("curvature q must be positive")
        if len(self.Y.lower) != m:
            raise ValueError("box dimension inconsistent with the objective")
        if np.any(moduli <= 0.0):
            raise ValueError("co-coercivity moduli must be positive")
        for name, arr in (("lin", lin), ("G", G), ("H", H), ("h0", h0),
                          ("slater", slater), ("g_moduli", moduli)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "q", float(self.q))

    @property
    def dim(self):
        return len(self.lin)

    @property
    def n_ineq(self):
        return self.G.shape[0]

    def objective(self, y, x):
        y = np.asarray(y, dtype=float)
        x = np.asarray(x, dtype=float)
        diff = y - x
        return float(0.5 * self.q * diff @ diff + self.lin @ y)

    def g_values(self, y, x):
        if self.n_ineq == 0:
            return np.zeros(0)
        return self.G @ np.asarray(y, dtype=float) \
            + self.H @ np.asarray(x, dtype=float) + self.h0

    def grad_y_objective(self, y, x):
        return self.q * (np.asarray(y, dtype=float)
                         - np.asarray(x, dtype=float)) + self.lin

    def grad_y_lagrangian(self, y, x, mu):
        grad = self.grad_y_objective(y, x)
        if self.n_ineq:
            grad = grad + self.G.T @ np.asarray(mu, dtype=float)
        return grad

    def grad_x_lagrangian(self, y, x, mu):
        grad = -self.q * (np.asarray(y, dtype=float)
                          - np.asarray(x, dtype=float))
        if self.n_ineq:
            grad = grad + self.H.T @ np.asarray(mu, dtype=float)
        return grad

    def dual_value(self, mu, x):
        """min over the box of the Lagrangian at multipliers mu >= 0; the
        box minimization is separable, hence exact."""
        mu = np.asarray(mu, dtype=float)
        x = np.asarray(x, dtype=float)
        c = self.lin + (self.G.T @ mu if self.n_ineq else 0.0)
        y = np.clip(x - c / self.q, self.Y.lower, self.Y.upper)
        val = self.objective(y, x)
        if self.n_ineq:
            val += float(mu @ self.g_values(y, x))
        return val

    def diameter(self):
        return float(np.linalg.norm(self.Y.upper - self.Y.lower))


# ---------------------------------------------------------------------------
# exact solve: active-set enumeration
# ---------------------------------------------------------------------------

def _exact_qp(inst: SmoothInstance, xbar) -> Tuple[np.ndarray, np.ndarray, float]:
    """Exact minimizer, multipliers, and value.  Strict convexity keeps every
    candidate stationarity system square and well posed, so enumerating which
    rows are active and which coordinates sit on a box face is exhaustive."""
    xbar = np.asarray(xbar, dtype=float)
    m, p = inst.dim, inst.n_ineq
    lo, hi = inst.Y.lower, inst.Y.upper
    best = None
    for faces in itertools.product((0, 1, 2), repeat=m):
        faces = np.array(faces)
        free = np.flatnonzero(faces == 0)
        fixed = np.flatnonzero(faces != 0)
        y = np.where(faces == 1, lo, hi).astype(float)
        for mask in range(2 ** p):
            active = [i for i in range(p) if mask >> i & 1]
            k, s = len(free), len(active)
            Ga = inst.G[active]
            top = np.hstack([inst.q * np.eye(k), Ga[:, free].T])
            bottom = np.hstack([Ga[:, free], np.zeros((s, s))])
            M = np.vstack([top, bottom]) if s else top
            rhs = np.concatenate([
                inst.q * xbar[free] - inst.lin[free],
                -(inst.h0[active] + inst.H[active] @ xbar
                  + Ga[:, fixed] @ y[fixed]) if s else np.zeros(0)])
            if k + s:
                try:
                    sol = np.linalg.solve(M, rhs)
                except np.linalg.LinAlgError:
                    continue
                if not np.all(np.isfinite(sol)):
                    continue
            else:
                sol = np.zeros(0)
            y_cand = y.copy()
            y_cand[free] = sol[:k]
            mu = np.zeros(p)
            mu[active] = sol[k:]
            if np.any(y_cand < lo - _KKT_TOL) or np.any(y_cand > hi + _KKT_TOL):
                continue
            if np.any(mu < -_KKT_TOL):
                continue
            gvals = inst.g_values(y_cand, xbar)
            if p and np.any(gvals > _KKT_TOL):
                continue
            grad = inst.grad_y_lagrangian(y_cand, xbar, mu)
            ok = True
            for j in range(m):
                if faces[j] == 1 and grad[j] < -_KKT_TOL:
                    ok = False
                elif faces[j] == 2 and grad[j] > _KKT_TOL:
                    ok = False
            if not ok:
                continue
            y_cand = np.clip(y_cand, lo, hi)
            val = inst.objective(y_cand, xbar)
            if best is None or val < best[2]:
                best = (y_cand, np.maximum(mu, 0.0), val)
    if best is None:
        raise Infeasible("no feasible point satisfies the inequality rows")
    return best


# ---------------------------------------------------------------------------
# degradation with exactly known error levels
# ---------------------------------------------------------------------------

def _directions(m, rng):
    # random rays first so independently seeded trials explore different
    # degradations; the coordinate rays guarantee coverage as a fallback
    for _ in range(_N_RANDOM_DIRECTIONS):
        yield rng.normal(size=m)
    eye = np.eye(m)
    for j in range(m):
        yield eye[j]
        yield -eye[j]


def _feasible_step_limit(inst, xbar, y0, d):
    s_max = np.inf
    for j in range(len(d)):
        if d[j] > 1e-12:
            s_max = min(s_max, (inst.Y.upper[j] - y0[j]) / d[j])
        elif d[j] < -1e-12:
            s_max = min(s_max, (inst.Y.lower[j] - y0[j]) / d[j])
    if inst.n_ineq:
        gvals = inst.g_values(y0, xbar)     # <= 0 at y0
        rates = inst.G @ d
        for i in range(inst.n_ineq):
            if rates[i] > 1e-12:
                s_max = min(s_max, max(0.0, -gvals[i]) / rates[i])
    return max(0.0, s_max)


def _raise_primal(inst, xbar, y_star, target, rng):
    """Feasible point whose objective sits exactly `target` above the optimum
    (or as high as the feasible set allows).  The rise along a ray is an
    explicit quadratic, so the hitting step is a closed-form root."""
    if target <= 0.0:
        return y_star
    g0 = inst.grad_y_objective(y_star, xbar)
    best_y, best_rise = y_star, 0.0
    for d_raw in _directions(len(y_star), rng):
        d = np.asarray(d_raw, dtype=float)
        norm = np.linalg.norm(d)
        if norm <= 1e-12:
            continue
        d = d / norm
        s_max = _feasible_step_limit(inst, xbar, y_star, d)
        if s_max <= 1e-14:
            continue
        a = 0.5 * inst.q                      # ||d|| = 1
        b = float(g0 @ d)
        s_hit = (-b + np.sqrt(b * b + 4.0 * a * target)) / (2.0 * a)
        s = min(s_hit, s_max)
        rise = a * s * s + b * s
        if rise >= target - 1e-15:
            return y_star + s * d
        if rise > best_rise:
            best_rise, best_y = rise, y_star + s * d
    return best_y


def _bisect_hit(fn, hi, target):
    """Smallest s in [0, hi] with fn(s) ~= target, for fn convex nondecreasing
    with fn(0) = 0 and fn(hi) >= target."""
    lo = 0.0
    for _ in range(_BISECT_STEPS):
        mid = 0.5 * (lo + hi)
        if fn(mid) < target:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-13 * (1.0 + hi):
            break
    return hi


def _lower_dual(inst, xbar, mu_star, theta_star, target, rng):
    """Nonnegative multipliers whose dual value sits exactly `target` below
    the optimum (or as low as the candidate segments reach)."""
    p = inst.n_ineq
    if target <= 0.0 or p == 0:
        return mu_star
    scale = 1.0 + float(np.max(mu_star, initial=0.0))
    candidates = [np.maximum(mu_star + scale * rng.normal(size=p), 0.0)
                  for _ in range(_N_RANDOM_DIRECTIONS)]
    candidates.append(np.zeros(p))
    eye = np.eye(p)
    for i in range(p):
        candidates.append(mu_star + scale * eye[i])
        candidates.append(np.maximum(mu_star - scale * eye[i], 0.0))
    best_mu, best_drop = mu_star, 0.0
    for mu_c in candidates:
        if np.allclose(mu_c, mu_star):
            continue

        def drop(a):
            return theta_star - inst.dual_value(mu_star + a * (mu_c - mu_star),
                                                xbar)

        top = drop(1.0)
        if top >= target:
            a_hit = _bisect_hit(drop, 1.0, target)
            return mu_star + a_hit * (mu_c - mu_star)
        if top > best_drop:
            best_drop, best_mu = top, mu_c
    return best_mu


def solve_smooth(inst: SmoothInstance, xbar, eps=0.0, seed=0) -> Certificate:
    """Certificate for the smooth instance at xbar: primal and dual sides are
    each degraded by exactly ``eps`` where the geometry allows it, and the
    certificate records the achieved levels.  ``eps=0`` returns the exact
    primal-dual pair (zero gap up to round-off)."""
    xbar = np.asarray(xbar, dtype=float).reshape(-1)
    y_star, mu_star, value = _exact_qp(inst, xbar)
    rng = np.random.default_rng(seed)
    y_hat, mu_hat = y_star, mu_star
    if eps > 0.0:
        y_hat = _raise_primal(inst, xbar, y_star, eps, rng)
        mu_hat = _lower_dual(inst, xbar, mu_star, value, eps, rng)
    primal = inst.objective(y_hat, xbar)
    dual = inst.dual_value(mu_hat, xbar)
    return Certificate(
        y_hat=y_hat,
        lambda_hat=inst.grad_x_lagrangian(y_hat, xbar, mu_hat),
        primal_value=primal,
        dual_value=dual,
        eps_primal=max(0.0, primal - value),
        eps_dual=max(0.0, value - dual),
        eq_multipliers=np.zeros(0),
        ineq_multipliers=mu_hat)


# ---------------------------------------------------------------------------
# the gradient cut
# ---------------------------------------------------------------------------

def looseness_term(cert: Certificate, inst: SmoothInstance, xbar) -> float:
    """max over the box of <grad_y L(y_hat), y_hat - y>: the price of y_hat
    not minimizing the Lagrangian.  Separable, hence exact; zero at an exact
    primal-dual pair, and never negative (y = y_hat is admissible)."""
    xbar = np.asarray(xbar, dtype=float).reshape(-1)
    mu = cert.ineq_multipliers
    mu = np.zeros(inst.n_ineq) if mu is None else mu
    grad = inst.grad_y_lagrangian(cert.y_hat, xbar, mu)
    return float(np.maximum(grad * (cert.y_hat - inst.Y.lower),
                            grad * (cert.y_hat - inst.Y.upper)).sum())


def cut_differentiable(cert: Certificate, inst: SmoothInstance, xbar,
                       iteration=0) -> Cut:
    """Gradient cut at xbar from an inexact primal-dual certificate: slope is
    the state gradient of the Lagrangian at (y_hat, mu_hat), the intercept is
    the Lagrangian value lowered by the looseness term, and the certified
    looseness is the dual error plus that term."""
    xbar = np.asarray(xbar, dtype=float).reshape(-1)
    mu = cert.ineq_multipliers
    mu = np.zeros(inst.n_ineq) if mu is None else mu
    ell = looseness_term(cert, inst, xbar)
    lag = inst.objective(cert.y_hat, xbar)
    if inst.n_ineq:
        lag += float(mu @ inst.g_values(cert.y_hat, xbar))
    slope = inst.grad_x_lagrangian(cert.y_hat, xbar, mu)
    return Cut(intercept=lag - ell - float(slope @ xbar), slope=slope,
               looseness=cert.eps_dual + ell, provenance="P41",
               iteration=iteration)


# ---------------------------------------------------------------------------
# comparison bounds
# ---------------------------------------------------------------------------

def multiplier_bound(inst: SmoothInstance, xbar, eps, lower_bound) -> float:
    """Bound on ||mu_hat|| from the strictly feasible point: objective height
    above ``lower_bound`` (plus the error level) divided by the smallest
    constraint margin.  Zero when there are no inequality rows."""
    if inst.n_ineq == 0:
        return 0.0
    xbar = np.asarray(xbar, dtype=float).reshape(-1)
    margins = -inst.g_values(inst.slater, xbar)
    if margins.min() <= 0.0:
        raise ValueError("slater point is not strictly feasible at xbar")
    height = inst.objective(inst.slater, xbar) - lower_bound + eps
    return height / float(margins.min())


def cocoercivity_constant(inst: SmoothInstance, xbar, eps, lower_bound) -> float:
    """Modulus of the full Lagrangian gradient: the objective's own modulus
    plus the multiplier bound times the largest constraint modulus."""
    if inst.n_ineq == 0:
        return inst.q
    u = multiplier_bound(inst, xbar, eps, lower_bound)
    return inst.q + u * float(inst.g_moduli.max())


def sample_instance(rng, xbar, dim=1, n_ineq=1) -> SmoothInstance:
    """Random quadratic-over-box instance, strictly feasible at xbar.

    The inequality offsets are back-solved from a random interior point with
    comfortable margins, so the Slater precondition of the bound assembly
    holds by construction; the same point doubles as the recorded slater
    field.
    """
    xbar = np.asarray(xbar, dtype=float).reshape(dim)
    q = float(rng.uniform(0.5, 3.0))
    lin = rng.normal(size=dim)
    lower = rng.uniform(-1.5, -0.5, size=dim)
    upper = lower + rng.uniform(1.5, 3.0, size=dim)
    interior = lower + rng.uniform(0.3, 0.7, size=dim) * (upper - lower)
    G = rng.normal(size=(n_ineq, dim))
    H = 0.3 * rng.normal(size=(n_ineq, dim))
    margins = rng.uniform(0.2, 0.6, size=n_ineq)
    h0 = -(G @ interior + H @ xbar + margins) if n_ineq else np.zeros(0)
    return SmoothInstance(q=q, lin=lin, G=G, H=H, h0=h0,
                          Y=Box(lower, upper), slater=interior)


@dataclass(frozen=True)
class TrialRow:
    trial: int
    eps: float
    c1_minus_c2: float
    lower_bound: float
    upper_bound: float


@dataclass(frozen=True)
class ComparisonReport:
    rows: Tuple[TrialRow, ...]

    def to_csv(self) -> str:
        lines = ["trial,eps,c1_minus_c2,lower_bound,upper_bound"]
        for r in self.rows:
            lines.append("%d,%r,%r,%r,%r"
                         % (r.trial, r.eps, r.c1_minus_c2,
                            r.lower_bound, r.upper_bound))
        return "\n".join(lines) + "\n"


def compare_bounds(inst: SmoothInstance, xbar, eps, trials=100,
                   seed=0) -> ComparisonReport:
    """Audit the intercept comparison on ``trials`` independently degraded
    certificates at xbar.  Per trial: C1 anchors at the primal value minus
    both errors, C2 is the gradient cut; the audit checks the two-sided bound
    on C1(xbar) - C2(xbar), that <mu_hat, g(y_hat, xbar)> lies in [-2 eps, 0],
    and that the looseness term lies in [0, 2 D sqrt(L eps) + 2 eps].  Raises
    BoundViolation naming the offending trial and certificate."""
    xbar = np.asarray(xbar, dtype=float).reshape(-1)
    _, _, value = _exact_qp(inst, xbar)
    big_l = cocoercivity_constant(inst, xbar, eps, value)
    d_y = inst.diameter()
    lower = -2.0 * eps
    upper = 2.0 * eps + 2.0 * d_y * np.sqrt(big_l * eps)
    rows = []
    rng = np.random.default_rng(seed)
    for trial in range(trials):
        cert = solve_smooth(inst, xbar, eps=eps,
                            seed=rng.integers(0, 2 ** 63 - 1))
        c1 = cert.primal_value - (cert.eps_primal + cert.eps_dual)
        cut2 = cut_differentiable(cert, inst, xbar)
        c2 = cut2.value(xbar)
        _audit_trial(trial, cert, inst, xbar, eps, c1 - c2, lower, upper)
        rows.append(TrialRow(trial=trial, eps=float(eps),
                             c1_minus_c2=c1 - c2, lower_bound=lower,
                             upper_bound=float(upper)))
    return ComparisonReport(rows=tuple(rows))


def _audit_trial(trial, cert, inst, xbar, eps, diff, lower, upper):
    tol = 1e-9
    if not (lower - tol <= diff <= upper + tol):
        raise BoundViolation(
            "trial %d: intercept difference %.12g outside [%.12g, %.12g]; "
            "certificate %r" % (trial, diff, lower, upper, cert))
    mu = cert.ineq_multipliers
    mu = np.zeros(inst.n_ineq) if mu is None else mu
    comp = float(mu @ inst.g_values(cert.y_hat, xbar)) if inst.n_ineq else 0.0
    if not (-2.0 * eps - tol <= comp <= tol):
        raise BoundViolation(
            "trial %d: complementarity term %.12g outside [%.12g, 0]; "
            "certificate %r" % (trial, comp, -2.0 * eps, cert))
    ell = looseness_term(cert, inst, xbar)
    if not (-tol <= ell <= upper + tol):
        raise BoundViolation(
            "trial %d: looseness term %.12g outside [0, %.12g]; "
            "certificate %r" % (trial, ell, upper, cert))
