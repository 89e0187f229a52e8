"""Inexact cut constructors and the growing polyhedral value models.

Every constructor turns a solve certificate into an affine minorant of the
subproblem value function.  The recorded ``looseness`` is the certified bound
on Q(xbar) - C(xbar); validity C <= Q holds everywhere by weak duality no
matter how inexact the certificate is.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterator, Optional, Sequence

import numpy as np

from .errors import NegativeMultiplier, SlaterCheckFailed

MULTIPLIER_TOL = 1e-9
SLATER_TOL = 1e-7

PROVENANCE_TAGS = ("P21", "P22", "P31", "P32", "P41", "initial")


@dataclass(frozen=True)
class Cut:
    """Affine minorant intercept + <slope, x> with its recorded error budget."""

    intercept: float
    slope: np.ndarray
    looseness: float
    provenance: str
    iteration: int = 0

    def __post_init__(self):
        slope = np.array(self.slope, dtype=float).reshape(-1)
        slope.setflags(write=False)
        object.__setattr__(self, "slope", slope)
        object.__setattr__(self, "intercept", float(self.intercept))
        object.__setattr__(self, "looseness", float(self.looseness))
        if not (np.all(np.isfinite(slope)) and np.isfinite(self.intercept)):
            raise ValueError("cut coefficients must be finite")
        if not self.looseness >= 0.0:
            raise ValueError(f"looseness {self.looseness} must be >= 0")
        if self.provenance not in PROVENANCE_TAGS:
            raise ValueError(f"unknown provenance tag {self.provenance!r}")

    @property
    def dim(self) -> int:
        return len(self.slope)

    def value(self, x) -> float:
        return self.intercept + float(self.slope @ np.asarray(x, dtype=float))


class CutPool:
    """Growing max-of-affine lower model of a stage value function.

    A pool never drops cuts, so evaluation is pointwise nondecreasing over
    the life of a run, and it always contains at least the flat cut planted
    from the stage's cost lower bound (so evaluation is defined everywhere).
    """

    def __init__(self, dim: int, lower_bound: float = 0.0,
                 cuts: Optional[Sequence[Cut]] = None):
        self.dim = int(dim)
        if cuts is None:
            cuts = [Cut(intercept=float(lower_bound), slope=np.zeros(self.dim),
                        looseness=0.0, provenance="initial", iteration=0)]
        self._cuts = list(cuts)
        if not self._cuts:
            raise ValueError("a cut pool is never empty")
        for cut in self._cuts:
            if cut.dim != self.dim:
                raise ValueError(
                    f"cut dimension {cut.dim} != pool dimension {self.dim}")
        self._stacked = None

    def __len__(self) -> int:
        return len(self._cuts)

    def __iter__(self) -> Iterator[Cut]:
        return iter(self._cuts)

    def __getitem__(self, i) -> Cut:
        return self._cuts[i]

    @property
    def cuts(self) -> tuple:
        return tuple(self._cuts)

    def append(self, cut: Cut) -> None:
        if cut.dim != self.dim:
            raise ValueError(
                f"cut dimension {cut.dim} != pool dimension {self.dim}")
        self._cuts.append(cut)
        self._stacked = None

    def _matrices(self):
        if self._stacked is None:
            slopes = np.array([c.slope for c in self._cuts])
            thetas = np.array([c.intercept for c in self._cuts])
            self._stacked = (slopes, thetas)
        return self._stacked

    def eval(self, x) -> float:
        slopes, thetas = self._matrices()
        return float(np.max(slopes @ np.asarray(x, dtype=float) + thetas))

    def eval_grid(self, xs) -> np.ndarray:
        pts = np.asarray(xs, dtype=float).reshape(-1, self.dim)
        slopes, thetas = self._matrices()
        return np.max(pts @ slopes.T + thetas[None, :], axis=1)

    def to_json(self) -> str:
        docs = [{"intercept": c.intercept, "slope": c.slope.tolist(),
                 "looseness": c.looseness, "provenance": c.provenance,
                 "iteration": c.iteration} for c in self._cuts]
        return json.dumps(docs, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "CutPool":
        docs = json.loads(text)
        cuts = [Cut(intercept=d["intercept"], slope=np.asarray(d["slope"]),
                    looseness=d["looseness"], provenance=d["provenance"],
                    iteration=int(d["iteration"])) for d in docs]
        if not cuts:
            raise ValueError("a cut pool is never empty")
        return cls(dim=cuts[0].dim, cuts=cuts)


def pool_append(pool: CutPool, cut: Cut) -> CutPool:
    """Functional append: a new pool sharing the (immutable) cuts."""
    return CutPool(dim=pool.dim, cuts=pool.cuts + (cut,))


def pool_eval(pool: CutPool, x) -> float:
    return pool.eval(x)


def pool_eval_all_grid(pool: CutPool, grid) -> np.ndarray:
    return pool.eval_grid(grid)


# ---------------------------------------------------------------------------
# cut constructors
# ---------------------------------------------------------------------------

def cut_affine_constraints(cert, B, C, xbar, iteration: int = 0) -> Cut:
    """Cut from constraint multipliers when the parameter enters only the
    right-hand sides: equalities Ay + Bx = b and inequalities g(y) <= Cx.

    The slope is B'lam - C'mu and the intercept anchors the primal value at
    xbar, discounted by the certified budget eps_primal + eps_dual.
    """
    B = np.asarray(B, dtype=float)
    C = np.asarray(C, dtype=float)
    xbar = np.asarray(xbar, dtype=float)
    n = len(xbar)
    lam = (np.zeros(0) if cert.eq_multipliers is None
           else np.asarray(cert.eq_multipliers, dtype=float))
    mu = (np.zeros(0) if cert.ineq_multipliers is None
          else np.asarray(cert.ineq_multipliers, dtype=float))
    if mu.size and float(mu.min()) < -MULTIPLIER_TOL:
        raise NegativeMultiplier(
            f"inequality multiplier {float(mu.min()):.3g} below zero")
    if mu.size:
        mu = np.maximum(mu, 0.0)
    slope = np.zeros(n)
    if B.size:
        slope += B.T @ lam
    if C.size:
        slope -= C.T @ mu
    looseness = float(cert.eps_primal + cert.eps_dual)
    intercept = float(cert.primal_value) - looseness - float(slope @ xbar)
    return Cut(intercept=intercept, slope=slope, looseness=looseness,
               provenance="P21", iteration=iteration)


def cut_general(cert, xbar, inst=None, sharp: bool = False,
                iteration: int = 0) -> Cut:
    """Cut from the multiplier of the parameter copy z = xbar.

    The dual function of that copy constraint is exactly affine in the
    parameter, so lambda_hat is a valid slope for any polyhedral coupling.
    When ``inst`` is supplied the strict-feasibility precondition is
    re-verified with one auxiliary LP and SlaterCheckFailed is raised on
    failure; callers that established it already may omit the instance.

    ``sharp`` anchors the intercept at the evaluated dual value instead of
    the default primal value minus the full budget; the sharp cut is
    never lower and its looseness shrinks to eps_dual.
    """
    if inst is not None:
        from .subsolve import slater_margin
        margin = slater_margin(inst)
        if not margin > SLATER_TOL:
            raise SlaterCheckFailed(
                f"strict-feasibility margin {margin:.3g} <= {SLATER_TOL:g}")
    xbar = np.asarray(xbar, dtype=float)
    slope = np.asarray(cert.lambda_hat, dtype=float)
    if sharp:
        looseness = float(cert.eps_dual)
        intercept = float(cert.dual_value) - float(slope @ xbar)
    else:
        looseness = float(cert.eps_primal + cert.eps_dual)
        intercept = float(cert.primal_value) - looseness - float(slope @ xbar)
    return Cut(intercept=intercept, slope=slope, looseness=looseness,
               provenance="P22", iteration=iteration)


def cut_fenchel_unconstrained(cert, fen, xbar, iteration: int = 0) -> Cut:
    """Cut from a saddle certificate of an unconstrained instance.

    C(x) = x'(a1 + B0 w) + y'(a2 + A0 w) - phi0'w - tau, valid everywhere
    because the weight vector w is dual-feasible for every parameter.
    """
    w = np.asarray(cert.w_hat, dtype=float)
    y = np.asarray(cert.y_hat, dtype=float)
    slope = fen.a1 + fen.B0 @ w
    intercept = float(y @ (fen.a2 + fen.A0 @ w) - fen.phi0 @ w - cert.tau)
    return Cut(intercept=intercept, slope=slope,
               looseness=float(cert.eps + cert.tau),
               provenance="P31", iteration=iteration)


def cut_fenchel_constrained(cert, fen, A, B, b, xbar,
                            iteration: int = 0) -> Cut:
    """Saddle cut with equality rows Ay + Bx = b folded in through their
    multiplier: the slope gains B'lam and the intercept re-anchors at xbar
    and pays the extra delta budget."""
    if cert.lambda_hat is None:
        raise ValueError("certificate carries no equality multipliers")
    w = np.asarray(cert.w_hat, dtype=float)
    y = np.asarray(cert.y_hat, dtype=float)
    lam = np.asarray(cert.lambda_hat, dtype=float)
    B = np.asarray(B, dtype=float)
    xbar = np.asarray(xbar, dtype=float)
    blam = B.T @ lam
    slope = fen.a1 + fen.B0 @ w + blam
    intercept = float(y @ (fen.a2 + fen.A0 @ w) - xbar @ blam
                      - fen.phi0 @ w - cert.tau - cert.delta)
    return Cut(intercept=intercept, slope=slope,
               looseness=float(cert.eps + cert.tau + cert.delta),
               provenance="P32", iteration=iteration)
