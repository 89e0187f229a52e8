"""Cut constructor and cut pool tests: pinned examples plus grid validity."""

import numpy as np
import pytest

from helpers import (polyhedral, random_instance, reference_value,
                     single_var_instance, subproblem_from_stage)
from isddp.cuts import (Cut, CutPool, cut_affine_constraints,
                        cut_fenchel_constrained, cut_fenchel_unconstrained,
                        cut_general, pool_append, pool_eval,
                        pool_eval_all_grid)
from isddp.errors import NegativeMultiplier, SlaterCheckFailed
from isddp.model import Box, fenchel_view, parse_instance
from isddp.oracle import single_value_function_grid
from isddp.subsolve import (Certificate, FenchelCertificate,
                            SubproblemInstance, solve_exact,
                            solve_fenchel_saddle, solve_inexact)

SEED = 20240823
FIXTURE = "tests/fixtures/fixture3.json"


def ray_instance():
    """min{y : y >= z, y in [0,2]} at xbar=1; Q(x) = max(x, 0) on [0,2]."""
    return single_var_instance([(1.0, 0.0, 0.0)], ineq=[[(-1.0, 1.0, 0.0)]],
                               lo=0.0, hi=2.0, xbar=1.0)


def abs_instance():
    return single_var_instance([(1.0, -1.0, 0.0), (-1.0, 1.0, 0.0)])


def _check_validity(cut, inst, lo, hi, npts=100):
    """C(x) <= Q(x) + 1e-9 wherever Q is finite, plus anchored tightness."""
    xs = np.linspace(lo, hi, npts)
    qs = single_value_function_grid(inst, xs)
    cs = cut.intercept + xs * cut.slope[0]
    finite = np.isfinite(qs)
    assert np.all(cs[finite] <= qs[finite] + 1e-9)
    qbar = single_value_function_grid(inst, inst.xbar)[0]
    gap = qbar - cut.value(inst.xbar)
    assert -1e-9 <= gap <= cut.looseness + 1e-9


# ---------------------------------------------------------------------------
# Cut and CutPool mechanics
# ---------------------------------------------------------------------------

def test_cut_value_and_validation():
    cut = Cut(intercept=0.5, slope=[1.0, -2.0], looseness=0.1,
              provenance="P22", iteration=3)
    assert cut.dim == 2
    assert cut.value([1.0, 1.0]) == pytest.approx(-0.5)
    assert not cut.slope.flags.writeable
    with pytest.raises(ValueError):
        Cut(intercept=np.inf, slope=[1.0], looseness=0.0, provenance="P22")
    with pytest.raises(ValueError):
        Cut(intercept=0.0, slope=[np.nan], looseness=0.0, provenance="P22")
    with pytest.raises(ValueError):
        Cut(intercept=0.0, slope=[1.0], looseness=-0.1, provenance="P22")
    with pytest.raises(ValueError):
        Cut(intercept=0.0, slope=[1.0], looseness=0.0, provenance="huh")


def test_pool_initial_cut_and_append():
    pool = CutPool(dim=1, lower_bound=-2.5)
    assert len(pool) == 1
    assert pool[0].provenance == "initial"
    assert pool.eval([123.0]) == -2.5
    pool.append(Cut(intercept=0.0, slope=[1.0], looseness=0.0,
                    provenance="P22"))
    assert pool.eval([2.0]) == 2.0
    assert pool.eval([-1.0]) == -1.0   # the appended cut still dominates
    assert pool.eval([-3.0]) == -2.5   # the initial floor takes over below
    with pytest.raises(ValueError):
        pool.append(Cut(intercept=0.0, slope=[1.0, 2.0], looseness=0.0,
                        provenance="P22"))
    with pytest.raises(ValueError):
        CutPool(dim=1, cuts=[])


def test_pool_append_functional_and_eval_grid():
    base = CutPool(dim=1, lower_bound=0.0)
    grown = pool_append(base, Cut(intercept=0.0, slope=[1.0], looseness=0.0,
                                  provenance="P22"))
    assert len(base) == 1 and len(grown) == 2
    xs = np.linspace(-1.0, 2.0, 7)
    np.testing.assert_allclose(pool_eval_all_grid(grown, xs),
                               np.maximum(xs, 0.0))
    for x in xs:
        assert pool_eval(grown, [x]) == max(x, 0.0)
    # appending a dominated cut changes nothing anywhere
    flat = pool_append(grown, Cut(intercept=-5.0, slope=[0.0], looseness=0.0,
                                  provenance="P21"))
    np.testing.assert_array_equal(pool_eval_all_grid(flat, xs),
                                  pool_eval_all_grid(grown, xs))


def test_pool_monotone_under_append():
    rng = np.random.default_rng(SEED)
    pool = CutPool(dim=2, lower_bound=-1.0)
    xs = rng.uniform(-2.0, 2.0, size=(40, 2))
    prev = pool_eval_all_grid(pool, xs)
    for k in range(15):
        cut = Cut(intercept=float(rng.normal()), slope=rng.normal(size=2),
                  looseness=float(rng.uniform(0.0, 0.2)), provenance="P22",
                  iteration=k)
        pool.append(cut)
        cur = pool_eval_all_grid(pool, xs)
        assert np.all(cur >= prev - 1e-15)
        prev = cur


def test_pool_json_roundtrip():
    pool = CutPool(dim=2, lower_bound=0.25)
    pool.append(Cut(intercept=-0.125, slope=[0.3, -1.7], looseness=0.05,
                    provenance="P31", iteration=4))
    clone = CutPool.from_json(pool.to_json())
    assert len(clone) == len(pool)
    for a, b in zip(pool, clone):
        assert a.intercept == b.intercept
        np.testing.assert_array_equal(a.slope, b.slope)
        assert a.looseness == b.looseness
        assert a.provenance == b.provenance
        assert a.iteration == b.iteration
    with pytest.raises(ValueError):
        CutPool.from_json("[]")


def test_pool_feeds_subproblem_objective():
    rng = np.random.default_rng(SEED + 3)
    pool = CutPool(dim=2, lower_bound=-5.0)
    pool.append(Cut(intercept=0.3, slope=[0.5, -0.2], looseness=0.0,
                    provenance="P22"))
    pool.append(Cut(intercept=-0.1, slope=[-1.0, 0.4], looseness=0.0,
                    provenance="P22"))
    for _ in range(10):
        inst = random_instance(rng, decision_dim=2, value_model=pool)
        cert = solve_exact(inst)
        assert abs(cert.primal_value - reference_value(inst)) <= 1e-7


# ---------------------------------------------------------------------------
# constraint-multiplier cuts
# ---------------------------------------------------------------------------

def test_affine_constraints_cut_exact():
    inst = ray_instance()
    cert = solve_exact(inst, dual_space="constraints")
    C = np.array([[-1.0]])  # g(y) = -y <= -x, so the rhs matrix is -1
    cut = cut_affine_constraints(cert, inst.B, C, inst.xbar)
    assert cut.provenance == "P21"
    assert cut.slope[0] == pytest.approx(1.0, abs=1e-9)
    assert cut.intercept == pytest.approx(0.0, abs=1e-9)
    assert cut.looseness <= 1e-9
    _check_validity(cut, inst, -1.0, 2.0)


def test_affine_constraints_cut_injected():
    inst = ray_instance()
    cert = solve_inexact(inst, 0.1, 0.1, mode="injected", seed=0,
                         dual_space="constraints")
    C = np.array([[-1.0]])
    cut = cut_affine_constraints(cert, inst.B, C, inst.xbar)
    assert cut.slope[0] == pytest.approx(0.9, abs=1e-9)
    assert cut.intercept == pytest.approx(0.0, abs=1e-9)
    assert cut.looseness == pytest.approx(0.2, abs=1e-9)
    _check_validity(cut, inst, -1.0, 2.0)


def test_affine_constraints_negative_multiplier():
    cert = Certificate(y_hat=np.array([1.0]), lambda_hat=np.array([1.0]),
                       primal_value=1.0, dual_value=1.0,
                       eps_primal=0.0, eps_dual=0.0,
                       eq_multipliers=np.zeros(0),
                       ineq_multipliers=np.array([-1e-6]))
    with pytest.raises(NegativeMultiplier):
        cut_affine_constraints(cert, np.zeros((0, 1)), np.array([[-1.0]]),
                               np.array([1.0]))


def _affine_parameter_instance(rng):
    """Random instance whose parameter enters constraints only (cost is
    parameter-free, every inequality is a single affine piece)."""
    m = int(rng.integers(1, 4))
    lower = rng.uniform(-2.0, 0.0, size=m)
    upper = lower + rng.uniform(1.0, 3.0, size=m)
    y0 = lower + rng.uniform(0.35, 0.65, size=m) * (upper - lower)
    xbar = rng.uniform(-1.0, 1.0, size=1)
    n_eq = int(rng.integers(0, 2))
    A = rng.normal(size=(n_eq, m))
    B = rng.normal(size=(n_eq, 1))
    b = A @ y0 + B @ xbar
    cost = polyhedral(
        [(rng.normal(size=m), np.zeros(1), float(rng.normal()))
         for _ in range(int(rng.integers(1, 4)))], m, 1)
    ineq, C = [], []
    for _ in range(int(rng.integers(1, 3))):
        gy = rng.normal(size=m)
        gx = rng.normal(size=1)
        off = -(gy @ y0 + gx @ xbar) - 0.3
        ineq.append(polyhedral([(gy, gx, off)], m, 1))
        C.append(-gx)
    inst = SubproblemInstance(cost=cost, A=A, B=B, b=b, ineq=tuple(ineq),
                              Y=Box(lower, upper), xbar=xbar)
    return inst, np.asarray(C).reshape(-1, 1)


@pytest.mark.parametrize("mode,targets", [("exact", None),
                                          ("injected", (0.05, 0.08))])
def test_affine_constraints_cut_random_validity(mode, targets):
    rng = np.random.default_rng(SEED + 1)
    for i in range(20):
        inst, C = _affine_parameter_instance(rng)
        if mode == "exact":
            cert = solve_exact(inst, dual_space="constraints")
        else:
            cert = solve_inexact(inst, *targets, mode=mode, seed=i,
                                 dual_space="constraints")
        cut = cut_affine_constraints(cert, inst.B, C, inst.xbar)
        _check_validity(cut, inst, inst.xbar[0] - 1.5, inst.xbar[0] + 1.5)


# ---------------------------------------------------------------------------
# parameter-copy cuts
# ---------------------------------------------------------------------------

def test_general_cut_exact_ray():
    inst = ray_instance()
    cut = cut_general(solve_exact(inst), inst.xbar)
    assert cut.provenance == "P22"
    assert cut.slope[0] == pytest.approx(1.0, abs=1e-9)
    assert cut.intercept == pytest.approx(0.0, abs=1e-9)
    _check_validity(cut, inst, -1.0, 2.0)


def test_general_cut_exact_abs_is_flat():
    inst = abs_instance()
    cut = cut_general(solve_exact(inst), inst.xbar)
    assert cut.slope[0] == pytest.approx(0.0, abs=1e-9)
    assert cut.intercept == pytest.approx(0.0, abs=1e-9)
    _check_validity(cut, inst, -1.0, 2.0)


def test_general_cut_injected_ray():
    inst = ray_instance()
    cert = solve_inexact(inst, 0.1, 0.1, mode="injected", seed=0)
    cut = cut_general(cert, inst.xbar)
    assert cut.slope[0] == pytest.approx(0.9, abs=1e-9)
    assert cut.intercept == pytest.approx(0.0, abs=1e-9)
    assert cut.looseness == pytest.approx(0.2, abs=1e-9)
    _check_validity(cut, inst, -1.0, 2.0)


def test_general_cut_slater_check():
    inst = single_var_instance([(1.0, 0.0, 0.0)],
                               ineq=[[(1.0, 0.0, 0.0)], [(-1.0, 0.0, 0.0)]],
                               lo=-1.0, hi=1.0)
    cert = solve_exact(inst)
    with pytest.raises(SlaterCheckFailed):
        cut_general(cert, inst.xbar, inst=inst)
    assert cut_general(cert, inst.xbar).provenance == "P22"  # unchecked path
    roomy = ray_instance()
    cut = cut_general(solve_exact(roomy), roomy.xbar, inst=roomy)
    assert cut.slope[0] == pytest.approx(1.0, abs=1e-9)


def test_general_cut_sharp_variant():
    with open(FIXTURE) as fh:
        problem = parse_instance(fh.read())
    inst = subproblem_from_stage(problem, 2, 0, [0.5])
    cert = solve_inexact(inst, 0.2, 0.2, mode="truncated", seed=0)
    plain = cut_general(cert, inst.xbar)
    sharp = cut_general(cert, inst.xbar, sharp=True)
    np.testing.assert_array_equal(plain.slope, sharp.slope)
    assert sharp.intercept - plain.intercept == pytest.approx(
        cert.eps_primal, abs=1e-12)
    assert sharp.looseness == pytest.approx(cert.eps_dual, abs=1e-12)
    for cut in (plain, sharp):
        _check_validity(cut, inst, -0.5, 1.5)


@pytest.mark.parametrize("mode,targets", [
    ("exact", None),
    ("injected", (0.08, 0.05)),
    ("truncated", (0.3, 0.3)),
])
def test_general_cut_random_validity(mode, targets):
    rng = np.random.default_rng(SEED + 2)
    for i in range(25):
        inst = random_instance(rng, state_dim=1)
        if mode == "exact":
            cert = solve_exact(inst)
        else:
            cert = solve_inexact(inst, *targets, mode=mode, seed=i)
        cut = cut_general(cert, inst.xbar)
        _check_validity(cut, inst, inst.xbar[0] - 1.5, inst.xbar[0] + 1.5)


# ---------------------------------------------------------------------------
# saddle cuts
# ---------------------------------------------------------------------------

def test_fenchel_unconstrained_cut_exact_flat():
    inst = abs_instance()
    cert = solve_fenchel_saddle(inst)
    cut = cut_fenchel_unconstrained(cert, fenchel_view(inst.cost), inst.xbar)
    assert cut.provenance == "P31"
    assert cut.slope[0] == pytest.approx(0.0, abs=1e-9)
    assert cut.intercept == pytest.approx(0.0, abs=1e-9)
    _check_validity(cut, inst, -1.0, 2.0)


def test_fenchel_unconstrained_cut_degraded():
    inst = abs_instance()
    cert = solve_fenchel_saddle(inst, eps=0.1, tau=0.02, mode="injected",
                                seed=0)
    cut = cut_fenchel_unconstrained(cert, fenchel_view(inst.cost), inst.xbar)
    assert cut.slope[0] == pytest.approx(-0.2, abs=1e-9)
    assert cut.intercept == pytest.approx(0.0, abs=1e-9)
    assert cut.looseness == pytest.approx(0.12, abs=1e-9)
    qbar = single_value_function_grid(inst, inst.xbar)[0]
    assert qbar - cut.value(inst.xbar) == pytest.approx(0.1, abs=1e-9)
    _check_validity(cut, inst, -1.0, 2.0)


def test_fenchel_unconstrained_single_piece():
    inst = single_var_instance([(2.0, 3.0, 1.0)])
    cert = solve_fenchel_saddle(inst, tau=0.05, mode="injected", seed=0)
    assert cert.eps == 0.0  # singleton weight set pins w
    cut = cut_fenchel_unconstrained(cert, fenchel_view(inst.cost), inst.xbar)
    assert cut.slope[0] == pytest.approx(3.0, abs=1e-12)
    f_at_yhat = 2.0 * cert.y_hat[0] + 1.0  # x part lives in the slope
    assert cut.intercept == pytest.approx(f_at_yhat - cert.tau, abs=1e-12)
    assert cut.looseness == pytest.approx(cert.tau, abs=1e-12)
    _check_validity(cut, inst, -1.0, 2.0)


def constrained_saddle_instance():
    """min{|y| : y = z, y in [0,2]} at xbar=1; Q(x) = x on [0,2]."""
    return SubproblemInstance(
        cost=polyhedral([([1.0], [0.0], 0.0), ([-1.0], [0.0], 0.0)], 1, 1),
        A=np.array([[1.0]]), B=np.array([[-1.0]]), b=np.array([0.0]),
        ineq=(), Y=Box(np.array([0.0]), np.array([2.0])),
        xbar=np.array([1.0]))


def test_fenchel_constrained_cut_exact():
    inst = constrained_saddle_instance()
    cert = solve_fenchel_saddle(inst)
    cut = cut_fenchel_constrained(cert, fenchel_view(inst.cost),
                                  inst.A, inst.B, inst.b, inst.xbar)
    assert cut.provenance == "P32"
    assert cut.slope[0] == pytest.approx(1.0, abs=1e-9)
    assert cut.intercept == pytest.approx(0.0, abs=1e-9)
    assert cut.looseness <= 1e-9
    _check_validity(cut, inst, -0.5, 2.5)


def test_fenchel_constrained_cut_perturbed_multiplier():
    inst = constrained_saddle_instance()
    cert = FenchelCertificate(w_hat=np.array([1.0, 0.0]),
                              y_hat=np.array([1.0]),
                              lambda_hat=np.array([-0.9]),
                              eps=0.0, tau=0.0, delta=0.1, value=1.0)
    cut = cut_fenchel_constrained(cert, fenchel_view(inst.cost),
                                  inst.A, inst.B, inst.b, inst.xbar)
    assert cut.slope[0] == pytest.approx(0.9, abs=1e-12)
    assert cut.intercept == pytest.approx(0.0, abs=1e-12)
    assert cut.looseness == pytest.approx(0.1, abs=1e-12)
    _check_validity(cut, inst, -0.5, 2.5)


def test_fenchel_constrained_requires_multiplier():
    inst = constrained_saddle_instance()
    cert = FenchelCertificate(w_hat=np.array([1.0, 0.0]),
                              y_hat=np.array([1.0]), lambda_hat=None,
                              eps=0.0, tau=0.0, delta=0.0, value=1.0)
    with pytest.raises(ValueError):
        cut_fenchel_constrained(cert, fenchel_view(inst.cost),
                                inst.A, inst.B, inst.b, inst.xbar)


def test_fenchel_cut_random_validity():
    rng = np.random.default_rng(SEED + 5)
    for i in range(12):
        inst = random_instance(rng, state_dim=1, n_eq=0, n_ineq=0)
        cert = solve_fenchel_saddle(inst, eps=0.05, tau=0.02,
                                    mode="injected", seed=i)
        cut = cut_fenchel_unconstrained(cert, fenchel_view(inst.cost),
                                        inst.xbar)
        _check_validity(cut, inst, inst.xbar[0] - 1.5, inst.xbar[0] + 1.5)
    for i in range(12):
        inst = random_instance(rng, state_dim=1, n_eq=1, n_ineq=0)
        cert = solve_fenchel_saddle(inst, eps=0.04, tau=0.01, delta=0.03,
                                    mode="injected", seed=i)
        cut = cut_fenchel_constrained(cert, fenchel_view(inst.cost),
                                      inst.A, inst.B, inst.b, inst.xbar)
        _check_validity(cut, inst, inst.xbar[0] - 1.5, inst.xbar[0] + 1.5)


# ---------------------------------------------------------------------------
# slope equicontinuity on the bundled fixture
# ---------------------------------------------------------------------------

def test_cut_slopes_bounded_by_observed_duals():
    # Exact-solve cuts at fresh anchors can never out-steepen the largest
    # dual seen on a dense grid (the subgradients of a polyhedral value
    # function come from finitely many bases).  Degraded duals are exempt:
    # on a flat stretch the exact multipliers are all zero, so any injected
    # perturbation exceeds the observed maximum by construction.
    with open(FIXTURE) as fh:
        problem = parse_instance(fh.read())
    rng = np.random.default_rng(SEED + 9)
    grid = np.linspace(0.0, 1.0, 100)
    for t in (2, 3):
        for j in range(len(problem.stage(t).realizations)):
            lmax = 0.0
            for x in grid:
                cert = solve_exact(subproblem_from_stage(problem, t, j, [x]))
                lmax = max(lmax, float(np.abs(cert.lambda_hat).max()))
            for _ in range(20):
                xb = rng.uniform(0.0, 1.0, size=1)
                inst = subproblem_from_stage(problem, t, j, xb)
                cut = cut_general(solve_exact(inst), xb)
                assert np.abs(cut.slope).max() <= lmax + 1e-6
