"""Data model for multistage stochastic programs on finite scenario trees.

A problem is a sequence of stages; each stage holds a compact box state set,
a list of realizations (probability, linear coupling A y + B x = b, polyhedral
stage cost, polyhedral inequality constraints), and a scalar lower bound on
the stage cost used to seed value-function models.  Stage costs and
constraints are finite maxima of affine pieces in (y, x), where y is the
stage decision (the next state) and x is the previous state.

Instances are stored as JSON documents; `parse_instance` / `emit_instance`
round-trip them, and emission is canonical (emit(parse(emit(p))) is
byte-identical to emit(p)).
"""

import json
from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence

import numpy as np

from .errors import InstanceError

PROB_TOL = 1e-12


def _frozen_array(values, ndim=1):
    a = np.array(values, dtype=np.float64)
    if a.ndim < ndim:
        a = a.reshape((0,) * ndim if a.size == 0 else a.shape + (1,) * (ndim - a.ndim))
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class AffinePiece:
    """One affine function of (y, x): slope_y . y + slope_x . x + offset."""

    slope_y: np.ndarray
    slope_x: np.ndarray
    offset: float

    def __post_init__(self):
        object.__setattr__(self, "slope_y", _frozen_array(np.atleast_1d(self.slope_y)))
        object.__setattr__(self, "slope_x", _frozen_array(np.atleast_1d(self.slope_x)))
        object.__setattr__(self, "offset", float(self.offset))
        if not (np.all(np.isfinite(self.slope_y))
                and np.all(np.isfinite(self.slope_x))
                and np.isfinite(self.offset)):
            raise InstanceError("affine piece has non-finite coefficients")

    def value(self, y, x):
        return float(self.slope_y @ y + self.slope_x @ x + self.offset)

    def __eq__(self, other):
        if not isinstance(other, AffinePiece):
            return NotImplemented
        return (np.array_equal(self.slope_y, other.slope_y)
                and np.array_equal(self.slope_x, other.slope_x)
                and self.offset == other.offset)


@dataclass(frozen=True, eq=False)
class PolyhedralFunction:
    """Finite max of affine pieces: value(y, x) = max_k piece_k(y, x)."""

    pieces: Sequence[AffinePiece]
    dim_y: int
    dim_x: int

    def __post_init__(self):
        pieces = tuple(self.pieces)
        if not pieces:
            raise InstanceError("polyhedral function needs at least one piece")
        for p in pieces:
            if len(p.slope_y) != self.dim_y or len(p.slope_x) != self.dim_x:
                raise InstanceError(
                    f"piece has slopes of length ({len(p.slope_y)}, {len(p.slope_x)}), "
                    f"expected ({self.dim_y}, {self.dim_x})")
        object.__setattr__(self, "pieces", pieces)
        sy = _frozen_array([p.slope_y for p in pieces], ndim=2).reshape(len(pieces), self.dim_y)
        sx = _frozen_array([p.slope_x for p in pieces], ndim=2).reshape(len(pieces), self.dim_x)
        off = _frozen_array([p.offset for p in pieces])
        sy.setflags(write=False)
        sx.setflags(write=False)
        object.__setattr__(self, "_sy", sy)
        object.__setattr__(self, "_sx", sx)
        object.__setattr__(self, "_off", off)

    @property
    def n_pieces(self):
        return len(self.pieces)

    def stacked(self):
        """Piece tables (Sy, Sx, off): value(y,x) = max(Sy @ y + Sx @ x + off)."""
        return self._sy, self._sx, self._off

    def value(self, y, x=None):
        x = np.zeros(0) if x is None else x
        return float(np.max(self._sy @ y + self._sx @ x + self._off))

    def __eq__(self, other):
        if not isinstance(other, PolyhedralFunction):
            return NotImplemented
        return (self.dim_y == other.dim_y and self.dim_x == other.dim_x
                and self.pieces == other.pieces)


@dataclass(frozen=True, eq=False)
class Box:
    """Compact axis-aligned box {v : lower <= v <= upper}."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "lower", _frozen_array(np.atleast_1d(self.lower)))
        object.__setattr__(self, "upper", _frozen_array(np.atleast_1d(self.upper)))
        if self.lower.shape != self.upper.shape:
            raise InstanceError("box bounds have mismatched lengths")
        if not (np.all(np.isfinite(self.lower)) and np.all(np.isfinite(self.upper))):
            raise InstanceError("box bounds must be finite")
        if np.any(self.lower > self.upper):
            raise InstanceError("box has lower bound above upper bound")

    @property
    def dim(self):
        return len(self.lower)

    @property
    def diameter(self):
        return float(np.linalg.norm(self.upper - self.lower))

    @property
    def center(self):
        return 0.5 * (self.lower + self.upper)

    def contains(self, v, tol=1e-9):
        return bool(np.all(v >= self.lower - tol) and np.all(v <= self.upper + tol))

    def clip(self, v):
        return np.clip(v, self.lower, self.upper)

    def __eq__(self, other):
        if not isinstance(other, Box):
            return NotImplemented
        return (np.array_equal(self.lower, other.lower)
                and np.array_equal(self.upper, other.upper))


@dataclass(frozen=True, eq=False)
class Realization:
    """One noise outcome: probability, coupling A y + B x = b, cost, g <= 0."""

    probability: float
    A: np.ndarray
    B: np.ndarray
    b: np.ndarray
    cost: PolyhedralFunction
    ineq_constraints: Sequence[PolyhedralFunction] = ()

    def __post_init__(self):
        object.__setattr__(self, "probability", float(self.probability))
        m, n = self.cost.dim_y, self.cost.dim_x
        b = _frozen_array(np.atleast_1d(self.b))
        A = np.array(self.A, dtype=np.float64)
        B = np.array(self.B, dtype=np.float64)
        for name, M, cols in (("A", A, m), ("B", B, n)):
            if M.ndim == 2 and M.shape != (len(b), cols):
                raise InstanceError(
                    f"{name} has shape {M.shape}, expected ({len(b)}, {cols})")
        A = A.reshape(len(b), m)
        B = B.reshape(len(b), n)
        A.setflags(write=False)
        B.setflags(write=False)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "ineq_constraints", tuple(self.ineq_constraints))
        if not (0.0 < self.probability <= 1.0):
            raise InstanceError(f"probability {self.probability:.12g} outside (0, 1]")
        if not (np.all(np.isfinite(A)) and np.all(np.isfinite(B)) and np.all(np.isfinite(b))):
            raise InstanceError("coupling data has non-finite entries")
        for g in self.ineq_constraints:
            if g.dim_y != m or g.dim_x != n:
                raise InstanceError(
                    f"inequality constraint has dimensions ({g.dim_y}, {g.dim_x}), "
                    f"expected ({m}, {n})")

    @property
    def n_rows(self):
        return len(self.b)

    def __eq__(self, other):
        if not isinstance(other, Realization):
            return NotImplemented
        return (self.probability == other.probability
                and np.array_equal(self.A, other.A)
                and np.array_equal(self.B, other.B)
                and np.array_equal(self.b, other.b)
                and self.cost == other.cost
                and self.ineq_constraints == other.ineq_constraints)


@dataclass(frozen=True, eq=False)
class StageModel:
    """One stage: state dimension, compact state box, realizations, cost floor."""

    state_dim: int
    state_set: Box
    realizations: Sequence[Realization]
    cost_lower_bound: float

    def __post_init__(self):
        object.__setattr__(self, "realizations", tuple(self.realizations))
        object.__setattr__(self, "cost_lower_bound", float(self.cost_lower_bound))
        if not self.realizations:
            raise InstanceError("stage has no realizations")
        if self.state_set.dim != self.state_dim:
            raise InstanceError(
                f"state box has dimension {self.state_set.dim}, expected {self.state_dim}")
        if not np.isfinite(self.cost_lower_bound):
            raise InstanceError("cost_lower_bound must be finite")
        total = float(sum(r.probability for r in self.realizations))
        if abs(total - 1.0) > PROB_TOL:
            raise InstanceError(f"probabilities sum to {total:.12g}")

    @property
    def n_realizations(self):
        return len(self.realizations)

    @property
    def probabilities(self):
        return np.array([r.probability for r in self.realizations])

    def __eq__(self, other):
        if not isinstance(other, StageModel):
            return NotImplemented
        return (self.state_dim == other.state_dim
                and self.state_set == other.state_set
                and self.realizations == other.realizations
                and self.cost_lower_bound == other.cost_lower_bound)


@dataclass(frozen=True, eq=False)
class MultistageProblem:
    """A horizon of stages plus the initial state x0."""

    horizon: int
    x0: np.ndarray
    stages: Sequence[StageModel]

    def __post_init__(self):
        object.__setattr__(self, "horizon", int(self.horizon))
        object.__setattr__(self, "x0", _frozen_array(np.atleast_1d(self.x0)))
        object.__setattr__(self, "stages", tuple(self.stages))
        if self.horizon < 1:
            raise InstanceError("horizon must be at least 1")
        if len(self.stages) != self.horizon:
            raise InstanceError(
                f"horizon is {self.horizon} but {len(self.stages)} stages given")
        if not np.all(np.isfinite(self.x0)):
            raise InstanceError("x0 must be finite")
        first = self.stages[0]
        if first.n_realizations != 1:
            raise InstanceError(
                f"stage 1 must have exactly one realization, got {first.n_realizations}")
        for t, stage in enumerate(self.stages, start=1):
            n_prev = self.prev_dim(t)
            for j, real in enumerate(stage.realizations, start=1):
                where = f"stage {t} realization {j}"
                if real.cost.dim_y != stage.state_dim or real.cost.dim_x != n_prev:
                    raise InstanceError(
                        f"{where}: cost has dimensions "
                        f"({real.cost.dim_y}, {real.cost.dim_x}), "
                        f"expected ({stage.state_dim}, {n_prev})")

    def prev_dim(self, t):
        """State dimension feeding stage t (1-based): len(x0) for t = 1."""
        return len(self.x0) if t == 1 else self.stages[t - 2].state_dim

    def stage(self, t):
        """1-based stage access, matching the time indexing used throughout."""
        return self.stages[t - 1]

    def __eq__(self, other):
        if not isinstance(other, MultistageProblem):
            return NotImplemented
        return (self.horizon == other.horizon
                and np.array_equal(self.x0, other.x0)
                and self.stages == other.stages)


class FenchelData(NamedTuple):
    a1: np.ndarray
    a2: np.ndarray
    A0: np.ndarray
    B0: np.ndarray
    phi0: np.ndarray


def fenchel_view(f: PolyhedralFunction) -> FenchelData:
    """Rewrite a polyhedral function as max over simplex weights w of
    y.(A0 w) + x.(B0 w) - phi0.w (plus the affine part a1.x + a2.y, zero here).

    Columns of A0 / B0 are the piece slopes and phi0 holds negated offsets, so
    evaluating at the simplex vertices reproduces value(y, x) exactly.
    """
    sy, sx, off = f.stacked()
    return FenchelData(
        a1=np.zeros(f.dim_x),
        a2=np.zeros(f.dim_y),
        A0=sy.T.copy(),
        B0=sx.T.copy(),
        phi0=-off.copy(),
    )


# ---------------------------------------------------------------------------
# Instance file format (JSON)
# ---------------------------------------------------------------------------

def _reject_constant(token):
    raise InstanceError(f"non-finite number {token!r} not permitted")


def _require(doc, key, where):
    if not isinstance(doc, dict):
        raise InstanceError(f"{where}: expected an object")
    if key not in doc:
        raise InstanceError(f"{where}: missing key '{key}'")
    return doc[key]


def _as_float(value, where):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise InstanceError(f"{where}: expected a number")
    if not np.isfinite(value):
        raise InstanceError(f"{where}: non-finite number")
    return float(value)


def _as_int(value, where):
    if isinstance(value, bool) or not isinstance(value, int):
        raise InstanceError(f"{where}: expected an integer")
    return value


def _as_vector(values, where):
    if not isinstance(values, list):
        raise InstanceError(f"{where}: expected an array of numbers")
    return np.array([_as_float(v, where) for v in values])


def _as_matrix(values, n_cols, where):
    if not isinstance(values, list):
        raise InstanceError(f"{where}: expected an array of rows")
    rows = []
    for i, row in enumerate(values):
        r = _as_vector(row, f"{where}[{i}]")
        if len(r) != n_cols:
            raise InstanceError(f"{where}[{i}]: row has length {len(r)}, expected {n_cols}")
        rows.append(r)
    return np.array(rows).reshape(len(rows), n_cols)


def _piece_from_doc(doc, where):
    slope_y = _as_vector(_require(doc, "slope_y", where), f"{where}.slope_y")
    slope_x = _as_vector(_require(doc, "slope_x", where), f"{where}.slope_x")
    offset = _as_float(_require(doc, "offset", where), f"{where}.offset")
    return AffinePiece(slope_y=slope_y, slope_x=slope_x, offset=offset)


def _function_from_doc(pieces_doc, dim_y, dim_x, where):
    if not isinstance(pieces_doc, list) or not pieces_doc:
        raise InstanceError(f"{where}: expected a nonempty array of pieces")
    pieces = [_piece_from_doc(p, f"{where}[{i}]") for i, p in enumerate(pieces_doc)]
    for i, p in enumerate(pieces):
        if len(p.slope_y) != dim_y or len(p.slope_x) != dim_x:
            raise InstanceError(
                f"{where}[{i}]: slopes have lengths ({len(p.slope_y)}, {len(p.slope_x)}), "
                f"expected ({dim_y}, {dim_x})")
    return PolyhedralFunction(pieces=pieces, dim_y=dim_y, dim_x=dim_x)


def _realization_from_doc(doc, dim_y, dim_x, where):
    probability = _as_float(_require(doc, "probability", where), f"{where}.probability")
    b = _as_vector(_require(doc, "b", where), f"{where}.b")
    A = _as_matrix(_require(doc, "A", where), dim_y, f"{where}.A")
    B = _as_matrix(_require(doc, "B", where), dim_x, f"{where}.B")
    if A.shape[0] != len(b) or B.shape[0] != len(b):
        raise InstanceError(
            f"{where}: A has {A.shape[0]} rows, B has {B.shape[0]}, b has {len(b)}")
    cost = _function_from_doc(_require(doc, "cost_pieces", where), dim_y, dim_x,
                              f"{where}.cost_pieces")
    ineq_doc = doc.get("ineq_constraints", [])
    if not isinstance(ineq_doc, list):
        raise InstanceError(f"{where}.ineq_constraints: expected an array")
    ineq = []
    for i, entry in enumerate(ineq_doc):
        ewhere = f"{where}.ineq_constraints[{i}]"
        # Canonically each constraint is an array of pieces; a bare piece
        # object is accepted and treated as a single-piece constraint.
        if isinstance(entry, dict):
            entry = [entry]
        ineq.append(_function_from_doc(entry, dim_y, dim_x, ewhere))
    return Realization(probability=probability, A=A.reshape(len(b), dim_y),
                       B=B.reshape(len(b), dim_x), b=b, cost=cost,
                       ineq_constraints=ineq)


def _stage_from_doc(doc, dim_x, where):
    state_dim = _as_int(_require(doc, "state_dim", where), f"{where}.state_dim")
    if state_dim < 1:
        raise InstanceError(f"{where}.state_dim: must be positive")
    lower = _as_vector(_require(doc, "state_lower", where), f"{where}.state_lower")
    upper = _as_vector(_require(doc, "state_upper", where), f"{where}.state_upper")
    if len(lower) != state_dim or len(upper) != state_dim:
        raise InstanceError(
            f"{where}: state bounds have lengths ({len(lower)}, {len(upper)}), "
            f"expected {state_dim}")
    clb = _as_float(_require(doc, "cost_lower_bound", where), f"{where}.cost_lower_bound")
    reals_doc = _require(doc, "realizations", where)
    if not isinstance(reals_doc, list) or not reals_doc:
        raise InstanceError(f"{where}.realizations: expected a nonempty array")
    realizations = [
        _realization_from_doc(r, state_dim, dim_x, f"{where}.realizations[{j}]")
        for j, r in enumerate(reals_doc)
    ]
    return StageModel(state_dim=state_dim, state_set=Box(lower=lower, upper=upper),
                      realizations=realizations, cost_lower_bound=clb)


def parse_instance(text, path: Optional[str] = None) -> MultistageProblem:
    """Parse an instance document (a JSON string or readable stream)."""
    if hasattr(text, "read"):
        text = text.read()
    try:
        doc = json.loads(text, parse_constant=_reject_constant)
    except json.JSONDecodeError as exc:
        raise InstanceError(
            f"syntax error at line {exc.lineno} column {exc.colno}: {exc.msg}",
            path=path) from exc
    try:
        horizon = _as_int(_require(doc, "horizon", "instance"), "instance.horizon")
        x0 = _as_vector(_require(doc, "x0", "instance"), "instance.x0")
        stages_doc = _require(doc, "stages", "instance")
        if not isinstance(stages_doc, list):
            raise InstanceError("instance.stages: expected an array")
        stages = []
        dim_x = len(x0)
        for t, sdoc in enumerate(stages_doc, start=1):
            stage = _stage_from_doc(sdoc, dim_x, f"stage {t}")
            stages.append(stage)
            dim_x = stage.state_dim
        return MultistageProblem(horizon=horizon, x0=x0, stages=stages)
    except InstanceError as exc:
        if path is not None and exc.path is None:
            raise InstanceError(exc.message, path=path) from exc
        raise


def _piece_doc(piece):
    return {
        "slope_y": [float(v) for v in piece.slope_y],
        "slope_x": [float(v) for v in piece.slope_x],
        "offset": float(piece.offset),
    }


def emit_instance(problem: MultistageProblem) -> str:
    """Serialize a problem to its canonical JSON form (idempotent)."""
    doc = {
        "horizon": problem.horizon,
        "x0": [float(v) for v in problem.x0],
        "stages": [
            {
                "state_dim": stage.state_dim,
                "state_lower": [float(v) for v in stage.state_set.lower],
                "state_upper": [float(v) for v in stage.state_set.upper],
                "cost_lower_bound": float(stage.cost_lower_bound),
                "realizations": [
                    {
                        "probability": float(r.probability),
                        "A": [[float(v) for v in row] for row in r.A],
                        "B": [[float(v) for v in row] for row in r.B],
                        "b": [float(v) for v in r.b],
                        "cost_pieces": [_piece_doc(p) for p in r.cost.pieces],
                        "ineq_constraints": [
                            [_piece_doc(p) for p in g.pieces]
                            for g in r.ineq_constraints
                        ],
                    }
                    for r in stage.realizations
                ],
            }
            for stage in problem.stages
        ],
    }
    return json.dumps(doc, indent=2, allow_nan=False) + "\n"
