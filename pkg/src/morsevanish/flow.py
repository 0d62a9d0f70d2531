"""Negative gradient flows: integration, energies, and trajectory counting.

The flow equation is x'(s) = -grad_g F(x(s), s) where F is either a fixed
f_eps (autonomous case) or a slow interpolation between two parameter values
driven by t = gamma(delta * s).  The ramp gamma is the clamped C^1 smoothstep
on [-1, 1], so integration starts at s = -1/delta with exactly the initial
function and the field is autonomous again from s = +1/delta on.

Alongside the position the integrator carries one extra state,

    e'(s) = 2 |grad F|_g^2 - 2 (dF/ds)(x(s), s),

which along exact solutions equals the analytic energy rate, so e must land
on 2 (F_start(x_start) - F_end(x_end)).  The topological energy of a
connecting trajectory is 2 (F_start(p) - F_end(q)) from the limiting
critical values; |E_an - E_top| small is the energy identity check.

Counting conventions (ambient dimension <= 3, index difference 0 or 1):
every critical point's eigenframe is oriented by making each column's first
meaningful component positive, and its unstable directions come first.  A
flowline launched along +e_u carries +1, along -e_u carries -1.  For
one-parameter families (circle scans around index-2 points, offset ladders
during continuation) the signed count at a target q is read off side flips
of near passes: the family parameter sweeps across the stable manifold of q
and a pass switching from the -e_u(q) side to the +e_u(q) side counts +1.
Trajectories that leave the window count zero.  Crossings narrower than the
scan resolution are invisible; the bisection refinement only sharpens flips
the scan already saw.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from fractions import Fraction
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .critical import CriticalPoint
from .errors import (BudgetExceeded, ConfigError, DeltaFloor, NotConverged,
                     StepCollapse, UnresolvedBasin)
from .expr import Const, Expression, Quotient, eval_jet1, eval_values
from .metric import apply_inverse_batch, metric_batch
from .problem import ProblemSpec, perturbed_function

__all__ = ["ContinuationSchedule", "TrajectoryRecord", "integrate_flow",
           "energy", "count_boundary", "BoundaryCountResult",
           "continuation_trajectories", "ContinuationResult",
           "gamma_profile", "gamma_slope"]

ENERGY_RTOL = 1e-6
STEP_FLOOR = 1e-14
RTOL = 1e-9

_trapezoid = getattr(np, "trapezoid", None) or getattr(np, "trapz")


def gamma_profile(s):
    """Clamped smoothstep: 0 for s <= -1, 1 for s >= +1, C^1 in between."""
    u = np.clip((np.asarray(s, dtype=float) + 1.0) / 2.0, 0.0, 1.0)
    return u * u * (3.0 - 2.0 * u)


def gamma_slope(s):
    """d gamma / ds; vanishes outside [-1, 1]."""
    u = np.clip((np.asarray(s, dtype=float) + 1.0) / 2.0, 0.0, 1.0)
    return 3.0 * u * (1.0 - u)


@dataclass(frozen=True)
class ContinuationSchedule:
    """A straight path in parameter space traversed delta-slowly.

    The flowing function is F(x, s) = sum_i w_i(t) comp_i(x) with
    t = gamma(delta * s).  Constant weights make the field autonomous.
    """

    components: Tuple[Expression, ...]
    weight_path: Callable[[np.ndarray], np.ndarray]     # t (m,) -> (m, k)
    dweight_path: Callable[[np.ndarray], np.ndarray]
    delta: float
    label: str
    autonomous: bool = False

    @property
    def ramp_start(self) -> float:
        return 0.0 if self.autonomous else -1.0 / self.delta

    @property
    def ramp_end(self) -> float:
        return 0.0 if self.autonomous else 1.0 / self.delta

    def with_delta(self, delta: float) -> "ContinuationSchedule":
        return replace(self, delta=delta)

    @staticmethod
    def static(problem: ProblemSpec, eps: float) -> "ContinuationSchedule":
        fe = perturbed_function(problem, eps)

        def w(t):
            return np.ones((len(t), 1))

        def dw(t):
            return np.zeros((len(t), 1))

        return ContinuationSchedule((fe,), w, dw, delta=1.0,
                                    label=f"eps={eps:g}", autonomous=True)

    @staticmethod
    def eps_path(problem: ProblemSpec, eps_from: float, eps_to: float,
                 delta: float = 0.5) -> "ContinuationSchedule":
        comps = (problem.f, Quotient(Const(Fraction(1)), problem.tau))
        e0, e1 = float(eps_from), float(eps_to)

        def w(t):
            return np.stack([np.ones_like(t), e0 + t * (e1 - e0)], axis=1)

        def dw(t):
            return np.stack([np.zeros_like(t), np.full_like(t, e1 - e0)],
                            axis=1)

        return ContinuationSchedule(comps, w, dw, delta,
                                    label=f"eps:{e0:g}->{e1:g}")

    @staticmethod
    def theta_path(alg_problem, theta_from: float, theta_to: float,
                   eps: float, delta: float = 0.5):
        """Schedule rotating the angle in Re(e^{i theta} F) at fixed eps.

        Returns (schedule, ambient problem); the ambient ProblemSpec is the
        compactified plane the rotation happens in, built at theta_from.
        """
        from .compactify import real_imag_parts, realify

        ambient = realify(alg_problem, theta=theta_from)
        re_x, im_x = real_imag_parts(alg_problem)
        comps = (re_x, im_x, Quotient(Const(Fraction(1)), ambient.tau))
        t0, t1 = float(theta_from), float(theta_to)

        def w(t):
            th = t0 + t * (t1 - t0)
            return np.stack([np.cos(th), -np.sin(th),
                             np.full_like(th, float(eps))], axis=1)

        def dw(t):
            th = t0 + t * (t1 - t0)
            return np.stack([-np.sin(th) * (t1 - t0),
                             -np.cos(th) * (t1 - t0),
                             np.zeros_like(th)], axis=1)

        sched = ContinuationSchedule(comps, w, dw, delta,
                                     label=f"theta:{t0:g}->{t1:g} eps={eps:g}")
        return sched, ambient

    def values_at(self, S, X: np.ndarray, names) -> np.ndarray:
        t = gamma_profile(self.delta * np.asarray(S, dtype=float))
        W = self.weight_path(np.atleast_1d(t))
        out = np.zeros(len(X))
        for i, comp in enumerate(self.components):
            out += W[:, i] * eval_values(comp, X, names)
        return out

    def end_values(self, X: np.ndarray, names) -> np.ndarray:
        S = np.full(len(X), self.ramp_end + 1.0)
        return self.values_at(S, X, names)

    def start_value(self, x: np.ndarray, names) -> float:
        S = np.full(1, self.ramp_start - 1.0)
        return float(self.values_at(S, x[None, :], names)[0])


class _Field:
    """Batched right side -grad_g F with value and energy-rate bookkeeping."""

    def __init__(self, problem: ProblemSpec, schedule: ContinuationSchedule):
        self.problem = problem
        self.schedule = schedule
        self.names = problem.variables

    def eval(self, S: np.ndarray, X: np.ndarray):
        """Returns (drift, F values, energy rate) for a batch of rows."""
        sch = self.schedule
        t = gamma_profile(sch.delta * S)
        W = sch.weight_path(t)
        vals = np.zeros(len(X))
        grads = np.zeros_like(X)
        comp_vals = []
        for i, comp in enumerate(sch.components):
            v, g = eval_jet1(comp, X, self.names)
            comp_vals.append(v)
            vals += W[:, i] * v
            grads += W[:, i, None] * g
        w = apply_inverse_batch(self.problem.metric, self.problem.tau,
                                self.names, X, grads)
        grad_sq = np.einsum("ij,ij->i", grads, w)
        if sch.autonomous:
            dF_ds = np.zeros(len(X))
        else:
            ramp = (sch.delta * gamma_slope(sch.delta * S))[:, None]
            dW = sch.dweight_path(t) * ramp
            dF_ds = sum(dW[:, i] * comp_vals[i]
                        for i in range(len(sch.components)))
        return -w, vals, 2.0 * grad_sq - 2.0 * dF_ds


# Dormand-Prince 5(4) tableau
_DP_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_DP_A = [
    np.array([]),
    np.array([1 / 5]),
    np.array([3 / 40, 9 / 40]),
    np.array([44 / 45, -56 / 15, 32 / 9]),
    np.array([19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729]),
    np.array([9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176,
              -5103 / 18656]),
    np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84]),
]
_DP_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784,
                   11 / 84, 0.0])
_DP_B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640,
                   -92097 / 339200, 187 / 2100, 1 / 40])

# row status codes
RUNNING, ARRIVED, EXIT_BELOW, EXIT_ABOVE, BUDGET, COLLAPSE = 0, 1, 2, 3, 4, 5
_STATUS_NAMES = {ARRIVED: "converged-to", EXIT_BELOW: "exited-below",
                 EXIT_ABOVE: "exited-above", BUDGET: "budget",
                 COLLAPSE: "step-collapse"}

NEVER = 9  # near-pass side value for "never came near this target"


class _TargetSet:
    """Per-target geometry used for arrival and near-pass classification."""

    def __init__(self, targets: Sequence[CriticalPoint]):
        self.points = list(targets)
        self.Q = (np.array([p.location for p in self.points])
                  if self.points else np.zeros((0, 0)))
        self.Vinv = [np.linalg.inv(p.frame) for p in self.points]
        self.k = [p.index for p in self.points]
        self.r_arrive = np.array([
            min(max(p.certificate_radius if p.certified else 0.0, 1e-6), 1e-4)
            for p in self.points])
        # near-pass ball: big enough to classify flybys, small enough to
        # keep distinct targets separated
        m = len(self.points)
        sep = np.full(m, np.inf)
        for i in range(m):
            for j in range(m):
                if i != j:
                    sep[i] = min(sep[i],
                                 float(np.linalg.norm(self.Q[i] - self.Q[j])))
        self.r_near = np.zeros(m)
        for i, p in enumerate(self.points):
            r = 0.15 * (1.0 + float(np.linalg.norm(p.location)))
            if math.isfinite(sep[i]):
                r = min(r, 0.3 * sep[i])
            self.r_near[i] = max(r, 20.0 * self.r_arrive[i])

    def __len__(self):
        return len(self.points)

    def unstable_coords(self, i: int, x: np.ndarray) -> np.ndarray:
        c = self.Vinv[i] @ (x - self.Q[i])
        return c[:self.k[i]]

    def stable_dominant(self, i: int, x: np.ndarray) -> bool:
        """Unstable components small next to stable ones: rules out the
        near-misses that shoot past a saddle inside the arrival ball."""
        c = self.Vinv[i] @ (x - self.Q[i])
        k = self.k[i]
        if k == 0:
            return True
        cu = float(np.linalg.norm(c[:k]))
        cs = float(np.linalg.norm(c[k:])) if k < len(c) else 0.0
        return cu <= max(0.5 * cs, 0.05 * self.r_arrive[i])


@dataclass
class _RowResult:
    status: int
    target: int          # index into the target set, -1 if none
    s_end: float
    x_end: np.ndarray
    e_aug: float
    f_max: float
    f_min: float
    steps: int
    near_min: np.ndarray     # per-target closest approach while inside
    near_side: np.ndarray    # per-target side at last ball exit, 0 arrived
    samples: Optional[np.ndarray]


def _flow_batch(field: _Field, X0: np.ndarray, targets: _TargetSet,
                max_steps: int, s_tail: float,
                record: bool = False) -> List[_RowResult]:
    """Integrate every row until it terminates; returns per-row results.

    Near-pass sides are tracked from launch on (the classification frames
    belong to the end-of-path function, but adjacent family members getting
    the same spurious label cancels in flip counting).  Arrival only fires
    after the ramp, once the field actually is the end function.  Value
    exits terminate a row at a - sigma (below) or b + sigma (above) at any
    time.
    """
    problem, sched = field.problem, field.schedule
    w = problem.window
    lo_cut, hi_cut = w.a - w.sigma, w.b + w.sigma
    m, n = X0.shape
    nt = len(targets)

    X = np.array(X0, dtype=float)
    E = np.zeros(m)
    S = np.full(m, sched.ramp_start)
    s_max = sched.ramp_end + s_tail
    status = np.full(m, RUNNING)
    target_of = np.full(m, -1)
    steps = np.zeros(m, dtype=int)
    near_min = np.full((m, nt), np.inf)
    near_side = np.full((m, nt), NEVER, dtype=np.int8)
    inside = np.zeros((m, nt), dtype=bool)
    paths: List[List[np.ndarray]] = [[] for _ in range(m)] if record else []

    drift0, F0, _ = field.eval(S, X)
    f_max = F0.copy()
    f_min = F0.copy()
    h = 1e-3 * (1.0 + np.linalg.norm(X, axis=1)) \
        / (1.0 + np.linalg.norm(drift0, axis=1))
    if record:
        for r in range(m):
            paths[r].append(np.concatenate([[S[r]], X[r], [F0[r]]]))

    guard = 0
    while np.any(status == RUNNING) and guard < 60 * max_steps:
        guard += 1
        rows = np.flatnonzero(status == RUNNING)
        Xa, Sa, ha = X[rows], S[rows], h[rows]
        kk = len(rows)

        K = np.zeros((7, kk, n + 1))
        for i in range(7):
            xi = Xa.copy()
            for j in range(i):
                xi = xi + (ha * _DP_A[i][j])[:, None] * K[j, :, :n]
            d, _, er = field.eval(Sa + _DP_C[i] * ha, xi)
            K[i, :, :n] = d
            K[i, :, n] = er

        Y0 = np.concatenate([Xa, E[rows, None]], axis=1)
        Y5 = Y0.copy()
        Y4 = Y0.copy()
        for i in range(7):
            Y5 = Y5 + (ha * _DP_B5[i])[:, None] * K[i]
            Y4 = Y4 + (ha * _DP_B4[i])[:, None] * K[i]

        scale = RTOL * (1.0 + np.abs(Y5).max(axis=1))
        err = np.abs(Y5 - Y4).max(axis=1) / scale
        err = np.where(np.isfinite(err), err, np.inf)
        accept = err <= 1.0

        acc = rows[accept]
        if acc.size:
            X[acc] = Y5[accept, :n]
            E[acc] = Y5[accept, n]
            S[acc] = Sa[accept] + ha[accept]
            steps[acc] += 1

            _, Fv, _ = field.eval(S[acc], X[acc])
            f_max[acc] = np.maximum(f_max[acc], Fv)
            f_min[acc] = np.minimum(f_min[acc], Fv)
            if record:
                for pos, r in enumerate(acc):
                    paths[r].append(np.concatenate([[S[r]], X[r],
                                                    [Fv[pos]]]))

            status[acc[Fv < lo_cut]] = EXIT_BELOW
            status[acc[Fv > hi_cut]] = EXIT_ABOVE

            if nt:
                live = acc[status[acc] == RUNNING]
                if live.size:
                    D = np.linalg.norm(
                        X[live][:, None, :] - targets.Q[None, :, :], axis=2)
                    for pos, r in enumerate(live):
                        for t in range(nt):
                            d = D[pos, t]
                            if inside[r, t]:
                                near_min[r, t] = min(near_min[r, t], d)
                                if d > targets.r_near[t]:
                                    inside[r, t] = False
                                    cu = targets.unstable_coords(t, X[r])
                                    near_side[r, t] = (
                                        0 if len(cu) == 0
                                        else (1 if cu[0] > 0 else -1))
                            elif d < targets.r_near[t]:
                                inside[r, t] = True
                                near_min[r, t] = min(near_min[r, t], d)
                            if (S[r] >= sched.ramp_end
                                    and d < targets.r_arrive[t]
                                    and targets.stable_dominant(t, X[r])):
                                status[r] = ARRIVED
                                target_of[r] = t
                                near_side[r, t] = 0
                                break

            over = (steps[acc] >= max_steps) | (S[acc] > s_max)
            status[acc[over & (status[acc] == RUNNING)]] = BUDGET

        grow = 0.9 * np.maximum(err, 1e-16) ** -0.2
        h[rows] = ha * np.clip(grow, 0.2, 5.0)
        collapse = (h[rows] < STEP_FLOOR) & (status[rows] == RUNNING)
        status[rows[collapse]] = COLLAPSE

    status[status == RUNNING] = BUDGET

    out = []
    for r in range(m):
        out.append(_RowResult(
            status=int(status[r]), target=int(target_of[r]),
            s_end=float(S[r]), x_end=X[r].copy(), e_aug=float(E[r]),
            f_max=float(f_max[r]), f_min=float(f_min[r]),
            steps=int(steps[r]),
            near_min=near_min[r].copy(), near_side=near_side[r].copy(),
            samples=np.array(paths[r]) if record else None))
    return out


@dataclass(frozen=True)
class TrajectoryRecord:
    start: np.ndarray
    start_id: Optional[int]
    termination: str
    target_id: Optional[int]
    sign: int
    E_an: float
    E_top: float
    f_max: float
    f_min: float
    steps: int
    s_end: float
    end: np.ndarray
    samples: Optional[np.ndarray] = None   # rows of (s, x..., F)

    @property
    def energy_ok(self) -> bool:
        if not (math.isfinite(self.E_an) and math.isfinite(self.E_top)):
            return False
        return abs(self.E_an - self.E_top) < ENERGY_RTOL * (1.0 + abs(self.E_top))

    def to_csv(self) -> str:
        if self.samples is None:
            raise NotConverged(
                "this trajectory was integrated without path recording")
        n = self.samples.shape[1] - 2
        head = ",".join(["s"] + [f"x{i + 1}" for i in range(n)] + ["f"])
        rows = [",".join(repr(float(v)) for v in row)
                for row in self.samples]
        return "\n".join([head] + rows)


def _make_record(row: _RowResult, field: _Field, start: np.ndarray,
                 start_id, start_value: Optional[float],
                 targets: _TargetSet, sign: int = 1) -> TrajectoryRecord:
    """Assemble the public record.

    start_value, when given, is the critical value the trajectory limits to
    backwards; the launch offset correction 2 (start_value - F(start)) and
    the arrival ball correction 2 (F(end) - q.value) are folded into E_an
    so it is comparable with E_top between critical values.
    """
    sched = field.schedule
    names = field.names
    term = _STATUS_NAMES[row.status]
    target_id = row.target if row.status == ARRIVED else None

    x0_val = sched.start_value(np.asarray(start, dtype=float), names)
    E_an = row.e_aug
    if start_value is not None:
        E_an += 2.0 * (start_value - x0_val)
    E_top = float("nan")
    if row.status == ARRIVED:
        q = targets.points[row.target]
        end_val = float(sched.end_values(row.x_end[None, :], names)[0])
        E_an += 2.0 * (end_val - q.value)
        base = start_value if start_value is not None else x0_val
        E_top = 2.0 * (base - q.value)
    return TrajectoryRecord(
        start=np.array(start, dtype=float), start_id=start_id,
        termination=term, target_id=target_id, sign=sign,
        E_an=E_an, E_top=E_top, f_max=row.f_max, f_min=row.f_min,
        steps=row.steps, s_end=row.s_end, end=row.x_end,
        samples=row.samples)


def _as_schedule(problem: ProblemSpec, eps_or_schedule) -> ContinuationSchedule:
    if isinstance(eps_or_schedule, ContinuationSchedule):
        return eps_or_schedule
    return ContinuationSchedule.static(problem, float(eps_or_schedule))


def integrate_flow(problem: ProblemSpec, eps_or_schedule, start,
                   targets: Sequence[CriticalPoint] = (),
                   budget: int = 40000, s_tail: float = 400.0,
                   record_path: bool = True) -> TrajectoryRecord:
    """One flowline from an interior start until arrival at a target,
    window exit past the sigma margin, or exhaustion; exhaustion raises
    BudgetExceeded and a collapsed step size raises StepCollapse."""
    x0 = np.asarray(start, dtype=float)
    if not problem.domain.contains(x0):
        raise ConfigError(
            f"flow start {x0.tolist()} is not inside the domain")
    sched = _as_schedule(problem, eps_or_schedule)
    field = _Field(problem, sched)
    tset = _TargetSet(targets)
    (row,) = _flow_batch(field, x0[None, :], tset, budget, s_tail,
                         record=record_path)
    start_value = None
    for i, p in enumerate(tset.points):
        if np.linalg.norm(x0 - p.location) <= tset.r_arrive[i]:
            start_value = p.value
            break
    rec = _make_record(row, field, x0, None, start_value, tset)
    if row.status == BUDGET:
        raise BudgetExceeded(
            f"flow from {x0.tolist()} did not terminate in {budget} steps "
            f"(reached s={row.s_end:.4g}, f range "
            f"[{row.f_min:.4g}, {row.f_max:.4g}])")
    if row.status == COLLAPSE:
        raise StepCollapse(
            f"integrator step fell below {STEP_FLOOR} at s={row.s_end:.4g}")
    return rec


def energy(trajectory: TrajectoryRecord, problem: ProblemSpec,
           eps_or_schedule,
           endpoint_values: Optional[Tuple[float, float]] = None
           ) -> Tuple[float, float]:
    """(E_an, E_top) for a stored path by direct quadrature of
    |x'|_g^2 + |grad F|_g^2 - 2 dF/ds over the sample times.

    Works for arbitrary recorded paths, not only flow solutions; on a
    non-solution path E_an strictly exceeds E_top.  E_top needs converged
    endpoints or explicitly supplied endpoint critical values.
    """
    sched = _as_schedule(problem, eps_or_schedule)
    field = _Field(problem, sched)
    if trajectory.samples is None or len(trajectory.samples) < 3:
        raise NotConverged("no stored samples to integrate the energy over")
    Spts = trajectory.samples[:, 0]
    Xpts = trajectory.samples[:, 1:-1]

    drift, _, erate = field.eval(Spts, Xpts)
    G = metric_batch(problem.metric, problem.tau, problem.variables, Xpts)
    grad_sq = np.einsum("ij,ijk,ik->i", drift, G, drift)
    two_dFds = 2.0 * grad_sq - erate

    vel = np.gradient(Xpts, Spts, axis=0)
    vel_sq = np.einsum("ij,ijk,ik->i", vel, G, vel)

    E_an = float(_trapezoid(vel_sq + grad_sq - two_dFds, Spts))

    if endpoint_values is not None:
        v0, v1 = endpoint_values
        E_top = 2.0 * (float(v0) - float(v1))
    elif math.isfinite(trajectory.E_top):
        E_top = trajectory.E_top
    else:
        raise NotConverged(
            "E_top needs converged endpoints or explicit endpoint values")
    return E_an, E_top


def _flip_count(sides: Sequence[int], cyclic: bool) -> List[Tuple[int, int]]:
    """Signed stable-manifold crossings from a sequence of near-pass sides.

    Entries are -1/+1 (side at last ball exit), 0 (arrived at the target,
    transparent), NEVER (no near pass, breaks adjacency).  A crossing is a
    -1 -> +1 step between consecutive near entries (+1) or the reverse
    (-1).  Returns (position of the left neighbor, sign) pairs.
    """
    k = len(sides)
    span = list(range(k)) * (2 if cyclic else 1)
    out = []
    prev_side = None
    prev_step = None
    for step, pos in enumerate(span):
        s = sides[pos]
        if s == NEVER:
            prev_side = None
            continue
        if s == 0:
            continue
        if prev_side is not None and s != prev_side and prev_step < k:
            out.append((span[prev_step],
                        1 if (prev_side, s) == (-1, 1) else -1))
        prev_side = s
        prev_step = step
    return out


@dataclass(frozen=True)
class BoundaryCountResult:
    source_index: int
    counts: Dict[int, int]            # position in `targets` -> signed count
    trajectories: Tuple[TrajectoryRecord, ...]
    method: str
    warnings: Tuple[str, ...] = ()


def _bisect_flip(field: _Field, make_start, lo: float, hi: float,
                 t: int, targets: _TargetSet, budget: int, s_tail: float,
                 resolution: float = 1e-12, rounds: int = 60):
    """Tighten a side flip of target t between family parameters lo < hi.

    Returns the refined bracket.  Raises UnresolvedBasin when the side
    classification stops bracketing before the resolution is reached."""

    def side_at(par: float) -> int:
        (row,) = _flow_batch(field, make_start(par)[None, :], targets,
                             budget, s_tail)
        return int(row.near_side[t])

    s_lo, s_hi = side_at(lo), side_at(hi)
    for _ in range(rounds):
        if hi - lo < resolution:
            return lo, hi
        mid = 0.5 * (lo + hi)
        s_mid = side_at(mid)
        if s_mid == s_lo:
            lo = mid
        elif s_mid == s_hi:
            hi = mid
        elif s_mid == 0:
            return lo, hi     # landed on the connecting orbit itself
        else:
            raise UnresolvedBasin(
                f"side of target {t} at family parameter {mid!r} came back "
                f"{s_mid}; the bracket ({s_lo}, {s_hi}) did not separate "
                f"above width {hi - lo:.3g}")
    return lo, hi


def count_boundary(problem: ProblemSpec, eps: float, source: CriticalPoint,
                   targets: Sequence[CriticalPoint],
                   r_launch: float = 1e-4, n_scan: int = 72,
                   budget: int = 40000, s_tail: float = 400.0,
                   refine: bool = True) -> BoundaryCountResult:
    """Signed counts of flowlines from one index-k critical point into the
    index-(k-1) members of `targets`, autonomous field at the given eps.

    k = 1 launches the two unstable endpoints; k = 2 scans a circle in the
    oriented unstable plane and counts side flips of near passes at each
    target, sharpening each flip by bisection when refine is set.  Window
    exits count zero.  Lower-index points may be included in `targets` as
    absorbers: arrival there terminates a scan row early but only the
    index-(k-1) entries are counted.
    """
    k = source.index
    if problem.domain.dimension > 3:
        raise ConfigError(
            "trajectory counting is limited to ambient dimension <= 3")
    if k > 2:
        raise ConfigError(
            "unstable spheres of dimension >= 2 are not scanned; use the "
            "Euler characteristic route for those problems")
    sched = ContinuationSchedule.static(problem, eps)
    field = _Field(problem, sched)
    tset = _TargetSet(targets)
    counts: Dict[int, int] = {j: 0 for j in range(len(targets))}
    warnings: List[str] = []

    if k == 0:
        return BoundaryCountResult(0, counts, (), "none")

    if k == 1:
        e_u = source.frame[:, 0]
        starts = np.stack([source.location + r_launch * e_u,
                           source.location - r_launch * e_u])
        rows = _flow_batch(field, starts, tset, budget, s_tail)
        recs = []
        for sgn, x0, row in zip((1, -1), starts, rows):
            rec = _make_record(row, field, x0, None, source.value, tset,
                               sign=sgn)
            recs.append(rec)
            if row.status == ARRIVED and targets[row.target].index == k - 1:
                counts[row.target] += sgn
                if not rec.energy_ok:
                    warnings.append(
                        f"energy identity violated on launch {sgn:+d}: "
                        f"E_an={rec.E_an!r} E_top={rec.E_top!r}")
            elif row.status in (BUDGET, COLLAPSE):
                warnings.append(
                    f"launch {sgn:+d} ended with {rec.termination}")
        return BoundaryCountResult(k, counts, tuple(recs), "endpoints",
                                   tuple(warnings))

    # k == 2: oriented circle scan in the unstable plane
    e1, e2 = source.frame[:, 0], source.frame[:, 1]
    phis = np.linspace(0.0, 2.0 * math.pi, n_scan, endpoint=False)

    def make_start(phi: float) -> np.ndarray:
        return source.location + r_launch * (math.cos(phi) * e1
                                             + math.sin(phi) * e2)

    starts = np.stack([make_start(p) for p in phis])
    rows = _flow_batch(field, starts, tset, budget, s_tail)
    recs = []
    for t in range(len(targets)):
        if targets[t].index != k - 1:
            continue
        sides = [int(r.near_side[t]) for r in rows]
        for pos, sgn in _flip_count(sides, cyclic=True):
            lo, hi = phis[pos], phis[(pos + 1) % n_scan]
            if hi <= lo:
                hi += 2.0 * math.pi
            if refine:
                lo, hi = _bisect_flip(field, make_start, lo, hi, t, tset,
                                      budget, s_tail)
            counts[t] += sgn
            mid = 0.5 * (lo + hi)
            (row,) = _flow_batch(field, make_start(mid)[None, :], tset,
                                 budget, s_tail)
            recs.append(_make_record(row, field, make_start(mid), None,
                                     source.value, tset, sign=sgn))
    for t in range(len(targets)):
        if (targets[t].index == k - 1 and counts[t] == 0
                and any(r.status == ARRIVED and r.target == t
                        for r in rows)):
            warnings.append(
                f"an arrival at target {t} was not bracketed by sided "
                f"near passes; increase n_scan")
    for r in rows:
        if r.status in (BUDGET, COLLAPSE):
            warnings.append(
                f"a scan trajectory ended with {_STATUS_NAMES[r.status]}")
    return BoundaryCountResult(k, counts, tuple(recs), "circle",
                               tuple(warnings))


@dataclass(frozen=True)
class ContinuationResult:
    counts: Dict[Tuple[int, int], int]   # (source pos, target pos) -> count
    delta: float
    confined: bool
    halvings: int
    excursion_high: float
    excursion_low: float
    trajectories: Tuple[TrajectoryRecord, ...]
    warnings: Tuple[str, ...] = ()


def _family_parameters(k: int, r_launch: float, reach: float) -> np.ndarray:
    """Offsets along the oriented unstable direction, clustered near zero."""
    if k == 0:
        return np.array([0.0])
    ladder = np.geomspace(r_launch, reach, 14)
    return np.concatenate([-ladder[::-1], [0.0], ladder])


def continuation_trajectories(problem: ProblemSpec,
                              schedule: ContinuationSchedule,
                              sources: Sequence[CriticalPoint],
                              targets: Sequence[CriticalPoint],
                              r_launch: float = 1e-4,
                              budget: int = 60000, s_tail: float = 400.0,
                              delta_floor: float = 1e-6,
                              reach: float = 0.3) -> ContinuationResult:
    """Signed index-preserving arrival counts for the delta-slow
    interpolation, halving delta from the schedule's value until the runs
    are confined.

    Confinement means no trajectory climbs above b + sigma, and the
    zero-offset launch of every source either settles at a same-index
    window target or at least passes near one before washing out; failing
    that at delta_floor raises DeltaFloor.  Counts at saddles come from
    side flips across the launch ladder, so an identity path reports the
    identity matrix without needing exact center arrivals.
    """
    if problem.domain.dimension > 3:
        raise ConfigError(
            "trajectory counting is limited to ambient dimension <= 3")
    if any(p.index > 2 for p in sources):
        raise ConfigError("continuation counting handles indices 0..2 only")
    if not sources:
        return ContinuationResult({}, schedule.delta, True, 0,
                                  -math.inf, math.inf, ())

    w = problem.window
    delta = schedule.delta
    halvings = 0
    while True:
        field = _Field(problem, schedule.with_delta(delta))
        tset = _TargetSet(targets)
        counts: Dict[Tuple[int, int], int] = {}
        recs: List[TrajectoryRecord] = []
        warnings: List[str] = []
        hi_exc = -math.inf
        lo_exc = math.inf
        violated = False

        for si, p in enumerate(sources):
            k = p.index
            if k <= 1:
                pars = _family_parameters(k, r_launch, reach)
                e_u = (p.frame[:, 0] if k >= 1
                       else np.zeros(len(p.location)))
                starts = p.location[None, :] + pars[:, None] * e_u[None, :]
                rows = _flow_batch(field, starts, tset, budget, s_tail)
                center = rows[len(pars) // 2]
                hi_exc = max(hi_exc, max(r.f_max for r in rows))
                lo_exc = min(lo_exc, min(r.f_min for r in rows))
                if any(r.status == EXIT_ABOVE or r.f_max > w.b + w.sigma
                       for r in rows):
                    violated = True
                    break

                center_ok = (center.status == ARRIVED
                             and targets[center.target].index == k)
                if not center_ok:
                    came_near = any(
                        math.isfinite(center.near_min[t])
                        for t in range(len(targets))
                        if targets[t].index == k)
                    if k == 0 or not came_near:
                        violated = True
                        break

                if k == 0:
                    q = center.target
                    counts[(si, q)] = counts.get((si, q), 0) + 1
                else:
                    for t in range(len(targets)):
                        if targets[t].index != k:
                            continue
                        sides = [int(r.near_side[t]) for r in rows]
                        for _, sgn in _flip_count(sides, cyclic=False):
                            counts[(si, t)] = counts.get((si, t), 0) + sgn
                recs.append(_make_record(center, field, p.location, si,
                                         p.value, tset, sign=1))
            else:
                got = _disk_scan(field, p, tset, r_launch, reach, budget,
                                 s_tail, warnings)
                if got is None:
                    violated = True
                    break
                hi, lo, disk_counts, center_rec = got
                hi_exc = max(hi_exc, hi)
                lo_exc = min(lo_exc, lo)
                if hi > w.b + w.sigma:
                    violated = True
                    break
                for t, c in disk_counts.items():
                    counts[(si, t)] = counts.get((si, t), 0) + c
                recs.append(center_rec)

        if not violated:
            return ContinuationResult(counts, delta, True, halvings,
                                      hi_exc, lo_exc, tuple(recs),
                                      tuple(warnings))
        delta *= 0.5
        halvings += 1
        if delta < delta_floor:
            raise DeltaFloor(
                f"confinement still violated at delta={delta * 2:.3g}; the "
                f"parameter path likely leaves the window")


def _disk_scan(field: _Field, p: CriticalPoint, tset: _TargetSet,
               r_launch: float, reach: float, budget: int, s_tail: float,
               warnings: List[str]):
    """Arrival counting over a polar grid in a 2-dimensional unstable
    manifold.  Orientation signs are estimated from the finite-difference
    frame of landing coordinates around each arrival, a best-effort count
    that is flagged in the warnings."""
    e1, e2 = p.frame[:, 0], p.frame[:, 1]
    radii = np.geomspace(r_launch, reach, 6)
    nphi = 24
    phis = np.linspace(0, 2 * math.pi, nphi, endpoint=False)
    starts = [p.location]
    for r in radii:
        for ph in phis:
            starts.append(p.location
                          + r * (math.cos(ph) * e1 + math.sin(ph) * e2))
    rows = _flow_batch(field, np.array(starts), tset, budget, s_tail)
    hi = max(r.f_max for r in rows)
    lo = min(r.f_min for r in rows)
    center = rows[0]
    if not (center.status == ARRIVED and tset.k[center.target] == p.index):
        return None
    counts: Dict[int, int] = {center.target: 1}
    grid = {(i, j): rows[1 + i * nphi + j]
            for i in range(len(radii)) for j in range(nphi)}
    for (i, j), row in grid.items():
        if row.status != ARRIVED:
            continue
        t = row.target
        if tset.k[t] != p.index or t == center.target:
            continue

        def landing(ii, jj):
            rr = grid[(max(0, min(len(radii) - 1, ii)), jj % nphi)]
            c = tset.Vinv[t] @ (rr.x_end - tset.Q[t])
            return c[:2]

        d_r = landing(i + 1, j) - landing(i - 1, j)
        d_p = landing(i, j + 1) - landing(i, j - 1)
        det = d_r[0] * d_p[1] - d_r[1] * d_p[0]
        counts[t] = counts.get(t, 0) + (1 if det > 0 else -1)
    warnings.append(f"disk scan used for the index-2 source at "
                    f"{np.round(p.location, 6).tolist()}: best-effort signs")
    crec = _make_record(center, field, p.location, None, p.value, tset,
                        sign=1)
    return hi, lo, counts, crec
