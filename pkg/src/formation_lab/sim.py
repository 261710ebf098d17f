"""Closed-loop simulation, tracking diagnostics and collision certificates."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import control
from .control import GainConfig
from .errors import (
    AssumptionViolation,
    CertificateError,
    ContractViolation,
    DivergenceError,
    FormationError,
    NotLocalizableError,
    ScenarioValidationError,
    StructuralError,
)
from .graph import FormationGraph, follower_subgraph_undirected, is_two_reachable
from .laplacian import LaplacianBlocks, hermitian_extremes, xi_bound
from .maneuver import (
    ManeuverSchedule2D,
    ManeuverSchedule3D,
    OrientationPlan,
    TargetState,
    TargetState3D,
    _eval3,
    _planar_target,
    from_world,
    target_speed_bound,
    to_world,
)

log = logging.getLogger(__name__)

__all__ = [
    "FOLLOWER_MODES",
    "Scenario",
    "ValidationReport",
    "SimTrace",
    "check_nominal_assumptions",
    "validate_scenario",
    "integrate",
    "tracking_errors",
    "lyapunov_V3",
    "collision_certificate",
    "CollisionReport",
    "min_pairwise_distance",
    "separation_slack",
    "DIVERGENCE_LIMIT",
]

FOLLOWER_MODES = ("velocity_feedback", "position_only")
DIVERGENCE_LIMIT = 1e9


@dataclass(eq=False)
class Scenario:
    """Everything needed to run one closed-loop simulation.

    ``blocks`` holds one :class:`LaplacianBlocks` per schedule piece (the same
    object repeated unless an orientation plan switches weights). ``initial``
    is a complex vector (2-D) or an ``(n, 3)`` world-frame array (3-D).
    """

    graph: FormationGraph
    schedule: ManeuverSchedule2D | ManeuverSchedule3D
    blocks: tuple
    gains: GainConfig
    initial: np.ndarray
    follower_mode: str = "velocity_feedback"
    dt: float = 1e-3
    T: float = 10.0
    record_stride: int = 10
    strict_certificate: bool = False
    nominal: object = None
    plan: OrientationPlan | None = None
    name: str = "scenario"
    delta: float | None = None
    alpha2_min: float | None = None
    document: dict | None = field(default=None, repr=False)
    report: object = field(default=None, repr=False)

    @property
    def dimension(self) -> int:
        return 3 if isinstance(self.schedule, ManeuverSchedule3D) else 2

    @property
    def t0(self) -> float:
        return self.schedule.t_start

    @property
    def n(self) -> int:
        return self.graph.n

    @property
    def m(self) -> int:
        return self.graph.m

    def blocks_at(self, t: float) -> LaplacianBlocks:
        return self.blocks[self.schedule.index_at(t)]

    def target(self, t: float):
        idx = self.schedule.index_at(t)
        piece, b = self.schedule.pieces[idx], self.blocks[idx]
        if self.dimension == 3:
            return _eval3(piece, b, t)
        return TargetState(*_planar_target(piece.params(t), b.follower_map))


@dataclass
class ValidationReport:
    name: str
    dimension: int
    localizable: bool
    cond: float
    two_reachable: dict
    follower_subgraph_undirected: bool
    xi: float | None
    delta: float | None
    alpha2: float
    alpha2_min: float | None
    certificate_ok: bool | None
    errors: list = field(default_factory=list)
    warnings: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.errors

    def as_dict(self) -> dict:
        return {
            "name": self.name,
            "dimension": self.dimension,
            "ok": self.ok,
            "localizable": self.localizable,
            "cond": self.cond,
            "two_reachable": {str(k): v for k, v in self.two_reachable.items()},
            "all_two_reachable": all(self.two_reachable.values()),
            "follower_subgraph_undirected": self.follower_subgraph_undirected,
            "xi": self.xi,
            "delta": self.delta,
            "alpha2": self.alpha2,
            "alpha2_min": self.alpha2_min,
            "certificate_ok": self.certificate_ok,
            "errors": [e.as_dict() for e in self.errors],
            "warnings": list(self.warnings),
        }


def check_nominal_assumptions(graph: FormationGraph, r, epsilon=None, label: str = "") -> list[AssumptionViolation]:
    """Non-collocation of every follower triple, in the plane and on the axis."""
    out = []
    coords = [("r", np.asarray(r))]
    if epsilon is not None:
        coords.append(("epsilon", np.asarray(epsilon)))
    for name, c in coords:
        for i, (j, k) in graph.constraint_neighbors.items():
            ci, cj, ck = c[i - 1], c[j - 1], c[k - 1]
            bad = [f"{name}_{a} = {name}_{b}" for a, b, x, y in ((i, j, ci, cj), (i, k, ci, ck), (j, k, cj, ck))
                   if x == y]
            if bad:
                where = f" ({label})" if label else ""
                out.append(AssumptionViolation(
                    f"follower {i} with neighbors ({j}, {k}){where}: {', '.join(bad)}",
                    field=f"nominal.{name}", agent=i))
    return out


def _initial_distinct(sc: Scenario) -> list[FormationError]:
    X = np.asarray(sc.initial)
    pts = np.c_[X.real, X.imag] if sc.dimension == 2 else X
    out = []
    for i in range(len(pts)):
        for j in range(i + 1, len(pts)):
            if np.array_equal(pts[i], pts[j]):
                out.append(AssumptionViolation(f"agents {i + 1} and {j + 1} start at the same position",
                                               field="initial", agent=i + 1))
    return out


def structural_checks(g: FormationGraph, follower_mode: str) -> tuple[dict, list[FormationError]]:
    """Two-reachability of every follower and the follower-mode requirements."""
    errors: list[FormationError] = []
    reach = {i: is_two_reachable(g, i) for i in g.followers}
    for i, ok in reach.items():
        if not ok:
            errors.append(StructuralError(f"follower {i} is not two-reachable from the leaders",
                                          field="graph", agent=i))
    if follower_mode == "position_only" and not follower_subgraph_undirected(g):
        errors.append(StructuralError("position_only mode needs undirected follower-follower comm edges",
                                      field="graph.extra_comm"))
    if follower_mode not in FOLLOWER_MODES:
        errors.append(ContractViolation(f"unknown follower_mode {follower_mode!r}", field="follower_mode"))
    return reach, errors


def validate_scenario(sc: Scenario, raise_on_error: bool = True) -> ValidationReport:
    """Run every structural, geometric and gain check; collects all violations."""
    errors: list[FormationError] = []
    warnings: list[str] = []
    g = sc.graph

    reach, struct = structural_checks(g, sc.follower_mode)
    errors.extend(struct)
    undirected = follower_subgraph_undirected(g)

    uniq = list({id(b): b for b in sc.blocks}.values())
    loc_ok = True
    cond = 0.0
    for b in uniq:
        rep = b.report
        cond = max(cond, rep.cond)
        if not rep.invertible:
            loc_ok = False
            errors.append(NotLocalizableError(f"follower block not invertible (cond={rep.cond:.3g})"
                                              + (f" in plane {b.plane}" if b.plane else ""), field="nominal"))
        for i in b.zero_sum:
            # already reported as an assumption violation by the loader in the usual path
            if not any(getattr(e, "agent", None) == i and isinstance(e, AssumptionViolation) for e in errors):
                errors.append(AssumptionViolation(f"follower {i}: neighbor weights sum to zero", agent=i,
                                                  field="nominal"))
    errors.extend(_initial_distinct(sc))

    n_steps = sc.T / sc.dt
    if not sc.dt > 0 or not sc.T > 0 or abs(n_steps - round(n_steps)) > 1e-6 * max(1.0, n_steps):
        errors.append(ContractViolation(f"dt={sc.dt} must be positive and divide T={sc.T}", field="integrator.dt"))
    if sc.t0 + sc.T > sc.schedule.t_end + 1e-9:
        errors.append(ContractViolation(f"horizon {sc.t0 + sc.T} exceeds schedule end {sc.schedule.t_end}",
                                        field="integrator.T"))
    if sc.dimension == 3:
        for tb in sc.schedule.boundaries:
            k = (tb - sc.t0) / sc.dt
            if abs(k - round(k)) > 1e-6:
                errors.append(ContractViolation(f"dt={sc.dt} does not align with phase boundary t={tb}",
                                                field="integrator.dt"))

    xi = delta = amin = None
    cert_ok = None
    if loc_ok:
        xi = max(xi_bound(b) for b in uniq)
        delta = sc.delta if sc.delta is not None else target_speed_bound(sc.schedule)
        amin = control.certify_gain(xi, delta, g.m)
        sc.delta, sc.alpha2_min = delta, amin
        if sc.follower_mode == "position_only":
            cert_ok = sc.gains.alpha2 >= amin
            if not cert_ok:
                msg = f"alpha2={sc.gains.alpha2:.6g} is below the certified bound {amin:.6g}"
                if sc.strict_certificate:
                    errors.append(CertificateError(msg, alpha2_min=amin, field="gains.alpha2"))
                else:
                    warnings.append(msg)
                    log.warning(msg)

    report = ValidationReport(sc.name, sc.dimension, loc_ok, cond, reach, undirected, xi, delta,
                              sc.gains.alpha2, amin, cert_ok, errors, warnings)
    if errors and raise_on_error:
        raise ScenarioValidationError(errors)
    return report


# --------------------------------------------------------------------------
# integration
# --------------------------------------------------------------------------

@dataclass
class SimTrace:
    dimension: int
    m: int
    times: np.ndarray
    states: np.ndarray  # (K, n) complex or (K, n, 3)
    targets: np.ndarray
    e_L: np.ndarray
    e_F: np.ndarray
    lyapunov: np.ndarray
    min_dist: np.ndarray
    phase_index: np.ndarray
    e_L_tau: np.ndarray | None = None
    e_F_tau: np.ndarray | None = None

    def __len__(self):
        return len(self.times)

    @property
    def world(self) -> np.ndarray:
        """Positions as an ``(K, n, 2|3)`` real array."""
        if self.dimension == 2:
            return np.stack([self.states.real, self.states.imag], axis=-1)
        return self.states

    @property
    def world_targets(self) -> np.ndarray:
        if self.dimension == 2:
            return np.stack([self.targets.real, self.targets.imag], axis=-1)
        return self.targets

    @property
    def agent_errors(self) -> np.ndarray:
        """Euclidean distance of each agent from its target, ``(K, n)``."""
        return np.linalg.norm(self.world - self.world_targets, axis=-1)

    def e_F_norm(self) -> np.ndarray:
        out = np.linalg.norm(self.e_F, axis=1) ** 2
        if self.e_F_tau is not None:
            out = out + np.linalg.norm(self.e_F_tau, axis=1) ** 2
        return np.sqrt(out)


def _leader_targets_2d(params):
    beta, dbeta, h, dh, th, dth, sL, dsL = params
    rot = complex(math.cos(th), math.sin(th))
    return beta + h * rot * sL, dbeta + (dh + 1j * h * dth) * rot * sL + h * rot * dsL


def _make_rhs(sc: Scenario):
    m = sc.m
    mode = sc.follower_mode
    a1, a2, eps = sc.gains.alpha1, sc.gains.alpha2, sc.gains.sig_epsilon

    def followers(b, p, vL, axis=False):
        if mode == "velocity_feedback":
            return control.velocity_feedback_all(b, p, vL, a1, axis=axis)
        return control.position_only_field(b, p, a2, eps, axis=axis)

    if sc.dimension == 2:
        def rhs(t, p, piece, b):
            pL_star, dpL_star = _leader_targets_2d(piece.params(t))
            vL = control.leader_velocities(p[:m], pL_star, dpL_star)
            return np.concatenate([vL, followers(b, p, vL)])
        return rhs

    def rhs(t, X, piece, b):
        bp, dbp, bt, dbt, h, dh, th, dth, sp, dsp, st, dst = piece.params(t)
        pL_star, dpL_star = _leader_targets_2d((bp, dbp, h, dh, th, dth, sp, dsp))
        tauL_star, dtauL_star = bt + h * st, dbt + dh * st + h * dst
        p, tau = from_world(piece.phase, X)
        vL = control.leader_velocities(p[:m], pL_star, dpL_star)
        sL = control.leader_velocities(tau[:m], tauL_star, dtauL_star)
        v = np.concatenate([vL, followers(b, p, vL)])
        s = np.concatenate([sL, followers(b, tau, sL, axis=True)])
        return to_world(piece.phase, v, s)
    return rhs


def tracking_errors(state, b: LaplacianBlocks, target=None, phase: str | None = None):
    """Leader errors ``p_L - p_L*`` (needs ``target``) and ``e_F = p_F + W_ff^{-1} W_fl p_L``.

    For 3-D states pass the world ``(n, 3)`` array and the active ``phase``;
    the result then also carries the axis-channel errors.
    """
    m = b.m
    if phase is None:
        p = np.asarray(state)
        e_F = p[m:] - b.follower_map @ p[:m]
        e_L = None if target is None else p[:m] - target.p_star[:m]
        return e_L, e_F
    p, tau = from_world(phase, state)
    e_F = p[m:] - b.follower_map @ p[:m]
    e_Ft = tau[m:] - b.axis_map @ tau[:m]
    e_L = e_Lt = None
    if target is not None:
        e_L = p[:m] - target.p_star[:m]
        e_Lt = tau[:m] - target.tau_star[:m]
    return e_L, e_F, e_Lt, e_Ft


def lyapunov_V3(b: LaplacianBlocks, e_F, e_F_tau=None) -> float:
    """``0.5 e_F^H D_ff e_F`` (plus the axis analogue when ``e_F_tau`` is given)."""
    e = np.asarray(e_F, dtype=complex)
    v = 0.5 * float(np.real(np.vdot(e, b.D_ff @ e)))
    if e_F_tau is not None:
        et = np.asarray(e_F_tau, dtype=float)
        u = b.M_ff @ et
        v += 0.5 * float(u @ u)
    return v


def min_pairwise_distance(states) -> np.ndarray:
    """Per-sample minimum distance over unordered agent pairs.

    ``states`` is ``(K, n)`` complex, ``(K, n, d)`` real, or a :class:`SimTrace`.
    """
    if isinstance(states, SimTrace):
        X = states.world
    else:
        X = np.asarray(states)
        if np.iscomplexobj(X):
            X = np.stack([X.real, X.imag], axis=-1)
    if X.ndim == 2:
        X = X[None]
    d = np.linalg.norm(X[:, :, None, :] - X[:, None, :, :], axis=-1)
    n = d.shape[1]
    iu = np.triu_indices(n, 1)
    return d[:, iu[0], iu[1]].min(axis=1)


def _snapshot(sc, X, t, idx):
    piece, b = sc.schedule.pieces[idx], sc.blocks[idx]
    if sc.dimension == 2:
        tgt = TargetState(*_planar_target(piece.params(t), b.follower_map))
        e_L, e_F = tracking_errors(X, b, tgt)
        return tgt.p_star, e_L, e_F, lyapunov_V3(b, e_F), None, None
    tgt = _eval3(piece, b, t)
    e_L, e_F, e_Lt, e_Ft = tracking_errors(X, b, tgt, piece.phase)
    return tgt.world, e_L, e_F, lyapunov_V3(b, e_F, e_Ft), e_Lt, e_Ft


def integrate(sc: Scenario, validate: bool = True) -> SimTrace:
    """Fixed-step classical RK4 of ``dp_i/dt = v_i`` under the scenario's laws.

    The active schedule piece (and hence the weight blocks) is chosen at the
    start of each step and held for all four stages.
    """
    if validate:
        validate_scenario(sc)
    rhs = _make_rhs(sc)
    dt, t0 = sc.dt, sc.t0
    n_steps = int(round(sc.T / dt))
    stride = max(1, int(sc.record_stride))
    X = np.array(sc.initial, dtype=complex if sc.dimension == 2 else float)

    rec_t, rec_x, rec_tg, rec_eL, rec_eF, rec_V, rec_idx, rec_eLt, rec_eFt = ([] for _ in range(9))

    def record(k, X, idx):
        t = t0 + k * dt
        tg, e_L, e_F, V, e_Lt, e_Ft = _snapshot(sc, X, t, idx)
        rec_t.append(t)
        rec_x.append(X.copy())
        rec_tg.append(tg)
        rec_eL.append(e_L)
        rec_eF.append(e_F)
        rec_V.append(V)
        rec_idx.append(idx)
        rec_eLt.append(e_Lt)
        rec_eFt.append(e_Ft)

    pieces = sc.schedule.pieces
    idx = sc.schedule.index_at(t0)
    record(0, X, idx)
    h2 = 0.5 * dt
    for k in range(n_steps):
        t = t0 + k * dt
        idx = sc.schedule.index_at(t)
        piece, b = pieces[idx], sc.blocks[idx]
        k1 = rhs(t, X, piece, b)
        k2 = rhs(t + h2, X + h2 * k1, piece, b)
        k3 = rhs(t + h2, X + h2 * k2, piece, b)
        k4 = rhs(t + dt, X + dt * k3, piece, b)
        X = X + (dt / 6.0) * (k1 + 2.0 * (k2 + k3) + k4)
        if not np.all(np.isfinite(X)) or np.abs(X).max() > DIVERGENCE_LIMIT:
            raise DivergenceError(f"state diverged at t={t + dt:.6g}")
        if (k + 1) % stride == 0 or k + 1 == n_steps:
            # record against the piece that produced this step so per-phase
            # errors are read with the weights that were active
            record(k + 1, X, idx)

    states = np.array(rec_x)
    trace = SimTrace(
        dimension=sc.dimension, m=sc.m,
        times=np.array(rec_t), states=states, targets=np.array(rec_tg),
        e_L=np.array(rec_eL), e_F=np.array(rec_eF), lyapunov=np.array(rec_V),
        min_dist=min_pairwise_distance(states), phase_index=np.array(rec_idx),
    )
    if sc.dimension == 3:
        trace.e_L_tau = np.array(rec_eLt)
        trace.e_F_tau = np.array(rec_eFt)
    return trace


# --------------------------------------------------------------------------
# collision certificate
# --------------------------------------------------------------------------

@dataclass
class CollisionReport:
    psi: np.ndarray
    margin: float
    pair: tuple
    time: float
    passed: bool
    kappa: float

    def as_dict(self) -> dict:
        return {"psi": [float(x) for x in self.psi], "margin": self.margin,
                "binding_pair": list(self.pair), "binding_time": self.time,
                "passed": self.passed, "kappa": self.kappa}


def _kappa(b: LaplacianBlocks) -> float:
    lo, hi = hermitian_extremes(b.D_ff)
    k = hi / lo
    if b.has_axis:
        lo_m, hi_m = hermitian_extremes(b.M_ff.T @ b.M_ff)
        k = max(k, hi_m / lo_m)
    return k


def collision_certificate(sc: Scenario, times=None, targets=None, samples: int = 2001) -> CollisionReport:
    """Separation certificate: targets stay farther apart than the error radii.

    Leader radii are the initial tracking errors; follower radii are
    ``sqrt(lambda_max/lambda_min of D_ff) * ||e_F(0)||``. Targets are taken
    from ``times``/``targets`` (e.g. a trace) or sampled from the schedule.
    For weight-switching plans the radii use the worst conditioning over all
    phases but only bound the errors inside the first phase.
    """
    b0 = sc.blocks_at(sc.t0)
    for b in sc.blocks:
        b.require_localizable()
    m = sc.m
    tgt0 = sc.target(sc.t0)
    X0 = np.asarray(sc.initial)
    if sc.dimension == 2:
        e_L = X0[:m] - tgt0.p_star[:m]
        _, e_F = tracking_errors(X0, b0)
        lead = np.abs(e_L)
        eF_norm = np.linalg.norm(e_F)
    else:
        phase = sc.schedule.pieces[sc.schedule.index_at(sc.t0)].phase
        lead = np.linalg.norm(X0[:m] - tgt0.world[:m], axis=1)
        _, e_F, _, e_Ft = tracking_errors(X0, b0, None, phase)
        eF_norm = math.hypot(np.linalg.norm(e_F), np.linalg.norm(e_Ft))
    kappa = max(_kappa(b) for b in {id(b): b for b in sc.blocks}.values())
    psi = np.concatenate([lead, np.full(sc.n - m, math.sqrt(kappa) * eF_norm)])

    if targets is None:
        end = sc.t0 + sc.T
        times = np.linspace(sc.t0, end, samples)
        targets = np.array([_world(sc.target(float(t))) for t in times])
    else:
        targets = np.asarray(targets)
        if np.iscomplexobj(targets):
            targets = np.stack([targets.real, targets.imag], axis=-1)
    d = np.linalg.norm(targets[:, :, None, :] - targets[:, None, :, :], axis=-1)
    slack = d - psi[None, :, None] - psi[None, None, :]
    n = sc.n
    iu = np.triu_indices(n, 1)
    pair_slack = slack[:, iu[0], iu[1]]
    flat = int(np.argmin(pair_slack))
    k, p = divmod(flat, pair_slack.shape[1])
    margin = float(pair_slack[k, p])
    return CollisionReport(psi, margin, (int(iu[0][p]) + 1, int(iu[1][p]) + 1), float(times[k]),
                           margin > 0, float(kappa))


def _world(tgt):
    if isinstance(tgt, TargetState3D):
        return tgt.world
    return np.stack([tgt.p_star.real, tgt.p_star.imag], axis=-1)


def separation_slack(trace: SimTrace, psi) -> float:
    """Smallest ``||p_i - p_j|| - (||p_i* - p_j*|| - psi_i - psi_j)`` over samples and pairs.

    Non-negative whenever the realized separation honours the certified
    lower bound.
    """
    X, Y = trace.world, trace.world_targets
    psi = np.asarray(psi)
    d = np.linalg.norm(X[:, :, None, :] - X[:, None, :, :], axis=-1)
    ds = np.linalg.norm(Y[:, :, None, :] - Y[:, None, :, :], axis=-1)
    bound = ds - psi[None, :, None] - psi[None, None, :]
    n = X.shape[1]
    iu = np.triu_indices(n, 1)
    return float((d - bound)[:, iu[0], iu[1]].min())
