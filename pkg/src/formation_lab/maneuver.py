"""Time-varying maneuver parameters and the target formations they induce.

A target formation is ``p*(t) = beta(t) + h(t) exp(i theta(t)) s(t)`` where
the shape ``s`` lies in the null space of the follower Laplacian. Only the
leader part ``s_L`` is scheduled; the follower part is always recomputed from
it, so scheduled shapes cannot drift off the constraint manifold.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import AssumptionViolation, ContractViolation
from .graph import FormationGraph
from .laplacian import LaplacianBlocks, NominalConfig, assemble, shape_feasible

log = logging.getLogger(__name__)

__all__ = [
    "Constant", "Ramp", "Smoothstep", "Sinusoid", "PROFILE_KINDS",
    "ManeuverPiece2D", "ManeuverSchedule2D", "ManeuverPiece3D", "ManeuverSchedule3D",
    "TargetState", "TargetState3D", "OrientationPlan",
    "PHASE_PLANES", "PLANE_AXES",
    "eval_target_2d", "eval_target_3d", "reindex_3d", "to_world", "from_world",
    "shape_interp", "orientation_plan", "rotation_matrix", "target_speed_bound",
]


# --------------------------------------------------------------------------
# scalar / vector profiles with analytic derivatives
#
# Each profile is called as ``profile(t) -> (value, rate)`` and sampled in
# bulk with ``profile.sample(ts) -> (values, rates)`` whose leading axis is
# time. Values may be real, complex, or vectors of either.
# --------------------------------------------------------------------------

def _arr(v):
    a = np.asarray(v)
    if a.dtype.kind not in "fc":
        a = a.astype(float)
    return a


def _prep(*vals):
    """Common-dtype arrays (0-d arrays unwrapped to Python scalars)."""
    arrs = np.broadcast_arrays(*[_arr(v) for v in vals])
    dtype = np.result_type(*arrs)
    out = []
    for a in arrs:
        a = np.array(a, dtype=dtype)
        a.setflags(write=False)
        out.append(a[()] if a.ndim == 0 else a)
    return out


class _Profile:
    def sample(self, ts):
        ts = np.asarray(ts, dtype=float)
        vals, rates = zip(*(self(float(t)) for t in ts))
        return np.array(vals), np.array(rates)


@dataclass(frozen=True, eq=False)
class Constant(_Profile):
    value: object
    kind = "constant"

    def __post_init__(self):
        v, z = _prep(self.value, 0.0)
        object.__setattr__(self, "_v", v)
        object.__setattr__(self, "_z", z * 0)

    def __call__(self, t):
        return self._v, self._z

    def sample(self, ts):
        k = len(ts)
        v = np.broadcast_to(self._v, (k,) + np.shape(self._v))
        return v, np.zeros_like(v)


@dataclass(frozen=True, eq=False)
class _Blend(_Profile):
    t0: float
    t1: float
    start: object
    end: object

    def __post_init__(self):
        if not self.t1 > self.t0:
            raise ContractViolation(f"{self.kind} needs t0 < t1, got {self.t0}, {self.t1}")
        a, b = _prep(self.start, self.end)
        object.__setattr__(self, "_a", a)
        object.__setattr__(self, "_b", b)
        object.__setattr__(self, "_d", b - a)
        object.__setattr__(self, "_z", (b - a) * 0)

    # rates are right-continuous: the interior rate applies on [t0, t1)
    def __call__(self, t):
        if t < self.t0:
            return self._a, self._z
        if t >= self.t1:
            return self._b, self._z
        T = self.t1 - self.t0
        f, df = self._shape((t - self.t0) / T)
        return self._a + f * self._d, (df / T) * self._d

    def sample(self, ts):
        ts = np.asarray(ts, dtype=float)
        T = self.t1 - self.t0
        u = np.clip((ts - self.t0) / T, 0.0, 1.0)
        f, df = self._shape(u)
        df = np.where((ts >= self.t0) & (ts < self.t1), df, 0.0)
        extra = (slice(None),) + (None,) * np.ndim(self._d)
        return self._a + f[extra] * self._d, (df / T)[extra] * self._d


class Ramp(_Blend):
    """Linear from ``start`` at ``t0`` to ``end`` at ``t1``; held outside."""

    kind = "ramp"

    @staticmethod
    def _shape(u):
        return u, np.ones_like(u) if isinstance(u, np.ndarray) else 1.0


class Smoothstep(_Blend):
    """Cubic ``u^2 (3 - 2u)`` blend, C1 at both ends; held outside ``[t0, t1]``."""

    kind = "smoothstep"

    @staticmethod
    def _shape(u):
        return u * u * (3 - 2 * u), 6 * u * (1 - u)


@dataclass(frozen=True, eq=False)
class Sinusoid(_Profile):
    amplitude: object
    omega: float
    phase: float = 0.0
    offset: object = 0.0
    kind = "sinusoid"

    def __post_init__(self):
        A, c = _prep(self.amplitude, self.offset)
        object.__setattr__(self, "_A", A)
        object.__setattr__(self, "_c", c)

    def __call__(self, t):
        arg = self.omega * t + self.phase
        return self._c + self._A * math.sin(arg), self._A * (self.omega * math.cos(arg)) + self._c * 0

    def sample(self, ts):
        arg = self.omega * np.asarray(ts, dtype=float) + self.phase
        extra = (slice(None),) + (None,) * np.ndim(self._A)
        return (self._c + np.sin(arg)[extra] * self._A,
                (self.omega * np.cos(arg))[extra] * self._A + self._c * 0)


PROFILE_KINDS = {cls.kind: cls for cls in (Constant, Ramp, Smoothstep, Sinusoid)}


# --------------------------------------------------------------------------
# schedules
# --------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ManeuverPiece2D:
    t_start: float
    t_end: float
    beta: object = field(default_factory=lambda: Constant(0j))
    h: object = field(default_factory=lambda: Constant(1.0))
    theta: object = field(default_factory=lambda: Constant(0.0))
    s_L: object = None

    def params(self, t):
        beta, dbeta = self.beta(t)
        h, dh = self.h(t)
        th, dth = self.theta(t)
        sL, dsL = self.s_L(t)
        return (complex(beta), complex(dbeta), float(h), float(dh), float(th), float(dth),
                np.asarray(sL, dtype=complex), np.asarray(dsL, dtype=complex))


class _Schedule:
    pieces: Sequence

    def _validate_intervals(self):
        if not self.pieces:
            raise ContractViolation("schedule has no pieces")
        for a in self.pieces:
            if not a.t_end > a.t_start:
                raise ContractViolation(f"empty piece [{a.t_start}, {a.t_end})")
        for a, b in zip(self.pieces, self.pieces[1:]):
            if b.t_start < a.t_end - 1e-12:
                raise ContractViolation(f"pieces overlap at t={b.t_start}")
            if b.t_start > a.t_end + 1e-12:
                raise ContractViolation(f"gap between pieces at t={a.t_end}")

    @property
    def t_start(self) -> float:
        return self.pieces[0].t_start

    @property
    def t_end(self) -> float:
        return self.pieces[-1].t_end

    @property
    def boundaries(self) -> list[float]:
        return [p.t_start for p in self.pieces[1:]]

    def index_at(self, t: float) -> int:
        if t < self.t_start - 1e-12 or t > self.t_end + 1e-12:
            raise ContractViolation(f"t={t} outside schedule [{self.t_start}, {self.t_end}]")
        for idx in range(len(self.pieces) - 1, -1, -1):
            if t >= self.pieces[idx].t_start - 1e-12:
                return idx
        return 0

    def piece_at(self, t: float):
        return self.pieces[self.index_at(t)]


@dataclass(frozen=True, eq=False)
class ManeuverSchedule2D(_Schedule):
    pieces: tuple

    def __post_init__(self):
        object.__setattr__(self, "pieces", tuple(self.pieces))
        self._validate_intervals()
        for p in self.pieces:
            if p.s_L is None:
                raise ContractViolation("every piece needs an s_L profile")
            for t in (p.t_start, 0.5 * (p.t_start + p.t_end), p.t_end):
                if p.h(t)[0] == 0:
                    raise ContractViolation(f"scale h vanishes at t={t}")

    def continuity_gaps(self) -> list[float]:
        """Jump in (beta, h, theta, s_L) at each piece boundary."""
        gaps = []
        for a, b in zip(self.pieces, self.pieces[1:]):
            t = b.t_start
            pa, pb = a.params(t), b.params(t)
            gaps.append(max(float(np.max(np.abs(np.asarray(x) - np.asarray(y))))
                            for x, y in zip(pa[0::2], pb[0::2])))
        return gaps


@dataclass(frozen=True)
class TargetState:
    p_star: np.ndarray
    p_star_dot: np.ndarray


def _planar_target(params, K):
    beta, dbeta, h, dh, th, dth, sL, dsL = params
    rot = complex(math.cos(th), math.sin(th))
    s = np.concatenate([sL, K @ sL])
    ds = np.concatenate([dsL, K @ dsL])
    p = beta + h * rot * s
    dp = dbeta + (dh + 1j * h * dth) * rot * s + h * rot * ds
    return p, dp


def eval_target_2d(sched: ManeuverSchedule2D, b: LaplacianBlocks, t: float) -> TargetState:
    piece = sched.piece_at(t)
    params = piece.params(t)
    if params[6].shape != (b.m,):
        raise ContractViolation(f"s_L has shape {params[6].shape}, expected ({b.m},)")
    p, dp = _planar_target(params, b.follower_map)
    return TargetState(p, dp)


def target_speed_bound(sched, samples_per_piece: int = 10_000, margin: float = 0.1) -> float:
    """Sampled bound on leader target speed, inflated by ``margin``.

    For 3-D schedules the bound covers both the planar and the axis rates.
    """
    best = 0.0
    for piece in sched.pieces:
        ts = np.linspace(piece.t_start, piece.t_end, samples_per_piece)
        if isinstance(piece, ManeuverPiece3D):
            _, dbeta = piece.beta_p.sample(ts)
            _, dbt = piece.beta_tau.sample(ts)
        else:
            _, dbeta = piece.beta.sample(ts)
        h, dh = piece.h.sample(ts)
        th, dth = piece.theta.sample(ts)
        if isinstance(piece, ManeuverPiece3D):
            sL, dsL = piece.s_L_p.sample(ts)
            st, dst = piece.s_L_tau.sample(ts)
        else:
            sL, dsL = piece.s_L.sample(ts)
        rot = np.exp(1j * th)[:, None]
        h, dh, dth = h[:, None], dh[:, None], dth[:, None]
        dp = np.asarray(dbeta)[:, None] + (dh + 1j * h * dth) * rot * sL + h * rot * dsL
        speed = np.abs(dp).max()
        if isinstance(piece, ManeuverPiece3D):
            dtau = np.asarray(dbt)[:, None] + dh * st + h * dst
            speed = max(speed, np.abs(dtau).max())
        best = max(best, float(speed))
    return best * (1.0 + margin)


# --------------------------------------------------------------------------
# 3-D
# --------------------------------------------------------------------------

PHASE_PLANES = {"yaw": "xy", "pitch": "xz", "roll": "yz"}
# (real axis, imaginary axis, normal axis) as world indices
PLANE_AXES = {"xy": (0, 1, 2), "xz": (0, 2, 1), "yz": (1, 2, 0)}


def from_world(phase: str, xyz) -> tuple[np.ndarray, np.ndarray]:
    a, b, c = PLANE_AXES[PHASE_PLANES[phase]]
    xyz = np.asarray(xyz, dtype=float)
    return xyz[:, a] + 1j * xyz[:, b], xyz[:, c].copy()


def to_world(phase: str, p, tau) -> np.ndarray:
    a, b, c = PLANE_AXES[PHASE_PLANES[phase]]
    p = np.asarray(p)
    out = np.empty((len(p), 3))
    out[:, a] = p.real
    out[:, b] = p.imag
    out[:, c] = tau
    return out


def reindex_3d(q) -> tuple[NominalConfig, NominalConfig, NominalConfig]:
    """Planar/axis nominal configurations for the yaw, pitch and roll planes."""
    q = np.asarray(q, dtype=float).reshape(-1, 3)
    return tuple(NominalConfig(*from_world(ph, q)) for ph in ("yaw", "pitch", "roll"))


@dataclass(frozen=True, eq=False)
class ManeuverPiece3D:
    t_start: float
    t_end: float
    phase: str = "yaw"
    beta_p: object = field(default_factory=lambda: Constant(0j))
    beta_tau: object = field(default_factory=lambda: Constant(0.0))
    h: object = field(default_factory=lambda: Constant(1.0))
    theta: object = field(default_factory=lambda: Constant(0.0))
    s_L_p: object = None
    s_L_tau: object = None

    def __post_init__(self):
        if self.phase not in PHASE_PLANES:
            raise ContractViolation(f"unknown phase {self.phase!r}")

    def params(self, t):
        bp, dbp = self.beta_p(t)
        bt, dbt = self.beta_tau(t)
        h, dh = self.h(t)
        th, dth = self.theta(t)
        sp, dsp = self.s_L_p(t)
        st, dst = self.s_L_tau(t)
        return (complex(bp), complex(dbp), float(bt), float(dbt), float(h), float(dh), float(th), float(dth),
                np.asarray(sp, dtype=complex), np.asarray(dsp, dtype=complex),
                np.asarray(st, dtype=float), np.asarray(dst, dtype=float))


@dataclass(frozen=True, eq=False)
class ManeuverSchedule3D(_Schedule):
    pieces: tuple

    def __post_init__(self):
        object.__setattr__(self, "pieces", tuple(self.pieces))
        self._validate_intervals()
        for p in self.pieces:
            if p.s_L_p is None or p.s_L_tau is None:
                raise ContractViolation("every 3-D piece needs s_L_p and s_L_tau profiles")


@dataclass(frozen=True)
class TargetState3D:
    phase: str
    p_star: np.ndarray
    p_star_dot: np.ndarray
    tau_star: np.ndarray
    tau_star_dot: np.ndarray

    @property
    def world(self) -> np.ndarray:
        return to_world(self.phase, self.p_star, self.tau_star)

    @property
    def world_dot(self) -> np.ndarray:
        return to_world(self.phase, self.p_star_dot, self.tau_star_dot)


def _eval3(piece: ManeuverPiece3D, b: LaplacianBlocks, t: float) -> TargetState3D:
    bp, dbp, bt, dbt, h, dh, th, dth, sp, dsp, st, dst = piece.params(t)
    p, dp = _planar_target((bp, dbp, h, dh, th, dth, sp, dsp), b.follower_map)
    A = b.axis_map
    s = np.concatenate([st, A @ st])
    ds = np.concatenate([dst, A @ dst])
    tau = bt + h * s
    dtau = dbt + dh * s + h * ds
    return TargetState3D(piece.phase, p, dp, tau, dtau)


def eval_target_3d(sched: ManeuverSchedule3D, blocks: LaplacianBlocks, t: float) -> TargetState3D:
    """Target at ``t``; ``blocks`` must have been built for the active phase's plane."""
    piece = sched.piece_at(t)
    if not blocks.has_axis:
        raise ContractViolation("3-D evaluation needs blocks with axis (M) matrices")
    plane = blocks.plane
    if plane is not None and plane != PHASE_PLANES[piece.phase]:
        raise ContractViolation(
            f"blocks built for plane {plane!r} but phase {piece.phase!r} at t={t} uses "
            f"{PHASE_PLANES[piece.phase]!r}")
    return _eval3(piece, blocks, t)


# --------------------------------------------------------------------------
# shape interpolation and orientation plans
# --------------------------------------------------------------------------

def shape_interp(r, s_end, t0: float, t1: float, b: LaplacianBlocks, *,
                 beta=None, h=None, theta=None) -> ManeuverPiece2D:
    """Piece whose leader shape blends from ``r_L`` at ``t0`` to ``s_end`` at ``t1``.

    ``s_end`` is a full shape (n entries) or leader-only (m entries). A full
    shape whose follower part disagrees with its leader part is accepted only
    if that follower shape is reachable by some leader shape; the follower
    part is then recomputed from the given leader part.
    """
    if not t1 > t0:
        raise ContractViolation(f"need t0 < t1, got {t0}, {t1}")
    r = np.asarray(r, dtype=complex)
    s_end = np.asarray(s_end, dtype=complex)
    m = b.m
    if s_end.shape == (b.n,):
        res = np.abs(b.residual(s_end)).max()
        if res > 1e-9 * max(1.0, np.abs(s_end).max()):
            if shape_feasible(b, s_end[m:]) is None:
                raise AssumptionViolation("target follower shape is not reachable by any leader shape",
                                          field="s_end")
            log.warning("s_end violates the constraint (residual %.3g); recomputing followers", res)
        s_L_end = s_end[:m]
    elif s_end.shape == (m,):
        s_L_end = s_end
    else:
        raise ContractViolation(f"s_end must have {b.n} or {m} entries")
    return ManeuverPiece2D(
        t0, t1,
        beta=beta or Constant(0j), h=h or Constant(1.0), theta=theta or Constant(0.0),
        s_L=Smoothstep(t0, t1, r[:m], s_L_end),
    )


def rotation_matrix(phase: str, angle: float) -> np.ndarray:
    """World-frame rotation realized by turning the phase's complex plane by ``angle``."""
    a, b, _ = PLANE_AXES[PHASE_PLANES[phase]]
    R = np.eye(3)
    c, s = math.cos(angle), math.sin(angle)
    R[a, a], R[a, b], R[b, a], R[b, b] = c, -s, s, c
    return R


@dataclass(frozen=True, eq=False)
class OrientationPlan:
    schedule: ManeuverSchedule3D
    blocks: tuple  # one LaplacianBlocks per schedule piece
    nominals: tuple  # world-frame configuration at entry of each piece

    def blocks_at(self, t: float) -> LaplacianBlocks:
        return self.blocks[self.schedule.index_at(t)]

    def target(self, t: float) -> TargetState3D:
        idx = self.schedule.index_at(t)
        return eval_target_3d(self.schedule, self.blocks[idx], t)

    @property
    def composed_rotation(self) -> np.ndarray:
        R = np.eye(3)
        for piece in self.schedule.pieces:
            R = rotation_matrix(piece.phase, float(piece.theta(piece.t_end)[0])) @ R
        return R


def _phase_blocks(graph: FormationGraph, q: np.ndarray, phase: str) -> LaplacianBlocks:
    r, eps = from_world(phase, q)
    return assemble(graph, NominalConfig(r, eps), plane=PHASE_PLANES[phase])


def orientation_plan(q, graph: FormationGraph, phases, *, center=(0.0, 0.0, 0.0),
                     t0: float = 0.0, t_end: float | None = None) -> OrientationPlan:
    """Sequential single-plane rotations of the 3-D configuration ``q``.

    ``phases`` is a list of ``(phase, theta_profile, (t_a, t_b))`` with phase in
    {yaw, pitch, roll}. Each theta profile is relative to the configuration at
    phase entry and must start at 0; weights for a phase are computed from that
    entry configuration so switching planes never moves a target. A trailing
    hold piece is appended when ``t_end`` lies beyond the last phase.
    """
    q = np.asarray(q, dtype=float).reshape(-1, 3)
    c = np.asarray(center, dtype=float)
    pieces, blocks, nominals = [], [], []
    cur = q.copy()
    t_prev = t0
    specs = list(phases)
    if not specs:
        t1 = t_end if t_end is not None else t0 + 1.0
        specs = [("yaw", Constant(0.0), (t0, t1))]
    for phase, theta, (ta, tb) in specs:
        if phase not in PHASE_PLANES:
            raise ContractViolation(f"unknown phase {phase!r}")
        if not tb > ta:
            raise ContractViolation(f"empty phase interval ({ta}, {tb})")
        if ta < t_prev - 1e-12:
            raise ContractViolation(f"phase {phase!r} starting at {ta} overlaps the previous phase")
        if ta > t_prev + 1e-12:
            raise ContractViolation(f"gap before phase {phase!r} at t={t_prev}")
        if abs(float(theta(ta)[0])) > 1e-12:
            raise ContractViolation(f"theta profile of phase {phase!r} must start at 0")
        b = _phase_blocks(graph, cur, phase)
        r, eps = from_world(phase, cur)
        cp, ct = from_world(phase, c[None, :])
        m = graph.m
        pieces.append(ManeuverPiece3D(
            ta, tb, phase, beta_p=Constant(complex(cp[0])), beta_tau=Constant(float(ct[0])),
            theta=theta, s_L_p=Constant(r[:m] - cp[0]), s_L_tau=Constant(eps[:m] - ct[0])))
        blocks.append(b)
        nominals.append(cur.copy())
        R = rotation_matrix(phase, float(theta(tb)[0]))
        cur = (cur - c) @ R.T + c
        t_prev = tb
    if t_end is not None and t_end > t_prev + 1e-12:
        phase = pieces[-1].phase
        r, eps = from_world(phase, cur)
        cp, ct = from_world(phase, c[None, :])
        m = graph.m
        pieces.append(ManeuverPiece3D(
            t_prev, t_end, phase, beta_p=Constant(complex(cp[0])), beta_tau=Constant(float(ct[0])),
            s_L_p=Constant(r[:m] - cp[0]), s_L_tau=Constant(eps[:m] - ct[0])))
        blocks.append(_phase_blocks(graph, cur, phase))
        nominals.append(cur.copy())
    return OrientationPlan(ManeuverSchedule3D(tuple(pieces)), tuple(blocks), tuple(nominals))
