"""Leader tracking law, the two follower laws, and gain certification.

Per-agent functions mirror what a single robot computes from its own
measurements. The ``*_all`` / ``*_field`` variants stack the same laws over
all agents and are what the simulator calls.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, NamedTuple

import numpy as np
import scipy.linalg as sla

from .errors import ContractViolation, DegenerateConfigurationError
from .laplacian import LaplacianBlocks, WeightPair, xi_bound

__all__ = [
    "GainConfig",
    "ControlInput",
    "normalized",
    "leader_velocity",
    "leader_velocities",
    "follower_velocity_feedback",
    "velocity_feedback_all",
    "gamma_own",
    "gamma_incoming",
    "position_only_terms",
    "follower_position_only",
    "position_only_field",
    "certify_gain",
]


@dataclass(frozen=True)
class GainConfig:
    alpha1: float = 1.0
    alpha2: float = 1.0
    sig_epsilon: float = 0.0

    def __post_init__(self):
        if not self.alpha1 > 0:
            raise ContractViolation(f"alpha1 must be positive, got {self.alpha1}", field="gains.alpha1")
        if not self.alpha2 > 0:
            raise ContractViolation(f"alpha2 must be positive, got {self.alpha2}", field="gains.alpha2")
        if not self.sig_epsilon >= 0:
            raise ContractViolation(f"sig_epsilon must be >= 0, got {self.sig_epsilon}",
                                    field="gains.sig_epsilon")


class ControlInput(NamedTuple):
    v: complex
    sigma: float | None = None


def normalized(a, eps: float = 0.0):
    """``a / |a|`` where ``|a| > eps``, else 0 (elementwise, real or complex)."""
    a = np.asarray(a)
    mag = np.abs(a)
    out = np.zeros_like(a)
    mask = mag > eps
    out[mask] = a[mask] / mag[mask]
    return out


def leader_velocity(p_i, p_star_i, p_star_dot_i, tau_i=None, tau_star_i=None, tau_star_dot_i=0.0) -> ControlInput:
    """Saturated per-axis tracking plus target feedforward."""
    e = complex(p_i) - complex(p_star_i)
    v = -math.tanh(e.real) - 1j * math.tanh(e.imag) + complex(p_star_dot_i)
    sigma = None
    if tau_i is not None:
        sigma = -math.tanh(float(tau_i) - float(tau_star_i)) + float(tau_star_dot_i)
    return ControlInput(v, sigma)


def leader_velocities(p_L, p_star_L, p_star_dot_L):
    e = np.asarray(p_L) - np.asarray(p_star_L)
    if np.iscomplexobj(e):
        return -np.tanh(e.real) - 1j * np.tanh(e.imag) + p_star_dot_L
    return -np.tanh(e) + p_star_dot_L


def follower_velocity_feedback(w: WeightPair, p_i, p_j, v_j, p_k, v_k, alpha1: float) -> ControlInput:
    total = w.ij + w.ik
    if w.zero_sum:
        raise DegenerateConfigurationError("w_ij + w_ik = 0: neighbors share a nominal position")
    v = (w.ij * (v_j - alpha1 * (p_i - p_j)) + w.ik * (v_k - alpha1 * (p_i - p_k))) / total
    return ControlInput(v)


def velocity_feedback_all(b: LaplacianBlocks, p, v_L, alpha1: float, axis: bool = False) -> np.ndarray:
    """Follower velocities solving ``W_ff v_F + W_fl v_L = -alpha1 W_f p``.

    This is the stacked per-agent law; the neighbor-velocity coupling among
    followers makes it a linear system rather than an explicit formula.
    """
    if axis:
        lu, Wfl, Wf = b._lu_M, b.M_fl, b.M_f
    else:
        lu, Wfl, Wf = b._lu_W, b.W_fl, b.W_f
    return sla.lu_solve(lu, -(Wfl @ v_L) - alpha1 * (Wf @ p))


def gamma_own(w: WeightPair, p_i, p_j, p_k):
    """Follower's own term ``conj(w_ij + w_ik) [w_ij (p_j - p_i) + w_ik (p_k - p_i)]``."""
    return np.conj(w.ij + w.ik) * (w.ij * (p_j - p_i) + w.ik * (p_k - p_i))


def gamma_incoming(w_gi, w_gl, p_g, p_i, p_l):
    """Term received from follower ``g`` that uses ``i`` (and ``l``) as neighbors."""
    return np.conj(w_gi) * (w_gi * (p_g - p_i) + w_gl * (p_g - p_l))


def position_only_terms(b: LaplacianBlocks, p, i: int, axis: bool = False):
    """``(gamma_own, [gamma_incoming ...])`` for follower ``i`` from positions ``p``.

    With ``axis=True`` the real weights and axis coordinates are used.
    """
    g = b.graph
    weights = b.axis_weights if axis else b.weights
    if weights is None:
        raise ContractViolation("blocks carry no axis weights")
    p = np.asarray(p)
    j, k = g.constraint_neighbors[i]
    own = gamma_own(weights[i], p[i - 1], p[j - 1], p[k - 1])
    incoming = []
    for f in g.dependents(i):
        fj, fk = g.constraint_neighbors[f]
        w = weights[f]
        if fj == i:
            w_fi, w_fl, l = w.ij, w.ik, fk
        else:
            w_fi, w_fl, l = w.ik, w.ij, fj
        incoming.append(gamma_incoming(w_fi, w_fl, p[f - 1], p[i - 1], p[l - 1]))
    return own, incoming


def follower_position_only(own, incoming: Iterable = (), alpha2: float = 1.0, sig_epsilon: float = 0.0) -> ControlInput:
    a = own + sum(incoming)
    v = a + alpha2 * normalized(a, sig_epsilon)[()]
    if np.iscomplexobj(v):
        return ControlInput(complex(v))
    return ControlInput(0j, float(v))


def position_only_field(b: LaplacianBlocks, p, alpha2: float, sig_epsilon: float = 0.0,
                        axis: bool = False) -> np.ndarray:
    """Stacked position-only law: ``A + alpha2 * normalized(A)`` with ``A = -W_ff^H W_f p``."""
    if axis:
        A = -(b.M_ff.T @ (b.M_f @ p))
    else:
        A = -(b.W_ff.conj().T @ (b.W_f @ p))
    return A + alpha2 * normalized(A, sig_epsilon)


def certify_gain(b: LaplacianBlocks | float, delta: float, m: int | None = None) -> float:
    """Smallest position-only gain covered by the convergence guarantee: ``xi (sqrt2 + delta) m``.

    ``b`` may be blocks (xi is computed, including the axis block when
    present) or a precomputed xi, in which case ``m`` is required.
    """
    if delta < 0:
        raise ContractViolation("delta must be non-negative")
    if isinstance(b, LaplacianBlocks):
        xi = xi_bound(b)
        m = b.m if m is None else m
    else:
        xi = float(b)
        if m is None:
            raise ContractViolation("m is required when xi is given directly")
    return xi * (math.sqrt(2.0) + delta) * m
