"""Complex constraint weights and the partitioned Laplacian blocks.

Each follower ``i`` with constraint neighbors ``(j, k)`` contributes one row

    (w_ij + w_ik) p_i - w_ij p_j - w_ik p_k = 0

to the follower Laplacian ``W_f = [W_fl  W_ff]``. The same construction on a
real axis coordinate gives ``M_f = [M_fl  M_ff]`` for 3-D formations.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import NamedTuple

import numpy as np
import scipy.linalg as sla

from .errors import ContractViolation, DegenerateConfigurationError, NotLocalizableError
from .graph import FormationGraph

__all__ = [
    "WeightPair",
    "NominalConfig",
    "LaplacianBlocks",
    "LocalizabilityReport",
    "complex_weights",
    "real_axis_weights",
    "assemble",
    "localizable",
    "solve_followers",
    "solve_followers_axis",
    "xi_bound",
    "hermitian_extremes",
    "hermitian_eigenvalues",
    "shape_feasible",
    "wfl_full_row_rank",
    "COND_THRESHOLD",
]

COND_THRESHOLD = 1e12
ZERO_SUM_TOL = 1e-12


class WeightPair(NamedTuple):
    ij: complex
    ik: complex

    @property
    def total(self):
        return self.ij + self.ik

    @property
    def zero_sum(self) -> bool:
        scale = max(abs(self.ij), abs(self.ik))
        return abs(self.ij + self.ik) <= ZERO_SUM_TOL * scale


def complex_weights(r_i: complex, r_j: complex, r_k: complex) -> WeightPair:
    """Weights ``w_ij = conj(r_j - r_i)/d_ij^2`` and ``w_ik = -conj(r_k - r_i)/d_ik^2``."""
    dj = complex(r_j) - complex(r_i)
    dk = complex(r_k) - complex(r_i)
    if dj == 0 or dk == 0:
        raise DegenerateConfigurationError(
            f"collocated nominal neighbor: r_i={r_i}, r_j={r_j}, r_k={r_k}")
    return WeightPair(dj.conjugate() / abs(dj) ** 2, -dk.conjugate() / abs(dk) ** 2)


def real_axis_weights(e_i: float, e_j: float, e_k: float) -> WeightPair:
    dj = float(e_j) - float(e_i)
    dk = float(e_k) - float(e_i)
    if dj == 0 or dk == 0:
        raise DegenerateConfigurationError(
            f"collocated axis coordinate: e_i={e_i}, e_j={e_j}, e_k={e_k}")
    return WeightPair(1.0 / dj, -1.0 / dk)


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class NominalConfig:
    r: np.ndarray
    epsilon: np.ndarray | None = None

    def __post_init__(self):
        r = np.asarray(self.r, dtype=complex)
        if r.ndim != 1 or not np.all(np.isfinite(r)):
            raise ContractViolation("nominal r must be a finite 1-D vector")
        object.__setattr__(self, "r", _frozen(r))
        if self.epsilon is not None:
            e = np.asarray(self.epsilon, dtype=float)
            if e.shape != r.shape or not np.all(np.isfinite(e)):
                raise ContractViolation("epsilon must be finite and match r in length")
            object.__setattr__(self, "epsilon", _frozen(e))

    @property
    def n(self) -> int:
        return len(self.r)

    @property
    def is_3d(self) -> bool:
        return self.epsilon is not None


@dataclass(frozen=True)
class LocalizabilityReport:
    invertible: bool
    cond: float
    cond_W: float
    cond_M: float | None = None


@dataclass(frozen=True, eq=False)
class LaplacianBlocks:
    graph: FormationGraph
    W_fl: np.ndarray
    W_ff: np.ndarray
    weights: dict = field(repr=False)
    M_fl: np.ndarray | None = None
    M_ff: np.ndarray | None = None
    axis_weights: dict | None = field(default=None, repr=False)
    zero_sum: tuple = ()
    cond_Wff: float = np.inf
    cond_Mff: float | None = None
    plane: str | None = None

    @property
    def m(self) -> int:
        return self.W_fl.shape[1]

    @property
    def n(self) -> int:
        return self.W_fl.shape[1] + self.W_ff.shape[0]

    @property
    def has_axis(self) -> bool:
        return self.M_ff is not None

    @cached_property
    def W_f(self) -> np.ndarray:
        return _frozen(np.hstack([self.W_fl, self.W_ff]))

    @cached_property
    def M_f(self) -> np.ndarray | None:
        if self.M_ff is None:
            return None
        return _frozen(np.hstack([self.M_fl, self.M_ff]))

    @cached_property
    def D_ff(self) -> np.ndarray:
        return _frozen(self.W_ff.conj().T @ self.W_ff)

    @cached_property
    def D_fl(self) -> np.ndarray:
        return _frozen(self.W_ff.conj().T @ self.W_fl)

    @cached_property
    def report(self) -> LocalizabilityReport:
        return localizable(self)

    @cached_property
    def _lu_W(self):
        return sla.lu_factor(self.W_ff)

    @cached_property
    def _lu_M(self):
        return sla.lu_factor(self.M_ff)

    @cached_property
    def follower_map(self) -> np.ndarray:
        """``-W_ff^{-1} W_fl``: leader positions to consistent follower positions."""
        self.require_localizable()
        return _frozen(-sla.lu_solve(self._lu_W, self.W_fl))

    @cached_property
    def axis_map(self) -> np.ndarray:
        self.require_localizable()
        if self.M_ff is None:
            raise ContractViolation("blocks carry no axis (M) matrices")
        return _frozen(-sla.lu_solve(self._lu_M, self.M_fl))

    def require_localizable(self):
        rep = self.report
        if not rep.invertible:
            raise NotLocalizableError(
                f"follower block is singular or ill-conditioned (cond={rep.cond:.3g})")

    def residual(self, p: np.ndarray) -> np.ndarray:
        return self.W_f @ np.asarray(p)

    def axis_residual(self, tau: np.ndarray) -> np.ndarray:
        return self.M_f @ np.asarray(tau)


def _cond(A: np.ndarray) -> float:
    if A.size == 0:
        return 1.0
    s = np.linalg.svd(A, compute_uv=False)
    return float(s[0] / s[-1]) if s[-1] > 0 else np.inf


def _assemble_rows(g: FormationGraph, coords, weight_fn, dtype):
    n, m = g.n, g.m
    Wf = np.zeros((n - m, n), dtype=dtype)
    weights = {}
    zero_sum = []
    for i, (j, k) in g.constraint_neighbors.items():
        try:
            w = weight_fn(coords[i - 1], coords[j - 1], coords[k - 1])
        except DegenerateConfigurationError as exc:
            raise DegenerateConfigurationError(f"follower {i} with neighbors ({j}, {k}): {exc}",
                                               agent=i) from None
        weights[i] = w
        if w.zero_sum:
            zero_sum.append(i)
        row = i - m - 1
        Wf[row, i - 1] += w.ij + w.ik
        Wf[row, j - 1] -= w.ij
        Wf[row, k - 1] -= w.ik
    return Wf, weights, zero_sum


def assemble(g: FormationGraph, cfg: NominalConfig, plane: str | None = None) -> LaplacianBlocks:
    """Build ``W_fl, W_ff`` (and ``M_fl, M_ff`` when ``cfg`` has an axis).

    ``plane`` optionally tags 3-D blocks with the world plane they describe.
    """
    if cfg.n != g.n:
        raise ContractViolation(f"configuration has {cfg.n} agents, graph has {g.n}")
    m = g.m
    Wf, weights, zs = _assemble_rows(g, cfg.r, complex_weights, complex)
    kw = {}
    if cfg.epsilon is not None:
        Mf, aw, zs_m = _assemble_rows(g, cfg.epsilon, real_axis_weights, float)
        zs = sorted(set(zs) | set(zs_m))
        kw = dict(M_fl=_frozen(Mf[:, :m]), M_ff=_frozen(Mf[:, m:]), axis_weights=aw,
                  cond_Mff=_cond(Mf[:, m:]))
    return LaplacianBlocks(graph=g, W_fl=_frozen(Wf[:, :m]), W_ff=_frozen(Wf[:, m:]), weights=weights,
                           zero_sum=tuple(zs), cond_Wff=_cond(Wf[:, m:]), plane=plane, **kw)


def localizable(b: LaplacianBlocks, threshold: float = COND_THRESHOLD) -> LocalizabilityReport:
    def ok(A, c):
        return np.linalg.matrix_rank(A) == A.shape[0] and c < threshold

    inv = ok(b.W_ff, b.cond_Wff)
    cond = b.cond_Wff
    if b.M_ff is not None:
        inv = inv and ok(b.M_ff, b.cond_Mff)
        cond = max(cond, b.cond_Mff)
    return LocalizabilityReport(bool(inv), float(cond), float(b.cond_Wff), b.cond_Mff)


def solve_followers(b: LaplacianBlocks, p_L) -> np.ndarray:
    """Follower positions consistent with leaders ``p_L``: solves ``W_ff p_F = -W_fl p_L``."""
    b.require_localizable()
    p_L = np.asarray(p_L, dtype=complex)
    return sla.lu_solve(b._lu_W, -(b.W_fl @ p_L))


def solve_followers_axis(b: LaplacianBlocks, tau_L) -> np.ndarray:
    b.require_localizable()
    if b.M_ff is None:
        raise ContractViolation("blocks carry no axis (M) matrices")
    return sla.lu_solve(b._lu_M, -(b.M_fl @ np.asarray(tau_L, dtype=float)))


def xi_bound(b: LaplacianBlocks) -> float:
    """Largest entry modulus of ``W_ff^{-1} W_fl`` (and ``M_ff^{-1} M_fl`` in 3-D)."""
    xi = float(np.abs(b.follower_map).max())
    if b.has_axis:
        xi = max(xi, float(np.abs(b.axis_map).max()))
    return xi


def _check_hermitian(D: np.ndarray) -> np.ndarray:
    D = np.asarray(D, dtype=complex)
    if D.ndim != 2 or D.shape[0] != D.shape[1]:
        raise ContractViolation("expected a square matrix")
    if np.abs(D - D.conj().T).max(initial=0.0) > 1e-12 * max(1.0, np.abs(D).max(initial=0.0)):
        raise ContractViolation("matrix is not Hermitian")
    return D


def hermitian_eigenvalues(D) -> np.ndarray:
    """Eigenvalues of a Hermitian matrix via its real symmetric 2d x 2d embedding.

    The embedding ``[[A, -B], [B, A]]`` of ``D = A + iB`` has every eigenvalue
    of ``D`` twice; the duplicates are dropped.
    """
    D = _check_hermitian(D)
    A, B = D.real, D.imag
    E = np.block([[A, -B], [B, A]])
    lam = np.linalg.eigvalsh(0.5 * (E + E.T))
    return lam[::2]


def hermitian_extremes(D) -> tuple[float, float]:
    lam = hermitian_eigenvalues(D)
    return float(lam[0]), float(lam[-1])


def wfl_full_row_rank(b: LaplacianBlocks, axis: bool = False) -> bool:
    A = b.M_fl if axis else b.W_fl
    return bool(np.linalg.matrix_rank(A) == A.shape[0])


def shape_feasible(b: LaplacianBlocks, s_F, axis: bool = False) -> np.ndarray | None:
    """Minimum-norm leader shape producing follower shape ``s_F``, or ``None``.

    Solves ``-W_ff^{-1} W_fl s_L = s_F`` in the least-squares sense and
    accepts when the residual is below ``1e-8 * ||s_F||``.
    """
    K = b.axis_map if axis else b.follower_map
    s_F = np.asarray(s_F, dtype=float if axis else complex)
    if s_F.shape != (K.shape[0],):
        raise ContractViolation(f"s_F must have length {K.shape[0]}")
    s_L, *_ = np.linalg.lstsq(K, s_F, rcond=1e-10)
    tol = 1e-8 * np.linalg.norm(s_F)
    if np.linalg.norm(K @ s_L - s_F) > tol:
        return None
    return s_L
