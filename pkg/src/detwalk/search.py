"""Deterministic amplitude amplification and the walk-phase solver.

Conventions
-----------
``S_M(alpha) = I - (1 - e^{i alpha}) |t><t|`` marks the target and
``S_psi0(beta) = I - (1 - e^{-i beta}) |psi0><psi0|`` reflects about the
prepared state.  One iteration is ``G(alpha, beta) = S_psi0(beta) S_M(alpha)``.

* Long's phase matching runs ``G(alpha, -alpha)^k`` with
  ``sin(pi/(4k+2)) = sqrt(lambda) sin(alpha/2)``.
* The fixed-beta scheme runs ``[G(alpha1, beta) G(alpha2, beta)]^k`` for an
  imposed ``beta``; the two angles are found numerically in the exact
  two-dimensional space spanned by the target and its complement.
* ``solve_eedp`` chooses walk angles so that ``t`` steps of the 5-dim vertex
  walk act on the subspace as a phase shift of ``psi0`` alone, up to a global
  phase.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import least_squares

from .errors import DegenerateError, DimensionError, PreconditionError, SolverError
from .linalg import eig_unitary, mat_power, reflection_about, unitarity_error
from .subspaces import JohnsonParams, build_vertexwalk_5d, vertexwalk_step

FIDELITY_TOL = 1e-10


@dataclass(frozen=True)
class SearchPlan:
    scheme: str  # "long" or "fixed_beta"
    lam: float
    k: int
    alpha: Optional[float] = None
    alpha1: Optional[float] = None
    alpha2: Optional[float] = None
    beta: Optional[float] = None
    residual: float = 0.0

    @property
    def iterations(self) -> int:
        """Number of ``G`` applications."""
        return self.k if self.scheme == "long" else 2 * self.k

    def as_dict(self) -> dict:
        out = {"scheme": self.scheme, "lambda": self.lam, "k": self.k, "beta": self.beta, "residual": self.residual}
        if self.scheme == "long":
            out["alpha"] = self.alpha
        else:
            out["alpha1"] = self.alpha1
            out["alpha2"] = self.alpha2
        return out


def _check_lambda(lam: float, allow_one: bool = True) -> float:
    lam = float(lam)
    if not (0.0 < lam <= 1.0) or (lam == 1.0 and not allow_one):
        raise PreconditionError(f"lambda must lie in (0, 1], got {lam}")
    return lam


def k_opt(lam: float) -> float:
    """``pi / (4 arcsin sqrt(lambda)) - 1/2``."""
    lam = _check_lambda(lam)
    return math.pi / (4 * math.asin(math.sqrt(lam))) - 0.5


def long_min_k(lam: float) -> int:
    """Smallest ``k`` with ``sin(pi/(4k+2)) <= sqrt(lambda)``."""
    lam = _check_lambda(lam)
    if lam == 1.0:
        return 0
    k = max(1, math.ceil(k_opt(lam) - 1e-12))
    while math.sin(math.pi / (4 * k + 2)) > math.sqrt(lam) * (1 + 1e-15):
        k += 1
    while k > 1 and math.sin(math.pi / (4 * (k - 1) + 2)) <= math.sqrt(lam):
        k -= 1
    return k


def long_params(lam: float, k: Optional[int] = None) -> SearchPlan:
    """Long's phase-matched plan; ``k`` defaults to the smallest feasible one."""
    lam = _check_lambda(lam)
    if k is None:
        k = long_min_k(lam)
    k = int(k)
    if k == 0:
        if lam != 1.0:
            raise PreconditionError(f"k = 0 only solves lambda = 1; minimal feasible k is {long_min_k(lam)}")
        return SearchPlan("long", lam, 0, alpha=0.0, beta=0.0)
    if k < 0:
        raise PreconditionError("k must be non-negative")
    s = math.sin(math.pi / (4 * k + 2)) / math.sqrt(lam)
    if s > 1.0 + 1e-15:
        raise PreconditionError(
            f"Long's equation has no solution at k={k}, lambda={lam}; minimal feasible k is {long_min_k(lam)}"
        )
    # arcsin is ill-conditioned at 1; snap rounding noise so lambda = 1/4, k = 1 gives pi
    alpha = math.pi if s >= 1.0 - 1e-14 else 2 * math.asin(s)
    return SearchPlan("long", lam, k, alpha=alpha, beta=-alpha)


def k_lower(lam: float, beta: float) -> float:
    """``pi / |x mod [-pi/2, pi/2]|`` with ``x = 4 arcsin(sqrt(lambda) sin(beta/2))``."""
    lam = _check_lambda(lam)
    beta = float(beta)
    if not 0.0 < beta < 2 * math.pi:
        raise PreconditionError(f"beta must lie in (0, 2*pi), got {beta}")
    x = 4 * math.asin(math.sqrt(lam) * math.sin(beta / 2))
    y = x - math.pi * round(x / math.pi)
    if abs(y) < 1e-12:
        raise DegenerateError(f"k_lower is unbounded at lambda={lam}, beta={beta} (reduced angle is 0)")
    return math.pi / abs(y)


# ------------------------------------------------------------ 2-dim kernel


def _two_dim(lam: float) -> tuple[np.ndarray, np.ndarray]:
    psi = np.array([math.sqrt(lam), math.sqrt(1 - lam)], dtype=np.complex128)
    t = np.array([1.0, 0.0], dtype=np.complex128)
    return psi, t


def grover_iterate(psi: np.ndarray, t: np.ndarray, alpha: float, beta: float) -> np.ndarray:
    """Dense ``G(alpha, beta)`` for small dimensions."""
    return reflection_about(psi, -beta) @ reflection_about(t, alpha)


def _fixed_beta_amplitudes(x, lam, beta, k):
    psi, t = _two_dim(lam)
    g = grover_iterate(psi, t, x[0], beta) @ grover_iterate(psi, t, x[1], beta)
    return mat_power(g, k) @ psi


def _fb_residual(x, lam, beta, k):
    a = _fixed_beta_amplitudes(x, lam, beta, k)[1]
    return [a.real, a.imag]


def _fb_residual_equal(x, lam, beta, k):
    return _fb_residual([x[0], x[0]], lam, beta, k)


def _wrap(a: float) -> float:
    return float(math.pi - ((math.pi - a) % (2 * math.pi)))


def fixed_beta_params(
    lam: float,
    beta: float,
    k: Optional[int] = None,
    *,
    equal_alphas: bool = False,
    enforce_k_lower: bool = True,
    grid: int = 25,
    tol: float = FIDELITY_TOL,
) -> SearchPlan:
    """Solve for ``(alpha1, alpha2)`` so that ``[G(a1,b)G(a2,b)]^k psi0`` is the target.

    ``k`` defaults to ``ceil(k_lower)``.  ``equal_alphas`` restricts the
    search to ``alpha1 = alpha2``; ``enforce_k_lower=False`` lets that
    restricted solve run below the sufficient bound.
    """
    lam = _check_lambda(lam)
    if lam == 1.0:
        return SearchPlan("fixed_beta", 1.0, 0, alpha1=0.0, alpha2=0.0, beta=float(beta))
    beta = float(beta)
    if not 0.0 < beta < 2 * math.pi:
        raise PreconditionError(f"beta must lie in (0, 2*pi), got {beta}")
    if enforce_k_lower or k is None:
        kl = k_lower(lam, beta)
        if k is None:
            k = max(1, math.ceil(kl - 1e-9))
        elif enforce_k_lower and k < kl - 1e-9:
            raise PreconditionError(f"k={k} is below k_lower={kl:.6g} for lambda={lam}, beta={beta}")
    k = int(k)
    if k < 1:
        raise PreconditionError("k must be at least 1")
    fun = _fb_residual_equal if equal_alphas else _fb_residual
    best = (math.inf, None)
    seeds = np.linspace(-math.pi, math.pi, grid, endpoint=False) + math.pi / grid
    starts = [[a] for a in seeds] if equal_alphas else [[a, b] for a in seeds for b in seeds]
    for x0 in starts:
        sol = least_squares(fun, x0, args=(lam, beta, k), xtol=1e-15, ftol=1e-15, gtol=1e-15)
        res = float(np.max(np.abs(sol.fun)))
        if res < best[0]:
            best = (res, sol.x)
        if res < tol * 1e-3:
            break
    res, x = best
    if res > tol:
        raise SolverError(f"no fixed-beta solution at lambda={lam}, beta={beta}, k={k}", residual=res)
    a1 = _wrap(x[0])
    a2 = a1 if equal_alphas else _wrap(x[1])
    return SearchPlan("fixed_beta", lam, k, alpha1=a1, alpha2=a2, beta=beta, residual=res)


# -------------------------------------------------------------- execution


def prep_from_state(psi: np.ndarray) -> np.ndarray:
    """A real Householder unitary whose first column is ``psi`` (real, unit)."""
    psi = np.asarray(psi, dtype=float)
    e0 = np.zeros_like(psi)
    e0[0] = 1.0
    v = e0 - psi
    nv = np.linalg.norm(v)
    if nv < 1e-15:
        return np.eye(psi.size)
    v /= nv
    return np.eye(psi.size) - 2 * np.outer(v, v)


def _apply_reflection(state: np.ndarray, v: np.ndarray, phase: float) -> np.ndarray:
    return state - (1 - np.exp(1j * phase)) * v * np.vdot(v, state)


def run_search_state(psi0: np.ndarray, target_index: int, plan: SearchPlan, s_psi=None) -> np.ndarray:
    """Apply a plan to ``psi0`` using rank-one updates.

    ``s_psi`` optionally replaces ``S_psi0(beta)`` by a given operator (a
    matrix or a callable on states), for instance a walk power.
    """
    psi0 = np.asarray(psi0, dtype=np.complex128)
    if not 0 <= target_index < psi0.size:
        raise DimensionError(f"target index {target_index} outside dimension {psi0.size}")
    t = np.zeros_like(psi0)
    t[target_index] = 1.0

    if s_psi is None:
        def reflect(s):
            return _apply_reflection(s, psi0, -plan.beta)
    elif callable(s_psi):
        reflect = s_psi
    else:
        op = np.asarray(s_psi)
        if op.shape != (psi0.size, psi0.size):
            raise DimensionError("s_psi operator does not match the state dimension")
        def reflect(s):
            return op @ s

    def G(s, alpha):
        return reflect(_apply_reflection(s, t, alpha))

    state = psi0.copy()
    if plan.scheme == "long":
        for _ in range(plan.k):
            state = G(state, plan.alpha)
    elif plan.scheme == "fixed_beta":
        for _ in range(plan.k):
            state = G(G(state, plan.alpha2), plan.alpha1)
    else:
        raise PreconditionError(f"unknown scheme {plan.scheme!r}")
    return state


def run_search(prep: np.ndarray, target_index: int, plan: SearchPlan, s_psi=None) -> np.ndarray:
    """Run ``plan`` on ``prep|0>`` and return the final state."""
    prep = np.asarray(prep)
    if prep.ndim != 2 or prep.shape[0] != prep.shape[1]:
        raise DimensionError("prep must be a square unitary")
    if unitarity_error(prep) > 1e-10:
        raise PreconditionError("prep is not unitary")
    return run_search_state(prep[:, 0], target_index, plan, s_psi=s_psi)


def fidelity(state: np.ndarray, target_index: int) -> float:
    return float(abs(state[target_index]))


def off_target_mass(state: np.ndarray, target_index: int) -> float:
    """Squared norm of everything outside the target, summed directly."""
    mask = np.ones(state.size, dtype=bool)
    mask[target_index] = False
    return float(np.sum(np.abs(state[mask]) ** 2))


# ---------------------------------------------------------------- eedp


@dataclass(frozen=True)
class EedpSolution:
    theta1: float
    theta2: float
    t: int
    beta: float  # in (0, 2*pi)
    gamma: float  # global phase of U^t
    windings: tuple[int, int]
    residual: float
    params: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "theta1": self.theta1,
            "theta2": self.theta2,
            "t": self.t,
            "beta": self.beta,
            "beta_over_pi": self.beta / math.pi,
            "gamma": self.gamma,
            "windings": list(self.windings),
            "residual": self.residual,
        }


def overlap_spectrum(N: int, r: int) -> tuple[float, float]:
    """The two non-unit squared singular values ``c1 > c2`` of ``A^T B``."""
    w = build_vertexwalk_5d(JohnsonParams(N, r))
    s = np.linalg.svd(w.A.T @ w.B, compute_uv=False)
    c = np.sort(s**2)[::-1]
    return float(c[1]), float(c[2])


def _beta_from(t: int, theta1: float, theta2: float, a: int) -> tuple[float, float]:
    half = t * (theta1 + theta2) / 2
    beta = (half - a * math.pi) % (2 * math.pi)
    gamma = (half + a * math.pi) % (2 * math.pi)
    return beta, gamma


def eedp_residual(N: int, r: int, target, theta1: float, theta2: float, t: int, beta: float, gamma: float) -> float:
    """``max |U^t - e^{i gamma} (I - (1 - e^{i beta}) |psi0><psi0|)|`` on the 5-dim space."""
    w = build_vertexwalk_5d(JohnsonParams(N, r), target)
    ut = mat_power(vertexwalk_step(w, theta1, theta2), t)
    want = np.exp(1j * gamma) * reflection_about(w.psi0, beta)
    return float(np.max(np.abs(ut - want)))


def solve_eedp(
    p: JohnsonParams,
    target=(1, 0),
    tol: float = 1e-8,
    *,
    windings: tuple[int, int] = (8, 10),
    t_factor: float = 12.0,
) -> EedpSolution:
    """Walk angles making ``U(theta1, theta2)^t`` a phase shift of ``psi0``.

    Off ``psi0`` the 5-dim step splits into two rotation blocks with
    eigenphases ``Sigma/2 +- omega_i`` where ``cos omega_i = C + D c_i``,
    ``C = cos((theta1 - theta2)/2)``, ``D = cos(Sigma/2) - C`` and ``c_i``
    the squared overlaps between the ranges of ``A`` and ``B``.  Requiring
    ``t omega = (a pi, b pi)`` with ``a = b (mod 2)`` makes every off-``psi0``
    eigenvalue of ``U^t`` equal, so ``C`` and ``D`` follow linearly.  The
    smallest feasible ``t <= ceil(t_factor sqrt(r))`` is returned after
    direct verification.  With both windings even,
    ``beta = t (theta1 + theta2)/2 mod 2 pi``.
    """
    a, b = (int(w) for w in windings)
    if a == b or (a - b) % 2 or a < 0 or b < 0:
        raise PreconditionError(f"windings {windings} must be distinct, non-negative and of equal parity")
    N, r = p.N, p.r
    c1, c2 = overlap_spectrum(N, r)
    t_max = math.ceil(t_factor * math.sqrt(r))
    best = math.inf
    for t in range(max(a, b, 1), t_max + 1):
        w1, w2 = a * math.pi / t, b * math.pi / t
        D = (math.cos(w1) - math.cos(w2)) / (c1 - c2)
        C = math.cos(w1) - D * c1
        if abs(C) > 1 + 1e-14 or abs(C + D) > 1 + 1e-14:
            continue
        half_sum = math.acos(max(-1.0, min(1.0, C + D)))
        half_diff = math.acos(max(-1.0, min(1.0, C)))
        for s1 in (1, -1):
            for s2 in (1, -1):
                th1 = _wrap_angle(s1 * half_sum + s2 * half_diff)
                th2 = _wrap_angle(s1 * half_sum - s2 * half_diff)
                if abs(th1) < 1e-12 and abs(th2) < 1e-12:
                    continue
                beta, gamma = _beta_from(t, th1, th2, a)
                if min(beta, 2 * math.pi - beta) < 1e-9:
                    continue
                res = eedp_residual(N, r, target, th1, th2, t, beta, gamma)
                best = min(best, res)
                if res <= tol:
                    return EedpSolution(th1, th2, t, beta, gamma, (a, b), res, {"N": N, "r": r, "target": tuple(target)})
    raise SolverError(
        f"no walk-phase solution for N={N}, r={r}, windings={windings} with t <= {t_max}", residual=best
    )


def _wrap_angle(x: float) -> float:
    return float(math.pi - ((math.pi - x) % (2 * math.pi)))


def beta_limit(windings: tuple[int, int] = (8, 10)) -> float:
    """Large-N limit of ``beta / pi``: ``c_i -> 1 - i/r`` gives ``(sqrt(2 a^2 - b^2) - a) mod 2``."""
    a, b = windings
    disc = 2 * a * a - b * b
    if disc < 0:
        raise DegenerateError("windings admit no large-N solution")
    return (math.sqrt(disc) - a) % 2


# ------------------------------------------------------- success analysis


def exact_success_amplitude(step, check, psi0, target_index: int, t1: int, t2: int) -> float:
    """``|<t| (step^t1 check)^t2 |psi0>|`` by direct matrix arithmetic."""
    step = np.asarray(step)
    check = np.asarray(check)
    psi0 = np.asarray(psi0)
    if step.shape != check.shape or step.shape[0] != psi0.size:
        raise DimensionError("step, check and psi0 dimensions differ")
    m = mat_power(step, int(t1)) @ check
    return float(abs((mat_power(m, int(t2)) @ psi0)[target_index]))


def target_reflection(dim: int, target_index: int) -> np.ndarray:
    """``2|t><t| - I``."""
    c = -np.eye(dim)
    c[target_index, target_index] = 1.0
    return c


@dataclass(frozen=True)
class EigenOverlapReport:
    theta: float
    target_overlaps: tuple[float, float]
    psi0_overlaps: tuple[float, float]
    residual_mass: float
    phases: tuple[float, ...]

    def as_dict(self) -> dict:
        return {
            "theta": self.theta,
            "target_overlaps": list(self.target_overlaps),
            "psi0_overlaps": list(self.psi0_overlaps),
            "residual_mass": self.residual_mass,
        }


def eigen_overlap_report(step_check, psi0, target_index: int) -> EigenOverlapReport:
    """Locate the conjugate eigenphase pair carrying most of ``psi0``."""
    phases, vecs = eig_unitary(np.asarray(step_check))
    psi0 = np.asarray(psi0, dtype=np.complex128)
    w = np.abs(vecs.conj().T @ psi0) ** 2
    order = np.argsort(w)[::-1]
    i, j = int(order[0]), int(order[1])
    if w[i] + w[j] < 0.5 or abs(phases[i] + phases[j]) > 1e-6 * max(1.0, abs(phases[i])) + 1e-9:
        raise SolverError(
            "no dominant conjugate eigenphase pair; spectrum " + ", ".join(f"{x:.6g}" for x in phases)
        )
    if phases[i] < phases[j]:
        i, j = j, i
    return EigenOverlapReport(
        theta=float(abs(phases[i])),
        target_overlaps=(float(abs(vecs[target_index, i])), float(abs(vecs[target_index, j]))),
        psi0_overlaps=(float(np.sqrt(w[i])), float(np.sqrt(w[j]))),
        residual_mass=float(max(0.0, 1.0 - w[i] - w[j])),
        phases=tuple(float(x) for x in phases),
    )
