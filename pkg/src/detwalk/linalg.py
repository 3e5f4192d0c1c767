"""Small dense complex linear algebra used by the reduced and full-space walks.

Operators are plain ``numpy.ndarray`` objects of shape ``(d, d)`` and states
are 1-d arrays.  Nothing here mutates its inputs.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg
import scipy.sparse

from .errors import ConvergenceError, DimensionError, NotNormalizedError

UNITARY_TOL = 1e-12
STATE_TOL = 1e-12
EIG_TOL = 1e-9


def _square(a: np.ndarray, name: str = "operator") -> np.ndarray:
    a = np.asarray(a)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionError(f"{name} must be square, got shape {a.shape}")
    return a


def mat_mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Product of two square operators of equal dimension."""
    a = _square(a, "a")
    b = _square(b, "b")
    if a.shape != b.shape:
        raise DimensionError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return a @ b


def mat_power(u: np.ndarray, t: int) -> np.ndarray:
    """``u**t`` by repeated squaring (``t >= 0``)."""
    u = _square(u, "u")
    t = int(t)
    if t < 0:
        raise ValueError("t must be non-negative")
    result = np.eye(u.shape[0], dtype=np.result_type(u, np.complex128))
    base = u.astype(result.dtype, copy=False)
    while t:
        if t & 1:
            result = result @ base
        t >>= 1
        if t:
            base = base @ base
    return result


def unitarity_error(u) -> float:
    """``max |U^dagger U - I|`` entrywise.  Accepts dense or scipy sparse."""
    if scipy.sparse.issparse(u):
        g = (u.conj().T @ u).tocsr() - scipy.sparse.identity(u.shape[0], format="csr")
        return float(abs(g).max()) if g.nnz else 0.0
    u = _square(u, "u")
    return float(np.max(np.abs(u.conj().T @ u - np.eye(u.shape[0]))))


def is_unitary(u, tol: float = UNITARY_TOL) -> bool:
    return unitarity_error(u) <= tol


def normalize_phase(phi):
    """Map angles into (-pi, pi]."""
    out = np.mod(-np.asarray(phi, dtype=float) + np.pi, 2 * np.pi)
    out = np.pi - out
    return float(out) if np.ndim(out) == 0 else out


def eig_unitary(u: np.ndarray, tol: float = EIG_TOL):
    """Eigendecomposition of a unitary matrix.

    Uses the complex Schur form: for a normal matrix the triangular factor is
    diagonal and the Schur vectors are an orthonormal eigenbasis, also across
    degenerate eigenvalues.

    Returns ``(phases, vecs)`` with ``phases[j]`` in (-pi, pi] and
    ``vecs[:, j]`` the matching unit eigenvector.
    """
    u = _square(u, "u").astype(np.complex128)
    t, z = scipy.linalg.schur(u, output="complex")
    lam = np.diag(t)
    phases = normalize_phase(np.angle(lam))
    phases = np.atleast_1d(phases)
    vecs = z
    recon = (vecs * np.exp(1j * phases)) @ vecs.conj().T
    residual = float(np.max(np.abs(recon - u))) if u.size else 0.0
    orth = float(np.max(np.abs(vecs.conj().T @ vecs - np.eye(u.shape[0])))) if u.size else 0.0
    if residual > max(tol, 1e-8) or orth > tol:
        raise ConvergenceError(
            f"unitary eigendecomposition residual {residual:.3e}, orthogonality {orth:.3e}",
            residual=max(residual, orth),
        )
    return phases, vecs


def check_state(v: np.ndarray, tol: float = STATE_TOL) -> np.ndarray:
    v = np.asarray(v)
    if v.ndim != 1:
        raise DimensionError("state must be a 1-d vector")
    norm = np.linalg.norm(v)
    if not np.all(np.isfinite(v)) or abs(norm - 1.0) > tol:
        raise NotNormalizedError(f"state norm {norm!r} differs from 1")
    return v


def reflection_about(v: np.ndarray, phase: float) -> np.ndarray:
    """``I - (1 - exp(i*phase)) |v><v|`` for a unit vector ``v``."""
    v = check_state(v).astype(np.complex128)
    return np.eye(v.size, dtype=np.complex128) - (1 - np.exp(1j * phase)) * np.outer(v, v.conj())


def basis_vector(dim: int, index: int) -> np.ndarray:
    e = np.zeros(dim, dtype=np.complex128)
    e[index] = 1.0
    return e


def projector_reflection(a: np.ndarray, phase: float) -> np.ndarray:
    """``I - (1 - exp(i*phase)) A A^dagger`` for ``A`` with orthonormal columns."""
    a = np.asarray(a)
    return np.eye(a.shape[0], dtype=np.complex128) - (1 - np.exp(1j * phase)) * (a @ a.conj().T)
