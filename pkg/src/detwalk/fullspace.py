"""Brute-force ground truth for the reduced walks.

Every walk state is enumerated explicitly, the step operator is assembled
from its defining projectors, and the result is compressed onto the span of
class-uniform vectors.  Agreement with ``subspaces`` (and zero leakage out of
that span) is the evidence that the small matrices are right.

Operators here are ``scipy.sparse`` CSR matrices: the edge walk at
(n, r1) = (11, 4) already has 9240 states.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import CapExceededError, DegenerateError, DimensionError, PreconditionError
from .subspaces import (
    LAYER1_CLASSES,
    LAYER1_LABELS,
    LAYER4_CLASSES,
    LAYER4_LABELS,
    VERTEX5_CLASSES,
    VERTEX5_LABELS,
    JohnsonParams,
    comb,
)

DEFAULT_CAP = 200_000


# ------------------------------------------------------- combinatorial ranks


def subset_rank(subset: Sequence[int], n: int) -> int:
    """Lexicographic rank of a sorted k-subset of range(n)."""
    k = len(subset)
    total = comb(n, k) - 1
    return total - sum(comb(n - 1 - c, k - i) for i, c in enumerate(subset))


def subset_unrank(rank: int, n: int, k: int) -> tuple[int, ...]:
    """Inverse of :func:`subset_rank`."""
    if not 0 <= rank < comb(n, k):
        raise ValueError(f"rank {rank} out of range for C({n},{k})")
    x = comb(n, k) - 1 - rank
    out = []
    top = n - 1
    for i in range(k):
        need = k - i
        # largest v with comb(v, need) <= x, v <= top
        v = need - 1
        while v + 1 <= top and comb(v + 1, need) <= x:
            v += 1
        x -= comb(v, need)
        out.append(n - 1 - v)
        top = v - 1
    return tuple(out)


# ------------------------------------------------------------- vertex walk


@dataclass(frozen=True)
class VertexWalkBasis:
    params: JohnsonParams
    K: tuple[int, ...]
    states: tuple[tuple[tuple[int, ...], int], ...]

    @property
    def dim(self) -> int:
        return len(self.states)

    def index(self, R: Sequence[int], y: int) -> int:
        N, r = self.params.N, self.params.r
        pos = y - sum(1 for x in R if x < y)
        return subset_rank(R, N) * (N - r) + pos

    def classes(self) -> list[tuple[int, int]]:
        K = set(self.K)
        return [(len(K.intersection(R)), int(y in K)) for R, y in self.states]


def enumerate_vertex_basis(p: JohnsonParams, K: Sequence[int] = (0, 1), cap: int = DEFAULT_CAP) -> VertexWalkBasis:
    N, r = p.N, p.r
    K = tuple(sorted(int(k) for k in K))
    if len(set(K)) != len(K) or not K or len(K) > 2 or K[0] < 0 or K[-1] >= N:
        raise PreconditionError(f"K={K} must be a 1- or 2-element subset of range({N})")
    size = comb(N, r) * (N - r)
    if size > cap:
        raise CapExceededError(f"{size} states exceed the cap {cap}")
    states = []
    for R in itertools.combinations(range(N), r):
        Rs = set(R)
        states.extend((R, y) for y in range(N) if y not in Rs)
    return VertexWalkBasis(p, K, tuple(states))


def _vertex_projector_factors(b: VertexWalkBasis) -> tuple[sp.csr_matrix, sp.csr_matrix]:
    """Isometries whose columns are the U_A and U_B target states."""
    N, r = b.params.N, b.params.r
    D = b.dim
    # U_A: for each R, uniform over y outside R (consecutive block of states)
    cols_a = np.repeat(np.arange(comb(N, r)), N - r)
    PA = sp.csr_matrix(
        (np.full(D, 1 / np.sqrt(N - r)), (np.arange(D), cols_a)), shape=(D, comb(N, r))
    )
    # U_B: for each (r+1)-set Q, uniform over (Q - y', y')
    rows, cols = [], []
    for qi, Q in enumerate(itertools.combinations(range(N), r + 1)):
        for y in Q:
            R = tuple(x for x in Q if x != y)
            rows.append(b.index(R, y))
            cols.append(qi)
    PB = sp.csr_matrix(
        (np.full(len(rows), 1 / np.sqrt(r + 1)), (rows, cols)), shape=(D, comb(N, r + 1))
    )
    return PA, PB


def _phase_projector(P: sp.csr_matrix, theta: float) -> sp.csr_matrix:
    D = P.shape[0]
    proj = (P @ P.T).tocsr()
    return (sp.identity(D, dtype=np.complex128, format="csr") - (1 - np.exp(1j * theta)) * proj).tocsr()


def full_vertex_step(b: VertexWalkBasis, theta1: float, theta2: float) -> sp.csr_matrix:
    """``U_B(theta2) U_A(theta1)`` on the full (R, y) space."""
    PA, PB = _vertex_projector_factors(b)
    return (_phase_projector(PB, theta2) @ _phase_projector(PA, theta1)).tocsr()


def induced_permutation(b: VertexWalkBasis, perm: Sequence[int]) -> sp.csr_matrix:
    """Permutation matrix on states induced by relabelling the ground set."""
    rows = []
    for R, y in b.states:
        R2 = tuple(sorted(perm[x] for x in R))
        rows.append(b.index(R2, perm[y]))
    D = b.dim
    return sp.csr_matrix((np.ones(D), (rows, np.arange(D))), shape=(D, D))


# --------------------------------------------------------------- edge walk


@dataclass(frozen=True)
class EdgeWalkBasis:
    n: int
    r1: int
    T: tuple[int, ...]
    states: tuple[tuple[tuple[int, ...], int, int], ...]

    @property
    def dim(self) -> int:
        return len(self.states)

    def index(self, R: Sequence[int], x: int, y: int) -> int:
        """State (R, R - x + y) with x in R and y outside R."""
        n, r = self.n, self.r1
        ix = R.index(x)
        iy = y - sum(1 for v in R if v < y)
        return (subset_rank(R, n) * r + ix) * (n - r) + iy

    def classes(self) -> list[tuple[int, int]]:
        T = set(self.T)
        out = []
        for R, x, y in self.states:
            j = len(T.intersection(R))
            out.append((j, j - (x in T) + (y in T)))
        return out


def enumerate_edge_basis(n: int, r1: int, T: Sequence[int] = (0, 1, 2), cap: int = DEFAULT_CAP) -> EdgeWalkBasis:
    n, r1 = int(n), int(r1)
    T = tuple(sorted(int(t) for t in T))
    if len(set(T)) != 3 or T[0] < 0 or T[-1] >= n:
        raise PreconditionError(f"T={T} must be a 3-element subset of range({n})")
    if not 1 <= r1 <= n - 1:
        raise PreconditionError("need 1 <= r1 <= n - 1")
    size = comb(n, r1) * r1 * (n - r1)
    if size > cap:
        raise CapExceededError(f"{size} states exceed the cap {cap}")
    states = []
    for R in itertools.combinations(range(n), r1):
        Rs = set(R)
        out = [y for y in range(n) if y not in Rs]
        states.extend((R, x, y) for x in R for y in out)
    return EdgeWalkBasis(n, r1, T, tuple(states))


def edge_coin(b: EdgeWalkBasis) -> sp.csr_matrix:
    """Grover diffusion over the neighbours R' of each R: ``2 Pi - I``."""
    block = b.r1 * (b.n - b.r1)
    nR = comb(b.n, b.r1)
    P = sp.csr_matrix(
        (np.full(b.dim, 1 / np.sqrt(block)), (np.arange(b.dim), np.repeat(np.arange(nR), block))),
        shape=(b.dim, nR),
    )
    return (2 * (P @ P.T) - sp.identity(b.dim, format="csr")).tocsr()


def edge_swap(b: EdgeWalkBasis) -> sp.csr_matrix:
    """``|R, R'> -> |R', R>``."""
    rows = np.empty(b.dim, dtype=np.int64)
    for i, (R, x, y) in enumerate(b.states):
        R2 = tuple(sorted([v for v in R if v != x] + [y]))
        rows[i] = b.index(R2, y, x)
    return sp.csr_matrix((np.ones(b.dim), (rows, np.arange(b.dim))), shape=(b.dim, b.dim))


def full_edge_step(b: EdgeWalkBasis) -> sp.csr_matrix:
    """``Swap . Coin``; the data register acts trivially at this level."""
    return (edge_swap(b) @ edge_coin(b)).tocsr()


# ----------------------------------------------------- layer-4 product walk


# factor class (|S & K|, |{z} & K|) -> (j, k) with k = |(S + z) & K|
_FACTOR_JK = {(0, 0): (0, 0), (0, 1): (0, 1), (1, 0): (1, 1)}


@dataclass(frozen=True)
class ProductWalkBasis:
    factors: tuple[VertexWalkBasis, VertexWalkBasis]

    @property
    def dim(self) -> int:
        return self.factors[0].dim * self.factors[1].dim

    def classes(self) -> list[tuple[tuple[int, int], tuple[int, int]]]:
        c1 = [_FACTOR_JK[c] for c in self.factors[0].classes()]
        c2 = [_FACTOR_JK[c] for c in self.factors[1].classes()]
        return [((a[0], b[0]), (a[1], b[1])) for a in c1 for b in c2]


def enumerate_product_basis(r1: int, r2: int, m: int, cap: int = DEFAULT_CAP) -> ProductWalkBasis:
    f1 = enumerate_vertex_basis(JohnsonParams(r1, m), K=(0,), cap=cap)
    f2 = enumerate_vertex_basis(JohnsonParams(r2, m), K=(0,), cap=cap)
    if f1.dim * f2.dim > cap:
        raise CapExceededError(f"{f1.dim * f2.dim} states exceed the cap {cap}")
    return ProductWalkBasis((f1, f2))


def full_product_step(b: ProductWalkBasis) -> sp.csr_matrix:
    """``(2 Pi_B - I)(2 Pi_A - I)`` with ``Pi_X = Pi_X1 (x) Pi_X2``."""
    (PA1, PB1), (PA2, PB2) = (_vertex_projector_factors(f) for f in b.factors)
    eye = sp.identity(b.dim, format="csr")
    PA = sp.kron(PA1, PA2, format="csr")
    PB = sp.kron(PB1, PB2, format="csr")
    UA = 2 * (PA @ PA.T) - eye
    UB = 2 * (PB @ PB.T) - eye
    return (UB @ UA).tocsr()


# ------------------------------------------------------------- projection


@dataclass(frozen=True)
class ClassProjector:
    labels: tuple[str, ...]
    matrix: sp.csr_matrix  # rows: reduced dim, cols: full dim

    @property
    def shape(self):
        return self.matrix.shape


def _projector_from_classes(class_of: list, order: Sequence, labels: Sequence[str]) -> ClassProjector:
    members = {c: [] for c in order}
    for i, c in enumerate(class_of):
        if c not in members:
            raise DegenerateError(f"state {i} falls in unexpected class {c}")
        members[c].append(i)
    empty = [lab for c, lab in zip(order, labels) if not members[c]]
    if empty:
        raise DegenerateError(f"empty symmetry classes at these sizes: {empty}")
    rows, cols, vals = [], [], []
    for ri, c in enumerate(order):
        idx = members[c]
        rows.extend([ri] * len(idx))
        cols.extend(idx)
        vals.extend([1 / np.sqrt(len(idx))] * len(idx))
    mat = sp.csr_matrix((vals, (rows, cols)), shape=(len(order), len(class_of)))
    return ClassProjector(tuple(labels), mat)


def class_projector(b) -> ClassProjector:
    """Uniform class states as rows, ordered like the reduced basis labels."""
    if isinstance(b, VertexWalkBasis):
        if len(b.K) != 2:
            raise PreconditionError("5-dim classes need |K| = 2")
        return _projector_from_classes(b.classes(), VERTEX5_CLASSES, VERTEX5_LABELS)
    if isinstance(b, EdgeWalkBasis):
        return _projector_from_classes(b.classes(), LAYER1_CLASSES, LAYER1_LABELS)
    if isinstance(b, ProductWalkBasis):
        return _projector_from_classes(b.classes(), LAYER4_CLASSES, LAYER4_LABELS)
    raise TypeError(f"unsupported basis type {type(b).__name__}")


def uniform_state(dim: int) -> np.ndarray:
    return np.full(dim, 1 / np.sqrt(dim))


@dataclass(frozen=True)
class ReductionReport:
    maxdev: float
    leakage: float
    tol: float

    @property
    def passed(self) -> bool:
        return self.maxdev <= self.tol and self.leakage <= self.tol


def verify_reduction(full, P: ClassProjector, reduced: np.ndarray, tol: float = 1e-10) -> ReductionReport:
    """Compare ``P U P^dagger`` with ``reduced`` and measure leakage ``(I - P^dagger P) U P^dagger``."""
    Pm = P.matrix
    reduced = np.asarray(reduced)
    if full.shape[0] != Pm.shape[1] or reduced.shape != (Pm.shape[0], Pm.shape[0]):
        raise DimensionError(f"inconsistent shapes: full {full.shape}, P {Pm.shape}, reduced {reduced.shape}")
    Pd = Pm.T.toarray()
    UPd = full @ Pd
    proj = Pm @ UPd
    maxdev = float(np.max(np.abs(proj - reduced)))
    leak = UPd - Pm.T @ proj
    return ReductionReport(maxdev, float(np.max(np.abs(leak))), tol)


def projector_error(P: ClassProjector) -> float:
    """``max |P P^dagger - I|``."""
    g = (P.matrix @ P.matrix.T).toarray()
    return float(np.max(np.abs(g - np.eye(g.shape[0]))))


def initial_state_error(P: ClassProjector, psi0: np.ndarray) -> float:
    """``max |P psi_uniform - psi0|`` for the uniform full initial state."""
    full = uniform_state(P.shape[1])
    return float(np.max(np.abs(P.matrix @ full - psi0)))


def random_label_permutation(n: int, fixed: Sequence[int], rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """A permutation of range(n) that fixes ``fixed`` pointwise."""
    rng = np.random.default_rng() if rng is None else rng
    free = np.array([v for v in range(n) if v not in set(fixed)])
    perm = np.arange(n)
    perm[free] = rng.permutation(free)
    return perm
