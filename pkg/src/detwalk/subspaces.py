"""Reduced invariant-subspace descriptions of the three Johnson-graph walks.

* ``build_vertexwalk_5d``: vertex walk on J(N, r) with a planted pair K,
  basis ``|j,l>`` with ``j = |R & K|`` and ``l = |{y} & K|``.
* ``build_layer1_10d``: edge walk on J(n, r1) with a planted triangle T,
  basis ``|j,l>`` with ``j = |R & T|`` and ``l = |R' & T|``.
* ``build_layer4_9d``: vertex walk on J(r1, m) x J(r2, m), basis
  ``|(j1,j2)-(k1,k2)>`` with ``j_i = |S_i & T|``, ``k_i = |(S_i + z_i) & T|``.

Each step operator is assembled from non-negative matrices ``A`` and ``B``
whose squared entries are transition weights between symmetry classes.
Integer class sizes are kept exact until the final division.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np

from .errors import DegenerateError, PreconditionError
from .linalg import projector_reflection

VERTEX5_LABELS = ("0,0", "0,1", "1,0", "1,1", "2,0")
VERTEX5_CLASSES = ((0, 0), (0, 1), (1, 0), (1, 1), (2, 0))

LAYER1_LABELS = ("0,0", "0,1", "1,0", "1,1", "1,2", "2,1", "2,2", "2,3", "3,2", "3,3")
LAYER1_CLASSES = tuple(tuple(int(c) for c in s.split(",")) for s in LAYER1_LABELS)
LAYER1_SWAP_PAIRS = ((1, 2), (4, 5), (7, 8))
LAYER1_TARGET = 3

LAYER4_CLASSES = (
    ((0, 0), (0, 0)),
    ((0, 0), (1, 0)),
    ((0, 0), (0, 1)),
    ((0, 0), (1, 1)),
    ((1, 0), (1, 0)),
    ((1, 0), (1, 1)),
    ((0, 1), (0, 1)),
    ((0, 1), (1, 1)),
    ((1, 1), (1, 1)),
)
LAYER4_LABELS = tuple(f"({a},{b})-({c},{d})" for (a, b), (c, d) in LAYER4_CLASSES)
LAYER4_TARGET = 8

MARKED_CLASSES = VERTEX5_CLASSES


def comb(n: int, k: int) -> int:
    """Binomial coefficient that is 0 outside ``0 <= k <= n``."""
    if k < 0 or n < 0 or k > n:
        return 0
    return math.comb(n, k)


def round_half_away(x: float) -> int:
    """Nearest integer, ties away from zero."""
    return int(math.copysign(math.floor(abs(x) + 0.5), x))


def integer_root(n: int, k: int) -> Optional[int]:
    """Exact integer ``k``-th root of ``n`` or ``None``."""
    j = round_half_away(n ** (1.0 / k))
    for c in (j - 1, j, j + 1):
        if c >= 0 and c**k == n:
            return c
    return None


@dataclass(frozen=True)
class JohnsonParams:
    N: int
    r: int

    def __post_init__(self):
        if not (isinstance(self.N, (int, np.integer)) and isinstance(self.r, (int, np.integer))):
            raise PreconditionError("N and r must be integers")
        if not (1 <= self.r <= self.N - 2):
            raise PreconditionError(f"need 1 <= r <= N-2, got N={self.N}, r={self.r}")


@dataclass(frozen=True)
class LayerParams:
    n: int
    r1: int
    r2: int
    m: int

    def __post_init__(self):
        if self.m > min(self.r1, self.r2) - 2 or self.m < 1:
            raise PreconditionError(f"need 1 <= m <= min(r1, r2) - 2, got {self}")
        if self.r1 + self.r2 + 2 > self.n:
            raise PreconditionError(f"need r1 + r2 + 2 <= n, got {self}")

    @property
    def n1(self) -> int:
        return self.n - self.r1

    @property
    def n2(self) -> int:
        return self.n - self.r1 - self.r2

    @classmethod
    def from_n(cls, n: int) -> "LayerParams":
        """Exponents 4/7, 5/7 and 3/7 of ``n``; exact for seventh powers."""
        j = integer_root(n, 7)
        if j is not None:
            return cls(n, j**4, j**5, j**3)
        return cls(
            n,
            round_half_away(n ** (4 / 7)),
            round_half_away(n ** (5 / 7)),
            round_half_away(n ** (3 / 7)),
        )


@dataclass(frozen=True)
class ReducedWalk:
    """A walk restricted to the span of its symmetry-class uniform states."""

    kind: str
    basis_labels: Sequence[str]
    A: np.ndarray
    psi0: np.ndarray
    target_index: int
    epsilon: float
    B: Optional[np.ndarray] = None
    S: Optional[np.ndarray] = None
    params: dict = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return len(self.basis_labels)

    def target(self) -> np.ndarray:
        e = np.zeros(self.dim, dtype=np.complex128)
        e[self.target_index] = 1.0
        return e


# ---------------------------------------------------------------- vertex walk


def count_S_left(N: int, r: int, j: int, l: int) -> int:
    """|S_j^l| counted from R: pick R with |R & K| = j, then y."""
    if l == 0:
        return comb(2, j) * comb(N - 2, r - j) * (N - 2 - (r - j))
    return comb(2, j) * comb(N - 2, r - j) * (2 - j)


def count_S_right(N: int, r: int, j: int, l: int) -> int:
    """|S_j^l| counted from R + y: pick the (r+1)-set, then which element is y."""
    if l == 0:
        return comb(2, j) * comb(N - 2, r + 1 - j) * (r + 1 - j)
    return comb(2, j + 1) * comb(N - 2, r - j) * (j + 1)


def vertex5_class_sizes(N: int, r: int) -> list[int]:
    return [count_S_left(N, r, j, l) for j, l in VERTEX5_CLASSES]


def vertex5_class_fractions(N: int, r: int) -> list[Fraction]:
    """``|S_j^l| / (C(N,r) (N-r))`` in lowest terms without forming C(N, r).

    ``C(N-2, r-j) / C(N, r)`` reduces to a ratio of two-term products, which
    keeps large ``N`` cheap; the value equals the quotient of the integer
    counts exactly.
    """
    ratio = [
        Fraction((N - r) * (N - r - 1), N * (N - 1)),
        Fraction(r * (N - r), N * (N - 1)),
        Fraction(r * (r - 1), N * (N - 1)),
    ]
    out = []
    for j, l in VERTEX5_CLASSES:
        y_choices = (N - 2 - (r - j)) if l == 0 else (2 - j)
        out.append(comb(2, j) * ratio[j] * Fraction(y_choices, N - r))
    return out


def vertex5_matrices(N: int, r: int) -> tuple[np.ndarray, np.ndarray]:
    a2 = np.zeros((5, 3))
    b2 = np.zeros((5, 3))
    a2[0, 0] = 1 - 2 / (N - r)
    a2[1, 0] = 2 / (N - r)
    a2[2, 1] = 1 - 1 / (N - r)
    a2[3, 1] = 1 / (N - r)
    a2[4, 2] = 1.0
    b2[0, 0] = 1.0
    b2[1, 1] = 1 / (r + 1)
    b2[2, 1] = 1 - 1 / (r + 1)
    b2[3, 2] = 2 / (r + 1)
    b2[4, 2] = 1 - 2 / (r + 1)
    return np.sqrt(a2), np.sqrt(b2)


def epsilon2_closed_form(N: int, r: int) -> float:
    """Marked fraction of class (1,0): 2 (r/N) (1 - r/(N-1))."""
    return 2 * (r / N) * (1 - r / (N - 1))


def build_vertexwalk_5d(p: JohnsonParams, target: tuple[int, int] = (1, 0)) -> ReducedWalk:
    target = tuple(int(x) for x in target)
    if target not in VERTEX5_CLASSES:
        raise PreconditionError(f"invalid marked class {target}; expected one of {VERTEX5_CLASSES}")
    N, r = int(p.N), int(p.r)
    if N - r < 2:
        raise PreconditionError("vertex walk needs N - r >= 2")
    probs = vertex5_class_fractions(N, r)
    if sum(probs) != 1:
        raise AssertionError("class sizes do not partition the state space")
    psi0 = np.sqrt(np.array(probs, dtype=float))
    A, B = vertex5_matrices(N, r)
    ti = VERTEX5_CLASSES.index(target)
    return ReducedWalk(
        kind="vertex5",
        basis_labels=VERTEX5_LABELS,
        A=A,
        B=B,
        psi0=psi0,
        target_index=ti,
        epsilon=float(probs[ti]),
        params={"N": N, "r": r, "target": target},
    )


def vertexwalk_step(w: ReducedWalk, theta1: float, theta2: float) -> np.ndarray:
    """``U_B(theta2) U_A(theta1)`` restricted to the 5-dim space."""
    if w.B is None:
        raise PreconditionError("walk has no B factor")
    return projector_reflection(w.B, theta2) @ projector_reflection(w.A, theta1)


# ---------------------------------------------------------------- layer 1


def layer1_psi0_numerators(n: int, r: int) -> list[int]:
    """Integer class weights of the layer-1 initial state, over n(n-1)(n-2)."""
    nn = n - r
    return [
        (nn - 1) * (nn - 2) * (nn - 3),
        3 * (nn - 1) * (nn - 2),
        3 * (nn - 1) * (nn - 2),
        3 * (nn - 1) * ((r - 1) * (nn - 2) + 2),
        6 * (r - 1) * (nn - 1),
        6 * (r - 1) * (nn - 1),
        3 * (r - 1) * ((r - 2) * (nn - 1) + 2),
        3 * (r - 1) * (r - 2),
        3 * (r - 1) * (r - 2),
        (r - 1) * (r - 2) * (r - 3),
    ]


def epsilon1_closed_form(n: int, r1: int) -> float:
    return 3 * (n - r1 - 1) * ((r1 - 1) * (n - r1 - 2) + 2) / (n * (n - 1) * (n - 2))


def layer1_swap() -> np.ndarray:
    s = np.eye(10)
    for i, j in LAYER1_SWAP_PAIRS:
        s[[i, j]] = s[[j, i]]
    return s


def build_layer1_10d(n: int, r1: int) -> ReducedWalk:
    n, r = int(n), int(r1)
    if r < 4 or n < r + 4:
        raise PreconditionError(f"layer-1 space needs r1 >= 4 and n >= r1 + 4, got n={n}, r1={r}")
    d = r * (n - r)
    a2 = np.zeros((10, 4))
    a2[0, 0] = 1 - 3 / (n - r)
    a2[1, 0] = 3 / (n - r)
    a2[2, 1] = (n - r - 2) / d
    a2[3, 1] = ((r - 1) * (n - r - 2) + 2) / d
    a2[4, 1] = 2 * (r - 1) / d
    a2[5, 2] = 2 * (n - r - 1) / d
    a2[6, 2] = ((r - 2) * (n - r - 1) + 2) / d
    a2[7, 2] = (r - 2) / d
    a2[8, 3] = 3 / r
    a2[9, 3] = 1 - 3 / r
    nums = layer1_psi0_numerators(n, r)
    den = n * (n - 1) * (n - 2)
    psi0 = np.sqrt(np.array([Fraction(x, den) for x in nums], dtype=float))
    return ReducedWalk(
        kind="layer1",
        basis_labels=LAYER1_LABELS,
        A=np.sqrt(a2),
        S=layer1_swap(),
        psi0=psi0,
        target_index=LAYER1_TARGET,
        epsilon=float(Fraction(nums[LAYER1_TARGET], den)),
        params={"n": n, "r1": r},
    )


def edgewalk_step(w: ReducedWalk) -> np.ndarray:
    """``S (2 A A^T - I)``, a real orthogonal matrix."""
    if w.S is None:
        raise PreconditionError("walk has no swap factor")
    return w.S @ (2 * w.A @ w.A.T - np.eye(w.dim))


# ---------------------------------------------------------------- layer 4


def layer4_psi0_numerators(r1: int, r2: int, m: int) -> list[int]:
    a, b = r1 - m - 1, r2 - m - 1
    return [a * b, b, a, 1, m * b, m, a * m, m, m * m]


def build_layer4_9d(r1: int, r2: int, m: int) -> ReducedWalk:
    r1, r2, m = int(r1), int(r2), int(m)
    if m < 1 or m > min(r1, r2) - 2:
        raise PreconditionError(f"layer-4 space needs 1 <= m <= min(r1, r2) - 2, got {(r1, r2, m)}")
    p, q = 1 / (r1 - m), 1 / (r2 - m)
    a2 = np.zeros((9, 4))
    a2[0, 0] = (1 - p) * (1 - q)
    a2[1, 0] = p * (1 - q)
    a2[2, 0] = (1 - p) * q
    a2[3, 0] = p * q
    a2[4, 1] = 1 - q
    a2[5, 1] = q
    a2[6, 2] = 1 - p
    a2[7, 2] = p
    a2[8, 3] = 1.0
    mm = m + 1
    b2 = np.zeros((9, 4))
    b2[0, 0] = 1.0
    b2[1, 1] = 1 / mm
    b2[4, 1] = m / mm
    b2[2, 2] = 1 / mm
    b2[6, 2] = m / mm
    b2[3, 3] = 1 / mm**2
    b2[5, 3] = m / mm**2
    b2[7, 3] = m / mm**2
    b2[8, 3] = m * m / mm**2
    nums = layer4_psi0_numerators(r1, r2, m)
    den = r1 * r2
    if sum(nums) != den:
        raise AssertionError("layer-4 class weights do not sum to r1*r2")
    psi0 = np.sqrt(np.array([Fraction(x, den) for x in nums], dtype=float))
    return ReducedWalk(
        kind="layer4",
        basis_labels=LAYER4_LABELS,
        A=np.sqrt(a2),
        B=np.sqrt(b2),
        psi0=psi0,
        target_index=LAYER4_TARGET,
        epsilon=float(Fraction(m * m, den)),
        params={"r1": r1, "r2": r2, "m": m},
    )


def layer4_step(w: ReducedWalk) -> np.ndarray:
    """``(2 B B^T - I)(2 A A^T - I)``."""
    eye = np.eye(w.dim)
    return (2 * w.B @ w.B.T - eye) @ (2 * w.A @ w.A.T - eye)


# ---------------------------------------------------------------- generic


def marked_fraction(w: ReducedWalk) -> float:
    """``|<e_target|psi0>|^2``."""
    return float(abs(w.psi0[w.target_index]) ** 2)


def step_operator(w: ReducedWalk, theta1: float = np.pi, theta2: float = np.pi) -> np.ndarray:
    """The walk step of any reduced space (angles only matter for ``vertex5``)."""
    if w.kind == "vertex5":
        return vertexwalk_step(w, theta1, theta2)
    if w.kind == "layer1":
        return edgewalk_step(w)
    if w.kind == "layer4":
        return layer4_step(w)
    raise DegenerateError(f"unknown walk kind {w.kind!r}")
