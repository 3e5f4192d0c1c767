"""Four-layer emulation on concrete triangle-sum instances.

Each layer's deterministic search is run exactly in its reduced space and
must end on the target class with fidelity 1.  Because the final state is
then the uniform superposition over the marked class, measurement is
emulated by sampling that class with a seeded generator.  The emulated
outcome is checked classically at the end, and query costs are tallied by
:func:`ledger`.
"""

from __future__ import annotations

import functools
import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numba
import numpy as np

from .errors import DetwalkError, PreconditionError, PromiseViolation, SolverError
from .linalg import mat_power
from .search import (
    EedpSolution,
    SearchPlan,
    exact_success_amplitude,
    fixed_beta_params,
    fidelity,
    long_params,
    off_target_mass,
    run_search_state,
    solve_eedp,
    target_reflection,
)
from .subspaces import (
    JohnsonParams,
    LayerParams,
    build_layer1_10d,
    build_layer4_9d,
    build_vertexwalk_5d,
    edgewalk_step,
    layer4_step,
    round_half_away,
    vertexwalk_step,
)

FIDELITY_TOL = 1e-9
MASS_TOL = 1e-18
LAYER3_FULL_MAX = 100_000


# ----------------------------------------------------------------- instances


@dataclass(frozen=True)
class TriangleInstance:
    n: int
    M: int
    d: int
    weights: np.ndarray = field(repr=False)

    def __post_init__(self):
        n, M, d = int(self.n), int(self.M), int(self.d)
        if n < 8:
            raise PreconditionError(f"n must be at least 8, got {n}")
        if M < 2:
            raise PreconditionError(f"M must be at least 2, got {M}")
        if not 0 <= d < M:
            raise PreconditionError(f"d must lie in [0, M), got d={d}, M={M}")
        w = np.asarray(self.weights)
        if w.shape != (n, n):
            raise PreconditionError(f"weights must be {n}x{n}, got {w.shape}")
        if not np.issubdtype(w.dtype, np.integer):
            raise PreconditionError("weights must be integers")
        if np.any(w < 0) or np.any(w >= M):
            raise PreconditionError("weights must lie in [0, M)")
        if not np.array_equal(w, w.T):
            raise PreconditionError("weights must be symmetric")
        if np.any(np.diag(w) != 0):
            raise PreconditionError("weights must have a zero diagonal")
        w = np.ascontiguousarray(w, dtype=np.int64)
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    def to_json(self) -> str:
        return json.dumps({"n": self.n, "M": self.M, "d": self.d, "weights": self.weights.ravel().tolist()})

    @classmethod
    def from_dict(cls, obj: dict) -> "TriangleInstance":
        try:
            n, M, d = int(obj["n"]), int(obj["M"]), int(obj["d"])
            flat = obj["weights"]
        except (KeyError, TypeError, ValueError) as exc:
            raise PreconditionError(f"malformed instance: {exc}") from None
        w = np.asarray(flat)
        if w.ndim == 1:
            if w.size != n * n:
                raise PreconditionError(f"expected {n * n} weights, got {w.size}")
            w = w.reshape(n, n)
        if not np.issubdtype(w.dtype, np.integer):
            raise PreconditionError("weights must be integers")
        return cls(n, M, d, w)


def load_instance(path) -> TriangleInstance:
    with open(path) as fh:
        try:
            obj = json.load(fh)
        except json.JSONDecodeError as exc:
            raise PreconditionError(f"instance file is not valid JSON: {exc}") from None
    if not isinstance(obj, dict):
        raise PreconditionError("instance file must hold a JSON object")
    return TriangleInstance.from_dict(obj)


def save_instance(inst: TriangleInstance, path) -> None:
    with open(path, "w") as fh:
        fh.write(inst.to_json())


# ----------------------------------------------------------- classical scan


@numba.njit(cache=True)
def _scan(W, d, M, limit):
    n = W.shape[0]
    out = np.empty((limit, 3), np.int64)
    cnt = 0
    for a in range(n):
        Wa = W[a]
        for b in range(a + 1, n):
            Wb = W[b]
            need = (d - Wa[b]) % M
            hits = 0
            # branchless inner loop; matches are collected in a second pass
            for c in range(b + 1, n):
                s = Wb[c] + Wa[c]
                s -= M * (s >= M)
                hits += s == need
            if hits:
                for c in range(b + 1, n):
                    if (Wb[c] + Wa[c]) % M == need:
                        if cnt < limit:
                            out[cnt, 0] = a
                            out[cnt, 1] = b
                            out[cnt, 2] = c
                        cnt += 1
    return cnt, out


def find_triangles(inst: TriangleInstance, limit: int = 2) -> tuple[int, list[tuple[int, int, int]]]:
    """Count target triples and return up to ``limit`` of them (sorted)."""
    cnt, out = _scan(inst.weights, inst.d, inst.M, limit)
    return int(cnt), [tuple(int(x) for x in row) for row in out[: min(cnt, limit)]]


def classical_oracle(inst: TriangleInstance) -> Optional[tuple[int, int, int]]:
    """Exhaustive O(n^3) search; ``None`` when no triple sums to ``d``."""
    cnt, found = find_triangles(inst, limit=2)
    if cnt > 1:
        raise PromiseViolation(f"{cnt} target triangles, e.g. {found}")
    return found[0] if cnt else None


def generate_instance(
    n: int, M: Optional[int] = None, d: int = 0, plant: bool = True, seed: int = 0, budget: int = 50
) -> TriangleInstance:
    """Random symmetric weights with exactly one (``plant``) or zero target triangles."""
    n = int(n)
    if n < 8:
        raise PreconditionError(f"n must be at least 8, got {n}")
    M = 8 * n**3 if M is None else int(M)
    if M < 2:
        raise PreconditionError(f"M must be at least 2, got {M}")
    if not 0 <= d < M:
        raise PreconditionError(f"d must lie in [0, M), got d={d}, M={M}")
    rng = np.random.default_rng(seed)
    for _ in range(budget):
        w = rng.integers(0, M, size=(n, n), dtype=np.int64)
        w = np.triu(w, 1)
        w = w + w.T
        if plant:
            a, b, c = sorted(int(x) for x in rng.choice(n, size=3, replace=False))
            w[a, b] = w[b, a] = (d - w[b, c] - w[a, c]) % M
        inst = TriangleInstance(n, M, d, w)
        cnt, _ = find_triangles(inst, limit=2)
        if cnt == (1 if plant else 0):
            return inst
    raise DetwalkError(f"rejection budget of {budget} draws exhausted; try a larger M")


# ------------------------------------------------------------------- plans


@dataclass(frozen=True)
class WalkLayerPlan:
    """Walk-then-amplify plan for layers 1 and 4."""

    layer: int
    t1: int
    t2: int
    p: float
    epsilon: float
    search: SearchPlan
    fidelity: float
    off_target_mass: float
    idle_fidelity: float

    def as_dict(self) -> dict:
        return {
            "layer": self.layer,
            "t1": self.t1,
            "t2": self.t2,
            "p": self.p,
            "epsilon": self.epsilon,
            "search": self.search.as_dict(),
            "fidelity": self.fidelity,
            "off_target_mass": self.off_target_mass,
            "idle_fidelity": self.idle_fidelity,
        }


def _walk_layer(layer, w, step, t1, t2) -> WalkLayerPlan:
    ti = w.target_index
    check = target_reflection(w.dim, ti)
    V = mat_power(mat_power(step, t1) @ check, t2)
    phi = V @ w.psi0
    p = exact_success_amplitude(step, check, w.psi0, ti, t1, t2)
    plan = long_params(min(1.0, p * p))
    final = run_search_state(phi, ti, plan)
    # with no marked state every check is the identity and psi0 is invariant
    idle_fid = float(abs(np.vdot(w.psi0, _no_mark_run(step, w.psi0, t1, t2, plan))))
    return WalkLayerPlan(
        layer, int(t1), int(t2), p, w.epsilon, plan, fidelity(final, ti), off_target_mass(final, ti), idle_fid
    )


def _no_mark_run(step, psi0, t1, t2, plan: SearchPlan) -> np.ndarray:
    """The layer's full circuit when nothing is marked: checks and ``S_M`` are identities."""
    prep = mat_power(step, t1 * t2)
    phi = prep @ psi0
    state = phi.copy()
    n_iter = plan.iterations
    for _ in range(n_iter):
        state = state - (1 - np.exp(-1j * plan.beta)) * phi * np.vdot(phi, state)
    return state


def layer4_times(r1: int, r2: int, m: int) -> tuple[int, int]:
    return (
        round_half_away(math.pi / 2 * math.sqrt(m / 2)),
        round_half_away(math.pi / 4 * math.sqrt(r1 * r2) / m),
    )


def layer1_times(n: int, r1: int) -> tuple[int, int]:
    return (
        round_half_away(math.pi / 2 * math.sqrt(2 * r1)),
        round_half_away(math.pi / 4 * math.sqrt(n / (3 * r1))),
    )


@functools.lru_cache(maxsize=64)
def plan_layer4(r1: int, r2: int, m: int) -> WalkLayerPlan:
    w = build_layer4_9d(r1, r2, m)
    t1, t2 = layer4_times(r1, r2, m)
    return _walk_layer(4, w, layer4_step(w), t1, t2)


@functools.lru_cache(maxsize=64)
def plan_layer1(n: int, r1: int) -> WalkLayerPlan:
    w = build_layer1_10d(n, r1)
    t1, t2 = layer1_times(n, r1)
    return _walk_layer(1, w, edgewalk_step(w), t1, t2)


@dataclass(frozen=True)
class Layer3Plan:
    size: int
    search: SearchPlan
    fidelity: float
    off_target_mass: float

    def as_dict(self) -> dict:
        return {"size": self.size, "search": self.search.as_dict(), "fidelity": self.fidelity,
                "off_target_mass": self.off_target_mass}


@functools.lru_cache(maxsize=64)
def plan_layer3(n: int, r1: int, r2: int) -> Layer3Plan:
    """Grover search for the single remaining triangle vertex in [n] - R1 - R2 - y."""
    size = n - r1 - r2 - 1
    if size < 1:
        raise PreconditionError(f"empty layer-3 search space (n - r1 - r2 - 1 = {size})")
    plan = long_params(1.0 / size)
    if size <= LAYER3_FULL_MAX:
        psi = np.full(size, 1 / math.sqrt(size), dtype=np.complex128)
    else:
        # exact symmetry reduction: target and the uniform state on the rest
        psi = np.array([math.sqrt(1 / size), math.sqrt(1 - 1 / size)], dtype=np.complex128)
    final = run_search_state(psi, 0, plan)
    return Layer3Plan(size, plan, fidelity(final, 0), off_target_mass(final, 0))


@dataclass(frozen=True)
class Layer2Plan:
    eedp: EedpSolution
    search: SearchPlan
    epsilon: float
    fidelity: float
    off_target_mass: float

    def as_dict(self) -> dict:
        return {"eedp": self.eedp.as_dict(), "search": self.search.as_dict(), "epsilon": self.epsilon,
                "fidelity": self.fidelity, "off_target_mass": self.off_target_mass}


@functools.lru_cache(maxsize=64)
def plan_layer2(n1: int, r2: int, scheme: str = "fixed_beta") -> Layer2Plan:
    """Vertex walk on J(n1, r2) whose ``t`` steps stand in for ``S_psi0``.

    The walk power is ``e^{i gamma} (I - (1 - e^{i beta_w}) |psi0><psi0|)``,
    which is ``S_psi0(2 pi - beta_w)`` up to a global phase, so only the
    fixed-beta scheme applies: a phase-matched plan would need ``beta = -alpha``.
    """
    if scheme != "fixed_beta":
        raise PreconditionError("layer 2 imposes beta through the walk; only the fixed_beta scheme is allowed")
    p = JohnsonParams(n1, r2)
    w = build_vertexwalk_5d(p, (1, 0))
    sol = solve_eedp(p, (1, 0))
    beta = (2 * math.pi - sol.beta) % (2 * math.pi)
    plan = fixed_beta_params(w.epsilon, beta)
    ut = mat_power(vertexwalk_step(w, sol.theta1, sol.theta2), sol.t)
    final = run_search_state(w.psi0, w.target_index, plan, s_psi=ut)
    return Layer2Plan(sol, plan, w.epsilon, fidelity(final, w.target_index), off_target_mass(final, w.target_index))


@dataclass(frozen=True)
class LayerPlans:
    params: LayerParams
    layer1: WalkLayerPlan
    layer2: Layer2Plan
    layer3: Layer3Plan
    layer4: WalkLayerPlan

    def fidelities(self) -> dict:
        return {
            "layer1": self.layer1.fidelity,
            "layer2": self.layer2.fidelity,
            "layer3": self.layer3.fidelity,
            "layer4": self.layer4.fidelity,
        }

    def off_target_masses(self) -> dict:
        return {
            "layer1": self.layer1.off_target_mass,
            "layer2": self.layer2.off_target_mass,
            "layer3": self.layer3.off_target_mass,
            "layer4": self.layer4.off_target_mass,
        }


def build_plans(params: LayerParams, tol: float = FIDELITY_TOL) -> LayerPlans:
    """Plans in bottom-up order; any layer short of fidelity 1 is a hard failure."""
    p = params
    l4 = plan_layer4(p.r1, p.r2, p.m)
    l3 = plan_layer3(p.n, p.r1, p.r2)
    l2 = plan_layer2(p.n1, p.r2)
    l1 = plan_layer1(p.n, p.r1)
    plans = LayerPlans(p, l1, l2, l3, l4)
    for name, fid in plans.fidelities().items():
        if fid < 1 - tol:
            raise SolverError(f"{name} fidelity {fid!r} below 1 - {tol}", residual=1 - fid)
    for name, mass in plans.off_target_masses().items():
        if mass > MASS_TOL:
            raise SolverError(f"{name} leaves mass {mass!r} outside the target", residual=mass)
    for name, pl in (("layer1", l1), ("layer4", l4)):
        if pl.idle_fidelity < 1 - tol:
            raise SolverError(f"{name} does not return psi0 when nothing is marked ({pl.idle_fidelity!r})")
    return plans


# --------------------------------------------------------------- emulation


@dataclass
class EmulationTrace:
    n: int
    params: LayerParams
    fidelities: dict
    off_target_masses: dict
    samples: dict
    verdict: Optional[tuple[int, int, int]]
    oracle: Optional[tuple[int, int, int]]
    total_queries: float

    @property
    def matches_oracle(self) -> bool:
        return self.verdict == self.oracle

    def as_dict(self) -> dict:
        return {
            "n": self.n,
            "r1": self.params.r1,
            "r2": self.params.r2,
            "m": self.params.m,
            "fidelities": self.fidelities,
            "off_target_masses": self.off_target_masses,
            "samples": {k: (sorted(v) if isinstance(v, (set, frozenset, tuple, list)) else v) for k, v in self.samples.items()},
            "verdict": "no_triangle" if self.verdict is None else list(self.verdict),
            "oracle": "no_triangle" if self.oracle is None else list(self.oracle),
            "matches_oracle": self.matches_oracle,
            "total_queries": self.total_queries,
        }


def _pick(rng: np.random.Generator, pool, k: int) -> list[int]:
    pool = sorted(pool)
    if k > len(pool):
        raise DetwalkError(f"cannot sample {k} of {len(pool)} elements")
    return [pool[i] for i in rng.choice(len(pool), size=k, replace=False)]


def _final_check(inst: TriangleInstance, S1, S2, z) -> Optional[tuple[int, int, int]]:
    W, M, d = inst.weights, inst.M, inst.d
    for a in S1:
        for b in S2:
            if (int(W[a, b]) + int(W[b, z]) + int(W[a, z])) % M == d:
                return tuple(sorted((int(a), int(b), int(z))))
    return None


def emulate(inst: TriangleInstance, seed: int = 0, params: Optional[LayerParams] = None, tol: float = FIDELITY_TOL) -> EmulationTrace:
    """Run the four layers on ``inst`` and return the emulated outcome."""
    p = LayerParams.from_n(inst.n) if params is None else params
    plans = build_plans(p, tol)
    oracle = classical_oracle(inst)
    rng = np.random.default_rng(seed)
    universe = set(range(inst.n))
    if oracle is not None:
        tri = list(oracle)
        va, vb, vc = _pick(rng, tri, 3)  # roles: va in R1, vb in R2, vc found by layer 3
        rest = universe - set(tri)
        R1 = {va, *_pick(rng, rest, p.r1 - 1)}
        R2 = {vb, *_pick(rng, rest - R1, p.r2 - 1)}
        y = _pick(rng, rest - R1 - R2, 1)[0]
        z = vc
        S1 = {va, *_pick(rng, R1 - {va}, p.m - 1)}
        S2 = {vb, *_pick(rng, R2 - {vb}, p.m - 1)}
    else:
        # every layer returns its initial uniform state, so outcomes are uniform
        R1 = set(_pick(rng, universe, p.r1))
        R2 = set(_pick(rng, universe - R1, p.r2))
        y = _pick(rng, universe - R1 - R2, 1)[0]
        z = _pick(rng, universe - R1 - R2 - {y}, 1)[0]
        S1 = set(_pick(rng, R1, p.m))
        S2 = set(_pick(rng, R2, p.m))
    z1 = _pick(rng, R1 - S1, 1)[0]
    z2 = _pick(rng, R2 - S2, 1)[0]
    parts = [R1, R2, {y}, {z}]
    for i in range(4):
        for j in range(i + 1, 4):
            if parts[i] & parts[j]:
                raise DetwalkError("sampled sets are not mutually disjoint")
    verdict = _final_check(inst, sorted(S1), sorted(S2), z)
    samples = {"R1": R1, "R2": R2, "y": int(y), "z": int(z), "S1": S1, "S2": S2, "z1": int(z1), "z2": int(z2)}
    return EmulationTrace(
        inst.n, p, plans.fidelities(), plans.off_target_masses(), samples, verdict, oracle,
        ledger(inst.n, params=p).c0,
    )


# ------------------------------------------------------------------ ledger


@dataclass(frozen=True)
class QueryLedger:
    """Per-layer setup ``s``, update ``u``, check ``c`` costs and marked fractions.

    ``c1bar`` is the cost of one layer-2 search; ``c1 = 2 u1 + 4 c1bar``
    is the cost of one exact layer-1 check built from it.
    """

    n: int
    mode: str
    params: LayerParams
    s: dict
    u: dict
    eps: dict
    counts: dict
    c0: float
    c1: float
    c1bar: float
    c2: float
    c3: float
    c4: float

    @property
    def ratio(self) -> float:
        return self.c0 / self.n ** (9 / 7)

    def composition_gap(self) -> float:
        """``c1 - (2 u1 + 4 c1bar)``; zero by construction."""
        return self.c1 - (2 * self.u[1] + 4 * self.c1bar)

    def recompute(self) -> dict:
        """Re-evaluate the recurrences from the stored inputs."""
        return _recurrences(self.mode, self.n, self.params, self.s, self.u, self.eps, self.counts, self.c4)

    def as_dict(self) -> dict:
        return {
            "n": self.n,
            "mode": self.mode,
            "r1": self.params.r1,
            "r2": self.params.r2,
            "m": self.params.m,
            "s": {f"s{k}": v for k, v in self.s.items()},
            "u": {f"u{k}": v for k, v in self.u.items()},
            "eps": {f"eps{k}": v for k, v in self.eps.items()},
            "counts": dict(self.counts),
            "c0": self.c0,
            "c1": self.c1,
            "c1bar": self.c1bar,
            "c2": self.c2,
            "c3": self.c3,
            "c4": self.c4,
            "ratio_c0_over_n_9_7": self.ratio,
            "composition_gap": self.composition_gap(),
        }


def _recurrences(mode, n, p, s, u, eps, counts, c4) -> dict:
    if mode == "formula":
        c3 = s[4] + (math.sqrt(p.m) * u[4] + c4) / math.sqrt(eps[4])
        c2 = math.sqrt(n) * c3
        c1bar = s[2] + (math.sqrt(p.r2) * u[2] + c2) / math.sqrt(eps[2])
        c1 = 2 * u[1] + 4 * c1bar
        c0 = s[1] + (math.sqrt(p.r1) * u[1] + c1) / math.sqrt(eps[1])
    elif mode == "plan":
        k = counts
        c3 = (2 * k["k4"] + 1) * (s[4] + k["t2_4"] * (k["t1_4"] * u[4] + c4))
        c2 = k["k3"] * c3
        c1bar = s[2] + 2 * k["k2"] * (k["t_walk2"] * u[2] + c2)
        c1 = 2 * u[1] + 4 * c1bar
        c0 = (2 * k["k1"] + 1) * (s[1] + k["t2_1"] * (k["t1_1"] * u[1] + c1))
    else:
        raise PreconditionError(f"unknown ledger mode {mode!r}")
    return {"c0": c0, "c1": c1, "c1bar": c1bar, "c2": c2, "c3": c3}


def ledger(n: int, mode: str = "plan", u4: float = 4.0, params: Optional[LayerParams] = None,
           unit: bool = False) -> QueryLedger:
    """Query totals for input size ``n``.

    ``mode="formula"`` uses the asymptotic recurrences with exact marked
    fractions; ``mode="plan"`` substitutes the iteration counts of the
    actual layer plans (walk steps ``t1``, check rounds ``t2`` and
    amplification rounds ``k``).  ``unit=True`` sets every setup and update
    cost to 1 except ``s2 = 0``.
    """
    p = LayerParams.from_n(n) if params is None else params
    if p.r1 < 4:
        raise PreconditionError(f"ledger needs r1 >= 4, got r1={p.r1}")
    s = {1: p.r1 * p.r2, 2: 0, 4: p.m}
    u = {1: 2 * (p.r1 + p.r2), 2: 2 * p.r1, 4: u4}
    if unit:
        s = {1: 1, 2: 0, 4: p.m}
        u = {1: 1, 2: 1, 4: 1.0}
    eps = {
        1: build_layer1_10d(p.n, p.r1).epsilon,
        2: build_vertexwalk_5d(JohnsonParams(p.n1, p.r2), (1, 0)).epsilon,
        4: build_layer4_9d(p.r1, p.r2, p.m).epsilon,
    }
    counts = {}
    if mode == "plan":
        l4 = plan_layer4(p.r1, p.r2, p.m)
        l3 = plan_layer3(p.n, p.r1, p.r2)
        l2 = plan_layer2(p.n1, p.r2)
        l1 = plan_layer1(p.n, p.r1)
        counts = {
            "t1_4": l4.t1, "t2_4": l4.t2, "k4": l4.search.k,
            "k3": l3.search.k,
            "t_walk2": l2.eedp.t, "k2": l2.search.k,
            "t1_1": l1.t1, "t2_1": l1.t2, "k1": l1.search.k,
        }
    c4 = 0.0
    tot = _recurrences(mode, n, p, s, u, eps, counts, c4)
    return QueryLedger(n, mode, p, s, u, eps, counts, tot["c0"], tot["c1"], tot["c1bar"], tot["c2"], tot["c3"], c4)


# ------------------------------------------------------------------ trends


def amplitude_trend(layer: int, js=range(2, 11)) -> list[dict]:
    """Exact success amplitude against ``delta`` along ``n = j^7``."""
    rows = []
    for j in js:
        p = LayerParams.from_n(j**7)
        if layer == 4:
            pl = plan_layer4(p.r1, p.r2, p.m)
            delta = p.m / p.r1 + p.m / p.r2 + 1 / p.m
        elif layer == 1:
            pl = plan_layer1(p.n, p.r1)
            delta = 1 / p.r1 + p.r1 / p.n
        else:
            raise PreconditionError("trend is defined for layers 1 and 4")
        rows.append({"j": j, "n": p.n, "r1": p.r1, "r2": p.r2, "m": p.m, "t1": pl.t1, "t2": pl.t2,
                     "p": pl.p, "delta": delta, "ratio": (1 - pl.p) / delta})
    return rows


def band_summary(values, factor: float) -> dict:
    """Does every later value stay within ``factor`` times the first one?"""
    values = list(values)
    base = values[0]
    worst = max(values[1:]) / base if len(values) > 1 else 1.0
    return {"base": base, "max_over_base": worst, "factor": factor, "pass": bool(worst <= factor)}


def ratio_band(values, factor: float) -> dict:
    """Is ``max / min`` within ``factor``?"""
    values = list(values)
    spread = max(values) / min(values)
    return {"min": min(values), "max": max(values), "spread": spread, "factor": factor, "pass": bool(spread <= factor)}
