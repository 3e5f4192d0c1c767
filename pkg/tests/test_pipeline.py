import json
import math

import numpy as np
import pytest

from detwalk.errors import DetwalkError, PreconditionError, PromiseViolation
from detwalk.pipeline import (
    MASS_TOL,
    TriangleInstance,
    band_summary,
    build_plans,
    classical_oracle,
    emulate,
    find_triangles,
    generate_instance,
    ledger,
    layer4_times,
    layer1_times,
    amplitude_trend,
    load_instance,
    plan_layer1,
    plan_layer2,
    plan_layer3,
    plan_layer4,
    ratio_band,
    save_instance,
)
from detwalk.search import k_lower, run_search_state
from detwalk.subspaces import LayerParams


def _planted_8():
    w = np.zeros((8, 8), dtype=np.int64)
    for a, b in ((0, 1), (1, 2), (0, 2)):
        w[a, b] = w[b, a] = 1
    return TriangleInstance(8, 4, 3, w)


# ------------------------------------------------------------------ oracle


def test_oracle_all_zero_weights():
    assert classical_oracle(TriangleInstance(8, 2, 1, np.zeros((8, 8), dtype=np.int64))) is None


def test_oracle_planted_0_1_2():
    assert classical_oracle(_planted_8()) == (0, 1, 2)


def test_oracle_two_triangles_rejected():
    w = np.array(_planted_8().weights)
    for a, b in ((4, 5), (5, 6), (4, 6)):
        w[a, b] = w[b, a] = 1
    with pytest.raises(PromiseViolation):
        classical_oracle(TriangleInstance(8, 4, 3, w))


def test_find_triangles_counts_all():
    # every triple of a complete graph with unit weights hits d = 3
    w = np.ones((9, 9), dtype=np.int64) - np.eye(9, dtype=np.int64)
    cnt, found = find_triangles(TriangleInstance(9, 5, 3, w), limit=3)
    assert cnt == math.comb(9, 3)
    assert found == [(0, 1, 2), (0, 1, 3), (0, 1, 4)]


def test_oracle_matches_bruteforce_python():
    inst = generate_instance(12, M=200, plant=True, seed=3, budget=500)
    W = inst.weights
    brute = [(a, b, c) for a in range(12) for b in range(a + 1, 12) for c in range(b + 1, 12)
             if (W[a, b] + W[b, c] + W[a, c]) % inst.M == inst.d]
    assert [classical_oracle(inst)] == brute


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(n=7, M=4, d=0),
        dict(n=8, M=1, d=0),
        dict(n=8, M=4, d=4),
    ],
)
def test_instance_validation(kwargs):
    with pytest.raises(PreconditionError):
        TriangleInstance(weights=np.zeros((kwargs["n"],) * 2, dtype=np.int64), **kwargs)


def test_instance_rejects_asymmetric_and_diagonal():
    w = np.zeros((8, 8), dtype=np.int64)
    w[0, 1] = 1
    with pytest.raises(PreconditionError):
        TriangleInstance(8, 4, 0, w)
    w = np.eye(8, dtype=np.int64)
    with pytest.raises(PreconditionError):
        TriangleInstance(8, 4, 0, w)


def test_instance_json_roundtrip(tmp_path):
    inst = generate_instance(10, seed=4)
    path = tmp_path / "inst.json"
    save_instance(inst, path)
    back = load_instance(path)
    assert (back.n, back.M, back.d) == (inst.n, inst.M, inst.d)
    assert np.array_equal(back.weights, inst.weights)
    assert set(json.loads(path.read_text())) == {"n", "M", "d", "weights"}


def test_load_malformed(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{not json")
    with pytest.raises(PreconditionError):
        load_instance(path)
    path.write_text(json.dumps({"n": 8, "M": 4, "d": 0, "weights": [0] * 10}))
    with pytest.raises(PreconditionError):
        load_instance(path)


# ------------------------------------------------------------------ generator


def test_generate_unplanted_first_draw():
    for seed in range(20):
        inst = generate_instance(16, plant=False, seed=seed, budget=1)
        assert classical_oracle(inst) is None


def test_generate_planted_deterministic():
    a = generate_instance(20, plant=True, seed=11)
    b = generate_instance(20, plant=True, seed=11)
    assert np.array_equal(a.weights, b.weights)
    assert classical_oracle(a) is not None


def test_generate_bad_d():
    with pytest.raises(PreconditionError):
        generate_instance(10, M=5, d=5)


def test_generate_budget_exhausted():
    # with M = 2 almost every graph has many target triangles
    with pytest.raises(DetwalkError, match="budget"):
        generate_instance(12, M=2, plant=False, seed=0, budget=3)


# ------------------------------------------------------------------ plans


def test_walk_times():
    assert layer1_times(2187, 81) == (20, 2)
    assert layer4_times(81, 243, 27) == (6, 4)


def test_plan_layer1_2187():
    pl = plan_layer1(2187, 81)
    assert (pl.t1, pl.t2) == (20, 2)
    assert 1 - pl.fidelity <= 1e-10
    assert pl.off_target_mass <= MASS_TOL
    assert 1 - pl.idle_fidelity <= 1e-10
    assert pl.search.lam == pytest.approx(pl.p**2, abs=1e-15)


def test_plan_layer1_degenerate():
    with pytest.raises(PreconditionError):
        plan_layer1(100, 3)


def test_plan_layer4_81_243_27():
    pl = plan_layer4(81, 243, 27)
    assert (pl.t1, pl.t2) == (6, 4)
    assert 1 - pl.fidelity <= 1e-10
    assert 1 - pl.idle_fidelity <= 1e-10


def test_plan_layer4_p_trend():
    ps = [plan_layer4(*(lambda q: (q.r1, q.r2, q.m))(LayerParams.from_n(j**7))).p for j in (2, 5, 10)]
    assert ps[0] < ps[1] < ps[2] < 1


def test_plan_layer3_128():
    pl = plan_layer3(128, 16, 32)
    assert pl.size == 79
    assert pl.search.lam == pytest.approx(1 / 79, abs=1e-17)
    assert 1 - pl.fidelity <= 1e-10


def test_plan_layer3_single_element():
    pl = plan_layer3(10, 4, 4)
    assert pl.size == 1 and pl.search.k == 0 and pl.fidelity == 1


def test_plan_layer3_empty():
    with pytest.raises(PreconditionError):
        plan_layer3(10, 4, 6)


def test_plan_layer2_96_32():
    pl = plan_layer2(96, 32)
    assert pl.epsilon == pytest.approx(0.44211, abs=1e-5)
    assert pl.search.scheme == "fixed_beta"
    assert 1 - pl.fidelity <= 1e-10
    assert math.isfinite(k_lower(pl.epsilon, pl.search.beta))
    assert pl.search.k >= k_lower(pl.epsilon, pl.search.beta) - 1e-9


def test_plan_layer2_rejects_long():
    with pytest.raises(PreconditionError):
        plan_layer2(96, 32, scheme="long")


def test_build_plans_128():
    plans = build_plans(LayerParams.from_n(128))
    assert all(1 - f <= 1e-9 for f in plans.fidelities().values())
    assert all(m <= MASS_TOL for m in plans.off_target_masses().values())


# ------------------------------------------------------------------ emulation


@pytest.mark.parametrize("seed", range(5))
def test_emulate_planted_128(seed):
    inst = generate_instance(128, plant=True, seed=seed)
    tr = emulate(inst, seed=seed)
    assert tr.verdict == classical_oracle(inst) is not None
    assert tr.matches_oracle
    assert all(1 - f <= 1e-9 for f in tr.fidelities.values())
    s = tr.samples
    parts = [s["R1"], s["R2"], {s["y"]}, {s["z"]}]
    assert sum(len(x) for x in parts) == len(set().union(*parts))


@pytest.mark.parametrize("seed", range(5))
def test_emulate_unplanted_128(seed):
    inst = generate_instance(128, plant=False, seed=100 + seed)
    tr = emulate(inst, seed=seed)
    assert tr.verdict is None and tr.matches_oracle


def test_emulate_deterministic_per_seed():
    inst = generate_instance(128, plant=True, seed=9)
    assert emulate(inst, seed=3).as_dict() == emulate(inst, seed=3).as_dict()


def test_emulate_total_queries_128():
    tr = emulate(generate_instance(128, seed=1), seed=0)
    assert tr.total_queries == ledger(128).c0 == 261984


# ------------------------------------------------------------------ ledger


def test_ledger_unit_c3_128():
    lg = ledger(128, mode="formula", unit=True)
    assert (lg.params.r1, lg.params.r2, lg.params.m) == (16, 32, 8)
    assert lg.c3 == pytest.approx(16.0, rel=1e-12)


def test_ledger_s2_zero_and_composition():
    for mode in ("plan", "formula"):
        for n in (128, 2187):
            lg = ledger(n, mode=mode)
            assert lg.s[2] == 0
            assert lg.c1 == 2 * lg.u[1] + 4 * lg.c1bar
            assert lg.composition_gap() == 0


def test_ledger_recompute_exact():
    lg = ledger(2187)
    assert lg.recompute() == {"c0": lg.c0, "c1": lg.c1, "c1bar": lg.c1bar, "c2": lg.c2, "c3": lg.c3}


def test_ledger_plan_counts_128():
    lg = ledger(128)
    assert lg.counts == {"t1_4": 3, "t2_4": 2, "k4": 1, "k3": 7, "t_walk2": 46, "k2": 5,
                         "t1_1": 9, "t2_1": 1, "k1": 1}


def test_ledger_formula_constants():
    lg = ledger(2187, mode="formula")
    p = lg.params
    assert lg.s[1] == p.r1 * p.r2 and lg.u[1] == 2 * (p.r1 + p.r2)
    assert lg.u[2] == 2 * p.r1 and lg.s[4] == p.m and lg.u[4] == 4
    assert lg.c2 == math.sqrt(2187) * lg.c3


def test_ledger_small_n():
    with pytest.raises(PreconditionError):
        ledger(8)


def test_ledger_bad_mode():
    with pytest.raises(PreconditionError):
        ledger(128, mode="guess")


# ------------------------------------------------------------------ trend helpers


def test_amplitude_trend_rows():
    rows = amplitude_trend(4, js=(2, 3))
    assert [r["n"] for r in rows] == [128, 2187]
    assert rows[0]["ratio"] == pytest.approx((1 - rows[0]["p"]) / rows[0]["delta"])
    with pytest.raises(PreconditionError):
        amplitude_trend(2, js=(2,))


def test_band_helpers():
    assert band_summary([1, 1.5, 2.0], 2)["pass"]
    assert not band_summary([1, 2.5], 2)["pass"]
    assert ratio_band([2, 4, 7], 4)["pass"]
    assert not ratio_band([1, 5], 4)["pass"]


# ------------------------------------------------------------------ walk-power parity


def _layer1_ratio(j, t1):
    from detwalk.search import exact_success_amplitude, target_reflection
    from detwalk.subspaces import build_layer1_10d, edgewalk_step, round_half_away

    p = LayerParams.from_n(j**7)
    w = build_layer1_10d(p.n, p.r1)
    t2 = round_half_away(math.pi / 4 * math.sqrt(p.n / (3 * p.r1)))
    amp = exact_success_amplitude(edgewalk_step(w), target_reflection(10, w.target_index), w.psi0,
                                  w.target_index, t1, t2)
    return (1 - amp) / (1 / p.r1 + p.r1 / p.n)


def test_layer1_step_has_minus_one_eigenspace():
    from detwalk.linalg import eig_unitary
    from detwalk.subspaces import build_layer1_10d, edgewalk_step

    phases, _ = eig_unitary(edgewalk_step(build_layer1_10d(2187, 81)))
    assert np.sum(np.abs(np.abs(phases) - math.pi) < 1e-9) == 3


def test_layer1_deficit_depends_on_walk_power_parity():
    # at n = 21^7 the rounded walk power 980 is even; the odd neighbour 979
    # also negates the -1 eigenspace and cuts the deficit eightfold
    even = _layer1_ratio(21, 980)
    odd = _layer1_ratio(21, 979)
    assert even > 40 and odd < 6
    odd_ratios = [_layer1_ratio(j, 2 * math.floor(math.pi / 4 * math.sqrt(2 * j**4)) + 1) for j in range(2, 11)]
    assert max(odd_ratios[1:]) <= 2 * odd_ratios[0]


def test_layer4_ratio_plateau():
    ratios = [row["ratio"] for row in amplitude_trend(4, range(5, 11))]
    assert all(0.11 < x < 0.15 for x in ratios)
