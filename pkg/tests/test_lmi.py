import json

import numpy as np
import pytest

from conftest import BERGMAN_PRESETS, TOLIC_PRESETS, synthesized
from fuzzyglucose import fuzzy, lmi
from fuzzyglucose.fuzzy import TsModel, TsRule
from fuzzyglucose.lmi import (
    SynthesisError,
    SynthesisOptions,
    build_hinf_lmi,
    build_initial_condition_lmi,
    build_input_bound_lmi,
    congruence,
    synthesize,
    verify_solution,
)
from fuzzyglucose.verify import closed_loop_vertex, hinf_norm


def scalar_model(a=1.0, b=1.0, e=1.0, c=1.0):
    rule = TsRule([[a]], [[b]], [[e]], [[c]])
    return TsModel((rule,), lambda x: np.array([1.0]))


# ---------------------------------------------------------------- blocks

def test_hinf_block_scalar_example():
    rule = TsRule([[-1.0]], [[1.0]], [[1.0]], [[1.0]])
    blk = build_hinf_lmi(rule, [[1.0]], [[0.0]], 2.0)
    np.testing.assert_array_equal(blk, [[-2, 1, 1], [1, -2, 0], [1, 0, -2]])
    assert np.linalg.eigvalsh(blk).max() < 0
    assert np.linalg.eigvalsh(build_hinf_lmi(rule, [[1.0]], [[0.0]], 0.5)).max() >= 0


def test_hinf_block_degenerates_to_stabilization():
    a = np.array([[-1.0, 1.0], [0.0, -2.0]])
    rule = TsRule(a, [[0.0], [1.0]], np.zeros((2, 0)), np.zeros((0, 2)))
    x = np.array([[2.0, 0.5], [0.5, 1.0]])
    m = np.array([[0.3, -0.1]])
    ax = a @ x + rule.b_mat @ m
    np.testing.assert_allclose(build_hinf_lmi(rule, x, m, 1.0), ax + ax.T)


def test_hinf_block_dimension_error():
    rule = TsRule([[-1.0]], [[1.0]], [[1.0]], [[1.0]])
    with pytest.raises(ValueError):
        build_hinf_lmi(rule, np.eye(2), [[0.0, 0.0]], 1.0)


def test_initial_condition_examples():
    np.testing.assert_allclose(np.linalg.eigvalsh(build_initial_condition_lmi([1.0], np.eye(1))),
                               (0, 2), atol=1e-15)
    assert np.linalg.eigvalsh(build_initial_condition_lmi([2.0], np.eye(1))).min() == pytest.approx(-1)
    blk = build_initial_condition_lmi(np.zeros(2), np.eye(2))
    assert np.linalg.eigvalsh(blk).min() >= 0
    with pytest.raises(ValueError):
        build_initial_condition_lmi([1.0, 2.0], np.eye(1))


def test_input_bound_examples():
    assert np.linalg.eigvalsh(build_input_bound_lmi(np.eye(1), np.eye(1), 1.0)).min() == pytest.approx(0)
    assert np.linalg.eigvalsh(build_input_bound_lmi(np.eye(1), 2 * np.eye(1), 1.0)).min() < 0
    blk = build_input_bound_lmi(np.eye(2), np.zeros((1, 2)), 0.5)
    np.testing.assert_allclose(blk, np.diag([1, 1, 0.25]))
    with pytest.raises(ValueError):
        build_input_bound_lmi(np.eye(1), np.eye(1), 0.0)


def test_schur_equivalence(rng):
    for _ in range(100):
        n = rng.integers(1, 5)
        g = rng.normal(size=(n, n))
        x = g @ g.T + 0.1 * np.eye(n)
        m = rng.normal(size=(1, n))
        mu = rng.uniform(0.2, 3)
        block_ok = np.linalg.eigvalsh(build_input_bound_lmi(x, m, mu)).min() >= -1e-9
        schur_ok = np.linalg.eigvalsh(x - m.T @ m / mu ** 2).min() >= -1e-9
        assert block_ok == schur_ok


def test_congruence_examples(rng):
    a = np.array([[-1.0, 0.0], [0.0, -4.0]])
    np.testing.assert_array_equal(congruence(np.eye(2), a), a)
    np.testing.assert_allclose(congruence(np.diag([2.0, 1.0]), a), -4 * np.eye(2))
    with pytest.raises(ValueError):
        congruence([[1.0, 2.0], [2.0, 4.0]], a)
    with pytest.raises(ValueError):
        congruence(np.eye(2), [[0.0, 1.0], [0.0, 0.0]])
    for _ in range(100):
        n = rng.integers(1, 6)
        t = rng.normal(size=(n, n)) + 0.1 * np.eye(n)
        while abs(np.linalg.det(t)) < 1e-3:
            t = rng.normal(size=(n, n))
        g = rng.normal(size=(n, n))
        neg = -(g @ g.T + 0.1 * np.eye(n))
        assert np.linalg.eigvalsh(congruence(t, neg)).max() < 0


# ---------------------------------------------------------------- synthesis

def test_scalar_unstable_plant():
    model = scalar_model()
    res = synthesize(model, SynthesisOptions(mu=100.0))
    k = res.gains[0][0, 0]
    assert k < -1
    assert np.isfinite(res.gammas[0])
    assert hinf_norm(closed_loop_vertex(model.rules[0], res.gains[0])) <= res.gammas[0] + 1e-6
    assert verify_solution(res, model).passed


def test_zero_budget_with_initial_state_is_infeasible():
    with pytest.raises(SynthesisError) as err:
        synthesize(scalar_model(), SynthesisOptions(mu=1e-3, x0=(1.0,)))
    assert err.value.rule == 1
    assert "rule 1" in str(err.value)
    assert err.value.family in str(err.value)


def test_initial_condition_is_enforced():
    model = fuzzy.bergman_ts_model()
    x0 = (20.0, 0.0, 0.0)
    res = synthesize(model, SynthesisOptions(mu=1.2, x0=x0))
    for r in res.rules:
        assert np.linalg.eigvalsh(build_initial_condition_lmi(x0, r.x_block)).min() >= -1e-8
    assert verify_solution(res, model).passed


def test_options_validation():
    for kw in ({"mu": 0}, {"eps_feas": 0}, {"gamma_max": -1}, {"per_rule_independent": False},
               {"scaling": "qr"}):
        with pytest.raises(ValueError):
            SynthesisOptions(**kw)
    with pytest.raises(ValueError):
        SynthesisOptions(x0=(1.0,)).x0_vector(3)


@pytest.mark.parametrize("name,mu", [("bergman", mu) for _, mu in BERGMAN_PRESETS.values()]
                         + [("tolic", mu) for _, mu in TOLIC_PRESETS.values()])
def test_presets_verify(name, mu):
    res = synthesized(name, mu)
    model = fuzzy.bergman_ts_model() if name == "bergman" else fuzzy.tolic_ts_model()
    rep = verify_solution(res, model)
    assert rep.passed, rep.to_dict()
    for r in res.rules:
        assert np.linalg.eigvalsh(r.x_block).min() > 0
        rel = np.linalg.norm(r.m_block - r.gain @ r.x_block) / np.linalg.norm(r.m_block)
        assert rel <= 1e-9


def test_gamma_monotone_in_mu():
    gammas = np.array([synthesized("bergman", mu).gammas for _, mu in BERGMAN_PRESETS.values()])
    assert np.all(np.diff(gammas, axis=0) < 0)


def test_verify_flags_unstable_gain():
    model = scalar_model(a=-1.0)
    res = synthesize(model, SynthesisOptions(mu=10.0))
    res.rules[0].gain = np.array([[5.0]])
    chk = verify_solution(res, model).checks[0]
    assert chk.spectral_abscissa > 0
    assert not verify_solution(res, model).passed


def test_verify_input_residual_example():
    model = scalar_model(a=-1.0)
    res = synthesize(model, SynthesisOptions(mu=1.0))
    r = res.rules[0]
    r.x_block, r.m_block, r.gain = np.eye(1), 2 * np.eye(1), 2 * np.eye(1)
    chk = verify_solution(res, model, SynthesisOptions(mu=1.0)).checks[0]
    assert chk.input_bound_residual == pytest.approx(3.0)
    assert not chk.passed()


def test_result_json_roundtrip():
    res = synthesized("bergman", 0.095)
    back = lmi.SynthesisResult.from_json(res.to_json())
    for a, b in zip(res.rules, back.rules):
        assert np.array_equal(a.gain, b.gain)
        assert np.array_equal(a.x_block, b.x_block)
        assert a.gamma == b.gamma
    data = json.loads(res.to_json())
    assert set(data["rules"][0]) >= {"rule", "X", "M", "K", "gamma", "residuals"}
