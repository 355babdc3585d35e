import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fuzzyglucose.models import (
    BergmanParams,
    BergmanState,
    EquilibriumError,
    MealDisturbance,
    TolicParams,
    bergman_derivative,
    bergman_plant,
    find_equilibrium,
    meal_disturbance,
    tolic_derivative,
    tolic_plant,
)

finite = st.floats(-50, 50, allow_nan=False)


def test_bergman_origin_is_equilibrium():
    assert bergman_derivative((0, 0, 0), 0.0, 0.0, BergmanParams()) == (0, 0, 0)


def test_bergman_disturbance_enters_glucose_only():
    assert bergman_derivative((0, 0, 0), 0.0, 1.0, BergmanParams()) == (1, 0, 0)


def test_bergman_hand_evaluation():
    # -x (g + g_b) = -0.02 * 91; -n i = -0.0926 * 5; -p2 x + p3 i = -5e-4 + 6.5e-5
    d = bergman_derivative(BergmanState(10, 5, 0.02), 0.0, 0.0, BergmanParams())
    np.testing.assert_allclose(d, (-1.82, -0.463, -0.000435), rtol=1e-12)


def test_bergman_rejects_nonfinite():
    with pytest.raises(ValueError):
        bergman_derivative((np.nan, 0, 0), 0.0, 0.0, BergmanParams())
    with pytest.raises(ValueError):
        bergman_derivative((0, 0, 0), np.inf, 0.0, BergmanParams())


@pytest.mark.parametrize("kw", [{"p2": 0}, {"n": -1}, {"v1": 0}, {"a1": 130}, {"a1": 0}])
def test_bergman_params_invariants(kw):
    with pytest.raises(ValueError):
        BergmanParams(**kw)


@pytest.mark.parametrize("kw", [{"r": 0}, {"g_range": 0}, {"x3_range": -1}, {"b_u": 0}])
def test_tolic_params_invariants(kw):
    with pytest.raises(ValueError):
        TolicParams(**kw)


def test_tolic_origin_is_equilibrium():
    np.testing.assert_array_equal(tolic_derivative(np.zeros(6), 0.0, 0.0, TolicParams()), 0)


def test_tolic_x3_row_values():
    p = TolicParams()
    d = tolic_derivative((0, 0, 0, 0, 0, 10), 0.0, 0.0, p)
    # (17.5 - 3.15 + 0.148) * 10; the arithmetic sums to 144.98
    assert d.g_prime == pytest.approx(144.98, rel=1e-12)
    assert d.g_prime == pytest.approx(p.k * 10 + p.l * 100 + p.n * 1000, rel=1e-12)
    assert d.x3 == pytest.approx(-0.833, rel=1e-12)


def test_tolic_first_column():
    d = tolic_derivative((1, 0, 0, 0, 0, 0), 0.0, 0.0, TolicParams())
    assert d.x1 == pytest.approx(0.0833)
    assert d.i_p == pytest.approx(-0.233)
    assert d.i_i == pytest.approx(0.0667)


def test_tolic_factoring_identity(rng):
    p = TolicParams()
    x3 = rng.uniform(-p.x3_range, p.x3_range, 1000)
    factored = (p.k + p.l * x3 + p.n * x3 ** 2) * x3
    expanded = p.k * x3 + p.l * x3 ** 2 + p.n * x3 ** 3
    np.testing.assert_allclose(factored, expanded, rtol=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.tuples(finite, finite, st.floats(-0.05, 0.05)), finite, finite, finite)
def test_bergman_linear_in_disturbance(s, u, v1, v2):
    p = BergmanParams()
    diff = np.subtract(bergman_derivative(s, u, v1, p), bergman_derivative(s, u, v2, p))
    np.testing.assert_allclose(diff, (v1 - v2, 0, 0), atol=1e-9)


@settings(max_examples=50, deadline=None)
@given(st.lists(finite, min_size=6, max_size=6), finite, finite, finite)
def test_tolic_linear_in_disturbance(s, u, v1, v2):
    p = TolicParams()
    diff = np.subtract(tolic_derivative(s, u, v1, p), tolic_derivative(s, u, v2, p))
    np.testing.assert_allclose(diff, (0, 0, v1 - v2, 0, 0, 0), atol=1e-8)


def test_meal_disturbance_values():
    assert meal_disturbance(0.0, MealDisturbance(1.0)) == 1.0
    assert meal_disturbance(20.0, MealDisturbance(2.0, 0.05)) == pytest.approx(2 * math.exp(-1))
    assert MealDisturbance(3.0)(1e4) < 1e-200
    with pytest.raises(ValueError):
        meal_disturbance(-1.0, MealDisturbance())
    with pytest.raises(ValueError):
        MealDisturbance(-1.0)
    with pytest.raises(ValueError):
        MealDisturbance(1.0, 0.0)


def test_equilibrium_examples():
    x = find_equilibrium(bergman_plant(), 0.0, 0.0)
    np.testing.assert_array_equal(x, 0)
    np.testing.assert_allclose(find_equilibrium(lambda x: -x + 1, x_guess=[0.0]), [1.0])
    np.testing.assert_array_equal(find_equilibrium(tolic_plant(), 0.0, 0.0), 0)


def test_equilibrium_residual_below_tol():
    plant = bergman_plant()
    x = find_equilibrium(plant, 0.1, 0.0, x_guess=[0, 1, 0.0005], tol=1e-10)
    assert np.abs(plant.derivative(x, 0.1, 0.0)).max() <= 1e-10


def test_equilibrium_failure_carries_residual():
    with pytest.raises(EquilibriumError) as err:
        find_equilibrium(lambda x: x * x + 1, x_guess=[0.3], max_iter=20)
    assert err.value.residual >= 1.0
    with pytest.raises(ValueError):
        find_equilibrium(lambda x: x, x_guess=[0.0], tol=0)


def test_pump_maps_are_inverse():
    for plant in (bergman_plant(), tolic_plant()):
        for u in (-3.0, 0.0, 2.5):
            assert plant.from_pump(plant.to_pump(u)) == pytest.approx(u)


def test_bergman_pump_basal():
    plant = bergman_plant()
    # zero transformed input is the basal infusion n I_b V1 (mU/min), 1 U/h here
    assert plant.to_pump(0.0) == pytest.approx(0.0926 * 15 * 12 * 0.06)
    assert bergman_plant(pump_scale=1.0).to_pump(0.0) == pytest.approx(0.0926 * 15 * 12)


def test_tolic_pump_map():
    p = TolicParams()
    plant = tolic_plant(p)
    assert plant.to_pump(1.0) == pytest.approx(p.b_u * (p.c * p.g_op + p.d - 1.0))
    assert plant.disturbance_offset == pytest.approx(p.h * p.g_op + p.p)
