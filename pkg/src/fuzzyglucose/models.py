"""Nonlinear glucose-insulin plants.

Two models are provided, both written in deviation coordinates so that the
origin is an equilibrium of the unforced dynamics:

* the Bergman minimal model, states ``(g, i, x)`` measured from basal, with
  transformed input ``u* = -n I_b + u / V1``;
* the Tolic model in shifted form, states ``(i_p, i_i, g', x1, x2, x3)``
  with ``G = g' + g_op``, transformed input ``u* = c g_op + d - u / b_u`` and
  transformed disturbance ``v* = h g_op + p + d(t)``.

:class:`PlantModel` bundles a derivative with the affine map between the
controller's transformed input and the physical pump rate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields
from typing import Callable, NamedTuple

import numpy as np

__all__ = [
    "BergmanParams",
    "BergmanState",
    "TolicParams",
    "TolicState",
    "MealDisturbance",
    "PlantModel",
    "EquilibriumError",
    "bergman_derivative",
    "tolic_derivative",
    "meal_disturbance",
    "find_equilibrium",
    "bergman_plant",
    "tolic_plant",
]


def _finite(values, what):
    arr = np.asarray(values, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{what} must be finite, got {values!r}")
    return arr


@dataclass(frozen=True)
class BergmanParams:
    """Minimal-model parameters.

    Attributes
    ----------
    p1, p2, p3 : float
        Glucose effectiveness (1/min), remote insulin decay (1/min) and
        remote insulin gain.
    v1 : float
        Insulin distribution volume (L).
    n : float
        Plasma insulin clearance (1/min).
    g_b : float
        Basal glucose (mg/dl). 4.5 mmol/L converted at 18 mg/dl per mmol/L.
    i_b : float
        Basal insulin (mU/L).
    a1, a2 : float
        Glucose concentration range (mg/dl) on which the fuzzy model is exact.
    """

    p1: float = 0.0
    p2: float = 0.025
    p3: float = 1.3e-5
    v1: float = 12.0
    n: float = 0.0926
    g_b: float = 81.0
    i_b: float = 15.0
    a1: float = 60.0
    a2: float = 120.0

    def __post_init__(self):
        for f in fields(self):
            _finite(getattr(self, f.name), f.name)
        if self.p2 <= 0 or self.n <= 0 or self.v1 <= 0:
            raise ValueError("p2, n and v1 must be positive")
        if not 0 < self.a1 < self.a2:
            raise ValueError(f"need 0 < a1 < a2, got a1={self.a1}, a2={self.a2}")


class BergmanState(NamedTuple):
    g: float  # glucose above basal, mg/dl
    i: float  # insulin above basal, mU/L
    x: float  # remote insulin action, 1/min


@dataclass(frozen=True)
class TolicParams:
    """Tolic model coefficients in the polynomial form.

    ``g_range`` and ``x3_range`` are the half-widths of the box on which the
    fuzzy model is exact. ``b_u`` scales the physical pump rate and is not
    tabulated anywhere; it defaults to 1.
    """

    a: float = -0.233
    b: float = 0.0182
    c: float = 4.79e-3
    d: float = -43.9
    e: float = 0.0667
    f: float = -0.0282
    g: float = -9.44e-5
    h: float = 2.64e-3
    k: float = 17.5
    l: float = -0.315
    n: float = 1.48e-3
    p: float = 80.5
    r: float = 0.0833
    g_op: float = 80.0
    b_u: float = 1.0
    g_range: float = 30.0
    x3_range: float = 10.0

    def __post_init__(self):
        for f in fields(self):
            _finite(getattr(self, f.name), f.name)
        if self.r <= 0:
            raise ValueError("r must be positive")
        if self.g_range <= 0 or self.x3_range <= 0:
            raise ValueError("g_range and x3_range must be positive")
        if self.b_u == 0:
            raise ValueError("b_u must be nonzero")


class TolicState(NamedTuple):
    i_p: float  # plasma insulin, mU
    i_i: float  # interstitial insulin, mU
    g_prime: float  # glucose minus g_op, mg/dl
    x1: float
    x2: float
    x3: float


@dataclass(frozen=True)
class MealDisturbance:
    """Exponentially decaying glucose appearance ``alpha * exp(-decay * t)``."""

    alpha: float = 1.0
    decay: float = 0.05

    def __post_init__(self):
        if not (math.isfinite(self.alpha) and self.alpha >= 0):
            raise ValueError(f"alpha must be finite and >= 0, got {self.alpha}")
        if not (math.isfinite(self.decay) and self.decay > 0):
            raise ValueError(f"decay must be finite and > 0, got {self.decay}")

    def __call__(self, t: float) -> float:
        return meal_disturbance(t, self)


def meal_disturbance(t: float, m: MealDisturbance) -> float:
    """Meal disturbance rate (mg/(dl min)) at time ``t`` (min)."""
    if not t >= 0:
        raise ValueError(f"t must be >= 0, got {t}")
    return m.alpha * math.exp(-m.decay * t)


def bergman_derivative(s, u_star: float, v: float, p: BergmanParams) -> BergmanState:
    """Right-hand side of the minimal model in deviation coordinates.

    Parameters
    ----------
    s : BergmanState or sequence of 3 floats
    u_star : float
        Transformed insulin input.
    v : float
        Glucose disturbance rate.
    p : BergmanParams

    Returns
    -------
    BergmanState
        Time derivative of ``s``.
    """
    g, i, x = _finite(s, "state")
    u_star = float(_finite(u_star, "u_star"))
    v = float(_finite(v, "v"))
    return BergmanState(
        -p.p1 * g - x * (g + p.g_b) + v,
        -p.n * i + u_star,
        -p.p2 * x + p.p3 * i,
    )


def tolic_derivative(s, u_star: float, v_star: float, p: TolicParams) -> TolicState:
    """Right-hand side of the shifted Tolic model.

    The cubic ``k x3 + l x3^2 + n x3^3`` is evaluated in the factored form
    ``(k + l x3 + n x3^2) x3`` used by the fuzzy model.
    """
    i_p, i_i, gp, x1, x2, x3 = _finite(s, "state")
    u_star = float(_finite(u_star, "u_star"))
    v_star = float(_finite(v_star, "v_star"))
    return TolicState(
        p.a * i_p + p.b * i_i + p.c * gp + u_star,
        p.e * i_p + p.f * i_i,
        p.g * i_i * gp + p.g * p.g_op * i_i + p.h * gp + (p.k + p.l * x3 + p.n * x3 * x3) * x3 + v_star,
        p.r * (i_p - x1),
        p.r * (x1 - x2),
        p.r * (x2 - x3),
    )


@dataclass(frozen=True)
class PlantModel:
    """A nonlinear plant together with its actuator mapping.

    Attributes
    ----------
    name : str
    params : BergmanParams or TolicParams
    state_names : tuple of str
    derivative : callable
        ``derivative(x, u_star, v_star) -> ndarray`` in transformed units.
    output_index : int
        Index of the regulated glucose deviation in the state vector.
    basal : float
        Glucose concentration (mg/dl) at zero deviation.
    pump_gain, pump_offset : float
        Physical pump rate is ``pump_gain * (u_star + pump_offset)``.
    disturbance_offset : float
        Constant added to the meal disturbance to form ``v*``.
    """

    name: str
    params: object
    state_names: tuple
    derivative: Callable[[np.ndarray, float, float], np.ndarray]
    output_index: int
    basal: float
    pump_gain: float
    pump_offset: float
    disturbance_offset: float = 0.0

    @property
    def n_states(self) -> int:
        return len(self.state_names)

    def to_pump(self, u_star: float) -> float:
        """Physical pump rate that realizes the transformed input ``u_star``."""
        return self.pump_gain * (u_star + self.pump_offset)

    def from_pump(self, u_pump: float) -> float:
        """Transformed input produced by the physical rate ``u_pump``."""
        return u_pump / self.pump_gain - self.pump_offset

    def concentration(self, x) -> np.ndarray:
        """Absolute glucose concentration of one state or a stack of states."""
        return np.asarray(x, dtype=float)[..., self.output_index] + self.basal


def bergman_plant(p: BergmanParams | None = None, *, pump_scale: float = 0.06) -> PlantModel:
    """Bergman plant with ``u_pump = pump_scale * V1 * (u* + n I_b)``.

    With ``pump_scale = 0.06`` the pump rate is expressed in U/h (basal
    infusion 1 U/h with the default parameters); ``pump_scale = 1`` gives
    mU/min.
    """
    p = p or BergmanParams()
    if not pump_scale > 0:
        raise ValueError("pump_scale must be positive")

    def f(x, u_star, v):
        return np.array(bergman_derivative(x, u_star, v, p))

    return PlantModel("bergman", p, BergmanState._fields, f, 0, p.g_b,
                      pump_gain=pump_scale * p.v1, pump_offset=p.n * p.i_b)


def tolic_plant(p: TolicParams | None = None) -> PlantModel:
    """Shifted Tolic plant with ``u_pump = b_u (c g_op + d - u*)``."""
    p = p or TolicParams()

    def f(x, u_star, v_star):
        return np.array(tolic_derivative(x, u_star, v_star, p))

    return PlantModel("tolic", p, TolicState._fields, f, 2, p.g_op,
                      pump_gain=-p.b_u, pump_offset=-(p.c * p.g_op + p.d),
                      disturbance_offset=p.h * p.g_op + p.p)


class EquilibriumError(RuntimeError):
    """Newton iteration did not reach the requested residual."""

    def __init__(self, message, x, residual):
        super().__init__(message)
        self.x = x
        self.residual = residual


def _jacobian(f, x, step):
    n = x.size
    jac = np.empty((n, n))
    for j in range(n):
        h = step * max(1.0, abs(x[j]))
        e = np.zeros(n)
        e[j] = h
        jac[:, j] = (f(x + e) - f(x - e)) / (2 * h)
    return jac


def find_equilibrium(model, u_fixed=0.0, v_fixed=0.0, x_guess=None, tol=1e-9,
                     *, max_iter=100, fd_step=1e-6):
    """Equilibrium of ``model`` for constant inputs by damped Newton iteration.

    Parameters
    ----------
    model : PlantModel or callable
        A plant, or directly a vector field ``f(x) -> ndarray``.
    u_fixed, v_fixed : float
        Constant transformed input and disturbance (ignored for callables).
    x_guess : array_like, optional
        Starting point, zero by default.
    tol : float
        Required infinity-norm of the derivative at the returned point.

    Returns
    -------
    ndarray

    Raises
    ------
    EquilibriumError
        If the residual is still above ``tol`` after ``max_iter`` steps.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    if isinstance(model, PlantModel):
        def f(x):
            return model.derivative(x, u_fixed, v_fixed)
        n = model.n_states
    else:
        f = model
        n = None
    x = np.zeros(n) if x_guess is None else np.array(x_guess, dtype=float)
    fx = np.asarray(f(x), dtype=float)
    res = np.abs(fx).max()
    for _ in range(max_iter):
        if res <= tol:
            return x
        jac = _jacobian(f, x, fd_step)
        try:
            dx = np.linalg.solve(jac, -fx)
        except np.linalg.LinAlgError:
            dx = np.linalg.lstsq(jac, -fx, rcond=None)[0]
        step = 1.0
        while step > 1e-10:
            trial = x + step * dx
            ft = np.asarray(f(trial), dtype=float)
            if np.all(np.isfinite(ft)) and np.abs(ft).max() < res:
                break
            step *= 0.5
        else:
            break
        x, fx, res = trial, ft, np.abs(ft).max()
    if res <= tol:
        return x
    raise EquilibriumError(f"no equilibrium found, residual {res:.3g}", x, res)
