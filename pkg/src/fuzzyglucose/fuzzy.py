"""Takagi-Sugeno fuzzy models built by the sector-nonlinearity approach.

Each scalar nonlinearity ``z(x)`` of the plant is bounded on the validity box
by ``z_min <= z <= z_max`` and written as the convex combination
``w z_min + (1 - w) z_max`` with ``w = (z_max - z) / (z_max - z_min)``. The
vertex systems obtained by substituting the bounds reproduce the nonlinear
dynamics exactly inside the box.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .models import BergmanParams, TolicParams

__all__ = [
    "TsRule",
    "TsModel",
    "PdcController",
    "PUBLISHED_TOLIC_BOUNDS",
    "derive_sector_bounds",
    "bergman_ts_model",
    "tolic_ts_model",
    "memberships",
    "blend_dynamics",
    "pdc_control",
]

# Published sector bounds (M11, M12, M21, M22) for the Tolic model; M11 and M12
# correspond to a +-60 mg/dl glucose range rather than the +-30 used here.
PUBLISHED_TOLIC_BOUNDS = (-0.0057, 0.0057, -3.01, 3.29)


def _mat(a, name):
    out = np.atleast_2d(np.asarray(a, dtype=float))
    if out.ndim != 2 or not np.all(np.isfinite(out)):
        raise ValueError(f"{name} must be a finite matrix")
    return out


@dataclass(frozen=True, eq=False)
class TsRule:
    """Vertex system ``x' = A x + B u + E v``, ``y = C x + D v``."""

    a_mat: np.ndarray
    b_mat: np.ndarray
    e_mat: np.ndarray
    c_mat: np.ndarray
    d_mat: np.ndarray | None = None

    def __post_init__(self):
        a = _mat(self.a_mat, "A")
        n = a.shape[0]
        if a.shape != (n, n):
            raise ValueError(f"A must be square, got {a.shape}")
        b = _mat(self.b_mat, "B").reshape(n, -1)
        e = _mat(self.e_mat, "E").reshape(n, -1)
        c = _mat(self.c_mat, "C").reshape(-1, n)
        d = np.zeros((c.shape[0], e.shape[1])) if self.d_mat is None else _mat(self.d_mat, "D")
        if d.shape != (c.shape[0], e.shape[1]):
            raise ValueError(f"D must be {(c.shape[0], e.shape[1])}, got {d.shape}")
        for name, val in zip(("a_mat", "b_mat", "e_mat", "c_mat", "d_mat"), (a, b, e, c, d)):
            val.setflags(write=False)
            object.__setattr__(self, name, val)

    @property
    def n_states(self) -> int:
        return self.a_mat.shape[0]

    @property
    def n_inputs(self) -> int:
        return self.b_mat.shape[1]


@dataclass(frozen=True, eq=False)
class TsModel:
    """Rule base plus membership evaluator.

    Attributes
    ----------
    rules : tuple of TsRule
    membership : callable
        ``membership(x) -> h`` with ``h >= 0`` and ``sum(h) == 1``.
    premise_bounds : tuple of (float, float)
        Sector bounds of each premise variable.
    name : str
    """

    rules: tuple
    membership: Callable[[np.ndarray], np.ndarray]
    premise_bounds: tuple = ()
    name: str = ""

    def __post_init__(self):
        rules = tuple(self.rules)
        if not rules:
            raise ValueError("a TS model needs at least one rule")
        ref = rules[0]
        for r in rules[1:]:
            for attr in ("a_mat", "b_mat", "e_mat", "c_mat", "d_mat"):
                if getattr(r, attr).shape != getattr(ref, attr).shape:
                    raise ValueError(f"rule dimensions disagree in {attr}")
        object.__setattr__(self, "rules", rules)

    @property
    def n_rules(self) -> int:
        return len(self.rules)

    @property
    def n_states(self) -> int:
        return self.rules[0].n_states

    def describe(self) -> dict:
        """Plain-data dump of the vertex matrices."""
        return {
            "name": self.name,
            "premise_bounds": [list(b) for b in self.premise_bounds],
            "rules": [
                {k: getattr(r, k).tolist() for k in ("a_mat", "b_mat", "e_mat", "c_mat", "d_mat")}
                for r in self.rules
            ],
        }


@dataclass(frozen=True, eq=False)
class PdcController:
    """Parallel distributed compensation: ``u = sum_i h_i K_i x``."""

    gains: tuple = field(default_factory=tuple)

    def __post_init__(self):
        gains = tuple(np.atleast_2d(np.asarray(k, dtype=float)) for k in self.gains)
        if not gains:
            raise ValueError("need at least one gain")
        if any(k.shape != gains[0].shape for k in gains):
            raise ValueError("all gains must share one shape")
        if not all(np.all(np.isfinite(k)) for k in gains):
            raise ValueError("gains must be finite")
        object.__setattr__(self, "gains", gains)


def derive_sector_bounds(kind: str, coeffs: Sequence[float], rng) -> tuple[float, float]:
    """Exact extremes of a premise nonlinearity over an interval.

    Parameters
    ----------
    kind : {"linear", "quadratic"}
        ``"linear"`` is ``coeffs[0] * s``; ``"quadratic"`` is
        ``coeffs[0] * s + coeffs[1] * s**2``.
    coeffs : sequence of float
    rng : (lo, hi)
        Interval of the scheduling variable ``s``; ``lo == hi`` collapses the
        bounds to the single value.

    Returns
    -------
    (z_min, z_max)
    """
    lo, hi = map(float, rng)
    if not (np.isfinite(lo) and np.isfinite(hi)) or lo > hi:
        raise ValueError(f"invalid range {rng!r}")
    if kind == "linear":
        (g,) = coeffs

        def fn(s):
            return g * s
        candidates = [lo, hi]
    elif kind == "quadratic":
        l, n = coeffs

        def fn(s):
            return l * s + n * s * s
        candidates = [lo, hi]
        if n != 0:
            vertex = -l / (2 * n)
            if lo < vertex < hi:
                candidates.append(vertex)
    else:
        raise ValueError(f"unknown nonlinearity kind {kind!r}")
    vals = [fn(s) for s in candidates]
    return min(vals), max(vals)


def _weight(z, lo, hi):
    """Weight of the lower sector bound, with the premise clamped to [lo, hi]."""
    if hi == lo:
        return 1.0
    return (hi - min(max(z, lo), hi)) / (hi - lo)


def bergman_ts_model(p: BergmanParams | None = None) -> TsModel:
    """Two-rule model; the premise is the glucose concentration ``g + g_b``."""
    p = p or BergmanParams()
    b = np.array([[0.0], [1.0], [0.0]])
    e = np.array([[1.0], [0.0], [0.0]])
    c = np.array([[1.0, 0.0, 0.0]])
    rules = tuple(
        TsRule(np.array([[-p.p1, 0.0, -a], [0.0, -p.n, 0.0], [0.0, p.p3, -p.p2]]), b, e, c)
        for a in (p.a1, p.a2)
    )

    def membership(x):
        h1 = _weight(float(x[0]) + p.g_b, p.a1, p.a2)
        return np.array([h1, 1.0 - h1])

    return TsModel(rules, membership, ((p.a1, p.a2),), "bergman")


def tolic_ts_model(p: TolicParams | None = None, bounds_override=None) -> TsModel:
    """Four-rule model with premises ``z1 = g g'`` and ``z2 = l x3 + n x3^2``.

    Rules are ordered (M11, M21), (M11, M22), (M12, M21), (M12, M22).
    ``bounds_override`` replaces the derived (M11, M12, M21, M22), e.g. with
    :data:`PUBLISHED_TOLIC_BOUNDS`.
    """
    p = p or TolicParams()
    if bounds_override is None:
        m11, m12 = derive_sector_bounds("linear", (p.g,), (-p.g_range, p.g_range))
        m21, m22 = derive_sector_bounds("quadratic", (p.l, p.n), (-p.x3_range, p.x3_range))
    else:
        m11, m12, m21, m22 = map(float, bounds_override)
        if not (m11 < m12 and m21 < m22):
            raise ValueError(f"override needs M11 < M12 and M21 < M22, got {bounds_override!r}")
    r = p.r
    b = np.eye(6)[:, [0]]
    e = np.eye(6)[:, [2]]
    c = np.eye(6)[[2], :]
    rules = []
    for z1 in (m11, m12):
        for z2 in (m21, m22):
            a = np.array([
                [p.a, p.b, p.c, 0, 0, 0],
                [p.e, p.f, 0, 0, 0, 0],
                [0, z1 + p.g * p.g_op, p.h, 0, 0, p.k + z2],
                [r, 0, 0, -r, 0, 0],
                [0, 0, 0, r, -r, 0],
                [0, 0, 0, 0, r, -r],
            ], dtype=float)
            rules.append(TsRule(a, b, e, c))

    def membership(x):
        gp, x3 = float(x[2]), float(x[5])
        w1 = _weight(p.g * gp, m11, m12)
        w2 = _weight(p.l * x3 + p.n * x3 * x3, m21, m22)
        return np.array([w1 * w2, w1 * (1 - w2), (1 - w1) * w2, (1 - w1) * (1 - w2)])

    return TsModel(tuple(rules), membership, ((m11, m12), (m21, m22)), "tolic")


def memberships(model: TsModel, s) -> np.ndarray:
    """Rule weights at state ``s``."""
    return np.asarray(model.membership(np.asarray(s, dtype=float)), dtype=float)


def blend_dynamics(model: TsModel, s, u, v) -> np.ndarray:
    """Defuzzified vector field ``sum_i h_i (A_i x + B_i u + E_i v)``."""
    x = np.asarray(s, dtype=float).ravel()
    if x.size != model.n_states:
        raise ValueError(f"state has {x.size} entries, model has {model.n_states}")
    u = np.atleast_1d(np.asarray(u, dtype=float)).ravel()
    v = np.atleast_1d(np.asarray(v, dtype=float)).ravel()
    r0 = model.rules[0]
    if u.size != r0.b_mat.shape[1] or v.size != r0.e_mat.shape[1]:
        raise ValueError("input or disturbance dimension mismatch")
    h = memberships(model, x)
    return sum(hi * (r.a_mat @ x + r.b_mat @ u + r.e_mat @ v) for hi, r in zip(h, model.rules))


def pdc_control(ctrl: PdcController, h, s) -> np.ndarray:
    """PDC law ``sum_i h_i K_i x``."""
    h = np.asarray(h, dtype=float).ravel()
    if h.size != len(ctrl.gains):
        raise ValueError(f"{h.size} weights for {len(ctrl.gains)} gains")
    x = np.asarray(s, dtype=float).ravel()
    return sum(hi * (k @ x) for hi, k in zip(h, ctrl.gains))
