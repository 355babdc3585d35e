"""Independent analysis oracles.

* :func:`hinf_norm` computes the H-infinity norm of a stable LTI system by
  bisection on the imaginary-axis eigenvalues of its Hamiltonian matrix.
* :func:`lyapunov_trajectory_check` evaluates the membership-weighted
  Lyapunov function ``V = sum_j h_j x' P_j x`` along a simulated trace.
* :func:`empirical_hinf` measures the energy gain ``||y||_2 / ||v||_2`` of a
  trace.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .fuzzy import TsModel, TsRule

__all__ = [
    "VertexSystem",
    "closed_loop_vertex",
    "spectral_abscissa",
    "hinf_norm",
    "frequency_sweep_norm",
    "lyapunov_values",
    "lyapunov_trajectory_check",
    "empirical_hinf",
]


@dataclass(frozen=True, eq=False)
class VertexSystem:
    """``x' = A x + B v``, ``y = C x + D v`` (``B`` is the disturbance channel)."""

    a_mat: np.ndarray
    b_mat: np.ndarray
    c_mat: np.ndarray
    d_mat: np.ndarray | None = None

    def __post_init__(self):
        a = np.atleast_2d(np.asarray(self.a_mat, dtype=float))
        n = a.shape[0]
        if a.shape != (n, n):
            raise ValueError("A must be square")
        b = np.asarray(self.b_mat, dtype=float).reshape(n, -1)
        c = np.asarray(self.c_mat, dtype=float).reshape(-1, n)
        if self.d_mat is None:
            d = np.zeros((c.shape[0], b.shape[1]))
        else:
            d = np.atleast_2d(np.asarray(self.d_mat, dtype=float))
        if d.shape != (c.shape[0], b.shape[1]):
            raise ValueError(f"D must be {(c.shape[0], b.shape[1])}, got {d.shape}")
        for name, val in zip(("a_mat", "b_mat", "c_mat", "d_mat"), (a, b, c, d)):
            object.__setattr__(self, name, val)

    def transfer(self, omega: float) -> np.ndarray:
        n = self.a_mat.shape[0]
        return self.c_mat @ np.linalg.solve(1j * omega * np.eye(n) - self.a_mat, self.b_mat) + self.d_mat


def closed_loop_vertex(rule: TsRule, gain) -> VertexSystem:
    """Vertex ``(A + B K, E, C, D)`` of the PDC closed loop."""
    return VertexSystem(rule.a_mat + rule.b_mat @ np.atleast_2d(gain), rule.e_mat,
                        rule.c_mat, rule.d_mat)


def spectral_abscissa(a_mat) -> float:
    """Largest real part of the eigenvalues of ``a_mat``."""
    return float(np.max(np.linalg.eigvals(np.atleast_2d(a_mat)).real))


def _hamiltonian(sys: VertexSystem, gamma: float) -> np.ndarray:
    """Hamiltonian whose imaginary-axis eigenvalues mark ``sigma_max = gamma``.

    With ``R = gamma^2 I - D'D > 0``::

        H = [[A + B R^-1 D'C,        B R^-1 B'            ],
             [-C'(I + D R^-1 D')C,   -(A + B R^-1 D'C)'   ]]

    which reduces to ``[[A, BB'/gamma], [-C'C/gamma, -A']]`` up to a
    similarity when ``D = 0``.
    """
    a, b, c, d = sys.a_mat, sys.b_mat, sys.c_mat, sys.d_mat
    r = gamma * gamma * np.eye(d.shape[1]) - d.T @ d
    rinv = np.linalg.inv(r)
    af = a + b @ rinv @ d.T @ c
    top = np.hstack([af, b @ rinv @ b.T])
    bottom = np.hstack([-c.T @ (np.eye(d.shape[0]) + d @ rinv @ d.T) @ c, -af.T])
    return np.vstack([top, bottom])


def _has_imaginary_eig(h: np.ndarray, tol: float) -> bool:
    eig = np.linalg.eigvals(h)
    scale = max(1.0, float(np.max(np.abs(eig))))
    return bool(np.any(np.abs(eig.real) <= tol * scale))


def hinf_norm(sys: VertexSystem, tol: float = 1e-8) -> float:
    """H-infinity norm of a stable system by Hamiltonian bisection.

    ``gamma`` is an upper bound iff ``gamma > sigma_max(D)`` and the
    Hamiltonian has no eigenvalue on the imaginary axis.

    Raises
    ------
    ValueError
        If ``A`` is not Hurwitz.
    """
    if spectral_abscissa(sys.a_mat) >= 0:
        raise ValueError("H-infinity norm is infinite: A is not Hurwitz")
    if not tol > 0:
        raise ValueError("tol must be positive")
    d_norm = float(np.linalg.norm(sys.d_mat, 2)) if sys.d_mat.size else 0.0
    # lower bound from a few frequencies, including DC and the pole moduli
    poles = np.linalg.eigvals(sys.a_mat)
    probes = np.concatenate([[0.0], np.abs(poles), np.abs(poles.imag)])
    lo = max([d_norm] + [float(np.linalg.norm(sys.transfer(w), 2)) for w in probes])
    if lo == 0.0:
        return 0.0
    hi = 2.0 * lo
    eig_tol = 1e-9

    def is_upper(gamma):
        return not _has_imaginary_eig(_hamiltonian(sys, gamma), eig_tol)

    while not is_upper(hi):
        lo, hi = hi, 2.0 * hi
    while hi - lo > tol * max(1.0, lo):
        mid = 0.5 * (lo + hi)
        if mid <= d_norm or not is_upper(mid):
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def frequency_sweep_norm(sys: VertexSystem, omegas) -> float:
    """Brute-force ``max_w sigma_max(G(jw))`` over a frequency grid."""
    return max(float(np.linalg.norm(sys.transfer(w), 2)) for w in omegas)


def lyapunov_values(states, memberships, p_mats) -> np.ndarray:
    """``V_k = sum_j h_kj x_k' P_j x_k`` for stacked states and memberships."""
    x = np.atleast_2d(np.asarray(states, dtype=float))
    h = np.atleast_2d(np.asarray(memberships, dtype=float))
    quad = np.stack([np.einsum("ki,ij,kj->k", x, p, x) for p in p_mats], axis=1)
    return np.sum(h * quad, axis=1)


def lyapunov_trajectory_check(trace, result, model: TsModel | None = None) -> float:
    """Fraction of consecutive samples on which ``V`` strictly decreases.

    Parameters
    ----------
    trace : SimTrace
        A disturbance-free run.
    result : SynthesisResult or sequence of ndarray
        Supplies ``P_j = X_j^{-1}``; a plain list is taken as the ``P_j``.
    model : TsModel, optional
        Used to recompute memberships when the trace carries none.

    Samples where both values are already at zero count as decreasing, so a
    trace resting at the origin scores 1.
    """
    states = np.asarray(trace.states, dtype=float)
    if states.shape[0] < 2:
        raise ValueError("need at least two samples")
    p_mats = result.p_matrices() if hasattr(result, "p_matrices") else [np.atleast_2d(p) for p in result]
    h = getattr(trace, "memberships", None)
    if h is None or len(h) == 0:
        if model is None:
            h = np.ones((states.shape[0], len(p_mats))) / len(p_mats)
        else:
            h = np.array([model.membership(x) for x in states])
    v = lyapunov_values(states, h, p_mats)
    floor = 1e-300
    dec = (v[1:] < v[:-1]) | ((v[1:] <= floor) & (v[:-1] <= floor))
    return float(np.mean(dec))


def empirical_hinf(trace) -> float:
    """Discrete energy gain ``sqrt(sum y^2 dt) / sqrt(sum v^2 dt)``.

    The trace needs attributes ``t``, ``y`` and ``v``; a uniform sample spacing
    is assumed, so ``dt`` cancels.
    """
    y = np.asarray(trace.y, dtype=float)
    v = np.asarray(trace.v, dtype=float)
    if y.shape != v.shape:
        raise ValueError("y and v must have equal length")
    ev = float(np.sum(v * v))
    if not ev > 0:
        raise ValueError("disturbance energy is zero")
    return math.sqrt(float(np.sum(y * y)) / ev)
