"""Robust H-infinity PDC synthesis under an input-norm bound.

For every rule ``(A_i, B_i, E_i, C_i, D_i)`` an independent SDP is solved::

    minimize   gamma_i
    subject to [[He(A X + B M), E, (C X)'], [E', -gamma I, D'], [C X, D, -gamma I]] <= -eps I
               X >= eps I
               [[1, x0'], [x0, X]] >= 0
               [[X, M'], [M, mu^2 I]] >= 0

and the gain is recovered as ``K_i = M_i X_i^{-1}``. The LMIs are stated in
diagonally rescaled coordinates (a congruence), which leaves feasibility
untouched but keeps the strictness margin ``eps`` meaningful for states of
very different magnitude.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import sdp
from .fuzzy import PdcController, TsModel, TsRule
from .sdp import LmiProblem, bmat, sym_eig

__all__ = [
    "SynthesisOptions",
    "RuleSolution",
    "SynthesisResult",
    "SynthesisError",
    "RuleCheck",
    "VerificationReport",
    "build_hinf_lmi",
    "build_initial_condition_lmi",
    "build_input_bound_lmi",
    "congruence",
    "balance_scaling",
    "synthesize",
    "verify_solution",
]

FAMILIES = ("hinf", "initial-condition", "input-bound")


@dataclass(frozen=True)
class SynthesisOptions:
    """Synthesis settings.

    Attributes
    ----------
    mu : float
        Bound on the 2-norm of the control input.
    x0 : tuple of float or None
        Initial state for the initial-condition LMI; ``None`` means zero.
    eps_feas : float
        Margin realizing strict inequalities.
    gamma_max : float
        Upper bound imposed on every gamma_i.
    per_rule_independent : bool
        Only independent per-rule problems are implemented.
    scaling : {"balance", "none"}
        State scaling used to condition the LMIs.
    tol : float
        Solver accuracy on gamma.
    """

    mu: float = 1.0
    x0: tuple | None = None
    eps_feas: float = 1e-7
    gamma_max: float = 1e6
    per_rule_independent: bool = True
    scaling: str = "balance"
    tol: float = 1e-6

    def __post_init__(self):
        if not self.mu > 0:
            raise ValueError("mu must be positive")
        if not self.eps_feas > 0:
            raise ValueError("eps_feas must be positive")
        if not self.gamma_max > 0:
            raise ValueError("gamma_max must be positive")
        if not self.per_rule_independent:
            raise ValueError("only per-rule independent synthesis is supported")
        if self.scaling not in ("balance", "none"):
            raise ValueError(f"unknown scaling {self.scaling!r}")
        if self.x0 is not None:
            object.__setattr__(self, "x0", tuple(float(v) for v in self.x0))

    def x0_vector(self, n: int) -> np.ndarray:
        if self.x0 is None:
            return np.zeros(n)
        if len(self.x0) != n:
            raise ValueError(f"x0 has {len(self.x0)} entries, model has {n} states")
        return np.array(self.x0)


@dataclass
class RuleSolution:
    rule: int
    x_block: np.ndarray
    m_block: np.ndarray
    gain: np.ndarray
    gamma: float
    status: str
    iterations: int
    residuals: dict = field(default_factory=dict)


@dataclass
class SynthesisResult:
    """Per-rule synthesis output plus the options that produced it."""

    rules: list
    options: SynthesisOptions
    model: str = ""

    @property
    def gammas(self) -> list[float]:
        return [r.gamma for r in self.rules]

    @property
    def gains(self) -> list[np.ndarray]:
        return [r.gain for r in self.rules]

    def controller(self) -> PdcController:
        return PdcController(tuple(self.gains))

    def p_matrices(self) -> list[np.ndarray]:
        return [np.linalg.inv(r.x_block) for r in self.rules]

    def to_dict(self) -> dict:
        return {
            "model": self.model,
            "options": asdict(self.options),
            "rules": [
                {
                    "rule": r.rule,
                    "X": r.x_block.tolist(),
                    "M": r.m_block.tolist(),
                    "K": r.gain.tolist(),
                    "gamma": r.gamma,
                    "status": r.status,
                    "iterations": r.iterations,
                    "residuals": r.residuals,
                }
                for r in self.rules
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, data: dict) -> SynthesisResult:
        opts = SynthesisOptions(**data.get("options", {}))
        rules = [
            RuleSolution(
                rule=int(r["rule"]),
                x_block=np.array(r["X"], dtype=float),
                m_block=np.array(r["M"], dtype=float),
                gain=np.array(r["K"], dtype=float),
                gamma=float(r["gamma"]),
                status=r.get("status", ""),
                iterations=int(r.get("iterations", 0)),
                residuals=dict(r.get("residuals", {})),
            )
            for r in data["rules"]
        ]
        return cls(rules, opts, data.get("model", ""))

    @classmethod
    def from_json(cls, text: str) -> SynthesisResult:
        return cls.from_dict(json.loads(text))


class SynthesisError(RuntimeError):
    """A rule's LMIs are infeasible (or the solver gave up)."""

    def __init__(self, rule: int, family: str, status: str, margin: float):
        super().__init__(f"rule {rule}: synthesis {status} "
                         f"(binding constraint family: {family}, phase-1 margin {margin:.3g})")
        self.rule = rule
        self.family = family
        self.status = status
        self.margin = margin


# ---------------------------------------------------------------------------
# LMI blocks. Each works on plain arrays (returns an ndarray) or on affine
# expressions from an LmiProblem (returns an expression).

def build_hinf_lmi(rule: TsRule, x, m, gamma):
    """Bounded-real block, required to be negative definite."""
    a, b, e, c, d = rule.a_mat, rule.b_mat, rule.e_mat, rule.c_mat, rule.d_mat
    x = x if isinstance(x, sdp.Affine) else np.atleast_2d(np.asarray(x, dtype=float))
    m = m if isinstance(m, sdp.Affine) else np.atleast_2d(np.asarray(m, dtype=float))
    if x.shape != a.shape or m.shape != (b.shape[1], a.shape[0]):
        raise ValueError("X or M dimension does not match the rule")
    ax = a @ x + b @ m
    cx = c @ x
    nq, np_ = e.shape[1], c.shape[0]
    g_q = sdp.scalar_times(gamma, np.eye(nq))
    g_p = sdp.scalar_times(gamma, np.eye(np_))
    if nq == 0 and np_ == 0:
        return ax + ax.T
    if nq == 0:
        return bmat([[ax + ax.T, cx.T], [cx, -g_p]])
    if np_ == 0:
        return bmat([[ax + ax.T, e], [e.T, -g_q]])
    return bmat([[ax + ax.T, e, cx.T], [e.T, -g_q, d.T], [cx, d, -g_p]])


def build_initial_condition_lmi(x0, x):
    """``[[1, x0'], [x0, X]]``, psd iff ``x0' X^{-1} x0 <= 1`` (for X > 0)."""
    x0 = np.asarray(x0, dtype=float).reshape(-1, 1)
    if x.shape != (x0.size, x0.size):
        raise ValueError("x0 dimension does not match X")
    return bmat([[np.ones((1, 1)), x0.T], [x0, x]])


def build_input_bound_lmi(x, m, mu):
    """``[[X, M'], [M, mu^2 I]]``, psd iff ``M' M / mu^2 <= X``."""
    if not mu > 0:
        raise ValueError("mu must be positive")
    n_in = m.shape[0]
    return bmat([[x, m.T], [m, (mu * mu) * np.eye(n_in)]])


def congruence(t_mat, a_mat) -> np.ndarray:
    """``T' A T`` for nonsingular ``T``; preserves the sign of definiteness."""
    t = np.atleast_2d(np.asarray(t_mat, dtype=float))
    a = np.atleast_2d(np.asarray(a_mat, dtype=float))
    if t.shape[0] != t.shape[1] or a.shape != (t.shape[0], t.shape[0]):
        raise ValueError("T must be square and match A")
    if not np.allclose(a, a.T, rtol=1e-12, atol=0.0):
        raise ValueError("A must be symmetric")
    sv = np.linalg.svd(t, compute_uv=False)
    if sv[-1] <= 1e-14 * max(sv[0], 1.0):
        raise ValueError("T is singular")
    out = t.T @ a @ t
    return 0.5 * (out + out.T)


def balance_scaling(a_mat, sweeps: int = 50) -> np.ndarray:
    """Diagonal ``t`` making ``diag(t)^-1 A diag(t)`` row/column balanced.

    Osborne's iteration in the 1-norm, normalized to unit geometric mean.
    """
    a = np.abs(np.asarray(a_mat, dtype=float))
    np.fill_diagonal(a, 0.0)
    t = np.ones(a.shape[0])
    for _ in range(sweeps):
        changed = False
        for i in range(a.shape[0]):
            col = np.sum(a[:, i] * t[i] / t)
            row = np.sum(a[i, :] * t / t[i])
            if col > 0 and row > 0:
                f = math.sqrt(row / col)
                if abs(f - 1) > 1e-3:
                    t[i] *= f
                    changed = True
        if not changed:
            break
    return t / math.exp(np.mean(np.log(t)))


# ---------------------------------------------------------------------------
# synthesis

def _rule_problem(rule: TsRule, opts: SynthesisOptions, t: np.ndarray, families=FAMILIES):
    """SDP in scaled coordinates  X = T Xs T,  M = mu Ms T."""
    n, m_in = rule.n_states, rule.n_inputs
    tinv = 1.0 / t
    scaled = TsRule(tinv[:, None] * rule.a_mat * t[None, :],
                    opts.mu * tinv[:, None] * rule.b_mat,
                    tinv[:, None] * rule.e_mat,
                    rule.c_mat * t[None, :],
                    rule.d_mat)
    x0s = tinv * opts.x0_vector(n)
    pr = LmiProblem()
    xs = pr.symmetric("X", n)
    ms = pr.matrix("M", m_in, n)
    gamma = pr.scalar("gamma")
    eps = opts.eps_feas
    if "hinf" in families:
        blk = build_hinf_lmi(scaled, xs, ms, gamma)
        pr.add_nsd(blk + eps * np.eye(blk.shape[0]), "hinf", "hinf")
    pr.add_psd(xs - eps * np.eye(n), "x-positive", "hinf")
    if "initial-condition" in families and np.any(x0s):
        pr.add_psd(build_initial_condition_lmi(x0s, xs), "initial-condition", "initial-condition")
    if "input-bound" in families:
        pr.add_psd(build_input_bound_lmi(xs, ms, 1.0), "input-bound", "input-bound")
    pr.add_psd(opts.gamma_max - gamma, "gamma-cap", "gamma-cap")
    pr.minimize(gamma)
    return pr


def _binding_family(rule, opts, t):
    """Constraint families whose individual removal restores feasibility."""
    found = []
    for fam in FAMILIES:
        rest = tuple(f for f in FAMILIES if f != fam)
        if sdp.solve(_rule_problem(rule, opts, t, rest), opts.tol).ok:
            found.append(fam)
    return " + ".join(found) if found else "jointly infeasible"


def synthesize(model: TsModel, opts: SynthesisOptions) -> SynthesisResult:
    """Minimize gamma_i for every rule of ``model`` independently.

    Raises
    ------
    SynthesisError
        For the first rule whose problem is infeasible or unsolved, naming the
        constraint family that blocks feasibility.
    """
    solutions = []
    for i, rule in enumerate(model.rules, start=1):
        if opts.scaling == "balance":
            t = balance_scaling(rule.a_mat)
        else:
            t = np.ones(rule.n_states)
        sol = sdp.solve(_rule_problem(rule, opts, t), opts.tol)
        if not sol.ok:
            family = _binding_family(rule, opts, t) if sol.status == sdp.INFEASIBLE else "unknown"
            raise SynthesisError(i, family, sol.status, sol.phase1_margin)
        x_block = t[:, None] * sol["X"] * t[None, :]
        x_block = 0.5 * (x_block + x_block.T)
        m_block = opts.mu * sol["M"] * t[None, :]
        gain = np.linalg.solve(x_block.T, m_block.T).T
        solutions.append(RuleSolution(
            rule=i,
            x_block=x_block,
            m_block=m_block,
            gain=gain,
            gamma=float(sol["gamma"][0, 0]),
            status=sol.status,
            iterations=sol.iterations,
            residuals={"gap": float(sol.gap), "margin": float(sol.margin),
                       "phase1_margin": float(sol.phase1_margin),
                       **{k: float(v) for k, v in sol.report.as_dict().items()}},
        ))
    return SynthesisResult(solutions, opts, model.name)


# ---------------------------------------------------------------------------
# a-posteriori verification

@dataclass
class RuleCheck:
    rule: int
    bounded_real_max_eig: float  # bounded-real block at P = X^-1; must be < 0
    spectral_abscissa: float  # of A + B K; must be < 0
    input_bound_residual: float  # max eig of M'M/mu^2 - X; must be <= 0
    initial_condition_margin: float  # min eig of [[1, x0'], [x0, X]]; must be >= 0
    x_min_eig: float
    gain_identity_error: float  # ||M - K X|| / ||M||

    def passed(self, tol: float = 1e-8) -> bool:
        return (self.bounded_real_max_eig < 0 and self.spectral_abscissa < 0
                and self.input_bound_residual <= tol and self.initial_condition_margin >= -tol
                and self.x_min_eig > 0)


@dataclass
class VerificationReport:
    checks: list

    @property
    def passed(self) -> bool:
        return all(c.passed() for c in self.checks)

    def to_dict(self) -> dict:
        return {"passed": self.passed,
                "rules": [{**asdict(c), "passed": c.passed()} for c in self.checks]}


def bounded_real_block(rule: TsRule, gain, p_mat, gamma) -> np.ndarray:
    """``[[Acl' P + P Acl, P E, C'], [E' P, -gamma I, D'], [C, D, -gamma I]]``."""
    acl = rule.a_mat + rule.b_mat @ np.atleast_2d(gain)
    e, c, d = rule.e_mat, rule.c_mat, rule.d_mat
    lyap = acl.T @ p_mat + p_mat @ acl
    pe = p_mat @ e
    blk = np.block([
        [lyap, pe, c.T],
        [pe.T, -gamma * np.eye(e.shape[1]), d.T],
        [c, d, -gamma * np.eye(c.shape[0])],
    ])
    return 0.5 * (blk + blk.T)


def verify_solution(result: SynthesisResult, model: TsModel,
                    opts: SynthesisOptions | None = None) -> VerificationReport:
    """Re-check every rule of ``result`` independently of the solver."""
    opts = opts or result.options
    checks = []
    for sol, rule in zip(result.rules, model.rules):
        x_block = np.atleast_2d(sol.x_block)
        m_block = np.atleast_2d(sol.m_block)
        gain = np.atleast_2d(sol.gain)
        n = x_block.shape[0]
        x_eig = sym_eig(0.5 * (x_block + x_block.T))[0]
        p_mat = np.linalg.inv(x_block)
        p_mat = 0.5 * (p_mat + p_mat.T)
        br = sym_eig(bounded_real_block(rule, gain, p_mat, sol.gamma))[0][-1]
        acl = rule.a_mat + rule.b_mat @ gain
        abscissa = float(np.max(np.linalg.eigvals(acl).real))
        resid = m_block.T @ m_block / opts.mu ** 2 - x_block
        inp = sym_eig(0.5 * (resid + resid.T))[0][-1]
        ic = build_initial_condition_lmi(opts.x0_vector(n), x_block)
        ic_margin = sym_eig(0.5 * (ic + ic.T))[0][0]
        gid = np.linalg.norm(m_block - gain @ x_block) / max(np.linalg.norm(m_block), 1e-300)
        checks.append(RuleCheck(sol.rule, float(br), abscissa, float(inp), float(ic_margin),
                                float(x_eig[0]), float(gid)))
    return VerificationReport(checks)
