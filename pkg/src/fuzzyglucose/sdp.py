"""Small dense semidefinite programming toolkit.

Decision variables are symmetric matrices, rectangular matrices or scalars.
Constraints are affine symmetric matrix expressions required to be negative
or positive semidefinite, and the objective is a linear functional. Problems
are solved in two phases. Phase 1 maximizes the common eigenvalue margin of
all constraints, which either yields a strictly feasible point or shows there
is none. Phase 2 minimizes the objective with an infeasible-start primal-dual
interior-point method, falling back to bisection on the objective when the
duality gap cannot be closed numerically.

Intended for the handful of unknowns that appear in state-feedback synthesis
(at most a few hundred scalars, blocks up to roughly 50x50).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Affine",
    "Variable",
    "Constraint",
    "LmiProblem",
    "SdpSolution",
    "MarginReport",
    "sym_eig",
    "bmat",
    "scalar_times",
    "solve",
    "check_assignment",
    "OPTIMAL",
    "FEASIBLE",
    "INFEASIBLE",
    "MAX_ITERATIONS",
]

OPTIMAL = "optimal"
FEASIBLE = "feasible"
INFEASIBLE = "infeasible"
MAX_ITERATIONS = "max-iterations"


# ---------------------------------------------------------------------------
# symmetric eigensolver

def sym_eig(a_mat, *, tol=1e-15, max_sweeps=60):
    """Eigen-decomposition of a real symmetric matrix by cyclic Jacobi rotations.

    Parameters
    ----------
    a_mat : array_like, shape (n, n)
        Symmetric matrix. Asymmetry above 1e-12 relative is rejected.
    tol : float
        Sweeps stop once the off-diagonal Frobenius norm is below
        ``tol * ||A||_F``.

    Returns
    -------
    eigenvalues : ndarray, shape (n,)
        Ascending.
    eigenvectors : ndarray, shape (n, n)
        Orthonormal columns, ``A @ V = V @ diag(eigenvalues)``.
    """
    a = np.array(a_mat, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"sym_eig needs a square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("sym_eig input contains non-finite entries")
    n = a.shape[0]
    scale = np.linalg.norm(a)
    if np.linalg.norm(a - a.T) > 1e-12 * max(scale, np.finfo(float).tiny):
        raise ValueError("sym_eig input is not symmetric")
    a = 0.5 * (a + a.T)
    v = np.eye(n)
    if n <= 1 or scale == 0.0:
        return np.diag(a).copy(), v

    for _ in range(max_sweeps):
        off = math.sqrt(2.0) * np.linalg.norm(np.triu(a, 1))
        if off <= tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                # rotation angle annihilating a[p, q]
                diff = a[q, q] - a[p, p]
                if abs(apq) < 1e-150 * abs(diff):
                    t = apq / diff  # tiny-angle limit, avoids theta**2 overflow
                else:
                    theta = diff / (2.0 * apq)
                    t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                col_p = a[:, p].copy()
                col_q = a[:, q]
                a[:, p] = c * col_p - s * col_q
                a[:, q] = s * col_p + c * col_q
                row_p = a[p, :].copy()
                row_q = a[q, :]
                a[p, :] = c * row_p - s * row_q
                a[q, :] = s * row_p + c * row_q
                a[p, q] = a[q, p] = 0.0
                vp = v[:, p].copy()
                vq = v[:, q]
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq

    w = np.diag(a).copy()
    order = np.argsort(w, kind="stable")
    return w[order], v[:, order]


def _lambda_min(a):
    return sym_eig(a)[0][0]


def _lambda_max(a):
    return sym_eig(a)[0][-1]


# ---------------------------------------------------------------------------
# affine matrix expressions

@dataclass(eq=False)
class Variable:
    """A matrix-valued decision variable.

    ``kind`` is one of ``"symmetric"``, ``"matrix"`` or ``"scalar"``.
    Symmetric variables are parameterized by their upper triangle.
    """

    name: str
    kind: str
    shape: tuple[int, int]

    @property
    def size(self) -> int:
        p, q = self.shape
        if self.kind == "symmetric":
            return p * (p + 1) // 2
        return p * q

    def basis(self) -> np.ndarray:
        p, q = self.shape
        out = np.zeros((self.size, p, q))
        if self.kind == "symmetric":
            k = 0
            for i in range(p):
                for j in range(i, p):
                    out[k, i, j] = out[k, j, i] = 1.0
                    k += 1
        else:
            for k in range(p * q):
                out[k, k // q, k % q] = 1.0
        return out

    def unpack(self, z: np.ndarray) -> np.ndarray:
        return np.tensordot(np.asarray(z, dtype=float), self.basis(), axes=1)

    def pack(self, value) -> np.ndarray:
        value = np.atleast_2d(np.asarray(value, dtype=float))
        if value.shape != self.shape:
            raise ValueError(f"{self.name}: expected shape {self.shape}, got {value.shape}")
        if self.kind == "symmetric":
            return value[np.triu_indices(self.shape[0])]
        return value.ravel()

    def __repr__(self):
        return f"Variable({self.name!r}, {self.kind}, {self.shape})"


class Affine:
    """Affine matrix expression ``const + sum_v L_v(v)`` in the decision variables.

    Supports ``+``, ``-``, multiplication by real scalars, ``@`` with constant
    arrays on either side and transposition. Products of two expressions are
    rejected since they are not affine.
    """

    __array_ufunc__ = None

    def __init__(self, const, terms=None):
        self.const = np.array(np.atleast_2d(np.asarray(const, dtype=float)))
        if self.const.ndim != 2:
            raise ValueError("affine expressions are matrix valued")
        self.terms: dict[Variable, np.ndarray] = dict(terms or {})

    @classmethod
    def of(cls, var: Variable) -> Affine:
        return cls(np.zeros(var.shape), {var: var.basis()})

    @property
    def shape(self):
        return self.const.shape

    @property
    def T(self) -> Affine:
        return Affine(self.const.T, {v: np.swapaxes(t, 1, 2) for v, t in self.terms.items()})

    def is_constant(self) -> bool:
        return not self.terms

    @staticmethod
    def _lift(other) -> Affine:
        if isinstance(other, Affine):
            return other
        return Affine(other)

    def __add__(self, other):
        other = self._lift(other)
        if other.shape != self.shape:
            raise ValueError(f"shape mismatch in affine sum: {self.shape} vs {other.shape}")
        terms = {v: t.copy() for v, t in self.terms.items()}
        for v, t in other.terms.items():
            terms[v] = terms[v] + t if v in terms else t.copy()
        return Affine(self.const + other.const, terms)

    __radd__ = __add__

    def __neg__(self):
        return Affine(-self.const, {v: -t for v, t in self.terms.items()})

    def __sub__(self, other):
        return self + (-self._lift(other))

    def __rsub__(self, other):
        return self._lift(other) + (-self)

    def __mul__(self, other):
        if isinstance(other, Affine):
            raise TypeError("product of two affine expressions is not affine")
        if np.ndim(other) == 0:
            s = float(other)
            return Affine(self.const * s, {v: t * s for v, t in self.terms.items()})
        return scalar_times(self, other)

    __rmul__ = __mul__

    def __matmul__(self, other):
        if isinstance(other, Affine):
            raise TypeError("product of two affine expressions is not affine")
        other = np.atleast_2d(np.asarray(other, dtype=float))
        return Affine(self.const @ other, {v: t @ other for v, t in self.terms.items()})

    def __rmatmul__(self, other):
        other = np.atleast_2d(np.asarray(other, dtype=float))
        return Affine(other @ self.const, {v: other @ t for v, t in self.terms.items()})

    def value(self, assignment) -> np.ndarray:
        """Evaluate at ``assignment`` (mapping Variable or name to value)."""
        out = self.const.copy()
        for v, t in self.terms.items():
            val = assignment[v] if v in assignment else assignment[v.name]
            out += np.tensordot(v.pack(val), t, axes=1)
        return out

    def __repr__(self):
        names = ", ".join(v.name for v in self.terms)
        return f"Affine(shape={self.shape}, vars=[{names}])"


def scalar_times(s, mat):
    """``s * mat`` for a 1x1 expression (or number) ``s`` and constant matrix."""
    mat = np.atleast_2d(np.asarray(mat, dtype=float))
    if not isinstance(s, Affine):
        return float(s) * mat
    if s.shape != (1, 1):
        raise ValueError("scalar_times needs a 1x1 expression")
    return Affine(s.const[0, 0] * mat, {v: t[:, 0, 0][:, None, None] * mat for v, t in s.terms.items()})


def bmat(rows):
    """Block matrix from nested lists; ``None`` entries are zero blocks.

    Returns a plain ndarray when every block is constant, so the same
    assembly code serves both numeric evaluation and problem construction.
    """
    nr = len(rows)
    nc = len(rows[0])
    if any(len(r) != nc for r in rows):
        raise ValueError("ragged block rows")
    heights = [None] * nr
    widths = [None] * nc
    for i, r in enumerate(rows):
        for j, blk in enumerate(r):
            if blk is None:
                continue
            shp = blk.shape if isinstance(blk, Affine) else np.atleast_2d(np.asarray(blk)).shape
            for store, idx, val in ((heights, i, shp[0]), (widths, j, shp[1])):
                if store[idx] is None:
                    store[idx] = val
                elif store[idx] != val:
                    raise ValueError(f"inconsistent block sizes at ({i}, {j})")
    if None in heights or None in widths:
        raise ValueError("cannot infer the size of an all-None block row or column")

    blocks = [[np.zeros((heights[i], widths[j])) if blk is None else blk for j, blk in enumerate(r)]
              for i, r in enumerate(rows)]
    if not any(isinstance(b, Affine) for r in blocks for b in r):
        return np.block([[np.atleast_2d(np.asarray(b, dtype=float)) for b in r] for r in blocks])

    ro = np.concatenate([[0], np.cumsum(heights)]).astype(int)
    co = np.concatenate([[0], np.cumsum(widths)]).astype(int)
    const = np.zeros((ro[-1], co[-1]))
    terms: dict[Variable, np.ndarray] = {}
    for i, r in enumerate(blocks):
        for j, b in enumerate(r):
            b = Affine._lift(b)
            const[ro[i]:ro[i + 1], co[j]:co[j + 1]] = b.const
            for v, t in b.terms.items():
                if v not in terms:
                    terms[v] = np.zeros((v.size, ro[-1], co[-1]))
                terms[v][:, ro[i]:ro[i + 1], co[j]:co[j + 1]] += t
    return Affine(const, terms)


# ---------------------------------------------------------------------------
# problem container

@dataclass
class Constraint:
    expr: Affine
    sense: str  # "nsd" (expr <= 0) or "psd" (expr >= 0)
    name: str = ""
    family: str = ""


class LmiProblem:
    """Linear objective over affine matrix-inequality constraints."""

    def __init__(self):
        self.variables: list[Variable] = []
        self.constraints: list[Constraint] = []
        self.objective: Affine | None = None

    def _new(self, name, kind, shape) -> Affine:
        if any(v.name == name for v in self.variables):
            raise ValueError(f"duplicate variable name {name!r}")
        var = Variable(name, kind, shape)
        self.variables.append(var)
        return Affine.of(var)

    def symmetric(self, name: str, n: int) -> Affine:
        return self._new(name, "symmetric", (n, n))

    def matrix(self, name: str, p: int, q: int) -> Affine:
        return self._new(name, "matrix", (p, q))

    def scalar(self, name: str) -> Affine:
        return self._new(name, "scalar", (1, 1))

    def add(self, expr, sense: str, name: str = "", family: str = ""):
        if sense not in ("nsd", "psd"):
            raise ValueError(f"sense must be 'nsd' or 'psd', got {sense!r}")
        expr = Affine._lift(expr)
        if expr.shape[0] != expr.shape[1]:
            raise ValueError(f"constraint {name!r} is not square: {expr.shape}")
        sym_err = np.abs(expr.const - expr.const.T).max(initial=0.0)
        for t in expr.terms.values():
            sym_err = max(sym_err, np.abs(t - np.swapaxes(t, 1, 2)).max(initial=0.0))
        if sym_err > 1e-12 * max(1.0, np.abs(expr.const).max(initial=0.0)):
            raise ValueError(f"constraint {name!r} is not symmetric (error {sym_err:.3g})")
        for v in expr.terms:
            if v not in self.variables:
                raise ValueError(f"constraint {name!r} uses foreign variable {v.name!r}")
        self.constraints.append(Constraint(expr, sense, name or f"c{len(self.constraints)}", family))

    def add_nsd(self, expr, name="", family=""):
        self.add(expr, "nsd", name, family)

    def add_psd(self, expr, name="", family=""):
        self.add(expr, "psd", name, family)

    def minimize(self, expr):
        expr = Affine._lift(expr)
        if expr.shape != (1, 1):
            raise ValueError("objective must be a scalar expression")
        self.objective = expr

    @property
    def n_unknowns(self) -> int:
        return sum(v.size for v in self.variables)

    def offsets(self) -> dict[Variable, int]:
        out, k = {}, 0
        for v in self.variables:
            out[v] = k
            k += v.size
        return out

    def compile(self):
        """Coefficient form ``G_j(z) = G0_j + sum_k z_k G_jk >= 0`` for every constraint."""
        if not self.constraints:
            raise ValueError("problem has no constraints")
        offs = self.offsets()
        nz = self.n_unknowns
        blocks = []
        for c in self.constraints:
            s = c.expr.shape[0]
            g0 = c.expr.const.copy()
            gk = np.zeros((nz, s, s))
            for v, t in c.expr.terms.items():
                gk[offs[v]:offs[v] + v.size] = t
            if c.sense == "nsd":
                g0, gk = -g0, -gk
            g0 = 0.5 * (g0 + g0.T)
            gk = 0.5 * (gk + np.swapaxes(gk, 1, 2))
            blocks.append((g0, gk))
        cvec = np.zeros(nz)
        c0 = 0.0
        if self.objective is not None:
            c0 = float(self.objective.const[0, 0])
            for v, t in self.objective.terms.items():
                cvec[offs[v]:offs[v] + v.size] = t[:, 0, 0]
        return blocks, cvec, c0

    def unpack(self, z) -> dict[str, np.ndarray]:
        offs = self.offsets()
        return {v.name: v.unpack(z[offs[v]:offs[v] + v.size]) for v in self.variables}

    def pack(self, assignment) -> np.ndarray:
        z = np.zeros(self.n_unknowns)
        offs = self.offsets()
        for v in self.variables:
            val = assignment[v] if v in assignment else assignment[v.name]
            z[offs[v]:offs[v] + v.size] = v.pack(val)
        return z


# ---------------------------------------------------------------------------
# margins

@dataclass
class MarginReport:
    """Required-side eigenvalue slack of every constraint.

    A psd constraint contributes its smallest eigenvalue, an nsd constraint
    the negated largest one, so a negative entry is the offending eigenvalue.
    """

    names: list[str]
    margins: np.ndarray

    @property
    def margin(self) -> float:
        return float(self.margins.min())

    @property
    def worst(self) -> str:
        return self.names[int(np.argmin(self.margins))]

    def as_dict(self):
        return dict(zip(self.names, map(float, self.margins)))


def check_assignment(problem: LmiProblem, assignment) -> MarginReport:
    """Evaluate every constraint at ``assignment`` and report eigenvalue margins."""
    margins = []
    for c in problem.constraints:
        blk = c.expr.value(assignment)
        blk = 0.5 * (blk + blk.T)
        margins.append(_lambda_min(blk) if c.sense == "psd" else -_lambda_max(blk))
    return MarginReport([c.name for c in problem.constraints], np.array(margins))


# ---------------------------------------------------------------------------
# primal-dual interior point engine
#
# Works on G_j(z) = G0_j + sum_k z_k G_jk >= 0 with objective c @ z. The dual
# is  max -sum_j <G0_j, Y_j>  s.t.  sum_j <G_jk, Y_j> = c_k,  Y_j >= 0.
# Search directions are HKM with a Mehrotra predictor-corrector; the start is
# infeasible, so no interior point has to be known in advance.

_CONVERGED = "converged"
_STALLED = "stalled"


@dataclass
class _PdResult:
    z: np.ndarray
    status: str
    gap: float
    pinf: float
    dinf: float
    iterations: int
    lower: float  # lower bound on c @ z over the feasible set inside the ball


def _max_step(x, dx):
    """Largest alpha with x + alpha * dx >= 0, for x positive definite."""
    chol = np.linalg.cholesky(x)
    linv = np.linalg.solve(chol, np.eye(x.shape[0]))
    w = linv @ dx @ linv.T
    lam = np.linalg.eigvalsh(0.5 * (w + w.T))[0]
    return math.inf if lam >= 0 else -1.0 / lam


def _inner(a, b):
    return sum(np.sum(x * y) for x, y in zip(a, b))


def _pd_solve(blocks, c, tol, max_iter, *, radius, sigma_min=0.0, feas_tol=1e-9):
    """Minimize ``c @ z`` s.t. every block is psd; the last block must be the norm ball."""
    sizes = [g0.shape[0] for g0, _ in blocks]
    m = sum(sizes)
    nz = c.size
    s_mats, y_mats = [], []
    for (g0, gk), k in zip(blocks, sizes):
        norms = np.sqrt(np.sum(gk * gk, axis=(1, 2)))
        eta = max(10.0, math.sqrt(k), np.linalg.norm(g0), norms.max(initial=0.0))
        xi = max(10.0, math.sqrt(k), k * np.max((1.0 + np.abs(c)) / (1.0 + norms), initial=0.0))
        s_mats.append(eta * np.eye(k))
        y_mats.append(xi * np.eye(k))
    z = np.zeros(nz)
    gram = sum(np.tensordot(gk, gk, axes=([1, 2], [1, 2])) for _, gk in blocks)
    g0_norm = math.sqrt(sum(np.sum(g0 * g0) for g0, _ in blocks))
    c_norm = np.linalg.norm(c)

    def state():
        rp = [g0 + np.tensordot(z, gk, axes=1) - s for (g0, gk), s in zip(blocks, s_mats)]
        rd = c.copy()
        for (_, gk), y in zip(blocks, y_mats):
            rd -= np.tensordot(gk, y, axes=([1, 2], [0, 1]))
        pinf = math.sqrt(sum(np.sum(r * r) for r in rp)) / (1.0 + g0_norm)
        dinf = np.linalg.norm(rd) / (1.0 + c_norm)
        return rp, rd, pinf, dinf, _inner(s_mats, y_mats)

    status, it = MAX_ITERATIONS, 0
    for it in range(max_iter):
        rp, rd, pinf, dinf, gap = state()
        if pinf <= feas_tol and dinf <= feas_tol and gap <= tol:
            status = _CONVERGED
            break
        mu = gap / m
        try:
            s_inv = [np.linalg.inv(s) for s in s_mats]
            hess = np.zeros((nz, nz))
            for (_, gk), si, y in zip(blocks, s_inv, y_mats):
                left = (gk @ si).reshape(nz, -1)
                right = np.swapaxes(gk @ y, 1, 2).reshape(nz, -1)
                hess += left @ right.T
            hess = 0.5 * (hess + hess.T)
            d = 1.0 / np.sqrt(np.maximum(np.diag(hess), 1e-300))
            hs = hess * np.outer(d, d)

            def direction(sigma_mu, corr):
                rhs = -rd.copy()
                for j, (_, gk) in enumerate(blocks):
                    t = sigma_mu * s_inv[j] - y_mats[j] - s_inv[j] @ rp[j] @ y_mats[j]
                    if corr is not None:
                        t = t - s_inv[j] @ corr[j]
                    rhs += np.tensordot(gk, t, axes=([1, 2], [1, 0]))
                dz = d * np.linalg.solve(hs, d * rhs)
                ds, dy = [], []
                for j, (_, gk) in enumerate(blocks):
                    dsj = rp[j] + np.tensordot(dz, gk, axes=1)
                    dyj = sigma_mu * s_inv[j] - y_mats[j] - s_inv[j] @ dsj @ y_mats[j]
                    if corr is not None:
                        dyj = dyj - s_inv[j] @ corr[j]
                    ds.append(dsj)
                    dy.append(0.5 * (dyj + dyj.T))
                # restore the linearized dual equation lost to cancellation
                miss = rd.copy()
                for (_, gk), dyj in zip(blocks, dy):
                    miss -= np.tensordot(gk, dyj, axes=([1, 2], [0, 1]))
                wts = np.linalg.lstsq(gram, miss, rcond=None)[0]
                dy = [dyj + np.tensordot(wts, gk, axes=1) for (_, gk), dyj in zip(blocks, dy)]
                return dz, ds, dy

            def steps(ds, dy):
                ap = min(_max_step(s, x) for s, x in zip(s_mats, ds))
                ad = min(_max_step(y, x) for y, x in zip(y_mats, dy))
                return ap, ad

            dz, ds, dy = direction(0.0, None)
            ap, ad = steps(ds, dy)
            ap, ad = min(1.0, ap), min(1.0, ad)
            mu_aff = _inner([s + ap * x for s, x in zip(s_mats, ds)],
                            [y + ad * x for y, x in zip(y_mats, dy)]) / m
            sigma = min(1.0, max(sigma_min, (mu_aff / mu) ** 3))
            corr = [a @ b for a, b in zip(ds, dy)]
            dz, ds, dy = direction(sigma * mu, corr)
            ap, ad = steps(ds, dy)
        except np.linalg.LinAlgError:
            status = _STALLED
            break
        frac = 0.9 + 0.09 * min(1.0, ap, ad)
        alpha = min(1.0, frac * ap, frac * ad)
        if not np.all(np.isfinite(dz)) or alpha < 1e-12:
            status = _STALLED
            break
        z = z + alpha * dz
        s_mats = [0.5 * (s + s.T) for s in (s + alpha * x for s, x in zip(s_mats, ds))]
        y_mats = [0.5 * (y + y.T) for y in (y + alpha * x for y, x in zip(y_mats, dy))]
    _, rd, pinf, dinf, gap = state()
    # weak duality inside the ball: c @ z' >= -sum <G0, Y> - |rd| radius
    lower = -sum(np.sum(g0 * y) for (g0, _), y in zip(blocks, y_mats)) - np.linalg.norm(rd) * radius
    return _PdResult(z, status, gap, pinf, dinf, it, float(lower))


# ---------------------------------------------------------------------------
# public solve

@dataclass
class SdpSolution:
    """Outcome of :func:`solve`.

    ``values`` maps variable names to arrays. ``margin`` is the worst
    eigenvalue slack of the returned assignment on the original blocks and
    ``phase1_margin`` the maximized common slack of the normalized blocks.
    ``gap`` bounds the distance of ``objective`` to the optimum.
    """

    status: str
    values: dict[str, np.ndarray] = field(default_factory=dict)
    objective: float | None = None
    margin: float = -math.inf
    phase1_margin: float = -math.inf
    gap: float = math.inf
    iterations: int = 0
    report: MarginReport | None = None

    def __getitem__(self, name):
        return self.values[name]

    @property
    def ok(self) -> bool:
        return self.status in (OPTIMAL, FEASIBLE)


def _normalized_blocks(blocks):
    out = []
    for g0, gk in blocks:
        scale = max(np.abs(g0).max(initial=0.0), np.abs(gk).max(initial=0.0))
        scale = scale if scale > 0 else 1.0
        out.append((g0 / scale, gk / scale))
    return out


def _ball_block(nz, radius, extra=0):
    """[[I, z/R], [z'/R, 1]] >= 0, i.e. ||z|| <= R, on the first nz of nz + extra unknowns."""
    g0 = np.eye(nz + 1)
    gk = np.zeros((nz + extra, nz + 1, nz + 1))
    for k in range(nz):
        gk[k, k, nz] = gk[k, nz, k] = 1.0 / radius
    return g0, gk


def _normalized_margin(blocks, z):
    return min(np.linalg.eigvalsh(g0 + np.tensordot(z, gk, axes=1))[0] for g0, gk in blocks)


def _phase1(blocks, nz, radius, tol, max_iter):
    """Maximize t s.t. G_j(z) >= t I, t <= 1, ||z|| <= radius."""
    aug = [(g0, np.concatenate([gk, -np.eye(g0.shape[0])[None]], axis=0)) for g0, gk in blocks]
    cap = (np.ones((1, 1)), np.zeros((nz + 1, 1, 1)))
    cap[1][nz, 0, 0] = -1.0
    aug += [cap, _ball_block(nz, radius, extra=1)]
    c1 = np.zeros(nz + 1)
    c1[-1] = -1.0
    res = _pd_solve(aug, c1, tol, max_iter, radius=radius)
    return res, res.z[:nz], float(res.z[-1])


def _objective_cut(cvec, c0, level):
    """1x1 block  level - c @ z - c0 >= 0, normalized."""
    scale = max(1.0, abs(level - c0), np.abs(cvec).max())
    return np.array([[(level - c0) / scale]]), (-cvec / scale)[:, None, None]


def _bisect(blocks, cvec, c0, z_hi, lo, radius, tol, max_iter):
    """Shrink [lo, f(z_hi)] around the optimum with phase-1 feasibility queries.

    ``lo`` may be None, in which case a lower end is found by stepping down.
    """
    nz = cvec.size
    hi = float(cvec @ z_hi + c0)
    iterations = 0

    def query(level):
        nonlocal iterations
        cut = _objective_cut(cvec, c0, level)
        res, z, t = _phase1(blocks + [cut], nz, radius, 1e-2 * tol, max_iter)
        iterations += res.iterations
        return z, t > 0.0 and _normalized_margin(blocks, z) > 0.0

    if lo is None:
        step = max(tol, 1e-3 * abs(hi))
        for _ in range(60):
            z, ok = query(hi - step)
            if not ok:
                lo = hi - step
                break
            z_hi, hi = z, float(cvec @ z + c0)
            step *= 4.0
        else:
            return z_hi, math.inf, iterations
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        z, ok = query(mid)
        if ok:
            z_hi, hi = z, min(float(cvec @ z + c0), mid)
        else:
            lo = mid
    return z_hi, hi - lo, iterations


def solve(problem: LmiProblem, tol: float = 1e-6, *, max_iter: int = 500,
          radius: float = 1e8) -> SdpSolution:
    """Minimize the problem objective over its LMI constraints.

    Phase 1 maximizes the common eigenvalue slack ``t`` of all constraint
    blocks, each normalized to unit max-entry; a maximum below ``-tol`` is
    reported as infeasible. Phase 2 runs the primal-dual method on the
    objective inside a norm ball that grows until it is inactive. If that run
    cannot certify the optimum to ``tol``, the optimum is bracketed by
    bisection on the objective with phase-1 feasibility queries.

    Parameters
    ----------
    problem : LmiProblem
    tol : float
        Absolute accuracy on the objective and infeasibility threshold on the
        normalized phase-1 slack.
    max_iter : int
        Iteration budget of each interior-point run.
    radius : float
        Norm bound on the vector of unknowns during phase 1 and bisection.

    Returns
    -------
    SdpSolution
        ``status`` is "optimal", "feasible", "infeasible" or "max-iterations";
        the best available assignment is attached in every case.
    """
    blocks, cvec, c0 = problem.compile()
    blocks = _normalized_blocks(blocks)
    nz = cvec.size
    p1, z1, t1 = _phase1(blocks, nz, radius, 1e-2 * tol, max_iter)
    iterations = p1.iterations

    def finish(status, z, gap=math.inf):
        values = problem.unpack(z)
        report = check_assignment(problem, values)
        obj = None if problem.objective is None else float(cvec @ z + c0)
        return SdpSolution(status, values, obj, report.margin, t1, gap, iterations, report)

    if p1.status != _CONVERGED and not (t1 > 0.0 and _normalized_margin(blocks, z1) > 0.0):
        return finish(MAX_ITERATIONS, z1)
    if t1 < -tol:
        return finish(INFEASIBLE, z1)
    if problem.objective is None or not np.any(cvec) or t1 <= 0.0:
        return finish(FEASIBLE, z1)

    ball = 1e4
    while True:
        p2 = _pd_solve(blocks + [_ball_block(nz, ball)], cvec, tol, max_iter,
                       radius=ball, sigma_min=0.1)
        iterations += p2.iterations
        if np.linalg.norm(p2.z) < 0.5 * ball or ball >= radius:
            break
        ball = min(100.0 * ball, radius)
    usable = p2.pinf <= 1e-8 and _normalized_margin(blocks, p2.z) >= -tol
    if p2.status == _CONVERGED and usable:
        return finish(OPTIMAL, p2.z, p2.gap)

    start, lo = z1, None
    if usable and cvec @ p2.z < cvec @ z1:
        start = p2.z
        if p2.dinf <= 1e-6 and np.linalg.norm(p2.z) < 0.5 * ball:
            lo = min(p2.lower + c0, float(cvec @ p2.z + c0))
    z, width, n_bis = _bisect(blocks, cvec, c0, start, lo, radius, tol, max_iter)
    iterations += n_bis
    return finish(OPTIMAL if width <= tol else FEASIBLE, z, width)
