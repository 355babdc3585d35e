"""Fixed-step closed-loop simulation under pump saturation.

The controller acts on deviation coordinates, the plant integrates its full
nonlinear vector field. Every step:

1. memberships ``h`` from the current state (premises clamped to the box),
2. ``u_cmd = sum_i h_i K_i x`` in transformed input units,
3. physical pump rate from the plant's affine map, clamped to ``[0, u_max]``,
4. the clamped rate mapped back to the transformed input ``u_applied``,
5. one classical Runge-Kutta step with ``u_applied`` held constant.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .fuzzy import PdcController, TsModel, memberships, pdc_control
from .models import MealDisturbance, PlantModel, find_equilibrium
from .verify import lyapunov_values

__all__ = [
    "SimConfig",
    "SimTrace",
    "SimMetrics",
    "IntegrationError",
    "rk4_step",
    "simulate_closed_loop",
    "metrics",
    "trace_to_csv",
    "write_trace_csv",
]


class IntegrationError(ArithmeticError):
    """A Runge-Kutta step produced non-finite values."""


@dataclass(frozen=True)
class SimConfig:
    """Simulation settings.

    Attributes
    ----------
    dt, t_end : float
        Step and horizon in minutes.
    alpha : float
        Meal amplitude.
    u_max : float
        Upper pump limit in physical units.
    x0 : tuple of float or None
        Initial deviation state, zero by default.
    record_stride : int
        Steps between recorded samples.
    decay : float
        Meal decay rate (1/min).
    subtract_baseline : bool
        Report ``y`` relative to the open-loop equilibrium reached with the
        constant disturbance offset and zero pump rate.
    """

    dt: float = 0.1
    t_end: float = 500.0
    alpha: float = 1.0
    u_max: float = 6.0
    x0: tuple | None = None
    record_stride: int = 1
    decay: float = 0.05
    subtract_baseline: bool = False

    def __post_init__(self):
        if not (math.isfinite(self.dt) and self.dt > 0):
            raise ValueError("dt must be positive")
        if not self.t_end > self.dt:
            raise ValueError("t_end must exceed dt")
        if not self.u_max >= 0:
            raise ValueError("u_max must be >= 0")
        if not (isinstance(self.record_stride, int) and self.record_stride >= 1):
            raise ValueError("record_stride must be a positive integer")
        if self.x0 is not None:
            object.__setattr__(self, "x0", tuple(float(v) for v in self.x0))

    @property
    def n_steps(self) -> int:
        return int(round(self.t_end / self.dt))


@dataclass
class SimTrace:
    """Recorded samples of one run; arrays share the leading time axis."""

    t: np.ndarray
    states: np.ndarray
    memberships: np.ndarray
    u_cmd: np.ndarray
    u_pump: np.ndarray
    u_applied: np.ndarray
    v: np.ndarray
    y: np.ndarray
    v_lyap: np.ndarray
    basal: float = 0.0
    failed: bool = False
    message: str = ""
    extras: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.t)

    @property
    def concentration(self) -> np.ndarray:
        """Absolute glucose (mg/dl)."""
        return self.y + self.basal


@dataclass
class SimMetrics:
    peak_glucose: float
    settling_time: float
    max_u_pump: float
    min_u_pump: float
    hypoglycemia: bool
    final_deviation: float
    empirical_gain: float | None

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def rk4_step(f, x, t: float, dt: float) -> np.ndarray:
    """One classical fourth-order Runge-Kutta step of ``x' = f(t, x)``."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    x = np.asarray(x, dtype=float)
    k1 = np.asarray(f(t, x), dtype=float)
    k2 = np.asarray(f(t + dt / 2, x + dt / 2 * k1), dtype=float)
    k3 = np.asarray(f(t + dt / 2, x + dt / 2 * k2), dtype=float)
    k4 = np.asarray(f(t + dt, x + dt * k3), dtype=float)
    out = x + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    if not np.all(np.isfinite(out)):
        raise IntegrationError(f"non-finite state after step at t={t:g}")
    return out


def simulate_closed_loop(plant: PlantModel, ts: TsModel, ctrl: PdcController,
                         meal: MealDisturbance | None, cfg: SimConfig, p_mats=None) -> SimTrace:
    """Simulate the nonlinear plant under the saturated PDC law.

    Parameters
    ----------
    plant : PlantModel
    ts : TsModel
        Supplies the memberships shared by the controller.
    ctrl : PdcController
    meal : MealDisturbance or None
        ``None`` builds the meal from ``cfg.alpha`` and ``cfg.decay``.
    cfg : SimConfig
    p_mats : sequence of ndarray, optional
        Lyapunov matrices ``P_j`` for the recorded ``V``; NaN when omitted.

    Returns
    -------
    SimTrace
        On a non-finite state the partial trace is returned with
        ``failed=True``.
    """
    n = plant.n_states
    if ts.n_states != n or len(ctrl.gains) != ts.n_rules:
        raise ValueError("plant, fuzzy model and controller dimensions disagree")
    if ctrl.gains[0].shape != (1, n):
        raise ValueError("controller gains must be 1 x n")
    x = np.zeros(n) if cfg.x0 is None else np.array(cfg.x0, dtype=float)
    if x.size != n:
        raise ValueError(f"x0 has {x.size} entries, plant has {n} states")
    if meal is None:
        meal = MealDisturbance(cfg.alpha, cfg.decay)
    out = plant.output_index
    baseline = 0.0
    if cfg.subtract_baseline:
        u_zero = plant.from_pump(0.0)
        try:
            baseline = float(find_equilibrium(plant, u_zero, plant.disturbance_offset)[out])
        except Exception as exc:  # noqa: BLE001 - baseline is a convenience only
            raise ValueError(f"no baseline equilibrium: {exc}") from exc

    cols = {k: [] for k in ("t", "x", "h", "u_cmd", "u_pump", "u_applied", "v")}
    failed, message = False, ""
    steps = cfg.n_steps
    for k in range(steps + 1):
        t = k * cfg.dt
        h = memberships(ts, x)
        u_cmd = float(pdc_control(ctrl, h, x)[0])
        raw = plant.to_pump(u_cmd)
        u_pump = min(max(raw, 0.0), cfg.u_max)
        # map back only when clamped, so an unsaturated command passes bit-exact
        u_applied = u_cmd if u_pump == raw else plant.from_pump(u_pump)
        v = meal(t)
        if k % cfg.record_stride == 0:
            for key, val in zip(cols, (t, x.copy(), h, u_cmd, u_pump, u_applied, v)):
                cols[key].append(val)
        if k == steps:
            break
        v_star = plant.disturbance_offset

        def f(tt, xx, _u=u_applied, _off=v_star):
            return plant.derivative(xx, _u, _off + meal(tt))

        try:
            with np.errstate(over="ignore", invalid="ignore"):
                x = rk4_step(f, x, t, cfg.dt)
        except (IntegrationError, ValueError, OverflowError) as exc:
            failed, message = True, f"integration failed at t={t:g}: {exc}"
            break

    states = np.array(cols["x"])
    hs = np.array(cols["h"])
    y = states[:, out] - baseline
    if p_mats is not None:
        v_lyap = lyapunov_values(states, hs, [np.asarray(p) for p in p_mats])
    else:
        v_lyap = np.full(len(states), np.nan)
    return SimTrace(
        t=np.array(cols["t"]), states=states, memberships=hs,
        u_cmd=np.array(cols["u_cmd"]), u_pump=np.array(cols["u_pump"]),
        u_applied=np.array(cols["u_applied"]), v=np.array(cols["v"]), y=y,
        v_lyap=v_lyap, basal=plant.basal + baseline, failed=failed, message=message,
    )


def metrics(trace: SimTrace, band: float = 5.0, hypo: float = 60.0) -> SimMetrics:
    """Scenario summary.

    ``settling_time`` is the first time after which the glucose deviation
    stays within ``band`` of basal (``inf`` if it never does).
    """
    if len(trace) == 0:
        raise ValueError("empty trace")
    conc = trace.concentration
    outside = np.nonzero(np.abs(trace.y) > band)[0]
    if outside.size == 0:
        settling = float(trace.t[0])
    elif outside[-1] == len(trace) - 1:
        settling = math.inf
    else:
        settling = float(trace.t[outside[-1] + 1])
    gain = None
    if np.sum(np.asarray(trace.v) ** 2) > 0:
        from .verify import empirical_hinf
        gain = empirical_hinf(trace)
    return SimMetrics(
        peak_glucose=float(np.max(conc)),
        settling_time=settling,
        max_u_pump=float(np.max(trace.u_pump)),
        min_u_pump=float(np.min(trace.u_pump)),
        hypoglycemia=bool(np.any(conc < hypo)),
        final_deviation=float(trace.y[-1]),
        empirical_gain=gain,
    )


def trace_to_csv(trace: SimTrace) -> str:
    """CSV text with header ``t,x1..xn,h1..hr,u_cmd,u_pump,u_applied,v,y,V``."""
    n = trace.states.shape[1]
    r = trace.memberships.shape[1]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t", *(f"x{i + 1}" for i in range(n)), *(f"h{i + 1}" for i in range(r)),
                "u_cmd", "u_pump", "u_applied", "v", "y", "V"])
    for k in range(len(trace)):
        row = [trace.t[k], *trace.states[k], *trace.memberships[k], trace.u_cmd[k],
               trace.u_pump[k], trace.u_applied[k], trace.v[k], trace.y[k], trace.v_lyap[k]]
        w.writerow([repr(float(val)) for val in row])
    return buf.getvalue()


def write_trace_csv(trace: SimTrace, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(trace_to_csv(trace))
