"""Command-line entry point.

Subcommands::

    synthesize  solve the per-rule LMIs and write gains.json
    simulate    run one closed loop and write trace.csv and metrics.json
    verify      re-check a gains file and write verification.json
    sweep       all presets x alpha in {1, 2, 3}; write sweep.csv

Settings come from flags, optionally preceded by a JSON config file (see
``RunConfig``). Output goes to ``--out-dir``, else ``$FUZZYGLUCOSE_OUT``, else
the current directory.

Exit codes: 0 success, 2 usage error, 3 bad config, 4 infeasible synthesis,
5 simulation failure, 6 verification failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path

from . import fuzzy, lmi, models, sim
from .verify import closed_loop_vertex, hinf_norm

__all__ = ["PRESETS", "RunConfig", "ConfigError", "load_config", "run", "main"]

log = logging.getLogger("fuzzyglucose")

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_CONFIG = 3
EXIT_INFEASIBLE = 4
EXIT_SIMULATION = 5
EXIT_VERIFY = 6

OUT_ENV = "FUZZYGLUCOSE_OUT"

# (u_max, mu) pairs of the three saturation scenarios per model
PRESETS = {
    "bergman": {"sat6": (6.0, 0.095), "sat10": (10.0, 0.25), "sat25": (25.0, 1.2)},
    "tolic": {"sat6": (6.0, 0.004), "sat12": (12.0, 0.08), "sat20": (20.0, 0.18)},
}
DEFAULT_PRESET = {"bergman": "sat6", "tolic": "sat6"}
ALPHAS = (1.0, 2.0, 3.0)


class ConfigError(ValueError):
    """Malformed or inconsistent run configuration."""


@dataclass
class RunConfig:
    """All settings of one invocation.

    JSON layout (every key optional)::

        {"model": "bergman",
         "params": {"g_b": 81.0},
         "pump_scale": 0.06,
         "sector_bounds": "derived",
         "synthesis": {"preset": "sat6", "mu": 0.095, "x0": null, "eps_feas": 1e-7},
         "simulation": {"dt": 0.1, "t_end": 500, "alpha": 1, "u_max": 6,
                        "x0": null, "record_stride": 1, "subtract_baseline": false},
         "output_dir": "out"}
    """

    model: str = "bergman"
    params: dict = field(default_factory=dict)
    pump_scale: float = 0.06
    sector_bounds: str = "derived"
    preset: str | None = None
    mu: float | None = None
    x0_synth: list | None = None
    eps_feas: float = 1e-7
    simulation: dict = field(default_factory=dict)
    output_dir: str | None = None

    def validate(self) -> None:
        if self.model not in PRESETS:
            raise ConfigError(f"unknown model {self.model!r}; choose from {sorted(PRESETS)}")
        if self.preset is not None and self.preset not in PRESETS[self.model]:
            raise ConfigError(f"unknown preset {self.preset!r} for {self.model}; "
                              f"choose from {sorted(PRESETS[self.model])}")
        if self.sector_bounds not in ("derived", "published"):
            raise ConfigError("sector_bounds must be 'derived' or 'published'")
        known = {f.name for f in fields(sim.SimConfig)}
        unknown = set(self.simulation) - known
        if unknown:
            raise ConfigError(f"unknown simulation keys {sorted(unknown)}")

    @property
    def preset_name(self) -> str:
        return self.preset or DEFAULT_PRESET[self.model]

    def resolved_mu(self) -> float:
        return self.mu if self.mu is not None else PRESETS[self.model][self.preset_name][1]

    def resolved_u_max(self) -> float:
        if "u_max" in self.simulation:
            return float(self.simulation["u_max"])
        return PRESETS[self.model][self.preset_name][0]

    def build_params(self):
        cls = models.BergmanParams if self.model == "bergman" else models.TolicParams
        try:
            return cls(**self.params)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad parameter override: {exc}") from exc

    def build(self):
        """(plant, fuzzy model) for this configuration."""
        p = self.build_params()
        if self.model == "bergman":
            return models.bergman_plant(p, pump_scale=self.pump_scale), fuzzy.bergman_ts_model(p)
        override = fuzzy.PUBLISHED_TOLIC_BOUNDS if self.sector_bounds == "published" else None
        return models.tolic_plant(p), fuzzy.tolic_ts_model(p, override)

    def synthesis_options(self) -> lmi.SynthesisOptions:
        try:
            return lmi.SynthesisOptions(mu=self.resolved_mu(), x0=self.x0_synth,
                                        eps_feas=self.eps_feas)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def sim_config(self, **override) -> sim.SimConfig:
        kw = dict(self.simulation)
        kw.setdefault("u_max", self.resolved_u_max())
        kw.update(override)
        try:
            return sim.SimConfig(**kw)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad simulation settings: {exc}") from exc


def load_config(path) -> RunConfig:
    """Read a JSON config file into a :class:`RunConfig`."""
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    allowed = {"model", "params", "pump_scale", "sector_bounds", "synthesis", "simulation",
               "output_dir"}
    unknown = set(data) - allowed
    if unknown:
        raise ConfigError(f"unknown config keys {sorted(unknown)}")
    syn = data.get("synthesis", {})
    bad = set(syn) - {"preset", "mu", "x0", "eps_feas"}
    if bad:
        raise ConfigError(f"unknown synthesis keys {sorted(bad)}")
    cfg = RunConfig(
        model=data.get("model", "bergman"),
        params=dict(data.get("params", {})),
        pump_scale=float(data.get("pump_scale", 0.06)),
        sector_bounds=data.get("sector_bounds", "derived"),
        preset=syn.get("preset"),
        mu=syn.get("mu"),
        x0_synth=syn.get("x0"),
        eps_feas=float(syn.get("eps_feas", 1e-7)),
        simulation=dict(data.get("simulation", {})),
        output_dir=data.get("output_dir"),
    )
    cfg.validate()
    return cfg


# ---------------------------------------------------------------------------
# argument parsing

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise _UsageError(message)


class _UsageError(Exception):
    pass


def _build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file")
    common.add_argument("--model", choices=sorted(PRESETS))
    common.add_argument("--out-dir", help=f"output directory (default ${OUT_ENV} or .)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="fuzzyglucose", description="Fuzzy H-infinity insulin control toolkit")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synthesize", parents=[common], help="solve the LMIs and write gains")
    p.add_argument("--preset")
    p.add_argument("--mu", type=float)

    p = sub.add_parser("simulate", parents=[common], help="closed-loop simulation")
    p.add_argument("--gains", required=True, help="gains file from synthesize")
    p.add_argument("--alpha", type=float)
    p.add_argument("--u-max", type=float)
    p.add_argument("--t-end", type=float)
    p.add_argument("--dt", type=float)

    p = sub.add_parser("verify", parents=[common], help="re-check a gains file")
    p.add_argument("--gains", required=True)

    p = sub.add_parser("sweep", parents=[common], help="presets x alpha summary")
    p.add_argument("--t-end", type=float)
    p.add_argument("--dt", type=float)
    return parser


def _resolve(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    if args.model:
        cfg.model = args.model
    if getattr(args, "preset", None):
        cfg.preset = args.preset
    if getattr(args, "mu", None) is not None:
        cfg.mu = args.mu
    for flag, key in (("alpha", "alpha"), ("u_max", "u_max"), ("t_end", "t_end"), ("dt", "dt")):
        val = getattr(args, flag, None)
        if val is not None:
            cfg.simulation[key] = val
    if args.out_dir:
        cfg.output_dir = args.out_dir
    cfg.validate()
    return cfg


def _out_dir(cfg: RunConfig) -> Path:
    out = Path(cfg.output_dir or os.environ.get(OUT_ENV) or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path: Path, data) -> None:
    path.write_text(json.dumps(data, indent=2) + "\n", encoding="utf-8")


def _load_gains(path, cfg: RunConfig) -> lmi.SynthesisResult:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        result = lmi.SynthesisResult.from_dict(data)
    except (OSError, json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"cannot read gains file {path}: {exc}") from exc
    if result.model and result.model != cfg.model:
        raise ConfigError(f"gains file is for {result.model!r}, model is {cfg.model!r}")
    meta = data.get("run", {})
    if cfg.preset is None and meta.get("preset"):
        cfg.preset = meta["preset"]
    return result


# ---------------------------------------------------------------------------
# subcommands

def _synthesize(cfg: RunConfig) -> lmi.SynthesisResult:
    _, ts = cfg.build()
    return lmi.synthesize(ts, cfg.synthesis_options())


def cmd_synthesize(cfg: RunConfig) -> int:
    result = _synthesize(cfg)
    out = _out_dir(cfg)
    data = result.to_dict()
    data["run"] = {"preset": cfg.preset_name, "u_max": cfg.resolved_u_max(),
                   "sector_bounds": cfg.sector_bounds}
    _write_json(out / "gains.json", data)
    for r in result.rules:
        print(f"rule {r.rule}: gamma = {r.gamma:.6g}  K = {r.gain.ravel().tolist()}")
    print(f"wrote {out / 'gains.json'}")
    return EXIT_OK


def cmd_simulate(cfg: RunConfig, gains_path) -> int:
    result = _load_gains(gains_path, cfg)
    plant, ts = cfg.build()
    if len(result.rules) != ts.n_rules:
        raise ConfigError(f"gains file has {len(result.rules)} rules, model has {ts.n_rules}")
    scfg = cfg.sim_config()
    trace = sim.simulate_closed_loop(plant, ts, result.controller(), None, scfg,
                                     result.p_matrices())
    out = _out_dir(cfg)
    sim.write_trace_csv(trace, out / "trace.csv")
    report = sim.metrics(trace).as_dict()
    report.update(failed=trace.failed, message=trace.message, alpha=scfg.alpha, u_max=scfg.u_max)
    _write_json(out / "metrics.json", report)
    print(json.dumps(report))
    if trace.failed:
        print(f"error: {trace.message}", file=sys.stderr)
        return EXIT_SIMULATION
    return EXIT_OK


def cmd_verify(cfg: RunConfig, gains_path) -> int:
    result = _load_gains(gains_path, cfg)
    _, ts = cfg.build()
    if len(result.rules) != ts.n_rules:
        raise ConfigError(f"gains file has {len(result.rules)} rules, model has {ts.n_rules}")
    report = lmi.verify_solution(result, ts).to_dict()
    for entry, sol, rule in zip(report["rules"], result.rules, ts.rules):
        try:
            entry["hinf_norm"] = hinf_norm(closed_loop_vertex(rule, sol.gain))
        except ValueError:
            entry["hinf_norm"] = None
        entry["gamma"] = sol.gamma
    _write_json(_out_dir(cfg) / "verification.json", report)
    for entry in report["rules"]:
        print(f"rule {entry['rule']}: {'pass' if entry['passed'] else 'FAIL'}  "
              f"gamma={entry['gamma']:.6g}  hinf={entry['hinf_norm']}")
    return EXIT_OK if report["passed"] else EXIT_VERIFY


def cmd_sweep(cfg: RunConfig) -> int:
    plant, ts = cfg.build()
    rows = []
    failed = False
    for preset, (u_max, mu) in PRESETS[cfg.model].items():
        opts = lmi.SynthesisOptions(mu=mu, x0=cfg.x0_synth, eps_feas=cfg.eps_feas)
        result = lmi.synthesize(ts, opts)
        for alpha in ALPHAS:
            scfg = cfg.sim_config(alpha=alpha, u_max=u_max)
            trace = sim.simulate_closed_loop(plant, ts, result.controller(), None, scfg)
            m = sim.metrics(trace) if len(trace) else None
            failed |= trace.failed
            rows.append({
                "preset": preset, "u_max": u_max, "mu": mu, "alpha": alpha,
                "gamma_max": max(result.gammas),
                "peak_glucose": m.peak_glucose, "settling_time": m.settling_time,
                "max_u_pump": m.max_u_pump, "hypoglycemia": m.hypoglycemia,
                "empirical_gain": m.empirical_gain, "failed": trace.failed,
            })
    out = _out_dir(cfg)
    header = list(rows[0])
    lines = [",".join(header)] + [",".join(str(r[k]) for k in header) for r in rows]
    (out / "sweep.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(f"{'preset':<7}{'alpha':>6}{'peak':>10}{'settle':>9}{'max u':>8}{'gain':>9}")
    for r in rows:
        gain = "nan" if r["empirical_gain"] is None else f"{r['empirical_gain']:.3g}"
        print(f"{r['preset']:<7}{r['alpha']:>6g}{r['peak_glucose']:>10.2f}"
              f"{r['settling_time']:>9.1f}{r['max_u_pump']:>8.2f}{gain:>9}")
    return EXIT_SIMULATION if failed else EXIT_OK


def run(argv=None) -> int:
    """Parse ``argv`` and dispatch; returns the exit status."""
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = _resolve(args)
        if args.command == "synthesize":
            return cmd_synthesize(cfg)
        if args.command == "simulate":
            return cmd_simulate(cfg, args.gains)
        if args.command == "verify":
            return cmd_verify(cfg, args.gains)
        return cmd_sweep(cfg)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except lmi.SynthesisError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE


def main() -> None:
    sys.exit(run())
