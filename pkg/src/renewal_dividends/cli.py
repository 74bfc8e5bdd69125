"""Command-line driver: ``renewal-dividends {solve,simulate,verify,bounds} --config RUN.json``.

Exit codes: 0 success, 1 a property check failed, 2 numerical or CFL guard,
64 usage or configuration error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

from . import hjbgrid, verify
from .errors import CFLError, ConfigurationError, DomainError, NumericalFailure
from .model import ModelParams, claims_from_dict, hazard_from_dict
from .montecarlo import estimate_value, path_generator
from .paths import simulate_path, strategy_from_dict, write_trace_csv

EXIT_OK, EXIT_FAIL, EXIT_GUARD, EXIT_USAGE = 0, 1, 2, 64

DEFAULT_OUTPUTS = {
    "surface_csv": "surface.csv",
    "free_boundary_csv": "free_boundary.csv",
    "residual_json": "residual.json",
    "estimates_json": "estimates.json",
    "report_json": "report.json",
    "trace_csv": "trace_{index}.csv",
}
DEFAULT_FAMILY = [
    {"type": "barrier", "level": 0.0},
    {"type": "barrier", "level": 0.5},
    {"type": "barrier", "level": 1.0},
    {"type": "barrier", "level": 2.0},
    {"type": "liquidate_now"},
    {"type": "pay_all_at_T"},
]
_MODEL_KEYS = {"p", "c", "T", "Lambda", "validation_mode", "hazard", "claims"}
_GRID_KEYS = {"n_s", "n_x", "x_max", "claim_refine", "surface_stride"}
_MC_KEYS = {"n_paths", "seed"}
_VERIFY_KEYS = {"tolerance", "dpp_family", "dpp_h_steps", "dpp_slack", "dpp_n_paths", "trend_levels"}


class UsageError(Exception):
    pass


def _check_keys(block: dict, allowed: set, name: str, required=()) -> None:
    if not isinstance(block, dict):
        raise ConfigurationError(f"'{name}' block must be an object")
    unknown = set(block) - allowed
    if unknown:
        raise ConfigurationError(f"unknown key(s) in '{name}': {sorted(unknown)}")
    missing = [k for k in required if k not in block]
    if missing:
        raise ConfigurationError(f"'{name}' block is missing {missing}")


@dataclass
class RunConfig:
    """Parsed JSON run configuration; ``to_dict`` gives a normalised document."""

    model: dict
    grid: dict | None = None
    mc: dict | None = None
    strategy: dict | None = None
    probes: list = field(default_factory=list)
    outputs: dict = field(default_factory=lambda: dict(DEFAULT_OUTPUTS))
    verify: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        if not isinstance(d, dict):
            raise ConfigurationError("run configuration must be a JSON object")
        _check_keys(d, {"model", "grid", "mc", "strategy", "probes", "outputs", "verify"}, "config", ["model"])
        model = dict(d["model"])
        _check_keys(model, _MODEL_KEYS, "model", ["p", "c", "T", "Lambda", "hazard", "claims"])
        model.setdefault("validation_mode", "strict")
        grid = d.get("grid")
        if grid is not None:
            grid = dict(grid)
            _check_keys(grid, _GRID_KEYS, "grid", ["n_s", "n_x", "x_max"])
            grid.setdefault("claim_refine", 1)
            grid.setdefault("surface_stride", 1)
        mc = d.get("mc")
        if mc is not None:
            mc = dict(mc)
            _check_keys(mc, _MC_KEYS, "mc", ["n_paths", "seed"])
        probes = []
        for p in d.get("probes", []):
            if not isinstance(p, (list, tuple)) or len(p) != 3:
                raise ConfigurationError(f"probe {p!r} must be a list [s, x, w]")
            probes.append([float(v) for v in p])
        outputs = dict(DEFAULT_OUTPUTS)
        extra = d.get("outputs", {})
        _check_keys(extra, set(DEFAULT_OUTPUTS), "outputs")
        outputs.update(extra)
        ver = dict(d.get("verify", {}))
        _check_keys(ver, _VERIFY_KEYS, "verify")
        return cls(model=model, grid=grid, mc=mc, strategy=d.get("strategy"), probes=probes, outputs=outputs, verify=ver)

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            with open(path) as fh:
                doc = json.load(fh)
        except OSError as exc:
            raise ConfigurationError(f"cannot read config: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"config is not valid JSON: {exc}") from exc
        return cls.from_dict(doc)

    def to_dict(self) -> dict:
        d = {"model": self.model, "probes": self.probes, "outputs": self.outputs, "verify": self.verify}
        for key in ("grid", "mc", "strategy"):
            if getattr(self, key) is not None:
                d[key] = getattr(self, key)
        return json.loads(json.dumps(d))

    # builders
    def params(self) -> ModelParams:
        m = self.model
        try:
            return ModelParams(p=float(m["p"]), c=float(m["c"]), T=float(m["T"]), Lambda=float(m["Lambda"]),
                               validation_mode=m["validation_mode"])
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigurationError):
                raise
            raise ConfigurationError(f"bad model block: {exc}") from exc

    def hazard(self):
        return hazard_from_dict(self.model["hazard"])

    def claims(self):
        return claims_from_dict(self.model["claims"])

    def grid_spec(self) -> hjbgrid.GridSpec:
        if self.grid is None:
            raise ConfigurationError("this command needs a 'grid' block")
        g = self.grid
        return hjbgrid.GridSpec(int(g["n_s"]), int(g["n_x"]), float(g["x_max"]), int(g["claim_refine"]))

    def strategy_obj(self):
        if self.strategy is None:
            raise ConfigurationError("this command needs a 'strategy' block")
        return strategy_from_dict(self.strategy)

    def require_mc(self) -> tuple[int, int]:
        if self.mc is None:
            raise ConfigurationError("this command needs an 'mc' block")
        n, seed = self.mc["n_paths"], self.mc["seed"]
        if not isinstance(n, int) or n < 2:
            raise ConfigurationError(f"mc.n_paths must be an integer >= 2, got {n!r}")
        if not isinstance(seed, int) or seed < 0:
            raise ConfigurationError(f"mc.seed must be a nonnegative integer, got {seed!r}")
        return n, seed


def _write_json(path: Path, payload) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _out(args, cfg: RunConfig, key: str, **fmt) -> Path:
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    return out_dir / cfg.outputs[key].format(**fmt)


def _model(cfg: RunConfig):
    params, h, g = cfg.params(), cfg.hazard(), cfg.claims()
    params.check_hazard(h)
    return params, h, g


def run_solve(cfg: RunConfig, args) -> int:
    params, h, g = _model(cfg)
    spec = cfg.grid_spec()
    field_ = hjbgrid.solve_vi(spec, params, h, g)
    res = hjbgrid.residual_check(field_, params, h, g)
    fb = hjbgrid.extract_free_boundary(field_)
    stride = int(cfg.grid.get("surface_stride", 1))
    n_rows = hjbgrid.write_surface_csv(field_, _out(args, cfg, "surface_csv"), res.residuals, stride=stride)
    hjbgrid.write_free_boundary_csv(fb, _out(args, cfg, "free_boundary_csv"))
    payload = res.to_dict()
    payload["argmax_point"] = [res.argmax[0] * field_.dt, float(field_.x[res.argmax[1]]), res.argmax[2] * field_.dt]
    payload["grid"] = spec.to_dict()
    payload["dt"], payload["dx"] = field_.dt, field_.dx
    _write_json(_out(args, cfg, "residual_json"), payload)
    print(f"solved {spec.n_s}x{spec.n_x} grid; max |residual| = {res.max_abs:.3e}; wrote {n_rows} surface rows")
    for probe in cfg.probes:
        i, j, k = field_.node_index(*probe)
        print(f"V({probe[0]:g}, {probe[1]:g}, {probe[2]:g}) = {field_.slices[i][k, j]:.10g}")
    return EXIT_OK


def run_simulate(cfg: RunConfig, args) -> int:
    params, h, g = _model(cfg)
    n, seed = cfg.require_mc()
    strat = cfg.strategy_obj()
    if not cfg.probes:
        raise ConfigurationError("simulate needs at least one probe point")
    out = []
    for idx, (s, x, w) in enumerate(cfg.probes):
        est = estimate_value(params, h, g, strat, s, x, w, n, seed, threads=args.threads)
        out.append(est.to_dict(strategy=strat.label(), point=(s, x, w)))
        print(f"J({s:g}, {x:g}, {w:g}; {strat.label()}) = {est.mean:.6f} +/- {est.stderr:.2e}")
        if args.trace:
            record = simulate_path(params, h, g, strat, s, x, w, path_generator(seed, 0))
            write_trace_csv(record, _out(args, cfg, "trace_csv", index=idx))
    _write_json(_out(args, cfg, "estimates_json"), out)
    return EXIT_OK


def run_verify(cfg: RunConfig, args) -> int:
    params, h, g = _model(cfg)
    spec = cfg.grid_spec()
    vcfg = cfg.verify
    field_ = hjbgrid.solve_vi(spec, params, h, g)
    tol = vcfg.get("tolerance")
    tol = spec.tolerance(params) if tol is None else float(tol)
    report = verify.PropertyReport()
    report.add(verify.check_static_bounds(field_, tol=tol))
    report.add(verify.check_time_properties(field_, params, tol=tol))
    report.add(verify.check_space_properties(field_))
    report.add(verify.check_renewal_inequality(field_, h, params, tol=tol))
    report.add(verify.check_poisson_w_invariance(field_, h, tol=tol))
    levels = int(vcfg.get("trend_levels", 3))
    fields = verify.refinement_fields(spec, params, h, g, levels=levels, finest=field_) if levels >= 2 else None
    if fields is not None:
        report.add(verify.check_w_continuity_trend(fields))
    res = hjbgrid.residual_check(field_, params, h, g)
    if cfg.mc is not None and cfg.probes:
        n, seed = cfg.require_mc()
        family = verify.family_from_labels(vcfg.get("dpp_family", DEFAULT_FAMILY))
        report.add(verify.dpp_cross_check(
            field_, params, h, g, cfg.probes, family, int(vcfg.get("dpp_n_paths", n)), seed,
            h_steps=int(vcfg.get("dpp_h_steps", 10)), tol=tol, slack=vcfg.get("dpp_slack"), threads=args.threads,
        ))
    payload = report.to_dict()
    payload["residual"] = res.to_dict()
    _write_json(_out(args, cfg, "report_json"), payload)
    print(report.table())
    if not report.passed:
        for c in report.failures():
            print(f"FAILED {c.name}: worst violation {c.worst_violation:.6g} > {c.tolerance:.4g} at {c.worst_node}",
                  file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


def parse_probe(text: str) -> list[float]:
    try:
        parts = [float(v) for v in text.split(",")]
    except ValueError:
        parts = []
    if len(parts) != 3:
        raise UsageError(f"--probe expects s,x,w; got {text!r}")
    return parts


def run_bounds(cfg: RunConfig, args) -> int:
    params = cfg.params()
    probes = [parse_probe(args.probe)] if args.probe else cfg.probes
    if not probes:
        raise UsageError("bounds needs --probe s,x,w or probes in the config")
    b = hjbgrid.AnalyticBounds.from_params(params)
    header = f"{'s':>8} {'x':>8} {'w':>8} {'d_D':>10} {'Vbar':>10} {'Vunder':>10} {'x':>10} {'x+p(T-s)':>10} {'M1':>10} {'M2':>10}"
    print(header)
    for s, x, w in probes:
        d = hjbgrid.distance_to_boundary(s, x, w, params.T)
        vb = hjbgrid.supersolution_bound(s, x, w, b)
        vu = hjbgrid.subsolution_bound(s, x, w, b)
        print(f"{s:>8.4g} {x:>8.4g} {w:>8.4g} {d:>10.6f} {vb:>10.6f} {vu:>10.6f} {x:>10.6f} "
              f"{x + params.p * (params.T - s):>10.6f} {b.M1:>10.6f} {b.M2:>10.6f}")
    return EXIT_OK


COMMANDS = {"solve": run_solve, "simulate": run_simulate, "verify": run_verify, "bounds": run_bounds}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="renewal-dividends", description="Dividend value function solver and simulator for renewal risk models")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, helptext in (
        ("solve", "solve the variational inequality on a grid"),
        ("simulate", "Monte Carlo value of a fixed strategy"),
        ("verify", "solve and run the property checks"),
        ("bounds", "print the analytic bounds at a point"),
    ):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--config", required=True, help="JSON run configuration")
        p.add_argument("--threads", type=_positive_int, default=os.cpu_count() or 1)
        p.add_argument("--out-dir", default=".", help="directory for output files")
        p.add_argument("--trace", action="store_true", help="dump path 0 of each probe as CSV")
        p.add_argument("--probe", help="s,x,w (bounds)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = RunConfig.load(args.config)
        return COMMANDS[args.command](cfg, args)
    except (CFLError, NumericalFailure) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_GUARD
    except (ConfigurationError, DomainError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
