"""Command-line front end: ``nhg run``, ``nhg scenarios``, ``nhg validate``.

Exit codes: 0 all executed checks passed, 1 configuration error, 2 I/O
error, 3 a verification failed, 4 a numerical failure stopped a stage.
"""

from __future__ import annotations

import argparse
import json
import sys
import warnings
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from . import conjugacy as conj
from . import contraction as contr
from . import lyapunov as lyap
from . import transport as trans
from .ode import DEFAULT_TOL, IntegrationError
from .quadrature import QuadratureError
from .report import jsonable, rows_to_csv
from .scenario import (
    BUILTIN_NAMES,
    DEFAULT_GRIDS,
    ScenarioError,
    builtin_scenario,
    load_scenario,
    validate_document,
)

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_FAIL, EXIT_NUMERIC = 0, 1, 2, 3, 4

STAGES = ("contraction", "conjugacy", "lyapunov", "density", "transport", "basin")
REQUIRES = {
    "contraction": (),
    "conjugacy": ("contraction",),
    "lyapunov": ("contraction",),
    "density": ("lyapunov",),
    "transport": ("lyapunov", "conjugacy"),
    "basin": ("contraction",),
}
NUMERICAL_ERRORS = (IntegrationError, QuadratureError, ArithmeticError, FloatingPointError)


class ConfigError(ValueError):
    pass


def resolve_pipeline(names) -> list[str]:
    """Requested stages plus everything they depend on, in execution order."""
    wanted = set()

    def add(name):
        if name not in REQUIRES:
            raise ConfigError(f"unknown stage {name!r}; choose from {', '.join(STAGES)} or 'all'")
        if name not in wanted:
            wanted.add(name)
            for dep in REQUIRES[name]:
                add(dep)

    for name in names:
        if name == "all":
            for s in STAGES:
                add(s)
        else:
            add(name)
    return [s for s in STAGES if s in wanted]


@dataclass
class RunConfig:
    scenario: str
    pipeline: list = field(default_factory=lambda: ["all"])
    seed: int = 0
    T_max: float | None = None
    tol: float = DEFAULT_TOL
    out: str | None = None
    workers: int = 1
    strict: bool = False


@dataclass
class RunResult:
    exit_code: int
    report: dict
    messages: list


def load_run_scenario(source: str, strict: bool = False, T_max: float | None = None):
    if source in BUILTIN_NAMES:
        sc = builtin_scenario(source)
    elif Path(source).exists():
        with warnings.catch_warnings():
            warnings.simplefilter("ignore" if not strict else "error")
            sc = load_scenario(source, strict=strict)
    else:
        raise ConfigError(
            f"scenario {source!r} is neither a builtin ({', '.join(BUILTIN_NAMES)}) nor a file"
        )
    if T_max is not None:
        if not T_max > 0:
            raise ConfigError("--T-max must be positive")
        sc = sc.with_config(T_max=float(T_max))
    return sc


def _constants(sc) -> dict:
    return {
        "contraction": {"ratio_tol": contr.RATIO_TOL, "quad_tol": contr.QUAD_TOL,
                        "pq_grid_step": contr.PQ_STEP,
                        "domination_tail": contr.DOMINATION_TAIL,
                        "domination_drop": contr.DOMINATION_DROP},
        "conjugacy": {"residual_tol": conj.RESIDUAL_TOL, "bound_slack": conj.BOUND_SLACK,
                      "equilibrium_slack": conj.EQUILIBRIUM_SLACK},
        "lyapunov": {"S_tol": lyap.S_TOL, "slack_tol": lyap.SLACK_TOL,
                     "C_margin": lyap.C_MARGIN, "eps_L": lyap.EPS_L,
                     "exclusion_radius": lyap.EXCLUSION_RADIUS,
                     "positivity_rel": lyap.POSITIVITY_REL},
        "transport": {"eps0": trans.EPS0, "h_t": trans.H_T, "h_x": trans.H_X,
                      "halving_tol": trans.HALVING_TOL, "mc_batches": trans.MC_BATCHES,
                      "basin_atol_factor": trans.BASIN_ATOL_FACTOR},
        "grids": {key: sc.grid(key) for key in DEFAULT_GRIDS},
    }


class _Pipeline:
    def __init__(self, sc, cfg: RunConfig):
        self.sc = sc
        self.cfg = cfg
        self.cmap = conj.ConjugacyMap(sc, cfg.tol, workers=cfg.workers)
        self.contraction = None
        self.cert = None

    def contraction_stage(self):
        rep = contr.contraction_report(self.sc, tol=self.cfg.tol, seed=self.cfg.seed)
        self.contraction = rep
        return rep.reports, {"verdicts": rep.verdicts, "p": rep.p, "q": rep.q,
                             "window_c": rep.window_c}

    def conjugacy_stage(self):
        sc, seed, tol = self.sc, self.cfg.seed, self.cfg.tol
        cfg = sc.grid("conjugacy")
        samples = conj.sample_conjugacy_points(sc, cfg["samples"], seed)
        reps = [
            conj.verify_equivalence(sc, samples, tol, seed=seed, cmap=self.cmap),
            conj.check_boundedness(sc, samples, tol, seed=seed, cmap=self.cmap),
        ]
        if sc.r >= 1:
            jac = conj.sample_conjugacy_points(sc, cfg["jacobian_samples"], seed)
            reps.append(conj.check_jacobian(sc, (jac[0], jac[1]), tol, seed=seed, cmap=self.cmap))
        reps.append(conj.equilibrium_diagnostics(sc, tol=tol, cmap=self.cmap))
        return reps, {}

    def lyapunov_stage(self):
        sc = self.sc
        cert = lyap.build_S(sc)
        check = lyap.verify_certificate(sc, cert)
        a, info = lyap.choose_a(sc, cert)
        self.cert = cert.with_a(a)
        return [check], {"a": a, "a_choice": info, "C": cert.C, "K": cert.K, "sigma": cert.sigma}

    def density_stage(self):
        sc, seed = self.sc, self.cfg.seed
        reps = [lyap.verify_linear_density(sc, self.cert, seed=seed)]
        if sc.n <= 2:
            tcfg = sc.grid("transport")
            reps.append(lyap.linear_integrability(sc, self.cert, 0.0, tcfg["integrability_r"],
                                                  tcfg["integrability_levels"]))
        return reps, {}

    def transport_stage(self):
        sc, seed = self.sc, self.cfg.seed
        cfg = sc.grid("transport")
        td = trans.TransportedDensity(sc, self.cert, self.cmap)
        reps = [trans.verify_density_inequality(td, seed=seed)]
        mc_t = min(float(cfg["mc_t"]), sc.T_max)
        reps.append(trans.change_of_variables_check(td, mc_t, N=int(cfg["mc_N"]), seed=seed,
                                                    p=self.contraction.p))
        if sc.n <= 2:
            reps.append(trans.integrability_estimate(td, mc_t, cfg["integrability_r"],
                                                     cfg["integrability_levels"]))
        return reps, {}

    def basin_stage(self):
        return [trans.basin_monte_carlo(self.sc, seed=self.cfg.seed, tol=self.cfg.tol)], {}


def _halt_reason(pipe: _Pipeline, stage: str, states: dict) -> str | None:
    for dep in REQUIRES[stage]:
        st = states.get(dep)
        if st is None:
            return f"dependency {dep} did not run"
        if "error" in st:
            return f"dependency {dep} stopped with a numerical failure"
        if "halted" in st:
            return f"dependency {dep} was halted"
        if not st["pass"]:
            if dep == "contraction":
                failed = pipe.contraction.failed_hypotheses()
                reasons = []
                for h in failed:
                    if h == "(P4)":
                        reasons.append(f"(P4) violated: q = {round(pipe.contraction.q, 6)} ≥ 1")
                    else:
                        reasons.append(f"{h} violated")
                return "; ".join(reasons)
            return f"dependency {dep} failed"
    return None


def run(cfg: RunConfig) -> RunResult:
    """Execute the pipeline; returns the exit code, the report and messages."""
    messages = []
    try:
        stages = resolve_pipeline(cfg.pipeline)
        sc = load_run_scenario(cfg.scenario, cfg.strict, cfg.T_max)
        if cfg.workers < 1:
            raise ConfigError("--workers must be at least 1")
        if not cfg.tol > 0:
            raise ConfigError("--tol must be positive")
    except (ConfigError, ScenarioError, ValueError) as exc:
        return RunResult(EXIT_CONFIG, {}, [f"configuration error: {exc}"])
    except OSError as exc:
        return RunResult(EXIT_IO, {}, [f"I/O error: {exc}"])

    pipe = _Pipeline(sc, cfg)
    states = {}
    tables = {}
    numeric = False
    for stage in stages:
        reason = _halt_reason(pipe, stage, states)
        if reason is not None:
            states[stage] = {"halted": reason}
            messages.append(f"{stage}: halted ({reason})")
            continue
        try:
            reps, extra = getattr(pipe, f"{stage}_stage")()
        except NUMERICAL_ERRORS as exc:
            numeric = True
            states[stage] = {"error": f"{type(exc).__name__}: {exc}"}
            messages.append(f"{stage}: numerical failure: {exc}")
            continue
        passed = all(r.passed for r in reps)
        if stage == "contraction":
            passed = pipe.contraction.passed
        states[stage] = {"pass": passed, "reports": [r.to_dict() for r in reps], **jsonable(extra)}
        for r in reps:
            messages.append(f"{stage}: {r.summary()}")
            if r.table:
                tables[f"{stage}_{r.op}"] = r.table
        if not passed:
            messages.append(f"{stage}: FAILED")

    overall = all(st.get("pass", True) for st in states.values()) and not numeric
    report = {
        "tool": "nhg",
        "version": __version__,
        "timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "scenario": sc.name,
        "scenario_document": sc.config,
        "seed": cfg.seed,
        "pipeline": stages,
        "integrator_tol": cfg.tol,
        "constants": _constants(sc),
        "stages": states,
        "pass": overall,
    }
    report = jsonable(report)
    if numeric:
        code = EXIT_NUMERIC
    elif not overall:
        code = EXIT_FAIL
    else:
        code = EXIT_OK

    if cfg.out is not None:
        try:
            write_outputs(report, tables, Path(cfg.out))
        except OSError as exc:
            messages.append(f"I/O error: {exc}")
            return RunResult(EXIT_IO, report, messages)
    return RunResult(code, report, messages)


def report_json(report: dict) -> str:
    return json.dumps(report, sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def write_outputs(report: dict, tables: dict, out: Path):
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(report_json(report), encoding="utf-8")
    for name, rows in sorted(tables.items()):
        (out / f"{name}.csv").write_text(rows_to_csv(rows), encoding="utf-8")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nhg",
        description="Verify contraction, conjugacy and density certificates for "
                    "nonautonomous systems y' = A(t) y + f(t, y).",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a verification pipeline")
    p_run.add_argument("--scenario", required=True, help="builtin name or scenario JSON path")
    p_run.add_argument("--pipeline", default="all",
                       help=f"comma-separated stages from {', '.join(STAGES)}, or 'all'")
    p_run.add_argument("--seed", type=int, default=0)
    p_run.add_argument("--T-max", dest="T_max", type=float, default=None,
                       help="override the scenario horizon")
    p_run.add_argument("--tol", type=float, default=DEFAULT_TOL, help="integrator tolerance")
    p_run.add_argument("--out", default=None, help="directory for report.json and CSV tables")
    p_run.add_argument("--workers", type=int, default=1,
                       help="threads for sample sweeps (does not change results)")
    p_run.add_argument("--strict", action="store_true",
                       help="treat scenario warnings as errors")
    p_run.add_argument("--quiet", action="store_true", help="only print the final verdict")

    sub.add_parser("scenarios", help="list builtin scenarios")

    p_val = sub.add_parser("validate", help="schema-check a scenario file")
    p_val.add_argument("path")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)

    if args.command == "scenarios":
        for name in BUILTIN_NAMES:
            sc = builtin_scenario(name)
            print(f"{name:16s} n={sc.n}  family={sc.config.get('family', 'custom'):24s} "
                  f"T_max={sc.T_max:g}")
        return EXIT_OK

    if args.command == "validate":
        path = Path(args.path)
        if not path.exists():
            print(f"I/O error: {path} does not exist", file=sys.stderr)
            return EXIT_IO
        problems = validate_document(path)
        if problems:
            for msg in problems:
                print(f"invalid: {msg}", file=sys.stderr)
            return EXIT_CONFIG
        print(f"{path}: valid")
        return EXIT_OK

    cfg = RunConfig(
        scenario=args.scenario,
        pipeline=[s.strip() for s in args.pipeline.split(",") if s.strip()],
        seed=args.seed,
        T_max=args.T_max,
        tol=args.tol,
        out=args.out,
        workers=args.workers,
        strict=args.strict,
    )
    result = run(cfg)
    stream = sys.stderr if result.exit_code else sys.stdout
    if not args.quiet:
        for msg in result.messages:
            print(msg, file=stream)
    if result.report and cfg.out is None and not args.quiet:
        sys.stdout.write(report_json(result.report))
    verdict = {EXIT_OK: "PASS", EXIT_FAIL: "FAIL", EXIT_NUMERIC: "NUMERICAL FAILURE",
               EXIT_CONFIG: "CONFIG ERROR", EXIT_IO: "IO ERROR"}[result.exit_code]
    print(f"nhg: {verdict} (exit {result.exit_code})", file=stream)
    return result.exit_code


if __name__ == "__main__":
    sys.exit(main())
