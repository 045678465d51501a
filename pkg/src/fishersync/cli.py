"""Command line front end.

Exit codes: 0 success, 1 gate failure, 2 usage or config error,
3 model violation (pattern not independent).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import bounds, fisherineq, montecarlo
from .dist import FamilyCatalog, Gaussian, Logistic, NonConvergent, spec_from_dict
from .montecarlo import ExperimentConfig, ExperimentResult, TauStar, fmt_float
from .pattern import (
    MeetingPattern,
    PatternError,
    PatternNotIndependent,
    gen_broadcast,
    gen_hypercube,
    gen_random_independent,
    gen_tournament,
    load_pattern,
    save_pattern,
    validate_independence,
)
from .sync import Algorithm

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_MODEL = 0, 1, 2, 3
SEED_ENV = "FSYNC_SEED"
CONFIG_FIELDS = {
    "version",
    "pattern",
    "catalog",
    "assignment",
    "algorithm",
    "trials",
    "tau_star",
    "seed",
    "anchored",
    "epsilon",
    "outputs",
}


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    pattern_path: Path | None
    catalog: FamilyCatalog
    assignment: str | list[int] = "round_robin"
    algorithm: Algorithm = Algorithm.ALG
    trials: int = 1000
    tau_star: TauStar = field(default_factory=TauStar)
    seed: int | None = None
    anchored: list[int] = field(default_factory=list)
    epsilon: float = 0.1
    outputs: dict[str, str] = field(default_factory=dict)

    def resolve_assignment(self, n: int) -> tuple[int, ...]:
        if self.assignment == "round_robin":
            return montecarlo.round_robin(n, len(self.catalog.initial_specs))
        if isinstance(self.assignment, list) and len(self.assignment) == n:
            return tuple(int(i) for i in self.assignment)
        raise ConfigError(f"assignment must be 'round_robin' or a list of {n} catalog indices")

    def experiment(self, pattern: MeetingPattern) -> ExperimentConfig:
        if self.seed is None:
            raise ConfigError(f"no seed: set 'seed' in the config or {SEED_ENV}")
        return ExperimentConfig(
            pattern=pattern,
            catalog=self.catalog,
            assignment=self.resolve_assignment(pattern.n),
            trials=self.trials,
            seed=self.seed,
            algorithm=self.algorithm,
            tau_star=self.tau_star,
            anchored=frozenset(self.anchored),
        )


def _env_seed() -> int | None:
    raw = os.environ.get(SEED_ENV)
    if raw is None or raw == "":
        return None
    try:
        return int(raw)
    except ValueError as exc:
        raise ConfigError(f"{SEED_ENV} must be an integer, got {raw!r}") from exc


def parse_run_config(d: dict, base: Path = Path(".")) -> RunConfig:
    if d.get("version") != 1:
        raise ConfigError("config needs \"version\": 1")
    unknown = set(d) - CONFIG_FIELDS
    if unknown:
        raise ConfigError(f"unknown config fields: {sorted(unknown)}")
    if "catalog" not in d:
        raise ConfigError("config needs a catalog")
    try:
        catalog = FamilyCatalog.from_dict(d["catalog"])
        cfg = RunConfig(
            pattern_path=(base / d["pattern"]) if "pattern" in d else None,
            catalog=catalog,
            assignment=d.get("assignment", "round_robin"),
            algorithm=Algorithm(d.get("algorithm", "alg")),
            trials=int(d.get("trials", 1000)),
            tau_star=TauStar.from_dict(d.get("tau_star", {"fixed": 0.0})),
            seed=int(d["seed"]) if "seed" in d else _env_seed(),
            anchored=[int(a) for a in d.get("anchored", [])],
            epsilon=float(d.get("epsilon", 0.1)),
            outputs=dict(d.get("outputs", {})),
        )
    except ConfigError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad config: {exc}") from exc
    unknown_out = set(cfg.outputs) - {"result", "bounds"}
    if unknown_out:
        raise ConfigError(f"unknown outputs: {sorted(unknown_out)}")
    return cfg


def load_run_config(path) -> RunConfig:
    path = Path(path)
    try:
        with open(path) as fh:
            d = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_run_config(d, path.parent)


def _load_pattern(path) -> MeetingPattern:
    if path is None:
        raise ConfigError("no pattern given")
    try:
        return load_pattern(path)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read pattern {path}: {exc}") from exc


def bounds_rows(traj: bounds.FisherTrajectory, rounds: int) -> str:
    J = montecarlo._pad_rounds(traj.as_array(), rounds)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("sensor", "round", "J", "var_floor"))
    for a in range(J.shape[1]):
        for t in range(J.shape[0]):
            w.writerow((a, t, fmt_float(J[t, a]), fmt_float(1.0 / J[t, a])))
    return buf.getvalue()


def read_bounds(path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows or tuple(rows[0].keys()) != ("sensor", "round", "J", "var_floor"):
        raise ValueError(f"{path}: expected columns sensor,round,J,var_floor")
    n = 1 + max(int(r["sensor"]) for r in rows)
    rounds = 1 + max(int(r["round"]) for r in rows)
    if len(rows) != n * rounds:
        raise ValueError(f"{path}: rows do not form a {rounds}x{n} table")
    J = np.empty((rounds, n))
    for r in rows:
        J[int(r["round"]), int(r["sensor"])] = float(r["J"])
    return J


def _write(path, text: str) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(text)


# --- subcommands -----------------------------------------------------------


def cmd_pattern_gen(args) -> int:
    if args.kind != "broadcast" and args.n is None:
        raise ConfigError(f"{args.kind} patterns need --n")
    seed = args.seed if args.seed is not None else _env_seed()
    rng = np.random.default_rng(seed) if seed is not None else None
    if args.kind == "random":
        if rng is None:
            raise ConfigError(f"random patterns need --seed or {SEED_ENV}")
        if args.rounds is None:
            raise ConfigError("random patterns need --rounds")
        pattern = gen_random_independent(args.n, args.rounds, args.density, rng)
    elif args.kind == "broadcast":
        if args.sources is None or args.learners is None:
            raise ConfigError("broadcast patterns need --sources and --learners")
        pattern = gen_broadcast(args.sources, args.learners)
    elif args.kind == "tournament":
        pattern = gen_tournament(args.n, rng)
    else:
        pattern = gen_hypercube(args.n, rng)
    save_pattern(pattern, args.output)
    print(f"wrote {args.output}: n={pattern.n}, {len(pattern.events)} events, depth {pattern.depth}")
    return EXIT_OK


def cmd_pattern_validate(args) -> int:
    pattern = _load_pattern(args.file)
    report = validate_independence(pattern)
    if report:
        print(f"OK: n={pattern.n}, {len(pattern.events)} events, depth {pattern.depth}, independent")
        return EXIT_OK
    print(f"NOT INDEPENDENT: {report}")
    return EXIT_FAIL


def _experiment_from_args(args) -> tuple[RunConfig, MeetingPattern, ExperimentConfig]:
    cfg = load_run_config(args.config)
    if getattr(args, "algorithm", None):
        cfg.algorithm = Algorithm(args.algorithm)
    if getattr(args, "trials", None):
        cfg.trials = args.trials
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    pattern_path = getattr(args, "pattern", None) or cfg.pattern_path
    pattern = _load_pattern(pattern_path)
    return cfg, pattern, cfg.experiment(pattern)


def _trajectory(exp: ExperimentConfig) -> bounds.FisherTrajectory:
    initial = [s.fisher_information() for s in exp.specs]
    return bounds.fi_recursion(exp.effective_pattern, initial, exp.noise.fisher_information(), check_independence=False)


def cmd_bounds(args) -> int:
    cfg = load_run_config(args.config)
    pattern = _load_pattern(args.pattern or cfg.pattern_path)
    report = validate_independence(pattern)
    if not report:
        raise PatternNotIndependent(report)
    if cfg.seed is None:
        cfg.seed = 0  # bounds never draw random numbers
    exp = cfg.experiment(pattern)
    out = args.output or cfg.outputs.get("bounds")
    if not out:
        raise ConfigError("no output path: pass -o")
    _write(out, bounds_rows(_trajectory(exp), pattern.depth + 1))
    print(f"wrote {out}")
    return EXIT_OK


def _meta_path(result_path) -> Path:
    return Path(str(result_path) + ".meta.json")


def cmd_run(args) -> int:
    cfg, pattern, exp = _experiment_from_args(args)
    out = args.output or cfg.outputs.get("result")
    if not out:
        raise ConfigError("no output path: pass -o")
    workers = args.workers or montecarlo.default_workers()
    result = montecarlo.run_experiment(exp, workers=workers, keep_trials=args.dump_trials)
    result.to_csv(out)
    meta = {
        "version": 1,
        "trials": exp.trials,
        "seed": exp.seed,
        "algorithm": exp.algorithm.value,
        "tau_star": exp.tau_star.to_dict(),
        "delta0": result.delta0,
        "noise_variance": result.noise_variance,
        "j_noise": result.j_noise,
        "initial_fi": [s.fisher_information() for s in exp.specs],
        "anchored": sorted(exp.anchored),
        "epsilon": cfg.epsilon,
        "pattern": pattern.to_dict(),
    }
    with open(_meta_path(out), "w", newline="") as fh:
        json.dump(meta, fh, indent=1)
        fh.write("\n")
    if args.dump_trials:
        trials_path = Path(out).with_suffix(".trials.csv")
        montecarlo.dump_trials_csv(result, trials_path)
        print(f"wrote {trials_path}")
    print(f"wrote {out} ({exp.trials} trials, {pattern.n} sensors, {pattern.depth} rounds)")
    return EXIT_OK


def load_result(path) -> tuple[ExperimentResult, dict]:
    """Rebuild an :class:`ExperimentResult` from a result CSV and its sidecar."""
    table = montecarlo.read_result_table(path)
    with open(_meta_path(path)) as fh:
        meta = json.load(fh)
    alg = Algorithm(meta["algorithm"])
    tau = TauStar.from_dict(meta["tau_star"])
    result = ExperimentResult(
        mean=table["mean"],
        variance=table["variance"],
        accuracy=table["accuracy"] if alg is Algorithm.ALG else None,
        fi_bound=table["fi_bound"],
        trials=int(meta["trials"]),
        delta0=float(meta["delta0"]),
        noise_variance=float(meta["noise_variance"]),
        j_noise=float(meta["j_noise"]),
        algorithm=alg,
        tau_star=tau.fixed if tau.uniform is None else 0.0,
    )
    return result, meta


def run_report(result: ExperimentResult, meta: dict, J: np.ndarray, rel_tol: float | None, epsilon: float) -> list[montecarlo.CheckReport]:
    pattern = MeetingPattern.from_dict(meta["pattern"])
    eff = pattern.without_observers(meta.get("anchored", []))
    if J.shape != result.shape:
        raise montecarlo.MismatchedShapes(f"bounds {J.shape} vs result {result.shape}")
    # per-event increments from the supplied bounds table
    increments = [(e, bounds.fi_increment(J[e.round, e.observed], result.j_noise)) for e in eff.events]
    traj = bounds.FisherTrajectory(eff, J.tolist(), result.j_noise, increments)
    reports = [
        montecarlo.check_unbiasedness(result, result.tau_star),
        montecarlo.check_accuracy_matches_variance(result, rel_tol),
        *montecarlo.check_competitiveness(result, traj, result.delta0, rel_tol),
        montecarlo.check_convergence_time(result, pattern, epsilon, meta["initial_fi"]),
    ]
    same = np.allclose(J, result.fi_bound, rtol=1e-12, atol=0)
    reports.append(
        montecarlo.CheckReport("bounds_match_result", bool(same), J.size, [] if same else [{"note": "fi_bound column differs from bounds file"}])
    )
    return reports


def cmd_report(args) -> int:
    try:
        result, meta = load_result(args.result)
        J = read_bounds(args.bounds)
    except (OSError, KeyError, ValueError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read inputs: {exc}") from exc
    epsilon = args.epsilon if args.epsilon is not None else float(meta.get("epsilon", 0.1))
    try:
        reports = run_report(result, meta, J, args.rel_tol, epsilon)
    except montecarlo.MismatchedShapes as exc:
        raise ConfigError(str(exc)) from exc
    print(f"delta0 = {fmt_float(result.delta0)}; trials = {result.trials}; algorithm = {result.algorithm.value}")
    print("kappa-style ratios are maxima over this experiment only, not over all patterns")
    for r in reports:
        print(r.line())
    ok = all(r.passed for r in reports)
    summary = {
        "passed": ok,
        "delta0": result.delta0,
        "trials": result.trials,
        "checks": [r.to_dict() for r in reports],
    }
    summary_path = args.summary or str(args.result) + ".report.json"
    with open(summary_path, "w", newline="") as fh:
        json.dump(summary, fh, indent=1, default=_json_default)
        fh.write("\n")
    print("ALL GATES PASS" if ok else "GATE FAILURE")
    return EXIT_OK if ok else EXIT_FAIL


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.bool_):
        return bool(o)
    raise TypeError(type(o))


def cmd_verify_fii(args) -> int:
    ok = True
    if args.two_d:
        noise = Gaussian(args.noise_variance)
        for rho in args.rho:
            p1 = fisherineq.BivariateGaussianSpec(1.0, 1.0, rho)
            g1 = g3 = None
            if args.grid:
                g1, g3 = fisherineq.default_grids_2d(p1, noise, points=args.grid)
            res = fisherineq.check_fii_2d_dependent(p1, noise, g1, g3)
            err1 = abs(res.j_p1 / res.j_p1_closed - 1)
            err2 = abs(res.j_r / res.j_r_closed - 1)
            good = err1 <= 1e-4 and err2 <= 1e-4 and res.slack >= -1e-4
            ok &= good
            print(
                f"rho={rho:g}: J_p1={fmt_float(res.j_p1)} (closed {fmt_float(res.j_p1_closed)}), "
                f"J_N={fmt_float(res.j_p2)}, J_r={fmt_float(res.j_r)} (closed {fmt_float(res.j_r_closed)}), "
                f"slack={res.slack:.3e} {'OK' if good else 'VIOLATION'}"
            )
    else:
        p1 = spec_from_dict(json.loads(args.p1)) if args.p1 else Logistic(1.0)
        p2 = spec_from_dict(json.loads(args.p2)) if args.p2 else Gaussian(1.0)
        grid = fisherineq.default_grid(p1, p2, points=args.grid) if args.grid else None
        res = fisherineq.check_fii_1d(p1, p2, grid)
        ok = res.slack >= -1e-5
        print(
            f"J_p1={fmt_float(res.j_p1)} J_p2={fmt_float(res.j_p2)} J_r={fmt_float(res.j_r)} "
            f"slack={res.slack:.6e} {'OK' if ok else 'VIOLATION'}"
        )
    return EXIT_OK if ok else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="fishersync", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    pat = sub.add_parser("pattern", help="generate or validate meeting patterns")
    psub = pat.add_subparsers(dest="action", required=True)
    gen = psub.add_parser("gen")
    gen.add_argument("--kind", choices=("tournament", "random", "hypercube", "broadcast"), required=True)
    gen.add_argument("--n", type=int)
    gen.add_argument("--sources", type=int)
    gen.add_argument("--learners", type=int)
    gen.add_argument("--rounds", type=int)
    gen.add_argument("--density", type=float, default=0.5)
    gen.add_argument("--seed", type=int)
    gen.add_argument("-o", "--output", required=True)
    gen.set_defaults(func=cmd_pattern_gen)
    val = psub.add_parser("validate")
    val.add_argument("file")
    val.set_defaults(func=cmd_pattern_validate)

    b = sub.add_parser("bounds", help="Fisher-information bounds per sensor and round")
    b.add_argument("--pattern")
    b.add_argument("--config", required=True)
    b.add_argument("-o", "--output")
    b.set_defaults(func=cmd_bounds)

    r = sub.add_parser("run", help="run a Monte Carlo experiment")
    r.add_argument("--config", required=True)
    r.add_argument("--pattern")
    r.add_argument("--algorithm", choices=[a.value for a in Algorithm])
    r.add_argument("--trials", type=int)
    r.add_argument("--seed", type=int)
    r.add_argument("--workers", type=int)
    r.add_argument("--dump-trials", action="store_true")
    r.add_argument("-o", "--output")
    r.set_defaults(func=cmd_run)

    rep = sub.add_parser("report", help="pass/fail gates for a finished run")
    rep.add_argument("--result", required=True)
    rep.add_argument("--bounds", required=True)
    rep.add_argument("--rel-tol", type=float)
    rep.add_argument("--epsilon", type=float)
    rep.add_argument("--summary")
    rep.set_defaults(func=cmd_report)

    v = sub.add_parser("verify-fii", help="numerically check the Fisher information inequality")
    v.add_argument("--two-d", action="store_true")
    v.add_argument("--rho", type=float, nargs="+", default=[0.0, 0.5, 0.9])
    v.add_argument("--grid", type=int)
    v.add_argument("--noise-variance", type=float, default=1.0)
    v.add_argument("--p1", help='JSON spec, e.g. \'{"kind":"logistic","scale":1.0}\'')
    v.add_argument("--p2")
    v.set_defaults(func=cmd_verify_fii)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except PatternNotIndependent as exc:
        print(f"error: pattern not independent: {exc}", file=sys.stderr)
        return EXIT_MODEL
    except (ConfigError, PatternError, NonConvergent, fisherineq.GridError, ValueError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
