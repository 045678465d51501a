"""Multi-trial experiments and the statistical/deterministic gates on their output."""

from __future__ import annotations

import csv
import io
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import bounds
from .dist import DistributionSpec, FamilyCatalog
from .pattern import MeetingPattern, require_independent
from .sync import (
    Algorithm,
    AssignmentIncomplete,
    accuracy_trajectory,
    reduced_accuracy,
    simulate_rounds,
    trial_rng,
)

# Trials per chunk. Fixed so results do not depend on the worker count.
CHUNK_TRIALS = 2048
UNBIASED_SIGMAS = 4.0
UNBIASED_BUDGET = 0.005
EXACT_SLACK = 1e-12


@dataclass(frozen=True)
class TauStar:
    """Start-time policy: a fixed value, or a per-trial uniform draw on ``[lo, hi]``."""

    fixed: float | None = 0.0
    uniform: tuple[float, float] | None = None

    def __post_init__(self):
        if (self.fixed is None) == (self.uniform is None):
            raise ValueError("give exactly one of fixed / uniform")
        if self.uniform is not None and not self.uniform[0] <= self.uniform[1]:
            raise ValueError("uniform interval must have lo <= hi")

    def draw(self, rng: np.random.Generator) -> float:
        if self.uniform is not None:
            return float(rng.uniform(*self.uniform))
        return float(self.fixed)

    def to_dict(self) -> dict:
        return {"fixed": self.fixed} if self.uniform is None else {"uniform": list(self.uniform)}

    @classmethod
    def from_dict(cls, d) -> "TauStar":
        if isinstance(d, (int, float)):
            return cls(fixed=float(d))
        unknown = set(d) - {"fixed", "uniform"}
        if unknown:
            raise ValueError(f"unknown tau_star fields: {sorted(unknown)}")
        if "uniform" in d:
            lo, hi = d["uniform"]
            return cls(fixed=None, uniform=(float(lo), float(hi)))
        return cls(fixed=float(d["fixed"]))


def round_robin(n: int, k: int) -> tuple[int, ...]:
    return tuple(a % k for a in range(n))


@dataclass(frozen=True)
class ExperimentConfig:
    pattern: MeetingPattern
    catalog: FamilyCatalog
    assignment: tuple[int, ...]
    trials: int
    seed: int
    algorithm: Algorithm = Algorithm.ALG
    tau_star: TauStar = field(default_factory=TauStar)
    anchored: frozenset[int] = frozenset()
    check_independence: bool = True

    def __post_init__(self):
        object.__setattr__(self, "assignment", tuple(int(i) for i in self.assignment))
        object.__setattr__(self, "anchored", frozenset(int(a) for a in self.anchored))
        object.__setattr__(self, "algorithm", Algorithm(self.algorithm))
        if self.trials < 2:
            raise ValueError("need at least two trials")
        if len(self.assignment) != self.pattern.n:
            raise AssignmentIncomplete(f"assignment covers {len(self.assignment)} of {self.pattern.n} sensors")
        k = len(self.catalog.initial_specs)
        if any(not 0 <= i < k for i in self.assignment):
            raise ValueError(f"assignment indices must lie in 0..{k - 1}")
        if any(not 0 <= a < self.pattern.n for a in self.anchored):
            raise ValueError("anchored sensor out of range")

    @property
    def specs(self) -> list[DistributionSpec]:
        return [self.catalog.initial_specs[i] for i in self.assignment]

    @property
    def noise(self) -> DistributionSpec:
        return self.catalog.noise_spec

    @property
    def effective_pattern(self) -> MeetingPattern:
        return self.pattern.without_observers(self.anchored)


@dataclass
class Moments:
    """Count, mean and sum of squared deviations, merged pairwise (Chan et al.)."""

    count: int
    mean: np.ndarray
    m2: np.ndarray

    @classmethod
    def of(cls, x: np.ndarray) -> "Moments":
        mean = x.mean(axis=0)
        return cls(x.shape[0], mean, np.square(x - mean).sum(axis=0))

    def merge(self, other: "Moments") -> "Moments":
        n = self.count + other.count
        delta = other.mean - self.mean
        mean = self.mean + delta * (other.count / n)
        m2 = self.m2 + other.m2 + np.square(delta) * (self.count * other.count / n)
        return Moments(n, mean, m2)

    @property
    def variance(self) -> np.ndarray:
        return self.m2 / (self.count - 1)


@dataclass
class ExperimentResult:
    """Per-round, per-sensor statistics; every array is indexed ``[round, sensor]``.

    With a uniform τ* policy the statistics describe the error ``x - τ*``.
    """

    mean: np.ndarray
    variance: np.ndarray
    accuracy: np.ndarray | None
    fi_bound: np.ndarray
    trials: int
    delta0: float
    noise_variance: float
    j_noise: float
    algorithm: Algorithm
    tau_star: float | None
    trajectories: np.ndarray | None = None

    @property
    def var_floor(self) -> np.ndarray:
        return 1.0 / self.fi_bound

    @property
    def ratio(self) -> np.ndarray:
        return self.variance * self.fi_bound

    @property
    def shape(self) -> tuple[int, int]:
        return self.mean.shape

    def to_csv(self, path=None) -> str:
        text = result_csv(self)
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text


def _chunk_moments(config: ExperimentConfig, start: int, stop: int, keep: bool):
    rngs = [trial_rng(config.seed, k) for k in range(start, stop)]
    taus = np.array([config.tau_star.draw(r) for r in rngs])
    per_round = []
    kept = []
    for x in simulate_rounds(config.pattern, config.specs, config.noise, config.algorithm, rngs, taus, config.anchored):
        if config.tau_star.uniform is not None:
            x = x - taus[:, None]
        per_round.append(Moments.of(x))
        if keep:
            kept.append(x)
    mean = np.array([m.mean for m in per_round])
    m2 = np.array([m.m2 for m in per_round])
    traj = np.stack(kept, axis=1) if keep else None
    return Moments(stop - start, mean, m2), traj


def _chunk_job(args):
    return _chunk_moments(*args)


def run_experiment(
    config: ExperimentConfig,
    workers: int = 1,
    keep_trials: bool = False,
) -> ExperimentResult:
    """Run ``config.trials`` seeded trials and aggregate per-cell moments.

    Trial ``k`` draws from :func:`fishersync.sync.trial_rng` ``(seed, k)``, so
    any single trial can be replayed with :func:`fishersync.sync.run_trial`.
    Chunks are merged in order, so the result does not depend on ``workers``.
    """
    if config.check_independence:
        require_independent(config.pattern)
    jobs = [
        (config, s, min(s + CHUNK_TRIALS, config.trials), keep_trials)
        for s in range(0, config.trials, CHUNK_TRIALS)
    ]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_chunk_job, jobs))
    else:
        parts = [_chunk_job(j) for j in jobs]

    total = parts[0][0]
    for m, _ in parts[1:]:
        total = total.merge(m)

    specs = config.specs
    noise_var = config.noise.variance()
    j_noise = config.noise.fisher_information()
    eff = config.effective_pattern
    traj = bounds.fi_recursion(eff, [s.fisher_information() for s in specs], j_noise, check_independence=False)
    fi = _pad_rounds(traj.as_array(), config.pattern.depth + 1)
    accuracy = None
    if config.algorithm is Algorithm.ALG:
        accuracy = _pad_rounds(accuracy_trajectory(eff, specs, noise_var), config.pattern.depth + 1)
    return ExperimentResult(
        mean=total.mean,
        variance=total.variance,
        accuracy=accuracy,
        fi_bound=fi,
        trials=config.trials,
        delta0=config.catalog.delta0(),
        noise_variance=noise_var,
        j_noise=j_noise,
        algorithm=config.algorithm,
        tau_star=config.tau_star.fixed if config.tau_star.uniform is None else 0.0,
        trajectories=np.concatenate([t for _, t in parts]) if keep_trials else None,
    )


def _pad_rounds(a: np.ndarray, rows: int) -> np.ndarray:
    if a.shape[0] < rows:
        a = np.vstack([a, np.repeat(a[-1:], rows - a.shape[0], axis=0)])
    return a


def default_rel_tol(trials: int) -> float:
    """Five standard errors of a sample variance: ``5 * sqrt(2 / trials)``."""
    return 5.0 * math.sqrt(2.0 / trials)


@dataclass
class CheckReport:
    name: str
    passed: bool
    cells: int
    violations: list[dict] = field(default_factory=list)
    detail: dict = field(default_factory=dict)
    skipped: bool = False

    def line(self) -> str:
        status = "SKIP" if self.skipped else ("PASS" if self.passed else "FAIL")
        extra = ", ".join(f"{k}={_fmt(v)}" for k, v in self.detail.items())
        return f"{status} {self.name}: {len(self.violations)}/{self.cells} cells flagged" + (f" ({extra})" if extra else "")

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "passed": self.passed,
            "skipped": self.skipped,
            "cells": self.cells,
            "violations": self.violations[:50],
            "violation_count": len(self.violations),
            "detail": self.detail,
        }


def _fmt(v):
    return f"{v:.6g}" if isinstance(v, float) else str(v)


def _cells(mask: np.ndarray, **columns) -> list[dict]:
    out = []
    for t, a in zip(*np.nonzero(mask)):
        row = {"round": int(t), "sensor": int(a)}
        row.update({k: float(v[t, a]) for k, v in columns.items()})
        out.append(row)
    return out


def check_unbiasedness(
    result: ExperimentResult,
    tau_star: float,
    sigmas: float = UNBIASED_SIGMAS,
    budget: float = UNBIASED_BUDGET,
) -> CheckReport:
    """Flag cells whose mean sits more than ``sigmas`` standard errors from τ*.

    Passes when at most a ``budget`` fraction of cells is flagged.
    """
    se = np.sqrt(result.variance / result.trials)
    dev = np.abs(result.mean - tau_star)
    bad = dev > sigmas * se
    cells = bad.size
    expected = cells * math.erfc(sigmas / math.sqrt(2))
    return CheckReport(
        "unbiasedness",
        bad.sum() <= budget * cells,
        cells,
        _cells(bad, mean=result.mean, variance=result.variance),
        {"sigmas": sigmas, "budget": budget, "expected_false_positives": expected},
    )


def check_accuracy_matches_variance(result: ExperimentResult, rel_tol: float | None = None) -> CheckReport:
    """Per cell ``|variance * accuracy - 1| <= rel_tol`` (ALG only)."""
    if rel_tol is None:
        rel_tol = default_rel_tol(result.trials)
    if result.algorithm is not Algorithm.ALG or result.accuracy is None:
        return CheckReport("accuracy_is_reciprocal_variance", True, 0, skipped=True)
    prod = result.variance * result.accuracy
    bad = np.abs(prod - 1.0) > rel_tol
    return CheckReport(
        "accuracy_is_reciprocal_variance",
        not bad.any(),
        bad.size,
        _cells(bad, variance_times_accuracy=prod),
        {"rel_tol": rel_tol, "max_abs_dev": float(np.max(np.abs(prod - 1.0)))},
    )


def check_competitiveness(
    result: ExperimentResult,
    traj: bounds.FisherTrajectory,
    delta0: float,
    rel_tol: float | None = None,
) -> list[CheckReport]:
    """Deterministic, per-event and statistical Δ₀-competitiveness gates.

    * exact: ``c * Δ₀ >= J`` at every cell (``EXACT_SLACK`` relative);
    * per event: the accuracy gain ``ĉ_b`` is at least ``(1/Δ₀) / (1/J_b + 1/J_N)``;
    * statistical: ``variance <= Δ₀ / J * (1 + rel_tol)``.
    """
    if rel_tol is None:
        rel_tol = default_rel_tol(result.trials)
    J = _pad_rounds(traj.as_array(), result.shape[0])
    if J.shape != result.shape:
        raise MismatchedShapes(f"trajectory {J.shape} vs result {result.shape}")
    reports = []
    if result.algorithm is not Algorithm.ALG or result.accuracy is None:
        reports.append(CheckReport("accuracy_dominates_fi", True, 0, skipped=True))
        reports.append(CheckReport("per_event_gain", True, 0, skipped=True))
    else:
        c = result.accuracy
        lhs, rhs = c * delta0, J
        bad = lhs < rhs * (1.0 - EXACT_SLACK)
        reports.append(
            CheckReport(
                "accuracy_dominates_fi",
                not bad.any(),
                bad.size,
                _cells(bad, accuracy=c, fi=J),
                {"delta0": delta0, "min_ratio": float(np.min(lhs / rhs))},
            )
        )
        flagged = []
        min_ratio = math.inf
        j_noise = float(traj.j_noise)
        for e, _ in traj.increments:
            gain = reduced_accuracy(c[e.round, e.observed], result.noise_variance)
            need = bounds.fi_increment(J[e.round, e.observed], j_noise) / delta0
            min_ratio = min(min_ratio, gain / need)
            if gain < need * (1.0 - EXACT_SLACK):
                flagged.append({"round": e.round, "observer": e.observer, "observed": e.observed, "gain": float(gain), "need": float(need)})
        reports.append(
            CheckReport(
                "per_event_gain",
                not flagged,
                len(traj.increments),
                flagged,
                {"min_ratio": min_ratio},
            )
        )
    limit = delta0 / J * (1.0 + rel_tol)
    bad = result.variance > limit
    reports.append(
        CheckReport(
            "variance_within_delta0",
            not bad.any(),
            bad.size,
            _cells(bad, variance=result.variance, limit=limit),
            {"rel_tol": rel_tol, "max_var_times_J": float(np.max(result.variance * J))},
        )
    )
    return reports


class MismatchedShapes(ValueError):
    pass


def check_convergence_time(
    result: ExperimentResult,
    pattern: MeetingPattern,
    epsilon: float,
    initial_fi: Sequence[float],
) -> CheckReport:
    """Empirical T(ε) must not beat the channel-capacity lower bound."""
    lb = bounds.convergence_lower_bound(epsilon, initial_fi, result.j_noise)
    t_emp = bounds.empirical_convergence_time(result, pattern, epsilon)
    detail = {"epsilon": epsilon, "bound": lb.bound, "empirical": t_emp, "j0": lb.j0_median}
    if math.isinf(t_emp):
        return CheckReport("convergence_time", True, 1, [], detail, skipped=True)
    return CheckReport("convergence_time", t_emp >= lb.bound, 1, [] if t_emp >= lb.bound else [detail], detail)


@dataclass(frozen=True)
class KappaPoint:
    depth: int
    kappa: float
    max_variance: float


def kappa_trend(configs: Sequence[ExperimentConfig], workers: int = 1) -> list[KappaPoint]:
    """Max over sensors of ``variance * J`` at the final round, per depth."""
    depths = [c.pattern.depth for c in configs]
    if any(b <= a for a, b in zip(depths, depths[1:])):
        raise ValueError(f"depths must increase strictly, got {depths}")
    out = []
    for cfg in configs:
        res = run_experiment(cfg, workers=workers)
        out.append(KappaPoint(cfg.pattern.depth, float(res.ratio[-1].max()), float(res.variance[-1].max())))
    return out


RESULT_COLUMNS = ("sensor", "round", "mean", "variance", "accuracy", "fi_bound", "var_floor", "ratio_var_times_J")


def fmt_float(v) -> str:
    if v is None:
        return ""
    v = float(v)
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return format(v, ".17g")


def result_csv(result: ExperimentResult) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RESULT_COLUMNS)
    rounds, n = result.shape
    alg = result.algorithm is Algorithm.ALG
    ratio, floor = result.ratio, result.var_floor
    for a in range(n):
        for t in range(rounds):
            w.writerow(
                [
                    a,
                    t,
                    fmt_float(result.mean[t, a]),
                    fmt_float(result.variance[t, a]),
                    fmt_float(result.accuracy[t, a]) if alg else "",
                    fmt_float(result.fi_bound[t, a]),
                    fmt_float(floor[t, a]),
                    fmt_float(ratio[t, a]) if alg else "",
                ]
            )
    return buf.getvalue()


def read_result_table(path) -> dict[str, np.ndarray]:
    """Parse a result CSV into ``[round, sensor]`` arrays (blank cells become NaN)."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows or tuple(rows[0].keys()) != RESULT_COLUMNS:
        raise ValueError(f"{path}: expected columns {','.join(RESULT_COLUMNS)}")
    n = 1 + max(int(r["sensor"]) for r in rows)
    rounds = 1 + max(int(r["round"]) for r in rows)
    if len(rows) != n * rounds:
        raise ValueError(f"{path}: {len(rows)} rows do not form a {rounds}x{n} table")
    out = {c: np.full((rounds, n), np.nan) for c in RESULT_COLUMNS[2:]}
    for r in rows:
        t, a = int(r["round"]), int(r["sensor"])
        for c in RESULT_COLUMNS[2:]:
            if r[c] != "":
                out[c][t, a] = float(r[c])
    return out


def dump_trials_csv(result: ExperimentResult, path) -> None:
    traj = result.trajectories
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("trial", "sensor", "round", "opinion"))
        trials, rounds, n = traj.shape
        for k in range(trials):
            for a in range(n):
                for t in range(rounds):
                    w.writerow((k, a, t, fmt_float(traj[k, t, a])))


def default_workers() -> int:
    return os.cpu_count() or 1


__all__ = [
    "CheckReport",
    "ExperimentConfig",
    "ExperimentResult",
    "KappaPoint",
    "MismatchedShapes",
    "Moments",
    "TauStar",
    "check_accuracy_matches_variance",
    "check_competitiveness",
    "check_convergence_time",
    "check_unbiasedness",
    "kappa_trend",
    "round_robin",
    "run_experiment",
]
