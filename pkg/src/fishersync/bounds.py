"""Upper bounds on any algorithm's Fisher information and the variance floors they imply."""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from .pattern import MeetingEvent, MeetingPattern, require_independent

INFINITE = math.inf  # noiseless channel: the recursion becomes additive


def fi_increment(j_b, j_noise):
    """FI an observer can gain by observing a sensor holding FI ``j_b``."""
    if j_noise == INFINITE:
        return j_b
    return 1 / (1 / j_b + 1 / j_noise)


@dataclass(frozen=True)
class FisherTrajectory:
    """``J[t][a]`` for ``t = 0 .. depth`` plus the increment of every event.

    Entries are floats, or :class:`fractions.Fraction` when built with
    ``exact=True``.
    """

    pattern: MeetingPattern
    J: list[list]
    j_noise: float | Fraction
    increments: list[tuple[MeetingEvent, object]]

    def as_array(self) -> np.ndarray:
        return np.array([[float(v) for v in row] for row in self.J])


def fi_recursion(
    pattern: MeetingPattern,
    initial_fi: Sequence[float],
    j_noise: float,
    exact: bool = False,
    check_independence: bool = True,
) -> FisherTrajectory:
    """Evaluate ``J_a(t+1) = J_a(t) + 1/(1/J_b(t) + 1/J_N)`` with equality.

    All events of round ``t`` read round-``t`` values; sensors without an event
    carry their value forward. ``exact=True`` runs in rational arithmetic
    (``j_noise`` must then be finite).
    """
    if len(initial_fi) != pattern.n:
        raise ValueError(f"need {pattern.n} initial FI values, got {len(initial_fi)}")
    if any(not v > 0 for v in initial_fi):
        raise ValueError("initial FI values must be positive")
    if check_independence:
        require_independent(pattern)
    if exact:
        if j_noise == INFINITE:
            raise ValueError("exact mode needs a finite noise FI")
        cur = [Fraction(v) for v in initial_fi]
        jn = Fraction(j_noise)
    else:
        cur = [float(v) for v in initial_fi]
        jn = float(j_noise)
    J = [cur]
    increments = []
    for events in pattern.by_round():
        nxt = list(cur)
        for e in events:
            inc = fi_increment(cur[e.observed], jn)
            nxt[e.observer] = cur[e.observer] + inc
            increments.append((e, inc))
        J.append(nxt)
        cur = nxt
    return FisherTrajectory(pattern, J, jn, increments)


def cramer_rao_floor(traj: FisherTrajectory) -> np.ndarray:
    """Variance floor ``1/J`` per round and sensor."""
    return 1.0 / traj.as_array()


def check_channel_capacity(traj: FisherTrajectory):
    """Largest single-event FI increment (0 for an empty pattern).

    Every increment is strictly below the noise FI; with ``exact=True``
    trajectories the comparison is exact.
    """
    return max((inc for _, inc in traj.increments), default=0)


def lower_median(values: Sequence[float]) -> float:
    """Element ``floor((n-1)/2)`` of the sorted values."""
    s = sorted(values)
    return s[(len(s) - 1) // 2]


@dataclass(frozen=True)
class ConvergenceBound:
    epsilon: float
    j0_median: float
    bound: float


def convergence_lower_bound(epsilon: float, initial_fi: Sequence[float], j_noise: float) -> ConvergenceBound:
    """Fewest observations the typical sensor needs to reach variance ``ε²``."""
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    j0 = lower_median(initial_fi)
    target = 1.0 / epsilon / epsilon
    bound = 0.0 if target <= j0 else (target - j0) / j_noise
    return ConvergenceBound(epsilon, j0, bound)


def convergence_round(variance: np.ndarray, epsilon: float) -> int | None:
    """First round at which more than half the sensors have variance < ε²."""
    n = variance.shape[1]
    below = (variance < epsilon**2).sum(axis=1)
    hits = np.flatnonzero(below > n / 2)
    return int(hits[0]) if hits.size else None


def empirical_convergence_time(results, pattern: MeetingPattern, epsilon: float) -> float:
    """Median over sensors of the observations made before the convergence round.

    ``results`` is an experiment result or a variance table indexed
    ``[round, sensor]``. Returns ``inf`` when the population never converges
    within the recorded rounds.
    """
    variance = np.asarray(getattr(results, "variance", results))
    if variance.shape != (pattern.depth + 1, pattern.n):
        raise ValueError(f"variance table {variance.shape} does not cover the pattern")
    rho = convergence_round(variance, epsilon)
    if rho is None:
        return math.inf
    return float(lower_median(pattern.observation_counts(rho).tolist()))
