"""Sensor state machines and the trial runner.

ALG keeps two numbers per sensor: an opinion (estimate of the start time) and
an accuracy (reciprocal of the opinion's variance). Observing sensor ``b``
through a noisy offset reading ``d`` moves the opinion by a weight derived
from both accuracies and adds ``b``'s noise-discounted accuracy.

Randomness protocol for one trial, shared by :func:`run_trial` and
:func:`simulate_rounds` so that both produce identical numbers:

1. initial offsets, one ``sample`` call per distinct spec in order of first
   appearance, covering that spec's sensors in ascending index order;
2. one ``sample`` call on the noise spec for all effective events, in event
   order (round, observer).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from .dist import DistributionSpec
from .pattern import MeetingPattern, require_independent


class AssignmentIncomplete(ValueError):
    pass


class Algorithm(str, enum.Enum):
    ALG = "alg"
    MIDPOINT = "midpoint"


@dataclass(frozen=True)
class SensorState:
    opinion: float
    accuracy: float

    def __post_init__(self):
        if not self.accuracy > 0:
            raise ValueError(f"accuracy must be positive, got {self.accuracy}")


def trial_rng(master_seed: int, trial: int) -> np.random.Generator:
    """Independent stream for trial ``trial``, reproducible in isolation."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(master_seed, spawn_key=(trial,))))


def init_state(spec: DistributionSpec, tau_star: float, rng: np.random.Generator) -> SensorState:
    return SensorState(tau_star + float(spec.sample(rng)), 1.0 / spec.variance())


def measure(x_a: float, x_b: float, noise_spec: DistributionSpec, rng: np.random.Generator) -> float:
    """Noisy reading of ``x_b - x_a``."""
    return x_b - x_a + float(noise_spec.sample(rng))


def reduced_accuracy(c_b, noise_variance):
    return c_b / (1.0 + c_b * noise_variance)


def observe_update_alg(state_a: SensorState, c_b: float, d_tilde: float, noise_variance: float) -> SensorState:
    chat = reduced_accuracy(c_b, noise_variance)
    return SensorState(
        state_a.opinion + d_tilde * chat / (state_a.accuracy + chat),
        state_a.accuracy + chat,
    )


def observe_update_midpoint(state_a: SensorState, d_tilde: float) -> SensorState:
    return SensorState(state_a.opinion + d_tilde / 2.0, state_a.accuracy)


@dataclass(frozen=True)
class TrialTrajectory:
    """``opinions[t, a]`` and ``accuracy[t, a]`` for ``t = 0 .. depth``."""

    opinions: np.ndarray
    accuracy: np.ndarray
    tau_star: float
    seed: int | None = None

    @property
    def rounds(self) -> int:
        return self.opinions.shape[0] - 1


def _check_assignment(pattern: MeetingPattern, assignment: Sequence[DistributionSpec]) -> None:
    if len(assignment) != pattern.n:
        raise AssignmentIncomplete(f"assignment covers {len(assignment)} of {pattern.n} sensors")


def spec_groups(assignment: Sequence[DistributionSpec]) -> list[tuple[DistributionSpec, np.ndarray]]:
    """Distinct specs in order of first appearance, each with its sensors."""
    order: dict[DistributionSpec, list[int]] = {}
    for a, spec in enumerate(assignment):
        order.setdefault(spec, []).append(a)
    return [(spec, np.array(idx)) for spec, idx in order.items()]


def draw_trial(
    rng: np.random.Generator,
    groups: list[tuple[DistributionSpec, np.ndarray]],
    n: int,
    noise_spec: DistributionSpec,
    n_events: int,
) -> tuple[np.ndarray, np.ndarray]:
    offsets = np.empty(n)
    for spec, idx in groups:
        offsets[idx] = spec.sample(rng, len(idx))
    eta = np.asarray(noise_spec.sample(rng, n_events), dtype=float).reshape(n_events)
    return offsets, eta


def accuracy_trajectory(
    pattern: MeetingPattern,
    assignment: Sequence[DistributionSpec],
    noise_variance: float,
    algorithm: Algorithm = Algorithm.ALG,
) -> np.ndarray:
    """Deterministic accuracies ``c[t, a]``; independent of τ* and of all draws."""
    c = np.array([1.0 / s.variance() for s in assignment])
    out = [c]
    for events in pattern.by_round():
        nxt = c.copy()
        if algorithm is Algorithm.ALG and events:
            obs = np.array([e.observer for e in events])
            tgt = np.array([e.observed for e in events])
            nxt[obs] = c[obs] + reduced_accuracy(c[tgt], noise_variance)
        out.append(nxt)
        c = nxt
    return np.array(out)


def run_trial(
    pattern: MeetingPattern,
    assignment: Sequence[DistributionSpec],
    noise_spec: DistributionSpec,
    tau_star: float,
    algorithm: Algorithm,
    rng: np.random.Generator,
    anchored: frozenset[int] = frozenset(),
    check_independence: bool = True,
    seed: int | None = None,
) -> TrialTrajectory:
    """Run one trial sensor by sensor with synchronous rounds.

    Every observation in round ``t`` reads round-``t`` states; anchored sensors
    keep their initial state (their observation events are skipped).
    """
    _check_assignment(pattern, assignment)
    if check_independence:
        require_independent(pattern)
    algorithm = Algorithm(algorithm)
    active = pattern.without_observers(anchored)
    var_n = noise_spec.variance()
    offsets, eta = draw_trial(rng, spec_groups(assignment), pattern.n, noise_spec, len(active.events))

    states = [SensorState(tau_star + float(offsets[a]), 1.0 / assignment[a].variance()) for a in range(pattern.n)]
    history = [states]
    k = 0
    for events in active.by_round():
        nxt = list(states)
        for e in events:
            a, b = states[e.observer], states[e.observed]
            d = b.opinion - a.opinion + float(eta[k])
            k += 1
            if algorithm is Algorithm.ALG:
                nxt[e.observer] = observe_update_alg(a, b.accuracy, d, var_n)
            else:
                nxt[e.observer] = observe_update_midpoint(a, d)
        history.append(nxt)
        states = nxt
    # events after the last active round still count towards depth
    while len(history) < pattern.depth + 1:
        history.append(states)

    opinions = np.array([[s.opinion for s in row] for row in history])
    accuracy = np.array([[s.accuracy for s in row] for row in history])
    return TrialTrajectory(opinions, accuracy, tau_star, seed)


def simulate_rounds(
    pattern: MeetingPattern,
    assignment: Sequence[DistributionSpec],
    noise_spec: DistributionSpec,
    algorithm: Algorithm,
    rngs: Sequence[np.random.Generator],
    tau_stars: np.ndarray,
    anchored: frozenset[int] = frozenset(),
) -> Iterator[np.ndarray]:
    """Vectorised twin of :func:`run_trial` over a batch of trials.

    Yields the ``(trials, n)`` opinion matrix for every round ``0 .. depth``.
    Trial ``i`` consumes ``rngs[i]`` exactly as :func:`run_trial` would.
    """
    _check_assignment(pattern, assignment)
    algorithm = Algorithm(algorithm)
    active = pattern.without_observers(anchored)
    var_n = noise_spec.variance()
    groups = spec_groups(assignment)
    m, n, n_events = len(rngs), pattern.n, len(active.events)

    x = np.empty((m, n))
    eta = np.empty((m, n_events))
    for i, rng in enumerate(rngs):
        x[i], eta[i] = draw_trial(rng, groups, n, noise_spec, n_events)
    x = np.asarray(tau_stars, dtype=float)[:, None] + x
    c = accuracy_trajectory(active, assignment, var_n, algorithm)

    yield x
    k = 0
    rounds = active.by_round()
    for t in range(pattern.depth):
        events = rounds[t] if t < len(rounds) else []
        if events:
            obs = np.array([e.observer for e in events])
            tgt = np.array([e.observed for e in events])
            d = x[:, tgt] - x[:, obs] + eta[:, k : k + len(events)]
            k += len(events)
            x = x.copy()
            if algorithm is Algorithm.ALG:
                ca, chat = c[t, obs], reduced_accuracy(c[t, tgt], var_n)
                x[:, obs] = x[:, obs] + d * chat / (ca + chat)
            else:
                x[:, obs] = x[:, obs] + d / 2.0
        yield x
