"""Meeting patterns: who observes whom in each round.

Round convention: an event at round ``t`` reads the round-``t`` states of both
sensors and produces the round-``t+1`` state of the observer. Consequently the
event is independent when ``R_observer(t) ∩ R_observed(t) = ∅``. The validator,
the Fisher-information recursion and the simulator all use this convention.

Relevant sets are stored as Python ``int`` bitmasks (bit ``i`` = sensor ``i``).
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from typing import Iterable, Iterator

import numpy as np


class PatternError(ValueError):
    """Structurally invalid meeting pattern."""


class IndexOutOfRange(PatternError, IndexError):
    pass


class NotPowerOfTwo(PatternError):
    pass


class PatternNotIndependent(ValueError):
    def __init__(self, report: "IndependenceReport"):
        self.report = report
        super().__init__(str(report))


@dataclass(frozen=True, order=True)
class MeetingEvent:
    round: int
    observer: int
    observed: int

    def to_dict(self) -> dict[str, int]:
        return {"round": self.round, "observer": self.observer, "observed": self.observed}


@dataclass(frozen=True)
class MeetingPattern:
    n: int
    events: tuple[MeetingEvent, ...] = ()

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise PatternError(f"sensor count must be a positive integer, got {self.n}")
        events = tuple(sorted(self.events))
        seen: set[tuple[int, int]] = set()
        for e in events:
            if e.round < 0:
                raise PatternError(f"negative round in {e}")
            if not (0 <= e.observer < self.n and 0 <= e.observed < self.n):
                raise IndexOutOfRange(f"sensor index out of range in {e} (n={self.n})")
            if e.observer == e.observed:
                raise PatternError(f"sensor observes itself in {e}")
            if (e.round, e.observer) in seen:
                raise PatternError(f"sensor {e.observer} observes twice in round {e.round}")
            seen.add((e.round, e.observer))
        object.__setattr__(self, "events", events)

    @property
    def depth(self) -> int:
        return depth(self)

    def by_round(self) -> list[list[MeetingEvent]]:
        """Events grouped per round, for rounds ``0 .. depth-1``."""
        rounds: list[list[MeetingEvent]] = [[] for _ in range(self.depth)]
        for e in self.events:
            rounds[e.round].append(e)
        return rounds

    def without_observers(self, sensors: Iterable[int]) -> "MeetingPattern":
        """Drop the events whose observer is in ``sensors`` (anchored sensors)."""
        drop = set(sensors)
        if not drop:
            return self
        return MeetingPattern(self.n, tuple(e for e in self.events if e.observer not in drop))

    def observation_counts(self, before_round: int) -> np.ndarray:
        counts = np.zeros(self.n, dtype=int)
        for e in self.events:
            if e.round < before_round:
                counts[e.observer] += 1
        return counts

    def to_dict(self) -> dict:
        return {"n": self.n, "events": [e.to_dict() for e in self.events]}

    @classmethod
    def from_dict(cls, d: dict) -> "MeetingPattern":
        unknown = set(d) - {"n", "events"}
        if unknown:
            raise PatternError(f"unknown pattern fields: {sorted(unknown)}")
        try:
            events = tuple(
                MeetingEvent(int(e["round"]), int(e["observer"]), int(e["observed"]))
                for e in d.get("events", [])
            )
            return cls(int(d["n"]), events)
        except (KeyError, TypeError) as exc:
            raise PatternError(f"malformed pattern: {exc}") from exc


def depth(pattern: MeetingPattern) -> int:
    """Number of rounds: one plus the last round holding an event, 0 if empty."""
    if not pattern.events:
        return 0
    return pattern.events[-1].round + 1


def relevant_masks(pattern: MeetingPattern) -> list[list[int]]:
    """``masks[t][a]`` is the bitmask of ``R_a(t)`` for ``t = 0 .. depth``."""
    cur = [1 << a for a in range(pattern.n)]
    masks = [cur]
    for events in pattern.by_round():
        nxt = list(cur)
        for e in events:
            nxt[e.observer] |= cur[e.observed]
        masks.append(nxt)
        cur = nxt
    return masks


def _members(mask: int) -> frozenset[int]:
    out = []
    i = 0
    while mask:
        if mask & 1:
            out.append(i)
        mask >>= 1
        i += 1
    return frozenset(out)


def relevant_set(pattern: MeetingPattern, sensor: int, round: int) -> frozenset[int]:
    """Sensors whose initial opinions can have reached ``sensor`` by ``round``."""
    if not 0 <= sensor < pattern.n:
        raise IndexOutOfRange(f"sensor {sensor} out of range (n={pattern.n})")
    if not 0 <= round <= depth(pattern):
        raise IndexOutOfRange(f"round {round} outside 0..{depth(pattern)}")
    return _members(relevant_masks(pattern)[round][sensor])


@dataclass(frozen=True)
class IndependenceReport:
    valid: bool
    violation: MeetingEvent | None = None
    shared: frozenset[int] = field(default_factory=frozenset)

    def __bool__(self) -> bool:
        return self.valid

    def __str__(self) -> str:
        if self.valid:
            return "pattern is independent"
        e = self.violation
        return (
            f"round {e.round}: sensor {e.observer} observes {e.observed} "
            f"with shared relevant sensors {sorted(self.shared)}"
        )


def iter_event_masks(pattern: MeetingPattern) -> Iterator[tuple[MeetingEvent, int, int]]:
    """Yield ``(event, R_observer(t), R_observed(t))`` in event order."""
    masks = relevant_masks(pattern)
    for e in pattern.events:
        cur = masks[e.round]
        yield e, cur[e.observer], cur[e.observed]


def validate_independence(pattern: MeetingPattern) -> IndependenceReport:
    """Return the first event (by round, then observer) whose relevant sets meet."""
    for e, ra, rb in iter_event_masks(pattern):
        if ra & rb:
            return IndependenceReport(False, e, _members(ra & rb))
    return IndependenceReport(True)


def require_independent(pattern: MeetingPattern) -> None:
    report = validate_independence(pattern)
    if not report:
        raise PatternNotIndependent(report)


def _labels(n: int, rng: np.random.Generator | None) -> list[int]:
    if rng is None:
        return list(range(n))
    return [int(i) for i in rng.permutation(n)]


def _log2_exact(n: int) -> int:
    if n < 1 or n & (n - 1):
        raise NotPowerOfTwo(f"n must be a power of two, got {n}")
    return n.bit_length() - 1


def gen_tournament(n: int, rng: np.random.Generator | None = None) -> MeetingPattern:
    """Binary-merge pattern of depth ``log2 n`` with a single final winner.

    In round ``r`` the ``n / 2**(r+1)`` surviving leaders observe the leader of
    the neighbouring block; ``rng`` (optional) shuffles sensor labels.
    """
    k = _log2_exact(n)
    leaders = _labels(n, rng)
    events = []
    for r in range(k):
        for i in range(0, len(leaders), 2):
            events.append(MeetingEvent(r, leaders[i], leaders[i + 1]))
        leaders = leaders[::2]
    return MeetingPattern(n, tuple(events))


def gen_hypercube(n: int, rng: np.random.Generator | None = None) -> MeetingPattern:
    """Synchronous independent pattern: every sensor observes in every round.

    In round ``r`` the sensor at position ``i`` observes position ``i ^ 2**r``;
    after ``log2 n`` rounds every relevant set is the whole population.
    """
    k = _log2_exact(n)
    label = _labels(n, rng)
    events = [
        MeetingEvent(r, label[i], label[i ^ (1 << r)]) for r in range(k) for i in range(n)
    ]
    return MeetingPattern(n, tuple(events))


def gen_broadcast(sources: int, learners: int) -> MeetingPattern:
    """Deep independent pattern: in round ``r`` every learner observes source ``r``.

    Sensors ``0 .. sources-1`` never observe; the learners follow. A learner's
    relevant set gains one fresh singleton per round, so the pattern stays
    independent for ``sources`` rounds, far beyond ``log2 n``.
    """
    if sources < 1 or learners < 1:
        raise PatternError("need at least one source and one learner")
    n = sources + learners
    events = [MeetingEvent(r, a, r) for r in range(sources) for a in range(sources, n)]
    return MeetingPattern(n, tuple(events))


def gen_random_independent(
    n: int,
    rounds: int,
    density: float,
    rng: np.random.Generator,
) -> MeetingPattern:
    """Greedy random independent pattern.

    Each round aims for ``ceil(density * n)`` observers. Observers are tried in
    shuffled order; each scans a shuffled list of targets and takes the first
    one whose relevant set is disjoint from its own. Fewer events are emitted
    when no disjoint partner remains.
    """
    if n < 2:
        raise PatternError("need at least two sensors")
    if rounds < 1:
        raise PatternError("need at least one round")
    if not 0.0 < density <= 1.0:
        raise PatternError(f"density must lie in (0, 1], got {density}")
    target = math.ceil(density * n)
    masks = [1 << a for a in range(n)]
    events = []
    for r in range(rounds):
        nxt = list(masks)
        accepted = 0
        for a in rng.permutation(n):
            if accepted == target:
                break
            a = int(a)
            for b in rng.permutation(n):
                b = int(b)
                if b != a and not masks[a] & masks[b]:
                    events.append(MeetingEvent(r, a, b))
                    nxt[a] |= masks[b]
                    accepted += 1
                    break
        masks = nxt
    return MeetingPattern(n, tuple(events))


def load_pattern(path: str | os.PathLike) -> MeetingPattern:
    with open(path) as fh:
        return MeetingPattern.from_dict(json.load(fh))


def save_pattern(pattern: MeetingPattern, path: str | os.PathLike) -> None:
    with open(path, "w", newline="\n") as fh:
        json.dump(pattern.to_dict(), fh, indent=1)
        fh.write("\n")
