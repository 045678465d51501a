"""Smooth, zero-centred location families.

Each family exposes its density, analytic density derivative, a sampler,
its variance and its location Fisher information ``J = ∫ Φ'(y)² / Φ(y) dy``.
The Fisher information of non-Gaussian kinds is computed by composite
Gauss-Legendre quadrature with dyadic panel refinement.
"""

from __future__ import annotations

import enum
import functools
import math
from dataclasses import dataclass
from typing import Any, ClassVar, Sequence

import numpy as np

# Default half-width of the quadrature window, in standard deviations.
SPAN_SD = 12.0
GL_NODES = 16
REL_TOL = 1e-6
MAX_REFINEMENTS = 12


class NonConvergent(ArithmeticError):
    """Quadrature refinement failed to reach the requested tolerance."""


class Kind(str, enum.Enum):
    GAUSSIAN = "gaussian"
    LOGISTIC = "logistic"
    MIXTURE2 = "mixture2"


class DistributionSpec:
    """Base class for the supported families.

    Subclasses are frozen dataclasses, so specs are hashable and safe to share
    between workers. Quadrature results are cached per spec.
    """

    kind: ClassVar[Kind]

    def pdf(self, x):
        raise NotImplementedError

    def dpdf(self, x):
        raise NotImplementedError

    def log_pdf_and_score(self, x):
        """Return ``(log Φ(x), Φ'(x)/Φ(x))``, evaluated without underflow."""
        raise NotImplementedError

    def sample(self, rng: np.random.Generator, size=None):
        raise NotImplementedError

    def variance(self) -> float:
        raise NotImplementedError

    def fisher_information(self) -> float:
        return _quadrature_fisher(self)

    def fisher_tightness(self) -> float:
        return fisher_tightness(self)

    def to_dict(self) -> dict[str, Any]:
        raise NotImplementedError

    @property
    def std(self) -> float:
        return math.sqrt(self.variance())

    def half_width(self) -> float:
        """Half-width of a symmetric window holding all but ~1e-16 of the mass."""
        return SPAN_SD * self.std


@dataclass(frozen=True)
class Gaussian(DistributionSpec):
    sigma_sq: float = 1.0

    kind: ClassVar[Kind] = Kind.GAUSSIAN

    def __post_init__(self):
        if not (math.isfinite(self.sigma_sq) and self.sigma_sq > 0):
            raise ValueError(f"Gaussian variance must be positive and finite, got {self.sigma_sq}")

    def pdf(self, x):
        v = self.sigma_sq
        return np.exp(-0.5 * np.square(x) / v) / math.sqrt(2 * math.pi * v)

    def dpdf(self, x):
        return -np.asarray(x) / self.sigma_sq * self.pdf(x)

    def log_pdf_and_score(self, x):
        x = np.asarray(x, dtype=float)
        v = self.sigma_sq
        return -0.5 * x * x / v - 0.5 * math.log(2 * math.pi * v), -x / v

    def sample(self, rng, size=None):
        return rng.normal(0.0, math.sqrt(self.sigma_sq), size)

    def variance(self) -> float:
        return self.sigma_sq

    def fisher_information(self) -> float:
        return 1.0 / self.sigma_sq

    def to_dict(self):
        return {"kind": self.kind.value, "variance": self.sigma_sq}


@dataclass(frozen=True)
class Logistic(DistributionSpec):
    scale: float = 1.0

    kind: ClassVar[Kind] = Kind.LOGISTIC

    def __post_init__(self):
        if not (math.isfinite(self.scale) and self.scale > 0):
            raise ValueError(f"logistic scale must be positive and finite, got {self.scale}")

    def pdf(self, x):
        s = self.scale
        e = np.exp(-np.abs(x) / s)
        return e / (s * (1.0 + e) ** 2)

    def dpdf(self, x):
        return self.pdf(x) * self.log_pdf_and_score(x)[1]

    def log_pdf_and_score(self, x):
        x = np.asarray(x, dtype=float)
        s = self.scale
        a = np.abs(x) / s
        logp = -a - math.log(s) - 2.0 * np.log1p(np.exp(-a))
        return logp, -np.tanh(x / (2.0 * s)) / s

    def sample(self, rng, size=None):
        return rng.logistic(0.0, self.scale, size)

    def variance(self) -> float:
        return math.pi**2 * self.scale**2 / 3.0

    def half_width(self) -> float:
        # exponential tails: x² e^{-x/s} is below 1e-14 past 45 s
        return max(SPAN_SD * self.std, 45.0 * self.scale)

    def to_dict(self):
        return {"kind": self.kind.value, "scale": self.scale}


@dataclass(frozen=True)
class GaussianMixture2(DistributionSpec):
    """Two-component Gaussian mixture with zero mean.

    The component with weight ``weight`` sits at ``+offset``; the other sits at
    ``-offset * weight / (1 - weight)`` so that the mixture mean is exactly 0.
    With ``weight = 0.5`` the components are at ``±offset``.
    """

    weight: float = 0.5
    offset: float = 1.0
    component_variance: float = 0.25

    kind: ClassVar[Kind] = Kind.MIXTURE2

    def __post_init__(self):
        if not 0.0 < self.weight < 1.0:
            raise ValueError(f"mixture weight must lie in (0, 1), got {self.weight}")
        if not (math.isfinite(self.offset) and self.offset >= 0):
            raise ValueError(f"mixture offset must be non-negative, got {self.offset}")
        if not (math.isfinite(self.component_variance) and self.component_variance > 0):
            raise ValueError("mixture component variance must be positive")

    @property
    def locations(self) -> tuple[float, float]:
        w = self.weight
        return self.offset, -self.offset * w / (1.0 - w)

    def _components(self, x):
        x = np.asarray(x, dtype=float)
        v = self.component_variance
        m1, m2 = self.locations
        base = -0.5 * math.log(2 * math.pi * v)
        l1 = math.log(self.weight) + base - 0.5 * (x - m1) ** 2 / v
        l2 = math.log1p(-self.weight) + base - 0.5 * (x - m2) ** 2 / v
        return x, l1, l2

    def pdf(self, x):
        return np.exp(self.log_pdf_and_score(x)[0])

    def dpdf(self, x):
        logp, score = self.log_pdf_and_score(x)
        return np.exp(logp) * score

    def log_pdf_and_score(self, x):
        x, l1, l2 = self._components(x)
        v = self.component_variance
        m1, m2 = self.locations
        logp = np.logaddexp(l1, l2)
        r1 = np.exp(l1 - logp)
        score = -(r1 * (x - m1) + (1.0 - r1) * (x - m2)) / v
        return logp, score

    def sample(self, rng, size=None):
        m1, m2 = self.locations
        u = rng.random(size)
        z = rng.standard_normal(size)
        return np.where(u < self.weight, m1, m2) + math.sqrt(self.component_variance) * z

    def variance(self) -> float:
        m1, m2 = self.locations
        w = self.weight
        return self.component_variance + w * m1 * m1 + (1.0 - w) * m2 * m2

    def half_width(self) -> float:
        far = max(abs(m) for m in self.locations)
        return max(SPAN_SD * self.std, far + SPAN_SD * math.sqrt(self.component_variance))

    def to_dict(self):
        return {
            "kind": self.kind.value,
            "weight": self.weight,
            "offset": self.offset,
            "component_variance": self.component_variance,
        }


def _panel_quadrature(f, lo: float, hi: float, panels: int) -> float:
    nodes, weights = np.polynomial.legendre.leggauss(GL_NODES)
    edges = np.linspace(lo, hi, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[:-1] + edges[1:])
    x = (mid[:, None] + half[:, None] * nodes[None, :]).ravel()
    w = (half[:, None] * weights[None, :]).ravel()
    return float(np.dot(w, f(x)))


def integrate(
    spec: DistributionSpec,
    f,
    rel_tol: float = REL_TOL,
    abs_tol: float = 0.0,
    half_width: float | None = None,
) -> float:
    """Integrate ``f`` over the symmetric window ``spec.half_width()``.

    Panels double until two successive estimates agree to ``rel_tol``
    (or to ``abs_tol``, for integrals that should vanish).
    """
    if half_width is None:
        half_width = spec.half_width()
    panels = 8
    prev = _panel_quadrature(f, -half_width, half_width, panels)
    for _ in range(MAX_REFINEMENTS):
        panels *= 2
        cur = _panel_quadrature(f, -half_width, half_width, panels)
        if abs(cur - prev) <= max(rel_tol * abs(cur), abs_tol):
            return cur
        prev = cur
    raise NonConvergent(f"quadrature for {spec!r} did not settle to {rel_tol:g}")


def _fi_integrand(spec: DistributionSpec):
    def f(x):
        logp, score = spec.log_pdf_and_score(x)
        return np.exp(logp) * score * score

    return f


@functools.lru_cache(maxsize=256)
def _quadrature_fisher(spec: DistributionSpec) -> float:
    return integrate(spec, _fi_integrand(spec))


def quadrature_fisher_information(spec: DistributionSpec) -> float:
    """Fisher information by quadrature, ignoring any closed form."""
    return _quadrature_fisher(spec)


def quadrature_variance(spec: DistributionSpec) -> float:
    return integrate(spec, lambda x: x * x * spec.pdf(x), rel_tol=1e-12)


def fisher_tightness(spec: DistributionSpec) -> float:
    """``var(Φ) · J(Φ)``; at least 1 for every smooth family, 1 for Gaussians."""
    return spec.variance() * spec.fisher_information()


@dataclass(frozen=True)
class FamilyCatalog:
    """The finite family of initial-offset densities plus the noise density."""

    initial_specs: tuple[DistributionSpec, ...]
    noise_spec: DistributionSpec

    def __post_init__(self):
        object.__setattr__(self, "initial_specs", tuple(self.initial_specs))
        if not self.initial_specs:
            raise ValueError("catalog needs at least one initial distribution")
        for s in (*self.initial_specs, self.noise_spec):
            if not isinstance(s, DistributionSpec):
                raise TypeError(f"not a DistributionSpec: {s!r}")

    def delta0(self) -> float:
        return delta0(self)

    def to_dict(self) -> dict[str, Any]:
        return {
            "initial": [s.to_dict() for s in self.initial_specs],
            "noise": self.noise_spec.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "FamilyCatalog":
        unknown = set(d) - {"initial", "noise"}
        if unknown:
            raise ValueError(f"unknown catalog fields: {sorted(unknown)}")
        return cls(tuple(spec_from_dict(s) for s in d["initial"]), spec_from_dict(d["noise"]))


def delta0(catalog: FamilyCatalog) -> float:
    """Largest Fisher-tightness over the initial densities and the noise."""
    return max(fisher_tightness(s) for s in (*catalog.initial_specs, catalog.noise_spec))


_FIELDS = {
    Kind.GAUSSIAN: (Gaussian, {"variance": "sigma_sq"}),
    Kind.LOGISTIC: (Logistic, {"scale": "scale"}),
    Kind.MIXTURE2: (
        GaussianMixture2,
        {"weight": "weight", "offset": "offset", "component_variance": "component_variance"},
    ),
}


def spec_from_dict(d: dict[str, Any]) -> DistributionSpec:
    """Parse ``{"kind": "gaussian", "variance": 1.0}`` and friends.

    Unknown kinds and unknown fields raise ``ValueError``.
    """
    d = dict(d)
    try:
        kind = Kind(d.pop("kind"))
    except (KeyError, ValueError) as exc:
        raise ValueError(f"bad distribution kind in {d!r}") from exc
    cls, fields = _FIELDS[kind]
    unknown = set(d) - set(fields)
    if unknown:
        raise ValueError(f"unknown fields for {kind.value}: {sorted(unknown)}")
    return cls(**{fields[k]: float(v) for k, v in d.items()})


def specs_from_dicts(items: Sequence[dict[str, Any]]) -> list[DistributionSpec]:
    return [spec_from_dict(d) for d in items]
