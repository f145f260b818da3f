"""Life-table data model and exact conversions among mortality quantities.

Everything here assumes a piecewise-constant force of mortality on unit
age-year squares, which ties the central death rate m and the one-year
death probability q together through ``exp(-m) = 1 - q``. Survival curves
are anchored at the lowest age of the window and built as cumulative
products of (1 - q).
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import DomainError


@dataclass(frozen=True)
class AgeRange:
    """Closed integer age window [x_min, x_max]."""

    x_min: int
    x_max: int

    def __post_init__(self):
        if self.x_min < 0 or self.x_max < 0:
            raise DomainError(f"ages must be nonnegative, got [{self.x_min}, {self.x_max}]")
        if self.x_min > self.x_max:
            raise DomainError(f"x_min {self.x_min} exceeds x_max {self.x_max}")

    def __len__(self) -> int:
        return self.x_max - self.x_min + 1

    def __contains__(self, x: int) -> bool:
        return self.x_min <= x <= self.x_max

    def __iter__(self):
        return iter(range(self.x_min, self.x_max + 1))

    def index(self, x: int) -> int:
        """Row index of age ``x`` within the window."""
        if x not in self:
            raise DomainError(f"age {x} outside window [{self.x_min}, {self.x_max}]")
        return x - self.x_min

    def to_array(self) -> np.ndarray:
        return np.arange(self.x_min, self.x_max + 1)

    def covers(self, other: "AgeRange") -> bool:
        return self.x_min <= other.x_min and other.x_max <= self.x_max


@dataclass(frozen=True)
class YearRange:
    """Closed integer calendar-year window [t_min, t_max]."""

    t_min: int
    t_max: int

    def __post_init__(self):
        if self.t_min > self.t_max:
            raise DomainError(f"t_min {self.t_min} exceeds t_max {self.t_max}")

    def __len__(self) -> int:
        return self.t_max - self.t_min + 1

    def __contains__(self, t: int) -> bool:
        return self.t_min <= t <= self.t_max

    def __iter__(self):
        return iter(range(self.t_min, self.t_max + 1))

    def index(self, t: int) -> int:
        """Column index of year ``t`` within the window."""
        if t not in self:
            raise DomainError(f"year {t} outside window [{self.t_min}, {self.t_max}]")
        return t - self.t_min

    def to_array(self) -> np.ndarray:
        return np.arange(self.t_min, self.t_max + 1)

    def covers(self, other: "YearRange") -> bool:
        return self.t_min <= other.t_min and other.t_max <= self.t_max


class SurfaceKind(str, Enum):
    """What quantity a MortalitySurface holds."""

    DEATHS = "deaths"
    EXPOSURES = "exposures"
    CENTRAL_RATE = "central_rate"
    DEATH_PROB = "death_prob"


def _freeze(values: np.ndarray) -> np.ndarray:
    out = np.array(values, dtype=float)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class MortalitySurface:
    """Dense rectangular grid of one mortality quantity over ages x years.

    ``values[i, j]`` belongs to age ``ages.x_min + i`` and year
    ``years.t_min + j``. Construction validates shape, finiteness, and the
    admissible range for the given kind; the stored matrix is read-only.
    """

    ages: AgeRange
    years: YearRange
    kind: SurfaceKind
    values: np.ndarray

    def __post_init__(self):
        kind = SurfaceKind(self.kind)
        values = _freeze(self.values)
        expected = (len(self.ages), len(self.years))
        if values.shape != expected:
            raise DomainError(
                f"values shape {values.shape} does not match "
                f"{len(self.ages)} ages x {len(self.years)} years"
            )
        if not np.all(np.isfinite(values)):
            i, j = np.argwhere(~np.isfinite(values))[0]
            raise DomainError(
                f"non-finite {kind.value} at age {self.ages.x_min + i}, "
                f"year {self.years.t_min + j}"
            )
        if np.any(values < 0.0):
            i, j = np.argwhere(values < 0.0)[0]
            raise DomainError(
                f"negative {kind.value} at age {self.ages.x_min + i}, "
                f"year {self.years.t_min + j}"
            )
        if kind is SurfaceKind.DEATH_PROB and np.any(values > 1.0):
            i, j = np.argwhere(values > 1.0)[0]
            raise DomainError(
                f"death probability above 1 at age {self.ages.x_min + i}, "
                f"year {self.years.t_min + j}"
            )
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "values", values)

    def value_at(self, age: int, year: int) -> float:
        return float(self.values[self.ages.index(age), self.years.index(year)])

    def column(self, year: int) -> np.ndarray:
        """Values for one calendar year, over all ages (a copy)."""
        return self.values[:, self.years.index(year)].copy()

    def row(self, age: int) -> np.ndarray:
        """Values for one age, over all years (a copy)."""
        return self.values[self.ages.index(age), :].copy()

    def subset(self, ages: AgeRange | None = None, years: YearRange | None = None) -> "MortalitySurface":
        """Restrict to a smaller age/year window."""
        ages = ages or self.ages
        years = years or self.years
        if not self.ages.covers(ages):
            raise DomainError(f"requested ages {ages} not covered by {self.ages}")
        if not self.years.covers(years):
            raise DomainError(f"requested years {years} not covered by {self.years}")
        i0 = self.ages.index(ages.x_min)
        j0 = self.years.index(years.t_min)
        block = self.values[i0 : i0 + len(ages), j0 : j0 + len(years)]
        return MortalitySurface(ages, years, self.kind, block)


@dataclass(frozen=True)
class SurvivalSurface:
    """Per-year survival curves S_t(x), anchored at the base age.

    ``values[i, j]`` is the probability that someone aged ``base_age`` in
    year ``years.t_min + j`` survives past age ``ages.x_min + i``, built
    from the same year's one-year death probabilities.
    """

    base_age: int
    ages: AgeRange
    years: YearRange
    values: np.ndarray

    def __post_init__(self):
        if self.ages.x_min != self.base_age:
            raise DomainError(
                f"survival ages must start at the base age {self.base_age}, "
                f"got x_min {self.ages.x_min}"
            )
        values = _freeze(self.values)
        expected = (len(self.ages), len(self.years))
        if values.shape != expected:
            raise DomainError(
                f"values shape {values.shape} does not match "
                f"{len(self.ages)} ages x {len(self.years)} years"
            )
        if not np.all(np.isfinite(values)) or np.any(values <= 0.0) or np.any(values > 1.0):
            raise DomainError("survival values must lie in (0, 1]")
        if np.any(values[1:, :] > values[:-1, :]):
            i, j = np.argwhere(values[1:, :] > values[:-1, :])[0]
            raise DomainError(
                f"survival increases from age {self.ages.x_min + i} to "
                f"{self.ages.x_min + i + 1} in year {self.years.t_min + j}"
            )
        object.__setattr__(self, "values", values)

    def column(self, year: int) -> np.ndarray:
        return self.values[:, self.years.index(year)].copy()


def _as_float_array(x, name: str) -> tuple[np.ndarray, bool]:
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{name} must be finite")
    return arr, arr.ndim == 0


def central_rate_to_q(m):
    """Death probability 1 - exp(-m) from a central death rate.

    Accepts scalars or arrays; elementwise on arrays.
    """
    arr, scalar = _as_float_array(m, "central rate")
    if np.any(arr < 0.0):
        raise DomainError("central rate must be nonnegative")
    q = -np.expm1(-arr)
    return float(q) if scalar else q


def q_to_central_rate(q):
    """Central death rate -log(1 - q) from a death probability in [0, 1)."""
    arr, scalar = _as_float_array(q, "death probability")
    if np.any(arr < 0.0) or np.any(arr >= 1.0):
        raise DomainError("death probability must lie in [0, 1)")
    m = -np.log1p(-arr)
    return float(m) if scalar else m


def _validate_q_vector(q_col) -> np.ndarray:
    q, _ = _as_float_array(q_col, "death probabilities")
    if q.ndim != 1 or q.size == 0:
        raise DomainError("expected a non-empty 1-d vector of death probabilities")
    if np.any(q < 0.0):
        raise DomainError("death probabilities must be nonnegative")
    if np.any(q >= 1.0):
        x = int(np.argmax(q >= 1.0))
        raise DomainError(
            f"death probability of 1 at position {x}: survival hits zero, "
            "downstream transforms are undefined"
        )
    return q


def q_to_survival(q_col) -> np.ndarray:
    """Survival curve S(x) = prod_(i<=x) (1 - q_i) over one year's ages.

    The input runs from the base age upward; every entry must lie in
    [0, 1). The result is strictly positive and non-increasing.
    """
    q = _validate_q_vector(q_col)
    return np.cumprod(1.0 - q)


def survival_to_q(s_col) -> np.ndarray:
    """One-year death probabilities from a survival curve.

    Exact inverse of :func:`q_to_survival`:
    q at the base age is 1 - S(x0), and q_x = 1 - S(x)/S(x-1) above it.
    """
    s, _ = _as_float_array(s_col, "survival values")
    if s.ndim != 1 or s.size == 0:
        raise DomainError("expected a non-empty 1-d survival vector")
    if np.any(s <= 0.0):
        raise DomainError("survival values must be strictly positive")
    if s[0] > 1.0:
        raise DomainError(f"survival at the base age must be <= 1, got {s[0]}")
    if np.any(s[1:] > s[:-1]):
        x = int(np.argmax(s[1:] > s[:-1]))
        raise DomainError(f"survival increases between positions {x} and {x + 1}")
    q = np.empty_like(s)
    q[0] = 1.0 - s[0]
    q[1:] = 1.0 - s[1:] / s[:-1]
    return q


def curve_of_deaths(q_col) -> np.ndarray:
    """Deferred death probabilities r_x: survive from the base age to x, die within a year.

    r at the base age equals q there; above it r_x = q_x * S(x-1). On the
    finite window, sum(r) + S(x_max) = 1.
    """
    q = _validate_q_vector(q_col)
    s = np.cumprod(1.0 - q)
    r = q.copy()
    r[1:] *= s[:-1]
    return r


def surface_q_to_survival(q_surface: MortalitySurface) -> SurvivalSurface:
    """Columnwise lift of :func:`q_to_survival` over a death-probability surface.

    The base age is the surface's lowest age. Any q equal to 1 is rejected
    with the offending cell named.
    """
    if q_surface.kind is not SurfaceKind.DEATH_PROB:
        raise DomainError(f"expected a death_prob surface, got {q_surface.kind.value}")
    bad = np.argwhere(q_surface.values >= 1.0)
    if bad.size:
        i, j = bad[0]
        raise DomainError(
            f"death probability of 1 at age {q_surface.ages.x_min + i}, "
            f"year {q_surface.years.t_min + j}: survival hits zero"
        )
    s = np.cumprod(1.0 - q_surface.values, axis=0)
    return SurvivalSurface(
        base_age=q_surface.ages.x_min,
        ages=q_surface.ages,
        years=q_surface.years,
        values=s,
    )
