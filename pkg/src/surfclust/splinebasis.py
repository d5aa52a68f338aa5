"""B-spline bases over an integer age grid.

The age profile of every surface in the model is expanded over a common set
of B-spline basis functions evaluated on the observed ages.  Bases are built
on clamped (open) knot vectors, so they form a partition of unity over the
whole age range, and are evaluated once and cached as a dense design matrix.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np


class InvalidKnots(ValueError):
    """Knot sequence is decreasing or otherwise unusable."""


class AgeOutOfSupport(ValueError):
    """An age falls outside the span covered by the knot vector."""


def _cox_de_boor(knots: np.ndarray, degree: int, j: int, x: float) -> float:
    """Value of the j-th B-spline of the given degree at x.

    Intervals are half-open except at the right end of the global span,
    which is treated as closed so the basis sums to one there too.
    """
    if degree == 0:
        if knots[j] <= x < knots[j + 1]:
            return 1.0
        # right-boundary convention: the last nonempty interval is closed
        if x == knots[-1] and knots[j] < knots[j + 1] and knots[j + 1] == knots[-1]:
            return 1.0
        return 0.0
    left = 0.0
    if knots[j + degree] > knots[j]:
        left = (x - knots[j]) / (knots[j + degree] - knots[j]) * _cox_de_boor(
            knots, degree - 1, j, x
        )
    right = 0.0
    if knots[j + degree + 1] > knots[j + 1]:
        right = (knots[j + degree + 1] - x) / (
            knots[j + degree + 1] - knots[j + 1]
        ) * _cox_de_boor(knots, degree - 1, j + 1, x)
    return left + right


@dataclass(frozen=True)
class SplineBasis:
    """A clamped B-spline basis with its evaluation grid.

    Attributes
    ----------
    degree : int
        Polynomial degree of every basis function (0 allowed).
    knots : np.ndarray
        Full nondecreasing knot vector, boundary knots repeated degree+1
        times.
    age_grid : np.ndarray
        Sorted ages at which the basis is evaluated and cached.
    """

    degree: int
    knots: np.ndarray
    age_grid: np.ndarray

    def __post_init__(self) -> None:
        knots = np.asarray(self.knots, dtype=float)
        ages = np.asarray(self.age_grid, dtype=float)
        object.__setattr__(self, "knots", knots)
        object.__setattr__(self, "age_grid", ages)
        if self.degree < 0:
            raise InvalidKnots(f"degree must be nonnegative, got {self.degree}")
        if np.any(np.diff(knots) < 0):
            raise InvalidKnots("knot vector must be nondecreasing")
        if self.p < 1:
            raise InvalidKnots(
                f"{knots.size} knots with degree {self.degree} leave no basis function"
            )
        lo, hi = knots[self.degree], knots[-self.degree - 1]
        if ages.size and (ages.min() < lo or ages.max() > hi):
            raise AgeOutOfSupport(
                f"age grid [{ages.min()}, {ages.max()}] exceeds basis span [{lo}, {hi}]"
            )

    @property
    def p(self) -> int:
        """Number of basis functions."""
        return self.knots.size - self.degree - 1

    def evaluate(self, x: float) -> np.ndarray:
        """All p basis values at a single point x inside the span."""
        lo, hi = self.knots[self.degree], self.knots[-self.degree - 1]
        if not lo <= x <= hi:
            raise AgeOutOfSupport(f"x={x} outside span [{lo}, {hi}]")
        return np.array(
            [_cox_de_boor(self.knots, self.degree, j, x) for j in range(self.p)]
        )

    @cached_property
    def design(self) -> np.ndarray:
        """Cached design matrix, shape (len(age_grid), p)."""
        G = np.empty((self.age_grid.size, self.p))
        for r, x in enumerate(self.age_grid):
            G[r] = self.evaluate(float(x))
        G.setflags(write=False)
        return G

    @cached_property
    def column_supports(self) -> list[tuple[int, int]]:
        """Per-basis (start, stop) row range of nonzero design entries."""
        out = []
        for j in range(self.p):
            nz = np.nonzero(self.design[:, j])[0]
            if nz.size == 0:
                out.append((0, 0))
            else:
                out.append((int(nz[0]), int(nz[-1]) + 1))
        return out

    def age_index(self, x) -> int:
        """Row index of age x in the grid."""
        idx = np.searchsorted(self.age_grid, x)
        if idx >= self.age_grid.size or self.age_grid[idx] != x:
            raise AgeOutOfSupport(f"age {x} not on the grid")
        return int(idx)

    def peak_ages(self) -> np.ndarray:
        """Grid age at which each basis function attains its maximum."""
        return self.age_grid[np.argmax(self.design, axis=0)]


def build_basis(
    degree: int,
    interior_knots,
    age_grid,
    boundary: tuple[float, float] | None = None,
) -> SplineBasis:
    """Build a clamped basis from interior knots and an age grid.

    Parameters
    ----------
    degree : int
        Polynomial degree.
    interior_knots : sequence of float
        Nondecreasing knots strictly inside the boundary; may be empty.
    age_grid : sequence
        Ages at which the basis will be evaluated.
    boundary : (float, float), optional
        Span endpoints; defaults to the age grid extremes.

    Returns
    -------
    SplineBasis
        Basis with p = len(interior_knots) + degree + 1 functions.
    """
    interior = np.asarray(interior_knots, dtype=float)
    ages = np.asarray(age_grid, dtype=float)
    if np.any(np.diff(interior) < 0):
        raise InvalidKnots("interior knots must be nondecreasing")
    if boundary is None:
        if ages.size == 0:
            raise InvalidKnots("empty age grid and no explicit boundary")
        boundary = (float(ages.min()), float(ages.max()))
    a, b = boundary
    if not a < b:
        raise InvalidKnots(f"degenerate boundary [{a}, {b}]")
    if interior.size and (interior.min() < a or interior.max() > b):
        raise InvalidKnots("interior knots outside the boundary span")
    knots = np.concatenate([np.full(degree + 1, a), interior, np.full(degree + 1, b)])
    return SplineBasis(degree=degree, knots=knots, age_grid=ages)


def design_matrix(basis: SplineBasis) -> np.ndarray:
    """Dense design matrix G with G[r, j] = g_j(age_grid[r])."""
    return basis.design


def simulation_basis(age_grid=None) -> SplineBasis:
    """Six quadratic bases with uniform interior knots on ages 0..100."""
    if age_grid is None:
        age_grid = np.arange(101)
    return build_basis(2, [25.0, 50.0, 75.0], age_grid)


# Interior knots of the 20-function mortality basis.  Dense near infancy and
# the oldest ages, sparse through adulthood; the resulting peak ages run
# 0, 2, 6, 12, then 18..60 roughly evenly, then 66..86, 91, 94, 98.
_MORTALITY20_INTERIOR = [
    3.0, 8.0, 16.0, 21.0, 26.0, 31.0, 36.0, 41.0, 46.0, 51.0,
    56.0, 63.0, 70.0, 77.0, 85.0, 88.5, 92.2,
]


def default_mortality_basis(age_grid=None) -> SplineBasis:
    """Twenty quadratic bases tailored to human mortality age structure.

    Knot placement concentrates flexibility at infant and senescent ages,
    where mortality varies most sharply, and spreads out over adult ages.
    """
    if age_grid is None:
        age_grid = np.arange(99)
    return build_basis(2, _MORTALITY20_INTERIOR, age_grid)


_PRESETS = {
    "sim6": simulation_basis,
    "mortality20": default_mortality_basis,
}


def basis_from_spec(spec: dict) -> SplineBasis:
    """Build a basis from a configuration mapping.

    Either ``{"preset": name, "ages": [lo, hi]}`` or an explicit
    ``{"degree": d, "interior_knots": [...], "ages": [lo, hi]}``.
    """
    ages = spec.get("ages")
    grid = None if ages is None else np.arange(int(ages[0]), int(ages[1]) + 1)
    preset = spec.get("preset")
    if preset is not None:
        if preset not in _PRESETS:
            raise InvalidKnots(
                f"unknown basis preset {preset!r}; choose from {sorted(_PRESETS)}"
            )
        return _PRESETS[preset]() if grid is None else _PRESETS[preset](grid)
    if grid is None:
        raise InvalidKnots("explicit basis spec requires an 'ages' range")
    return build_basis(int(spec["degree"]), spec.get("interior_knots", []), grid)
