"""Domain types, change costs, bound derivation, and the budget-ball projection.

The feasible set for a recommendation is a box-bounded, budget-bounded set of
per-feature displacements ``z`` applied to the directly changeable features of
an instance.  Every optimizer in this package keeps its candidates feasible by
projecting them onto that set; the projection is computed coordinate-wise from
the KKT conditions with a bisection search on the single dual multiplier.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

DEFAULT_TOL = 1e-8

_MAX_DOUBLINGS = 400
_MAX_BISECT = 200
_BRACKET_WIDTH = 1e-12


class InvClassError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(InvClassError):
    """A vector or matrix does not match the expected feature dimensions."""


class InvalidBudgetError(InvClassError):
    """The change budget is negative."""


class ContradictoryDirectionError(InvClassError):
    """Direction restrictions produce an empty per-feature interval."""


class InvalidBoundsError(InvClassError):
    """Bounds exclude the instance's own feature value."""


class Role(enum.Enum):
    """What the optimizer is allowed to do with a feature."""

    UNCHANGEABLE = "unchangeable"
    DIRECT = "direct"
    INDIRECT = "indirect"


class CostKind(enum.Enum):
    LINEAR = "linear"
    QUADRATIC = "quadratic"


class Direction(enum.Enum):
    """Permitted movement of a directly changeable feature."""

    INCREASE = "increase"
    DECREASE = "decrease"
    BOTH = "both"


@dataclass(frozen=True)
class FeaturePartition:
    """Partition of the p features into unchangeable / direct / indirect sets.

    ``unchangeable``, ``direct`` and ``indirect`` are index arrays into the
    full feature vector, in ascending order.  They are derived from ``roles``
    and therefore cover every index exactly once.
    """

    roles: tuple[Role, ...]
    unchangeable: np.ndarray = field(init=False, repr=False)
    direct: np.ndarray = field(init=False, repr=False)
    indirect: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        roles = tuple(self.roles)
        object.__setattr__(self, "roles", roles)
        by_role = {role: [] for role in Role}
        for i, role in enumerate(roles):
            by_role[role].append(i)
        object.__setattr__(self, "unchangeable", np.array(by_role[Role.UNCHANGEABLE], dtype=np.intp))
        object.__setattr__(self, "direct", np.array(by_role[Role.DIRECT], dtype=np.intp))
        object.__setattr__(self, "indirect", np.array(by_role[Role.INDIRECT], dtype=np.intp))

    @property
    def p(self) -> int:
        return len(self.roles)

    @property
    def n_direct(self) -> int:
        return len(self.direct)


@dataclass(frozen=True)
class CostSpec:
    """Per-feature unit costs for moving a directly changeable feature.

    ``increase[i]`` prices upward movement of the i-th direct feature,
    ``decrease[i]`` downward movement.  A zero entry makes that direction
    cost-free.  Costs accumulate linearly or quadratically in the displacement
    depending on ``kind``.
    """

    increase: np.ndarray
    decrease: np.ndarray
    kind: CostKind = CostKind.QUADRATIC

    def __post_init__(self):
        inc = np.asarray(self.increase, dtype=float)
        dec = np.asarray(self.decrease, dtype=float)
        if inc.shape != dec.shape or inc.ndim != 1:
            raise DimensionError("increase/decrease cost vectors must be 1-D and equally sized")
        if (inc < 0).any() or (dec < 0).any():
            raise ValueError("costs must be nonnegative")
        object.__setattr__(self, "increase", inc)
        object.__setattr__(self, "decrease", dec)

    @property
    def n(self) -> int:
        return self.increase.shape[0]


@dataclass(frozen=True)
class BoundSpec:
    """Absolute per-feature bounds for the direct features, plus the
    instance-relative shifts ``lower_rel = lower - x_bar`` and
    ``upper_rel = upper - x_bar`` once attached to an instance."""

    lower: np.ndarray
    upper: np.ndarray
    lower_rel: np.ndarray | None = None
    upper_rel: np.ndarray | None = None

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=float)
        hi = np.asarray(self.upper, dtype=float)
        if lo.shape != hi.shape or lo.ndim != 1:
            raise DimensionError("bound vectors must be 1-D and equally sized")
        if (lo > hi).any():
            raise InvalidBoundsError("lower bound exceeds upper bound")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        if self.lower_rel is not None:
            lr = np.asarray(self.lower_rel, dtype=float)
            ur = np.asarray(self.upper_rel, dtype=float)
            if (lr > 0).any() or (ur < 0).any():
                raise InvalidBoundsError("instance lies outside its own bounds")
            object.__setattr__(self, "lower_rel", lr)
            object.__setattr__(self, "upper_rel", ur)

    @property
    def n(self) -> int:
        return self.lower.shape[0]

    def attach(self, x_bar_d: np.ndarray) -> "BoundSpec":
        """Derive the instance-relative shifts for a concrete instance."""
        x = np.asarray(x_bar_d, dtype=float)
        if x.shape != self.lower.shape:
            raise DimensionError("instance has wrong number of direct features")
        return BoundSpec(self.lower, self.upper, self.lower - x, self.upper - x)


@dataclass(frozen=True)
class DirectionSpec:
    """Per-direct-feature movement restriction."""

    directions: tuple[Direction, ...]

    def __post_init__(self):
        object.__setattr__(self, "directions", tuple(self.directions))

    @property
    def n(self) -> int:
        return len(self.directions)


class Perturbation(NamedTuple):
    """A displacement of the direct features together with its budget."""

    z: np.ndarray
    budget: float

    def feasible(self, costs: CostSpec, bounds: BoundSpec, tol: float = DEFAULT_TOL) -> bool:
        """Box bounds must hold exactly, the budget up to ``tol``."""
        in_box = bool((self.z >= bounds.lower_rel).all() and (self.z <= bounds.upper_rel).all())
        return in_box and cost(self.z, costs) <= self.budget + tol


def cost(z: np.ndarray, spec: CostSpec) -> float:
    """Cumulative change cost of a displacement vector.

    Upward and downward movement are priced separately: linear cost sums
    ``c_inc*(z)_+ + c_dec*(z)_-`` per feature, quadratic cost the squares of
    the same parts.  The zero displacement always costs zero.
    """
    z = np.asarray(z, dtype=float)
    if z.shape != (spec.n,):
        raise DimensionError(f"displacement has length {z.shape}, expected ({spec.n},)")
    pos = np.maximum(z, 0.0)
    neg = np.maximum(-z, 0.0)
    if spec.kind is CostKind.QUADRATIC:
        return float(spec.increase @ (pos * pos) + spec.decrease @ (neg * neg))
    return float(spec.increase @ pos + spec.decrease @ neg)


def clamp_scaled(w: float, lam: float, i: int, costs: CostSpec, bounds: BoundSpec) -> float:
    """Single-coordinate KKT solution of the projection at multiplier ``lam``.

    For quadratic costs this shrinks ``w`` by ``1/(1 + 2*lam*c)`` and clamps it
    into the feature's relative bounds; the cost ``c`` is the increase cost for
    ``w >= 0`` and the decrease cost otherwise.  For linear costs the shrink is
    the soft-threshold shift ``w -/+ lam*c`` truncated at zero.
    """
    c = costs.increase[i] if w >= 0 else costs.decrease[i]
    if costs.kind is CostKind.QUADRATIC:
        v = w / (1.0 + 2.0 * lam * c)
    else:
        v = max(w - lam * c, 0.0) if w >= 0 else min(w + lam * c, 0.0)
    return float(min(max(v, bounds.lower_rel[i]), bounds.upper_rel[i]))


def _clamp_vector(w: np.ndarray, lam: float, costs: CostSpec, bounds: BoundSpec) -> np.ndarray:
    c = np.where(w >= 0, costs.increase, costs.decrease)
    if costs.kind is CostKind.QUADRATIC:
        v = w / (1.0 + 2.0 * lam * c)
    else:
        v = np.sign(w) * np.maximum(np.abs(w) - lam * c, 0.0)
    return np.clip(v, bounds.lower_rel, bounds.upper_rel)


def _project_zero_budget(w: np.ndarray, costs: CostSpec, bounds: BoundSpec) -> np.ndarray:
    # Only cost-free directions admit movement; everything priced collapses to 0.
    z = np.zeros_like(w)
    up_free = (w > 0) & (costs.increase == 0)
    dn_free = (w < 0) & (costs.decrease == 0)
    z[up_free] = np.minimum(w[up_free], bounds.upper_rel[up_free])
    z[dn_free] = np.maximum(w[dn_free], bounds.lower_rel[dn_free])
    return z


def project(
    w: np.ndarray,
    costs: CostSpec,
    bounds: BoundSpec,
    budget: float,
    tol: float = DEFAULT_TOL,
) -> Perturbation:
    """Project a displacement onto the budget- and box-feasible set.

    Returns the feasible ``z`` minimizing ``0.5*||z - w||^2``.  If the
    box-clamped ``w`` already satisfies the budget the multiplier is zero and
    the clamp is returned as-is; otherwise a bisection search finds the
    multiplier at which the clamped vector's cost meets the budget (within
    ``tol``).  The cost of the clamped vector is nonincreasing in the
    multiplier and vanishes in the limit, so the search always brackets.
    """
    if budget < 0:
        raise InvalidBudgetError(f"budget must be nonnegative, got {budget}")
    if tol <= 0:
        raise ValueError("tol must be positive")
    w = np.asarray(w, dtype=float)
    if w.shape != (costs.n,):
        raise DimensionError(f"input has shape {w.shape}, expected ({costs.n},)")
    if bounds.lower_rel is None:
        raise ValueError("bounds must be attached to an instance (missing relative shifts)")

    if budget == 0:
        return Perturbation(_project_zero_budget(w, costs, bounds), 0.0)

    z0 = _clamp_vector(w, 0.0, costs, bounds)
    if cost(z0, costs) <= budget:
        return Perturbation(z0, float(budget))

    lo, hi = 0.0, 1.0
    for _ in range(_MAX_DOUBLINGS):
        if cost(_clamp_vector(w, hi, costs, bounds), costs) <= budget:
            break
        lo = hi
        hi *= 2.0
    # Invariant: the clamp at hi is feasible, the clamp at lo is not.  Returning
    # the feasible side keeps the budget satisfied exactly and makes the
    # projection a fixed point of itself.
    z = _clamp_vector(w, hi, costs, bounds)
    for _ in range(_MAX_BISECT):
        if budget - cost(z, costs) <= tol:
            break
        mid = 0.5 * (lo + hi)
        z_mid = _clamp_vector(w, mid, costs, bounds)
        if cost(z_mid, costs) > budget:
            lo = mid
        else:
            hi = mid
            z = z_mid
        if hi - lo <= _BRACKET_WIDTH:
            break
    return Perturbation(z, float(budget))


def hardline_bounds(
    x_bar_d: np.ndarray,
    directions: DirectionSpec,
    raw: BoundSpec,
) -> BoundSpec:
    """Tighten raw bounds so each feature can only move in its permitted
    direction, then derive the instance-relative shifts.

    Increase-only features get their lower bound pinned to the instance value,
    decrease-only features their upper bound; unrestricted features keep the
    raw interval.
    """
    x = np.asarray(x_bar_d, dtype=float)
    if x.shape != raw.lower.shape or directions.n != raw.n:
        raise DimensionError("instance/direction/bound sizes disagree")
    lo = raw.lower.copy()
    hi = raw.upper.copy()
    for i, tag in enumerate(directions.directions):
        if tag is Direction.INCREASE:
            lo[i] = x[i]
        elif tag is Direction.DECREASE:
            hi[i] = x[i]
    bad = lo > hi
    if bad.any():
        raise ContradictoryDirectionError(
            f"direction restriction empties the interval for feature index {int(np.nonzero(bad)[0][0])}"
        )
    return BoundSpec(lo, hi).attach(x)


def partition_from_roles(roles: Sequence[Role]) -> FeaturePartition:
    return FeaturePartition(tuple(roles))
