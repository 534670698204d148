"""Budget-constrained inverse classification for black-box classifiers."""

from invclass.core import (
    BoundSpec,
    CostKind,
    CostSpec,
    Direction,
    DirectionSpec,
    FeaturePartition,
    InvClassError,
    Perturbation,
    Role,
    clamp_scaled,
    cost,
    hardline_bounds,
    project,
)

__version__ = "0.1.0"
