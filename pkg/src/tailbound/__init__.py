"""tailbound: statistically valid worst-case bounds on tail probabilities
and quantiles from i.i.d. data, using geometric shape constraints on the
tail density plus data-calibrated moment constraints, with a classical
peaks-over-threshold baseline for comparison."""

from .model import (
    BoundResult,
    DROProblem,
    Ellipsoid,
    MomentSpec,
    PiecewisePoly,
    ProductSet,
    QuantileObjective,
    Rectangle,
    ShapeSpec,
    TailInterval,
    TailSample,
    ThresholdSpec,
    build_problem,
    empirical_quantile,
)

__version__ = "0.1.0"
