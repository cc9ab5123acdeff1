"""Shape recovery from a single fan-beam X-ray projection."""
from .exceptions import (ConfigError, CoSharpError, DimensionMismatch, EmptyDictionary,
                         EmptyRaster, GeometryUncovered, InfeasibleBudget, NonFiniteIterate,
                         PlacementInfeasible)
from .formation import FormationResult, form_image
from .geometry import (FanBeamGeometry, ImageGrid, NormEstimate, SparseProjector,
                       build_fan_projector, operator_norm, power_iteration)
from .prox import project_ksimplex, project_l1_ball, prox_conj_misfit
from .shapes import (Dictionary, Disc, Ellipse, EllipticalShell, Phantom, Pose, RadialDisc,
                     ShapeSpec, build_dictionary, default_lattice, disc_radius_for_pixels,
                     random_phantom, rasterize)
from .solver import (ShapeCoefficientRegressor, SolverConfig, SolverResult, default_config,
                     sensing_matrix, solve, solve_operator)

__version__ = "0.1.0"
