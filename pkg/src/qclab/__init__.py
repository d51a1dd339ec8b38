"""Numerical laboratory for random quasiconformal maps and glued surfaces.

Submodules
----------
partition    periodic plane partitions (grid and vertex-sector families)
beltrami     random coefficient fields, truncation, rescaling, pullbacks
solver       Beltrami equation solver (Beurling transform iteration)
percolation  colorings, chemical distance, comparability experiments
modulus      discrete extremal length and conductivity diagnostics
surface      random hemisphere gluings and their coefficient fields
asymptotics  linearity-of-scaling and growth-order estimation
gridio       binary grid dumps and delimited tables
cli          seeded experiment runner
"""

__version__ = "0.1.0"

from .partition import (RegionId, build_square_grid, build_vertex_sector_partition,
                        count_regions_in_disk, load_partition, region_of)
from .beltrami import (BeltramiField, PointMassLaw, RegionLaw, TruncatedNormalLaw,
                       TwoPointLaw, UniformModulusLaw, field_from_function,
                       probabilistic_bound_estimate, pullback_conformal, rescale,
                       sample_field, truncate)
from .solver import (DiscreteMap, NonConvergenceError, evaluate, invert_at,
                     map_from_function, solve_limit, solve_truncated)
from .percolation import (Coloring, chemical_distance, chemical_distances_exact,
                          color_regions, insularity_fraction, ratio_experiment)
from .modulus import (ConductivityField, Quadrilateral, annulus_chain_diagnostic,
                      conductivity_from_beltrami, modulus_annulus_discrete,
                      modulus_discrete, modulus_euclidean_rectangle,
                      random_rectangles, rough_qc_report)
from .surface import (PointMassArcLaw, SurfaceModel, SurfaceSample,
                      TruncatedNormalArcLaw, UniformArcLaw, boundary_coordinate,
                      cross_ratio, default_model, elliptic_base_map, sample_surface,
                      sector_beltrami, sector_slopes, surface_beltrami)
from .asymptotics import (CharacteristicCurve, LinearMapEstimate, characteristic,
                          deviation_curve, estimate_linear_map,
                          nonlinear_radial_control, order_fit, spherical_area,
                          surface_order_curve)

__all__ = [name for name in dir() if not name.startswith("_")]
