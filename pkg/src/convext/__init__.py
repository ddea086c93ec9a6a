"""Convexity classification and convex / Hessian-convex extension on non-convex domains."""
from .classify import (convexity_verdict, interval_convexity_verdict, line_convexity_verdict,
                       lipschitz_estimate, local_convexity_verdict)
from .domains import (BandDomain, FiniteSampledFunction, GridDomain, GridFunction, PointCloud,
                      build_grid_domain, domain_from_json, domain_to_json, named_domain,
                      sample_function)
from .errors import ConvextError
from .extend import band_extension, convex_roof, outer_extension
from .gallery import SCENARIO_NAMES, construct_th203, run_scenario, scenario
from .geometry import epsilon_neighborhood, hull_membership, relative_interior_test
from .smooth import (ball_cover, barrier_function, fd_hessian, full_smooth_extension,
                     hull_smooth_extension, mollify, outside_smooth_extension, pd_certify)
from .tolerances import DEFAULT_TOLERANCES, ToleranceConfig

__version__ = "0.1.0"
