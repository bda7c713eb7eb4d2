"""Harmonic map heat flow into CAT(0) spaces on weighted graphs.

The package has four layers:

``cat0flow.target``
    CAT(0) target spaces (Euclidean, metric trees, hyperbolic plane, products).
``cat0flow.mesh``
    Weighted-graph domains, discrete energy, Laplacian and heat semigroup.
``cat0flow.flow``
    Resolvent, Crandall-Liggett iteration, traces and flow-level checks.
``cat0flow.regularity``
    Residuals of the regularity inequalities satisfied along the flow.

``cat0flow.scenario`` and ``cat0flow.cli`` drive configured runs.
"""
from .errors import *  # noqa: F401,F403
from .target import (
    Euclidean,
    HyperbolicPlane,
    MetricTree,
    Point,
    Product,
    TargetSpace,
    comparison_residuals,
    distance,
    geodesic_point,
    inductive_mean,
    project_to_ball,
    random_tree,
    tripod,
    weighted_barycenter,
)
from .mesh import (
    MapState,
    MeshDomain,
    build_domain,
    energy,
    heat_evolve,
    ks_energy_profile,
    l2_distance,
    laplacian,
    poincare_constant,
)
from .flow import (
    FlowTrace,
    confinement_check,
    crandall_liggett,
    evi_residual,
    flow_run,
    harmonic_map,
    resolvent,
    semigroup_residual,
)

__version__ = "0.1.0"
