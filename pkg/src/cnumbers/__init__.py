"""Multiscale center-of-mass coefficients and decompositions for discrete measures."""

from cnumbers.coefficients import (
    AffinePlane,
    Kind,
    SphereMap,
    beta_number,
    c_number,
    circular_projection,
    coefficient_profile,
    omega_c_number,
    smooth_c_number,
)
from cnumbers.cubes import build_christ_cubes
from cnumbers.czdecomp import cz_decompose, verify_cz
from cnumbers.energies import ScaleGrid, carleson_energy, dini_curve, dini_integral
from cnumbers.generators import GeneratorSpec, generate
from cnumbers.measures import (
    Ball,
    DiscreteMeasure,
    ad_regularity,
    ball_mass,
    build_measure,
    multiply_density,
    upper_density,
)
from cnumbers.transport import alpha_number, bl_distance
from cnumbers.wavelets import build_basis, coefficients_of_g

__all__ = [
    "AffinePlane",
    "Ball",
    "DiscreteMeasure",
    "GeneratorSpec",
    "Kind",
    "ScaleGrid",
    "SphereMap",
    "ad_regularity",
    "alpha_number",
    "ball_mass",
    "beta_number",
    "bl_distance",
    "build_basis",
    "build_christ_cubes",
    "build_measure",
    "c_number",
    "carleson_energy",
    "circular_projection",
    "coefficient_profile",
    "coefficients_of_g",
    "cz_decompose",
    "dini_curve",
    "dini_integral",
    "generate",
    "multiply_density",
    "omega_c_number",
    "smooth_c_number",
    "upper_density",
    "verify_cz",
]

__version__ = "0.1.0"
