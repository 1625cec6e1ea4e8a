"""Limit-cycle statistics of random planar polynomial vector fields:
samplers, return maps, displacement-integral zero counts, expected-zero
integrals, and a seeded Monte Carlo experiment harness."""

__version__ = "0.1.0"

from .polynomials import (BivariatePolynomial, PlanarField, eval_poly,
                          fischer_norm, kostlan_covariance)
from .ensembles import (BargmannFockComponent, BargmannFockField, EnsembleSpec,
                        SeededRng, sample_bargmann_fock,
                        sample_bargmann_fock_field, sample_kostlan,
                        sample_power_law, sample_uniform_cube)
from .melnikov import (MelnikovSeries, count_real_zeros, melnikov_quadrature,
                       melnikov_series, sample_X_rho, sigma_m_squared)
from .kac_rice import (KernelEval, asymptotic_expected_zeros, expected_zeros,
                       kernel_K)
from .dynamics import (EllipticalAnnulus, ReturnMapResult,
                       build_barrier_field, certify_transverse_annulus,
                       count_return_fixed_points, count_tangencies,
                       find_equilibria, map_annulus, poincare_return,
                       poincare_return_cartesian)
from .harness import (ExperimentConfig, ExperimentReport, emit_report,
                      run_experiment)

__all__ = [
    "BargmannFockComponent", "BargmannFockField", "BivariatePolynomial",
    "EllipticalAnnulus", "EnsembleSpec", "ExperimentConfig",
    "ExperimentReport", "KernelEval", "MelnikovSeries", "PlanarField",
    "ReturnMapResult", "SeededRng", "asymptotic_expected_zeros",
    "build_barrier_field", "certify_transverse_annulus", "count_real_zeros",
    "count_return_fixed_points", "count_tangencies", "emit_report",
    "eval_poly", "expected_zeros", "find_equilibria", "fischer_norm",
    "kernel_K", "kostlan_covariance", "map_annulus", "melnikov_quadrature",
    "melnikov_series", "poincare_return", "poincare_return_cartesian",
    "run_experiment", "sample_X_rho", "sample_bargmann_fock",
    "sample_bargmann_fock_field", "sample_kostlan", "sample_power_law",
    "sample_uniform_cube", "sigma_m_squared",
]
