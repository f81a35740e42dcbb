"""Frequency-domain scattering tomography on the disk.

Synthesizes angularly averaged boundary measurements for an absorbing,
scattering medium (ballistic, single-scattering, and Monte-Carlo multiple
scattering), reconstructs the band-limited scattering density by
regularized filtered backprojection, sharpens it by fixed-point residual
subtraction, and numerically certifies the stationary-phase machinery the
error analysis rests on.
"""

from .config import (ExperimentConfig, build_phantom, build_phase,
                     build_sigma, config_digest, config_from_dict,
                     load_config, with_seed)
from .errors import (ContractionPreconditionError, DivergenceError,
                     NumericalPreconditionError, PhaseConditionError,
                     ResolutionError)
from .fields import (PhaseFunction, ScalarField, attenuation,
                     attenuation_path, line_integral_quad, make_attenuation,
                     make_phantom, optical_length, radon_sigma, rho_bounds,
                     rho_weight)
from .forward import (DataSet, McBudget, QuadPolicy, ballistic,
                      leading_single, multiple_scattering, scattering_density,
                      single_scattering, synthesize_data)
from .geometry import (BoundaryJacobians, BoundaryPair, DiskDomain,
                       GeometryError, SinogramGrid, boundary_jacobians,
                       boundary_points, chi, perp_vector, unit_vector)
from .inversion import (ContractionReport, InversionConfig,
                        ReconstructionState, ResidualSplit, amplitude_A,
                        amplitude_inverse_bound, apply_inverse,
                        contraction_report, estimate_L_norm, iterate,
                        residual_R, resolve_k0)
from .oscphase import (MarginReport, Phase1Model, Phase2Model,
                       PhaseModel1D, Phi2Derivatives, beta_kernel,
                       critical_curve_sigma, fresnel_F,
                       gaussian_quadratic_model, gaussian_quadratic_oracle,
                       lemma_S_margins, phi1_curvature_range,
                       phi1_second_derivative, phi2_curvature_range,
                       phi2_derivatives, s2_profile,
                       s2_second_derivative_aligned, stationary_phase_1d)
from .storage import (GridRecord, SinogramRecord, read_grid, read_sinogram,
                      write_csv, write_grid, write_json, write_sinogram)
from .xray import (FilterSpec, backproject, backproject_points, fbp,
                   fbp_points, fbp_riesz_form, filter_w, lowpass_reference,
                   mollifier_W, radon, radon_points, w1_l1_norm)

__version__ = "0.1.0"
