//! Numerical differentiation of bivariate functions from noisy
//! Fourier-Legendre coefficients by hyperbolic-cross truncation.

pub mod cross;
pub mod error;
pub mod harness;
pub mod legendre;
pub mod lowerbound;
pub mod noise;
pub mod quadrature;
pub mod spectral;
pub mod truncation;

pub use cross::{build_cross, HyperbolicCross};
pub use error::{Error, Result};
pub use legendre::{
    clenshaw_eval, eval_phi, eval_phi_all, eval_phi_derivative, muller_differentiate,
    muller_differentiate_iterated, Coeffs1D,
};
pub use quadrature::{compute_coeff_grid, gauss_legendre_rule, l2_norm_quadrature, QuadratureRule};
pub use spectral::{
    class_norm, mixed_derivative_coeffs, parseval_l2_norm, restrict_to_cross, sup_norm_on_grid, synth_eval,
    ClassParams, CoeffGrid,
};
pub use noise::{lp_norm, perturb, LpExponent, NoiseMode, NoiseSpec};
pub use truncation::{
    apply_method, gamma_intervals, select_parameters, theoretical_error_exponent, MethodParams, Metric,
    SelectionInput,
};
pub use harness::{
    fit_rate, run_convergence_study, run_radius_study, synthesize_class_function, ExperimentConfig, ExperimentResult,
    RadiusConfig, RadiusReport,
};
pub use lowerbound::{build_witness_pair, min_n_for_delta, verify_lower_bound_c, verify_lower_bound_l2, WitnessPair};
