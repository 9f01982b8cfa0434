//! Jump process on the unit torus with kernel `H / (v (1 - v))`.

pub mod levy;
pub mod quad;
pub mod regularize;

pub use levy::{
    char_exponent, i_b, i_b_quadrature, r_torus, sample_levy_path, LevyParams, LevyPath, TorusPoint, DEFAULT_EPS,
};
pub use regularize::{
    binned_rate_error, limit_generator, proxy_rates, regularized_generator_compare, RegularizationReport,
    RegularizationScheme, SchemeConstants,
};
