//! Special functions used by the closed-form metrics.

pub mod bessel;
pub mod erf;
pub mod gamma;
pub mod mellin;

pub use bessel::{bessel_i, bessel_i_scaled, bessel_j0, ln_bessel_i};
pub use erf::{erf, erfc, gaussian_q};
pub use gamma::{gamma, gamma_p, gamma_q, ln_binomial, ln_gamma, ln_gamma_complex, lower_incomplete_gamma};
pub use mellin::{
    fox_h, fox_h_bivariate, fox_h_bivariate_unrefined, fox_h_unrefined, meijer_g, ContourConfig,
    ContourRule, ContourShift, Evaluation, FoxHBivariateSpec, FoxHSpec, MeijerGSpec,
};
