//! Special functions, Poisson CDF tools and Gaussian / Gamma identities.

mod kl;
pub(crate) mod linalg;
mod params;
mod poisson;
mod quadratic;
mod special;

pub(crate) use kl::kl_gaussian_factored;
pub use kl::{kl_gamma, kl_gaussian};
pub use linalg::{gaussian_log_density, SpdFactor};
pub use params::{GammaParams, GaussianParams};
pub use poisson::{poisson_cdf, InterpolatedPoissonCdf};
pub use quadratic::{sum_quadratic_forms, sum_weighted_quadratic_forms, QuadraticSum};
pub use special::{digamma, ln_gamma};
