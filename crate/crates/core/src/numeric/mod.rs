//! Small numerical kernels shared by the estimator, model and check modules.

mod normal;
mod quadrature;
mod sum;

pub use normal::{normal_cdf, normal_quantile};
pub use quadrature::integrate;
pub use sum::{neumaier_sum, NeumaierSum};

use statrs::function::gamma::ln_gamma;

/// `ln C(n, k)` for `k <= n`.
pub fn ln_binomial(n: u64, k: u64) -> f64 {
    debug_assert!(k <= n);
    if k == 0 || k == n {
        return 0.0;
    }
    ln_gamma(n as f64 + 1.0) - ln_gamma(k as f64 + 1.0) - ln_gamma((n - k) as f64 + 1.0)
}
