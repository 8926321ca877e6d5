//! Trend test: meta-regression of ratio estimates on context mean exposure,
//! under each between-context variance estimator.

use ctxmr::metareg::{meta_regress, Tau2Method};

fn main() -> ctxmr::Result<()> {
    let means = [50.2, 51.0, 52.4, 53.9, 54.8, 55.5, 56.1, 56.9, 57.4];
    let estimates = [0.031, 0.024, 0.030, 0.012, 0.018, 0.004, 0.010, -0.002, 0.001];
    let variances = [4e-6, 6e-6, 5e-6, 3e-6, 8e-6, 4e-6, 5e-6, 3e-6, 9e-6];

    for method in [Tau2Method::Reml, Tau2Method::Dl, Tau2Method::Fixed] {
        let fit = meta_regress(&estimates, &variances, &means, method)?;
        println!(
            "{method:?}: slope {:+.5} (se {:.5}), p = {:.4}, tau2 = {:.3e}, residual Q = {:.2}, {} iterations",
            fit.slope,
            fit.slope_se,
            fit.slope_p.value(),
            fit.tau2,
            fit.q_res,
            fit.iterations
        );
    }
    Ok(())
}
