//! Random-effects meta-regression of context estimates on context mean exposure.
//!
//! Model: `est_k = g0 + g1 * xmean_k + u_k + e_k`, `Var(e_k) = v_k`,
//! `Var(u_k) = tau2`. The slope is tested with a two-sided z-test.

use crate::error::{Error, Result};
use crate::heterogeneity::{modified_variances, q_modified_second_order};
use crate::ivcore::ContextResult;
use crate::numerics::{normal_sf, wls_solve, Matrix, PValue, WlsFit};
use serde::{Deserialize, Serialize};

pub const REML_TOL: f64 = 1e-8;
pub const REML_MAX_ITER: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Tau2Method {
    #[default]
    Reml,
    Dl,
    Fixed,
}

impl std::str::FromStr for Tau2Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "reml" => Ok(Tau2Method::Reml),
            "dl" => Ok(Tau2Method::Dl),
            "fixed" => Ok(Tau2Method::Fixed),
            other => Err(Error::InvalidConfig(format!("unknown tau2 method `{other}`"))),
        }
    }
}

/// Which within-context variance the trend test uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TrendVariance {
    #[default]
    FirstOrder,
    ModifiedSecondOrder,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaRegResult {
    pub intercept: f64,
    pub slope: f64,
    pub slope_se: f64,
    pub tau2: f64,
    pub slope_p: PValue,
    pub tau2_method: Tau2Method,
    /// Weighted residual sum of squares at `tau2 = 0`.
    pub q_res: f64,
    pub iterations: usize,
}

fn design(means: &[f64]) -> Result<Matrix> {
    let data = means.iter().flat_map(|&m| [1.0, m]).collect();
    Matrix::new(means.len(), 2, data)
}

fn weighted_fit(x: &Matrix, est: &[f64], var: &[f64], tau2: f64) -> Result<WlsFit> {
    let w: Vec<f64> = var.iter().map(|v| 1.0 / (v + tau2)).collect();
    wls_solve(x, est, &w)
}

/// `P = W - W X (X'WX)^{-1} X' W`, dense `K x K`.
fn projection(x: &Matrix, w: &[f64], cov: &Matrix) -> Vec<Vec<f64>> {
    let k = w.len();
    let mut p = vec![vec![0.0; k]; k];
    for i in 0..k {
        for j in 0..k {
            let mut h = 0.0;
            for a in 0..2 {
                for b in 0..2 {
                    h += x.get(i, a) * cov.get(a, b) * x.get(j, b);
                }
            }
            p[i][j] = if i == j { w[i] } else { 0.0 } - w[i] * h * w[j];
        }
    }
    p
}

fn dl_tau2(x: &Matrix, est: &[f64], var: &[f64]) -> Result<(f64, f64)> {
    let k = est.len();
    let fit = weighted_fit(x, est, var, 0.0)?;
    let w: Vec<f64> = var.iter().map(|v| 1.0 / v).collect();
    let p = projection(x, &w, &fit.cov);
    let trace_p: f64 = (0..k).map(|i| p[i][i]).sum();
    let tau2 = ((fit.rss - (k - 2) as f64) / trace_p).max(0.0);
    Ok((tau2, fit.rss))
}

/// Fisher scoring on the restricted likelihood from the DL starting value,
/// clamped to `tau2 >= 0`.
fn reml_tau2(x: &Matrix, est: &[f64], var: &[f64], start: f64) -> Result<(f64, usize)> {
    let k = est.len();
    let mut tau2 = start;
    let mut trace = Vec::new();
    for it in 1..=REML_MAX_ITER {
        let w: Vec<f64> = var.iter().map(|v| 1.0 / (v + tau2)).collect();
        let fit = wls_solve(x, est, &w)?;
        let p = projection(x, &w, &fit.cov);
        let py: Vec<f64> = (0..k).map(|i| (0..k).map(|j| p[i][j] * est[j]).sum()).collect();
        let ypp_y: f64 = py.iter().map(|v| v * v).sum();
        let trace_p: f64 = (0..k).map(|i| p[i][i]).sum();
        let trace_pp: f64 = (0..k).map(|i| (0..k).map(|j| p[i][j] * p[j][i]).sum::<f64>()).sum();
        let next = (tau2 + (ypp_y - trace_p) / trace_pp).max(0.0);
        let delta = (next - tau2).abs();
        tau2 = next;
        trace.push(tau2);
        if delta < REML_TOL {
            return Ok((tau2, it));
        }
    }
    Err(Error::NonConvergence { trace })
}

/// Meta-regression of `estimates` on `means` with within-context `variances`.
pub fn meta_regress(estimates: &[f64], variances: &[f64], means: &[f64], method: Tau2Method) -> Result<MetaRegResult> {
    let k = estimates.len();
    if variances.len() != k || means.len() != k {
        return Err(Error::Domain("estimates, variances and means must have equal length".into()));
    }
    if k < 3 {
        return Err(Error::TooFewContexts { needed: 3, got: k });
    }
    if let Some(i) = variances.iter().position(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(Error::Domain(format!("variance {i} is not positive")));
    }
    let lo = means.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = means.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(hi - lo > 1e-12 * hi.abs().max(lo.abs()).max(1e-300)) {
        return Err(Error::CollinearMeans);
    }

    let x = design(means)?;
    let (dl, q_res) = dl_tau2(&x, estimates, variances)?;
    let (tau2, iterations) = match method {
        Tau2Method::Fixed => (0.0, 0),
        Tau2Method::Dl => (dl, 0),
        Tau2Method::Reml => reml_tau2(&x, estimates, variances, dl)?,
    };
    let fit = weighted_fit(&x, estimates, variances, tau2)?;
    let slope = fit.coef[1];
    let slope_se = fit.cov.get(1, 1).sqrt();
    let slope_p = PValue::new(2.0 * normal_sf((slope / slope_se).abs())?.value());
    Ok(MetaRegResult {
        intercept: fit.coef[0],
        slope,
        slope_se,
        tau2,
        slope_p,
        tau2_method: method,
        q_res,
        iterations,
    })
}

/// Meta-regression of the ratio estimates on context mean exposure.
pub fn trend_test(results: &[ContextResult], method: Tau2Method, variance: TrendVariance) -> Result<MetaRegResult> {
    let estimates: Vec<f64> = results.iter().map(|r| r.ratio).collect();
    let means: Vec<f64> = results.iter().map(|r| r.summary.exposure_mean).collect();
    let variances = match variance {
        TrendVariance::FirstOrder => results.iter().map(|r| r.ratio_se_first_order.powi(2)).collect(),
        TrendVariance::ModifiedSecondOrder => {
            let beta = q_modified_second_order(results)?.pooled_beta;
            modified_variances(results, beta)
        }
    };
    meta_regress(&estimates, &variances, &means, method)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_estimates_have_no_slope() {
        let est = [0.3; 6];
        let var = [0.1, 0.2, 0.05, 0.3, 0.1, 0.2];
        let means = [1.0, 2.0, 3.5, 4.0, 4.1, 7.0];
        for m in [Tau2Method::Reml, Tau2Method::Dl, Tau2Method::Fixed] {
            let r = meta_regress(&est, &var, &means, m).unwrap();
            assert!(r.slope.abs() < 1e-12);
            assert!((r.slope_p.value() - 1.0).abs() < 1e-10);
            assert_eq!(r.tau2, 0.0);
        }
    }

    #[test]
    fn exact_line() {
        let means = [1.0, 2.0, 4.0];
        let est: Vec<f64> = means.iter().map(|m| 0.5 + 0.25 * m).collect();
        let var = [0.01; 3];
        let fixed = meta_regress(&est, &var, &means, Tau2Method::Fixed).unwrap();
        assert!((fixed.slope - 0.25).abs() < 1e-12);
        assert!(fixed.q_res < 1e-20);
        let dl = meta_regress(&est, &var, &means, Tau2Method::Dl).unwrap();
        assert_eq!(dl.tau2, 0.0);
        assert!((dl.slope - fixed.slope).abs() < 1e-14);
    }

    #[test]
    fn input_validation() {
        assert!(matches!(
            meta_regress(&[1.0, 2.0], &[1.0, 1.0], &[1.0, 2.0], Tau2Method::Reml),
            Err(Error::TooFewContexts { needed: 3, got: 2 })
        ));
        assert!(matches!(
            meta_regress(&[1.0, 2.0, 3.0], &[1.0; 3], &[5.0; 3], Tau2Method::Reml),
            Err(Error::CollinearMeans)
        ));
        assert!(meta_regress(&[1.0, 2.0, 3.0], &[1.0, 0.0, 1.0], &[1.0, 2.0, 3.0], Tau2Method::Reml).is_err());
    }

    #[test]
    fn heterogeneous_data_gets_positive_tau2() {
        let means = [0.0, 1.0, 2.0, 3.0, 4.0, 5.0];
        let est = [0.0, 2.0, -1.0, 3.0, -2.0, 1.0];
        let var = [0.01; 6];
        let reml = meta_regress(&est, &var, &means, Tau2Method::Reml).unwrap();
        let dl = meta_regress(&est, &var, &means, Tau2Method::Dl).unwrap();
        assert!(reml.tau2 > 1.0);
        assert!(dl.tau2 > 1.0);
        // equal variances: DL and REML coincide
        assert!((reml.tau2 - dl.tau2).abs() < 1e-6);
    }
}
