//! Instrument association estimates: linear regression for continuous
//! responses, logistic regression (IRLS) for binary ones. Every model has an
//! intercept; the coefficient of interest is always column 1.

use crate::datamodel::IndividualRecord;
use crate::error::{Error, Result};
use crate::numerics::{wls_solve, Matrix};
use serde::{Deserialize, Serialize};
use std::borrow::Borrow;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    #[default]
    Linear,
    Logistic,
}

impl std::str::FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(Family::Linear),
            "logistic" => Ok(Family::Logistic),
            other => Err(Error::InvalidConfig(format!("unknown family `{other}`"))),
        }
    }
}

/// Field of an [`IndividualRecord`] used as a regression variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Instrument,
    Exposure,
    Outcome,
    Covariate(usize),
}

impl Role {
    fn value(self, r: &IndividualRecord) -> f64 {
        match self {
            Role::Instrument => r.instrument,
            Role::Exposure => r.exposure,
            Role::Outcome => r.outcome,
            Role::Covariate(i) => r.covariates[i],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionSpec {
    pub response: Role,
    pub predictor: Role,
    /// Indices into [`IndividualRecord::covariates`].
    pub covariates: Vec<usize>,
    pub family: Family,
}

impl RegressionSpec {
    /// Exposure on instrument, linear.
    pub fn exposure(covariates: Vec<usize>) -> Self {
        RegressionSpec { response: Role::Exposure, predictor: Role::Instrument, covariates, family: Family::Linear }
    }

    /// Outcome on instrument under the given family.
    pub fn outcome(covariates: Vec<usize>, family: Family) -> Self {
        RegressionSpec { response: Role::Outcome, predictor: Role::Instrument, covariates, family }
    }

    fn validate(&self) -> Result<()> {
        if let Role::Covariate(i) = self.predictor {
            if self.covariates.contains(&i) {
                return Err(Error::InvalidConfig(format!("predictor covariate {i} also listed as an adjustment covariate")));
            }
        }
        Ok(())
    }

    fn n_params(&self) -> usize {
        2 + self.covariates.len()
    }
}

/// A regression coefficient with its model-based standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AssocEstimate {
    pub beta: f64,
    pub se: f64,
    pub n: usize,
}

impl AssocEstimate {
    pub fn t_stat(&self) -> f64 {
        self.beta / self.se
    }
}

/// An association estimate plus fitting diagnostics.
#[derive(Debug, Clone)]
pub struct Fit {
    pub estimate: AssocEstimate,
    /// Residuals were numerically zero, so `se` is reported as 0.
    pub degenerate: bool,
    pub iterations: usize,
    /// Deviance after each accepted IRLS step (logistic only).
    pub deviance_trace: Vec<f64>,
}

fn design<R: Borrow<IndividualRecord>>(data: &[R], spec: &RegressionSpec) -> Result<(Matrix, Vec<f64>)> {
    spec.validate()?;
    let n = data.len();
    let p = spec.n_params();
    if n <= p {
        return Err(Error::TooFewObservations { n, p });
    }
    let mut x = Vec::with_capacity(n * p);
    let mut y = Vec::with_capacity(n);
    for (row, r) in data.iter().enumerate() {
        let r = r.borrow();
        let resp = spec.response.value(r);
        let pred = spec.predictor.value(r);
        let start = x.len();
        x.push(1.0);
        x.push(pred);
        for &c in &spec.covariates {
            let v = r
                .covariates
                .get(c)
                .copied()
                .ok_or_else(|| Error::InvalidConfig(format!("covariate index {c} out of range in row {row}")))?;
            x.push(v);
        }
        if !resp.is_finite() || x[start..].iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { row });
        }
        y.push(resp);
    }
    Ok((Matrix::new(n, p, x)?, y))
}

/// Ordinary least squares; `se` uses `RSS / (n - p)`.
pub fn fit_linear<R: Borrow<IndividualRecord>>(data: &[R], spec: &RegressionSpec) -> Result<Fit> {
    if spec.family != Family::Linear {
        return Err(Error::InvalidConfig("fit_linear called with a non-linear family".into()));
    }
    let (x, y) = design(data, spec)?;
    let n = y.len();
    let p = x.cols();
    let fit = wls_solve(&x, &y, &vec![1.0; n])?;
    let mean = y.iter().sum::<f64>() / n as f64;
    let tss: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    let degenerate = fit.rss <= 1e-24 * tss || tss == 0.0;
    let sigma2 = if degenerate { 0.0 } else { fit.rss / (n - p) as f64 };
    Ok(Fit {
        estimate: AssocEstimate { beta: fit.coef[1], se: (sigma2 * fit.cov.get(1, 1)).sqrt(), n },
        degenerate,
        iterations: 1,
        deviance_trace: Vec::new(),
    })
}

const LOGISTIC_TOL: f64 = 1e-10;
const LOGISTIC_MAX_ITER: usize = 50;
const SEPARATION_COEF: f64 = 15.0;
const MAX_HALVINGS: usize = 30;
/// Relative deviance increase tolerated as round-off near the optimum.
const DEVIANCE_SLACK: f64 = 1e-12;

fn linear_predictor(x: &Matrix, coef: &[f64]) -> Vec<f64> {
    (0..x.rows()).map(|i| x.row(i).iter().zip(coef).map(|(a, b)| a * b).sum()).collect()
}

fn sigmoid(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

fn deviance(y: &[f64], eta: &[f64]) -> f64 {
    // -2 log L with log(1 + e^eta) computed stably
    -2.0 * y
        .iter()
        .zip(eta)
        .map(|(&yi, &e)| {
            let log1pexp = if e > 0.0 { e + (-e).exp().ln_1p() } else { e.exp().ln_1p() };
            yi * e - log1pexp
        })
        .sum::<f64>()
}

/// Maximum-likelihood logistic regression by IRLS from all-zero
/// coefficients, halving any step that increases the deviance.
///
/// Converges when the largest coefficient change is below `1e-10`, or stops
/// after 50 iterations. The reported `se` is from the inverse information at
/// the final coefficients.
pub fn fit_logistic<R: Borrow<IndividualRecord>>(data: &[R], spec: &RegressionSpec) -> Result<Fit> {
    if spec.family != Family::Logistic {
        return Err(Error::InvalidConfig("fit_logistic called with a non-logistic family".into()));
    }
    let (x, y) = design(data, spec)?;
    let n = y.len();
    if y.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(Error::Domain("logistic response must be 0/1".into()));
    }
    let cases = y.iter().filter(|&&v| v == 1.0).count();
    if cases == 0 || cases == n {
        return Err(Error::SingleClass);
    }

    let p = x.cols();
    let mut coef = vec![0.0; p];
    let mut eta = vec![0.0; n];
    let mut dev = deviance(&y, &eta);
    let mut trace = vec![dev];
    let mut iterations = 0;

    while iterations < LOGISTIC_MAX_ITER {
        iterations += 1;
        let mut w = Vec::with_capacity(n);
        let mut z = Vec::with_capacity(n);
        for (&e, &yi) in eta.iter().zip(&y) {
            let mu = sigmoid(e);
            let wi = (mu * (1.0 - mu)).max(1e-300);
            w.push(wi);
            z.push(e + (yi - mu) / wi);
        }
        let proposal = wls_solve(&x, &z, &w)?.coef;

        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..=MAX_HALVINGS {
            let cand: Vec<f64> = coef.iter().zip(&proposal).map(|(c, t)| c + step * (t - c)).collect();
            let cand_eta = linear_predictor(&x, &cand);
            let cand_dev = deviance(&y, &cand_eta);
            if cand_dev.is_finite() && cand_dev <= dev + DEVIANCE_SLACK * dev.abs() {
                accepted = Some((cand, cand_eta, cand_dev));
                break;
            }
            step *= 0.5;
        }
        let Some((cand, cand_eta, cand_dev)) = accepted else {
            // No descent direction left at working precision.
            break;
        };
        let change = coef.iter().zip(&cand).fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
        coef = cand;
        eta = cand_eta;
        dev = cand_dev;
        trace.push(dev);

        if coef[1].abs() > SEPARATION_COEF {
            return Err(Error::Separation(format!("instrument coefficient reached {:.3}", coef[1])));
        }
        if dev < 1e-8 * n as f64 {
            return Err(Error::Separation("deviance collapsed to zero".into()));
        }
        if change < LOGISTIC_TOL {
            break;
        }
    }

    let w: Vec<f64> = eta.iter().map(|&e| {
        let mu = sigmoid(e);
        mu * (1.0 - mu)
    }).collect();
    let info = wls_solve(&x, &vec![0.0; n], &w)?;
    Ok(Fit {
        estimate: AssocEstimate { beta: coef[1], se: info.cov.get(1, 1).sqrt(), n },
        degenerate: false,
        iterations,
        deviance_trace: trace,
    })
}

/// Dispatches on `spec.family`.
pub fn fit<R: Borrow<IndividualRecord>>(data: &[R], spec: &RegressionSpec) -> Result<Fit> {
    match spec.family {
        Family::Linear => fit_linear(data, spec),
        Family::Logistic => fit_logistic(data, spec),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn rec(g: f64, x: f64, y: f64, covs: Vec<f64>) -> IndividualRecord {
        IndividualRecord { instrument: g, exposure: x, outcome: y, context: 0, covariates: covs }
    }

    #[test]
    fn exact_fit_reports_zero_se() {
        let data: Vec<_> = (0..100).map(|i| {
            let g = (i % 3) as f64;
            rec(g, 2.0 * g, 0.0, vec![])
        }).collect();
        let fit = fit_linear(&data, &RegressionSpec::exposure(vec![])).unwrap();
        assert!((fit.estimate.beta - 2.0).abs() < 1e-12);
        assert_eq!(fit.estimate.se, 0.0);
        assert!(fit.degenerate);
    }

    #[test]
    fn matches_simple_regression_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let data: Vec<_> = (0..10_000).map(|i| {
            let g = (i % 3) as f64;
            let e: f64 = rng.sample(StandardNormal);
            rec(g, g + e, 0.0, vec![])
        }).collect();
        let fit = fit_linear(&data, &RegressionSpec::exposure(vec![])).unwrap();

        // closed-form cov(g, x) / var(g) and its classical SE
        let n = data.len() as f64;
        let mg = data.iter().map(|r| r.instrument).sum::<f64>() / n;
        let mx = data.iter().map(|r| r.exposure).sum::<f64>() / n;
        let sxy: f64 = data.iter().map(|r| (r.instrument - mg) * (r.exposure - mx)).sum();
        let sxx: f64 = data.iter().map(|r| (r.instrument - mg).powi(2)).sum();
        let slope = sxy / sxx;
        let rss: f64 = data.iter().map(|r| (r.exposure - mx - slope * (r.instrument - mg)).powi(2)).sum();
        let se = (rss / (n - 2.0) / sxx).sqrt();

        assert!((fit.estimate.beta - slope).abs() < 1e-10);
        assert!((fit.estimate.se - se).abs() < 1e-10);
        assert!((fit.estimate.beta - 1.0).abs() < 4.0 * se);
    }

    #[test]
    fn orthogonal_covariate_leaves_beta_unchanged() {
        // g balanced over {0,1,2}; c = +-1 balanced within each g level
        let mut data = Vec::new();
        for i in 0..120 {
            let g = (i % 3) as f64;
            let c = if (i / 3) % 2 == 0 { 1.0 } else { -1.0 };
            let x = 0.7 * g + 0.3 * c + ((i * 7919) % 13) as f64 * 0.01;
            data.push(rec(g, x, 0.0, vec![c]));
        }
        let plain = fit_linear(&data, &RegressionSpec::exposure(vec![])).unwrap();
        let adj = fit_linear(&data, &RegressionSpec::exposure(vec![0])).unwrap();
        assert!((plain.estimate.beta - adj.estimate.beta).abs() < 1e-8);
    }

    #[test]
    fn too_few_rows() {
        let data = vec![rec(0.0, 1.0, 0.0, vec![]), rec(1.0, 2.0, 0.0, vec![])];
        assert!(matches!(
            fit_linear(&data, &RegressionSpec::exposure(vec![])),
            Err(Error::TooFewObservations { n: 2, p: 2 })
        ));
    }

    #[test]
    fn non_finite_row_reported() {
        let mut data: Vec<_> = (0..10).map(|i| rec(i as f64, i as f64, 0.0, vec![])).collect();
        data[6].exposure = f64::NAN;
        assert!(matches!(
            fit_linear(&data, &RegressionSpec::exposure(vec![])),
            Err(Error::NonFinite { row: 6 })
        ));
    }

    #[test]
    fn constant_instrument_is_rank_deficient() {
        let data: Vec<_> = (0..10).map(|i| rec(1.0, i as f64, 0.0, vec![])).collect();
        assert!(matches!(
            fit_linear(&data, &RegressionSpec::exposure(vec![])),
            Err(Error::RankDeficient { column: 1 })
        ));
    }

    #[test]
    fn logistic_null_effect() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let data: Vec<_> = (0..10_000).map(|i| {
            let g = (i % 3) as f64;
            let y = if rng.random::<f64>() < 0.5 { 1.0 } else { 0.0 };
            rec(g, 0.0, y, vec![])
        }).collect();
        let fit = fit_logistic(&data, &RegressionSpec::outcome(vec![], Family::Logistic)).unwrap();
        assert!(fit.estimate.beta.abs() < 4.0 * fit.estimate.se);
    }

    #[test]
    fn logistic_recovers_generative_coefficient() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let data: Vec<_> = (0..100_000).map(|_| {
            let g = (rng.random::<f64>() < 0.3) as u8 as f64 + (rng.random::<f64>() < 0.3) as u8 as f64;
            let p = sigmoid(-2.0 + 0.3 * g);
            let y = if rng.random::<f64>() < p { 1.0 } else { 0.0 };
            rec(g, 0.0, y, vec![])
        }).collect();
        let fit = fit_logistic(&data, &RegressionSpec::outcome(vec![], Family::Logistic)).unwrap();
        assert!((fit.estimate.beta - 0.3).abs() < 4.0 * fit.estimate.se, "{:?}", fit.estimate);
        for pair in fit.deviance_trace.windows(2) {
            assert!(pair[1] <= pair[0]);
        }
        assert!(fit.iterations < LOGISTIC_MAX_ITER);
    }

    #[test]
    fn logistic_separation() {
        let data: Vec<_> = (0..40).map(|i| {
            let g = if i % 2 == 0 { 0.0 } else { 2.0 };
            rec(g, 0.0, g / 2.0, vec![])
        }).collect();
        assert!(matches!(
            fit_logistic(&data, &RegressionSpec::outcome(vec![], Family::Logistic)),
            Err(Error::Separation(_))
        ));
    }

    #[test]
    fn logistic_single_class() {
        let data: Vec<_> = (0..40).map(|i| rec((i % 3) as f64, 0.0, 0.0, vec![])).collect();
        assert!(matches!(
            fit_logistic(&data, &RegressionSpec::outcome(vec![], Family::Logistic)),
            Err(Error::SingleClass)
        ));
    }

    #[test]
    fn predictor_cannot_be_adjusted_for() {
        let spec = RegressionSpec { response: Role::Exposure, predictor: Role::Covariate(0), covariates: vec![0], family: Family::Linear };
        let data: Vec<_> = (0..10).map(|i| rec(0.0, i as f64, 0.0, vec![i as f64])).collect();
        assert!(matches!(fit_linear(&data, &spec), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn family_mismatch() {
        let data: Vec<_> = (0..10).map(|i| rec(i as f64, i as f64, 0.0, vec![])).collect();
        assert!(fit_logistic(&data, &RegressionSpec::exposure(vec![])).is_err());
    }
}
