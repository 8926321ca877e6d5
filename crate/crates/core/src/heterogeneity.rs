//! Cochran's Q across context-specific ratio estimates.
//!
//! Two weightings are provided. First-order weights use only the outcome
//! association variance, `(se(by) / bx)^-2`. Modified second-order weights add
//! the exposure association variance evaluated at the pooled effect,
//! `v_k(b) = se(by_k)^2 / bx_k^2 + b^2 se(bx_k)^2 / bx_k^2`, and the pooled
//! effect is the `b` minimising `Q(b) = sum (ratio_k - b)^2 / v_k(b)`.

use crate::error::{Error, Result};
use crate::ivcore::{ivw_pool, ContextResult, ZERO_ASSOCIATION_FLOOR};
use crate::numerics::{chi_square_sf, PValue};
use crate::warning::Warning;
use serde::{Deserialize, Serialize};

pub const BETA_TOL: f64 = 1e-10;
pub const MAX_ITER: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    FirstOrder,
    ModifiedSecondOrder,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeterogeneityResult {
    pub scheme: Scheme,
    pub q: f64,
    pub df: u32,
    pub p: PValue,
    /// Pooled effect at which Q is evaluated.
    pub pooled_beta: f64,
    pub iterations: usize,
    /// Contexts left out because their exposure association is ~0.
    #[serde(default)]
    pub excluded: Vec<Warning>,
}

fn usable(results: &[ContextResult]) -> Result<(Vec<&ContextResult>, Vec<Warning>)> {
    let (keep, drop): (Vec<_>, Vec<_>) = results.iter().partition(|r| r.bx.beta.abs() >= ZERO_ASSOCIATION_FLOOR);
    if keep.len() < 2 {
        return Err(Error::TooFewContexts { needed: 2, got: keep.len() });
    }
    let excluded = drop.into_iter().map(|r| Warning::ExcludedFromQ { context: r.context.clone() }).collect();
    Ok((keep, excluded))
}

/// Q with first-order weights around the IVW estimate; `K - 1` degrees of freedom.
pub fn q_first_order(results: &[ContextResult]) -> Result<HeterogeneityResult> {
    let (keep, excluded) = usable(results)?;
    let owned: Vec<ContextResult> = keep.iter().map(|r| (*r).clone()).collect();
    let pooled = ivw_pool(&owned)?.beta;
    let q: f64 = keep
        .iter()
        .map(|r| {
            let d = r.by.beta / r.bx.beta - pooled;
            d * d * (r.bx.beta / r.by.se).powi(2)
        })
        .sum();
    let df = (keep.len() - 1) as u32;
    Ok(HeterogeneityResult {
        scheme: Scheme::FirstOrder,
        q,
        df,
        p: chi_square_sf(q, df)?,
        pooled_beta: pooled,
        iterations: 1,
        excluded,
    })
}

/// Per-context terms of the modified second-order Q: `(ratio, a, s)` with
/// `v(b) = a + b^2 s`.
fn terms(keep: &[&ContextResult]) -> Vec<(f64, f64, f64)> {
    keep.iter()
        .map(|r| {
            let bx2 = r.bx.beta * r.bx.beta;
            (r.by.beta / r.bx.beta, r.by.se * r.by.se / bx2, r.bx.se * r.bx.se / bx2)
        })
        .collect()
}

fn q_at(terms: &[(f64, f64, f64)], b: f64) -> f64 {
    terms.iter().map(|&(ratio, a, s)| (ratio - b).powi(2) / (a + b * b * s)).sum()
}

/// First and second derivative of `Q(b)`.
fn derivatives(terms: &[(f64, f64, f64)], b: f64) -> (f64, f64, f64) {
    let (mut g, mut h, mut inv_v) = (0.0, 0.0, 0.0);
    for &(ratio, a, s) in terms {
        let r = ratio - b;
        let v = a + b * b * s;
        let dv = 2.0 * b * s;
        let d2v = 2.0 * s;
        g += -2.0 * r / v - r * r * dv / (v * v);
        h += 2.0 / v + 4.0 * r * dv / (v * v) - r * r * d2v / (v * v) + 2.0 * r * r * dv * dv / (v * v * v);
        inv_v += 1.0 / v;
    }
    (g, h, inv_v)
}

/// Modified second-order Q evaluated at an arbitrary pooled effect.
pub fn modified_q_at(results: &[ContextResult], beta: f64) -> Result<f64> {
    let (keep, _) = usable(results)?;
    Ok(q_at(&terms(&keep), beta))
}

/// Q with modified second-order weights.
///
/// Starts from the first-order IVW estimate and takes safeguarded Newton
/// steps on `Q(b)` (falling back to the IVW curvature `2 sum 1/v` where
/// `Q'' <= 0`), until consecutive iterates differ by less than `1e-10`.
pub fn q_modified_second_order(results: &[ContextResult]) -> Result<HeterogeneityResult> {
    let (keep, excluded) = usable(results)?;
    let owned: Vec<ContextResult> = keep.iter().map(|r| (*r).clone()).collect();
    let terms = terms(&keep);
    let mut beta = ivw_pool(&owned)?.beta;
    let mut q = q_at(&terms, beta);
    let mut trace = vec![beta];
    let mut converged = false;

    for _ in 0..MAX_ITER {
        let (g, h, inv_v) = derivatives(&terms, beta);
        if g == 0.0 {
            converged = true;
            break;
        }
        let mut step = if h > 0.0 { -g / h } else { -g / (2.0 * inv_v) };
        let mut next = beta + step;
        let mut q_next = q_at(&terms, next);
        let mut halvings = 0;
        while !(q_next <= q) && halvings < 60 {
            step *= 0.5;
            next = beta + step;
            q_next = q_at(&terms, next);
            halvings += 1;
        }
        if !(q_next <= q) {
            // Q is flat at working precision.
            converged = true;
            break;
        }
        let moved = (next - beta).abs();
        beta = next;
        q = q_next;
        trace.push(beta);
        if moved < BETA_TOL {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NonConvergence { trace });
    }

    let df = (keep.len() - 1) as u32;
    Ok(HeterogeneityResult {
        scheme: Scheme::ModifiedSecondOrder,
        q,
        df,
        p: chi_square_sf(q, df)?,
        pooled_beta: beta,
        iterations: trace.len() - 1,
        excluded,
    })
}

/// Modified second-order variances `v_k(b)` of each ratio estimate.
pub fn modified_variances(results: &[ContextResult], beta: f64) -> Vec<f64> {
    results
        .iter()
        .map(|r| (r.by.se.powi(2) + beta * beta * r.bx.se.powi(2)) / r.bx.beta.powi(2))
        .collect()
}
