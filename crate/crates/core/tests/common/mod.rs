//! Independent oracles and fixtures shared by the integration suites. Nothing
//! here calls into the estimator code paths it is used to check.

#![allow(dead_code)]

use ctxmr::datamodel::{ColumnMap, Dataset, IndividualRecord};
use ctxmr::ivcore::{ContextResult, SummaryRow};
use ctxmr::regress::Family;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

// ---------------------------------------------------------------- quadrature

#[allow(clippy::too_many_arguments)]
fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
        left + right + (left + right - whole) / 15.0
    } else {
        simpson(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) + simpson(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
    }
}

/// Adaptive Simpson quadrature.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson(&f, a, b, fa, fm, fb, whole, tol, 50)
}

/// Gamma(df / 2) from the half-integer recursion.
fn gamma_half(df: u32) -> f64 {
    let mut g = if df.is_multiple_of(2) { 1.0 } else { std::f64::consts::PI.sqrt() };
    let mut a = if df.is_multiple_of(2) { 1.0 } else { 0.5 };
    while a < df as f64 / 2.0 - 1e-9 {
        g *= a;
        a += 1.0;
    }
    g
}

/// `P(chi2_df > q)` by integrating the density over `[q, inf)` after the
/// substitution `t = s^2`, which removes the singularity at 0 for df = 1.
pub fn chi_square_sf_oracle(q: f64, df: u32) -> f64 {
    let k = df as f64 / 2.0;
    let norm = 2f64.powf(k) * gamma_half(df);
    let density = |s: f64| 2.0 * s.powf(2.0 * k - 1.0) * (-s * s / 2.0).exp() / norm;
    let upper = (q + 60.0 + 10.0 * df as f64 + 10.0 * (df as f64).sqrt() * 10.0).sqrt();
    // split the range so each panel is well resolved
    let lo = q.sqrt();
    let pieces = 64;
    let h = (upper - lo) / pieces as f64;
    (0..pieces).map(|i| integrate(density, lo + i as f64 * h, lo + (i + 1) as f64 * h, 1e-15)).sum()
}

// --------------------------------------------------------------- golden search

/// Minimiser of a unimodal function on `[a, b]`.
pub fn golden_min<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

// ------------------------------------------------------------- Q grid oracle

/// Raw per-context inputs `(bx, bx_se, by, by_se)`.
pub type Assoc = (f64, f64, f64, f64);

pub fn modified_q(assoc: &[Assoc], b: f64) -> f64 {
    assoc
        .iter()
        .map(|&(bx, bxs, by, bys)| {
            let v = (bys * bys + b * b * bxs * bxs) / (bx * bx);
            (by / bx - b).powi(2) / v
        })
        .sum()
}

/// Minimum of the modified second-order Q by brute-force grid search over
/// `center +- width` followed by golden-section refinement.
pub fn modified_q_grid_min(assoc: &[Assoc], center: f64, width: f64) -> (f64, f64) {
    let steps = 40_000;
    let h = 2.0 * width / steps as f64;
    let (mut best_b, mut best_q) = (center, f64::INFINITY);
    for i in 0..=steps {
        let b = center - width + i as f64 * h;
        let q = modified_q(assoc, b);
        if q < best_q {
            best_q = q;
            best_b = b;
        }
    }
    let b = golden_min(|b| modified_q(assoc, b), best_b - h, best_b + h, 1e-13);
    (b, modified_q(assoc, b).min(best_q))
}

pub fn random_q_instance(rng: &mut ChaCha8Rng, k: usize) -> Vec<Assoc> {
    let beta = rng.random_range(-1.0..1.0);
    (0..k)
        .map(|_| {
            let bx = rng.random_range(0.2..0.8) * if rng.random::<f64>() < 0.1 { -1.0 } else { 1.0 };
            let bxs = rng.random_range(0.005..0.08);
            let bys = rng.random_range(0.01..0.1);
            let by = beta * bx + bys * rng.sample::<f64, _>(StandardNormal) * 1.5;
            (bx, bxs, by, bys)
        })
        .collect()
}

pub fn assoc_results(assoc: &[Assoc]) -> Vec<ContextResult> {
    assoc
        .iter()
        .enumerate()
        .map(|(i, &(bx, bx_se, by, by_se))| {
            SummaryRow { context: format!("c{i}"), bx, bx_se, by, by_se, xmean: i as f64, n: 1000 }.into_result(0.0).unwrap()
        })
        .collect()
}

// ----------------------------------------------------------- REML grid oracle

/// Restricted log-likelihood of the two-coefficient meta-regression, via
/// closed-form 2x2 normal equations. Returns `(loglik, intercept, slope)`.
pub fn reml_loglik(est: &[f64], var: &[f64], means: &[f64], tau2: f64) -> (f64, f64, f64) {
    let (mut s0, mut s1, mut s2, mut t0, mut t1, mut logdet_v) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    for ((&y, &v), &x) in est.iter().zip(var).zip(means) {
        let w = 1.0 / (v + tau2);
        s0 += w;
        s1 += w * x;
        s2 += w * x * x;
        t0 += w * y;
        t1 += w * x * y;
        logdet_v += (v + tau2).ln();
    }
    let det = s0 * s2 - s1 * s1;
    let slope = (s0 * t1 - s1 * t0) / det;
    let intercept = (s2 * t0 - s1 * t1) / det;
    let rss: f64 = est
        .iter()
        .zip(var)
        .zip(means)
        .map(|((&y, &v), &x)| (y - intercept - slope * x).powi(2) / (v + tau2))
        .sum();
    (-0.5 * (logdet_v + det.ln() + rss), intercept, slope)
}

/// REML `tau2` and slope by profile grid search over `[0, upper]` at `1e-4`
/// resolution, refined by golden section.
pub fn reml_grid(est: &[f64], var: &[f64], means: &[f64], upper: f64) -> (f64, f64) {
    let h = 1e-4;
    let steps = (upper / h).ceil() as usize;
    let (mut best_t, mut best_l) = (0.0, f64::NEG_INFINITY);
    for i in 0..=steps {
        let t = i as f64 * h;
        let l = reml_loglik(est, var, means, t).0;
        if l > best_l {
            best_l = l;
            best_t = t;
        }
    }
    let lo = (best_t - h).max(0.0);
    let t = golden_min(|t| -reml_loglik(est, var, means, t).0, lo, best_t + h, 1e-12);
    let t = if reml_loglik(est, var, means, 0.0).0 >= reml_loglik(est, var, means, t).0 && best_t == 0.0 { 0.0 } else { t };
    (t, reml_loglik(est, var, means, t).2)
}

pub struct MetaInstance {
    pub est: Vec<f64>,
    pub var: Vec<f64>,
    pub means: Vec<f64>,
}

pub fn random_meta_instance(rng: &mut ChaCha8Rng, k: usize) -> MetaInstance {
    let tau2 = if rng.random::<f64>() < 0.2 { 0.0 } else { rng.random_range(0.0..0.3) };
    let slope = rng.random_range(-0.5..0.5);
    let means: Vec<f64> = (0..k).map(|_| rng.random_range(0.0..3.0)).collect();
    let var: Vec<f64> = (0..k).map(|_| rng.random_range(0.01..0.2)).collect();
    let est = means
        .iter()
        .zip(&var)
        .map(|(&x, &v)| 0.2 + slope * x + (tau2 + v).sqrt() * rng.sample::<f64, _>(StandardNormal))
        .collect();
    MetaInstance { est, var, means }
}

pub fn sample_var(v: &[f64]) -> f64 {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64
}

// ------------------------------------------------------------------ KS test

/// Two-sided one-sample Kolmogorov-Smirnov test against U(0, 1); returns
/// `(D, p)` using the asymptotic distribution with Stephens' correction.
pub fn ks_uniform(values: &[f64]) -> (f64, f64) {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    let d = v
        .iter()
        .enumerate()
        .map(|(i, &x)| ((i + 1) as f64 / n - x).max(x - i as f64 / n))
        .fold(0.0, f64::max);
    let lambda = (n.sqrt() + 0.12 + 0.11 / n.sqrt()) * d;
    let mut p = 0.0;
    for j in 1..=100 {
        let term = 2.0 * (-1f64).powi(j - 1) * (-2.0 * (j as f64).powi(2) * lambda * lambda).exp();
        p += term;
        if term.abs() < 1e-12 {
            break;
        }
    }
    (d, p.clamp(0.0, 1.0))
}

// --------------------------------------------------- applied-example fixture

/// Recruitment-centre sizes and mean 25(OH)D (nmol/L), lowest mean first.
pub const CENTRES: [(&str, usize, f64); 20] = [
    ("Glasgow", 13501, 50.2),
    ("Edinburgh", 12258, 50.9),
    ("Barts", 7563, 52.5),
    ("Newcastle", 23819, 54.0),
    ("Manchester", 9502, 54.0),
    ("Birmingham", 15779, 54.9),
    ("Leeds", 29509, 55.0),
    ("Croydon", 16688, 55.2),
    ("Stoke", 12843, 55.4),
    ("Bury", 19993, 55.5),
    ("Oxford", 10499, 55.8),
    ("Nottingham", 22831, 56.1),
    ("Middlesborough", 13932, 56.1),
    ("Liverpool", 21479, 56.3),
    ("Hounslow", 17276, 56.4),
    ("Sheffield", 19748, 56.8),
    ("Reading", 21526, 56.9),
    ("Bristol", 29527, 56.9),
    ("Swansea", 1562, 57.1),
    ("Cardiff", 12705, 57.4),
];

const SCORE_WEIGHTS: [f64; 4] = [0.6, 0.9, 1.2, 1.5];

/// Centre-stratified cohort with a 21-variant weighted score, age and sex
/// covariates, and a ~7% binary outcome that does not depend on the exposure.
/// `fraction` subsamples every centre (1.0 = full size).
pub fn applied_dataset(seed: u64, fraction: f64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mean_score: f64 = (0..21).map(|v| SCORE_WEIGHTS[v % 4] * 0.6).sum();
    let mut records = Vec::new();
    for (c, &(_, n, mean)) in CENTRES.iter().enumerate() {
        let n = ((n as f64 * fraction).round() as usize).max(2);
        for _ in 0..n {
            let score: f64 = (0..21)
                .map(|v| {
                    let alleles = u8::from(rng.random::<f64>() < 0.3) + u8::from(rng.random::<f64>() < 0.3);
                    SCORE_WEIGHTS[v % 4] * f64::from(alleles)
                })
                .sum();
            let u: f64 = rng.sample(StandardNormal);
            let e: f64 = rng.sample(StandardNormal);
            let age = 57.0 + 8.0 * rng.sample::<f64, _>(StandardNormal);
            let sex = f64::from(u8::from(rng.random::<f64>() < 0.5));
            let x = mean + 1.5 * (score - mean_score) + 8.0 * u + 15.7 * e;
            let logit = -2.95 + 0.05 * (age - 57.0) + 0.6 * sex + 0.3 * u;
            let y = f64::from(u8::from(rng.random::<f64>() < 1.0 / (1.0 + (-logit).exp())));
            records.push(IndividualRecord { instrument: score, exposure: x, outcome: y, context: c, covariates: vec![age, sex] });
        }
    }
    Dataset {
        records,
        column_map: ColumnMap {
            instrument: "score".into(),
            exposure: "vitd".into(),
            outcome: "cad".into(),
            context: "centre".into(),
            covariates: vec!["age".into(), "sex".into()],
        },
        contexts: CENTRES.iter().map(|c| c.0.to_string()).collect(),
        family: Family::Logistic,
        dropped: 0,
    }
}

pub fn write_dataset_csv(ds: &Dataset, path: &std::path::Path) {
    let mut w = csv::Writer::from_path(path).unwrap();
    let m = &ds.column_map;
    let mut header = vec![m.instrument.clone(), m.exposure.clone(), m.outcome.clone(), m.context.clone()];
    header.extend(m.covariates.iter().cloned());
    w.write_record(&header).unwrap();
    for r in &ds.records {
        let mut row = vec![r.instrument.to_string(), r.exposure.to_string(), r.outcome.to_string(), ds.contexts[r.context].clone()];
        row.extend(r.covariates.iter().map(f64::to_string));
        w.write_record(&row).unwrap();
    }
    w.flush().unwrap();
}
