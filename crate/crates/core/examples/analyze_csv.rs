//! End-to-end analysis of an individual-level CSV with a binary outcome and
//! adjustment covariates. The input file is generated on the fly.
//!
//! ```bash
//! cargo run --release -p ctxmr --example analyze_csv
//! ```

use ctxmr::cli::{cmd_analyze, render_text, AnalysisConfig};
use ctxmr::datamodel::ColumnMap;
use ctxmr::regress::Family;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use std::path::Path;

const SITES: [(&str, usize, f64); 6] =
    [("harbour", 6000, 48.0), ("valley", 4500, 50.5), ("ridge", 8000, 52.0), ("plain", 5000, 54.5), ("coast", 7000, 56.0), ("forest", 3000, 58.5)];

fn write_cohort(path: &Path) -> ctxmr::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["site", "score", "level", "event", "age", "sex"])?;
    for &(site, n, mean) in &SITES {
        for _ in 0..n {
            let score: f64 = (0..12).map(|_| f64::from(u8::from(rng.random::<f64>() < 0.3) + u8::from(rng.random::<f64>() < 0.3))).sum();
            let u: f64 = rng.sample(StandardNormal);
            let level = mean + 1.8 * (score - 7.2) + 8.0 * u + 14.0 * rng.sample::<f64, _>(StandardNormal);
            let age = 57.0 + 8.0 * rng.sample::<f64, _>(StandardNormal);
            let sex = u8::from(rng.random::<f64>() < 0.5);
            // protective effect of the exposure, largest at low levels
            let logit = -2.6 - 0.02 * (level - 60.0).min(0.0) + 0.04 * (age - 57.0) + 0.5 * f64::from(sex) + 0.3 * u;
            let event = u8::from(rng.random::<f64>() < 1.0 / (1.0 + (-logit).exp()));
            w.write_record([site.to_string(), score.to_string(), format!("{level:.2}"), event.to_string(), format!("{age:.1}"), sex.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

fn main() -> ctxmr::Result<()> {
    let path = std::env::temp_dir().join("ctxmr_example_cohort.csv");
    write_cohort(&path)?;

    let config = AnalysisConfig {
        column_map: ColumnMap {
            instrument: "score".into(),
            exposure: "level".into(),
            outcome: "event".into(),
            context: "site".into(),
            covariates: vec!["age".into(), "sex".into()],
        },
        family: Family::Logistic,
        scale: 10.0,
        ..AnalysisConfig::default()
    };
    let report = cmd_analyze(&path, &config)?;
    print!("{}", render_text(&report));
    std::fs::remove_file(&path)?;
    Ok(())
}
