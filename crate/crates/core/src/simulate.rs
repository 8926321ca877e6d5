//! Simulation data-generating model.
//!
//! For individual `i` in context `k`:
//!
//! ```text
//! g ~ Binomial(2, maf)
//! u, e_x, e_y ~ N(0, 1) independently
//! x = alpha_k + instrument_effect * g + u + e_x
//! y = f(x) - u + e_y
//! ```
//!
//! Every `(master_seed, replication, context)` triple owns an independent
//! ChaCha8 stream, so a dataset is reproducible regardless of how
//! replications are scheduled across threads. Normal deviates come from the
//! ziggurat sampler in `rand_distr`; the binomial is two Bernoulli draws.

use crate::datamodel::{ColumnMap, Dataset, IndividualRecord};
use crate::error::{Error, Result};
use crate::regress::Family;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::fmt;

/// Causal effect of the exposure on the outcome.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum EffectFunction {
    /// `slope * x`
    Linear {
        #[serde(default = "default_linear_slope")]
        slope: f64,
    },
    /// `coefficient * x^2`
    Quadratic {
        #[serde(default = "default_quadratic")]
        coefficient: f64,
    },
    /// `slope * (x - knot)` above the knot, 0 below.
    Threshold {
        #[serde(default = "default_threshold_slope")]
        slope: f64,
        #[serde(default = "default_knot")]
        knot: f64,
    },
}

fn default_linear_slope() -> f64 {
    0.8
}
fn default_quadratic() -> f64 {
    0.04
}
fn default_threshold_slope() -> f64 {
    0.25
}
fn default_knot() -> f64 {
    10.0
}

impl EffectFunction {
    pub const LINEAR: EffectFunction = EffectFunction::Linear { slope: 0.8 };
    pub const QUADRATIC: EffectFunction = EffectFunction::Quadratic { coefficient: 0.04 };
    pub const THRESHOLD: EffectFunction = EffectFunction::Threshold { slope: 0.25, knot: 10.0 };

    pub fn name(&self) -> &'static str {
        match self {
            EffectFunction::Linear { .. } => "linear",
            EffectFunction::Quadratic { .. } => "quadratic",
            EffectFunction::Threshold { .. } => "threshold",
        }
    }
}

pub fn effect_value(f: &EffectFunction, x: f64) -> f64 {
    match *f {
        EffectFunction::Linear { slope } => slope * x,
        EffectFunction::Quadratic { coefficient } => coefficient * x * x,
        EffectFunction::Threshold { slope, knot } => {
            if x > knot {
                slope * (x - knot)
            } else {
                0.0
            }
        }
    }
}

/// Context-specific exposure shifts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AlphaGrid {
    /// 8.0, 8.2, 8.4, ...
    Larger,
    /// 9.0, 9.1, 9.2, ...
    Smaller,
    Custom(Vec<f64>),
}

impl AlphaGrid {
    pub fn values(&self, contexts: usize) -> Vec<f64> {
        match self {
            AlphaGrid::Larger => (0..contexts).map(|k| 8.0 + 0.2 * k as f64).collect(),
            AlphaGrid::Smaller => (0..contexts).map(|k| 9.0 + 0.1 * k as f64).collect(),
            AlphaGrid::Custom(v) => v.clone(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            AlphaGrid::Larger => "larger",
            AlphaGrid::Smaller => "smaller",
            AlphaGrid::Custom(_) => "custom",
        }
    }
}

fn default_contexts() -> usize {
    10
}
fn default_per_context_n() -> usize {
    10_000
}
fn default_instrument_effect() -> f64 {
    0.5
}
fn default_maf() -> f64 {
    0.3
}
fn default_confounder_x() -> f64 {
    1.0
}
fn default_confounder_y() -> f64 {
    -1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimScenario {
    pub effect: EffectFunction,
    pub alpha_grid: AlphaGrid,
    #[serde(default = "default_contexts")]
    pub contexts: usize,
    #[serde(default = "default_per_context_n")]
    pub per_context_n: usize,
    #[serde(default = "default_instrument_effect")]
    pub instrument_effect: f64,
    #[serde(default = "default_maf")]
    pub maf: f64,
    #[serde(default = "default_confounder_x")]
    pub confounder_effect_on_x: f64,
    #[serde(default = "default_confounder_y")]
    pub confounder_effect_on_y: f64,
}

impl SimScenario {
    pub fn new(effect: EffectFunction, alpha_grid: AlphaGrid) -> Self {
        SimScenario {
            effect,
            alpha_grid,
            contexts: default_contexts(),
            per_context_n: default_per_context_n(),
            instrument_effect: default_instrument_effect(),
            maf: default_maf(),
            confounder_effect_on_x: default_confounder_x(),
            confounder_effect_on_y: default_confounder_y(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::InvalidScenario(m));
        if self.contexts < 2 {
            return fail(format!("need at least 2 contexts, got {}", self.contexts));
        }
        if self.per_context_n < 10 {
            return fail(format!("per_context_n must be >= 10, got {}", self.per_context_n));
        }
        if !(self.maf > 0.0 && self.maf < 1.0) {
            return fail(format!("maf must lie in (0, 1), got {}", self.maf));
        }
        let alphas = self.alpha_grid.values(self.contexts);
        if alphas.len() != self.contexts {
            return fail(format!("alpha grid has {} values for {} contexts", alphas.len(), self.contexts));
        }
        if alphas.iter().chain([self.instrument_effect, self.confounder_effect_on_x, self.confounder_effect_on_y].iter()).any(|v| !v.is_finite()) {
            return fail("non-finite scenario parameter".into());
        }
        Ok(())
    }

    /// `effect/grid`, e.g. `quadratic/larger`.
    pub fn id(&self) -> String {
        format!("{}/{}", self.effect.name(), self.alpha_grid.name())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let s: SimScenario = toml::from_str(text).map_err(|e| Error::InvalidScenario(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }
}

impl fmt::Display for SimScenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.id())
    }
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent generator for one `(master_seed, replication, context)` triple.
pub fn context_stream(master_seed: u64, replication: u64, context: u64) -> ChaCha8Rng {
    let mut state = master_seed;
    let mut mix = splitmix64(&mut state);
    state = mix ^ replication.wrapping_mul(0xD1B5_4A32_D192_ED03);
    mix = splitmix64(&mut state);
    state = mix ^ context.wrapping_mul(0xAEF1_7502_108E_F2D9);
    let mut seed = [0u8; 32];
    for chunk in seed.chunks_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    ChaCha8Rng::from_seed(seed)
}

/// Draws one dataset; the instrument, exposure and outcome columns are
/// `g`, `x`, `y` and contexts are labelled `1..=K`.
pub fn generate_dataset(s: &SimScenario, master_seed: u64, replication: u64) -> Result<Dataset> {
    s.validate()?;
    let alphas = s.alpha_grid.values(s.contexts);
    let mut records = Vec::with_capacity(s.contexts * s.per_context_n);
    for (k, &alpha) in alphas.iter().enumerate() {
        let mut rng = context_stream(master_seed, replication, k as u64);
        for _ in 0..s.per_context_n {
            let g = f64::from(u8::from(rng.random::<f64>() < s.maf) + u8::from(rng.random::<f64>() < s.maf));
            let u: f64 = rng.sample(StandardNormal);
            let ex: f64 = rng.sample(StandardNormal);
            let ey: f64 = rng.sample(StandardNormal);
            let x = alpha + s.instrument_effect * g + s.confounder_effect_on_x * u + ex;
            let y = effect_value(&s.effect, x) + s.confounder_effect_on_y * u + ey;
            records.push(IndividualRecord { instrument: g, exposure: x, outcome: y, context: k, covariates: Vec::new() });
        }
    }
    Ok(Dataset {
        records,
        column_map: ColumnMap::default(),
        contexts: (1..=s.contexts).map(|k| k.to_string()).collect(),
        family: Family::Linear,
        dropped: 0,
    })
}

/// Pooled instrument strength.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InstrumentStrength {
    pub r2: f64,
    /// `(n - 2) R^2 / (1 - R^2)`, capped at [`F_CAP`].
    pub f_stat: f64,
    pub capped: bool,
}

pub const F_CAP: f64 = 1e15;

/// R² of the exposure on the instrument pooled over every record, and the
/// matching F statistic.
pub fn instrument_strength(ds: &Dataset) -> InstrumentStrength {
    let n = ds.records.len() as f64;
    let mg = ds.records.iter().map(|r| r.instrument).sum::<f64>() / n;
    let mx = ds.records.iter().map(|r| r.exposure).sum::<f64>() / n;
    let (mut sgg, mut sxx, mut sgx) = (0.0, 0.0, 0.0);
    for r in &ds.records {
        let (dg, dx) = (r.instrument - mg, r.exposure - mx);
        sgg += dg * dg;
        sxx += dx * dx;
        sgx += dg * dx;
    }
    let r2 = if sgg > 0.0 && sxx > 0.0 { (sgx * sgx / (sgg * sxx)).min(1.0) } else { 0.0 };
    let raw = (n - 2.0) * r2 / (1.0 - r2);
    let capped = !(raw < F_CAP);
    InstrumentStrength { r2, f_stat: if capped { F_CAP } else { raw }, capped }
}
