//! An extension experiment described in TOML: a steeper threshold effect on
//! a custom exposure grid, with fewer participants per context.

use ctxmr::harness::{emit_table, run_experiment, ExperimentPlan};

const PLAN: &str = r#"
replications = 100
master_seed = 2024
tau2_method = "dl"

[[scenario]]
effect = { kind = "threshold", slope = 0.5, knot = 9.5 }
alpha_grid = { custom = [8.0, 8.5, 9.0, 9.5, 10.0, 10.5] }
contexts = 6
per_context_n = 5000

[[scenario]]
effect = { kind = "linear", slope = 0.3 }
alpha_grid = "smaller"
per_context_n = 5000
"#;

fn main() -> ctxmr::Result<()> {
    let plan = ExperimentPlan::from_toml(PLAN)?;
    let cells = run_experiment(&plan)?;
    print!("{}", emit_table(&cells)?.text);
    Ok(())
}
