//! Runs the six-cell simulation study and prints rejection rates.
//!
//! ```bash
//! cargo run --release -p ctxmr --example simulation_study -- 1000 496
//! ```

use ctxmr::harness::{emit_table, run_experiment, ExperimentPlan};
use std::time::Instant;

fn main() -> ctxmr::Result<()> {
    let mut args = std::env::args().skip(1);
    let reps = args.next().and_then(|a| a.parse().ok()).unwrap_or(200);
    let seed = args.next().and_then(|a| a.parse().ok()).unwrap_or(496);

    let plan = ExperimentPlan::table1(reps, seed);
    let start = Instant::now();
    let cells = run_experiment(&plan)?;
    let table = emit_table(&cells)?;
    print!("{}", table.text);
    println!();
    for c in &cells {
        println!("{:<10} {:<8} mean R2 = {:.4}, mean F = {:.0}", c.scenario, c.grid, c.mean_r2, c.mean_f);
    }
    println!("\n{} replications per cell in {:.1?}", reps, start.elapsed());
    Ok(())
}
