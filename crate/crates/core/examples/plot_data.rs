//! Scatter-plot data: per-context estimates with 95% intervals against mean
//! exposure, unscaled and scaled.

use ctxmr::cli::{cmd_plotdata, meta_from_reader, plot_csv, write_plotdata, AnalysisConfig};

fn main() -> ctxmr::Result<()> {
    let mut summary = String::from("context,bx,bx_se,by,by_se,xmean,n\n");
    for k in 0..8 {
        let xmean = 50.0 + 1.1 * k as f64;
        let by = 0.004 - 0.0007 * k as f64;
        summary.push_str(&format!("c{k},0.21,0.01,{by},0.003,{xmean},12000\n"));
    }
    let report = meta_from_reader(summary.as_bytes(), &AnalysisConfig { scale: 25.0, ..AnalysisConfig::default() })?;
    let plot = cmd_plotdata(&report);

    println!("instrument-outcome associations:\n{}", plot_csv(&plot.unscaled));
    println!("ratio estimates per 25 units:\n{}", plot_csv(&plot.scaled));

    let dir = std::env::temp_dir().join("ctxmr_plot_example");
    write_plotdata(&dir, &plot)?;
    println!("written to {}", dir.display());
    Ok(())
}
