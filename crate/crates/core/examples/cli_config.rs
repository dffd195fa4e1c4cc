//! Loads a JSON experiment config and runs it through the same entry point
//! as `bda run`, printing where the traces went.

use bda::harness::{run, ExperimentConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = std::env::args()
        .nth(1)
        .map(std::path::PathBuf::from)
        .unwrap_or_else(|| std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("examples/configs/ce_bda.json"));
    let cfg = ExperimentConfig::load(&path)?;
    let dir = tempfile::tempdir()?;
    let output = run(&cfg, dir.path())?;
    for r in &output.runs {
        println!(
            "seed={} trace={} iterations={} status={:?} final |x-x*|={:.3e}",
            r.seed,
            r.trace,
            r.summary.iterations,
            r.summary.status,
            r.summary.final_err_x.unwrap_or(f64::NAN)
        );
    }
    Ok(())
}
