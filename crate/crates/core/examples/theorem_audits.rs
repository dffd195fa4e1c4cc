//! Runs every numerical audit (descent inequality, non-expansiveness, rate
//! bound, stationarity) with its negative control and prints the outcome.

use bda::harness::suite_verify;
use bda::harness::VerifySuite;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let checks = suite_verify(VerifySuite::All, dir.path())?;
    for c in &checks {
        println!(
            "{:<4} {:<34} expected={:?} got={:?} worst_margin={:.3e}",
            if c.ok { "ok" } else { "FAIL" },
            c.name,
            c.expected,
            c.report.status,
            c.report.worst_margin
        );
    }
    let failed = checks.iter().filter(|c| !c.ok).count();
    println!("{} checks, {failed} unexpected", checks.len());
    Ok(())
}
