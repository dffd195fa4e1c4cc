//! Data hyper-cleaning on a synthetic Gaussian mixture with half the training
//! labels flipped. Learned weights flag the corrupted samples.

use bda::harness::{suite_hyperclean, ExperimentConfig};
use bda::Method;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("examples/configs/hyperclean.json");
    let cfg = ExperimentConfig::load(&path)?;
    let dir = tempfile::tempdir()?;
    let summary = suite_hyperclean(&cfg, &[Method::Bda, Method::Rhg], dir.path())?;
    println!(
        "unweighted baseline: val={:.4} test={:.4}",
        summary.baseline.val_accuracy, summary.baseline.test_accuracy
    );
    for m in &summary.methods {
        println!(
            "{:<4} {:<3} val={:.4?} test={:.4?} f1={:.3?} mean weight corrupted={:.3?} clean={:.3?}",
            m.method.to_string(),
            m.outcome,
            m.val_accuracy,
            m.test_accuracy,
            m.f1,
            m.mean_weight_corrupted,
            m.mean_weight_clean
        );
    }
    Ok(())
}
