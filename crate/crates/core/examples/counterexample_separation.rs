//! BDA against RHG and T-RHG on the counter-example with a non-singleton
//! lower level. Only the aggregated inner step approaches `x = e`. With
//! small `n` the quartic coupling is weak and BDA at `K = 20` settles at a
//! stationary point of `φ_K` short of `e`.

use bda::problems::Counterexample;
use bda::{solve, AggregationSchedule, Method, SolverConfig};

fn main() -> bda::Result<()> {
    let n = 50;
    let p = Counterexample::new(n)?;
    for method in [Method::Bda, Method::Rhg, Method::Trhg] {
        let mut cfg = SolverConfig::new(method, 20, 1000, AggregationSchedule::reference());
        // the unrolled baselines diverge at λ = 0.01; they use the estimated step
        if method == Method::Bda {
            cfg.lambda = Some(0.01);
        }
        let rec = solve(&p, &cfg)?;
        let last = rec.rows.last().expect("at least one outer step");
        println!(
            "{method:<5} lambda={:.4e} iterations={:<5} status={:?} |x-x*|={:.4e} |x-x*|/sqrt(n)={:.4e} phi_K={:.4e}",
            rec.lambda,
            rec.iterations(),
            rec.status,
            last.err_x.unwrap(),
            last.err_x.unwrap() / (n as f64).sqrt(),
            last.phi_k
        );
    }
    Ok(())
}
