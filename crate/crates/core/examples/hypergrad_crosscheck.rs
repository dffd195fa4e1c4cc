//! Reverse, forward and implicit hypergradients against finite differences on
//! a strongly convex least-squares problem.

use bda::hypergrad::{hypergrad_forward, hypergrad_implicit, hypergrad_reverse};
use bda::inner::run_inner;
use bda::problems::LlsQuadratic;
use bda::verify::fd_gradient;
use bda::{AggregationSchedule, AlphaRule, BetaRule, BilevelProblem, InnerMode, RealVector};

fn main() -> bda::Result<()> {
    let p = LlsQuadratic::random(3, 4, 21)?;
    let sm = p.smoothness();
    let sched = AggregationSchedule {
        mu: 0.3,
        s_u: 0.5 / sm.upper_lipschitz.unwrap(),
        s_l: 1.0 / sm.lower_lipschitz.unwrap(),
        alpha: AlphaRule::Harmonic,
        beta: BetaRule::Constant { b: 1.0 },
        diagnostic: false,
    };
    let x = RealVector::from_vec(vec![0.4, -0.3, 0.8]);
    let k = 30;

    let rev = hypergrad_reverse(&p, &x, None, k, &sched, InnerMode::Bda, None)?.gradient;
    let fwd = hypergrad_forward(&p, &x, None, k, &sched, InnerMode::Bda, true)?.gradient;
    let unrolled = |z: &RealVector| {
        let tr = run_inner(&p, z, None, k, &sched, InnerMode::Bda).expect("inner loop runs");
        p.upper(z, tr.final_y())
    };
    let fd = fd_gradient(unrolled, &x, 1e-5)?;
    println!("reverse  {:.10?}", rev.as_slice());
    println!("forward  {:.10?}", fwd.as_slice());
    println!("central  {:.10?}", fd.as_slice());
    println!("|rev-fwd|={:.2e} |rev-fd|={:.2e}", (&rev - &fwd).amax(), (&rev - &fd).amax());

    let long = run_inner(&p, &x, None, 500, &sched, InnerMode::Plain)?;
    let plain = hypergrad_reverse(&p, &x, None, 500, &sched, InnerMode::Plain, None)?.gradient;
    let ihg = hypergrad_implicit(&p, &x, long.final_y(), 1e-12, 100)?;
    println!(
        "plain K=500 vs implicit: {:.2e} (cg iterations {:?})",
        (&plain - &ihg.gradient).amax(),
        ihg.diagnostics.cg_iterations
    );
    Ok(())
}
