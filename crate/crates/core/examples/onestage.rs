//! The one-stage estimator replaces the second-order term by a central
//! difference. Its distance to the exact one-step hypergradient shrinks as
//! `O(ε²)`.

use bda::hypergrad::{hypergrad_onestage, hypergrad_reverse};
use bda::inner::default_y0;
use bda::problems::Counterexample;
use bda::{AggregationSchedule, BilevelProblem, InnerMode, RealVector};

fn main() -> bda::Result<()> {
    let p = Counterexample::new(3)?;
    let sched = AggregationSchedule::reference();
    let x = RealVector::from_element(3, 2.0);
    let y0 = default_y0(p.region_y());
    let exact = hypergrad_reverse(&p, &x, Some(&y0), 1, &sched, InnerMode::Bda, None)?.gradient;
    let mut prev: Option<(f64, f64)> = None;
    for eps in [1e-2, 1e-3, 1e-4] {
        let g = hypergrad_onestage(&p, &x, &y0, &sched, eps)?.gradient;
        let err = (&g - &exact).norm() / exact.norm();
        let slope = prev.map(|(e0, r0)| (err / r0).ln() / (eps / e0).ln());
        println!("eps={eps:.0e} relative error={err:.3e} slope={slope:.2?}");
        prev = Some((eps, err));
    }
    Ok(())
}
