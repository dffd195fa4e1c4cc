//! RHG on the two-dimensional example whose lower level has a line of
//! solutions. Plain descent from `y₀ = 0` lands at `x·a_K` and the outer loop
//! converges to `a_K/(1+a_K²)`, away from the true solution `x = 1`.

use bda::problems::Remark1;
use bda::{solve, AggregationSchedule, BilevelProblem, Method, SolverConfig};

fn main() -> bda::Result<()> {
    let p = Remark1::new();
    let sched = AggregationSchedule::reference();
    for k in [1, 5, 20, 100] {
        let mut cfg = SolverConfig::new(Method::Rhg, k, 5000, sched);
        cfg.lambda = Some(0.5);
        cfg.stop_tol = 1e-12;
        let rec = solve(&p, &cfg)?;
        let a = Remark1::plain_descent_factor(&vec![sched.s_l; k]);
        let expected = Remark1::plain_descent_optimum(a);
        println!(
            "K={k:>3}  x_T={:.10}  closed form={expected:.10}  true phi(x_T)={:.4}",
            rec.final_x[0],
            p.value_function(&rec.final_x).unwrap()
        );
    }
    Ok(())
}
