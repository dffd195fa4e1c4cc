use super::{BilevelProblem, SecondOrder, Smoothness};
use crate::error::{BdaError, Result};
use crate::numerics::{BoxRegion, RealMatrix, RealVector};

/// The two-dimensional strongly-convex-UL example.
///
/// ```text
/// F(x, y) = ½(x − y₂)² + ½(y₁ − 1)²
/// f(x, y) = ½y₁² + ½ε y₂² − x y₁        (ε = 0 by default)
/// ```
///
/// With `ε = 0`, `S(x) = {(x, t)}` and the solution is `x* = 1, y* = (1, 1)`.
/// Any `ε > 0` makes the lower level strongly convex but moves the solution to
/// `x = ½, y = (½, 0)` regardless of how small `ε` is.
#[derive(Debug, Clone)]
pub struct Remark1 {
    lower_reg: f64,
    region_x: BoxRegion,
    region_y: BoxRegion,
}

impl Remark1 {
    pub fn new() -> Self {
        Self::with_lower_regularization(0.0).expect("zero regularization is valid")
    }

    /// Adds `½ε y₂²` to the lower level.
    pub fn with_lower_regularization(eps: f64) -> Result<Self> {
        if !(eps >= 0.0) || !eps.is_finite() {
            return Err(BdaError::Contract(format!("regularization must be ≥ 0, got {eps}")));
        }
        Ok(Remark1 { lower_reg: eps, region_x: BoxRegion::cube(1, -100.0, 100.0)?, region_y: BoxRegion::unbounded(2) })
    }

    /// `a_K = 1 − ∏(1 − s_k)`, the contraction factor of plain descent from `y₀ = 0`.
    pub fn plain_descent_factor(steps: &[f64]) -> f64 {
        1.0 - steps.iter().map(|s| 1.0 - s).product::<f64>()
    }

    /// Minimizer of `φ_K` under plain descent: `a / (1 + a²)`.
    pub fn plain_descent_optimum(a: f64) -> f64 {
        a / (1.0 + a * a)
    }
}

impl Default for Remark1 {
    fn default() -> Self {
        Self::new()
    }
}

impl BilevelProblem for Remark1 {
    fn name(&self) -> &str {
        "remark1"
    }
    fn dim_x(&self) -> usize {
        1
    }
    fn dim_y(&self) -> usize {
        2
    }
    fn region_x(&self) -> &BoxRegion {
        &self.region_x
    }
    fn region_y(&self) -> &BoxRegion {
        &self.region_y
    }

    fn upper(&self, x: &RealVector, y: &RealVector) -> f64 {
        0.5 * (x[0] - y[1]).powi(2) + 0.5 * (y[0] - 1.0).powi(2)
    }

    fn lower(&self, x: &RealVector, y: &RealVector) -> f64 {
        0.5 * y[0] * y[0] + 0.5 * self.lower_reg * y[1] * y[1] - x[0] * y[0]
    }

    fn grad_x_upper(&self, x: &RealVector, y: &RealVector) -> RealVector {
        RealVector::from_element(1, x[0] - y[1])
    }

    fn grad_y_upper(&self, x: &RealVector, y: &RealVector) -> RealVector {
        RealVector::from_vec(vec![y[0] - 1.0, y[1] - x[0]])
    }

    fn grad_x_lower(&self, _x: &RealVector, y: &RealVector) -> RealVector {
        RealVector::from_element(1, -y[0])
    }

    fn grad_y_lower(&self, x: &RealVector, y: &RealVector) -> RealVector {
        RealVector::from_vec(vec![y[0] - x[0], self.lower_reg * y[1]])
    }

    fn second_order(&self) -> SecondOrder {
        SecondOrder { lower: true, upper: true }
    }

    fn hess_yy_lower(&self, _x: &RealVector, _y: &RealVector) -> Option<RealMatrix> {
        Some(RealMatrix::from_diagonal(&RealVector::from_vec(vec![1.0, self.lower_reg])))
    }

    fn hess_yx_lower(&self, _x: &RealVector, _y: &RealVector) -> Option<RealMatrix> {
        Some(RealMatrix::from_column_slice(2, 1, &[-1.0, 0.0]))
    }

    fn hess_yy_upper(&self, _x: &RealVector, _y: &RealVector) -> Option<RealMatrix> {
        Some(RealMatrix::identity(2, 2))
    }

    fn hess_yx_upper(&self, _x: &RealVector, _y: &RealVector) -> Option<RealMatrix> {
        Some(RealMatrix::from_column_slice(2, 1, &[0.0, -1.0]))
    }

    fn smoothness(&self) -> Smoothness {
        Smoothness {
            upper_lipschitz: Some(1.0),
            lower_lipschitz: Some(self.lower_reg.max(1.0)),
            lower_strong_convexity: (self.lower_reg > 0.0).then(|| self.lower_reg.min(1.0)),
        }
    }

    fn upper_lower_bound(&self) -> Option<f64> {
        Some(0.0)
    }

    fn lower_solution(&self, x: &RealVector) -> Option<RealVector> {
        let second = if self.lower_reg > 0.0 { 0.0 } else { x[0] };
        Some(RealVector::from_vec(vec![x[0], second]))
    }

    fn lower_optimal_value(&self, x: &RealVector) -> Option<f64> {
        Some(-0.5 * x[0] * x[0])
    }

    fn value_function(&self, x: &RealVector) -> Option<f64> {
        let y = self.lower_solution(x)?;
        Some(self.upper(x, &y))
    }

    fn value_function_grad(&self, x: &RealVector) -> Option<RealVector> {
        let g = if self.lower_reg > 0.0 { 2.0 * x[0] - 1.0 } else { x[0] - 1.0 };
        Some(RealVector::from_element(1, g))
    }

    fn optimum(&self) -> Option<(RealVector, RealVector)> {
        if self.lower_reg > 0.0 {
            Some((RealVector::from_element(1, 0.5), RealVector::from_vec(vec![0.5, 0.0])))
        } else {
            Some((RealVector::from_element(1, 1.0), RealVector::from_vec(vec![1.0, 1.0])))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::rng_stream;
    use crate::problems::testing::{assert_gradients_match, assert_hessians_match};

    #[test]
    fn global_optimum() {
        let (x, y) = Remark1::new().optimum().unwrap();
        assert_eq!(x[0], 1.0);
        assert_eq!(y.as_slice(), &[1.0, 1.0]);
        assert_eq!(Remark1::new().upper(&x, &y), 0.0);
    }

    #[test]
    fn plain_descent_optimum_never_exceeds_half() {
        // a/(1+a²) ≤ ½ ⇔ (1−a)² ≥ 0
        let mut rng = rng_stream(2);
        for _ in 0..1000 {
            let k = 1 + rng.index(50);
            let steps: Vec<f64> = (0..k).map(|_| rng.uniform()).collect();
            let a = Remark1::plain_descent_factor(&steps);
            assert!(Remark1::plain_descent_optimum(a) <= 0.5);
        }
        assert_eq!(Remark1::plain_descent_optimum(1.0), 0.5);
    }

    #[test]
    fn constant_step_closed_form() {
        let a = Remark1::plain_descent_factor(&[0.1; 20]);
        assert!((a - (1.0 - 0.9f64.powi(20))).abs() < 1e-15);
    }

    #[test]
    fn derivatives_match_finite_differences() {
        for eps in [0.0, 0.3] {
            let p = Remark1::with_lower_regularization(eps).unwrap();
            let mut rng = rng_stream(8);
            for _ in 0..10 {
                let x = rng.normal_vector(1);
                let y = rng.normal_vector(2);
                assert_gradients_match(&p, &x, &y);
                assert_hessians_match(&p, &x, &y);
            }
        }
    }

    #[test]
    fn vanishing_regularization_keeps_wrong_solution() {
        for eps in [1.0, 1e-3, 1e-9] {
            let p = Remark1::with_lower_regularization(eps).unwrap();
            let (x, y) = p.optimum().unwrap();
            assert_eq!(x[0], 0.5);
            assert_eq!(y.as_slice(), &[0.5, 0.0]);
            // φ_ε(x) = ½x² + ½(x−1)² has zero derivative at ½
            assert_eq!(p.value_function_grad(&x).unwrap()[0], 0.0);
        }
    }
}
