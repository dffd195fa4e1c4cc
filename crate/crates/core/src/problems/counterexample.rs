use super::{quartic_grad, quartic_hess, BilevelProblem, SecondOrder, Smoothness};
use crate::error::{BdaError, Result};
use crate::numerics::{BoxRegion, RealMatrix, RealVector};

/// The non-singleton counter-example.
///
/// ```text
/// F(x, (y, z)) = ‖x − z‖⁴ + ‖y − e‖⁴
/// f(x, (y, z)) = ½‖y‖² − xᵀy
/// ```
///
/// The lower-level variable is the concatenation `w = (y, z) ∈ ℝ²ⁿ`. `f`
/// ignores `z`, so `S(x) = {(x, z) : z ∈ ℝⁿ}`. Choosing `z = x` optimistically
/// gives `φ(x) = ‖x − e‖⁴`, and the unique solution is `x = y = z = e`.
/// `(4‖u‖² I + 8uuᵀ) v` without forming the matrix.
fn quartic_hvp(u: &RealVector, v: &RealVector) -> RealVector {
    v * (4.0 * u.norm_squared()) + u * (8.0 * u.dot(v))
}

#[derive(Debug, Clone)]
pub struct Counterexample {
    n: usize,
    x_half_width: f64,
    y_half_width: Option<f64>,
    region_x: BoxRegion,
    region_y: BoxRegion,
}

impl Counterexample {
    /// `X = [−100, 100]ⁿ`, `Y = ℝ²ⁿ`.
    pub fn new(n: usize) -> Result<Self> {
        Self::with_regions(n, 100.0, None)
    }

    /// Custom `X = [−a, a]ⁿ` and optionally compact `Y = [−r, r]²ⁿ`.
    pub fn with_regions(n: usize, x_half_width: f64, y_half_width: Option<f64>) -> Result<Self> {
        if n == 0 {
            return Err(BdaError::Contract("counter-example needs n ≥ 1".into()));
        }
        if !(x_half_width > 0.0) || y_half_width.is_some_and(|r| !(r > 0.0)) {
            return Err(BdaError::Contract("region half widths must be positive".into()));
        }
        let region_y = match y_half_width {
            Some(r) => BoxRegion::cube(2 * n, -r, r)?,
            None => BoxRegion::unbounded(2 * n),
        };
        Ok(Counterexample {
            n,
            x_half_width,
            y_half_width,
            region_x: BoxRegion::cube(n, -x_half_width, x_half_width)?,
            region_y,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    fn split<'a>(&self, w: &'a RealVector) -> (nalgebra::DVectorView<'a, f64>, nalgebra::DVectorView<'a, f64>) {
        (w.rows(0, self.n), w.rows(self.n, self.n))
    }

    fn ones(&self) -> RealVector {
        RealVector::from_element(self.n, 1.0)
    }
}

impl BilevelProblem for Counterexample {
    fn name(&self) -> &str {
        "counterexample"
    }
    fn dim_x(&self) -> usize {
        self.n
    }
    fn dim_y(&self) -> usize {
        2 * self.n
    }
    fn region_x(&self) -> &BoxRegion {
        &self.region_x
    }
    fn region_y(&self) -> &BoxRegion {
        &self.region_y
    }

    fn upper(&self, x: &RealVector, w: &RealVector) -> f64 {
        let (y, z) = self.split(w);
        let dz = (x - z).norm_squared();
        let dy = (y - self.ones()).norm_squared();
        dz * dz + dy * dy
    }

    fn lower(&self, x: &RealVector, w: &RealVector) -> f64 {
        let (y, _) = self.split(w);
        0.5 * y.norm_squared() - x.dot(&y)
    }

    fn grad_x_upper(&self, x: &RealVector, w: &RealVector) -> RealVector {
        let (_, z) = self.split(w);
        quartic_grad(&(x - z))
    }

    fn grad_y_upper(&self, x: &RealVector, w: &RealVector) -> RealVector {
        let (y, z) = self.split(w);
        let mut g = RealVector::zeros(2 * self.n);
        g.rows_mut(0, self.n).copy_from(&quartic_grad(&(y - self.ones())));
        g.rows_mut(self.n, self.n).copy_from(&(-quartic_grad(&(x - z))));
        g
    }

    fn grad_x_lower(&self, _x: &RealVector, w: &RealVector) -> RealVector {
        -self.split(w).0.clone_owned()
    }

    fn grad_y_lower(&self, x: &RealVector, w: &RealVector) -> RealVector {
        let (y, _) = self.split(w);
        let mut g = RealVector::zeros(2 * self.n);
        g.rows_mut(0, self.n).copy_from(&(y - x));
        g
    }

    fn second_order(&self) -> SecondOrder {
        SecondOrder { lower: true, upper: true }
    }

    fn hess_yy_lower(&self, _x: &RealVector, _w: &RealVector) -> Option<RealMatrix> {
        let mut h = RealMatrix::zeros(2 * self.n, 2 * self.n);
        h.view_mut((0, 0), (self.n, self.n)).fill_with_identity();
        Some(h)
    }

    fn hess_yx_lower(&self, _x: &RealVector, _w: &RealVector) -> Option<RealMatrix> {
        let mut h = RealMatrix::zeros(2 * self.n, self.n);
        h.view_mut((0, 0), (self.n, self.n)).fill_with_identity();
        Some(-h)
    }

    fn hess_yy_upper(&self, x: &RealVector, w: &RealVector) -> Option<RealMatrix> {
        let (y, z) = self.split(w);
        let mut h = RealMatrix::zeros(2 * self.n, 2 * self.n);
        h.view_mut((0, 0), (self.n, self.n)).copy_from(&quartic_hess(&(y - self.ones())));
        h.view_mut((self.n, self.n), (self.n, self.n)).copy_from(&quartic_hess(&(z - x)));
        Some(h)
    }

    fn hess_yx_upper(&self, x: &RealVector, w: &RealVector) -> Option<RealMatrix> {
        let (_, z) = self.split(w);
        let mut h = RealMatrix::zeros(2 * self.n, self.n);
        h.view_mut((self.n, 0), (self.n, self.n)).copy_from(&(-quartic_hess(&(x - z))));
        Some(h)
    }

    fn hvp_yy_lower(&self, _x: &RealVector, _w: &RealVector, v: &RealVector) -> Option<RealVector> {
        let mut out = RealVector::zeros(2 * self.n);
        out.rows_mut(0, self.n).copy_from(&v.rows(0, self.n));
        Some(out)
    }

    fn hvp_xy_lower(&self, _x: &RealVector, _w: &RealVector, v: &RealVector) -> Option<RealVector> {
        Some(-v.rows(0, self.n).clone_owned())
    }

    fn hvp_yy_upper(&self, x: &RealVector, w: &RealVector, v: &RealVector) -> Option<RealVector> {
        let (y, z) = self.split(w);
        let mut out = RealVector::zeros(2 * self.n);
        out.rows_mut(0, self.n).copy_from(&quartic_hvp(&(y - self.ones()), &v.rows(0, self.n).clone_owned()));
        out.rows_mut(self.n, self.n).copy_from(&quartic_hvp(&(z - x), &v.rows(self.n, self.n).clone_owned()));
        Some(out)
    }

    fn hvp_xy_upper(&self, x: &RealVector, w: &RealVector, v: &RealVector) -> Option<RealVector> {
        let (_, z) = self.split(w);
        Some(-quartic_hvp(&(x - z), &v.rows(self.n, self.n).clone_owned()))
    }

    fn smoothness(&self) -> Smoothness {
        // ‖∇²‖v‖⁴‖ = 12‖v‖²; bounded only when Y is.
        let upper_lipschitz = self.y_half_width.map(|r| {
            let n = self.n as f64;
            let dy = n * (r + 1.0).powi(2);
            let dz = n * (r + self.x_half_width).powi(2);
            12.0 * dy.max(dz)
        });
        Smoothness { upper_lipschitz, lower_lipschitz: Some(1.0), lower_strong_convexity: None }
    }

    fn upper_lower_bound(&self) -> Option<f64> {
        Some(0.0)
    }

    fn lower_solution(&self, x: &RealVector) -> Option<RealVector> {
        let mut w = RealVector::zeros(2 * self.n);
        w.rows_mut(0, self.n).copy_from(x);
        w.rows_mut(self.n, self.n).copy_from(x);
        self.region_y.contains(&w).then_some(w)
    }

    fn lower_optimal_value(&self, x: &RealVector) -> Option<f64> {
        Some(-0.5 * x.norm_squared())
    }

    fn value_function(&self, x: &RealVector) -> Option<f64> {
        self.lower_solution(x)?;
        let d = (x - self.ones()).norm_squared();
        Some(d * d)
    }

    fn value_function_grad(&self, x: &RealVector) -> Option<RealVector> {
        self.lower_solution(x)?;
        Some(quartic_grad(&(x - self.ones())))
    }

    fn optimum(&self) -> Option<(RealVector, RealVector)> {
        let e = self.ones();
        let w = RealVector::from_element(2 * self.n, 1.0);
        Some((e, w))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::rng_stream;
    use crate::problems::testing::{assert_gradients_match, assert_hessians_match};

    #[test]
    fn optimum_has_zero_upper_value() {
        let p = Counterexample::new(3).unwrap();
        let (x, w) = p.optimum().unwrap();
        assert_eq!(p.upper(&x, &w), 0.0);
        assert_eq!(x, RealVector::from_element(3, 1.0));
    }

    #[test]
    fn lower_optimal_value_at_ones() {
        let p = Counterexample::new(1).unwrap();
        let x = RealVector::from_element(1, 1.0);
        assert_eq!(p.lower_optimal_value(&x), Some(-0.5));
    }

    #[test]
    fn rejects_zero_dimension() {
        assert!(matches!(Counterexample::new(0), Err(BdaError::Contract(_))));
    }

    #[test]
    fn lower_objective_ignores_z() {
        let p = Counterexample::new(4).unwrap();
        let mut rng = rng_stream(11);
        for _ in 0..50 {
            let x = rng.normal_vector(4);
            let mut w = rng.normal_vector(8);
            let before = p.lower(&x, &w);
            for i in 4..8 {
                w[i] += rng.normal() * 10.0;
            }
            assert_eq!(p.lower(&x, &w), before);
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let p = Counterexample::new(3).unwrap();
        let mut rng = rng_stream(5);
        for _ in 0..10 {
            let x = rng.normal_vector(3);
            let w = rng.normal_vector(6);
            assert_gradients_match(&p, &x, &w);
            assert_hessians_match(&p, &x, &w);
        }
    }

    #[test]
    fn lower_optimum_bounds_lower_objective() {
        let p = Counterexample::new(2).unwrap();
        let mut rng = rng_stream(9);
        for _ in 0..100 {
            let x = rng.normal_vector(2);
            let w = rng.normal_vector(4) * 3.0;
            assert!(p.lower_optimal_value(&x).unwrap() <= p.lower(&x, &w));
        }
    }

    #[test]
    fn compact_variant_declares_upper_lipschitz() {
        let p = Counterexample::with_regions(5, 1.0, Some(2.0)).unwrap();
        assert_eq!(p.smoothness().upper_lipschitz, Some(12.0 * 5.0 * 9.0));
        assert!(Counterexample::new(5).unwrap().smoothness().upper_lipschitz.is_none());
    }
}
