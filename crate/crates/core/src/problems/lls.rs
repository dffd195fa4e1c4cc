use super::{BilevelProblem, SecondOrder, Smoothness};
use crate::error::{BdaError, Result};
use crate::numerics::{rng_stream, BoxRegion, RealMatrix, RealVector};

/// Quadratic test problem with a strongly convex lower level.
///
/// ```text
/// f(x, y) = ½ yᵀA y − (Bx)ᵀy
/// F(x, y) = ½‖y − b‖² + ½ρ‖x‖²
/// ```
///
/// `y*(x) = A⁻¹Bx` and `∇φ(x) = ρx + (A⁻¹B)ᵀ(y*(x) − b)`.
#[derive(Debug, Clone)]
pub struct LlsQuadratic {
    a: RealMatrix,
    b_mat: RealMatrix,
    target: RealVector,
    rho: f64,
    /// `A⁻¹B`, the solution-map Jacobian.
    solution_jacobian: RealMatrix,
    sigma: f64,
    lipschitz: f64,
    region_x: BoxRegion,
    region_y: BoxRegion,
}

impl LlsQuadratic {
    /// Random instance with `X = [−1, 1]ⁿ` and `Y = ℝᵐ`.
    pub fn random(n: usize, m: usize, seed: u64) -> Result<Self> {
        if n == 0 || m == 0 {
            return Err(BdaError::Contract("lls_quadratic needs n, m ≥ 1".into()));
        }
        let mut rng = rng_stream(seed);
        let g = RealMatrix::from_fn(m, m, |_, _| rng.normal());
        let a = g.tr_mul(&g) / m as f64 + RealMatrix::identity(m, m) * 0.5;
        let a = (&a + a.transpose()) * 0.5;
        let b_mat = RealMatrix::from_fn(m, n, |_, _| rng.normal()) / (n as f64).sqrt();
        let target = rng.normal_vector(m);
        Self::from_parts(a, b_mat, target, 0.1, BoxRegion::cube(n, -1.0, 1.0)?)
    }

    pub fn from_parts(
        a: RealMatrix,
        b_mat: RealMatrix,
        target: RealVector,
        rho: f64,
        region_x: BoxRegion,
    ) -> Result<Self> {
        let m = a.nrows();
        if a.ncols() != m || b_mat.nrows() != m || target.len() != m {
            return Err(BdaError::Contract("inconsistent lls_quadratic shapes".into()));
        }
        if region_x.dim() != b_mat.ncols() {
            return Err(BdaError::Contract("region_x does not match B".into()));
        }
        if (&a - a.transpose()).amax() > 1e-12 * (1.0 + a.amax()) {
            return Err(BdaError::Contract("A must be symmetric".into()));
        }
        if !(rho >= 0.0) {
            return Err(BdaError::Contract("ρ must be non-negative".into()));
        }
        let chol = a.clone().cholesky().ok_or_else(|| BdaError::Contract("A must be positive definite".into()))?;
        let solution_jacobian = chol.solve(&b_mat);
        let eig = a.clone().symmetric_eigen().eigenvalues;
        let sigma = eig.min();
        let lipschitz = eig.max();
        Ok(LlsQuadratic {
            a,
            b_mat,
            target,
            rho,
            solution_jacobian,
            sigma,
            lipschitz,
            region_x,
            region_y: BoxRegion::unbounded(m),
        })
    }

    /// Scalar instance `A = a, B = b, target = t`, `X = [−10, 10]`.
    pub fn scalar(a: f64, b: f64, target: f64, rho: f64) -> Result<Self> {
        Self::from_parts(
            RealMatrix::from_element(1, 1, a),
            RealMatrix::from_element(1, 1, b),
            RealVector::from_element(1, target),
            rho,
            BoxRegion::cube(1, -10.0, 10.0)?,
        )
    }

    /// Restricts `Y`. Analytic references are withheld at `x` whose
    /// unconstrained solution `A⁻¹Bx` leaves the box.
    pub fn with_region_y(mut self, region_y: BoxRegion) -> Result<Self> {
        if region_y.dim() != self.dim_y() {
            return Err(BdaError::Contract(format!("Y has dimension {}, expected {}", region_y.dim(), self.dim_y())));
        }
        self.region_y = region_y;
        Ok(self)
    }

    pub fn a(&self) -> &RealMatrix {
        &self.a
    }

    pub fn solution_jacobian(&self) -> &RealMatrix {
        &self.solution_jacobian
    }
}

impl BilevelProblem for LlsQuadratic {
    fn name(&self) -> &str {
        "lls_quadratic"
    }
    fn dim_x(&self) -> usize {
        self.b_mat.ncols()
    }
    fn dim_y(&self) -> usize {
        self.a.nrows()
    }
    fn region_x(&self) -> &BoxRegion {
        &self.region_x
    }
    fn region_y(&self) -> &BoxRegion {
        &self.region_y
    }

    fn upper(&self, x: &RealVector, y: &RealVector) -> f64 {
        0.5 * (y - &self.target).norm_squared() + 0.5 * self.rho * x.norm_squared()
    }

    fn lower(&self, x: &RealVector, y: &RealVector) -> f64 {
        0.5 * y.dot(&(&self.a * y)) - (&self.b_mat * x).dot(y)
    }

    fn grad_x_upper(&self, x: &RealVector, _y: &RealVector) -> RealVector {
        x * self.rho
    }

    fn grad_y_upper(&self, _x: &RealVector, y: &RealVector) -> RealVector {
        y - &self.target
    }

    fn grad_x_lower(&self, _x: &RealVector, y: &RealVector) -> RealVector {
        -self.b_mat.tr_mul(y)
    }

    fn grad_y_lower(&self, x: &RealVector, y: &RealVector) -> RealVector {
        &self.a * y - &self.b_mat * x
    }

    fn second_order(&self) -> SecondOrder {
        SecondOrder { lower: true, upper: true }
    }

    fn hess_yy_lower(&self, _x: &RealVector, _y: &RealVector) -> Option<RealMatrix> {
        Some(self.a.clone())
    }

    fn hess_yx_lower(&self, _x: &RealVector, _y: &RealVector) -> Option<RealMatrix> {
        Some(-self.b_mat.clone())
    }

    fn hess_yy_upper(&self, _x: &RealVector, _y: &RealVector) -> Option<RealMatrix> {
        Some(RealMatrix::identity(self.dim_y(), self.dim_y()))
    }

    fn hess_yx_upper(&self, _x: &RealVector, _y: &RealVector) -> Option<RealMatrix> {
        Some(RealMatrix::zeros(self.dim_y(), self.dim_x()))
    }

    fn smoothness(&self) -> Smoothness {
        Smoothness {
            upper_lipschitz: Some(1.0),
            lower_lipschitz: Some(self.lipschitz),
            lower_strong_convexity: Some(self.sigma),
        }
    }

    fn upper_lower_bound(&self) -> Option<f64> {
        Some(0.0)
    }

    fn lower_solution(&self, x: &RealVector) -> Option<RealVector> {
        let y = &self.solution_jacobian * x;
        self.region_y.contains(&y).then_some(y)
    }

    fn lower_optimal_value(&self, x: &RealVector) -> Option<f64> {
        let y = self.lower_solution(x)?;
        Some(self.lower(x, &y))
    }

    fn value_function(&self, x: &RealVector) -> Option<f64> {
        let y = self.lower_solution(x)?;
        Some(self.upper(x, &y))
    }

    fn value_function_grad(&self, x: &RealVector) -> Option<RealVector> {
        let y = self.lower_solution(x)?;
        Some(x * self.rho + self.solution_jacobian.tr_mul(&(y - &self.target)))
    }
}
