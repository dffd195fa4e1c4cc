//! The bi-level problem contract and the built-in instances.
//!
//! A problem supplies the upper-level objective `F(x, y)`, the lower-level
//! objective `f(x, y)`, their first derivatives, and optionally second
//! derivatives, smoothness constants and analytic reference solutions.
//!
//! Hessian blocks use the convention `hess_yx = ∂(∇_y ·)/∂x`, an `m × n`
//! matrix.

mod counterexample;
mod hyperclean;
mod lls;
mod remark1;

pub use counterexample::Counterexample;
pub use hyperclean::{sigmoid, HypercleanConfig, HypercleanData, Hypercleaning};
pub use lls::LlsQuadratic;
pub use remark1::Remark1;

use crate::error::{BdaError, Result};
use crate::numerics::{BoxRegion, RealMatrix, RealVector};

/// Smoothness data a problem may declare.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Smoothness {
    /// Lipschitz constant of `∇_y F(x, ·)`.
    pub upper_lipschitz: Option<f64>,
    /// Lipschitz constant of `∇_y f(x, ·)`.
    pub lower_lipschitz: Option<f64>,
    /// Strong-convexity modulus of `f(x, ·)`.
    pub lower_strong_convexity: Option<f64>,
}

/// Which second-derivative blocks a problem can evaluate.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SecondOrder {
    pub lower: bool,
    pub upper: bool,
}

/// The contract every bi-level problem satisfies.
pub trait BilevelProblem: Send + Sync {
    fn name(&self) -> &str;
    fn dim_x(&self) -> usize;
    fn dim_y(&self) -> usize;
    fn region_x(&self) -> &BoxRegion;
    fn region_y(&self) -> &BoxRegion;

    fn upper(&self, x: &RealVector, y: &RealVector) -> f64;
    fn lower(&self, x: &RealVector, y: &RealVector) -> f64;
    fn grad_x_upper(&self, x: &RealVector, y: &RealVector) -> RealVector;
    fn grad_y_upper(&self, x: &RealVector, y: &RealVector) -> RealVector;
    fn grad_x_lower(&self, x: &RealVector, y: &RealVector) -> RealVector;
    fn grad_y_lower(&self, x: &RealVector, y: &RealVector) -> RealVector;

    fn second_order(&self) -> SecondOrder {
        SecondOrder::default()
    }
    fn hess_yy_lower(&self, _x: &RealVector, _y: &RealVector) -> Option<RealMatrix> {
        None
    }
    fn hess_yx_lower(&self, _x: &RealVector, _y: &RealVector) -> Option<RealMatrix> {
        None
    }
    fn hess_yy_upper(&self, _x: &RealVector, _y: &RealVector) -> Option<RealMatrix> {
        None
    }
    fn hess_yx_upper(&self, _x: &RealVector, _y: &RealVector) -> Option<RealMatrix> {
        None
    }

    /// `∇_yy f · v`. Override when a matrix-free product is cheaper.
    fn hvp_yy_lower(&self, x: &RealVector, y: &RealVector, v: &RealVector) -> Option<RealVector> {
        self.hess_yy_lower(x, y).map(|h| h * v)
    }
    /// `(∇_yx f)ᵀ · v`, a vector of length `n`.
    fn hvp_xy_lower(&self, x: &RealVector, y: &RealVector, v: &RealVector) -> Option<RealVector> {
        self.hess_yx_lower(x, y).map(|h| h.tr_mul(v))
    }
    fn hvp_yy_upper(&self, x: &RealVector, y: &RealVector, v: &RealVector) -> Option<RealVector> {
        self.hess_yy_upper(x, y).map(|h| h * v)
    }
    fn hvp_xy_upper(&self, x: &RealVector, y: &RealVector, v: &RealVector) -> Option<RealVector> {
        self.hess_yx_upper(x, y).map(|h| h.tr_mul(v))
    }

    fn smoothness(&self) -> Smoothness {
        Smoothness::default()
    }

    /// A lower bound `M₀` of `F(x, ·)`, uniform in `x`.
    fn upper_lower_bound(&self) -> Option<f64> {
        None
    }

    /// A point of `Ŝ(x)`: a lower-level solution that is optimistic for `F`.
    fn lower_solution(&self, _x: &RealVector) -> Option<RealVector> {
        None
    }
    /// `f*(x) = min_y f(x, y)`.
    fn lower_optimal_value(&self, _x: &RealVector) -> Option<f64> {
        None
    }
    /// `φ(x) = inf { F(x, y) : y ∈ Y ∩ S(x) }`.
    fn value_function(&self, _x: &RealVector) -> Option<f64> {
        None
    }
    /// `∇φ(x)` where `φ` is differentiable in closed form.
    fn value_function_grad(&self, _x: &RealVector) -> Option<RealVector> {
        None
    }
    /// The global optimum `(x*, y*)`.
    fn optimum(&self) -> Option<(RealVector, RealVector)> {
        None
    }
}

pub(crate) fn require_dim(what: &str, v: &RealVector, dim: usize) -> Result<()> {
    if v.len() != dim {
        return Err(BdaError::Contract(format!("{what} has length {}, expected {dim}", v.len())));
    }
    Ok(())
}

/// `4‖v‖² v`, the gradient of `‖v‖⁴`.
pub(crate) fn quartic_grad(v: &RealVector) -> RealVector {
    v * (4.0 * v.norm_squared())
}

/// `4‖v‖² I + 8 v vᵀ`, the Hessian of `‖v‖⁴`.
pub(crate) fn quartic_hess(v: &RealVector) -> RealMatrix {
    let n = v.len();
    RealMatrix::identity(n, n) * (4.0 * v.norm_squared()) + (v * v.transpose()) * 8.0
}
