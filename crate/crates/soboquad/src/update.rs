//! Conversion of KKT solves into quadratic model differences, and the
//! construction of the initial interpolation model.
//!
//! A solve returns the Lagrange multipliers `λ`, the constant `c` and
//! gradient `g` of the difference quadratic, and recovers its Hessian
//! from the stationarity conditions:
//!
//! ```text
//! T = Σ λ_l ‖u_l‖² / (2(2nη₃ + 2η₁)) − nη₄/(2nη₃ + 2η₁) · c
//! G = [ ½ Σ λ_l u_l u_lᵀ − (2η₃ T + η₄ c) I ] / (2η₁)
//! ```
//!
//! where `u_l` are the point displacements in the factor's frame. When
//! the factor was assembled in scaled coordinates the returned
//! coefficients are mapped back: `g/s`, `G/s²`.

use crate::error::{Error, Result};
use crate::kkt::KktFactor;
use crate::quadratic::{PackedSym, QuadraticModel, SobolevWeights};
use crate::set::InterpolationSet;
use nalgebra::{DMatrix, DVector};

/// Solution of one KKT solve: multipliers and the coefficients of the
/// minimum-norm difference quadratic, anchored at the factor's base.
#[derive(Clone, Debug)]
pub struct UpdateSolution {
    pub lambda: DVector<f64>,
    pub c: f64,
    pub g: DVector<f64>,
    /// Trace of the Hessian, recovered by its own stationarity relation.
    pub trace_t: f64,
    pub hess: PackedSym,
}

impl UpdateSolution {
    /// Packages the coefficients as a standalone quadratic at `base`.
    pub fn into_model(self, base: DVector<f64>) -> QuadraticModel {
        QuadraticModel::new(base, self.c, self.g, self.hess)
    }
}

/// Solves the KKT system for arbitrary interpolation values `rhs_m`
/// (one slot per point; the center and gradient slots of the full
/// right-hand side are zero) and recovers the difference quadratic.
pub fn solve_rhs(factor: &KktFactor, rhs_m: &[f64]) -> Result<UpdateSolution> {
    let m = factor.m();
    let n = factor.n();
    if rhs_m.len() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            got: rhs_m.len(),
        });
    }
    // a poised factor whose maintained inverse has drifted must be
    // re-assembled before it is trusted with a solve; a freshly
    // assembled inverse is already the best available and proceeds
    if factor.is_poised() && factor.is_updated() && !factor.residual_ok() {
        return Err(Error::StaleFactor);
    }

    let mut rhs = DVector::zeros(m + n + 1);
    for (i, &v) in rhs_m.iter().enumerate() {
        rhs[i] = v;
    }
    let sol = factor.solve_raw(&rhs);
    let lambda = sol.rows(0, m).clone_owned();
    let c = sol[m];
    let g_scaled = sol.rows(m + 1, n).clone_owned();

    let e = factor.eta();
    let nf = n as f64;
    let denom = 2.0 * nf * e.eta3 + 2.0 * e.eta1;
    let vpoints = factor.vpoints();
    let sum_norm: f64 = (0..m)
        .map(|l| lambda[l] * vpoints[l].norm_squared())
        .sum();
    let t_scaled = sum_norm / (2.0 * denom) - nf * e.eta4 / denom * c;

    let mut big_m = DMatrix::zeros(n, n);
    for l in 0..m {
        big_m.gemm(lambda[l], &vpoints[l], &vpoints[l].transpose(), 1.0);
    }
    let shift = 2.0 * e.eta3 * t_scaled + e.eta4 * c;
    let mut g_mat = big_m * 0.5;
    for k in 0..n {
        g_mat[(k, k)] -= shift;
    }
    g_mat /= 2.0 * e.eta1;

    let s = factor.scale();
    let hess = PackedSym::from_dense(&(g_mat / (s * s)));
    Ok(UpdateSolution {
        lambda,
        c,
        g: g_scaled / s,
        trace_t: t_scaled / (s * s),
        hess,
    })
}

/// Solves for the model difference of one point replacement: the
/// right-hand side carries `residual = f(x_new) − Q_prev(x_new)` in slot
/// `t` and zeros elsewhere, so the difference vanishes at every retained
/// point and equals the residual at the new one.
///
/// The factor must already reflect the replacement (its row/column `t`
/// rewritten for `x_new`); a mismatch is reported as a stale factor.
pub fn solve_update(
    factor: &KktFactor,
    set: &InterpolationSet,
    t: usize,
    x_new: &DVector<f64>,
    residual: f64,
) -> Result<UpdateSolution> {
    let m = factor.m();
    if set.len() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            got: set.len(),
        });
    }
    assert!(t < m, "replacement index out of range");
    let vn = factor.vdisp(x_new);
    let drift = (&vn - &factor.vpoints()[t]).norm();
    if drift > 1e-10 * vn.norm().max(1.0) {
        return Err(Error::StaleFactor);
    }
    let mut rhs = vec![0.0; m];
    rhs[t] = residual;
    solve_rhs(factor, &rhs)
}

/// Builds the initial model: the minimum-norm quadratic interpolating
/// every point of the set, obtained from one solve whose right-hand side
/// carries all the function values.
pub fn build_initial_model(
    set: &InterpolationSet,
    eta: crate::kkt::EtaCoefficients,
) -> Result<QuadraticModel> {
    let factor = KktFactor::assemble(set, eta)?;
    let sol = solve_rhs(&factor, set.values())?;
    Ok(sol.into_model(set.base().clone()))
}

/// Initial model through the scale-invariant assembly path used by the
/// solver loop; the normalization multiplies the objective by a positive
/// constant, so the minimizer — and hence the model — is unchanged.
pub fn build_initial_model_scaled(
    set: &InterpolationSet,
    weights: &SobolevWeights,
    r: f64,
    frobenius: bool,
) -> Result<QuadraticModel> {
    let factor = KktFactor::assemble_scaled(set, weights, r, frobenius)?;
    if !factor.is_poised() {
        return Err(Error::NotPoised);
    }
    let sol = solve_rhs(&factor, set.values())?;
    Ok(sol.into_model(set.base().clone()))
}
