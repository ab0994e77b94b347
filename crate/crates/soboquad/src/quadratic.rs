//! Quadratic models anchored at a base point, and closed-form Sobolev
//! norms of such models over Euclidean balls.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};

/// Natural log of the gamma function (Lanczos approximation, g = 7).
///
/// Accurate to about 1e-14 for positive arguments, which covers every
/// dimension this crate will ever see.
pub fn ln_gamma(x: f64) -> f64 {
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_93,
        676.520_368_121_885_1,
        -1259.139_216_722_402_8,
        771.323_428_777_653_13,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_571_6e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        // reflection formula
        return std::f64::consts::PI.ln() - (std::f64::consts::PI * x).sin().ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = COEF[0];
    for (i, &c) in COEF.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + 7.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

/// Volume of the unit ball in `n` dimensions, computed via log-gamma so
/// large dimensions neither overflow nor underflow prematurely.
pub fn unit_ball_volume(n: usize) -> f64 {
    let nf = n as f64;
    (0.5 * nf * std::f64::consts::PI.ln() - ln_gamma(0.5 * nf + 1.0)).exp()
}

/// Symmetric matrix stored as the packed lower triangle, so symmetry is
/// structural rather than a maintained invariant.
#[derive(Clone, Debug, PartialEq)]
pub struct PackedSym {
    n: usize,
    data: Vec<f64>,
}

impl PackedSym {
    pub fn zeros(n: usize) -> Self {
        PackedSym {
            n,
            data: vec![0.0; n * (n + 1) / 2],
        }
    }

    /// Builds from a dense matrix, symmetrizing by averaging with the
    /// transpose so slightly asymmetric numerical input is accepted.
    pub fn from_dense(m: &DMatrix<f64>) -> Self {
        assert_eq!(m.nrows(), m.ncols(), "PackedSym requires a square matrix");
        let n = m.nrows();
        let mut p = PackedSym::zeros(n);
        for i in 0..n {
            for j in 0..=i {
                p.data[Self::idx(i, j)] = 0.5 * (m[(i, j)] + m[(j, i)]);
            }
        }
        p
    }

    #[inline]
    fn idx(i: usize, j: usize) -> usize {
        debug_assert!(i >= j);
        i * (i + 1) / 2 + j
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i >= j {
            self.data[Self::idx(i, j)]
        } else {
            self.data[Self::idx(j, i)]
        }
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        if i >= j {
            self.data[Self::idx(i, j)] = v;
        } else {
            self.data[Self::idx(j, i)] = v;
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.n, |i, j| self.get(i, j))
    }

    pub fn matvec(&self, v: &DVector<f64>) -> DVector<f64> {
        assert_eq!(v.len(), self.n, "matvec dimension mismatch");
        let mut out = DVector::zeros(self.n);
        for i in 0..self.n {
            let mut s = 0.0;
            for j in 0..self.n {
                s += self.get(i, j) * v[j];
            }
            out[i] = s;
        }
        out
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self.get(i, i)).sum()
    }

    pub fn fro_norm_sq(&self) -> f64 {
        let mut s = 0.0;
        for i in 0..self.n {
            for j in 0..=i {
                let v = self.data[Self::idx(i, j)];
                s += if i == j { v * v } else { 2.0 * v * v };
            }
        }
        s
    }

    /// `self += scale * u uᵀ`
    pub fn add_scaled_outer(&mut self, u: &DVector<f64>, scale: f64) {
        assert_eq!(u.len(), self.n, "outer-product dimension mismatch");
        for i in 0..self.n {
            for j in 0..=i {
                self.data[Self::idx(i, j)] += scale * u[i] * u[j];
            }
        }
    }

    /// `self += scale * I`
    pub fn add_scaled_identity(&mut self, scale: f64) {
        for i in 0..self.n {
            self.data[Self::idx(i, i)] += scale;
        }
    }

    /// `self += scale * other`
    pub fn axpy(&mut self, scale: f64, other: &PackedSym) {
        assert_eq!(self.n, other.n, "axpy dimension mismatch");
        for (a, b) in self.data.iter_mut().zip(other.data.iter()) {
            *a += scale * b;
        }
    }

    pub fn scale(&mut self, s: f64) {
        for a in self.data.iter_mut() {
            *a *= s;
        }
    }
}

/// A quadratic `Q(x) = c + (x−x₀)ᵀ g + ½ (x−x₀)ᵀ G (x−x₀)` anchored at a
/// base point `x₀`.
#[derive(Clone, Debug)]
pub struct QuadraticModel {
    pub base: DVector<f64>,
    pub const_term: f64,
    pub grad_at_base: DVector<f64>,
    pub hess: PackedSym,
}

impl QuadraticModel {
    pub fn zero(base: DVector<f64>) -> Self {
        let n = base.len();
        QuadraticModel {
            base,
            const_term: 0.0,
            grad_at_base: DVector::zeros(n),
            hess: PackedSym::zeros(n),
        }
    }

    pub fn new(base: DVector<f64>, c: f64, g: DVector<f64>, hess: PackedSym) -> Self {
        assert_eq!(base.len(), g.len(), "gradient dimension mismatch");
        assert_eq!(base.len(), hess.dim(), "Hessian dimension mismatch");
        QuadraticModel {
            base,
            const_term: c,
            grad_at_base: g,
            hess,
        }
    }

    pub fn dim(&self) -> usize {
        self.base.len()
    }

    /// Trace of the Hessian (the quantity recovered separately by the
    /// KKT stationarity conditions).
    pub fn trace(&self) -> f64 {
        self.hess.trace()
    }

    pub fn evaluate(&self, x: &DVector<f64>) -> f64 {
        assert_eq!(x.len(), self.dim(), "evaluate dimension mismatch");
        let u = x - &self.base;
        self.const_term + self.grad_at_base.dot(&u) + 0.5 * u.dot(&self.hess.matvec(&u))
    }

    pub fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        assert_eq!(x.len(), self.dim(), "gradient dimension mismatch");
        let u = x - &self.base;
        &self.grad_at_base + self.hess.matvec(&u)
    }

    /// Re-expresses the same quadratic about a new base point:
    /// `c' = Q(new_base)`, `g' = g + G (new_base − x₀)`, `G' = G`.
    pub fn shift_base(&self, new_base: DVector<f64>) -> QuadraticModel {
        assert_eq!(new_base.len(), self.dim(), "shift dimension mismatch");
        let c = self.evaluate(&new_base);
        let g = self.gradient(&new_base);
        QuadraticModel {
            base: new_base,
            const_term: c,
            grad_at_base: g,
            hess: self.hess.clone(),
        }
    }

    /// Adds a difference quadratic sharing the same base point.
    pub fn add_same_base(&mut self, c: f64, g: &DVector<f64>, hess: &PackedSym) {
        assert_eq!(g.len(), self.dim(), "difference dimension mismatch");
        self.const_term += c;
        self.grad_at_base += g;
        self.hess.axpy(1.0, hess);
    }
}

/// A Euclidean ball `B_r(center)`.
#[derive(Clone, Debug)]
pub struct BallRegion {
    pub center: DVector<f64>,
    pub radius: f64,
}

impl BallRegion {
    pub fn new(center: DVector<f64>, radius: f64) -> Result<Self> {
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "ball radius must be positive and finite, got {radius}"
            )));
        }
        Ok(BallRegion { center, radius })
    }

    /// Volume of the ball: `V_n rⁿ`.
    pub fn volume(&self) -> f64 {
        unit_ball_volume(self.center.len()) * self.radius.powi(self.center.len() as i32)
    }
}

/// Nonnegative weights (C₁, C₂, C₃) combining the H⁰, H¹ and H² terms.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SobolevWeights {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
}

impl SobolevWeights {
    pub fn new(c1: f64, c2: f64, c3: f64) -> Result<Self> {
        if c1 < 0.0 || c2 < 0.0 || c3 < 0.0 || !(c1 + c2 + c3 > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "weights must be nonnegative with positive sum, got ({c1}, {c2}, {c3})"
            )));
        }
        Ok(SobolevWeights { c1, c2, c3 })
    }

    /// Equal thirds — the default weighting.
    pub fn thirds() -> Self {
        SobolevWeights {
            c1: 1.0 / 3.0,
            c2: 1.0 / 3.0,
            c3: 1.0 / 3.0,
        }
    }

    /// Pure-Hessian weighting, which reduces the updating rule to the
    /// least-Frobenius-norm special case.
    pub fn frobenius() -> Self {
        SobolevWeights {
            c1: 0.0,
            c2: 0.0,
            c3: 1.0,
        }
    }
}

/// The three squared (semi)norms of a quadratic on a ball plus their
/// weighted combination.
#[derive(Clone, Copy, Debug)]
pub struct SobolevNormSq {
    pub h0_sq: f64,
    pub h1_sq: f64,
    pub h2_sq: f64,
    pub weighted: f64,
}

/// Closed-form squared H⁰ norm and H¹/H² seminorms of a quadratic over a
/// ball centered at the model's base point.
///
/// With `u = x − x₀`, `T = Tr(G)` and `V = V_n rⁿ`:
///
/// ```text
/// ‖Q‖²_{H⁰} = V [ c² + r²/(n+2) (‖g‖² + c·T) + r⁴/(4(n+2)(n+4)) (T² + 2‖G‖_F²) ]
/// |Q|²_{H¹} = V [ ‖g‖² + r²/(n+2) ‖G‖_F² ]
/// |Q|²_{H²} = V ‖G‖_F²
/// ```
///
/// The caller must shift the model to the region center first; mismatched
/// anchors are refused rather than silently shifted.
pub fn sobolev_norm_sq(
    model: &QuadraticModel,
    region: &BallRegion,
    weights: &SobolevWeights,
) -> Result<SobolevNormSq> {
    if model.dim() != region.center.len() {
        return Err(Error::DimensionMismatch {
            expected: region.center.len(),
            got: model.dim(),
        });
    }
    if model.base != region.center {
        return Err(Error::BaseMismatch);
    }
    let n = model.dim() as f64;
    let r2 = region.radius * region.radius;
    let vol = region.volume();

    let c = model.const_term;
    let gg = model.grad_at_base.norm_squared();
    let t = model.hess.trace();
    let fro = model.hess.fro_norm_sq();

    let h0 = vol
        * (c * c
            + r2 / (n + 2.0) * (gg + c * t)
            + r2 * r2 / (4.0 * (n + 2.0) * (n + 4.0)) * (t * t + 2.0 * fro));
    let h1 = vol * (gg + r2 / (n + 2.0) * fro);
    let h2 = vol * fro;

    Ok(SobolevNormSq {
        h0_sq: h0,
        h1_sq: h1,
        h2_sq: h2,
        weighted: weights.c1 * h0 + weights.c2 * h1 + weights.c3 * h2,
    })
}
