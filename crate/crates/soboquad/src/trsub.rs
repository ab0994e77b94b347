//! Trust-region subproblems: the truncated-CG step on the quadratic
//! model, and the geometry-improvement step that relocates one
//! interpolation point to where the replacement denominator |σ| is
//! largest.

use crate::error::{Error, Result};
use crate::kkt::KktFactor;
use crate::quadratic::QuadraticModel;
use crate::set::InterpolationSet;
use crate::update;
use nalgebra::{DMatrix, DVector};

/// Result of the trust-region subproblem.
#[derive(Clone, Debug)]
pub struct TrialStep {
    pub d: DVector<f64>,
    pub predicted_reduction: f64,
    pub on_boundary: bool,
    /// Least positive curvature `pᵀGp/pᵀp` seen along the CG directions,
    /// or 0 when the step ended on the boundary or met negative
    /// curvature. Used by the caller's model-accuracy heuristics.
    pub crvmin: f64,
}

fn boundary_tau(d: &DVector<f64>, p: &DVector<f64>, delta: f64) -> f64 {
    let dd = d.norm_squared();
    let dp = d.dot(p);
    let pp = p.norm_squared();
    let disc = dp * dp + pp * (delta * delta - dd);
    (-dp + disc.max(0.0).sqrt()) / pp
}

/// Steihaug–Toint truncated conjugate gradients from `d = 0`:
/// minimizes the model on the ball of radius `delta` around `center`,
/// stopping at the boundary on a radius breach or negative curvature.
pub fn solve_trsp(model: &QuadraticModel, center: &DVector<f64>, delta: f64) -> TrialStep {
    solve_trsp_with(model, center, delta, model.dim() + 2, None)
}

/// Truncated CG with explicit iteration and residual controls. The
/// default residual target is `min(0.1, √‖g‖)·‖g‖`; passing `tol`
/// overrides it (e.g. 0 to run CG to Krylov exhaustion).
pub fn solve_trsp_with(
    model: &QuadraticModel,
    center: &DVector<f64>,
    delta: f64,
    max_iter: usize,
    tol: Option<f64>,
) -> TrialStep {
    assert!(delta > 0.0, "trust-region radius must be positive");
    let n = model.dim();
    let g = model.gradient(center);
    let mut d = DVector::zeros(n);
    let gnorm = g.norm();
    if gnorm == 0.0 {
        return TrialStep {
            d,
            predicted_reduction: 0.0,
            on_boundary: false,
            crvmin: 0.0,
        };
    }
    let tol = tol.unwrap_or_else(|| gnorm.sqrt().min(0.1) * gnorm);
    let mut r = -g;
    let mut p = r.clone();
    let mut rr = r.norm_squared();
    let mut crvmin = -1.0f64;
    let mut on_boundary = false;
    for _ in 0..max_iter {
        let gp = model.hess.matvec(&p);
        let kappa = p.dot(&gp);
        if kappa <= 0.0 {
            let tau = boundary_tau(&d, &p, delta);
            d += tau * &p;
            crvmin = 0.0;
            on_boundary = true;
            break;
        }
        let crv = kappa / p.norm_squared();
        crvmin = if crvmin < 0.0 { crv } else { crvmin.min(crv) };
        let alpha = rr / kappa;
        let d_next = &d + alpha * &p;
        if d_next.norm() >= delta {
            let tau = boundary_tau(&d, &p, delta);
            d += tau * &p;
            crvmin = 0.0;
            on_boundary = true;
            break;
        }
        d = d_next;
        r -= alpha * &gp;
        let rr_new = r.norm_squared();
        if rr_new.sqrt() <= tol {
            break;
        }
        p = &r + (rr_new / rr) * &p;
        rr = rr_new;
    }
    let pred = model.evaluate(center) - model.evaluate(&(center + &d));
    TrialStep {
        d,
        predicted_reduction: pred.max(0.0),
        on_boundary,
        crvmin: crvmin.max(0.0),
    }
}

/// The replacement denominator σ = αβ + τ² for moving point `t` to
/// `x_opt + d`, where `x_opt` is the set's incumbent best point.
pub fn sigma_of_step(
    factor: &KktFactor,
    set: &InterpolationSet,
    t: usize,
    d: &DVector<f64>,
) -> f64 {
    let x_new = set.best_point() + d;
    let om = factor.omega_vector(&x_new);
    factor.update_coefficients(&om, t, &x_new).sigma
}

/// Exact quartic interpolation through five samples; coefficients in
/// ascending degree order.
fn fit_quartic(ts: &[f64; 5], ys: &[f64; 5]) -> Option<[f64; 5]> {
    let v = DMatrix::from_fn(5, 5, |i, j| ts[i].powi(j as i32));
    let rhs = DVector::from_row_slice(ys);
    let sol = v.lu().solve(&rhs)?;
    Some([sol[0], sol[1], sol[2], sol[3], sol[4]])
}

/// Real roots of a polynomial with ascending coefficients (degree ≤ 3
/// after trimming negligible leading terms), via the companion matrix.
fn real_roots(coeffs: &[f64]) -> Vec<f64> {
    let scale = coeffs.iter().fold(0.0f64, |a, c| a.max(c.abs()));
    if scale == 0.0 {
        return Vec::new();
    }
    let mut c: Vec<f64> = coeffs.to_vec();
    while c.len() > 1 && c.last().unwrap().abs() <= 1e-12 * scale {
        c.pop();
    }
    let deg = c.len() - 1;
    if deg == 0 {
        return Vec::new();
    }
    let lead = c[deg];
    let k = deg;
    let comp = DMatrix::from_fn(k, k, |i, j| {
        if j == k - 1 {
            -c[i] / lead
        } else if i == j + 1 {
            1.0
        } else {
            0.0
        }
    });
    comp.complex_eigenvalues()
        .iter()
        .filter(|z| z.im.abs() <= 1e-8 * (1.0 + z.re.abs()))
        .map(|z| z.re)
        .collect()
}

/// Finds a displacement `d*` with `‖d*‖ ≤ delta` from the incumbent best
/// point that maximizes `|σ(d)|` over a deterministic candidate set —
/// coordinate directions, pairwise diagonal directions, the direction of
/// the point being replaced, and the gradient of that point's Lagrange
/// function — then refines along the winning direction: σ restricted to
/// a ray is an exact quartic, so five samples determine it and its
/// derivative's roots locate the interior maxima.
///
/// Errors with [`Error::GeometryFailure`] when every candidate leaves
/// |σ| at degenerate size.
pub fn improve_geometry(
    factor: &KktFactor,
    set: &InterpolationSet,
    t: usize,
    delta: f64,
) -> Result<DVector<f64>> {
    assert!(delta > 0.0, "geometry radius must be positive");
    let n = set.dim();
    let x_opt = set.best_point().clone();

    let mut cands: Vec<DVector<f64>> = Vec::new();
    let push_pm = |cands: &mut Vec<DVector<f64>>, u: DVector<f64>| {
        cands.push(-&u);
        cands.push(u);
    };
    for i in 0..n {
        let mut e = DVector::zeros(n);
        e[i] = 1.0;
        push_pm(&mut cands, e);
    }
    let v = set.point(t) - &x_opt;
    let nv = v.norm();
    if nv > 0.0 {
        push_pm(&mut cands, v / nv);
    }
    let mut unit = vec![0.0; set.len()];
    unit[t] = 1.0;
    if let Ok(lagr) = update::solve_rhs(factor, &unit) {
        let lg = &lagr.g + lagr.hess.matvec(&(&x_opt - factor.base()));
        let nl = lg.norm();
        if nl > 0.0 {
            push_pm(&mut cands, lg / nl);
        }
    }
    for i in 0..n {
        for j in (i + 1)..n {
            let mut e = DVector::zeros(n);
            e[i] = 1.0;
            e[j] = 1.0;
            push_pm(&mut cands, e / 2.0f64.sqrt());
            let mut e2 = DVector::zeros(n);
            e2[i] = 1.0;
            e2[j] = -1.0;
            push_pm(&mut cands, e2 / 2.0f64.sqrt());
        }
    }

    let mut best_d: Option<DVector<f64>> = None;
    let mut best_s = -1.0f64;
    for u in &cands {
        let d = u * delta;
        let s = sigma_of_step(factor, set, t, &d).abs();
        if s > best_s {
            best_s = s;
            best_d = Some(d);
        }
    }
    let Some(mut best_d) = best_d else {
        return Err(Error::GeometryFailure);
    };
    if best_s <= 1e-14 {
        return Err(Error::GeometryFailure);
    }

    let u = &best_d / best_d.norm();
    let ts = [-delta, -0.5 * delta, 0.0, 0.5 * delta, delta];
    let ys = ts.map(|s| sigma_of_step(factor, set, t, &(&u * s)));
    if let Some(q) = fit_quartic(&ts, &ys) {
        let deriv = [q[1], 2.0 * q[2], 3.0 * q[3], 4.0 * q[4]];
        for root in real_roots(&deriv) {
            if root.abs() <= delta {
                let d = &u * root;
                let s = sigma_of_step(factor, set, t, &d).abs();
                if s > best_s {
                    best_s = s;
                    best_d = d;
                }
            }
        }
    }
    Ok(best_d)
}
