//! The trust-region solver loop: sampling, model maintenance, trial
//! steps, geometry repair, and the two-radius schedule that separates
//! the working trust-region radius from the sampling scale.

use crate::error::{Error, Result};
use crate::kkt::KktFactor;
use crate::quadratic::{QuadraticModel, SobolevWeights};
use crate::set::InterpolationSet;
use crate::trsub;
use crate::update;
use nalgebra::DVector;
use std::collections::VecDeque;

/// Which norm the model update minimizes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModelKind {
    /// Weighted Sobolev norm of the model difference on a ball.
    H2,
    /// Pure Hessian (least-Frobenius-norm) special case.
    Frobenius,
}

/// Solver parameters. `Default` gives the reference settings with
/// `m = 2n+1` resolved at run time; most callers only override `m`,
/// `model_kind`, and the budget.
#[derive(Clone, Debug)]
pub struct TrustRegionConfig {
    /// Number of interpolation points (0 = use 2n+1 for the problem).
    pub m: usize,
    pub model_kind: ModelKind,
    pub weights: SobolevWeights,
    pub delta0: f64,
    pub gamma: f64,
    pub eta_hat1: f64,
    pub eta_hat2: f64,
    /// Criticality proportionality constant (literal loop only).
    pub mu: f64,
    pub eps_c: f64,
    pub max_nf: usize,
    /// Explicit initial sample; when absent the coordinate pattern is
    /// generated from the starting point.
    pub initial_points: Option<Vec<DVector<f64>>>,
    /// Run the single-radius textbook loop instead of the two-radius
    /// schedule. Slower in evaluations; kept for comparison runs.
    pub literal_loop: bool,
    /// Emit one log line per iteration on stderr.
    pub log: bool,
}

impl Default for TrustRegionConfig {
    fn default() -> Self {
        TrustRegionConfig {
            m: 0,
            model_kind: ModelKind::H2,
            weights: SobolevWeights::thirds(),
            delta0: 1.0,
            gamma: 2.0,
            eta_hat1: 0.25,
            eta_hat2: 0.75,
            mu: 0.1,
            eps_c: 1e-8,
            max_nf: 500,
            initial_points: None,
            literal_loop: false,
            log: false,
        }
    }
}

impl TrustRegionConfig {
    fn validate(&self, n: usize) -> Result<usize> {
        let m = if self.m == 0 { 2 * n + 1 } else { self.m };
        if !(self.delta0 > 0.0) {
            return Err(Error::InvalidConfig("delta0 must be positive".into()));
        }
        if !(self.gamma > 1.0) {
            return Err(Error::InvalidConfig("gamma must exceed 1".into()));
        }
        if !(0.0 < self.eta_hat1 && self.eta_hat1 < self.eta_hat2 && self.eta_hat2 < 1.0) {
            return Err(Error::InvalidConfig(
                "ratio thresholds must satisfy 0 < eta_hat1 < eta_hat2 < 1".into(),
            ));
        }
        if !(self.mu > 0.0) {
            return Err(Error::InvalidConfig("mu must be positive".into()));
        }
        if !(self.eps_c > 0.0) {
            return Err(Error::InvalidConfig("eps_c must be positive".into()));
        }
        if let Some(pts) = &self.initial_points {
            if pts.len() != m {
                return Err(Error::InvalidConfig(format!(
                    "initial_points holds {} points but m = {m}",
                    pts.len()
                )));
            }
            if pts.iter().any(|p| p.len() != n) {
                return Err(Error::InvalidConfig(
                    "initial point dimension mismatch".into(),
                ));
            }
        }
        Ok(m)
    }
}

/// Why the run stopped.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TerminationReason {
    /// Sampling scale exhausted with the model gradient still large.
    Radius,
    /// Sampling scale exhausted and the model gradient below tolerance.
    GradientAndRadius,
    /// Evaluation budget consumed.
    Budget,
    /// Geometry repair could not place a usable point.
    GeometryFailure,
}

impl std::fmt::Display for TerminationReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            TerminationReason::Radius => "radius",
            TerminationReason::GradientAndRadius => "gradient+radius",
            TerminationReason::Budget => "budget",
            TerminationReason::GeometryFailure => "geometry_failure",
        };
        f.write_str(s)
    }
}

/// Outcome of one solver run.
#[derive(Clone, Debug)]
pub struct SolveResult {
    pub best_point: DVector<f64>,
    pub best_value: f64,
    /// Objective evaluations spent.
    pub nf: usize,
    /// Running best value after each evaluation; `nf == history.len()`.
    pub history: Vec<f64>,
    pub termination_reason: TerminationReason,
    /// Model gradient norm at the incumbent on exit.
    pub gradient_norm: f64,
    pub refactorizations: usize,
    pub final_rho: f64,
    pub final_delta: f64,
}

/// Ratio of actual to predicted reduction. A predicted reduction at or
/// below `1e−14·max(1, |q_old|)` cannot be trusted as a denominator and
/// yields `-∞`, which every acceptance threshold rejects.
pub fn acceptance_ratio(f_old: f64, f_new: f64, q_old: f64, q_new: f64) -> f64 {
    let pred = q_old - q_new;
    if pred <= 1e-14 * q_old.abs().max(1.0) {
        return f64::NEG_INFINITY;
    }
    (f_old - f_new) / pred
}

/// The textbook radius rule: shrink below `η̂₁`, expand above `η̂₂`,
/// hold in between.
pub fn update_radius(delta: f64, ratio: f64, cfg: &TrustRegionConfig) -> f64 {
    if ratio < cfg.eta_hat1 {
        delta / cfg.gamma
    } else if ratio > cfg.eta_hat2 {
        cfg.gamma * delta
    } else {
        delta
    }
}

/// The default initial sample around `x0`: the full pattern
/// `{x0, x0±e_i}` when `m = 2n+1`, otherwise `x0` followed by
/// `+e₁, −e₁, +e₂, …` until `m` points exist.
pub fn initial_pattern(x0: &DVector<f64>, m: usize) -> Vec<DVector<f64>> {
    let n = x0.len();
    let mut pts = vec![x0.clone()];
    if m == 2 * n + 1 {
        for i in 0..n {
            let mut e = DVector::zeros(n);
            e[i] = 1.0;
            pts.push(x0 + &e);
            pts.push(x0 - &e);
        }
        return pts;
    }
    if m == n.div_ceil(2) + 1 {
        // the deliberately starved configuration: one positive unit step
        // along each of the first ⌈n/2⌉ coordinates
        for i in 0..m - 1 {
            let mut e = DVector::zeros(n);
            e[i] = 1.0;
            pts.push(x0 + &e);
        }
        return pts;
    }
    let mut i = 0;
    let mut sign = 1.0;
    while pts.len() < m {
        let mut e = DVector::zeros(n);
        e[i] = sign;
        pts.push(x0 + &e);
        if sign > 0.0 {
            sign = -1.0;
        } else {
            sign = 1.0;
            i = (i + 1) % n;
        }
    }
    pts
}

struct Engine<'a, F: FnMut(&DVector<f64>) -> f64> {
    f: F,
    cfg: &'a TrustRegionConfig,
    m: usize,
    set: InterpolationSet,
    model: QuadraticModel,
    factor: KktFactor,
    delta: f64,
    rho: f64,
    streak: u32,
    diffs: VecDeque<f64>,
    nf: usize,
    history: Vec<f64>,
    out_of_budget: bool,
    refactors: usize,
    iter: usize,
}

impl<'a, F: FnMut(&DVector<f64>) -> f64> Engine<'a, F> {
    fn frobenius(&self) -> bool {
        self.cfg.model_kind == ModelKind::Frobenius
    }

    fn evaluate(&mut self, x: &DVector<f64>) -> f64 {
        if self.nf >= self.cfg.max_nf {
            self.out_of_budget = true;
            return f64::INFINITY;
        }
        let v = (self.f)(x);
        self.nf += 1;
        let best = match self.history.last() {
            Some(&b) => v.min(b),
            None => v,
        };
        self.history.push(best);
        v
    }

    fn x_opt(&self) -> DVector<f64> {
        self.set.best_point().clone()
    }

    fn f_opt(&self) -> f64 {
        self.set.best_value()
    }

    fn gradient_norm(&self) -> f64 {
        self.model.gradient(self.set.best_point()).norm()
    }

    // -------- factorization --------

    fn refactorize(&mut self) -> Result<bool> {
        let r = (10.0 * self.delta).max(self.set.max_distance_from_best());
        self.factor =
            KktFactor::assemble_scaled(&self.set, &self.cfg.weights, r, self.frobenius())?;
        self.refactors += 1;
        Ok(self.factor.is_poised())
    }

    fn reconcile(&mut self) -> Result<()> {
        let resid: Vec<f64> = (0..self.m)
            .map(|i| self.set.value(i) - self.model.evaluate(self.set.point(i)))
            .collect();
        let sol = update::solve_rhs(&self.factor, &resid)?;
        self.model.add_same_base(sol.c, &sol.g, &sol.hess);
        Ok(())
    }

    /// Base shift and scale-drift refactorization between iterations.
    fn maintenance(&mut self) -> Result<()> {
        let x_opt = self.x_opt();
        let drift = (&x_opt - &self.model.base).norm();
        if drift > 10.0 * self.delta {
            self.model = self.model.shift_base(x_opt.clone());
            self.set.set_base(x_opt);
        } else {
            let r = self.factor.scale();
            let target = 10.0 * self.delta;
            if r / 16.0 <= target && target <= 16.0 * r {
                return Ok(());
            }
        }
        if self.refactorize()? {
            self.reconcile()?;
        }
        Ok(())
    }

    // -------- set update --------

    /// Replacement slot for a trial point in the literal loop: the
    /// update denominator weighted by staleness, so distant points
    /// retire first unless replacing them would endanger the update.
    fn weighted_drop(&self, x_new: &DVector<f64>) -> usize {
        if self.m == 1 {
            return 0;
        }
        let sigmas = self.factor.sigma_all(x_new);
        let x_opt = self.set.best_point();
        let scale = self.delta.max(self.rho);
        let mut best_t = usize::MAX;
        let mut best_w = -1.0;
        for i in 0..self.m {
            if i == self.set.best_index() {
                continue;
            }
            let dist = (self.set.point(i) - x_opt).norm();
            let w = sigmas[i] * (dist / scale).powi(6).max(1.0);
            if w > best_w {
                best_t = i;
                best_w = w;
            }
        }
        if best_t == usize::MAX {
            best_t = if self.set.best_index() != 0 { 0 } else { 1 % self.m };
        }
        best_t
    }

    /// Replaces point `t` by `x_new`, maintaining the inverse and the
    /// model; any degeneracy falls back to a dense refactorization.
    fn incorporate(&mut self, t: usize, x_new: DVector<f64>, f_new: f64) -> Result<()> {
        let om = self.factor.omega_vector(&x_new);
        let residual = f_new - self.model.evaluate(&x_new);
        let co = self.factor.update_coefficients(&om, t, &x_new);
        let applied = match self.factor.apply_inverse_update(&co, t, &x_new) {
            Ok(()) => true,
            Err(Error::DegenerateUpdate { .. }) | Err(Error::StaleFactor) => false,
            Err(e) => return Err(e),
        };
        self.set
            .replace_point(t, x_new.clone(), f_new)
            .expect("duplicates are guarded before incorporation");
        if applied {
            let sol = update::solve_update(&self.factor, &self.set, t, &x_new, residual)?;
            self.model.add_same_base(sol.c, &sol.g, &sol.hess);
        } else if self.refactorize()? {
            self.reconcile()?;
        }
        Ok(())
    }

    // -------- geometry --------

    /// One model-improvement evaluation replacing the farthest point.
    /// Returns false when nothing could be placed or the budget ran out.
    /// `floor` keeps placements from degenerating; the two-radius loop
    /// passes its sampling scale, the single-radius loop passes zero so
    /// repairs stay inside the shrinking trust region.
    fn geometry_step(&mut self, floor: f64) -> Result<bool> {
        if self.m == 1 {
            return Ok(false);
        }
        let t = self.set.select_drop_index();
        let dist = self.set.max_distance_from_best();
        let radius = (0.1 * dist).min(0.5 * self.delta).max(floor);
        let d = match trsub::improve_geometry(&self.factor, &self.set, t, radius) {
            Ok(d) => d,
            Err(Error::GeometryFailure) => return Ok(false),
            Err(e) => return Err(e),
        };
        let x_new = self.x_opt() + d;
        if self.set.contains_duplicate_excluding(&x_new, t) {
            return Ok(false);
        }
        let f_new = self.evaluate(&x_new);
        if self.out_of_budget {
            return Ok(false);
        }
        self.push_diff((f_new - self.model.evaluate(&x_new)).abs());
        self.incorporate(t, x_new, f_new)?;
        Ok(true)
    }

    fn push_diff(&mut self, d: f64) {
        self.diffs.push_back(d);
        while self.diffs.len() > 3 {
            self.diffs.pop_front();
        }
    }

    fn errbig(&self) -> f64 {
        if self.diffs.len() == 3 {
            self.diffs.iter().cloned().fold(0.0, f64::max)
        } else {
            f64::INFINITY
        }
    }

    // -------- radius schedule --------

    fn shrink_rho(&mut self) {
        let rho_old = self.rho;
        let eps = self.cfg.eps_c;
        self.rho = if self.rho <= 16.0 * eps {
            eps
        } else if self.rho <= 250.0 * eps {
            (self.rho * eps).sqrt()
        } else {
            self.rho / 10.0
        };
        self.delta = (0.5 * rho_old).max(self.rho);
        self.diffs.clear();
    }

    fn log_line(&self, ratio: f64) {
        if self.cfg.log {
            eprintln!(
                "iter {:4} nf {:4} delta {:9.3e} rho {:9.3e} ratio {:8.2e} |g| {:9.3e} best {:.6e}",
                self.iter,
                self.nf,
                self.delta,
                self.rho,
                ratio,
                self.gradient_norm(),
                self.f_opt()
            );
        }
    }

    // -------- main loops --------

    /// Two-radius schedule: the working radius tracks step quality while
    /// the sampling scale ρ descends a fixed ladder, and every descent
    /// forces the model through a fresh well-spread sample.
    fn run_ladder(&mut self) -> Result<TerminationReason> {
        loop {
            self.iter += 1;
            if self.nf >= self.cfg.max_nf || self.out_of_budget {
                return Ok(TerminationReason::Budget);
            }
            self.maintenance()?;
            let x_opt = self.x_opt();
            let step = trsub::solve_trsp(&self.model, &x_opt, self.delta);
            let dn = step.d.norm();
            debug_assert!(dn <= self.delta * (1.0 + 1e-10));
            let degenerate_pred =
                step.predicted_reduction <= 1e-14 * self.f_opt().abs().max(1.0);

            if dn < 0.5 * self.rho || degenerate_pred {
                // short step: the model, not the radius, limited movement
                if self.set.max_distance_from_best() > 2.0 * self.delta
                    && self.geometry_step(self.rho)?
                {
                    continue;
                }
                // at the last rung the threshold sits below the roundoff
                // floor of |f − Q| whenever the objective is not zero at
                // the solution, so the test would churn forever there
                if step.crvmin > 0.0
                    && self.rho > self.cfg.eps_c
                    && self.errbig() > 0.125 * step.crvmin * self.rho * self.rho
                    && self.geometry_step(self.rho)?
                {
                    continue;
                }
                if self.rho <= self.cfg.eps_c {
                    return Ok(if self.gradient_norm() <= self.cfg.eps_c {
                        TerminationReason::GradientAndRadius
                    } else {
                        TerminationReason::Radius
                    });
                }
                self.shrink_rho();
                continue;
            }

            let x_new = &x_opt + &step.d;
            if self.set.contains_duplicate(&x_new) {
                // reject without evaluating; tighten, or exhaust the scale
                if self.delta > self.rho {
                    self.delta = (self.delta / self.cfg.gamma).max(self.rho);
                } else if self.rho <= self.cfg.eps_c {
                    return Ok(TerminationReason::Radius);
                } else {
                    self.shrink_rho();
                }
                continue;
            }
            let f_new = self.evaluate(&x_new);
            if self.out_of_budget {
                return Ok(TerminationReason::Budget);
            }
            self.push_diff((f_new - self.model.evaluate(&x_new)).abs());
            let ratio = (self.f_opt() - f_new) / step.predicted_reduction;
            self.log_line(ratio);

            // working-radius update, snapped to the sampling scale; a
            // streak of well-predicted iterations earns a full expansion
            // even when steps stop in the interior, so the sampling
            // spread can grow out of a locally-converged cluster
            if ratio > self.cfg.eta_hat2 {
                self.streak += 1;
            } else {
                self.streak = 0;
            }
            let gamma = self.cfg.gamma;
            if ratio <= 0.1 {
                self.delta = (self.delta / gamma).min(dn);
            } else if ratio <= 0.7 {
                self.delta = (self.delta / gamma).max(dn);
            } else {
                self.delta = (self.delta / gamma).max(gamma * dn);
                if self.streak >= 3 {
                    self.delta *= gamma;
                    self.streak = 0;
                }
            }
            if self.delta <= 1.5 * self.rho {
                self.delta = self.rho;
            }

            let t = self.set.select_drop_index();
            self.incorporate(t, x_new, f_new)?;
            if ratio < 0.1
                && self.set.max_distance_from_best() > 2.0 * self.delta
            {
                self.geometry_step(self.rho)?;
            }
        }
    }

    /// Single working radius, γ-halving, no sampling ladder: the loop as
    /// usually written down, kept for comparison runs. Termination
    /// requires the radius alone to fall below tolerance, which costs
    /// extra evaluations near convergence.
    fn run_literal(&mut self) -> Result<TerminationReason> {
        loop {
            self.iter += 1;
            if self.nf >= self.cfg.max_nf || self.out_of_budget {
                return Ok(TerminationReason::Budget);
            }
            if self.delta < self.cfg.eps_c {
                return Ok(if self.gradient_norm() <= self.cfg.eps_c {
                    TerminationReason::GradientAndRadius
                } else {
                    TerminationReason::Radius
                });
            }
            self.maintenance()?;

            // criticality: a tiny model gradient is only trusted once the
            // radius is commensurate and the sample is tight
            let gn = self.gradient_norm();
            if gn <= self.cfg.eps_c {
                let stale = self.set.max_distance_from_best() > 2.0 * self.delta;
                if stale || self.delta > self.cfg.mu * gn {
                    let mut attempts = 0;
                    let mut placed = false;
                    while attempts < 10 && !placed {
                        placed = self.geometry_step(0.0)?;
                        attempts += 1;
                        if self.out_of_budget {
                            return Ok(TerminationReason::Budget);
                        }
                    }
                    self.delta /= self.cfg.gamma;
                    if !placed && !stale {
                        return Ok(TerminationReason::GeometryFailure);
                    }
                    continue;
                }
            }

            let x_opt = self.x_opt();
            let step = trsub::solve_trsp(&self.model, &x_opt, self.delta);
            let x_new = &x_opt + &step.d;
            if step.predicted_reduction <= 1e-14 * self.f_opt().abs().max(1.0)
                || self.set.contains_duplicate(&x_new)
            {
                self.delta /= self.cfg.gamma;
                continue;
            }
            let f_new = self.evaluate(&x_new);
            if self.out_of_budget {
                return Ok(TerminationReason::Budget);
            }
            let ratio = acceptance_ratio(
                self.f_opt(),
                f_new,
                self.model.evaluate(&x_opt),
                self.model.evaluate(&x_new),
            );
            self.log_line(ratio);
            let t = self.weighted_drop(&x_new);
            self.incorporate(t, x_new, f_new)?;
            if ratio < self.cfg.eta_hat1
                && self.set.max_distance_from_best() > 2.0 * self.delta
            {
                self.geometry_step(0.0)?;
            }
            self.delta = update_radius(self.delta, ratio, self.cfg);
        }
    }
}

/// Runs the solver from `x_int`. The objective is any `FnMut` giving a
/// finite value for finite input; every evaluation the solver performs
/// is reflected in the result's history.
pub fn run_solver<F: FnMut(&DVector<f64>) -> f64>(
    mut objective: F,
    x_int: &DVector<f64>,
    cfg: &TrustRegionConfig,
) -> Result<SolveResult> {
    let n = x_int.len();
    let m = cfg.validate(n)?;

    let points = match &cfg.initial_points {
        Some(p) => p.clone(),
        None => initial_pattern(x_int, m),
    };

    // initial sampling (budget-aware, running-best bookkeeping)
    let mut nf = 0usize;
    let mut history: Vec<f64> = Vec::new();
    let mut out_of_budget = false;
    let mut values = Vec::with_capacity(m);
    for p in &points {
        if nf >= cfg.max_nf {
            out_of_budget = true;
            values.push(f64::INFINITY);
            continue;
        }
        let v = objective(p);
        nf += 1;
        let best = match history.last() {
            Some(&b) => v.min(b),
            None => v,
        };
        history.push(best);
        values.push(v);
    }

    let set = InterpolationSet::new(points, values, x_int.clone())?;
    let model = QuadraticModel::zero(x_int.clone());
    let frobenius = cfg.model_kind == ModelKind::Frobenius;
    let r0 = (10.0 * cfg.delta0).max(set.max_distance_from_best());
    let factor = KktFactor::assemble_scaled(&set, &cfg.weights, r0, frobenius)?;

    let mut engine = Engine {
        f: objective,
        cfg,
        m,
        set,
        model,
        factor,
        delta: cfg.delta0,
        rho: cfg.delta0,
        streak: 0,
        diffs: VecDeque::new(),
        nf,
        history,
        out_of_budget,
        refactors: 1,
        iter: 0,
    };
    engine.reconcile()?;

    let reason = if engine.out_of_budget {
        TerminationReason::Budget
    } else if cfg.literal_loop {
        engine.run_literal()?
    } else {
        engine.run_ladder()?
    };

    let gradient_norm = engine.gradient_norm();
    Ok(SolveResult {
        best_point: engine.x_opt(),
        best_value: engine.f_opt(),
        nf: engine.nf,
        history: engine.history,
        termination_reason: reason,
        gradient_norm,
        refactorizations: engine.refactors,
        final_rho: engine.rho,
        final_delta: engine.delta,
    })
}
