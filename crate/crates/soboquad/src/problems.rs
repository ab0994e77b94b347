//! Registry of unconstrained test objectives with standard starting
//! points and a per-instance evaluation counter.

use crate::error::{Error, Result};
use nalgebra::DVector;
use std::cell::Cell;

/// One benchmark instance: an objective with its standard start and,
/// when the minimum is known in closed form, its value. Each instance
/// carries its own evaluation counter (plain `Cell`, one instance per
/// solver run — see [`eval`](ProblemSpec::eval)).
pub struct ProblemSpec {
    name: &'static str,
    dim: usize,
    start: DVector<f64>,
    optimum_hint: Option<f64>,
    minimizer_hint: Option<DVector<f64>>,
    f: Box<dyn Fn(&DVector<f64>) -> f64>,
    counter: Cell<usize>,
}

impl std::fmt::Debug for ProblemSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ProblemSpec")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("nf", &self.counter.get())
            .finish_non_exhaustive()
    }
}

impl ProblemSpec {
    pub fn name(&self) -> &'static str {
        self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn start(&self) -> &DVector<f64> {
        &self.start
    }

    /// Known optimal value, when the problem has one in closed form.
    pub fn optimum_hint(&self) -> Option<f64> {
        self.optimum_hint
    }

    /// A known minimizer, when available (used by self-checks).
    pub fn minimizer_hint(&self) -> Option<&DVector<f64>> {
        self.minimizer_hint.as_ref()
    }

    /// Evaluates the objective, counting the call.
    pub fn eval(&self, x: &DVector<f64>) -> f64 {
        self.counter.set(self.counter.get() + 1);
        (self.f)(x)
    }

    /// Evaluations so far on this instance.
    pub fn nf(&self) -> usize {
        self.counter.get()
    }

    pub fn reset_counter(&self) {
        self.counter.set(0);
    }

    /// Same problem with a different starting point (dimension checked).
    pub fn with_start(mut self, start: DVector<f64>) -> Result<Self> {
        if start.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: start.len(),
            });
        }
        self.start = start;
        Ok(self)
    }
}

/// The two-dimensional Rosenbrock function.
pub fn rosenbrock(x: &DVector<f64>) -> f64 {
    (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2)
}

/// Names accepted by [`get_problem`], alphabetical.
pub const REGISTRY: &[&str] = &[
    "ARWHEAD",
    "BDQRTIC",
    "CHAINWOO",
    "DQRTIC",
    "PENALTY1",
    "POWELLSG",
    "ROSENBROCK",
    "SPHERE",
    "SROSENBR",
    "TRIGONOMETRIC",
    "VARDIM",
    "WOODS",
];

fn dim_err(name: &str, dim: usize, reason: &str) -> Error {
    Error::UnsupportedDimension {
        name: name.to_string(),
        dim,
        reason: reason.to_string(),
    }
}

fn spec(
    name: &'static str,
    start: DVector<f64>,
    optimum_hint: Option<f64>,
    minimizer_hint: Option<DVector<f64>>,
    f: impl Fn(&DVector<f64>) -> f64 + 'static,
) -> ProblemSpec {
    ProblemSpec {
        name,
        dim: start.len(),
        start,
        optimum_hint,
        minimizer_hint,
        f: Box::new(f),
        counter: Cell::new(0),
    }
}

/// Looks up a problem by name at the requested dimension. The returned
/// instance owns a zeroed evaluation counter.
pub fn get_problem(name: &str, dim: usize) -> Result<ProblemSpec> {
    let n = dim;
    if n == 0 {
        return Err(dim_err(name, n, "dimension must be at least 1"));
    }
    let nf = n as f64;
    match name {
        "SPHERE" => Ok(spec(
            "SPHERE",
            DVector::from_element(n, 1.0),
            Some(0.0),
            Some(DVector::zeros(n)),
            |x| x.iter().map(|v| v * v).sum(),
        )),
        "ROSENBROCK" => {
            if n != 2 {
                return Err(dim_err(name, n, "defined for dimension 2 only"));
            }
            Ok(spec(
                "ROSENBROCK",
                DVector::from_vec(vec![-1.2, 1.0]),
                Some(0.0),
                Some(DVector::from_element(2, 1.0)),
                rosenbrock,
            ))
        }
        "SROSENBR" => {
            if n < 2 || n % 2 != 0 {
                return Err(dim_err(name, n, "requires even dimension ≥ 2"));
            }
            let start = DVector::from_fn(n, |i, _| if i % 2 == 0 { -1.2 } else { 1.0 });
            Ok(spec(
                "SROSENBR",
                start,
                Some(0.0),
                Some(DVector::from_element(n, 1.0)),
                |x| {
                    let mut v = 0.0;
                    for k in 0..x.len() / 2 {
                        let (a, b) = (x[2 * k], x[2 * k + 1]);
                        v += 100.0 * (b - a * a).powi(2) + (1.0 - a).powi(2);
                    }
                    v
                },
            ))
        }
        "WOODS" => {
            if n < 4 || n % 4 != 0 {
                return Err(dim_err(name, n, "requires dimension divisible by 4"));
            }
            let start = DVector::from_fn(n, |i, _| if i % 2 == 0 { -3.0 } else { -1.0 });
            Ok(spec(
                "WOODS",
                start,
                Some(0.0),
                Some(DVector::from_element(n, 1.0)),
                |x| {
                    let mut v = 0.0;
                    for k in 0..x.len() / 4 {
                        let (a, b, c, d) =
                            (x[4 * k], x[4 * k + 1], x[4 * k + 2], x[4 * k + 3]);
                        v += 100.0 * (b - a * a).powi(2)
                            + (1.0 - a).powi(2)
                            + 90.0 * (d - c * c).powi(2)
                            + (1.0 - c).powi(2)
                            + 10.0 * (b + d - 2.0).powi(2)
                            + 0.1 * (b - d).powi(2);
                    }
                    v
                },
            ))
        }
        "CHAINWOO" => {
            if n < 4 || n % 2 != 0 {
                return Err(dim_err(name, n, "requires even dimension ≥ 4"));
            }
            let mut start = DVector::from_element(n, -2.0);
            start[0] = -3.0;
            start[1] = -1.0;
            start[2] = -3.0;
            start[3] = -1.0;
            // chained Wood without the constant offset, so the minimum
            // stays 0 at the all-ones point
            Ok(spec(
                "CHAINWOO",
                start,
                Some(0.0),
                Some(DVector::from_element(n, 1.0)),
                |x| {
                    let mut v = 0.0;
                    for k in 0..(x.len() - 2) / 2 {
                        let (a, b, c, d) =
                            (x[2 * k], x[2 * k + 1], x[2 * k + 2], x[2 * k + 3]);
                        v += 100.0 * (b - a * a).powi(2)
                            + (1.0 - a).powi(2)
                            + 90.0 * (d - c * c).powi(2)
                            + (1.0 - c).powi(2)
                            + 10.0 * (b + d - 2.0).powi(2)
                            + 0.1 * (b - d).powi(2);
                    }
                    v
                },
            ))
        }
        "POWELLSG" => {
            if n < 4 || n % 4 != 0 {
                return Err(dim_err(name, n, "requires dimension divisible by 4"));
            }
            let start = DVector::from_fn(n, |i, _| match i % 4 {
                0 => 3.0,
                1 => -1.0,
                2 => 0.0,
                _ => 1.0,
            });
            Ok(spec(
                "POWELLSG",
                start,
                Some(0.0),
                Some(DVector::zeros(n)),
                |x| {
                    let mut v = 0.0;
                    for k in 0..x.len() / 4 {
                        let (a, b, c, d) =
                            (x[4 * k], x[4 * k + 1], x[4 * k + 2], x[4 * k + 3]);
                        v += (a + 10.0 * b).powi(2)
                            + 5.0 * (c - d).powi(2)
                            + (b - 2.0 * c).powi(4)
                            + 10.0 * (a - d).powi(4);
                    }
                    v
                },
            ))
        }
        "DQRTIC" => Ok(spec(
            "DQRTIC",
            DVector::from_element(n, 2.0),
            Some(0.0),
            Some(DVector::from_fn(n, |i, _| (i + 1) as f64)),
            |x| {
                x.iter()
                    .enumerate()
                    .map(|(i, v)| (v - (i + 1) as f64).powi(4))
                    .sum()
            },
        )),
        "VARDIM" => Ok(spec(
            "VARDIM",
            DVector::from_fn(n, |i, _| 1.0 - (i + 1) as f64 / nf),
            Some(0.0),
            Some(DVector::from_element(n, 1.0)),
            |x| {
                let mut quad = 0.0;
                let mut lin = 0.0;
                for (i, v) in x.iter().enumerate() {
                    quad += (v - 1.0).powi(2);
                    lin += (i + 1) as f64 * (v - 1.0);
                }
                quad + lin.powi(2) + lin.powi(4)
            },
        )),
        "TRIGONOMETRIC" => Ok(spec(
            "TRIGONOMETRIC",
            DVector::from_element(n, 1.0 / nf),
            Some(0.0),
            Some(DVector::zeros(n)),
            move |x| {
                let cos_sum: f64 = x.iter().map(|v| v.cos()).sum();
                let mut total = 0.0;
                for (i, v) in x.iter().enumerate() {
                    let term = nf - cos_sum + (i + 1) as f64 * (1.0 - v.cos()) - v.sin();
                    total += term * term;
                }
                total
            },
        )),
        "ARWHEAD" => {
            if n < 2 {
                return Err(dim_err(name, n, "requires dimension ≥ 2"));
            }
            let mut minimizer = DVector::from_element(n, 1.0);
            minimizer[n - 1] = 0.0;
            Ok(spec(
                "ARWHEAD",
                DVector::from_element(n, 1.0),
                Some(0.0),
                Some(minimizer),
                |x| {
                    let n = x.len();
                    let last = x[n - 1];
                    let mut v = 0.0;
                    for i in 0..n - 1 {
                        v += (x[i] * x[i] + last * last).powi(2) - 4.0 * x[i] + 3.0;
                    }
                    v
                },
            ))
        }
        "PENALTY1" => Ok(spec(
            "PENALTY1",
            DVector::from_fn(n, |i, _| (i + 1) as f64),
            None,
            None,
            |x| {
                let a = 1e-5;
                let shifted: f64 = x.iter().map(|v| (v - 1.0).powi(2)).sum();
                let sq: f64 = x.iter().map(|v| v * v).sum();
                a * shifted + (sq - 0.25).powi(2)
            },
        )),
        "BDQRTIC" => {
            if n < 5 {
                return Err(dim_err(name, n, "requires dimension ≥ 5"));
            }
            Ok(spec(
                "BDQRTIC",
                DVector::from_element(n, 1.0),
                None,
                None,
                |x| {
                    let n = x.len();
                    let last = x[n - 1];
                    let mut v = 0.0;
                    for i in 0..n - 4 {
                        v += (-4.0 * x[i] + 3.0).powi(2)
                            + (x[i] * x[i]
                                + 2.0 * x[i + 1] * x[i + 1]
                                + 3.0 * x[i + 2] * x[i + 2]
                                + 4.0 * x[i + 3] * x[i + 3]
                                + 5.0 * last * last)
                                .powi(2);
                    }
                    v
                },
            ))
        }
        _ => Err(Error::UnknownProblem {
            name: name.to_string(),
            available: REGISTRY.join(", "),
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn rosenbrock_reference_values() {
        let one = DVector::from_element(2, 1.0);
        assert_eq!(rosenbrock(&one), 0.0);
        let zero = DVector::zeros(2);
        assert_eq!(rosenbrock(&zero), 1.0);
        let third = DVector::from_vec(vec![3.0f64.sqrt() / 2.0, 0.5]);
        assert_relative_eq!(rosenbrock(&third), 6.26795, epsilon = 1e-5);
    }

    #[test]
    fn every_hinted_minimum_checks_out() {
        let dims: &[(&str, usize)] = &[
            ("ARWHEAD", 6),
            ("BDQRTIC", 6),
            ("CHAINWOO", 6),
            ("DQRTIC", 5),
            ("PENALTY1", 5),
            ("POWELLSG", 8),
            ("ROSENBROCK", 2),
            ("SPHERE", 7),
            ("SROSENBR", 6),
            ("TRIGONOMETRIC", 5),
            ("VARDIM", 5),
            ("WOODS", 8),
        ];
        assert_eq!(dims.len(), REGISTRY.len());
        for &(name, n) in dims {
            let p = get_problem(name, n).unwrap();
            assert_eq!(p.dim(), n);
            assert_eq!(p.start().len(), n);
            if let (Some(fstar), Some(xstar)) = (p.optimum_hint(), p.minimizer_hint()) {
                let v = p.eval(xstar);
                assert!(
                    (v - fstar).abs() <= 1e-10,
                    "{name}: f(minimizer) = {v}, expected {fstar}"
                );
            }
        }
    }

    #[test]
    fn counter_counts_exactly() {
        let p = get_problem("SPHERE", 3).unwrap();
        assert_eq!(p.nf(), 0);
        let x = DVector::zeros(3);
        for _ in 0..3 {
            p.eval(&x);
        }
        assert_eq!(p.nf(), 3);
        p.reset_counter();
        assert_eq!(p.nf(), 0);
    }

    #[test]
    fn unknown_name_lists_registry() {
        let err = get_problem("NOPE", 2).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("NOPE"));
        for name in REGISTRY {
            assert!(msg.contains(name), "{msg} missing {name}");
        }
    }

    #[test]
    fn dimension_rules_are_enforced() {
        assert!(get_problem("ROSENBROCK", 3).is_err());
        assert!(get_problem("WOODS", 6).is_err());
        assert!(get_problem("POWELLSG", 2).is_err());
        assert!(get_problem("SROSENBR", 3).is_err());
        assert!(get_problem("CHAINWOO", 5).is_err());
        assert!(get_problem("BDQRTIC", 4).is_err());
        assert!(get_problem("ARWHEAD", 1).is_err());
        assert!(get_problem("SPHERE", 0).is_err());
        assert!(get_problem("SPHERE", 1).is_ok());
    }

    #[test]
    fn starts_are_the_documented_ones() {
        let r = get_problem("ROSENBROCK", 2).unwrap();
        assert_eq!(r.start().as_slice(), &[-1.2, 1.0]);
        let v = get_problem("VARDIM", 4).unwrap();
        assert_relative_eq!(v.start()[0], 0.75);
        assert_relative_eq!(v.start()[3], 0.0);
        let w = get_problem("WOODS", 4).unwrap();
        assert_eq!(w.start().as_slice(), &[-3.0, -1.0, -3.0, -1.0]);
        let over = r.with_start(DVector::zeros(2)).unwrap();
        assert_eq!(over.start().as_slice(), &[0.0, 0.0]);
        let p = get_problem("ROSENBROCK", 2).unwrap();
        assert!(p.with_start(DVector::zeros(3)).is_err());
    }

    #[test]
    fn solver_drives_registry_problem_through_counter() {
        use crate::driver::{run_solver, TrustRegionConfig};
        let p = get_problem("SPHERE", 2).unwrap();
        let cfg = TrustRegionConfig {
            max_nf: 100,
            ..Default::default()
        };
        let out = run_solver(|x| p.eval(x), p.start(), &cfg).unwrap();
        assert_eq!(p.nf(), out.nf);
        assert!(out.best_value <= 1e-10);
    }
}
