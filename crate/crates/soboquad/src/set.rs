//! The interpolation set: points, cached objective values, incumbent
//! bookkeeping, and the drop/replace operations the solver loop needs.

use crate::error::{Error, Result};
use nalgebra::DVector;

/// Relative threshold under which two points count as the same point.
const DUPLICATE_TOL: f64 = 1e-12;

/// Returns true when `a` and `b` are closer than the duplicate threshold.
pub fn is_duplicate(a: &DVector<f64>, b: &DVector<f64>) -> bool {
    (a - b).norm() <= DUPLICATE_TOL * a.norm().max(1.0)
}

/// `m` interpolation points with their objective values, the index of the
/// incumbent best point, and the shared base point.
#[derive(Clone, Debug)]
pub struct InterpolationSet {
    points: Vec<DVector<f64>>,
    values: Vec<f64>,
    best: usize,
    base: DVector<f64>,
}

impl InterpolationSet {
    /// Builds a set after validating pairwise distinctness.
    pub fn new(points: Vec<DVector<f64>>, values: Vec<f64>, base: DVector<f64>) -> Result<Self> {
        if points.is_empty() || points.len() != values.len() {
            return Err(Error::InvalidConfig(format!(
                "need equally many points and values, got {} and {}",
                points.len(),
                values.len()
            )));
        }
        let n = base.len();
        for p in &points {
            if p.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: p.len(),
                });
            }
        }
        for i in 0..points.len() {
            for j in 0..i {
                if is_duplicate(&points[i], &points[j]) {
                    return Err(Error::DuplicatePoint);
                }
            }
        }
        let best = argmin(&values);
        Ok(InterpolationSet {
            points,
            values,
            best,
            base,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.base.len()
    }

    pub fn point(&self, i: usize) -> &DVector<f64> {
        &self.points[i]
    }

    pub fn points(&self) -> &[DVector<f64>] {
        &self.points
    }

    pub fn value(&self, i: usize) -> f64 {
        self.values[i]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn base(&self) -> &DVector<f64> {
        &self.base
    }

    pub fn set_base(&mut self, base: DVector<f64>) {
        assert_eq!(base.len(), self.dim(), "base dimension mismatch");
        self.base = base;
    }

    pub fn best_index(&self) -> usize {
        self.best
    }

    pub fn best_point(&self) -> &DVector<f64> {
        &self.points[self.best]
    }

    pub fn best_value(&self) -> f64 {
        self.values[self.best]
    }

    /// Index of the point farthest from the incumbent; ties break to the
    /// lowest index, and the incumbent itself is never selected while the
    /// set holds more than one point.
    pub fn select_drop_index(&self) -> usize {
        if self.points.len() == 1 {
            return 0;
        }
        let best_pt = &self.points[self.best];
        let mut arg = usize::MAX;
        let mut far = -1.0;
        for (i, p) in self.points.iter().enumerate() {
            if i == self.best {
                continue;
            }
            let d = (p - best_pt).norm();
            if d > far {
                far = d;
                arg = i;
            }
        }
        arg
    }

    /// Distance from the incumbent to the farthest point.
    pub fn max_distance_from_best(&self) -> f64 {
        let best_pt = &self.points[self.best];
        self.points
            .iter()
            .map(|p| (p - best_pt).norm())
            .fold(0.0, f64::max)
    }

    /// Largest distance from the base point to any point in the set.
    pub fn spread_from_base(&self) -> f64 {
        self.points
            .iter()
            .map(|p| (p - &self.base).norm())
            .fold(0.0, f64::max)
    }

    /// Returns true if `x` duplicates any current point.
    pub fn contains_duplicate(&self, x: &DVector<f64>) -> bool {
        self.points.iter().any(|p| is_duplicate(p, x))
    }

    /// Duplicate test that ignores slot `skip` (the point about to be
    /// replaced, which `x` may legitimately coincide with).
    pub fn contains_duplicate_excluding(&self, x: &DVector<f64>, skip: usize) -> bool {
        self.points
            .iter()
            .enumerate()
            .any(|(i, p)| i != skip && is_duplicate(p, x))
    }

    /// Replaces point `t` with `x_new` and its value. The incumbent moves
    /// to `t` only on strict improvement — a tie never relocates it, so
    /// replacement order cannot silently change which point anchors the
    /// trust region. Rejects a point that duplicates a retained one.
    pub fn replace_point(&mut self, t: usize, x_new: DVector<f64>, f_new: f64) -> Result<()> {
        assert!(t < self.points.len(), "replace index out of range");
        assert_eq!(x_new.len(), self.dim(), "point dimension mismatch");
        for (i, p) in self.points.iter().enumerate() {
            if i != t && is_duplicate(p, &x_new) {
                return Err(Error::DuplicatePoint);
            }
        }
        let improved = f_new < self.values[self.best];
        self.points[t] = x_new;
        self.values[t] = f_new;
        if improved {
            self.best = t;
        }
        Ok(())
    }
}

fn argmin(values: &[f64]) -> usize {
    let mut arg = 0;
    for (i, v) in values.iter().enumerate() {
        if *v < values[arg] {
            arg = i;
        }
    }
    arg
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pt(v: &[f64]) -> DVector<f64> {
        DVector::from_vec(v.to_vec())
    }

    fn three_point_set() -> InterpolationSet {
        InterpolationSet::new(
            vec![pt(&[0.0, 0.0]), pt(&[1.0, 0.0]), pt(&[0.0, 2.0])],
            vec![0.0, 1.0, 2.0],
            pt(&[0.0, 0.0]),
        )
        .unwrap()
    }

    #[test]
    fn farthest_point_is_dropped() {
        let s = three_point_set();
        assert_eq!(s.best_index(), 0);
        assert_eq!(s.select_drop_index(), 2); // (0,2) is farthest from (0,0)
    }

    #[test]
    fn drop_ties_break_to_lower_index() {
        let s = InterpolationSet::new(
            vec![pt(&[0.0, 0.0]), pt(&[1.0, 0.0]), pt(&[0.0, 1.0])],
            vec![0.0, 1.0, 1.0],
            pt(&[0.0, 0.0]),
        )
        .unwrap();
        assert_eq!(s.select_drop_index(), 1);
    }

    #[test]
    fn singleton_set_drops_its_only_index() {
        let s = InterpolationSet::new(vec![pt(&[1.0])], vec![3.0], pt(&[0.0])).unwrap();
        assert_eq!(s.select_drop_index(), 0);
    }

    #[test]
    fn replace_moves_best_when_smaller() {
        let mut s = three_point_set();
        s.replace_point(2, pt(&[0.5, 0.5]), -1.0).unwrap();
        assert_eq!(s.best_index(), 2);
        assert_eq!(s.best_value(), -1.0);
    }

    #[test]
    fn replace_keeps_best_when_larger() {
        let mut s = three_point_set();
        s.replace_point(1, pt(&[2.0, 2.0]), 10.0).unwrap();
        assert_eq!(s.best_index(), 0);
    }

    #[test]
    fn duplicate_replacement_is_rejected() {
        let mut s = three_point_set();
        let err = s.replace_point(1, pt(&[0.0, 0.0]), 5.0);
        assert!(matches!(err, Err(Error::DuplicatePoint)));
    }

    #[test]
    fn never_drops_incumbent_after_many_replacements() {
        use rand::prelude::*;
        use rand_chacha::ChaCha8Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut s = three_point_set();
        for _ in 0..200 {
            let t = s.select_drop_index();
            assert_ne!(t, s.best_index());
            let x = pt(&[rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0)]);
            if s.contains_duplicate(&x) {
                continue;
            }
            let f = rng.gen_range(-10.0..10.0);
            s.replace_point(t, x, f).unwrap();
            let min = s.values().iter().cloned().fold(f64::INFINITY, f64::min);
            assert_eq!(s.best_value(), min);
        }
    }
}
