//! Directional preference: one comparison query bounds `⟨∇f(x), v⟩` on one side.
//!
//! Stepping from `x` to `x + (2Δ/L)v` and asking whether `f` went up certifies
//! `⟨∇f(x), v⟩ ≥ −Δ` when it did and `⟨∇f(x), v⟩ ≤ Δ` when it did not. The
//! bound is exact for any `L`-smooth `f`; no probability is involved.

use serde::Serialize;

use crate::comparator::{ComparisonOracle, Sign};
use crate::error::{invalid, Error, Result};
use crate::geometry::{dot, UnitVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Preference {
    /// `⟨∇f(x), v⟩ ≥ −Δ`
    AtLeastMinusDelta,
    /// `⟨∇f(x), v⟩ ≤ Δ`
    AtMostDelta,
}

impl Preference {
    pub fn is_at_most(self) -> bool {
        self == Preference::AtMostDelta
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DpVerdict {
    pub kind: Preference,
    pub delta: f64,
    pub direction: UnitVector,
    pub point: Vec<f64>,
}

impl DpVerdict {
    /// Whether the certified inequality holds for `gradient`, allowing `slack`.
    pub fn holds_for(&self, gradient: &[f64], slack: f64) -> bool {
        let ip = self.direction.dot(gradient);
        match self.kind {
            Preference::AtLeastMinusDelta => ip >= -self.delta - slack,
            Preference::AtMostDelta => ip <= self.delta + slack,
        }
    }
}

fn check_scales(delta: f64, smoothness: f64) -> Result<()> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(invalid("delta", format!("must be positive, got {delta}")));
    }
    if !(smoothness > 0.0 && smoothness.is_finite()) {
        return Err(invalid("L", format!("must be positive, got {smoothness}")));
    }
    Ok(())
}

/// Runs one directional-preference query.
pub fn dp(
    oracle: &ComparisonOracle,
    x: &[f64],
    v: &UnitVector,
    delta: f64,
    smoothness: f64,
) -> Result<DpVerdict> {
    check_scales(delta, smoothness)?;
    if x.len() != oracle.dimension() {
        return Err(Error::DimensionMismatch {
            expected: oracle.dimension(),
            actual: x.len(),
        });
    }
    if v.dimension() != x.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            actual: v.dimension(),
        });
    }
    let mut probe = Probe::new(oracle, x, smoothness);
    let kind = probe.ask(v, delta);
    Ok(DpVerdict {
        kind,
        delta,
        direction: v.clone(),
        point: x.to_vec(),
    })
}

/// Reusable DP caller for the algorithms: validated once, no per-query
/// allocation. Directions must already be unit length.
pub(crate) struct Probe<'a> {
    oracle: &'a ComparisonOracle,
    x: &'a [f64],
    smoothness: f64,
    stepped: Vec<f64>,
}

impl<'a> Probe<'a> {
    pub(crate) fn new(oracle: &'a ComparisonOracle, x: &'a [f64], smoothness: f64) -> Self {
        Self {
            oracle,
            x,
            smoothness,
            stepped: x.to_vec(),
        }
    }

    pub(crate) fn checked(
        oracle: &'a ComparisonOracle,
        x: &'a [f64],
        smoothness: f64,
    ) -> Result<Self> {
        check_scales(1.0, smoothness)?;
        if x.len() != oracle.dimension() {
            return Err(Error::DimensionMismatch {
                expected: oracle.dimension(),
                actual: x.len(),
            });
        }
        if x.iter().any(|c| !c.is_finite()) {
            return Err(invalid("x", "coordinates must be finite"));
        }
        Ok(Self::new(oracle, x, smoothness))
    }

    pub(crate) fn ask(&mut self, direction: &[f64], delta: f64) -> Preference {
        debug_assert!((dot(direction, direction) - 1.0).abs() < 1e-9);
        let step = 2.0 * delta / self.smoothness;
        for ((s, x), d) in self.stepped.iter_mut().zip(self.x).zip(direction) {
            *s = x + step * d;
        }
        match self.oracle.compare(&self.stepped, self.x) {
            Sign::Plus => Preference::AtLeastMinusDelta,
            Sign::Minus => Preference::AtMostDelta,
        }
    }

    pub(crate) fn dimension(&self) -> usize {
        self.x.len()
    }

    pub(crate) fn queries(&self) -> u64 {
        self.oracle.read_counter()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::comparator::TiePolicy;
    use crate::functions::{make_hyperplane, make_quadratic};
    use nalgebra::{DMatrix, DVector};
    use std::sync::Arc;

    fn e1_oracle() -> ComparisonOracle {
        let model = make_hyperplane(&[1.0, 0.0, 0.0], 0.0)
            .unwrap()
            .into_model(1.0)
            .unwrap();
        ComparisonOracle::new(Arc::new(model), TiePolicy::AlwaysPlus)
    }

    #[test]
    fn aligned_and_opposite_directions() {
        let o = e1_oracle();
        let x = [0.0; 3];
        let up = dp(&o, &x, &UnitVector::basis(3, 0), 0.1, 1.0).unwrap();
        assert_eq!(up.kind, Preference::AtLeastMinusDelta);
        assert!(up.holds_for(&[1.0, 0.0, 0.0], 0.0));
        let down = dp(&o, &x, &UnitVector::basis(3, 0).negated(), 0.1, 1.0).unwrap();
        assert_eq!(down.kind, Preference::AtMostDelta);
        assert_eq!(o.read_counter(), 2);
    }

    #[test]
    fn quadratic_against_analytic_gradient() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 4.0]));
        let f = Arc::new(make_quadratic(&a, vec![0.0; 2], 0.0).unwrap());
        let o = ComparisonOracle::new(Arc::clone(&f), TiePolicy::AlwaysMinus);
        let x = [1.0, 1.0];
        let verdict = dp(&o, &x, &UnitVector::basis(2, 0), 0.01, f.smoothness()).unwrap();
        assert_eq!(verdict.kind, Preference::AtLeastMinusDelta);
        assert!(verdict.holds_for(&f.verification().gradient(&x), 0.0));
    }

    #[test]
    fn rejects_bad_scales() {
        let o = e1_oracle();
        let v = UnitVector::basis(3, 0);
        assert!(dp(&o, &[0.0; 3], &v, 0.0, 1.0).is_err());
        assert!(dp(&o, &[0.0; 3], &v, -1.0, 1.0).is_err());
        assert!(dp(&o, &[0.0; 3], &v, 0.1, 0.0).is_err());
        assert!(matches!(
            dp(&o, &[0.0; 2], &v, 0.1, 1.0),
            Err(Error::DimensionMismatch { .. })
        ));
        assert_eq!(o.read_counter(), 0);
    }

    #[test]
    fn orthogonal_direction_is_a_tie() {
        let o = e1_oracle();
        let v = UnitVector::basis(3, 1);
        let verdict = dp(&o, &[0.0; 3], &v, 0.1, 1.0).unwrap();
        assert_eq!(o.tie_count(), 1);
        assert!(verdict.holds_for(&[1.0, 0.0, 0.0], 0.0));
    }
}
