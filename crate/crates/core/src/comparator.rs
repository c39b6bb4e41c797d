//! The comparison oracle: the only channel through which algorithms see `f`.
//!
//! `compare(x, y)` returns `+1` when `f(x) > f(y)` and `−1` when `f(x) < f(y)`.
//! On a tie either answer is allowed, and [`TiePolicy`] decides which one is
//! given.

use std::fmt;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Result};
use crate::functions::FunctionModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn as_i8(self) -> i8 {
        match self {
            Sign::Plus => 1,
            Sign::Minus => -1,
        }
    }
}

/// Tie-breaking callback: `(x, y, queries answered so far) -> answer`.
pub type TieAdversary = Arc<dyn Fn(&[f64], &[f64], u64) -> Sign + Send + Sync>;

#[derive(Clone)]
pub enum TiePolicy {
    AlwaysPlus,
    AlwaysMinus,
    RandomSeeded(u64),
    Adversarial(TieAdversary),
}

impl TiePolicy {
    /// Adversary that alternates its answer with the query history length.
    pub fn alternating() -> Self {
        TiePolicy::Adversarial(Arc::new(|_, _, history| {
            if history % 2 == 0 {
                Sign::Minus
            } else {
                Sign::Plus
            }
        }))
    }

    /// Adversary that answers `+1` exactly when the first coordinate of `x`
    /// is below that of `y`, i.e. it prefers whichever point a step along
    /// `e₁` did not produce.
    pub fn contrarian() -> Self {
        TiePolicy::Adversarial(Arc::new(|x, y, _| {
            if x.first() < y.first() {
                Sign::Plus
            } else {
                Sign::Minus
            }
        }))
    }

    pub fn label(&self) -> &'static str {
        match self {
            TiePolicy::AlwaysPlus => "plus",
            TiePolicy::AlwaysMinus => "minus",
            TiePolicy::RandomSeeded(_) => "random",
            TiePolicy::Adversarial(_) => "adversarial",
        }
    }

    /// Parses a config label. `random` takes its seed from `seed`; `adversarial`
    /// uses [`TiePolicy::alternating`].
    pub fn from_label(label: &str, seed: u64) -> Result<Self> {
        match label {
            "plus" => Ok(TiePolicy::AlwaysPlus),
            "minus" => Ok(TiePolicy::AlwaysMinus),
            "random" => Ok(TiePolicy::RandomSeeded(seed)),
            "adversarial" => Ok(TiePolicy::alternating()),
            "contrarian" => Ok(TiePolicy::contrarian()),
            other => Err(invalid(
                "tie_policy",
                format!("unknown policy `{other}` (plus, minus, random, adversarial, contrarian)"),
            )),
        }
    }
}

impl fmt::Debug for TiePolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TiePolicy::RandomSeeded(seed) => write!(f, "RandomSeeded({seed})"),
            other => f.write_str(other.label()),
        }
    }
}

enum TieResolver {
    Plus,
    Minus,
    Random(Mutex<ChaCha8Rng>),
    Adversarial(TieAdversary),
}

/// Query-counted comparison access to a [`FunctionModel`].
///
/// Counters are atomic, so `compare` can be shared across threads; the
/// harness still keeps one oracle per trial so counts stay reproducible.
pub struct ComparisonOracle {
    model: Arc<FunctionModel>,
    policy_label: &'static str,
    tie: TieResolver,
    tie_epsilon: f64,
    queries: AtomicU64,
    ties: AtomicU64,
    outside: AtomicU64,
    warned: AtomicBool,
}

impl ComparisonOracle {
    pub fn new(model: Arc<FunctionModel>, policy: TiePolicy) -> Self {
        let policy_label = policy.label();
        let tie = match policy {
            TiePolicy::AlwaysPlus => TieResolver::Plus,
            TiePolicy::AlwaysMinus => TieResolver::Minus,
            TiePolicy::RandomSeeded(seed) => {
                TieResolver::Random(Mutex::new(ChaCha8Rng::seed_from_u64(seed)))
            }
            TiePolicy::Adversarial(cb) => TieResolver::Adversarial(cb),
        };
        Self {
            model,
            policy_label,
            tie,
            tie_epsilon: 0.0,
            queries: AtomicU64::new(0),
            ties: AtomicU64::new(0),
            outside: AtomicU64::new(0),
            warned: AtomicBool::new(false),
        }
    }

    /// Treats values within `epsilon` of each other as ties. Not part of the
    /// exact oracle model; meant for robustness probes only.
    pub fn with_tie_epsilon(mut self, epsilon: f64) -> Result<Self> {
        if !(epsilon >= 0.0 && epsilon.is_finite()) {
            return Err(invalid("tie_epsilon", format!("must be >= 0, got {epsilon}")));
        }
        self.tie_epsilon = epsilon;
        Ok(self)
    }

    pub fn dimension(&self) -> usize {
        self.model.dimension()
    }

    /// Declared smoothness of the underlying function. Part of the problem
    /// statement, not information leaked by the oracle.
    pub fn smoothness(&self) -> f64 {
        self.model.smoothness()
    }

    pub fn tie_policy_label(&self) -> &'static str {
        self.policy_label
    }

    /// `+1` if `f(x) > f(y)`, `−1` if `f(x) < f(y)`, tie policy otherwise.
    pub fn compare(&self, x: &[f64], y: &[f64]) -> Sign {
        let history = self.queries.fetch_add(1, Ordering::Relaxed);
        if !(self.model.in_domain(x) && self.model.in_domain(y)) {
            self.outside.fetch_add(1, Ordering::Relaxed);
            if !self.warned.swap(true, Ordering::Relaxed) {
                log::warn!(
                    "comparison query outside the declared ball of radius {}",
                    self.model.domain_radius()
                );
            }
        }
        let fx = self.model.evaluate(x);
        let fy = self.model.evaluate(y);
        if fx > fy + self.tie_epsilon {
            return Sign::Plus;
        }
        if fx < fy - self.tie_epsilon {
            return Sign::Minus;
        }
        self.ties.fetch_add(1, Ordering::Relaxed);
        match &self.tie {
            TieResolver::Plus => Sign::Plus,
            TieResolver::Minus => Sign::Minus,
            TieResolver::Random(rng) => {
                let mut rng = rng.lock().unwrap_or_else(|p| p.into_inner());
                if rng.gen::<bool>() {
                    Sign::Plus
                } else {
                    Sign::Minus
                }
            }
            TieResolver::Adversarial(cb) => cb(x, y, history),
        }
    }

    pub fn read_counter(&self) -> u64 {
        self.queries.load(Ordering::Relaxed)
    }

    pub fn reset_counter(&self) {
        self.queries.store(0, Ordering::Relaxed);
    }

    /// Number of queries resolved by the tie policy.
    pub fn tie_count(&self) -> u64 {
        self.ties.load(Ordering::Relaxed)
    }

    pub fn out_of_domain_queries(&self) -> u64 {
        self.outside.load(Ordering::Relaxed)
    }
}

impl fmt::Debug for ComparisonOracle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ComparisonOracle")
            .field("dimension", &self.dimension())
            .field("tie_policy", &self.policy_label)
            .field("tie_epsilon", &self.tie_epsilon)
            .field("queries", &self.read_counter())
            .finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functions::{make_hyperplane, make_quadratic};
    use nalgebra::DMatrix;

    fn first_coordinate(policy: TiePolicy) -> ComparisonOracle {
        let model = make_hyperplane(&[1.0, 0.0], 0.0)
            .unwrap()
            .into_model(1.0)
            .unwrap();
        ComparisonOracle::new(Arc::new(model), policy)
    }

    #[test]
    fn strict_comparisons() {
        let o = first_coordinate(TiePolicy::AlwaysMinus);
        assert_eq!(o.compare(&[1.0, 0.0], &[0.0, 0.0]), Sign::Plus);
        assert_eq!(o.compare(&[0.0, 0.0], &[1.0, 0.0]), Sign::Minus);
        assert_eq!(o.tie_count(), 0);
    }

    #[test]
    fn ties_follow_policy() {
        let plus = first_coordinate(TiePolicy::AlwaysPlus);
        let minus = first_coordinate(TiePolicy::AlwaysMinus);
        assert_eq!(plus.compare(&[0.0, 5.0], &[0.0, -5.0]), Sign::Plus);
        assert_eq!(minus.compare(&[0.0, 5.0], &[0.0, -5.0]), Sign::Minus);
        assert_eq!(plus.tie_count(), 1);

        let adv = first_coordinate(TiePolicy::alternating());
        let answers: Vec<_> = (0..4)
            .map(|_| adv.compare(&[0.0, 5.0], &[0.0, -5.0]))
            .collect();
        assert_eq!(answers, [Sign::Minus, Sign::Plus, Sign::Minus, Sign::Plus]);
    }

    #[test]
    fn random_ties_are_reproducible() {
        let draw = |seed| {
            let o = first_coordinate(TiePolicy::RandomSeeded(seed));
            (0..64)
                .map(|_| o.compare(&[0.0, 1.0], &[0.0, 2.0]))
                .collect::<Vec<_>>()
        };
        assert_eq!(draw(9), draw(9));
        let a = draw(9);
        assert!(a.contains(&Sign::Plus) && a.contains(&Sign::Minus));
    }

    #[test]
    fn quadratic_comparison() {
        let model = make_quadratic(&DMatrix::identity(2, 2), vec![0.0; 2], 0.0).unwrap();
        let o = ComparisonOracle::new(Arc::new(model), TiePolicy::AlwaysPlus);
        assert_eq!(o.compare(&[1.0, 1.0], &[2.0, 0.0]), Sign::Minus);
    }

    #[test]
    fn counter_semantics() {
        let o = first_coordinate(TiePolicy::AlwaysPlus);
        assert_eq!(o.read_counter(), 0);
        for _ in 0..3 {
            o.compare(&[1.0, 0.0], &[0.0, 0.0]);
        }
        assert_eq!(o.read_counter(), 3);
        o.reset_counter();
        assert_eq!(o.read_counter(), 0);
    }

    #[test]
    fn tie_epsilon_widens_ties() {
        let o = first_coordinate(TiePolicy::AlwaysMinus)
            .with_tie_epsilon(0.5)
            .unwrap();
        assert_eq!(o.compare(&[0.25, 0.0], &[0.0, 0.0]), Sign::Minus);
        assert_eq!(o.compare(&[1.0, 0.0], &[0.0, 0.0]), Sign::Plus);
        assert!(first_coordinate(TiePolicy::AlwaysPlus)
            .with_tie_epsilon(-1.0)
            .is_err());
    }

    #[test]
    fn out_of_domain_queries_are_counted_not_refused() {
        let o = first_coordinate(TiePolicy::AlwaysPlus);
        assert_eq!(o.compare(&[100.0, 0.0], &[0.0, 0.0]), Sign::Plus);
        assert_eq!(o.out_of_domain_queries(), 1);
    }

    #[test]
    fn concurrent_counting_is_exact() {
        let o = Arc::new(first_coordinate(TiePolicy::RandomSeeded(1)));
        std::thread::scope(|s| {
            for _ in 0..4 {
                let o = Arc::clone(&o);
                s.spawn(move || {
                    for _ in 0..250 {
                        o.compare(&[0.0, 1.0], &[0.0, 0.0]);
                    }
                });
            }
        });
        assert_eq!(o.read_counter(), 1000);
    }
}
