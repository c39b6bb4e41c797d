//! Least-squares fits of query counts against problem size.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::experiments::records::{RunRecord, Status};
use crate::stats::{linear_fit, LinearFit};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Predictor {
    N,
    LogInvEps,
    NLogInvEps,
}

impl Predictor {
    pub fn name(self) -> &'static str {
        match self {
            Predictor::N => "n",
            Predictor::LogInvEps => "log_inv_eps",
            Predictor::NLogInvEps => "n_log_inv_eps",
        }
    }

    fn value(self, r: &RunRecord) -> Option<f64> {
        let n = r.n as f64;
        match self {
            Predictor::N => Some(n),
            Predictor::LogInvEps => r.epsilon.map(|e| (1.0 / e).ln()),
            Predictor::NLogInvEps => r.epsilon.map(|e| n * (1.0 / e).ln()),
        }
    }
}

impl fmt::Display for Predictor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Predictor {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "n" => Ok(Predictor::N),
            "log_inv_eps" => Ok(Predictor::LogInvEps),
            "n_log_inv_eps" => Ok(Predictor::NLogInvEps),
            other => Err(Error::Config(format!(
                "unknown predictor `{other}` (n, log_inv_eps, n_log_inv_eps)"
            ))),
        }
    }
}

/// Mean query count per distinct predictor value, in increasing order.
pub fn mean_queries(records: &[RunRecord], predictor: Predictor) -> Result<Vec<(f64, f64)>> {
    let mut groups: BTreeMap<u64, (f64, f64, u64)> = BTreeMap::new();
    for r in records.iter().filter(|r| r.status == Status::Ok) {
        let x = predictor.value(r).ok_or_else(|| {
            invalid(
                "predictor",
                format!("{} needs an epsilon column, record has none", predictor),
            )
        })?;
        // Keyed by bit pattern so equal predictor values share a group.
        let entry = groups.entry(x.to_bits()).or_insert((x, 0.0, 0));
        entry.1 += r.queries as f64;
        entry.2 += 1;
    }
    let mut points: Vec<(f64, f64)> = groups
        .into_values()
        .map(|(x, sum, count)| (x, sum / count as f64))
        .collect();
    points.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(points)
}

/// Ordinary least squares of mean queries on the predictor. Needs at least
/// four distinct predictor values.
pub fn fit_scaling(records: &[RunRecord], predictor: Predictor) -> Result<LinearFit> {
    linear_fit(&mean_queries(records, predictor)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub predictor: Predictor,
    /// Which records went in, e.g. `epsilon=0.05` or `all`.
    pub group: String,
    pub fit: Option<LinearFit>,
    pub skipped: Option<String>,
}

impl FitReport {
    fn run(records: &[RunRecord], predictor: Predictor, group: String) -> Self {
        match fit_scaling(records, predictor) {
            Ok(fit) => Self {
                predictor,
                group,
                fit: Some(fit),
                skipped: None,
            },
            Err(e) => Self {
                predictor,
                group,
                fit: None,
                skipped: Some(e.to_string()),
            },
        }
    }
}

fn grouped<K: Ord>(records: &[RunRecord], key: impl Fn(&RunRecord) -> K) -> BTreeMap<K, Vec<RunRecord>> {
    let mut out: BTreeMap<K, Vec<RunRecord>> = BTreeMap::new();
    for r in records {
        out.entry(key(r)).or_default().push(r.clone());
    }
    out
}

fn eps_label(e: Option<f64>) -> String {
    e.map_or_else(|| "none".to_string(), |e| e.to_string())
}

/// The fits reported for a suite's records. Groups with too few distinct
/// predictor values are listed as skipped.
pub fn scaling_fits(suite: &str, records: &[RunRecord]) -> Vec<FitReport> {
    if records.is_empty() {
        return Vec::new();
    }
    let mut out = Vec::new();
    match suite {
        "estimate" => {
            for (eps, rows) in grouped(records, |r| r.epsilon.map(f64::to_bits)) {
                out.push(FitReport::run(
                    &rows,
                    Predictor::N,
                    format!("epsilon={}", eps_label(eps.map(f64::from_bits))),
                ));
            }
            for (n, rows) in grouped(records, |r| r.n) {
                out.push(FitReport::run(&rows, Predictor::LogInvEps, format!("n={n}")));
            }
            out.push(FitReport::run(records, Predictor::NLogInvEps, "all".into()));
        }
        "test_deterministic" | "test_randomized" | "quantum" => {
            for (eps, rows) in grouped(records, |r| r.epsilon.map(f64::to_bits)) {
                out.push(FitReport::run(
                    &rows,
                    Predictor::N,
                    format!("epsilon={}", eps_label(eps.map(f64::from_bits))),
                ));
            }
        }
        "estimate_constant" => out.push(FitReport::run(records, Predictor::N, "all".into())),
        _ => {}
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(n: usize, eps: f64, queries: u64) -> RunRecord {
        RunRecord {
            suite: "estimate".into(),
            cell: 0,
            replica: 0,
            seed: 0,
            n,
            epsilon: Some(eps),
            delta: None,
            model: None,
            tie_policy: None,
            case: None,
            status: Status::Ok,
            success: true,
            queries,
            error_norm: None,
            depth: None,
            detail: String::new(),
            wall_time: 0.0,
        }
    }

    #[test]
    fn exact_linear_data() {
        let rows: Vec<_> = [10, 20, 40, 80]
            .iter()
            .flat_map(|&n| [rec(n, 0.1, 3 * n as u64 + 7), rec(n, 0.1, 3 * n as u64 + 9)])
            .collect();
        let fit = fit_scaling(&rows, Predictor::N).unwrap();
        assert!((fit.slope - 3.0).abs() < 1e-12);
        assert!((fit.intercept - 8.0).abs() < 1e-9);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_counts_have_zero_slope() {
        let rows: Vec<_> = [6, 50, 200, 500].iter().map(|&n| rec(n, 0.3, 879)).collect();
        let fit = fit_scaling(&rows, Predictor::N).unwrap();
        assert!(fit.slope.abs() * 494.0 <= 0.01 * 879.0);
    }

    #[test]
    fn two_points_are_rejected() {
        let rows = vec![rec(10, 0.1, 5), rec(20, 0.1, 9)];
        assert!(matches!(
            fit_scaling(&rows, Predictor::N),
            Err(Error::DegenerateFit { .. })
        ));
    }

    #[test]
    fn epsilon_predictor_needs_epsilon() {
        let mut r = rec(10, 0.1, 5);
        r.epsilon = None;
        assert!(fit_scaling(&[r], Predictor::LogInvEps).is_err());
    }

    #[test]
    fn predictor_names_parse() {
        for p in [Predictor::N, Predictor::LogInvEps, Predictor::NLogInvEps] {
            assert_eq!(p.name().parse::<Predictor>().unwrap(), p);
        }
    }
}
