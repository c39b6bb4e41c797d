//! Seeded sweep execution.
//!
//! Every (cell, replica) pair gets its own seed derived from the base seed,
//! so results do not depend on scheduling or thread count. Trials run on the
//! current rayon pool and are collected in grid order.

use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::comparator::{ComparisonOracle, TiePolicy};
use crate::dp::{dp, Preference};
use crate::error::Result;
use crate::estimation::{estimate, estimate_constant};
use crate::experiments::config::{ExperimentConfig, ModelKind, PromiseCase, Suite};
use crate::experiments::fit::scaling_fits;
use crate::experiments::instances::{model_with_gradient, orthogonal_direction, promise_instance};
use crate::experiments::records::{summarize, RunRecord, Status, Summary};
use crate::geometry::{
    norm, sample_sphere, verify_basis_overlap, verify_concentration, UnitVector,
    OVERLAP_CONSTANT,
};
use crate::quantumsim::{
    build_phase_state, inverse_qft_measure, recovery_window, simulate_alg6, SimCaps,
};
use crate::testing::{test_deterministic, test_randomized, TestAnswer, TestParams, TestTrace};

/// One point of the parameter grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub index: usize,
    pub n: usize,
    pub epsilon: Option<f64>,
    pub delta: Option<f64>,
    pub model: Option<ModelKind>,
    pub tie_policy: Option<String>,
    pub case: Option<PromiseCase>,
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

/// Enumerates the grid in a fixed nested order: n, ε, δ, model, tie policy,
/// case.
pub fn cells(config: &ExperimentConfig) -> Vec<Cell> {
    let g = config.resolved_grid();
    let suite = config.suite;
    let uses_model = !matches!(
        suite,
        Suite::QftRecovery | Suite::Concentration | Suite::Overlap
    );
    let uses_case = matches!(suite, Suite::TestRandomized | Suite::TestDeterministic);
    let mut out = Vec::new();
    for &n in &g.n {
        for &eps in &g.epsilon {
            for &delta in &g.delta {
                for &model in &g.models {
                    for policy in &g.tie_policies {
                        for &case in &g.cases {
                            out.push(Cell {
                                index: out.len(),
                                n,
                                epsilon: finite(eps),
                                delta: finite(delta),
                                model: uses_model.then_some(model),
                                tie_policy: uses_model.then(|| policy.clone()),
                                case: uses_case.then_some(case),
                            });
                        }
                    }
                }
            }
        }
    }
    out
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for one trial.
pub fn derive_seed(base: u64, cell: usize, replica: usize) -> u64 {
    splitmix(splitmix(splitmix(base) ^ cell as u64) ^ replica as u64)
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub records: Vec<RunRecord>,
    pub summary: Summary,
}

/// Runs every (cell, replica) pair of a validated configuration.
pub fn run(config: &ExperimentConfig) -> Result<RunOutput> {
    config.validate()?;
    let cells = cells(config);
    let replicas = config.seeds.replicas;
    let jobs: Vec<(usize, usize)> = (0..cells.len())
        .flat_map(|c| (0..replicas).map(move |r| (c, r)))
        .collect();
    let records: Vec<RunRecord> = jobs
        .par_iter()
        .map(|&(c, r)| run_trial(config, &cells[c], r))
        .collect();
    let fits = scaling_fits(config.suite.name(), &records);
    let summary = summarize(config.suite.name(), &records, fits);
    Ok(RunOutput { records, summary })
}

struct Outcome {
    success: bool,
    queries: u64,
    error_norm: Option<f64>,
    depth: Option<u32>,
    detail: String,
}

/// Runs one trial. Errors inside the trial are recorded, not propagated.
pub fn run_trial(config: &ExperimentConfig, cell: &Cell, replica: usize) -> RunRecord {
    let seed = derive_seed(config.seeds.base, cell.index, replica);
    let start = Instant::now();
    let result = match config.suite {
        Suite::DpSoundness => dp_trial(cell, seed),
        Suite::TestRandomized => testing_trial(config, cell, seed, true),
        Suite::TestDeterministic => testing_trial(config, cell, seed, false),
        Suite::Estimate => estimate_trial(cell, seed, false),
        Suite::EstimateConstant => estimate_trial(cell, seed, true),
        Suite::Quantum => quantum_trial(config, cell, seed),
        Suite::QftRecovery => qft_trial(config, cell, seed),
        Suite::Concentration => concentration_trial(config, cell, seed),
        Suite::Overlap => overlap_trial(config, cell, seed),
    };
    let (status, outcome) = match result {
        Ok(o) => (Status::Ok, o),
        Err(e) => {
            log::warn!("{} cell {} replica {replica}: {e}", config.suite, cell.index);
            (
                Status::Error,
                Outcome {
                    success: false,
                    queries: 0,
                    error_norm: None,
                    depth: None,
                    detail: format!("error: {e}"),
                },
            )
        }
    };
    RunRecord {
        suite: config.suite.name().to_string(),
        cell: cell.index,
        replica,
        seed,
        n: cell.n,
        epsilon: cell.epsilon,
        delta: cell.delta,
        model: cell.model.map(|m| m.name().to_string()),
        tie_policy: cell.tie_policy.clone(),
        case: cell.case.map(|c| c.name().to_string()),
        status,
        success: outcome.success,
        queries: outcome.queries,
        error_norm: outcome.error_norm,
        depth: outcome.depth,
        detail: outcome.detail,
        wall_time: start.elapsed().as_secs_f64(),
    }
}

fn oracle_for(cell: &Cell, model: Arc<crate::FunctionModel>, seed: u64) -> Result<ComparisonOracle> {
    let label = cell.tie_policy.as_deref().unwrap_or("plus");
    let policy = TiePolicy::from_label(label, splitmix(seed ^ 0x7469_6573))?;
    Ok(ComparisonOracle::new(model, policy))
}

fn model_kind(cell: &Cell) -> ModelKind {
    cell.model.unwrap_or(ModelKind::Hyperplane)
}

/// Rounding allowance for a DP verdict: the error of the two evaluations,
/// and of forming the stepped point, divided by the step length.
fn dp_slack(model: &crate::FunctionModel, x: &[f64], y: &[f64], step: f64, grad_norm: f64) -> f64 {
    let h = model.verification();
    let scale = h.value(x).abs() + h.value(y).abs() + grad_norm * (norm(x) + step);
    8.0 * f64::EPSILON * scale / step
}

fn dp_trial(cell: &Cell, seed: u64) -> Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = cell.n;
    let g = sample_sphere(n, &mut rng);
    let mut inst = model_with_gradient(model_kind(cell), &g, &mut rng)?;
    if model_kind(cell) == ModelKind::Hyperplane {
        // The gradient is constant, so move the base point around the domain.
        let r = 3.0 * rng.gen::<f64>();
        inst.x = sample_sphere(n, &mut rng)
            .into_inner()
            .into_iter()
            .map(|c| r * c)
            .collect();
    }
    let handle = inst.model.verification();
    let grad = handle.gradient(&inst.x);
    let grad_norm = norm(&grad);
    let delta = grad_norm * 10f64.powf(rng.gen_range(-4.0..=0.0));
    // Half the tuples are isotropic; the rest put ⟨∇f, v⟩ at −Δ, 0 or +Δ,
    // where the verdict is decided by rounding or by the tie policy.
    let (v, flavor) = if rng.gen::<bool>() || n == 1 {
        (sample_sphere(n, &mut rng), "isotropic")
    } else {
        let target = [-delta, 0.0, delta][rng.gen_range(0..3)];
        let along = target / grad_norm;
        let w = orthogonal_direction(&UnitVector::new(grad.clone())?, &mut rng)?;
        let across = (1.0 - along * along).max(0.0).sqrt();
        let coords = grad
            .iter()
            .zip(w.as_slice())
            .map(|(gi, wi)| along * gi / grad_norm + across * wi)
            .collect();
        (UnitVector::new(coords)?, "boundary")
    };
    let smoothness = inst.model.smoothness();
    let oracle = oracle_for(cell, Arc::clone(&inst.model), seed)?;
    let verdict = dp(&oracle, &inst.x, &v, delta, smoothness)?;
    let step = 2.0 * delta / smoothness;
    let y: Vec<f64> = inst
        .x
        .iter()
        .zip(v.as_slice())
        .map(|(a, b)| a + step * b)
        .collect();
    let slack = dp_slack(&inst.model, &inst.x, &y, step, grad_norm);
    let ip = v.dot(&grad);
    let excess = match verdict.kind {
        Preference::AtLeastMinusDelta => -delta - ip,
        Preference::AtMostDelta => ip - delta,
    };
    Ok(Outcome {
        success: verdict.holds_for(&grad, slack),
        queries: oracle.read_counter(),
        error_norm: Some(excess.max(0.0)),
        depth: None,
        detail: format!("{flavor} {:?} delta={delta:e}", verdict.kind),
    })
}

fn testing_trial(
    config: &ExperimentConfig,
    cell: &Cell,
    seed: u64,
    randomized: bool,
) -> Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let eps = cell.epsilon.unwrap_or(0.1);
    let case = cell.case.unwrap_or(PromiseCase::Yes);
    let pi = promise_instance(
        cell.n,
        eps,
        case,
        model_kind(cell),
        config.caps.placement,
        &mut rng,
    )?;
    let oracle = oracle_for(cell, Arc::clone(&pi.instance.model), seed)?;
    let mut params =
        TestParams::new(eps, pi.instance.gamma)?.with_yes_threshold(config.caps.yes_threshold)?;
    if let Some(d) = cell.delta {
        params = params.with_failure(d)?;
    }
    let verdict = if randomized {
        test_randomized(&oracle, &pi.instance.x, &pi.v, &params, &mut rng)?
    } else {
        test_deterministic(&oracle, &pi.instance.x, &pi.v, &params)?
    };
    let expected = match case {
        PromiseCase::Yes => TestAnswer::Yes,
        PromiseCase::No => TestAnswer::No,
    };
    let trace = match &verdict.trace {
        TestTrace::Randomized {
            hits, iterations, ..
        } => format!("hits={hits}/{iterations}"),
        TestTrace::Deterministic {
            flipped,
            probe_passed,
            cap_sum,
            ..
        } => format!("flipped={flipped} probe_passed={probe_passed} cap_sum={cap_sum:.3}"),
    };
    Ok(Outcome {
        success: verdict.answer == expected,
        queries: verdict.queries_used,
        error_norm: Some(pi.distance),
        depth: None,
        detail: format!("{} {trace}", pi.flavor.name()),
    })
}

fn estimate_trial(cell: &Cell, seed: u64, constant_only: bool) -> Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = sample_sphere(cell.n, &mut rng);
    let inst = model_with_gradient(model_kind(cell), &g, &mut rng)?;
    let oracle = oracle_for(cell, Arc::clone(&inst.model), seed)?;
    let smoothness = inst.model.smoothness();
    let truth = inst.model.verification().normalized_gradient(&inst.x)?;
    if constant_only {
        let r = estimate_constant(&oracle, &inst.x, inst.gamma, smoothness, &mut rng)?;
        let overlap = r.direction.dot(truth.as_slice());
        return Ok(Outcome {
            success: overlap >= 0.1,
            queries: r.queries_used,
            error_norm: Some(r.direction.distance(truth.as_slice())),
            depth: None,
            detail: format!("overlap={overlap:.4}"),
        });
    }
    let eps = cell.epsilon.unwrap_or(0.1);
    let r = estimate(&oracle, &inst.x, eps, inst.gamma, smoothness, &mut rng)?;
    let err = r.direction.distance(truth.as_slice());
    Ok(Outcome {
        success: err <= eps,
        queries: r.queries_used,
        error_norm: Some(err),
        depth: None,
        detail: format!(
            "cap_sum={:.3} saturated={}",
            r.stage_log.cap_sum(),
            r.stage_log.any_saturated()
        ),
    })
}

fn quantum_trial(config: &ExperimentConfig, cell: &Cell, seed: u64) -> Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let eps = cell.epsilon.unwrap_or(0.25);
    let g = sample_sphere(cell.n, &mut rng);
    let inst = model_with_gradient(model_kind(cell), &g, &mut rng)?;
    let oracle = oracle_for(cell, Arc::clone(&inst.model), seed)?;
    let caps = SimCaps {
        max_amplitudes: config.caps.max_amplitudes,
        grid_t: config.caps.grid_t,
        mode: config.caps.search_mode,
        ..SimCaps::default()
    };
    let out = simulate_alg6(
        &oracle,
        &inst.x,
        eps,
        inst.gamma,
        inst.model.smoothness(),
        &mut rng,
        &caps,
    )?;
    let truth = inst.model.verification().normalized_gradient(&inst.x)?;
    let err = out.result.direction.distance(truth.as_slice());
    let d = &out.diagnostics;
    // Whether the random first axis had the overlap the analysis conditions on.
    let axis_event = d.first_axis.dot(truth.as_slice()).abs() >= 1.0 / (5.0 * (cell.n as f64).sqrt());
    Ok(Outcome {
        success: err <= eps,
        queries: out.result.queries_used,
        error_norm: Some(err),
        depth: Some(d.coherent_depth),
        detail: format!(
            "t={} wraparound={} zero_outcome={} pilot_flipped={} axis_event={axis_event}",
            d.grid_t, d.wraparound, d.zero_outcome, d.pilot_flipped
        ),
    })
}

/// Default grid parameter of the recovery suite.
pub const QFT_DEFAULT_T: usize = 64;

fn qft_trial(config: &ExperimentConfig, cell: &Cell, seed: u64) -> Result<Outcome> {
    let n = cell.n;
    let t = config.caps.grid_t.unwrap_or(QFT_DEFAULT_T);
    // One target per cell; each replica is one measurement of its state.
    let mut cell_rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seeds.base, cell.index, usize::MAX));
    // Keep the target away from 1, where the phase wraps onto 0.
    let upper = 1.0 - 2.0 * (recovery_window(n) + 1) as f64 / t as f64;
    let x: Vec<f64> = (0..n).map(|_| cell_rng.gen_range(0.0..upper.max(0.0))).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state = build_phase_state(&x, t, config.caps.max_amplitudes)?;
    if config.caps.perturbation > 0.0 {
        state = state.perturbed(config.caps.perturbation, &mut rng)?;
    }
    let shots = config.caps.shots.max(1);
    let est = inverse_qft_measure(&state, shots, &mut rng);
    let frac = est.success_fraction(&x);
    let err = est
        .estimates()
        .next()
        .map(|v| v.iter().zip(&x).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt());
    // With one shot per replica the cell success rate is the recovery frequency.
    Ok(Outcome {
        success: frac >= 0.5,
        queries: 0,
        error_norm: err,
        depth: None,
        detail: format!("shots={shots} recovered={frac:.4} m={}", est.m),
    })
}

fn concentration_trial(config: &ExperimentConfig, cell: &Cell, seed: u64) -> Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let report = verify_concentration(cell.n, config.caps.samples, &mut rng)?;
    let detail = report
        .checks
        .iter()
        .map(|c| {
            format!(
                "{:?}: {:.4} [{:.4}, {:.4}] vs {}",
                c.bound.kind, c.empirical, c.interval.lower, c.interval.upper, c.bound.bound
            )
        })
        .collect::<Vec<_>>()
        .join("; ");
    Ok(Outcome {
        success: report.all_satisfied(),
        queries: 0,
        error_norm: None,
        depth: None,
        detail,
    })
}

fn overlap_trial(config: &ExperimentConfig, cell: &Cell, seed: u64) -> Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r = verify_basis_overlap(cell.n, config.caps.samples, &mut rng)?;
    Ok(Outcome {
        success: r.reliable && r.interval.lower > OVERLAP_CONSTANT,
        queries: 0,
        error_norm: None,
        depth: None,
        detail: format!(
            "mean={:.4} ci=[{:.4}, {:.4}] accepted={} ess={:.0}",
            r.conditional_mean, r.interval.lower, r.interval.upper, r.accepted, r.effective_sample_size
        ),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(suite: Suite) -> ExperimentConfig {
        let mut c = ExperimentConfig::for_suite(suite);
        c.seeds.replicas = 3;
        c
    }

    #[test]
    fn grid_enumeration_counts() {
        let mut c = small(Suite::Estimate);
        assert_eq!(cells(&c).len(), 3 * 3 * 2);
        c.grid.n = Some(vec![]);
        assert!(cells(&c).is_empty());
        let c = small(Suite::TestRandomized);
        assert_eq!(cells(&c).len(), 3 * 2 * 2);
        assert!(cells(&c).iter().all(|x| x.delta.is_some() && x.case.is_some()));
    }

    #[test]
    fn seeds_differ_across_trials() {
        let a = derive_seed(1, 0, 0);
        assert_ne!(a, derive_seed(1, 0, 1));
        assert_ne!(a, derive_seed(1, 1, 0));
        assert_ne!(a, derive_seed(2, 0, 0));
        assert_eq!(a, derive_seed(1, 0, 0));
    }

    #[test]
    fn randomized_records_use_879_queries() {
        let mut c = small(Suite::TestRandomized);
        c.grid.n = Some(vec![6, 10]);
        c.grid.epsilon = Some(vec![0.3]);
        let out = run(&c).unwrap();
        assert_eq!(out.records.len(), 2 * 2 * 3);
        assert!(out.records.iter().all(|r| r.queries == 879 && r.status == Status::Ok));
    }

    #[test]
    fn empty_grid_runs_nothing() {
        let mut c = small(Suite::Estimate);
        c.grid.epsilon = Some(vec![]);
        let out = run(&c).unwrap();
        assert!(out.records.is_empty());
        assert!(out.summary.cells.is_empty());
    }

    #[test]
    fn failed_trials_are_recorded() {
        // Out-of-range precision, rejected inside the trial.
        let c = small(Suite::Estimate);
        let cell = Cell {
            index: 0,
            n: 4,
            epsilon: Some(0.9),
            delta: None,
            model: Some(ModelKind::Hyperplane),
            tie_policy: Some("plus".into()),
            case: None,
        };
        let r = run_trial(&c, &cell, 0);
        assert_eq!(r.status, Status::Error);
        assert!(!r.success);
        assert!(r.detail.starts_with("error:"));
    }

    #[test]
    fn dp_trials_are_sound() {
        let mut c = small(Suite::DpSoundness);
        c.seeds.replicas = 40;
        let out = run(&c).unwrap();
        assert!(out.records.iter().all(|r| r.success), "{:?}",
            out.records.iter().find(|r| !r.success));
    }
}
