//! Gradient estimation: recover `∇f(x)/‖∇f(x)‖` to precision `ε`.
//!
//! [`estimate_constant`] finds a direction with constant overlap in exactly `n`
//! queries. [`estimate`] rotates that direction onto the first axis and then
//! pins down each ratio `gᵢ/g₁` by doubling a cap and bisecting inside it,
//! for `O(n log(1/ε))` queries in total.

use rand::Rng;
use serde::Serialize;

use crate::comparator::ComparisonOracle;
use crate::dp::Probe;
use crate::error::{invalid, Result};
use crate::geometry::{sample_haar_frame, Reflector, UnitVector};
use crate::testing::{sign_fixed_frame, tilt_direction};

/// Doubling steps allowed per coordinate before the cap is declared saturated.
pub const MAX_CAP_DOUBLINGS: u32 = 60;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoordinateLog {
    /// `+1` or `−1`: orientation chosen for this frame axis.
    pub sign: i8,
    /// Final cap `ℓᵢ` on `√n·|gᵢ/g₁|`.
    pub cap: f64,
    pub doublings: u32,
    /// The doubling loop hit [`MAX_CAP_DOUBLINGS`] without confirming the cap.
    pub saturated: bool,
    /// Estimate of `gᵢ/g₁` in the rotated frame.
    pub alpha: f64,
    pub search_steps: u32,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct StageLog {
    /// Queries spent in the constant-overlap stage.
    pub constant_queries: u64,
    /// Number of Haar axes that were flipped in the constant stage.
    pub constant_flips: usize,
    /// One entry per frame axis `i ≥ 2`; empty for the constant stage alone.
    pub coordinates: Vec<CoordinateLog>,
}

impl StageLog {
    /// `Σ ℓᵢ²`, the quantity whose size bounds the search cost.
    pub fn cap_sum(&self) -> f64 {
        self.coordinates.iter().map(|c| c.cap * c.cap).sum()
    }

    pub fn any_saturated(&self) -> bool {
        self.coordinates.iter().any(|c| c.saturated)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateResult {
    pub direction: UnitVector,
    pub queries_used: u64,
    pub stage_log: StageLog,
}

fn check_common(oracle: &ComparisonOracle, x: &[f64], gamma: f64) -> Result<()> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(invalid("gamma", format!("must be positive, got {gamma}")));
    }
    if oracle.dimension() == 0 || x.is_empty() {
        return Err(invalid("n", "dimension must be positive"));
    }
    Ok(())
}

/// Sign-fixed Haar frame averaged into one direction. Exactly `n` queries.
///
/// With probability at least 2/3 the output satisfies `⟨u, g⟩ ≥ 1/10`.
pub fn estimate_constant<R: Rng + ?Sized>(
    oracle: &ComparisonOracle,
    x: &[f64],
    gamma: f64,
    smoothness: f64,
    rng: &mut R,
) -> Result<EstimateResult> {
    check_common(oracle, x, gamma)?;
    let mut probe = Probe::checked(oracle, x, smoothness)?;
    let start = probe.queries();
    let (u, flips) = constant_stage(&mut probe, gamma, rng);
    let queries = probe.queries() - start;
    Ok(EstimateResult {
        direction: u,
        queries_used: queries,
        stage_log: StageLog {
            constant_queries: queries,
            constant_flips: flips,
            coordinates: Vec::new(),
        },
    })
}

fn constant_stage<R: Rng + ?Sized>(
    probe: &mut Probe<'_>,
    gamma: f64,
    rng: &mut R,
) -> (UnitVector, usize) {
    let n = probe.dimension();
    let delta = gamma / n as f64;
    let frame = sample_haar_frame(n, rng);
    let mut sum = vec![0.0; n];
    let mut flips = 0;
    for i in 0..n {
        let axis = frame.column(i);
        let sign = if probe.ask(&axis, delta).is_at_most() {
            flips += 1;
            -1.0
        } else {
            1.0
        };
        sum.iter_mut().zip(&axis).for_each(|(s, a)| *s += sign * a);
    }
    // Columns are orthonormal, so ‖Σ ±vᵢ‖ = √n and the sum is never zero.
    let u = UnitVector::new(sum).expect("sum of orthonormal columns is nonzero");
    (u, flips)
}

/// Full estimator. On success `‖direction − g‖ ≤ ε`; success has probability
/// at least 2/3, inherited from the constant stage.
pub fn estimate<R: Rng + ?Sized>(
    oracle: &ComparisonOracle,
    x: &[f64],
    epsilon: f64,
    gamma: f64,
    smoothness: f64,
    rng: &mut R,
) -> Result<EstimateResult> {
    if !(epsilon > 0.0 && epsilon < std::f64::consts::FRAC_1_SQRT_2) {
        return Err(invalid(
            "epsilon",
            format!("must lie in (0, 1/sqrt 2), got {epsilon}"),
        ));
    }
    check_common(oracle, x, gamma)?;
    let mut probe = Probe::checked(oracle, x, smoothness)?;
    let start = probe.queries();
    let n = x.len();
    let nf = n as f64;

    if n == 1 {
        let up = !probe.ask(&[1.0], gamma / 2.0).is_at_most();
        let queries = probe.queries() - start;
        return Ok(EstimateResult {
            direction: UnitVector::new(vec![if up { 1.0 } else { -1.0 }])?,
            queries_used: queries,
            stage_log: StageLog {
                constant_queries: queries,
                ..StageLog::default()
            },
        });
    }

    let (u, constant_flips) = constant_stage(&mut probe, gamma, rng);
    let constant_queries = probe.queries() - start;

    let delta_sign = gamma / nf;
    let delta_ratio = epsilon * gamma / (400.0 * nf.sqrt());
    let target_width = epsilon / (4.0 * nf.sqrt());
    let (frame, _) = sign_fixed_frame(&mut probe, Reflector::to_e1(&u), delta_sign);

    let mut direction = vec![0.0; n];
    let mut coordinates = Vec::with_capacity(n - 1);
    for i in 1..n {
        let mut cap = 1.0f64;
        let mut doublings = 0u32;
        let mut saturated = false;
        loop {
            tilt_direction(&frame, i, cap / nf.sqrt(), &mut direction);
            if !probe.ask(&direction, delta_ratio).is_at_most() {
                break;
            }
            cap *= 2.0;
            doublings += 1;
            if doublings >= MAX_CAP_DOUBLINGS {
                saturated = true;
                log::warn!("cap search on axis {i} saturated at {cap}");
                break;
            }
        }
        let mut lo = -cap / nf.sqrt();
        let mut hi = cap / nf.sqrt();
        let mut steps = 0u32;
        while hi - lo >= target_width {
            let mid = 0.5 * (lo + hi);
            tilt_direction(&frame, i, mid, &mut direction);
            if probe.ask(&direction, delta_ratio).is_at_most() {
                lo = mid;
            } else {
                hi = mid;
            }
            steps += 1;
        }
        coordinates.push(CoordinateLog {
            sign: frame.signs()[i] as i8,
            cap,
            doublings,
            saturated,
            alpha: 0.5 * (lo + hi),
            search_steps: steps,
        });
    }

    let mut coords = Vec::with_capacity(n);
    coords.push(1.0);
    coords.extend(coordinates.iter().map(|c| c.alpha));
    frame.to_ambient(&mut coords);
    Ok(EstimateResult {
        direction: UnitVector::new(coords)?,
        queries_used: probe.queries() - start,
        stage_log: StageLog {
            constant_queries,
            constant_flips,
            coordinates,
        },
    })
}
