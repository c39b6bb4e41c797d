//! Statevector simulation of Fourier-transform gradient estimation.
//!
//! Grid states live on `{0, …, T−1}ⁿ` with `T = t + 1`; they are stored densely
//! with coordinate 0 as the most significant digit. The inverse transform of a
//! product state is done one coordinate at a time; anything else goes through
//! axis-wise FFTs over the dense array.

use std::f64::consts::PI;
use std::io::{Read, Write};

use num_complex::Complex64;
use rand::Rng;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::comparator::ComparisonOracle;
use crate::dp::Probe;
use crate::error::{invalid, Error, Result};
use crate::estimation::{EstimateResult, StageLog};
use crate::geometry::{norm, sample_sphere, Reflector, UnitVector};

/// Default limit on the number of amplitudes a simulation may allocate.
pub const DEFAULT_MAX_AMPLITUDES: usize = 1 << 24;

const DUMP_MAGIC: &[u8; 4] = b"CGSV";
const DUMP_VERSION: u32 = 1;

/// Union-bound window `m = ⌈2 + 3n/2⌉` used by the recovery guarantee.
pub fn recovery_window(n: usize) -> usize {
    (2.0 + 1.5 * n as f64).ceil() as usize
}

/// Radius `√n(m+1)/t` within which recovery is guaranteed with probability 2/3.
pub fn recovery_radius(n: usize, t: usize) -> f64 {
    (n as f64).sqrt() * (recovery_window(n) + 1) as f64 / t as f64
}

fn grid_size(n: usize, t: usize, cap: usize) -> Result<usize> {
    if n == 0 {
        return Err(invalid("n", "dimension must be positive"));
    }
    if t == 0 {
        return Err(invalid("t", "grid parameter must be positive"));
    }
    let requested = (t as u128 + 1).checked_pow(n as u32).unwrap_or(u128::MAX);
    if requested > cap as u128 {
        return Err(Error::GridTooLarge { requested, cap });
    }
    Ok(requested as usize)
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    amplitudes: Vec<Complex64>,
    grid_t: usize,
    dimension: usize,
    /// Per-coordinate factors when the state is a product state.
    factors: Option<Vec<Vec<Complex64>>>,
}

impl StateVector {
    /// Dense state from raw amplitudes; must have `(t+1)ⁿ` entries and unit norm.
    pub fn from_amplitudes(amplitudes: Vec<Complex64>, n: usize, t: usize) -> Result<Self> {
        let size = grid_size(n, t, usize::MAX)?;
        if amplitudes.len() != size {
            return Err(Error::DimensionMismatch {
                expected: size,
                actual: amplitudes.len(),
            });
        }
        let state = Self {
            amplitudes,
            grid_t: t,
            dimension: n,
            factors: None,
        };
        let err = (state.norm() - 1.0).abs();
        if err > 1e-10 {
            return Err(invalid("amplitudes", format!("norm differs from 1 by {err:e}")));
        }
        Ok(state)
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn grid_t(&self) -> usize {
        self.grid_t
    }

    /// Points per coordinate, `T = t + 1`.
    pub fn points_per_axis(&self) -> usize {
        self.grid_t + 1
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn is_product(&self) -> bool {
        self.factors.is_some()
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn distance(&self, other: &StateVector) -> f64 {
        self.amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    /// Digits `(j₀, …, j_{n−1})` of a flat index.
    pub fn digits(&self, mut index: usize) -> Vec<usize> {
        let base = self.points_per_axis();
        let mut out = vec![0; self.dimension];
        for d in (0..self.dimension).rev() {
            out[d] = index % base;
            index /= base;
        }
        out
    }

    /// Returns `cos a·ψ + sin a·φ` with `φ` a random unit state orthogonal to
    /// `ψ`, choosing `a` so that the result is at distance exactly `distance`.
    pub fn perturbed<R: Rng + ?Sized>(&self, distance: f64, rng: &mut R) -> Result<StateVector> {
        if !(0.0..=2.0).contains(&distance) {
            return Err(invalid("distance", format!("must lie in [0, 2], got {distance}")));
        }
        let mut phi: Vec<Complex64> = (0..self.amplitudes.len())
            .map(|_| {
                Complex64::new(
                    rng.sample(rand_distr::StandardNormal),
                    rng.sample(rand_distr::StandardNormal),
                )
            })
            .collect();
        let overlap: Complex64 = self
            .amplitudes
            .iter()
            .zip(&phi)
            .map(|(a, p)| a.conj() * p)
            .sum();
        phi.iter_mut()
            .zip(&self.amplitudes)
            .for_each(|(p, a)| *p -= overlap * a);
        let phi_norm = phi.iter().map(|p| p.norm_sqr()).sum::<f64>().sqrt();
        let angle = 2.0 * (distance / 2.0).asin();
        let (s, c) = angle.sin_cos();
        let amplitudes = self
            .amplitudes
            .iter()
            .zip(&phi)
            .map(|(a, p)| a * c + p * (s / phi_norm))
            .collect();
        Ok(StateVector {
            amplitudes,
            grid_t: self.grid_t,
            dimension: self.dimension,
            factors: None,
        })
    }

    /// Writes the state as `CGSV`, version, `n`, `t`, count, then interleaved
    /// little-endian `(re, im)` doubles.
    pub fn write_dump<W: Write>(&self, mut out: W) -> Result<()> {
        out.write_all(DUMP_MAGIC)?;
        out.write_all(&DUMP_VERSION.to_le_bytes())?;
        out.write_all(&(self.dimension as u32).to_le_bytes())?;
        out.write_all(&(self.grid_t as u32).to_le_bytes())?;
        out.write_all(&(self.amplitudes.len() as u64).to_le_bytes())?;
        for a in &self.amplitudes {
            out.write_all(&a.re.to_le_bytes())?;
            out.write_all(&a.im.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_dump<R: Read>(mut input: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        input.read_exact(&mut magic)?;
        if &magic != DUMP_MAGIC {
            return Err(invalid("dump", "bad magic"));
        }
        let mut u32buf = [0u8; 4];
        input.read_exact(&mut u32buf)?;
        let version = u32::from_le_bytes(u32buf);
        if version != DUMP_VERSION {
            return Err(invalid("dump", format!("unsupported version {version}")));
        }
        input.read_exact(&mut u32buf)?;
        let n = u32::from_le_bytes(u32buf) as usize;
        input.read_exact(&mut u32buf)?;
        let t = u32::from_le_bytes(u32buf) as usize;
        let mut u64buf = [0u8; 8];
        input.read_exact(&mut u64buf)?;
        let count = u64::from_le_bytes(u64buf) as usize;
        let expected = grid_size(n, t, usize::MAX)?;
        if count != expected {
            return Err(Error::DimensionMismatch {
                expected,
                actual: count,
            });
        }
        let mut amplitudes = Vec::with_capacity(count);
        let mut f64buf = [0u8; 8];
        for _ in 0..count {
            input.read_exact(&mut f64buf)?;
            let re = f64::from_le_bytes(f64buf);
            input.read_exact(&mut f64buf)?;
            let im = f64::from_le_bytes(f64buf);
            amplitudes.push(Complex64::new(re, im));
        }
        Self::from_amplitudes(amplitudes, n, t)
    }
}

fn phase_factor(alpha: f64, t: usize) -> Vec<Complex64> {
    let big_t = t + 1;
    let scale = 1.0 / (big_t as f64).sqrt();
    (0..big_t)
        .map(|y| Complex64::from_polar(scale, 2.0 * PI * (y as f64 * alpha).fract()))
        .collect()
}

/// The phase state `T^{−n/2} Σ_y e^{2πi⟨y,x⟩}|y⟩` over `y ∈ {0, …, T−1}ⁿ`.
///
/// Any finite `x` is accepted; phases are periodic, so coordinates outside
/// `[0, 1]` alias into it.
pub fn build_phase_state(x: &[f64], t: usize, max_amplitudes: usize) -> Result<StateVector> {
    let n = x.len();
    let size = grid_size(n, t, max_amplitudes)?;
    if x.iter().any(|c| !c.is_finite()) {
        return Err(invalid("x", "coordinates must be finite"));
    }
    let factors: Vec<Vec<Complex64>> = x.iter().map(|&a| phase_factor(a, t)).collect();
    let mut amplitudes = vec![Complex64::new(1.0, 0.0); size];
    let big_t = t + 1;
    let mut stride = size;
    for factor in &factors {
        stride /= big_t;
        for (i, amp) in amplitudes.iter_mut().enumerate() {
            *amp *= factor[(i / stride) % big_t];
        }
    }
    Ok(StateVector {
        amplitudes,
        grid_t: t,
        dimension: n,
        factors: Some(factors),
    })
}

/// `F_T†` on one coordinate: amplitude of `k` is `T^{−1/2} Σ_y ψ_y e^{−2πi yk/T}`.
fn inverse_qft_1d(planner: &mut FftPlanner<f64>, line: &mut [Complex64]) {
    let fft = planner.plan_fft_forward(line.len());
    fft.process(line);
    let scale = 1.0 / (line.len() as f64).sqrt();
    line.iter_mut().for_each(|a| *a *= scale);
}

/// Applies `F†` to every coordinate of a dense state.
pub fn inverse_qft(state: &StateVector) -> StateVector {
    let big_t = state.points_per_axis();
    let mut planner = FftPlanner::new();
    if let Some(factors) = &state.factors {
        let transformed: Vec<Vec<Complex64>> = factors
            .iter()
            .map(|f| {
                let mut line = f.clone();
                inverse_qft_1d(&mut planner, &mut line);
                line
            })
            .collect();
        let mut amplitudes = vec![Complex64::new(1.0, 0.0); state.amplitudes.len()];
        let mut stride = amplitudes.len();
        for factor in &transformed {
            stride /= big_t;
            for (i, amp) in amplitudes.iter_mut().enumerate() {
                *amp *= factor[(i / stride) % big_t];
            }
        }
        return StateVector {
            amplitudes,
            grid_t: state.grid_t,
            dimension: state.dimension,
            factors: Some(transformed),
        };
    }
    let mut amplitudes = state.amplitudes.clone();
    let size = amplitudes.len();
    let mut line = vec![Complex64::new(0.0, 0.0); big_t];
    let mut stride = size;
    for _ in 0..state.dimension {
        stride /= big_t;
        let block = stride * big_t;
        for hi in (0..size).step_by(block) {
            for lo in 0..stride {
                let base = hi + lo;
                for (k, slot) in line.iter_mut().enumerate() {
                    *slot = amplitudes[base + k * stride];
                }
                inverse_qft_1d(&mut planner, &mut line);
                for (k, value) in line.iter().enumerate() {
                    amplitudes[base + k * stride] = *value;
                }
            }
        }
    }
    StateVector {
        amplitudes,
        grid_t: state.grid_t,
        dimension: state.dimension,
        factors: None,
    }
}

/// Measurement distribution of a state in the computational basis.
pub fn probabilities(state: &StateVector) -> Vec<f64> {
    state.amplitudes.iter().map(|a| a.norm_sqr()).collect()
}

fn cumulative(probs: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    probs
        .iter()
        .map(|p| {
            acc += p;
            acc
        })
        .collect()
}

fn sample_index<R: Rng + ?Sized>(cdf: &[f64], rng: &mut R) -> usize {
    let total = *cdf.last().expect("non-empty distribution");
    let u = rng.gen::<f64>() * total;
    cdf.partition_point(|&c| c <= u).min(cdf.len() - 1)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QftEstimate {
    /// Estimate `K/t` from the first shot.
    pub v_hat: Vec<f64>,
    /// Raw outcomes `K ∈ {0, …, T−1}ⁿ`, one per shot.
    pub shot_outcomes: Vec<Vec<usize>>,
    pub m: usize,
    pub grid_t: usize,
}

impl QftEstimate {
    pub fn estimates(&self) -> impl Iterator<Item = Vec<f64>> + '_ {
        let t = self.grid_t as f64;
        self.shot_outcomes
            .iter()
            .map(move |k| k.iter().map(|&c| c as f64 / t).collect())
    }

    /// Fraction of shots with `‖K/t − x‖ ≤ √n(m+1)/t`.
    pub fn success_fraction(&self, x: &[f64]) -> f64 {
        let radius = recovery_radius(x.len(), self.grid_t);
        let hits = self
            .estimates()
            .filter(|v| {
                let d: f64 = v.iter().zip(x).map(|(a, b)| (a - b).powi(2)).sum();
                d.sqrt() <= radius
            })
            .count();
        hits as f64 / self.shot_outcomes.len().max(1) as f64
    }
}

/// Applies `F†` and samples `shots` outcomes. Product states are sampled one
/// coordinate at a time from their 1-D marginals.
pub fn inverse_qft_measure<R: Rng + ?Sized>(
    state: &StateVector,
    shots: usize,
    rng: &mut R,
) -> QftEstimate {
    let transformed = inverse_qft(state);
    let shot_outcomes: Vec<Vec<usize>> = match &transformed.factors {
        Some(factors) => {
            let cdfs: Vec<Vec<f64>> = factors
                .iter()
                .map(|f| cumulative(&f.iter().map(|a| a.norm_sqr()).collect::<Vec<_>>()))
                .collect();
            (0..shots)
                .map(|_| cdfs.iter().map(|cdf| sample_index(cdf, rng)).collect())
                .collect()
        }
        None => {
            let cdf = cumulative(&probabilities(&transformed));
            (0..shots)
                .map(|_| transformed.digits(sample_index(&cdf, rng)))
                .collect()
        }
    };
    let t = state.grid_t as f64;
    let v_hat = shot_outcomes
        .first()
        .map(|k| k.iter().map(|&c| c as f64 / t).collect())
        .unwrap_or_default();
    QftEstimate {
        v_hat,
        shot_outcomes,
        m: recovery_window(state.dimension),
        grid_t: state.grid_t,
    }
}

/// Cyclic distance between outcome `k` and peak location `θ` on `ℤ_T`.
pub fn cyclic_distance(k: usize, theta: f64, period: usize) -> f64 {
    let p = period as f64;
    let d = (k as f64 - theta).rem_euclid(p);
    d.min(p - d)
}

/// How grid points share binary-search work in [`simulate_alg6`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchMode {
    /// One independent search per grid point.
    Reference,
    /// The search depends only on `(y₂, …, yₙ)`; run it once per distinct tail.
    Memoized,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimCaps {
    pub max_amplitudes: usize,
    /// Grid parameter `t`; `None` picks `⌈20n²/ε⌉`, which meets
    /// `2n^{1.5}/t ≤ ε/(10√n)`.
    pub grid_t: Option<usize>,
    /// Phase multiplier `s` in `e^{2πi h(y)·s}`; `None` picks `t/(5√n)`.
    pub phase_scale: Option<f64>,
    pub mode: SearchMode,
    /// Spend one extra query to orient the random first axis along the
    /// gradient before searching.
    pub orientation_pilot: bool,
}

impl Default for SimCaps {
    fn default() -> Self {
        Self {
            max_amplitudes: DEFAULT_MAX_AMPLITUDES,
            grid_t: None,
            phase_scale: None,
            mode: SearchMode::Reference,
            orientation_pilot: true,
        }
    }
}

/// Default grid parameter `⌈20n²/ε⌉`.
pub fn default_grid_t(n: usize, epsilon: f64) -> usize {
    (20.0 * (n * n) as f64 / epsilon).ceil() as usize
}

/// Number of bisection rounds to shrink `[−5n, 5n]` below `ε²/(8πn^{1.5})`.
pub fn coherent_depth(n: usize, epsilon: f64) -> u32 {
    let nf = n as f64;
    let target = epsilon * epsilon / (8.0 * PI * nf.powf(1.5));
    let mut width = 10.0 * nf;
    let mut rounds = 0;
    while width >= target {
        width /= 2.0;
        rounds += 1;
    }
    rounds
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Alg6Diagnostics {
    pub grid_t: usize,
    pub phase_scale: f64,
    /// Bisection rounds per grid point; the coherent query depth.
    pub coherent_depth: u32,
    /// Oracle queries in the classical transcript, pilot included.
    pub transcript_queries: u64,
    /// Grid points whose `⌊h·t²/√n⌋` falls outside `[0, t²]`.
    pub wraparound: u64,
    /// The (possibly flipped) random first axis.
    pub first_axis: UnitVector,
    pub pilot_flipped: bool,
    /// Signed outcome in frame coordinates.
    pub outcome: Vec<i64>,
    /// The outcome was the all-zero vector, so no direction could be formed.
    pub zero_outcome: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Alg6Outcome {
    pub result: EstimateResult,
    pub diagnostics: Alg6Diagnostics,
}

/// Classical transcript of the quantum estimator at tiny `n`.
///
/// For each grid point it bisects for the `k` making `(k, y₂, …, yₙ)` nearly
/// orthogonal to the gradient in a random frame, imprints `h = y₁ − k` as a
/// phase, applies the inverse transform and samples one outcome.
pub fn simulate_alg6<R: Rng + ?Sized>(
    oracle: &ComparisonOracle,
    x: &[f64],
    epsilon: f64,
    gamma: f64,
    smoothness: f64,
    rng: &mut R,
    caps: &SimCaps,
) -> Result<Alg6Outcome> {
    if !(epsilon > 0.0 && epsilon < std::f64::consts::FRAC_1_SQRT_2) {
        return Err(invalid(
            "epsilon",
            format!("must lie in (0, 1/sqrt 2), got {epsilon}"),
        ));
    }
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(invalid("gamma", format!("must be positive, got {gamma}")));
    }
    let n = x.len();
    let nf = n as f64;
    let t = caps.grid_t.unwrap_or_else(|| default_grid_t(n, epsilon));
    let size = grid_size(n, t, caps.max_amplitudes)?;
    let big_t = t + 1;
    let mut probe = Probe::checked(oracle, x, smoothness)?;
    let start = probe.queries();

    let mut v = sample_sphere(n, rng);
    let mut pilot_flipped = false;
    if caps.orientation_pilot {
        let pilot_delta = gamma / (10.0 * nf.sqrt());
        if probe.ask(&v, pilot_delta).is_at_most() {
            v = v.negated();
            pilot_flipped = true;
        }
    }
    let reflector = Reflector::to_e1(&v);

    let delta = gamma * epsilon * epsilon / (48.0 * PI * nf.powi(3));
    let width = epsilon * epsilon / (8.0 * PI * nf.powf(1.5));
    let depth = coherent_depth(n, epsilon);
    let tf = t as f64;

    let mut direction = vec![0.0; n];
    let mut search = |tail: &[usize], probe: &mut Probe<'_>| -> f64 {
        let mut lo = -5.0 * nf;
        let mut hi = 5.0 * nf;
        for _ in 0..depth {
            let k = 0.5 * (lo + hi);
            direction[0] = k;
            for (d, &j) in direction[1..].iter_mut().zip(tail) {
                *d = j as f64 / tf;
            }
            let len = norm(&direction);
            let below = if len == 0.0 {
                true
            } else {
                direction.iter_mut().for_each(|c| *c /= len);
                reflector.apply_in_place(&mut direction);
                probe.ask(&direction, delta).is_at_most()
            };
            if below {
                lo = k;
            } else {
                hi = k;
            }
        }
        debug_assert!(hi - lo < width);
        0.5 * (lo + hi)
    };

    let tails = size / big_t;
    let mut digits = vec![0usize; n.saturating_sub(1)];
    let decode_tail = |mut index: usize, out: &mut [usize]| {
        for d in (0..out.len()).rev() {
            out[d] = index % big_t;
            index /= big_t;
        }
    };
    let mut ks = vec![0.0; size];
    match caps.mode {
        SearchMode::Memoized => {
            for tail in 0..tails {
                decode_tail(tail, &mut digits);
                let k = search(&digits, &mut probe);
                for j0 in 0..big_t {
                    ks[j0 * tails + tail] = k;
                }
            }
        }
        SearchMode::Reference => {
            for (index, slot) in ks.iter_mut().enumerate() {
                decode_tail(index % tails, &mut digits);
                *slot = search(&digits, &mut probe);
            }
        }
    }
    let transcript_queries = probe.queries() - start;

    let phase_scale = caps.phase_scale.unwrap_or(tf / (5.0 * nf.sqrt()));
    let amp = 1.0 / (size as f64).sqrt();
    let kick_scale = tf * tf / nf.sqrt();
    let mut wraparound = 0u64;
    let amplitudes: Vec<Complex64> = ks
        .iter()
        .enumerate()
        .map(|(index, &k)| {
            let h = (index / tails) as f64 / tf - k;
            let kicked = (h * kick_scale).floor();
            if kicked < 0.0 || kicked > tf * tf {
                wraparound += 1;
            }
            Complex64::from_polar(amp, 2.0 * PI * (h * phase_scale).rem_euclid(1.0))
        })
        .collect();
    let state = StateVector {
        amplitudes,
        grid_t: t,
        dimension: n,
        factors: None,
    };
    let measured = inverse_qft_measure(&state, 1, rng);
    let outcome: Vec<i64> = measured.shot_outcomes[0]
        .iter()
        .map(|&k| {
            if 2 * k >= big_t {
                k as i64 - big_t as i64
            } else {
                k as i64
            }
        })
        .collect();
    let mut z: Vec<f64> = outcome.iter().map(|&k| k as f64 / tf).collect();
    reflector.apply_in_place(&mut z);
    let zero_outcome = z.iter().all(|&c| c == 0.0);
    let direction = if zero_outcome {
        v.clone()
    } else {
        UnitVector::new(z)?
    };
    Ok(Alg6Outcome {
        result: EstimateResult {
            direction,
            queries_used: transcript_queries,
            stage_log: StageLog::default(),
        },
        diagnostics: Alg6Diagnostics {
            grid_t: t,
            phase_scale,
            coherent_depth: depth,
            transcript_queries,
            wraparound,
            first_axis: v,
            pilot_flipped,
            outcome,
            zero_outcome,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::comparator::TiePolicy;
    use crate::functions::make_hyperplane;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    #[test]
    fn window_and_radius() {
        assert_eq!(recovery_window(1), 4);
        assert_eq!(recovery_window(2), 5);
        assert!((recovery_radius(2, 64) - 2f64.sqrt() * 6.0 / 64.0).abs() < 1e-15);
    }

    #[test]
    fn zero_phase_is_uniform() {
        let s = build_phase_state(&[0.0, 0.0], 4, DEFAULT_MAX_AMPLITUDES).unwrap();
        for a in s.amplitudes() {
            assert!((a.re - 0.2).abs() < 1e-15 && a.im.abs() < 1e-15);
        }
    }

    #[test]
    fn half_phase_alternates() {
        let s = build_phase_state(&[0.5], 3, DEFAULT_MAX_AMPLITUDES).unwrap();
        let expected = [0.5, -0.5, 0.5, -0.5];
        for (a, e) in s.amplitudes().iter().zip(expected) {
            assert!((a.re - e).abs() < 1e-15 && a.im.abs() < 1e-15);
        }
    }

    #[test]
    fn phase_state_is_normalized() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = [rng.gen::<f64>(), rng.gen::<f64>()];
        let s = build_phase_state(&x, 8, DEFAULT_MAX_AMPLITUDES).unwrap();
        assert!((s.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn oversize_grid_is_rejected() {
        let err = build_phase_state(&[0.1; 4], 100, 1 << 20).unwrap_err();
        assert!(err.to_string().contains("1048576"));
    }

    #[test]
    fn fourier_eigenstate_is_recovered_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let t = 16;
        let x = [3.0 / 17.0, 11.0 / 17.0];
        let s = build_phase_state(&x, t, DEFAULT_MAX_AMPLITUDES).unwrap();
        let est = inverse_qft_measure(&s, 50, &mut rng);
        assert!(est.shot_outcomes.iter().all(|k| k == &vec![3, 11]));
    }

    #[test]
    fn dense_and_product_transforms_agree() {
        let s = build_phase_state(&[0.23, 0.71], 9, DEFAULT_MAX_AMPLITUDES).unwrap();
        let mut dense = s.clone();
        dense.factors = None;
        let a = inverse_qft(&s);
        let b = inverse_qft(&dense);
        assert!(a.distance(&b) < 1e-10);
        assert!((b.norm() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn perturbation_has_requested_distance() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let s = build_phase_state(&[0.3, 0.6], 10, DEFAULT_MAX_AMPLITUDES).unwrap();
        let p = s.perturbed(0.1, &mut rng).unwrap();
        assert!((p.distance(&s) - 0.1).abs() < 1e-12);
        assert!((p.norm() - 1.0).abs() < 1e-12);
        assert!(!p.is_product());
    }

    #[test]
    fn dump_round_trip() {
        let s = build_phase_state(&[0.3, 0.6], 5, DEFAULT_MAX_AMPLITUDES).unwrap();
        let mut buf = Vec::new();
        s.write_dump(&mut buf).unwrap();
        assert_eq!(&buf[..4], b"CGSV");
        assert_eq!(buf.len(), 4 + 4 + 4 + 4 + 8 + 36 * 16);
        let back = StateVector::read_dump(buf.as_slice()).unwrap();
        assert_eq!(back.amplitudes(), s.amplitudes());
        assert!(StateVector::read_dump(&buf[..10]).is_err());
    }

    #[test]
    fn cyclic_distance_wraps() {
        assert_eq!(cyclic_distance(0, 64.5, 65), 0.5);
        assert_eq!(cyclic_distance(3, 1.0, 65), 2.0);
    }

    #[test]
    fn depth_formula() {
        assert_eq!(coherent_depth(2, 0.25), 15);
        let target = 0.0625 / (8.0 * PI * 2f64.powf(1.5));
        assert_eq!(coherent_depth(2, 0.25), (20.0 / target).log2().ceil() as u32);
    }

    #[test]
    fn small_simulation_runs_and_counts() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let model = make_hyperplane(&[0.6, 0.8], 0.0).unwrap().into_model(1.0).unwrap();
        let o = ComparisonOracle::new(Arc::new(model), TiePolicy::AlwaysPlus);
        let caps = SimCaps {
            grid_t: Some(40),
            ..SimCaps::default()
        };
        let out = simulate_alg6(&o, &[0.0, 0.0], 0.25, 1.0, 1.0, &mut rng, &caps).unwrap();
        assert_eq!(out.diagnostics.transcript_queries, o.read_counter());
        assert!((norm(&out.result.direction) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn memoized_mode_matches_reference_state() {
        let model = Arc::new(make_hyperplane(&[0.6, 0.8], 0.0).unwrap().into_model(1.0).unwrap());
        let caps = |mode| SimCaps {
            grid_t: Some(30),
            mode,
            ..SimCaps::default()
        };
        let run = |mode| {
            let o = ComparisonOracle::new(Arc::clone(&model), TiePolicy::AlwaysPlus);
            let mut rng = ChaCha8Rng::seed_from_u64(12);
            simulate_alg6(&o, &[0.0, 0.0], 0.25, 1.0, 1.0, &mut rng, &caps(mode)).unwrap()
        };
        let a = run(SearchMode::Reference);
        let b = run(SearchMode::Memoized);
        assert_eq!(a.diagnostics.outcome, b.diagnostics.outcome);
        assert!(b.diagnostics.transcript_queries < a.diagnostics.transcript_queries);
    }
}
