//! Directions on the sphere, Haar-random frames and orthogonal changes of basis,
//! plus Monte-Carlo checks of the two sphere facts the algorithms lean on:
//! inner-product concentration and constant overlap via basis averaging.

use std::ops::Deref;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;
use statrs::function::gamma::gamma_lr;

use crate::error::{invalid, Error, Result};
use crate::stats::{wilson_interval, Interval, Z_95};

/// Tolerance on `‖coords‖ − 1` after construction.
pub const UNIT_TOLERANCE: f64 = 1e-12;
/// Tolerance on pairwise inner products and column norms of a frame.
pub const FRAME_TOLERANCE: f64 = 1e-10;

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// A point on the unit sphere `S_n ⊂ ℝⁿ`.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct UnitVector(Vec<f64>);

impl UnitVector {
    /// Normalizes `coords`. Rejects empty, zero and non-finite input.
    pub fn new(mut coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(invalid("coords", "empty vector"));
        }
        let len = norm(&coords);
        if !len.is_finite() || len == 0.0 {
            return Err(Error::ZeroVector);
        }
        coords.iter_mut().for_each(|c| *c /= len);
        Ok(Self(coords))
    }

    /// Standard basis vector `e_i` (zero-based index).
    pub fn basis(n: usize, i: usize) -> Self {
        assert!(i < n, "basis index {i} out of range for dimension {n}");
        let mut coords = vec![0.0; n];
        coords[i] = 1.0;
        Self(coords)
    }

    pub fn dimension(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn dot(&self, other: &[f64]) -> f64 {
        dot(&self.0, other)
    }

    /// Euclidean distance to another point.
    pub fn distance(&self, other: &[f64]) -> f64 {
        self.0
            .iter()
            .zip(other)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    pub fn negated(&self) -> Self {
        Self(self.0.iter().map(|c| -c).collect())
    }
}

impl Deref for UnitVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// Uniform sample from `S_n`: a standard Gaussian vector, normalized.
pub fn sample_sphere<R: Rng + ?Sized>(n: usize, rng: &mut R) -> UnitVector {
    assert!(n >= 1, "sphere dimension must be positive");
    loop {
        let coords: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        // Probability zero, but a zero draw has no direction.
        if let Ok(u) = UnitVector::new(coords) {
            return u;
        }
    }
}

/// An orthonormal basis of ℝⁿ stored as the columns of a square matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct OrthonormalFrame {
    columns: DMatrix<f64>,
}

impl OrthonormalFrame {
    /// Wraps a square matrix, checking orthonormality of its columns.
    pub fn from_matrix(columns: DMatrix<f64>) -> Result<Self> {
        if columns.nrows() != columns.ncols() || columns.nrows() == 0 {
            return Err(invalid("columns", "frame matrix must be square and non-empty"));
        }
        let frame = Self { columns };
        let residual = frame.orthonormality_residual();
        if residual > FRAME_TOLERANCE {
            return Err(invalid(
                "columns",
                format!("orthonormality residual {residual:e} exceeds {FRAME_TOLERANCE:e}"),
            ));
        }
        Ok(frame)
    }

    pub fn identity(n: usize) -> Self {
        Self {
            columns: DMatrix::identity(n, n),
        }
    }

    pub fn dimension(&self) -> usize {
        self.columns.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.columns
    }

    pub fn column(&self, i: usize) -> Vec<f64> {
        self.columns.column(i).iter().copied().collect()
    }

    pub fn columns(&self) -> Vec<Vec<f64>> {
        (0..self.dimension()).map(|i| self.column(i)).collect()
    }

    /// `Fᵀx`: coordinates of `x` in this frame.
    pub fn to_frame(&self, x: &[f64]) -> Vec<f64> {
        (0..self.dimension())
            .map(|i| dot(self.columns.column(i).as_slice(), x))
            .collect()
    }

    /// `F c`: the point whose frame coordinates are `c`.
    pub fn from_frame(&self, c: &[f64]) -> Vec<f64> {
        let n = self.dimension();
        let mut out = vec![0.0; n];
        for (j, &cj) in c.iter().enumerate() {
            if cj == 0.0 {
                continue;
            }
            for (o, &m) in out.iter_mut().zip(self.columns.column(j).iter()) {
                *o += cj * m;
            }
        }
        out
    }

    /// `max |FᵀF − I|` over all entries.
    pub fn orthonormality_residual(&self) -> f64 {
        let gram = self.columns.transpose() * &self.columns;
        let n = self.dimension();
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((gram[(i, j)] - target).abs());
            }
        }
        worst
    }
}

/// Haar-distributed orthonormal frame: QR of a Gaussian matrix with the signs of
/// `R`'s diagonal pushed into `Q`. Without the sign fix the law is not Haar.
pub fn sample_haar_frame<R: Rng + ?Sized>(n: usize, rng: &mut R) -> OrthonormalFrame {
    assert!(n >= 1, "frame dimension must be positive");
    let gaussian = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = gaussian.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..n {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    OrthonormalFrame { columns: q }
}

/// Householder reflection `H = I − 2wwᵀ/‖w‖²` that swaps a unit vector `u` with
/// `e₁`. `H` is symmetric and orthogonal, so it is its own inverse and its first
/// column is `u`. Applying it costs `O(n)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Reflector {
    w: Vec<f64>,
    scale: f64,
}

impl Reflector {
    pub fn to_e1(u: &UnitVector) -> Self {
        let n = u.dimension();
        let mut w = u.as_slice().to_vec();
        let tail: f64 = w[1..].iter().map(|c| c * c).sum();
        if tail == 0.0 && w[0] > 0.0 {
            // u = e₁ already.
            return Self {
                w: vec![0.0; n],
                scale: 0.0,
            };
        }
        // w = u − e₁, with the first entry computed without cancellation.
        w[0] = if u[0] > 0.0 { -tail / (1.0 + u[0]) } else { u[0] - 1.0 };
        let wn2 = dot(&w, &w);
        Self {
            w,
            scale: 2.0 / wn2,
        }
    }

    pub fn dimension(&self) -> usize {
        self.w.len()
    }

    /// `H x`. Since `H = Hᵀ`, this maps both ways between frame and ambient
    /// coordinates.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut out = x.to_vec();
        self.apply_in_place(&mut out);
        out
    }

    pub fn apply_in_place(&self, x: &mut [f64]) {
        if self.scale == 0.0 {
            return;
        }
        let c = self.scale * dot(&self.w, x);
        x.iter_mut().zip(&self.w).for_each(|(xi, wi)| *xi -= c * wi);
    }

    /// `H e_i`.
    pub fn column(&self, i: usize) -> Vec<f64> {
        let mut out: Vec<f64> = self.w.iter().map(|wj| -self.scale * self.w[i] * wj).collect();
        out[i] += 1.0;
        out
    }

    pub fn to_frame(&self) -> OrthonormalFrame {
        let n = self.dimension();
        let mut m = DMatrix::zeros(n, n);
        for j in 0..n {
            for (i, v) in self.column(j).into_iter().enumerate() {
                m[(i, j)] = v;
            }
        }
        OrthonormalFrame { columns: m }
    }
}

/// Orthonormal frame whose first column is `u` (Householder completion).
pub fn rotate_to_e1(u: &UnitVector) -> OrthonormalFrame {
    Reflector::to_e1(u).to_frame()
}

/// Which side of a probability bound a concentration check certifies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundKind {
    /// `Pr[|⟨y, x⟩| ≤ scale·‖x‖/√n] ≥ bound`
    WithinAtLeast,
    /// `Pr[|⟨y, x⟩| ≤ scale·‖x‖/√n] ≤ bound`
    WithinAtMost,
    /// `Pr[|⟨y, x⟩| ≥ scale·‖x‖/√n] ≥ bound`
    BeyondAtLeast,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConcentrationBound {
    pub scale: f64,
    pub bound: f64,
    pub kind: BoundKind,
}

/// The three explicit constants of the inner-product concentration lemma.
pub const CONCENTRATION_BOUNDS: [ConcentrationBound; 3] = [
    ConcentrationBound {
        scale: 24.0 / 25.0,
        bound: 3.0 / 5.0,
        kind: BoundKind::WithinAtLeast,
    },
    ConcentrationBound {
        scale: 18.0 / 25.0,
        bound: 11.0 / 20.0,
        kind: BoundKind::WithinAtMost,
    },
    ConcentrationBound {
        scale: 1.0 / 5.0,
        bound: 4.0 / 5.0,
        kind: BoundKind::BeyondAtLeast,
    },
];

#[derive(Debug, Clone, Serialize)]
pub struct ConcentrationCheck {
    pub bound: ConcentrationBound,
    pub hits: u64,
    pub empirical: f64,
    pub interval: Interval,
    /// True when the 95% interval is consistent with the bound.
    pub satisfied: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConcentrationReport {
    pub n: usize,
    pub samples: u64,
    pub checks: Vec<ConcentrationCheck>,
}

impl ConcentrationReport {
    pub fn all_satisfied(&self) -> bool {
        self.checks.iter().all(|c| c.satisfied)
    }
}

/// Monte-Carlo check of the concentration lemma with its stated constants.
pub fn verify_concentration<R: Rng + ?Sized>(
    n: usize,
    samples: u64,
    rng: &mut R,
) -> Result<ConcentrationReport> {
    verify_concentration_with(n, &CONCENTRATION_BOUNDS, samples, rng)
}

/// Like [`verify_concentration`] with caller-chosen thresholds. The lemma is
/// stated for `n ≥ 5` only.
pub fn verify_concentration_with<R: Rng + ?Sized>(
    n: usize,
    bounds: &[ConcentrationBound],
    samples: u64,
    rng: &mut R,
) -> Result<ConcentrationReport> {
    if n < 5 {
        return Err(invalid(
            "n",
            format!("the concentration lemma assumes n >= 5, got {n}"),
        ));
    }
    if samples == 0 {
        return Err(invalid("samples", "need at least one sample"));
    }
    // Any fixed nonzero x works; draw one so the check is not tied to an axis.
    let x: Vec<f64> = (0..n)
        .map(|_| rng.sample::<f64, _>(StandardNormal) * 3.0)
        .collect();
    let x_norm = norm(&x);
    let root_n = (n as f64).sqrt();
    let mut hits = vec![0u64; bounds.len()];
    for _ in 0..samples {
        let y = sample_sphere(n, rng);
        let ip = y.dot(&x).abs();
        for (h, b) in hits.iter_mut().zip(bounds) {
            let threshold = b.scale * x_norm / root_n;
            let hit = match b.kind {
                BoundKind::WithinAtLeast | BoundKind::WithinAtMost => ip <= threshold,
                BoundKind::BeyondAtLeast => ip >= threshold,
            };
            *h += u64::from(hit);
        }
    }
    let checks = bounds
        .iter()
        .zip(hits)
        .map(|(b, h)| {
            let interval = wilson_interval(h, samples);
            let satisfied = match b.kind {
                BoundKind::WithinAtLeast | BoundKind::BeyondAtLeast => interval.upper >= b.bound,
                BoundKind::WithinAtMost => interval.lower <= b.bound,
            };
            ConcentrationCheck {
                bound: *b,
                hits: h,
                empirical: h as f64 / samples as f64,
                interval,
                satisfied,
            }
        })
        .collect();
    Ok(ConcentrationReport { n, samples, checks })
}

/// Smallest dimension for which the basis-averaging constant 0.7 is claimed.
pub const OVERLAP_MIN_N: usize = 500;
/// Claimed lower bound on `E[W_n | E_n]`.
pub const OVERLAP_CONSTANT: f64 = 0.7;

#[derive(Debug, Clone, Serialize)]
pub struct OverlapReport {
    pub n: usize,
    pub proposals: u64,
    pub accepted: u64,
    pub acceptance_rate: f64,
    /// Self-normalized importance estimate of `E[W_n | E_n]`.
    pub conditional_mean: f64,
    pub interval: Interval,
    pub effective_sample_size: f64,
    /// Mean of `W_n` after flipping every negative coordinate, i.e. the
    /// sign-fixed average without conditioning. Report only.
    pub sign_flipped_mean: f64,
    /// False when the effective sample size is too small to trust the interval.
    pub reliable: bool,
    pub note: Option<String>,
}

/// Estimates `E[W_n | E_n]` where `X = Uᵀv` for a Haar frame `U`,
/// `W_n = Σ X_i / √n` and `E_n = {X_i ≥ −1/n for all i}`.
///
/// `X` is uniform on the sphere, and `E_n` has probability around `e^{−0.66 n}`,
/// so plain rejection is hopeless at `n = 500`. Proposals are directions of a
/// Gaussian truncated to the box `{z_i ≥ −1/√n}`; the ones landing in `E_n` are
/// kept and reweighted by the exact ratio of the uniform law to the proposal
/// law on directions, `1 / P_χ²(n)(r_max²)`, with `r_max` the largest radius at
/// which the ray stays in the box. The estimate is unbiased in the
/// self-normalized sense and samples are independent.
pub fn verify_basis_overlap<R: Rng + ?Sized>(
    n: usize,
    target_accepted: u64,
    rng: &mut R,
) -> Result<OverlapReport> {
    if n < 3 {
        return Err(invalid("n", format!("basis averaging needs n >= 3, got {n}")));
    }
    if target_accepted == 0 {
        return Err(invalid("target_accepted", "need at least one accepted sample"));
    }
    let nf = n as f64;
    let root_n = nf.sqrt();
    let box_floor = 1.0 / root_n;
    let cone_floor = 1.0 / nf;
    let max_proposals = target_accepted.saturating_mul(50);

    let mut proposals = 0u64;
    let mut accepted = 0u64;
    let mut sw = 0.0;
    let mut sw2 = 0.0;
    let mut swx = 0.0;
    let mut sw2x = 0.0;
    let mut sw2x2 = 0.0;
    let mut flipped_sum = 0.0;
    let mut z = vec![0.0; n];

    while accepted < target_accepted && proposals < max_proposals {
        proposals += 1;
        for zi in z.iter_mut() {
            *zi = loop {
                let g: f64 = rng.sample(StandardNormal);
                if g >= -box_floor {
                    break g;
                }
            };
        }
        let r = norm(&z);
        let most_negative = z.iter().fold(0.0f64, |m, &zi| m.max(-zi)) / r;
        if most_negative > cone_floor {
            continue;
        }
        accepted += 1;
        let w_n = z.iter().sum::<f64>() / (r * root_n);
        flipped_sum += z.iter().map(|zi| zi.abs()).sum::<f64>() / (r * root_n);
        let weight = if most_negative == 0.0 {
            1.0
        } else {
            let r_max = box_floor / most_negative;
            1.0 / gamma_lr(nf / 2.0, r_max * r_max / 2.0)
        };
        sw += weight;
        sw2 += weight * weight;
        swx += weight * w_n;
        sw2x += weight * weight * w_n;
        sw2x2 += weight * weight * w_n * w_n;
    }

    if accepted == 0 {
        return Ok(OverlapReport {
            n,
            proposals,
            accepted,
            acceptance_rate: 0.0,
            conditional_mean: f64::NAN,
            interval: Interval {
                lower: f64::NAN,
                upper: f64::NAN,
            },
            effective_sample_size: 0.0,
            sign_flipped_mean: f64::NAN,
            reliable: false,
            note: Some("no proposal landed in the conditioning event".into()),
        });
    }

    let mean = swx / sw;
    // Delta-method variance of the self-normalized estimator:
    // Σ w²(W − μ)² / (Σ w)².
    let var = ((sw2x2 - 2.0 * mean * sw2x + mean * mean * sw2) / (sw * sw)).max(0.0);
    let se = var.sqrt();
    let ess = sw * sw / sw2;
    let reliable = ess >= 1000.0;
    let note = (!reliable).then(|| {
        format!("effective sample size {ess:.0} is below 1000; interval is unreliable")
    });
    Ok(OverlapReport {
        n,
        proposals,
        accepted,
        acceptance_rate: accepted as f64 / proposals as f64,
        conditional_mean: mean,
        interval: Interval {
            lower: mean - Z_95 * se,
            upper: mean + Z_95 * se,
        },
        effective_sample_size: ess,
        sign_flipped_mean: flipped_sum / accepted as f64,
        reliable,
        note,
    })
}
