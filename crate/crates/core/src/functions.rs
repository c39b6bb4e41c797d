//! Smooth test functions with known gradients.
//!
//! A [`FunctionModel`] is the ground truth behind a comparison oracle. Its
//! gradient is reachable only through [`GradientHandle`], which harness code
//! uses to check answers; the algorithms never see it.

use std::sync::atomic::{AtomicU64, Ordering};

use nalgebra::DMatrix;

use crate::error::{invalid, Error, Result};
use crate::geometry::{dot, norm, UnitVector};

/// Radius of the ball on which gradient lower bounds are certified.
pub const DEFAULT_DOMAIN_RADIUS: f64 = 10.0;

const SYMMETRY_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone)]
enum Hessian {
    Diagonal(Vec<f64>),
    Dense(DMatrix<f64>),
}

impl Hessian {
    fn apply(&self, x: &[f64]) -> Vec<f64> {
        match self {
            Hessian::Diagonal(d) => d.iter().zip(x).map(|(a, b)| a * b).collect(),
            Hessian::Dense(m) => {
                let n = x.len();
                (0..n)
                    .map(|i| (0..n).map(|j| m[(i, j)] * x[j]).sum())
                    .collect()
            }
        }
    }

    fn quadratic_form(&self, x: &[f64]) -> f64 {
        match self {
            Hessian::Diagonal(d) => d.iter().zip(x).map(|(a, b)| a * b * b).sum(),
            Hessian::Dense(_) => dot(&self.apply(x), x),
        }
    }
}

#[derive(Debug, Clone)]
enum Form {
    Quadratic {
        hessian: Hessian,
        linear: Vec<f64>,
        constant: f64,
    },
    Hyperplane {
        normal: UnitVector,
        offset: f64,
    },
}

/// An `L`-smooth objective `f: ℝⁿ → ℝ`.
///
/// Immutable after construction apart from an evaluation counter, which the
/// harness uses to audit that every evaluation went through an oracle.
#[derive(Debug)]
pub struct FunctionModel {
    dimension: usize,
    form: Form,
    smoothness: f64,
    grad_lower_bound: f64,
    domain_radius: f64,
    evaluations: AtomicU64,
}

impl FunctionModel {
    pub fn dimension(&self) -> usize {
        self.dimension
    }

    /// Declared Lipschitz constant of the gradient.
    pub fn smoothness(&self) -> f64 {
        self.smoothness
    }

    /// Certified lower bound on `‖∇f‖` over the declared ball. Zero means no
    /// certificate is available on the whole ball; see
    /// [`GradientHandle::gradient_norm`] for point-wise values.
    pub fn grad_lower_bound(&self) -> f64 {
        self.grad_lower_bound
    }

    pub fn domain_radius(&self) -> f64 {
        self.domain_radius
    }

    pub fn in_domain(&self, x: &[f64]) -> bool {
        norm(x) <= self.domain_radius
    }

    pub fn kind(&self) -> &'static str {
        match self.form {
            Form::Quadratic { .. } => "quadratic",
            Form::Hyperplane { .. } => "hyperplane",
        }
    }

    /// Re-declares the ball radius and recomputes the certified bound.
    pub fn with_domain_radius(mut self, radius: f64) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(invalid("radius", format!("must be positive, got {radius}")));
        }
        self.domain_radius = radius;
        self.grad_lower_bound = certified_lower_bound(&self.form, self.smoothness, radius);
        Ok(self)
    }

    /// Function value. Counts as one evaluation.
    pub fn evaluate(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.dimension);
        self.evaluations.fetch_add(1, Ordering::Relaxed);
        match &self.form {
            Form::Quadratic {
                hessian,
                linear,
                constant,
            } => 0.5 * hessian.quadratic_form(x) + dot(linear, x) + constant,
            Form::Hyperplane { normal, offset } => normal.dot(x) + offset,
        }
    }

    /// Total number of [`evaluate`](Self::evaluate) calls so far.
    pub fn evaluations(&self) -> u64 {
        self.evaluations.load(Ordering::Relaxed)
    }

    /// Access to the analytic gradient, for verification only.
    pub fn verification(&self) -> GradientHandle<'_> {
        GradientHandle { model: self }
    }
}

fn certified_lower_bound(form: &Form, smoothness: f64, radius: f64) -> f64 {
    match form {
        // ‖Ax + b‖ ≥ ‖b‖ − ‖A‖‖x‖ on the ball.
        Form::Quadratic { linear, .. } => (norm(linear) - smoothness * radius).max(0.0),
        Form::Hyperplane { .. } => 1.0,
    }
}

/// Harness-side view of the analytic gradient.
#[derive(Debug, Clone, Copy)]
pub struct GradientHandle<'a> {
    model: &'a FunctionModel,
}

impl GradientHandle<'_> {
    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        match &self.model.form {
            Form::Quadratic {
                hessian, linear, ..
            } => hessian
                .apply(x)
                .into_iter()
                .zip(linear)
                .map(|(a, b)| a + b)
                .collect(),
            Form::Hyperplane { normal, .. } => normal.as_slice().to_vec(),
        }
    }

    pub fn gradient_norm(&self, x: &[f64]) -> f64 {
        norm(&self.gradient(x))
    }

    /// `∇f(x)/‖∇f(x)‖`; fails at stationary points.
    pub fn normalized_gradient(&self, x: &[f64]) -> Result<UnitVector> {
        UnitVector::new(self.gradient(x))
    }

    /// Value without touching the evaluation counter.
    pub fn value(&self, x: &[f64]) -> f64 {
        match &self.model.form {
            Form::Quadratic {
                hessian,
                linear,
                constant,
            } => 0.5 * hessian.quadratic_form(x) + dot(linear, x) + constant,
            Form::Hyperplane { normal, offset } => normal.dot(x) + offset,
        }
    }
}

/// `f(x) = ½xᵀAx + bᵀx + c` with `L = ‖A‖₂`.
///
/// Diagonal `A` is stored as a vector so large diagonal instances stay cheap.
pub fn make_quadratic(a: &DMatrix<f64>, b: Vec<f64>, c: f64) -> Result<FunctionModel> {
    let n = b.len();
    if n == 0 {
        return Err(invalid("b", "dimension must be positive"));
    }
    if a.nrows() != n || a.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: if a.nrows() != n { a.nrows() } else { a.ncols() },
        });
    }
    if a.iter().chain(&b).any(|v| !v.is_finite()) || !c.is_finite() {
        return Err(invalid("a", "entries must be finite"));
    }
    let scale = a.amax().max(1.0);
    let mut asym = 0.0f64;
    let mut diagonal = true;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                asym = asym.max((a[(i, j)] - a[(j, i)]).abs());
                diagonal &= a[(i, j)] == 0.0;
            }
        }
    }
    if asym > SYMMETRY_TOLERANCE * scale {
        return Err(Error::NotSymmetric(asym));
    }
    let (hessian, smoothness) = if diagonal {
        let d: Vec<f64> = (0..n).map(|i| a[(i, i)]).collect();
        let l = d.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        (Hessian::Diagonal(d), l)
    } else {
        let sym = (a + a.transpose()) * 0.5;
        let l = sym
            .clone()
            .symmetric_eigenvalues()
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs()));
        (Hessian::Dense(sym), l)
    };
    let form = Form::Quadratic {
        hessian,
        linear: b,
        constant: c,
    };
    Ok(FunctionModel {
        dimension: n,
        grad_lower_bound: certified_lower_bound(&form, smoothness, DEFAULT_DOMAIN_RADIUS),
        form,
        smoothness,
        domain_radius: DEFAULT_DOMAIN_RADIUS,
        evaluations: AtomicU64::new(0),
    })
}

/// The linear function `f(x) = ⟨g, x⟩ + b` with unit `g`.
///
/// Comparing `f(x + y)` with `f(x)` reveals exactly `sgn⟨g, y⟩`, which makes
/// it the natural hard instance for comparison-based algorithms.
#[derive(Debug, Clone, PartialEq)]
pub struct HyperplaneInstance {
    normal: UnitVector,
    offset: f64,
}

/// Builds a hyperplane instance; `g` is renormalized and must be nonzero.
pub fn make_hyperplane(g: &[f64], b: f64) -> Result<HyperplaneInstance> {
    if !b.is_finite() {
        return Err(invalid("b", "offset must be finite"));
    }
    Ok(HyperplaneInstance {
        normal: UnitVector::new(g.to_vec())?,
        offset: b,
    })
}

impl HyperplaneInstance {
    pub fn normal(&self) -> &UnitVector {
        &self.normal
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    pub fn dimension(&self) -> usize {
        self.normal.dimension()
    }

    /// `sgn⟨g, y⟩`, with 0 when the inner product is zero up to the rounding
    /// error of computing it.
    pub fn comparison_sign(&self, y: &[f64]) -> i8 {
        let ip = self.normal.dot(y);
        let magnitude: f64 = self
            .normal
            .as_slice()
            .iter()
            .zip(y)
            .map(|(a, b)| (a * b).abs())
            .sum();
        let tol = 4.0 * f64::EPSILON * magnitude;
        if ip > tol {
            1
        } else if ip < -tol {
            -1
        } else {
            0
        }
    }

    /// Converts to a [`FunctionModel`]. The true smoothness constant is 0; any
    /// positive declared value is valid and only sets the DP step length.
    pub fn into_model(self, declared_smoothness: f64) -> Result<FunctionModel> {
        if !(declared_smoothness > 0.0 && declared_smoothness.is_finite()) {
            return Err(invalid(
                "declared_smoothness",
                format!("must be positive, got {declared_smoothness}"),
            ));
        }
        let form = Form::Hyperplane {
            normal: self.normal,
            offset: self.offset,
        };
        Ok(FunctionModel {
            dimension: match &form {
                Form::Hyperplane { normal, .. } => normal.dimension(),
                Form::Quadratic { .. } => unreachable!(),
            },
            grad_lower_bound: 1.0,
            form,
            smoothness: declared_smoothness,
            domain_radius: DEFAULT_DOMAIN_RADIUS,
            evaluations: AtomicU64::new(0),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn identity_quadratic() {
        let f = make_quadratic(&DMatrix::identity(3, 3), vec![0.0; 3], 0.0).unwrap();
        let x = [1.0, 0.0, 0.0];
        assert_eq!(f.evaluate(&x), 0.5);
        assert_eq!(f.verification().gradient(&x), vec![1.0, 0.0, 0.0]);
        assert_eq!(f.smoothness(), 1.0);
    }

    #[test]
    fn linear_quadratic() {
        let f = make_quadratic(&DMatrix::zeros(2, 2), vec![2.0, 0.0], 0.0).unwrap();
        assert_eq!(f.evaluate(&[3.0, 4.0]), 6.0);
        assert_eq!(f.verification().gradient(&[3.0, 4.0]), vec![2.0, 0.0]);
    }

    #[test]
    fn diagonal_quadratic_smoothness_is_largest_eigenvalue() {
        let a = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 4.0]));
        let f = make_quadratic(&a, vec![0.0; 2], 0.0).unwrap();
        assert_eq!(f.verification().gradient(&[1.0, 1.0]), vec![1.0, 4.0]);
        assert_eq!(f.smoothness(), 4.0);
    }

    #[test]
    fn dense_quadratic_uses_spectral_norm() {
        // [[2,1],[1,2]] has eigenvalues 1 and 3.
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        let f = make_quadratic(&a, vec![0.0; 2], 0.0).unwrap();
        assert!((f.smoothness() - 3.0).abs() < 1e-12);
        assert!(close(&f.verification().gradient(&[1.0, 0.0]), &[2.0, 1.0], 1e-15));
    }

    #[test]
    fn rejects_non_symmetric() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0]);
        assert!(matches!(
            make_quadratic(&a, vec![0.0; 2], 0.0),
            Err(Error::NotSymmetric(_))
        ));
    }

    #[test]
    fn rejects_shape_mismatch() {
        assert!(matches!(
            make_quadratic(&DMatrix::identity(3, 3), vec![0.0; 2], 0.0),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn hyperplane_signs() {
        let h = make_hyperplane(&[1.0, 0.0, 0.0], 0.0).unwrap();
        assert_eq!(h.comparison_sign(&[1.0, -5.0, 3.0]), 1);
        assert_eq!(h.comparison_sign(&[0.0, 7.0, 7.0]), 0);
        let h = make_hyperplane(&[3.0 / 5.0, 4.0 / 5.0], 0.0).unwrap();
        assert_eq!(h.comparison_sign(&[-4.0, 3.0]), 0);
    }

    #[test]
    fn hyperplane_renormalizes_and_rejects_zero() {
        let h = make_hyperplane(&[3.0, 4.0], 1.0).unwrap();
        assert!((h.normal()[0] - 0.6).abs() < 1e-15);
        assert!(matches!(make_hyperplane(&[0.0, 0.0], 0.0), Err(Error::ZeroVector)));
    }

    #[test]
    fn hyperplane_comparisons_ignore_offset() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let a = make_hyperplane(&g, 0.0).unwrap().into_model(1.0).unwrap();
        let b = make_hyperplane(&g, -17.5).unwrap().into_model(1.0).unwrap();
        for _ in 0..200 {
            let x: Vec<f64> = (0..4).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let y: Vec<f64> = (0..4).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let xy: Vec<f64> = x.iter().zip(&y).map(|(p, q)| p + q).collect();
            let sa = a.evaluate(&xy).total_cmp(&a.evaluate(&x));
            let sb = b.evaluate(&xy).total_cmp(&b.evaluate(&x));
            assert_eq!(sa, sb);
        }
    }

    #[test]
    fn verification_does_not_count_evaluations() {
        let f = make_quadratic(&DMatrix::identity(2, 2), vec![1.0, 0.0], 0.0).unwrap();
        f.evaluate(&[0.0, 0.0]);
        let _ = f.verification().gradient(&[0.0, 0.0]);
        let _ = f.verification().value(&[0.0, 0.0]);
        assert_eq!(f.evaluations(), 1);
    }
}
