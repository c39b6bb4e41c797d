//! Random problem instances with a prescribed gradient direction.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid, Result};
use crate::experiments::config::{ModelKind, Placement, PromiseCase};
use crate::functions::{make_hyperplane, make_quadratic, FunctionModel};
use crate::geometry::{norm, sample_sphere, Reflector, UnitVector};

/// A model together with the query point and the `γ` handed to the algorithms.
#[derive(Debug, Clone)]
pub struct Instance {
    pub model: Arc<FunctionModel>,
    pub x: Vec<f64>,
    pub gamma: f64,
}

/// Builds a model whose gradient at the returned point is a positive multiple
/// of `g`.
///
/// Hyperplanes use `x = 0`, `γ = 1` and a declared `L = 1`. Quadratics draw a
/// diagonal Hessian with entries in `[0.5, 2]`, a point in the unit ball and a
/// gradient norm `c ∈ [1, 3]`, then solve for the linear term; `γ = c/2`.
pub fn model_with_gradient<R: Rng + ?Sized>(
    kind: ModelKind,
    g: &UnitVector,
    rng: &mut R,
) -> Result<Instance> {
    let n = g.dimension();
    match kind {
        ModelKind::Hyperplane => Ok(Instance {
            model: Arc::new(make_hyperplane(g.as_slice(), 0.0)?.into_model(1.0)?),
            x: vec![0.0; n],
            gamma: 1.0,
        }),
        ModelKind::Quadratic => {
            let diag: Vec<f64> = (0..n).map(|_| rng.gen_range(0.5..=2.0)).collect();
            let radius = rng.gen::<f64>().powf(1.0 / n as f64);
            let x: Vec<f64> = sample_sphere(n, rng)
                .into_inner()
                .into_iter()
                .map(|c| c * radius)
                .collect();
            let scale = rng.gen_range(1.0..=3.0);
            let b: Vec<f64> = (0..n)
                .map(|i| scale * g.as_slice()[i] - diag[i] * x[i])
                .collect();
            let a = DMatrix::from_diagonal(&DVector::from_vec(diag));
            let offset = rng.gen_range(-1.0..=1.0);
            Ok(Instance {
                model: Arc::new(make_quadratic(&a, b, offset)?),
                x,
                gamma: 0.5 * scale,
            })
        }
    }
}

/// Unit vector at distance `d` from `v` along the unit direction `w ⟂ v`.
pub fn at_distance(v: &UnitVector, w: &[f64], d: f64) -> Result<UnitVector> {
    let theta = 2.0 * (0.5 * d).asin();
    let (s, c) = theta.sin_cos();
    UnitVector::new(
        v.as_slice()
            .iter()
            .zip(w)
            .map(|(a, b)| c * a + s * b)
            .collect(),
    )
}

/// Random unit vector orthogonal to `v`.
pub fn orthogonal_direction<R: Rng + ?Sized>(v: &UnitVector, rng: &mut R) -> Result<UnitVector> {
    loop {
        let mut w: Vec<f64> = (0..v.dimension())
            .map(|_| rng.sample::<f64, _>(StandardNormal))
            .collect();
        let p = v.dot(&w);
        w.iter_mut().zip(v.as_slice()).for_each(|(a, b)| *a -= p * b);
        // Second pass keeps the residual overlap at rounding level.
        let p = v.dot(&w);
        w.iter_mut().zip(v.as_slice()).for_each(|(a, b)| *a -= p * b);
        if norm(&w) > 1e-8 {
            return UnitVector::new(w);
        }
    }
}

/// Flavor of a generated promise instance, recorded in the run detail.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Flavor {
    Boundary,
    Uniform,
    /// The deviation from `v` lies along one axis of the reflector frame of `v`.
    Sparse,
    /// NO instance with `g ⟂ v`.
    Orthogonal,
}

impl Flavor {
    pub fn name(self) -> &'static str {
        match self {
            Flavor::Boundary => "boundary",
            Flavor::Uniform => "uniform",
            Flavor::Sparse => "sparse",
            Flavor::Orthogonal => "orthogonal",
        }
    }
}

#[derive(Debug, Clone)]
pub struct PromiseInstance {
    pub instance: Instance,
    pub v: UnitVector,
    /// Exact `‖∇f(x)/‖∇f(x)‖ − v‖`, recomputed from the analytic gradient.
    pub distance: f64,
    pub flavor: Flavor,
}

const NO_MARGIN: f64 = 1e-6;

/// Draws a testing instance on the requested side of the promise:
/// `‖g − v‖ ≤ ε` for YES and `‖g − v‖ ∈ (2ε, √2]` for NO.
pub fn promise_instance<R: Rng + ?Sized>(
    n: usize,
    epsilon: f64,
    case: PromiseCase,
    kind: ModelKind,
    placement: Placement,
    rng: &mut R,
) -> Result<PromiseInstance> {
    if n < 2 {
        return Err(invalid("n", "promise instances need n >= 2"));
    }
    let v = sample_sphere(n, rng);
    let yes_edge = epsilon * (1.0 - 1e-9);
    let no_floor = 2.0 * epsilon * (1.0 + NO_MARGIN);
    let root2 = std::f64::consts::SQRT_2;
    let flavor = match placement {
        Placement::Boundary => Flavor::Boundary,
        Placement::Mixed => match rng.gen_range(0..4) {
            0 => Flavor::Boundary,
            1 => Flavor::Sparse,
            2 if case == PromiseCase::No => Flavor::Orthogonal,
            _ => Flavor::Uniform,
        },
    };
    let d = match (flavor, case) {
        (Flavor::Orthogonal, _) => root2,
        (Flavor::Boundary, PromiseCase::Yes) => yes_edge,
        (Flavor::Boundary, PromiseCase::No) => no_floor,
        (_, PromiseCase::Yes) => rng.gen_range(0.0..=yes_edge),
        (_, PromiseCase::No) => rng.gen_range(no_floor..=root2),
    };
    let w = if flavor == Flavor::Sparse {
        let axis = rng.gen_range(1..n);
        let sign = if rng.gen::<bool>() { 1.0 } else { -1.0 };
        Reflector::to_e1(&v)
            .column(axis)
            .into_iter()
            .map(|c| sign * c)
            .collect()
    } else {
        orthogonal_direction(&v, rng)?.into_inner()
    };
    let g = at_distance(&v, &w, d)?;
    let instance = model_with_gradient(kind, &g, rng)?;
    let actual = instance
        .model
        .verification()
        .normalized_gradient(&instance.x)?
        .distance(v.as_slice());
    let valid = match case {
        PromiseCase::Yes => actual <= epsilon,
        PromiseCase::No => actual > 2.0 * epsilon && actual <= root2 + 1e-12,
    };
    if !valid {
        return Err(invalid(
            "instance",
            format!("generated distance {actual} violates the {} promise", case.name()),
        ));
    }
    Ok(PromiseInstance {
        instance,
        v,
        distance: actual,
        flavor,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn gradient_direction_is_prescribed() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = sample_sphere(7, &mut rng);
        for kind in [ModelKind::Hyperplane, ModelKind::Quadratic] {
            let inst = model_with_gradient(kind, &g, &mut rng).unwrap();
            let h = inst.model.verification();
            assert!(h.normalized_gradient(&inst.x).unwrap().distance(g.as_slice()) < 1e-12);
            assert!(h.gradient_norm(&inst.x) >= inst.gamma);
        }
    }

    #[test]
    fn promise_sides_hold() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for &placement in &[Placement::Boundary, Placement::Mixed] {
            for _ in 0..50 {
                let yes = promise_instance(
                    12,
                    0.2,
                    PromiseCase::Yes,
                    ModelKind::Quadratic,
                    placement,
                    &mut rng,
                )
                .unwrap();
                assert!(yes.distance <= 0.2);
                let no = promise_instance(
                    12,
                    0.2,
                    PromiseCase::No,
                    ModelKind::Hyperplane,
                    placement,
                    &mut rng,
                )
                .unwrap();
                assert!(no.distance > 0.4 && no.distance <= std::f64::consts::SQRT_2 + 1e-12);
            }
        }
    }

    #[test]
    fn boundary_distances_are_tight() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let p = promise_instance(
            30,
            0.1,
            PromiseCase::Yes,
            ModelKind::Hyperplane,
            Placement::Boundary,
            &mut rng,
        )
        .unwrap();
        assert!((p.distance - 0.1).abs() < 1e-8);
    }
}
