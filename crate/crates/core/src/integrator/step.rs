use crate::detect::LinearDense;
use crate::error::{Error, Result};
use crate::model::HybridModel;
use crate::sliding::{sliding_field_with_weights, SlidingRegime, WeightOptions};

use super::projection::{project_to_manifold, ProjectionOptions};

/// One explicit midpoint step of region `flow`.
pub fn rk2_step(model: &HybridModel, flow: usize, x: &[f64], dt: f64) -> Result<(Vec<f64>, LinearDense)> {
    let f = model.flow(flow);
    let n = x.len();
    let mut k = vec![0.0; n];
    f.eval(x, &mut k);
    let mid: Vec<f64> = x.iter().zip(&k).map(|(a, b)| a + 0.5 * dt * b).collect();
    f.eval(&mid, &mut k);
    let next: Vec<f64> = x.iter().zip(&k).map(|(a, b)| a + dt * b).collect();
    if next.iter().any(|v| !v.is_finite()) {
        return Err(Error::numeric(
            format!("non-finite state after step in region {}", f.label()),
            f64::NAN,
        ));
    }
    let dense = LinearDense {
        start: x.to_vec(),
        end: next.clone(),
        dt,
    };
    Ok((next, dense))
}

/// Iteration controls for the implicit stages.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StageOptions {
    pub tol: f64,
    /// Fixed-point iterations before switching to Newton.
    pub max_fixed_point: usize,
    pub max_newton: usize,
}

impl Default for StageOptions {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            max_fixed_point: 25,
            max_newton: 20,
        }
    }
}

type Field<'a> = dyn Fn(&[f64]) -> Result<Vec<f64>> + 'a;
type Projector<'a> = dyn Fn(&[f64]) -> Result<Vec<f64>> + 'a;

/// Solves `y = base + c * f(y)` starting from `guess`.
fn solve_stage(field: &Field, base: &[f64], c: f64, guess: Vec<f64>, opts: &StageOptions) -> Result<Vec<f64>> {
    let n = base.len();
    let close = |a: &[f64], b: &[f64]| {
        let scale = 1.0 + b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        a.iter().zip(b).all(|(u, v)| (u - v).abs() <= opts.tol * scale)
    };
    let mut y = guess;
    for _ in 0..opts.max_fixed_point {
        let f = field(&y)?;
        let next: Vec<f64> = base.iter().zip(&f).map(|(b, v)| b + c * v).collect();
        let done = close(&next, &y);
        y = next;
        if done {
            return Ok(y);
        }
    }
    let residual = |y: &[f64]| -> Result<Vec<f64>> {
        let f = field(y)?;
        Ok((0..n).map(|i| y[i] - base[i] - c * f[i]).collect())
    };
    let mut r = residual(&y)?;
    for _ in 0..opts.max_newton {
        let mut jac = nalgebra::DMatrix::<f64>::identity(n, n);
        let f0 = field(&y)?;
        let mut probe = y.clone();
        for i in 0..n {
            let h = 1e-7 * y[i].abs().max(1.0);
            probe[i] = y[i] + h;
            let fp = field(&probe)?;
            probe[i] = y[i];
            for row in 0..n {
                jac[(row, i)] -= c * (fp[row] - f0[row]) / h;
            }
        }
        let rhs = nalgebra::DVector::from_iterator(n, r.iter().map(|v| -v));
        let Some(delta) = jac.lu().solve(&rhs) else {
            break;
        };
        let next: Vec<f64> = y.iter().zip(delta.iter()).map(|(a, d)| a + d).collect();
        let done = close(&next, &y);
        y = next;
        r = residual(&y)?;
        if done {
            return Ok(y);
        }
    }
    Err(Error::numeric(
        "implicit stage did not converge",
        r.iter().fold(0.0f64, |m, v| m.max(v.abs())),
    ))
}

/// Two-stage projected Bathe step for an arbitrary field and projector.
pub fn bathe_step(field: &Field, project: &Projector, x: &[f64], dt: f64, opts: &StageOptions) -> Result<Vec<f64>> {
    let fx = field(x)?;
    let base: Vec<f64> = x.iter().zip(&fx).map(|(a, f)| a + 0.25 * dt * f).collect();
    let guess: Vec<f64> = x.iter().zip(&fx).map(|(a, f)| a + 0.5 * dt * f).collect();
    let y = solve_stage(field, &base, 0.25 * dt, guess, opts)?;
    let y = project(&y)?;
    let base: Vec<f64> = x.iter().zip(&y).map(|(a, b)| (4.0 * b - a) / 3.0).collect();
    let fy = field(&y)?;
    let guess: Vec<f64> = y.iter().zip(&fy).map(|(a, f)| a + 0.5 * dt * f).collect();
    let z = solve_stage(field, &base, dt / 3.0, guess, opts)?;
    let z = project(&z)?;
    if z.iter().any(|v| !v.is_finite()) {
        return Err(Error::numeric("non-finite state after sliding step", f64::NAN));
    }
    Ok(z)
}

/// Bathe step along the sliding field of `regime`, projected onto its active manifolds.
pub fn bathe_sliding_step(
    model: &HybridModel,
    regime: &SlidingRegime,
    x: &[f64],
    dt: f64,
    stage: &StageOptions,
    weights: &WeightOptions,
    projection: &ProjectionOptions,
) -> Result<Vec<f64>> {
    let warm = regime.weights.alphas.as_deref();
    let field = |y: &[f64]| sliding_field_with_weights(model, y, &regime.surface, warm, weights).map(|(f, _)| f);
    let project = |y: &[f64]| project_to_manifold(model, y, regime.surface.active(), projection);
    bathe_step(&field, &project, x, dt, stage)
}

/// Weighted max-norm of a local error estimate.
pub fn error_norm(err: &[f64], a: &[f64], b: &[f64], atol: f64, rtol: f64) -> f64 {
    err.iter()
        .zip(a.iter().zip(b))
        .map(|(e, (u, v))| e.abs() / (atol + rtol * u.abs().max(v.abs())))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{FlowMap, SwitchingFunction};

    fn scalar(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> HybridModel {
        HybridModel::builder(["x"])
            .switching(SwitchingFunction::new("far", |x: &[f64]| x[0] + 1e6))
            .flow(FlowMap::new("q1", move |x: &[f64], d: &mut [f64]| d[0] = f(x[0])))
            .flow(FlowMap::new("q2", |_: &[f64], d: &mut [f64]| d[0] = 0.0))
            .build()
            .unwrap()
    }

    #[test]
    fn rk2_zero_field() {
        let model = scalar(|_| 0.0);
        assert_eq!(rk2_step(&model, 0, &[0.7], 0.3).unwrap().0, vec![0.7]);
    }

    #[test]
    fn rk2_constant_field() {
        let model = scalar(|_| 1.0);
        assert_eq!(rk2_step(&model, 0, &[0.0], 0.1).unwrap().0, vec![0.1]);
    }

    #[test]
    fn rk2_exponential() {
        let model = scalar(|x| x);
        let x = rk2_step(&model, 0, &[1.0], 0.1).unwrap().0[0];
        assert!((x - 1.105).abs() < 1e-15);
        assert!((x - 0.1f64.exp()).abs() < 2e-4);
    }

    #[test]
    fn bathe_constant_tangent_field() {
        let field = |_: &[f64]| Ok(vec![0.0, 2.0, -1.0]);
        let project = |y: &[f64]| Ok(vec![0.0, y[1], y[2]]);
        let z = bathe_step(&field, &project, &[0.0, 1.0, 1.0], 0.5, &StageOptions::default()).unwrap();
        assert!((z[1] - 2.0).abs() < 1e-14 && (z[2] - 0.5).abs() < 1e-14 && z[0] == 0.0);
    }

    #[test]
    fn bathe_stationary_point() {
        let field = |_: &[f64]| Ok(vec![0.0, 0.0]);
        let project = |y: &[f64]| Ok(y.to_vec());
        let z = bathe_step(&field, &project, &[0.0, 3.0], 0.5, &StageOptions::default()).unwrap();
        assert_eq!(z, vec![0.0, 3.0]);
    }

    #[test]
    fn bathe_stiff_stage_uses_newton() {
        // Fixed-point iteration diverges for dt * lambda / 4 > 1.
        let field = |y: &[f64]| Ok(vec![-100.0 * y[0]]);
        let project = |y: &[f64]| Ok(y.to_vec());
        let z = bathe_step(&field, &project, &[1.0], 0.1, &StageOptions::default()).unwrap();
        assert!(z[0].abs() < 1.0);
    }
}
