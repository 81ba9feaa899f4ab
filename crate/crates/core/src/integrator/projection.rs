use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::HybridModel;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectionOptions {
    /// Stop when the stationarity residual drops below this.
    pub tol: f64,
    pub max_newton: usize,
}

impl Default for ProjectionOptions {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            max_newton: 50,
        }
    }
}

/// Closest point to `x_star` on the intersection of the manifolds in `active`.
///
/// Newton iteration on the Lagrange stationarity system
/// `x - x* + sum_j lambda_j grad gamma_j = 0`, `gamma_j(x) = 0`.
pub fn project_to_manifold(
    model: &HybridModel,
    x_star: &[f64],
    active: &[usize],
    opts: &ProjectionOptions,
) -> Result<Vec<f64>> {
    project_with_multipliers(model, x_star, active, opts).map(|(x, _)| x)
}

/// Like [`project_to_manifold`], also returning the multipliers.
pub fn project_with_multipliers(
    model: &HybridModel,
    x_star: &[f64],
    active: &[usize],
    opts: &ProjectionOptions,
) -> Result<(Vec<f64>, Vec<f64>)> {
    model.check_state(x_star)?;
    let n = model.dim();
    let m = active.len();
    let mut x = x_star.to_vec();
    let mut lambda = vec![0.0; m];
    if m == 0 {
        return Ok((x, lambda));
    }
    let mut grads = vec![vec![0.0; n]; m];
    let mut residual = f64::INFINITY;
    for _ in 0..=opts.max_newton {
        for (g, &j) in grads.iter_mut().zip(active) {
            model.switching(j).gradient(&x, g);
        }
        let mut rhs = DVector::<f64>::zeros(n + m);
        for i in 0..n {
            let mut v = x[i] - x_star[i];
            for k in 0..m {
                v += lambda[k] * grads[k][i];
            }
            rhs[i] = v;
        }
        for (k, &j) in active.iter().enumerate() {
            rhs[n + k] = model.gamma(j, &x);
        }
        residual = rhs.amax();
        if !residual.is_finite() {
            return Err(Error::numeric("projection residual is not finite", residual));
        }
        if residual <= opts.tol {
            return Ok((x, lambda));
        }
        let mut jac = DMatrix::<f64>::zeros(n + m, n + m);
        for i in 0..n {
            jac[(i, i)] = 1.0;
        }
        for (k, &j) in active.iter().enumerate() {
            if lambda[k] != 0.0 && !model.switching(j).is_affine() {
                add_hessian(model, j, &x, lambda[k], &mut jac);
            }
            for i in 0..n {
                jac[(i, n + k)] = grads[k][i];
                jac[(n + k, i)] = grads[k][i];
            }
        }
        let Some(delta) = jac.lu().solve(&(-rhs)) else {
            return Err(Error::numeric("projection Jacobian is singular", residual));
        };
        for i in 0..n {
            x[i] += delta[i];
        }
        for k in 0..m {
            lambda[k] += delta[n + k];
        }
    }
    Err(Error::numeric(
        format!("projection did not converge in {} Newton iterations", opts.max_newton),
        residual,
    ))
}

/// Adds `lambda * Hessian(gamma_j)` to the leading block, by central
/// differences of the gradient.
fn add_hessian(model: &HybridModel, j: usize, x: &[f64], lambda: f64, jac: &mut DMatrix<f64>) {
    let n = x.len();
    let sw = model.switching(j);
    let mut xp = x.to_vec();
    let mut gp = vec![0.0; n];
    let mut gm = vec![0.0; n];
    for i in 0..n {
        let h = 1e-5 * x[i].abs().max(1.0);
        xp[i] = x[i] + h;
        sw.gradient(&xp, &mut gp);
        xp[i] = x[i] - h;
        sw.gradient(&xp, &mut gm);
        xp[i] = x[i];
        for r in 0..n {
            jac[(r, i)] += lambda * (gp[r] - gm[r]) / (2.0 * h);
        }
    }
}
