//! Lie derivatives of switching functions along flow maps.

use super::HybridModel;
use crate::error::{Error, Result};

/// Magnitude below which a Lie derivative counts as zero.
pub const DEFAULT_LIE_TOLERANCE: f64 = 1e-9;

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

fn finite_or_fail(v: f64, what: impl FnOnce() -> String) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::numeric(what(), v))
    }
}

/// `k`-th Lie derivative of switching function `j` along flow `i` at `x`.
///
/// Order 0 is the switching function itself and order 1 is `grad(gamma_j) . f_i`.
/// Higher orders differentiate the previous order along `f_i` with central
/// differences.
pub fn lie_derivative(model: &HybridModel, flow: usize, j: usize, x: &[f64], k: usize) -> Result<f64> {
    let v = lie_unchecked(model, flow, j, x, k);
    finite_or_fail(v, || {
        format!(
            "Lie derivative of order {k} of {} along {} is not finite at {:?}",
            model.manifold_name(j),
            model.region_label(flow),
            x
        )
    })
}

fn lie_unchecked(model: &HybridModel, flow: usize, j: usize, x: &[f64], k: usize) -> f64 {
    match k {
        0 => model.gamma(j, x),
        1 => {
            let g = model.switching(j).gradient_vec(x);
            let f = model.eval_flow(flow, x);
            dot(&g, &f)
        }
        _ => {
            let f = model.eval_flow(flow, x);
            let fnorm = max_abs(&f);
            if fnorm == 0.0 {
                return 0.0;
            }
            let h = 1e-4 * max_abs(x).max(1.0) / fnorm;
            let shifted = |s: f64| -> Vec<f64> { x.iter().zip(&f).map(|(xi, fi)| xi + s * fi).collect() };
            let up = lie_unchecked(model, flow, j, &shifted(h), k - 1);
            let down = lie_unchecked(model, flow, j, &shifted(-h), k - 1);
            (up - down) / (2.0 * h)
        }
    }
}

/// Pointwise relative degree of a switching function along a flow.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RelativeDegree {
    Degree(usize),
    /// Every order up to and including `k_max` vanished.
    ExceedsMax,
}

/// Smallest `k <= k_max` whose Lie derivative is nonzero while all lower
/// orders vanish within `tol`.
pub fn relative_degree(
    model: &HybridModel,
    flow: usize,
    j: usize,
    x: &[f64],
    k_max: usize,
    tol: f64,
) -> Result<RelativeDegree> {
    if k_max < 1 {
        return Err(Error::InvalidArgument("k_max must be at least 1".into()));
    }
    for k in 0..=k_max {
        if lie_derivative(model, flow, j, x, k)?.abs() > tol {
            return Ok(RelativeDegree::Degree(k));
        }
    }
    Ok(RelativeDegree::ExceedsMax)
}

/// First Lie derivatives of every switching function along every flow.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalProjectionMatrix {
    regions: usize,
    manifolds: usize,
    entries: Vec<f64>,
    evaluated_at: Vec<f64>,
}

impl NormalProjectionMatrix {
    /// Normal velocity of flow `i` relative to manifold `j`.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.manifolds + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.manifolds..(i + 1) * self.manifolds]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.regions).map(|i| self.get(i, j)).collect()
    }

    pub fn regions(&self) -> usize {
        self.regions
    }

    pub fn manifolds(&self) -> usize {
        self.manifolds
    }

    pub fn evaluated_at(&self) -> &[f64] {
        &self.evaluated_at
    }
}

/// Matrix of normal projections over all `2^p` flows and `p` manifolds.
pub fn normal_projection_matrix(model: &HybridModel, x: &[f64]) -> Result<NormalProjectionMatrix> {
    let flows: Vec<usize> = (0..model.num_regions()).collect();
    let manifolds: Vec<usize> = (0..model.num_manifolds()).collect();
    let entries = normal_components(model, &flows, &manifolds, x)?;
    Ok(NormalProjectionMatrix {
        regions: flows.len(),
        manifolds: manifolds.len(),
        entries,
        evaluated_at: x.to_vec(),
    })
}

/// Row-major `flows.len() x manifolds.len()` block of first Lie derivatives,
/// evaluating each gradient and each flow once.
pub fn normal_components(model: &HybridModel, flows: &[usize], manifolds: &[usize], x: &[f64]) -> Result<Vec<f64>> {
    let grads: Vec<Vec<f64>> = manifolds.iter().map(|&j| model.switching(j).gradient_vec(x)).collect();
    if let Some(pos) = grads.iter().position(|g| g.iter().any(|v| !v.is_finite())) {
        return Err(Error::numeric(
            format!(
                "gradient of {} is not finite at {:?}",
                model.manifold_name(manifolds[pos]),
                x
            ),
            f64::NAN,
        ));
    }
    let mut out = Vec::with_capacity(flows.len() * manifolds.len());
    for &i in flows {
        let f = model.eval_flow(i, x);
        for (g, &j) in grads.iter().zip(manifolds) {
            let v = dot(g, &f);
            out.push(finite_or_fail(v, || {
                format!(
                    "normal projection of {} on {} is not finite",
                    model.region_label(i),
                    model.manifold_name(j)
                )
            })?);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{FlowMap, SwitchingFunction};

    fn rotation(flow_y: bool) -> HybridModel {
        HybridModel::builder(["x1", "x2"])
            .switching(
                SwitchingFunction::new("g", |x: &[f64]| x[1]).with_gradient(|_: &[f64], g: &mut [f64]| {
                    g[0] = 0.0;
                    g[1] = 1.0;
                }),
            )
            .flow(FlowMap::new("a", move |x: &[f64], o: &mut [f64]| {
                o[0] = x[1];
                o[1] = if flow_y { -x[0] } else { 0.0 };
            }))
            .flow(FlowMap::new("b", |_: &[f64], o: &mut [f64]| o.fill(0.0)))
            .build()
            .unwrap()
    }

    #[test]
    fn first_order_hand_value() {
        let m = rotation(true);
        assert_eq!(lie_derivative(&m, 0, 0, &[1.0, 2.0], 1).unwrap(), -1.0);
    }

    #[test]
    fn zeroth_order_is_value() {
        let m = rotation(true);
        assert_eq!(lie_derivative(&m, 0, 0, &[0.3, -0.7], 0).unwrap(), -0.7);
    }

    #[test]
    fn second_order_of_rotation() {
        // L^2 = d/dx (-x1) . f = -x2
        let m = rotation(true);
        let v = lie_derivative(&m, 0, 0, &[1.0, 2.0], 2).unwrap();
        assert!((v + 2.0).abs() < 1e-6, "{v}");
    }

    #[test]
    fn relative_degree_cases() {
        let m = rotation(true);
        assert_eq!(
            relative_degree(&m, 0, 0, &[1.0, 0.5], 3, 1e-9).unwrap(),
            RelativeDegree::Degree(0)
        );
        assert_eq!(
            relative_degree(&m, 0, 0, &[1.0, 0.0], 3, 1e-9).unwrap(),
            RelativeDegree::Degree(1)
        );
        let m = rotation(false);
        assert_eq!(
            relative_degree(&m, 0, 0, &[1.0, 0.0], 2, 1e-9).unwrap(),
            RelativeDegree::ExceedsMax
        );
    }

    #[test]
    fn opposing_unit_flows() {
        let m = HybridModel::builder(["x"])
            .switching(SwitchingFunction::new("g", |x: &[f64]| x[0]))
            .flow(FlowMap::new("lo", |_: &[f64], o: &mut [f64]| o[0] = 1.0))
            .flow(FlowMap::new("hi", |_: &[f64], o: &mut [f64]| o[0] = -1.0))
            .build()
            .unwrap();
        let f = normal_projection_matrix(&m, &[0.0]).unwrap();
        assert!((f.get(0, 0) - 1.0).abs() < 1e-9);
        assert!((f.get(1, 0) + 1.0).abs() < 1e-9);
    }

    #[test]
    fn non_finite_flow_is_reported() {
        let m = HybridModel::builder(["x"])
            .switching(SwitchingFunction::new("g", |x: &[f64]| x[0]))
            .flow(FlowMap::new("lo", |_: &[f64], o: &mut [f64]| o[0] = f64::NAN))
            .flow(FlowMap::new("hi", |_: &[f64], o: &mut [f64]| o[0] = 1.0))
            .build()
            .unwrap();
        assert!(matches!(
            lie_derivative(&m, 0, 0, &[0.0], 1),
            Err(Error::NumericFailure { .. })
        ));
    }
}
