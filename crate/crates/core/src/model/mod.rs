//! Hybrid models: flow maps, switching functions and region lookup.

mod lie;
mod sign;

pub use lie::{
    dot, lie_derivative, normal_components, normal_projection_matrix, relative_degree, NormalProjectionMatrix,
    RelativeDegree, DEFAULT_LIE_TOLERANCE,
};
pub use sign::{build_sign_matrix, build_sign_matrix_capped, SignMatrix, DEFAULT_MAX_MANIFOLDS};

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Default half-width of the band around a manifold inside which a state is
/// treated as lying on it.
pub const DEFAULT_MANIFOLD_BAND: f64 = 1e-9;

type ScalarFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
type VectorFn = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;

/// A smooth scalar function whose zero set is a switching manifold.
#[derive(Clone)]
pub struct SwitchingFunction {
    name: String,
    value: ScalarFn,
    gradient: Option<VectorFn>,
    band: f64,
    affine: bool,
}

impl SwitchingFunction {
    pub fn new(name: impl Into<String>, value: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            name: name.into(),
            value: Arc::new(value),
            gradient: None,
            band: DEFAULT_MANIFOLD_BAND,
            affine: false,
        }
    }

    /// Declares the function affine in the state, so its Hessian vanishes.
    pub fn affine(mut self) -> Self {
        self.affine = true;
        self
    }

    pub fn is_affine(&self) -> bool {
        self.affine
    }

    /// Supplies an analytic gradient; without one, central differences are used.
    pub fn with_gradient(mut self, gradient: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static) -> Self {
        self.gradient = Some(Arc::new(gradient));
        self
    }

    pub fn with_band(mut self, band: f64) -> Self {
        self.band = band;
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn band(&self) -> f64 {
        self.band
    }

    pub fn has_analytic_gradient(&self) -> bool {
        self.gradient.is_some()
    }

    #[inline]
    pub fn value(&self, x: &[f64]) -> f64 {
        (self.value)(x)
    }

    /// Writes the gradient at `x` into `out`.
    ///
    /// The finite-difference fallback perturbs coordinate `k` by
    /// `max(1e-7, 1e-7 |x_k|)`.
    pub fn gradient(&self, x: &[f64], out: &mut [f64]) {
        if let Some(g) = &self.gradient {
            g(x, out);
            return;
        }
        let mut probe = x.to_vec();
        for k in 0..x.len() {
            let h = (1e-7 * x[k].abs()).max(1e-7);
            probe[k] = x[k] + h;
            let fp = self.value(&probe);
            probe[k] = x[k] - h;
            let fm = self.value(&probe);
            probe[k] = x[k];
            out[k] = (fp - fm) / (2.0 * h);
        }
    }

    pub fn gradient_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; x.len()];
        self.gradient(x, &mut g);
        g
    }
}

impl fmt::Debug for SwitchingFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SwitchingFunction")
            .field("name", &self.name)
            .field("analytic_gradient", &self.gradient.is_some())
            .field("band", &self.band)
            .finish()
    }
}

/// The vector field active inside one region.
#[derive(Clone)]
pub struct FlowMap {
    label: String,
    field: VectorFn,
}

impl FlowMap {
    pub fn new(label: impl Into<String>, field: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static) -> Self {
        Self {
            label: label.into(),
            field: Arc::new(field),
        }
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    #[inline]
    pub fn eval(&self, x: &[f64], out: &mut [f64]) {
        (self.field)(x, out)
    }
}

impl fmt::Debug for FlowMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FlowMap").field("label", &self.label).finish()
    }
}

/// Result of locating a state relative to the switching manifolds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RegionLookup {
    Region(usize),
    /// The state lies within the band of these manifolds.
    OnManifold(Vec<usize>),
}

/// An `n`-dimensional piecewise-smooth system with `p` switching functions
/// and one flow map per sign-matrix column. Immutable once built.
#[derive(Debug, Clone)]
pub struct HybridModel {
    dim: usize,
    switching: Vec<SwitchingFunction>,
    flows: Vec<FlowMap>,
    signs: SignMatrix,
    state_names: Vec<String>,
    clock: Option<usize>,
}

impl HybridModel {
    pub fn builder<S: Into<String>>(state_names: impl IntoIterator<Item = S>) -> ModelBuilder {
        ModelBuilder {
            state_names: state_names.into_iter().map(Into::into).collect(),
            switching: Vec::new(),
            flows: Vec::new(),
            clock: None,
            max_manifolds: DEFAULT_MAX_MANIFOLDS,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_manifolds(&self) -> usize {
        self.switching.len()
    }

    pub fn num_regions(&self) -> usize {
        self.flows.len()
    }

    pub fn sign_matrix(&self) -> &SignMatrix {
        &self.signs
    }

    pub fn switching(&self, j: usize) -> &SwitchingFunction {
        &self.switching[j]
    }

    pub fn switching_functions(&self) -> &[SwitchingFunction] {
        &self.switching
    }

    pub fn flow(&self, i: usize) -> &FlowMap {
        &self.flows[i]
    }

    pub fn state_names(&self) -> &[String] {
        &self.state_names
    }

    /// Index of the adjoined clock state, if the model has one.
    pub fn clock_index(&self) -> Option<usize> {
        self.clock
    }

    pub fn region_label(&self, i: usize) -> &str {
        self.flows[i].label()
    }

    pub fn manifold_name(&self, j: usize) -> &str {
        self.switching[j].name()
    }

    pub fn gamma(&self, j: usize, x: &[f64]) -> f64 {
        self.switching[j].value(x)
    }

    pub fn gammas(&self, x: &[f64]) -> Vec<f64> {
        self.switching.iter().map(|s| s.value(x)).collect()
    }

    pub fn eval_flow(&self, i: usize, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.flows[i].eval(x, &mut out);
        out
    }

    /// Checks the length and finiteness of a state at an API boundary.
    pub fn check_state(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::InvalidArgument(format!(
                "state has {} entries, model dimension is {}",
                x.len(),
                self.dim
            )));
        }
        if let Some(k) = x.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "state entry {} ({}) is not finite",
                k, self.state_names[k]
            )));
        }
        Ok(())
    }

    /// Region containing `x`, or the manifolds whose band contains it.
    pub fn region_index(&self, x: &[f64]) -> RegionLookup {
        let values = self.gammas(x);
        let on: Vec<usize> = values
            .iter()
            .enumerate()
            .filter(|(j, g)| g.abs() <= self.switching[*j].band())
            .map(|(j, _)| j)
            .collect();
        if !on.is_empty() {
            return RegionLookup::OnManifold(on);
        }
        let signs: Vec<i8> = values.iter().map(|&g| if g > 0.0 { 1 } else { -1 }).collect();
        RegionLookup::Region(self.region_from_signs(&signs))
    }

    /// Column index for a full sign pattern. Column `i` has bit `j` set
    /// exactly when switching function `j` is positive.
    pub fn region_from_signs(&self, signs: &[i8]) -> usize {
        debug_assert_eq!(signs.len(), self.num_manifolds());
        let i = signs
            .iter()
            .enumerate()
            .fold(0usize, |acc, (j, &s)| if s > 0 { acc | (1 << j) } else { acc });
        debug_assert!((0..self.num_manifolds()).all(|j| self.signs.get(j, i) == signs[j]));
        i
    }
}

/// Validating builder for [`HybridModel`].
pub struct ModelBuilder {
    state_names: Vec<String>,
    switching: Vec<SwitchingFunction>,
    flows: Vec<FlowMap>,
    clock: Option<usize>,
    max_manifolds: usize,
}

impl ModelBuilder {
    pub fn switching(mut self, s: SwitchingFunction) -> Self {
        self.switching.push(s);
        self
    }

    /// Registers the next flow; flows must be added in sign-matrix column order.
    pub fn flow(mut self, f: FlowMap) -> Self {
        self.flows.push(f);
        self
    }

    pub fn clock(mut self, index: usize) -> Self {
        self.clock = Some(index);
        self
    }

    pub fn max_manifolds(mut self, p_max: usize) -> Self {
        self.max_manifolds = p_max;
        self
    }

    pub fn build(self) -> Result<HybridModel> {
        let dim = self.state_names.len();
        if dim == 0 {
            return Err(Error::InvalidArgument("model needs at least one state".into()));
        }
        let p = self.switching.len();
        let signs = build_sign_matrix_capped(p, self.max_manifolds)?;
        if self.flows.len() != signs.cols() {
            return Err(Error::InvalidArgument(format!(
                "{} switching functions need {} flows, got {}",
                p,
                signs.cols(),
                self.flows.len()
            )));
        }
        if let Some(c) = self.clock {
            if c >= dim {
                return Err(Error::InvalidArgument(format!("clock index {c} out of range")));
            }
        }
        if let Some(s) = self.switching.iter().find(|s| !(s.band() > 0.0)) {
            return Err(Error::InvalidArgument(format!(
                "switching function {} needs a positive band",
                s.name()
            )));
        }
        Ok(HybridModel {
            dim,
            switching: self.switching,
            flows: self.flows,
            signs,
            state_names: self.state_names,
            clock: self.clock,
        })
    }
}
