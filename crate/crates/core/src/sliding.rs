//! Filippov sliding dynamics on one manifold or on an intersection of several.
//!
//! Sliding on the active set `J` mixes the `2^|J|` flows bordering the
//! `J`-intersection. Flow `c` of that local family lies on the negative side
//! of the `k`-th active manifold when bit `k` of `c` is clear, matching the
//! column order of the sign matrix.

use crate::detect::{self, ModeChoice};
use crate::error::{Error, Result};
use crate::model::{dot, normal_components, HybridModel};

/// Tolerances and iteration caps for the weight solvers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightOptions {
    /// Tangency residual target, scaled by the largest normal component.
    pub eps_slide: f64,
    /// Smallest admissible `|W1 - W2|` or kappa denominator.
    pub eps_den: f64,
    /// Gauss-Seidel sweep cap.
    pub max_sweeps: usize,
    /// Normal components below this magnitude count as zero.
    pub eps_lie: f64,
    /// Kappa threshold slack for declaring an exit.
    pub eps_exit: f64,
}

impl Default for WeightOptions {
    fn default() -> Self {
        Self {
            eps_slide: 1e-12,
            eps_den: 1e-15,
            max_sweeps: 200,
            eps_lie: 1e-9,
            eps_exit: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightMethod {
    Alpha,
    Kappa,
    Newton,
}

/// Convex weights over the flows adjacent to an active set.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvexWeights {
    pub weights: Vec<f64>,
    pub method: WeightMethod,
    pub alphas: Option<Vec<f64>>,
    pub kappas: Option<Vec<f64>>,
    /// Largest scaled tangency residual of the mixed field.
    pub residual: f64,
}

impl ConvexWeights {
    pub fn sum(&self) -> f64 {
        self.weights.iter().sum()
    }
}

/// An intersection of active manifolds together with the frozen signs of
/// every inactive manifold.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SlidingSurface {
    active: Vec<usize>,
    sides: Vec<i8>,
    adjacent: Vec<usize>,
}

impl SlidingSurface {
    /// `sides` has one entry per manifold; entries of active manifolds are ignored.
    pub fn new(model: &HybridModel, active: &[usize], sides: &[i8]) -> Result<Self> {
        let p = model.num_manifolds();
        if active.is_empty() {
            return Err(Error::InvalidArgument(
                "sliding needs at least one active manifold".into(),
            ));
        }
        if sides.len() != p {
            return Err(Error::InvalidArgument(format!(
                "expected {p} side signs, got {}",
                sides.len()
            )));
        }
        let mut active = active.to_vec();
        active.sort_unstable();
        active.dedup();
        if active.iter().any(|&j| j >= p) {
            return Err(Error::InvalidArgument("active manifold index out of range".into()));
        }
        let mut frozen = vec![0i8; p];
        for j in 0..p {
            if !active.contains(&j) {
                if sides[j] == 0 {
                    return Err(Error::InvalidArgument(format!(
                        "inactive manifold {} needs a side",
                        model.manifold_name(j)
                    )));
                }
                frozen[j] = sides[j].signum();
            }
        }
        let adjacent = (0..1usize << active.len())
            .map(|c| {
                let mut signs = frozen.clone();
                for (k, &j) in active.iter().enumerate() {
                    signs[j] = local_sign(k, c);
                }
                model.region_from_signs(&signs)
            })
            .collect();
        Ok(Self {
            active,
            sides: frozen,
            adjacent,
        })
    }

    pub fn active(&self) -> &[usize] {
        &self.active
    }

    /// Signs of all manifolds; zero for active ones.
    pub fn sides(&self) -> &[i8] {
        &self.sides
    }

    /// Regions bordering the intersection, in local column order.
    pub fn adjacent_flows(&self) -> &[usize] {
        &self.adjacent
    }

    pub fn is_active(&self, j: usize) -> bool {
        self.active.contains(&j)
    }

    /// Pseudo-mode label such as `slide{b}[q3,q2]`.
    pub fn descriptor(&self, model: &HybridModel) -> String {
        let names: Vec<&str> = self.active.iter().map(|&j| model.manifold_name(j)).collect();
        let regions: Vec<&str> = self.adjacent.iter().map(|&i| model.region_label(i)).collect();
        format!("slide{{{}}}[{}]", names.join(","), regions.join(","))
    }

    /// Row-major `2^|J| x |J|` normal components at `x`.
    pub fn normals(&self, model: &HybridModel, x: &[f64]) -> Result<NormalBlock> {
        let values = normal_components(model, &self.adjacent, &self.active, x)?;
        Ok(NormalBlock::new(self.active.len(), values))
    }
}

/// Sign of the `k`-th active manifold for local flow `c`.
#[inline]
pub fn local_sign(k: usize, c: usize) -> i8 {
    if (c >> k) & 1 == 1 {
        1
    } else {
        -1
    }
}

/// Normal components `L[c][k]` of the adjacent flows on the active manifolds.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalBlock {
    m: usize,
    values: Vec<f64>,
}

impl NormalBlock {
    pub fn new(m: usize, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), m << m, "normal block must be 2^m x m");
        Self { m, values }
    }

    pub fn manifolds(&self) -> usize {
        self.m
    }

    pub fn flows(&self) -> usize {
        1 << self.m
    }

    #[inline]
    pub fn get(&self, c: usize, k: usize) -> f64 {
        self.values[c * self.m + k]
    }

    fn scale(&self) -> f64 {
        self.values.iter().fold(1.0f64, |s, v| s.max(v.abs()))
    }

    /// `-Psi * L`: positive when flow `c` points toward manifold `k`.
    #[inline]
    pub fn margin(&self, c: usize, k: usize) -> f64 {
        -f64::from(local_sign(k, c)) * self.get(c, k)
    }

    /// Every adjacent flow points strictly toward every active manifold.
    pub fn is_attractive(&self, eps_lie: f64) -> bool {
        (0..self.flows()).all(|c| (0..self.m).all(|k| self.margin(c, k) > eps_lie))
    }

    /// Flow `c` points strictly away from every active manifold.
    pub fn points_away(&self, c: usize, eps_lie: f64) -> bool {
        (0..self.m).all(|k| self.margin(c, k) < -eps_lie)
    }

    /// Largest scaled tangency residual of the mixture `weights`.
    pub fn residual(&self, weights: &[f64]) -> f64 {
        let scale = self.scale();
        (0..self.m)
            .map(|k| {
                let r: f64 = (0..self.flows()).map(|c| weights[c] * self.get(c, k)).sum();
                r.abs() / scale
            })
            .fold(0.0, f64::max)
    }
}

/// Product weights `prod_k (1 + 2 Psi alpha_k - Psi) / 2`.
pub fn product_weights(alphas: &[f64]) -> Vec<f64> {
    let m = alphas.len();
    (0..1usize << m)
        .map(|c| (0..m).map(|k| factor(alphas[k], local_sign(k, c))).product())
        .collect()
}

#[inline]
fn factor(alpha: f64, sign: i8) -> f64 {
    if sign > 0 {
        alpha
    } else {
        1.0 - alpha
    }
}

/// Product of the factors of flow `c` over every manifold except `skip`.
fn partial_product(alphas: &[f64], c: usize, skip: usize) -> f64 {
    (0..alphas.len())
        .filter(|&k| k != skip)
        .map(|k| factor(alphas[k], local_sign(k, c)))
        .product()
}

/// Gauss-Seidel sweeps of `alpha_k <- W1 / (W1 - W2)`, clamped to `[0, 1]`.
///
/// Returns the last iterate and its residual; convergence is left to the caller.
fn alpha_sweeps(block: &NormalBlock, start: Option<&[f64]>, opts: &WeightOptions) -> Result<(Vec<f64>, f64)> {
    let m = block.manifolds();
    let mut alphas = match start {
        Some(a) if a.len() == m => a.iter().map(|v| v.clamp(0.0, 1.0)).collect(),
        _ => vec![0.5; m],
    };
    let tol = opts.eps_slide;
    let mut residual = block.residual(&product_weights(&alphas));
    if residual <= tol {
        return Ok((alphas, residual));
    }
    for _ in 0..opts.max_sweeps {
        for k in 0..m {
            let (mut w1, mut w2) = (0.0, 0.0);
            for c in 0..block.flows() {
                let term = partial_product(&alphas, c, k) * block.get(c, k);
                if local_sign(k, c) < 0 {
                    w1 += term;
                } else {
                    w2 += term;
                }
            }
            let den = w1 - w2;
            if den.abs() < opts.eps_den {
                return Err(Error::numeric(
                    format!("alpha denominator |W1 - W2| = {:.3e} on active manifold {k}", den.abs()),
                    residual,
                ));
            }
            alphas[k] = (w1 / den).clamp(0.0, 1.0);
        }
        residual = block.residual(&product_weights(&alphas));
        if residual <= tol {
            break;
        }
    }
    Ok((alphas, residual))
}

/// Damped Newton on the tangency residual in the alpha coordinates.
fn alpha_newton(block: &NormalBlock, start: &[f64], opts: &WeightOptions) -> (Vec<f64>, f64) {
    let m = block.manifolds();
    let n = block.flows();
    let mut alphas = start.to_vec();
    let eval = |a: &[f64]| -> Vec<f64> {
        let w = product_weights(a);
        (0..m).map(|k| (0..n).map(|c| w[c] * block.get(c, k)).sum()).collect()
    };
    let norm = |r: &[f64]| r.iter().fold(0.0f64, |s, v| s.max(v.abs()));
    let mut r = eval(&alphas);
    for _ in 0..50 {
        if block.residual(&product_weights(&alphas)) <= opts.eps_slide {
            break;
        }
        let mut jac = nalgebra::DMatrix::<f64>::zeros(m, m);
        for l in 0..m {
            for c in 0..n {
                let d = f64::from(local_sign(l, c)) * partial_product(&alphas, c, l);
                for k in 0..m {
                    jac[(k, l)] += d * block.get(c, k);
                }
            }
        }
        let rhs = nalgebra::DVector::from_iterator(m, r.iter().map(|v| -v));
        let Some(step) = jac.lu().solve(&rhs) else { break };
        let base = norm(&r);
        let mut damping = 1.0;
        let mut improved = false;
        while damping > 1e-6 {
            let trial: Vec<f64> = alphas
                .iter()
                .zip(step.iter())
                .map(|(a, s)| (a + damping * s).clamp(0.0, 1.0))
                .collect();
            let rt = eval(&trial);
            if norm(&rt) < base {
                alphas = trial;
                r = rt;
                improved = true;
                break;
            }
            damping *= 0.5;
        }
        if !improved {
            break;
        }
    }
    let res = block.residual(&product_weights(&alphas));
    (alphas, res)
}

/// Rational kappa coefficients from the signed normal sums `Omega`.
///
/// `Omega_0` uses the signs of flow 0's own normal components and every
/// other flow uses the negated signs, so `Omega_0 >= 0 >= Omega_c`.
pub fn kappa_coefficients(block: &NormalBlock, eps_den: f64) -> Result<Vec<f64>> {
    let n = block.flows();
    let m = block.manifolds();
    let omega: Vec<f64> = (0..n)
        .map(|c| {
            (0..m)
                .map(|k| {
                    let v = block.get(c, k);
                    let b = if c == 0 { v.signum() } else { -v.signum() };
                    if v == 0.0 {
                        0.0
                    } else {
                        b * v
                    }
                })
                .sum()
        })
        .collect();
    let root = 1.0 / (n as f64 - 1.0);
    (0..n)
        .map(|c| {
            let prod: f64 = (0..n).filter(|&l| l != c).map(|l| omega[l]).product();
            let r = prod.signum() * prod.abs().powf(root);
            let den = r - omega[c];
            if den.abs() < eps_den {
                Err(Error::numeric(
                    format!("kappa denominator vanishes for adjacent flow {c}"),
                    den.abs(),
                ))
            } else {
                Ok(r / den)
            }
        })
        .collect()
}

fn kappa_weights(block: &NormalBlock, eps_den: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let kappas = kappa_coefficients(block, eps_den)?;
    let total: f64 = kappas.iter().sum();
    if !(total.abs() >= eps_den) {
        return Err(Error::numeric("kappa coefficients sum to zero", total));
    }
    let weights = kappas.iter().map(|k| k / total).collect();
    Ok((kappas, weights))
}

/// Alpha weights from a normal block; fails unless the tangency residual
/// reaches `eps_slide`.
pub fn alpha_from_normals(block: &NormalBlock, opts: &WeightOptions) -> Result<ConvexWeights> {
    let (alphas, residual) = alpha_sweeps(block, None, opts)?;
    if residual > opts.eps_slide {
        return Err(Error::numeric(
            format!("alpha fixed point did not converge in {} sweeps", opts.max_sweeps),
            residual,
        ));
    }
    Ok(ConvexWeights {
        weights: product_weights(&alphas),
        method: WeightMethod::Alpha,
        alphas: Some(alphas),
        kappas: kappa_coefficients(block, opts.eps_den).ok(),
        residual,
    })
}

/// Kappa weights from a normal block; the block must be attractive up to
/// vanishing components.
pub fn kappa_from_normals(block: &NormalBlock, opts: &WeightOptions) -> Result<ConvexWeights> {
    for c in 0..block.flows() {
        for k in 0..block.manifolds() {
            if block.margin(c, k) < -opts.eps_lie {
                return Err(Error::PreconditionViolation(format!(
                    "adjacent flow {c} points away from active manifold {k}"
                )));
            }
        }
    }
    let (kappas, weights) = kappa_weights(block, opts.eps_den)?;
    let residual = block.residual(&weights);
    Ok(ConvexWeights {
        weights,
        method: WeightMethod::Kappa,
        alphas: None,
        kappas: Some(kappas),
        residual,
    })
}

/// Solves the alpha fixed point at `x`.
pub fn solve_alpha(
    model: &HybridModel,
    x: &[f64],
    surface: &SlidingSurface,
    opts: &WeightOptions,
) -> Result<ConvexWeights> {
    alpha_from_normals(&surface.normals(model, x)?, opts)
}

/// Kappa weights at `x`.
pub fn solve_kappa(
    model: &HybridModel,
    x: &[f64],
    surface: &SlidingSurface,
    opts: &WeightOptions,
) -> Result<ConvexWeights> {
    kappa_from_normals(&surface.normals(model, x)?, opts)
}

/// Weights used to build the sliding field: alpha sweeps, then kappa, then a
/// damped Newton solve. Returns the best candidate even when none reaches
/// the tangency target (e.g. past an exit point); check `residual`.
pub fn weights_from_normals(block: &NormalBlock, warm: Option<&[f64]>, opts: &WeightOptions) -> Result<ConvexWeights> {
    let kappas = kappa_coefficients(block, opts.eps_den).ok();
    let (alphas, residual) = alpha_sweeps(block, warm, opts)?;
    if residual <= opts.eps_slide {
        return Ok(ConvexWeights {
            weights: product_weights(&alphas),
            method: WeightMethod::Alpha,
            alphas: Some(alphas),
            kappas,
            residual,
        });
    }
    if let Ok((k, weights)) = kappa_weights(block, opts.eps_den) {
        let kres = block.residual(&weights);
        if kres <= opts.eps_slide && weights.iter().all(|w| (0.0..=1.0).contains(w)) {
            return Ok(ConvexWeights {
                weights,
                method: WeightMethod::Kappa,
                alphas: None,
                kappas: Some(k),
                residual: kres,
            });
        }
    }
    let (nalphas, nres) = alpha_newton(block, &alphas, opts);
    let (alphas, residual, method) = if nres < residual {
        (nalphas, nres, WeightMethod::Newton)
    } else {
        (alphas, residual, WeightMethod::Alpha)
    };
    Ok(ConvexWeights {
        weights: product_weights(&alphas),
        method,
        alphas: Some(alphas),
        kappas,
        residual,
    })
}

/// A sliding regime owned by one simulation run.
#[derive(Debug, Clone, PartialEq)]
pub struct SlidingRegime {
    pub surface: SlidingSurface,
    pub weights: ConvexWeights,
    pub entered_at: f64,
    /// Entered through the face test of [`nested_margin`] rather than the
    /// corner test on the adjacent flows.
    pub nested: bool,
}

impl SlidingRegime {
    pub fn enter(
        model: &HybridModel,
        x: &[f64],
        surface: SlidingSurface,
        t: f64,
        opts: &WeightOptions,
    ) -> Result<Self> {
        let block = surface.normals(model, x)?;
        let weights = weights_from_normals(&block, None, opts)?;
        let nested = !block.is_attractive(opts.eps_lie);
        Ok(Self {
            surface,
            weights,
            entered_at: t,
            nested,
        })
    }

    pub fn active(&self) -> &[usize] {
        self.surface.active()
    }
}

/// Sliding field and the weights that produced it.
pub fn sliding_field_with_weights(
    model: &HybridModel,
    x: &[f64],
    surface: &SlidingSurface,
    warm: Option<&[f64]>,
    opts: &WeightOptions,
) -> Result<(Vec<f64>, ConvexWeights)> {
    let block = surface.normals(model, x)?;
    let weights = weights_from_normals(&block, warm, opts)?;
    let mut field = vec![0.0; model.dim()];
    let mut f = vec![0.0; model.dim()];
    for (&i, &w) in surface.adjacent_flows().iter().zip(&weights.weights) {
        model.flow(i).eval(x, &mut f);
        for (acc, v) in field.iter_mut().zip(&f) {
            *acc += w * v;
        }
    }
    Ok((field, weights))
}

/// Convex combination of the adjacent flows at `x`, with weights re-solved at `x`.
pub fn sliding_vector_field(
    model: &HybridModel,
    x: &[f64],
    regime: &SlidingRegime,
    opts: &WeightOptions,
) -> Result<Vec<f64>> {
    let warm = regime.weights.alphas.as_deref();
    sliding_field_with_weights(model, x, &regime.surface, warm, opts).map(|(f, _)| f)
}

/// Outcome of the sliding exit test.
#[derive(Debug, Clone, PartialEq)]
pub enum ExitDecision {
    Continue,
    /// Leave sliding and follow the flow of this region.
    ExitTo(usize),
    /// Keep sliding on a smaller intersection.
    ReduceTo(SlidingSurface),
}

/// Attractivity of an intersection judged through its faces.
///
/// For each active manifold `k` and each side of it, the motion on the
/// neighbouring face (the intersection of the other active manifolds) must
/// point back toward `k`. That motion is the face's own sliding field when
/// the face is attractive, otherwise every adjacent region flow. With one
/// active manifold this is the corner test on the two flows. Returns the
/// smallest normal velocity toward the intersection; positive means
/// attractive.
pub fn nested_margin(model: &HybridModel, x: &[f64], surface: &SlidingSurface, opts: &WeightOptions) -> Result<f64> {
    let mut worst = f64::INFINITY;
    let mut f = vec![0.0; model.dim()];
    for &k in surface.active() {
        let grad = model.switching(k).gradient_vec(x);
        let rest: Vec<usize> = surface.active().iter().copied().filter(|&j| j != k).collect();
        for side in [-1i8, 1] {
            let mut sides = surface.sides().to_vec();
            sides[k] = side;
            let toward = |v: &[f64]| -f64::from(side) * dot(&grad, v);
            if rest.is_empty() {
                model.flow(model.region_from_signs(&sides)).eval(x, &mut f);
                worst = worst.min(toward(&f));
                continue;
            }
            let face = SlidingSurface::new(model, &rest, &sides)?;
            let block = face.normals(model, x)?;
            let face_slides = block.is_attractive(opts.eps_lie) || nested_margin(model, x, &face, opts)? > opts.eps_lie;
            let mut branch = f64::INFINITY;
            if face_slides {
                let (field, w) = sliding_field_with_weights(model, x, &face, None, opts)?;
                if w.residual <= opts.eps_slide.max(1e-10) {
                    branch = toward(&field);
                }
            }
            if !branch.is_finite() {
                for &r in face.adjacent_flows() {
                    model.flow(r).eval(x, &mut f);
                    branch = branch.min(toward(&f));
                }
            }
            worst = worst.min(branch);
        }
    }
    Ok(worst)
}

/// Smallest attractivity margin of `regime` at `x`; sliding continues while
/// it exceeds `eps_lie` and, for nested regimes, the weights stay tangent.
pub fn attractivity_margin(
    model: &HybridModel,
    x: &[f64],
    regime: &SlidingRegime,
    opts: &WeightOptions,
) -> Result<f64> {
    let block = regime.surface.normals(model, x)?;
    let corner = (0..block.flows())
        .flat_map(|c| (0..block.manifolds()).map(move |k| (c, k)))
        .map(|(c, k)| block.margin(c, k))
        .fold(f64::INFINITY, f64::min);
    if !regime.nested || corner > opts.eps_lie {
        return Ok(corner);
    }
    let m = nested_margin(model, x, &regime.surface, opts)?;
    let w = weights_from_normals(&block, regime.weights.alphas.as_deref(), opts)?;
    if w.residual > opts.eps_slide.max(1e-10) {
        return Ok(m.min(0.0));
    }
    Ok(m)
}

/// Decides whether sliding in `regime` continues at `x`.
pub fn exit_monitor(
    model: &HybridModel,
    x: &[f64],
    regime: &SlidingRegime,
    opts: &WeightOptions,
) -> Result<ExitDecision> {
    let surface = &regime.surface;
    let block = surface.normals(model, x)?;
    if block.is_attractive(opts.eps_lie) {
        return Ok(ExitDecision::Continue);
    }
    if regime.nested && attractivity_margin(model, x, regime, opts)? > opts.eps_lie {
        return Ok(ExitDecision::Continue);
    }
    let kappas = kappa_coefficients(&block, opts.eps_den).ok();
    if let Some(k) = &kappas {
        if let Some(c) = (0..block.flows()).find(|&c| k[c] >= 1.0 - opts.eps_exit && block.points_away(c, opts.eps_lie))
        {
            return Ok(ExitDecision::ExitTo(surface.adjacent_flows()[c]));
        }
    }
    match detect::select_mode(model, x, surface.active(), surface.sides(), None, true, opts)? {
        Some(ModeChoice::Slide(s) | ModeChoice::NestedSlide(s)) => Ok(ExitDecision::ReduceTo(s)),
        Some(ModeChoice::Region(r)) => Ok(ExitDecision::ExitTo(r)),
        None => {
            // No consistent successor: follow the flow that dominates the kappa weights.
            let c = kappas
                .as_ref()
                .and_then(|k| {
                    k.iter()
                        .enumerate()
                        .filter(|(_, v)| v.is_finite())
                        .max_by(|a, b| a.1.total_cmp(b.1))
                        .map(|(c, _)| c)
                })
                .unwrap_or_else(|| most_departing(&block));
            Ok(ExitDecision::ExitTo(surface.adjacent_flows()[c]))
        }
    }
}

fn most_departing(block: &NormalBlock) -> usize {
    (0..block.flows())
        .min_by(|&a, &b| {
            let ma = (0..block.manifolds())
                .map(|k| block.margin(a, k))
                .fold(f64::INFINITY, f64::min);
            let mb = (0..block.manifolds())
                .map(|k| block.margin(b, k))
                .fold(f64::INFINITY, f64::min);
            ma.total_cmp(&mb)
        })
        .unwrap_or(0)
}
