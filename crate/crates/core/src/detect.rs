//! Event detection: sign changes of the switching functions, root location on
//! a step's dense output, and classification of the landed switch point.

use crate::error::{Error, Result};
use crate::model::{dot, HybridModel};
use crate::sliding::{nested_margin, sliding_field_with_weights, SlidingSurface, WeightOptions};

/// Result of comparing switching values across one step.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SignChanges {
    /// Strict sign changes, `gamma_prev * gamma_next < 0`.
    pub crossed: Vec<usize>,
    /// Values that end inside their manifold band.
    pub touching: Vec<usize>,
}

impl SignChanges {
    pub fn is_empty(&self) -> bool {
        self.crossed.is_empty() && self.touching.is_empty()
    }
}

pub fn detect_sign_changes(prev: &[f64], next: &[f64], bands: &[f64]) -> Result<SignChanges> {
    if prev.len() != next.len() || prev.len() != bands.len() {
        return Err(Error::InvalidArgument(format!(
            "switching value lengths differ: {} / {} / {}",
            prev.len(),
            next.len(),
            bands.len()
        )));
    }
    let mut out = SignChanges::default();
    for j in 0..prev.len() {
        if !prev[j].is_finite() || !next[j].is_finite() {
            return Err(Error::numeric(
                format!("switching function {j} is not finite"),
                f64::NAN,
            ));
        }
        if prev[j] * next[j] < 0.0 {
            out.crossed.push(j);
        } else if next[j].abs() <= bands[j] {
            out.touching.push(j);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RootOptions {
    /// Target `|g(sigma)|`.
    pub tol: f64,
    /// Secant iterations before switching to pure bisection.
    pub max_secant: usize,
    pub max_bisect: usize,
}

impl Default for RootOptions {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            max_secant: 50,
            max_bisect: 200,
        }
    }
}

/// A located root with the final bracket. `lo` keeps the sign of the
/// original lower endpoint, `hi` the opposite sign.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Root {
    pub sigma: f64,
    pub value: f64,
    pub lo: f64,
    pub hi: f64,
}

/// Safeguarded secant iteration on a sign-changing bracket, then bisection.
pub fn find_root(g: &dyn Fn(f64) -> f64, lo: f64, hi: f64, g_lo: f64, g_hi: f64, opts: &RootOptions) -> Result<Root> {
    if !(g_lo.is_finite() && g_hi.is_finite()) {
        return Err(Error::numeric("root bracket values are not finite", f64::NAN));
    }
    if g_lo.abs() <= opts.tol {
        return Ok(Root {
            sigma: lo,
            value: g_lo,
            lo,
            hi: lo,
        });
    }
    if g_hi.abs() <= opts.tol {
        return Ok(Root {
            sigma: hi,
            value: g_hi,
            lo: hi,
            hi,
        });
    }
    if g_lo * g_hi > 0.0 {
        return Err(Error::InvalidArgument("root bracket has no sign change".into()));
    }
    let (mut a, mut fa, mut b, mut fb) = (lo, g_lo, hi, g_hi);
    let (mut x0, mut f0, mut x1, mut f1) = (a, fa, b, fb);
    let take = |x: f64, fx: f64, a: &mut f64, fa: &mut f64, b: &mut f64, fb: &mut f64| {
        if fx.signum() == fa.signum() {
            *a = x;
            *fa = fx;
        } else {
            *b = x;
            *fb = fx;
        }
    };
    for _ in 0..opts.max_secant {
        let den = f1 - f0;
        let mut x2 = if den != 0.0 {
            x1 - f1 * (x1 - x0) / den
        } else {
            f64::NAN
        };
        if !(x2 > a.min(b) && x2 < a.max(b)) {
            x2 = 0.5 * (a + b);
        }
        let f2 = g(x2);
        if !f2.is_finite() {
            return Err(Error::numeric(
                "switching function not finite during root search",
                f64::NAN,
            ));
        }
        if f2.abs() <= opts.tol {
            return Ok(finish(x2, f2, a, fa, b));
        }
        take(x2, f2, &mut a, &mut fa, &mut b, &mut fb);
        x0 = x1;
        f0 = f1;
        x1 = x2;
        f1 = f2;
        if at_resolution(a, b) {
            break;
        }
    }
    for _ in 0..opts.max_bisect {
        if at_resolution(a, b) {
            // The bracket cannot shrink further; the root is pinned in sigma.
            let (x, fx) = if fa.abs() <= fb.abs() { (a, fa) } else { (b, fb) };
            return Ok(Root {
                sigma: x,
                value: fx,
                lo: a,
                hi: b,
            });
        }
        let mid = 0.5 * (a + b);
        let fm = g(mid);
        if !fm.is_finite() {
            return Err(Error::numeric(
                "switching function not finite during root search",
                f64::NAN,
            ));
        }
        if fm.abs() <= opts.tol {
            return Ok(finish(mid, fm, a, fa, b));
        }
        take(mid, fm, &mut a, &mut fa, &mut b, &mut fb);
    }
    Err(Error::numeric(
        "root bracketing did not converge",
        fa.abs().min(fb.abs()),
    ))
}

fn finish(x: f64, fx: f64, a: f64, fa: f64, b: f64) -> Root {
    // The root may sit on either side of zero; report it on the matching bracket end.
    if fx.signum() == fa.signum() {
        Root {
            sigma: x,
            value: fx,
            lo: x,
            hi: b,
        }
    } else {
        Root {
            sigma: x,
            value: fx,
            lo: a,
            hi: x,
        }
    }
}

fn at_resolution(a: f64, b: f64) -> bool {
    let scale = a.abs().max(b.abs()).max(f64::MIN_POSITIVE);
    (b - a).abs() <= 4.0 * f64::EPSILON * scale
}

/// State along one accepted step, parameterised by the elapsed time `sigma`.
pub trait DenseOutput {
    fn span(&self) -> f64;
    fn state_at(&self, sigma: f64, out: &mut [f64]);
}

/// Linear interpolation between the step endpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearDense {
    pub start: Vec<f64>,
    pub end: Vec<f64>,
    pub dt: f64,
}

impl DenseOutput for LinearDense {
    fn span(&self) -> f64 {
        self.dt
    }

    fn state_at(&self, sigma: f64, out: &mut [f64]) {
        let theta = if self.dt > 0.0 {
            (sigma / self.dt).clamp(0.0, 1.0)
        } else {
            1.0
        };
        for ((o, a), b) in out.iter_mut().zip(&self.start).zip(&self.end) {
            *o = a + theta * (b - a);
        }
    }
}

/// Number of sub-intervals scanned for the earliest sign change.
pub const SCAN_SAMPLES: usize = 32;

/// Earliest root of `g` on `[0, span]` where `side * g` first turns negative.
/// The start point counts as lying on `side` regardless of its value.
pub fn first_crossing(g: &dyn Fn(f64) -> f64, span: f64, side: f64, opts: &RootOptions) -> Result<Option<Root>> {
    let mut prev_s = 0.0;
    let mut prev_v = g(0.0);
    if side * prev_v <= 0.0 {
        prev_v = side * f64::MIN_POSITIVE;
    }
    for i in 1..=SCAN_SAMPLES {
        let s = span * i as f64 / SCAN_SAMPLES as f64;
        let v = g(s);
        if !v.is_finite() {
            return Err(Error::numeric(
                "switching function not finite on dense output",
                f64::NAN,
            ));
        }
        if side * v < 0.0 {
            return find_root(g, prev_s, s, prev_v, v, opts).map(Some);
        }
        prev_s = s;
        prev_v = v;
    }
    Ok(None)
}

/// Switch point on the dense output of one step.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossingRecord {
    /// Every manifold reached within the merge window, ascending.
    pub manifolds: Vec<usize>,
    pub sigma: f64,
    /// Upper end of the bracket of the earliest root.
    pub sigma_hi: f64,
    pub state: Vec<f64>,
}

/// Locates the earliest crossing among `candidates`. `sides` holds the sign
/// of every manifold at the step start. Roots within `merge * span` of the
/// earliest one are merged into a simultaneous crossing.
pub fn locate_switch_point(
    model: &HybridModel,
    dense: &dyn DenseOutput,
    candidates: &[usize],
    sides: &[i8],
    merge: f64,
    opts: &RootOptions,
) -> Result<Option<CrossingRecord>> {
    let span = dense.span();
    let mut buf = vec![0.0; model.dim()];
    let mut roots = Vec::new();
    for &j in candidates {
        let side = f64::from(sides[j]);
        if side == 0.0 {
            continue;
        }
        let g = |s: f64| {
            let mut y = vec![0.0; model.dim()];
            dense.state_at(s, &mut y);
            model.gamma(j, &y)
        };
        if let Some(root) = first_crossing(&g, span, side, opts)? {
            roots.push((j, root));
        }
    }
    let Some(first) = roots.iter().map(|(_, r)| *r).min_by(|a, b| a.sigma.total_cmp(&b.sigma)) else {
        return Ok(None);
    };
    let window = merge * span;
    let mut manifolds: Vec<usize> = roots
        .iter()
        .filter(|(_, r)| r.sigma <= first.sigma + window)
        .map(|(j, _)| *j)
        .collect();
    manifolds.sort_unstable();
    dense.state_at(first.sigma, &mut buf);
    Ok(Some(CrossingRecord {
        manifolds,
        sigma: first.sigma,
        sigma_hi: first.hi,
        state: buf,
    }))
}

/// Mode chosen after reaching one or more manifolds.
#[derive(Debug, Clone, PartialEq)]
pub enum ModeChoice {
    Slide(SlidingSurface),
    /// Sliding on an intersection that is attractive only through its faces.
    NestedSlide(SlidingSurface),
    Region(usize),
}

/// Picks the mode that continues from `x`, which lies on every manifold in
/// `hit`. `sides` fixes the sign of each other manifold.
///
/// Sliding on the largest attractive subset of `hit` wins, provided the
/// sliding field moves into the sides assigned to the remaining manifolds.
/// Otherwise a region whose flow leaves every manifold of `hit` is chosen,
/// preferring the one matching the `incoming` velocity. Failing both,
/// sliding on all of `hit` is chosen if it passes the face test of
/// [`nested_margin`]. With `exclude_full` set, sliding on all of
/// `hit` is not considered.
pub fn select_mode(
    model: &HybridModel,
    x: &[f64],
    hit: &[usize],
    sides: &[i8],
    incoming: Option<&[f64]>,
    exclude_full: bool,
    opts: &WeightOptions,
) -> Result<Option<ModeChoice>> {
    let mut hit = hit.to_vec();
    hit.sort_unstable();
    hit.dedup();
    let h = hit.len();
    let mut masks: Vec<u32> = (1u32..1 << h).collect();
    masks.sort_by_key(|s| std::cmp::Reverse(s.count_ones()));
    for &mask in &masks {
        if exclude_full && mask.count_ones() as usize == h {
            continue;
        }
        let active: Vec<usize> = (0..h).filter(|&b| mask >> b & 1 == 1).map(|b| hit[b]).collect();
        let rest: Vec<usize> = (0..h).filter(|&b| mask >> b & 1 == 0).map(|b| hit[b]).collect();
        for assign in 0..1usize << rest.len() {
            let mut s = sides.to_vec();
            for (k, &j) in rest.iter().enumerate() {
                s[j] = if assign >> k & 1 == 1 { 1 } else { -1 };
            }
            let surface = SlidingSurface::new(model, &active, &s)?;
            let block = surface.normals(model, x)?;
            if !block.is_attractive(opts.eps_lie) {
                continue;
            }
            if rest.is_empty() {
                return Ok(Some(ModeChoice::Slide(surface)));
            }
            let (field, weights) = sliding_field_with_weights(model, x, &surface, None, opts)?;
            if weights.residual > opts.eps_slide.max(1e-10) {
                continue;
            }
            let consistent = rest.iter().all(|&j| {
                let n = dot(&model.switching(j).gradient_vec(x), &field);
                f64::from(s[j]) * n > opts.eps_lie
            });
            if consistent {
                return Ok(Some(ModeChoice::Slide(surface)));
            }
        }
    }
    let grads: Vec<Vec<f64>> = hit.iter().map(|&j| model.switching(j).gradient_vec(x)).collect();
    let preferred: Option<Vec<i8>> = incoming.map(|v| grads.iter().map(|g| sign_of(dot(g, v))).collect());
    let mut regions = Vec::new();
    let mut f = vec![0.0; model.dim()];
    for assign in 0..1usize << h {
        let mut s = sides.to_vec();
        let local: Vec<i8> = (0..h).map(|k| if assign >> k & 1 == 1 { 1 } else { -1 }).collect();
        for (k, &j) in hit.iter().enumerate() {
            s[j] = local[k];
        }
        let r = model.region_from_signs(&s);
        model.flow(r).eval(x, &mut f);
        let leaves = grads
            .iter()
            .zip(&local)
            .all(|(g, &sg)| f64::from(sg) * dot(g, &f) > opts.eps_lie);
        if leaves {
            regions.push((r, local));
        }
    }
    let pick = preferred
        .as_ref()
        .and_then(|p| regions.iter().find(|(_, l)| l == p))
        .or_else(|| regions.first())
        .map(|(r, _)| *r);
    if let Some(r) = pick {
        return Ok(Some(ModeChoice::Region(r)));
    }
    if h >= 2 && !exclude_full {
        let surface = SlidingSurface::new(model, &hit, sides)?;
        if nested_margin(model, x, &surface, opts)? > opts.eps_lie {
            let (_, weights) = sliding_field_with_weights(model, x, &surface, None, opts)?;
            if weights.residual <= opts.eps_slide.max(1e-10) {
                return Ok(Some(ModeChoice::NestedSlide(surface)));
            }
        }
    }
    Ok(None)
}

fn sign_of(v: f64) -> i8 {
    if v > 0.0 {
        1
    } else if v < 0.0 {
        -1
    } else {
        0
    }
}

/// Outcome of classifying a switch point.
#[derive(Debug, Clone, PartialEq)]
pub enum SwitchClassification {
    Transversal {
        target: usize,
    },
    AttractiveSliding {
        surface: SlidingSurface,
    },
    /// The intersection attracts through its faces although some adjacent
    /// flow points away from it.
    NestedSliding {
        surface: SlidingSurface,
    },
    /// Some required normal component vanishes; no mode is consistent.
    Grazing {
        manifold: usize,
    },
}

/// Classifies the switch point `x` lying on the manifolds `hit`.
pub fn classify_switch_point(
    model: &HybridModel,
    x: &[f64],
    hit: &[usize],
    sides: &[i8],
    incoming: Option<&[f64]>,
    opts: &WeightOptions,
) -> Result<SwitchClassification> {
    if hit.is_empty() {
        return Err(Error::InvalidArgument("switch point touches no manifold".into()));
    }
    if sides.len() != model.num_manifolds() {
        return Err(Error::InvalidArgument(
            "side vector length must equal the manifold count".into(),
        ));
    }
    Ok(match select_mode(model, x, hit, sides, incoming, false, opts)? {
        Some(ModeChoice::Slide(surface)) => SwitchClassification::AttractiveSliding { surface },
        Some(ModeChoice::NestedSlide(surface)) => SwitchClassification::NestedSliding { surface },
        Some(ModeChoice::Region(target)) => SwitchClassification::Transversal { target },
        None => SwitchClassification::Grazing {
            manifold: weakest_manifold(model, x, hit, sides)?,
        },
    })
}

/// Manifold in `hit` with the smallest normal component among the regions around `x`.
fn weakest_manifold(model: &HybridModel, x: &[f64], hit: &[usize], sides: &[i8]) -> Result<usize> {
    let surface = SlidingSurface::new(model, hit, sides)?;
    let block = surface.normals(model, x)?;
    let mut best = (hit[0], f64::INFINITY);
    for (k, &j) in surface.active().iter().enumerate() {
        for c in 0..block.flows() {
            let v = block.get(c, k).abs();
            if v < best.1 {
                best = (j, v);
            }
        }
    }
    Ok(best.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{FlowMap, SwitchingFunction};

    fn constant_pair(f1: f64, f2: f64) -> HybridModel {
        HybridModel::builder(["x", "y"])
            .switching(
                SwitchingFunction::new("s", |x: &[f64]| x[0]).with_gradient(|_, g: &mut [f64]| {
                    g[0] = 1.0;
                    g[1] = 0.0;
                }),
            )
            .flow(FlowMap::new("neg", move |_: &[f64], d: &mut [f64]| {
                d[0] = f1;
                d[1] = 1.0;
            }))
            .flow(FlowMap::new("pos", move |_: &[f64], d: &mut [f64]| {
                d[0] = f2;
                d[1] = 1.0;
            }))
            .build()
            .unwrap()
    }

    #[test]
    fn sign_change_detection() {
        let c = detect_sign_changes(&[0.3, -0.2], &[-0.1, 0.4], &[1e-9; 2]).unwrap();
        assert_eq!(c.crossed, vec![0, 1]);
        let c = detect_sign_changes(&[0.3, 0.2], &[0.1, 0.4], &[1e-9; 2]).unwrap();
        assert!(c.is_empty());
        let c = detect_sign_changes(&[0.3, 0.2], &[1e-12, 0.4], &[1e-9; 2]).unwrap();
        assert_eq!(c.touching, vec![0]);
        assert!(c.crossed.is_empty());
    }

    #[test]
    fn sign_change_rejects_nan() {
        assert!(detect_sign_changes(&[0.3], &[f64::NAN], &[1e-9]).is_err());
    }

    #[test]
    fn root_on_linear_interpolant() {
        let g = |s: f64| 0.3 + (-0.1 - 0.3) * s;
        let r = find_root(&g, 0.0, 1.0, 0.3, -0.1, &RootOptions::default()).unwrap();
        assert!((r.sigma - 0.75).abs() < 1e-12);
        assert!(r.value.abs() <= 1e-12);
    }

    #[test]
    fn root_with_flat_secant_falls_back_to_bisection() {
        let g = |s: f64| (s - 0.3).powi(3);
        let r = find_root(&g, 0.0, 1.0, g(0.0), g(1.0), &RootOptions::default()).unwrap();
        assert!(r.value.abs() <= 1e-12);
        assert!((r.sigma - 0.3).abs() < 1e-4);
        assert!(g(r.lo) < 0.0 || r.lo == r.sigma);
    }

    #[test]
    fn first_crossing_is_earliest() {
        // Two roots inside one step; only the first counts.
        let g = |s: f64| (s - 0.2) * (s - 0.7);
        let r = first_crossing(&g, 1.0, 1.0, &RootOptions::default()).unwrap().unwrap();
        assert!((r.sigma - 0.2).abs() < 1e-10);
        assert!(r.hi >= r.sigma);
    }

    #[test]
    fn linear_locate() {
        let model = constant_pair(1.0, 1.0);
        let dense = LinearDense {
            start: vec![-0.3, 0.0],
            end: vec![0.1, 1.0],
            dt: 1.0,
        };
        let rec = locate_switch_point(&model, &dense, &[0], &[-1], 1e-10, &RootOptions::default())
            .unwrap()
            .unwrap();
        assert_eq!(rec.manifolds, vec![0]);
        assert!((rec.sigma - 0.75).abs() < 1e-12);
    }

    #[test]
    fn simultaneous_crossing_merges() {
        let model = HybridModel::builder(["x", "y"])
            .switching(SwitchingFunction::new("a", |x: &[f64]| x[0]))
            .switching(SwitchingFunction::new("b", |x: &[f64]| x[1]))
            .flow(FlowMap::new("q1", |_: &[f64], d: &mut [f64]| d.fill(1.0)))
            .flow(FlowMap::new("q2", |_: &[f64], d: &mut [f64]| d.fill(1.0)))
            .flow(FlowMap::new("q3", |_: &[f64], d: &mut [f64]| d.fill(1.0)))
            .flow(FlowMap::new("q4", |_: &[f64], d: &mut [f64]| d.fill(1.0)))
            .build()
            .unwrap();
        let dense = LinearDense {
            start: vec![-0.5, -0.5],
            end: vec![0.5, 0.5],
            dt: 1.0,
        };
        let rec = locate_switch_point(&model, &dense, &[0, 1], &[-1, -1], 1e-10, &RootOptions::default())
            .unwrap()
            .unwrap();
        assert_eq!(rec.manifolds, vec![0, 1]);
        assert!((rec.sigma - 0.5).abs() < 1e-12);
    }

    #[test]
    fn classify_transversal() {
        let model = constant_pair(1.0, 1.0);
        let c = classify_switch_point(&model, &[0.0, 0.0], &[0], &[0], None, &WeightOptions::default()).unwrap();
        assert_eq!(c, SwitchClassification::Transversal { target: 1 });
    }

    #[test]
    fn classify_sliding() {
        let model = constant_pair(1.0, -1.0);
        let c = classify_switch_point(&model, &[0.0, 0.0], &[0], &[0], None, &WeightOptions::default()).unwrap();
        match c {
            SwitchClassification::AttractiveSliding { surface } => assert_eq!(surface.active(), &[0]),
            other => panic!("expected sliding, got {other:?}"),
        }
    }

    #[test]
    fn classify_grazing() {
        let model = constant_pair(1.0, 0.0);
        let c = classify_switch_point(&model, &[0.0, 0.0], &[0], &[0], None, &WeightOptions::default()).unwrap();
        assert_eq!(c, SwitchClassification::Grazing { manifold: 0 });
    }
}
