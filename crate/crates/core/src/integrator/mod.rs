//! Simulation loop: explicit midpoint steps inside regions, event location
//! and classification on the switching manifolds, projected Bathe steps
//! while sliding.

mod projection;
mod step;
mod trace;

pub use projection::{project_to_manifold, project_with_multipliers, ProjectionOptions};
pub use step::{bathe_sliding_step, bathe_step, error_norm, rk2_step, StageOptions};
pub use trace::{EventKind, SimTrace, SlidingStats, TraceEvent, TraceSample};

use std::sync::Arc;

use crate::detect::{
    classify_switch_point, detect_sign_changes, first_crossing, locate_switch_point, select_mode, CrossingRecord,
    DenseOutput, LinearDense, ModeChoice, RootOptions, SwitchClassification,
};
use crate::error::{Error, Result};
use crate::model::{dot, HybridModel, RegionLookup};
use crate::sliding::{
    attractivity_margin, exit_monitor, sliding_field_with_weights, ExitDecision, SlidingRegime, SlidingSurface,
    WeightOptions,
};

/// Step-size bounds, tolerances and iteration caps for one run.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub t_end: f64,
    pub dt_init: f64,
    pub dt_min: f64,
    pub dt_max: f64,
    pub atol: f64,
    pub rtol: f64,
    /// Root and projection residual target.
    pub eps_root: f64,
    pub eps_slide: f64,
    pub eps_exit: f64,
    /// Overrides every switching function's band when set.
    pub eps_gamma: Option<f64>,
    pub eps_lie: f64,
    pub eps_den: f64,
    /// Crossings within this fraction of the step are simultaneous.
    pub merge_tol: f64,
    pub max_newton: usize,
    pub max_fixed_point: usize,
    pub max_sweeps: usize,
    pub max_grazing_retries: usize,
    pub max_steps: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            t_end: 10.0,
            dt_init: 1e-3,
            dt_min: 1e-10,
            dt_max: 0.1,
            atol: 1e-8,
            rtol: 1e-8,
            eps_root: 1e-12,
            eps_slide: 1e-12,
            eps_exit: 1e-6,
            eps_gamma: None,
            eps_lie: 1e-9,
            eps_den: 1e-15,
            merge_tol: 1e-10,
            max_newton: 50,
            max_fixed_point: 25,
            max_sweeps: 200,
            max_grazing_retries: 8,
            max_steps: 20_000_000,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.t_end.is_finite() && self.t_end >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "t_end must be finite and non-negative, got {}",
                self.t_end
            )));
        }
        if !(self.dt_min > 0.0 && self.dt_min <= self.dt_init && self.dt_init <= self.dt_max && self.dt_max.is_finite())
        {
            return Err(Error::InvalidArgument(format!(
                "step bounds must satisfy 0 < dt_min <= dt_init <= dt_max, got {} / {} / {}",
                self.dt_min, self.dt_init, self.dt_max
            )));
        }
        let tolerances = [
            ("atol", self.atol),
            ("rtol", self.rtol),
            ("eps_root", self.eps_root),
            ("eps_slide", self.eps_slide),
            ("eps_exit", self.eps_exit),
            ("eps_lie", self.eps_lie),
            ("eps_den", self.eps_den),
            ("merge_tol", self.merge_tol),
            ("eps_gamma", self.eps_gamma.unwrap_or(1.0)),
        ];
        for (name, v) in tolerances {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!("{name} must be positive, got {v}")));
            }
        }
        if self.max_newton == 0 || self.max_sweeps == 0 || self.max_steps == 0 {
            return Err(Error::InvalidArgument("iteration caps must be positive".into()));
        }
        Ok(())
    }

    pub fn weight_options(&self) -> WeightOptions {
        WeightOptions {
            eps_slide: self.eps_slide,
            eps_den: self.eps_den,
            max_sweeps: self.max_sweeps,
            eps_lie: self.eps_lie,
            eps_exit: self.eps_exit,
        }
    }

    pub fn root_options(&self) -> RootOptions {
        RootOptions {
            tol: self.eps_root,
            ..RootOptions::default()
        }
    }

    pub fn projection_options(&self) -> ProjectionOptions {
        ProjectionOptions {
            tol: self.eps_root,
            max_newton: self.max_newton,
        }
    }

    pub fn stage_options(&self) -> StageOptions {
        StageOptions {
            tol: (1e-3 * self.atol.min(self.rtol)).max(1e-14),
            max_fixed_point: self.max_fixed_point,
            max_newton: self.max_newton,
        }
    }
}

/// A failed run: the diagnostic and the trace recorded up to the failure.
#[derive(Debug, thiserror::Error)]
#[error("{source}")]
pub struct SimError {
    pub trace: Box<SimTrace>,
    #[source]
    pub source: Error,
}

/// Integrates `model` from `x0` at `t = 0` up to `config.t_end`.
pub fn simulate(model: &HybridModel, x0: &[f64], config: &SimConfig) -> std::result::Result<SimTrace, SimError> {
    let fail = |source| SimError {
        trace: Box::new(SimTrace {
            state_names: model.state_names().to_vec(),
            ..SimTrace::default()
        }),
        source,
    };
    config.validate().map_err(fail)?;
    model.check_state(x0).map_err(fail)?;
    let mut engine = Engine::new(model, x0, config);
    match engine.run() {
        Ok(()) => Ok(engine.trace),
        Err(e) => {
            let t = engine.t;
            Err(SimError {
                trace: Box::new(engine.trace),
                source: e.at_time(t),
            })
        }
    }
}

enum Mode {
    Region(usize),
    Sliding(SlidingRegime),
}

/// Consecutive zero-length events tolerated before forcing through a manifold.
const STALL_FORCE: usize = 10;
const STALL_ABORT: usize = 50;

struct Engine<'a> {
    model: &'a HybridModel,
    cfg: &'a SimConfig,
    weights: WeightOptions,
    root: RootOptions,
    proj: ProjectionOptions,
    stage: StageOptions,
    bands: Vec<f64>,
    t: f64,
    x: Vec<f64>,
    dt: f64,
    mode: Mode,
    label: Arc<str>,
    trace: SimTrace,
    grazing_retries: usize,
    stall: usize,
    last_event_t: f64,
}

impl<'a> Engine<'a> {
    fn new(model: &'a HybridModel, x0: &[f64], cfg: &'a SimConfig) -> Self {
        let bands = (0..model.num_manifolds())
            .map(|j| cfg.eps_gamma.unwrap_or_else(|| model.switching(j).band()))
            .collect();
        let mut x = x0.to_vec();
        if let Some(c) = model.clock_index() {
            x[c] = 0.0;
        }
        Self {
            model,
            cfg,
            weights: cfg.weight_options(),
            root: cfg.root_options(),
            proj: cfg.projection_options(),
            stage: cfg.stage_options(),
            bands,
            t: 0.0,
            x,
            dt: cfg.dt_init,
            mode: Mode::Region(0),
            label: Arc::from(""),
            trace: SimTrace {
                state_names: model.state_names().to_vec(),
                ..SimTrace::default()
            },
            grazing_retries: 0,
            stall: 0,
            last_event_t: f64::NEG_INFINITY,
        }
    }

    fn run(&mut self) -> Result<()> {
        self.init_mode()?;
        self.push_sample();
        let mut steps = 0usize;
        while self.t < self.cfg.t_end {
            steps += 1;
            if steps > self.cfg.max_steps {
                return Err(Error::numeric(
                    format!("step limit {} reached", self.cfg.max_steps),
                    f64::NAN,
                ));
            }
            let h = self.dt.min(self.cfg.t_end - self.t);

            match &self.mode {
                Mode::Region(r) => {
                    let r = *r;
                    self.region_step(r, h)?;
                }
                Mode::Sliding(_) => self.sliding_step(h)?,
            }
        }
        Ok(())
    }

    fn sides_from_state(&self, x: &[f64]) -> Vec<i8> {
        self.model
            .gammas(x)
            .iter()
            .map(|&g| if g > 0.0 { 1 } else { -1 })
            .collect()
    }

    fn init_mode(&mut self) -> Result<()> {
        let mode = match self.on_manifolds(&self.x) {
            None => {
                let sides = self.sides_from_state(&self.x);
                Mode::Region(self.model.region_from_signs(&sides))
            }
            Some(hit) => {
                let sides = self.sides_from_state(&self.x);
                let x = self.project(&self.x, &hit)?;
                match classify_switch_point(self.model, &x, &hit, &sides, None, &self.weights)? {
                    SwitchClassification::AttractiveSliding { surface }
                    | SwitchClassification::NestedSliding { surface } => {
                        let x = self.project(&x, surface.active())?;
                        self.x = x;
                        Mode::Sliding(SlidingRegime::enter(
                            self.model,
                            &self.x,
                            surface,
                            self.t,
                            &self.weights,
                        )?)
                    }
                    SwitchClassification::Transversal { target } => Mode::Region(target),
                    SwitchClassification::Grazing { .. } => {
                        let signs: Vec<i8> = sides
                            .iter()
                            .enumerate()
                            .map(|(j, &s)| if hit.contains(&j) { 1 } else { s })
                            .collect();
                        Mode::Region(self.model.region_from_signs(&signs))
                    }
                }
            }
        };
        self.set_mode(mode);
        Ok(())
    }

    fn on_manifolds(&self, x: &[f64]) -> Option<Vec<usize>> {
        match self.model.region_index(x) {
            RegionLookup::Region(_) if self.cfg.eps_gamma.is_none() => None,
            _ => {
                let hit: Vec<usize> = (0..self.model.num_manifolds())
                    .filter(|&j| self.model.gamma(j, x).abs() <= self.bands[j])
                    .collect();
                (!hit.is_empty()).then_some(hit)
            }
        }
    }

    fn set_mode(&mut self, mode: Mode) {
        self.label = match &mode {
            Mode::Region(r) => Arc::from(self.model.region_label(*r)),
            Mode::Sliding(reg) => Arc::from(reg.surface.descriptor(self.model)),
        };
        self.mode = mode;
    }

    fn project(&self, x: &[f64], manifolds: &[usize]) -> Result<Vec<f64>> {
        project_to_manifold(self.model, x, manifolds, &self.proj)
    }

    fn fix_clock(&self, x: &mut [f64], t: f64) {
        if let Some(c) = self.model.clock_index() {
            x[c] = t;
        }
    }

    fn push_sample(&mut self) {
        let sample = TraceSample {
            t: self.t,
            state: self.x.clone(),
            regime: self.label.clone(),
        };
        match self.trace.samples.last_mut() {
            Some(last) if last.t >= self.t => *last = sample,
            _ => self.trace.samples.push(sample),
        }
    }

    fn next_dt(&self, h: f64, err: f64) -> f64 {
        let factor = if err > 0.0 {
            (0.9 * err.powf(-1.0 / 3.0)).clamp(0.2, 5.0)
        } else {
            5.0
        };
        (h * factor).clamp(self.cfg.dt_min, self.cfg.dt_max)
    }

    fn reject(&mut self, h: f64, err: f64) {
        let factor = if err.is_finite() {
            (0.9 * err.powf(-1.0 / 3.0)).clamp(0.2, 0.9)
        } else {
            0.2
        };
        self.dt = (h * factor).max(self.cfg.dt_min);
        self.trace.rejected_steps += 1;
    }

    /// Halves the step after a solver failure, or gives up at the lower bound.
    fn halve_or_fail(&mut self, h: f64, e: Error) -> Result<()> {
        if h * 0.5 >= self.cfg.dt_min && matches!(e, Error::NumericFailure { .. }) {
            self.dt = h * 0.5;
            self.trace.rejected_steps += 1;
            Ok(())
        } else {
            Err(e)
        }
    }

    fn advance(&mut self, mut x: Vec<f64>, h: f64, err: f64) {
        let t = if self.t + h >= self.cfg.t_end || self.cfg.t_end - (self.t + h) <= 1e-14 * self.cfg.t_end {
            self.cfg.t_end
        } else {
            self.t + h
        };
        self.fix_clock(&mut x, t);
        self.t = t;
        self.x = x;
        self.trace.accepted_steps += 1;
        self.dt = self.next_dt(h, err);
        self.push_sample();
    }

    /// Moves to a located event point inside the current step.
    fn move_to(&mut self, mut x: Vec<f64>, sigma: f64) {
        let t = self.t + sigma;
        self.fix_clock(&mut x, t);
        self.t = t;
        self.x = x;
        if sigma > 0.0 {
            self.trace.accepted_steps += 1;
        }
    }

    fn record(&mut self, kind: EventKind, manifolds: Vec<usize>, mode: Mode) -> Result<()> {
        let from = self.label.clone();
        self.set_mode(mode);

        if self.t - self.last_event_t <= 1e-12 * self.t.abs().max(1.0) {
            self.stall += 1;
            if self.stall >= STALL_ABORT {
                return Err(Error::numeric("switching cycle without progress in time", f64::NAN));
            }
        } else {
            self.stall = 0;
        }
        self.last_event_t = self.t;
        self.trace.events.push(TraceEvent {
            t: self.t,
            kind,
            manifolds,
            from,
            to: self.label.clone(),
            state: self.x.clone(),
        });
        self.push_sample();
        Ok(())
    }

    /// Manifolds whose value leaves the side in `sides` between `x` and `next`.
    fn crossed(&self, next: &[f64], sides: &[i8], candidates: impl Iterator<Item = usize>) -> Result<Vec<usize>> {
        let idx: Vec<usize> = candidates.collect();
        let prev: Vec<f64> = idx
            .iter()
            .map(|&j| {
                let g = self.model.gamma(j, &self.x);
                let s = f64::from(sides[j]);
                if s * g > self.bands[j] {
                    g
                } else {
                    s * self.bands[j]
                }
            })
            .collect();
        let after: Vec<f64> = idx.iter().map(|&j| self.model.gamma(j, next)).collect();
        let bands: Vec<f64> = idx.iter().map(|&j| self.bands[j]).collect();
        let changes = detect_sign_changes(&prev, &after, &bands)?;
        Ok(changes.crossed.into_iter().map(|k| idx[k]).collect())
    }

    fn region_step(&mut self, r: usize, h: f64) -> Result<()> {
        let attempt = (|| -> Result<_> {
            let (full, dense) = rk2_step(self.model, r, &self.x, h)?;
            let (half, _) = rk2_step(self.model, r, &self.x, 0.5 * h)?;
            let (two, _) = rk2_step(self.model, r, &half, 0.5 * h)?;
            Ok((full, dense, two))
        })();
        let (full, dense, two) = match attempt {
            Ok(v) => v,
            Err(e) => return self.halve_or_fail(h, e),
        };
        let est: Vec<f64> = two.iter().zip(&full).map(|(a, b)| (a - b) * 4.0 / 3.0).collect();
        let err = error_norm(&est, &self.x, &full, self.cfg.atol, self.cfg.rtol);
        if err > 1.0 && h > self.cfg.dt_min {
            self.reject(h, err);
            return Ok(());
        }
        let sides: Vec<i8> = self.model.sign_matrix().column(r);
        if self.stall < STALL_FORCE {
            let crossed = self.crossed(&full, &sides, 0..self.model.num_manifolds())?;
            if !crossed.is_empty() {
                let rec = locate_switch_point(self.model, &dense, &crossed, &sides, self.cfg.merge_tol, &self.root)?;
                if let Some(rec) = rec {
                    return self.region_event(r, h, err, rec, full, &sides);
                }
            }
        } else {
            self.stall = 0;
            self.pass_through(r, full, h, err)?;
            return Ok(());
        }
        self.advance(full, h, err);
        Ok(())
    }

    /// Accepts a region step across a manifold without switching, recording a grazing contact.
    fn pass_through(&mut self, r: usize, full: Vec<f64>, h: f64, err: f64) -> Result<()> {
        let touched: Vec<usize> = {
            let sides = self.model.sign_matrix().column(r);
            self.crossed(&full, &sides, 0..self.model.num_manifolds())?
        };
        self.advance(full, h, err);
        if !touched.is_empty() {
            let signs = self.sides_from_state(&self.x);
            let target = self.model.region_from_signs(&signs);
            self.record(EventKind::Grazing, touched, Mode::Region(target))?;
        }
        self.grazing_retries = 0;
        Ok(())
    }

    fn region_event(
        &mut self,
        r: usize,
        h: f64,
        err: f64,
        rec: CrossingRecord,
        full: Vec<f64>,
        sides: &[i8],
    ) -> Result<()> {
        let landed = (|| -> Result<Vec<f64>> {
            let x = if rec.sigma > 0.0 {
                rk2_step(self.model, r, &self.x, rec.sigma)?.0
            } else {
                self.x.clone()
            };
            self.project(&x, &rec.manifolds)
        })();
        let xp = match landed {
            Ok(x) => x,
            Err(e) => return self.halve_or_fail(h, e),
        };
        let incoming = self.model.eval_flow(r, &xp);
        let class = classify_switch_point(self.model, &xp, &rec.manifolds, sides, Some(&incoming), &self.weights)?;
        match class {
            SwitchClassification::Grazing { .. } => {
                if self.grazing_retries < self.cfg.max_grazing_retries && 0.5 * h >= self.cfg.dt_min {
                    self.grazing_retries += 1;
                    self.dt = 0.5 * h;
                    self.trace.rejected_steps += 1;
                    return Ok(());
                }
                self.pass_through(r, full, h, err)
            }
            SwitchClassification::Transversal { target } => {
                self.grazing_retries = 0;
                self.move_to(xp, rec.sigma);
                self.record(EventKind::Crossing, rec.manifolds, Mode::Region(target))
            }
            SwitchClassification::AttractiveSliding { surface } | SwitchClassification::NestedSliding { surface } => {
                self.grazing_retries = 0;
                let xs = self.project(&xp, surface.active())?;
                self.move_to(xs, rec.sigma);
                let regime = SlidingRegime::enter(self.model, &self.x, surface, self.t, &self.weights)?;
                self.record(EventKind::SlidingEntry, rec.manifolds, Mode::Sliding(regime))
            }
        }
    }

    fn bathe(&self, regime: &SlidingRegime, x: &[f64], h: f64) -> Result<Vec<f64>> {
        bathe_sliding_step(self.model, regime, x, h, &self.stage, &self.weights, &self.proj)
    }

    fn sliding_step(&mut self, h: f64) -> Result<()> {
        let Mode::Sliding(regime) = &self.mode else {
            unreachable!("sliding step outside a sliding regime")
        };
        let regime = regime.clone();
        let attempt = (|| -> Result<_> {
            let full = self.bathe(&regime, &self.x, h)?;
            let half = self.bathe(&regime, &self.x, 0.5 * h)?;
            let two = self.bathe(&regime, &half, 0.5 * h)?;
            Ok((full, two))
        })();
        let (full, two) = match attempt {
            Ok(v) => v,
            Err(e) => return self.halve_or_fail(h, e),
        };
        let est: Vec<f64> = two.iter().zip(&full).map(|(a, b)| (a - b) * 4.0 / 3.0).collect();
        let err = error_norm(&est, &self.x, &full, self.cfg.atol, self.cfg.rtol);
        if err > 1.0 && h > self.cfg.dt_min {
            self.reject(h, err);
            return Ok(());
        }
        let surface = &regime.surface;
        let sides = surface.sides().to_vec();
        let inactive = (0..self.model.num_manifolds()).filter(|&j| !surface.is_active(j));
        let crossed = self.crossed(&full, &sides, inactive)?;
        if !crossed.is_empty() {
            let dense = LinearDense {
                start: self.x.clone(),
                end: full.clone(),
                dt: h,
            };
            if let Some(rec) =
                locate_switch_point(self.model, &dense, &crossed, &sides, self.cfg.merge_tol, &self.root)?
            {
                return self.sliding_crossing(regime, h, err, rec, full);
            }
        }
        match exit_monitor(self.model, &full, &regime, &self.weights)? {
            ExitDecision::Continue => {
                self.accept_sliding(regime, full, h, err)?;
                Ok(())
            }
            decision => self.sliding_exit(regime, h, full, decision),
        }
    }

    fn accept_sliding(&mut self, mut regime: SlidingRegime, full: Vec<f64>, h: f64, err: f64) -> Result<()> {
        let warm = regime.weights.alphas.clone();
        let (field, weights) =
            sliding_field_with_weights(self.model, &full, &regime.surface, warm.as_deref(), &self.weights)?;
        let stats = &mut self.trace.sliding;
        stats.steps += 1;
        for &j in regime.surface.active() {
            let g = self.model.switching(j).gradient_vec(&full);
            stats.max_tangency = stats.max_tangency.max(dot(&g, &field).abs());
            stats.max_constraint = stats.max_constraint.max(self.model.gamma(j, &full).abs());
        }
        stats.max_weight_sum_error = stats.max_weight_sum_error.max((weights.sum() - 1.0).abs());
        for &w in &weights.weights {
            stats.min_weight = stats.min_weight.min(w);
            stats.max_weight = stats.max_weight.max(w);
        }
        regime.weights = weights;
        self.mode = Mode::Sliding(regime);
        self.advance(full, h, err);
        Ok(())
    }

    fn sliding_crossing(
        &mut self,
        regime: SlidingRegime,
        h: f64,
        err: f64,
        rec: CrossingRecord,
        full: Vec<f64>,
    ) -> Result<()> {
        let mut hit: Vec<usize> = regime.surface.active().to_vec();
        hit.extend(&rec.manifolds);
        hit.sort_unstable();
        hit.dedup();
        let landed = (|| -> Result<Vec<f64>> {
            let x = if rec.sigma > 0.0 {
                self.bathe(&regime, &self.x, rec.sigma)?
            } else {
                self.x.clone()
            };
            self.project(&x, &hit)
        })();
        let xp = match landed {
            Ok(x) => x,
            Err(e) => return self.halve_or_fail(h, e),
        };
        let warm = regime.weights.alphas.clone();
        let (incoming, _) =
            sliding_field_with_weights(self.model, &xp, &regime.surface, warm.as_deref(), &self.weights)?;
        let choice = select_mode(
            self.model,
            &xp,
            &hit,
            regime.surface.sides(),
            Some(&incoming),
            false,
            &self.weights,
        )?;
        match choice {
            Some(ModeChoice::Slide(surface) | ModeChoice::NestedSlide(surface)) => {
                self.grazing_retries = 0;
                let xs = self.project(&xp, surface.active())?;
                self.move_to(xs, rec.sigma);
                if surface == regime.surface {
                    // Touched an inactive manifold and turned back.
                    self.push_sample();
                    return Ok(());
                }
                let kind = if surface.active() == regime.surface.active() {
                    EventKind::Crossing
                } else {
                    EventKind::RegimeChange
                };
                let next = SlidingRegime::enter(self.model, &self.x, surface, self.t, &self.weights)?;
                self.record(kind, rec.manifolds, Mode::Sliding(next))
            }
            Some(ModeChoice::Region(target)) => {
                self.grazing_retries = 0;
                self.move_to(xp, rec.sigma);
                self.record(EventKind::SlidingExit, hit, Mode::Region(target))
            }
            None => {
                if self.grazing_retries < self.cfg.max_grazing_retries && 0.5 * h >= self.cfg.dt_min {
                    self.grazing_retries += 1;
                    self.dt = 0.5 * h;
                    self.trace.rejected_steps += 1;
                    return Ok(());
                }
                self.grazing_retries = 0;
                let mut sides = regime.surface.sides().to_vec();
                for &j in &rec.manifolds {
                    sides[j] = if self.model.gamma(j, &full) > 0.0 { 1 } else { -1 };
                }
                let surface = SlidingSurface::new(self.model, regime.surface.active(), &sides)?;
                self.advance(full, h, err);
                let next = SlidingRegime::enter(self.model, &self.x, surface, self.t, &self.weights)?;
                self.record(EventKind::Grazing, rec.manifolds, Mode::Sliding(next))
            }
        }
    }

    fn sliding_exit(&mut self, regime: SlidingRegime, h: f64, full: Vec<f64>, at_end: ExitDecision) -> Result<()> {
        let dense = LinearDense {
            start: self.x.clone(),
            end: full.clone(),
            dt: h,
        };
        let eps = self.weights.eps_lie;
        let margin = |s: f64| {
            let mut y = vec![0.0; self.model.dim()];
            dense.state_at(s, &mut y);
            attractivity_margin(self.model, &y, &regime, &self.weights).map_or(f64::NAN, |m| m - eps)
        };
        let sigma = match first_crossing(&margin, h, 1.0, &self.root) {
            Ok(Some(root)) => root.hi.min(h),
            _ => h,
        };
        let active = regime.surface.active().to_vec();
        let landed = (|| -> Result<Vec<f64>> {
            if sigma >= h {
                Ok(full.clone())
            } else if sigma > 0.0 {
                let x = self.bathe(&regime, &self.x, sigma)?;
                self.project(&x, &active)
            } else {
                Ok(self.x.clone())
            }
        })();
        let xe = match landed {
            Ok(x) => x,
            Err(e) => return self.halve_or_fail(h, e),
        };
        let decision = match exit_monitor(self.model, &xe, &regime, &self.weights)? {
            ExitDecision::Continue => at_end,
            d => d,
        };
        self.grazing_retries = 0;
        self.move_to(xe, sigma);
        match decision {
            ExitDecision::ExitTo(r) => self.record(EventKind::SlidingExit, active, Mode::Region(r)),
            ExitDecision::ReduceTo(surface) => {
                let next = SlidingRegime::enter(self.model, &self.x, surface, self.t, &self.weights)?;
                self.record(EventKind::RegimeChange, active, Mode::Sliding(next))
            }
            ExitDecision::Continue => unreachable!("exit located without an exit decision"),
        }
    }
}
