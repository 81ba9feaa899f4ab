use std::fmt;
use std::sync::Arc;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EventKind {
    /// Transversal passage from one region or sliding set to another side.
    Crossing,
    SlidingEntry,
    SlidingExit,
    /// The active sliding set changed.
    RegimeChange,
    /// A degenerate contact that no mode could continue consistently.
    Grazing,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Crossing => "Crossing",
            EventKind::SlidingEntry => "SlidingEntry",
            EventKind::SlidingExit => "SlidingExit",
            EventKind::RegimeChange => "RegimeChange",
            EventKind::Grazing => "Grazing",
        }
    }

    pub fn is_mode_switch(self) -> bool {
        !matches!(self, EventKind::Grazing)
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceSample {
    pub t: f64,
    pub state: Vec<f64>,
    pub regime: Arc<str>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceEvent {
    pub t: f64,
    pub kind: EventKind,
    /// Zero-based manifold indices involved in the event.
    pub manifolds: Vec<usize>,
    pub from: Arc<str>,
    pub to: Arc<str>,
    pub state: Vec<f64>,
}

/// Diagnostics gathered over accepted sliding steps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlidingStats {
    pub steps: usize,
    /// Largest `|grad gamma_j . f_s|` over active manifolds.
    pub max_tangency: f64,
    /// Largest `|gamma_j|` over active manifolds after projection.
    pub max_constraint: f64,
    pub max_weight_sum_error: f64,
    pub min_weight: f64,
    pub max_weight: f64,
}

impl Default for SlidingStats {
    fn default() -> Self {
        Self {
            steps: 0,
            max_tangency: 0.0,
            max_constraint: 0.0,
            max_weight_sum_error: 0.0,
            min_weight: f64::INFINITY,
            max_weight: f64::NEG_INFINITY,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SimTrace {
    pub state_names: Vec<String>,
    pub samples: Vec<TraceSample>,
    pub events: Vec<TraceEvent>,
    pub sliding: SlidingStats,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
}

impl SimTrace {
    pub fn mode_switches(&self) -> usize {
        self.events.iter().filter(|e| e.kind.is_mode_switch()).count()
    }

    pub fn events_of(&self, kind: EventKind) -> impl Iterator<Item = &TraceEvent> {
        self.events.iter().filter(move |e| e.kind == kind)
    }

    pub fn last(&self) -> Option<&TraceSample> {
        self.samples.last()
    }

    /// Index of the named state variable.
    pub fn column(&self, name: &str) -> Option<usize> {
        self.state_names.iter().position(|n| n == name)
    }

    /// Linear interpolation of the sampled state at `t`.
    pub fn state_at(&self, t: f64) -> Option<Vec<f64>> {
        let first = self.samples.first()?;
        if t <= first.t {
            return Some(first.state.clone());
        }
        let k = self.samples.partition_point(|s| s.t < t);
        if k >= self.samples.len() {
            return self.samples.last().map(|s| s.state.clone());
        }
        let (a, b) = (&self.samples[k - 1], &self.samples[k]);
        let theta = (t - a.t) / (b.t - a.t);
        Some(a.state.iter().zip(&b.state).map(|(u, v)| u + theta * (v - u)).collect())
    }

    /// Time intervals during which the regime descriptor satisfies `pred`.
    pub fn intervals_where(&self, pred: impl Fn(&str) -> bool) -> Vec<(f64, f64)> {
        let mut out = Vec::new();
        let mut open: Option<f64> = None;
        for s in &self.samples {
            match (pred(&s.regime), open) {
                (true, None) => open = Some(s.t),
                (false, Some(start)) => {
                    out.push((start, s.t));
                    open = None;
                }
                _ => {}
            }
        }
        if let (Some(start), Some(last)) = (open, self.samples.last()) {
            out.push((start, last.t));
        }
        out
    }
}
