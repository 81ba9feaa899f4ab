//! Simulation of piecewise-smooth systems whose vector field switches across
//! smooth manifolds, with Filippov sliding on single manifolds and on their
//! intersections instead of numerical chatter.

pub mod detect;
pub mod error;
pub mod integrator;
pub mod library;
pub mod model;
pub mod sliding;

pub use error::{Error, Result};
pub use integrator::{simulate, EventKind, SimConfig, SimError, SimTrace, TraceEvent, TraceSample};
pub use model::{
    build_sign_matrix, lie_derivative, normal_projection_matrix, relative_degree, FlowMap, HybridModel, ModelBuilder,
    RegionLookup, RelativeDegree, SignMatrix, SwitchingFunction,
};
pub use sliding::{ConvexWeights, ExitDecision, SlidingRegime, SlidingSurface, WeightOptions};
