//! Global, loss-based feature importance.
//!
//! The crate covers perturbation methods (PFI, CFI, RFI), refit methods
//! (LOCO and the general leave-out / leave-in WVIM framework), marginal and
//! conditional SAGE, and the inference procedures that go with them
//! (empirical quantiles, Nadeau–Bengio corrected t-intervals, CPI and Lei
//! observation-level tests, multiplicity corrections).
//!
//! Every stochastic step draws from an RNG substream derived from a master
//! seed and the coordinates of the unit of work, so results do not depend
//! on how rayon schedules the work.

pub mod error;
pub mod inference;
pub mod io;
pub mod learners;
pub mod matrix;
pub mod measure;
pub mod perturbation;
pub mod refit;
pub mod resampling;
pub mod rng;
pub mod sage;
pub mod samplers;
pub mod scores;
pub mod sim;
pub mod task;

mod numeric;

pub use error::{Error, Result};
pub use learners::{LearnerKind, LearnerSpec, TrainedModel};
pub use matrix::FeatureMatrix;
pub use measure::{Direction, Measure, Prediction};
pub use resampling::{ResamplingInstance, ResamplingKind, ResamplingSpec};
pub use samplers::{SamplerKind, SamplerModel};
pub use scores::{ObsLossBlock, ScoreRecord, ScoresTable};
pub use task::Task;

/// Either an untrained learner (refit per resampling iteration) or a model
/// that has already been fitted.
#[derive(Debug, Clone)]
pub enum ModelSource {
    Learner(LearnerSpec),
    Fitted(std::sync::Arc<TrainedModel>),
}

impl From<LearnerSpec> for ModelSource {
    fn from(spec: LearnerSpec) -> Self {
        ModelSource::Learner(spec)
    }
}

impl From<TrainedModel> for ModelSource {
    fn from(model: TrainedModel) -> Self {
        ModelSource::Fitted(std::sync::Arc::new(model))
    }
}
