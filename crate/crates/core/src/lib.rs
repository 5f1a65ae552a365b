//! Frame-level valence/arousal regression from facial behavior features.
//!
//! The pipeline: parse per-frame feature CSVs and annotation files
//! ([`ingest`]), assemble the frozen 48-entry feature vector ([`featvec`]),
//! train a bagged ensemble of variance-reduction regression trees with one
//! independent forest per affect target ([`tree`], [`forest`]), score
//! predictions with the concordance correlation coefficient ([`metrics`]),
//! and persist models in a deterministic binary format ([`model_io`]).
//!
//! Training is reproducible by construction: every random choice derives
//! from a single master seed through a documented splitting scheme, so the
//! same inputs produce byte-identical models regardless of thread count.

pub mod featvec;
pub mod forest;
pub mod ingest;
pub mod metrics;
pub mod model_io;
pub mod tree;

pub use featvec::FeatureVector;
pub use forest::{Forest, ForestParams, MultiOutputModel};
pub use ingest::{AffectLabel, Dataset, FrameRecord};
pub use metrics::EvalReport;
pub use tree::{Tree, TreeParams};

/// The two regression targets. Each gets its own independently seeded forest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Target {
    Valence,
    Arousal,
}

impl Target {
    pub const ALL: [Target; 2] = [Target::Valence, Target::Arousal];

    pub fn name(self) -> &'static str {
        match self {
            Target::Valence => "valence",
            Target::Arousal => "arousal",
        }
    }
}

impl std::fmt::Display for Target {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}
