//! Culture-aware human activity recognition over semantic image tags.
//!
//! Images are reduced to sets of semantic tags by one or more tag providers
//! (cloud vision services or offline fixtures). A Bernoulli Naive Bayes model
//! with the activity as parent node and one child node per tag is trained on
//! those sets. Optionally the person's cultural profile is attached as an
//! extra *cultural tag*, both when training and when classifying.
//!
//! Three experimental regimes are supported:
//!
//! * `CU`: culture-unaware, subclasses collapsed into their parent class.
//! * `CAT`: culture-aware training, subclasses promoted to classes.
//! * `CATT`: culture-aware training and testing, `CAT` plus cultural tags.
//!
//! The [`evaluation`] module implements the subset/fold protocol and the
//! confusion-matrix metrics, and [`synthetic`] generates tag-level datasets
//! with the same structure so the whole pipeline runs offline.

pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod model;
pub mod providers;
pub mod synthetic;
pub mod tag;

/// Version of this crate, recorded in run metadata.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub use dataset::{DatasetManifest, ImageRecord, ProjectedRecord, Regime};
pub use error::{Error, Result};
pub use evaluation::{
    ComparisonReport, ConfusionMatrix, FoldPlan, MetricsReport, PartitionProtocol,
    SubsetPartition,
};
pub use model::{ActivityModel, Classification, PriorMode, TrainingConfig, TrainingExample};
pub use tag::{Tag, TagKind, TagSet};
