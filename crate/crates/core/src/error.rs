use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty training set")]
    EmptyTrainingSet,
    #[error("invalid tag {0:?}: tags must be non-empty after normalization")]
    InvalidTag(String),
    #[error("unknown culture `{0}`")]
    UnknownCulture(String),
    #[error("class `{0}` has no training examples")]
    EmptyClass(String),
    #[error("training example `{0}` is missing a cultural label")]
    MissingCulturalLabel(String),
    #[error("training example `{0}` already carries cultural tags; use cultural labels instead")]
    CulturalTagInTraining(String),
    #[error("no admissible class")]
    NoAdmissibleClass,
    #[error("tag set `{0}` already contains a cultural tag")]
    DoubleInjection(String),
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("manifest: {0}")]
    Manifest(String),
    #[error("provider `{provider}`: {message}")]
    Provider { provider: String, message: String },
    #[error("all providers failed for `{image_id}`: {}", causes.join("; "))]
    AllProvidersFailed { image_id: String, causes: Vec<String> },
    #[error("partition: {0}")]
    Partition(String),
    #[error("evaluation: {0}")]
    Evaluation(String),
    #[error("synthetic spec: {0}")]
    Synthetic(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Coarse failure category, used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Provider,
    Evaluation,
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Config(_) => ErrorKind::Config,
            Error::Provider { .. } | Error::AllProvidersFailed { .. } => ErrorKind::Provider,
            Error::NoAdmissibleClass
            | Error::Partition(_)
            | Error::Evaluation(_)
            | Error::InvalidModel(_) => ErrorKind::Evaluation,
            _ => ErrorKind::Data,
        }
    }
}
