use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("tokenization failed: {0}")]
    TokenizationFailure(String),

    #[error("template is invalid: {0}")]
    InvalidTemplate(String),

    #[error("label words `{first}` and `{second}` resolve to the same token `{token}`")]
    LabelWordCollision {
        first: String,
        second: String,
        token: String,
    },

    #[error("logit {index} is not finite ({value})")]
    NonFiniteLogit { index: usize, value: f64 },

    #[error("prompt has {len} tokens but the scorer accepts at most {max}")]
    InputTooLong { len: usize, max: usize },

    #[error("label word `{0}` is unknown to the scorer")]
    UnknownLabelWord(String),

    #[error("worker protocol error: {0}")]
    WorkerProtocol(String),

    #[error("training diverged: {0}")]
    DivergenceDetected(String),

    #[error("class `{class}` has {available} labeled examples, {needed} requested")]
    InsufficientClassExamples {
        class: String,
        needed: usize,
        available: usize,
    },

    #[error("cannot draw {requested} examples from a dataset of {available}")]
    SampleTooLarge { requested: usize, available: usize },

    #[error("evaluation set is empty")]
    EmptyEvaluation,

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("duplicate note id `{0}`")]
    DuplicateId(String),

    #[error("invalid synthetic corpus spec: {0}")]
    InvalidSpec(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("unknown note id `{0}`")]
    UnknownNoteId(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Stable error name used on the command line and in reports.
    pub fn name(&self) -> &'static str {
        match self {
            Error::TokenizationFailure(_) => "TokenizationFailure",
            Error::InvalidTemplate(_) => "InvalidTemplate",
            Error::LabelWordCollision { .. } => "LabelWordCollision",
            Error::NonFiniteLogit { .. } => "NonFiniteLogit",
            Error::InputTooLong { .. } => "InputTooLong",
            Error::UnknownLabelWord(_) => "UnknownLabelWord",
            Error::WorkerProtocol(_) => "WorkerProtocolError",
            Error::DivergenceDetected(_) => "DivergenceDetected",
            Error::InsufficientClassExamples { .. } => "InsufficientClassExamples",
            Error::SampleTooLarge { .. } => "SampleTooLarge",
            Error::EmptyEvaluation => "EmptyEvaluation",
            Error::Parse { .. } => "ParseError",
            Error::DuplicateId(_) => "DuplicateId",
            Error::InvalidSpec(_) => "InvalidSpec",
            Error::InvalidConfig(_) => "InvalidConfig",
            Error::UnknownNoteId(_) => "UnknownNoteId",
            Error::Io(_) => "IoError",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
