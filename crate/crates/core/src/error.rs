use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("finding set is missing case {0}")]
    MissingCase(u8),
    #[error("finding set lists case {0} more than once")]
    DuplicateCase(u8),
    #[error("case {0} is vulnerable but has no evidence")]
    MissingEvidence(u8),
    #[error("unknown test case {0}")]
    UnknownCase(u8),
}

#[derive(Debug, Error)]
pub enum ScanError {
    #[error("target list is empty")]
    NoTargets,
    #[error("invalid scan configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("unknown report format `{0}` (expected human, json or csv)")]
    UnknownFormat(String),
    #[error("malformed report: {0}")]
    Malformed(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Malformed bytes on the wire.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WireError {
    #[error("truncated {0}")]
    Truncated(&'static str),
    #[error("unexpected {what}: {value:#x}")]
    Unexpected { what: &'static str, value: u32 },
    #[error("{0}")]
    Invalid(String),
}
