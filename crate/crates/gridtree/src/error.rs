//! Error types shared across the toolkit.

use thiserror::Error;

/// Errors raised while loading relations or building partitions.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum DatasetError {
    #[error("duplicate key `{0}` in identifier column")]
    DuplicateKey(String),
    #[error("schema error: {0}")]
    SchemaError(String),
    #[error("input is empty")]
    EmptyInput,
    #[error("invalid partition: {0}")]
    PartitionError(String),
    #[error("incomplete grid: missing fragment for party P{0}.{1}")]
    IncompleteGrid(usize, usize),
    #[error("io error: {0}")]
    Io(String),
}

/// Errors raised by the plaintext ID3 oracle.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum Id3Error {
    #[error("child histogram totals do not sum to the parent total")]
    HistogramMismatch,
    #[error("training set is empty")]
    EmptyTraining,
    #[error("value `{value}` has no branch under attribute `{attribute}`")]
    UnseenValue { attribute: String, value: String },
}

/// Errors raised by the secure multi-party primitives and protocols.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum ProtocolError {
    #[error("protocol requires more than two parties, got {0}")]
    TooFewParties(usize),
    #[error("value {value} outside domain of modulus 2^{bits}")]
    DomainViolation { value: String, bits: u32 },
    #[error("item cannot be encoded into the cipher group: {0}")]
    EncodingError(String),
    #[error("item set of size {actual} exceeds the agreed size {agreed}")]
    PaddingOverflow { actual: usize, agreed: usize },
    #[error("circuit spec mismatch: {0}")]
    SpecError(String),
    #[error("configuration error: {0}")]
    ConfigError(String),
    #[error("undelivered message at protocol termination: {0}")]
    ProtocolHang(String),
    #[error("node `{0}` does not exist in the tree")]
    DanglingNode(String),
    #[error("no branch for value `{value}` at node `{node}`")]
    UnseenValue { node: String, value: String },
    #[error("plaintext rendering is only available in test mode")]
    Forbidden,
    #[error("dataset error: {0}")]
    Dataset(#[from] DatasetError),
    #[error("id3 error: {0}")]
    Id3(#[from] Id3Error),
}

/// Errors raised by the cost-model fit harness.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum CostError {
    #[error("fit error: {0}")]
    FitError(String),
}
