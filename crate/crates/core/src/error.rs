use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: malformed line `{content}` ({reason})")]
    Malformed {
        path: PathBuf,
        line: usize,
        content: String,
        reason: &'static str,
    },

    #[error("{0}: no records")]
    Empty(PathBuf),

    #[error("triplet ({head}, {relation}, {tail}) out of range: {reason}")]
    TripletOutOfRange {
        head: usize,
        relation: usize,
        tail: usize,
        reason: String,
    },

    #[error("interaction ({user}, {item}) out of range for {n_users} users and {n_items} items")]
    InteractionOutOfRange {
        user: usize,
        item: usize,
        n_users: usize,
        n_items: usize,
    },

    #[error("{k}-core of the interaction graph is empty; try a smaller k")]
    EmptyCore { k: usize },

    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("unknown configuration key `{0}`")]
    UnknownKey(String),

    #[error("`{key}`: expected {expected}, got `{value}`")]
    Type {
        key: String,
        expected: &'static str,
        value: String,
    },

    #[error("`{key}` = {value} out of range: {reason}")]
    Range {
        key: &'static str,
        value: String,
        reason: &'static str,
    },

    #[error("line {line}: expected `key=value`, got `{content}`")]
    Syntax { line: usize, content: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Graph(#[from] GraphError),

    #[error(transparent)]
    Config(#[from] ConfigError),

    #[error(transparent)]
    Num(#[from] numgrad::NumError),

    #[error("non-finite {what} in epoch {epoch}, phase {phase}")]
    NonFinite {
        what: &'static str,
        epoch: usize,
        phase: &'static str,
    },

    #[error("{0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, Error>;
