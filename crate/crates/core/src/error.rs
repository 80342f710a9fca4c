use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A distance matrix, label list, or file did not satisfy the space invariants.
    #[error("malformed space: {0}")]
    Malformed(String),

    #[error("index {index} out of range for a space of {len} points")]
    IndexOutOfRange { index: usize, len: usize },

    /// The exact Gram matrix is not positive definite.
    #[error("not a member of the class: pivot {pivot_index} is non-positive (leading minor {minor})")]
    NotMember { pivot_index: usize, minor: String },

    /// Exact data is fine but floating point cannot represent it faithfully.
    #[error("ill-conditioned: {0}")]
    IllConditioned(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    /// Snapping floats to rationals never produced a certified configuration.
    #[error("snapping failed after {attempts} attempts: {reason}")]
    SnapFailed { attempts: u32, reason: String },

    #[error("search failed after {attempts} attempts: {reason}")]
    SearchFailed { attempts: u32, reason: String },

    #[error("sample too small: {0}")]
    SampleTooSmall(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
