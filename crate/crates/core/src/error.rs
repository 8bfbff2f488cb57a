use thiserror::Error;

#[derive(Debug, Error)]
pub enum GcmError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("parameter error: {0}")]
    Parameter(String),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error("generator spec error: {0}")]
    Spec(String),
    #[error("weight file error{}: {message}", layer.map(|l| format!(" in layer {l}")).unwrap_or_default())]
    Load { layer: Option<usize>, message: String },
    #[error("mask error: {0}")]
    Mask(String),
    #[error("format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Image(#[from] image::ImageError),
}

impl GcmError {
    /// True for failures of the numerical pipeline itself (as opposed to bad
    /// input files or arguments).
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            GcmError::Numeric(_) | GcmError::Invariant(_) | GcmError::Degenerate(_)
        )
    }
}

pub type Result<T, E = GcmError> = std::result::Result<T, E>;
