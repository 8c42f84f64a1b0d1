use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("shape mismatch: expected {expected:?}, found {found:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },
    #[error("matrix must be square, got {0}x{1}")]
    NotSquare(usize, usize),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("{0} failed on non-finite input")]
    Decomposition(&'static str),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("empty input")]
    EmptyInput,
    #[error("undefined: {0}")]
    Undefined(&'static str),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn ensure_same_shape(expected: (usize, usize), found: (usize, usize)) -> Result<()> {
    if expected != found {
        return Err(Error::ShapeMismatch { expected, found });
    }
    Ok(())
}

pub(crate) fn ensure_square(shape: (usize, usize)) -> Result<usize> {
    if shape.0 != shape.1 {
        return Err(Error::NotSquare(shape.0, shape.1));
    }
    Ok(shape.0)
}
