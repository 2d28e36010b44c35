use alloc::string::String;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("shape error: {0}")]
    Shape(String),
    #[error("degenerate range: {0}")]
    DegenerateRange(String),
    #[error("degenerate channel: {0}")]
    DegenerateChannel(String),
    #[error("non-finite value produced by {0}")]
    NonFinite(String),
}

pub type Result<T, E = Error> = core::result::Result<T, E>;

macro_rules! invalid {
    ($($arg:tt)*) => { $crate::Error::InvalidArgument(alloc::format!($($arg)*)) };
}

macro_rules! shape_err {
    ($($arg:tt)*) => { $crate::Error::Shape(alloc::format!($($arg)*)) };
}

pub(crate) use invalid;
pub(crate) use shape_err;
