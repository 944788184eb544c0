use std::fmt;

/// A failed run, classified by exit code.
#[derive(Debug)]
pub enum Failure {
    /// Bad flags, config file or parameter values.
    Usage(anyhow::Error),
    /// Unreadable or malformed input data.
    Data(anyhow::Error),
    /// Anything else, including failures writing outputs.
    Internal(anyhow::Error),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Data(_) => 2,
            Failure::Internal(_) => 3,
        }
    }

    pub fn usage(msg: impl fmt::Display) -> Self {
        Failure::Usage(anyhow::anyhow!("{msg}"))
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (kind, e) = match self {
            Failure::Usage(e) => ("usage error", e),
            Failure::Data(e) => ("data error", e),
            Failure::Internal(e) => ("internal error", e),
        };
        write!(f, "{kind}: {e}")
    }
}

pub type Outcome<T = ()> = Result<T, Failure>;

/// Tags a result's error with its exit class.
pub trait Classify<T> {
    fn usage(self) -> Outcome<T>;
    fn data(self) -> Outcome<T>;
    fn internal(self) -> Outcome<T>;
}

impl<T, E: Into<anyhow::Error>> Classify<T> for Result<T, E> {
    fn usage(self) -> Outcome<T> {
        self.map_err(|e| Failure::Usage(e.into()))
    }

    fn data(self) -> Outcome<T> {
        self.map_err(|e| Failure::Data(e.into()))
    }

    fn internal(self) -> Outcome<T> {
        self.map_err(|e| Failure::Internal(e.into()))
    }
}
