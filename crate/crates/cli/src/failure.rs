use std::fmt;
use std::path::Path;

use sdagrin::Error;

/// Everything that ends a run early, mapped onto process exit codes.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Core(Error),
    Io(String),
    Diverged(String),
}

impl Failure {
    pub fn io(path: &Path, e: std::io::Error) -> Self {
        Failure::Io(format!("{}: {e}", path.display()))
    }

    pub fn code(&self) -> i32 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Io(_) => 2,
            Failure::Diverged(_) => 3,
            Failure::Core(e) => match e {
                Error::Config(_) => 1,
                Error::Divergence { .. } | Error::NanGradient(_) => 3,
                _ => 2,
            },
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Failure::Usage(_) => "usage",
            Failure::Io(_) => "io",
            Failure::Diverged(_) => "divergence",
            Failure::Core(e) => match e {
                Error::Shape { .. } => "shape",
                Error::Contract(_) => "contract",
                Error::EmptySelection(_) => "empty_selection",
                Error::NonFinite(_) => "non_finite",
                Error::Parse { .. } => "parse",
                Error::Data(_) => "data",
                Error::Config(_) => "config",
                Error::Divergence { .. } => "divergence",
                Error::NanGradient(_) => "nan_gradient",
                Error::Checkpoint(_) => "checkpoint",
                Error::Io { .. } => "io",
            },
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(m) | Failure::Io(m) => f.write_str(m),
            Failure::Diverged(m) => write!(f, "training diverged: {m}"),
            Failure::Core(e) => write!(f, "{e}"),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(Failure::Usage("x".into()).code(), 1);
        assert_eq!(Failure::from(Error::Config("x".into())).code(), 1);
        assert_eq!(Failure::from(Error::Data("x".into())).code(), 2);
        assert_eq!(Failure::Io("x".into()).code(), 2);
        let d = Failure::from(Error::Divergence {
            step: 3,
            message: "nan".into(),
        });
        assert_eq!((d.code(), d.kind()), (3, "divergence"));
    }
}
