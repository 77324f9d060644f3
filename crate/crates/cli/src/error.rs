use std::fmt;

use usx_net::NetError;

/// Process exit status classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitKind {
    Usage = 1,
    Data = 2,
    Numerical = 3,
}

#[derive(Debug)]
pub struct CliError {
    pub kind: ExitKind,
    pub inner: anyhow::Error,
}

impl CliError {
    pub fn usage(msg: impl fmt::Display) -> Self {
        Self {
            kind: ExitKind::Usage,
            inner: anyhow::anyhow!("{msg}"),
        }
    }

    pub fn data(msg: impl fmt::Display) -> Self {
        Self {
            kind: ExitKind::Data,
            inner: anyhow::anyhow!("{msg}"),
        }
    }

    pub fn context(self, msg: impl fmt::Display + Send + Sync + 'static) -> Self {
        Self {
            kind: self.kind,
            inner: self.inner.context(msg),
        }
    }

    pub fn code(&self) -> i32 {
        self.kind as i32
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#}", self.inner)
    }
}

impl From<usx_core::Error> for CliError {
    fn from(e: usx_core::Error) -> Self {
        use usx_core::Error as E;
        let kind = match e {
            E::InvalidConfig(_) | E::InvalidSpec(_) => ExitKind::Usage,
            _ => ExitKind::Data,
        };
        Self { kind, inner: e.into() }
    }
}

impl From<NetError> for CliError {
    fn from(e: NetError) -> Self {
        let kind = match e {
            NetError::InvalidConfig(_) => ExitKind::Usage,
            NetError::TrainingDiverged { .. } | NetError::InvalidModel(_) => ExitKind::Numerical,
            NetError::Core(ref c) if matches!(c, usx_core::Error::InvalidConfig(_)) => ExitKind::Usage,
            _ => ExitKind::Data,
        };
        Self { kind, inner: e.into() }
    }
}

macro_rules! data_error {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                Self { kind: ExitKind::Data, inner: e.into() }
            }
        }
    )*};
}

data_error!(std::io::Error, csv::Error, serde_json::Error);

impl From<toml::de::Error> for CliError {
    fn from(e: toml::de::Error) -> Self {
        Self {
            kind: ExitKind::Usage,
            inner: e.into(),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

pub trait Context<T> {
    fn ctx(self, msg: impl fmt::Display + Send + Sync + 'static) -> CliResult<T>;
}

impl<T, E: Into<CliError>> Context<T> for Result<T, E> {
    fn ctx(self, msg: impl fmt::Display + Send + Sync + 'static) -> CliResult<T> {
        self.map_err(|e| e.into().context(msg))
    }
}
