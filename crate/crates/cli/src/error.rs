use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Numerical(lsem::Error),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 2,
            Self::Numerical(_) => 3,
            Self::Io { .. } => 1,
        }
    }
}

impl From<lsem::Error> for CliError {
    fn from(e: lsem::Error) -> Self {
        use lsem::Error as E;
        match e {
            E::InvalidConfig(m) | E::InvalidDomain(m) => Self::Config(m),
            E::InvalidMode { .. } => Self::Config(e.to_string()),
            E::Io(source) => Self::Io {
                path: "<output>".into(),
                source,
            },
            other => Self::Numerical(other),
        }
    }
}
