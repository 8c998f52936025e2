use std::path::{Path, PathBuf};

use lssid::Error;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Core(#[from] Error),
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// 2 invalid model or configuration, 3 I/O, 4 dimensions, 5 numerics.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io { .. } => 3,
            CliError::Core(e) if e.is_numerical() => 5,
            CliError::Core(e) => match e.root() {
                Error::Dimension(_) | Error::InvalidMode { .. } => 4,
                _ => 2,
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use lssid::Stage;

    #[test]
    fn codes_follow_the_root_cause() {
        let tagged = |e: Error| {
            CliError::Core(Error::Stage {
                stage: Stage::Realization(2),
                source: Box::new(e),
            })
        };
        assert_eq!(tagged(Error::SingularHankel { rank: 2, expected: 3 }).exit_code(), 5);
        assert_eq!(tagged(Error::Dimension("x".into())).exit_code(), 4);
        assert_eq!(CliError::Core(Error::InvalidModel("x".into())).exit_code(), 2);
        assert_eq!(CliError::io(Path::new("a"), std::io::ErrorKind::NotFound.into()).exit_code(), 3);
    }
}
