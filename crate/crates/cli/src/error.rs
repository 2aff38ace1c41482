use std::io;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] cellbranch::Error),
    #[error("reading {path}: {source}")]
    ReadConfig { path: String, source: io::Error },
    #[error("writing output: {0}")]
    Io(#[from] io::Error),
    #[error("encoding JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{failed} of {total} criteria failed")]
    CriteriaFailed { failed: usize, total: usize },
}

impl CliError {
    /// 2 for anything wrong with the request, 1 for failures while running.
    pub fn exit_code(&self) -> i32 {
        use cellbranch::Error as E;
        match self {
            Self::Core(
                E::InvalidLaw(_)
                | E::InvalidImmigration(_)
                | E::Config(_)
                | E::UnknownSuite(_)
                | E::InvalidArgument(_)
                | E::DepthTooLarge { .. },
            )
            | Self::ReadConfig { .. } => 2,
            _ => 1,
        }
    }

    pub fn kind(&self) -> String {
        match self {
            Self::Core(e) => {
                let debug = format!("{e:?}");
                debug
                    .split(|c: char| !c.is_alphanumeric())
                    .next()
                    .unwrap_or("Error")
                    .to_string()
            }
            Self::ReadConfig { .. } => "ReadConfig".into(),
            Self::Io(_) => "Io".into(),
            Self::Json(_) => "Json".into(),
            Self::CriteriaFailed { .. } => "CriteriaFailed".into(),
        }
    }
}
