use std::fmt;

/// Pipeline stage named in error messages.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    Config,
    DataLoad,
    Training,
    Evaluation,
    Output,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Config => "config parse",
            Stage::DataLoad => "data load",
            Stage::Training => "training",
            Stage::Evaluation => "evaluation",
            Stage::Output => "output",
        })
    }
}

#[derive(Debug, thiserror::Error)]
#[error("{stage} failed: {message}")]
pub struct CliError {
    pub stage: Stage,
    /// Bad input or config (exit 2) as opposed to an internal failure
    /// (exit 1).
    pub bad_input: bool,
    pub message: String,
}

impl CliError {
    pub fn bad_input(stage: Stage, message: impl Into<String>) -> Self {
        Self {
            stage,
            bad_input: true,
            message: message.into(),
        }
    }

    pub fn internal(stage: Stage, message: impl Into<String>) -> Self {
        Self {
            stage,
            bad_input: false,
            message: message.into(),
        }
    }

    pub fn message(&self) -> &str {
        &self.message
    }

    pub fn exit_code(&self) -> i32 {
        if self.bad_input {
            2
        } else {
            1
        }
    }
}
