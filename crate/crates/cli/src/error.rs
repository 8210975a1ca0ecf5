use std::fmt;

/// Process exit codes.
pub mod code {
    pub const FAILURE: i32 = 1;
    pub const CONFIG: i32 = 2;
    pub const PREPROCESS: i32 = 3;
    pub const TRAINING: i32 = 4;
    pub const BUNDLE: i32 = 5;
    pub const EVAL: i32 = 6;
}

#[derive(Debug, Clone, PartialEq)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn new(code: i32, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }

    pub fn config(message: impl Into<String>) -> Self {
        Self::new(code::CONFIG, message)
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

/// Attaches an exit code to any displayable error.
pub trait OrExit<T> {
    fn or_exit(self, code: i32) -> Result<T, CliError>;
}

impl<T, E: fmt::Display> OrExit<T> for Result<T, E> {
    fn or_exit(self, code: i32) -> Result<T, CliError> {
        self.map_err(|e| CliError::new(code, e.to_string()))
    }
}
