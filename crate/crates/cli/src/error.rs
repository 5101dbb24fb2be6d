use std::fmt;

use debias_core::Error;

pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_DATA: u8 = 3;
pub const EXIT_NUMERICAL: u8 = 4;

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_CONFIG,
            message: message.into(),
        }
    }

    pub fn data(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_DATA,
            message: message.into(),
        }
    }

    pub fn numerical(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_NUMERICAL,
            message: message.into(),
        }
    }

    /// Prefixes the message with where it happened.
    pub fn context(mut self, ctx: impl fmt::Display) -> Self {
        self.message = format!("{ctx}: {}", self.message);
        self
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = if e.is_numerical() {
            EXIT_NUMERICAL
        } else if e.is_config() {
            EXIT_CONFIG
        } else {
            EXIT_DATA
        };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

/// Renders strongly connected components as `{0, 2} | {1}`.
pub fn describe_components(components: &[Vec<usize>]) -> String {
    components
        .iter()
        .map(|c| {
            let inner: Vec<String> = c.iter().map(usize::to_string).collect();
            format!("{{{}}}", inner.join(", "))
        })
        .collect::<Vec<_>>()
        .join(" | ")
}
