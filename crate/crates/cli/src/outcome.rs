use std::path::Path;

use rhythmsim::Error;
use serde::Serialize;
use serde_json::{Map, Value};

pub const EXIT_USAGE: u8 = 1;
pub const EXIT_DATA: u8 = 2;
pub const EXIT_INTERNAL: u8 = 3;

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        CliError { code: EXIT_USAGE, message: message.into() }
    }

    pub fn data(message: impl Into<String>) -> Self {
        CliError { code: EXIT_DATA, message: message.into() }
    }

    pub fn internal(message: impl Into<String>) -> Self {
        CliError { code: EXIT_INTERNAL, message: message.into() }
    }

    pub fn to_json(&self) -> String {
        serde_json::json!({ "ok": false, "exit_code": self.code, "error": self.message }).to_string()
    }
}

/// Anything wrong with the inputs is a data error.
pub trait InputContext<T> {
    fn input(self, what: &Path) -> Result<T, CliError>;
}

impl<T> InputContext<T> for Result<T, Error> {
    fn input(self, what: &Path) -> Result<T, CliError> {
        self.map_err(|e| CliError::data(format!("{}: {e}", what.display())))
    }
}

/// Failures while producing outputs from already valid inputs.
pub trait OutputContext<T> {
    fn output(self, what: &Path) -> Result<T, CliError>;
}

impl<T> OutputContext<T> for Result<T, Error> {
    fn output(self, what: &Path) -> Result<T, CliError> {
        self.map_err(|e| CliError::internal(format!("writing {}: {e}", what.display())))
    }
}

pub fn data_err<T>(r: Result<T, Error>) -> Result<T, CliError> {
    r.map_err(|e| CliError::data(e.to_string()))
}

/// Result of a successful command.
#[derive(Debug, Default, Serialize)]
pub struct Summary {
    pub command: String,
    pub written: Vec<String>,
    pub details: Map<String, Value>,
}

impl Summary {
    pub fn new(command: &str) -> Self {
        Summary { command: command.to_string(), ..Default::default() }
    }

    pub fn wrote(&mut self, path: &Path) {
        self.written.push(path.display().to_string());
    }

    pub fn detail(&mut self, key: &str, value: impl Serialize) {
        self.details.insert(key.to_string(), serde_json::to_value(value).unwrap_or(Value::Null));
    }

    pub fn to_json(&self) -> String {
        let mut v = serde_json::to_value(self).unwrap_or(Value::Null);
        if let Value::Object(m) = &mut v {
            m.insert("ok".into(), Value::Bool(true));
        }
        v.to_string()
    }
}
