use serde::Serialize;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Domain(levcycle::Error),
    #[error("{0}")]
    Io(String),
}

impl From<levcycle::Error> for CliError {
    fn from(e: levcycle::Error) -> Self {
        match e {
            levcycle::Error::InvalidParams(m) | levcycle::Error::InvalidArgument(m) => CliError::Config(m),
            other => CliError::Domain(other),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

#[derive(Serialize)]
struct Payload<'a> {
    code: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    detail: Option<&'a str>,
    message: String,
}

#[derive(Serialize)]
struct Report<'a> {
    error: Payload<'a>,
}

impl CliError {
    pub fn code(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config_error",
            CliError::Domain(_) => "domain_error",
            CliError::Io(_) => "io_error",
        }
    }

    /// 1 for bad input, 2 for failures while running.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            _ => 2,
        }
    }

    pub fn to_json(&self) -> String {
        let detail = match self {
            CliError::Domain(e) => Some(e.code()),
            _ => None,
        };
        let report = Report { error: Payload { code: self.code(), detail, message: self.to_string() } };
        serde_json::to_string(&report).unwrap_or_else(|_| format!("{{\"error\":{{\"code\":\"{}\"}}}}", self.code()))
    }
}
