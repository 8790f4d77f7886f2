use std::fmt;

/// Process exit codes.
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_INVALID: u8 = 3;
pub const EXIT_RUNTIME: u8 = 4;

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub msg: String,
}

impl Failure {
    pub fn config(msg: impl Into<String>) -> Self {
        Failure { code: EXIT_CONFIG, msg: msg.into() }
    }

    pub fn invalid(msg: impl Into<String>) -> Self {
        Failure { code: EXIT_INVALID, msg: msg.into() }
    }

    pub fn runtime(msg: impl Into<String>) -> Self {
        Failure { code: EXIT_RUNTIME, msg: msg.into() }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.msg)
    }
}

impl From<swflow::Error> for Failure {
    fn from(e: swflow::Error) -> Self {
        use swflow::Error::*;
        let code = match e {
            InvalidArgument(_) | UnsupportedRegime(_) | Precondition(_) | Parse { .. } => EXIT_INVALID,
            Numeric(_) | Io(_) => EXIT_RUNTIME,
        };
        Failure { code, msg: e.to_string() }
    }
}

pub type CliResult<T> = Result<T, Failure>;
