use std::fmt;

/// Failure of one command, split by who has to act on it.
#[derive(Debug)]
pub enum CliError {
    /// Bad arguments or unreadable inputs. Exit status 2.
    Config(String),
    /// A valid run that failed. Exit status 1.
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Runtime(m) => f.write_str(m),
        }
    }
}

impl From<moldkit::Error> for CliError {
    fn from(e: moldkit::Error) -> Self {
        match e {
            moldkit::Error::Config(_) => CliError::Config(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

/// Marks errors raised while loading inputs as configuration errors.
pub trait Setup<T> {
    fn setup(self) -> Result<T, CliError>;
}

impl<T> Setup<T> for moldkit::Result<T> {
    fn setup(self) -> Result<T, CliError> {
        self.map_err(|e| CliError::Config(e.to_string()))
    }
}
