use std::fmt;

/// A failed command and the process exit code it maps to.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Failure {
    /// 2: invalid flags or configuration.
    Usage(String),
    /// 3: the listen address could not be bound.
    Bind(String),
    /// 4: the database could not be opened or written.
    Storage(String),
    /// 5: the requested task does not exist.
    UnknownTask(String),
    /// 6: reading or writing files, or reaching the server, failed.
    Io(String),
    /// 7: a simulated worker hit a protocol error.
    Protocol(String),
}

impl Failure {
    pub fn code(&self) -> i32 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Bind(_) => 3,
            Failure::Storage(_) => 4,
            Failure::UnknownTask(_) => 5,
            Failure::Io(_) => 6,
            Failure::Protocol(_) => 7,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(m)
            | Failure::Bind(m)
            | Failure::Storage(m)
            | Failure::UnknownTask(m)
            | Failure::Io(m)
            | Failure::Protocol(m) => f.write_str(m),
        }
    }
}
