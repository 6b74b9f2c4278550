//! Error kinds and their exit codes.

use std::fmt;

use ismtrace::colormap::ColorError;
use ismtrace::emd::EmdError;
use ismtrace::ism::IsmError;
use ismtrace::psychophysics::ModelError;
use ismtrace::session::SessionError;
use ismtrace::signal::SignalError;
use ismtrace::trajectory::TrajectoryError;
use ismtrace::wire::WireError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Usage,
    Data,
    Io,
    Protocol,
}

impl Kind {
    pub fn exit_code(self) -> i32 {
        match self {
            Kind::Usage => 1,
            Kind::Data => 2,
            Kind::Io => 3,
            Kind::Protocol => 4,
        }
    }

    fn label(self) -> &'static str {
        match self {
            Kind::Usage => "usage",
            Kind::Data => "data",
            Kind::Io => "io",
            Kind::Protocol => "protocol",
        }
    }
}

#[derive(Debug)]
pub struct CliError {
    pub kind: Kind,
    pub message: String,
}

impl CliError {
    pub fn new(kind: Kind, message: impl Into<String>) -> Self {
        Self {
            kind,
            message: message.into(),
        }
    }

    pub fn usage(message: impl Into<String>) -> Self {
        Self::new(Kind::Usage, message)
    }

    pub fn data(message: impl Into<String>) -> Self {
        Self::new(Kind::Data, message)
    }

    pub fn io(context: impl fmt::Display, err: impl fmt::Display) -> Self {
        Self::new(Kind::Io, format!("{context}: {err}"))
    }

    /// Prefixes the message, keeping the kind.
    pub fn context(mut self, context: impl fmt::Display) -> Self {
        self.message = format!("{context}: {}", self.message);
        self
    }
}

/// One line: `error[kind]: message`.
impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let msg = self.message.replace('\n', " ");
        write!(f, "error[{}]: {}", self.kind.label(), msg)
    }
}

pub type CliResult<T> = Result<T, CliError>;

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::new(Kind::Io, e.to_string())
    }
}

impl From<SignalError> for CliError {
    fn from(e: SignalError) -> Self {
        let kind = match e {
            SignalError::Io(_) => Kind::Io,
            _ => Kind::Data,
        };
        CliError::new(kind, e.to_string())
    }
}

impl From<EmdError> for CliError {
    fn from(e: EmdError) -> Self {
        CliError::data(e.to_string())
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        let kind = match e {
            ModelError::Io(_) => Kind::Io,
            _ => Kind::Data,
        };
        CliError::new(kind, e.to_string())
    }
}

impl From<IsmError> for CliError {
    fn from(e: IsmError) -> Self {
        match e {
            IsmError::Signal(s) => s.into(),
            IsmError::Model(m) => m.into(),
            other => CliError::data(other.to_string()),
        }
    }
}

impl From<ColorError> for CliError {
    fn from(e: ColorError) -> Self {
        let kind = match e {
            ColorError::Io(_) => Kind::Io,
            _ => Kind::Data,
        };
        CliError::new(kind, e.to_string())
    }
}

impl From<TrajectoryError> for CliError {
    fn from(e: TrajectoryError) -> Self {
        match e {
            TrajectoryError::Io(_) => CliError::new(Kind::Io, e.to_string()),
            TrajectoryError::Color(c) => c.into(),
            other => CliError::data(other.to_string()),
        }
    }
}

impl From<WireError> for CliError {
    fn from(e: WireError) -> Self {
        let kind = match e {
            WireError::Protocol(_) => Kind::Protocol,
            WireError::Encode(_) => Kind::Data,
            WireError::Connection(_) | WireError::Stopped(_) => Kind::Io,
        };
        CliError::new(kind, e.to_string())
    }
}

impl From<SessionError> for CliError {
    fn from(e: SessionError) -> Self {
        let kind = match e {
            SessionError::Io(_) | SessionError::Sink(_) => Kind::Io,
            _ => Kind::Data,
        };
        CliError::new(kind, e.to_string())
    }
}
