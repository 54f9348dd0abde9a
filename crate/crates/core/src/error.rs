use std::fmt;

use thiserror::Error;

/// Errors raised while loading, validating or wiring services. Runtime
/// failures inside a session are [`Fault`]s instead.
#[derive(Debug, Error)]
pub enum Error {
    #[error("ParseError: {0}")]
    Parse(String),
    #[error("ValidationError: {0}")]
    Validation(String),
    #[error("DecodeError: {0}")]
    Decode(String),
    #[error("EncodeError: {0}")]
    Encode(String),
    #[error("StartupError: {0}")]
    Startup(String),
    #[error("StorageError: {0}")]
    Storage(String),
    #[error("NameClash: {0}")]
    NameClash(String),
    #[error("UnknownService: {0}")]
    UnknownService(String),
    #[error("InterfaceClash: {0}")]
    InterfaceClash(String),
    #[error("BudgetExceeded: {0}")]
    BudgetExceeded(String),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// The leading tag of the display form, used in machine-readable output.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Parse(_) => "ParseError",
            Error::Validation(_) => "ValidationError",
            Error::Decode(_) => "DecodeError",
            Error::Encode(_) => "EncodeError",
            Error::Startup(_) => "StartupError",
            Error::Storage(_) => "StorageError",
            Error::NameClash(_) => "NameClash",
            Error::UnknownService(_) => "UnknownService",
            Error::InterfaceClash(_) => "InterfaceClash",
            Error::BudgetExceeded(_) => "BudgetExceeded",
            Error::Io(_) => "IOError",
        }
    }
}

/// A named fault, raised by `throw` or by the runtime.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Fault(String);

impl Fault {
    pub const UNDEFINED_VARIABLE: &'static str = "UndefinedVariable";
    pub const DIVISION_BY_ZERO: &'static str = "DivisionByZero";
    pub const TYPE_FAULT: &'static str = "TypeFault";
    pub const ARITHMETIC: &'static str = "ArithmeticFault";
    pub const IO_FAULT: &'static str = "IOFault";
    pub const PROTOCOL_FAULT: &'static str = "ProtocolFault";
    pub const HANDLER_FAULT: &'static str = "HandlerFault";
    pub const CORRELATION_ERROR: &'static str = "CorrelationError";
    pub const UNKNOWN_OPERATION: &'static str = "UnknownOperation";
    pub const UNKNOWN_RESOURCE: &'static str = "UnknownResource";
    pub const STORAGE_ERROR: &'static str = "StorageError";
    pub const CONTAINER_FAULT: &'static str = "ContainerFault";
    pub const NO_REPLY: &'static str = "NoReply";
    pub const TERMINATED: &'static str = "Terminated";

    pub fn new(name: impl Into<String>) -> Self {
        Fault(name.into())
    }

    pub fn name(&self) -> &str {
        &self.0
    }

    pub fn io() -> Self {
        Fault::new(Self::IO_FAULT)
    }

    pub fn type_fault() -> Self {
        Fault::new(Self::TYPE_FAULT)
    }

    pub fn protocol() -> Self {
        Fault::new(Self::PROTOCOL_FAULT)
    }
}

impl fmt::Display for Fault {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Fault {}
