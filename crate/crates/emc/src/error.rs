use std::fmt;
use std::path::Path;

use emc_core::ErrorClass;
use serde_json::json;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Pipeline error with the stage and entity it concerns.
#[derive(Debug)]
pub struct Error {
    pub class: ErrorClass,
    pub stage: Option<&'static str>,
    pub entity: Option<String>,
    pub message: String,
    /// Byte offset into the offending input, when known.
    pub offset: Option<u64>,
}

impl Error {
    pub fn new(class: ErrorClass, message: impl Into<String>) -> Self {
        Error { class, stage: None, entity: None, message: message.into(), offset: None }
    }

    pub fn config(message: impl Into<String>) -> Self {
        Error::new(ErrorClass::Config, message)
    }

    pub fn data(message: impl Into<String>) -> Self {
        Error::new(ErrorClass::Data, message)
    }

    pub fn io(path: &Path, err: std::io::Error) -> Self {
        Error::data(format!("{}: {err}", path.display()))
    }

    pub fn parse(path: &Path, message: impl fmt::Display) -> Self {
        Error::data(format!("{}: {message}", path.display()))
    }

    pub fn stage(mut self, stage: &'static str) -> Self {
        self.stage.get_or_insert(stage);
        self
    }

    pub fn entity(mut self, entity: impl Into<String>) -> Self {
        self.entity.get_or_insert_with(|| entity.into());
        self
    }

    pub fn at_offset(mut self, offset: u64) -> Self {
        self.offset = Some(offset);
        self
    }

    pub fn exit_code(&self) -> i32 {
        match self.class {
            ErrorClass::Config => 2,
            ErrorClass::Data => 3,
            ErrorClass::Numerical => 4,
        }
    }

    pub fn class_name(&self) -> &'static str {
        match self.class {
            ErrorClass::Config => "config",
            ErrorClass::Data => "data",
            ErrorClass::Numerical => "numerical",
        }
    }

    /// One-line JSON object for the diagnostic stream.
    pub fn to_json(&self) -> String {
        json!({
            "error": {
                "class": self.class_name(),
                "stage": self.stage,
                "entity": self.entity,
                "offset": self.offset,
                "message": self.message,
            },
            "exit_code": self.exit_code(),
        })
        .to_string()
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(stage) = self.stage {
            write!(f, "{stage}: ")?;
        }
        if let Some(entity) = &self.entity {
            write!(f, "{entity}: ")?;
        }
        f.write_str(&self.message)
    }
}

impl std::error::Error for Error {}

impl From<emc_core::Error> for Error {
    fn from(e: emc_core::Error) -> Self {
        Error::new(e.class(), e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        let offset = e.position().map(|p| p.byte());
        Error { offset, ..Error::data(e.to_string()) }
    }
}

pub(crate) trait Context<T> {
    fn entity(self, entity: impl fmt::Display) -> Result<T>;
}

impl<T, E: Into<Error>> Context<T> for std::result::Result<T, E> {
    fn entity(self, entity: impl fmt::Display) -> Result<T> {
        self.map_err(|e| e.into().entity(entity.to_string()))
    }
}
