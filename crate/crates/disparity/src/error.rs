use disparity_core::Error as CoreError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("io: {0}")]
    Io(String),
    #[error(transparent)]
    Core(#[from] CoreError),
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;

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

/// Process exit codes, one per failing module.
pub mod exit {
    pub const OK: i32 = 0;
    pub const CONFIG: i32 = 2;
    pub const DATA_MODEL: i32 = 3;
    pub const EMULATION: i32 = 4;
    pub const NUMERICS: i32 = 5;
    pub const ESTIMATORS: i32 = 6;
    pub const SAMPLING_DESIGN: i32 = 7;
    pub const ORACLE_SIM: i32 = 8;
    pub const INFERENCE: i32 = 9;
    pub const IO: i32 = 10;
}

impl CliError {
    pub fn module(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Io(_) => "io",
            CliError::Core(e) => e.module(),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "ConfigError",
            CliError::Io(_) => "IoError",
            CliError::Core(e) => e.kind(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self.module() {
            "config" => exit::CONFIG,
            "data_model" => exit::DATA_MODEL,
            "emulation" => exit::EMULATION,
            "numerics" => exit::NUMERICS,
            "estimators" => exit::ESTIMATORS,
            "sampling_design" => exit::SAMPLING_DESIGN,
            "oracle_sim" => exit::ORACLE_SIM,
            "inference" => exit::INFERENCE,
            _ => exit::IO,
        }
    }

    /// Machine-readable error block.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "error": {
                "module": self.module(),
                "kind": self.kind(),
                "message": self.to_string(),
                "exit_code": self.exit_code(),
            }
        })
    }
}
