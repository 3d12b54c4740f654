/// Command failure, split by exit code.
pub enum Failure {
    /// Bad input: missing or malformed files, invalid arguments. Exit 1.
    Config(anyhow::Error),
    /// A run finished but an invariant check failed. Exit 2.
    Runtime(anyhow::Error),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Config(_) => 1,
            Failure::Runtime(_) => 2,
        }
    }

    pub fn error(&self) -> &anyhow::Error {
        match self {
            Failure::Config(e) | Failure::Runtime(e) => e,
        }
    }
}

pub fn config<E: Into<anyhow::Error>>(e: E) -> Failure {
    Failure::Config(e.into())
}

pub fn runtime<E: Into<anyhow::Error>>(e: E) -> Failure {
    Failure::Runtime(e.into())
}
