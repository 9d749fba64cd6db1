//! Maps failures onto a small set of machine-readable categories.

use playtest_core::agent::AgentError;
use playtest_core::apf::ApfError;
use playtest_core::harness::HarnessError;
use playtest_core::persona::PersonaFormatError;
use playtest_core::sim::LevelError;
use playtest_core::ReplayError;

/// A bad argument that clap cannot catch, such as an unknown persona name.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct UsageError(pub String);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Category {
    Usage,
    Config,
    Level,
    Persona,
    Format,
    Replay,
    Training,
    Io,
    Internal,
}

impl Category {
    pub fn name(self) -> &'static str {
        match self {
            Category::Usage => "usage",
            Category::Config => "config",
            Category::Level => "level",
            Category::Persona => "persona",
            Category::Format => "format",
            Category::Replay => "replay",
            Category::Training => "training",
            Category::Io => "io",
            Category::Internal => "internal",
        }
    }

    pub fn exit_code(self) -> i32 {
        match self {
            Category::Usage => 2,
            Category::Config | Category::Level | Category::Persona => 3,
            Category::Format | Category::Replay => 4,
            Category::Io => 5,
            Category::Training => 6,
            Category::Internal => 70,
        }
    }
}

fn agent(e: &AgentError) -> Category {
    match e {
        AgentError::ZeroBudget | AgentError::InvalidConfig(_) => Category::Config,
        AgentError::Version(_) | AgentError::Serialization(_) | AgentError::Incompatible(_) => Category::Format,
        AgentError::Io(_) => Category::Io,
        AgentError::Apf(e) => apf(e),
        _ => Category::Training,
    }
}

fn apf(e: &ApfError) -> Category {
    match e {
        ApfError::InvalidConfig(_) | ApfError::InvalidMask(_) => Category::Config,
        ApfError::Version(_) | ApfError::Serialization(_) | ApfError::MalformedPath { .. } => Category::Format,
        ApfError::Io(_) => Category::Io,
        _ => Category::Training,
    }
}

/// Category of the first recognised error in the chain.
pub fn categorize(err: &anyhow::Error) -> Category {
    for cause in err.chain() {
        if cause.is::<UsageError>() {
            return Category::Usage;
        }
        if cause.is::<LevelError>() {
            return Category::Level;
        }
        if cause.is::<PersonaFormatError>() {
            return Category::Persona;
        }
        if cause.is::<toml::de::Error>() {
            return Category::Config;
        }
        if cause.is::<ReplayError>() {
            return Category::Replay;
        }
        if let Some(e) = cause.downcast_ref::<AgentError>() {
            return agent(e);
        }
        if let Some(e) = cause.downcast_ref::<ApfError>() {
            return apf(e);
        }
        if let Some(e) = cause.downcast_ref::<HarnessError>() {
            return match e {
                HarnessError::Parse { .. } | HarnessError::Version { .. } | HarnessError::Checksum => Category::Format,
                HarnessError::Empty(_) | HarnessError::InvalidArgument(_) | HarnessError::OutOfBounds { .. } => {
                    Category::Usage
                }
                HarnessError::Agent(e) => agent(e),
                HarnessError::Apf(e) => apf(e),
                HarnessError::Replay(_) => Category::Replay,
                HarnessError::Io(_) => Category::Io,
            };
        }
        if cause.is::<std::io::Error>() {
            return Category::Io;
        }
    }
    Category::Internal
}
