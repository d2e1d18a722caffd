//! The five architecture levels used to tag faults, coverage elements and
//! labeled bug records.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ArchLevel {
    UserLevelAPI,
    GraphLevelImpl,
    OperationImpl,
    GeneralUtility,
    EnvDependentProcessing,
}

impl ArchLevel {
    pub const ALL: [ArchLevel; 5] = [
        ArchLevel::UserLevelAPI,
        ArchLevel::GraphLevelImpl,
        ArchLevel::OperationImpl,
        ArchLevel::GeneralUtility,
        ArchLevel::EnvDependentProcessing,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ArchLevel::UserLevelAPI => "UserLevelAPI",
            ArchLevel::GraphLevelImpl => "GraphLevelImpl",
            ArchLevel::OperationImpl => "OperationImpl",
            ArchLevel::GeneralUtility => "GeneralUtility",
            ArchLevel::EnvDependentProcessing => "EnvDependentProcessing",
        }
    }
}

impl fmt::Display for ArchLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ArchLevel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ArchLevel::ALL
            .into_iter()
            .find(|l| l.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown architecture level `{s}`"))
    }
}
