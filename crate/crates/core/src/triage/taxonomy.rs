use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

macro_rules! labels {
    ($(#[$m:meta])* $name:ident { $($variant:ident => $label:literal),+ $(,)? }) => {
        $(#[$m])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        pub enum $name {
            $($variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn name(self) -> &'static str {
                match self {
                    $($name::$variant => $label),+
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.name())
            }
        }

        impl FromStr for $name {
            type Err = String;

            fn from_str(s: &str) -> Result<Self, String> {
                Self::ALL
                    .iter()
                    .copied()
                    .find(|v| v.name().eq_ignore_ascii_case(s))
                    .ok_or_else(|| format!("unknown {} `{s}`", stringify!($name)))
            }
        }
    };
}

labels!(
    /// Root-cause categories of framework bugs.
    RootCause {
        IncorrectAlgorithmImpl => "IncorrectAlgorithmImpl",
        TypeIssue => "TypeIssue",
        Misconfiguration => "Misconfiguration",
        TensorShapeMisalignment => "TensorShapeMisalignment",
        ApiMisuse => "ApiMisuse",
        EnvironmentIncompatibility => "EnvironmentIncompatibility",
        IncorrectExceptionHandling => "IncorrectExceptionHandling",
        IncorrectAssignment => "IncorrectAssignment",
        NumericalIssue => "NumericalIssue",
        Others => "Others",
        ApiIncompatibility => "ApiIncompatibility",
        ConcurrencyIssue => "ConcurrencyIssue",
        DependentModuleIssue => "DependentModuleIssue",
    }
);

labels!(
    SubCause {
        DlRelated => "DlRelated",
        DlUnrelated => "DlUnrelated",
        TensorType => "TensorType",
        ConventionalType => "ConventionalType",
        ConditionMissingOrRedundant => "ConditionMissingOrRedundant",
        ApiMissingOrRedundant => "ApiMissingOrRedundant",
        WrongApiArgs => "WrongApiArgs",
        WrongApiName => "WrongApiName",
        WrongApiReceiver => "WrongApiReceiver",
        MissingException => "MissingException",
        SpuriousException => "SpuriousException",
        WrongExceptionMessage => "WrongExceptionMessage",
        External => "External",
        Internal => "Internal",
    }
);

impl SubCause {
    pub fn parent(self) -> RootCause {
        use SubCause::*;
        match self {
            DlRelated | DlUnrelated => RootCause::IncorrectAlgorithmImpl,
            TensorType | ConventionalType => RootCause::TypeIssue,
            ConditionMissingOrRedundant | ApiMissingOrRedundant | WrongApiArgs | WrongApiName | WrongApiReceiver => {
                RootCause::ApiMisuse
            }
            MissingException | SpuriousException | WrongExceptionMessage => RootCause::IncorrectExceptionHandling,
            External | Internal => RootCause::ApiIncompatibility,
        }
    }
}

impl RootCause {
    pub fn sub_causes(self) -> Vec<SubCause> {
        SubCause::ALL.iter().copied().filter(|s| s.parent() == self).collect()
    }
}

labels!(
    Symptom {
        Crash => "Crash",
        IncorrectFunctionality => "IncorrectFunctionality",
        BuildFailure => "BuildFailure",
        PoorPerformance => "PoorPerformance",
        Hang => "Hang",
        Unreported => "Unreported",
    }
);

labels!(
    /// Pipeline stage at which a bug shows.
    Stage {
        Installation => "Installation",
        Preprocessing => "Preprocessing",
        Training => "Training",
        Deployment => "Deployment",
        UtilityOperation => "UtilityOperation",
    }
);

/// A root cause with an optional sub-category, written `Parent` or
/// `Parent/Sub`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Cause {
    pub root: RootCause,
    pub sub: Option<SubCause>,
}

impl Cause {
    pub fn new(root: RootCause, sub: Option<SubCause>) -> Result<Self, String> {
        match sub {
            Some(s) if s.parent() != root => Err(format!("`{s}` is not a sub-category of `{root}`")),
            _ => Ok(Cause { root, sub }),
        }
    }
}

impl fmt::Display for Cause {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.sub {
            Some(s) => write!(f, "{}/{s}", self.root),
            None => write!(f, "{}", self.root),
        }
    }
}

impl FromStr for Cause {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.split_once('/') {
            Some((r, sub)) => Cause::new(r.parse()?, Some(sub.parse()?)),
            None => Cause::new(s.parse()?, None),
        }
    }
}
