use std::fmt;
use std::process::ExitCode;

use tinyscale::arch::ArchError;
use tinyscale::formula::FormulaError;
use tinyscale::gpr::GprError;
use tinyscale::oracle::OracleError;
use tinyscale::pareto::{ParetoError, StatsError};
use tinyscale::search::SearchError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    /// The inputs were valid but the computation could not succeed.
    Domain,
    /// A file or argument could not be read, parsed or validated.
    Input,
}

/// A failed command with its exit status.
#[derive(Debug)]
pub struct Failure {
    pub kind: Kind,
    pub error: anyhow::Error,
}

impl Failure {
    pub fn domain(error: impl Into<anyhow::Error>) -> Self {
        Self {
            kind: Kind::Domain,
            error: error.into(),
        }
    }

    pub fn input(error: impl Into<anyhow::Error>) -> Self {
        Self {
            kind: Kind::Input,
            error: error.into(),
        }
    }

    pub fn context(mut self, message: impl fmt::Display + Send + Sync + 'static) -> Self {
        self.error = self.error.context(message);
        self
    }

    pub fn exit_code(&self) -> ExitCode {
        match self.kind {
            Kind::Domain => ExitCode::from(1),
            Kind::Input => ExitCode::from(2),
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#}", self.error)
    }
}

pub type CliResult<T> = Result<T, Failure>;

fn arch_kind(e: &ArchError) -> Kind {
    match e {
        ArchError::Mismatch { .. } => Kind::Domain,
        _ => Kind::Input,
    }
}

fn gpr_kind(e: &GprError) -> Kind {
    match e {
        GprError::Parse(_) | GprError::Io { .. } | GprError::Corrupt(_) | GprError::NonFiniteInput(_) => Kind::Input,
        _ => Kind::Domain,
    }
}

impl From<ArchError> for Failure {
    fn from(e: ArchError) -> Self {
        Self {
            kind: arch_kind(&e),
            error: e.into(),
        }
    }
}

impl From<GprError> for Failure {
    fn from(e: GprError) -> Self {
        Self {
            kind: gpr_kind(&e),
            error: e.into(),
        }
    }
}

impl From<FormulaError> for Failure {
    fn from(e: FormulaError) -> Self {
        let kind = match &e {
            FormulaError::InvalidBudget(_) | FormulaError::InvalidExponent(_) => Kind::Input,
            FormulaError::Gpr(g) => gpr_kind(g),
            FormulaError::Arch(a) => arch_kind(a),
            FormulaError::InvalidBounds(_) | FormulaError::MismatchedModels => Kind::Domain,
        };
        Self { kind, error: e.into() }
    }
}

impl From<SearchError> for Failure {
    fn from(e: SearchError) -> Self {
        let kind = match &e {
            SearchError::BudgetExhausted { .. } => Kind::Domain,
            SearchError::Arch(a) => arch_kind(a),
            _ => Kind::Input,
        };
        Self { kind, error: e.into() }
    }
}

impl From<ParetoError> for Failure {
    fn from(e: ParetoError) -> Self {
        let kind = match &e {
            ParetoError::InvalidFraction(_) => Kind::Input,
            _ => Kind::Domain,
        };
        Self { kind, error: e.into() }
    }
}

impl From<StatsError> for Failure {
    fn from(e: StatsError) -> Self {
        Self::domain(e)
    }
}

impl From<OracleError> for Failure {
    fn from(e: OracleError) -> Self {
        Self::input(e)
    }
}
