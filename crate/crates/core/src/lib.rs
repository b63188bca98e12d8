//! Shrinking mobile CNNs under a FLOPs budget.
//!
//! The pipeline: count the cost of a scaled network ([`arch`]), sample
//! scaling triples inside a FLOPs band ([`search`]), keep the accuracy/FLOPs
//! frontier ([`pareto`]), regress resolution and depth on the FLOPs ratio
//! ([`gpr`]) and solve for width under the budget constraint ([`formula`]).
//! [`oracle`] stands in for training when no measured accuracies exist.

pub mod arch;
mod budget;
pub mod formula;
pub mod gpr;
pub mod oracle;
pub mod pareto;
pub mod search;

pub use arch::{ArchError, ArchitectureSpec, CostModel, CostReport, ResolvedArchitecture, ScalingCoefficients};
pub use formula::{BudgetStatus, FormulaError, Solution, SolutionDocument, TinyFormula};
pub use gpr::{GprError, GprModel, Kernel, MeanFunction};
pub use pareto::{ParetoError, ParetoFront};
pub use search::{ExperimentRecord, RecordStore, SamplingConfig, SearchError};
