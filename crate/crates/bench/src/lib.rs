//! Fixtures shared by the benchmarks.

use tinyscale::formula::TinyFormula;
use tinyscale::gpr::MeanFunction;
use tinyscale::oracle::{oracle_accuracy, OracleConfig};
use tinyscale::pareto::select_frontier;
use tinyscale::search::{sample_band, SamplingConfig};
use tinyscale::{ArchitectureSpec, ExperimentRecord};

pub const SEED: u64 = 42;

/// `n` band samples labelled by the synthetic oracle.
pub fn labelled_records(n: usize) -> Vec<ExperimentRecord> {
    let cfg = SamplingConfig {
        sample_count: n,
        seed: SEED,
        ..SamplingConfig::default()
    };
    let oracle = OracleConfig {
        seed: SEED,
        ..OracleConfig::default()
    };
    let mut records = sample_band(&ArchitectureSpec::efficientnet_b0(), &cfg).expect("demo sampling succeeds");
    for rec in &mut records {
        rec.accuracy = Some(oracle_accuracy(rec, &oracle).expect("default oracle config is valid"));
    }
    records
}

/// The top-20% frontier of [`labelled_records`]`(100)`.
pub fn demo_frontier() -> Vec<ExperimentRecord> {
    let records = labelled_records(100);
    let front = select_frontier(&records, 0.2).expect("population is labelled");
    front
        .select(&records)
        .expect("members come from the population")
        .into_iter()
        .cloned()
        .collect()
}

pub fn demo_formula() -> TinyFormula {
    TinyFormula::fit(&demo_frontier(), MeanFunction::Zero).expect("demo frontier is fittable")
}
