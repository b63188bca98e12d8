//! Accuracy/FLOPs nondominated sorting and frontier selection.
//!
//! Objectives are fixed: maximize accuracy, minimize FLOPs. With two
//! objectives, reference-point niching reduces to spreading members along the
//! front, so a partially admitted front is truncated by crowding distance.
//! The accuracy axis of the crowding distance uses population ranks rather
//! than raw values, which keeps selection invariant under any strictly
//! increasing transform of the accuracies.

mod spearman;

use std::cmp::Ordering;
use std::collections::HashMap;

use serde::Serialize;
use thiserror::Error;

use crate::search::ExperimentRecord;

pub use self::spearman::{average_ranks, spearman, Correlation, StatsError};

/// Share of the population kept by [`select_frontier`] by default.
pub const DEFAULT_FRACTION: f64 = 0.20;

#[derive(Debug, Error)]
pub enum ParetoError {
    #[error("empty population")]
    Empty,
    #[error("records without accuracy: {}", .0.join(", "))]
    MissingAccuracy(Vec<String>),
    #[error("fraction {0} outside (0, 1]")]
    InvalidFraction(f64),
    #[error("frontier member `{0}` not found among the records")]
    UnknownMember(String),
    #[error(transparent)]
    Stats(#[from] StatsError),
}

/// `a` dominates `b`: at least as accurate and at most as costly, strictly
/// better in one of the two.
pub fn dominates(a: &ExperimentRecord, b: &ExperimentRecord) -> bool {
    let (acc_a, acc_b) = (a.accuracy.unwrap_or(f64::NAN), b.accuracy.unwrap_or(f64::NAN));
    acc_a >= acc_b && a.flops <= b.flops && (acc_a > acc_b || a.flops < b.flops)
}

/// Front rank of every record (1 = nondominated), aligned with the input.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrontAssignment {
    pub ranks: Vec<u32>,
    /// Record indices per front, each ordered by ascending FLOPs then id.
    pub fronts: Vec<Vec<usize>>,
}

fn check_population(records: &[ExperimentRecord]) -> Result<(), ParetoError> {
    if records.is_empty() {
        return Err(ParetoError::Empty);
    }
    let missing: Vec<String> = records
        .iter()
        .filter(|r| !r.accuracy.is_some_and(f64::is_finite))
        .map(|r| r.id.clone())
        .collect();
    if !missing.is_empty() {
        return Err(ParetoError::MissingAccuracy(missing));
    }
    Ok(())
}

fn by_flops_then_id(records: &[ExperimentRecord]) -> impl Fn(&usize, &usize) -> Ordering + '_ {
    |&a, &b| {
        records[a]
            .flops
            .cmp(&records[b].flops)
            .then_with(|| records[a].id.cmp(&records[b].id))
    }
}

/// Fast nondominated sorting (domination counts plus dominated-set lists).
pub fn nondominated_sort(records: &[ExperimentRecord]) -> Result<FrontAssignment, ParetoError> {
    check_population(records)?;
    let n = records.len();
    let mut dominated_by_me: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut dominator_count = vec![0usize; n];
    for i in 0..n {
        for j in (i + 1)..n {
            if dominates(&records[i], &records[j]) {
                dominated_by_me[i].push(j);
                dominator_count[j] += 1;
            } else if dominates(&records[j], &records[i]) {
                dominated_by_me[j].push(i);
                dominator_count[i] += 1;
            }
        }
    }

    let mut ranks = vec![0u32; n];
    let mut fronts = Vec::new();
    let mut current: Vec<usize> = (0..n).filter(|&i| dominator_count[i] == 0).collect();
    let mut rank = 1;
    while !current.is_empty() {
        let mut next = Vec::new();
        for &i in &current {
            ranks[i] = rank;
            for &j in &dominated_by_me[i] {
                dominator_count[j] -= 1;
                if dominator_count[j] == 0 {
                    next.push(j);
                }
            }
        }
        current.sort_by(by_flops_then_id(records));
        fronts.push(current);
        current = next;
        rank += 1;
    }
    Ok(FrontAssignment { ranks, fronts })
}

/// Crowding distance of each member of `front`, in the order given.
///
/// `acc_rank` holds population ranks of accuracy. Boundary members get
/// infinity; each axis is normalized by its extent over the front.
fn crowding_distances(records: &[ExperimentRecord], acc_rank: &[f64], front: &[usize]) -> Vec<f64> {
    let m = front.len();
    let mut distance = vec![0.0; m];
    if m <= 2 {
        return vec![f64::INFINITY; m];
    }
    let axes: [&dyn Fn(usize) -> f64; 2] = [&|i| records[i].flops as f64, &|i| acc_rank[i]];
    for value in axes {
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| {
            value(front[a])
                .total_cmp(&value(front[b]))
                .then_with(|| records[front[a]].id.cmp(&records[front[b]].id))
        });
        let lo = value(front[order[0]]);
        let hi = value(front[order[m - 1]]);
        distance[order[0]] = f64::INFINITY;
        distance[order[m - 1]] = f64::INFINITY;
        if hi > lo {
            for k in 1..m - 1 {
                let gap = value(front[order[k + 1]]) - value(front[order[k - 1]]);
                distance[order[k]] += gap / (hi - lo);
            }
        }
    }
    distance
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FrontMember {
    pub id: String,
    pub front: u32,
}

/// The selected top fraction of a population.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParetoFront {
    /// Selected ids ordered by front, then ascending FLOPs, then id.
    pub members: Vec<FrontMember>,
    /// Front rank of every record in the population.
    pub ranks: HashMap<String, u32>,
}

impl ParetoFront {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, id: &str) -> bool {
        self.members.iter().any(|m| m.id == id)
    }

    /// The selected records, in member order.
    pub fn select<'a>(&self, records: &'a [ExperimentRecord]) -> Result<Vec<&'a ExperimentRecord>, ParetoError> {
        let by_id: HashMap<&str, &ExperimentRecord> = records.iter().map(|r| (r.id.as_str(), r)).collect();
        self.members
            .iter()
            .map(|m| {
                by_id
                    .get(m.id.as_str())
                    .copied()
                    .ok_or_else(|| ParetoError::UnknownMember(m.id.clone()))
            })
            .collect()
    }
}

/// Keeps whole fronts in rank order until `ceil(fraction * n)` records are
/// selected, truncating the last front by crowding distance (largest first,
/// ties by lower FLOPs, then id).
pub fn select_frontier(records: &[ExperimentRecord], fraction: f64) -> Result<ParetoFront, ParetoError> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(ParetoError::InvalidFraction(fraction));
    }
    let assignment = nondominated_sort(records)?;
    let n = records.len();
    let quota = ((fraction * n as f64) - 1e-9).ceil().max(1.0) as usize;
    let accuracies: Vec<f64> = records.iter().map(|r| r.accuracy.unwrap_or(0.0)).collect();
    let acc_rank = average_ranks(&accuracies)?;

    let mut chosen: Vec<usize> = Vec::with_capacity(quota);
    for front in &assignment.fronts {
        let room = quota - chosen.len();
        if room == 0 {
            break;
        }
        if front.len() <= room {
            chosen.extend(front);
            continue;
        }
        let crowding = crowding_distances(records, &acc_rank, front);
        let mut order: Vec<usize> = (0..front.len()).collect();
        order.sort_by(|&a, &b| {
            crowding[b]
                .total_cmp(&crowding[a])
                .then(by_flops_then_id(records)(&front[a], &front[b]))
        });
        chosen.extend(order.into_iter().take(room).map(|k| front[k]));
    }

    chosen.sort_by(|&a, &b| {
        assignment.ranks[a]
            .cmp(&assignment.ranks[b])
            .then(by_flops_then_id(records)(&a, &b))
    });
    Ok(ParetoFront {
        members: chosen
            .into_iter()
            .map(|i| FrontMember {
                id: records[i].id.clone(),
                front: assignment.ranks[i],
            })
            .collect(),
        ranks: records
            .iter()
            .zip(&assignment.ranks)
            .map(|(r, &rank)| (r.id.clone(), rank))
            .collect(),
    })
}

/// Spearman correlation of each coefficient with the realized ratio over a frontier.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FrontierStats {
    pub spearman_r: Correlation,
    pub spearman_d: Correlation,
    pub spearman_w: Correlation,
}

pub fn frontier_stats(front: &ParetoFront, records: &[ExperimentRecord]) -> Result<FrontierStats, ParetoError> {
    if front.is_empty() {
        return Err(ParetoError::Empty);
    }
    let members = front.select(records)?;
    let ratio: Vec<f64> = members.iter().map(|r| r.realized_ratio).collect();
    let column = |f: fn(&ExperimentRecord) -> f64| members.iter().map(|r| f(r)).collect::<Vec<f64>>();
    Ok(FrontierStats {
        spearman_r: spearman(&column(|r| r.coeffs.r), &ratio)?,
        spearman_d: spearman(&column(|r| r.coeffs.d), &ratio)?,
        spearman_w: spearman(&column(|r| r.coeffs.w), &ratio)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arch::ScalingCoefficients;

    fn rec(id: &str, flops: u64, acc: f64) -> ExperimentRecord {
        ExperimentRecord {
            id: id.into(),
            coeffs: ScalingCoefficients::IDENTITY,
            flops,
            params: 1,
            realized_ratio: flops as f64 / 1000.0,
            accuracy: Some(acc),
        }
    }

    #[test]
    fn hand_checked_fronts() {
        let records = [rec("a", 100, 0.70), rec("b", 200, 0.80), rec("c", 200, 0.75)];
        let sorted = nondominated_sort(&records).unwrap();
        assert_eq!(sorted.ranks, [1, 1, 2]);
        assert_eq!(sorted.fronts, [vec![0, 1], vec![2]]);
    }

    #[test]
    fn single_record_is_front_one() {
        let sorted = nondominated_sort(&[rec("a", 1, 0.5)]).unwrap();
        assert_eq!(sorted.ranks, [1]);
    }

    #[test]
    fn duplicates_share_a_front() {
        let records = [rec("a", 100, 0.7), rec("b", 100, 0.7)];
        assert_eq!(nondominated_sort(&records).unwrap().ranks, [1, 1]);
    }

    #[test]
    fn missing_accuracy_lists_ids() {
        let mut records = vec![rec("a", 1, 0.5), rec("b", 2, 0.6), rec("c", 3, 0.7)];
        records[1].accuracy = None;
        records[2].accuracy = None;
        match nondominated_sort(&records) {
            Err(ParetoError::MissingAccuracy(ids)) => assert_eq!(ids, ["b", "c"]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn selection_sizes() {
        let records: Vec<_> = (0..100)
            .map(|i| {
                rec(
                    &format!("r{i:03}"),
                    1000 - (i * 7919) % 997,
                    ((i * 31) % 89) as f64 / 100.0,
                )
            })
            .collect();
        assert_eq!(select_frontier(&records, DEFAULT_FRACTION).unwrap().len(), 20);
        assert_eq!(select_frontier(&records, 1.0).unwrap().len(), 100);
        assert!(matches!(
            select_frontier(&records, 0.0),
            Err(ParetoError::InvalidFraction(_))
        ));
        assert!(matches!(select_frontier(&[], 0.2), Err(ParetoError::Empty)));
    }

    #[test]
    fn truncation_keeps_boundaries() {
        // one front of five, quota of three: both ends survive
        let records = [
            rec("a", 100, 0.50),
            rec("b", 200, 0.60),
            rec("c", 300, 0.61),
            rec("d", 400, 0.62),
            rec("e", 500, 0.90),
        ];
        let front = select_frontier(&records, 0.6).unwrap();
        let ids: Vec<&str> = front.members.iter().map(|m| m.id.as_str()).collect();
        assert_eq!(ids.len(), 3);
        assert!(ids.contains(&"a") && ids.contains(&"e"));
    }

    #[test]
    fn stats_on_monotone_frontier() {
        let mut records: Vec<_> = (0..5)
            .map(|i| rec(&format!("m{i}"), 100 * (i + 1), 0.5 + 0.05 * i as f64))
            .collect();
        for (i, r) in records.iter_mut().enumerate() {
            r.coeffs.r = 0.5 + 0.1 * i as f64;
            r.coeffs.w = 1.0;
        }
        let front = select_frontier(&records, 1.0).unwrap();
        let stats = frontier_stats(&front, &records).unwrap();
        assert_eq!(stats.spearman_r, Correlation::Defined(1.0));
        assert_eq!(stats.spearman_w, Correlation::Degenerate);
    }

    #[test]
    fn two_member_frontier() {
        let mut records = vec![rec("a", 100, 0.6), rec("b", 200, 0.7)];
        records[0].coeffs = ScalingCoefficients { r: 1.2, d: 1.0, w: 0.5 };
        records[1].coeffs = ScalingCoefficients { r: 0.9, d: 1.0, w: 0.8 };
        let front = select_frontier(&records, 1.0).unwrap();
        let stats = frontier_stats(&front, &records).unwrap();
        assert_eq!(stats.spearman_r, Correlation::Defined(-1.0));
        assert_eq!(stats.spearman_d, Correlation::Degenerate);
        assert_eq!(stats.spearman_w, Correlation::Defined(1.0));
    }

    #[test]
    fn stats_json_keys() {
        let stats = FrontierStats {
            spearman_r: Correlation::Defined(0.5),
            spearman_d: Correlation::Degenerate,
            spearman_w: Correlation::Defined(-0.25),
        };
        assert_eq!(
            serde_json::to_string(&stats).unwrap(),
            r#"{"spearman_r":0.5,"spearman_d":null,"spearman_w":-0.25}"#
        );
    }
}
