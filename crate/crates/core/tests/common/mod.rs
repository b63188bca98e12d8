//! Independent reference implementations used as test oracles.
#![allow(dead_code)]

use tinyscale::arch::{ArchitectureSpec, OperatorKind, ResolvedArchitecture, ScalingCoefficients};
use tinyscale::search::ExperimentRecord;

pub fn record(id: &str, flops: u64, accuracy: f64) -> ExperimentRecord {
    ExperimentRecord {
        id: id.to_string(),
        coeffs: ScalingCoefficients::IDENTITY,
        flops,
        params: 1,
        realized_ratio: flops as f64,
        accuracy: Some(accuracy),
    }
}

/// MAC count of a resolved network, summed block by block with closed forms.
pub fn recount_flops(spec: &ArchitectureSpec, net: &ResolvedArchitecture) -> u128 {
    let sq = |x: u32| u128::from(x) * u128::from(x);
    let half = |x: u32| x / 2 + x % 2;
    let mut side = if spec.stem.stride == 2 {
        half(net.resolution)
    } else {
        net.resolution
    };
    let mut total = sq(spec.stem.kernel_size) * u128::from(spec.in_channels) * u128::from(net.stem_channels) * sq(side);
    let mut cin = net.stem_channels;
    for (stage, resolved) in spec.stages.iter().zip(&net.stages) {
        let k2 = sq(stage.kernel_size);
        let cout = resolved.out_channels;
        for b in 0..resolved.repeats {
            let strided = b == 0 && stage.stride == 2;
            let side_in = side;
            if strided {
                side = half(side);
            }
            let e = (f64::from(cin) * stage.expansion_ratio).round() as u32;
            let (ci, co, ee) = (u128::from(cin), u128::from(cout), u128::from(e));
            let a_in = sq(side_in);
            let a_out = sq(side);
            total += match stage.operator_kind {
                OperatorKind::Mbconv => {
                    let expand = if e == cin { 0 } else { ci * ee * a_in };
                    let se = if stage.se_ratio > 0.0 {
                        let h = u128::from(((f64::from(cin) * stage.se_ratio) as u32).max(1));
                        2 * ee * h
                    } else {
                        0
                    };
                    expand + k2 * ee * a_out + se + ee * co * a_out
                }
                OperatorKind::GhostBneck => {
                    let ghost = |c_in: u128, c_out: u32, area: u128| {
                        let p = u128::from(half(c_out));
                        c_in * p * area + (u128::from(c_out) - p) * 9 * area
                    };
                    let dw = if strided { k2 * ee * a_out } else { 0 };
                    let se = if stage.se_ratio > 0.0 {
                        let h = u128::from(((f64::from(e) * stage.se_ratio) as u32).max(1));
                        2 * ee * h
                    } else {
                        0
                    };
                    let shortcut = if strided || cin != cout {
                        k2 * ci * a_out + ci * co * a_out
                    } else {
                        0
                    };
                    ghost(ci, e, a_in) + dw + se + ghost(ee, cout, a_out) + shortcut
                }
                OperatorKind::Conv => k2 * ci * co * a_out,
                OperatorKind::DepthwiseConv => k2 * ci * a_out + ci * co * a_out,
            };
            cin = cout;
        }
    }
    total += u128::from(cin) * u128::from(net.head_channels) * sq(side);
    let features = match net.head_hidden {
        Some(h) => {
            total += u128::from(net.head_channels) * u128::from(h);
            h
        }
        None => net.head_channels,
    };
    total + u128::from(features) * u128::from(spec.head.classes)
}

fn dominates(a: (f64, u64), b: (f64, u64)) -> bool {
    (a.0 > b.0 && a.1 <= b.1) || (a.0 == b.0 && a.1 < b.1)
}

/// Front ranks by repeatedly peeling the nondominated set, O(n²) per front.
pub fn brute_force_fronts(points: &[(f64, u64)]) -> Vec<usize> {
    let n = points.len();
    let mut rank = vec![0usize; n];
    let mut remaining: Vec<usize> = (0..n).collect();
    let mut current = 1;
    while !remaining.is_empty() {
        let front: Vec<usize> = remaining
            .iter()
            .copied()
            .filter(|&i| !remaining.iter().any(|&j| dominates(points[j], points[i])))
            .collect();
        for &i in &front {
            rank[i] = current;
        }
        remaining.retain(|i| !front.contains(i));
        current += 1;
    }
    rank
}

/// Spearman's rho from counted ranks: rank = 1 + #smaller + (#equal − 1) / 2.
pub fn naive_spearman(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let ranks = |v: &[f64]| -> Vec<f64> {
        v.iter()
            .map(|&x| {
                let less = v.iter().filter(|&&y| y < x).count() as f64;
                let equal = v.iter().filter(|&&y| y == x).count() as f64;
                1.0 + less + (equal - 1.0) / 2.0
            })
            .collect()
    };
    let (rx, ry) = (ranks(xs), ranks(ys));
    let n = xs.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for i in 0..xs.len() {
        sxy += (rx[i] - mx) * (ry[i] - my);
        sxx += (rx[i] - mx) * (rx[i] - mx);
        syy += (ry[i] - my) * (ry[i] - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some(sxy / (sxx * syy).sqrt())
}

/// Inverse by Gauss-Jordan elimination with partial pivoting.
pub fn invert(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let mut m: Vec<Vec<f64>> = a
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut r = row.clone();
            r.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
            r
        })
        .collect();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))
            .unwrap();
        m.swap(col, pivot);
        let p = m[col][col];
        for v in m[col].iter_mut() {
            *v /= p;
        }
        let pivot_row = m[col].clone();
        for (row, values) in m.iter_mut().enumerate() {
            let f = values[col];
            if row != col && f != 0.0 {
                for (v, p) in values.iter_mut().zip(&pivot_row) {
                    *v -= f * p;
                }
            }
        }
    }
    m.into_iter().map(|r| r[n..].to_vec()).collect()
}

/// Posterior mean and variance through an explicit inverse of `K + σ²I`.
pub fn explicit_posterior(
    inputs: &[f64],
    targets: &[f64],
    lengthscale: f64,
    signal_variance: f64,
    noise: f64,
    c: f64,
) -> (f64, f64) {
    let k = |a: f64, b: f64| signal_variance * (-(a - b) * (a - b) / (2.0 * lengthscale * lengthscale)).exp();
    let n = inputs.len();
    let gram: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| k(inputs[i], inputs[j]) + if i == j { noise } else { 0.0 })
                .collect()
        })
        .collect();
    let inv = invert(&gram);
    let ks: Vec<f64> = inputs.iter().map(|&x| k(c, x)).collect();
    let mut mean = 0.0;
    let mut quad = 0.0;
    for i in 0..n {
        for j in 0..n {
            mean += ks[i] * inv[i][j] * targets[j];
            quad += ks[i] * inv[i][j] * ks[j];
        }
    }
    (mean, k(c, c) + noise - quad)
}

/// The seeded demo pipeline up to the fitted formula: 100 band samples,
/// synthetic accuracies, top-20% frontier, grid-searched regressors.
pub fn demo_formula(seed: u64) -> tinyscale::formula::TinyFormula {
    use tinyscale::oracle::{oracle_accuracy, OracleConfig};
    use tinyscale::pareto::select_frontier;
    use tinyscale::search::{sample_band, SamplingConfig};

    let spec = ArchitectureSpec::efficientnet_b0();
    let mut records = sample_band(
        &spec,
        &SamplingConfig {
            seed,
            ..SamplingConfig::default()
        },
    )
    .unwrap();
    let oracle = OracleConfig {
        seed,
        ..OracleConfig::default()
    };
    for rec in &mut records {
        rec.accuracy = Some(oracle_accuracy(rec, &oracle).unwrap());
    }
    let front = select_frontier(&records, 0.2).unwrap();
    let frontier: Vec<ExperimentRecord> = front.select(&records).unwrap().into_iter().cloned().collect();
    tinyscale::formula::TinyFormula::fit(&frontier, tinyscale::gpr::MeanFunction::Zero).unwrap()
}
