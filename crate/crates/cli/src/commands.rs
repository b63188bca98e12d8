use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use tinyscale::arch::{ArchitectureSpec, CostModel, ScalingCoefficients};
use tinyscale::formula::TinyFormula;
use tinyscale::gpr::{GprModel, MeanFunction, Target};
use tinyscale::oracle::{label, OracleConfig};
use tinyscale::pareto::{frontier_stats, select_frontier, FrontierStats, ParetoFront};
use tinyscale::search::{sample_at_target, sample_band, ExperimentRecord, RecordStore, SamplingConfig, TargetRatio};

use crate::error::{CliResult, Failure};

pub const ORACLE_FILE: &str = "oracle_accuracy.csv";
pub const FRONTIER_FILE: &str = "frontier.csv";
pub const FRONTIER_STATS_FILE: &str = "frontier_stats.json";
pub const GPR_R_FILE: &str = "gpr_r.json";
pub const GPR_D_FILE: &str = "gpr_d.json";
pub const ORACLE_SOURCE: &str = "synthetic-oracle";

/// Settings shared by every subcommand.
pub struct Context {
    pub spec: ArchitectureSpec,
    pub store: PathBuf,
    pub seed: u64,
    pub out: PathBuf,
}

impl Context {
    fn out_file(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn ensure_out(&self) -> CliResult<()> {
        fs::create_dir_all(&self.out)
            .map_err(|e| Failure::input(e).context(format!("cannot create output directory {}", self.out.display())))
    }

    fn load_store(&self, produced_by: &str) -> CliResult<RecordStore> {
        require(&self.store, produced_by)?;
        Ok(RecordStore::load(&self.store)?)
    }

    /// Records with a known accuracy; an error naming the missing step if none.
    fn labelled_records(&self) -> CliResult<Vec<ExperimentRecord>> {
        let records = self.load_store("sample")?.completed();
        if records.is_empty() {
            return Err(Failure::domain(anyhow::anyhow!(
                "no record in {} has an accuracy yet; run `tinyscale oracle` and `tinyscale ingest` first",
                self.store.display()
            )));
        }
        Ok(records)
    }
}

/// Fails with a message naming the command that produces `path`.
fn require(path: &Path, produced_by: &str) -> CliResult<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Failure::input(anyhow::anyhow!(
            "{} not found; run `tinyscale {produced_by}` first",
            path.display()
        )))
    }
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| Failure::input(e).context(format!("cannot write {}", path.display())))
}

fn write_json(path: &Path, value: &impl Serialize) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(Failure::domain)?;
    text.push('\n');
    write_text(path, &text)
}

fn write_csv<const N: usize>(
    path: &Path,
    header: [&str; N],
    rows: impl IntoIterator<Item = [String; N]>,
) -> CliResult<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    let fail = |e: csv::Error| Failure::domain(e);
    w.write_record(header).map_err(fail)?;
    for row in rows {
        w.write_record(row).map_err(fail)?;
    }
    let bytes = w.into_inner().map_err(|e| Failure::domain(anyhow::anyhow!("{e}")))?;
    write_text(path, &String::from_utf8(bytes).map_err(Failure::domain)?)
}

#[derive(Serialize)]
struct EstimateReport<'a> {
    spec: &'a str,
    r: f64,
    d: f64,
    w: f64,
    resolution: u32,
    blocks: u32,
    flops: u64,
    params: u64,
    ratio: f64,
}

pub fn estimate(ctx: &Context, r: f64, d: f64, w: f64) -> CliResult<()> {
    let coeffs = ScalingCoefficients::new(r, d, w)?;
    let model = CostModel::new(ctx.spec.clone())?;
    let (resolved, cost) = model.evaluate(coeffs)?;
    let report = EstimateReport {
        spec: &ctx.spec.name,
        r,
        d,
        w,
        resolution: resolved.resolution,
        blocks: resolved.total_blocks(),
        flops: cost.flops,
        params: cost.params,
        ratio: model.ratio_of(cost),
    };
    println!("{}", serde_json::to_string_pretty(&report).map_err(Failure::domain)?);
    Ok(())
}

pub struct SampleArgs {
    pub count: usize,
    pub band_low: f64,
    pub band_high: f64,
    pub target: Option<f64>,
}

/// Samples into the store. Records already present with the same
/// coefficients keep their accuracy, so rerunning is harmless.
pub fn sample(ctx: &Context, args: &SampleArgs) -> CliResult<()> {
    let cfg = SamplingConfig {
        band_low: args.band_low,
        band_high: args.band_high,
        target: args.target.map(TargetRatio::new),
        sample_count: args.count,
        seed: ctx.seed,
        ..SamplingConfig::default()
    };
    let drawn = match cfg.target {
        Some(_) => sample_at_target(&ctx.spec, &cfg)?,
        None => sample_band(&ctx.spec, &cfg)?,
    };
    let mut store = if ctx.store.exists() {
        RecordStore::load(&ctx.store)?
    } else {
        RecordStore::new()
    };
    let mut added = 0;
    for rec in drawn {
        match store.get(&rec.id) {
            Some(existing) if existing.coeffs == rec.coeffs => {}
            _ => {
                store.insert(rec)?;
                added += 1;
            }
        }
    }
    if let Some(dir) = ctx.store.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Failure::input(e).context(format!("cannot create {}", dir.display())))?;
    }
    store.save(&ctx.store)?;
    eprintln!("{added} new records, {} in {}", store.len(), ctx.store.display());
    Ok(())
}

/// Labels every stored record with the synthetic oracle.
pub fn oracle(ctx: &Context, noise_sd: f64) -> CliResult<()> {
    let store = ctx.load_store("sample")?;
    let cfg = OracleConfig {
        noise_sd,
        seed: ctx.seed,
    };
    let labels = label(store.records(), &cfg)?;
    ctx.ensure_out()?;
    let path = ctx.out_file(ORACLE_FILE);
    write_csv(
        &path,
        ["id", "accuracy", "source"],
        labels
            .into_iter()
            .map(|(id, acc)| [id, acc.to_string(), ORACLE_SOURCE.to_string()]),
    )?;
    eprintln!("wrote {} synthetic accuracies to {}", store.len(), path.display());
    Ok(())
}

pub fn ingest(ctx: &Context, input: &Path) -> CliResult<()> {
    let mut store = if ctx.store.exists() {
        RecordStore::load(&ctx.store)?
    } else {
        RecordStore::new()
    };
    let file =
        fs::File::open(input).map_err(|e| Failure::input(e).context(format!("cannot open {}", input.display())))?;
    let summary = store
        .ingest(file)
        .map_err(|e| Failure::from(e).context(format!("ingesting {}", input.display())))?;
    store.save(&ctx.store)?;
    let pending = store.records().iter().filter(|r| r.accuracy.is_none()).count();
    eprintln!(
        "{} updated, {} appended, {} pending of {}",
        summary.updated,
        summary.appended,
        pending,
        store.len()
    );
    Ok(())
}

fn frontier_rows(front: &ParetoFront, records: &[ExperimentRecord]) -> CliResult<Vec<[String; 7]>> {
    let members = front.select(records)?;
    Ok(front
        .members
        .iter()
        .zip(members)
        .map(|(m, rec)| {
            [
                rec.id.clone(),
                m.front.to_string(),
                rec.coeffs.r.to_string(),
                rec.coeffs.d.to_string(),
                rec.coeffs.w.to_string(),
                rec.realized_ratio.to_string(),
                rec.accuracy.map(|a| a.to_string()).unwrap_or_default(),
            ]
        })
        .collect())
}

pub fn pareto(ctx: &Context, fraction: f64) -> CliResult<()> {
    let records = ctx.labelled_records()?;
    let front = select_frontier(&records, fraction)?;
    let stats = frontier_stats(&front, &records)?;
    ctx.ensure_out()?;
    write_csv(
        &ctx.out_file(FRONTIER_FILE),
        ["id", "front", "r", "d", "w", "ratio", "accuracy"],
        frontier_rows(&front, &records)?,
    )?;
    write_json(&ctx.out_file(FRONTIER_STATS_FILE), &stats)?;
    eprintln!("{} of {} records on the frontier", front.len(), records.len());
    Ok(())
}

fn read_frontier_ids(path: &Path) -> CliResult<Vec<String>> {
    let mut reader =
        csv::Reader::from_path(path).map_err(|e| Failure::input(e).context(format!("reading {}", path.display())))?;
    let headers = reader.headers().map_err(Failure::input)?.clone();
    let col = headers
        .iter()
        .position(|h| h == "id")
        .ok_or_else(|| Failure::input(anyhow::anyhow!("{} has no `id` column", path.display())))?;
    reader
        .records()
        .map(|row| {
            let row = row.map_err(|e| Failure::input(e).context(format!("reading {}", path.display())))?;
            Ok(row.get(col).unwrap_or_default().to_string())
        })
        .collect()
}

pub fn fit(ctx: &Context, mean: MeanFunction) -> CliResult<()> {
    let frontier_path = ctx.out_file(FRONTIER_FILE);
    require(&frontier_path, "pareto")?;
    let store = ctx.load_store("sample")?;
    let ids = read_frontier_ids(&frontier_path)?;
    let records = ids
        .iter()
        .map(|id| {
            store.get(id).cloned().ok_or_else(|| {
                Failure::input(anyhow::anyhow!(
                    "frontier member `{id}` is not in {}; rerun `tinyscale pareto`",
                    ctx.store.display()
                ))
            })
        })
        .collect::<CliResult<Vec<_>>>()?;
    let needed = tinyscale::gpr::MIN_PAIRS;
    if records.len() < needed {
        return Err(Failure::domain(anyhow::anyhow!(
            "the frontier has {} points but fitting needs at least {needed}; sample more records or raise --fraction",
            records.len()
        )));
    }
    let formula = TinyFormula::fit(&records, mean)?;
    ctx.ensure_out()?;
    formula.model_r().save(&ctx.out_file(GPR_R_FILE))?;
    formula.model_d().save(&ctx.out_file(GPR_D_FILE))?;
    for model in [formula.model_r(), formula.model_d()] {
        let k = model.kernel();
        eprintln!(
            "{}: lengthscale {}, signal variance {}, noise variance {}",
            model.target().expect("fitted models carry a target"),
            k.lengthscale,
            k.signal_variance,
            model.noise_variance()
        );
    }
    Ok(())
}

fn load_model(ctx: &Context, name: &str, target: Target) -> CliResult<GprModel> {
    let path = ctx.out_file(name);
    require(&path, "fit")?;
    let model = GprModel::load(&path)?;
    match model.target() {
        Some(t) if t != target => Err(Failure::input(anyhow::anyhow!(
            "{} holds the {t} model, expected {target}",
            path.display()
        ))),
        _ => Ok(model),
    }
}

/// File name of the solution for reduction factor `c`.
pub fn solution_file(c: f64) -> String {
    format!("tiny_c{c}.json")
}

/// Writes one architecture per budget. Unreachable budgets are still written
/// and turn the exit status into a domain error.
pub fn solve(ctx: &Context, budgets: &[f64]) -> CliResult<()> {
    let formula = TinyFormula::new(
        load_model(ctx, GPR_R_FILE, Target::R)?,
        load_model(ctx, GPR_D_FILE, Target::D)?,
    )?;
    let model = CostModel::new(ctx.spec.clone())?;
    ctx.ensure_out()?;
    let mut unreachable = Vec::new();
    for &c in budgets {
        let solution = formula.solve_with(&model, c)?;
        let doc = solution.to_document(&ctx.spec, format!("{}-c{c}", ctx.spec.name))?;
        write_json(&ctx.out_file(&solution_file(c)), &doc)?;
        println!(
            "c={c} r={:.4} d={:.4} w={:.4} resolution={} flops={} ratio={:.4}{}",
            doc.r,
            doc.d,
            doc.w,
            doc.resolution,
            doc.flops,
            doc.ratio,
            if solution.is_met() { "" } else { " UNREACHABLE" }
        );
        if !solution.is_met() {
            unreachable.push(c);
        }
    }
    if unreachable.is_empty() {
        Ok(())
    } else {
        Err(Failure::domain(anyhow::anyhow!(
            "no architecture within 5% of the budget for c = {unreachable:?}"
        )))
    }
}

type Column = fn(&ExperimentRecord) -> f64;

pub fn report(ctx: &Context, fraction: f64) -> CliResult<()> {
    let store = ctx.load_store("sample")?;
    if store.is_empty() {
        return Err(Failure::domain(anyhow::anyhow!(
            "{} holds no records",
            ctx.store.display()
        )));
    }
    let records = ctx.labelled_records()?;
    let front = select_frontier(&records, fraction)?;
    let stats: FrontierStats = frontier_stats(&front, &records)?;
    ctx.ensure_out()?;
    write_csv(
        &ctx.out_file("acc_vs_flops.csv"),
        ["id", "flops", "ratio", "accuracy", "front", "on_frontier"],
        records.iter().map(|rec| {
            [
                rec.id.clone(),
                rec.flops.to_string(),
                rec.realized_ratio.to_string(),
                rec.accuracy.map(|a| a.to_string()).unwrap_or_default(),
                front.ranks[&rec.id].to_string(),
                front.contains(&rec.id).to_string(),
            ]
        }),
    )?;
    let members = front.select(&records)?;
    let columns: [(&str, Column); 3] = [("r", |r| r.coeffs.r), ("d", |r| r.coeffs.d), ("w", |r| r.coeffs.w)];
    for (name, value) in columns {
        write_csv(
            &ctx.out_file(&format!("frontier_{name}_vs_ratio.csv")),
            ["id", "ratio", name],
            members
                .iter()
                .map(|rec| [rec.id.clone(), rec.realized_ratio.to_string(), value(rec).to_string()]),
        )?;
    }
    write_json(&ctx.out_file("spearman.json"), &stats)?;
    eprintln!(
        "{} records, {} on the frontier; spearman r {:?}, d {:?}, w {:?}",
        records.len(),
        front.len(),
        stats.spearman_r.value(),
        stats.spearman_d.value(),
        stats.spearman_w.value()
    );
    Ok(())
}
