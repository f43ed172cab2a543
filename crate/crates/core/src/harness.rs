//! Parallel experiment execution and serialization behind the CLI.
//!
//! Replica `k` always draws from `StreamKey(seed, domain, k)`, so outputs do
//! not depend on the thread count; rows are collected in replica order.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::Result;
use crate::lattice::{pmf_table, run_diluted, run_pure};
use crate::limit::{sample_limit_pair, sample_limit_pair_timechanged, LimitSample, Model};
use crate::oracle::{
    build_forest, check_replica, forest_svg, realization_for, slit_traffic, write_forest_csv,
    CouplingCase, CouplingOutcome, CouplingStatus,
};
use crate::rng::{Domain, StreamKey};
use crate::semilattice::{run_semilattice, RunRecord};
use crate::stats::{ks_two_sample, spearman, EcdfTable, KsResult};

pub const SCHEMA_LINE: &str = "# driftnet-schema v1";

/// Runs `f` on a dedicated pool of `threads` workers (all cores when `None`).
pub fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n.max(1));
    }
    Ok(builder.build()?.install(f))
}

/// One replica of the configured model.
pub fn run_replica(config: &ExperimentConfig, ell: u64, replica: u64) -> Result<RunRecord> {
    let (field, mu) = config.scaled_fields(ell)?;
    let options = config.run_options(ell);
    let rng = StreamKey::new(config.seed, Domain::Walk, replica).rng();
    match config.model {
        Model::SemiLattice => run_semilattice(ell as f64, &field, &mu, &options, rng, replica),
        Model::DilutedLattice => run_diluted(ell, &field, &mu, &options, rng, replica),
        Model::PureLattice => run_pure(ell, &mu, &options, rng, replica),
    }
}

/// All replicas for one ℓ, in replica order.
pub fn simulate(config: &ExperimentConfig, ell: u64) -> Result<Vec<RunRecord>> {
    (0..config.replicas)
        .into_par_iter()
        .map(|k| run_replica(config, ell, k))
        .collect()
}

pub fn limit_sample_one(config: &ExperimentConfig, index: u64) -> Result<LimitSample> {
    let spec = config.limit_spec()?;
    let control = config.step_control();
    let mut rng = StreamKey::new(config.seed, Domain::Limit, index).rng();
    if config.limit.time_change && config.model == Model::SemiLattice {
        sample_limit_pair_timechanged(&spec, &control, &mut rng)
    } else {
        sample_limit_pair(&spec, &control, &mut rng)
    }
}

pub fn limit_samples(config: &ExperimentConfig) -> Result<Vec<LimitSample>> {
    (0..config.limit_samples())
        .into_par_iter()
        .map(|k| limit_sample_one(config, k))
        .collect()
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_records(out: impl Write, records: &[RunRecord]) -> Result<()> {
    let mut out = out;
    writeln!(out, "{SCHEMA_LINE}")?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["seed_id", "tau", "tau_prime", "T", "T_prime", "censored"])?;
    for r in records {
        w.write_record([
            r.seed_id.to_string(),
            opt(r.tau),
            opt(r.tau_prime),
            r.t.to_string(),
            r.t_prime.to_string(),
            (r.censored() as u8).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_limit_samples(out: impl Write, samples: &[LimitSample]) -> Result<()> {
    let mut out = out;
    writeln!(out, "{SCHEMA_LINE}")?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["theta", "integral", "dt_used", "censored"])?;
    for s in samples {
        w.write_record([
            s.theta.to_string(),
            s.integral.to_string(),
            s.dt_used.to_string(),
            (s.censored as u8).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_pmf(out: impl Write, ell: u64, n_max: u64) -> Result<()> {
    let mut out = out;
    writeln!(out, "{SCHEMA_LINE}")?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["n", "pmf", "cdf"])?;
    for (n, pmf, cdf) in pmf_table(ell, n_max)? {
        w.write_record([n.to_string(), pmf.to_string(), cdf.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Quantiles {
    pub q05: f64,
    pub q25: f64,
    pub q50: f64,
    pub q75: f64,
    pub q95: f64,
}

impl Quantiles {
    fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let e = EcdfTable::new(values.iter().copied()).ok()?;
        Some(Self {
            q05: e.quantile(0.05),
            q25: e.quantile(0.25),
            q50: e.quantile(0.5),
            q75: e.quantile(0.75),
            q95: e.quantile(0.95),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub model: Model,
    pub ell: u64,
    pub replicas: usize,
    pub censor_rate: Option<f64>,
    /// Over uncensored replicas.
    pub tau_scaled: Option<Quantiles>,
    pub t_scaled: Option<Quantiles>,
}

pub fn summarize(model: Model, ell: u64, records: &[RunRecord]) -> RunSummary {
    let l = ell as f64;
    let done: Vec<&RunRecord> = records.iter().filter(|r| !r.censored()).collect();
    let tau: Vec<f64> = done
        .iter()
        .map(|r| r.tau.unwrap() as f64 / (l * l))
        .collect();
    let t: Vec<f64> = done.iter().map(|r| r.t / (l * l * l)).collect();
    RunSummary {
        model,
        ell,
        replicas: records.len(),
        censor_rate: (!records.is_empty()).then(|| 1.0 - done.len() as f64 / records.len() as f64),
        tau_scaled: Quantiles::of(&tau),
        t_scaled: Quantiles::of(&t),
    }
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    fs::create_dir_all(dir)?;
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn write_json(dir: &Path, name: &str, value: &impl Serialize) -> Result<PathBuf> {
    let mut f = create(dir, name)?;
    serde_json::to_writer_pretty(&mut f, value)?;
    writeln!(f)?;
    f.flush()?;
    Ok(dir.join(name))
}

/// Writes `simulate_ell{ℓ}.csv` and `simulate_ell{ℓ}.json` for every ℓ.
pub fn cmd_simulate(config: &ExperimentConfig, out: &Path) -> Result<Vec<RunSummary>> {
    let mut summaries = Vec::new();
    for &ell in &config.ells {
        let records = simulate(config, ell)?;
        let mut f = create(out, &format!("simulate_ell{ell}.csv"))?;
        write_records(&mut f, &records)?;
        f.flush()?;
        let summary = summarize(config.model, ell, &records);
        write_json(out, &format!("simulate_ell{ell}.json"), &summary)?;
        summaries.push(summary);
    }
    Ok(summaries)
}

pub fn cmd_limit_sample(config: &ExperimentConfig, out: &Path) -> Result<usize> {
    let samples = limit_samples(config)?;
    let mut f = create(out, "limit_samples.csv")?;
    write_limit_samples(&mut f, &samples)?;
    f.flush()?;
    Ok(samples.len())
}

pub fn cmd_exact_pmf(ell: u64, n_max: u64, out: &Path) -> Result<PathBuf> {
    let mut f = create(out, &format!("exact_pmf_ell{ell}.csv"))?;
    write_pmf(&mut f, ell, n_max)?;
    f.flush()?;
    Ok(out.join(format!("exact_pmf_ell{ell}.csv")))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompareEntry {
    pub ell: u64,
    pub tau: KsResult,
    pub integral: KsResult,
    pub spearman_walk: Option<f64>,
    pub spearman_limit: Option<f64>,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompareVerdict {
    pub model: Model,
    pub entries: Vec<CompareEntry>,
    pub pass: bool,
}

/// Marginal KS comparison of one walk sample against one limit sample.
///
/// τ/ℓ² is censored at `max_steps/ℓ²` and θ at `t_max`; both statistics are
/// evaluated below the smaller threshold, on the replicas where both walks
/// merged for T/ℓ³.
pub fn compare_samples(
    config: &ExperimentConfig,
    ell: u64,
    records: &[RunRecord],
    limit: &[LimitSample],
) -> Result<CompareEntry> {
    let l = ell as f64;
    let walk_cut = config.max_steps_for(ell) as f64 / (l * l);
    let tau = EcdfTable::from_pairs(
        records
            .iter()
            .map(|r| (r.tau.map_or(walk_cut, |t| t as f64 / (l * l)), r.censored())),
        walk_cut,
    )?;
    let theta = EcdfTable::from_pairs(
        limit.iter().map(|s| (s.theta, s.censored)),
        config.limit.t_max,
    )?;
    let cut = walk_cut.min(config.limit.t_max);
    let tau_ks = ks_two_sample(&tau, &theta, (0.0, cut), config.thresholds.ks_tau)?;

    let walk_t: Vec<f64> = records
        .iter()
        .filter(|r| !r.censored())
        .map(|r| r.t / (l * l * l))
        .collect();
    let limit_t: Vec<f64> = limit
        .iter()
        .filter(|s| !s.censored)
        .map(|s| s.integral)
        .collect();
    let t_hi = walk_t
        .iter()
        .chain(&limit_t)
        .fold(0.0_f64, |m, &v| m.max(v));
    let integral_ks = ks_two_sample(
        &EcdfTable::new(walk_t)?,
        &EcdfTable::new(limit_t)?,
        (0.0, t_hi),
        config.thresholds.ks_integral,
    )?;

    let rank = |pairs: Vec<(f64, f64)>| {
        let (x, y): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        spearman(&x, &y).ok()
    };
    let spearman_walk = rank(
        records
            .iter()
            .filter_map(|r| r.tau.map(|t| (t as f64, r.t)))
            .collect(),
    );
    let spearman_limit = rank(
        limit
            .iter()
            .filter(|s| !s.censored)
            .map(|s| (s.theta, s.integral))
            .collect(),
    );
    Ok(CompareEntry {
        ell,
        pass: tau_ks.pass && integral_ks.pass,
        tau: tau_ks,
        integral: integral_ks,
        spearman_walk,
        spearman_limit,
    })
}

pub fn cmd_compare(config: &ExperimentConfig, out: &Path) -> Result<CompareVerdict> {
    let limit = limit_samples(config)?;
    let mut entries = Vec::new();
    for &ell in &config.ells {
        let records = simulate(config, ell)?;
        entries.push(compare_samples(config, ell, &records, &limit)?);
    }
    let verdict = CompareVerdict {
        model: config.model,
        pass: entries.iter().all(|e| e.pass),
        entries,
    };
    write_json(out, "compare.json", &verdict)?;
    Ok(verdict)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleEntry {
    pub ell: u64,
    pub seeds: u64,
    pub matched: u64,
    pub discarded: u64,
    pub first_mismatch: Option<CouplingOutcome>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleVerdict {
    pub model: Model,
    pub entries: Vec<OracleEntry>,
    pub pass: bool,
}

pub fn coupling_case(config: &ExperimentConfig, ell: u64) -> Result<CouplingCase> {
    let (field, mu) = config.scaled_fields(ell)?;
    Ok(CouplingCase {
        model: config.model,
        ell: ell as f64,
        field,
        mu,
        horizon: config.oracle_horizon(ell),
        height: config.oracle_height(ell)?,
        seed: config.seed,
    })
}

pub fn oracle_entry(config: &ExperimentConfig, ell: u64) -> Result<OracleEntry> {
    let case = coupling_case(config, ell)?;
    let outcomes: Vec<CouplingOutcome> = (0..config.oracle.seeds)
        .into_par_iter()
        .map(|k| check_replica(&case, k))
        .collect::<Result<_>>()?;
    let count = |pred: fn(&CouplingStatus) -> bool| {
        outcomes.iter().filter(|o| pred(&o.status)).count() as u64
    };
    Ok(OracleEntry {
        ell,
        seeds: config.oracle.seeds,
        matched: count(|s| matches!(s, CouplingStatus::Match)),
        discarded: count(|s| matches!(s, CouplingStatus::Discarded { .. })),
        first_mismatch: outcomes
            .into_iter()
            .find(|o| matches!(o.status, CouplingStatus::Mismatch { .. })),
    })
}

pub fn cmd_oracle_check(config: &ExperimentConfig, out: &Path) -> Result<OracleVerdict> {
    let entries = config
        .ells
        .iter()
        .map(|&ell| oracle_entry(config, ell))
        .collect::<Result<Vec<_>>>()?;
    let verdict = OracleVerdict {
        model: config.model,
        pass: entries
            .iter()
            .all(|e| e.first_mismatch.is_none() && e.matched > 0),
        entries,
    };
    write_json(out, "oracle_check.json", &verdict)?;
    Ok(verdict)
}

/// Forest of replica `replica` for the first ℓ, as `forest.svg` and `forest.csv`.
pub fn cmd_forest_dump(
    config: &ExperimentConfig,
    replica: u64,
    out: &Path,
) -> Result<(PathBuf, PathBuf)> {
    let ell = config.ells[0];
    let case = coupling_case(config, ell)?;
    let realization = realization_for(&case, replica)?;
    let forest = build_forest(&realization)?;
    let outcome = slit_traffic(&forest, case.ell, &case.mu)?;
    let mut csv = create(out, "forest.csv")?;
    write_forest_csv(&mut csv, &forest, &outcome)?;
    csv.flush()?;
    fs::write(
        out.join("forest.svg"),
        forest_svg(&forest, &outcome, case.ell),
    )?;
    Ok((out.join("forest.svg"), out.join("forest.csv")))
}
