//! Experiment orchestration: configuration, replicate scheduling, and the
//! CSV/text artifacts behind the `rlct`, `simulate`, `curve` and `report`
//! commands.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use num_rational::Rational64;
use num_traits::ToPrimitive;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{self, GnMode, LossReport, ReplicateSettings};
use crate::gibbs::GibbsConfig;
use crate::io::fmt_real;
use crate::model::{self, TrueModel};
use crate::rlct::{self, LdaShape, RlctResult};

const TRUTH_STREAM: u64 = 0x7472_7574_6800_0000;

/// Full description of a simulation run. `gibbs.seed` is ignored; each
/// replicate gets its own seed derived from `seed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// M
    pub vocab_size: u32,
    /// N
    pub num_docs: u32,
    /// H0
    pub true_topics: u32,
    /// n, training tokens per replicate
    pub sample_size: usize,
    /// n_T, test tokens per replicate when `gn_mode = "mc"`
    #[serde(default = "default_test_size")]
    pub test_size: usize,
    /// D
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    /// Candidate topic counts H.
    pub topics: Vec<u32>,
    #[serde(default)]
    pub gibbs: GibbsConfig,
    /// q'(z); uniform when absent.
    #[serde(default)]
    pub doc_dist: Option<Vec<f64>>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_gn_mode")]
    pub gn_mode: GnMode,
    /// Draw a fresh truth for every replicate instead of one shared truth.
    #[serde(default)]
    pub per_replicate_truth: bool,
}

fn default_test_size() -> usize {
    200_000
}

fn default_replicates() -> usize {
    100
}

fn default_gn_mode() -> GnMode {
    GnMode::Exact
}

impl ExperimentConfig {
    /// Settings of the reference experiment: M = 10, N = 5, H0 = 2,
    /// n = 1000, H = 2..=5, D = 100.
    pub fn reference() -> Self {
        Self {
            vocab_size: 10,
            num_docs: 5,
            true_topics: 2,
            sample_size: 1000,
            test_size: default_test_size(),
            replicates: default_replicates(),
            topics: vec![2, 3, 4, 5],
            gibbs: GibbsConfig::default(),
            doc_dist: None,
            seed: 0,
            gn_mode: GnMode::Exact,
            per_replicate_truth: false,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.topics.is_empty() {
            return Err(Error::Config("topic list is empty".into()));
        }
        let generic = rlct::max_intrinsic_rank(self.vocab_size, self.num_docs, self.true_topics);
        for &h in &self.topics {
            LdaShape::new(self.vocab_size, self.num_docs, h, self.true_topics, generic)?;
        }
        if self.replicates < 2 {
            return Err(Error::Config(format!("need at least 2 replicates, got {}", self.replicates)));
        }
        if self.sample_size == 0 {
            return Err(Error::Config("sample size must be positive".into()));
        }
        if self.gn_mode == GnMode::Mc && self.test_size == 0 {
            return Err(Error::Config("Monte Carlo G_n needs test_size >= 1".into()));
        }
        if self.gibbs.draws < 2 {
            return Err(Error::Config("WAIC needs at least 2 retained draws".into()));
        }
        if let Some(dd) = &self.doc_dist {
            if dd.len() != self.num_docs as usize {
                return Err(Error::Config(format!(
                    "doc_dist has {} entries for {} documents",
                    dd.len(),
                    self.num_docs
                )));
            }
        }
        self.gibbs.validate()
    }
}

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of replicate `replicate` for topic count `topics`.
pub fn derive_seed(master: u64, topics: u64, replicate: u64) -> u64 {
    mix(mix(mix(master) ^ topics) ^ replicate)
}

fn truth_stream_seed(master: u64, replicate: Option<u64>) -> u64 {
    match replicate {
        None => mix(master ^ TRUTH_STREAM),
        Some(d) => derive_seed(master ^ TRUTH_STREAM, 0, d),
    }
}

fn draw_truth(cfg: &ExperimentConfig, seed: u64) -> Result<TrueModel> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sampled = model::sample_true_model(
        cfg.vocab_size as usize,
        cfg.num_docs as usize,
        cfg.true_topics as usize,
        &mut rng,
    )?;
    match &cfg.doc_dist {
        None => Ok(sampled),
        Some(dd) => TrueModel::new(sampled.a0().clone(), sampled.b0().clone(), Some(dd.clone())),
    }
}

/// One row of the replicate CSV.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRecord {
    pub replicate: usize,
    #[serde(rename = "H")]
    pub topics: u32,
    pub n: usize,
    #[serde(rename = "G_n")]
    pub g_n: f64,
    #[serde(rename = "S_n")]
    pub s_n: f64,
    #[serde(rename = "T_n")]
    pub t_n: f64,
    #[serde(rename = "V_n")]
    pub v_n: f64,
    #[serde(rename = "W_n")]
    pub w_n: f64,
    pub lambda_sample: f64,
    pub seed: u64,
}

impl ReplicateRecord {
    fn new(replicate: usize, topics: u32, n: usize, seed: u64, loss: LossReport) -> Self {
        Self {
            replicate,
            topics,
            n,
            g_n: loss.g_n,
            s_n: loss.s_n,
            t_n: loss.t_n,
            v_n: loss.v_n,
            w_n: loss.w_n,
            lambda_sample: loss.lambda_sample,
            seed,
        }
    }
}

pub const REPLICATE_HEADER: [&str; 10] = [
    "replicate",
    "H",
    "n",
    "G_n",
    "S_n",
    "T_n",
    "V_n",
    "W_n",
    "lambda_sample",
    "seed",
];

pub fn write_replicates_csv<W: Write>(out: W, records: &[ReplicateRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(REPLICATE_HEADER)?;
    for r in records {
        w.write_record([
            r.replicate.to_string(),
            r.topics.to_string(),
            r.n.to_string(),
            fmt_real(r.g_n),
            fmt_real(r.s_n),
            fmt_real(r.t_n),
            fmt_real(r.v_n),
            fmt_real(r.w_n),
            fmt_real(r.lambda_sample),
            r.seed.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<output>", e))?;
    Ok(())
}

pub fn read_replicates_csv<R: Read>(input: R) -> Result<Vec<ReplicateRecord>> {
    let mut reader = csv::Reader::from_reader(input);
    let headers = reader.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != REPLICATE_HEADER {
        return Err(Error::parse(1, format!("expected header {}", REPLICATE_HEADER.join(","))));
    }
    let mut records = Vec::new();
    for row in reader.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        let rec: ReplicateRecord = row
            .deserialize(Some(&headers))
            .map_err(|e| Error::parse(line, e.to_string()))?;
        records.push(rec);
    }
    Ok(records)
}

/// Theory against estimate for one topic count.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub topics: u32,
    pub theory: RlctResult,
    pub lambda_hat: f64,
    pub std: f64,
    pub replicates: usize,
    pub abs_diff: f64,
    /// d / 2 for the same shape.
    pub half_dim: Rational64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub vocab: u32,
    pub docs: u32,
    pub rank: u32,
    pub rows: Vec<ReportRow>,
}

/// Groups replicate records by H and compares each group with the exact
/// learning coefficient of LdaShape(M, N, H, r). Row order is ascending H
/// regardless of input order.
pub fn summarize(records: &[ReplicateRecord], vocab: u32, docs: u32, rank: u32) -> Result<ExperimentReport> {
    let mut groups: BTreeMap<u32, Vec<(usize, f64)>> = BTreeMap::new();
    for r in records {
        groups.entry(r.topics).or_default().push((r.replicate, r.lambda_sample));
    }
    if groups.is_empty() {
        return Err(Error::Config("no replicate records".into()));
    }
    let rows = groups
        .into_iter()
        .map(|(h, mut values)| {
            // fixed summation order keeps the summary independent of row order
            values.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
            let values: Vec<f64> = values.into_iter().map(|(_, v)| v).collect();
            let shape = LdaShape::with_rank(vocab, docs, h, rank)?;
            let theory = rlct::lda_rlct(&shape);
            let est = estimator::aggregate(&values)
                .map_err(|e| Error::Config(format!("H = {h}: {e}")))?;
            Ok(ReportRow {
                topics: h,
                theory,
                lambda_hat: est.lambda_hat,
                std: est.std,
                replicates: est.replicates(),
                abs_diff: (theory.lambda_f64() - est.lambda_hat).abs(),
                half_dim: Rational64::new(rlct::lda_dimension(&shape) as i64, 2),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ExperimentReport {
        vocab,
        docs,
        rank,
        rows,
    })
}

/// Exact decimal rendering of a rational whose denominator divides a power
/// of ten (true of every learning coefficient here).
pub fn fmt_rational(x: Rational64) -> String {
    let den = *x.denom();
    let (mut rest, mut twos, mut fives) = (den, 0u32, 0u32);
    while rest % 2 == 0 {
        rest /= 2;
        twos += 1;
    }
    while rest % 5 == 0 {
        rest /= 5;
        fives += 1;
    }
    if rest != 1 {
        return fmt_real(x.to_f64().unwrap_or(f64::NAN));
    }
    let shift = twos.max(fives);
    let scaled = x.numer() * (10i64.pow(shift) / den);
    let sign = if scaled < 0 { "-" } else { "" };
    let abs = scaled.unsigned_abs();
    if shift == 0 {
        return format!("{sign}{abs}");
    }
    let p = 10u64.pow(shift);
    let frac = format!("{:0width$}", abs % p, width = shift as usize);
    format!("{sign}{}.{}", abs / p, frac.trim_end_matches('0'))
}

/// Four significant digits, for display.
pub fn fmt_sig4(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let magnitude = x.abs().log10().floor() as i32;
    let decimals = (3 - magnitude).max(0) as usize;
    format!("{x:.decimals$}")
}

pub const REPORT_HEADER: [&str; 7] = [
    "H",
    "lambda_theory",
    "multiplicity",
    "lambda_hat",
    "std",
    "abs_diff",
    "half_dim",
];

pub fn write_report_csv<W: Write>(out: W, report: &ExperimentReport) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(REPORT_HEADER)?;
    for r in &report.rows {
        w.write_record([
            r.topics.to_string(),
            fmt_real(r.theory.lambda_f64()),
            r.theory.multiplicity.to_string(),
            fmt_real(r.lambda_hat),
            fmt_real(r.std),
            fmt_real(r.abs_diff),
            fmt_real(r.half_dim.to_f64().unwrap_or(f64::NAN)),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<output>", e))?;
    Ok(())
}

/// Error-bar plot data: H, λ, λ̂, std.
pub fn write_errorbars_csv<W: Write>(out: W, report: &ExperimentReport) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["H", "lambda_theory", "lambda_hat", "std"])?;
    for r in &report.rows {
        w.write_record([
            r.topics.to_string(),
            fmt_real(r.theory.lambda_f64()),
            fmt_real(r.lambda_hat),
            fmt_real(r.std),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<output>", e))?;
    Ok(())
}

/// Human-readable table in the layout of the reference results.
pub fn render_table(report: &ExperimentReport) -> String {
    let mut s = format!(
        "M = {}, N = {}, r = {}\n{:>3}  {:>8}  {:>2}  {:>18}  {:>8}  {:>6}\n",
        report.vocab, report.docs, report.rank, "H", "lambda", "m", "lambda_hat +- std", "|diff|", "d/2"
    );
    for r in &report.rows {
        s.push_str(&format!(
            "{:>3}  {:>8}  {:>2}  {:>18}  {:>8}  {:>6}\n",
            r.topics,
            r.theory.lambda.to_string(),
            r.theory.multiplicity,
            format!("{} +- {}", fmt_sig4(r.lambda_hat), fmt_sig4(r.std)),
            fmt_sig4(r.abs_diff),
            fmt_rational(r.half_dim),
        ));
    }
    s
}

#[derive(Serialize)]
struct SummaryRow {
    topics: u32,
    lambda_theory: String,
    multiplicity: u32,
    lambda_hat: String,
    std: String,
    abs_diff: String,
    half_dim: String,
    replicates: usize,
}

#[derive(Serialize)]
struct Summary<'a> {
    tool: &'static str,
    version: &'static str,
    intrinsic_rank: u32,
    truth_seed: Option<u64>,
    truth_note: &'static str,
    config: &'a ExperimentConfig,
    rows: Vec<SummaryRow>,
}

/// Structured-text (TOML) summary with a provenance block. No timestamps,
/// so identical inputs give identical bytes.
pub fn render_summary(outcome: &SimulationOutcome) -> String {
    let rows = outcome
        .report
        .rows
        .iter()
        .map(|r| SummaryRow {
            topics: r.topics,
            lambda_theory: r.theory.lambda.to_string(),
            multiplicity: r.theory.multiplicity,
            lambda_hat: fmt_sig4(r.lambda_hat),
            std: fmt_sig4(r.std),
            abs_diff: fmt_sig4(r.abs_diff),
            half_dim: fmt_rational(r.half_dim),
            replicates: r.replicates,
        })
        .collect();
    let summary = Summary {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        intrinsic_rank: outcome.report.rank,
        truth_seed: outcome.truth_seed,
        truth_note: "truth columns drawn from Dirichlet(1), redrawn until full rank with generic r",
        config: &outcome.config,
        rows,
    };
    toml::to_string(&summary).expect("summary serializes")
}

/// Everything `simulate` produces.
#[derive(Debug, Clone)]
pub struct SimulationOutcome {
    pub config: ExperimentConfig,
    /// Shared truth; `None` with per-replicate truths.
    pub truth: Option<TrueModel>,
    pub truth_seed: Option<u64>,
    pub records: Vec<ReplicateRecord>,
    pub report: ExperimentReport,
}

/// Runs every (H, replicate) pair on the current rayon pool. Results do
/// not depend on the number of threads.
pub fn simulate(config: &ExperimentConfig) -> Result<SimulationOutcome> {
    config.validate()?;
    let generic = rlct::max_intrinsic_rank(config.vocab_size, config.num_docs, config.true_topics);
    let (truth, truth_seed) = if config.per_replicate_truth {
        (None, None)
    } else {
        let seed = truth_stream_seed(config.seed, None);
        (Some(draw_truth(config, seed)?), Some(seed))
    };
    let rank = match &truth {
        Some(t) => t.intrinsic_rank()? as u32,
        None => generic,
    };

    let jobs: Vec<(u32, usize)> = config
        .topics
        .iter()
        .flat_map(|&h| (0..config.replicates).map(move |d| (h, d)))
        .collect();
    let records = jobs
        .par_iter()
        .map(|&(h, d)| {
            let seed = derive_seed(config.seed, u64::from(h), d as u64);
            let owned;
            let truth = match &truth {
                Some(t) => t,
                None => {
                    owned = draw_truth(config, truth_stream_seed(config.seed, Some(d as u64)))?;
                    &owned
                }
            };
            let settings = ReplicateSettings {
                sample_size: config.sample_size,
                gibbs: GibbsConfig {
                    seed,
                    ..config.gibbs.clone()
                },
                gn_mode: config.gn_mode,
                test_size: config.test_size,
            };
            let loss = estimator::lambda_replicate(truth, h as usize, &settings)?;
            Ok(ReplicateRecord::new(d + 1, h, config.sample_size, seed, loss))
        })
        .collect::<Result<Vec<_>>>()?;

    let report = summarize(&records, config.vocab_size, config.num_docs, rank)?;
    Ok(SimulationOutcome {
        config: config.clone(),
        truth,
        truth_seed,
        records,
        report,
    })
}

/// One row of the theory table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RlctRow {
    pub topics: u32,
    pub rlct: RlctResult,
    pub half_dim: Rational64,
}

/// λ, m and d/2 for each H in `topics`, with H0 taken as r + 1.
pub fn rlct_table(vocab: u32, docs: u32, topics: impl IntoIterator<Item = u32>, rank: u32) -> Result<Vec<RlctRow>> {
    topics
        .into_iter()
        .map(|h| {
            let shape = LdaShape::with_rank(vocab, docs, h, rank)?;
            Ok(RlctRow {
                topics: h,
                rlct: rlct::lda_rlct(&shape),
                half_dim: Rational64::new(rlct::lda_dimension(&shape) as i64, 2),
            })
        })
        .collect()
}

pub fn write_rlct_csv<W: Write>(out: W, rows: &[RlctRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["H", "lambda", "multiplicity", "half_dim"])?;
    for r in rows {
        w.write_record([
            r.topics.to_string(),
            fmt_rational(r.rlct.lambda),
            r.rlct.multiplicity.to_string(),
            fmt_rational(r.half_dim),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<output>", e))?;
    Ok(())
}

/// Learning-curve sample: the singular curve and, with a dimension, the
/// regular curve d / (2n).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurveRow {
    pub n: u64,
    pub e_gen_lda: f64,
    pub e_gen_regular: Option<f64>,
}

pub fn curve_table(rlct: RlctResult, grid: &[u64], dimension: Option<u64>) -> Result<Vec<CurveRow>> {
    let curve = rlct::AsymptoticCurve::new(rlct);
    grid.iter()
        .map(|&n| {
            if n < 16 {
                return Err(Error::Domain(format!("curve sample sizes must be >= 16, got {n}")));
            }
            Ok(CurveRow {
                n,
                e_gen_lda: curve.generalization_error(n)?,
                e_gen_regular: dimension.map(|d| d as f64 / (2.0 * n as f64)),
            })
        })
        .collect()
}

/// `points` sample sizes spaced evenly in log scale over [from, to].
pub fn log_grid(from: u64, to: u64, points: usize) -> Vec<u64> {
    if points <= 1 || from >= to {
        return vec![from];
    }
    let (lo, hi) = ((from as f64).ln(), (to as f64).ln());
    let mut grid: Vec<u64> = (0..points)
        .map(|i| (lo + (hi - lo) * i as f64 / (points - 1) as f64).exp().round() as u64)
        .collect();
    grid.dedup();
    grid
}

pub fn write_curve_csv<W: Write>(out: W, rows: &[CurveRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["n", "e_gen_lda", "e_gen_regular"])?;
    for r in rows {
        w.write_record([
            r.n.to_string(),
            fmt_real(r.e_gen_lda),
            r.e_gen_regular.map(fmt_real).unwrap_or_default(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<output>", e))?;
    Ok(())
}
