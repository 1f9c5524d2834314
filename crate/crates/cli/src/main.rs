use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use lda_rlct::experiment::{self, ExperimentConfig};
use lda_rlct::rlct::{self, LdaShape, RlctResult};
use lda_rlct::{io as formats, GnMode, Rational64};

#[derive(Parser)]
#[command(name = "lda-rlct", version, about = "Exact and simulated learning coefficients of LDA")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Table of exact learning coefficients over a range of topic counts.
    Rlct(RlctArgs),
    /// Run the Gibbs/WAIC experiment and compare with theory.
    Simulate(SimulateArgs),
    /// Asymptotic learning curve E[G_n] over a grid of sample sizes.
    Curve(CurveArgs),
    /// Summarize a replicate CSV against theory.
    Report(ReportArgs),
}

#[derive(Args)]
struct RlctArgs {
    /// Vocabulary size M.
    #[arg(long)]
    vocab: u32,
    /// Number of documents N.
    #[arg(long)]
    docs: u32,
    /// Topic counts, as `2..5` (inclusive) or `2,3,5`.
    #[arg(long, value_parser = parse_topics)]
    topics: TopicList,
    /// Intrinsic rank r of the truth.
    #[arg(long, conflicts_with = "truth", required_unless_present = "truth")]
    rank: Option<u32>,
    /// Truth file (A0, B0 blocks); r is computed from it.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Write CSV here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    /// Experiment configuration (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the replicate count D.
    #[arg(long)]
    replicates: Option<usize>,
    #[arg(long, value_parser = parse_gn_mode)]
    gn_mode: Option<GnMode>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    /// Also write the shared truth to truth.txt.
    #[arg(long)]
    dump_truth: bool,
}

#[derive(Args)]
struct CurveArgs {
    /// Learning coefficient, e.g. `21/2` or `10.5`.
    #[arg(long, value_parser = parse_rational, required_unless_present = "vocab")]
    lambda: Option<Rational64>,
    #[arg(long, default_value_t = 1)]
    multiplicity: u32,
    /// Parameter dimension d for the regular-model comparison d/(2n).
    #[arg(long)]
    dim: Option<u64>,
    /// Alternatively derive λ, m and d from an LDA shape.
    #[arg(long, requires_all = ["docs", "topics", "rank"], conflicts_with = "lambda")]
    vocab: Option<u32>,
    #[arg(long)]
    docs: Option<u32>,
    #[arg(long)]
    topics: Option<u32>,
    #[arg(long)]
    rank: Option<u32>,
    #[arg(long, default_value_t = 16)]
    from: u64,
    #[arg(long, default_value_t = 100_000)]
    to: u64,
    #[arg(long, default_value_t = 50)]
    points: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// Replicate CSV written by `simulate`.
    replicates: PathBuf,
    #[arg(long)]
    vocab: u32,
    #[arg(long)]
    docs: u32,
    #[arg(long)]
    rank: u32,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
}

#[derive(Clone)]
struct TopicList(Vec<u32>);

fn parse_topics(s: &str) -> Result<TopicList, String> {
    parse_topic_list(s).map(TopicList)
}

fn parse_topic_list(s: &str) -> Result<Vec<u32>, String> {
    if let Some((lo, hi)) = s.split_once("..") {
        let lo: u32 = lo.trim().parse().map_err(|_| format!("bad range start in {s:?}"))?;
        let hi: u32 = hi.trim_start_matches('=').trim().parse().map_err(|_| format!("bad range end in {s:?}"))?;
        if lo > hi {
            return Err(format!("empty range {s:?}"));
        }
        return Ok((lo..=hi).collect());
    }
    s.split(',')
        .map(|t| t.trim().parse().map_err(|_| format!("bad topic count {t:?}")))
        .collect()
}

fn parse_rational(s: &str) -> Result<Rational64, String> {
    if let Some((n, d)) = s.split_once('/') {
        let n: i64 = n.trim().parse().map_err(|_| format!("bad numerator in {s:?}"))?;
        let d: i64 = d.trim().parse().map_err(|_| format!("bad denominator in {s:?}"))?;
        if d == 0 {
            return Err("zero denominator".into());
        }
        return Ok(Rational64::new(n, d));
    }
    let x: f64 = s.parse().map_err(|_| format!("bad number {s:?}"))?;
    Rational64::approximate_float(x).ok_or_else(|| format!("cannot represent {s:?}"))
}

fn parse_gn_mode(s: &str) -> Result<GnMode, String> {
    match s {
        "exact" => Ok(GnMode::Exact),
        "mc" => Ok(GnMode::Mc),
        _ => Err(format!("expected `exact` or `mc`, got {s:?}")),
    }
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    let path = dir.join(name);
    let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(file))
}

fn cmd_rlct(args: RlctArgs) -> Result<()> {
    let topics = args.topics.0;
    if topics.is_empty() {
        bail!("--topics is required");
    }
    let rank = match (&args.truth, args.rank) {
        (Some(path), _) => {
            let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
            let truth = formats::read_truth(BufReader::new(file))
                .with_context(|| format!("reading truth {}", path.display()))?;
            if truth.vocab() != args.vocab as usize || truth.docs() != args.docs as usize {
                bail!(
                    "truth is {} words x {} documents, expected {} x {}",
                    truth.vocab(),
                    truth.docs(),
                    args.vocab,
                    args.docs
                );
            }
            let r = truth.intrinsic_rank()? as u32;
            eprintln!("intrinsic rank from truth: r = {r}, H0 = {}", truth.true_topics());
            for &h in &topics {
                LdaShape::new(args.vocab, args.docs, h, truth.true_topics() as u32, r)?;
            }
            r
        }
        (None, Some(r)) => r,
        (None, None) => bail!("either --rank or --truth is required"),
    };
    let rows = experiment::rlct_table(args.vocab, args.docs, topics, rank)?;
    experiment::write_rlct_csv(output(args.out.as_deref())?, &rows)?;
    Ok(())
}

fn cmd_simulate(args: SimulateArgs) -> Result<()> {
    let mut config = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            ExperimentConfig::from_toml(&text).with_context(|| format!("parsing {}", path.display()))?
        }
        None => ExperimentConfig::reference(),
    };
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(d) = args.replicates {
        config.replicates = d;
    }
    if let Some(mode) = args.gn_mode {
        config.gn_mode = mode;
    }
    config.validate()?;

    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(t) = args.threads {
        pool = pool.num_threads(t);
    }
    let pool = pool.build()?;
    eprintln!(
        "simulating H in {:?}, D = {}, n = {}, {} sweeps per chain",
        config.topics,
        config.replicates,
        config.sample_size,
        config.gibbs.total_sweeps()
    );
    let outcome = pool.install(|| experiment::simulate(&config))?;

    fs::create_dir_all(&args.out_dir).with_context(|| format!("creating {}", args.out_dir.display()))?;
    experiment::write_replicates_csv(create(&args.out_dir, "replicates.csv")?, &outcome.records)?;
    experiment::write_report_csv(create(&args.out_dir, "report.csv")?, &outcome.report)?;
    experiment::write_errorbars_csv(create(&args.out_dir, "errorbars.csv")?, &outcome.report)?;
    let mut summary = create(&args.out_dir, "summary.toml")?;
    summary.write_all(experiment::render_summary(&outcome).as_bytes())?;
    if let (true, Some(truth)) = (args.dump_truth, &outcome.truth) {
        formats::write_truth(create(&args.out_dir, "truth.txt")?, truth)?;
    }
    print!("{}", experiment::render_table(&outcome.report));
    Ok(())
}

fn cmd_curve(args: CurveArgs) -> Result<()> {
    let (rlct, dim) = match (args.lambda, args.vocab) {
        (Some(lambda), _) => (
            RlctResult {
                lambda,
                multiplicity: args.multiplicity,
            },
            args.dim,
        ),
        (None, Some(vocab)) => {
            let shape = LdaShape::with_rank(
                vocab,
                args.docs.unwrap_or_default(),
                args.topics.unwrap_or_default(),
                args.rank.unwrap_or_default(),
            )?;
            (rlct::lda_rlct(&shape), Some(args.dim.unwrap_or(rlct::lda_dimension(&shape))))
        }
        (None, None) => bail!("either --lambda or an LDA shape is required"),
    };
    let grid = experiment::log_grid(args.from, args.to, args.points);
    let rows = experiment::curve_table(rlct, &grid, dim)?;
    experiment::write_curve_csv(output(args.out.as_deref())?, &rows)?;
    Ok(())
}

fn cmd_report(args: ReportArgs) -> Result<()> {
    let file = File::open(&args.replicates).with_context(|| format!("opening {}", args.replicates.display()))?;
    let records = experiment::read_replicates_csv(BufReader::new(file))
        .with_context(|| format!("reading {}", args.replicates.display()))?;
    let report = experiment::summarize(&records, args.vocab, args.docs, args.rank)?;
    fs::create_dir_all(&args.out_dir).with_context(|| format!("creating {}", args.out_dir.display()))?;
    experiment::write_report_csv(create(&args.out_dir, "report.csv")?, &report)?;
    experiment::write_errorbars_csv(create(&args.out_dir, "errorbars.csv")?, &report)?;
    print!("{}", experiment::render_table(&report));
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Rlct(args) => cmd_rlct(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Curve(args) => cmd_curve(args),
        Command::Report(args) => cmd_report(args),
    }
}
