use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use bias_audit::construction::{Benchmark, ConstructionDescriptor, Operator, Proportion};
use bias_audit::fixtures::{write_table_fixture, TableFixture};
use bias_audit::perturb::{apply_to_instances, apply_to_pair, PerturbationResources};
use bias_audit::pipeline::{
    expand_constructions, read_scores, render_report, run_generate, run_score, run_stability, score_datasets,
    stability_from_scores, write_score_outputs, AuditConfig, DataPaths, PredictorSource, ScoreTable, Sources,
    DATA_DIR_ENV,
};
use bias_audit::stability::DEFAULT_PROPORTIONS;
use bias_audit::wire::{self, validate_dataset, validate_predictions};
use bias_audit::Dataset;
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "bias-audit",
    version,
    about = "Build alternate constructions of bias benchmarks and measure how scores and rankings move"
)]
struct Cli {
    /// Directory holding templates, lexicons and configs.
    #[arg(long, global = true, env = DATA_DIR_ENV)]
    data_dir: Option<PathBuf>,

    /// Worker threads (default: all cores). Output does not depend on this.
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write one dataset file per construction plus a manifest.
    Generate(GenerateArgs),
    /// Apply one operator to an existing baseline dataset file.
    Perturb(PerturbArgs),
    /// Score datasets against prediction files or reference models.
    Score(ScoreArgs),
    /// Rankings, inversions against the baseline, and subsampling distributions.
    Stability(StabilityArgs),
    /// Render a markdown report from a score file.
    Report(ReportArgs),
    /// Check dataset or prediction files against the wire format.
    Validate(ValidateArgs),
    /// Write a dataset and prediction files realizing a shipped table recipe.
    Fixture(FixtureArgs),
}

#[derive(Args)]
struct SourceArgs {
    #[arg(long, value_parser = parse_benchmark)]
    benchmark: Benchmark,
    /// Template file (default: shipped templates for the benchmark).
    #[arg(long)]
    templates: Option<PathBuf>,
    /// Lexicon file (default: shipped lexicon; the desk-scale one for biasnli).
    #[arg(long)]
    lexicon: Option<PathBuf>,
    /// Use the 164-occupation biasnli lexicon.
    #[arg(long, conflicts_with = "lexicon")]
    full_lexicon: bool,
}

#[derive(Args)]
struct SamplingArgs {
    /// Sampling proportion in (0, 1]; repeatable.
    #[arg(long = "proportion", value_parser = parse_proportion)]
    proportions: Vec<Proportion>,
    #[arg(long, default_value_t = 100)]
    trials: u32,
    #[arg(long, default_value_t = 42)]
    seed: u64,
}

#[derive(Args)]
struct GenerateArgs {
    #[command(flatten)]
    source: SourceArgs,
    /// Construction operator; repeatable. Default: every non-sampling construction.
    #[arg(long = "construction", value_parser = parse_operator)]
    constructions: Vec<Operator>,
    #[command(flatten)]
    sampling: SamplingArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PerturbArgs {
    /// Baseline dataset file.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_parser = parse_operator)]
    construction: Operator,
    /// Output dataset file.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PredictorArgs {
    /// Glob over prediction files.
    #[arg(long, conflicts_with = "models")]
    predictions: Option<String>,
    /// Reference model, e.g. `positional`, `stereotype:full`, `blended:full`, `overlap-nli:toy-nli-a`; repeatable.
    #[arg(long = "model")]
    models: Vec<String>,
}

impl PredictorArgs {
    fn source(&self) -> PredictorSource {
        match (&self.predictions, self.models.is_empty()) {
            (Some(glob), _) => PredictorSource::Files(glob.clone()),
            (None, false) => PredictorSource::Reference(self.models.clone()),
            (None, true) => PredictorSource::None,
        }
    }
}

#[derive(Args)]
struct ScoreArgs {
    /// Directory with generated datasets and manifest.json.
    #[arg(long)]
    datasets: PathBuf,
    #[command(flatten)]
    predictor: PredictorArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct StabilityArgs {
    /// Scores to rank: scores.jsonl or a construction x model CSV table.
    #[arg(long, conflicts_with = "datasets")]
    scores: Option<PathBuf>,
    /// Score these datasets first.
    #[arg(long)]
    datasets: Option<PathBuf>,
    /// Needed only to build datasets in memory for reference models.
    #[arg(long, value_parser = parse_benchmark)]
    benchmark: Option<Benchmark>,
    #[arg(long)]
    full_lexicon: bool,
    #[command(flatten)]
    predictor: PredictorArgs,
    #[command(flatten)]
    sampling: SamplingArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ReportArgs {
    /// scores.jsonl or a construction x model CSV table.
    #[arg(long)]
    scores: PathBuf,
    /// Write here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ValidateArgs {
    /// Dataset file; checked alone, or used to resolve prediction ids.
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Prediction file.
    #[arg(long)]
    predictions: Option<PathBuf>,
}

#[derive(Args)]
struct FixtureArgs {
    /// 1 (coref mismatch) or 2 (fraction neutral).
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
    table: u8,
    #[arg(long)]
    out: PathBuf,
}

fn parse_benchmark(s: &str) -> Result<Benchmark, String> {
    s.parse().map_err(|e: bias_audit::Error| e.to_string())
}

fn parse_operator(s: &str) -> Result<Operator, String> {
    s.parse().map_err(|e: bias_audit::Error| e.to_string())
}

fn parse_proportion(s: &str) -> Result<Proportion, String> {
    s.parse().map_err(|e: bias_audit::Error| e.to_string())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(jobs) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let code = e
                .chain()
                .find_map(|c| c.downcast_ref::<bias_audit::Error>())
                .map_or(1, bias_audit::Error::exit_code);
            ExitCode::from(code as u8)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let data = cli.data_dir.map_or_else(DataPaths::discover, DataPaths::new);
    match cli.command {
        Command::Generate(args) => generate(&data, args),
        Command::Perturb(args) => perturb(&data, args),
        Command::Score(args) => score(&data, args),
        Command::Stability(args) => stability(&data, args),
        Command::Report(args) => report(args),
        Command::Validate(args) => validate(args),
        Command::Fixture(args) => {
            let table = if args.table == 1 {
                TableFixture::One
            } else {
                TableFixture::Two
            };
            let manifest = write_table_fixture(table, &data, &args.out)?;
            println!(
                "wrote {} records and predictions to {}",
                manifest.entries[0].count,
                args.out.display()
            );
            Ok(())
        }
    }
}

fn proportions_or_default(given: &[Proportion]) -> Vec<Proportion> {
    if given.is_empty() {
        DEFAULT_PROPORTIONS
            .iter()
            .map(|p| p.parse().expect("valid default"))
            .collect()
    } else {
        given.to_vec()
    }
}

fn base_config(data: &DataPaths, source: &SourceArgs, out: &Path) -> AuditConfig {
    let mut config = AuditConfig::new(source.benchmark, data, out);
    if let Some(t) = &source.templates {
        config.templates = t.clone();
    }
    if let Some(l) = &source.lexicon {
        config.lexicon = l.clone();
    } else if source.full_lexicon {
        config.lexicon = data.full_nli_lexicon();
    }
    config
}

fn generate(data: &DataPaths, args: GenerateArgs) -> Result<()> {
    let mut config = base_config(data, &args.source, &args.out);
    let proportions = proportions_or_default(&args.sampling.proportions);
    if !args.constructions.is_empty() {
        config.constructions = expand_constructions(
            config.benchmark,
            &args.constructions,
            &proportions,
            args.sampling.trials,
            args.sampling.seed,
        )?;
    }
    let manifest = run_generate(&config)?;
    let total: usize = manifest.entries.iter().map(|e| e.count).sum();
    println!(
        "wrote {} dataset file(s), {total} records, manifest in {}",
        manifest.entries.len(),
        args.out.display()
    );
    Ok(())
}

fn perturb(data: &DataPaths, args: PerturbArgs) -> Result<()> {
    let dataset = wire::read_dataset(&args.input)?;
    let benchmark = match dataset.task() {
        bias_audit::Task::Coref => Benchmark::Winogender,
        bias_audit::Task::Nli => Benchmark::Biasnli,
    };
    if args.construction == Operator::Subsample {
        bail!("subsample draws from the lexicon; use `generate --construction subsample`");
    }
    let descriptor = ConstructionDescriptor::new(benchmark, args.construction)?;
    let synonyms = data.synonyms();
    let resources = PerturbationResources::load(
        &data.perturbations(),
        (benchmark == Benchmark::Winogender).then_some(synonyms.as_path()),
    )?;
    let spec = resources.spec_for(args.construction)?;
    let out = match &dataset {
        Dataset::Coref(v) => Dataset::Coref(apply_to_instances(v, &spec, &descriptor)?),
        Dataset::Nli(v) => Dataset::Nli(
            v.iter()
                .enumerate()
                .map(|(i, p)| apply_to_pair(i, p, &spec, &descriptor))
                .collect::<bias_audit::Result<_>>()?,
        ),
    };
    let file = std::fs::File::create(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    wire::write_lines(std::io::BufWriter::new(file), wire::dataset_lines(&out))
        .with_context(|| format!("writing {}", args.out.display()))?;
    println!("wrote {} records to {}", out.len(), args.out.display());
    Ok(())
}

fn score(data: &DataPaths, args: ScoreArgs) -> Result<()> {
    let manifest = bias_audit::pipeline::Manifest::load(&args.datasets)?;
    let mut config = AuditConfig::new(manifest.benchmark, data, &args.out);
    config.dataset_dir = args.datasets.clone();
    config.predictor = args.predictor.source();
    let table = run_score(&config)?;
    print!("{}", table.to_csv()?);
    Ok(())
}

fn stability(data: &DataPaths, args: StabilityArgs) -> Result<()> {
    let predictor = args.predictor.source();
    let (table, benchmark) = if let Some(path) = &args.scores {
        let scores = read_scores(path)?;
        let benchmark = scores
            .first()
            .map(|s| s.construction_id.split('/').next().unwrap_or_default().parse())
            .transpose()?
            .or(args.benchmark)
            .context("score file is empty")?;
        (ScoreTable::from_scores(scores), benchmark)
    } else if let Some(dir) = &args.datasets {
        let manifest = bias_audit::pipeline::Manifest::load(dir)?;
        let datasets = manifest.load_datasets(dir)?;
        let table = score_datasets(&datasets, &predictor, &data.reference_models())?;
        (table, manifest.benchmark)
    } else {
        let benchmark = args
            .benchmark
            .context("give --scores, --datasets, or --benchmark with --model")?;
        if !matches!(predictor, PredictorSource::Reference(_)) {
            bail!("building datasets in memory needs reference models (--model)");
        }
        let mut config = AuditConfig::new(benchmark, data, &args.out);
        if args.full_lexicon {
            config.lexicon = data.full_nli_lexicon();
        }
        let sources = Sources::load(&config)?;
        let datasets = config
            .constructions
            .iter()
            .map(|d| sources.build(d))
            .collect::<bias_audit::Result<Vec<_>>>()?;
        (
            score_datasets(&datasets, &predictor, &config.reference_config)?,
            benchmark,
        )
    };

    let mut config = AuditConfig::new(benchmark, data, &args.out);
    if args.full_lexicon {
        config.lexicon = data.full_nli_lexicon();
    }
    config.predictor = predictor;
    config.trials = args.sampling.trials;
    config.seed = args.sampling.seed;
    config.proportions = proportions_or_default(&args.sampling.proportions);
    write_score_outputs(&table, &args.out)?;
    let report = run_stability(&config, &table)?;
    for inv in &report.inversions {
        let pairs: Vec<String> = inv.pairs.iter().map(|(a, b)| format!("({a}, {b})")).collect();
        println!(
            "{} vs {}: {} inversion(s) {}",
            inv.alternate,
            inv.baseline,
            inv.distance(),
            pairs.join(" ")
        );
    }
    println!("wrote stability report to {}", args.out.display());
    Ok(())
}

fn report(args: ReportArgs) -> Result<()> {
    let table = ScoreTable::from_scores(read_scores(&args.scores)?);
    let benchmark: Benchmark = table
        .constructions
        .first()
        .context("score file is empty")?
        .split('/')
        .next()
        .unwrap_or_default()
        .parse()?;
    let config = AuditConfig::new(benchmark, &DataPaths::discover(), ".");
    let stability = stability_from_scores(&config, &table)?;
    let text = render_report(&table, &stability);
    match args.out {
        Some(path) => std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?,
        None => print!("{text}"),
    }
    Ok(())
}

fn validate(args: ValidateArgs) -> Result<()> {
    let dataset = args.dataset.as_deref().map(validate_dataset).transpose()?;
    if let Some(d) = &dataset {
        println!("dataset: {} valid records", d.len());
    }
    match &args.predictions {
        Some(path) => {
            let check = validate_predictions(path, dataset.as_ref())?;
            println!(
                "predictions: {} valid lines from {} model(s)",
                check.lines,
                check.models.len()
            );
            let uncovered: usize = check.uncovered.values().map(Vec::len).sum();
            if uncovered > 0 {
                for (model, ids) in &check.uncovered {
                    if !ids.is_empty() {
                        eprintln!("model `{model}` misses {} instance(s)", ids.len());
                    }
                }
                let missing: Vec<(String, Vec<String>)> =
                    check.uncovered.into_iter().filter(|(_, ids)| !ids.is_empty()).collect();
                return Err(bias_audit::Error::MissingPrediction {
                    model: missing.iter().map(|(m, _)| m.as_str()).collect::<Vec<_>>().join(","),
                    ids: missing.into_iter().flat_map(|(_, ids)| ids).collect(),
                }
                .into());
            }
        }
        None if dataset.is_none() => bail!("give --dataset and/or --predictions"),
        None => {}
    }
    Ok(())
}
