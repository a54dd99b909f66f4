//! End-to-end runs: dataset generation with a manifest, scoring, stability reports.

use std::collections::{BTreeMap, HashMap};
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::construction::{
    construct_biasnli, construct_winogender, Benchmark, ConstructionDescriptor, Dataset, Operator, Proportion,
};
use crate::error::{Error, Result};
use crate::metrics::{score_dataset, score_delta, BiasScore, Metric, MetricDelta, Percent, Prediction};
use crate::perturb::PerturbationResources;
use crate::reference::{ReferenceConfig, ReferenceModel};
use crate::schema::{load_lexicon_for, load_templates, Lexicon, Template};
use crate::stability::{
    distribution_overlap, rank_inversions, rank_models, subsampling_distributions, Inversions, Ranking,
    TrialDistribution, TrialPredictor, DEFAULT_PROPORTIONS, DEFAULT_TRIALS,
};
use crate::wire::{self, prediction_line};

pub const DATA_DIR_ENV: &str = "BIAS_AUDIT_DATA_DIR";
pub const MANIFEST_FILE: &str = "manifest.json";

/// `$BIAS_AUDIT_DATA_DIR`, else `./data` when it holds benchmark sources, else the
/// data directory of this source tree.
pub fn default_data_dir() -> PathBuf {
    if let Some(dir) = std::env::var_os(DATA_DIR_ENV) {
        return dir.into();
    }
    let local = PathBuf::from("data");
    if local.join("winogender").is_dir() {
        return local;
    }
    PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/../../data"))
}

/// Locations of the shipped source files under a data directory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DataPaths {
    pub root: PathBuf,
}

impl DataPaths {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        DataPaths { root: root.into() }
    }

    pub fn discover() -> Self {
        Self::new(default_data_dir())
    }

    pub fn templates(&self, benchmark: Benchmark) -> PathBuf {
        self.root.join(benchmark.as_str()).join("templates.tsv")
    }

    /// The coref lexicon, or the desk-scale nli lexicon.
    pub fn lexicon(&self, benchmark: Benchmark) -> PathBuf {
        match benchmark {
            Benchmark::Winogender => self.root.join("winogender/lexicon.lex"),
            Benchmark::Biasnli => self.root.join("biasnli/lexicon_demo.lex"),
        }
    }

    /// The 164-occupation nli lexicon.
    pub fn full_nli_lexicon(&self) -> PathBuf {
        self.root.join("biasnli/lexicon_full.lex")
    }

    pub fn synonyms(&self) -> PathBuf {
        self.root.join("winogender/synonyms.tsv")
    }

    pub fn perturbations(&self) -> PathBuf {
        self.root.join("config/perturbations.cfg")
    }

    pub fn reference_models(&self) -> PathBuf {
        self.root.join("config/reference_models.cfg")
    }

    pub fn fixture(&self, name: &str) -> PathBuf {
        self.root.join("fixtures").join(name)
    }
}

/// Where predictions come from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PredictorSource {
    None,
    /// Reference model specs such as `positional` or `blended:full`.
    Reference(Vec<String>),
    /// A glob over prediction files.
    Files(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuditConfig {
    pub benchmark: Benchmark,
    pub constructions: Vec<ConstructionDescriptor>,
    pub templates: PathBuf,
    pub lexicon: PathBuf,
    pub perturbations: PathBuf,
    pub synonyms: Option<PathBuf>,
    pub reference_config: PathBuf,
    pub predictor: PredictorSource,
    /// Directory holding generated datasets and their manifest.
    pub dataset_dir: PathBuf,
    pub out_dir: PathBuf,
    pub seed: u64,
    pub trials: u32,
    pub proportions: Vec<Proportion>,
}

impl AuditConfig {
    /// Shipped sources, every non-sampling construction, default trials and proportions.
    pub fn new(benchmark: Benchmark, data: &DataPaths, out_dir: impl Into<PathBuf>) -> Self {
        let out_dir = out_dir.into();
        let constructions = benchmark
            .operators()
            .iter()
            .filter(|op| **op != Operator::Subsample)
            .map(|op| ConstructionDescriptor::new(benchmark, *op).expect("listed operators are valid"))
            .collect();
        AuditConfig {
            benchmark,
            constructions,
            templates: data.templates(benchmark),
            lexicon: data.lexicon(benchmark),
            perturbations: data.perturbations(),
            synonyms: match benchmark {
                Benchmark::Winogender => Some(data.synonyms()),
                Benchmark::Biasnli => None,
            },
            reference_config: data.reference_models(),
            predictor: PredictorSource::None,
            dataset_dir: out_dir.clone(),
            out_dir,
            seed: 42,
            trials: DEFAULT_TRIALS,
            proportions: DEFAULT_PROPORTIONS
                .iter()
                .map(|p| p.parse().expect("valid default"))
                .collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for d in &self.constructions {
            d.validate()?;
            if d.benchmark != self.benchmark {
                return Err(Error::invalid(format!(
                    "construction `{}` does not belong to {}",
                    d.id, self.benchmark
                )));
            }
        }
        let mut files = vec![&self.templates, &self.lexicon, &self.perturbations];
        files.extend(self.synonyms.as_ref());
        if let Some(missing) = files.into_iter().find(|p| !p.is_file()) {
            return Err(Error::invalid(format!("{} does not exist", missing.display())));
        }
        Ok(())
    }
}

/// Turns operators into descriptors; `subsample` becomes one descriptor per
/// (proportion, trial) under the base seed.
pub fn expand_constructions(
    benchmark: Benchmark,
    operators: &[Operator],
    proportions: &[Proportion],
    trials: u32,
    seed: u64,
) -> Result<Vec<ConstructionDescriptor>> {
    let mut out = Vec::new();
    for &op in operators {
        if op == Operator::Subsample {
            if !op.valid_for(benchmark) {
                return Err(Error::invalid(format!(
                    "construction `{op}` is not defined for {benchmark}"
                )));
            }
            if proportions.is_empty() || trials == 0 {
                return Err(Error::invalid("subsample needs at least one proportion and one trial"));
            }
            for &p in proportions {
                out.extend((0..trials).map(|t| ConstructionDescriptor::subsample(p, seed, t)));
            }
        } else {
            out.push(ConstructionDescriptor::new(benchmark, op)?);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub descriptor: ConstructionDescriptor,
    /// Path relative to the manifest, `/`-separated.
    pub file: String,
    pub count: usize,
    pub sha256: String,
    /// Seed that ranked the occupations, for subsample trials.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub benchmark: Benchmark,
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let manifest: Manifest = serde_json::from_str(&text)?;
        for e in &manifest.entries {
            e.descriptor.validate()?;
        }
        Ok(manifest)
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let path = dir.join(MANIFEST_FILE);
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }

    /// Rejects any file whose content hash differs from the recorded one.
    pub fn verify(&self, dir: &Path) -> Result<()> {
        self.entries.par_iter().try_for_each(|e| {
            let path = dir.join(&e.file);
            let found = sha256_file(&path)?;
            if found != e.sha256 {
                return Err(Error::Integrity {
                    path,
                    expected: e.sha256.clone(),
                    found,
                });
            }
            Ok(())
        })
    }

    /// Verifies, then reads every dataset in manifest order.
    pub fn load_datasets(&self, dir: &Path) -> Result<Vec<Dataset>> {
        self.verify(dir)?;
        self.entries
            .par_iter()
            .map(|e| {
                let dataset = wire::read_dataset(&dir.join(&e.file))?;
                if dataset.len() != e.count {
                    return Err(Error::invalid(format!(
                        "{}: manifest says {} records, file has {}",
                        e.file,
                        e.count,
                        dataset.len()
                    )));
                }
                Ok(dataset)
            })
            .collect()
    }
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let mut file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut hasher = Sha256::new();
    std::io::copy(&mut file, &mut hasher).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(hasher.finalize()))
}

/// Relative file name for a construction: its id as nested directories.
pub fn dataset_file_name(descriptor: &ConstructionDescriptor) -> String {
    format!("{}.jsonl", descriptor.id)
}

/// Writes lines to `dir/<construction id>.jsonl` (via a temporary file) and
/// returns the manifest entry.
pub fn write_dataset_file(
    dir: &Path,
    descriptor: &ConstructionDescriptor,
    lines: impl Iterator<Item = Result<String>>,
) -> Result<ManifestEntry> {
    let file = dataset_file_name(descriptor);
    let path = dir.join(&file);
    let parent = path.parent().expect("joined path has a parent");
    fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    let tmp = path.with_extension("jsonl.partial");
    let mut out = BufWriter::new(File::create(&tmp).map_err(|e| Error::io(&tmp, e))?);
    let mut hasher = Sha256::new();
    let mut count = 0;
    for line in lines {
        let mut line = line?;
        line.push('\n');
        hasher.update(line.as_bytes());
        out.write_all(line.as_bytes()).map_err(|e| Error::io(&tmp, e))?;
        count += 1;
    }
    out.flush().map_err(|e| Error::io(&tmp, e))?;
    drop(out);
    fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))?;
    Ok(ManifestEntry {
        descriptor: descriptor.clone(),
        file,
        count,
        sha256: hex::encode(hasher.finalize()),
        seed: descriptor.params.trial.and(descriptor.sampling_seed()),
    })
}

/// Loaded source files for one benchmark.
#[derive(Debug, Clone)]
pub struct Sources {
    pub templates: Vec<Template>,
    pub lexicon: Lexicon,
    pub resources: PerturbationResources,
}

impl Sources {
    pub fn load(config: &AuditConfig) -> Result<Self> {
        let task = config.benchmark.task();
        Ok(Sources {
            templates: load_templates(&config.templates, task)?,
            lexicon: load_lexicon_for(&config.lexicon, task)?,
            resources: PerturbationResources::load(&config.perturbations, config.synonyms.as_deref())?,
        })
    }

    pub fn build(&self, descriptor: &ConstructionDescriptor) -> Result<Dataset> {
        crate::construction::construct(&self.templates, &self.lexicon, &self.resources, descriptor)
    }
}

fn write_construction(sources: &Sources, descriptor: &ConstructionDescriptor, dir: &Path) -> Result<ManifestEntry> {
    match descriptor.benchmark {
        Benchmark::Winogender => {
            let instances = construct_winogender(&sources.templates, &sources.lexicon, &sources.resources, descriptor)?;
            write_dataset_file(dir, descriptor, instances.iter().map(|i| Ok(wire::instance_line(i))))
        }
        Benchmark::Biasnli => {
            let pairs = construct_biasnli(&sources.templates, &sources.lexicon, &sources.resources, descriptor)?;
            write_dataset_file(dir, descriptor, pairs.map(|p| p.map(|p| wire::pair_line(&p))))
        }
    }
}

/// Writes one dataset file per construction plus `manifest.json` into `out_dir`.
/// Every descriptor is checked before anything is written.
pub fn run_generate(config: &AuditConfig) -> Result<Manifest> {
    config.validate()?;
    let sources = Sources::load(config)?;
    let dir = &config.out_dir;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let entries = config
        .constructions
        .par_iter()
        .map(|d| write_construction(&sources, d, dir))
        .collect::<Result<Vec<_>>>()?;
    let manifest = Manifest {
        benchmark: config.benchmark,
        entries,
    };
    manifest.write(dir)?;
    Ok(manifest)
}

/// Scores in a construction × model grid.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ScoreTable {
    pub constructions: Vec<String>,
    pub models: Vec<String>,
    pub scores: Vec<BiasScore>,
}

impl ScoreTable {
    /// Row and column order follow first appearance.
    pub fn from_scores(scores: Vec<BiasScore>) -> Self {
        let mut table = ScoreTable::default();
        for s in &scores {
            if !table.constructions.contains(&s.construction_id) {
                table.constructions.push(s.construction_id.clone());
            }
            if !table.models.contains(&s.model_id) {
                table.models.push(s.model_id.clone());
            }
        }
        table.scores = scores;
        table
    }

    pub fn get(&self, construction: &str, model: &str) -> Option<&BiasScore> {
        self.scores
            .iter()
            .find(|s| s.construction_id == construction && s.model_id == model)
    }

    pub fn row(&self, construction: &str) -> Vec<BiasScore> {
        self.scores
            .iter()
            .filter(|s| s.construction_id == construction)
            .cloned()
            .collect()
    }

    /// The `<benchmark>/baseline` row id, when present.
    pub fn baseline(&self) -> Option<&str> {
        self.constructions
            .iter()
            .find(|c| c.ends_with("/baseline"))
            .map(String::as_str)
    }

    /// Constructions other than subsample trials.
    pub fn fixed_constructions(&self) -> Vec<&str> {
        self.constructions
            .iter()
            .filter(|c| !c.contains("/subsample/"))
            .map(String::as_str)
            .collect()
    }

    /// `baseline − alternate` for every model and non-baseline construction.
    pub fn deltas(&self) -> Result<Vec<MetricDelta>> {
        let Some(baseline) = self.baseline() else {
            return Ok(Vec::new());
        };
        let mut out = Vec::new();
        for c in self.fixed_constructions() {
            if c == baseline {
                continue;
            }
            for m in &self.models {
                if let (Some(b), Some(a)) = (self.get(baseline, m), self.get(c, m)) {
                    out.push(score_delta(b, a)?);
                }
            }
        }
        Ok(out)
    }

    /// CSV with constructions as rows and models as columns, two-decimal cells.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["construction".to_string()];
        header.extend(self.models.iter().cloned());
        w.write_record(&header)?;
        for c in &self.constructions {
            let mut row = vec![c.clone()];
            row.extend(
                self.models
                    .iter()
                    .map(|m| self.get(c, m).map_or(String::new(), |s| s.value.to_string())),
            );
            w.write_record(&row)?;
        }
        finish_csv(w)
    }

    pub fn deltas_csv(&self) -> Result<String> {
        let deltas = self.deltas()?;
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["model", "baseline", "alternate", "metric", "delta"])?;
        for d in &deltas {
            w.write_record([
                d.model_id.as_str(),
                &d.baseline,
                &d.alternate,
                d.metric.as_str(),
                &d.delta.to_string(),
            ])?;
        }
        finish_csv(w)
    }
}

fn finish_csv(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| Error::invalid(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn metric_for(construction: &str) -> Result<Metric> {
    let benchmark: Benchmark = construction.split('/').next().unwrap_or_default().parse()?;
    Ok(match benchmark {
        Benchmark::Winogender => Metric::MfMismatchPct,
        Benchmark::Biasnli => Metric::NeutralPct,
    })
}

/// Reads `scores.jsonl` records, or a construction × model CSV table whose cells
/// are decimal percentages (the metric follows the construction's benchmark).
pub fn read_scores(path: &Path) -> Result<Vec<BiasScore>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    if path.extension().is_some_and(|e| e == "jsonl") {
        return text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| Ok(serde_json::from_str(l)?))
            .collect();
    }
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let models: Vec<String> = reader.headers()?.iter().skip(1).map(str::to_string).collect();
    let mut out = Vec::new();
    for row in reader.records() {
        let row = row?;
        let construction = row.get(0).unwrap_or_default().to_string();
        let metric = metric_for(&construction)?;
        for (model, cell) in models.iter().zip(row.iter().skip(1)) {
            if cell.trim().is_empty() {
                continue;
            }
            out.push(BiasScore::new(
                model,
                &construction,
                metric,
                cell.parse::<Percent>()?,
                0,
            ));
        }
    }
    Ok(out)
}

/// Groups predictions from every file matching `pattern` by model, in order of first
/// appearance across the sorted file list.
pub fn load_prediction_files(pattern: &str) -> Result<Vec<(String, Vec<Prediction>)>> {
    let mut paths: Vec<PathBuf> = glob::glob(pattern)
        .map_err(|e| Error::invalid(format!("bad prediction glob `{pattern}`: {e}")))?
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::invalid(e.to_string()))?;
    paths.sort();
    if paths.is_empty() {
        return Err(Error::invalid(format!("no prediction files match `{pattern}`")));
    }
    let mut order: Vec<String> = Vec::new();
    let mut by_model: HashMap<String, Vec<Prediction>> = HashMap::new();
    for path in paths {
        for p in wire::read_predictions(&path)? {
            if !by_model.contains_key(&p.model_id) {
                order.push(p.model_id.clone());
            }
            by_model.entry(p.model_id.clone()).or_default().push(p);
        }
    }
    Ok(order
        .into_iter()
        .map(|m| {
            let preds = by_model.remove(&m).expect("model seen");
            (m, preds)
        })
        .collect())
}

/// Scores every dataset in the manifest for every model.
pub fn score_datasets(
    datasets: &[Dataset],
    predictor: &PredictorSource,
    reference_config: &Path,
) -> Result<ScoreTable> {
    let mut per_model: Vec<(String, Vec<Vec<Prediction>>)> = Vec::new();
    match predictor {
        PredictorSource::None => return Err(Error::invalid("no predictions or reference models given")),
        PredictorSource::Reference(specs) => {
            let config = ReferenceConfig::load(reference_config)?;
            for spec in specs {
                let model = ReferenceModel::from_spec(spec, &config)?;
                let preds = datasets.iter().map(|d| model.predict(d)).collect::<Result<Vec<_>>>()?;
                per_model.push((model.model_id.clone(), preds));
            }
        }
        PredictorSource::Files(pattern) => {
            let mut owner: HashMap<&str, usize> = HashMap::new();
            for (i, d) in datasets.iter().enumerate() {
                for id in d.ids() {
                    owner.insert(id, i);
                }
            }
            for (model, preds) in load_prediction_files(pattern)? {
                let mut split = vec![Vec::new(); datasets.len()];
                for p in preds {
                    let i = *owner
                        .get(p.instance_id.as_str())
                        .ok_or_else(|| Error::UnknownInstance(p.instance_id.clone()))?;
                    split[i].push(p);
                }
                per_model.push((model, split));
            }
        }
    }
    let jobs: Vec<(usize, usize)> = (0..datasets.len())
        .flat_map(|d| (0..per_model.len()).map(move |m| (d, m)))
        .collect();
    let scores = jobs
        .par_iter()
        .map(|&(d, m)| {
            let (model, preds) = &per_model[m];
            let mut score = match score_dataset(&datasets[d], &preds[d]) {
                Err(Error::MissingPrediction { ids, .. }) => {
                    return Err(Error::MissingPrediction {
                        model: model.clone(),
                        ids,
                    })
                }
                other => other?,
            };
            score.model_id = model.clone();
            Ok(score)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ScoreTable::from_scores(scores))
}

/// Verifies the manifest in `config.dataset_dir`, scores every dataset and writes
/// `scores.csv`, `deltas.csv` and `scores.jsonl` into `config.out_dir`.
pub fn run_score(config: &AuditConfig) -> Result<ScoreTable> {
    let manifest = Manifest::load(&config.dataset_dir)?;
    let datasets = manifest.load_datasets(&config.dataset_dir)?;
    let table = score_datasets(&datasets, &config.predictor, &config.reference_config)?;
    write_score_outputs(&table, &config.out_dir)?;
    Ok(table)
}

pub fn write_score_outputs(table: &ScoreTable, dir: &Path) -> Result<()> {
    write_text(&dir.join("scores.csv"), &table.to_csv()?)?;
    write_text(&dir.join("deltas.csv"), &table.deltas_csv()?)?;
    let mut jsonl = String::new();
    for s in &table.scores {
        jsonl.push_str(&serde_json::to_string(s)?);
        jsonl.push('\n');
    }
    write_text(&dir.join("scores.jsonl"), &jsonl)
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport {
    pub rankings: Vec<Ranking>,
    /// Each non-baseline construction against the baseline.
    pub inversions: Vec<Inversions>,
    pub deltas: Vec<MetricDelta>,
    pub distributions: Vec<TrialDistribution>,
    /// `(proportion, model a, model b, overlap)`
    pub overlaps: Vec<(Proportion, String, String, f64)>,
}

/// Rankings and inversions for fixed constructions, plus trial distributions from
/// subsample scores (or, for nli reference models, computed directly).
pub fn stability_from_scores(config: &AuditConfig, table: &ScoreTable) -> Result<StabilityReport> {
    let rankings = table
        .fixed_constructions()
        .into_iter()
        .map(|c| rank_models(&table.row(c)))
        .collect::<Result<Vec<_>>>()?;
    let mut inversions = Vec::new();
    if let Some(base) = rankings.iter().find(|r| r.construction_id.ends_with("/baseline")) {
        for r in rankings.iter().filter(|r| r.construction_id != base.construction_id) {
            inversions.push(rank_inversions(base, r)?);
        }
    }

    let mut distributions = distributions_from_scores(table)?;
    if distributions.is_empty() && config.benchmark == Benchmark::Biasnli {
        if let PredictorSource::Reference(specs) = &config.predictor {
            let rc = ReferenceConfig::load(&config.reference_config)?;
            let models = specs
                .iter()
                .map(|s| ReferenceModel::from_spec(s, &rc))
                .collect::<Result<Vec<_>>>()?;
            let predictors: Vec<&dyn TrialPredictor> = models.iter().map(|m| m as &dyn TrialPredictor).collect();
            let sources = Sources::load(config)?;
            for &p in &config.proportions {
                distributions.extend(subsampling_distributions(
                    &sources.templates,
                    &sources.lexicon,
                    &predictors,
                    p,
                    config.trials,
                    config.seed,
                )?);
            }
        }
    }

    let mut overlaps = Vec::new();
    let mut by_prop: BTreeMap<Proportion, Vec<&TrialDistribution>> = BTreeMap::new();
    for d in &distributions {
        by_prop.entry(d.proportion).or_default().push(d);
    }
    for (p, ds) in by_prop {
        for (i, a) in ds.iter().enumerate() {
            for b in &ds[i + 1..] {
                overlaps.push((p, a.model_id.clone(), b.model_id.clone(), distribution_overlap(a, b)?));
            }
        }
    }

    Ok(StabilityReport {
        rankings,
        inversions,
        deltas: table.deltas()?,
        distributions,
        overlaps,
    })
}

/// Rebuilds trial distributions from scored subsample constructions. Each model
/// must have a score for every trial found for its proportion, and a baseline score.
fn distributions_from_scores(table: &ScoreTable) -> Result<Vec<TrialDistribution>> {
    // (proportion, seed) -> trial -> model -> score
    type TrialScores<'a> = BTreeMap<u32, HashMap<&'a str, Percent>>;
    let mut grouped: BTreeMap<(Proportion, u64), TrialScores> = BTreeMap::new();
    let mut metric = None;
    for s in &table.scores {
        if !s.construction_id.contains("/subsample/") {
            continue;
        }
        let d = parse_construction_id(&s.construction_id)?;
        let (Some(p), Some(seed), Some(t)) = (d.params.proportion, d.params.seed, d.params.trial) else {
            continue;
        };
        metric = Some(s.metric);
        grouped
            .entry((p, seed))
            .or_default()
            .entry(t)
            .or_default()
            .insert(&s.model_id, s.value);
    }
    let Some(metric) = metric else {
        return Ok(Vec::new());
    };
    let baseline = table
        .baseline()
        .ok_or_else(|| Error::invalid("subsample scores need a baseline score for each model"))?;
    let mut out = Vec::new();
    for ((p, seed), trials) in grouped {
        for model in &table.models {
            let mut scores = Vec::new();
            for (t, row) in &trials {
                let v = row.get(model.as_str()).ok_or_else(|| Error::MissingTrial {
                    model: model.clone(),
                    trial: t.to_string(),
                })?;
                scores.push(*v);
            }
            let full = table
                .get(baseline, model)
                .ok_or_else(|| Error::invalid(format!("no baseline score for `{model}`")))?
                .value;
            out.push(TrialDistribution::new(
                model,
                metric,
                p,
                seed,
                trials.keys().copied().collect(),
                scores,
                full,
            )?);
        }
    }
    Ok(out)
}

/// Parses a construction id such as `biasnli/subsample/p=0.1/seed=42/trial=7`.
pub fn parse_construction_id(id: &str) -> Result<ConstructionDescriptor> {
    let mut parts = id.split('/');
    let benchmark: Benchmark = parts.next().unwrap_or_default().parse()?;
    let operator: Operator = parts
        .next()
        .ok_or_else(|| Error::invalid(format!("construction id `{id}` lacks an operator")))?
        .parse()?;
    let mut params = crate::construction::ConstructionParams::default();
    for part in parts {
        let bad = || Error::invalid(format!("bad parameter `{part}` in construction id `{id}`"));
        let (k, v) = part.split_once('=').ok_or_else(bad)?;
        match k {
            "p" => params.proportion = Some(v.parse()?),
            "seed" => params.seed = Some(v.parse().map_err(|_| bad())?),
            "trial" => params.trial = Some(v.parse().map_err(|_| bad())?),
            _ => return Err(bad()),
        }
    }
    let d = ConstructionDescriptor::with_params(benchmark, operator, params)?;
    if d.id != id {
        return Err(Error::invalid(format!(
            "construction id `{id}` is not canonical (expected `{}`)",
            d.id
        )));
    }
    Ok(d)
}

fn f4(v: f64) -> String {
    format!("{v:.4}")
}

/// Writes rankings, inversions, Kendall distances, deltas, per-trial distribution
/// rows, their summaries and pairwise overlaps as CSV into `dir`.
pub fn write_stability_outputs(report: &StabilityReport, dir: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["construction", "rank", "model", "score", "bias"])?;
    for r in &report.rankings {
        for e in &r.entries {
            w.write_record([
                r.construction_id.as_str(),
                &e.rank.to_string(),
                &e.model_id,
                &e.score.to_string(),
                &e.bias.to_string(),
            ])?;
        }
    }
    write_text(&dir.join("rankings.csv"), &finish_csv(w)?)?;

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["baseline", "alternate", "model_a", "model_b"])?;
    let mut k = csv::Writer::from_writer(Vec::new());
    k.write_record(["baseline", "alternate", "kendall_distance"])?;
    for inv in &report.inversions {
        for (a, b) in &inv.pairs {
            w.write_record([inv.baseline.as_str(), &inv.alternate, a, b])?;
        }
        k.write_record([inv.baseline.as_str(), &inv.alternate, &inv.distance().to_string()])?;
    }
    write_text(&dir.join("inversions.csv"), &finish_csv(w)?)?;
    write_text(&dir.join("kendall.csv"), &finish_csv(k)?)?;

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["model", "baseline", "alternate", "metric", "delta"])?;
    for d in &report.deltas {
        w.write_record([
            d.model_id.as_str(),
            &d.baseline,
            &d.alternate,
            d.metric.as_str(),
            &d.delta.to_string(),
        ])?;
    }
    write_text(&dir.join("deltas.csv"), &finish_csv(w)?)?;

    if report.distributions.is_empty() {
        return Ok(());
    }
    let mut rows = csv::Writer::from_writer(Vec::new());
    rows.write_record(["trial", "model", "proportion", "score"])?;
    let mut summary = csv::Writer::from_writer(Vec::new());
    summary.write_record([
        "model",
        "proportion",
        "trials",
        "full_score",
        "mean",
        "std_dev",
        "min",
        "q1",
        "median",
        "q3",
        "max",
    ])?;
    for d in &report.distributions {
        let p = d.proportion.to_string();
        for (t, s) in d.trials.iter().zip(&d.scores) {
            rows.write_record([t.to_string(), d.model_id.clone(), p.clone(), f4(s.as_f64())])?;
        }
        let sm = &d.summary;
        summary.write_record([
            d.model_id.clone(),
            p.clone(),
            d.trials.len().to_string(),
            f4(d.full_score.as_f64()),
            f4(sm.mean),
            f4(sm.std_dev),
            f4(sm.min),
            f4(sm.q1),
            f4(sm.median),
            f4(sm.q3),
            f4(sm.max),
        ])?;
    }
    write_text(&dir.join("distribution.csv"), &finish_csv(rows)?)?;
    write_text(&dir.join("distribution_summary.csv"), &finish_csv(summary)?)?;

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["proportion", "model_a", "model_b", "overlap"])?;
    for (p, a, b, v) in &report.overlaps {
        w.write_record([p.to_string(), a.clone(), b.clone(), f4(*v)])?;
    }
    write_text(&dir.join("overlap.csv"), &finish_csv(w)?)
}

/// [`stability_from_scores`] followed by [`write_stability_outputs`] into `config.out_dir`.
pub fn run_stability(config: &AuditConfig, table: &ScoreTable) -> Result<StabilityReport> {
    let report = stability_from_scores(config, table)?;
    write_stability_outputs(&report, &config.out_dir)?;
    Ok(report)
}

fn row_label(construction: &str) -> String {
    match parse_construction_id(construction) {
        Ok(d) if d.params.is_empty() => d.operator.label().to_string(),
        _ => construction.to_string(),
    }
}

/// Markdown report: the score table with readable row labels, deltas against
/// the baseline, rankings, inversions and (when present) trial summaries.
pub fn render_report(table: &ScoreTable, stability: &StabilityReport) -> String {
    let mut out = String::new();
    let metric = table.scores.first().map(|s| s.metric);
    let title = match metric {
        Some(Metric::MfMismatchPct) => "Percentage M-F mismatch",
        Some(Metric::NeutralPct) => "Percentage neutral",
        None => "Scores",
    };
    out.push_str(&format!("# {title}\n\n"));
    out.push_str(&format!("| Construction | {} |\n", table.models.join(" | ")));
    out.push_str(&format!("|---|{}\n", "---:|".repeat(table.models.len())));
    for c in table.fixed_constructions() {
        let cells: Vec<String> = table
            .models
            .iter()
            .map(|m| table.get(c, m).map_or("-".into(), |s| s.value.to_string()))
            .collect();
        out.push_str(&format!("| {} | {} |\n", row_label(c), cells.join(" | ")));
    }

    if !stability.deltas.is_empty() {
        out.push_str("\n## Change from baseline (baseline - alternate)\n\n");
        out.push_str("| Model | Construction | Delta |\n|---|---|---:|\n");
        for d in &stability.deltas {
            out.push_str(&format!(
                "| {} | {} | {} |\n",
                d.model_id,
                row_label(&d.alternate),
                d.delta
            ));
        }
    }

    if !stability.rankings.is_empty() {
        out.push_str("\n## Rankings (least biased first)\n\n");
        for r in &stability.rankings {
            let listed: Vec<String> = r
                .entries
                .iter()
                .map(|e| format!("{}. {}", e.rank, e.model_id))
                .collect();
            out.push_str(&format!("- {}: {}\n", row_label(&r.construction_id), listed.join(", ")));
        }
    }

    if !stability.inversions.is_empty() {
        out.push_str("\n## Rank inversions against the baseline\n\n");
        for inv in &stability.inversions {
            let pairs: Vec<String> = inv.pairs.iter().map(|(a, b)| format!("({a}, {b})")).collect();
            let listed = if pairs.is_empty() {
                "none".to_string()
            } else {
                pairs.join(", ")
            };
            out.push_str(&format!(
                "- {}: Kendall distance {}; {}\n",
                row_label(&inv.alternate),
                inv.distance(),
                listed
            ));
        }
    }

    if !stability.distributions.is_empty() {
        out.push_str("\n## Subsampling trials\n\n");
        out.push_str("| Model | Proportion | Trials | Full | Mean | Std dev | Min | Median | Max |\n");
        out.push_str("|---|---:|---:|---:|---:|---:|---:|---:|---:|\n");
        for d in &stability.distributions {
            let s = &d.summary;
            out.push_str(&format!(
                "| {} | {} | {} | {:.2} | {:.2} | {:.2} | {:.2} | {:.2} | {:.2} |\n",
                d.model_id,
                d.proportion,
                d.trials.len(),
                d.full_score.as_f64(),
                s.mean,
                s.std_dev,
                s.min,
                s.median,
                s.max
            ));
        }
        if !stability.overlaps.is_empty() {
            out.push_str(
                "\nOverlap is the share of paired trials whose ordering of the two models differs \
                 from the full-dataset ordering. It is a proxy defined by this tool, not a published statistic.\n\n",
            );
            out.push_str("| Proportion | Model A | Model B | Overlap |\n|---:|---|---|---:|\n");
            for (p, a, b, v) in &stability.overlaps {
                out.push_str(&format!("| {p} | {a} | {b} | {v:.4} |\n"));
            }
        }
    }
    out
}

/// Writes one prediction file.
pub fn write_predictions(path: &Path, predictions: &[Prediction]) -> Result<()> {
    let mut text = String::with_capacity(predictions.len() * 64);
    for p in predictions {
        text.push_str(&prediction_line(p));
        text.push('\n');
    }
    write_text(path, &text)
}
