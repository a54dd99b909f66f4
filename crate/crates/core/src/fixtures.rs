//! Builds datasets and prediction files that realize published score tables from
//! count recipes (`model, count, total`). Used to exercise ingestion and scoring
//! end to end without the original checkpoints.

use std::collections::BTreeMap;
use std::path::Path;

use crate::construction::{generate_biasnli, generate_winogender, Benchmark, ConstructionDescriptor, Dataset};
use crate::error::{Error, Result};
use crate::metrics::Prediction;
use crate::pipeline::{write_dataset_file, write_predictions, DataPaths, Manifest};
use crate::schema::{load_lexicon_for, load_templates, AnswerRole, Gender, Instance, PairInstance, Task, Template};
use crate::wire;

/// One recipe row: `count` of `total` units should score as biased/neutral.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecipeRow {
    pub model: String,
    pub count: u64,
    pub total: u64,
}

pub fn read_recipe(path: &Path) -> Result<Vec<RecipeRow>> {
    let origin = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.trim_start().starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').map(str::trim).collect();
        let [model, count, total] = cols.as_slice() else {
            return Err(Error::parse(&origin, i + 1, "expected `model, count, total`"));
        };
        let num = |s: &str| {
            s.parse::<u64>()
                .map_err(|_| Error::parse(&origin, i + 1, format!("`{s}` is not a count")))
        };
        let row = RecipeRow {
            model: model.to_string(),
            count: num(count)?,
            total: num(total)?,
        };
        if row.count > row.total {
            return Err(Error::parse(&origin, i + 1, "count exceeds total"));
        }
        rows.push(row);
    }
    Ok(rows)
}

fn common_total(rows: &[RecipeRow]) -> Result<u64> {
    let total = rows.first().ok_or_else(|| Error::invalid("recipe is empty"))?.total;
    if rows.iter().any(|r| r.total != total) {
        return Err(Error::invalid("recipe rows disagree on the total"));
    }
    Ok(total)
}

/// `n` copies of one coref schema under distinct ids, giving `2n` pair groups.
pub fn synthetic_coref_templates(n: usize) -> Vec<Template> {
    (0..n)
        .map(|i| {
            Template::coref(
                format!("synthetic.{i:05}"),
                "The $OCCUPATION told the $PARTICIPANT that $NOM_PRONOUN had completed the repair.",
                AnswerRole::Occupation,
                "technician",
                "customer",
            )
            .expect("synthetic template is valid")
        })
        .collect()
}

/// The first `mismatched` pair groups (in key order) get different answers for the
/// two genders; every other item gets the first candidate.
pub fn realize_mismatch_predictions(instances: &[Instance], model: &str, mismatched: u64) -> Result<Vec<Prediction>> {
    let mut groups: Vec<&str> = instances
        .iter()
        .filter(|i| i.pronoun_gender != Gender::Neutral)
        .filter_map(Instance::pair_group)
        .collect();
    groups.sort_unstable();
    groups.dedup();
    if mismatched as usize > groups.len() {
        return Err(Error::invalid(format!(
            "cannot mismatch {mismatched} of {} pair groups",
            groups.len()
        )));
    }
    let flipped: std::collections::HashSet<&str> = groups[..mismatched as usize].iter().copied().collect();
    Ok(instances
        .iter()
        .map(|i| {
            let flip = i.pronoun_gender == Gender::Female && i.pair_group().is_some_and(|g| flipped.contains(g));
            let answer = &i.candidates[usize::from(flip)];
            Prediction::new(&i.id, model, answer.as_str())
        })
        .collect())
}

/// The first `neutral` pairs are labeled neutral; the rest alternate entailment/contradiction.
pub fn realize_neutral_predictions(pairs: &[PairInstance], model: &str, neutral: u64) -> Result<Vec<Prediction>> {
    if neutral as usize > pairs.len() {
        return Err(Error::invalid(format!(
            "cannot label {neutral} of {} pairs neutral",
            pairs.len()
        )));
    }
    Ok(pairs
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let label = if (i as u64) < neutral {
                "neutral"
            } else if i % 2 == 0 {
                "entailment"
            } else {
                "contradiction"
            };
            Prediction::new(&p.id, model, label)
        })
        .collect())
}

/// Coref dataset with `total` pair groups, built from synthetic templates.
pub fn table1_dataset(data: &DataPaths, total: u64) -> Result<Vec<Instance>> {
    if !total.is_multiple_of(2) {
        return Err(Error::invalid("coref fixtures need an even number of pair groups"));
    }
    let lexicon = load_lexicon_for(&data.lexicon(Benchmark::Winogender), Task::Coref)?;
    let templates = synthetic_coref_templates((total / 2) as usize);
    generate_winogender(
        &templates,
        &lexicon,
        &ConstructionDescriptor::baseline(Benchmark::Winogender),
    )
}

/// Nli dataset with `total` pairs: the leading occupations of the full lexicon.
pub fn table2_dataset(data: &DataPaths, total: u64) -> Result<Vec<PairInstance>> {
    let mut lexicon = load_lexicon_for(&data.full_nli_lexicon(), Task::Nli)?;
    let templates = load_templates(&data.templates(Benchmark::Biasnli), Task::Nli)?;
    let per_occupation =
        (templates.len() * lexicon.gendered_entries().count() * lexicon.verbs.len() * lexicon.objects.len()) as u64;
    if per_occupation == 0
        || !total.is_multiple_of(per_occupation)
        || total / per_occupation > lexicon.occupations.len() as u64
    {
        return Err(Error::invalid(format!(
            "{total} pairs is not a whole number of occupations ({per_occupation} pairs each)"
        )));
    }
    lexicon.occupations.truncate((total / per_occupation) as usize);
    generate_biasnli(
        &templates,
        &lexicon,
        &ConstructionDescriptor::baseline(Benchmark::Biasnli),
    )
}

/// Which published table a fixture realizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableFixture {
    /// Coref mismatch rates from `table1_baseline.tsv`.
    One,
    /// Fraction-neutral rates from `table2_baseline.tsv`.
    Two,
}

impl TableFixture {
    pub fn recipe(&self, data: &DataPaths) -> std::path::PathBuf {
        match self {
            TableFixture::One => data.fixture("table1_baseline.tsv"),
            TableFixture::Two => data.fixture("table2_baseline.tsv"),
        }
    }
}

/// Writes the baseline dataset, its manifest, and `predictions/<model>.jsonl` for
/// every recipe row into `out`. Returns the manifest.
pub fn write_table_fixture(table: TableFixture, data: &DataPaths, out: &Path) -> Result<Manifest> {
    let rows = read_recipe(&table.recipe(data))?;
    let total = common_total(&rows)?;
    let (dataset, benchmark) = match table {
        TableFixture::One => (Dataset::Coref(table1_dataset(data, total)?), Benchmark::Winogender),
        TableFixture::Two => (Dataset::Nli(table2_dataset(data, total)?), Benchmark::Biasnli),
    };
    let descriptor = ConstructionDescriptor::baseline(benchmark);
    let entry = write_dataset_file(out, &descriptor, wire::dataset_lines(&dataset).map(Ok))?;
    let manifest = Manifest {
        benchmark,
        entries: vec![entry],
    };
    manifest.write(out)?;
    let mut seen = BTreeMap::new();
    for row in &rows {
        if seen.insert(row.model.as_str(), ()).is_some() {
            return Err(Error::invalid(format!("recipe lists `{}` twice", row.model)));
        }
        let preds = match &dataset {
            Dataset::Coref(v) => realize_mismatch_predictions(v, &row.model, row.count)?,
            Dataset::Nli(v) => realize_neutral_predictions(v, &row.model, row.count)?,
        };
        write_predictions(&out.join("predictions").join(format!("{}.jsonl", row.model)), &preds)?;
    }
    Ok(manifest)
}
