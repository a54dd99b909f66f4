//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits nonzero if any fail.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;
use std::time::{Duration, Instant};

use bias_audit::construction::{
    biasnli_pair_count, construct, generate_biasnli, winogender_instance_count, Benchmark, ConstructionDescriptor,
    Dataset, Operator, Proportion,
};
use bias_audit::fixtures::{write_table_fixture, TableFixture};
use bias_audit::metrics::{fraction_neutral, mismatch_rate, Percent, Prediction};
use bias_audit::perturb::{PerturbationResources, IDENTITY_WORDS};
use bias_audit::pipeline::{
    read_scores, run_generate, run_score, run_stability, AuditConfig, DataPaths, PredictorSource, ScoreTable,
};
use bias_audit::reference::{ReferenceConfig, ReferenceModel};
use bias_audit::schema::{load_lexicon_for, load_templates, Gender, Instance, Lexicon, PairInstance, Task, Template};
use bias_audit::stability::{subsampling_distributions, TrialPredictor};
use bias_audit::text::{find_unique_word, normalize_answer, tokens};
use num_rational::Ratio;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

/// Criterion number, name, optional time limit, check.
type Criterion = (u8, &'static str, Option<Duration>, fn() -> Outcome);

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn ok<T, E: std::fmt::Display>(r: Result<T, E>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

fn data() -> DataPaths {
    DataPaths::new(concat!(env!("CARGO_MANIFEST_DIR"), "/../../data"))
}

struct Wino {
    templates: Vec<Template>,
    lexicon: Lexicon,
    resources: PerturbationResources,
}

fn wino() -> Result<Wino, String> {
    let d = data();
    Ok(Wino {
        templates: ok(load_templates(&d.templates(Benchmark::Winogender), Task::Coref))?,
        lexicon: ok(load_lexicon_for(&d.lexicon(Benchmark::Winogender), Task::Coref))?,
        resources: ok(PerturbationResources::load(&d.perturbations(), Some(&d.synonyms())))?,
    })
}

fn wino_construction(w: &Wino, op: Operator) -> Result<Vec<Instance>, String> {
    let desc = ok(ConstructionDescriptor::new(Benchmark::Winogender, op))?;
    match ok(construct(&w.templates, &w.lexicon, &w.resources, &desc))? {
        Dataset::Coref(v) => Ok(v),
        Dataset::Nli(_) => Err("winogender construction produced nli pairs".into()),
    }
}

fn nli_sources(lexicon: &Path) -> Result<(Vec<Template>, Lexicon, PerturbationResources), String> {
    let d = data();
    Ok((
        ok(load_templates(&d.templates(Benchmark::Biasnli), Task::Nli))?,
        ok(load_lexicon_for(lexicon, Task::Nli))?,
        ok(PerturbationResources::load(&d.perturbations(), None))?,
    ))
}

fn nli_pairs(
    templates: &[Template],
    lexicon: &Lexicon,
    resources: &PerturbationResources,
    desc: &ConstructionDescriptor,
) -> Result<Vec<PairInstance>, String> {
    match ok(construct(templates, lexicon, resources, desc))? {
        Dataset::Nli(v) => Ok(v),
        Dataset::Coref(_) => Err("biasnli construction produced coref instances".into()),
    }
}

fn toy_models(names: &[&str]) -> Result<Vec<ReferenceModel>, String> {
    let config = ok(ReferenceConfig::load(&data().reference_models()))?;
    names
        .iter()
        .map(|n| ok(ReferenceModel::from_spec(n, &config)))
        .collect()
}

/// Criterion 1: Every non-sampling winogender construction: 720 instances, 240 male/female pair groups.
fn winogender_cardinality() -> Outcome {
    let w = wino()?;
    ensure!(
        w.templates.len() == 120,
        "expected 120 templates, found {}",
        w.templates.len()
    );
    for &op in Benchmark::Winogender.operators() {
        let instances = wino_construction(&w, op)?;
        ensure!(instances.len() == 720, "{op}: {} instances", instances.len());
        ensure!(
            instances.len() == winogender_instance_count(&w.templates),
            "{op}: closed form disagrees"
        );
        let mut groups: BTreeMap<&str, Vec<Gender>> = BTreeMap::new();
        for i in instances.iter().filter(|i| i.pronoun_gender != Gender::Neutral) {
            groups
                .entry(i.pair_group().ok_or("instance without pair group")?)
                .or_default()
                .push(i.pronoun_gender);
        }
        ensure!(groups.len() == 240, "{op}: {} pair groups", groups.len());
        for (g, members) in &groups {
            let mut m = members.clone();
            m.sort();
            ensure!(m == [Gender::Male, Gender::Female], "{op}: group {g} has {members:?}");
        }
    }
    Ok("8 constructions x 720 instances, 240 M/F pair groups each".into())
}

/// Brute-force mismatch counter: pairs male and female items by template id and
/// participant wording, independently of the pair-group key.
fn oracle_mismatch(instances: &[Instance], answers: &HashMap<String, String>) -> (i64, i64) {
    let (mut mismatched, mut pairs) = (0, 0);
    for a in instances.iter().filter(|i| i.pronoun_gender == Gender::Male) {
        for b in instances.iter().filter(|i| i.pronoun_gender == Gender::Female) {
            if a.meta("template_id") == b.meta("template_id") && a.meta("participant") == b.meta("participant") {
                pairs += 1;
                if normalize_answer(&answers[&a.id]) != normalize_answer(&answers[&b.id]) {
                    mismatched += 1;
                }
            }
        }
    }
    (mismatched, pairs)
}

fn vary_surface(rng: &mut ChaCha8Rng, s: &str) -> String {
    match rng.gen_range(0..4) {
        0 => s.to_uppercase(),
        1 => format!("  {s} "),
        _ => s.to_string(),
    }
}

/// Criterion 2: Both metrics equal a brute-force count on 1,000 randomized prediction fixtures.
fn metric_oracle() -> Outcome {
    let w = wino()?;
    let coref = wino_construction(&w, Operator::Baseline)?;
    let template_ids: Vec<&str> = w.templates.iter().map(|t| t.id.as_str()).collect();
    let (nt, nl, nr) = nli_sources(&data().lexicon(Benchmark::Biasnli))?;
    let nli = nli_pairs(&nt, &nl, &nr, &ConstructionDescriptor::baseline(Benchmark::Biasnli))?;
    let mut rng = ChaCha8Rng::seed_from_u64(20_231_206);
    for case in 0..1000 {
        if case % 2 == 0 {
            let keep = rng.gen_range(0.02..1.0);
            let chosen: BTreeSet<&str> = template_ids.iter().copied().filter(|_| rng.gen_bool(keep)).collect();
            let subset: Vec<Instance> = coref
                .iter()
                .filter(|i| chosen.contains(i.meta("template_id").unwrap_or_default()))
                .cloned()
                .collect();
            if subset.is_empty() {
                continue;
            }
            let bias = rng.gen_range(0.0..1.0);
            let mut answers = HashMap::new();
            for i in &subset {
                let pick = if rng.gen_bool(bias) { rng.gen_range(0..2) } else { 0 };
                answers.insert(i.id.clone(), vary_surface(&mut rng, &i.candidates[pick]));
            }
            let mut preds: Vec<Prediction> = answers
                .iter()
                .map(|(id, a)| Prediction::new(id, "m", a.as_str()))
                .collect();
            preds.shuffle(&mut rng);
            let score = ok(mismatch_rate(&subset, &preds))?;
            let (m, n) = oracle_mismatch(&subset, &answers);
            ensure!(
                score.value == Percent::from_ratio(Ratio::new(100 * m, n)) && score.n == n as u64,
                "case {case}: metric {} over {}, oracle {m}/{n}",
                score.value,
                score.n
            );
        } else {
            let keep = rng.gen_range(0.01..1.0);
            let subset: Vec<PairInstance> = nli.iter().filter(|_| rng.gen_bool(keep)).cloned().collect();
            if subset.is_empty() {
                continue;
            }
            let labels = ["entailment", "neutral", "contradiction"];
            let mut preds: Vec<Prediction> = subset
                .iter()
                .map(|p| {
                    let label = labels[rng.gen_range(0..3)];
                    Prediction::new(&p.id, "m", vary_surface(&mut rng, label))
                })
                .collect();
            let neutral = preds
                .iter()
                .filter(|p| p.answer.trim().to_lowercase() == "neutral")
                .count() as i64;
            preds.shuffle(&mut rng);
            let score = ok(fraction_neutral(&subset, &preds))?;
            ensure!(
                score.value == Percent::from_ratio(Ratio::new(100 * neutral, subset.len() as i64)),
                "case {case}: metric {}, oracle {neutral}/{}",
                score.value,
                subset.len()
            );
        }
    }
    Ok("1000 fixtures agree exactly".into())
}

fn score_fixture(table: TableFixture) -> Result<ScoreTable, String> {
    let dir = ok(tempfile::tempdir())?;
    let root = dir.path();
    ok(write_table_fixture(table, &data(), root))?;
    let benchmark = match table {
        TableFixture::One => Benchmark::Winogender,
        TableFixture::Two => Benchmark::Biasnli,
    };
    let mut config = AuditConfig::new(benchmark, &data(), root.join("scores"));
    config.dataset_dir = root.to_path_buf();
    config.predictor = PredictorSource::Files(format!("{}/predictions/*.jsonl", root.display()));
    ok(run_score(&config))
}

fn row_cells(table: &ScoreTable, construction: &str, models: &[&str]) -> Vec<String> {
    models
        .iter()
        .map(|m| table.get(construction, m).map_or("-".into(), |s| s.value.to_string()))
        .collect()
}

/// Criterion 3: Shipped table recipes score to the published baseline cells.
fn table_ingestion() -> Outcome {
    let t1 = score_fixture(TableFixture::One)?;
    let models1 = ["ai2spanbert", "qa-small", "qa-base", "qa-large", "longformer"];
    let got1 = row_cells(&t1, "winogender/baseline", &models1);
    ensure!(
        got1 == ["5.83", "5.83", "16.66", "15.41", "9.16"],
        "table 1 baseline row {got1:?}"
    );
    let t2 = score_fixture(TableFixture::Two)?;
    let models2 = [
        "albert",
        "elmo-da",
        "roberta-base-snli",
        "roberta-large-wanli",
        "distilroberta",
    ];
    let got2 = row_cells(&t2, "biasnli/baseline", &models2);
    ensure!(
        got2 == ["44.81", "41.64", "15.25", "16.81", "51.32"],
        "table 2 baseline row {got2:?}"
    );
    Ok(format!("table 1 {} / table 2 {}", got1.join(" "), got2.join(" ")))
}

/// Criterion 4: Table 2 scores: the elmo-da / roberta-base-snli inversion under negation and a 28.24 delta.
fn rank_inversion_oracle() -> Outcome {
    let scores = ok(read_scores(&data().fixture("table2_scores.csv")))?;
    let table = ScoreTable::from_scores(scores);
    let dir = ok(tempfile::tempdir())?;
    let config = AuditConfig::new(Benchmark::Biasnli, &data(), dir.path());
    let report = ok(run_stability(&config, &table))?;
    let base = report
        .rankings
        .iter()
        .find(|r| r.construction_id == "biasnli/baseline")
        .ok_or("no baseline ranking")?;
    let order = base.models();
    ensure!(
        order
            == [
                "distilroberta",
                "albert",
                "elmo-da",
                "roberta-large-wanli",
                "roberta-base-snli"
            ],
        "baseline ranking {order:?}"
    );
    let neg = report
        .inversions
        .iter()
        .find(|i| i.alternate == "biasnli/negation")
        .ok_or("no negation inversion report")?;
    ensure!(
        neg.contains("elmo-da", "roberta-base-snli"),
        "negation inversions {:?}",
        neg.pairs
    );
    let delta = report
        .deltas
        .iter()
        .find(|d| d.model_id == "elmo-da" && d.alternate == "biasnli/negation")
        .ok_or("no ELMo-DA negation delta")?;
    ensure!(delta.delta.to_string() == "28.24", "ELMo-DA delta {}", delta.delta);
    let written = ok(std::fs::read_to_string(dir.path().join("inversions.csv")))?;
    ensure!(
        written.contains("biasnli/baseline,biasnli/negation,elmo-da,roberta-base-snli"),
        "inversions.csv lacks the pair"
    );
    Ok(format!("inversion (elmo-da, roberta-base-snli); delta {}", delta.delta))
}

fn identity_profile(text: &str, extra: &[&str]) -> BTreeMap<String, usize> {
    let mut counts = BTreeMap::new();
    for t in tokens(text) {
        if IDENTITY_WORDS.contains(&t.as_str()) || extra.contains(&t.as_str()) {
            *counts.entry(t).or_insert(0) += 1;
        }
    }
    counts
}

/// Criterion 5: Every operator on every shipped template keeps gold, pronoun and closed-form
/// counts; nli edits are symmetric.
fn perturbation_invariants() -> Outcome {
    let w = wino()?;
    let base = wino_construction(&w, Operator::Baseline)?;
    let key = |i: &Instance| (i.meta("pair_group").unwrap_or_default().to_string(), i.pronoun_gender);
    let by_key: HashMap<_, &Instance> = base.iter().map(|i| (key(i), i)).collect();
    let mut checked = 0;
    for &op in &Benchmark::Winogender.operators()[1..] {
        let out = wino_construction(&w, op)?;
        ensure!(
            out.len() == winogender_instance_count(&w.templates),
            "{op}: count {}",
            out.len()
        );
        let ids: BTreeSet<&str> = out.iter().map(|i| i.id.as_str()).collect();
        ensure!(ids.len() == out.len(), "{op}: duplicate ids");
        for i in &out {
            let b = by_key
                .get(&key(i))
                .ok_or_else(|| format!("{op}: {} has no baseline", i.id))?;
            ensure!(
                i.gold == b.gold && i.candidates == b.candidates,
                "{op}: {} changed gold/candidates",
                i.id
            );
            ensure!(
                i.pronoun == b.pronoun && i.pronoun_gender == b.pronoun_gender,
                "{op}: {} pronoun",
                i.id
            );
            ensure!(i.candidates.contains(&i.gold), "{op}: gold not a candidate");
            ensure!(i.text != b.text, "{op}: {} unchanged", i.id);
            let entities = [b.occupation().unwrap_or_default(), b.participant().unwrap_or_default()];
            ensure!(
                identity_profile(&i.text, &entities) == identity_profile(&b.text, &entities),
                "{op}: identity words changed in `{}`",
                i.text
            );
            checked += 1;
        }
    }

    let d = data();
    for lexicon_path in [d.lexicon(Benchmark::Biasnli), d.full_nli_lexicon()] {
        let (t, l, r) = nli_sources(&lexicon_path)?;
        let base = nli_pairs(&t, &l, &r, &ConstructionDescriptor::baseline(Benchmark::Biasnli))?;
        let per_occupation = biasnli_pair_count(&t, &l) / l.occupations.len();
        let mut descriptors = vec![
            ConstructionDescriptor::new(Benchmark::Biasnli, Operator::Negation).map_err(|e| e.to_string())?,
            ConstructionDescriptor::new(Benchmark::Biasnli, Operator::Clauses).map_err(|e| e.to_string())?,
        ];
        for p in ["0.1", "0.25", "0.5", "1"] {
            for trial in 0..3 {
                descriptors.push(ConstructionDescriptor::subsample(ok(p.parse())?, 42, trial));
            }
        }
        for desc in &descriptors {
            let out = nli_pairs(&t, &l, &r, desc)?;
            let expected = match desc.params.proportion {
                Some(p) => p.of(l.occupations.len()) * per_occupation,
                None => base.len(),
            };
            ensure!(
                out.len() == expected,
                "{}: {} pairs, expected {expected}",
                desc.id,
                out.len()
            );
            for (k, pair) in out.iter().enumerate() {
                ensure!(pair.gold_label.as_str() == "neutral", "{}: gold changed", desc.id);
                let occ = pair.meta("occupation").ok_or("pair without occupation")?;
                let noun = pair.meta("hypothesis_noun").ok_or("pair without noun")?;
                let at = find_unique_word(&pair.premise, occ).map_err(|e| format!("{}: {e}", desc.id))?;
                let swapped = format!("{}{noun}{}", &pair.premise[..at], &pair.premise[at + occ.len()..]);
                ensure!(
                    swapped == pair.hypothesis,
                    "{}: asymmetric edit {:?} / {:?}",
                    desc.id,
                    pair.premise,
                    pair.hypothesis
                );
                if desc.operator != Operator::Subsample {
                    let b = &base[k];
                    ensure!(
                        b.meta("occupation") == Some(occ) && b.meta("hypothesis_noun") == Some(noun),
                        "{}: order",
                        desc.id
                    );
                    ensure!(pair.premise != b.premise, "{}: pair unchanged", desc.id);
                }
                checked += 1;
            }
        }
    }
    Ok(format!("{checked} perturbed items checked"))
}

fn tree_bytes(root: &Path) -> Result<BTreeMap<String, Vec<u8>>, String> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in ok(std::fs::read_dir(&dir))? {
            let path = ok(entry)?.path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path
                    .strip_prefix(root)
                    .map_err(|e| e.to_string())?
                    .display()
                    .to_string();
                out.insert(rel, ok(std::fs::read(&path))?);
            }
        }
    }
    Ok(out)
}

/// Criterion 6: Generation is byte-identical across runs and thread counts, and a
/// full-proportion sample scores exactly like the baseline.
fn determinism() -> Outcome {
    let mut trees = Vec::new();
    for threads in [1, 4, 1] {
        let dir = ok(tempfile::tempdir())?;
        let pool = ok(rayon::ThreadPoolBuilder::new().num_threads(threads).build())?;
        pool.install(|| -> Result<(), String> {
            let wino = AuditConfig::new(Benchmark::Winogender, &data(), dir.path().join("w"));
            ok(run_generate(&wino))?;
            let mut nli = AuditConfig::new(Benchmark::Biasnli, &data(), dir.path().join("n"));
            nli.constructions
                .extend((0..5).map(|t| ConstructionDescriptor::subsample("0.1".parse().unwrap(), 7, t)));
            ok(run_generate(&nli))?;
            Ok(())
        })?;
        trees.push(tree_bytes(dir.path())?);
    }
    ensure!(
        trees[0] == trees[1] && trees[0] == trees[2],
        "generated files differ between runs"
    );
    let files = trees[0].len();

    let models = toy_models(&[
        "overlap-nli:toy-nli-a",
        "overlap-nli:toy-nli-b",
        "overlap-nli:toy-nli-c",
    ])?;
    let d = data();
    for lexicon_path in [d.lexicon(Benchmark::Biasnli), d.full_nli_lexicon()] {
        let (t, l, _) = nli_sources(&lexicon_path)?;
        let base = ok(generate_biasnli(
            &t,
            &l,
            &ConstructionDescriptor::baseline(Benchmark::Biasnli),
        ))?;
        for m in &models {
            let full = ok(fraction_neutral(&base, &ok(m.predict_nli(&base))?))?.value;
            let dists = ok(subsampling_distributions(
                &t,
                &l,
                &[m as &dyn TrialPredictor],
                ok("1".parse::<Proportion>())?,
                3,
                11,
            ))?;
            ensure!(
                dists[0].scores.iter().all(|s| *s == full) && dists[0].full_score == full,
                "{}: proportion 1.0 scores {:?} differ from baseline {full}",
                m.model_id,
                dists[0].scores
            );
        }
    }
    Ok(format!(
        "{files} files identical over 3 runs (1/4/1 threads); p=1.0 equals baseline"
    ))
}

fn score_all(models: &[ReferenceModel], w: &Wino) -> Result<Vec<(Operator, Vec<Percent>)>, String> {
    let mut out = Vec::new();
    for &op in Benchmark::Winogender.operators() {
        let instances = wino_construction(w, op)?;
        let mut row = Vec::new();
        for m in models {
            row.push(ok(mismatch_rate(&instances, &ok(m.predict_coref(&instances))?))?.value);
        }
        out.push((op, row));
    }
    Ok(out)
}

/// Criterion 7: Positional resolution scores 0 everywhere; the full stereotype map scores 100.
fn gender_blind_zero() -> Outcome {
    let w = wino()?;
    let models = toy_models(&["positional", "stereotype:full"])?;
    for (op, row) in score_all(&models, &w)? {
        ensure!(row[0] == Percent::ZERO, "{op}: positional scored {}", row[0]);
        ensure!(row[1] == Percent::HUNDRED, "{op}: stereotype scored {}", row[1]);
    }
    Ok("positional 0.00 and stereotype:full 100.00 on all 8 constructions".into())
}

/// Criterion 8: The blended resolver measures different bias on baseline and clause_participant.
fn construction_sensitivity() -> Outcome {
    const BASELINE: &str = "11.25";
    const CLAUSE_PARTICIPANT: &str = "76.25";
    let w = wino()?;
    let models = toy_models(&["blended:full"])?;
    let rows: HashMap<Operator, Percent> = score_all(&models, &w)?.into_iter().map(|(op, r)| (op, r[0])).collect();
    let base = rows[&Operator::Baseline];
    let clause = rows[&Operator::ClauseParticipant];
    ensure!(base != clause, "no gap: both {base}");
    ensure!(
        base.to_string() == BASELINE && clause.to_string() == CLAUSE_PARTICIPANT,
        "golden values moved: baseline {base}, clause_participant {clause}"
    );
    Ok(format!("baseline {base} vs clause_participant {clause}"))
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Criterion 9: Per-model score spread over 100 trials shrinks from 10% to 50% samples,
/// taking the median over 5 base seeds.
fn variance_monotonicity() -> Outcome {
    let names = [
        "overlap-nli:toy-nli-a",
        "overlap-nli:toy-nli-b",
        "overlap-nli:toy-nli-c",
    ];
    let models = toy_models(&names)?;
    let predictors: Vec<&dyn TrialPredictor> = models.iter().map(|m| m as &dyn TrialPredictor).collect();
    let (t, l, _) = nli_sources(&data().full_nli_lexicon())?;
    let proportions: Vec<Proportion> = ["0.1", "0.25", "0.5"].iter().map(|p| p.parse().unwrap()).collect();
    // model -> proportion index -> std devs over repetitions
    let mut spread = vec![vec![Vec::new(); proportions.len()]; models.len()];
    for seed in 42..47u64 {
        for (pi, &p) in proportions.iter().enumerate() {
            let dists = ok(subsampling_distributions(&t, &l, &predictors, p, 100, seed))?;
            for (mi, d) in dists.iter().enumerate() {
                spread[mi][pi].push(d.summary.std_dev);
            }
        }
    }
    let mut detail = Vec::new();
    for (mi, name) in names.iter().enumerate() {
        let med: Vec<f64> = spread[mi].iter().map(|v| median(v.clone())).collect();
        ensure!(
            med[2].total_cmp(&med[0]).is_lt(),
            "{name}: median sd {:.3} at 0.50 vs {:.3} at 0.10",
            med[2],
            med[0]
        );
        detail.push(format!("{name} {:.2}/{:.2}/{:.2}", med[0], med[1], med[2]));
    }
    Ok(format!("median sd at 0.10/0.25/0.50: {}", detail.join("; ")))
}

fn main() {
    let checks: [Criterion; 9] = [
        (
            1,
            "winogender cardinality",
            Some(Duration::from_secs(1)),
            winogender_cardinality,
        ),
        (2, "metric oracle", Some(Duration::from_secs(5)), metric_oracle),
        (3, "table fixture ingestion", None, table_ingestion),
        (4, "rank inversion oracle", None, rank_inversion_oracle),
        (
            5,
            "perturbation invariants",
            Some(Duration::from_secs(30)),
            perturbation_invariants,
        ),
        (6, "determinism", None, determinism),
        (7, "gender-blind zero", None, gender_blind_zero),
        (8, "construction sensitivity", None, construction_sensitivity),
        (
            9,
            "variance monotonicity",
            Some(Duration::from_secs(120)),
            variance_monotonicity,
        ),
    ];
    let mut failures = 0;
    for (n, name, limit, check) in checks {
        let start = Instant::now();
        let result = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        let elapsed = start.elapsed();
        let result = match (result, limit) {
            (Ok(_), Some(l)) if elapsed > l => Err(format!("took {elapsed:.2?}, limit {l:?}")),
            (r, _) => r,
        };
        match result {
            Ok(detail) => println!("PASS {n} {name} [{elapsed:.2?}] {detail}"),
            Err(why) => {
                failures += 1;
                println!("FAIL {n} {name} [{elapsed:.2?}] {why}");
            }
        }
    }
    if failures > 0 {
        std::process::exit(1);
    }
}
