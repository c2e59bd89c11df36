//! The dataset model: utterances, interpretations, annotation distributions
//! and cross-validation splits.
//!
//! Files are UTF-8 with LF line endings, tab-separated; `#` starts a
//! comment. A supervised record has four required fields
//!
//! ```text
//! denominal<TAB>context<TAB>RELATION<TAB>verb:count,verb:count,...
//! ```
//!
//! plus two optional trailing fields: a source tag (`adult`, `child`,
//! `corpus` or `historical`; default `corpus`) and a decade stamp (e.g.
//! `1880`). An unsupervised record is just `denominal<TAB>context`.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::relations::RelationType;
use crate::{Error, Result};

/// Bare message of an error, for re-wrapping with file/line context.
fn bare_message(e: Error) -> String {
    match e {
        Error::Format { msg, .. } => msg,
        Error::Contract(msg) => msg,
        other => other.to_string(),
    }
}

/// A denominal verb with its single-word object context.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Utterance {
    pub denominal: String,
    pub context: String,
}

impl Utterance {
    pub fn new(denominal: impl Into<String>, context: impl Into<String>) -> Result<Self> {
        let u = Utterance {
            denominal: denominal.into(),
            context: context.into(),
        };
        if u.denominal.is_empty() || u.context.is_empty() {
            return Err(Error::contract("utterance tokens must be nonempty"));
        }
        Ok(u)
    }
}

/// A paraphrase verb plus a semantic relation.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Interpretation {
    pub verb: String,
    pub relation: RelationType,
}

impl Interpretation {
    pub fn new(verb: impl Into<String>, relation: RelationType) -> Self {
        Interpretation {
            verb: verb.into(),
            relation,
        }
    }
}

/// Provenance of a supervised example.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum SourceTag {
    Adult,
    Child,
    Corpus,
    Historical,
}

impl SourceTag {
    pub fn as_str(&self) -> &'static str {
        match self {
            SourceTag::Adult => "adult",
            SourceTag::Child => "child",
            SourceTag::Corpus => "corpus",
            SourceTag::Historical => "historical",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "adult" => Some(SourceTag::Adult),
            "child" => Some(SourceTag::Child),
            "corpus" => Some(SourceTag::Corpus),
            "historical" => Some(SourceTag::Historical),
            _ => None,
        }
    }
}

/// An annotated utterance with vote-counted gold interpretations.
#[derive(Debug, Clone)]
pub struct SupervisedExample {
    pub utterance: Utterance,
    pub gold: Vec<(Interpretation, u32)>,
    pub source: SourceTag,
    pub decade: Option<i32>,
}

impl SupervisedExample {
    pub fn validate(&self) -> Result<()> {
        if self.gold.is_empty() {
            return Err(Error::contract("supervised example has no gold entries"));
        }
        if self.gold.iter().all(|(_, votes)| *votes == 0) {
            return Err(Error::contract("supervised example has all-zero votes"));
        }
        Ok(())
    }

    /// The training target: highest votes, ties broken lexicographically by
    /// verb token.
    pub fn top_gold(&self) -> &Interpretation {
        self.gold
            .iter()
            .max_by(|(ia, va), (ib, vb)| va.cmp(vb).then_with(|| ib.verb.cmp(&ia.verb)))
            .map(|(i, _)| i)
            .expect("validated example has gold entries")
    }

    pub fn gold_verbs(&self) -> Vec<&str> {
        self.gold.iter().map(|(i, _)| i.verb.as_str()).collect()
    }
}

/// A discrete distribution over tokens.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotationDistribution {
    pub support: Vec<String>,
    pub probabilities: Vec<f64>,
}

impl AnnotationDistribution {
    pub fn new(support: Vec<String>, probabilities: Vec<f64>) -> Result<Self> {
        let dist = AnnotationDistribution {
            support,
            probabilities,
        };
        dist.validate()?;
        Ok(dist)
    }

    pub fn validate(&self) -> Result<()> {
        if self.support.len() != self.probabilities.len() {
            return Err(Error::contract("support/probability length mismatch"));
        }
        if self.probabilities.iter().any(|p| *p < 0.0 || !p.is_finite()) {
            return Err(Error::contract("probabilities must be finite and nonnegative"));
        }
        let total: f64 = self.probabilities.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::contract(format!(
                "probabilities sum to {total}, expected 1"
            )));
        }
        let mut seen = HashSet::new();
        for s in &self.support {
            if !seen.insert(s) {
                return Err(Error::contract(format!("duplicate support entry {s:?}")));
            }
        }
        Ok(())
    }

    pub fn probability_of(&self, token: &str) -> f64 {
        self.support
            .iter()
            .position(|s| s == token)
            .map(|i| self.probabilities[i])
            .unwrap_or(0.0)
    }
}

/// Supervised and unsupervised splits of one dataset.
#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub supervised: Vec<SupervisedExample>,
    pub unsupervised: Vec<Utterance>,
}

impl Dataset {
    /// Drop every record using `token` as its denominal verb, and report how
    /// many were removed. Used together with the vocabulary-level role
    /// removal to keep a prediction target out of all training data.
    pub fn exclude_denominal_target(&mut self, token: &str) -> usize {
        let before = self.supervised.len() + self.unsupervised.len();
        self.supervised.retain(|ex| ex.utterance.denominal != token);
        self.unsupervised.retain(|u| u.denominal != token);
        before - self.supervised.len() - self.unsupervised.len()
    }
}

/// The empirical verb distribution induced by an example's vote counts.
pub fn empirical_distribution(example: &SupervisedExample) -> Result<AnnotationDistribution> {
    let total: u32 = example.gold.iter().map(|(_, v)| v).sum();
    if total == 0 {
        return Err(Error::contract("all-zero vote counts"));
    }
    // Merge votes for the same verb across relations.
    let mut votes: BTreeMap<&str, u32> = BTreeMap::new();
    for (interp, v) in &example.gold {
        *votes.entry(interp.verb.as_str()).or_insert(0) += v;
    }
    let support: Vec<String> = votes.keys().map(|s| s.to_string()).collect();
    let probabilities: Vec<f64> = votes.values().map(|&v| v as f64 / total as f64).collect();
    AnnotationDistribution::new(support, probabilities)
}

/// Load a dataset file. Malformed lines are reported with their line number.
pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let text = fs::read_to_string(path)?;
    let mut dataset = Dataset::default();
    let mut seen_sup: HashSet<Utterance> = HashSet::new();
    let mut seen_unsup: HashSet<Utterance> = HashSet::new();
    let mut any_line = false;
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() || line.trim_start().starts_with('#') {
            continue;
        }
        any_line = true;
        let fields: Vec<&str> = line.split('\t').collect();
        match fields.len() {
            2 => {
                let utt = Utterance::new(fields[0], fields[1])
                    .map_err(|e| Error::format_at(path, lineno + 1, bare_message(e)))?;
                if !seen_unsup.insert(utt.clone()) {
                    return Err(Error::format_at(
                        path,
                        lineno + 1,
                        format!("duplicate unsupervised pair ({}, {})", utt.denominal, utt.context),
                    ));
                }
                dataset.unsupervised.push(utt);
            }
            4..=6 => {
                let utt = Utterance::new(fields[0], fields[1])
                    .map_err(|e| Error::format_at(path, lineno + 1, bare_message(e)))?;
                let relation: RelationType = fields[2]
                    .parse()
                    .map_err(|e: Error| Error::format_at(path, lineno + 1, bare_message(e)))?;
                let gold = parse_gold(fields[3], relation)
                    .map_err(|e| Error::format_at(path, lineno + 1, bare_message(e)))?;
                let source = match fields.get(4) {
                    Some(s) => SourceTag::parse(s).ok_or_else(|| {
                        Error::format_at(path, lineno + 1, format!("unknown source tag {s:?}"))
                    })?,
                    None => SourceTag::Corpus,
                };
                let decade = match fields.get(5) {
                    Some(s) => Some(s.parse::<i32>().map_err(|_| {
                        Error::format_at(path, lineno + 1, format!("bad decade {s:?}"))
                    })?),
                    None => None,
                };
                let example = SupervisedExample {
                    utterance: utt.clone(),
                    gold,
                    source,
                    decade,
                };
                example
                    .validate()
                    .map_err(|e| Error::format_at(path, lineno + 1, bare_message(e)))?;
                if !seen_sup.insert(utt.clone()) {
                    return Err(Error::format_at(
                        path,
                        lineno + 1,
                        format!("duplicate supervised pair ({}, {})", utt.denominal, utt.context),
                    ));
                }
                dataset.supervised.push(example);
            }
            n => {
                return Err(Error::format_at(
                    path,
                    lineno + 1,
                    format!("expected 2 fields (unsupervised) or 4-6 (supervised), got {n}"),
                ));
            }
        }
    }
    if !any_line {
        return Err(Error::Format {
            path: Some(path.display().to_string()),
            line: None,
            msg: "dataset file has no records".into(),
        });
    }
    Ok(dataset)
}

fn parse_gold(field: &str, relation: RelationType) -> Result<Vec<(Interpretation, u32)>> {
    let mut gold = Vec::new();
    for part in field.split(',') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        let (verb, count) = match part.rsplit_once(':') {
            Some((v, c)) => {
                let count = c
                    .parse::<u32>()
                    .map_err(|_| Error::format(format!("bad vote count in {part:?}")))?;
                (v, count)
            }
            None => (part, 1),
        };
        if verb.is_empty() {
            return Err(Error::format(format!("empty verb in gold entry {part:?}")));
        }
        gold.push((Interpretation::new(verb, relation), count));
    }
    if gold.is_empty() {
        return Err(Error::format("gold field has no entries"));
    }
    Ok(gold)
}

/// Serialize a dataset in the load format (stable field order).
pub fn serialize_dataset(dataset: &Dataset) -> String {
    let mut out = String::new();
    for ex in &dataset.supervised {
        let gold: Vec<String> = ex
            .gold
            .iter()
            .map(|(i, v)| format!("{}:{v}", i.verb))
            .collect();
        let relation = ex.gold.first().map(|(i, _)| i.relation).unwrap_or(RelationType::LocatumOn);
        write!(
            out,
            "{}\t{}\t{}\t{}",
            ex.utterance.denominal,
            ex.utterance.context,
            relation,
            gold.join(",")
        )
        .unwrap();
        match (ex.source, ex.decade) {
            (s, Some(d)) => write!(out, "\t{}\t{d}", s.as_str()).unwrap(),
            (SourceTag::Corpus, None) => {}
            (s, None) => write!(out, "\t{}", s.as_str()).unwrap(),
        }
        out.push('\n');
    }
    for u in &dataset.unsupervised {
        writeln!(out, "{}\t{}", u.denominal, u.context).unwrap();
    }
    out
}

/// Split the supervised set into `k` folds of size ⌊n/k⌋ or ⌈n/k⌉.
///
/// Returns `(train, test)` pairs: each train side carries the other folds'
/// supervised examples plus the entire unsupervised set. Deterministic for
/// a given seed.
pub fn kfold_split(
    dataset: &Dataset,
    k: usize,
    seed: u64,
) -> Result<Vec<(Dataset, Vec<SupervisedExample>)>> {
    let n = dataset.supervised.len();
    if k < 2 {
        return Err(Error::contract("k must be at least 2"));
    }
    if k > n {
        return Err(Error::contract(format!(
            "k = {k} exceeds the {n} supervised examples"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);

    // First n % k folds take an extra example.
    let base = n / k;
    let extra = n % k;
    let mut folds: Vec<Vec<usize>> = Vec::with_capacity(k);
    let mut cursor = 0;
    for f in 0..k {
        let size = base + usize::from(f < extra);
        folds.push(order[cursor..cursor + size].to_vec());
        cursor += size;
    }

    let mut splits = Vec::with_capacity(k);
    for f in 0..k {
        let test: Vec<SupervisedExample> = folds[f]
            .iter()
            .map(|&i| dataset.supervised[i].clone())
            .collect();
        let mut train = Dataset {
            supervised: Vec::with_capacity(n - test.len()),
            unsupervised: dataset.unsupervised.clone(),
        };
        for (g, fold) in folds.iter().enumerate() {
            if g == f {
                continue;
            }
            train
                .supervised
                .extend(fold.iter().map(|&i| dataset.supervised[i].clone()));
        }
        splits.push((train, test));
    }
    Ok(splits)
}

/// Group supervised utterances by each gold (verb, relation) they carry.
pub fn group_by_interpretation(dataset: &Dataset) -> BTreeMap<Interpretation, Vec<Utterance>> {
    let mut groups: BTreeMap<Interpretation, Vec<Utterance>> = BTreeMap::new();
    for ex in &dataset.supervised {
        let mut seen: HashSet<&Interpretation> = HashSet::new();
        for (interp, _) in &ex.gold {
            if seen.insert(interp) {
                groups
                    .entry(interp.clone())
                    .or_default()
                    .push(ex.utterance.clone());
            }
        }
    }
    groups
}
