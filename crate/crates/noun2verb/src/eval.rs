//! Metrics and baselines: top-k accuracy, cumulative ROC curves, KL
//! divergence, the subset-KL protocol, frequency/random baselines,
//! decade-binned temporal precision and grouped breakdowns.
//!
//! KL divergences use the natural logarithm. With `epsilon = 0` the model
//! distribution is used exactly as given over the gold support — the same
//! arithmetic as the worked annotation example it is checked against; with
//! `epsilon > 0` the model values are floored and renormalized over the
//! support first, which makes the divergence total and nonnegative.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{AnnotationDistribution, Dataset, Interpretation, SupervisedExample, Utterance};
use crate::infer::RankedList;
use crate::{Error, Result};

/// One reported metric value with its uncertainty and grouping key.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub metric: String,
    pub value: f64,
    pub std_error: f64,
    pub group: Option<String>,
    pub sample_size: usize,
}

impl MetricReport {
    pub fn new(metric: &str, value: f64, std_error: f64, sample_size: usize) -> Self {
        MetricReport {
            metric: metric.to_string(),
            value,
            std_error,
            group: None,
            sample_size,
        }
    }

    pub fn with_group(mut self, group: &str) -> Self {
        self.group = Some(group.to_string());
        self
    }
}

/// Mean and standard error of a sample.
pub fn mean_with_se(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

// ── Top-k accuracy and ROC ──────────────────────────────────────────

/// Whether any of the first `k` predictions is in the gold set.
pub fn topk_hit(predictions: &[String], gold: &HashSet<String>, k: usize) -> Result<bool> {
    if k == 0 {
        return Err(Error::contract("k must be at least 1"));
    }
    if gold.is_empty() {
        return Err(Error::contract("gold set is empty"));
    }
    Ok(predictions.iter().take(k).any(|p| gold.contains(p)))
}

/// Mean top-k accuracy with standard error over (predictions, gold) cases.
pub fn topk_accuracy(
    cases: &[(Vec<String>, HashSet<String>)],
    k: usize,
) -> Result<MetricReport> {
    let mut hits = Vec::with_capacity(cases.len());
    for (predictions, gold) in cases {
        hits.push(if topk_hit(predictions, gold, k)? { 1.0 } else { 0.0 });
    }
    let (mean, se) = mean_with_se(&hits);
    Ok(MetricReport::new(&format!("top{k}_accuracy"), mean, se, cases.len()))
}

/// Cumulative top-k accuracy curve for k = 1..k_max.
#[derive(Debug, Clone)]
pub struct RocCurve {
    /// (k, mean accuracy at k).
    pub points: Vec<(usize, f64)>,
    /// Normalized trapezoidal area under the (k/k_max, accuracy) polyline.
    pub auc: f64,
}

pub fn roc_auc(
    cases: &[(Vec<String>, HashSet<String>)],
    k_max: usize,
) -> Result<RocCurve> {
    if k_max == 0 {
        return Err(Error::contract("k_max must be at least 1"));
    }
    let mut points = Vec::with_capacity(k_max);
    for k in 1..=k_max {
        let report = topk_accuracy(cases, k)?;
        points.push((k, report.value));
    }
    // Trapezoid over x = k/k_max, normalized by the x-span so a flat curve
    // at accuracy 1 has AUC exactly 1.
    let auc = if k_max == 1 {
        points[0].1
    } else {
        let mut area = 0.0;
        for w in points.windows(2) {
            area += (w[0].1 + w[1].1) / 2.0 / k_max as f64;
        }
        area / ((k_max - 1) as f64 / k_max as f64)
    };
    Ok(RocCurve { points, auc })
}

// ── KL divergence ───────────────────────────────────────────────────

/// `Σ p_i ln(p_i / q_i)` over aligned arrays.
///
/// `p` is the gold distribution over its support; `q` the model values on
/// the same support. With `epsilon > 0`, `q` is floored at epsilon and
/// renormalized over the support. With `epsilon = 0`, `q` is used raw.
/// Entries of `p` that are zero contribute nothing.
pub fn kl_divergence(p: &[f64], q: &[f64], epsilon: f64) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::contract("distribution lengths differ"));
    }
    if p.is_empty() {
        return Err(Error::contract("empty distributions"));
    }
    if epsilon < 0.0 {
        return Err(Error::contract("epsilon must be nonnegative"));
    }
    if p.iter().any(|x| *x < 0.0 || !x.is_finite()) {
        return Err(Error::contract("gold distribution entries must be finite and nonnegative"));
    }
    if p.iter().all(|x| *x == 0.0) {
        return Err(Error::contract("gold distribution is all-zero"));
    }
    if q.iter().any(|x| *x < 0.0 || !x.is_finite()) {
        return Err(Error::contract("model distribution entries must be finite and nonnegative"));
    }
    let q_used: Vec<f64> = if epsilon > 0.0 {
        let floored: Vec<f64> = q.iter().map(|x| x.max(epsilon)).collect();
        let total: f64 = floored.iter().sum();
        floored.into_iter().map(|x| x / total).collect()
    } else {
        q.to_vec()
    };
    let mut total = 0.0;
    for (pi, qi) in p.iter().zip(&q_used) {
        if *pi == 0.0 {
            continue;
        }
        if *qi == 0.0 {
            return Err(Error::contract(
                "model distribution is zero on gold support; use epsilon smoothing",
            ));
        }
        total += pi * (pi / qi).ln();
    }
    Ok(total)
}

/// Default smoothing floor for model distributions.
pub const KL_EPSILON: f64 = 1e-6;

/// KL between a gold annotation distribution and model probabilities looked
/// up per support token.
pub fn kl_against_gold(
    gold: &AnnotationDistribution,
    model_prob: impl Fn(&str) -> f64,
    epsilon: f64,
) -> Result<f64> {
    gold.validate()?;
    let q: Vec<f64> = gold.support.iter().map(|t| model_prob(t)).collect();
    kl_divergence(&gold.probabilities, &q, epsilon)
}

/// Mean KL over `n_subsets` seeded draws of `subset_size` examples without
/// replacement, reported with the standard error over subsets.
pub fn subset_kl_protocol(
    per_example_kl: &[f64],
    subset_size: usize,
    n_subsets: usize,
    seed: u64,
) -> Result<MetricReport> {
    if subset_size == 0 || subset_size > per_example_kl.len() {
        return Err(Error::contract(format!(
            "subset size {subset_size} invalid for {} examples",
            per_example_kl.len()
        )));
    }
    if n_subsets == 0 {
        return Err(Error::contract("n_subsets must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut means = Vec::with_capacity(n_subsets);
    let mut indices: Vec<usize> = (0..per_example_kl.len()).collect();
    for _ in 0..n_subsets {
        indices.shuffle(&mut rng);
        let subset = &indices[..subset_size];
        means.push(subset.iter().map(|&i| per_example_kl[i]).sum::<f64>() / subset_size as f64);
    }
    let (mean, se) = mean_with_se(&means);
    Ok(MetricReport::new("subset_kl", mean, se, n_subsets))
}

// ── Baselines ───────────────────────────────────────────────────────

/// Non-learning control that ranks by training-set empirical counts.
#[derive(Debug, Clone)]
pub struct FrequencyBaseline {
    verb_votes: BTreeMap<String, u64>,
    interpretation_votes: BTreeMap<Interpretation, u64>,
    utterance_counts: BTreeMap<Utterance, u64>,
    total_verb_votes: u64,
}

impl FrequencyBaseline {
    pub fn fit(dataset: &Dataset) -> Result<Self> {
        if dataset.supervised.is_empty() {
            return Err(Error::contract("frequency baseline needs supervised data"));
        }
        let mut verb_votes: BTreeMap<String, u64> = BTreeMap::new();
        let mut interpretation_votes: BTreeMap<Interpretation, u64> = BTreeMap::new();
        let mut utterance_counts: BTreeMap<Utterance, u64> = BTreeMap::new();
        for ex in &dataset.supervised {
            *utterance_counts.entry(ex.utterance.clone()).or_insert(0) += 1;
            for (interp, votes) in &ex.gold {
                *verb_votes.entry(interp.verb.clone()).or_insert(0) += *votes as u64;
                *interpretation_votes.entry(interp.clone()).or_insert(0) += *votes as u64;
            }
        }
        for u in &dataset.unsupervised {
            *utterance_counts.entry(u.clone()).or_insert(0) += 1;
        }
        let total_verb_votes = verb_votes.values().sum();
        Ok(FrequencyBaseline {
            verb_votes,
            interpretation_votes,
            utterance_counts,
            total_verb_votes,
        })
    }

    /// Verbs ranked by training votes; scores are empirical probabilities.
    pub fn rank_verbs(&self, k: usize) -> RankedList<String> {
        let scored: Vec<(String, f64)> = self
            .verb_votes
            .iter()
            .map(|(v, n)| (v.clone(), *n as f64 / self.total_verb_votes as f64))
            .collect();
        RankedList::from_scores(scored, k)
    }

    pub fn rank_interpretations(&self, k: usize) -> RankedList<Interpretation> {
        let total: u64 = self.interpretation_votes.values().sum();
        let scored: Vec<(Interpretation, f64)> = self
            .interpretation_votes
            .iter()
            .map(|(i, n)| (i.clone(), *n as f64 / total as f64))
            .collect();
        RankedList::from_scores(scored, k)
    }

    pub fn rank_utterances(&self, k: usize) -> RankedList<Utterance> {
        let total: u64 = self.utterance_counts.values().sum();
        let scored: Vec<(Utterance, f64)> = self
            .utterance_counts
            .iter()
            .map(|(u, n)| (u.clone(), *n as f64 / total as f64))
            .collect();
        RankedList::from_scores(scored, k)
    }

    /// Rank a candidate pool by training-set counts; unseen candidates get
    /// zero and fall back to the lexicographic tie-break.
    pub fn rank_candidate_utterances(
        &self,
        candidates: &[Utterance],
        k: usize,
    ) -> RankedList<Utterance> {
        let total: u64 = self.utterance_counts.values().sum::<u64>().max(1);
        let scored: Vec<(Utterance, f64)> = candidates
            .iter()
            .map(|u| {
                let count = self.utterance_counts.get(u).copied().unwrap_or(0);
                (u.clone(), count as f64 / total as f64)
            })
            .collect();
        RankedList::from_scores(scored, k)
    }

    /// Training-set empirical probability of a verb (zero for unseen).
    pub fn verb_probability(&self, verb: &str) -> f64 {
        self.verb_votes
            .get(verb)
            .map(|n| *n as f64 / self.total_verb_votes as f64)
            .unwrap_or(0.0)
    }

    pub fn denominal_probability(&self, token: &str) -> f64 {
        let total: u64 = self.utterance_counts.values().sum();
        let count: u64 = self
            .utterance_counts
            .iter()
            .filter(|(u, _)| u.denominal == token)
            .map(|(_, n)| n)
            .sum();
        count as f64 / total as f64
    }
}

/// Uniform seeded permutation over candidates, identical scores.
pub fn random_baseline<T: Ord + Clone>(candidates: &[T], seed: u64) -> RankedList<T> {
    let mut order: Vec<T> = candidates.to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let n = order.len().max(1);
    let items = order.into_iter().map(|t| (t, 1.0 / n as f64)).collect();
    RankedList::from_order(items, usize::MAX)
}

// ── Temporal precision ──────────────────────────────────────────────

/// Predictions and dated gold usages for one change-point word.
#[derive(Debug, Clone)]
pub struct WordPrediction {
    pub word: String,
    /// Decade of the detected change point (e.g. 1880).
    pub change_decade: i32,
    pub predictions: Vec<Utterance>,
    /// Gold denominal usages with their decade stamps.
    pub gold: Vec<(Utterance, i32)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TemporalCriterion {
    /// Gold restricted to the immediately following decade.
    NextDecade,
    /// Gold from any later decade.
    AnyFuture,
}

/// Last change-point decade included in temporal reports.
pub const LAST_REPORTED_DECADE: i32 = 1980;

/// Mean precision of the retrieved predictions per change-point decade.
pub fn decade_precision(
    words: &[WordPrediction],
    criterion: TemporalCriterion,
) -> Result<Vec<MetricReport>> {
    let mut per_decade: BTreeMap<i32, Vec<f64>> = BTreeMap::new();
    for w in words {
        if w.change_decade > LAST_REPORTED_DECADE {
            continue;
        }
        if w.predictions.is_empty() {
            return Err(Error::contract(format!(
                "word {:?} has no retrieved predictions",
                w.word
            )));
        }
        let gold: HashSet<&Utterance> = w
            .gold
            .iter()
            .filter(|(_, decade)| match criterion {
                TemporalCriterion::NextDecade => *decade == w.change_decade + 10,
                TemporalCriterion::AnyFuture => *decade > w.change_decade,
            })
            .map(|(u, _)| u)
            .collect();
        let hits = w.predictions.iter().filter(|p| gold.contains(p)).count();
        per_decade
            .entry(w.change_decade)
            .or_default()
            .push(hits as f64 / w.predictions.len() as f64);
    }
    Ok(per_decade
        .into_iter()
        .map(|(decade, values)| {
            let (mean, se) = mean_with_se(&values);
            MetricReport::new("temporal_precision", mean, se, values.len())
                .with_group(&decade.to_string())
        })
        .collect())
}

// ── Grouped reports ─────────────────────────────────────────────────

/// Per-group mean and standard error over (group, value) observations.
pub fn grouped_report(metric: &str, observations: &[(String, f64)]) -> Vec<MetricReport> {
    let mut groups: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for (group, value) in observations {
        groups.entry(group.as_str()).or_default().push(*value);
    }
    groups
        .into_iter()
        .map(|(group, values)| {
            let (mean, se) = mean_with_se(&values);
            MetricReport::new(metric, mean, se, values.len()).with_group(group)
        })
        .collect()
}

// ── Lemma normalization ─────────────────────────────────────────────

/// Surface → lemma map for gold matching (e.g. `dropped` → `drop`).
#[derive(Debug, Clone, Default)]
pub struct LemmaMap {
    map: HashMap<String, String>,
}

impl LemmaMap {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let mut map = HashMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (surface, lemma) = line.split_once('\t').ok_or_else(|| {
                Error::format_at(path, lineno + 1, "expected surface<TAB>lemma")
            })?;
            map.insert(surface.to_lowercase(), lemma.to_lowercase());
        }
        Ok(LemmaMap { map })
    }

    pub fn insert(&mut self, surface: &str, lemma: &str) {
        self.map.insert(surface.to_lowercase(), lemma.to_lowercase());
    }

    pub fn normalize<'a>(&'a self, token: &'a str) -> &'a str {
        self.map.get(token).map(String::as_str).unwrap_or(token)
    }

    pub fn normalize_set(&self, tokens: &[&str]) -> HashSet<String> {
        tokens
            .iter()
            .map(|t| self.normalize(t).to_string())
            .collect()
    }
}

// ── Production grouping with vote weights ───────────────────────────

/// Group gold utterances by interpretation, keeping vote counts, for the
/// production task's empirical distributions.
pub fn production_cases(
    examples: &[SupervisedExample],
) -> BTreeMap<Interpretation, Vec<(Utterance, u32)>> {
    let mut groups: BTreeMap<Interpretation, Vec<(Utterance, u32)>> = BTreeMap::new();
    for ex in examples {
        for (interp, votes) in &ex.gold {
            groups
                .entry(interp.clone())
                .or_default()
                .push((ex.utterance.clone(), *votes));
        }
    }
    groups
}

/// Empirical distribution over denominal tokens within one production group.
pub fn production_gold_distribution(
    group: &[(Utterance, u32)],
) -> Result<AnnotationDistribution> {
    let mut votes: BTreeMap<&str, u32> = BTreeMap::new();
    for (u, v) in group {
        *votes.entry(u.denominal.as_str()).or_insert(0) += *v;
    }
    let total: u32 = votes.values().sum();
    if total == 0 {
        return Err(Error::contract("production group has all-zero votes"));
    }
    AnnotationDistribution::new(
        votes.keys().map(|s| s.to_string()).collect(),
        votes.values().map(|&v| v as f64 / total as f64).collect(),
    )
}
