//! POS time-series ingestion, noun-ratio computation, normalization and
//! permutation-test change-point detection.
//!
//! A word's yearly noun proportion `Q(w,t) = noun/(noun+verb)` is z-scored
//! and scanned for the pivot with the largest absolute difference of
//! segment means. Significance comes from a seeded permutation test: the
//! p-value is the fraction of shuffled series whose maximal statistic
//! reaches the observed one. The pivot itself is deterministic — only the
//! p-value involves the seed.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{Dataset, Interpretation, Utterance};
use crate::{Error, Result};

/// Yearly noun/verb counts for one word.
#[derive(Debug, Clone)]
pub struct PosTimeSeries {
    pub word: String,
    pub years: Vec<i32>,
    pub noun_counts: Vec<u64>,
    pub verb_counts: Vec<u64>,
}

impl PosTimeSeries {
    pub fn validate(&self) -> Result<()> {
        if self.years.len() != self.noun_counts.len() || self.years.len() != self.verb_counts.len()
        {
            return Err(Error::contract("series length mismatch"));
        }
        if !self.years.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::contract("years must be strictly increasing"));
        }
        Ok(())
    }

    pub fn total_noun(&self) -> u64 {
        self.noun_counts.iter().sum()
    }

    pub fn total_verb(&self) -> u64 {
        self.verb_counts.iter().sum()
    }
}

/// A detected shift in the noun-to-verb ratio.
#[derive(Debug, Clone)]
pub struct ChangePoint {
    pub word: String,
    pub year: i32,
    /// Index of the pivot in the (year-aligned) ratio series.
    pub index: usize,
    pub p_value: f64,
    pub mean_shift: f64,
}

/// Load `word,year,noun_count,verb_count` CSV rows into per-word series.
/// A header row is skipped when present. Rows may arrive in any order.
pub fn load_counts(path: &Path) -> Result<Vec<PosTimeSeries>> {
    let text = fs::read_to_string(path)?;
    let mut by_word: BTreeMap<String, BTreeMap<i32, (u64, u64)>> = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if lineno == 0 && line.to_lowercase().starts_with("word,") {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(Error::format_at(
                path,
                lineno + 1,
                format!("expected 4 comma-separated fields, got {}", fields.len()),
            ));
        }
        let year: i32 = fields[1].trim().parse().map_err(|_| {
            Error::format_at(path, lineno + 1, format!("bad year {:?}", fields[1]))
        })?;
        let noun: u64 = fields[2].trim().parse().map_err(|_| {
            Error::format_at(path, lineno + 1, format!("bad noun count {:?}", fields[2]))
        })?;
        let verb: u64 = fields[3].trim().parse().map_err(|_| {
            Error::format_at(path, lineno + 1, format!("bad verb count {:?}", fields[3]))
        })?;
        let entry = by_word
            .entry(fields[0].trim().to_lowercase())
            .or_default()
            .entry(year)
            .or_insert((0, 0));
        entry.0 += noun;
        entry.1 += verb;
    }
    if by_word.is_empty() {
        return Err(Error::Format {
            path: Some(path.display().to_string()),
            line: None,
            msg: "counts file has no rows".into(),
        });
    }
    Ok(by_word
        .into_iter()
        .map(|(word, years)| {
            let mut series = PosTimeSeries {
                word,
                years: Vec::with_capacity(years.len()),
                noun_counts: Vec::with_capacity(years.len()),
                verb_counts: Vec::with_capacity(years.len()),
            };
            for (year, (noun, verb)) in years {
                series.years.push(year);
                series.noun_counts.push(noun);
                series.verb_counts.push(verb);
            }
            series
        })
        .collect())
}

/// Yearly noun proportion `Q(w,t) = noun/(noun+verb)`. Years with a zero
/// total are dropped; their years are returned alongside for alignment.
pub fn noun_ratio(series: &PosTimeSeries) -> Result<(Vec<i32>, Vec<f64>)> {
    series.validate()?;
    let mut years = Vec::with_capacity(series.years.len());
    let mut ratios = Vec::with_capacity(series.years.len());
    for ((&year, &noun), &verb) in series
        .years
        .iter()
        .zip(&series.noun_counts)
        .zip(&series.verb_counts)
    {
        let total = noun + verb;
        if total == 0 {
            continue;
        }
        years.push(year);
        ratios.push(noun as f64 / total as f64);
    }
    if ratios.is_empty() {
        return Err(Error::contract(format!(
            "series for {:?} has no years with nonzero counts",
            series.word
        )));
    }
    Ok((years, ratios))
}

/// Keep words whose total noun count and total verb count each exceed
/// `theta_f`.
pub fn frequency_filter(series: Vec<PosTimeSeries>, theta_f: u64) -> Vec<PosTimeSeries> {
    series
        .into_iter()
        .filter(|s| s.total_noun() > theta_f && s.total_verb() > theta_f)
        .collect()
}

/// Population z-score of a series; a constant series maps to all zeros.
pub fn normalize_zscore(values: &[f64]) -> Result<Vec<f64>> {
    if values.len() < 2 {
        return Err(Error::contract("z-score needs at least 2 points"));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let variance = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    if variance == 0.0 {
        return Ok(vec![0.0; values.len()]);
    }
    let std = variance.sqrt();
    Ok(values.iter().map(|v| (v - mean) / std).collect())
}

/// Absolute difference of segment means at the best pivot.
///
/// Pivots `t` split the series into `[..t]` and `[t..]` with both sides at
/// least `min_segment` long; ties resolve to the earliest pivot.
fn best_pivot(z: &[f64], min_segment: usize) -> (usize, f64) {
    let n = z.len();
    let mut prefix = vec![0.0; n + 1];
    for (i, v) in z.iter().enumerate() {
        prefix[i + 1] = prefix[i] + v;
    }
    let total = prefix[n];
    let mut best_t = min_segment;
    let mut best_stat = f64::NEG_INFINITY;
    for (t, &head_sum) in prefix
        .iter()
        .enumerate()
        .take(n - min_segment + 1)
        .skip(min_segment)
    {
        let left = head_sum / t as f64;
        let right = (total - head_sum) / (n - t) as f64;
        let stat = (left - right).abs();
        if stat > best_stat {
            best_stat = stat;
            best_t = t;
        }
    }
    (best_t, best_stat)
}

/// Detect a change point in a z-scored series by a seeded permutation test.
///
/// Returns a [`ChangePoint`] only when the permutation p-value is below
/// `alpha`. `years` aligns indices to calendar years.
pub fn detect_change_point(
    word: &str,
    years: &[i32],
    z_series: &[f64],
    n_permutations: usize,
    alpha: f64,
    min_segment: usize,
    seed: u64,
) -> Result<Option<ChangePoint>> {
    if min_segment == 0 {
        return Err(Error::contract("min_segment must be at least 1"));
    }
    if z_series.len() < 2 * min_segment {
        return Err(Error::contract(format!(
            "series of length {} is shorter than 2·min_segment = {}",
            z_series.len(),
            2 * min_segment
        )));
    }
    if years.len() != z_series.len() {
        return Err(Error::contract("years and series lengths differ"));
    }
    if n_permutations == 0 {
        return Err(Error::contract("n_permutations must be at least 1"));
    }
    let (index, observed) = best_pivot(z_series, min_segment);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut shuffled = z_series.to_vec();
    let mut at_least = 0usize;
    for _ in 0..n_permutations {
        shuffled.shuffle(&mut rng);
        let (_, stat) = best_pivot(&shuffled, min_segment);
        if stat >= observed {
            at_least += 1;
        }
    }
    let p_value = at_least as f64 / n_permutations as f64;
    if p_value < alpha {
        Ok(Some(ChangePoint {
            word: word.to_string(),
            year: years[index],
            index,
            p_value,
            mean_shift: observed,
        }))
    } else {
        Ok(None)
    }
}

/// Full per-word pipeline: ratio → z-score → detection.
pub fn detect_in_series(
    series: &PosTimeSeries,
    n_permutations: usize,
    alpha: f64,
    min_segment: usize,
    seed: u64,
) -> Result<Option<ChangePoint>> {
    let (years, ratios) = noun_ratio(series)?;
    let z = normalize_zscore(&ratios)?;
    detect_change_point(&series.word, &years, &z, n_permutations, alpha, min_segment, seed)
}

/// Pre/post partition of a word's records around its change point.
#[derive(Debug, Clone)]
pub struct ChangePartition {
    pub word: String,
    pub change_decade: i32,
    /// Interpretations attested strictly before the change decade.
    pub pre_interpretations: Vec<Interpretation>,
    /// Denominal usages attested strictly after the change decade, with
    /// their decade stamps.
    pub post_utterances: Vec<(Utterance, i32)>,
}

pub fn decade_of(year: i32) -> i32 {
    year.div_euclid(10) * 10
}

/// Split dataset records per change-point word: gold interpretations dated
/// before `t*` become the conventional usages, utterances dated after `t*`
/// the prediction targets. Words with an empty post side are dropped;
/// words without a change point are skipped.
pub fn split_by_change_point(
    dataset: &Dataset,
    change_points: &[ChangePoint],
) -> Result<Vec<ChangePartition>> {
    let mut partitions = Vec::new();
    for cp in change_points {
        let change_decade = decade_of(cp.year);
        let mut pre = Vec::new();
        let mut post = Vec::new();
        for ex in &dataset.supervised {
            if ex.utterance.denominal != cp.word {
                continue;
            }
            let decade = ex.decade.ok_or_else(|| {
                Error::contract(format!(
                    "example ({}, {}) lacks the decade stamp required for the temporal split",
                    ex.utterance.denominal, ex.utterance.context
                ))
            })?;
            if decade < change_decade {
                for (interp, _) in &ex.gold {
                    if !pre.contains(interp) {
                        pre.push(interp.clone());
                    }
                }
            } else if decade > change_decade {
                post.push((ex.utterance.clone(), decade));
            }
        }
        if post.is_empty() {
            continue;
        }
        partitions.push(ChangePartition {
            word: cp.word.clone(),
            change_decade,
            pre_interpretations: pre,
            post_utterances: post,
        });
    }
    Ok(partitions)
}
