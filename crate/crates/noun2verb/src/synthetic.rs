//! Seeded synthetic benchmarks: a small enumerable model for bound and
//! estimator checks, a relation-deterministic corpus, a frame-structured
//! corpus with two latent clusters per relation, and binomial count series
//! for change-point recovery. Everything is deterministic in its seed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::{Dataset, Interpretation, SourceTag, SupervisedExample, Utterance};
use crate::lexicon::EmbeddingTable;
use crate::model::{HeadSpec, ModelKind, NetworkDims, Noun2VerbModel};
use crate::relations::RelationType;
use crate::Result;

// ── Enumerable toy model ────────────────────────────────────────────

/// Candidate sets of the enumerable toy: |V|=3, |R|=2, K=2, |D|=|C|=4.
pub fn toy_heads() -> HeadSpec {
    HeadSpec {
        denominal_candidates: (0..4).map(|i| format!("d{i}")).collect(),
        context_candidates: (0..4).map(|i| format!("c{i}")).collect(),
        verb_candidates: (0..3).map(|i| format!("v{i}")).collect(),
        relations: vec![RelationType::LocationIn, RelationType::Instrument],
        frame_cardinality: 2,
    }
}

/// Fixed structured embeddings covering the toy tokens.
pub fn toy_embeddings() -> EmbeddingTable {
    let tokens = [
        "d0", "d1", "d2", "d3", "c0", "c1", "c2", "c3", "v0", "v1", "v2", "on", "with",
    ];
    let dim = 6;
    let rows = tokens
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let mut v = vec![0.0; dim];
            v[i % dim] = 1.0 + 0.2 * i as f64;
            v[(i + 2) % dim] = -0.6 + 0.1 * i as f64;
            (t.to_string(), v)
        })
        .collect();
    EmbeddingTable::from_rows(rows).expect("static embeddings are well-formed")
}

/// A randomly parameterized full toy model.
pub fn toy_full_model(seed: u64) -> Result<Noun2VerbModel> {
    Noun2VerbModel::new(
        ModelKind::Full,
        toy_heads(),
        NetworkDims {
            embed_dim: 6,
            hidden: 8,
        },
        seed,
    )
}

/// Scale the speaker's output heads, concentrating its conditionals.
pub fn sharpen_speaker(model: &mut Noun2VerbModel, factor: f64) {
    for name in [
        "speaker.head.denominal.w",
        "speaker.head.denominal.b",
        "speaker.head.context.w",
        "speaker.head.context.b",
    ] {
        if let Some(id) = model.params.id_of(name) {
            for v in &mut model.params.get_mut(id).tensor.values {
                *v *= factor;
            }
        }
    }
}

pub fn sample_categorical(probs: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let mut u: f64 = rng.gen();
    for (i, p) in probs.iter().enumerate() {
        u -= p;
        if u <= 0.0 {
            return i;
        }
    }
    probs.len() - 1
}

/// Ancestral samples from a generative model's own speaker.
pub fn sample_utterances(
    model: &Noun2VerbModel,
    emb: &EmbeddingTable,
    n: usize,
    seed: u64,
) -> Result<Vec<Utterance>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let v = sample_categorical(model.alpha_verb(), &mut rng);
        let r = sample_categorical(model.alpha_relation(), &mut rng);
        let frame = match model.kind {
            ModelKind::Full => Some(sample_categorical(model.beta(), &mut rng)),
            _ => None,
        };
        let interp = Interpretation::new(
            model.heads.verb_candidates[v].clone(),
            model.heads.relations[r],
        );
        let cond = model.speaker_likelihood(emb, &interp, frame)?;
        let d = sample_categorical(&cond.denominal, &mut rng);
        let c = sample_categorical(&cond.context, &mut rng);
        out.push(Utterance {
            denominal: model.heads.denominal_candidates[d].clone(),
            context: model.heads.context_candidates[c].clone(),
        });
    }
    Ok(out)
}

// ── Relation-deterministic benchmark ────────────────────────────────

pub struct RelationBenchmark {
    pub train: Dataset,
    pub test: Vec<SupervisedExample>,
    pub emb: EmbeddingTable,
    pub heads: HeadSpec,
    pub dims: NetworkDims,
}

/// A corpus where the relation type is a deterministic function of the
/// context token: 8 relations × 3 dedicated contexts, one verb per
/// relation, denominal tokens shared freely. Held-out examples pair seen
/// contexts with denominals unseen in that combination.
pub fn relation_benchmark(seed: u64) -> Result<RelationBenchmark> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = 10;
    let relations = RelationType::ALL.to_vec();
    let contexts_per_relation = 3;
    let n_denominals = 12;

    let mut embeddings: Vec<(String, Vec<f64>)> = Vec::new();
    let noise = |rng: &mut ChaCha8Rng, dim: usize, scale: f64| -> Vec<f64> {
        (0..dim).map(|_| rng.gen_range(-scale..scale)).collect()
    };

    let mut contexts = Vec::new();
    for (r, _) in relations.iter().enumerate() {
        for j in 0..contexts_per_relation {
            let token = format!("ctx{r}{j}");
            let mut v = noise(&mut rng, dim, 0.05);
            v[r] += 1.0;
            embeddings.push((token.clone(), v));
            contexts.push((token, r));
        }
    }
    let mut denominals = Vec::new();
    for i in 0..n_denominals {
        let token = format!("obj{i}");
        let mut v = noise(&mut rng, dim, 0.3);
        v[8] += 1.0 + 0.1 * i as f64;
        embeddings.push((token.clone(), v));
        denominals.push(token);
    }
    let mut verbs = Vec::new();
    for (r, _) in relations.iter().enumerate() {
        let token = format!("verb{r}");
        let mut v = noise(&mut rng, dim, 0.05);
        v[r] += 0.8;
        v[9] += 0.5;
        embeddings.push((token.clone(), v));
        verbs.push(token);
    }
    for rel in &relations {
        let word = rel.head_relational_word();
        if !embeddings.iter().any(|(t, _)| t == word) {
            embeddings.push((word.to_string(), noise(&mut rng, dim, 0.2)));
        }
    }
    let emb = EmbeddingTable::from_rows(embeddings)?;

    let mut train = Dataset::default();
    let mut test = Vec::new();
    for (context, r) in &contexts {
        let gold = vec![(Interpretation::new(verbs[*r].clone(), relations[*r]), 3u32)];
        for (i, denominal) in denominals.iter().enumerate() {
            let example = SupervisedExample {
                utterance: Utterance::new(denominal.clone(), context.clone())?,
                gold: gold.clone(),
                source: SourceTag::Corpus,
                decade: None,
            };
            if i < 7 {
                train.supervised.push(example);
            } else {
                test.push(example);
            }
        }
    }
    // A few unannotated pairs so the generative models exercise their
    // unsupervised objective.
    for (context, _) in contexts.iter().step_by(3) {
        train
            .unsupervised
            .push(Utterance::new(denominals[0].clone(), context.clone())?);
    }

    let heads = HeadSpec {
        denominal_candidates: denominals,
        context_candidates: contexts.into_iter().map(|(t, _)| t).collect(),
        verb_candidates: verbs,
        relations,
        frame_cardinality: 2,
    };
    Ok(RelationBenchmark {
        train,
        test,
        emb,
        heads,
        dims: NetworkDims {
            embed_dim: dim,
            hidden: 24,
        },
    })
}

// ── Frame-structured benchmark ──────────────────────────────────────

pub struct FrameBenchmark {
    pub train: Dataset,
    pub eval: Vec<SupervisedExample>,
    pub emb: EmbeddingTable,
    pub heads: HeadSpec,
    pub dims: NetworkDims,
}

/// Two latent frame clusters per relation. Each cluster has its own
/// context and denominal tokens and skews the relation's three verbs in
/// opposite directions, so gold annotations are genuinely multimodal.
/// Evaluation pairs are novel (absent from both training splits).
pub fn frame_benchmark(seed: u64) -> Result<FrameBenchmark> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let relations = vec![
        RelationType::LocationIn,
        RelationType::Instrument,
        RelationType::Agent,
        RelationType::Goal,
    ];
    let dim = 12;
    let votes_per_example = 24;
    let tokens_per_cluster = 3;

    let mut embeddings: Vec<(String, Vec<f64>)> = Vec::new();
    let noise = |rng: &mut ChaCha8Rng, scale: f64| -> Vec<f64> {
        (0..dim).map(|_| rng.gen_range(-scale..scale)).collect()
    };

    // Cluster tokens: dims 0..8 one-hot by (relation, frame).
    let mut cluster_contexts: Vec<Vec<String>> = Vec::new();
    let mut cluster_denominals: Vec<Vec<String>> = Vec::new();
    for r in 0..relations.len() {
        for f in 0..2 {
            let cluster = r * 2 + f;
            let mut ctxs = Vec::new();
            let mut dnms = Vec::new();
            for j in 0..tokens_per_cluster {
                let ctx = format!("ctx{cluster}x{j}");
                let mut v = noise(&mut rng, 0.08);
                v[cluster] += 1.0;
                embeddings.push((ctx.clone(), v));
                ctxs.push(ctx);

                let dnm = format!("dnm{cluster}x{j}");
                let mut v = noise(&mut rng, 0.08);
                v[cluster] += 1.0;
                v[8] += 0.4;
                embeddings.push((dnm.clone(), v));
                dnms.push(dnm);
            }
            cluster_contexts.push(ctxs);
            cluster_denominals.push(dnms);
        }
    }

    // Verbs: three per relation, shared by its two clusters.
    let mut relation_verbs: Vec<Vec<String>> = Vec::new();
    for r in 0..relations.len() {
        let mut vs = Vec::new();
        for m in 0..3 {
            let verb = format!("vb{r}x{m}");
            let mut v = noise(&mut rng, 0.08);
            v[2 * r] += 0.5;
            v[2 * r + 1] += 0.5;
            v[9 + m.min(2)] += 0.7;
            embeddings.push((verb.clone(), v));
            vs.push(verb);
        }
        relation_verbs.push(vs);
    }
    for rel in &relations {
        let word = rel.head_relational_word();
        if !embeddings.iter().any(|(t, _)| t == word) {
            embeddings.push((word.to_string(), noise(&mut rng, 0.2)));
        }
    }
    let emb = EmbeddingTable::from_rows(embeddings)?;

    // Frame-dependent verb distributions.
    let verb_dist = |frame: usize| -> [f64; 3] {
        if frame == 0 {
            [0.6, 0.3, 0.1]
        } else {
            [0.1, 0.3, 0.6]
        }
    };

    let mut train = Dataset::default();
    let mut eval = Vec::new();
    for r in 0..relations.len() {
        for f in 0..2 {
            let cluster = r * 2 + f;
            let dist = verb_dist(f);
            // All 9 (denominal, context) pairs of the cluster, split into
            // supervised (4), unsupervised (3) and evaluation (2).
            let mut pairs = Vec::new();
            for d in &cluster_denominals[cluster] {
                for c in &cluster_contexts[cluster] {
                    pairs.push(Utterance::new(d.clone(), c.clone())?);
                }
            }
            for (i, utterance) in pairs.into_iter().enumerate() {
                if i < 4 || (4..7).contains(&i) {
                    if i >= 4 {
                        train.unsupervised.push(utterance);
                        continue;
                    }
                } else if i >= 7 {
                    // evaluation
                }
                let mut votes = [0u32; 3];
                for _ in 0..votes_per_example {
                    votes[sample_categorical(&dist, &mut rng)] += 1;
                }
                let gold: Vec<(Interpretation, u32)> = (0..3)
                    .filter(|m| votes[*m] > 0)
                    .map(|m| {
                        (
                            Interpretation::new(relation_verbs[r][m].clone(), relations[r]),
                            votes[m],
                        )
                    })
                    .collect();
                let example = SupervisedExample {
                    utterance,
                    gold,
                    source: SourceTag::Corpus,
                    decade: None,
                };
                if i < 4 {
                    train.supervised.push(example);
                } else {
                    eval.push(example);
                }
            }
        }
    }

    let heads = HeadSpec {
        denominal_candidates: cluster_denominals.into_iter().flatten().collect(),
        context_candidates: cluster_contexts.into_iter().flatten().collect(),
        verb_candidates: relation_verbs.into_iter().flatten().collect(),
        relations,
        frame_cardinality: 2,
    };
    Ok(FrameBenchmark {
        train,
        eval,
        emb,
        heads,
        dims: NetworkDims {
            embed_dim: dim,
            hidden: 20,
        },
    })
}

// ── Count series for change-point recovery ──────────────────────────

pub fn binomial_sample(n: u64, p: f64, rng: &mut ChaCha8Rng) -> u64 {
    let mut successes = 0;
    for _ in 0..n {
        if rng.gen::<f64>() < p {
            successes += 1;
        }
    }
    successes
}

/// 100 years of binomial counts (n = 500/year) whose noun ratio steps from
/// 0.9 to 0.4 at index 50.
pub fn step_count_series(seed: u64) -> crate::diachronic::PosTimeSeries {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut series = crate::diachronic::PosTimeSeries {
        word: "step".into(),
        years: Vec::new(),
        noun_counts: Vec::new(),
        verb_counts: Vec::new(),
    };
    for t in 0i32..100 {
        let q = if t < 50 { 0.9 } else { 0.4 };
        let noun = binomial_sample(500, q, &mut rng);
        series.years.push(1900 + t);
        series.noun_counts.push(noun);
        series.verb_counts.push(500 - noun);
    }
    series
}

/// Pure-noise control: the true ratio stays at 0.65 throughout.
pub fn constant_count_series(seed: u64) -> crate::diachronic::PosTimeSeries {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut series = crate::diachronic::PosTimeSeries {
        word: "flat".into(),
        years: Vec::new(),
        noun_counts: Vec::new(),
        verb_counts: Vec::new(),
    };
    for t in 0i32..100 {
        let noun = binomial_sample(500, 0.65, &mut rng);
        series.years.push(1900 + t);
        series.noun_counts.push(noun);
        series.verb_counts.push(500 - noun);
    }
    series
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toy_model_is_enumerable() {
        let model = toy_full_model(0).unwrap();
        assert_eq!(model.cell_count().unwrap(), 3 * 2 * 2);
    }

    #[test]
    fn sampled_utterances_are_deterministic_and_in_vocabulary() {
        let model = toy_full_model(1).unwrap();
        let emb = toy_embeddings();
        let a = sample_utterances(&model, &emb, 8, 99).unwrap();
        let b = sample_utterances(&model, &emb, 8, 99).unwrap();
        assert_eq!(a, b);
        for u in &a {
            assert!(model.denominal_index(&u.denominal).is_some());
            assert!(model.context_index(&u.context).is_some());
        }
    }

    #[test]
    fn relation_benchmark_is_deterministic_and_split() {
        let a = relation_benchmark(3).unwrap();
        let b = relation_benchmark(3).unwrap();
        assert_eq!(a.train.supervised.len(), b.train.supervised.len());
        assert_eq!(a.test.len(), b.test.len());
        assert!(!a.test.is_empty());
        // Test pairs are absent from training.
        let train_pairs: std::collections::HashSet<_> = a
            .train
            .supervised
            .iter()
            .map(|e| e.utterance.clone())
            .collect();
        for ex in &a.test {
            assert!(!train_pairs.contains(&ex.utterance));
        }
    }

    #[test]
    fn frame_benchmark_votes_are_multimodal() {
        let bench = frame_benchmark(5).unwrap();
        assert!(!bench.eval.is_empty());
        // Most examples carry more than one gold verb.
        let multi = bench
            .eval
            .iter()
            .filter(|e| e.gold.len() > 1)
            .count();
        assert!(multi * 2 > bench.eval.len());
        // Evaluation pairs are novel.
        let train_pairs: std::collections::HashSet<_> = bench
            .train
            .supervised
            .iter()
            .map(|e| e.utterance.clone())
            .chain(bench.train.unsupervised.iter().cloned())
            .collect();
        for ex in &bench.eval {
            assert!(!train_pairs.contains(&ex.utterance));
        }
    }

    #[test]
    fn step_series_has_the_designed_break() {
        let s = step_count_series(7);
        assert_eq!(s.years.len(), 100);
        let early: f64 = s.noun_counts[..50].iter().sum::<u64>() as f64 / (50.0 * 500.0);
        let late: f64 = s.noun_counts[50..].iter().sum::<u64>() as f64 / (50.0 * 500.0);
        assert!(early > 0.85 && late < 0.45);
    }
}
