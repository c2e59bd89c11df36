//! Optimization loops, semi-supervised batching and cross-validation.
//!
//! Every epoch shuffles both splits with the run's seeded generator and
//! walks them in parallel batches: each step combines one supervised batch
//! and one unsupervised batch into the semi-supervised objective (the
//! shorter split cycles). The discriminative model trains on the
//! supervised loss alone and never touches the unsupervised split.
//!
//! Runs are deterministic in the seed: same seed, same data, bit-identical
//! parameters afterwards.

use std::path::PathBuf;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use autodiff::{Optimizer, OptimizerConfig, OptimizerKind, Tape};

use crate::data::{empirical_distribution, Dataset, SupervisedExample};
use crate::eval::{kl_against_gold, mean_with_se, KL_EPSILON};
use crate::infer::{comprehend_verbs, FrameSampleConfig};
use crate::lexicon::EmbeddingTable;
use crate::loss::{
    bind_model, semi_supervised_loss, supervised_loss, ElboEstimator, EmaBaseline,
};
use crate::model::{ModelKind, Noun2VerbModel};
use crate::{Error, Result};

/// Hyperparameters of one training run. The seed is mandatory.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub epochs: usize,
    pub sup_batch: usize,
    pub unsup_batch: usize,
    pub lambda: f64,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    pub estimator: ElboEstimator,
    pub seed: u64,
    /// Invoke the checkpoint hook every this many epochs.
    pub checkpoint_every: Option<usize>,
    pub soft_verb_targets: bool,
}

impl TrainConfig {
    pub fn with_seed(seed: u64) -> Self {
        TrainConfig {
            epochs: 100,
            sup_batch: 16,
            unsup_batch: 16,
            lambda: 1.0,
            learning_rate: 1e-3,
            optimizer: OptimizerKind::Adam,
            estimator: ElboEstimator::default(),
            seed,
            checkpoint_every: None,
            soft_verb_targets: false,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.sup_batch == 0 || self.unsup_batch == 0 {
            return Err(Error::contract("batch sizes must be at least 1"));
        }
        if self.lambda < 0.0 {
            return Err(Error::contract("lambda must be nonnegative"));
        }
        if self.learning_rate <= 0.0 {
            return Err(Error::contract("learning rate must be positive"));
        }
        if let Some(k) = self.checkpoint_every {
            if k == 0 {
                return Err(Error::contract("checkpoint cadence must be at least 1"));
            }
        }
        Ok(())
    }
}

/// Loss components and gradient norm for one epoch.
#[derive(Debug, Clone, Copy)]
pub struct EpochStats {
    pub epoch: usize,
    pub supervised: f64,
    pub unsupervised: f64,
    pub total: f64,
    pub grad_norm: f64,
}

/// Telemetry of one training run.
#[derive(Debug, Clone, Default)]
pub struct TrainingReport {
    pub epochs: Vec<EpochStats>,
    pub wall_time_secs: f64,
    pub final_checkpoint: Option<PathBuf>,
}

impl TrainingReport {
    /// Line-delimited metrics log (`epoch supervised unsupervised total grad_norm`).
    pub fn metrics_log(&self) -> String {
        let mut out = String::from("epoch\tsupervised\tunsupervised\ttotal\tgrad_norm\n");
        for e in &self.epochs {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\n",
                e.epoch, e.supervised, e.unsupervised, e.total, e.grad_norm
            ));
        }
        out
    }
}

/// Train in place. The hook runs at the checkpoint cadence and after the
/// final epoch; it may persist the model and return the written path.
pub fn train_with_hook(
    model: &mut Noun2VerbModel,
    emb: &EmbeddingTable,
    dataset: &Dataset,
    config: &TrainConfig,
    hook: &mut dyn FnMut(usize, &Noun2VerbModel) -> Result<Option<PathBuf>>,
) -> Result<TrainingReport> {
    config.validate()?;
    model.check_embeddings(emb)?;
    let start = Instant::now();
    let discriminative = model.kind == ModelKind::Discriminative;
    if dataset.supervised.is_empty() && (discriminative || dataset.unsupervised.is_empty()) {
        return Err(Error::contract("no training data"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut optimizer = Optimizer::new(
        config.optimizer,
        OptimizerConfig {
            learning_rate: config.learning_rate,
            ..OptimizerConfig::default()
        },
    );
    let mut baseline = EmaBaseline::default();
    let mut report = TrainingReport::default();

    let n_sup = dataset.supervised.len();
    let n_unsup = if discriminative { 0 } else { dataset.unsupervised.len() };
    let sup_chunks = n_sup.div_ceil(config.sup_batch).max(1);
    let unsup_chunks = n_unsup.div_ceil(config.unsup_batch).max(1);
    let steps = match (n_sup, n_unsup) {
        (0, _) => unsup_chunks,
        (_, 0) => sup_chunks,
        _ => sup_chunks.max(unsup_chunks),
    };

    for epoch in 1..=config.epochs {
        let mut sup_order: Vec<usize> = (0..n_sup).collect();
        sup_order.shuffle(&mut rng);
        let mut unsup_order: Vec<usize> = (0..n_unsup).collect();
        unsup_order.shuffle(&mut rng);

        let mut stats = EpochStats {
            epoch,
            supervised: 0.0,
            unsupervised: 0.0,
            total: 0.0,
            grad_norm: 0.0,
        };
        for step in 0..steps {
            // Each example contributes exactly once per epoch; the shorter
            // split simply runs out and its batch goes empty.
            let sup_batch: Vec<SupervisedExample> = if n_sup > 0 && step < sup_chunks {
                chunk(&sup_order, step, config.sup_batch)
                    .iter()
                    .map(|&i| dataset.supervised[i].clone())
                    .collect()
            } else {
                Vec::new()
            };
            let unsup_batch: Vec<_> = if n_unsup > 0 && step < unsup_chunks {
                chunk(&unsup_order, step, config.unsup_batch)
                    .iter()
                    .map(|&i| dataset.unsupervised[i].clone())
                    .collect()
            } else {
                Vec::new()
            };

            let mut tape = Tape::new();
            let mut bound = bind_model(&mut tape, model);
            let (loss_var, parts) = if discriminative {
                let s = supervised_loss(
                    &mut tape,
                    &mut bound,
                    model,
                    emb,
                    &sup_batch,
                    config.soft_verb_targets,
                )?;
                let value = tape.value(s);
                (
                    s,
                    crate::loss::LossParts {
                        supervised: value,
                        unsupervised: 0.0,
                        total: value,
                    },
                )
            } else {
                semi_supervised_loss(
                    &mut tape,
                    &mut bound,
                    model,
                    emb,
                    &sup_batch,
                    &unsup_batch,
                    config.lambda,
                    config.estimator,
                    &mut baseline,
                    &mut rng,
                    config.soft_verb_targets,
                )?
            };
            if !parts.total.is_finite() {
                return Err(Error::Numerical(format!(
                    "non-finite loss at epoch {epoch} step {step} \
                     (supervised batch of {}, unsupervised batch of {})",
                    sup_batch.len(),
                    unsup_batch.len()
                )));
            }
            tape.backward(loss_var, &mut model.params)?;
            // Heads absent from this step's objective (e.g. the frame head
            // on a supervised-only step) legitimately have zero gradient.
            model.params.fill_missing_grads();
            stats.grad_norm += model.params.grad_norm() / steps as f64;
            optimizer.step(&mut model.params)?;
            model.params.clear_grads();
            stats.supervised += parts.supervised;
            stats.unsupervised += parts.unsupervised;
            stats.total += parts.total;
        }
        report.epochs.push(stats);

        let at_cadence = config
            .checkpoint_every
            .map(|k| epoch % k == 0)
            .unwrap_or(false);
        if at_cadence || epoch == config.epochs {
            if let Some(path) = hook(epoch, model)? {
                report.final_checkpoint = Some(path);
            }
        }
    }
    report.wall_time_secs = start.elapsed().as_secs_f64();
    Ok(report)
}

fn chunk(order: &[usize], index: usize, size: usize) -> &[usize] {
    let start = index * size;
    let end = (start + size).min(order.len());
    &order[start..end]
}

/// Train without a checkpoint hook.
pub fn train(
    model: &mut Noun2VerbModel,
    emb: &EmbeddingTable,
    dataset: &Dataset,
    config: &TrainConfig,
) -> Result<TrainingReport> {
    train_with_hook(model, emb, dataset, config, &mut |_, _| Ok(None))
}

/// Held-out metrics for one fold.
#[derive(Debug, Clone, Copy)]
pub struct FoldEvaluation {
    pub comprehension_kl: f64,
    pub top1_verb_accuracy: f64,
    pub relation_accuracy: f64,
    pub test_size: usize,
}

#[derive(Debug)]
pub struct FoldOutcome {
    pub fold: usize,
    pub report: TrainingReport,
    pub evaluation: FoldEvaluation,
    pub model: Noun2VerbModel,
    pub test: Vec<SupervisedExample>,
}

/// Aggregate of the per-fold evaluations (mean, SE).
#[derive(Debug, Clone, Copy)]
pub struct CrossValidationSummary {
    pub comprehension_kl: (f64, f64),
    pub top1_verb_accuracy: (f64, f64),
    pub relation_accuracy: (f64, f64),
}

/// Evaluate held-out examples: mean comprehension KL against the vote
/// distributions, top-1 verb accuracy, and relation accuracy.
pub fn evaluate_fold(
    model: &Noun2VerbModel,
    emb: &EmbeddingTable,
    test: &[SupervisedExample],
) -> Result<FoldEvaluation> {
    let frames = FrameSampleConfig::default_for(model.heads.frame_cardinality);
    let mut kls = Vec::with_capacity(test.len());
    let mut verb_hits = 0usize;
    let mut relation_hits = 0usize;
    for ex in test {
        let gold_dist = empirical_distribution(ex)?;
        let marginal =
            crate::infer::comprehension_verb_marginal(model, emb, &ex.utterance, frames)?;
        kls.push(kl_against_gold(
            &gold_dist,
            |token| {
                model
                    .verb_index(token)
                    .map(|i| marginal[i])
                    .unwrap_or(0.0)
            },
            KL_EPSILON,
        )?);

        let top = comprehend_verbs(model, emb, &ex.utterance, 1, frames)?;
        let gold_verbs: std::collections::HashSet<&str> =
            ex.gold_verbs().into_iter().collect();
        if top
            .items
            .first()
            .map(|(v, _)| gold_verbs.contains(v.as_str()))
            .unwrap_or(false)
        {
            verb_hits += 1;
        }

        let posterior = model.listener_posterior(emb, &ex.utterance)?;
        let predicted = argmax(&posterior.relation);
        if model.heads.relations[predicted] == ex.top_gold().relation {
            relation_hits += 1;
        }
    }
    let n = test.len().max(1);
    Ok(FoldEvaluation {
        comprehension_kl: kls.iter().sum::<f64>() / n as f64,
        top1_verb_accuracy: verb_hits as f64 / n as f64,
        relation_accuracy: relation_hits as f64 / n as f64,
        test_size: test.len(),
    })
}

fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Drop from the training supervision every example whose utterance pair or
/// denominal target occurs in the test fold.
pub fn remove_test_leakage(train_set: &mut Dataset, test: &[SupervisedExample]) {
    let test_pairs: std::collections::HashSet<&crate::data::Utterance> =
        test.iter().map(|e| &e.utterance).collect();
    let test_targets: std::collections::HashSet<&str> = test
        .iter()
        .map(|e| e.utterance.denominal.as_str())
        .collect();
    train_set.supervised.retain(|ex| {
        !test_pairs.contains(&ex.utterance)
            && !test_targets.contains(ex.utterance.denominal.as_str())
    });
}

/// K-fold cross-validation with a fresh model per fold.
///
/// Besides the held-out fold itself, every supervised training example whose
/// denominal verb occurs as a test-fold target is dropped from that fold's
/// supervision, so no target leaks into training.
pub fn cross_validate(
    factory: &dyn Fn(usize) -> Result<Noun2VerbModel>,
    emb: &EmbeddingTable,
    dataset: &Dataset,
    k: usize,
    config: &TrainConfig,
) -> Result<(Vec<FoldOutcome>, CrossValidationSummary)> {
    let splits = crate::data::kfold_split(dataset, k, config.seed)?;
    let mut outcomes = Vec::with_capacity(k);
    for (fold, (mut train_set, test)) in splits.into_iter().enumerate() {
        remove_test_leakage(&mut train_set, &test);

        let mut model = factory(fold).map_err(|e| {
            Error::contract(format!("fold {fold}: model factory failed: {e}"))
        })?;
        let report = train(&mut model, emb, &train_set, config)
            .map_err(|e| Error::contract(format!("fold {fold}: {e}")))?;
        let evaluation = evaluate_fold(&model, emb, &test)
            .map_err(|e| Error::contract(format!("fold {fold}: {e}")))?;
        outcomes.push(FoldOutcome {
            fold,
            report,
            evaluation,
            model,
            test,
        });
    }
    let summary = CrossValidationSummary {
        comprehension_kl: mean_with_se(
            &outcomes
                .iter()
                .map(|o| o.evaluation.comprehension_kl)
                .collect::<Vec<_>>(),
        ),
        top1_verb_accuracy: mean_with_se(
            &outcomes
                .iter()
                .map(|o| o.evaluation.top1_verb_accuracy)
                .collect::<Vec<_>>(),
        ),
        relation_accuracy: mean_with_se(
            &outcomes
                .iter()
                .map(|o| o.evaluation.relation_accuracy)
                .collect::<Vec<_>>(),
        ),
    };
    Ok((outcomes, summary))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Interpretation, SourceTag, Utterance};
    use crate::lexicon::EmbeddingTable;
    use crate::model::{HeadSpec, NetworkDims};
    use crate::relations::RelationType;

    fn embeddings(dim: usize) -> EmbeddingTable {
        let tokens = [
            "d0", "d1", "d2", "d3", "c0", "c1", "c2", "c3", "v0", "v1", "on", "with",
        ];
        let rows = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| {
                let mut v = vec![0.0; dim];
                v[i % dim] = 1.0 + 0.2 * i as f64;
                v[(i + 3) % dim] = -0.4;
                (t.to_string(), v)
            })
            .collect();
        EmbeddingTable::from_rows(rows).unwrap()
    }

    fn heads() -> HeadSpec {
        HeadSpec {
            denominal_candidates: (0..4).map(|i| format!("d{i}")).collect(),
            context_candidates: (0..4).map(|i| format!("c{i}")).collect(),
            verb_candidates: vec!["v0".into(), "v1".into()],
            relations: vec![RelationType::LocationIn, RelationType::Instrument],
            frame_cardinality: 2,
        }
    }

    fn dataset() -> Dataset {
        let mut ds = Dataset::default();
        for (i, (d, c, v, r)) in [
            ("d0", "c0", "v0", RelationType::LocationIn),
            ("d1", "c1", "v0", RelationType::LocationIn),
            ("d2", "c2", "v1", RelationType::Instrument),
            ("d3", "c3", "v1", RelationType::Instrument),
        ]
        .iter()
        .enumerate()
        {
            ds.supervised.push(SupervisedExample {
                utterance: Utterance::new(*d, *c).unwrap(),
                gold: vec![(Interpretation::new(*v, *r), 2 + i as u32)],
                source: SourceTag::Corpus,
                decade: None,
            });
        }
        ds.unsupervised.push(Utterance::new("d0", "c1").unwrap());
        ds.unsupervised.push(Utterance::new("d2", "c3").unwrap());
        ds
    }

    fn small_config(seed: u64) -> TrainConfig {
        let mut c = TrainConfig::with_seed(seed);
        c.epochs = 5;
        c.sup_batch = 2;
        c.unsup_batch = 2;
        c.learning_rate = 0.01;
        c
    }

    fn new_model(kind: ModelKind, seed: u64) -> Noun2VerbModel {
        Noun2VerbModel::new(kind, heads(), NetworkDims { embed_dim: 4, hidden: 4 }, seed).unwrap()
    }

    #[test]
    fn zero_epochs_change_nothing() {
        let emb = embeddings(4);
        let mut model = new_model(ModelKind::Partial, 3);
        let before: Vec<f64> = model
            .params
            .iter()
            .flat_map(|p| p.tensor.values.clone())
            .collect();
        let mut config = small_config(0);
        config.epochs = 0;
        let report = train(&mut model, &emb, &dataset(), &config).unwrap();
        assert!(report.epochs.is_empty());
        let after: Vec<f64> = model
            .params
            .iter()
            .flat_map(|p| p.tensor.values.clone())
            .collect();
        assert_eq!(before, after);
    }

    #[test]
    fn training_reduces_loss() {
        let emb = embeddings(4);
        let mut model = new_model(ModelKind::Partial, 3);
        let mut config = small_config(1);
        config.epochs = 60;
        let report = train(&mut model, &emb, &dataset(), &config).unwrap();
        let first = report.epochs.first().unwrap().total;
        let last = report.epochs.last().unwrap().total;
        assert!(last < first, "loss went {first} -> {last}");
    }

    #[test]
    fn discriminative_ignores_unsupervised_data() {
        let emb = embeddings(4);
        let config = small_config(7);
        let with_unsup = {
            let mut model = new_model(ModelKind::Discriminative, 11);
            train(&mut model, &emb, &dataset(), &config).unwrap();
            model
        };
        let without_unsup = {
            let mut model = new_model(ModelKind::Discriminative, 11);
            let mut ds = dataset();
            ds.unsupervised.clear();
            train(&mut model, &emb, &ds, &config).unwrap();
            model
        };
        for (a, b) in with_unsup.params.iter().zip(without_unsup.params.iter()) {
            for (x, y) in a.tensor.values.iter().zip(&b.tensor.values) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let emb = embeddings(4);
        let run = || {
            let mut model = new_model(ModelKind::Full, 23);
            train(&mut model, &emb, &dataset(), &small_config(9)).unwrap();
            model
                .params
                .iter()
                .flat_map(|p| p.tensor.values.iter().map(|v| v.to_bits()))
                .collect::<Vec<u64>>()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn checkpoint_hook_runs_at_cadence() {
        let emb = embeddings(4);
        let mut model = new_model(ModelKind::Partial, 2);
        let mut config = small_config(4);
        config.epochs = 6;
        config.checkpoint_every = Some(2);
        let mut seen = Vec::new();
        train_with_hook(&mut model, &emb, &dataset(), &config, &mut |epoch, _| {
            seen.push(epoch);
            Ok(None)
        })
        .unwrap();
        assert_eq!(seen, vec![2, 4, 6]);
    }

    #[test]
    fn elbo_loss_halves_on_toy_speaker_data() {
        // 8 utterances sampled from a known sharp speaker, 500 unsupervised
        // epochs: the summed negative-ELBO loss drops below half its
        // starting value.
        use crate::synthetic::{sample_utterances, sharpen_speaker, toy_embeddings, toy_full_model};
        let emb = toy_embeddings();
        let mut truth = toy_full_model(91).unwrap();
        sharpen_speaker(&mut truth, 4.0);
        let utterances = sample_utterances(&truth, &emb, 8, 43).unwrap();
        let ds = Dataset {
            supervised: Vec::new(),
            unsupervised: utterances,
        };
        let mut model = toy_full_model(7).unwrap();
        let mut config = TrainConfig::with_seed(23);
        config.epochs = 500;
        config.unsup_batch = 8;
        config.learning_rate = 0.01;
        let report = train(&mut model, &emb, &ds, &config).unwrap();
        let first = report.epochs.first().unwrap().unsupervised;
        let last = report.epochs.last().unwrap().unsupervised;
        assert!(
            last < 0.5 * first,
            "negative-ELBO loss only went {first} -> {last}"
        );
        // After the early transient, the loss keeps (non-strictly) falling.
        for w in report.epochs[100..].windows(2) {
            assert!(
                w[1].total <= w[0].total + 1e-6,
                "loss rose after epoch {}: {} -> {}",
                w[0].epoch,
                w[0].total,
                w[1].total
            );
        }
    }

    #[test]
    fn leakage_filter_drops_pairs_and_targets() {
        let mut train_set = Dataset::default();
        for (d, c) in [("porch", "newspaper"), ("porch", "mail"), ("carpet", "floor")] {
            train_set.supervised.push(SupervisedExample {
                utterance: Utterance::new(d, c).unwrap(),
                gold: vec![(Interpretation::new("v0", RelationType::LocationIn), 1)],
                source: SourceTag::Corpus,
                decade: None,
            });
        }
        let test = vec![SupervisedExample {
            utterance: Utterance::new("porch", "letter").unwrap(),
            gold: vec![(Interpretation::new("v0", RelationType::LocationIn), 1)],
            source: SourceTag::Corpus,
            decade: None,
        }];
        remove_test_leakage(&mut train_set, &test);
        // Both porch examples vanish (same denominal target); carpet stays.
        assert_eq!(train_set.supervised.len(), 1);
        assert_eq!(train_set.supervised[0].utterance.denominal, "carpet");
    }

    #[test]
    fn cross_validation_excludes_test_targets_from_training() {
        let emb = embeddings(4);
        let ds = dataset();
        let config = small_config(5);
        let factory =
            |fold: usize| Noun2VerbModel::new(
                ModelKind::Partial,
                heads(),
                NetworkDims { embed_dim: 4, hidden: 4 },
                100 + fold as u64,
            );
        let (outcomes, summary) = cross_validate(&factory, &emb, &ds, 2, &config).unwrap();
        assert_eq!(outcomes.len(), 2);
        // Folds partition the supervised set.
        let mut covered: Vec<String> = outcomes
            .iter()
            .flat_map(|o| o.test.iter().map(|e| e.utterance.denominal.clone()))
            .collect();
        covered.sort();
        assert_eq!(covered, vec!["d0", "d1", "d2", "d3"]);
        assert!(summary.relation_accuracy.0 >= 0.0);

        // Determinism of the whole procedure.
        let (again, summary2) = cross_validate(&factory, &emb, &ds, 2, &config).unwrap();
        assert_eq!(summary.comprehension_kl.0, summary2.comprehension_kl.0);
        for (a, b) in outcomes.iter().zip(&again) {
            assert_eq!(
                a.evaluation.top1_verb_accuracy,
                b.evaluation.top1_verb_accuracy
            );
        }
    }
}
