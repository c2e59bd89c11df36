//! Training losses on the autodiff tape.
//!
//! The supervised loss is the sum of listener and speaker negative
//! log-likelihoods of the gold annotation. The unsupervised loss is the
//! negated evidence lower bound: the expected speaker reconstruction
//! log-likelihood under the listener, minus the KL divergence from the
//! listener's heads to their priors. The semi-supervised objective combines
//! the two as `L = U + λ·S`.
//!
//! The ELBO expectation is either enumerated exactly over all latent cells
//! (default whenever the cell count is within the configured limit) or
//! estimated with a score-function gradient over sampled cells, using an
//! exponential-moving-average baseline for variance reduction. The KL term
//! is always computed exactly — the heads are categorical.

use std::collections::HashMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use autodiff::{Tape, Var};

use crate::data::{SupervisedExample, Utterance};
use crate::lexicon::EmbeddingTable;
use crate::model::{Cell, ModelKind, Noun2VerbModel};
use crate::{Error, Result};

/// How the ELBO expectation over latent cells is computed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ElboEstimator {
    /// Exact enumeration; errors out above `limit` cells.
    Exact { limit: usize },
    /// Score-function estimate from `samples` draws of the listener.
    ScoreFunction { samples: usize },
}

impl Default for ElboEstimator {
    fn default() -> Self {
        ElboEstimator::Exact { limit: 10_000 }
    }
}

/// Exponential-moving-average baseline for the score-function estimator.
#[derive(Debug, Clone)]
pub struct EmaBaseline {
    value: Option<f64>,
    decay: f64,
}

impl Default for EmaBaseline {
    fn default() -> Self {
        EmaBaseline {
            value: None,
            decay: 0.9,
        }
    }
}

impl EmaBaseline {
    pub fn new(decay: f64) -> Self {
        EmaBaseline { value: None, decay }
    }

    /// Baseline to subtract, falling back to the current batch mean before
    /// the first update.
    fn reference(&self, batch_mean: f64) -> f64 {
        self.value.unwrap_or(batch_mean)
    }

    pub fn update(&mut self, batch_mean: f64) {
        self.value = Some(match self.value {
            None => batch_mean,
            Some(v) => self.decay * v + (1.0 - self.decay) * batch_mean,
        });
    }
}

/// Point estimate of an ELBO, with a standard error in sampled mode.
#[derive(Debug, Clone, Copy)]
pub struct ElboEstimate {
    pub value: f64,
    pub std_error: Option<f64>,
}

/// Model parameters bound to a tape as leaves, plus a lazily-built cache of
/// speaker passes per latent cell.
pub struct BoundModel {
    vars: HashMap<String, Var>,
    speaker_cache: HashMap<(usize, usize, Option<usize>), SpeakerVars>,
}

#[derive(Clone, Copy)]
struct SpeakerVars {
    probs_denominal: Var,
    probs_context: Var,
    log_denominal: Var,
    log_context: Var,
}

/// Bind every parameter of `model` onto `tape`.
pub fn bind_model(tape: &mut Tape, model: &Noun2VerbModel) -> BoundModel {
    let mut vars = HashMap::new();
    for p in model.params.iter() {
        let id = model.params.id_of(&p.name).expect("parameter exists");
        vars.insert(p.name.clone(), tape.param(&model.params, id));
    }
    BoundModel {
        vars,
        speaker_cache: HashMap::new(),
    }
}

impl BoundModel {
    fn var(&self, name: &str) -> Var {
        *self
            .vars
            .get(name)
            .unwrap_or_else(|| panic!("parameter {name:?} not bound"))
    }

    fn encoder(&self, tape: &mut Tape, prefix: &str, input: Var) -> Result<Var> {
        let mut x = input;
        for layer in 1..=3 {
            let w = self.var(&format!("{prefix}.enc.w{layer}"));
            let b = self.var(&format!("{prefix}.enc.b{layer}"));
            let lin = tape.matmul(w, x)?;
            let aff = tape.add(lin, b)?;
            x = tape.tanh(aff);
        }
        Ok(x)
    }

    fn head_probs(&self, tape: &mut Tape, name: &str, hidden: Var) -> Result<Var> {
        let w = self.var(&format!("{name}.w"));
        let b = self.var(&format!("{name}.b"));
        let lin = tape.matmul(w, hidden)?;
        let logits = tape.add(lin, b)?;
        Ok(tape.softmax(logits)?)
    }

    /// Listener head distributions for one utterance.
    pub fn listener_heads(
        &self,
        tape: &mut Tape,
        model: &Noun2VerbModel,
        emb: &EmbeddingTable,
        utterance: &Utterance,
    ) -> Result<ListenerHeads> {
        let input_values = model.listener_input(emb, utterance);
        let input = tape.constant(&input_values);
        let hidden = self.encoder(tape, "listener", input)?;
        Ok(ListenerHeads {
            verb: self.head_probs(tape, "listener.head.verb", hidden)?,
            relation: self.head_probs(tape, "listener.head.relation", hidden)?,
            frame: match model.kind {
                ModelKind::Full => {
                    Some(self.head_probs(tape, "listener.head.frame", hidden)?)
                }
                _ => None,
            },
        })
    }

    /// Speaker pass for one latent cell, cached per tape.
    fn speaker_for_cell(
        &mut self,
        tape: &mut Tape,
        model: &Noun2VerbModel,
        emb: &EmbeddingTable,
        cell: Cell,
    ) -> Result<SpeakerVars> {
        let key = (cell.verb, cell.relation, cell.frame);
        if let Some(vars) = self.speaker_cache.get(&key) {
            return Ok(*vars);
        }
        let interp = model.cell_interpretation(cell);
        let token_part = emb.embed_sequence(&[
            &interp.verb,
            interp.relation.head_relational_word(),
        ]);
        let tokens = tape.constant(&token_part);
        let input = match cell.frame {
            Some(e) => {
                let table = self.var("speaker.frame_embedding");
                let frame_row = tape.row(table, e)?;
                tape.concat(&[tokens, frame_row])?
            }
            None => tokens,
        };
        let hidden = self.encoder(tape, "speaker", input)?;
        let probs_denominal = self.head_probs(tape, "speaker.head.denominal", hidden)?;
        let probs_context = self.head_probs(tape, "speaker.head.context", hidden)?;
        let vars = SpeakerVars {
            probs_denominal,
            probs_context,
            log_denominal: tape.log(probs_denominal),
            log_context: tape.log(probs_context),
        };
        self.speaker_cache.insert(key, vars);
        Ok(vars)
    }
}

/// Listener per-head probability vectors on the tape.
pub struct ListenerHeads {
    pub verb: Var,
    pub relation: Var,
    pub frame: Option<Var>,
}

fn utterance_indices(model: &Noun2VerbModel, utterance: &Utterance) -> Result<(usize, usize)> {
    let d = model.denominal_index(&utterance.denominal).ok_or_else(|| {
        Error::contract(format!(
            "token {:?} is not a denominal candidate",
            utterance.denominal
        ))
    })?;
    let c = model.context_index(&utterance.context).ok_or_else(|| {
        Error::contract(format!(
            "token {:?} is not a context candidate",
            utterance.context
        ))
    })?;
    Ok((d, c))
}

fn gold_cell(model: &Noun2VerbModel, example: &SupervisedExample) -> Result<(usize, usize)> {
    let top = example.top_gold();
    let v = model.verb_index(&top.verb).ok_or_else(|| {
        Error::contract(format!("gold verb {:?} is not a verb candidate", top.verb))
    })?;
    let r = model.relation_index(top.relation).ok_or_else(|| {
        Error::contract(format!("relation {} is not in the head spec", top.relation))
    })?;
    Ok((v, r))
}

/// Supervised loss `S = S_l + S_s` summed over the batch.
///
/// With `soft_verb_targets`, the listener's verb head is trained against the
/// example's empirical vote distribution instead of the single top verb.
pub fn supervised_loss(
    tape: &mut Tape,
    bound: &mut BoundModel,
    model: &Noun2VerbModel,
    emb: &EmbeddingTable,
    batch: &[SupervisedExample],
    soft_verb_targets: bool,
) -> Result<Var> {
    let mut total = tape.scalar(0.0);
    for example in batch {
        example.validate()?;
        let (d, c) = utterance_indices(model, &example.utterance)?;
        let (v, r) = gold_cell(model, example)?;

        // Listener: -log p_l(I|U).
        let heads = bound.listener_heads(tape, model, emb, &example.utterance)?;
        let log_v = tape.log(heads.verb);
        let verb_loss = if soft_verb_targets {
            let dist = crate::data::empirical_distribution(example)?;
            let mut weights = vec![0.0; model.heads.verb_candidates.len()];
            for (token, p) in dist.support.iter().zip(&dist.probabilities) {
                if let Some(idx) = model.verb_index(token) {
                    weights[idx] += p;
                }
            }
            let expected = tape.weighted_sum(&weights, log_v)?;
            tape.neg(expected)
        } else {
            tape.cross_entropy(log_v, v)?
        };
        let log_r = tape.log(heads.relation);
        let relation_loss = tape.cross_entropy(log_r, r)?;

        // Speaker: -log p_s(U|I), marginalizing the frame over its prior for
        // the full model.
        let speaker_loss = match model.kind {
            ModelKind::Full => {
                let beta = model.beta().to_vec();
                let mut acc = tape.scalar(0.0);
                for (e, weight) in beta.iter().enumerate() {
                    let cell = Cell { verb: v, relation: r, frame: Some(e) };
                    let sp = bound.speaker_for_cell(tape, model, emb, cell)?;
                    let pd = tape.index(sp.probs_denominal, d)?;
                    let pc = tape.index(sp.probs_context, c)?;
                    let joint = tape.mul(pd, pc)?;
                    let weighted = tape.scale(joint, *weight);
                    acc = tape.add(acc, weighted)?;
                }
                let log_marginal = tape.log(acc);
                tape.neg(log_marginal)
            }
            _ => {
                let cell = Cell { verb: v, relation: r, frame: None };
                let sp = bound.speaker_for_cell(tape, model, emb, cell)?;
                let ce_d = tape.cross_entropy(sp.log_denominal, d)?;
                let ce_c = tape.cross_entropy(sp.log_context, c)?;
                tape.add(ce_d, ce_c)?
            }
        };

        let listener = tape.add(verb_loss, relation_loss)?;
        let example_loss = tape.add(listener, speaker_loss)?;
        total = tape.add(total, example_loss)?;
    }
    Ok(total)
}

/// Exact per-head KL divergence `D(q ‖ prior)` on the tape.
fn kl_to_prior(tape: &mut Tape, q: Var, prior: &[f64]) -> Result<Var> {
    let log_q = tape.log(q);
    let log_prior: Vec<f64> = prior.iter().map(|p| p.max(autodiff::LOG_FLOOR).ln()).collect();
    let lp = tape.constant(&log_prior);
    let diff = tape.sub(log_q, lp)?;
    let terms = tape.mul(q, diff)?;
    Ok(tape.sum(terms))
}

/// The evidence lower bound for one utterance, as a tape node plus a point
/// estimate. In sampled mode the node is a surrogate whose gradient is the
/// score-function estimator; its forward value is the sampled estimate.
#[allow(clippy::too_many_arguments)]
pub fn elbo(
    tape: &mut Tape,
    bound: &mut BoundModel,
    model: &Noun2VerbModel,
    emb: &EmbeddingTable,
    utterance: &Utterance,
    estimator: ElboEstimator,
    baseline: &mut EmaBaseline,
    rng: &mut ChaCha8Rng,
) -> Result<(Var, ElboEstimate)> {
    if !model.kind.is_generative() {
        return Err(Error::contract(
            "the discriminative model has no unsupervised objective",
        ));
    }
    let (d, c) = utterance_indices(model, utterance)?;
    let heads = bound.listener_heads(tape, model, emb, utterance)?;
    let priors = model.prior_distributions()?;

    // KL term, exact for both estimators.
    let mut kl = kl_to_prior(tape, heads.verb, &priors.verb)?;
    let kl_r = kl_to_prior(tape, heads.relation, &priors.relation)?;
    kl = tape.add(kl, kl_r)?;
    if let (Some(frame), Some(beta)) = (heads.frame, priors.frame.as_ref()) {
        let kl_e = kl_to_prior(tape, frame, beta)?;
        kl = tape.add(kl, kl_e)?;
    }

    match estimator {
        ElboEstimator::Exact { limit } => {
            let count = model.cell_count()?;
            if count > limit {
                return Err(Error::contract(format!(
                    "{count} latent cells exceed the enumeration limit {limit}; \
                     use the score-function estimator"
                )));
            }
            let mut recon = tape.scalar(0.0);
            for cell in model.enumerate_cells()? {
                let sp = bound.speaker_for_cell(tape, model, emb, cell)?;
                let ld = tape.index(sp.log_denominal, d)?;
                let lc = tape.index(sp.log_context, c)?;
                let log_lik = tape.add(ld, lc)?;
                let qv = tape.index(heads.verb, cell.verb)?;
                let qr = tape.index(heads.relation, cell.relation)?;
                let mut weight = tape.mul(qv, qr)?;
                if let (Some(frame), Some(e)) = (heads.frame, cell.frame) {
                    let qe = tape.index(frame, e)?;
                    weight = tape.mul(weight, qe)?;
                }
                let term = tape.mul(weight, log_lik)?;
                recon = tape.add(recon, term)?;
            }
            let elbo_var = tape.sub(recon, kl)?;
            let value = tape.value(elbo_var);
            Ok((elbo_var, ElboEstimate { value, std_error: None }))
        }
        ElboEstimator::ScoreFunction { samples } => {
            if samples == 0 {
                return Err(Error::contract("score-function estimator needs samples >= 1"));
            }
            // Sample cells from the listener heads.
            let q_verb = tape.values(heads.verb).to_vec();
            let q_rel = tape.values(heads.relation).to_vec();
            let q_frame = heads.frame.map(|f| tape.values(f).to_vec());
            let mut counts: HashMap<(usize, usize, Option<usize>), usize> = HashMap::new();
            let mut draw_order: Vec<(usize, usize, Option<usize>)> = Vec::new();
            for _ in 0..samples {
                let v = sample_categorical(&q_verb, rng);
                let r = sample_categorical(&q_rel, rng);
                let e = q_frame.as_ref().map(|q| sample_categorical(q, rng));
                let key = (v, r, e);
                counts
                    .entry(key)
                    .and_modify(|m| *m += 1)
                    .or_insert_with(|| {
                        draw_order.push(key);
                        1
                    });
            }

            // One speaker pass per distinct cell, weighted by multiplicity.
            let mut cell_terms: Vec<(Var, f64, usize)> = Vec::new();
            for key in &draw_order {
                let cell = Cell { verb: key.0, relation: key.1, frame: key.2 };
                let sp = bound.speaker_for_cell(tape, model, emb, cell)?;
                let ld = tape.index(sp.log_denominal, d)?;
                let lc = tape.index(sp.log_context, c)?;
                let log_lik = tape.add(ld, lc)?;
                cell_terms.push((log_lik, tape.value(log_lik), counts[key]));
            }

            let n = samples as f64;
            let mean: f64 = cell_terms
                .iter()
                .map(|(_, f, m)| f * *m as f64)
                .sum::<f64>()
                / n;
            let variance: f64 = cell_terms
                .iter()
                .map(|(_, f, m)| (f - mean).powi(2) * *m as f64)
                .sum::<f64>()
                / (n - 1.0).max(1.0);
            let std_error = (variance / n).sqrt();
            let reference = baseline.reference(mean);

            let mut recon = tape.scalar(0.0);
            for (key, (log_lik, f_value, multiplicity)) in draw_order.iter().zip(&cell_terms) {
                let qv = tape.index(heads.verb, key.0)?;
                let lqv = tape.log(qv);
                let qr = tape.index(heads.relation, key.1)?;
                let lqr = tape.log(qr);
                let mut log_q = tape.add(lqv, lqr)?;
                if let (Some(frame), Some(e)) = (heads.frame, key.2) {
                    let qe = tape.index(frame, e)?;
                    let lqe = tape.log(qe);
                    log_q = tape.add(log_q, lqe)?;
                }
                // Surrogate: f + (f - b)·log q, with the advantage constant.
                let score = tape.scale(log_q, f_value - reference);
                let path = tape.add(*log_lik, score)?;
                let weighted = tape.scale(path, *multiplicity as f64 / n);
                recon = tape.add(recon, weighted)?;
            }
            baseline.update(mean);

            let elbo_var = tape.sub(recon, kl)?;
            let kl_value = tape.value(kl);
            Ok((
                elbo_var,
                ElboEstimate {
                    value: mean - kl_value,
                    std_error: Some(std_error),
                },
            ))
        }
    }
}

fn sample_categorical(probs: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let mut u: f64 = rng.gen::<f64>();
    for (i, p) in probs.iter().enumerate() {
        u -= p;
        if u <= 0.0 {
            return i;
        }
    }
    probs.len() - 1
}

/// Loss component values for telemetry.
#[derive(Debug, Clone, Copy, Default)]
pub struct LossParts {
    pub supervised: f64,
    pub unsupervised: f64,
    pub total: f64,
}

/// Semi-supervised objective `L = U + λ·S`, where `U` is the summed
/// negative ELBO of the unsupervised batch.
#[allow(clippy::too_many_arguments)]
pub fn semi_supervised_loss(
    tape: &mut Tape,
    bound: &mut BoundModel,
    model: &Noun2VerbModel,
    emb: &EmbeddingTable,
    sup_batch: &[SupervisedExample],
    unsup_batch: &[Utterance],
    lambda: f64,
    estimator: ElboEstimator,
    baseline: &mut EmaBaseline,
    rng: &mut ChaCha8Rng,
    soft_verb_targets: bool,
) -> Result<(Var, LossParts)> {
    if lambda < 0.0 {
        return Err(Error::contract("lambda must be nonnegative"));
    }
    let mut unsup = tape.scalar(0.0);
    for utterance in unsup_batch {
        let (elbo_var, _) = elbo(tape, bound, model, emb, utterance, estimator, baseline, rng)?;
        let neg = tape.neg(elbo_var);
        unsup = tape.add(unsup, neg)?;
    }
    let sup = supervised_loss(tape, bound, model, emb, sup_batch, soft_verb_targets)?;
    let weighted_sup = tape.scale(sup, lambda);
    let total = tape.add(unsup, weighted_sup)?;
    Ok((
        total,
        LossParts {
            supervised: tape.value(sup),
            unsupervised: tape.value(unsup),
            total: tape.value(total),
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Interpretation, SourceTag};
    use crate::lexicon::EmbeddingTable;
    use crate::model::{HeadSpec, NetworkDims};
    use crate::relations::RelationType;
    use rand::SeedableRng;

    fn embeddings(dim: usize) -> EmbeddingTable {
        let tokens = [
            "d0", "d1", "d2", "d3", "c0", "c1", "c2", "c3", "v0", "v1", "v2", "on", "out of",
            "with", "during",
        ];
        let rows = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| {
                let mut v = vec![0.0; dim];
                v[i % dim] = 1.0 + 0.3 * i as f64;
                v[(i + 1) % dim] = -0.5;
                (t.to_string(), v)
            })
            .collect();
        EmbeddingTable::from_rows(rows).unwrap()
    }

    fn heads(n_verbs: usize) -> HeadSpec {
        HeadSpec {
            denominal_candidates: (0..4).map(|i| format!("d{i}")).collect(),
            context_candidates: (0..4).map(|i| format!("c{i}")).collect(),
            verb_candidates: (0..n_verbs).map(|i| format!("v{i}")).collect(),
            relations: vec![RelationType::LocationIn, RelationType::Instrument],
            frame_cardinality: 2,
        }
    }

    fn zeroed(kind: ModelKind, n_verbs: usize) -> Noun2VerbModel {
        let mut model = Noun2VerbModel::new(
            kind,
            heads(n_verbs),
            NetworkDims { embed_dim: 4, hidden: 3 },
            5,
        )
        .unwrap();
        for p in model.params.iter_mut() {
            for v in &mut p.tensor.values {
                *v = 0.0;
            }
        }
        model
    }

    fn example() -> SupervisedExample {
        SupervisedExample {
            utterance: Utterance::new("d0", "c0").unwrap(),
            gold: vec![(Interpretation::new("v0", RelationType::LocationIn), 3)],
            source: SourceTag::Corpus,
            decade: None,
        }
    }

    #[test]
    fn uniform_supervised_loss_is_analytic() {
        // 4 verbs, 2 relations, 4 D, 4 C all uniform: S = ln4 + ln2 + ln4 + ln4.
        let model = zeroed(ModelKind::Partial, 4);
        let emb = embeddings(4);
        let mut tape = Tape::new();
        let mut bound = bind_model(&mut tape, &model);
        let loss =
            supervised_loss(&mut tape, &mut bound, &model, &emb, &[example()], false).unwrap();
        let expected = 4.0f64.ln() + 2.0f64.ln() + 4.0f64.ln() + 4.0f64.ln();
        assert!((tape.value(loss) - expected).abs() < 1e-9);
    }

    #[test]
    fn uniform_supervised_loss_with_four_way_heads_is_four_ln_four() {
        // With |V| = |R| = |D| = |C| = 4 every head contributes ln 4.
        let mut spec = heads(4);
        spec.relations = vec![
            RelationType::LocationIn,
            RelationType::Instrument,
            RelationType::Agent,
            RelationType::Goal,
        ];
        let mut model = Noun2VerbModel::new(
            ModelKind::Partial,
            spec,
            NetworkDims { embed_dim: 4, hidden: 3 },
            5,
        )
        .unwrap();
        for p in model.params.iter_mut() {
            for v in &mut p.tensor.values {
                *v = 0.0;
            }
        }
        let emb = embeddings(4);
        let mut tape = Tape::new();
        let mut bound = bind_model(&mut tape, &model);
        let loss =
            supervised_loss(&mut tape, &mut bound, &model, &emb, &[example()], false).unwrap();
        assert!((tape.value(loss) - 4.0 * 4.0f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn supervised_loss_matches_per_head_cross_entropy_oracle() {
        // Independent recomputation from the model's forward distributions.
        let model = Noun2VerbModel::new(
            ModelKind::Partial,
            heads(3),
            NetworkDims { embed_dim: 4, hidden: 3 },
            11,
        )
        .unwrap();
        let emb = embeddings(4);
        let ex = example();

        let posterior = model.listener_posterior(&emb, &ex.utterance).unwrap();
        let v = model.verb_index("v0").unwrap();
        let r = model.relation_index(RelationType::LocationIn).unwrap();
        let cond = model
            .speaker_likelihood(&emb, ex.top_gold(), None)
            .unwrap();
        let d = model.denominal_index("d0").unwrap();
        let c = model.context_index("c0").unwrap();
        let expected = -posterior.verb[v].ln() - posterior.relation[r].ln()
            - cond.denominal[d].ln()
            - cond.context[c].ln();

        let mut tape = Tape::new();
        let mut bound = bind_model(&mut tape, &model);
        let loss = supervised_loss(&mut tape, &mut bound, &model, &emb, &[ex], false).unwrap();
        assert!((tape.value(loss) - expected).abs() < 1e-9);
    }

    #[test]
    fn perfect_model_has_near_zero_supervised_loss() {
        // Drive the head biases to a near-one-hot solution.
        let mut model = zeroed(ModelKind::Partial, 3);
        for (name, hot) in [
            ("listener.head.verb.b", 0),
            ("listener.head.relation.b", 0),
            ("speaker.head.denominal.b", 0),
            ("speaker.head.context.b", 0),
        ] {
            let id = model.params.id_of(name).unwrap();
            let t = &mut model.params.get_mut(id).tensor;
            for (i, v) in t.values.iter_mut().enumerate() {
                *v = if i == hot { 40.0 } else { -40.0 };
            }
        }
        let emb = embeddings(4);
        let mut tape = Tape::new();
        let mut bound = bind_model(&mut tape, &model);
        let loss =
            supervised_loss(&mut tape, &mut bound, &model, &emb, &[example()], false).unwrap();
        assert!(tape.value(loss).abs() < 1e-9);
    }

    #[test]
    fn elbo_uniform_analytic_value() {
        // Listener equal to prior and speaker uniform over |D|=|C|=4:
        // reconstruction is -2·ln4 for every cell and the KL term vanishes.
        for kind in [ModelKind::Partial, ModelKind::Full] {
            let model = zeroed(kind, 3);
            let emb = embeddings(4);
            let mut tape = Tape::new();
            let mut bound = bind_model(&mut tape, &model);
            let mut baseline = EmaBaseline::default();
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            let utt = Utterance::new("d1", "c2").unwrap();
            let (elbo_var, estimate) = elbo(
                &mut tape,
                &mut bound,
                &model,
                &emb,
                &utt,
                ElboEstimator::default(),
                &mut baseline,
                &mut rng,
            )
            .unwrap();
            let expected = -2.0 * 4.0f64.ln();
            assert!((tape.value(elbo_var) - expected).abs() < 1e-9, "{kind:?}");
            assert!((estimate.value - expected).abs() < 1e-9);
        }
    }

    #[test]
    fn exact_elbo_is_a_lower_bound_on_log_marginal() {
        // Jensen: ELBO ≤ log p(U) for every random parameter draw.
        let emb = embeddings(4);
        for seed in 0..25 {
            let model = Noun2VerbModel::new(
                ModelKind::Full,
                heads(3),
                NetworkDims { embed_dim: 4, hidden: 3 },
                seed,
            )
            .unwrap();
            let utt = Utterance::new("d2", "c1").unwrap();
            let mut tape = Tape::new();
            let mut bound = bind_model(&mut tape, &model);
            let mut baseline = EmaBaseline::default();
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            let (elbo_var, _) = elbo(
                &mut tape,
                &mut bound,
                &model,
                &emb,
                &utt,
                ElboEstimator::default(),
                &mut baseline,
                &mut rng,
            )
            .unwrap();
            let marginal = model.exact_log_marginal(&emb, &utt).unwrap();
            assert!(
                tape.value(elbo_var) <= marginal + 1e-9,
                "seed {seed}: elbo {} > marginal {marginal}",
                tape.value(elbo_var)
            );
        }
    }

    #[test]
    fn sampled_elbo_agrees_with_exact_within_two_standard_errors() {
        let emb = embeddings(4);
        let model = Noun2VerbModel::new(
            ModelKind::Full,
            heads(3),
            NetworkDims { embed_dim: 4, hidden: 3 },
            21,
        )
        .unwrap();
        let utt = Utterance::new("d0", "c3").unwrap();

        let mut tape = Tape::new();
        let mut bound = bind_model(&mut tape, &model);
        let mut baseline = EmaBaseline::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (exact_var, _) = elbo(
            &mut tape,
            &mut bound,
            &model,
            &emb,
            &utt,
            ElboEstimator::default(),
            &mut baseline,
            &mut rng,
        )
        .unwrap();
        let exact = tape.value(exact_var);

        let mut hits = 0;
        let trials = 20;
        for t in 0..trials {
            let mut tape = Tape::new();
            let mut bound = bind_model(&mut tape, &model);
            let mut baseline = EmaBaseline::default();
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + t);
            let (_, estimate) = elbo(
                &mut tape,
                &mut bound,
                &model,
                &emb,
                &utt,
                ElboEstimator::ScoreFunction { samples: 2000 },
                &mut baseline,
                &mut rng,
            )
            .unwrap();
            let se = estimate.std_error.unwrap();
            if (estimate.value - exact).abs() <= 2.0 * se {
                hits += 1;
            }
        }
        assert!(hits >= trials - 1, "only {hits}/{trials} within 2 SE");
    }

    #[test]
    fn enumeration_limit_directs_to_sampling() {
        let model = zeroed(ModelKind::Full, 3);
        let emb = embeddings(4);
        let mut tape = Tape::new();
        let mut bound = bind_model(&mut tape, &model);
        let mut baseline = EmaBaseline::default();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let utt = Utterance::new("d0", "c0").unwrap();
        let err = elbo(
            &mut tape,
            &mut bound,
            &model,
            &emb,
            &utt,
            ElboEstimator::Exact { limit: 3 },
            &mut baseline,
            &mut rng,
        )
        .unwrap_err();
        assert!(err.to_string().contains("score-function"), "{err}");
    }

    #[test]
    fn semi_supervised_combines_parts() {
        let model = Noun2VerbModel::new(
            ModelKind::Partial,
            heads(3),
            NetworkDims { embed_dim: 4, hidden: 3 },
            13,
        )
        .unwrap();
        let emb = embeddings(4);
        let sup = vec![example()];
        let unsup = vec![Utterance::new("d3", "c3").unwrap(), Utterance::new("d1", "c0").unwrap()];
        let lambda = 0.6;

        let mut tape = Tape::new();
        let mut bound = bind_model(&mut tape, &model);
        let mut baseline = EmaBaseline::default();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (total, parts) = semi_supervised_loss(
            &mut tape,
            &mut bound,
            &model,
            &emb,
            &sup,
            &unsup,
            lambda,
            ElboEstimator::default(),
            &mut baseline,
            &mut rng,
            false,
        )
        .unwrap();

        // Hand-summed components.
        let mut tape2 = Tape::new();
        let mut bound2 = bind_model(&mut tape2, &model);
        let mut baseline2 = EmaBaseline::default();
        let mut rng2 = ChaCha8Rng::seed_from_u64(0);
        let mut expected_u = 0.0;
        for u in &unsup {
            let (e, _) = elbo(
                &mut tape2,
                &mut bound2,
                &model,
                &emb,
                u,
                ElboEstimator::default(),
                &mut baseline2,
                &mut rng2,
            )
            .unwrap();
            expected_u -= tape2.value(e);
        }
        let s = supervised_loss(&mut tape2, &mut bound2, &model, &emb, &sup, false).unwrap();
        let expected_total = expected_u + lambda * tape2.value(s);
        assert!((tape.value(total) - expected_total).abs() < 1e-9);
        assert!((parts.unsupervised - expected_u).abs() < 1e-9);

        // Empty unsupervised batch: only λ·S remains.
        let mut tape3 = Tape::new();
        let mut bound3 = bind_model(&mut tape3, &model);
        let (only_sup, parts3) = semi_supervised_loss(
            &mut tape3,
            &mut bound3,
            &model,
            &emb,
            &sup,
            &[],
            lambda,
            ElboEstimator::default(),
            &mut baseline,
            &mut rng,
            false,
        )
        .unwrap();
        assert!((tape3.value(only_sup) - lambda * tape2.value(s)).abs() < 1e-9);
        assert_eq!(parts3.unsupervised, 0.0);

        // Negative lambda is rejected.
        let mut tape4 = Tape::new();
        let mut bound4 = bind_model(&mut tape4, &model);
        assert!(semi_supervised_loss(
            &mut tape4,
            &mut bound4,
            &model,
            &emb,
            &sup,
            &[],
            -1.0,
            ElboEstimator::default(),
            &mut baseline,
            &mut rng,
            false,
        )
        .is_err());
    }

    #[test]
    fn tape_elbo_matches_analysis_path() {
        // Two independent routes to the same exact ELBO: the tape graph and
        // the plain-f64 joint computation.
        let emb = embeddings(4);
        for seed in [3, 19, 41] {
            let model = Noun2VerbModel::new(
                ModelKind::Full,
                heads(3),
                NetworkDims { embed_dim: 4, hidden: 3 },
                seed,
            )
            .unwrap();
            let utt = Utterance::new("d1", "c1").unwrap();
            let mut tape = Tape::new();
            let mut bound = bind_model(&mut tape, &model);
            let mut baseline = EmaBaseline::default();
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            let (var, _) = elbo(
                &mut tape,
                &mut bound,
                &model,
                &emb,
                &utt,
                ElboEstimator::default(),
                &mut baseline,
                &mut rng,
            )
            .unwrap();
            let analysis = model.exact_elbo(&emb, &utt).unwrap();
            assert!((tape.value(var) - analysis).abs() < 1e-9);
        }
    }

    #[test]
    fn lambda_zero_gradient_equals_pure_unsupervised_gradient() {
        let model = Noun2VerbModel::new(
            ModelKind::Partial,
            heads(3),
            NetworkDims { embed_dim: 4, hidden: 3 },
            17,
        )
        .unwrap();
        let emb = embeddings(4);
        let sup = vec![example()];
        let unsup = vec![Utterance::new("d2", "c2").unwrap()];

        let grads = |with_sup: bool| -> Vec<f64> {
            let mut params = model.params.clone();
            let mut tape = Tape::new();
            let mut bound = bind_model(&mut tape, &model);
            let mut baseline = EmaBaseline::default();
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            let loss = if with_sup {
                let (l, _) = semi_supervised_loss(
                    &mut tape,
                    &mut bound,
                    &model,
                    &emb,
                    &sup,
                    &unsup,
                    0.0,
                    ElboEstimator::default(),
                    &mut baseline,
                    &mut rng,
                    false,
                )
                .unwrap();
                l
            } else {
                let (e, _) = elbo(
                    &mut tape,
                    &mut bound,
                    &model,
                    &emb,
                    &unsup[0],
                    ElboEstimator::default(),
                    &mut baseline,
                    &mut rng,
                )
                .unwrap();
                tape.neg(e)
            };
            tape.backward(loss, &mut params).unwrap();
            params
                .iter()
                .flat_map(|p| p.tensor.grad.clone().unwrap_or_else(|| vec![0.0; p.tensor.numel()]))
                .collect()
        };
        let a = grads(true);
        let b = grads(false);
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
    }
}
