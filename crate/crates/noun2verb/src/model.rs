//! The three model classes and their conditional distributions.
//!
//! Every model pairs a listener with a speaker. The listener encodes an
//! utterance `(D, C)` through a three-layer tanh network and reads per-head
//! categorical distributions over paraphrase verbs, relations and (full
//! model only) latent frames off linear heads. The speaker mirrors it:
//! an interpretation — the verb embedding concatenated with the relation's
//! head relational word, plus a learned frame embedding for the full model —
//! is encoded the same way and read out as categoricals over denominal and
//! context candidates.
//!
//! Heads are conditionally independent, so a listener posterior is stored
//! per-head and the joint over latent cells is their product. The partial
//! and full generative models additionally carry categorical priors: `alpha`
//! over verbs and relations (factorized per head) and `beta` over the frame
//! variable.

use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use autodiff::{softmax_stable, ParamSet, LOG_FLOOR};

use crate::data::{Interpretation, Dataset, Utterance};
use crate::lexicon::EmbeddingTable;
use crate::relations::RelationType;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Discriminative,
    Partial,
    Full,
}

impl ModelKind {
    pub fn is_generative(&self) -> bool {
        !matches!(self, ModelKind::Discriminative)
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            ModelKind::Discriminative => "discriminative",
            ModelKind::Partial => "partial",
            ModelKind::Full => "full",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "discriminative" => Ok(ModelKind::Discriminative),
            "partial" => Ok(ModelKind::Partial),
            "full" => Ok(ModelKind::Full),
            other => Err(Error::contract(format!("unknown model kind {other:?}"))),
        }
    }
}

/// Candidate sets for the output heads.
#[derive(Debug, Clone)]
pub struct HeadSpec {
    pub denominal_candidates: Vec<String>,
    pub context_candidates: Vec<String>,
    pub verb_candidates: Vec<String>,
    pub relations: Vec<RelationType>,
    pub frame_cardinality: usize,
}

impl HeadSpec {
    pub fn validate(&self) -> Result<()> {
        if self.denominal_candidates.is_empty()
            || self.context_candidates.is_empty()
            || self.verb_candidates.is_empty()
            || self.relations.is_empty()
        {
            return Err(Error::contract("head candidate lists must be nonempty"));
        }
        if self.frame_cardinality == 0 {
            return Err(Error::contract("frame cardinality must be at least 1"));
        }
        Ok(())
    }

    /// Collect candidates from a dataset: denominal and context tokens from
    /// both splits, verbs from the gold annotations, all eight relations.
    pub fn from_dataset(dataset: &Dataset, frame_cardinality: usize) -> Self {
        let mut denominal = std::collections::BTreeSet::new();
        let mut context = std::collections::BTreeSet::new();
        let mut verbs = std::collections::BTreeSet::new();
        for ex in &dataset.supervised {
            denominal.insert(ex.utterance.denominal.clone());
            context.insert(ex.utterance.context.clone());
            for (interp, _) in &ex.gold {
                verbs.insert(interp.verb.clone());
            }
        }
        for u in &dataset.unsupervised {
            denominal.insert(u.denominal.clone());
            context.insert(u.context.clone());
        }
        HeadSpec {
            denominal_candidates: denominal.into_iter().collect(),
            context_candidates: context.into_iter().collect(),
            verb_candidates: verbs.into_iter().collect(),
            relations: RelationType::ALL.to_vec(),
            frame_cardinality,
        }
    }
}

/// Network configuration: embedding dimension and hidden width of the
/// three-layer encoders.
#[derive(Debug, Clone, Copy)]
pub struct NetworkDims {
    pub embed_dim: usize,
    pub hidden: usize,
}

impl Default for NetworkDims {
    fn default() -> Self {
        NetworkDims {
            embed_dim: 300,
            hidden: 128,
        }
    }
}

/// Per-head categorical distributions from the listener.
#[derive(Debug, Clone)]
pub struct LatentPosterior {
    pub verb: Vec<f64>,
    pub relation: Vec<f64>,
    pub frame: Option<Vec<f64>>,
}

impl LatentPosterior {
    pub fn validate(&self) -> Result<()> {
        for (name, head) in [("verb", Some(&self.verb)), ("relation", Some(&self.relation)), ("frame", self.frame.as_ref())]
        {
            if let Some(head) = head {
                let total: f64 = head.iter().sum();
                if (total - 1.0).abs() > 1e-9 {
                    return Err(Error::contract(format!(
                        "{name} head sums to {total}, expected 1"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Joint probability of one latent cell under head independence.
    pub fn joint(&self, verb: usize, relation: usize, frame: Option<usize>) -> f64 {
        let mut p = self.verb[verb] * self.relation[relation];
        if let (Some(head), Some(e)) = (self.frame.as_ref(), frame) {
            p *= head[e];
        }
        p
    }
}

/// Speaker output: categoricals over denominal and context candidates.
#[derive(Debug, Clone)]
pub struct SpeakerConditional {
    pub denominal: Vec<f64>,
    pub context: Vec<f64>,
}

/// One assignment of the latent variables (verb, relation[, frame]).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Cell {
    pub verb: usize,
    pub relation: usize,
    pub frame: Option<usize>,
}

/// Generative priors, one categorical per head.
#[derive(Debug, Clone)]
pub struct Priors {
    pub verb: Vec<f64>,
    pub relation: Vec<f64>,
    pub frame: Option<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct ModelManifest {
    kind: String,
    embed_dim: usize,
    hidden: usize,
    denominal_candidates: Vec<String>,
    context_candidates: Vec<String>,
    verb_candidates: Vec<String>,
    relations: Vec<String>,
    frame_cardinality: usize,
    alpha_verb: Vec<f64>,
    alpha_relation: Vec<f64>,
    beta: Vec<f64>,
}

/// A speaker-listener model over fixed candidate sets.
#[derive(Debug)]
pub struct Noun2VerbModel {
    pub kind: ModelKind,
    pub heads: HeadSpec,
    pub dims: NetworkDims,
    pub params: ParamSet,
    alpha_verb: Vec<f64>,
    alpha_relation: Vec<f64>,
    beta: Vec<f64>,
    denominal_index: HashMap<String, usize>,
    context_index: HashMap<String, usize>,
    verb_index: HashMap<String, usize>,
}

impl Noun2VerbModel {
    /// Build a model with Xavier-initialized weights, deterministic in
    /// `seed`. Priors start uniform.
    pub fn new(kind: ModelKind, heads: HeadSpec, dims: NetworkDims, seed: u64) -> Result<Self> {
        heads.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::new();
        let h = dims.hidden;
        let listener_in = 2 * dims.embed_dim;
        let speaker_in = match kind {
            ModelKind::Full => 3 * dims.embed_dim,
            _ => 2 * dims.embed_dim,
        };

        let encoder = |params: &mut ParamSet, prefix: &str, input: usize, rng: &mut ChaCha8Rng| -> Result<()> {
            params.insert_xavier(&format!("{prefix}.enc.w1"), h, input, rng)?;
            params.insert_zeros(&format!("{prefix}.enc.b1"), vec![h])?;
            params.insert_xavier(&format!("{prefix}.enc.w2"), h, h, rng)?;
            params.insert_zeros(&format!("{prefix}.enc.b2"), vec![h])?;
            params.insert_xavier(&format!("{prefix}.enc.w3"), h, h, rng)?;
            params.insert_zeros(&format!("{prefix}.enc.b3"), vec![h])?;
            Ok(())
        };
        let head = |params: &mut ParamSet, name: &str, out: usize, rng: &mut ChaCha8Rng| -> Result<()> {
            params.insert_xavier(&format!("{name}.w"), out, h, rng)?;
            params.insert_zeros(&format!("{name}.b"), vec![out])?;
            Ok(())
        };

        encoder(&mut params, "listener", listener_in, &mut rng)?;
        head(&mut params, "listener.head.verb", heads.verb_candidates.len(), &mut rng)?;
        head(&mut params, "listener.head.relation", heads.relations.len(), &mut rng)?;
        if kind == ModelKind::Full {
            head(&mut params, "listener.head.frame", heads.frame_cardinality, &mut rng)?;
        }
        encoder(&mut params, "speaker", speaker_in, &mut rng)?;
        head(&mut params, "speaker.head.denominal", heads.denominal_candidates.len(), &mut rng)?;
        head(&mut params, "speaker.head.context", heads.context_candidates.len(), &mut rng)?;
        if kind == ModelKind::Full {
            params.insert_xavier(
                "speaker.frame_embedding",
                heads.frame_cardinality,
                dims.embed_dim,
                &mut rng,
            )?;
        }

        let k = heads.frame_cardinality;
        let model = Noun2VerbModel {
            alpha_verb: uniform(heads.verb_candidates.len()),
            alpha_relation: uniform(heads.relations.len()),
            beta: uniform(k),
            denominal_index: index_of(&heads.denominal_candidates),
            context_index: index_of(&heads.context_candidates),
            verb_index: index_of(&heads.verb_candidates),
            kind,
            heads,
            dims,
            params,
        };
        Ok(model)
    }

    // ── Candidate lookups ───────────────────────────────────────────

    pub fn denominal_index(&self, token: &str) -> Option<usize> {
        self.denominal_index.get(token).copied()
    }

    pub fn context_index(&self, token: &str) -> Option<usize> {
        self.context_index.get(token).copied()
    }

    pub fn verb_index(&self, token: &str) -> Option<usize> {
        self.verb_index.get(token).copied()
    }

    pub fn relation_index(&self, relation: RelationType) -> Option<usize> {
        self.heads.relations.iter().position(|&r| r == relation)
    }

    /// Structural check: every parameter belongs to exactly one module.
    pub fn listener_speaker_disjoint(&self) -> bool {
        self.params.iter().all(|p| {
            p.name.starts_with("listener.") != p.name.starts_with("speaker.")
        })
    }

    // ── Priors ──────────────────────────────────────────────────────

    /// Per-head categorical priors. Generative models only.
    pub fn prior_distributions(&self) -> Result<Priors> {
        if !self.kind.is_generative() {
            return Err(Error::contract(
                "the discriminative model has no prior distributions",
            ));
        }
        Ok(Priors {
            verb: self.alpha_verb.clone(),
            relation: self.alpha_relation.clone(),
            frame: (self.kind == ModelKind::Full).then(|| self.beta.clone()),
        })
    }

    pub fn set_priors(
        &mut self,
        alpha_verb: Option<Vec<f64>>,
        alpha_relation: Option<Vec<f64>>,
        beta: Option<Vec<f64>>,
    ) -> Result<()> {
        if let Some(a) = alpha_verb {
            check_categorical("alpha_verb", &a, self.heads.verb_candidates.len())?;
            self.alpha_verb = a;
        }
        if let Some(a) = alpha_relation {
            check_categorical("alpha_relation", &a, self.heads.relations.len())?;
            self.alpha_relation = a;
        }
        if let Some(b) = beta {
            check_categorical("beta", &b, self.heads.frame_cardinality)?;
            self.beta = b;
        }
        Ok(())
    }

    pub fn alpha_verb(&self) -> &[f64] {
        &self.alpha_verb
    }

    pub fn alpha_relation(&self) -> &[f64] {
        &self.alpha_relation
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    // ── Forward passes (inference path, plain f64) ──────────────────

    pub fn check_embeddings(&self, emb: &EmbeddingTable) -> Result<()> {
        if emb.dimension() != self.dims.embed_dim {
            return Err(Error::contract(format!(
                "embedding dimension {} does not match model dimension {}",
                emb.dimension(),
                self.dims.embed_dim
            )));
        }
        Ok(())
    }

    /// Listener input vector for an utterance.
    pub fn listener_input(&self, emb: &EmbeddingTable, utterance: &Utterance) -> Vec<f64> {
        emb.embed_sequence(&[&utterance.denominal, &utterance.context])
    }

    /// Speaker input vector for an interpretation (plus frame for the full
    /// model): verb embedding ⊕ head relational word embedding [⊕ frame row].
    pub fn speaker_input(
        &self,
        emb: &EmbeddingTable,
        interp: &Interpretation,
        frame: Option<usize>,
    ) -> Result<Vec<f64>> {
        let mut input =
            emb.embed_sequence(&[&interp.verb, interp.relation.head_relational_word()]);
        match (self.kind, frame) {
            (ModelKind::Full, Some(e)) => {
                if e >= self.heads.frame_cardinality {
                    return Err(Error::contract(format!(
                        "frame index {e} out of range for K = {}",
                        self.heads.frame_cardinality
                    )));
                }
                let table = &self.params.by_name("speaker.frame_embedding").unwrap().tensor;
                let d = self.dims.embed_dim;
                input.extend_from_slice(&table.values[e * d..(e + 1) * d]);
            }
            (ModelKind::Full, None) => {
                return Err(Error::contract("the full model's speaker requires a frame index"));
            }
            (_, Some(_)) => {
                return Err(Error::contract(
                    "only the full model's speaker takes a frame index",
                ));
            }
            (_, None) => {}
        }
        Ok(input)
    }

    fn encoder_forward(&self, prefix: &str, input: &[f64]) -> Vec<f64> {
        let mut x = input.to_vec();
        for layer in 1..=3 {
            let w = &self.params.by_name(&format!("{prefix}.enc.w{layer}")).unwrap().tensor;
            let b = &self.params.by_name(&format!("{prefix}.enc.b{layer}")).unwrap().tensor;
            x = affine(w, b, &x);
            for v in &mut x {
                *v = v.tanh();
            }
        }
        x
    }

    fn head_forward(&self, name: &str, hidden: &[f64]) -> Vec<f64> {
        let w = &self.params.by_name(&format!("{name}.w")).unwrap().tensor;
        let b = &self.params.by_name(&format!("{name}.b")).unwrap().tensor;
        softmax_stable(&affine(w, b, hidden))
    }

    /// Per-head listener distributions `p_l(·|U)`.
    pub fn listener_posterior(
        &self,
        emb: &EmbeddingTable,
        utterance: &Utterance,
    ) -> Result<LatentPosterior> {
        self.check_embeddings(emb)?;
        let hidden = self.encoder_forward("listener", &self.listener_input(emb, utterance));
        Ok(LatentPosterior {
            verb: self.head_forward("listener.head.verb", &hidden),
            relation: self.head_forward("listener.head.relation", &hidden),
            frame: (self.kind == ModelKind::Full)
                .then(|| self.head_forward("listener.head.frame", &hidden)),
        })
    }

    /// Speaker conditionals `p_s(D|·)`, `p_s(C|·)` for one interpretation.
    pub fn speaker_likelihood(
        &self,
        emb: &EmbeddingTable,
        interp: &Interpretation,
        frame: Option<usize>,
    ) -> Result<SpeakerConditional> {
        self.check_embeddings(emb)?;
        let input = self.speaker_input(emb, interp, frame)?;
        let hidden = self.encoder_forward("speaker", &input);
        Ok(SpeakerConditional {
            denominal: self.head_forward("speaker.head.denominal", &hidden),
            context: self.head_forward("speaker.head.context", &hidden),
        })
    }

    // ── Latent-cell enumeration (generative models) ─────────────────

    /// Number of latent cells: |V|·|R| for the partial model, |V|·|R|·K for
    /// the full model.
    pub fn cell_count(&self) -> Result<usize> {
        if !self.kind.is_generative() {
            return Err(Error::contract(
                "the discriminative model has no latent cells",
            ));
        }
        let base = self.heads.verb_candidates.len() * self.heads.relations.len();
        Ok(match self.kind {
            ModelKind::Full => base * self.heads.frame_cardinality,
            _ => base,
        })
    }

    /// All latent cells in deterministic (verb-major) order.
    pub fn enumerate_cells(&self) -> Result<Vec<Cell>> {
        let mut cells = Vec::with_capacity(self.cell_count()?);
        for v in 0..self.heads.verb_candidates.len() {
            for r in 0..self.heads.relations.len() {
                match self.kind {
                    ModelKind::Full => {
                        for e in 0..self.heads.frame_cardinality {
                            cells.push(Cell { verb: v, relation: r, frame: Some(e) });
                        }
                    }
                    _ => cells.push(Cell { verb: v, relation: r, frame: None }),
                }
            }
        }
        Ok(cells)
    }

    /// Prior probability of one latent cell.
    pub fn cell_prior(&self, cell: Cell) -> f64 {
        let mut p = self.alpha_verb[cell.verb] * self.alpha_relation[cell.relation];
        if let Some(e) = cell.frame {
            p *= self.beta[e];
        }
        p
    }

    pub fn cell_interpretation(&self, cell: Cell) -> Interpretation {
        Interpretation::new(
            self.heads.verb_candidates[cell.verb].clone(),
            self.heads.relations[cell.relation],
        )
    }

    /// `log p_s(U | cell)`; the utterance tokens must be head candidates.
    pub fn log_speaker_likelihood(
        &self,
        emb: &EmbeddingTable,
        cell: Cell,
        utterance: &Utterance,
    ) -> Result<f64> {
        let d = self.denominal_index(&utterance.denominal).ok_or_else(|| {
            Error::contract(format!(
                "token {:?} is not a denominal candidate",
                utterance.denominal
            ))
        })?;
        let c = self.context_index(&utterance.context).ok_or_else(|| {
            Error::contract(format!(
                "token {:?} is not a context candidate",
                utterance.context
            ))
        })?;
        let interp = self.cell_interpretation(cell);
        let cond = self.speaker_likelihood(emb, &interp, cell.frame)?;
        Ok(cond.denominal[d].max(LOG_FLOOR).ln() + cond.context[c].max(LOG_FLOOR).ln())
    }

    /// `log p_s(U)` by exact enumeration over all latent cells.
    pub fn exact_log_marginal(&self, emb: &EmbeddingTable, utterance: &Utterance) -> Result<f64> {
        let mut terms = Vec::with_capacity(self.cell_count()?);
        for cell in self.enumerate_cells()? {
            let lp = self.cell_prior(cell).max(LOG_FLOOR).ln()
                + self.log_speaker_likelihood(emb, cell, utterance)?;
            terms.push(lp);
        }
        Ok(log_sum_exp(&terms))
    }

    /// Exact speaker posterior `p_s(cell | U)` as a joint over the cell
    /// enumeration order.
    pub fn exact_speaker_posterior(
        &self,
        emb: &EmbeddingTable,
        utterance: &Utterance,
    ) -> Result<Vec<f64>> {
        let mut logs = Vec::with_capacity(self.cell_count()?);
        for cell in self.enumerate_cells()? {
            logs.push(
                self.cell_prior(cell).max(LOG_FLOOR).ln()
                    + self.log_speaker_likelihood(emb, cell, utterance)?,
            );
        }
        let norm = log_sum_exp(&logs);
        Ok(logs.into_iter().map(|l| (l - norm).exp()).collect())
    }

    /// The listener's joint over the cell enumeration order (product of the
    /// per-head distributions).
    pub fn listener_joint(&self, emb: &EmbeddingTable, utterance: &Utterance) -> Result<Vec<f64>> {
        let posterior = self.listener_posterior(emb, utterance)?;
        Ok(self
            .enumerate_cells()?
            .into_iter()
            .map(|cell| posterior.joint(cell.verb, cell.relation, cell.frame))
            .collect())
    }

    /// ELBO under an arbitrary joint listener distribution over the cell
    /// enumeration order: `Σ_cells q·(log p_s(U|cell) + log p_0(cell) − log q)`.
    ///
    /// With `q` equal to the exact speaker posterior this is the log
    /// marginal likelihood; for any other `q` it is strictly below.
    pub fn elbo_with_joint_listener(
        &self,
        emb: &EmbeddingTable,
        utterance: &Utterance,
        q_joint: &[f64],
    ) -> Result<f64> {
        let cells = self.enumerate_cells()?;
        if q_joint.len() != cells.len() {
            return Err(Error::contract(format!(
                "joint listener has {} entries for {} cells",
                q_joint.len(),
                cells.len()
            )));
        }
        let mut elbo = 0.0;
        for (cell, &q) in cells.iter().zip(q_joint) {
            if q <= 0.0 {
                continue;
            }
            let log_lik = self.log_speaker_likelihood(emb, *cell, utterance)?;
            let log_prior = self.cell_prior(*cell).max(LOG_FLOOR).ln();
            elbo += q * (log_lik + log_prior - q.ln());
        }
        Ok(elbo)
    }

    /// Exact ELBO of the model's own (factorized) listener.
    pub fn exact_elbo(&self, emb: &EmbeddingTable, utterance: &Utterance) -> Result<f64> {
        let joint = self.listener_joint(emb, utterance)?;
        self.elbo_with_joint_listener(emb, utterance, &joint)
    }

    // ── Checkpointing ───────────────────────────────────────────────

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let manifest = ModelManifest {
            kind: self.kind.as_str().to_string(),
            embed_dim: self.dims.embed_dim,
            hidden: self.dims.hidden,
            denominal_candidates: self.heads.denominal_candidates.clone(),
            context_candidates: self.heads.context_candidates.clone(),
            verb_candidates: self.heads.verb_candidates.clone(),
            relations: self.heads.relations.iter().map(|r| r.symbol().to_string()).collect(),
            frame_cardinality: self.heads.frame_cardinality,
            alpha_verb: self.alpha_verb.clone(),
            alpha_relation: self.alpha_relation.clone(),
            beta: self.beta.clone(),
        };
        let manifest_bytes = serde_json::to_vec(&manifest)?;
        autodiff::save_checkpoint(path, &manifest_bytes, &self.params)?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let (manifest_bytes, params) = autodiff::load_checkpoint(path)?;
        let manifest: ModelManifest = serde_json::from_slice(&manifest_bytes)?;
        let kind = ModelKind::parse(&manifest.kind)?;
        let relations: Vec<RelationType> = manifest
            .relations
            .iter()
            .map(|s| s.parse())
            .collect::<Result<_>>()?;
        let heads = HeadSpec {
            denominal_candidates: manifest.denominal_candidates,
            context_candidates: manifest.context_candidates,
            verb_candidates: manifest.verb_candidates,
            relations,
            frame_cardinality: manifest.frame_cardinality,
        };
        heads.validate()?;
        let model = Noun2VerbModel {
            denominal_index: index_of(&heads.denominal_candidates),
            context_index: index_of(&heads.context_candidates),
            verb_index: index_of(&heads.verb_candidates),
            kind,
            dims: NetworkDims {
                embed_dim: manifest.embed_dim,
                hidden: manifest.hidden,
            },
            alpha_verb: manifest.alpha_verb,
            alpha_relation: manifest.alpha_relation,
            beta: manifest.beta,
            heads,
            params,
        };
        Ok(model)
    }
}

fn uniform(n: usize) -> Vec<f64> {
    vec![1.0 / n as f64; n]
}

fn index_of(tokens: &[String]) -> HashMap<String, usize> {
    tokens
        .iter()
        .enumerate()
        .map(|(i, t)| (t.clone(), i))
        .collect()
}

fn check_categorical(name: &str, p: &[f64], expected_len: usize) -> Result<()> {
    if p.len() != expected_len {
        return Err(Error::contract(format!(
            "{name} has length {}, expected {expected_len}",
            p.len()
        )));
    }
    if p.iter().any(|x| *x < 0.0 || !x.is_finite()) {
        return Err(Error::contract(format!("{name} entries must be finite and nonnegative")));
    }
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::contract(format!("{name} sums to {total}, expected 1")));
    }
    Ok(())
}

fn affine(w: &autodiff::Tensor, b: &autodiff::Tensor, x: &[f64]) -> Vec<f64> {
    let (rows, cols) = w.dims2();
    debug_assert_eq!(cols, x.len());
    let mut out = b.values.clone();
    for (acc, wrow) in out.iter_mut().zip(w.values.chunks_exact(cols)).take(rows) {
        *acc += wrow.iter().zip(x).map(|(wi, xi)| wi * xi).sum::<f64>();
    }
    out
}

pub(crate) fn log_sum_exp(logs: &[f64]) -> f64 {
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + logs.iter().map(|l| (l - max).exp()).sum::<f64>().ln()
}
