//! Offline paraphrase-verb mining and synonym-substitution augmentation.
//!
//! A paraphrase template is instantiated from an utterance and a relation:
//! the verb slot stays open, the utterance tokens fill the object and
//! oblique slots, and the relation's relational words form an alternation.
//! Harvesting scans a tokenized corpus for contiguous matches within single
//! sentences; the article "the" is optional at both noun slots, so the same
//! matcher covers corpora without articles.
//!
//! Corpus files hold one sentence per line, tokens as `surface/POS[/lemma]`
//! separated by spaces. Synonym lexicons are `token<TAB>syn1,syn2,...`.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fs;
use std::path::Path;

use crate::data::{SupervisedExample, Utterance};
use crate::relations::{ObjectSlot, RelationType};
use crate::{Error, Result};

/// One corpus token: surface form, part-of-speech tag, optional lemma.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub surface: String,
    pub pos: String,
    pub lemma: Option<String>,
}

/// A part-of-speech tagged corpus, sentence by sentence.
#[derive(Debug, Clone, Default)]
pub struct TokenizedCorpus {
    pub sentences: Vec<Vec<Token>>,
}

impl TokenizedCorpus {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let mut corpus = TokenizedCorpus::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut sentence = Vec::new();
            for piece in line.split_whitespace() {
                let mut parts = piece.split('/');
                let surface = parts.next().unwrap_or_default();
                let pos = parts.next().ok_or_else(|| {
                    Error::format_at(path, lineno + 1, format!("token {piece:?} lacks a POS tag"))
                })?;
                let lemma = parts.next().map(|l| l.to_lowercase());
                if surface.is_empty() || pos.is_empty() {
                    return Err(Error::format_at(
                        path,
                        lineno + 1,
                        format!("malformed token {piece:?}"),
                    ));
                }
                sentence.push(Token {
                    surface: surface.to_lowercase(),
                    pos: pos.to_uppercase(),
                    lemma,
                });
            }
            corpus.sentences.push(sentence);
        }
        Ok(corpus)
    }
}

/// A synonym substitution table. Self-mappings are dropped on load.
#[derive(Debug, Clone, Default)]
pub struct SynonymLexicon {
    map: HashMap<String, BTreeSet<String>>,
}

impl SynonymLexicon {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, token: &str, synonym: &str) {
        if token == synonym {
            return;
        }
        self.map
            .entry(token.to_string())
            .or_default()
            .insert(synonym.to_string());
    }

    pub fn synonyms(&self, token: &str) -> impl Iterator<Item = &str> {
        self.map
            .get(token)
            .into_iter()
            .flat_map(|set| set.iter().map(String::as_str))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let mut lex = SynonymLexicon::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (token, rest) = line.split_once('\t').ok_or_else(|| {
                Error::format_at(path, lineno + 1, "expected token<TAB>synonyms")
            })?;
            for syn in rest.split(',') {
                let syn = syn.trim();
                if !syn.is_empty() {
                    lex.insert(token.trim(), syn);
                }
            }
        }
        Ok(lex)
    }
}

/// A paraphrase pattern with the verb hole open.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParaphraseTemplate {
    pub relation: RelationType,
    /// Token filling the direct-object slot.
    pub object: String,
    /// Token filling the oblique slot after the relational word.
    pub oblique: String,
}

impl ParaphraseTemplate {
    /// Rendered pattern with the relational-word alternation expanded.
    pub fn pattern(&self) -> String {
        format!(
            "<VERB> the {} {} the {}",
            self.object,
            self.relation.relational_words().join("|"),
            self.oblique
        )
    }
}

/// Fill an utterance into the relation's template, leaving the verb open.
pub fn instantiate_template(utterance: &Utterance, relation: RelationType) -> ParaphraseTemplate {
    let (object, oblique) = match relation.object_slot() {
        ObjectSlot::DenominalNoun => (&utterance.denominal, &utterance.context),
        ObjectSlot::Context => (&utterance.context, &utterance.denominal),
    };
    ParaphraseTemplate {
        relation,
        object: object.to_lowercase(),
        oblique: oblique.to_lowercase(),
    }
}

/// Verbs filling the template's hole anywhere in the corpus, ranked by match
/// count with lexicographic tie-break, truncated to `top_n`.
pub fn harvest_paraphrases(
    corpus: &TokenizedCorpus,
    utterance: &Utterance,
    relation: RelationType,
    top_n: usize,
) -> Result<Vec<(String, usize)>> {
    if top_n == 0 {
        return Err(Error::contract("top_n must be at least 1"));
    }
    let template = instantiate_template(utterance, relation);
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for sentence in &corpus.sentences {
        for start in 0..sentence.len() {
            if let Some(verb) = match_at(sentence, start, &template) {
                *counts.entry(verb).or_insert(0) += 1;
            }
        }
    }
    let mut ranked: Vec<(String, usize)> = counts.into_iter().collect();
    // BTreeMap iteration is lexicographic, so a stable sort by descending
    // count leaves ties in lexicographic order.
    ranked.sort_by_key(|&(_, count)| std::cmp::Reverse(count));
    ranked.truncate(top_n);
    Ok(ranked)
}

/// Try to match the template at `start`; the verb slot must be a VERB-tagged
/// token. Returns the filling verb (lemma preferred) on success.
fn match_at(sentence: &[Token], start: usize, template: &ParaphraseTemplate) -> Option<String> {
    let verb_token = sentence.get(start)?;
    if verb_token.pos != "VERB" {
        return None;
    }
    let mut pos = start + 1;
    pos = skip_article(sentence, pos);
    if sentence.get(pos)?.surface != template.object {
        return None;
    }
    pos += 1;
    pos = match_relational_word(sentence, pos, template.relation)?;
    pos = skip_article(sentence, pos);
    if sentence.get(pos)?.surface != template.oblique {
        return None;
    }
    Some(
        verb_token
            .lemma
            .clone()
            .unwrap_or_else(|| verb_token.surface.clone()),
    )
}

fn skip_article(sentence: &[Token], pos: usize) -> usize {
    match sentence.get(pos) {
        Some(t) if t.surface == "the" => pos + 1,
        _ => pos,
    }
}

/// Match one of the relation's relational words (longest first, so "out of"
/// wins over "out"). Returns the position after the match.
fn match_relational_word(
    sentence: &[Token],
    pos: usize,
    relation: RelationType,
) -> Option<usize> {
    let mut alternatives: Vec<&str> = relation.relational_words().to_vec();
    alternatives.sort_by_key(|w| std::cmp::Reverse(w.split(' ').count()));
    'alts: for alt in alternatives {
        let words: Vec<&str> = alt.split(' ').collect();
        for (offset, w) in words.iter().enumerate() {
            match sentence.get(pos + offset) {
                Some(t) if t.surface == *w => {}
                _ => continue 'alts,
            }
        }
        return Some(pos + alt.split(' ').count());
    }
    None
}

/// Replace each example's denominal verb with its synonyms, dropping
/// duplicates and any pair already present in the supervised set.
pub fn augment_with_synonyms(
    examples: &[SupervisedExample],
    lexicon: &SynonymLexicon,
) -> Vec<Utterance> {
    let originals: HashSet<(&str, &str)> = examples
        .iter()
        .map(|e| (e.utterance.denominal.as_str(), e.utterance.context.as_str()))
        .collect();
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for ex in examples {
        for syn in lexicon.synonyms(&ex.utterance.denominal) {
            if syn == ex.utterance.denominal {
                continue;
            }
            let key = (syn.to_string(), ex.utterance.context.clone());
            if originals.contains(&(key.0.as_str(), key.1.as_str())) {
                continue;
            }
            if seen.insert(key.clone()) {
                out.push(Utterance {
                    denominal: key.0,
                    context: key.1,
                });
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::SourceTag;
    use crate::data::Interpretation;

    fn sent(text: &str) -> Vec<Token> {
        text.split_whitespace()
            .map(|piece| {
                let mut parts = piece.split('/');
                Token {
                    surface: parts.next().unwrap().to_lowercase(),
                    pos: parts.next().unwrap_or("X").to_uppercase(),
                    lemma: parts.next().map(str::to_string),
                }
            })
            .collect()
    }

    #[test]
    fn template_orients_slots_by_relation() {
        let carpet = Utterance::new("carpet", "floor").unwrap();
        let t = instantiate_template(&carpet, RelationType::LocatumOn);
        assert_eq!(t.pattern(), "<VERB> the carpet on|onto|in|into|to|at the floor");

        let porch = Utterance::new("porch", "newspaper").unwrap();
        let t2 = instantiate_template(&porch, RelationType::LocationIn);
        assert_eq!(
            t2.pattern(),
            "<VERB> the newspaper on|onto|in|into|to|at the porch"
        );

        // Deterministic: same inputs, same pattern.
        assert_eq!(t2, instantiate_template(&porch, RelationType::LocationIn));
        // Exactly one verb hole.
        assert_eq!(t2.pattern().matches("<VERB>").count(), 1);
    }

    #[test]
    fn harvest_counts_exact_matches() {
        let mut corpus = TokenizedCorpus::default();
        for _ in 0..3 {
            corpus
                .sentences
                .push(sent("put/VERB the/DET carpet/NOUN on/ADP the/DET floor/NOUN"));
        }
        corpus
            .sentences
            .push(sent("lay/VERB the/DET carpet/NOUN on/ADP the/DET floor/NOUN"));
        let utt = Utterance::new("carpet", "floor").unwrap();
        let ranked = harvest_paraphrases(&corpus, &utt, RelationType::LocatumOn, 3).unwrap();
        assert_eq!(ranked, vec![("put".to_string(), 3), ("lay".to_string(), 1)]);

        let top1 = harvest_paraphrases(&corpus, &utt, RelationType::LocatumOn, 1).unwrap();
        assert_eq!(top1, vec![("put".to_string(), 3)]);
    }

    #[test]
    fn harvest_empty_corpus_gives_empty_list() {
        let corpus = TokenizedCorpus::default();
        let utt = Utterance::new("carpet", "floor").unwrap();
        let ranked = harvest_paraphrases(&corpus, &utt, RelationType::LocatumOn, 3).unwrap();
        assert!(ranked.is_empty());
    }

    #[test]
    fn article_is_optional_and_verb_tag_required() {
        let mut corpus = TokenizedCorpus::default();
        corpus.sentences.push(sent("put/VERB carpet/NOUN on/ADP floor/NOUN"));
        corpus.sentences.push(sent("near/ADP the/DET carpet/NOUN on/ADP the/DET floor/NOUN"));
        let utt = Utterance::new("carpet", "floor").unwrap();
        let ranked = harvest_paraphrases(&corpus, &utt, RelationType::LocatumOn, 3).unwrap();
        assert_eq!(ranked, vec![("put".to_string(), 1)]);
    }

    #[test]
    fn lemma_preferred_over_surface() {
        let mut corpus = TokenizedCorpus::default();
        corpus
            .sentences
            .push(sent("dropped/VERB/drop the/DET newspaper/NOUN on/ADP the/DET porch/NOUN"));
        let utt = Utterance::new("porch", "newspaper").unwrap();
        let ranked = harvest_paraphrases(&corpus, &utt, RelationType::LocationIn, 3).unwrap();
        assert_eq!(ranked, vec![("drop".to_string(), 1)]);
    }

    #[test]
    fn multi_token_relational_words_match() {
        let mut corpus = TokenizedCorpus::default();
        corpus
            .sentences
            .push(sent("dig/VERB the/DET gold/NOUN out/ADP of/ADP the/DET mine/NOUN"));
        let utt = Utterance::new("mine", "gold").unwrap();
        let ranked = harvest_paraphrases(&corpus, &utt, RelationType::LocationOut, 3).unwrap();
        assert_eq!(ranked, vec![("dig".to_string(), 1)]);
    }

    #[test]
    fn ties_break_lexicographically() {
        let mut corpus = TokenizedCorpus::default();
        corpus.sentences.push(sent("zip/VERB carpet/NOUN on/ADP floor/NOUN"));
        corpus.sentences.push(sent("aim/VERB carpet/NOUN on/ADP floor/NOUN"));
        let utt = Utterance::new("carpet", "floor").unwrap();
        let ranked = harvest_paraphrases(&corpus, &utt, RelationType::LocatumOn, 2).unwrap();
        assert_eq!(ranked[0].0, "aim");
        assert_eq!(ranked[1].0, "zip");
    }

    fn example(d: &str, c: &str) -> SupervisedExample {
        SupervisedExample {
            utterance: Utterance::new(d, c).unwrap(),
            gold: vec![(Interpretation::new("send", RelationType::Instrument), 1)],
            source: SourceTag::Corpus,
            decade: None,
        }
    }

    #[test]
    fn augmentation_substitutes_synonyms() {
        let mut lex = SynonymLexicon::new();
        lex.insert("mail", "email");
        lex.insert("mail", "post");
        let out = augment_with_synonyms(&[example("mail", "letter")], &lex);
        assert_eq!(
            out,
            vec![
                Utterance::new("email", "letter").unwrap(),
                Utterance::new("post", "letter").unwrap(),
            ]
        );
    }

    #[test]
    fn augmentation_skips_self_and_existing_pairs() {
        let mut lex = SynonymLexicon::new();
        lex.insert("mail", "mail"); // dropped at insert
        lex.insert("mail", "email");
        let examples = vec![example("mail", "letter"), example("email", "letter")];
        let out = augment_with_synonyms(&examples, &lex);
        // (email, letter) already exists in the supervised set.
        assert!(out.is_empty());

        let empty = augment_with_synonyms(&examples, &SynonymLexicon::new());
        assert!(empty.is_empty());
    }

    #[test]
    fn corpus_loader_validates_tokens() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        use std::io::Write;
        f.write_all(b"put/VERB the/DET carpet/NOUN\nbroken-token\n").unwrap();
        let err = TokenizedCorpus::load(f.path()).unwrap_err();
        assert!(err.to_string().contains(":2"), "{err}");
    }
}
