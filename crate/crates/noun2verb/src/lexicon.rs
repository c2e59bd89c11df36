//! Vocabulary management and pre-trained embedding ingestion.
//!
//! Embeddings come from line-delimited text files (`token v1 .. vd`), the
//! common release format for pretrained vectors. Tokens are case-folded on
//! load. Out-of-vocabulary tokens map to the arithmetic mean of all rows,
//! recomputed at load time, so `embed` is total and deterministic.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use crate::{Error, Result};

/// Role tags a token can carry in the candidate sets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    /// Usable as a denominal verb D (a noun extended into a verb slot).
    NounCandidate,
    /// Usable as a paraphrase verb V.
    VerbCandidate,
    /// A relational word (preposition or similar).
    RelationWord,
}

impl Role {
    fn bit(self) -> u8 {
        match self {
            Role::NounCandidate => 1,
            Role::VerbCandidate => 2,
            Role::RelationWord => 4,
        }
    }
}

/// Bidirectional token ↔ dense-id map with per-token role tags.
#[derive(Debug, Clone, Default)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
    roles: Vec<u8>,
}

impl Vocabulary {
    pub fn new() -> Self {
        Self::default()
    }

    /// Intern a token, returning its stable id.
    pub fn intern(&mut self, token: &str) -> usize {
        if let Some(&id) = self.index.get(token) {
            return id;
        }
        let id = self.tokens.len();
        self.tokens.push(token.to_string());
        self.index.insert(token.to_string(), id);
        self.roles.push(0);
        id
    }

    pub fn id_of(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token_of(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    pub fn tag(&mut self, token: &str, role: Role) {
        let id = self.intern(token);
        self.roles[id] |= role.bit();
    }

    pub fn untag(&mut self, token: &str, role: Role) {
        if let Some(&id) = self.index.get(token) {
            self.roles[id] &= !role.bit();
        }
    }

    pub fn has_role(&self, token: &str, role: Role) -> bool {
        self.index
            .get(token)
            .map(|&id| self.roles[id] & role.bit() != 0)
            .unwrap_or(false)
    }

    /// Tokens carrying `role`, in id (insertion) order.
    pub fn with_role(&self, role: Role) -> Vec<&str> {
        self.tokens
            .iter()
            .enumerate()
            .filter(|(id, _)| self.roles[*id] & role.bit() != 0)
            .map(|(_, t)| t.as_str())
            .collect()
    }
}

/// A loaded table of distributed word embeddings.
#[derive(Debug, Clone)]
pub struct EmbeddingTable {
    dimension: usize,
    index: HashMap<String, usize>,
    rows: Vec<f64>,
    oov_vector: Vec<f64>,
}

impl EmbeddingTable {
    /// Build a table from (token, vector) pairs. Rows must be finite and of
    /// one consistent dimension; the OOV vector is the mean of all rows.
    pub fn from_rows(entries: Vec<(String, Vec<f64>)>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::format("embedding table has no rows"));
        }
        let dimension = entries[0].1.len();
        if dimension == 0 {
            return Err(Error::format("embedding dimension is zero"));
        }
        let mut index = HashMap::with_capacity(entries.len());
        let mut rows = Vec::with_capacity(entries.len() * dimension);
        for (token, vector) in entries {
            if vector.len() != dimension {
                return Err(Error::format(format!(
                    "token {token:?} has dimension {} but table dimension is {dimension}",
                    vector.len()
                )));
            }
            if vector.iter().any(|v| !v.is_finite()) {
                return Err(Error::format(format!(
                    "token {token:?} has a non-finite embedding entry"
                )));
            }
            if let Some(&existing) = index.get(&token) {
                // Last occurrence wins.
                rows[existing * dimension..(existing + 1) * dimension]
                    .copy_from_slice(&vector);
            } else {
                index.insert(token, rows.len() / dimension);
                rows.extend_from_slice(&vector);
            }
        }
        let count = index.len();
        let mut oov_vector = vec![0.0; dimension];
        for r in 0..count {
            for d in 0..dimension {
                oov_vector[d] += rows[r * dimension + d];
            }
        }
        for v in &mut oov_vector {
            *v /= count as f64;
        }
        Ok(EmbeddingTable {
            dimension,
            index,
            rows,
            oov_vector,
        })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(&token.to_lowercase())
    }

    pub fn oov_vector(&self) -> &[f64] {
        &self.oov_vector
    }

    /// The stored row for an in-vocabulary token, the OOV mean otherwise.
    pub fn embed(&self, token: &str) -> &[f64] {
        match self.index.get(&token.to_lowercase()) {
            Some(&id) => &self.rows[id * self.dimension..(id + 1) * self.dimension],
            None => &self.oov_vector,
        }
    }

    /// Concatenation of per-token embeddings in argument order.
    pub fn embed_sequence(&self, tokens: &[&str]) -> Vec<f64> {
        let mut out = Vec::with_capacity(tokens.len() * self.dimension);
        for t in tokens {
            out.extend_from_slice(self.embed(t));
        }
        out
    }
}

/// Load an embedding table from `path`, keeping only tokens in
/// `vocab_filter` when one is given. Tokens are case-folded.
pub fn load_embeddings(path: &Path, vocab_filter: Option<&Vocabulary>) -> Result<EmbeddingTable> {
    let file = File::open(path)?;
    let reader = BufReader::new(file);
    let mut entries: Vec<(String, Vec<f64>)> = Vec::new();
    let mut dimension: Option<usize> = None;
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.trim_end();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let token = match parts.next() {
            Some(t) => t.to_lowercase(),
            None => continue,
        };
        let vector: Vec<f64> = parts
            .map(|p| {
                p.parse::<f64>().map_err(|_| {
                    Error::format_at(path, lineno + 1, format!("bad number {p:?}"))
                })
            })
            .collect::<Result<_>>()?;
        match dimension {
            None => {
                if vector.is_empty() {
                    return Err(Error::format_at(path, lineno + 1, "row has no values"));
                }
                dimension = Some(vector.len());
            }
            Some(d) if d != vector.len() => {
                return Err(Error::format_at(
                    path,
                    lineno + 1,
                    format!("dimension {} does not match earlier dimension {d}", vector.len()),
                ));
            }
            _ => {}
        }
        if let Some(filter) = vocab_filter {
            if !filter.contains(&token) {
                continue;
            }
        }
        entries.push((token, vector));
    }
    if entries.is_empty() {
        return Err(Error::Format {
            path: Some(path.display().to_string()),
            line: None,
            msg: "no embedding rows loaded".into(),
        });
    }
    EmbeddingTable::from_rows(entries)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_file(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn loads_shape_and_reads_back() {
        let f = write_file("porch 0.1 0.2\nmail 0.3 0.4\nbike -1.0 2.0\n");
        let table = load_embeddings(f.path(), None).unwrap();
        assert_eq!(table.len(), 3);
        assert_eq!(table.dimension(), 2);
        assert_eq!(table.embed("porch"), &[0.1, 0.2]);
    }

    #[test]
    fn oov_vector_is_mean_of_rows() {
        let f = write_file("a 0 2\nb 2 0\n");
        let table = load_embeddings(f.path(), None).unwrap();
        assert_eq!(table.oov_vector(), &[1.0, 1.0]);
        assert_eq!(table.embed("zzz"), &[1.0, 1.0]);
        // Two different unknown tokens get the identical vector.
        assert_eq!(table.embed("q1"), table.embed("q2"));
    }

    #[test]
    fn inconsistent_dimension_reports_line() {
        let f = write_file("a 1 2\nb 1 2 3\n");
        let err = load_embeddings(f.path(), None).unwrap_err();
        assert!(err.to_string().contains(":2"), "{err}");
    }

    #[test]
    fn empty_file_is_format_error() {
        let f = write_file("");
        assert!(load_embeddings(f.path(), None).is_err());
    }

    #[test]
    fn case_folded_on_load() {
        let f = write_file("Porch 1 1\n");
        let table = load_embeddings(f.path(), None).unwrap();
        assert_eq!(table.embed("porch"), &[1.0, 1.0]);
        assert_eq!(table.embed("PORCH"), &[1.0, 1.0]);
    }

    #[test]
    fn vocab_filter_restricts_rows() {
        let f = write_file("a 1 1\nb 2 2\nc 3 3\n");
        let mut vocab = Vocabulary::new();
        vocab.intern("a");
        vocab.intern("c");
        let table = load_embeddings(f.path(), Some(&vocab)).unwrap();
        assert_eq!(table.len(), 2);
        assert!(table.contains("a") && table.contains("c") && !table.contains("b"));
    }

    #[test]
    fn loading_twice_yields_identical_tables() {
        let f = write_file("a 0.25 -0.5\nb 0.75 1.5\n");
        let t1 = load_embeddings(f.path(), None).unwrap();
        let t2 = load_embeddings(f.path(), None).unwrap();
        assert_eq!(t1.embed("a"), t2.embed("a"));
        assert_eq!(t1.oov_vector(), t2.oov_vector());
    }

    #[test]
    fn sequence_concatenates_in_order() {
        let f = write_file("a 1 2\nb 3 4\n");
        let table = load_embeddings(f.path(), None).unwrap();
        assert_eq!(table.embed_sequence(&["a", "b"]), vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(table.embed_sequence(&["b", "a"]), vec![3.0, 4.0, 1.0, 2.0]);
        assert!(table.embed_sequence(&[]).is_empty());
    }

    #[test]
    fn vocabulary_ids_are_dense_and_bijective() {
        let mut v = Vocabulary::new();
        let a = v.intern("porch");
        let b = v.intern("mail");
        assert_eq!(v.intern("porch"), a);
        assert_eq!((a, b), (0, 1));
        assert_eq!(v.len(), 2);
        for id in 0..v.len() {
            let token = v.token_of(id).unwrap();
            assert_eq!(v.id_of(token), Some(id));
        }
        assert!(v.token_of(2).is_none());
    }

    #[test]
    fn roles_tag_and_untag() {
        let mut v = Vocabulary::new();
        v.tag("porch", Role::NounCandidate);
        v.tag("drop", Role::VerbCandidate);
        assert!(v.has_role("porch", Role::NounCandidate));
        assert!(!v.has_role("porch", Role::VerbCandidate));
        v.untag("porch", Role::NounCandidate);
        assert!(!v.has_role("porch", Role::NounCandidate));
        assert_eq!(v.with_role(Role::VerbCandidate), vec!["drop"]);
    }
}
