//! Label similarity from averaged word embeddings.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::infersim::SimilarityMatrix;
use crate::matrixio::{format_f64, LabelSet, Matrix};

/// Lowercase word to fixed-length vector.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    words: Vec<String>,
    vectors: HashMap<String, Vec<f64>>,
}

impl EmbeddingTable {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Shape("embedding dimension must be positive".into()));
        }
        Ok(EmbeddingTable {
            dim,
            words: Vec::new(),
            vectors: HashMap::new(),
        })
    }

    /// Adds a word (lowercased). Duplicates are rejected.
    pub fn insert(&mut self, word: &str, vector: Vec<f64>) -> Result<()> {
        if vector.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: vector.len(),
            });
        }
        if let Some(v) = vector.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                line: self.words.len() + 1,
                token: v.to_string(),
            });
        }
        let word = word.to_lowercase();
        if self.vectors.contains_key(&word) {
            return Err(Error::DuplicateWord(word));
        }
        self.words.push(word.clone());
        self.vectors.insert(word, vector);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn get(&self, word: &str) -> Option<&[f64]> {
        self.vectors.get(word).map(Vec::as_slice)
    }

    /// Words in insertion order.
    pub fn words(&self) -> &[String] {
        &self.words
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabelEmbedding {
    pub vector: Vec<f64>,
    pub covered_words: usize,
    pub total_words: usize,
}

/// Lowercase tokens split on commas, whitespace, hyphens and underscores.
pub fn tokenize_label(label: &str) -> Vec<String> {
    label
        .split(|c: char| c == ',' || c == '-' || c == '_' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Mean of the in-vocabulary token vectors; zero when nothing is covered.
pub fn embed_label(table: &EmbeddingTable, label: &str) -> LabelEmbedding {
    let tokens = tokenize_label(label);
    let mut vector = vec![0.0; table.dim];
    let mut covered = 0;
    for tok in &tokens {
        if let Some(v) = table.get(tok) {
            covered += 1;
            for (acc, x) in vector.iter_mut().zip(v) {
                *acc += x;
            }
        }
    }
    if covered > 0 {
        let n = covered as f64;
        vector.iter_mut().for_each(|x| *x /= n);
    }
    LabelEmbedding {
        vector,
        covered_words: covered,
        total_words: tokens.len(),
    }
}

/// `u·v / (|u| |v|)`, or 0 when either vector is zero.
pub fn cosine(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::DimensionMismatch {
            expected: u.len(),
            found: v.len(),
        });
    }
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    let nu = u.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nv = v.iter().map(|b| b * b).sum::<f64>().sqrt();
    if nu == 0.0 || nv == 0.0 {
        return Ok(0.0);
    }
    Ok((dot / (nu * nv)).clamp(-1.0, 1.0))
}

/// `sim(i, j) = max(0, cosine(embed(target_i), embed(source_j)))`.
pub fn word2vec_similarity_matrix(
    table: &EmbeddingTable,
    source_labels: &LabelSet,
    target_labels: &LabelSet,
) -> Result<SimilarityMatrix> {
    let embed_all = |labels: &LabelSet| -> Vec<LabelEmbedding> {
        labels
            .entries()
            .iter()
            .map(|e| embed_label(table, &e.label))
            .collect()
    };
    let sources = embed_all(source_labels);
    let targets = embed_all(target_labels);
    if sources.is_empty() || targets.is_empty() {
        return Err(Error::Shape("label sets must be non-empty".into()));
    }
    let mut values = Matrix::zeros(targets.len(), sources.len());
    for (i, t) in targets.iter().enumerate() {
        for (j, s) in sources.iter().enumerate() {
            values.set(i, j, cosine(&t.vector, &s.vector)?.max(0.0));
        }
    }
    SimilarityMatrix::new(values)
}

/// Classic text format: optional `<count> <dim>` header, then
/// `<word> <v1> ... <v_dim>` per line.
pub fn parse_embeddings(text: &str) -> Result<EmbeddingTable> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty())
        .peekable();

    let mut declared_count = None;
    let mut dim = None;
    if let Some(&(_, first)) = lines.peek() {
        let tokens: Vec<&str> = first.split_whitespace().collect();
        if let [a, b] = tokens[..] {
            if let (Ok(count), Ok(d)) = (a.parse::<usize>(), b.parse::<usize>()) {
                declared_count = Some(count);
                dim = Some(d);
                lines.next();
            }
        }
    }

    let mut table: Option<EmbeddingTable> = None;
    for (n, line) in lines {
        let mut tokens = line.split_whitespace();
        let word = tokens.next().unwrap_or_default();
        let vector = tokens
            .map(|t| {
                let v: f64 = t.parse().map_err(|_| Error::BadNumber {
                    line: n,
                    token: t.to_string(),
                })?;
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(Error::NonFinite {
                        line: n,
                        token: t.to_string(),
                    })
                }
            })
            .collect::<Result<Vec<f64>>>()?;
        if table.is_none() {
            table = Some(EmbeddingTable::new(dim.unwrap_or(vector.len()))?);
        }
        let current = table.as_mut().unwrap();
        if vector.len() != current.dim {
            return Err(Error::RaggedRow {
                line: n,
                expected: current.dim,
                found: vector.len(),
            });
        }
        current.insert(word, vector)?;
    }

    let table = match table {
        Some(t) => t,
        None => EmbeddingTable::new(dim.unwrap_or(0))?,
    };
    if let Some(count) = declared_count {
        if count != table.len() {
            return Err(Error::DimensionMismatch {
                expected: count,
                found: table.len(),
            });
        }
    }
    Ok(table)
}

pub fn format_embeddings(table: &EmbeddingTable) -> String {
    let mut out = String::new();
    writeln!(out, "{} {}", table.len(), table.dim).unwrap();
    for w in &table.words {
        out.push_str(w);
        for &v in &table.vectors[w] {
            out.push(' ');
            out.push_str(&format_f64(v));
        }
        out.push('\n');
    }
    out
}

pub fn read_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingTable> {
    let path = path.as_ref();
    parse_embeddings(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
}

pub fn write_embeddings(table: &EmbeddingTable, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, format_embeddings(table)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ab() -> EmbeddingTable {
        let mut t = EmbeddingTable::new(2).unwrap();
        t.insert("a", vec![1.0, 0.0]).unwrap();
        t.insert("b", vec![0.0, 1.0]).unwrap();
        t
    }

    #[test]
    fn tokenizer_splits_on_delimiters() {
        assert_eq!(tokenize_label("Anchor, ground tackle"), ["anchor", "ground", "tackle"]);
        assert_eq!(tokenize_label("Sundial"), ["sundial"]);
        assert_eq!(tokenize_label("hook-claw_device"), ["hook", "claw", "device"]);
        assert!(tokenize_label(" ,-_ ").is_empty());
    }

    #[test]
    fn embed_label_means_and_oov() {
        let t = ab();
        assert_eq!(embed_label(&t, "a b").vector, [0.5, 0.5]);
        assert_eq!(embed_label(&t, "A").vector, [1.0, 0.0]);
        let oov = embed_label(&t, "zzz");
        assert_eq!(oov.vector, [0.0, 0.0]);
        assert_eq!((oov.covered_words, oov.total_words), (0, 1));
        let partial = embed_label(&t, "a zzz");
        assert_eq!(partial.vector, [1.0, 0.0]);
        assert_eq!((partial.covered_words, partial.total_words), (1, 2));
    }

    #[test]
    fn duplicate_tokens_weight_the_mean() {
        let t = ab();
        let e = embed_label(&t, "a a b").vector;
        assert!((e[0] - 2.0 / 3.0).abs() < 1e-15 && (e[1] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn cosine_basics() {
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert!((cosine(&[1.0, 2.0], &[2.0, 4.0]).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(cosine(&[1.0, 0.0], &[-1.0, 0.0]).unwrap(), -1.0);
        assert_eq!(cosine(&[0.0, 0.0], &[1.0, 0.0]).unwrap(), 0.0);
        assert!(cosine(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn similarity_matrix_clamps_and_handles_oov() {
        let mut t = EmbeddingTable::new(2).unwrap();
        t.insert("x", vec![1.0, 0.0]).unwrap();
        t.insert("y", vec![1.0, 1.0]).unwrap();
        t.insert("z", vec![-1.0, 0.2]).unwrap();
        let sources = LabelSet::from_names(&["x", "y"]).unwrap();
        let targets = LabelSet::from_names(&["x", "z", "unknown words"]).unwrap();
        let m = word2vec_similarity_matrix(&t, &sources, &targets).unwrap();
        // Hand arithmetic: cos(x,y)=1/sqrt2; cos(z,x)<0 -> 0; cos(z,y)=(-1+0.2)/(sqrt(1.04)*sqrt2)<0 -> 0.
        assert_eq!(m.get(0, 0), 1.0);
        assert!((m.get(0, 1) - 1.0 / 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(m.values().row(1), &[0.0, 0.0]);
        assert_eq!(m.values().row(2), &[0.0, 0.0]);
    }

    #[test]
    fn identical_labels_give_unit_diagonal() {
        let t = ab();
        let labels = LabelSet::from_names(&["a", "b", "a b"]).unwrap();
        let m = word2vec_similarity_matrix(&t, &labels, &labels).unwrap();
        for i in 0..3 {
            assert!((m.get(i, i) - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn embedding_file_header_detection() {
        let with = parse_embeddings("2 3\nfoo 1 2 3\nBar 4 5 6\n").unwrap();
        let without = parse_embeddings("foo 1 2 3\nbar 4 5 6\n").unwrap();
        assert_eq!(with, without);
        assert_eq!(with.get("bar").unwrap(), &[4.0, 5.0, 6.0]);
        // A one-dimensional table whose first line has two tokens is not a header.
        let one = parse_embeddings("cat 0.5\ndog 2\n").unwrap();
        assert_eq!(one.dim(), 1);
        assert_eq!(one.len(), 2);
        assert!(matches!(parse_embeddings("foo 1 2\nbar 1\n"), Err(Error::RaggedRow { line: 2, .. })));
        assert!(matches!(parse_embeddings("3 1\nfoo 1\n"), Err(Error::DimensionMismatch { .. })));
        assert!(matches!(parse_embeddings("foo 1\nFOO 2\n"), Err(Error::DuplicateWord(_))));
        assert_eq!(parse_embeddings(&format_embeddings(&with)).unwrap(), with);
    }

    proptest! {
        #[test]
        fn cosine_is_scale_invariant(
            u in prop::collection::vec(-5.0..5.0f64, 4),
            v in prop::collection::vec(-5.0..5.0f64, 4),
            a in 0.01..100.0f64,
            b in 0.01..100.0f64,
        ) {
            let su: Vec<f64> = u.iter().map(|x| x * a).collect();
            let sv: Vec<f64> = v.iter().map(|x| x * b).collect();
            prop_assert!((cosine(&su, &sv).unwrap() - cosine(&u, &v).unwrap()).abs() < 1e-12);
        }

        #[test]
        fn embed_label_ignores_token_order(perm in Just(vec!["a", "b", "c", "a"]).prop_shuffle()) {
            let mut t = ab();
            t.insert("c", vec![0.3, -2.0]).unwrap();
            let base = embed_label(&t, "a b c a").vector;
            let shuffled = embed_label(&t, &perm.join(" ")).vector;
            for (x, y) in base.iter().zip(&shuffled) {
                prop_assert!((x - y).abs() < 1e-15);
            }
        }

        #[test]
        fn matrix_entries_in_unit_interval(vals in prop::collection::vec(-3.0..3.0f64, 12)) {
            let mut t = EmbeddingTable::new(3).unwrap();
            for (i, chunk) in vals.chunks(3).enumerate() {
                t.insert(&format!("w{i}"), chunk.to_vec()).unwrap();
            }
            let labels = LabelSet::from_names(&["w0 w1", "w2", "w3 w0", "oov"]).unwrap();
            let m = word2vec_similarity_matrix(&t, &labels, &labels).unwrap();
            prop_assert!(m.values().data().iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
    }
}
