use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::TextModelError;
use crate::Scalar;

/// Splits text into lowercased alphanumeric runs of at least two characters.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|run| run.chars().nth(1).is_some())
        .map(str::to_lowercase)
        .collect()
}

/// Token to dense index map with document frequencies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "VocabularyRepr", into = "VocabularyRepr")]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
    document_frequency: Vec<u64>,
    n_documents: u64,
}

#[derive(Serialize, Deserialize)]
struct VocabularyRepr {
    tokens: Vec<String>,
    document_frequency: Vec<u64>,
    n_documents: u64,
}

impl From<Vocabulary> for VocabularyRepr {
    fn from(v: Vocabulary) -> Self {
        Self {
            tokens: v.tokens,
            document_frequency: v.document_frequency,
            n_documents: v.n_documents,
        }
    }
}

impl TryFrom<VocabularyRepr> for Vocabulary {
    type Error = String;

    fn try_from(repr: VocabularyRepr) -> Result<Self, Self::Error> {
        if repr.tokens.len() != repr.document_frequency.len() {
            return Err("token and document frequency lengths differ".into());
        }
        if repr
            .document_frequency
            .iter()
            .any(|&df| df == 0 || df > repr.n_documents)
        {
            return Err("document frequency outside [1, n_documents]".into());
        }
        let mut index = HashMap::with_capacity(repr.tokens.len());
        for (i, token) in repr.tokens.iter().enumerate() {
            if index.insert(token.clone(), i as u32).is_some() {
                return Err(format!("duplicate token {token:?}"));
            }
        }
        Ok(Self {
            tokens: repr.tokens,
            index,
            document_frequency: repr.document_frequency,
            n_documents: repr.n_documents,
        })
    }
}

impl Vocabulary {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn index_of(&self, token: &str) -> Option<usize> {
        self.index.get(token).map(|&i| i as usize)
    }

    pub fn token(&self, index: usize) -> Option<&str> {
        self.tokens.get(index).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn document_frequency(&self, index: usize) -> u64 {
        self.document_frequency[index]
    }

    pub fn n_documents(&self) -> u64 {
        self.n_documents
    }
}

/// Sparse vector stored as strictly increasing indices with non-zero values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseVector<T> {
    indices: Vec<u32>,
    values: Vec<T>,
}

impl<T: Scalar> SparseVector<T> {
    pub fn zero() -> Self {
        Self {
            indices: Vec::new(),
            values: Vec::new(),
        }
    }

    /// Builds a vector from unordered pairs; duplicate indices are summed and
    /// zeros dropped.
    pub fn from_pairs(mut pairs: Vec<(u32, T)>) -> Self {
        pairs.sort_by_key(|&(i, _)| i);
        let mut indices = Vec::with_capacity(pairs.len());
        let mut values: Vec<T> = Vec::with_capacity(pairs.len());
        for (i, v) in pairs {
            if indices.last() == Some(&i) {
                let last = values.last_mut().expect("values track indices");
                *last = *last + v;
            } else {
                indices.push(i);
                values.push(v);
            }
        }
        let (indices, values) = indices
            .into_iter()
            .zip(values)
            .filter(|&(_, v)| v != T::zero())
            .unzip();
        Self { indices, values }
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn is_zero(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, T)> + '_ {
        self.indices
            .iter()
            .zip(&self.values)
            .map(|(&i, &v)| (i as usize, v))
    }

    pub fn get(&self, index: usize) -> T {
        match self.indices.binary_search(&(index as u32)) {
            Ok(pos) => self.values[pos],
            Err(_) => T::zero(),
        }
    }

    pub fn dot(&self, dense: &[T]) -> T {
        self.iter().map(|(i, v)| v * dense[i]).sum()
    }

    pub fn norm(&self) -> T {
        self.values.iter().map(|&v| v * v).sum::<T>().sqrt()
    }

    /// Largest index plus one, or zero for the empty vector.
    pub fn min_dimension(&self) -> usize {
        self.indices.last().map_or(0, |&i| i as usize + 1)
    }
}

/// Fitted vocabulary plus smoothed inverse document frequencies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct FeatureSpace<T> {
    pub vocabulary: Vocabulary,
    pub idf: Vec<T>,
}

impl<T: Scalar> FeatureSpace<T> {
    /// Fits the vocabulary over `documents`, assigning indices in first
    /// occurrence order, with `idf = ln((1 + n) / (1 + df)) + 1`.
    pub fn fit<S: AsRef<str>>(documents: &[S]) -> Result<Self, TextModelError> {
        if documents.is_empty() {
            return Err(TextModelError::EmptyTrainingSet);
        }
        let mut tokens = Vec::new();
        let mut index: HashMap<String, u32> = HashMap::new();
        let mut document_frequency: Vec<u64> = Vec::new();
        let mut last_seen: Vec<usize> = Vec::new();
        for (doc_id, doc) in documents.iter().enumerate() {
            for token in tokenize(doc.as_ref()) {
                let next = index.len() as u32;
                let i = *index.entry(token.clone()).or_insert(next) as usize;
                if i == tokens.len() {
                    tokens.push(token);
                    document_frequency.push(0);
                    last_seen.push(usize::MAX);
                }
                if last_seen[i] != doc_id {
                    last_seen[i] = doc_id;
                    document_frequency[i] += 1;
                }
            }
        }
        if tokens.is_empty() {
            return Err(TextModelError::NoTokens);
        }
        let n = documents.len() as u64;
        let idf = document_frequency
            .iter()
            .map(|&df| {
                let ratio = T::of_usize(n as usize + 1) / T::of_usize(df as usize + 1);
                ratio.ln() + T::one()
            })
            .collect();
        Ok(Self {
            vocabulary: Vocabulary {
                tokens,
                index,
                document_frequency,
                n_documents: n,
            },
            idf,
        })
    }

    pub fn dimension(&self) -> usize {
        self.vocabulary.len()
    }

    /// Term counts times idf, scaled to unit Euclidean norm. Unknown tokens
    /// are ignored; a document with no known token maps to the zero vector.
    pub fn transform(&self, text: &str) -> SparseVector<T> {
        let mut counts: HashMap<u32, usize> = HashMap::new();
        for token in tokenize(text) {
            if let Some(&i) = self.vocabulary.index.get(&token) {
                *counts.entry(i).or_default() += 1;
            }
        }
        let pairs = counts
            .into_iter()
            .map(|(i, c)| (i, T::of_usize(c) * self.idf[i as usize]))
            .collect();
        let mut vector = SparseVector::from_pairs(pairs);
        let norm = vector.norm();
        if norm > T::zero() {
            for v in &mut vector.values {
                *v = *v / norm;
            }
        }
        vector
    }
}
