//! Sparse n-gram features over raw (lexical) or bleached (abstract) text.
//!
//! Feature strings are namespaced as `namespace|gram`: `word|` and `char|`
//! for lexical grams, the channel name (`shape|`, `puncta|`, ...) for
//! bleached grams. Token grams are joined by single spaces.

use std::collections::{BTreeSet, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::bleach::{bleach_document, tokenize, Channel, FrequencyTable, TWEET_BOUNDARY};
use crate::corpus::{Language, UserRecord};
use crate::error::{Error, Result};
use crate::exec::Execution;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Lexical,
    Abstract,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Weighting {
    Binary,
    TfIdf,
}

/// Inclusive n-gram order range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NgramRange {
    pub lo: usize,
    pub hi: usize,
}

impl NgramRange {
    pub fn new(lo: usize, hi: usize) -> Result<Self> {
        let r = NgramRange { lo, hi };
        r.validate()?;
        Ok(r)
    }

    fn validate(self) -> Result<()> {
        if self.lo < 1 || self.lo > self.hi {
            return Err(Error::config(format!("invalid n-gram range {}:{}", self.lo, self.hi)));
        }
        Ok(())
    }

    /// Parses `lo:hi` or a single `n` (meaning `n:n`).
    pub fn parse(s: &str) -> Result<Self> {
        let bad = || Error::config(format!("invalid n-gram range {s:?}, expected lo:hi"));
        let (lo, hi) = match s.split_once(':') {
            Some((a, b)) => (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?),
            None => {
                let n = s.trim().parse().map_err(|_| bad())?;
                (n, n)
            }
        };
        NgramRange::new(lo, hi)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub mode: Mode,
    pub token_ngrams: NgramRange,
    pub char_ngrams: Option<NgramRange>,
    /// Bleaching channels; ignored in lexical mode.
    pub channels: BTreeSet<Channel>,
    pub weighting: Weighting,
    /// Minimum document frequency for token grams.
    pub min_df: usize,
    /// Minimum document frequency for character grams.
    pub char_min_df: usize,
}

impl FeatureSpec {
    /// Word 1-2 grams plus character 3-6 grams.
    pub fn lexical() -> Self {
        FeatureSpec {
            mode: Mode::Lexical,
            token_ngrams: NgramRange { lo: 1, hi: 2 },
            char_ngrams: Some(NgramRange { lo: 3, hi: 6 }),
            channels: BTreeSet::new(),
            weighting: Weighting::TfIdf,
            min_df: 1,
            char_min_df: 2,
        }
    }

    /// Token 1-5 grams over all six bleached channels.
    pub fn abstract_all() -> Self {
        FeatureSpec {
            mode: Mode::Abstract,
            token_ngrams: NgramRange { lo: 1, hi: 5 },
            char_ngrams: None,
            channels: Channel::all(),
            weighting: Weighting::TfIdf,
            min_df: 1,
            char_min_df: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.token_ngrams.validate()?;
        if let Some(r) = self.char_ngrams {
            r.validate()?;
        }
        if self.min_df < 1 || self.char_min_df < 1 {
            return Err(Error::config("min_df must be at least 1"));
        }
        if self.mode == Mode::Abstract && self.channels.is_empty() {
            return Err(Error::config("abstract mode needs at least one channel"));
        }
        Ok(())
    }

    pub fn needs_frequency_table(&self) -> bool {
        self.mode == Mode::Abstract && self.channels.contains(&Channel::Frequency)
    }
}

/// Multiset of feature strings.
pub type GramBag = HashMap<String, u32>;

fn push_token_grams(bag: &mut GramBag, ns: &str, tokens: &[&str], range: NgramRange) {
    let mut key = String::new();
    for n in range.lo..=range.hi {
        for w in tokens.windows(n) {
            key.clear();
            key.push_str(ns);
            key.push('|');
            for (i, t) in w.iter().enumerate() {
                if i > 0 {
                    key.push(' ');
                }
                key.push_str(t);
            }
            *bag.entry(key.clone()).or_default() += 1;
        }
    }
}

fn push_char_grams(bag: &mut GramBag, text: &str, range: NgramRange) {
    let chars: Vec<char> = text.chars().collect();
    let mut key = String::new();
    for n in range.lo..=range.hi {
        for w in chars.windows(n) {
            key.clear();
            key.push_str("char|");
            key.extend(w);
            *bag.entry(key.clone()).or_default() += 1;
        }
    }
}

/// Lexical grams: lowercased word grams (tweets separated by the boundary
/// token) and character grams over the newline-joined document.
pub fn grams_from_raw<S: AsRef<str>>(tweets: &[S], spec: &FeatureSpec) -> GramBag {
    let lowered: Vec<String> = tweets.iter().map(|t| t.as_ref().to_lowercase()).collect();
    let mut tokens: Vec<&str> = Vec::new();
    for (i, t) in lowered.iter().enumerate() {
        if i > 0 {
            tokens.push(TWEET_BOUNDARY);
        }
        tokens.extend(tokenize(t));
    }
    let mut bag = GramBag::new();
    push_token_grams(&mut bag, "word", &tokens, spec.token_ngrams);
    if let Some(r) = spec.char_ngrams {
        push_char_grams(&mut bag, &lowered.join("\n"), r);
    }
    bag
}

/// Abstract grams: token grams per requested channel, prefixed by the channel name.
pub fn grams_from_bleached(doc: &crate::bleach::BleachedDoc, spec: &FeatureSpec) -> Result<GramBag> {
    let mut bag = GramBag::new();
    for &ch in &spec.channels {
        let seq = doc
            .get(ch)
            .ok_or_else(|| Error::config(format!("bleached document lacks channel {ch}")))?;
        let toks: Vec<&str> = seq.iter().map(String::as_str).collect();
        push_token_grams(&mut bag, ch.name(), &toks, spec.token_ngrams);
    }
    Ok(bag)
}

/// Grams of one user's tweets under `spec`.
pub fn extract_grams<S: AsRef<str>>(
    tweets: &[S],
    spec: &FeatureSpec,
    table: Option<&FrequencyTable>,
) -> Result<GramBag> {
    match spec.mode {
        Mode::Lexical => Ok(grams_from_raw(tweets, spec)),
        Mode::Abstract => {
            let doc = bleach_document(tweets, &spec.channels, table)?;
            grams_from_bleached(&doc, spec)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "VocabularyRepr", into = "VocabularyRepr")]
pub struct Vocabulary {
    features: Vec<String>,
    doc_freq: Vec<u32>,
    n_docs: usize,
    index: HashMap<String, u32>,
}

#[derive(Serialize, Deserialize)]
struct VocabularyRepr {
    features: Vec<String>,
    doc_freq: Vec<u32>,
    n_docs: usize,
}

impl From<VocabularyRepr> for Vocabulary {
    fn from(r: VocabularyRepr) -> Self {
        Vocabulary::from_parts(r.features, r.doc_freq, r.n_docs)
    }
}

impl From<Vocabulary> for VocabularyRepr {
    fn from(v: Vocabulary) -> Self {
        VocabularyRepr {
            features: v.features,
            doc_freq: v.doc_freq,
            n_docs: v.n_docs,
        }
    }
}

impl Vocabulary {
    pub fn build(docs: &[GramBag], min_df: usize) -> Result<Self> {
        Self::build_with(docs, |_| min_df)
    }

    /// Builds with a per-feature document-frequency threshold.
    pub fn build_with(docs: &[GramBag], threshold: impl Fn(&str) -> usize) -> Result<Self> {
        if docs.is_empty() {
            return Err(Error::validation("cannot build a vocabulary from zero documents"));
        }
        let mut df: HashMap<&str, u32> = HashMap::new();
        for d in docs {
            for k in d.keys() {
                *df.entry(k.as_str()).or_default() += 1;
            }
        }
        let mut kept: Vec<(&str, u32)> = df
            .into_iter()
            .filter(|(k, c)| *c as usize >= threshold(k).max(1))
            .collect();
        kept.sort_unstable_by(|a, b| a.0.cmp(b.0));
        let (features, doc_freq): (Vec<String>, Vec<u32>) =
            kept.into_iter().map(|(k, c)| (k.to_string(), c)).unzip();
        Ok(Vocabulary::from_parts(features, doc_freq, docs.len()))
    }

    fn from_parts(features: Vec<String>, doc_freq: Vec<u32>, n_docs: usize) -> Self {
        let index = features
            .iter()
            .enumerate()
            .map(|(i, f)| (f.clone(), i as u32))
            .collect();
        Vocabulary {
            features,
            doc_freq,
            n_docs,
            index,
        }
    }

    /// Vocabulary over explicitly named features (document frequencies of 1).
    pub fn from_feature_names(features: Vec<String>) -> Self {
        let n = features.len();
        Vocabulary::from_parts(features, vec![1; n], 1)
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn n_docs(&self) -> usize {
        self.n_docs
    }

    pub fn get(&self, feature: &str) -> Option<usize> {
        self.index.get(feature).map(|&i| i as usize)
    }

    pub fn feature(&self, idx: usize) -> &str {
        &self.features[idx]
    }

    pub fn features(&self) -> &[String] {
        &self.features
    }

    pub fn doc_freq(&self, idx: usize) -> u32 {
        self.doc_freq[idx]
    }

    /// Smoothed inverse document frequency, `ln((1+N)/(1+df)) + 1`.
    pub fn idf(&self, idx: usize) -> f64 {
        ((1.0 + self.n_docs as f64) / (1.0 + self.doc_freq[idx] as f64)).ln() + 1.0
    }
}

/// Sorted `(index, weight)` pairs.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SparseVector {
    entries: Vec<(u32, f64)>,
}

impl SparseVector {
    /// Sorts by index and merges duplicates by summing. Rejects non-finite weights.
    pub fn from_pairs(mut pairs: Vec<(u32, f64)>) -> Result<Self> {
        if pairs.iter().any(|(_, w)| !w.is_finite()) {
            return Err(Error::validation("non-finite feature value"));
        }
        pairs.sort_unstable_by_key(|p| p.0);
        let mut entries: Vec<(u32, f64)> = Vec::with_capacity(pairs.len());
        for (i, w) in pairs {
            match entries.last_mut() {
                Some(last) if last.0 == i => last.1 += w,
                _ => entries.push((i, w)),
            }
        }
        Ok(SparseVector { entries })
    }

    /// Every coordinate of `dense`, zeros included.
    pub fn from_dense(dense: &[f64]) -> Result<Self> {
        Self::from_pairs(dense.iter().enumerate().map(|(i, &w)| (i as u32, w)).collect())
    }

    pub fn entries(&self) -> &[(u32, f64)] {
        &self.entries
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn max_index(&self) -> Option<usize> {
        self.entries.last().map(|e| e.0 as usize)
    }

    pub fn norm_sq(&self) -> f64 {
        self.entries.iter().map(|(_, w)| w * w).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    /// Dot product with a dense vector; indices past its end contribute nothing.
    pub fn dot(&self, dense: &[f64]) -> f64 {
        self.entries
            .iter()
            .filter_map(|&(i, w)| dense.get(i as usize).map(|d| d * w))
            .sum()
    }

    pub fn is_finite(&self) -> bool {
        self.entries.iter().all(|(_, w)| w.is_finite())
    }
}

/// Maps a gram bag into the vocabulary's space. Unknown grams are dropped.
pub fn vectorize(grams: &GramBag, vocab: &Vocabulary, weighting: Weighting) -> SparseVector {
    let mut entries: Vec<(u32, f64)> = grams
        .iter()
        .filter_map(|(g, &tf)| {
            let idx = vocab.get(g)?;
            let w = match weighting {
                Weighting::Binary => 1.0,
                Weighting::TfIdf => (1.0 + (tf as f64).ln()) * vocab.idf(idx),
            };
            Some((idx as u32, w))
        })
        .collect();
    entries.sort_unstable_by_key(|e| e.0);
    if weighting == Weighting::TfIdf {
        let norm = entries.iter().map(|(_, w)| w * w).sum::<f64>().sqrt();
        if norm > 0.0 {
            for e in &mut entries {
                e.1 /= norm;
            }
        }
    }
    SparseVector { entries }
}

/// A fitted featurization pipeline: spec, training frequency table and
/// vocabulary. Remembers which users it was fitted on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Featurizer {
    pub spec: FeatureSpec,
    pub freq_table: Option<FrequencyTable>,
    pub vocab: Vocabulary,
    #[serde(skip)]
    trained_on: HashSet<(Language, String)>,
}

impl Featurizer {
    /// Fits the frequency table (if needed) and vocabulary on `train` only.
    pub fn fit(spec: &FeatureSpec, train: &[&UserRecord], exec: Execution) -> Result<Self> {
        spec.validate()?;
        let freq_table = spec
            .needs_frequency_table()
            .then(|| FrequencyTable::from_users(train.iter().copied()));
        let bags = exec.try_map(train, |u| extract_grams(&u.tweets, spec, freq_table.as_ref()))?;
        let vocab = Vocabulary::build_with(&bags, |f| {
            if f.starts_with("char|") {
                spec.char_min_df
            } else {
                spec.min_df
            }
        })?;
        Ok(Featurizer {
            spec: spec.clone(),
            freq_table,
            vocab,
            trained_on: train.iter().map(|u| u.provenance()).collect(),
        })
    }

    pub fn from_parts(spec: FeatureSpec, freq_table: Option<FrequencyTable>, vocab: Vocabulary) -> Self {
        Featurizer {
            spec,
            freq_table,
            vocab,
            trained_on: HashSet::new(),
        }
    }

    pub fn transform_tweets<S: AsRef<str>>(&self, tweets: &[S]) -> Result<SparseVector> {
        let bag = extract_grams(tweets, &self.spec, self.freq_table.as_ref())?;
        Ok(vectorize(&bag, &self.vocab, self.spec.weighting))
    }

    pub fn transform(&self, user: &UserRecord) -> Result<SparseVector> {
        self.transform_tweets(&user.tweets)
    }

    pub fn transform_all(&self, users: &[&UserRecord], exec: Execution) -> Result<Vec<SparseVector>> {
        exec.try_map(users, |u| self.transform(u))
    }

    /// Whether `user` contributed to the frequency table or vocabulary.
    pub fn was_fitted_on(&self, user: &UserRecord) -> bool {
        self.trained_on.contains(&user.provenance())
    }

    /// Errors if any of `users` was part of the fitting data.
    pub fn assert_unseen(&self, users: &[&UserRecord]) -> Result<()> {
        if let Some(u) = users.iter().find(|u| self.was_fitted_on(u)) {
            return Err(Error::Hygiene(format!(
                "user {}/{} is in both the fitting and evaluation sets",
                u.language, u.user_id
            )));
        }
        Ok(())
    }
}
