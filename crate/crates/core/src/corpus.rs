//! User-labelled short-text corpora: loading, normalization, balancing and
//! fold construction.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;
use std::sync::LazyLock;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const USER_PLACEHOLDER: &str = "USER";
pub const URL_PLACEHOLDER: &str = "URL";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Gender {
    F,
    M,
}

impl Gender {
    /// SVM target: F is the positive class.
    pub fn sign(self) -> f64 {
        match self {
            Gender::F => 1.0,
            Gender::M => -1.0,
        }
    }

    pub fn flipped(self) -> Gender {
        match self {
            Gender::F => Gender::M,
            Gender::M => Gender::F,
        }
    }
}

impl fmt::Display for Gender {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Gender::F => "F",
            Gender::M => "M",
        })
    }
}

impl FromStr for Gender {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "F" => Ok(Gender::F),
            "M" => Ok(Gender::M),
            other => Err(Error::validation(format!("unknown gender value {other:?}"))),
        }
    }
}

/// Language code, e.g. `nl`. Supplied out-of-band, never read from records.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Language(String);

impl Language {
    pub fn new(code: impl Into<String>) -> Self {
        Language(code.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Language {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserRecord {
    pub user_id: String,
    pub gender: Gender,
    pub tweets: Vec<String>,
    pub language: Language,
}

impl UserRecord {
    /// The user's tweets joined into a single document, one tweet per line.
    pub fn document(&self) -> String {
        self.tweets.join("\n")
    }

    /// Identity of a user across corpora: `(language, user_id)`.
    pub fn provenance(&self) -> (Language, String) {
        (self.language.clone(), self.user_id.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    pub language: Language,
    pub users: Vec<UserRecord>,
}

#[derive(Deserialize)]
struct RawRecord {
    user_id: String,
    gender: String,
    tweets: Vec<String>,
}

impl Corpus {
    pub fn new(language: Language, users: Vec<UserRecord>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(users.len());
        for u in &users {
            if u.user_id.is_empty() {
                return Err(Error::validation("empty user_id"));
            }
            if u.tweets.is_empty() {
                return Err(Error::validation(format!("user {} has no tweets", u.user_id)));
            }
            if !seen.insert(u.user_id.as_str()) {
                return Err(Error::validation(format!("duplicate user_id {}", u.user_id)));
            }
        }
        Ok(Corpus { language, users })
    }

    pub fn len(&self) -> usize {
        self.users.len()
    }

    pub fn is_empty(&self) -> bool {
        self.users.is_empty()
    }

    pub fn count(&self, g: Gender) -> usize {
        self.users.iter().filter(|u| u.gender == g).count()
    }

    /// Parses JSON-lines text. Blank lines are skipped; line numbers are 1-based.
    pub fn parse_jsonl(text: &str, language: Language) -> Result<Self> {
        let mut users = Vec::new();
        let mut seen = HashSet::new();
        for (i, line) in text.lines().enumerate() {
            let lineno = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            let raw: RawRecord = serde_json::from_str(line).map_err(|e| Error::Parse {
                line: lineno,
                message: e.to_string(),
            })?;
            let gender: Gender = raw.gender.parse().map_err(|_| {
                Error::validation(format!("line {lineno}: unknown gender value {:?}", raw.gender))
            })?;
            if raw.user_id.is_empty() {
                return Err(Error::validation(format!("line {lineno}: empty user_id")));
            }
            if raw.tweets.is_empty() {
                return Err(Error::validation(format!("line {lineno}: user {} has no tweets", raw.user_id)));
            }
            if !seen.insert(raw.user_id.clone()) {
                return Err(Error::validation(format!(
                    "line {lineno}: duplicate user_id {}",
                    raw.user_id
                )));
            }
            users.push(UserRecord {
                user_id: raw.user_id,
                gender,
                tweets: raw.tweets.iter().map(|t| normalize_text(t)).collect(),
                language: language.clone(),
            });
        }
        Ok(Corpus { language, users })
    }

    pub fn to_jsonl(&self) -> String {
        #[derive(Serialize)]
        struct Out<'a> {
            user_id: &'a str,
            gender: Gender,
            tweets: &'a [String],
        }
        let mut s = String::new();
        for u in &self.users {
            let rec = Out {
                user_id: &u.user_id,
                gender: u.gender,
                tweets: &u.tweets,
            };
            s.push_str(&serde_json::to_string(&rec).expect("record serializes"));
            s.push('\n');
        }
        s
    }
}

pub fn load_corpus(path: impl AsRef<Path>, language: Language) -> Result<Corpus> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Corpus::parse_jsonl(&text, language)
}

static URL_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^(?:https?://\S+|www\.\S+)$").unwrap());
static MENTION_RE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^@\w+").unwrap());
static TOKEN_RE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\S+").unwrap());

/// Maps @-mentions to `USER` and URLs to `URL`; everything else, including
/// whitespace, is left untouched.
pub fn normalize_text(raw: &str) -> String {
    let mut out = String::with_capacity(raw.len());
    let mut last = 0;
    for m in TOKEN_RE.find_iter(raw) {
        out.push_str(&raw[last..m.start()]);
        let tok = m.as_str();
        if URL_RE.is_match(tok) {
            out.push_str(URL_PLACEHOLDER);
        } else if let Some(mention) = MENTION_RE.find(tok) {
            out.push_str(USER_PLACEHOLDER);
            out.push_str(&tok[mention.end()..]);
        } else {
            out.push_str(tok);
        }
        last = m.end();
    }
    out.push_str(&raw[last..]);
    out
}

/// Downsamples the majority gender to the size of the minority one.
/// Survivors keep their original relative order.
pub fn balance_downsample(c: &Corpus, seed: u64) -> Result<Corpus> {
    let nf = c.count(Gender::F);
    let nm = c.count(Gender::M);
    if nf == 0 || nm == 0 {
        return Err(Error::validation(format!(
            "cannot balance corpus {}: {nf} F / {nm} M users",
            c.language
        )));
    }
    if nf == nm {
        return Ok(c.clone());
    }
    let (majority, keep) = if nf > nm { (Gender::F, nm) } else { (Gender::M, nf) };
    let majority_idx: Vec<usize> = (0..c.len()).filter(|&i| c.users[i].gender == majority).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keep_mask = vec![true; c.len()];
    for &i in &majority_idx {
        keep_mask[i] = false;
    }
    for &i in majority_idx.choose_multiple(&mut rng, keep) {
        keep_mask[i] = true;
    }
    let users = c
        .users
        .iter()
        .zip(keep_mask)
        .filter(|(_, k)| *k)
        .map(|(u, _)| u.clone())
        .collect();
    Ok(Corpus {
        language: c.language.clone(),
        users,
    })
}

/// Keeps the first `k` tweets of every user.
pub fn cap_tweets(c: &Corpus, k: usize) -> Result<Corpus> {
    if k < 1 {
        return Err(Error::validation("tweets per user must be at least 1"));
    }
    let users = c
        .users
        .iter()
        .map(|u| UserRecord {
            tweets: u.tweets.iter().take(k).cloned().collect(),
            ..u.clone()
        })
        .collect();
    Ok(Corpus {
        language: c.language.clone(),
        users,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fold {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Stratified, seeded k-fold split over user indices.
///
/// Each gender is shuffled and dealt round-robin into the folds; the second
/// gender continues dealing where the first stopped so that fold sizes stay
/// within one of each other as well.
pub fn stratified_kfold(c: &Corpus, k: usize, seed: u64) -> Result<Vec<Fold>> {
    if k < 2 {
        return Err(Error::validation("k-fold requires k >= 2"));
    }
    for g in [Gender::F, Gender::M] {
        let n = c.count(g);
        if n < k {
            return Err(Error::validation(format!(
                "{k}-fold split needs at least {k} users of each gender, found {n} {g}"
            )));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignment = vec![0usize; c.len()];
    let mut next = 0usize;
    for g in [Gender::F, Gender::M] {
        let mut idx: Vec<usize> = (0..c.len()).filter(|&i| c.users[i].gender == g).collect();
        idx.shuffle(&mut rng);
        for i in idx {
            assignment[i] = next % k;
            next += 1;
        }
    }
    Ok((0..k)
        .map(|f| {
            let (test, train): (Vec<usize>, Vec<usize>) =
                (0..c.len()).partition(|&i| assignment[i] == f);
            Fold { train, test }
        })
        .collect())
}
