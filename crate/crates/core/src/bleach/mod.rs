//! Bleaching: per-token rewrites of raw text into abstract representations.
//!
//! Every channel maps one whitespace token to exactly one output token, so
//! channel sequences stay aligned with the input. Tweets of one user are
//! separated by [`TWEET_BOUNDARY`] in every channel.

mod chars;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{UserRecord, URL_PLACEHOLDER, USER_PLACEHOLDER};
use crate::error::{Error, Result};

pub use chars::{emoji_len, emoticon_len, is_alnum};

/// Reserved token emitted between tweets.
pub const TWEET_BOUNDARY: &str = "⟂";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Channel {
    Frequency,
    Length,
    PunctC,
    PunctA,
    Shape,
    Vowels,
}

impl Channel {
    pub const ALL: [Channel; 6] = [
        Channel::Frequency,
        Channel::Length,
        Channel::PunctC,
        Channel::PunctA,
        Channel::Shape,
        Channel::Vowels,
    ];

    /// The AllAbs combination.
    pub fn all() -> BTreeSet<Channel> {
        Channel::ALL.into_iter().collect()
    }

    pub fn name(self) -> &'static str {
        match self {
            Channel::Frequency => "freq",
            Channel::Length => "len",
            Channel::PunctC => "punctc",
            Channel::PunctA => "puncta",
            Channel::Shape => "shape",
            Channel::Vowels => "vowels",
        }
    }

    /// Parses a comma-separated channel list; `all` selects every channel.
    pub fn parse_set(s: &str) -> Result<BTreeSet<Channel>> {
        let mut set = BTreeSet::new();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            if part == "all" {
                set.extend(Channel::ALL);
            } else {
                set.insert(part.parse()?);
            }
        }
        if set.is_empty() {
            return Err(Error::config("no channels selected"));
        }
        Ok(set)
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Channel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Channel::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::config(format!("unknown channel {s:?}")))
    }
}

/// Token counts over the training users only.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrequencyTable {
    counts: HashMap<String, u64>,
}

impl FrequencyTable {
    pub fn from_users<'a>(users: impl IntoIterator<Item = &'a UserRecord>) -> Self {
        let mut counts: HashMap<String, u64> = HashMap::new();
        for u in users {
            for t in &u.tweets {
                for tok in tokenize(t) {
                    *counts.entry(tok.to_string()).or_default() += 1;
                }
            }
        }
        FrequencyTable { counts }
    }

    /// Builds a table from explicit counts; zero counts are dropped.
    pub fn from_counts(counts: impl IntoIterator<Item = (String, u64)>) -> Self {
        FrequencyTable {
            counts: counts.into_iter().filter(|(_, c)| *c > 0).collect(),
        }
    }

    pub fn count(&self, token: &str) -> u64 {
        self.counts.get(token).copied().unwrap_or(0)
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    /// Entries sorted by token.
    pub fn sorted_entries(&self) -> Vec<(&str, u64)> {
        let mut v: Vec<(&str, u64)> = self.counts.iter().map(|(k, &c)| (k.as_str(), c)).collect();
        v.sort_unstable();
        v
    }
}

/// Per-channel bleached token sequences for one document.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BleachedDoc {
    pub channels: BTreeMap<Channel, Vec<String>>,
}

impl BleachedDoc {
    pub fn get(&self, c: Channel) -> Option<&[String]> {
        self.channels.get(&c).map(Vec::as_slice)
    }
}

/// Splits on runs of Unicode whitespace. Never yields empty tokens.
pub fn tokenize(text: &str) -> Vec<&str> {
    text.split_whitespace().collect()
}

/// Order-of-magnitude bin: "0" for unseen, else the number of decimal digits.
pub fn freq_bin(count: u64) -> String {
    if count == 0 {
        "0".to_string()
    } else {
        (count.ilog10() + 1).to_string()
    }
}

pub fn bleach_frequency(tokens: &[&str], table: &FrequencyTable) -> Vec<String> {
    tokens.iter().map(|t| freq_bin(table.count(t))).collect()
}

/// "0" followed by the character count.
pub fn bleach_length(tokens: &[&str]) -> Vec<String> {
    tokens.iter().map(|t| format!("0{}", t.chars().count())).collect()
}

fn is_placeholder(token: &str) -> bool {
    token == USER_PLACEHOLDER || token == URL_PLACEHOLDER
}

pub fn bleach_punct_c(token: &str) -> String {
    if is_placeholder(token) {
        return token.to_string();
    }
    let mut out = String::new();
    let mut in_word = false;
    for c in token.chars() {
        if chars::is_alnum(c) {
            if !in_word {
                out.push('W');
            }
            in_word = true;
        } else {
            out.push(c);
            in_word = false;
        }
    }
    out
}

/// PunctC with punctuation classes: emoji `J`, emoticon `E`, other `P`.
pub fn bleach_punct_a(token: &str) -> String {
    if is_placeholder(token) {
        return token.to_string();
    }
    let cs: Vec<char> = token.chars().collect();
    let mut out = String::new();
    let mut i = 0;
    while i < cs.len() {
        let n = chars::emoji_len(&cs, i);
        if n > 0 {
            out.push('J');
            i += n;
            continue;
        }
        let n = chars::emoticon_len(&cs, i);
        if n > 0 {
            out.push('E');
            i += n;
            continue;
        }
        if chars::is_alnum(cs[i]) {
            out.push('W');
            while i < cs.len() && chars::is_alnum(cs[i]) && chars::emoji_len(&cs, i) == 0 {
                i += 1;
            }
            continue;
        }
        out.push('P');
        i += 1;
    }
    out
}

/// Character shape with runs condensed to at most two.
pub fn bleach_shape(token: &str) -> String {
    if is_placeholder(token) {
        return token.to_string();
    }
    let mut out = String::new();
    let mut prev = '\0';
    let mut run = 0;
    for c in token.chars() {
        let s = if c.is_uppercase() {
            'U'
        } else if c.is_lowercase() {
            'L'
        } else if chars::is_decimal_digit(c) {
            'D'
        } else {
            'X'
        };
        if s == prev {
            run += 1;
        } else {
            prev = s;
            run = 1;
        }
        if run <= 2 {
            out.push(s);
        }
    }
    out
}

pub fn bleach_vowels(token: &str) -> String {
    if is_placeholder(token) {
        return token.to_string();
    }
    token
        .chars()
        .map(|c| match c {
            'a' | 'e' | 'i' | 'o' | 'u' | 'A' | 'E' | 'I' | 'O' | 'U' => 'V',
            c if chars::is_letter(c) => 'C',
            _ => 'O',
        })
        .collect()
}

/// Applies one channel to a token sequence.
pub fn bleach_tokens(channel: Channel, tokens: &[&str], table: Option<&FrequencyTable>) -> Result<Vec<String>> {
    Ok(match channel {
        Channel::Frequency => {
            let table = table.ok_or_else(|| Error::config("Frequency channel requires a frequency table"))?;
            bleach_frequency(tokens, table)
        }
        Channel::Length => bleach_length(tokens),
        Channel::PunctC => tokens.iter().map(|t| bleach_punct_c(t)).collect(),
        Channel::PunctA => tokens.iter().map(|t| bleach_punct_a(t)).collect(),
        Channel::Shape => tokens.iter().map(|t| bleach_shape(t)).collect(),
        Channel::Vowels => tokens.iter().map(|t| bleach_vowels(t)).collect(),
    })
}

pub fn bleach_document<S: AsRef<str>>(
    tweets: &[S],
    channels: &BTreeSet<Channel>,
    table: Option<&FrequencyTable>,
) -> Result<BleachedDoc> {
    if channels.contains(&Channel::Frequency) && table.is_none() {
        return Err(Error::config("Frequency channel requires a frequency table"));
    }
    let tokenized: Vec<Vec<&str>> = tweets.iter().map(|t| tokenize(t.as_ref())).collect();
    let mut doc = BleachedDoc::default();
    for &ch in channels {
        let mut seq = Vec::new();
        for (i, toks) in tokenized.iter().enumerate() {
            if i > 0 {
                seq.push(TWEET_BOUNDARY.to_string());
            }
            seq.extend(bleach_tokens(ch, toks, table)?);
        }
        doc.channels.insert(ch, seq);
    }
    Ok(doc)
}
