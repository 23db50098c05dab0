//! Seeded synthetic corpora for testing transfer without real data.
//!
//! Each pseudo-language has its own alphabet, word shape, emoji set,
//! exclamation mark and quote pair, so no surface string is shared between
//! two languages apart from the `USER`/`URL` placeholders and some
//! gender-neutral punctuation. Gender is planted two ways:
//!
//! * style: F users insert emoji runs more often and end more tweets with
//!   exclamation runs; M users quote words more often. These look different in every language but bleach
//!   to the same abstract patterns (`J`, `WPP`, `PWP`).
//! * lexicon: each language has gendered topic words that F or M users favour.

use std::collections::HashSet;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{normalize_text, Corpus, Gender, Language, UserRecord};
use crate::error::{Error, Result};

/// Surface properties of one pseudo-language.
#[derive(Debug, Clone, Copy)]
pub struct LanguageProfile {
    pub code: &'static str,
    pub consonants: &'static [char],
    pub vowels: &'static [char],
    /// Word template over `C` and `V`.
    pub pattern: &'static str,
    /// Emoji used by both genders, at gender-specific rates.
    pub emoji: &'static [&'static str],
    pub exclamation: char,
    pub quotes: (char, char),
}

pub const PROFILES: [LanguageProfile; 5] = [
    LanguageProfile {
        code: "xa",
        consonants: &['b', 'd', 'g', 'k'],
        vowels: &['a', 'o'],
        pattern: "CVC",
        emoji: &["🌸", "💖", "😍", "🌹", "💐", "🎀", "🍓", "🦄"],
        exclamation: '!',
        quotes: ('"', '"'),
    },
    LanguageProfile {
        code: "xb",
        consonants: &['l', 'm', 'n', 'r'],
        vowels: &['e', 'i'],
        pattern: "CVCV",
        emoji: &["🌺", "💕", "😘", "🌻", "💅", "👗", "🍰", "🐰"],
        exclamation: '¡',
        quotes: ('«', '»'),
    },
    LanguageProfile {
        code: "xc",
        consonants: &['f', 'h', 'j', 'w', 'z'],
        vowels: &['u'],
        pattern: "CVCVC",
        emoji: &["🦋", "💗", "😊", "🌈", "💄", "👠", "🍒", "🐱"],
        exclamation: '！',
        quotes: ('„', '“'),
    },
    LanguageProfile {
        code: "xd",
        consonants: &['β', 'γ', 'δ', 'λ', 'μ'],
        vowels: &['α', 'ο'],
        pattern: "CVC",
        emoji: &["🌷", "💞", "🥰", "🌙", "💍", "👛", "🍑", "🐝"],
        exclamation: '‽',
        quotes: ('‹', '›'),
    },
    LanguageProfile {
        code: "xe",
        consonants: &['б', 'в', 'г', 'д', 'ж'],
        vowels: &['а', 'е', 'и'],
        pattern: "CVCV",
        emoji: &["🌼", "💓", "😻", "⭐", "💋", "👒", "🍭", "🐞"],
        exclamation: '¿',
        quotes: ('「', '」'),
    },
];

/// Standalone punctuation shared by all languages and both genders. It
/// shapes like emoji (`X`, `XX`) but bleaches to `P` rather than `J`.
const NEUTRAL_PUNCT: [&str; 9] = ["-", "--", "...", ":", "&", "//", "+", "*", "~~~"];

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub users_per_language: usize,
    pub tweets_per_user: usize,
    pub seed: u64,
    /// Probability per word token that an emoji run follows it.
    pub female_emoji_rate: f64,
    pub male_emoji_rate: f64,
    /// Probability per tweet of a trailing exclamation run.
    pub female_exclaim_rate: f64,
    pub male_exclaim_rate: f64,
    /// Probability per tweet of one quoted word.
    pub female_quote_rate: f64,
    pub male_quote_rate: f64,
    /// Probability per word token of drawing from the user's gendered topic list.
    pub topic_rate: f64,
    pub mention_rate: f64,
    pub url_rate: f64,
    /// Probability per word token of a standalone punctuation token, same
    /// for both genders.
    pub punct_rate: f64,
    pub lexicon_size: usize,
    pub topic_words: usize,
    pub min_tokens: usize,
    pub max_tokens: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            users_per_language: 200,
            tweets_per_user: 50,
            seed: 42,
            female_emoji_rate: 0.3,
            male_emoji_rate: 0.05,
            female_exclaim_rate: 0.4,
            male_exclaim_rate: 0.1,
            female_quote_rate: 0.1,
            male_quote_rate: 0.4,
            topic_rate: 0.15,
            mention_rate: 0.3,
            url_rate: 0.1,
            punct_rate: 0.2,
            lexicon_size: 300,
            topic_words: 20,
            min_tokens: 6,
            max_tokens: 14,
        }
    }
}

impl SynthConfig {
    /// Same generator with no gender signal at all.
    pub fn without_signal(self) -> Self {
        SynthConfig {
            male_emoji_rate: self.female_emoji_rate,
            male_exclaim_rate: self.female_exclaim_rate,
            male_quote_rate: self.female_quote_rate,
            topic_rate: 0.0,
            ..self
        }
    }

    fn validate(&self) -> Result<()> {
        let rates = [
            self.female_emoji_rate,
            self.male_emoji_rate,
            self.female_exclaim_rate,
            self.male_exclaim_rate,
            self.female_quote_rate,
            self.male_quote_rate,
            self.topic_rate,
            self.mention_rate,
            self.url_rate,
            self.punct_rate,
        ];
        if rates.iter().any(|r| !(0.0..=1.0).contains(r)) {
            return Err(Error::config("synthetic rates must lie in [0, 1]"));
        }
        if self.users_per_language < 2 || self.tweets_per_user < 1 {
            return Err(Error::config("need at least 2 users and 1 tweet per user"));
        }
        if self.min_tokens < 1 || self.min_tokens > self.max_tokens {
            return Err(Error::config("invalid tweet length range"));
        }
        if self.lexicon_size < 2 * self.topic_words + 1 {
            return Err(Error::config("lexicon too small for the topic lists"));
        }
        Ok(())
    }
}

fn make_word(rng: &mut impl Rng, p: &LanguageProfile) -> String {
    p.pattern
        .chars()
        .map(|slot| {
            let pool = if slot == 'C' { p.consonants } else { p.vowels };
            *pool.choose(rng).expect("non-empty alphabet")
        })
        .collect()
}

fn make_lexicon(rng: &mut impl Rng, p: &LanguageProfile, size: usize) -> Result<Vec<String>> {
    let mut seen = HashSet::new();
    let mut words = Vec::with_capacity(size);
    // grow words by repeating the pattern once the short forms run out
    let mut attempts = 0;
    while words.len() < size {
        let mut w = make_word(rng, p);
        for _ in 0..attempts / 2000 {
            w.push_str(&make_word(rng, p));
        }
        attempts += 1;
        if seen.insert(w.clone()) {
            words.push(w);
        }
        if attempts > 100 * size + 10_000 {
            return Err(Error::config(format!("cannot build {size} distinct words for {}", p.code)));
        }
    }
    Ok(words)
}

fn capitalize(w: &str) -> String {
    let mut cs = w.chars();
    match cs.next() {
        Some(c) => c.to_uppercase().chain(cs).collect(),
        None => String::new(),
    }
}

struct Style {
    emoji: f64,
    exclaim: f64,
    quote: f64,
}

fn tweet(
    rng: &mut impl Rng,
    p: &LanguageProfile,
    lexicon: &[String],
    topic: &[String],
    emoji: &[&str],
    style: &Style,
    cfg: &SynthConfig,
) -> String {
    let n = rng.random_range(cfg.min_tokens..=cfg.max_tokens);
    let mut words: Vec<String> = (0..n)
        .map(|_| {
            if rng.random_bool(cfg.topic_rate) {
                topic.choose(rng).expect("topic words").clone()
            } else {
                // skewed towards the head of the lexicon
                let u: f64 = rng.random();
                lexicon[((u * u) * lexicon.len() as f64) as usize].clone()
            }
        })
        .collect();
    if rng.random_bool(0.5) {
        words[0] = capitalize(&words[0]);
    }
    if rng.random_bool(style.quote) {
        let i = rng.random_range(0..words.len());
        words[i] = format!("{}{}{}", p.quotes.0, words[i], p.quotes.1);
    }
    if rng.random_bool(style.exclaim) {
        let run = rng.random_range(2..=3);
        let last = words.len() - 1;
        words[last].extend(std::iter::repeat_n(p.exclamation, run));
    }
    let mut tokens = Vec::with_capacity(2 * n + 2);
    if rng.random_bool(cfg.mention_rate) {
        tokens.push(format!("@{}", make_word(rng, &PROFILES[0])));
    }
    for w in words {
        tokens.push(w);
        if rng.random_bool(cfg.punct_rate) {
            tokens.push(NEUTRAL_PUNCT.choose(rng).expect("punctuation").to_string());
        }
        if rng.random_bool(style.emoji) {
            let run = rng.random_range(1..=3);
            tokens.push((0..run).map(|_| *emoji.choose(rng).expect("emoji")).collect());
        }
    }
    if rng.random_bool(cfg.url_rate) {
        tokens.push(format!("http://t.co/{}", rng.random_range(10_000..99_999)));
    }
    tokens.join(" ")
}

/// Generates one balanced corpus in the given pseudo-language.
pub fn generate_language(profile: &LanguageProfile, cfg: &SynthConfig) -> Result<Corpus> {
    cfg.validate()?;
    let lang_salt = profile.code.bytes().fold(0u64, |h, b| h.wrapping_mul(131).wrapping_add(b as u64));
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ lang_salt.rotate_left(17));
    let lexicon = make_lexicon(&mut rng, profile, cfg.lexicon_size)?;
    // topic words come from the rarely drawn tail of the lexicon
    let tail = &lexicon[lexicon.len() - 2 * cfg.topic_words..];
    let (f_topic, m_topic) = tail.split_at(cfg.topic_words);

    let mut users = Vec::with_capacity(cfg.users_per_language);
    for i in 0..cfg.users_per_language {
        let gender = if i % 2 == 0 { Gender::F } else { Gender::M };
        // individual users vary around their group's rates
        let jitter = |r: f64, rng: &mut ChaCha8Rng| (r * rng.random_range(0.5..1.5)).min(1.0);
        let (style, topic) = match gender {
            Gender::F => (
                Style {
                    emoji: jitter(cfg.female_emoji_rate, &mut rng),
                    exclaim: jitter(cfg.female_exclaim_rate, &mut rng),
                    quote: jitter(cfg.female_quote_rate, &mut rng),
                },
                f_topic,
            ),
            Gender::M => (
                Style {
                    emoji: jitter(cfg.male_emoji_rate, &mut rng),
                    exclaim: jitter(cfg.male_exclaim_rate, &mut rng),
                    quote: jitter(cfg.male_quote_rate, &mut rng),
                },
                m_topic,
            ),
        };
        let tweets = (0..cfg.tweets_per_user)
            .map(|_| normalize_text(&tweet(&mut rng, profile, &lexicon, topic, profile.emoji, &style, cfg)))
            .collect();
        users.push(UserRecord {
            user_id: format!("{}{i:04}", profile.code),
            gender,
            tweets,
            language: Language::new(profile.code),
        });
    }
    Corpus::new(Language::new(profile.code), users)
}

/// The first `n` pseudo-languages.
pub fn generate(n_languages: usize, cfg: &SynthConfig) -> Result<Vec<Corpus>> {
    if n_languages == 0 || n_languages > PROFILES.len() {
        return Err(Error::config(format!(
            "between 1 and {} synthetic languages are available",
            PROFILES.len()
        )));
    }
    PROFILES[..n_languages].iter().map(|p| generate_language(p, cfg)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bleach::{bleach_punct_a, tokenize};

    fn small() -> SynthConfig {
        SynthConfig {
            users_per_language: 10,
            tweets_per_user: 5,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn emoji_bleach_to_j() {
        for p in &PROFILES {
            for e in p.emoji {
                assert_eq!(bleach_punct_a(e), "J", "{e} in {}", p.code);
            }
            assert_eq!(bleach_punct_a(&format!("{}{}", 'x', p.exclamation)), "WP");
            assert_eq!(bleach_punct_a(&format!("{}x{}", p.quotes.0, p.quotes.1)), "PWP");
        }
    }

    #[test]
    fn deterministic_and_balanced() {
        let a = generate(3, &small()).unwrap();
        let b = generate(3, &small()).unwrap();
        assert_eq!(a, b);
        for c in &a {
            assert_eq!(c.count(Gender::F), 5);
            assert_eq!(c.count(Gender::M), 5);
            assert!(c.users.iter().all(|u| u.tweets.len() == 5));
        }
        let other = generate(1, &SynthConfig { seed: 7, ..small() }).unwrap();
        assert_ne!(other[0], a[0]);
    }

    #[test]
    fn lexicons_are_disjoint() {
        let corpora = generate(5, &small()).unwrap();
        let vocab = |c: &Corpus| -> HashSet<String> {
            c.users
                .iter()
                .flat_map(|u| u.tweets.iter().flat_map(|t| tokenize(t).into_iter().map(str::to_lowercase)))
                .filter(|t| t != "user" && t != "url" && !NEUTRAL_PUNCT.contains(&t.as_str()))
                .collect()
        };
        let vs: Vec<_> = corpora.iter().map(vocab).collect();
        for i in 0..vs.len() {
            for j in i + 1..vs.len() {
                assert!(vs[i].is_disjoint(&vs[j]), "{i} vs {j}: {:?}", vs[i].intersection(&vs[j]).next());
            }
        }
    }

    #[test]
    fn rejects_bad_config() {
        assert!(generate(0, &small()).is_err());
        assert!(generate(6, &small()).is_err());
        let bad = SynthConfig { female_emoji_rate: 1.5, ..small() };
        assert!(generate(1, &bad).is_err());
    }
}
