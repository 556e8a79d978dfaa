//! Tokenization, stopword lists and a naive stemmer.
//!
//! Linguistic fidelity is a non-goal: the stemmer strips a handful of
//! common inflectional endings so that surface variants of the same term
//! collapse to one feature column. English and German lists are shipped;
//! both are pluggable via ids carried in the vocabulary.

use serde::{Deserialize, Serialize};

#[rustfmt::skip]
const STOPWORDS_EN: &[&str] = &[
    "a", "about", "after", "all", "also", "am", "an", "and", "any", "are",
    "as", "at", "be", "because", "been", "before", "but", "by", "can",
    "could", "did", "do", "does", "for", "from", "had", "has", "have", "he",
    "her", "here", "him", "his", "how", "i", "if", "in", "into", "is", "it",
    "its", "just", "me", "more", "most", "my", "no", "not", "now", "of",
    "on", "only", "or", "other", "our", "out", "over", "own", "s", "same",
    "she", "so", "some", "such", "t", "than", "that", "the", "their",
    "them", "then", "there", "these", "they", "this", "those", "through",
    "to", "too", "under", "until", "up", "very", "was", "we", "were",
    "what", "when", "where", "which", "while", "who", "why", "will",
    "with", "would", "you", "your",
];

#[rustfmt::skip]
const STOPWORDS_DE: &[&str] = &[
    "aber", "alle", "als", "also", "am", "an", "auch", "auf", "aus", "bei",
    "bin", "bis", "bist", "da", "damit", "dann", "das", "dass", "dein",
    "dem", "den", "der", "des", "die", "dir", "doch", "du", "durch", "ein",
    "eine", "einem", "einen", "einer", "eines", "er", "es", "euer", "falls",
    "fur", "für", "habe", "haben", "hat", "hier", "ich", "ihr", "im", "in",
    "ist", "ja", "kann", "kein", "mal", "man", "mein", "mich", "mir", "mit",
    "nach", "nein", "nicht", "noch", "nur", "ob", "oder", "ohne", "sehr",
    "sein", "sich", "sie", "sind", "so", "um", "und", "uns", "unter", "vom",
    "von", "vor", "war", "was", "wenn", "wer", "wie", "wir", "wird", "wo",
    "zu", "zum", "zur",
];

const SUFFIXES_EN: &[&str] = &["ments", "ment", "ings", "ing", "edly", "ed", "ies", "es", "ly", "er", "s"];
const SUFFIXES_DE: &[&str] = &["ungen", "ung", "enden", "ende", "en", "ern", "er", "em", "es", "e", "n", "st"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum StopwordList {
    English,
    German,
    #[default]
    Combined,
    None,
}

impl StopwordList {
    pub fn contains(&self, token: &str) -> bool {
        match self {
            StopwordList::English => STOPWORDS_EN.binary_search(&token).is_ok(),
            StopwordList::German => STOPWORDS_DE.binary_search(&token).is_ok(),
            StopwordList::Combined => {
                STOPWORDS_EN.binary_search(&token).is_ok()
                    || STOPWORDS_DE.binary_search(&token).is_ok()
            }
            StopwordList::None => false,
        }
    }

    pub fn id(&self) -> &'static str {
        match self {
            StopwordList::English => "en",
            StopwordList::German => "de",
            StopwordList::Combined => "en+de",
            StopwordList::None => "none",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum StemmerKind {
    #[default]
    NaiveEnglish,
    NaiveGerman,
    Identity,
}

impl StemmerKind {
    /// Strip the longest matching inflectional ending, keeping at least
    /// three characters of stem. Applied once, not recursively.
    pub fn stem<'a>(&self, token: &'a str) -> &'a str {
        let suffixes: &[&str] = match self {
            StemmerKind::NaiveEnglish => SUFFIXES_EN,
            StemmerKind::NaiveGerman => SUFFIXES_DE,
            StemmerKind::Identity => return token,
        };
        for suf in suffixes {
            if let Some(stripped) = token.strip_suffix(suf) {
                if stripped.chars().count() >= 3 {
                    return stripped;
                }
            }
        }
        token
    }

    pub fn id(&self) -> &'static str {
        match self {
            StemmerKind::NaiveEnglish => "naive-en",
            StemmerKind::NaiveGerman => "naive-de",
            StemmerKind::Identity => "identity",
        }
    }
}

/// Lowercase, split on non-alphanumerics, drop stopwords, stem.
pub fn tokenize(text: &str, stopwords: StopwordList, stemmer: StemmerKind) -> Vec<String> {
    text.to_lowercase()
        .split(|ch: char| !ch.is_alphanumeric())
        .filter(|tok| !tok.is_empty())
        .filter(|tok| !stopwords.contains(tok))
        .map(|tok| stemmer.stem(tok).to_owned())
        .collect()
}
