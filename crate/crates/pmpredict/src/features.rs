//! Feature extraction: bag-of-words channels plus post context.
//!
//! Three natural-language channels (thread title, thread bodies, subforum
//! name) are term-frequency counts against a vocabulary learned from the
//! training window only — featurizing later posts never allocates new
//! columns, unseen terms are dropped. The dense context block holds the
//! trade-tag flags, posting time, author tenure/reputation, thread
//! reply count and views, and the four centrality scores of the creator in
//! the public interaction graph.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{ForumDataset, PostId, PostRecord};
use crate::graph::CentralityScores;
use crate::matrix::{FeatureMatrix, SparseVec};
use crate::text::{tokenize, StemmerKind, StopwordList};

/// Number of dense context features appended after the NLP channels.
pub const CONTEXT_FEATURES: usize = 12;

pub const CONTEXT_FEATURE_NAMES: [&str; CONTEXT_FEATURES] = [
    "tagged_sell",
    "tagged_buy",
    "hour_of_day",
    "day_of_week",
    "time_on_forum_days",
    "reply_count",
    "reputation",
    "views",
    "clustering",
    "degree",
    "eigenvector",
    "betweenness",
];

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("empty training corpus")]
    EmptyCorpus,
    #[error("unknown creator {0}")]
    UnknownUser(String),
    #[error("post {0} references a thread missing from the dataset")]
    UnknownThread(String),
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct VocabConfig {
    pub stopwords: StopwordList,
    pub stemmer: StemmerKind,
    /// Minimum corpus frequency (total occurrences) for a term to get a column.
    pub min_tf: u32,
}

impl Default for VocabConfig {
    fn default() -> Self {
        VocabConfig {
            stopwords: StopwordList::Combined,
            stemmer: StemmerKind::NaiveEnglish,
            min_tf: 3,
        }
    }
}

/// Term-to-column maps per channel, built exclusively from training text.
/// Column layout: title terms, body terms, subforum terms, then the 12
/// dense context features. Term indices are assigned in sorted term order,
/// so a vocabulary build is deterministic.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Vocabulary {
    pub stopwords: StopwordList,
    pub stemmer: StemmerKind,
    pub min_tf: u32,
    /// Set when the corpus produced no NLP terms at all (e.g. all stopwords).
    pub empty_nlp: bool,
    title: BTreeMap<String, u32>,
    body: BTreeMap<String, u32>,
    subforum: BTreeMap<String, u32>,
}

impl Vocabulary {
    pub fn title_len(&self) -> usize {
        self.title.len()
    }

    pub fn body_len(&self) -> usize {
        self.body.len()
    }

    pub fn subforum_len(&self) -> usize {
        self.subforum.len()
    }

    pub fn nlp_columns(&self) -> usize {
        self.title.len() + self.body.len() + self.subforum.len()
    }

    /// Full feature-vector length: NLP channels plus the dense block.
    pub fn total_columns(&self) -> usize {
        self.nlp_columns() + CONTEXT_FEATURES
    }

    fn title_col(&self, term: &str) -> Option<u32> {
        self.title.get(term).copied()
    }

    fn body_col(&self, term: &str) -> Option<u32> {
        self.body.get(term).copied().map(|c| c + self.title.len() as u32)
    }

    fn subforum_col(&self, term: &str) -> Option<u32> {
        self.subforum.get(term).copied().map(|c| c + (self.title.len() + self.body.len()) as u32)
    }

    pub fn context_col(&self, feature: usize) -> u32 {
        debug_assert!(feature < CONTEXT_FEATURES);
        (self.nlp_columns() + feature) as u32
    }

    /// Human-readable column name, channel-prefixed for NLP terms.
    pub fn column_name(&self, col: u32) -> String {
        let col = col as usize;
        let (t, b, s) = (self.title.len(), self.body.len(), self.subforum.len());
        if col < t {
            let term = self.title.iter().find(|(_, &i)| i as usize == col).map(|(k, _)| k.as_str());
            format!("title:{}", term.unwrap_or("?"))
        } else if col < t + b {
            let term =
                self.body.iter().find(|(_, &i)| i as usize == col - t).map(|(k, _)| k.as_str());
            format!("body:{}", term.unwrap_or("?"))
        } else if col < t + b + s {
            let term = self
                .subforum
                .iter()
                .find(|(_, &i)| i as usize == col - t - b)
                .map(|(k, _)| k.as_str());
            format!("subforum:{}", term.unwrap_or("?"))
        } else {
            CONTEXT_FEATURE_NAMES[col - t - b - s].to_owned()
        }
    }
}

/// Build the vocabulary from training posts. Each post contributes its
/// thread title, the bodies of the thread's posts present in `ds` (the
/// training slice), and the subforum name.
pub fn build_vocabulary(
    posts: &[&PostRecord],
    ds: &ForumDataset,
    config: VocabConfig,
) -> Result<Vocabulary, FeatureError> {
    if posts.is_empty() {
        return Err(FeatureError::EmptyCorpus);
    }
    let mut title_freq: BTreeMap<String, u32> = BTreeMap::new();
    let mut body_freq: BTreeMap<String, u32> = BTreeMap::new();
    let mut subforum_freq: BTreeMap<String, u32> = BTreeMap::new();
    let count = |freq: &mut BTreeMap<String, u32>, text: &str| {
        for tok in tokenize(text, config.stopwords, config.stemmer) {
            *freq.entry(tok).or_insert(0) += 1;
        }
    };

    for post in posts {
        if let Some(thread) = ds.thread(&post.thread_id) {
            count(&mut title_freq, &thread.title);
            count(&mut subforum_freq, &thread.subforum);
        }
        for tp in ds.posts_in_thread(&post.thread_id) {
            count(&mut body_freq, &tp.body);
        }
    }

    let index = |freq: BTreeMap<String, u32>| -> BTreeMap<String, u32> {
        freq.into_iter()
            .filter(|&(_, f)| f >= config.min_tf)
            .enumerate()
            .map(|(i, (term, _))| (term, i as u32))
            .collect()
    };
    let title = index(title_freq);
    let body = index(body_freq);
    let subforum = index(subforum_freq);
    let empty_nlp = title.is_empty() && body.is_empty() && subforum.is_empty();
    Ok(Vocabulary {
        stopwords: config.stopwords,
        stemmer: config.stemmer,
        min_tf: config.min_tf,
        empty_nlp,
        title,
        body,
        subforum,
    })
}

/// Case- and whitespace-insensitive detection of bracketed `[b]` / `[s]`
/// trade tags anywhere in a thread title. Returns `(tagged_buy, tagged_sell)`.
pub fn detect_trade_tags(title: &str) -> (bool, bool) {
    let mut buy = false;
    let mut sell = false;
    let chars: Vec<char> = title.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        if chars[i] == '[' {
            let mut j = i + 1;
            while j < chars.len() && chars[j].is_whitespace() {
                j += 1;
            }
            if j < chars.len() {
                let tag = chars[j].to_ascii_lowercase();
                let mut k = j + 1;
                while k < chars.len() && chars[k].is_whitespace() {
                    k += 1;
                }
                if k < chars.len() && chars[k] == ']' {
                    match tag {
                        'b' => buy = true,
                        's' => sell = true,
                        _ => {}
                    }
                }
            }
        }
        i += 1;
    }
    (buy, sell)
}

/// One post's sparse feature vector over a vocabulary's column space.
#[derive(Debug, Clone)]
pub struct FeatureVector {
    pub post_id: PostId,
    pub features: SparseVec,
}

/// Extract the full feature vector for a thread-starting post.
///
/// `reply_cutoff_ts` bounds which thread replies are visible, both for the
/// body bag-of-words and the reply count — at training time the leak end,
/// at prediction time a fixed horizon after the post so no future
/// information leaks in. Centrality scores come from the supplied bundle;
/// creators absent from the public graph score 0 on all four.
pub fn featurize(
    post: &PostRecord,
    ds: &ForumDataset,
    vocab: &Vocabulary,
    centrality: &CentralityScores,
    reply_cutoff_ts: i64,
) -> Result<FeatureVector, FeatureError> {
    let creator = ds
        .user(&post.author_id)
        .ok_or_else(|| FeatureError::UnknownUser(post.author_id.to_string()))?;
    let thread = ds
        .thread(&post.thread_id)
        .ok_or_else(|| FeatureError::UnknownThread(post.post_id.to_string()))?;

    let mut pairs: Vec<(u32, f64)> = Vec::new();
    let mut bump = |col: Option<u32>| {
        if let Some(c) = col {
            pairs.push((c, 1.0));
        }
    };
    for tok in tokenize(&thread.title, vocab.stopwords, vocab.stemmer) {
        bump(vocab.title_col(&tok));
    }
    let mut thread_posts = 0usize;
    for tp in ds.posts_in_thread(&post.thread_id) {
        if tp.ts > reply_cutoff_ts {
            continue;
        }
        thread_posts += 1;
        for tok in tokenize(&tp.body, vocab.stopwords, vocab.stemmer) {
            bump(vocab.body_col(&tok));
        }
    }
    for tok in tokenize(&thread.subforum, vocab.stopwords, vocab.stemmer) {
        bump(vocab.subforum_col(&tok));
    }

    let (buy, sell) = detect_trade_tags(&thread.title);
    let scores = centrality.lookup(&post.author_id);
    let hour = post.ts.rem_euclid(86_400) / 3_600;
    let day = (post.ts.div_euclid(86_400) + 4).rem_euclid(7);
    let dense: [f64; CONTEXT_FEATURES] = [
        sell as u8 as f64,
        buy as u8 as f64,
        hour as f64,
        day as f64,
        (post.ts - creator.join_ts) as f64 / 86_400.0,
        thread_posts.saturating_sub(1) as f64,
        creator.reputation as f64,
        thread.views as f64,
        scores.clustering,
        scores.degree,
        scores.eigenvector,
        scores.betweenness,
    ];
    for (i, &v) in dense.iter().enumerate() {
        if v != 0.0 {
            pairs.push((vocab.context_col(i), v));
        }
    }
    Ok(FeatureVector { post_id: post.post_id.clone(), features: SparseVec::from_pairs(pairs) })
}

/// Which feature block(s) the classifier sees.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureSet {
    Nlp,
    Context,
    All,
}

impl FeatureSet {
    pub fn id(&self) -> &'static str {
        match self {
            FeatureSet::Nlp => "nlp",
            FeatureSet::Context => "context",
            FeatureSet::All => "all",
        }
    }

    pub fn columns(&self, vocab: &Vocabulary) -> usize {
        match self {
            FeatureSet::Nlp => vocab.nlp_columns(),
            FeatureSet::Context => CONTEXT_FEATURES,
            FeatureSet::All => vocab.total_columns(),
        }
    }

    /// Restrict a full vector to this feature set, remapping columns to a
    /// dense 0-based range.
    pub fn project(&self, vocab: &Vocabulary, full: &SparseVec) -> SparseVec {
        let nlp = vocab.nlp_columns() as u32;
        match self {
            FeatureSet::All => full.clone(),
            FeatureSet::Nlp => SparseVec::from_pairs(
                full.iter().filter(|&(c, _)| c < nlp).collect(),
            ),
            FeatureSet::Context => SparseVec::from_pairs(
                full.iter().filter(|&(c, _)| c >= nlp).map(|(c, v)| (c - nlp, v)).collect(),
            ),
        }
    }

    /// Name of a projected column in terms of the full vocabulary.
    pub fn column_name(&self, vocab: &Vocabulary, col: u32) -> String {
        match self {
            FeatureSet::Context => vocab.column_name(col + vocab.nlp_columns() as u32),
            _ => vocab.column_name(col),
        }
    }
}

impl std::str::FromStr for FeatureSet {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "nlp" => Ok(FeatureSet::Nlp),
            "context" => Ok(FeatureSet::Context),
            "all" => Ok(FeatureSet::All),
            other => Err(format!("unknown feature set `{other}` (nlp|context|all)")),
        }
    }
}

/// Build the projected matrix for a post set.
pub fn to_matrix(vectors: &[FeatureVector], vocab: &Vocabulary, set: FeatureSet) -> FeatureMatrix {
    FeatureMatrix::new(
        set.columns(vocab),
        vectors.iter().map(|v| set.project(vocab, &v.features)).collect(),
    )
}

/// Sparse text export: a `#features N` header, then one row per post:
/// `post_id col:value ...`.
pub fn write_sparse_matrix<W: Write>(
    vectors: &[FeatureVector],
    n_features: usize,
    mut w: W,
) -> std::io::Result<()> {
    writeln!(w, "#features {n_features}")?;
    for v in vectors {
        write!(w, "{}", v.post_id.as_str())?;
        for (c, val) in v.features.iter() {
            write!(w, " {c}:{val}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}

/// Parse the sparse text format back into `(post_id, vector)` rows plus the
/// feature count.
pub fn read_sparse_matrix<R: std::io::BufRead>(
    reader: R,
) -> Result<(Vec<(PostId, SparseVec)>, usize), String> {
    let mut n_features: Option<usize> = None;
    let mut rows = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| format!("line {}: {e}", lineno + 1))?;
        let line = line.trim_end();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix("#features ") {
            n_features =
                Some(rest.trim().parse().map_err(|e| format!("line {}: {e}", lineno + 1))?);
            continue;
        }
        let mut parts = line.split(' ');
        let post_id = parts.next().ok_or_else(|| format!("line {}: empty row", lineno + 1))?;
        let mut pairs = Vec::new();
        for entry in parts {
            let (col, val) = entry
                .split_once(':')
                .ok_or_else(|| format!("line {}: bad entry `{entry}`", lineno + 1))?;
            let col: u32 = col.parse().map_err(|e| format!("line {}: {e}", lineno + 1))?;
            let val: f64 = val.parse().map_err(|e| format!("line {}: {e}", lineno + 1))?;
            pairs.push((col, val));
        }
        rows.push((PostId::new(post_id), SparseVec::from_pairs(pairs)));
    }
    let n_features = n_features.ok_or("missing #features header")?;
    for (post_id, row) in &rows {
        if row.max_index().is_some_and(|m| m as usize >= n_features) {
            return Err(format!("row {post_id} exceeds the declared feature count"));
        }
    }
    Ok((rows, n_features))
}
