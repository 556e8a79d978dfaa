//! Leak data model: users, threads, posts, private messages.
//!
//! Dumps are ingested from JSONL files (one object per line, UTF-8). A
//! loaded [`ForumDataset`] is validated, sorted by timestamp and immutable;
//! it can be sliced into time windows and summarized. Timestamps are integer
//! Unix seconds UTC; sub-second precision in dumps is truncated.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

macro_rules! id_newtype {
    ($(#[$doc:meta])* $name:ident) => {
        $(#[$doc])*
        #[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub String);

        impl $name {
            pub fn new(id: impl Into<String>) -> Self {
                Self(id.into())
            }
            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                Self(s.to_owned())
            }
        }
    };
}

id_newtype!(
    /// Opaque user identifier.
    UserId
);
id_newtype!(
    /// Opaque thread identifier.
    ThreadId
);
id_newtype!(
    /// Opaque post identifier.
    PostId
);
id_newtype!(
    /// Opaque private-message identifier.
    MsgId
);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserRecord {
    pub user_id: UserId,
    pub username: String,
    pub join_ts: i64,
    pub reputation: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThreadRecord {
    pub thread_id: ThreadId,
    pub subforum: String,
    pub title: String,
    pub creator_id: UserId,
    pub created_ts: i64,
    pub views: u64,
}

/// A public post. Thread-starting posts have `reply_to` absent and
/// `ts` equal to the thread's `created_ts`; replies carry the id of an
/// earlier post in the same thread.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PostRecord {
    pub post_id: PostId,
    pub thread_id: ThreadId,
    pub author_id: UserId,
    pub ts: i64,
    pub body: String,
    pub reply_to: Option<PostId>,
}

impl PostRecord {
    pub fn is_thread_start(&self) -> bool {
        self.reply_to.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrivateMessage {
    pub msg_id: MsgId,
    pub sender_id: UserId,
    pub recipient_id: UserId,
    pub ts: i64,
    pub body: String,
}

/// Half-open time window `[start, start + duration)` in Unix seconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeWindow {
    pub start: i64,
    pub duration: i64,
}

impl TimeWindow {
    /// Panics if `duration <= 0`.
    pub fn new(start: i64, duration: i64) -> Self {
        assert!(duration > 0, "window duration must be positive");
        TimeWindow { start, duration }
    }

    pub fn end(&self) -> i64 {
        self.start + self.duration
    }

    pub fn contains(&self, ts: i64) -> bool {
        ts >= self.start && ts < self.end()
    }

    /// Intersection with another window, if non-empty.
    pub fn intersect(&self, other: &TimeWindow) -> Option<TimeWindow> {
        let start = self.start.max(other.start);
        let end = self.end().min(other.end());
        if end > start {
            Some(TimeWindow { start, duration: end - start })
        } else {
            None
        }
    }
}

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: malformed record: {msg}")]
    Malformed { path: PathBuf, line: usize, msg: String },
    #[error("invalid record ({kind}): {detail}")]
    Invalid { kind: &'static str, detail: String },
}

/// Outcome counters from a load; serialized as the load report JSON.
#[derive(Debug, Default, Clone, Serialize)]
pub struct LoadReport {
    pub users_loaded: usize,
    pub threads_loaded: usize,
    pub posts_loaded: usize,
    pub messages_loaded: usize,
    pub dropped_total: usize,
    /// Drop reason -> count (lenient mode only).
    pub dropped_by_reason: BTreeMap<String, usize>,
    /// Records missing an optional numeric field that defaulted to 0.
    pub missing_reputation: usize,
    pub missing_views: usize,
}

impl LoadReport {
    fn drop_record(&mut self, reason: &str) {
        self.dropped_total += 1;
        *self.dropped_by_reason.entry(reason.to_owned()).or_insert(0) += 1;
    }
}

/// Paths to the four JSONL dump files.
#[derive(Debug, Clone)]
pub struct DatasetPaths {
    pub users: PathBuf,
    pub threads: PathBuf,
    pub posts: PathBuf,
    pub messages: PathBuf,
}

impl DatasetPaths {
    /// Conventional file names inside a dump directory.
    pub fn from_dir(dir: impl AsRef<Path>) -> Self {
        let dir = dir.as_ref();
        DatasetPaths {
            users: dir.join("users.jsonl"),
            threads: dir.join("threads.jsonl"),
            posts: dir.join("posts.jsonl"),
            messages: dir.join("pms.jsonl"),
        }
    }
}

/// Validated, timestamp-sorted forum leak.
#[derive(Debug, Clone, Default)]
pub struct ForumDataset {
    pub users: Vec<UserRecord>,
    pub threads: Vec<ThreadRecord>,
    pub posts: Vec<PostRecord>,
    pub messages: Vec<PrivateMessage>,
    /// `[min_ts, max_ts]` over threads, posts and messages; `None` when empty.
    pub span: Option<(i64, i64)>,

    user_idx: HashMap<UserId, u32>,
    thread_idx: HashMap<ThreadId, u32>,
    post_idx: HashMap<PostId, u32>,
    posts_by_thread: HashMap<ThreadId, Vec<u32>>,
    msgs_by_recipient: HashMap<UserId, Vec<u32>>,
}

impl ForumDataset {
    /// Build a dataset from in-memory parts, enforcing every referential
    /// invariant (strict mode).
    pub fn new(
        users: Vec<UserRecord>,
        threads: Vec<ThreadRecord>,
        posts: Vec<PostRecord>,
        messages: Vec<PrivateMessage>,
    ) -> Result<Self, LoadError> {
        let mut report = LoadReport::default();
        validate_and_build(users, threads, posts, messages, true, &mut report)
    }

    pub fn is_empty(&self) -> bool {
        self.span.is_none()
    }

    pub fn user(&self, id: &UserId) -> Option<&UserRecord> {
        self.user_idx.get(id).map(|&i| &self.users[i as usize])
    }

    pub fn thread(&self, id: &ThreadId) -> Option<&ThreadRecord> {
        self.thread_idx.get(id).map(|&i| &self.threads[i as usize])
    }

    pub fn post(&self, id: &PostId) -> Option<&PostRecord> {
        self.post_idx.get(id).map(|&i| &self.posts[i as usize])
    }

    /// Posts of a thread, ordered by timestamp.
    pub fn posts_in_thread(&self, id: &ThreadId) -> impl Iterator<Item = &PostRecord> {
        self.posts_by_thread
            .get(id)
            .into_iter()
            .flatten()
            .map(move |&i| &self.posts[i as usize])
    }

    /// Private messages received by a user, ordered by timestamp.
    pub fn messages_to(&self, id: &UserId) -> impl Iterator<Item = &PrivateMessage> {
        self.msgs_by_recipient
            .get(id)
            .into_iter()
            .flatten()
            .map(move |&i| &self.messages[i as usize])
    }

    /// Thread-starting posts (reply_to absent), in timestamp order.
    pub fn thread_start_posts(&self) -> impl Iterator<Item = &PostRecord> {
        self.posts.iter().filter(|p| p.is_thread_start())
    }

    /// Sub-dataset with posts/messages inside `window`. The user table is
    /// global and fully retained; threads are retained only when their
    /// starting post falls inside the window, and posts of dropped threads
    /// are dropped with them so referential invariants keep holding.
    pub fn slice(&self, window: &TimeWindow) -> ForumDataset {
        let threads: Vec<ThreadRecord> = self
            .threads
            .iter()
            .filter(|t| window.contains(t.created_ts))
            .cloned()
            .collect();
        let kept: HashSet<&ThreadId> = threads.iter().map(|t| &t.thread_id).collect();
        let posts: Vec<PostRecord> = self
            .posts
            .iter()
            .filter(|p| window.contains(p.ts) && kept.contains(&p.thread_id))
            .cloned()
            .collect();
        // A reply inside the window may reference a dropped post only if the
        // target itself fell outside; since targets are earlier posts of a
        // kept in-window thread, they are always retained.
        let messages: Vec<PrivateMessage> = self
            .messages
            .iter()
            .filter(|m| window.contains(m.ts))
            .cloned()
            .collect();
        assemble(self.users.clone(), threads, posts, messages)
    }

    /// Copy of the dataset with all private messages removed. Used to prove
    /// that feature extraction never sees private data.
    pub fn public_view(&self) -> ForumDataset {
        assemble(self.users.clone(), self.threads.clone(), self.posts.clone(), Vec::new())
    }

    pub fn summary(&self) -> DatasetSummary {
        dataset_summary(self)
    }

    /// Write the dataset back out as the four JSONL dump files.
    pub fn export(&self, dir: impl AsRef<Path>) -> Result<(), LoadError> {
        let dir = dir.as_ref();
        let paths = DatasetPaths::from_dir(dir);
        write_jsonl(&paths.users, &self.users)?;
        write_jsonl(&paths.threads, &self.threads)?;
        write_jsonl(&paths.posts, &self.posts)?;
        write_jsonl(&paths.messages, &self.messages)?;
        Ok(())
    }
}

/// Counts reported by `dataset_summary`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DatasetSummary {
    pub users: usize,
    pub users_with_pms: usize,
    pub threads: usize,
    pub posts: usize,
    pub messages: usize,
    pub span: Option<(i64, i64)>,
}

/// Summary counts; "users with PMs" counts users appearing as sender or
/// recipient of at least one message.
pub fn dataset_summary(ds: &ForumDataset) -> DatasetSummary {
    let mut with_pms: HashSet<&UserId> = HashSet::new();
    for m in &ds.messages {
        with_pms.insert(&m.sender_id);
        with_pms.insert(&m.recipient_id);
    }
    DatasetSummary {
        users: ds.users.len(),
        users_with_pms: with_pms.len(),
        threads: ds.threads.len(),
        posts: ds.posts.len(),
        messages: ds.messages.len(),
        span: ds.span,
    }
}

/// Load and validate a dump. In strict mode the first referential violation
/// aborts the load; in lenient mode offending records are dropped and
/// counted in the report. Lenient is the right default for real leaks,
/// strict for synthetic data.
pub fn load_dataset(
    paths: &DatasetPaths,
    strict: bool,
) -> Result<(ForumDataset, LoadReport), LoadError> {
    let mut report = LoadReport::default();

    let raw_users: Vec<RawUser> = read_jsonl(&paths.users, strict, &mut report)?;
    let raw_threads: Vec<RawThread> = read_jsonl(&paths.threads, strict, &mut report)?;
    let raw_posts: Vec<RawPost> = read_jsonl(&paths.posts, strict, &mut report)?;
    let raw_msgs: Vec<RawMessage> = read_jsonl(&paths.messages, strict, &mut report)?;

    let users = raw_users
        .into_iter()
        .map(|r| {
            if r.reputation.is_none() {
                report.missing_reputation += 1;
            }
            UserRecord {
                user_id: UserId(r.user_id),
                username: r.username,
                join_ts: r.join_ts.secs(),
                reputation: r.reputation.unwrap_or(0),
            }
        })
        .collect();
    let threads = raw_threads
        .into_iter()
        .map(|r| {
            if r.views.is_none() {
                report.missing_views += 1;
            }
            ThreadRecord {
                thread_id: ThreadId(r.thread_id),
                subforum: r.subforum,
                title: r.title,
                creator_id: UserId(r.creator_id),
                created_ts: r.created_ts.secs(),
                views: r.views.unwrap_or(0).max(0) as u64,
            }
        })
        .collect();
    let posts = raw_posts
        .into_iter()
        .map(|r| PostRecord {
            post_id: PostId(r.post_id),
            thread_id: ThreadId(r.thread_id),
            author_id: UserId(r.author_id),
            ts: r.ts.secs(),
            body: r.body,
            reply_to: r.reply_to.map(PostId),
        })
        .collect();
    let messages = raw_msgs
        .into_iter()
        .map(|r| PrivateMessage {
            msg_id: MsgId(r.msg_id),
            sender_id: UserId(r.sender_id),
            recipient_id: UserId(r.recipient_id),
            ts: r.ts.secs(),
            body: r.body,
        })
        .collect();

    let ds = validate_and_build(users, threads, posts, messages, strict, &mut report)?;
    report.users_loaded = ds.users.len();
    report.threads_loaded = ds.threads.len();
    report.posts_loaded = ds.posts.len();
    report.messages_loaded = ds.messages.len();
    Ok((ds, report))
}

// ---------------------------------------------------------------------------
// raw JSONL records

/// Timestamp that may arrive as an integer or a float; floats are truncated.
#[derive(Deserialize)]
#[serde(untagged)]
enum TsNum {
    I(i64),
    F(f64),
}

impl TsNum {
    fn secs(&self) -> i64 {
        match *self {
            TsNum::I(v) => v,
            TsNum::F(v) => v.trunc() as i64,
        }
    }
}

#[derive(Deserialize)]
struct RawUser {
    user_id: String,
    username: String,
    join_ts: TsNum,
    #[serde(default)]
    reputation: Option<i64>,
}

#[derive(Deserialize)]
struct RawThread {
    thread_id: String,
    subforum: String,
    title: String,
    creator_id: String,
    created_ts: TsNum,
    #[serde(default)]
    views: Option<i64>,
}

#[derive(Deserialize)]
struct RawPost {
    post_id: String,
    thread_id: String,
    author_id: String,
    ts: TsNum,
    body: String,
    #[serde(default)]
    reply_to: Option<String>,
}

#[derive(Deserialize)]
struct RawMessage {
    msg_id: String,
    sender_id: String,
    recipient_id: String,
    ts: TsNum,
    body: String,
}

fn read_jsonl<T: serde::de::DeserializeOwned>(
    path: &Path,
    strict: bool,
    report: &mut LoadReport,
) -> Result<Vec<T>, LoadError> {
    let file = File::open(path).map_err(|source| LoadError::Io { path: path.into(), source })?;
    let reader = BufReader::new(file);
    let mut out = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|source| LoadError::Io { path: path.into(), source })?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<T>(&line) {
            Ok(rec) => out.push(rec),
            Err(e) if strict => {
                return Err(LoadError::Malformed {
                    path: path.into(),
                    line: lineno + 1,
                    msg: e.to_string(),
                })
            }
            Err(_) => report.drop_record("malformed line"),
        }
    }
    Ok(out)
}

fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<(), LoadError> {
    let file = File::create(path).map_err(|source| LoadError::Io { path: path.into(), source })?;
    let mut w = BufWriter::new(file);
    for rec in records {
        let line = serde_json::to_string(rec).expect("record serialization");
        writeln!(w, "{line}").map_err(|source| LoadError::Io { path: path.into(), source })?;
    }
    w.flush().map_err(|source| LoadError::Io { path: path.into(), source })
}

// ---------------------------------------------------------------------------
// validation

macro_rules! reject {
    ($strict:expr, $report:expr, $kind:expr, $($detail:tt)*) => {{
        if $strict {
            return Err(LoadError::Invalid { kind: $kind, detail: format!($($detail)*) });
        }
        $report.drop_record($kind);
        continue;
    }};
}

fn validate_and_build(
    users: Vec<UserRecord>,
    threads: Vec<ThreadRecord>,
    posts: Vec<PostRecord>,
    messages: Vec<PrivateMessage>,
    strict: bool,
    report: &mut LoadReport,
) -> Result<ForumDataset, LoadError> {
    let mut kept_users: Vec<UserRecord> = Vec::with_capacity(users.len());
    let mut seen_users: HashSet<UserId> = HashSet::with_capacity(users.len());
    for u in users {
        if !seen_users.insert(u.user_id.clone()) {
            reject!(strict, report, "duplicate user id", "user {}", u.user_id);
        }
        kept_users.push(u);
    }
    let user_join: HashMap<&UserId, i64> =
        kept_users.iter().map(|u| (&u.user_id, u.join_ts)).collect();

    let mut kept_threads: Vec<ThreadRecord> = Vec::with_capacity(threads.len());
    let mut seen_threads: HashSet<ThreadId> = HashSet::with_capacity(threads.len());
    for t in threads {
        if !seen_threads.insert(t.thread_id.clone()) {
            reject!(strict, report, "duplicate thread id", "thread {}", t.thread_id);
        }
        match user_join.get(&t.creator_id) {
            None => reject!(strict, report, "unknown user reference", "thread {} creator {}", t.thread_id, t.creator_id),
            Some(&join) if join > t.created_ts => {
                reject!(strict, report, "activity before join", "thread {} by {}", t.thread_id, t.creator_id)
            }
            _ => {}
        }
        kept_threads.push(t);
    }
    let thread_created: HashMap<&ThreadId, i64> =
        kept_threads.iter().map(|t| (&t.thread_id, t.created_ts)).collect();

    // Posts are validated in timestamp order so reply targets are seen first.
    let mut posts = posts;
    posts.sort_by(|a, b| a.ts.cmp(&b.ts).then_with(|| a.post_id.cmp(&b.post_id)));
    let mut kept_posts: Vec<PostRecord> = Vec::with_capacity(posts.len());
    let mut post_thread: HashMap<PostId, (ThreadId, i64)> = HashMap::with_capacity(posts.len());
    for p in posts {
        if post_thread.contains_key(&p.post_id) {
            reject!(strict, report, "duplicate post id", "post {}", p.post_id);
        }
        let created = match thread_created.get(&p.thread_id) {
            Some(&c) => c,
            None => reject!(strict, report, "unknown thread reference", "post {}", p.post_id),
        };
        match user_join.get(&p.author_id) {
            None => reject!(strict, report, "unknown user reference", "post {} author {}", p.post_id, p.author_id),
            Some(&join) if join > p.ts => {
                reject!(strict, report, "activity before join", "post {} by {}", p.post_id, p.author_id)
            }
            _ => {}
        }
        if p.ts < created {
            reject!(strict, report, "post before thread", "post {}", p.post_id);
        }
        match &p.reply_to {
            None => {
                if p.ts != created {
                    reject!(strict, report, "start post timestamp mismatch", "post {}", p.post_id);
                }
            }
            Some(target) => match post_thread.get(target) {
                None => reject!(strict, report, "unknown reply target", "post {}", p.post_id),
                Some((tid, tts)) => {
                    if *tid != p.thread_id || *tts > p.ts || *target == p.post_id {
                        reject!(strict, report, "invalid reply target", "post {}", p.post_id);
                    }
                }
            },
        }
        post_thread.insert(p.post_id.clone(), (p.thread_id.clone(), p.ts));
        kept_posts.push(p);
    }

    let mut kept_msgs: Vec<PrivateMessage> = Vec::with_capacity(messages.len());
    let mut seen_msgs: HashSet<MsgId> = HashSet::with_capacity(messages.len());
    for m in messages {
        if !seen_msgs.insert(m.msg_id.clone()) {
            reject!(strict, report, "duplicate message id", "message {}", m.msg_id);
        }
        if m.sender_id == m.recipient_id {
            reject!(strict, report, "self-addressed message", "message {}", m.msg_id);
        }
        if !user_join.contains_key(&m.recipient_id) {
            reject!(strict, report, "unknown user reference", "message {} recipient {}", m.msg_id, m.recipient_id);
        }
        match user_join.get(&m.sender_id) {
            None => reject!(strict, report, "unknown user reference", "message {} sender {}", m.msg_id, m.sender_id),
            Some(&join) if join > m.ts => {
                reject!(strict, report, "activity before join", "message {} by {}", m.msg_id, m.sender_id)
            }
            _ => {}
        }
        kept_msgs.push(m);
    }

    Ok(assemble(kept_users, kept_threads, kept_posts, kept_msgs))
}

/// Sort collections, compute the span and build lookup indexes. Inputs must
/// already satisfy the referential invariants.
fn assemble(
    mut users: Vec<UserRecord>,
    mut threads: Vec<ThreadRecord>,
    mut posts: Vec<PostRecord>,
    mut messages: Vec<PrivateMessage>,
) -> ForumDataset {
    users.sort_by(|a, b| a.join_ts.cmp(&b.join_ts).then_with(|| a.user_id.cmp(&b.user_id)));
    threads.sort_by(|a, b| a.created_ts.cmp(&b.created_ts).then_with(|| a.thread_id.cmp(&b.thread_id)));
    posts.sort_by(|a, b| a.ts.cmp(&b.ts).then_with(|| a.post_id.cmp(&b.post_id)));
    messages.sort_by(|a, b| a.ts.cmp(&b.ts).then_with(|| a.msg_id.cmp(&b.msg_id)));

    let mut span: Option<(i64, i64)> = None;
    {
        let mut fold = |ts: i64| {
            span = Some(match span {
                None => (ts, ts),
                Some((lo, hi)) => (lo.min(ts), hi.max(ts)),
            });
        };
        threads.iter().for_each(|t| fold(t.created_ts));
        posts.iter().for_each(|p| fold(p.ts));
        messages.iter().for_each(|m| fold(m.ts));
    }

    let user_idx = users.iter().enumerate().map(|(i, u)| (u.user_id.clone(), i as u32)).collect();
    let thread_idx =
        threads.iter().enumerate().map(|(i, t)| (t.thread_id.clone(), i as u32)).collect();
    let post_idx = posts.iter().enumerate().map(|(i, p)| (p.post_id.clone(), i as u32)).collect();

    let mut posts_by_thread: HashMap<ThreadId, Vec<u32>> = HashMap::new();
    for (i, p) in posts.iter().enumerate() {
        posts_by_thread.entry(p.thread_id.clone()).or_default().push(i as u32);
    }
    let mut msgs_by_recipient: HashMap<UserId, Vec<u32>> = HashMap::new();
    for (i, m) in messages.iter().enumerate() {
        msgs_by_recipient.entry(m.recipient_id.clone()).or_default().push(i as u32);
    }

    ForumDataset {
        users,
        threads,
        posts,
        messages,
        span,
        user_idx,
        thread_idx,
        post_idx,
        posts_by_thread,
        msgs_by_recipient,
    }
}
