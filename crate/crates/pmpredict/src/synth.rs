//! Synthetic forum generator with planted ground truth.
//!
//! Generates a full forum leak — users, threads with replies, private
//! messages — where some posts trigger private messages whose delays are
//! drawn from a planted two-exponential mixture. The generator records
//! which message was triggered by which post, giving desk-scale oracles for
//! the delay fit, the labeler and the end-to-end classifier that real leaks
//! cannot provide.
//!
//! Everything is driven by a single seed; generation is single-threaded and
//! the output is byte-identical across runs.

use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, Zipf};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{
    ForumDataset, MsgId, PostId, PostRecord, PrivateMessage, ThreadRecord, UserId, UserRecord,
};
use crate::SECS_PER_WEEK;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("degenerate config: {0}")]
    DegenerateConfig(String),
    #[error("generated dataset failed validation: {0}")]
    Invalid(#[from] crate::data::LoadError),
}

/// Planted post-to-message delay mixture, generator parameterization:
/// a triggered message's delay is fast-exponential with probability
/// `weight_fast`, slow-exponential otherwise.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct MixtureConfig {
    pub weight_fast: f64,
    pub rate_fast_per_hour: f64,
    pub rate_slow_per_hour: f64,
}

impl MixtureConfig {
    /// Mixture density (per hour) at delay `tau_hours`.
    pub fn density(&self, tau_hours: f64) -> f64 {
        self.weight_fast * self.rate_fast_per_hour * (-self.rate_fast_per_hour * tau_hours).exp()
            + (1.0 - self.weight_fast)
                * self.rate_slow_per_hour
                * (-self.rate_slow_per_hour * tau_hours).exp()
    }

    /// Probability mass of a delay falling in `(lo, hi]` hours.
    pub fn mass(&self, lo_hours: f64, hi_hours: f64) -> f64 {
        let part = |rate: f64| (-rate * lo_hours).exp() - (-rate * hi_hours).exp();
        self.weight_fast * part(self.rate_fast_per_hour)
            + (1.0 - self.weight_fast) * part(self.rate_slow_per_hour)
    }
}

/// What makes a post trigger private messages.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TriggerConfig {
    /// Trigger probability of a plain post.
    pub base_prob: f64,
    /// Added when the post carries trigger-vocabulary terms.
    pub term_boost: f64,
    /// Added when the title carries a `[S]`/`[B]` tag.
    pub tag_boost: f64,
    /// Fraction of posts that are trade posts (carry trigger terms).
    pub trade_post_fraction: f64,
    /// Probability a trade post's title is tagged.
    pub tag_prob: f64,
    pub trigger_terms: Vec<String>,
    /// Triggered message count is `1 + Poisson(extra_msgs_mean)`.
    pub extra_msgs_mean: f64,
    pub mixture: MixtureConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthConfig {
    /// Prefix for background vocabulary tokens; two forums with different
    /// names share no background vocabulary.
    pub forum_name: String,
    pub n_users: usize,
    pub span_weeks: f64,
    pub posts_per_user_per_day: f64,
    pub background_pms_per_user_per_day: f64,
    /// Mean replies per thread.
    pub replies_per_thread: f64,
    pub n_subforums: usize,
    pub background_vocab: usize,
    pub zipf_exponent: f64,
    pub trigger: TriggerConfig,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            forum_name: "alpha".into(),
            n_users: 1000,
            span_weeks: 26.0,
            posts_per_user_per_day: 0.02,
            background_pms_per_user_per_day: 0.02,
            replies_per_thread: 2.0,
            n_subforums: 4,
            background_vocab: 400,
            zipf_exponent: 1.1,
            trigger: TriggerConfig {
                base_prob: 0.03,
                term_boost: 0.6,
                tag_boost: 0.25,
                trade_post_fraction: 0.35,
                tag_prob: 0.7,
                trigger_terms: [
                    "dumps", "cvv", "fullz", "paypal", "accounts", "tracks", "escrow", "western",
                ]
                .iter()
                .map(|s| s.to_string())
                .collect(),
                extra_msgs_mean: 0.5,
                mixture: MixtureConfig {
                    weight_fast: 0.8,
                    rate_fast_per_hour: 2.0,
                    rate_slow_per_hour: 0.05,
                },
            },
            seed: 0,
        }
    }
}

impl SynthConfig {
    /// Mean trigger probability over posts (ignoring clamping).
    pub fn mean_trigger_prob(&self) -> f64 {
        let t = &self.trigger;
        (t.base_prob
            + t.trade_post_fraction * t.term_boost
            + t.trade_post_fraction * t.tag_prob * t.tag_boost)
            .clamp(0.0, 1.0)
    }

    pub fn span_secs(&self) -> i64 {
        (self.span_weeks * SECS_PER_WEEK as f64).round() as i64
    }
}

/// Which message each post triggered, for every generated message.
#[derive(Debug, Clone, Default)]
pub struct GroundTruth {
    pub triggered_by: BTreeMap<MsgId, Option<PostId>>,
}

impl GroundTruth {
    pub fn triggered_count(&self) -> usize {
        self.triggered_by.values().filter(|v| v.is_some()).count()
    }

    pub fn trigger_of(&self, msg: &MsgId) -> Option<&PostId> {
        self.triggered_by.get(msg).and_then(|v| v.as_ref())
    }

    /// `groundtruth.jsonl`: one `{msg_id, triggering_post_id|null}` per line.
    pub fn export(&self, dir: impl AsRef<Path>) -> std::io::Result<()> {
        use std::io::Write;
        let mut w = std::io::BufWriter::new(std::fs::File::create(
            dir.as_ref().join("groundtruth.jsonl"),
        )?);
        #[derive(Serialize)]
        struct Line<'a> {
            msg_id: &'a MsgId,
            triggering_post_id: &'a Option<PostId>,
        }
        for (msg_id, triggering_post_id) in &self.triggered_by {
            let line = serde_json::to_string(&Line { msg_id, triggering_post_id }).unwrap();
            writeln!(w, "{line}")?;
        }
        Ok(())
    }
}

/// Expected post-relative message density (messages/hour at delay
/// `tau_hours`) implied by the config: the planted mixture scaled by the
/// expected post count, trigger rate and messages per trigger, plus the
/// constant background each post's creator keeps receiving.
pub fn planted_density(config: &SynthConfig, tau_hours: f64) -> f64 {
    assert!(tau_hours >= 0.0);
    let span_days = config.span_weeks * 7.0;
    let expected_posts = config.n_users as f64 * config.posts_per_user_per_day * span_days;
    let msgs_per_trigger = 1.0 + config.trigger.extra_msgs_mean;
    let background_per_hour = config.background_pms_per_user_per_day / 24.0;
    expected_posts
        * (config.mean_trigger_prob() * msgs_per_trigger * config.trigger.mixture.density(tau_hours)
            + background_per_hour)
}

fn poisson(rng: &mut ChaCha8Rng, mean: f64) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).map(|d| d.sample(rng) as u64).unwrap_or(0)
}

struct TokenSampler {
    prefix: String,
    zipf: Zipf<f64>,
}

impl TokenSampler {
    fn new(config: &SynthConfig) -> Result<Self, SynthError> {
        let zipf = Zipf::new(config.background_vocab.max(2) as f64, config.zipf_exponent)
            .map_err(|e| SynthError::DegenerateConfig(format!("zipf: {e}")))?;
        Ok(TokenSampler { prefix: config.forum_name.clone(), zipf })
    }

    fn token(&self, rng: &mut ChaCha8Rng) -> String {
        let rank = self.zipf.sample(rng) as usize;
        format!("{}{rank:04}", self.prefix)
    }

    fn text(&self, rng: &mut ChaCha8Rng, min: usize, max: usize) -> String {
        let n = rng.random_range(min..=max);
        (0..n).map(|_| self.token(rng)).collect::<Vec<_>>().join(" ")
    }
}

/// Generate a forum with planted ground truth. Deterministic in the seed.
pub fn generate(config: &SynthConfig) -> Result<(ForumDataset, GroundTruth), SynthError> {
    if config.n_users == 0 {
        return Err(SynthError::DegenerateConfig("n_users = 0".into()));
    }
    if config.n_subforums == 0 {
        return Err(SynthError::DegenerateConfig("n_subforums = 0".into()));
    }
    let t = &config.trigger;
    if !(0.0..=1.0).contains(&t.mixture.weight_fast) {
        return Err(SynthError::DegenerateConfig("mixture weight outside [0,1]".into()));
    }
    if t.mixture.rate_fast_per_hour <= 0.0 || t.mixture.rate_slow_per_hour <= 0.0 {
        return Err(SynthError::DegenerateConfig("mixture rates must be positive".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let tokens = TokenSampler::new(config)?;
    let span = config.span_secs();
    let span_days = span as f64 / 86_400.0;

    // users join before the data span starts, so every in-span activity is valid
    let id_width = config.n_users.to_string().len().max(4);
    let mut users = Vec::with_capacity(config.n_users);
    let mut home_subforum = Vec::with_capacity(config.n_users);
    for i in 0..config.n_users {
        users.push(UserRecord {
            user_id: UserId(format!("u{:0w$}", i, w = id_width)),
            username: format!("member{i}"),
            join_ts: -rng.random_range(1..=span.max(2)),
            reputation: rng.random_range(0..200),
        });
        home_subforum.push(rng.random_range(0..config.n_subforums));
    }
    let mut subforum_users: Vec<Vec<usize>> = vec![Vec::new(); config.n_subforums];
    for (i, &sf) in home_subforum.iter().enumerate() {
        subforum_users[sf].push(i);
    }

    let mut threads = Vec::new();
    let mut posts = Vec::new();
    let mut messages = Vec::new();
    let mut truth = GroundTruth::default();
    let mut next_msg = 0usize;

    for creator in 0..config.n_users {
        let n_posts = poisson(&mut rng, config.posts_per_user_per_day * span_days);
        for _ in 0..n_posts {
            let ts = rng.random_range(0..span);
            let sf = home_subforum[creator];
            let thread_no = threads.len();
            let thread_id = crate::data::ThreadId(format!("t{thread_no:06}"));
            let post_id = PostId(format!("p{thread_no:06}"));

            let is_trade = rng.random::<f64>() < t.trade_post_fraction;
            let tagged = is_trade && rng.random::<f64>() < t.tag_prob;
            let mut title = tokens.text(&mut rng, 2, 4);
            let mut body = tokens.text(&mut rng, 6, 18);
            if is_trade && !t.trigger_terms.is_empty() {
                for _ in 0..rng.random_range(1..=2usize) {
                    let term = &t.trigger_terms[rng.random_range(0..t.trigger_terms.len())];
                    title.push(' ');
                    title.push_str(term);
                }
                for _ in 0..rng.random_range(1..=3usize) {
                    let term = &t.trigger_terms[rng.random_range(0..t.trigger_terms.len())];
                    body.push(' ');
                    body.push_str(term);
                }
            }
            if tagged {
                let tag = if rng.random::<bool>() { "[S]" } else { "[B]" };
                title = format!("{tag} {title}");
            }

            threads.push(ThreadRecord {
                thread_id: thread_id.clone(),
                subforum: format!("sub{sf}"),
                title,
                creator_id: users[creator].user_id.clone(),
                created_ts: ts,
                views: poisson(&mut rng, 25.0),
            });
            posts.push(PostRecord {
                post_id: post_id.clone(),
                thread_id: thread_id.clone(),
                author_id: users[creator].user_id.clone(),
                ts,
                body,
                reply_to: None,
            });

            // public replies from users of the same subforum
            let pool = &subforum_users[sf];
            let n_replies = poisson(&mut rng, config.replies_per_thread);
            let mut reply_ids: Vec<PostId> = vec![post_id.clone()];
            let mut reply_ts = ts;
            for r in 0..n_replies {
                reply_ts += (rng.random_range(600..21_600) as f64) as i64;
                if reply_ts >= span {
                    break;
                }
                let replier = pool[rng.random_range(0..pool.len())];
                if replier == creator {
                    continue;
                }
                let target = if rng.random::<f64>() < 0.7 {
                    reply_ids[0].clone()
                } else {
                    reply_ids[rng.random_range(0..reply_ids.len())].clone()
                };
                let rp_id = PostId(format!("p{thread_no:06}r{r}"));
                posts.push(PostRecord {
                    post_id: rp_id.clone(),
                    thread_id: thread_id.clone(),
                    author_id: users[replier].user_id.clone(),
                    ts: reply_ts,
                    body: tokens.text(&mut rng, 3, 10),
                    reply_to: Some(target),
                });
                reply_ids.push(rp_id);
            }

            // triggered private messages
            let trigger_prob = (t.base_prob
                + if is_trade { t.term_boost } else { 0.0 }
                + if tagged { t.tag_boost } else { 0.0 })
            .clamp(0.0, 1.0);
            if rng.random::<f64>() < trigger_prob {
                let n_msgs = 1 + poisson(&mut rng, t.extra_msgs_mean);
                for _ in 0..n_msgs {
                    let fast = rng.random::<f64>() < t.mixture.weight_fast;
                    let rate = if fast {
                        t.mixture.rate_fast_per_hour
                    } else {
                        t.mixture.rate_slow_per_hour
                    };
                    let tau_hours = -rng.random::<f64>().ln() / rate;
                    let tau_secs = ((tau_hours * 3_600.0) as i64).max(1);
                    let sender = loop {
                        let cand = pool[rng.random_range(0..pool.len())];
                        if cand != creator || pool.len() == 1 {
                            break cand;
                        }
                    };
                    if sender == creator {
                        continue; // single-member subforum; no valid sender
                    }
                    let msg_id = MsgId(format!("m{next_msg:07}"));
                    next_msg += 1;
                    messages.push(PrivateMessage {
                        msg_id: msg_id.clone(),
                        sender_id: users[sender].user_id.clone(),
                        recipient_id: users[creator].user_id.clone(),
                        // triggered messages may land past the nominal span;
                        // truncating them would bias the delay tail
                        ts: ts + tau_secs,
                        body: tokens.text(&mut rng, 2, 8),
                    });
                    truth.triggered_by.insert(msg_id, Some(post_id.clone()));
                }
            }
        }
    }

    // background messages, post-independent
    for recipient in 0..config.n_users {
        let n = poisson(&mut rng, config.background_pms_per_user_per_day * span_days);
        for _ in 0..n {
            if config.n_users < 2 {
                break;
            }
            let ts = rng.random_range(0..span);
            let sender = loop {
                let cand = rng.random_range(0..config.n_users);
                if cand != recipient {
                    break cand;
                }
            };
            let msg_id = MsgId(format!("m{next_msg:07}"));
            next_msg += 1;
            messages.push(PrivateMessage {
                msg_id: msg_id.clone(),
                sender_id: users[sender].user_id.clone(),
                recipient_id: users[recipient].user_id.clone(),
                ts,
                body: tokens.text(&mut rng, 2, 8),
            });
            truth.triggered_by.insert(msg_id, None);
        }
    }

    let ds = ForumDataset::new(users, threads, posts, messages)?;
    Ok((ds, truth))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::TimeWindow;
    use crate::delay::compute_delays;

    fn small_config(seed: u64) -> SynthConfig {
        SynthConfig {
            n_users: 120,
            span_weeks: 8.0,
            posts_per_user_per_day: 0.05,
            background_pms_per_user_per_day: 0.02,
            seed,
            ..Default::default()
        }
    }

    #[test]
    fn zero_trigger_probability_means_no_triggered_pms() {
        let mut cfg = small_config(1);
        cfg.trigger.base_prob = 0.0;
        cfg.trigger.term_boost = 0.0;
        cfg.trigger.tag_boost = 0.0;
        let (_, truth) = generate(&cfg).unwrap();
        assert_eq!(truth.triggered_count(), 0);
    }

    #[test]
    fn certain_trigger_and_no_background_recovers_planted_delays() {
        let mut cfg = small_config(2);
        cfg.background_pms_per_user_per_day = 0.0;
        cfg.trigger.base_prob = 1.0;
        cfg.trigger.term_boost = 0.0;
        cfg.trigger.tag_boost = 0.0;
        cfg.trigger.extra_msgs_mean = 0.0;
        let (ds, truth) = generate(&cfg).unwrap();
        assert!(truth.triggered_count() > 0);

        // every thread-start post by a user triggered at least one message
        // (modulo single-member subforums, which produce none)
        for (msg, post) in &truth.triggered_by {
            let post = post.as_ref().expect("background disabled");
            let post = ds.post(post).unwrap();
            let msg = ds.messages.iter().find(|m| &m.msg_id == msg).unwrap();
            assert_eq!(msg.recipient_id, post.author_id);
            assert!(msg.ts > post.ts);
        }

        // for single-post creators the computed delays are exactly the
        // planted ones
        let window = TimeWindow::new(0, ds.span.unwrap().1 + 1);
        let delays = compute_delays(&ds, &window);
        let mut single_post_creators: BTreeMap<&UserId, usize> = BTreeMap::new();
        for p in ds.thread_start_posts() {
            *single_post_creators.entry(&p.author_id).or_insert(0) += 1;
        }
        for p in ds.thread_start_posts().filter(|p| single_post_creators[&p.author_id] == 1) {
            let mut expect: Vec<i64> = truth
                .triggered_by
                .iter()
                .filter(|(_, t)| t.as_ref() == Some(&p.post_id))
                .map(|(m, _)| ds.messages.iter().find(|x| &x.msg_id == m).unwrap().ts - p.ts)
                .collect();
            let mut got: Vec<i64> = delays
                .iter()
                .filter(|d| d.post_id == p.post_id)
                .map(|d| d.tau_secs)
                .collect();
            expect.sort_unstable();
            got.sort_unstable();
            assert_eq!(got, expect);
        }
    }

    #[test]
    fn fixed_seed_is_byte_identical() {
        let cfg = small_config(7);
        let (ds1, gt1) = generate(&cfg).unwrap();
        let (ds2, gt2) = generate(&cfg).unwrap();
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        ds1.export(d1.path()).unwrap();
        gt1.export(d1.path()).unwrap();
        ds2.export(d2.path()).unwrap();
        gt2.export(d2.path()).unwrap();
        for name in ["users.jsonl", "threads.jsonl", "posts.jsonl", "pms.jsonl", "groundtruth.jsonl"] {
            let b1 = std::fs::read(d1.path().join(name)).unwrap();
            let b2 = std::fs::read(d2.path().join(name)).unwrap();
            assert_eq!(b1, b2, "{name} differs between identical seeds");
        }
    }

    #[test]
    fn planted_density_shapes() {
        let cfg = small_config(3);
        // trigger prob 0: flat background
        let mut null = cfg.clone();
        null.trigger.base_prob = 0.0;
        null.trigger.term_boost = 0.0;
        null.trigger.tag_boost = 0.0;
        let d0 = planted_density(&null, 0.0);
        let d10 = planted_density(&null, 10.0);
        assert!((d0 - d10).abs() < 1e-12);

        // peak value matches the closed form
        let span_days = cfg.span_weeks * 7.0;
        let posts = cfg.n_users as f64 * cfg.posts_per_user_per_day * span_days;
        let expect_peak = posts
            * (cfg.mean_trigger_prob()
                * (1.0 + cfg.trigger.extra_msgs_mean)
                * cfg.trigger.mixture.density(0.0)
                + cfg.background_pms_per_user_per_day / 24.0);
        assert!((planted_density(&cfg, 0.0) - expect_peak).abs() < 1e-9);

        // pure fast mixture decays like a single exponential
        let mut pure = cfg;
        pure.trigger.mixture.weight_fast = 1.0;
        let m = pure.trigger.mixture;
        let ratio = m.density(1.0) / m.density(0.0);
        assert!((ratio - (-m.rate_fast_per_hour).exp()).abs() < 1e-12);
    }

    #[test]
    fn triggered_delay_histogram_matches_planted_mixture() {
        // >= 50k triggered messages, no background; per-bin counts stay
        // within 3-sigma Poisson bands of the planted mass
        let mut cfg = SynthConfig {
            n_users: 4000,
            span_weeks: 20.0,
            posts_per_user_per_day: 0.06,
            background_pms_per_user_per_day: 0.0,
            ..Default::default()
        };
        cfg.trigger.base_prob = 1.0;
        cfg.trigger.term_boost = 0.0;
        cfg.trigger.tag_boost = 0.0;
        cfg.trigger.extra_msgs_mean = 1.0;
        cfg.seed = 99;
        let (ds, truth) = generate(&cfg).unwrap();
        let n = truth.triggered_count();
        assert!(n >= 50_000, "only {n} triggered messages");

        let post_ts: BTreeMap<&PostId, i64> =
            ds.thread_start_posts().map(|p| (&p.post_id, p.ts)).collect();
        let msg_ts: BTreeMap<&MsgId, i64> = ds.messages.iter().map(|m| (&m.msg_id, m.ts)).collect();
        let taus: Vec<f64> = truth
            .triggered_by
            .iter()
            .filter_map(|(m, p)| p.as_ref().map(|p| (msg_ts[m] - post_ts[p]) as f64 / 3_600.0))
            .collect();

        let edges: Vec<f64> = (0..=30).map(|i| i as f64 * 0.5).collect(); // 0..15h
        let mut counts = vec![0usize; edges.len() - 1];
        for &tau in &taus {
            if tau > 0.0 && tau <= *edges.last().unwrap() {
                let j = edges.partition_point(|&e| e < tau);
                counts[j - 1] += 1;
            }
        }
        for (i, &c) in counts.iter().enumerate() {
            // delays are quantized to whole seconds with a 1s floor; the
            // half-open bin mass uses the continuous mixture, close enough
            // at 1800s bins
            let expect = n as f64 * cfg.trigger.mixture.mass(edges[i], edges[i + 1]);
            let sigma = expect.sqrt().max(1.0);
            assert!(
                (c as f64 - expect).abs() <= 3.0 * sigma,
                "bin {i}: count {c}, expected {expect:.1} +- {sigma:.1}"
            );
        }
    }

    #[test]
    fn degenerate_configs_error() {
        let cfg = SynthConfig { n_users: 0, ..Default::default() };
        assert!(matches!(generate(&cfg), Err(SynthError::DegenerateConfig(_))));
    }
}
