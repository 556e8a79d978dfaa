//! Automated post labeling.
//!
//! Leaks carry no ground truth linking private messages to public posts, so
//! training labels are synthesized: each thread-starting post gets the
//! aggregated likelihood `L = sum f(tau_x)` over every private message its
//! creator received after the post, where `f` is the fitted delay density.
//! A threshold `theta` turns the weight into a binary label (`L > theta`;
//! ties label negative). `theta = 0` reduces to "the creator ever receives
//! a message after posting"; large `theta` needs messages close to the post.
//!
//! Two pre-processing filters clean the post set first: posts by the same
//! user within 12 hours of each other are discarded pairwise (attribution
//! would be ambiguous), and training posts within 24 hours of the leak end
//! are dropped (their replies would mostly fall outside the leak and
//! mislabel them negative).

use std::collections::HashMap;
use std::io::Write;

use serde::Serialize;

use crate::data::{ForumDataset, PostId, PostRecord, TimeWindow, UserId};
use crate::delay::DelayModel;
use crate::graph::csv_field;

pub const DEFAULT_ISOLATION_GAP_SECS: i64 = 12 * 3_600;
pub const DEFAULT_TAIL_MARGIN_SECS: i64 = 24 * 3_600;

/// A post with its aggregated likelihood under a threshold.
#[derive(Debug, Clone, Serialize)]
pub struct LabeledPost {
    pub post_id: PostId,
    pub creator_id: UserId,
    pub post_ts: i64,
    pub likelihood: f64,
    pub label: bool,
    pub theta: f64,
}

/// Keep only posts that are "isolated": no other post by the same user
/// within `gap` seconds (boundary inclusive — a pair exactly `gap` apart is
/// still discarded, both members).
pub fn filter_isolated_posts(posts: &[&PostRecord], gap_secs: i64) -> Vec<usize> {
    let mut by_user: HashMap<&UserId, Vec<usize>> = HashMap::new();
    for (i, p) in posts.iter().enumerate() {
        by_user.entry(&p.author_id).or_default().push(i);
    }
    let mut keep = vec![true; posts.len()];
    for idxs in by_user.values_mut() {
        idxs.sort_by_key(|&i| posts[i].ts);
        for w in idxs.windows(2) {
            let (a, b) = (w[0], w[1]);
            if posts[b].ts - posts[a].ts <= gap_secs {
                keep[a] = false;
                keep[b] = false;
            }
        }
    }
    (0..posts.len()).filter(|&i| keep[i]).collect()
}

/// Drop posts published within `margin` seconds of the leak end (training
/// only). A post exactly at `leak_end - margin` is kept.
pub fn filter_leak_tail(posts: &[&PostRecord], leak_window: &TimeWindow, margin_secs: i64) -> Vec<usize> {
    let cutoff = leak_window.end() - margin_secs;
    (0..posts.len()).filter(|&i| posts[i].ts <= cutoff).collect()
}

/// Aggregated likelihood of a post: `sum f(tau)` over all message
/// timestamps strictly after the post. `f` is not truncated at the model's
/// `tau_max` — any future message may relate to the post.
pub fn aggregated_likelihood<I>(post_ts: i64, message_ts: I, model: &DelayModel) -> f64
where
    I: IntoIterator<Item = i64>,
{
    let mut sum = 0.0;
    for ts in message_ts {
        if ts > post_ts {
            sum += model.evaluate((ts - post_ts) as f64 / 3_600.0);
        }
    }
    sum
}

#[derive(Debug, Clone, Serialize)]
pub struct LabelingResult {
    pub posts: Vec<LabeledPost>,
    pub positive_fraction: f64,
}

impl LabelingResult {
    pub fn positives(&self) -> usize {
        self.posts.iter().filter(|p| p.label).count()
    }

    /// CSV export: `post_id,creator_id,post_ts,likelihood,label,theta`.
    /// Likelihoods span hundreds of orders of magnitude (f is never
    /// truncated), so they are written in scientific notation.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "post_id,creator_id,post_ts,likelihood,label,theta")?;
        for p in &self.posts {
            writeln!(
                w,
                "{},{},{},{:e},{},{:e}",
                csv_field(p.post_id.as_str()),
                csv_field(p.creator_id.as_str()),
                p.post_ts,
                p.likelihood,
                p.label as u8,
                p.theta
            )?;
        }
        Ok(())
    }
}

/// Label posts by thresholding the aggregated likelihood at `theta`
/// (strictly greater). Messages considered are every private message to the
/// post creator present in `ds` — callers pass the leak slice for training
/// or the target slice for evaluation ground truth.
pub fn label_posts(
    posts: &[&PostRecord],
    ds: &ForumDataset,
    model: &DelayModel,
    theta: f64,
) -> LabelingResult {
    let labeled: Vec<LabeledPost> = posts
        .iter()
        .map(|p| {
            let likelihood = aggregated_likelihood(
                p.ts,
                ds.messages_to(&p.author_id).map(|m| m.ts),
                model,
            );
            LabeledPost {
                post_id: p.post_id.clone(),
                creator_id: p.author_id.clone(),
                post_ts: p.ts,
                likelihood,
                label: likelihood > theta,
                theta,
            }
        })
        .collect();
    let positives = labeled.iter().filter(|p| p.label).count();
    let positive_fraction =
        if labeled.is_empty() { 0.0 } else { positives as f64 / labeled.len() as f64 };
    LabelingResult { posts: labeled, positive_fraction }
}

/// Resolve a quantile threshold against observed likelihood weights: a
/// quantile `q` labels (approximately, up to ties) the top `q` fraction of
/// weights positive. Returns the absolute theta to threshold at.
pub fn theta_from_quantile(weights: &[f64], q: f64) -> f64 {
    assert!((0.0..=1.0).contains(&q), "quantile must be in [0, 1]");
    if weights.is_empty() {
        return 0.0;
    }
    let mut sorted: Vec<f64> = weights.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let rank = ((1.0 - q) * sorted.len() as f64).floor() as usize;
    if rank == 0 {
        // everything positive requested; any weight above -inf qualifies,
        // but theta must stay >= 0 so zero-weight posts remain negative
        return 0.0;
    }
    sorted[rank.min(sorted.len()) - 1]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{ForumDataset, PrivateMessage, ThreadRecord, UserRecord};
    use crate::delay::{BinMethod, DelayModel, FitMeta};

    fn model(a1: f64, b1: f64, a2: f64, b2: f64) -> DelayModel {
        DelayModel {
            a1,
            b1,
            a2,
            b2,
            c: 0.25,
            tau_max_hours: 15.0,
            r_squared: 0.9,
            method: BinMethod::Balanced { avg_per_bin: 4.0 },
            fit: FitMeta { iterations: 1, converged: true, best_start: 0 },
        }
    }

    fn post(id: &str, author: &str, ts: i64) -> PostRecord {
        PostRecord {
            post_id: id.into(),
            thread_id: format!("t-{id}").as_str().into(),
            author_id: author.into(),
            ts,
            body: String::new(),
            reply_to: None,
        }
    }

    const H: i64 = 3_600;

    fn kept_ids(posts: &[PostRecord], kept: &[usize]) -> Vec<String> {
        kept.iter().map(|&i| posts[i].post_id.0.clone()).collect()
    }

    #[test]
    fn isolation_filter_boundaries() {
        // 10h apart: both removed. 13h apart: both kept.
        let close = [post("a", "u1", 0), post("b", "u1", 10 * H)];
        let refs: Vec<&PostRecord> = close.iter().collect();
        assert!(filter_isolated_posts(&refs, 12 * H).is_empty());

        let far = vec![post("a", "u1", 0), post("b", "u1", 13 * H)];
        let refs: Vec<&PostRecord> = far.iter().collect();
        assert_eq!(kept_ids(&far, &filter_isolated_posts(&refs, 12 * H)), vec!["a", "b"]);
    }

    #[test]
    fn isolation_filter_removes_chains_pairwise() {
        // 0 <-> 11h and 11h <-> 22h both violate; all three go.
        let posts = [post("a", "u1", 0), post("b", "u1", 11 * H), post("c", "u1", 22 * H)];
        let refs: Vec<&PostRecord> = posts.iter().collect();
        assert!(filter_isolated_posts(&refs, 12 * H).is_empty());
    }

    #[test]
    fn isolation_filter_is_per_user() {
        let posts = [post("a", "u1", 0), post("b", "u2", H)];
        let refs: Vec<&PostRecord> = posts.iter().collect();
        assert_eq!(filter_isolated_posts(&refs, 12 * H).len(), 2);
    }

    #[test]
    fn tail_filter_boundaries() {
        let window = TimeWindow::new(0, 100 * H);
        let posts = vec![
            post("late", "u1", 90 * H),  // 10h before end: dropped
            post("early", "u1", 75 * H), // 25h before end: kept
            post("edge", "u2", 76 * H),  // exactly 24h before end: kept
        ];
        let refs: Vec<&PostRecord> = posts.iter().collect();
        let kept = kept_ids(&posts, &filter_leak_tail(&refs, &window, 24 * H));
        assert_eq!(kept, vec!["late", "early", "edge"].into_iter().filter(|s| *s != "late").collect::<Vec<_>>());

        let empty: Vec<&PostRecord> = Vec::new();
        assert!(filter_leak_tail(&empty, &window, 24 * H).is_empty());
    }

    #[test]
    fn likelihood_sums_f_over_later_messages() {
        let m = model(2.0, 1.0, 0.5, 0.1);
        // one message at the post instant (excluded: not strictly later) and
        // one an hour later
        let got = aggregated_likelihood(1000, [1000, 1000 + H], &m);
        let expect = 2.0 * (-1.0f64).exp() + 0.5 * (-0.1f64).exp();
        assert!((got - expect).abs() < 1e-12);

        assert_eq!(aggregated_likelihood(1000, [], &m), 0.0);
        assert_eq!(aggregated_likelihood(1000, [900], &m), 0.0);
    }

    #[test]
    fn likelihood_is_additive_over_message_splits() {
        let m = model(2.0, 1.0, 0.5, 0.1);
        let all: Vec<i64> = (1..=40).map(|i| i * 977).collect();
        let whole = aggregated_likelihood(0, all.iter().copied(), &m);
        let (left, right) = all.split_at(17);
        let split = aggregated_likelihood(0, left.iter().copied(), &m)
            + aggregated_likelihood(0, right.iter().copied(), &m);
        assert!((whole - split).abs() <= 1e-9 * whole.abs());
    }

    #[test]
    fn closer_messages_dominate() {
        let m = model(2.0, 1.0, 0.5, 0.1);
        let far = aggregated_likelihood(0, [10 * H], &m);
        let near = aggregated_likelihood(0, [2 * H], &m);
        assert!(near > far);
    }

    fn labeled_fixture(msg_offsets: &[(i64, &str)]) -> (ForumDataset, Vec<PostRecord>) {
        let users = vec![
            UserRecord { user_id: "u1".into(), username: "a".into(), join_ts: -10, reputation: 0 },
            UserRecord { user_id: "u2".into(), username: "b".into(), join_ts: -10, reputation: 0 },
            UserRecord { user_id: "u3".into(), username: "c".into(), join_ts: -10, reputation: 0 },
        ];
        let threads = vec![
            ThreadRecord { thread_id: "t-p1".into(), subforum: "s".into(), title: "x".into(), creator_id: "u1".into(), created_ts: 0, views: 0 },
            ThreadRecord { thread_id: "t-p2".into(), subforum: "s".into(), title: "x".into(), creator_id: "u3".into(), created_ts: 0, views: 0 },
        ];
        let posts = vec![post("p1", "u1", 0), post("p2", "u3", 0)];
        let messages = msg_offsets
            .iter()
            .enumerate()
            .map(|(i, &(ts, to))| PrivateMessage {
                msg_id: format!("m{i}").as_str().into(),
                sender_id: "u2".into(),
                recipient_id: to.into(),
                ts,
                body: String::new(),
            })
            .collect();
        let ds = ForumDataset::new(users, threads, posts.clone(), messages).unwrap();
        (ds, posts)
    }

    #[test]
    fn theta_zero_means_ever_receives_after_post() {
        let (ds, posts) = labeled_fixture(&[(5 * H, "u1")]);
        let refs: Vec<&PostRecord> = posts.iter().collect();
        let m = model(2.0, 1.0, 0.5, 0.1);
        let res = label_posts(&refs, &ds, &m, 0.0);
        let by_id: HashMap<&str, bool> =
            res.posts.iter().map(|p| (p.post_id.as_str(), p.label)).collect();
        assert!(by_id["p1"]); // u1 got a message after posting
        assert!(!by_id["p2"]); // u3 got none
        assert!((res.positive_fraction - 0.5).abs() < 1e-12);
    }

    #[test]
    fn huge_theta_labels_everything_negative() {
        let (ds, posts) = labeled_fixture(&[(H, "u1"), (2 * H, "u3")]);
        let refs: Vec<&PostRecord> = posts.iter().collect();
        let m = model(2.0, 1.0, 0.5, 0.1);
        let res = label_posts(&refs, &ds, &m, 1e9);
        assert_eq!(res.positives(), 0);
    }

    #[test]
    fn theta_is_strict_ties_label_negative() {
        let (ds, posts) = labeled_fixture(&[(H, "u1")]);
        let refs: Vec<&PostRecord> = posts.iter().collect();
        let m = model(2.0, 1.0, 0.5, 0.1);
        let weight = label_posts(&refs, &ds, &m, 0.0).posts[0].likelihood;
        let res = label_posts(&refs, &ds, &m, weight);
        assert!(!res.posts[0].label);
    }

    #[test]
    fn positive_sets_shrink_with_theta() {
        let (ds, posts) = labeled_fixture(&[(H, "u1"), (30 * H, "u3")]);
        let refs: Vec<&PostRecord> = posts.iter().collect();
        let m = model(2.0, 1.0, 0.5, 0.1);
        let thetas = [0.0, 0.1, 0.5, 1.0, 3.0];
        let mut prev: Option<Vec<String>> = None;
        for &t in &thetas {
            let pos: Vec<String> = label_posts(&refs, &ds, &m, t)
                .posts
                .iter()
                .filter(|p| p.label)
                .map(|p| p.post_id.to_string())
                .collect();
            if let Some(prev) = &prev {
                assert!(pos.iter().all(|p| prev.contains(p)), "positives grew with theta");
            }
            prev = Some(pos);
        }
    }

    #[test]
    fn quantile_theta_selects_top_weights() {
        let weights = vec![0.0, 0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0];
        // top 30% of 10 weights -> 3 positives -> theta at the 7th value
        let theta = theta_from_quantile(&weights, 0.3);
        assert_eq!(theta, 5.0);
        assert_eq!(weights.iter().filter(|&&w| w > theta).count(), 3);
        // q = 1 keeps zero-weight posts negative
        assert_eq!(theta_from_quantile(&weights, 1.0), 0.0);
    }
}
