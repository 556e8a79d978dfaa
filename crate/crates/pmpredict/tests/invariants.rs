//! Property tests for cross-cutting invariants.

use proptest::prelude::*;

use pmpredict::data::{ForumDataset, PostRecord, ThreadRecord, TimeWindow, UserRecord};
use pmpredict::delay::{BinMethod, DelayModel, FitMeta};
use pmpredict::label::filter_isolated_posts;
use pmpredict::matrix::{FeatureMatrix, SparseVec};
use pmpredict::metrics::roc;

fn model(a1: f64, b1: f64, a2: f64, b2: f64) -> DelayModel {
    DelayModel {
        a1,
        b1,
        a2,
        b2,
        c: 0.1,
        tau_max_hours: 24.0,
        r_squared: 1.0,
        method: BinMethod::Balanced { avg_per_bin: 5.0 },
        fit: FitMeta { iterations: 1, converged: true, best_start: 0 },
    }
}

proptest! {
    /// f is positive and strictly decreasing whenever a1 + a2 > 0.
    #[test]
    fn delay_density_decreases(
        a1 in 0.01f64..100.0,
        b1 in 0.5f64..10.0,
        a2 in 0.0f64..10.0,
        b2 in 0.001f64..0.4,
        taus in proptest::collection::vec(0.0f64..200.0, 2..20),
    ) {
        let m = model(a1, b1, a2, b2);
        let mut sorted = taus.clone();
        sorted.sort_by(|x, y| x.partial_cmp(y).unwrap());
        sorted.dedup();
        let values: Vec<f64> = sorted.iter().map(|&t| m.evaluate(t)).collect();
        for v in &values {
            prop_assert!(*v > 0.0);
        }
        for pair in values.windows(2) {
            prop_assert!(pair[1] < pair[0]);
        }
    }

    /// AUC equals brute-force pairwise concordance on arbitrary inputs.
    #[test]
    fn auc_matches_concordance(
        scores in proptest::collection::vec(0u8..8, 4..200),
        flips in proptest::collection::vec(any::<bool>(), 4..200),
    ) {
        let n = scores.len().min(flips.len());
        let scores: Vec<f64> = scores[..n].iter().map(|&s| s as f64 / 7.0).collect();
        let mut labels: Vec<bool> = flips[..n].to_vec();
        labels[0] = true;
        labels[n - 1] = false;

        let mut num_x2: u128 = 0;
        let (mut pos, mut neg) = (0u64, 0u64);
        for i in 0..n {
            if !labels[i] { neg += 1; continue; }
            pos += 1;
            for j in 0..n {
                if labels[j] { continue; }
                if scores[i] > scores[j] { num_x2 += 2; }
                else if scores[i] == scores[j] { num_x2 += 1; }
            }
        }
        let brute = num_x2 as f64 / (2.0 * pos as f64 * neg as f64);
        let curve = roc(&scores, &labels).unwrap();
        prop_assert_eq!(curve.auc, brute);
    }

    /// Slicing twice equals slicing by the window intersection.
    #[test]
    fn nested_slices_compose(
        starts in proptest::collection::vec(0i64..5_000, 1..40),
        w1_start in 0i64..4_000, w1_len in 1i64..3_000,
        w2_start in 0i64..4_000, w2_len in 1i64..3_000,
    ) {
        let users = vec![UserRecord {
            user_id: "u".into(), username: "u".into(), join_ts: -1, reputation: 0,
        }];
        let mut threads = Vec::new();
        let mut posts = Vec::new();
        for (i, &ts) in starts.iter().enumerate() {
            threads.push(ThreadRecord {
                thread_id: format!("t{i}").as_str().into(),
                subforum: "s".into(), title: String::new(),
                creator_id: "u".into(), created_ts: ts, views: 0,
            });
            posts.push(PostRecord {
                post_id: format!("p{i}").as_str().into(),
                thread_id: format!("t{i}").as_str().into(),
                author_id: "u".into(), ts, body: String::new(), reply_to: None,
            });
        }
        let ds = ForumDataset::new(users, threads, posts, vec![]).unwrap();
        let w1 = TimeWindow::new(w1_start, w1_len);
        let w2 = TimeWindow::new(w2_start, w2_len);
        let nested = ds.slice(&w1).slice(&w2);
        match w1.intersect(&w2) {
            Some(both) => {
                let direct = ds.slice(&both);
                prop_assert_eq!(nested.posts, direct.posts);
                prop_assert_eq!(nested.threads, direct.threads);
            }
            None => prop_assert!(nested.is_empty()),
        }
    }

    /// Survivors of the isolation filter really are isolated, and removed
    /// posts really do have a close neighbor.
    #[test]
    fn isolation_filter_is_exact(
        ts in proptest::collection::vec(0i64..2_000_000, 1..60),
        authors in proptest::collection::vec(0u8..5, 1..60),
        gap in 1i64..100_000,
    ) {
        let n = ts.len().min(authors.len());
        let posts: Vec<PostRecord> = (0..n)
            .map(|i| PostRecord {
                post_id: format!("p{i}").as_str().into(),
                thread_id: format!("t{i}").as_str().into(),
                author_id: format!("u{}", authors[i]).as_str().into(),
                ts: ts[i],
                body: String::new(),
                reply_to: None,
            })
            .collect();
        let refs: Vec<&PostRecord> = posts.iter().collect();
        let kept = filter_isolated_posts(&refs, gap);
        for i in 0..n {
            let has_neighbor = (0..n).any(|j| {
                j != i && posts[j].author_id == posts[i].author_id
                    && (posts[j].ts - posts[i].ts).abs() <= gap
            });
            prop_assert_eq!(kept.contains(&i), !has_neighbor);
        }
    }

    /// Sparse vectors agree with their dense source, and matrix columns
    /// agree with rows.
    #[test]
    fn sparse_matrix_views_agree(
        rows in proptest::collection::vec(
            proptest::collection::vec(-3i8..4, 5),
            1..20,
        ),
    ) {
        let dense: Vec<Vec<f64>> =
            rows.iter().map(|r| r.iter().map(|&v| v as f64).collect()).collect();
        let m = FeatureMatrix::from_dense(dense.clone());
        for (r, row) in dense.iter().enumerate() {
            for (c, &v) in row.iter().enumerate() {
                prop_assert_eq!(m.rows[r].get(c as u32), v);
            }
        }
        let cols = m.to_columns();
        for (c, col) in cols.iter().enumerate() {
            for &(r, v) in col {
                prop_assert_eq!(dense[r as usize][c], v);
                prop_assert!(v != 0.0);
            }
        }
        let _ = SparseVec::from_dense(&dense[0]);
    }
}
