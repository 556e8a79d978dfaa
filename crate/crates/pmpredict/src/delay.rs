//! Post-to-message delay model.
//!
//! For every thread-starting post by a user and every private message that
//! user later receives, the delay `tau = t_message - t_post` is collected.
//! The density of delays (messages per hour) shows a steep spike right
//! after publication plus a slow decay and a constant background flow; it is
//! modeled as
//!
//! ```text
//! g(x) = a1 * exp(-b1 * x) + a2 * exp(-b2 * x) + c      (x in hours)
//! ```
//!
//! fitted to histogram bin densities by damped Gauss-Newton
//! (Levenberg-Marquardt) over a multi-start grid, with parameters
//! log-transformed to enforce positivity. The post-related part
//! `f(x) = g(x) - c` is what the labeler evaluates; it is never truncated at
//! `tau_max` — any later message could still relate to the post, just with
//! vanishing weight.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{ForumDataset, PostId, TimeWindow, UserId};

const SECS_PER_HOUR_F: f64 = 3_600.0;

/// One observed post-to-message delay; strictly positive.
#[derive(Debug, Clone, PartialEq)]
pub struct DelaySample {
    pub post_id: PostId,
    pub recipient_id: UserId,
    pub tau_secs: i64,
}

#[derive(Debug, Error)]
pub enum DelayError {
    #[error("no delay samples within tau_max")]
    NoSamples,
    #[error("not enough non-empty histogram bins for a fit (got {got}, need {need})")]
    InsufficientBins { got: usize, need: usize },
    #[error("tau_max candidate list is empty")]
    NoCandidates,
    #[error("invalid bin specification: {0}")]
    BadBinSpec(String),
}

/// Delays between thread-starting posts and private messages to the post
/// creator inside `window`. A message may pair with several earlier posts
/// by the same creator; downstream isolation filtering removes the
/// ambiguity. Non-positive delays are disregarded.
pub fn compute_delays(ds: &ForumDataset, window: &TimeWindow) -> Vec<DelaySample> {
    let mut out = Vec::new();
    for post in ds.thread_start_posts() {
        if !window.contains(post.ts) {
            continue;
        }
        for msg in ds.messages_to(&post.author_id) {
            if window.contains(msg.ts) && msg.ts > post.ts {
                out.push(DelaySample {
                    post_id: post.post_id.clone(),
                    recipient_id: post.author_id.clone(),
                    tau_secs: msg.ts - post.ts,
                });
            }
        }
    }
    out
}

/// Histogram binning method.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BinMethod {
    /// Fixed bin width regardless of sample count.
    Naive { bin_width_secs: f64 },
    /// Bin count chosen so each bin holds `avg_per_bin` samples on average.
    Balanced { avg_per_bin: f64 },
}

/// Delay histogram over `(0, tau_max]` seconds.
#[derive(Debug, Clone, Serialize)]
pub struct DelayHistogram {
    /// Bin edges in seconds, strictly increasing, starting at 0.
    pub edges_secs: Vec<f64>,
    pub counts: Vec<u64>,
    /// Per-bin density in messages/hour: `count / (width in hours)`.
    pub densities: Vec<f64>,
    pub method: BinMethod,
    /// Set when `avg_per_bin` exceeded the sample count and a single bin
    /// was produced instead.
    pub underfilled: bool,
}

impl DelayHistogram {
    pub fn bin_count(&self) -> usize {
        self.counts.len()
    }

    /// Bin centers in hours, the x-coordinates used for fitting.
    pub fn centers_hours(&self) -> Vec<f64> {
        self.edges_secs
            .windows(2)
            .map(|e| (e[0] + e[1]) / 2.0 / SECS_PER_HOUR_F)
            .collect()
    }

    pub fn peak_density(&self) -> f64 {
        self.densities.iter().cloned().fold(0.0, f64::max)
    }

    /// CSV export: `bin_start,bin_end,count,density` (seconds, msgs/hour).
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "bin_start,bin_end,count,density")?;
        for i in 0..self.counts.len() {
            writeln!(
                w,
                "{},{},{},{}",
                self.edges_secs[i],
                self.edges_secs[i + 1],
                self.counts[i],
                self.densities[i]
            )?;
        }
        Ok(())
    }
}

/// Bin delay samples over `(0, tau_max_secs]`. Samples beyond `tau_max`
/// are excluded from the histogram (but not from the model's support).
pub fn histogram(
    samples: &[DelaySample],
    method: BinMethod,
    tau_max_secs: f64,
) -> Result<DelayHistogram, DelayError> {
    if !tau_max_secs.is_finite() || tau_max_secs <= 0.0 {
        return Err(DelayError::BadBinSpec(format!("tau_max must be positive, got {tau_max_secs}")));
    }
    let in_range =
        samples.iter().filter(|s| (s.tau_secs as f64) <= tau_max_secs).count();

    let mut underfilled = false;
    let n_bins = match method {
        BinMethod::Naive { bin_width_secs } => {
            if !bin_width_secs.is_finite() || bin_width_secs <= 0.0 {
                return Err(DelayError::BadBinSpec("bin width must be positive".into()));
            }
            (tau_max_secs / bin_width_secs).ceil().max(1.0) as usize
        }
        BinMethod::Balanced { avg_per_bin } => {
            if !avg_per_bin.is_finite() || avg_per_bin <= 0.0 {
                return Err(DelayError::BadBinSpec("avg_per_bin must be positive".into()));
            }
            if in_range == 0 {
                return Err(DelayError::NoSamples);
            }
            if avg_per_bin > in_range as f64 {
                underfilled = true;
                1
            } else {
                (in_range as f64 / avg_per_bin).ceil() as usize
            }
        }
    };

    let mut edges = Vec::with_capacity(n_bins + 1);
    match method {
        BinMethod::Naive { bin_width_secs } => {
            for i in 0..=n_bins {
                edges.push((i as f64 * bin_width_secs).min(tau_max_secs));
            }
        }
        BinMethod::Balanced { .. } => {
            for i in 0..=n_bins {
                edges.push(i as f64 / n_bins as f64 * tau_max_secs);
            }
        }
    }
    *edges.last_mut().unwrap() = tau_max_secs;

    let mut counts = vec![0u64; n_bins];
    for s in samples {
        let tau = s.tau_secs as f64;
        if tau <= 0.0 || tau > tau_max_secs {
            continue;
        }
        // (lo, hi] bins: first edge >= tau closes the bin.
        let j = edges.partition_point(|&e| e < tau);
        counts[j - 1] += 1;
    }
    let densities = counts
        .iter()
        .enumerate()
        .map(|(i, &c)| c as f64 / ((edges[i + 1] - edges[i]) / SECS_PER_HOUR_F))
        .collect();
    Ok(DelayHistogram { edges_secs: edges, counts, densities, method, underfilled })
}

/// Fitted two-exponential-plus-constant delay model.
///
/// Densities (`a1`, `a2`, `c`) are in messages/hour, rates (`b1`, `b2`) in
/// 1/hour, with `b1 > b2` (fast component first).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DelayModel {
    pub a1: f64,
    pub b1: f64,
    pub a2: f64,
    pub b2: f64,
    pub c: f64,
    pub tau_max_hours: f64,
    pub r_squared: f64,
    pub method: BinMethod,
    pub fit: FitMeta,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitMeta {
    pub iterations: usize,
    pub converged: bool,
    /// Index of the winning start in the multi-start grid; ties go to the
    /// lowest index, keeping fits deterministic.
    pub best_start: usize,
}

impl DelayModel {
    /// The post-related density `f(tau) = a1*exp(-b1*tau) + a2*exp(-b2*tau)`;
    /// the background constant `c` is excluded. `tau_hours` must be >= 0.
    pub fn evaluate(&self, tau_hours: f64) -> f64 {
        assert!(tau_hours >= 0.0, "negative tau has no post-related density");
        self.a1 * (-self.b1 * tau_hours).exp() + self.a2 * (-self.b2 * tau_hours).exp()
    }

    /// The full fitted curve `f(tau) + c`.
    pub fn evaluate_with_background(&self, tau_hours: f64) -> f64 {
        self.evaluate(tau_hours) + self.c
    }
}

const MIN_FIT_BINS: usize = 6;
const LM_MAX_ITERS: usize = 300;
const START_B1: [f64; 3] = [0.5, 2.0, 8.0];
const START_B2: [f64; 3] = [0.01, 0.05, 0.2];

/// Least-squares fit of `g(x) = a1*exp(-b1*x) + a2*exp(-b2*x) + c` to bin
/// center/density pairs. Empty bins hold no interpolation signal (they are
/// exactly what the balanced binning exists to avoid) and are excluded —
/// which is also why the precondition counts non-empty bins.
///
/// Runs Levenberg-Marquardt from a 3x3 grid of rate starts (the amplitude
/// starts come from the first-bin and mid-range densities, the background
/// from the median of the last 10% of bins); the start with the lowest
/// residual sum wins, and among numerically tied starts the one with the
/// least slow-component mass — near-ties are noise splits of one component,
/// and preferring the parsimonious form keeps refits comparable.
/// Parameters are optimized in log space, which keeps them positive. If no
/// start converges the best-so-far coefficients are returned with
/// `fit.converged == false`.
pub fn fit(hist: &DelayHistogram) -> Result<DelayModel, DelayError> {
    let centers = hist.centers_hours();
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (i, &c) in hist.counts.iter().enumerate() {
        if c > 0 {
            xs.push(centers[i]);
            ys.push(hist.densities[i]);
        }
    }
    if xs.len() < MIN_FIT_BINS {
        return Err(DelayError::InsufficientBins { got: xs.len(), need: MIN_FIT_BINS });
    }
    let ys = &ys[..];
    let peak = hist.peak_density();
    let floor = peak * 1e-12;

    // amplitude starts
    let tail_start = (ys.len() * 9) / 10;
    let mut tail: Vec<f64> = ys[tail_start.min(ys.len() - 1)..].to_vec();
    tail.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let c0 = tail[tail.len() / 2].max(floor);
    let a1_0 = (ys[0] - c0).max(peak * 1e-3).max(floor);
    let mid = ys[ys.len() / 3];
    let a2_0 = (mid - c0).max(peak * 1e-4).max(floor);

    let mean = ys.iter().sum::<f64>() / ys.len() as f64;
    let ss_tot: f64 = ys.iter().map(|y| (y - mean) * (y - mean)).sum();
    let tie_eps = ss_tot.max(f64::MIN_POSITIVE) * 1e-9;

    let mut best: Option<(f64, [f64; 5], usize, usize, bool)> = None;
    let starts: Vec<[f64; 5]> = START_B1
        .iter()
        .flat_map(|&b1| START_B2.iter().map(move |&b2| [a1_0, b1, a2_0, b2, c0]))
        .collect();

    for (idx, start) in starts.iter().enumerate() {
        let log_start: [f64; 5] = std::array::from_fn(|i| start[i].ln());
        let (log_params, ss, iters, converged) = levenberg_marquardt(&xs, ys, log_start);
        let params: [f64; 5] = std::array::from_fn(|i| log_params[i].exp());
        let slow_amplitude = |p: &[f64; 5]| if p[1] >= p[3] { p[2] } else { p[0] };
        let better = match &best {
            None => true,
            Some((best_ss, best_params, ..)) => {
                ss < best_ss - tie_eps
                    || ((ss - best_ss).abs() <= tie_eps
                        && slow_amplitude(&params) < slow_amplitude(best_params))
            }
        };
        if better {
            best = Some((ss, params, idx, iters, converged));
        }
    }
    let (_, params, best_start, iterations, converged) = best.unwrap();
    let [mut a1, mut b1, mut a2, mut b2, c] = params;
    if b2 > b1 {
        std::mem::swap(&mut a1, &mut a2);
        std::mem::swap(&mut b1, &mut b2);
    }
    // When both rates coincide the amplitude split between the components
    // is arbitrary; collapse to the canonical single-component form. The
    // vanished component's rate is pinned below b1 to keep b1 > b2.
    if (b1 - b2) / b1 < 1e-3 {
        a1 += a2;
        a2 = 0.0;
        b2 = b1 / 2.0;
    }
    if a2 < a1 * 1e-9 {
        a2 = 0.0;
    }

    let final_params = [a1, b1, a2, b2, c];
    let ss_res = sum_squares(&xs, ys, &final_params);
    let r_squared = if ss_tot > 0.0 {
        1.0 - ss_res / ss_tot
    } else if ss_res <= f64::EPSILON {
        1.0
    } else {
        0.0
    };

    Ok(DelayModel {
        a1,
        b1,
        a2,
        b2,
        c,
        tau_max_hours: *hist.edges_secs.last().unwrap() / SECS_PER_HOUR_F,
        r_squared,
        method: hist.method,
        fit: FitMeta { iterations, converged, best_start },
    })
}

fn model_value(x: f64, p: &[f64; 5]) -> f64 {
    let [a1, b1, a2, b2, c] = *p;
    a1 * (-b1 * x).exp() + a2 * (-b2 * x).exp() + c
}

fn sum_squares(xs: &[f64], ys: &[f64], p: &[f64; 5]) -> f64 {
    xs.iter().zip(ys).map(|(&x, &y)| {
        let r = y - model_value(x, p);
        r * r
    }).sum()
}

/// LM in log-parameter space. Returns (log params, ss_res, iters, converged).
#[allow(clippy::needless_range_loop)] // dense 5x5 kernels read best with indices
fn levenberg_marquardt(xs: &[f64], ys: &[f64], mut lp: [f64; 5]) -> ([f64; 5], f64, usize, bool) {
    let to_params = |lp: &[f64; 5]| -> [f64; 5] { std::array::from_fn(|i| lp[i].exp()) };
    let mut ss = sum_squares(xs, ys, &to_params(&lp));
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut iters = 0;

    for _ in 0..LM_MAX_ITERS {
        iters += 1;
        let p = to_params(&lp);
        // Normal equations J^T J and J^T r with J = dg/d(log theta).
        let mut jtj = [[0.0f64; 5]; 5];
        let mut jtr = [0.0f64; 5];
        for (&x, &y) in xs.iter().zip(ys) {
            let e1 = (-p[1] * x).exp();
            let e2 = (-p[3] * x).exp();
            let row = [
                p[0] * e1,
                -p[0] * p[1] * x * e1,
                p[2] * e2,
                -p[2] * p[3] * x * e2,
                p[4],
            ];
            let r = y - (p[0] * e1 + p[2] * e2 + p[4]);
            for i in 0..5 {
                jtr[i] += row[i] * r;
                for j in i..5 {
                    jtj[i][j] += row[i] * row[j];
                }
            }
        }
        for i in 0..5 {
            for j in 0..i {
                jtj[i][j] = jtj[j][i];
            }
        }

        // Damped step; grow lambda until the step reduces the residual.
        let mut accepted = false;
        for _ in 0..30 {
            let mut a = jtj;
            for (i, row) in a.iter_mut().enumerate() {
                row[i] += lambda * jtj[i][i].max(1e-12);
            }
            let Some(delta) = solve5(a, jtr) else {
                lambda = (lambda * 10.0).min(1e12);
                continue;
            };
            let mut cand = lp;
            for i in 0..5 {
                // clamp the log step; exp() of huge steps overflows
                cand[i] += delta[i].clamp(-50.0, 50.0);
                cand[i] = cand[i].clamp(-60.0, 60.0);
            }
            let cand_ss = sum_squares(xs, ys, &to_params(&cand));
            if cand_ss.is_finite() && cand_ss <= ss {
                let rel_impr = (ss - cand_ss) / ss.max(f64::MIN_POSITIVE);
                let step = delta.iter().fold(0.0f64, |m, d| m.max(d.abs()));
                lp = cand;
                ss = cand_ss;
                lambda = (lambda / 3.0).max(1e-12);
                accepted = true;
                if rel_impr < 1e-11 || step < 1e-9 {
                    converged = true;
                }
                break;
            }
            lambda = (lambda * 10.0).min(1e12);
        }
        if !accepted {
            // cannot improve any further; treat as converged to a minimum
            converged = true;
        }
        if converged {
            break;
        }
    }
    (lp, ss, iters, converged)
}

/// Gaussian elimination with partial pivoting for the 5x5 normal equations.
#[allow(clippy::needless_range_loop)]
fn solve5(mut a: [[f64; 5]; 5], mut b: [f64; 5]) -> Option<[f64; 5]> {
    for col in 0..5 {
        let mut pivot = col;
        for row in (col + 1)..5 {
            if a[row][col].abs() > a[pivot][col].abs() {
                pivot = row;
            }
        }
        if a[pivot][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in (col + 1)..5 {
            let f = a[row][col] / a[col][col];
            for k in col..5 {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0f64; 5];
    for col in (0..5).rev() {
        let mut acc = b[col];
        for k in (col + 1)..5 {
            acc -= a[col][k] * x[k];
        }
        x[col] = acc / a[col][col];
    }
    if x.iter().all(|v| v.is_finite()) {
        Some(x)
    } else {
        None
    }
}

/// Result of the `tau_max` search.
#[derive(Debug, Clone, Serialize)]
pub struct TauMaxSelection {
    pub tau_max_hours: f64,
    /// True when the coefficients were verified stable against the next
    /// candidate; false when the list was exhausted (or had one entry).
    pub stable: bool,
    pub model: DelayModel,
}

/// Stability comparison for consecutive fits: density coefficients
/// (`a1`, `a2`, `c`) are normalized by `peak` (the reference histogram's
/// peak density) and rates are compared raw in 1/hour; every change must
/// stay below `1e-3`. A rate is only compared while its component carries
/// weight (`a/peak >= 1e-3` in either fit) — the rate of a vanished
/// component is not identifiable.
pub fn coefficients_stable(reference: &DelayModel, peak: f64, next: &DelayModel) -> bool {
    const TOL: f64 = 1e-3;
    let peak = peak.max(f64::MIN_POSITIVE);
    let da1 = (reference.a1 - next.a1).abs() / peak;
    let da2 = (reference.a2 - next.a2).abs() / peak;
    let dc = (reference.c - next.c).abs() / peak;
    if da1 >= TOL || da2 >= TOL || dc >= TOL {
        return false;
    }
    let fast_present = reference.a1.max(next.a1) / peak >= TOL;
    if fast_present && (reference.b1 - next.b1).abs() >= TOL {
        return false;
    }
    let slow_present = reference.a2.max(next.a2) / peak >= TOL;
    if slow_present && (reference.b2 - next.b2).abs() >= TOL {
        return false;
    }
    true
}

/// Pick `tau_max` empirically: fit at each candidate (hours, increasing) and
/// return the first whose coefficients are stable against the next
/// candidate per [`coefficients_stable`]. Falls back to the largest
/// candidate, flagged unstable, when the rule never triggers; a
/// single-candidate list is returned unverified.
pub fn select_tau_max(
    samples: &[DelaySample],
    method: BinMethod,
    candidates_hours: &[f64],
) -> Result<TauMaxSelection, DelayError> {
    if candidates_hours.is_empty() {
        return Err(DelayError::NoCandidates);
    }
    let fit_at = |hours: f64| -> Result<(DelayModel, f64), DelayError> {
        let hist = histogram(samples, method, hours * SECS_PER_HOUR_F)?;
        let model = fit(&hist)?;
        Ok((model, hist.peak_density()))
    };

    let mut current = fit_at(candidates_hours[0])?;
    for i in 0..candidates_hours.len() - 1 {
        let next = fit_at(candidates_hours[i + 1])?;
        if coefficients_stable(&current.0, current.1, &next.0) {
            return Ok(TauMaxSelection {
                tau_max_hours: candidates_hours[i],
                stable: true,
                model: current.0,
            });
        }
        current = next;
    }
    Ok(TauMaxSelection {
        tau_max_hours: *candidates_hours.last().unwrap(),
        stable: false,
        model: current.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{ForumDataset, PostRecord, PrivateMessage, ThreadRecord, UserRecord};

    fn sample(tau_secs: i64) -> DelaySample {
        DelaySample { post_id: "p".into(), recipient_id: "u".into(), tau_secs }
    }

    fn one_post_dataset(msg_offsets: &[i64]) -> ForumDataset {
        let users = vec![
            UserRecord { user_id: "u1".into(), username: "a".into(), join_ts: -1000, reputation: 0 },
            UserRecord { user_id: "u2".into(), username: "b".into(), join_ts: -1000, reputation: 0 },
        ];
        let threads = vec![ThreadRecord {
            thread_id: "t1".into(),
            subforum: "s".into(),
            title: "t".into(),
            creator_id: "u1".into(),
            created_ts: 0,
            views: 0,
        }];
        let posts = vec![PostRecord {
            post_id: "p1".into(),
            thread_id: "t1".into(),
            author_id: "u1".into(),
            ts: 0,
            body: String::new(),
            reply_to: None,
        }];
        let messages = msg_offsets
            .iter()
            .enumerate()
            .map(|(i, &off)| PrivateMessage {
                msg_id: format!("m{i}").as_str().into(),
                sender_id: "u2".into(),
                recipient_id: "u1".into(),
                ts: off,
                body: String::new(),
            })
            .collect();
        ForumDataset::new(users, threads, posts, messages).unwrap()
    }

    #[test]
    fn delays_are_message_minus_post() {
        let ds = one_post_dataset(&[3600, 7200]);
        let taus: Vec<i64> = compute_delays(&ds, &TimeWindow::new(-10_000, 100_000))
            .iter()
            .map(|s| s.tau_secs)
            .collect();
        assert_eq!(taus, vec![3600, 7200]);
    }

    #[test]
    fn negative_delays_are_disregarded() {
        let ds = one_post_dataset(&[-100]);
        assert!(compute_delays(&ds, &TimeWindow::new(-10_000, 100_000)).is_empty());
    }

    #[test]
    fn no_messages_no_delays() {
        let ds = one_post_dataset(&[]);
        assert!(compute_delays(&ds, &TimeWindow::new(-10, 100)).is_empty());
    }

    #[test]
    fn balanced_bins_hit_average() {
        let samples: Vec<DelaySample> = (1..=100).map(|i| sample(i * 36)).collect();
        let hist = histogram(&samples, BinMethod::Balanced { avg_per_bin: 5.0 }, 3600.0).unwrap();
        assert_eq!(hist.bin_count(), 20);
        let total: u64 = hist.counts.iter().sum();
        assert_eq!(total as f64 / hist.bin_count() as f64, 5.0);
    }

    #[test]
    fn naive_bin_count() {
        let samples = vec![sample(10)];
        let hist =
            histogram(&samples, BinMethod::Naive { bin_width_secs: 900.0 }, 3600.0).unwrap();
        assert_eq!(hist.bin_count(), 4);
        assert_eq!(hist.counts, vec![1, 0, 0, 0]);
    }

    #[test]
    fn mass_in_first_bin() {
        let samples: Vec<DelaySample> = (1..=7).map(|i| sample(i * 100)).collect();
        let hist =
            histogram(&samples, BinMethod::Naive { bin_width_secs: 900.0 }, 3600.0).unwrap();
        assert_eq!(hist.counts, vec![7, 0, 0, 0]);
        assert!((hist.densities[0] - 7.0 / 0.25).abs() < 1e-12);
    }

    #[test]
    fn underfilled_balanced_is_single_flagged_bin() {
        let samples = vec![sample(5), sample(9)];
        let hist = histogram(&samples, BinMethod::Balanced { avg_per_bin: 10.0 }, 100.0).unwrap();
        assert!(hist.underfilled);
        assert_eq!(hist.bin_count(), 1);
    }

    #[test]
    fn balanced_avg_one_equals_naive_matching_width() {
        // N divides tau_max evenly.
        let samples: Vec<DelaySample> = (1..=50).map(|i| sample(i * 137 % 5000 + 1)).collect();
        let balanced = histogram(&samples, BinMethod::Balanced { avg_per_bin: 1.0 }, 5000.0).unwrap();
        let naive =
            histogram(&samples, BinMethod::Naive { bin_width_secs: 100.0 }, 5000.0).unwrap();
        assert_eq!(balanced.counts, naive.counts);
    }

    #[test]
    fn sum_counts_matches_in_range_samples() {
        let samples: Vec<DelaySample> = (1..=30).map(|i| sample(i * 500)).collect();
        let hist = histogram(&samples, BinMethod::Naive { bin_width_secs: 700.0 }, 9000.0).unwrap();
        let expect = samples.iter().filter(|s| s.tau_secs as f64 <= 9000.0).count() as u64;
        assert_eq!(hist.counts.iter().sum::<u64>(), expect);
        // edges strictly increasing
        assert!(hist.edges_secs.windows(2).all(|e| e[1] > e[0]));
    }

    /// Histogram whose densities sit exactly on a given curve.
    fn exact_histogram(params: [f64; 5], n_bins: usize, tau_max_hours: f64) -> DelayHistogram {
        let width = tau_max_hours * 3600.0 / n_bins as f64;
        let edges: Vec<f64> = (0..=n_bins).map(|i| i as f64 * width).collect();
        let densities: Vec<f64> = (0..n_bins)
            .map(|i| {
                let center = (edges[i] + edges[i + 1]) / 2.0 / 3600.0;
                model_value(center, &params)
            })
            .collect();
        DelayHistogram {
            edges_secs: edges,
            counts: vec![1; n_bins],
            densities,
            method: BinMethod::Naive { bin_width_secs: width },
            underfilled: false,
        }
    }

    #[test]
    fn fit_recovers_pure_exponential_exactly() {
        let hist = exact_histogram([1.0, 1.0, 0.0, 0.05, 0.0], 40, 10.0);
        let model = fit(&hist).unwrap();
        assert!((model.a1 - 1.0).abs() < 1e-6, "a1={}", model.a1);
        assert!((model.b1 - 1.0).abs() < 1e-6, "b1={}", model.b1);
        assert!(model.a2.abs() < 1e-6);
        assert!(model.c.abs() < 1e-6);
        assert!((model.r_squared - 1.0).abs() < 1e-9);
    }

    #[test]
    fn fit_recovers_two_component_mixture() {
        let planted = [40.0, 2.0, 4.0, 0.05, 0.5];
        let hist = exact_histogram(planted, 120, 60.0);
        let model = fit(&hist).unwrap();
        assert!((model.a1 - 40.0).abs() / 40.0 < 1e-4);
        assert!((model.b1 - 2.0).abs() / 2.0 < 1e-4);
        assert!((model.a2 - 4.0).abs() / 4.0 < 1e-4);
        assert!((model.b2 - 0.05).abs() / 0.05 < 1e-4);
        assert!((model.c - 0.5).abs() / 0.5 < 1e-3);
        assert!(model.b1 > model.b2);
    }

    #[test]
    fn fit_is_scale_consistent() {
        let planted = [40.0, 2.0, 4.0, 0.05, 0.5];
        let base = exact_histogram(planted, 120, 60.0);
        let mut scaled = base.clone();
        let k = 37.5;
        for d in scaled.densities.iter_mut() {
            *d *= k;
        }
        let m1 = fit(&base).unwrap();
        let m2 = fit(&scaled).unwrap();
        assert!((m2.a1 / m1.a1 - k).abs() / k < 1e-6);
        assert!((m2.a2 / m1.a2 - k).abs() / k < 1e-6);
        assert!((m2.c / m1.c - k).abs() / k < 1e-6);
        assert!((m2.b1 - m1.b1).abs() < 1e-6);
        assert!((m2.b2 - m1.b2).abs() < 1e-6);
        assert!((m2.r_squared - m1.r_squared).abs() < 1e-6);
    }

    #[test]
    fn fit_requires_six_nonempty_bins() {
        let samples = vec![sample(10), sample(20), sample(30)];
        let hist = histogram(&samples, BinMethod::Naive { bin_width_secs: 10.0 }, 50.0).unwrap();
        match fit(&hist) {
            Err(DelayError::InsufficientBins { got, need }) => {
                assert!(got < need);
            }
            other => panic!("expected InsufficientBins, got {other:?}"),
        }
    }

    #[test]
    fn evaluate_matches_closed_form() {
        let model = DelayModel {
            a1: 2.0,
            b1: 1.0,
            a2: 0.5,
            b2: 0.1,
            c: 9.0, // must not leak into f
            tau_max_hours: 15.0,
            r_squared: 1.0,
            method: BinMethod::Balanced { avg_per_bin: 4.0 },
            fit: FitMeta { iterations: 0, converged: true, best_start: 0 },
        };
        assert!((model.evaluate(0.0) - 2.5).abs() < 1e-12);
        let expect = 2.0 * (-1.0f64).exp() + 0.5 * (-0.1f64).exp();
        assert!((model.evaluate(1.0) - expect).abs() < 1e-12);
        assert!((expect - 1.18817).abs() < 1e-5);
        // strictly decreasing toward zero
        let mut prev = model.evaluate(0.0);
        for i in 1..200 {
            let v = model.evaluate(i as f64 * 0.5);
            assert!(v < prev && v > 0.0);
            prev = v;
        }
        assert!(model.evaluate(1e4) < 1e-12);
    }

    #[test]
    #[should_panic(expected = "negative tau")]
    fn evaluate_rejects_negative_tau() {
        let model = DelayModel {
            a1: 1.0,
            b1: 1.0,
            a2: 0.0,
            b2: 0.1,
            c: 0.0,
            tau_max_hours: 1.0,
            r_squared: 1.0,
            method: BinMethod::Naive { bin_width_secs: 60.0 },
            fit: FitMeta { iterations: 0, converged: true, best_start: 0 },
        };
        model.evaluate(-0.5);
    }

    #[test]
    fn balanced_fit_beats_naive_on_large_samples() {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        let samples: Vec<DelaySample> = (0..10_000)
            .map(|_| {
                let rate = if rng.random::<f64>() < 0.8 { 2.0 } else { 0.05 };
                let tau_h = -rng.random::<f64>().ln() / rate;
                sample(((tau_h * 3600.0) as i64).max(1))
            })
            .collect();
        let tau_max = 40.0 * 3600.0;
        let balanced =
            fit(&histogram(&samples, BinMethod::Balanced { avg_per_bin: 5.0 }, tau_max).unwrap())
                .unwrap();
        let naive =
            fit(&histogram(&samples, BinMethod::Naive { bin_width_secs: 60.0 }, tau_max).unwrap())
                .unwrap();
        assert!(
            balanced.r_squared >= naive.r_squared,
            "balanced {} < naive {}",
            balanced.r_squared,
            naive.r_squared
        );
    }

    #[test]
    fn single_candidate_is_returned_unverified() {
        let samples: Vec<DelaySample> = (1..=200).map(|i| sample(i * 60)).collect();
        let sel =
            select_tau_max(&samples, BinMethod::Balanced { avg_per_bin: 5.0 }, &[4.0]).unwrap();
        assert_eq!(sel.tau_max_hours, 4.0);
        assert!(!sel.stable);
    }

    #[test]
    fn pure_fast_exponential_selects_first_candidate() {
        // All mass below one hour: beyond-support candidates see identical data.
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let samples: Vec<DelaySample> = (0..20_000)
            .map(|_| {
                let u: f64 = rng.random::<f64>();
                let tau_h = -u.ln() / 12.0; // mean 5 minutes
                sample(((tau_h * 3600.0) as i64).max(1))
            })
            .collect();
        let sel = select_tau_max(
            &samples,
            BinMethod::Naive { bin_width_secs: 60.0 },
            &[5.0, 10.0, 15.0, 20.0],
        )
        .unwrap();
        assert!(sel.stable);
        assert_eq!(sel.tau_max_hours, 5.0);
    }

    #[test]
    fn empty_candidates_error() {
        assert!(matches!(
            select_tau_max(&[], BinMethod::Naive { bin_width_secs: 60.0 }, &[]),
            Err(DelayError::NoCandidates)
        ));
    }
}
