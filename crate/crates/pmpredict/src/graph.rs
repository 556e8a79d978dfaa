//! Public and private interaction graphs.
//!
//! Both graphs are undirected with edge weights counting interactions.
//! The public graph can be built three ways: connect everyone who talks in
//! the same thread, connect the thread owner with everyone in the thread,
//! or connect direct reply pairs. The private graph has one edge per pair
//! of users that exchanged at least one message.
//!
//! Centrality measures (degree, local clustering, eigenvector, betweenness)
//! feed the classifier's context features.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::io::Write;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{ForumDataset, ThreadId, UserId};
use crate::features::detect_trade_tags;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PublicStrategy {
    /// Connect every pair of distinct users posting in the same thread.
    SameThread,
    /// Connect the thread creator with each other participant.
    ThreadOwner,
    /// Connect a post's author with the author of the post it replies to.
    DirectReply,
}

impl FromStr for PublicStrategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "same-thread" => Ok(PublicStrategy::SameThread),
            "thread-owner" => Ok(PublicStrategy::ThreadOwner),
            "direct-reply" => Ok(PublicStrategy::DirectReply),
            other => Err(format!("unknown public graph strategy `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GraphKind {
    Public(PublicStrategy),
    Private,
}

/// Undirected weighted interaction graph. No self-loops; weight >= 1.
#[derive(Debug, Clone)]
pub struct InteractionGraph {
    pub kind: GraphKind,
    nodes: Vec<UserId>,
    index: HashMap<UserId, usize>,
    /// Adjacency lists sorted by neighbor index.
    adj: Vec<Vec<(u32, u64)>>,
    edge_count: usize,
}

impl InteractionGraph {
    fn from_edges(kind: GraphKind, nodes: BTreeSet<UserId>, edges: BTreeMap<(UserId, UserId), u64>) -> Self {
        let nodes: Vec<UserId> = nodes.into_iter().collect();
        let index: HashMap<UserId, usize> =
            nodes.iter().enumerate().map(|(i, u)| (u.clone(), i)).collect();
        let mut adj: Vec<Vec<(u32, u64)>> = vec![Vec::new(); nodes.len()];
        let edge_count = edges.len();
        for ((a, b), w) in edges {
            let ia = index[&a] as u32;
            let ib = index[&b] as u32;
            adj[ia as usize].push((ib, w));
            adj[ib as usize].push((ia, w));
        }
        for list in &mut adj {
            list.sort_unstable_by_key(|&(n, _)| n);
        }
        InteractionGraph { kind, nodes, index, adj, edge_count }
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    pub fn total_weight(&self) -> u64 {
        self.adj.iter().flatten().map(|&(_, w)| w).sum::<u64>() / 2
    }

    pub fn node_ids(&self) -> &[UserId] {
        &self.nodes
    }

    pub fn node_index(&self, user: &UserId) -> Option<usize> {
        self.index.get(user).copied()
    }

    pub fn neighbors(&self, node: usize) -> &[(u32, u64)] {
        &self.adj[node]
    }

    pub fn has_edge(&self, a: &UserId, b: &UserId) -> bool {
        match (self.index.get(a), self.index.get(b)) {
            (Some(&ia), Some(&ib)) => {
                self.adj[ia].binary_search_by_key(&(ib as u32), |&(n, _)| n).is_ok()
            }
            _ => false,
        }
    }

    /// Edges as `(user_a, user_b, weight)` with `user_a < user_b`, in
    /// deterministic node order.
    pub fn edges(&self) -> impl Iterator<Item = (&UserId, &UserId, u64)> {
        self.adj.iter().enumerate().flat_map(move |(i, list)| {
            list.iter().filter_map(move |&(j, w)| {
                if (j as usize) > i {
                    Some((&self.nodes[i], &self.nodes[j as usize], w))
                } else {
                    None
                }
            })
        })
    }

    /// Edge-list CSV: `user_a,user_b,weight`.
    pub fn write_edge_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "user_a,user_b,weight")?;
        for (a, b, weight) in self.edges() {
            writeln!(w, "{},{},{}", csv_field(a.as_str()), csv_field(b.as_str()), weight)?;
        }
        Ok(())
    }
}

pub(crate) fn csv_field(s: &str) -> String {
    if s.contains(',') || s.contains('"') || s.contains('\n') {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_owned()
    }
}

fn canonical(a: &UserId, b: &UserId) -> (UserId, UserId) {
    if a <= b {
        (a.clone(), b.clone())
    } else {
        (b.clone(), a.clone())
    }
}

/// Build the public interaction graph under the given connection strategy.
/// Weights count co-occurrences: one per shared thread for `SameThread` and
/// `ThreadOwner`, one per reply for `DirectReply`.
pub fn build_public_graph(ds: &ForumDataset, strategy: PublicStrategy) -> InteractionGraph {
    let mut nodes: BTreeSet<UserId> = BTreeSet::new();
    let mut edges: BTreeMap<(UserId, UserId), u64> = BTreeMap::new();
    let bump = |edges: &mut BTreeMap<(UserId, UserId), u64>, a: &UserId, b: &UserId| {
        if a != b {
            *edges.entry(canonical(a, b)).or_insert(0) += 1;
        }
    };

    match strategy {
        PublicStrategy::SameThread => {
            for t in &ds.threads {
                let participants = thread_participants(ds, &t.thread_id);
                nodes.extend(participants.iter().cloned());
                for i in 0..participants.len() {
                    for j in (i + 1)..participants.len() {
                        bump(&mut edges, &participants[i], &participants[j]);
                    }
                }
            }
        }
        PublicStrategy::ThreadOwner => {
            for t in &ds.threads {
                let participants = thread_participants(ds, &t.thread_id);
                nodes.extend(participants.iter().cloned());
                for p in &participants {
                    bump(&mut edges, &t.creator_id, p);
                }
            }
        }
        PublicStrategy::DirectReply => {
            for p in &ds.posts {
                nodes.insert(p.author_id.clone());
                if let Some(target) = &p.reply_to {
                    if let Some(parent) = ds.post(target) {
                        bump(&mut edges, &p.author_id, &parent.author_id);
                    }
                }
            }
        }
    }
    InteractionGraph::from_edges(GraphKind::Public(strategy), nodes, edges)
}

fn thread_participants(ds: &ForumDataset, thread: &ThreadId) -> Vec<UserId> {
    let mut seen: BTreeSet<UserId> = BTreeSet::new();
    for p in ds.posts_in_thread(thread) {
        seen.insert(p.author_id.clone());
    }
    seen.into_iter().collect()
}

/// Build the private graph: one undirected edge per communicating pair,
/// weighted by the total number of messages in either direction.
pub fn build_private_graph(ds: &ForumDataset) -> InteractionGraph {
    let mut nodes: BTreeSet<UserId> = BTreeSet::new();
    let mut edges: BTreeMap<(UserId, UserId), u64> = BTreeMap::new();
    for m in &ds.messages {
        nodes.insert(m.sender_id.clone());
        nodes.insert(m.recipient_id.clone());
        *edges.entry(canonical(&m.sender_id, &m.recipient_id)).or_insert(0) += 1;
    }
    InteractionGraph::from_edges(GraphKind::Private, nodes, edges)
}

/// Overlap statistics between the public and the private graph. Fractions
/// recompute exactly from the integer numerators/denominators also reported.
#[derive(Debug, Clone, Serialize)]
pub struct OverlapReport {
    pub public_edges: usize,
    pub private_edges: usize,
    /// Public pairs that never exchanged a private message.
    pub public_only_edges: usize,
    pub public_only_fraction: f64,
    /// Private pairs that never co-occurred publicly.
    pub private_only_edges: usize,
    pub private_only_fraction: f64,
    pub messages_with_public_link: u64,
    pub edges_with_public_link: usize,
    pub avg_pms_with_public_link: f64,
    pub messages_without_public_link: u64,
    pub avg_pms_without_public_link: f64,
    pub tagged_threads: usize,
    pub total_threads: usize,
    /// Threads whose title carries a `[B]`/`[S]` trade tag.
    pub tagged_thread_fraction: f64,
    pub tagged_edges: usize,
    /// Public edges that co-occur in at least one tagged thread.
    pub tagged_edge_fraction: f64,
}

fn frac(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Compare the public and private graphs of one dataset. The public graph
/// should use the `SameThread` strategy for pair statistics comparable
/// across forums.
pub fn overlap_stats(
    public: &InteractionGraph,
    private: &InteractionGraph,
    ds: &ForumDataset,
) -> OverlapReport {
    let public_edges = public.edge_count();
    let private_edges = private.edge_count();

    let mut public_only = 0usize;
    for (a, b, _) in public.edges() {
        if !private.has_edge(a, b) {
            public_only += 1;
        }
    }

    let mut private_only = 0usize;
    let mut msgs_with = 0u64;
    let mut edges_with = 0usize;
    let mut msgs_without = 0u64;
    for (a, b, w) in private.edges() {
        if public.has_edge(a, b) {
            edges_with += 1;
            msgs_with += w;
        } else {
            private_only += 1;
            msgs_without += w;
        }
    }

    let mut tagged_threads = 0usize;
    let mut tagged_pairs: HashSet<(UserId, UserId)> = HashSet::new();
    for t in &ds.threads {
        let (buy, sell) = detect_trade_tags(&t.title);
        if buy || sell {
            tagged_threads += 1;
            let participants = thread_participants(ds, &t.thread_id);
            for i in 0..participants.len() {
                for j in (i + 1)..participants.len() {
                    tagged_pairs.insert(canonical(&participants[i], &participants[j]));
                }
            }
        }
    }
    let tagged_edges =
        tagged_pairs.iter().filter(|(a, b)| public.has_edge(a, b)).count();

    OverlapReport {
        public_edges,
        private_edges,
        public_only_edges: public_only,
        public_only_fraction: frac(public_only, public_edges),
        private_only_edges: private_only,
        private_only_fraction: frac(private_only, private_edges),
        messages_with_public_link: msgs_with,
        edges_with_public_link: edges_with,
        avg_pms_with_public_link: if edges_with == 0 { 0.0 } else { msgs_with as f64 / edges_with as f64 },
        messages_without_public_link: msgs_without,
        avg_pms_without_public_link: if private_only == 0 { 0.0 } else { msgs_without as f64 / private_only as f64 },
        tagged_threads,
        total_threads: ds.threads.len(),
        tagged_thread_fraction: frac(tagged_threads, ds.threads.len()),
        tagged_edges,
        tagged_edge_fraction: frac(tagged_edges, public_edges),
    }
}

// ---------------------------------------------------------------------------
// centrality

/// Number of neighbors.
pub fn degree_centrality(graph: &InteractionGraph, user: &UserId) -> f64 {
    graph.node_index(user).map_or(0.0, |i| graph.neighbors(i).len() as f64)
}

/// Local clustering coefficient `2 * triangles / (k * (k - 1))`; 0 when the
/// user has fewer than two neighbors.
pub fn clustering_coefficient(graph: &InteractionGraph, user: &UserId) -> f64 {
    let Some(i) = graph.node_index(user) else { return 0.0 };
    let neigh = graph.neighbors(i);
    let k = neigh.len();
    if k < 2 {
        return 0.0;
    }
    let mut triangles = 0usize;
    for (a, &(na, _)) in neigh.iter().enumerate() {
        let list_a = graph.neighbors(na as usize);
        for &(nb, _) in &neigh[a + 1..] {
            if list_a.binary_search_by_key(&nb, |&(n, _)| n).is_ok() {
                triangles += 1;
            }
        }
    }
    2.0 * triangles as f64 / (k as f64 * (k - 1) as f64)
}

/// Eigenvector centrality scores, indexed like `node_ids()`.
#[derive(Debug, Clone)]
pub struct EigenvectorScores {
    pub scores: Vec<f64>,
    pub converged: bool,
}

const POWER_MAX_ITERS: usize = 1000;
const POWER_TOL: f64 = 1e-10;

/// Eigenvector centrality by power iteration on the unweighted adjacency.
///
/// Iterates `x <- (A + I) x` (the identity shift keeps bipartite components
/// from oscillating while leaving the dominant eigenvector of `A`
/// unchanged). Disconnected graphs are handled per connected component:
/// each component's scores are L2-normalized, then scaled by the
/// component's share of the graph's edges. Isolated nodes score 0.
///
/// Requires at least one edge. A component that fails to converge within
/// 1000 iterations marks the result `converged = false`.
pub fn eigenvector_centrality(graph: &InteractionGraph) -> Option<EigenvectorScores> {
    if graph.edge_count() == 0 {
        return None;
    }
    let n = graph.node_count();
    let mut scores = vec![0.0f64; n];
    let mut converged = true;
    let total_edges = graph.edge_count() as f64;

    for comp in connected_components(graph) {
        let comp_edges: usize =
            comp.iter().map(|&v| graph.neighbors(v).iter().filter(|&&(u, _)| comp_contains(&comp, u)).count()).sum::<usize>() / 2;
        if comp_edges == 0 {
            continue; // isolated node
        }
        let share = comp_edges as f64 / total_edges;
        let m = comp.len();
        let mut x = vec![1.0 / (m as f64).sqrt(); m];
        let mut next = vec![0.0f64; m];
        let pos: HashMap<usize, usize> = comp.iter().enumerate().map(|(i, &v)| (v, i)).collect();
        let mut ok = false;
        for _ in 0..POWER_MAX_ITERS {
            for (i, &v) in comp.iter().enumerate() {
                let mut acc = x[i]; // identity shift
                for &(u, _) in graph.neighbors(v) {
                    if let Some(&j) = pos.get(&(u as usize)) {
                        acc += x[j];
                    }
                }
                next[i] = acc;
            }
            let norm = next.iter().map(|v| v * v).sum::<f64>().sqrt();
            for v in next.iter_mut() {
                *v /= norm;
            }
            let delta = x.iter().zip(&next).map(|(a, b)| (a - b).abs()).fold(0.0f64, f64::max);
            std::mem::swap(&mut x, &mut next);
            if delta < POWER_TOL {
                ok = true;
                break;
            }
        }
        if !ok {
            converged = false;
        }
        for (i, &v) in comp.iter().enumerate() {
            scores[v] = x[i] * share;
        }
    }
    Some(EigenvectorScores { scores, converged })
}

fn comp_contains(comp: &[usize], v: u32) -> bool {
    comp.binary_search(&(v as usize)).is_ok()
}

/// Connected components as sorted vertex lists, ordered by smallest vertex.
fn connected_components(graph: &InteractionGraph) -> Vec<Vec<usize>> {
    let n = graph.node_count();
    let mut seen = vec![false; n];
    let mut comps = Vec::new();
    for start in 0..n {
        if seen[start] {
            continue;
        }
        let mut comp = vec![start];
        seen[start] = true;
        let mut queue = std::collections::VecDeque::from([start]);
        while let Some(v) = queue.pop_front() {
            for &(u, _) in graph.neighbors(v) {
                let u = u as usize;
                if !seen[u] {
                    seen[u] = true;
                    comp.push(u);
                    queue.push_back(u);
                }
            }
        }
        comp.sort_unstable();
        comps.push(comp);
    }
    comps
}

/// Exact betweenness centrality (Brandes), unweighted shortest paths,
/// unnormalized pair-dependency sums. Each unordered pair contributes once.
pub fn betweenness_centrality(graph: &InteractionGraph) -> Vec<f64> {
    let n = graph.node_count();
    let sources: Vec<usize> = (0..n).collect();
    brandes(graph, &sources, 1.0)
}

/// Betweenness estimated from a uniform sample of source vertices, for
/// graphs too large for the exact pass. Contributions are scaled by
/// `n / sample_size`; sampling is seeded and deterministic.
pub fn betweenness_centrality_sampled(
    graph: &InteractionGraph,
    sample_size: usize,
    seed: u64,
) -> Vec<f64> {
    let n = graph.node_count();
    if sample_size >= n {
        return betweenness_centrality(graph);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut all: Vec<usize> = (0..n).collect();
    all.shuffle(&mut rng);
    let mut sources = all[..sample_size].to_vec();
    sources.sort_unstable();
    brandes(graph, &sources, n as f64 / sample_size as f64)
}

/// Brandes' accumulation over the given sources. Sources are processed in
/// fixed-size chunks; chunks run in parallel but are reduced in chunk order,
/// so results do not depend on the worker count.
fn brandes(graph: &InteractionGraph, sources: &[usize], scale: f64) -> Vec<f64> {
    use rayon::prelude::*;

    let n = graph.node_count();
    const CHUNK: usize = 64;
    let partials: Vec<Vec<f64>> = sources
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut acc = vec![0.0f64; n];
            for &s in chunk {
                brandes_single(graph, s, &mut acc);
            }
            acc
        })
        .collect();

    let mut total = vec![0.0f64; n];
    for part in partials {
        for (t, p) in total.iter_mut().zip(part) {
            *t += p;
        }
    }
    // Undirected: every pair was counted from both endpoints.
    for v in total.iter_mut() {
        *v *= 0.5 * scale;
    }
    total
}

/// Per-user centrality bundle used by feature extraction.
#[derive(Debug, Clone, Copy, Default)]
pub struct CentralityFeatures {
    pub clustering: f64,
    pub degree: f64,
    pub eigenvector: f64,
    pub betweenness: f64,
}

/// All four centrality measures computed once per graph. Users absent from
/// the graph score 0 everywhere.
#[derive(Debug, Clone)]
pub struct CentralityScores {
    index: HashMap<UserId, usize>,
    scores: Vec<CentralityFeatures>,
}

/// Above this node count, betweenness switches to seeded source sampling.
pub const BETWEENNESS_EXACT_LIMIT: usize = 50_000;
pub const BETWEENNESS_SAMPLE_SOURCES: usize = 256;

impl CentralityScores {
    pub fn compute(graph: &InteractionGraph, seed: u64) -> Self {
        let n = graph.node_count();
        let betweenness = if n > BETWEENNESS_EXACT_LIMIT {
            betweenness_centrality_sampled(graph, BETWEENNESS_SAMPLE_SOURCES, seed)
        } else {
            betweenness_centrality(graph)
        };
        let eigen = eigenvector_centrality(graph)
            .map(|e| e.scores)
            .unwrap_or_else(|| vec![0.0; n]);
        let scores = (0..n)
            .map(|i| {
                let user = &graph.node_ids()[i];
                CentralityFeatures {
                    clustering: clustering_coefficient(graph, user),
                    degree: graph.neighbors(i).len() as f64,
                    eigenvector: eigen[i],
                    betweenness: betweenness[i],
                }
            })
            .collect();
        let index = graph
            .node_ids()
            .iter()
            .enumerate()
            .map(|(i, u)| (u.clone(), i))
            .collect();
        CentralityScores { index, scores }
    }

    pub fn lookup(&self, user: &UserId) -> CentralityFeatures {
        self.index.get(user).map_or_else(CentralityFeatures::default, |&i| self.scores[i])
    }
}

fn brandes_single(graph: &InteractionGraph, s: usize, acc: &mut [f64]) {
    let n = graph.node_count();
    let mut stack: Vec<usize> = Vec::with_capacity(n);
    let mut pred: Vec<Vec<u32>> = vec![Vec::new(); n];
    let mut sigma = vec![0.0f64; n];
    let mut dist = vec![-1i32; n];
    sigma[s] = 1.0;
    dist[s] = 0;
    let mut queue = std::collections::VecDeque::from([s]);
    while let Some(v) = queue.pop_front() {
        stack.push(v);
        for &(w, _) in graph.neighbors(v) {
            let w = w as usize;
            if dist[w] < 0 {
                dist[w] = dist[v] + 1;
                queue.push_back(w);
            }
            if dist[w] == dist[v] + 1 {
                sigma[w] += sigma[v];
                pred[w].push(v as u32);
            }
        }
    }
    let mut delta = vec![0.0f64; n];
    while let Some(w) = stack.pop() {
        for &v in &pred[w] {
            let v = v as usize;
            delta[v] += sigma[v] / sigma[w] * (1.0 + delta[w]);
        }
        if w != s {
            acc[w] += delta[w];
        }
    }
}
