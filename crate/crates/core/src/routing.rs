//! All-pairs ground truth: which path each pair uses and what it measures.
//!
//! Routing is evaluated from the lower-id endpoint of every pair, and path
//! values fold link metrics in traversal order from that endpoint.
//!
//! Tie-breaking among equally good paths:
//! - MHR: lexicographically smallest node sequence among hop-minimal paths
//!   (BFS over ascending adjacency lists produces exactly this tree).
//! - BPR, additive: lexicographically smallest among least-sum paths.
//! - BPR, congestion: among minimax-optimal paths, fewest hops, then
//!   lexicographically smallest.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::netmodel::{MetricSemantics, Topology};
use crate::pairs::{Pair, PairTable};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RoutingStrategy {
    /// Min-hop routing.
    Mhr,
    /// Best-performance routing for the metric semantics in use.
    Bpr,
}

impl RoutingStrategy {
    pub fn short_name(self) -> &'static str {
        match self {
            RoutingStrategy::Mhr => "MHR",
            RoutingStrategy::Bpr => "BPR",
        }
    }
}

/// Hop count and path metric for every unordered pair.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthTable {
    pub hops: PairTable<u32>,
    pub metrics: PairTable<f64>,
}

impl GroundTruthTable {
    pub fn node_count(&self) -> usize {
        self.metrics.node_count()
    }

    pub fn len(&self) -> usize {
        self.metrics.len()
    }

    pub fn is_empty(&self) -> bool {
        self.metrics.is_empty()
    }

    pub fn metric(&self, pair: Pair) -> f64 {
        *self.metrics.get(pair)
    }

    pub fn hop_count(&self, pair: Pair) -> u32 {
        *self.hops.get(pair)
    }

    /// Hop counts as reals, the metric table of the hop-count task.
    pub fn hop_metrics(&self) -> PairTable<f64> {
        let values = self.hops.values().iter().map(|&h| h as f64).collect();
        PairTable::from_values(self.node_count(), values).expect("same shape")
    }

    /// Writes `u,v,hops,metric` rows under a header.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["u", "v", "hops", "metric"])?;
        for ((pair, hops), metric) in self.hops.iter().zip(self.metrics.values()) {
            w.write_record([
                pair.lo().to_string(),
                pair.hi().to_string(),
                hops.to_string(),
                metric.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        #[derive(Deserialize)]
        struct Row {
            u: usize,
            v: usize,
            hops: u32,
            metric: f64,
        }
        let mut rows = Vec::new();
        let mut n = 0;
        for row in csv::Reader::from_reader(reader).deserialize() {
            let row: Row = row?;
            n = n.max(row.u + 1).max(row.v + 1);
            rows.push(row);
        }
        let mut hops = PairTable::filled(n, 0u32);
        let mut metrics = PairTable::filled(n, f64::NAN);
        for row in &rows {
            let pair = Pair::new(row.u, row.v)?;
            hops.set(pair, row.hops);
            metrics.set(pair, row.metric);
        }
        if metrics.values().iter().any(|m| m.is_nan()) || rows.len() != metrics.len() {
            return Err(Error::invalid(format!(
                "ground-truth table lists {} rows, expected one per pair ({})",
                rows.len(),
                metrics.len()
            )));
        }
        Ok(Self { hops, metrics })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Candidate {
    cost: f64,
    node: usize,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    // Min-heap on (cost, node).
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .cost
            .total_cmp(&self.cost)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Best path value from `source` to every node: least sum (additive) or least
/// maximum link metric (congestion). `None` for unreachable nodes.
pub fn best_metrics_from(t: &Topology, source: usize, semantics: MetricSemantics) -> Vec<Option<f64>> {
    let n = t.node_count();
    let mut dist = vec![f64::INFINITY; n];
    let mut done = vec![false; n];
    let mut heap = BinaryHeap::new();
    dist[source] = 0.0;
    heap.push(Candidate {
        cost: 0.0,
        node: source,
    });
    while let Some(Candidate { cost, node }) = heap.pop() {
        if done[node] {
            continue;
        }
        done[node] = true;
        for (v, w) in t.neighbors(node) {
            let next = if node == source { w } else { semantics.combine(cost, w) };
            if next < dist[v] {
                dist[v] = next;
                heap.push(Candidate { cost: next, node: v });
            }
        }
    }
    dist.into_iter()
        .enumerate()
        .map(|(v, d)| (v != source && d.is_finite()).then_some(d))
        .collect()
}

/// Parent of every node in the BFS tree from `source`, restricted to links
/// accepted by `allow`. Ascending adjacency makes every tree path the
/// lexicographically smallest hop-minimal path.
fn bfs_parents(t: &Topology, source: usize, allow: impl Fn(f64) -> bool) -> Vec<Option<usize>> {
    let n = t.node_count();
    let mut parent = vec![None; n];
    let mut seen = vec![false; n];
    let mut queue = VecDeque::new();
    seen[source] = true;
    queue.push_back(source);
    while let Some(u) = queue.pop_front() {
        for (v, w) in t.neighbors(u) {
            if !seen[v] && allow(w) {
                seen[v] = true;
                parent[v] = Some(u);
                queue.push_back(v);
            }
        }
    }
    parent
}

/// Least-sum tree from `source`; among exactly tied sums the lexicographically
/// smallest node sequence wins.
fn lex_dijkstra_parents(t: &Topology, source: usize) -> Vec<Option<usize>> {
    let n = t.node_count();
    let mut dist = vec![f64::INFINITY; n];
    let mut parent: Vec<Option<usize>> = vec![None; n];
    let mut path: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut done = vec![false; n];
    let mut heap = BinaryHeap::new();
    dist[source] = 0.0;
    heap.push(Candidate {
        cost: 0.0,
        node: source,
    });
    while let Some(Candidate { node, .. }) = heap.pop() {
        if done[node] {
            continue;
        }
        done[node] = true;
        path[node] = match parent[node] {
            Some(p) => {
                let mut seq = path[p].clone();
                seq.push(node);
                seq
            }
            None => vec![node],
        };
        for (v, w) in t.neighbors(node) {
            if done[v] {
                continue;
            }
            let next = if node == source { w } else { dist[node] + w };
            let better = match next.total_cmp(&dist[v]) {
                Ordering::Less => true,
                Ordering::Equal => {
                    let current = parent[v].expect("finite distance has a parent");
                    lex_less(&path[node], &path[current], v)
                }
                Ordering::Greater => false,
            };
            if better {
                dist[v] = next;
                parent[v] = Some(node);
                heap.push(Candidate { cost: next, node: v });
            }
        }
    }
    parent
}

/// Whether `a ++ [tail]` sorts strictly before `b ++ [tail]`.
fn lex_less(a: &[usize], b: &[usize], tail: usize) -> bool {
    a.iter()
        .chain(std::iter::once(&tail))
        .lt(b.iter().chain(std::iter::once(&tail)))
}

/// Walks the tree path `source → target` and folds its link metrics.
fn evaluate_tree_path(t: &Topology, parent: &[Option<usize>], target: usize, semantics: MetricSemantics) -> (u32, f64) {
    let mut nodes = vec![target];
    let mut cur = target;
    while let Some(p) = parent[cur] {
        nodes.push(p);
        cur = p;
    }
    nodes.reverse();
    let links: Vec<f64> = nodes
        .windows(2)
        .map(|w| t.link_metric(w[0], w[1]).expect("tree edge exists"))
        .collect();
    let metric = semantics.path_metric(&links).expect("distinct endpoints");
    (links.len() as u32, metric)
}

fn hops_to(parent: &[Option<usize>], target: usize) -> u32 {
    let mut hops = 0;
    let mut cur = target;
    while let Some(p) = parent[cur] {
        hops += 1;
        cur = p;
    }
    hops
}

/// `(hops, metric)` for every target `> source`.
fn route_from(t: &Topology, source: usize, strategy: RoutingStrategy, semantics: MetricSemantics) -> Vec<(u32, f64)> {
    let n = t.node_count();
    let targets = source + 1..n;
    match (strategy, semantics) {
        (RoutingStrategy::Mhr, _) => {
            let parent = bfs_parents(t, source, |_| true);
            targets.map(|v| evaluate_tree_path(t, &parent, v, semantics)).collect()
        }
        (RoutingStrategy::Bpr, MetricSemantics::Additive) => {
            let parent = lex_dijkstra_parents(t, source);
            targets.map(|v| evaluate_tree_path(t, &parent, v, semantics)).collect()
        }
        (RoutingStrategy::Bpr, MetricSemantics::Congestion) => {
            let best = best_metrics_from(t, source, MetricSemantics::Congestion);
            targets
                .map(|v| {
                    let bottleneck = best[v].expect("connected");
                    let parent = bfs_parents(t, source, |w| w <= bottleneck);
                    (hops_to(&parent, v), bottleneck)
                })
                .collect()
        }
    }
}

fn check_connected(t: &Topology) -> Result<()> {
    if t.is_connected() {
        return Ok(());
    }
    let comp = t.components();
    let n = t.node_count();
    let mut unreachable = 0;
    let mut examples = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if comp[i] != comp[j] {
                unreachable += 1;
                if examples.len() < 10 {
                    examples.push((i, j));
                }
            }
        }
    }
    Err(Error::Disconnected { unreachable, examples })
}

/// Ground-truth hop counts and path metrics for all `n(n-1)/2` pairs.
pub fn route_all_pairs(
    t: &Topology,
    strategy: RoutingStrategy,
    semantics: MetricSemantics,
) -> Result<GroundTruthTable> {
    check_connected(t)?;
    let n = t.node_count();
    let per_source = crate::par::map_range(n, |s| route_from(t, s, strategy, semantics));
    let mut hops = Vec::with_capacity(crate::pairs::pair_count(n));
    let mut metrics = Vec::with_capacity(hops.capacity());
    for row in per_source {
        for (h, m) in row {
            hops.push(h);
            metrics.push(m);
        }
    }
    Ok(GroundTruthTable {
        hops: PairTable::from_values(n, hops)?,
        metrics: PairTable::from_values(n, metrics)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn topo(n: usize, edges: &[(usize, usize, f64)]) -> Topology {
        Topology::new(
            n,
            edges.iter().map(|&(a, b, _)| (a, b)).collect(),
            edges.iter().map(|&(_, _, w)| w).collect(),
        )
        .unwrap()
    }

    fn pair(a: usize, b: usize) -> Pair {
        Pair::new(a, b).unwrap()
    }

    #[test]
    fn path_graph_additive() {
        let t = topo(3, &[(0, 1, 2.0), (1, 2, 3.0)]);
        let gt = route_all_pairs(&t, RoutingStrategy::Bpr, MetricSemantics::Additive).unwrap();
        assert_eq!(gt.metric(pair(0, 2)), 5.0);
        assert_eq!(gt.hop_count(pair(0, 2)), 2);
    }

    #[test]
    fn triangle_congestion() {
        // A=0, B=1, C=2
        let t = topo(3, &[(0, 1, 5.0), (1, 2, 2.0), (0, 2, 7.0)]);
        let bpr = route_all_pairs(&t, RoutingStrategy::Bpr, MetricSemantics::Congestion).unwrap();
        assert_eq!(bpr.metric(pair(0, 2)), 5.0);
        assert_eq!(bpr.hop_count(pair(0, 2)), 2);
        let mhr = route_all_pairs(&t, RoutingStrategy::Mhr, MetricSemantics::Congestion).unwrap();
        assert_eq!(mhr.hop_count(pair(0, 2)), 1);
        assert_eq!(mhr.metric(pair(0, 2)), 7.0);
    }

    #[test]
    fn mhr_ties_take_smallest_sequence() {
        // square 0-1-3, 0-2-3 with different weights; 0→3 via 1
        let t = topo(4, &[(0, 1, 9.0), (1, 3, 9.0), (0, 2, 1.0), (2, 3, 1.0)]);
        let gt = route_all_pairs(&t, RoutingStrategy::Mhr, MetricSemantics::Additive).unwrap();
        assert_eq!(gt.metric(pair(0, 3)), 18.0);
        let gt = route_all_pairs(&t, RoutingStrategy::Bpr, MetricSemantics::Additive).unwrap();
        assert_eq!(gt.metric(pair(0, 3)), 2.0);
    }

    #[test]
    fn unweighted_routes_coincide() {
        let t = topo(5, &[(0, 1, 1.0), (1, 2, 1.0), (2, 3, 1.0), (3, 4, 1.0), (0, 4, 1.0)]);
        let a = route_all_pairs(&t, RoutingStrategy::Bpr, MetricSemantics::Additive).unwrap();
        let b = route_all_pairs(&t, RoutingStrategy::Mhr, MetricSemantics::Additive).unwrap();
        assert_eq!(a, b);
        for (p, &h) in a.hops.iter() {
            assert_eq!(a.metric(p), h as f64);
        }
    }

    #[test]
    fn disconnected_is_rejected() {
        let t = topo(4, &[(0, 1, 1.0), (2, 3, 1.0)]);
        match route_all_pairs(&t, RoutingStrategy::Mhr, MetricSemantics::Additive) {
            Err(Error::Disconnected { unreachable, examples }) => {
                assert_eq!(unreachable, 4);
                assert_eq!(examples[0], (0, 2));
            }
            other => panic!("expected disconnected error, got {other:?}"),
        }
    }

    #[test]
    fn csv_round_trip() {
        let t = topo(3, &[(0, 1, 2.5), (1, 2, 3.25)]);
        let gt = route_all_pairs(&t, RoutingStrategy::Bpr, MetricSemantics::Additive).unwrap();
        let mut buf = Vec::new();
        gt.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("u,v,hops,metric\n0,1,1,2.5\n"));
        assert_eq!(GroundTruthTable::read_csv(buf.as_slice()).unwrap(), gt);
    }

    #[test]
    fn best_metrics_skip_unreachable() {
        let t = topo(4, &[(0, 1, 2.0), (1, 2, 3.0)]);
        let add = best_metrics_from(&t, 0, MetricSemantics::Additive);
        assert_eq!(add, vec![None, Some(2.0), Some(5.0), None]);
        let con = best_metrics_from(&t, 0, MetricSemantics::Congestion);
        assert_eq!(con, vec![None, Some(2.0), Some(3.0), None]);
    }
}
