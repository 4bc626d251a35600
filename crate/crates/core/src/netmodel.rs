//! Network topologies, link metrics and metric semantics.
//!
//! A [`Topology`] is an undirected simple graph over dense node ids `0..n`
//! with one positive metric per link. Topologies are immutable once built;
//! [`assign_link_metrics`] returns a new value.

use std::collections::{HashMap, HashSet, VecDeque};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use log::warn;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seeds::StageRng;

/// How per-path metrics combine link metrics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricSemantics {
    /// Sum of link metrics (delay, hop count).
    Additive,
    /// Worst (largest) link metric on the path.
    Congestion,
}

impl MetricSemantics {
    /// Extends an accumulated path value by one more link.
    #[inline]
    pub fn combine(self, acc: f64, link: f64) -> f64 {
        match self {
            MetricSemantics::Additive => acc + link,
            MetricSemantics::Congestion => acc.max(link),
        }
    }

    /// Value of a path given its link metrics in traversal order.
    pub fn path_metric(self, links: &[f64]) -> Result<f64> {
        let (first, rest) = links
            .split_first()
            .ok_or_else(|| Error::invalid("path metric of an empty path"))?;
        Ok(rest.iter().fold(*first, |acc, &w| self.combine(acc, w)))
    }
}

/// Where link metrics come from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LinkMetricRegime {
    /// Every link gets metric 1.
    Unweighted,
    /// Keep the weights read from the edge-list file.
    FromFile,
    /// i.i.d. uniform draws from `[lo, hi]`.
    UniformRandom { lo: f64, hi: f64 },
}

impl LinkMetricRegime {
    pub fn uniform_default() -> Self {
        LinkMetricRegime::UniformRandom { lo: 1.0, hi: 10.0 }
    }

    pub fn short_name(&self) -> &'static str {
        match self {
            LinkMetricRegime::Unweighted => "UN",
            LinkMetricRegime::FromFile => "Re",
            LinkMetricRegime::UniformRandom { .. } => "UD",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    node_count: usize,
    /// Normalized `(lo, hi)` endpoints, in insertion order.
    edges: Vec<(usize, usize)>,
    metrics: Vec<f64>,
    /// Original node labels, indexed by dense id.
    labels: Vec<String>,
    /// Whether the metrics came from an input file that listed every weight.
    file_weights: bool,
    /// `adjacency[u]` = `(neighbor, edge index)`, sorted by neighbor.
    adjacency: Vec<Vec<(usize, usize)>>,
    component: Vec<usize>,
    component_count: usize,
}

impl Topology {
    /// Builds a topology from normalized edges and their metrics.
    pub fn new(node_count: usize, edges: Vec<(usize, usize)>, metrics: Vec<f64>) -> Result<Self> {
        let labels = (0..node_count).map(|i| i.to_string()).collect();
        Self::with_labels(node_count, edges, metrics, labels, false)
    }

    fn with_labels(
        node_count: usize,
        edges: Vec<(usize, usize)>,
        metrics: Vec<f64>,
        labels: Vec<String>,
        file_weights: bool,
    ) -> Result<Self> {
        if node_count == 0 {
            return Err(Error::Topology("a topology needs at least one node".into()));
        }
        if edges.len() != metrics.len() {
            return Err(Error::Dimension {
                expected: edges.len(),
                actual: metrics.len(),
            });
        }
        let mut seen = HashSet::with_capacity(edges.len());
        let mut normalized = Vec::with_capacity(edges.len());
        for (&(a, b), &w) in edges.iter().zip(&metrics) {
            if a >= node_count || b >= node_count {
                return Err(Error::Topology(format!(
                    "edge ({a},{b}) references a node outside 0..{node_count}"
                )));
            }
            if a == b {
                return Err(Error::Topology(format!("self-loop on node {a}")));
            }
            if !(w.is_finite() && w > 0.0) {
                return Err(Error::Topology(format!("link ({a},{b}) has non-positive metric {w}")));
            }
            let e = (a.min(b), a.max(b));
            if !seen.insert(e) {
                return Err(Error::Topology(format!("parallel edge ({},{})", e.0, e.1)));
            }
            normalized.push(e);
        }

        let mut adjacency = vec![Vec::new(); node_count];
        for (idx, &(u, v)) in normalized.iter().enumerate() {
            adjacency[u].push((v, idx));
            adjacency[v].push((u, idx));
        }
        for list in &mut adjacency {
            list.sort_unstable();
        }
        let (component, component_count) = label_components(&adjacency);

        Ok(Self {
            node_count,
            edges: normalized,
            metrics,
            labels,
            file_weights,
            adjacency,
            component,
            component_count,
        })
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn metrics(&self) -> &[f64] {
        &self.metrics
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn has_file_weights(&self) -> bool {
        self.file_weights
    }

    /// Neighbors of `node` as `(neighbor, link metric)`, ascending by neighbor id.
    pub fn neighbors(&self, node: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.adjacency[node].iter().map(move |&(v, e)| (v, self.metrics[e]))
    }

    pub fn degree(&self, node: usize) -> usize {
        self.adjacency[node].len()
    }

    pub fn average_degree(&self) -> f64 {
        2.0 * self.edges.len() as f64 / self.node_count as f64
    }

    pub fn is_connected(&self) -> bool {
        self.component_count == 1
    }

    pub fn component_count(&self) -> usize {
        self.component_count
    }

    /// Connected-component label of every node (labels are `0..component_count`).
    pub fn components(&self) -> &[usize] {
        &self.component
    }

    pub fn same_component(&self, a: usize, b: usize) -> bool {
        self.component[a] == self.component[b]
    }

    /// Metric of the link between `a` and `b`, if they are adjacent.
    pub fn link_metric(&self, a: usize, b: usize) -> Option<f64> {
        self.adjacency[a]
            .binary_search_by_key(&b, |&(v, _)| v)
            .ok()
            .map(|pos| self.metrics[self.adjacency[a][pos].1])
    }

    fn with_metrics(&self, metrics: Vec<f64>, file_weights: bool) -> Result<Self> {
        Self::with_labels(
            self.node_count,
            self.edges.clone(),
            metrics,
            self.labels.clone(),
            file_weights,
        )
    }

    /// Writes the edge list as `u v weight` lines with 6 significant digits.
    pub fn to_edge_list(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# nodes={} edges={}", self.node_count, self.edges.len());
        for (&(u, v), &w) in self.edges.iter().zip(&self.metrics) {
            let _ = writeln!(out, "{u} {v} {}", format_sig6(w));
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_edge_list())?;
        Ok(())
    }
}

fn label_components(adjacency: &[Vec<(usize, usize)>]) -> (Vec<usize>, usize) {
    let n = adjacency.len();
    let mut label = vec![usize::MAX; n];
    let mut count = 0;
    let mut queue = VecDeque::new();
    for start in 0..n {
        if label[start] != usize::MAX {
            continue;
        }
        label[start] = count;
        queue.push_back(start);
        while let Some(u) = queue.pop_front() {
            for &(v, _) in &adjacency[u] {
                if label[v] == usize::MAX {
                    label[v] = count;
                    queue.push_back(v);
                }
            }
        }
        count += 1;
    }
    (label, count)
}

/// `%g`-style formatting with 6 significant digits.
pub fn format_sig6(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let exp = x.abs().log10().floor() as i32;
    if (-5..6).contains(&exp) {
        let decimals = (5 - exp).max(0) as usize;
        let s = format!("{x:.decimals$}");
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    } else {
        format!("{x:.5e}")
    }
}

/// Parses whitespace-separated `u v [weight]` lines; `#` starts a comment line.
///
/// Node labels are re-indexed to `0..n`: ascending numeric order when every
/// label is a non-negative integer, order of first appearance otherwise.
pub fn parse_edge_list(text: &str, source: &Path) -> Result<Topology> {
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut labels = Vec::new();
    let mut edges = Vec::new();
    let mut metrics = Vec::new();
    let mut seen: HashSet<(usize, usize)> = HashSet::new();
    let mut all_weighted = true;
    let mut any_edge = false;

    let parse_err = |line: usize, message: String| Error::Parse {
        path: source.to_path_buf(),
        line,
        message,
    };

    for (lineno, raw) in text.lines().enumerate() {
        let lineno = lineno + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if !(2..=3).contains(&fields.len()) {
            return Err(parse_err(
                lineno,
                format!("expected `u v [weight]`, found {} fields", fields.len()),
            ));
        }
        if fields[0] == fields[1] {
            return Err(Error::SelfLoop {
                label: fields[0].to_string(),
                line: lineno,
            });
        }
        let weight = match fields.get(2) {
            Some(tok) => {
                let w: f64 = tok
                    .parse()
                    .map_err(|_| parse_err(lineno, format!("invalid weight {tok:?}")))?;
                if !(w.is_finite() && w > 0.0) {
                    return Err(parse_err(lineno, format!("weight must be positive, got {w}")));
                }
                w
            }
            None => {
                all_weighted = false;
                1.0
            }
        };
        any_edge = true;
        let mut id = |label: &str| -> usize {
            if let Some(&i) = index.get(label) {
                return i;
            }
            let i = labels.len();
            labels.push(label.to_string());
            index.insert(label.to_string(), i);
            i
        };
        let (a, b) = (id(fields[0]), id(fields[1]));
        let e = (a.min(b), a.max(b));
        if !seen.insert(e) {
            warn!(
                "{}:{lineno}: duplicate edge {} {} ignored (keeping first weight)",
                source.display(),
                fields[0],
                fields[1]
            );
            continue;
        }
        edges.push(e);
        metrics.push(weight);
    }

    if labels.is_empty() {
        return Err(parse_err(0, "no edges found".into()));
    }
    // Numeric labels keep their relative order so that re-serialized files reload identically.
    let numeric: Option<Vec<u64>> = labels.iter().map(|l| l.parse().ok()).collect();
    if let Some(values) = numeric {
        let mut order: Vec<usize> = (0..labels.len()).collect();
        order.sort_by_key(|&i| values[i]);
        let mut remap = vec![0; labels.len()];
        for (new, &old) in order.iter().enumerate() {
            remap[old] = new;
        }
        labels = order.iter().map(|&i| labels[i].clone()).collect();
        for e in &mut edges {
            let (a, b) = (remap[e.0], remap[e.1]);
            *e = (a.min(b), a.max(b));
        }
    }
    Topology::with_labels(labels.len(), edges, metrics, labels, any_edge && all_weighted)
}

pub fn load_topology(path: impl AsRef<Path>) -> Result<Topology> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    parse_edge_list(&text, path)
}

/// Connected random graph: a uniform random recursive spanning tree plus
/// uniformly drawn extra edges, `round(n * avg_degree / 2)` edges in total.
/// Link metrics are all 1; use [`assign_link_metrics`] afterwards.
pub fn generate_topology(n: usize, target_avg_degree: f64, seed: u64) -> Result<Topology> {
    if n < 3 {
        return Err(Error::invalid(format!("generator needs n >= 3, got {n}")));
    }
    let max_edges = n * (n - 1) / 2;
    let target = (n as f64 * target_avg_degree / 2.0).round() as usize;
    let degree_ok = target_avg_degree >= 2.0 && (target_avg_degree < (n - 1) as f64 || n == 3);
    if !target_avg_degree.is_finite() || !degree_ok || target < n - 1 || target > max_edges {
        return Err(Error::invalid(format!(
            "average degree {target_avg_degree} is unreachable for a connected {n}-node simple graph"
        )));
    }

    let mut rng = StageRng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);

    let mut present = HashSet::with_capacity(target);
    let mut edges = Vec::with_capacity(target);
    for k in 1..n {
        let parent = order[rng.gen_range(0..k)];
        let e = (order[k].min(parent), order[k].max(parent));
        present.insert(e);
        edges.push(e);
    }
    if target - edges.len() > (max_edges - edges.len()) / 2 {
        // dense target: draw from the explicit complement
        let mut rest: Vec<(usize, usize)> = (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .filter(|e| !present.contains(e))
            .collect();
        rest.shuffle(&mut rng);
        edges.extend(rest.into_iter().take(target - (n - 1)));
    } else {
        while edges.len() < target {
            let a = rng.gen_range(0..n);
            let b = rng.gen_range(0..n);
            if a == b {
                continue;
            }
            let e = (a.min(b), a.max(b));
            if present.insert(e) {
                edges.push(e);
            }
        }
    }
    let metrics = vec![1.0; edges.len()];
    Topology::new(n, edges, metrics)
}

/// Returns a copy of `t` with link metrics set by `regime`.
pub fn assign_link_metrics(t: &Topology, regime: LinkMetricRegime, seed: u64) -> Result<Topology> {
    match regime {
        LinkMetricRegime::Unweighted => t.with_metrics(vec![1.0; t.edge_count()], false),
        LinkMetricRegime::FromFile => {
            if !t.has_file_weights() {
                return Err(Error::MissingWeights("the topology source".into()));
            }
            Ok(t.clone())
        }
        LinkMetricRegime::UniformRandom { lo, hi } => {
            if !(lo.is_finite() && hi.is_finite() && lo > 0.0 && lo <= hi) {
                return Err(Error::invalid(format!(
                    "uniform link metrics need 0 < lo <= hi, got [{lo}, {hi}]"
                )));
            }
            let mut rng = StageRng::seed_from_u64(seed);
            let metrics = (0..t.edge_count())
                .map(|_| if lo == hi { lo } else { rng.gen_range(lo..=hi) })
                .collect();
            t.with_metrics(metrics, false)
        }
    }
}
