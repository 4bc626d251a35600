//! Independent reference implementations shared by the integration tests.
//! Nothing here calls into the routing, PAT or model code under test.

#![allow(dead_code)]

use std::cmp::Ordering;

use neutomo::neuralnet::{Parameters, TrainingExample};
use neutomo::{MetricSemantics, Pair, RoutingStrategy, Topology};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Small connected graphs: random tree plus random chords. Half of them use
/// integer link metrics in 1..=3 so that exact cost ties are common.
pub fn small_graph_corpus(count: usize, max_nodes: usize, seed: u64) -> Vec<Topology> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|k| {
            let n = rng.gen_range(2..=max_nodes);
            let mut edges = Vec::new();
            for v in 1..n {
                let u = rng.gen_range(0..v);
                edges.push((u, v));
            }
            let p = rng.gen_range(0.0..0.6);
            for a in 0..n {
                for b in a + 1..n {
                    if !edges.contains(&(a, b)) && rng.gen_bool(p) {
                        edges.push((a, b));
                    }
                }
            }
            // relabel so trees are not always rooted at 0
            let mut perm: Vec<usize> = (0..n).collect();
            for i in (1..n).rev() {
                perm.swap(i, rng.gen_range(0..=i));
            }
            let edges: Vec<(usize, usize)> = edges.iter().map(|&(a, b)| (perm[a], perm[b])).collect();
            let metrics = edges
                .iter()
                .map(|_| {
                    if k % 2 == 0 {
                        rng.gen_range(1..=3) as f64
                    } else {
                        rng.gen_range(0.5..10.0)
                    }
                })
                .collect();
            Topology::new(n, edges, metrics).expect("valid corpus graph")
        })
        .collect()
}

fn link(t: &Topology, a: usize, b: usize) -> Option<f64> {
    t.neighbors(a).find(|&(v, _)| v == b).map(|(_, w)| w)
}

/// Every simple path from `s` to `d`, as node sequences.
pub fn simple_paths(t: &Topology, s: usize, d: usize) -> Vec<Vec<usize>> {
    fn walk(t: &Topology, d: usize, path: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        let u = *path.last().unwrap();
        if u == d {
            out.push(path.clone());
            return;
        }
        let next: Vec<usize> = t.neighbors(u).map(|(v, _)| v).collect();
        for v in next {
            if !path.contains(&v) {
                path.push(v);
                walk(t, d, path, out);
                path.pop();
            }
        }
    }
    let mut out = Vec::new();
    walk(t, d, &mut vec![s], &mut out);
    out
}

/// Left fold of link metrics along `path`, starting at its first node.
pub fn fold_path(t: &Topology, path: &[usize], semantics: MetricSemantics) -> f64 {
    let mut acc: Option<f64> = None;
    for w in path.windows(2) {
        let x = link(t, w[0], w[1]).expect("path uses existing links");
        acc = Some(match (acc, semantics) {
            (None, _) => x,
            (Some(a), MetricSemantics::Additive) => a + x,
            (Some(a), MetricSemantics::Congestion) => a.max(x),
        });
    }
    acc.expect("path has at least one link")
}

/// Exhaustive routing: the chosen path for `{s,d}` (walked from the lower id) and its metric.
///
/// * MHR: fewest hops, then lexicographically smallest.
/// * BPR additive: least sum, then lexicographically smallest.
/// * BPR congestion: least bottleneck, then fewest hops, then lexicographically smallest.
pub fn oracle_route(
    t: &Topology,
    pair: Pair,
    strategy: RoutingStrategy,
    semantics: MetricSemantics,
) -> (Vec<usize>, u32, f64) {
    let paths = simple_paths(t, pair.lo(), pair.hi());
    let scored = paths.into_iter().map(|p| {
        let m = fold_path(t, &p, semantics);
        (p, m)
    });
    let best = scored
        .min_by(|(pa, ma), (pb, mb)| {
            let primary = match strategy {
                RoutingStrategy::Mhr => pa.len().cmp(&pb.len()),
                RoutingStrategy::Bpr => match semantics {
                    MetricSemantics::Additive => ma.total_cmp(mb),
                    MetricSemantics::Congestion => ma.total_cmp(mb).then(pa.len().cmp(&pb.len())),
                },
            };
            primary.then_with(|| pa.cmp(pb))
        })
        .expect("connected graph");
    let hops = (best.0.len() - 1) as u32;
    (best.0, hops, best.1)
}

/// Best achievable value over all simple paths (`None` if unreachable).
pub fn oracle_best_value(t: &Topology, pair: Pair, semantics: MetricSemantics) -> Option<f64> {
    simple_paths(t, pair.lo(), pair.hi())
        .iter()
        .map(|p| fold_path(t, p, semantics))
        .min_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal))
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Plain-loop forward pass of the two-hot MLP: dense input vector, explicit sums.
pub fn reference_forward(params: &Parameters, n: usize, pair: Pair) -> f64 {
    let mut x = vec![0.0; n];
    x[pair.lo()] = 1.0;
    x[pair.hi()] = 1.0;
    for layer in &params.hidden {
        let (fan_in, fan_out) = layer.weights.dim();
        assert_eq!(fan_in, x.len());
        x = (0..fan_out)
            .map(|o| {
                let z: f64 = (0..fan_in).map(|i| x[i] * layer.weights[[i, o]]).sum::<f64>() + layer.bias[o];
                sigmoid(z)
            })
            .collect();
    }
    x.iter().zip(params.output.iter()).map(|(a, m)| a * m).sum()
}

/// Batch MSE under the reference forward pass.
pub fn reference_loss(params: &Parameters, n: usize, batch: &[TrainingExample]) -> f64 {
    batch
        .iter()
        .map(|e| {
            let r = reference_forward(params, n, e.pair) - e.target;
            r * r
        })
        .sum::<f64>()
        / batch.len() as f64
}

/// Central-difference gradient of [`reference_loss`] for every parameter.
pub fn numeric_gradient(params: &Parameters, n: usize, batch: &[TrainingExample], h: f64) -> Vec<Vec<f64>> {
    let shapes: Vec<usize> = params.tensors().iter().map(|t| t.len()).collect();
    let mut out = Vec::with_capacity(shapes.len());
    for (ti, &len) in shapes.iter().enumerate() {
        let mut g = vec![0.0; len];
        for (k, gk) in g.iter_mut().enumerate() {
            let mut plus = params.clone();
            plus.tensors_mut()[ti][k] += h;
            let mut minus = params.clone();
            minus.tensors_mut()[ti][k] -= h;
            *gk = (reference_loss(&plus, n, batch) - reference_loss(&minus, n, batch)) / (2.0 * h);
        }
        out.push(g);
    }
    out
}

/// `‖a − b‖ / max(‖a‖, ‖b‖)`, or the absolute difference norm when both are tiny.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    let scale = na.max(nb);
    if scale < 1e-8 {
        diff
    } else {
        diff / scale
    }
}

/// Parameters drawn uniformly from `[-scale, scale]`.
pub fn random_parameters(n: usize, gamma: usize, layers: usize, scale: f64, rng: &mut ChaCha8Rng) -> Parameters {
    let mut p = Parameters::zeros(n, gamma, layers);
    for t in p.tensors_mut() {
        for x in t.iter_mut() {
            *x = rng.gen_range(-scale..scale);
        }
    }
    p
}

pub fn pair(a: usize, b: usize) -> Pair {
    Pair::new(a, b).unwrap()
}

/// All-pairs hop distances by plain BFS over an adjacency matrix.
pub fn bfs_hops(t: &Topology) -> Vec<Vec<Option<u32>>> {
    let n = t.node_count();
    let mut adj = vec![vec![false; n]; n];
    for &(a, b) in t.edges() {
        adj[a][b] = true;
        adj[b][a] = true;
    }
    (0..n)
        .map(|s| {
            let mut dist = vec![None; n];
            dist[s] = Some(0);
            let mut frontier = vec![s];
            let mut d = 0;
            while !frontier.is_empty() {
                d += 1;
                let mut next = Vec::new();
                for &u in &frontier {
                    for v in 0..n {
                        if adj[u][v] && dist[v].is_none() {
                            dist[v] = Some(d);
                            next.push(v);
                        }
                    }
                }
                frontier = next;
            }
            dist
        })
        .collect()
}
